from sqlmodel import Session, SQLModel, create_engine

from ..core.config import settings

DATABASE_URL = settings.DATABASE_URL
connect_args = {"check_same_thread": False} if DATABASE_URL.startswith("sqlite") else {}
engine = create_engine(DATABASE_URL, echo=settings.DATABASE_ECHO, connect_args=connect_args)


def init_db(bind=None):
    # table registration happens on import
    from ..models import models  # noqa: F401

    SQLModel.metadata.create_all(bind or engine)


def get_session():
    with Session(engine) as session:
        yield session
