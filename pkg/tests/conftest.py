import os
import tempfile
from pathlib import Path

# the results store must not land in the working directory
_STORE = Path(tempfile.mkdtemp(prefix="tclsim-test-"))
os.environ.setdefault("DATABASE_URL", f"sqlite:///{_STORE / 'test.db'}")
os.environ.setdefault("OUTPUT_DIR", str(_STORE / "runs"))

import pytest
from fastapi.testclient import TestClient
from sqlmodel import Session, SQLModel, create_engine
from sqlalchemy.pool import StaticPool

from app.db.session import get_session
from app.main import create_app
from app.models import models  # noqa: F401
from app.plantlink.session import PlantSession
from app.schemas.experiment import ExperimentConfig, Phases
from app.schemas.fleet import FleetSpec
from app.schemas.grid import GridSpec
from app.schemas.house import HouseParams
from app.sim.fleet import Fleet, generate_fleet

T_AMB = 32.2


@pytest.fixture
def nominal_house() -> HouseParams:
    return HouseParams()


@pytest.fixture
def make_fleet():
    def build(n_houses: int = 40, n_remote: int = 4, seed: int = 1, heterogeneity: float = 0.2, **kwargs) -> Fleet:
        spec = FleetSpec(n_houses=n_houses, n_remote=n_remote, rng_seed=seed, heterogeneity_fraction=heterogeneity)
        return Fleet(generate_fleet(spec), T_AMB, seed=seed, **kwargs)

    return build


@pytest.fixture
def small_fleet(make_fleet) -> Fleet:
    return make_fleet()


@pytest.fixture
def small_config(tmp_path) -> ExperimentConfig:
    return ExperimentConfig(
        name="small",
        seed=7,
        fleet=FleetSpec(n_houses=60, n_remote=0),
        grid=GridSpec(n_transformers=6),
        phases=Phases(warmup=120, settle=1800, tracking=600),
        output_dir=tmp_path / "runs",
    )


@pytest.fixture
def engine():
    engine = create_engine("sqlite://", connect_args={"check_same_thread": False}, poolclass=StaticPool)
    SQLModel.metadata.create_all(engine)
    yield engine
    engine.dispose()


@pytest.fixture
def db_session(engine):
    with Session(engine) as session:
        yield session


@pytest.fixture
def client(small_fleet, engine):
    app = create_app(PlantSession(small_fleet), serve_tcp=False)

    def override_session():
        with Session(engine) as session:
            yield session

    app.dependency_overrides[get_session] = override_session
    with TestClient(app) as test_client:
        yield test_client
