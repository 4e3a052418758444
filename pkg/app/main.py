import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI

from .api import plant, runs
from .core.config import settings
from .core.logging import setup_logging
from .db.session import init_db
from .plantlink.server import PlantServer
from .plantlink.session import PlantSession
from .schemas.experiment import ExperimentConfig
from .sim.runner import build_fleet, load_config

logger = logging.getLogger(__name__)


def default_plant_session() -> PlantSession:
    if settings.PLANT_CONFIG is not None:
        cfg = load_config(settings.PLANT_CONFIG)
    else:
        cfg = ExperimentConfig(dt_control=settings.DT_CONTROL, dt_physics=settings.DT_PHYSICS)
    return PlantSession(build_fleet(cfg), record_commands=True)


def create_app(session: PlantSession | None = None, serve_tcp: bool = True,
               host: str | None = None, port: int | None = None, realtime: bool | None = None) -> FastAPI:
    """The monitoring API. Its lifespan owns the plant and, unless serve_tcp is off,
    the TCP server that steps it."""

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        setup_logging()
        init_db()
        app.state.plant = session or default_plant_session()
        server = None
        if serve_tcp:
            server = PlantServer(app.state.plant,
                                 host=host or settings.PLANT_HOST,
                                 port=settings.PLANT_PORT if port is None else port,
                                 step_timeout=settings.STEP_TIMEOUT,
                                 realtime=settings.PLANT_REALTIME if realtime is None else realtime)
            await server.start()
        app.state.server = server
        yield
        if server is not None:
            await server.close()

    app = FastAPI(title="tclsim",
                  description="Air-conditioner fleet simulator: plant monitor and stored experiment runs",
                  lifespan=lifespan)
    app.include_router(plant.router)
    app.include_router(runs.router)

    @app.get("/")
    def home():
        return {"status": "ok"}

    return app


app = create_app()
