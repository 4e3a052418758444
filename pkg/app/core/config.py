from pathlib import Path

from pydantic import computed_field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    DATABASE_URL: str = "sqlite:///./tclsim.db"
    DATABASE_ECHO: bool = False

    PLANT_HOST: str = "127.0.0.1"
    PLANT_PORT: int = 7410
    HTTP_PORT: int = 8000
    PLANT_REALTIME: bool = False
    # experiment YAML whose fleet the served plant is built from
    PLANT_CONFIG: Path | None = None

    DT_CONTROL: float = 2.0
    DT_PHYSICS: float = 1.0
    STEP_TIMEOUT_FACTOR: float = 2.0

    OUTPUT_DIR: Path = Path("./runs")
    LOG_LEVEL: str = "INFO"
    LOG_CONFIG: Path = Path("logging.ini")

    MATRIX_WORKERS: int = 1
    RECORD_RUNS: bool = True

    @computed_field
    @property
    def STEP_TIMEOUT(self) -> float:
        return self.STEP_TIMEOUT_FACTOR * self.DT_CONTROL

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")


settings = Settings()
