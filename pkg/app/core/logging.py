import logging
import logging.config
from pathlib import Path

from .config import settings

_configured = False


def setup_logging(config_path: Path | None = None, level: str | None = None) -> None:
    global _configured
    if _configured:
        return

    path = Path(config_path or settings.LOG_CONFIG)
    if path.is_file():
        logging.config.fileConfig(path, disable_existing_loggers=False)
    else:
        logging.basicConfig(format="%(levelname)-5.5s [%(name)s] %(message)s")

    logging.getLogger("app").setLevel((level or settings.LOG_LEVEL).upper())
    _configured = True
