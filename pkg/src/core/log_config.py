import logging

from src.core.settings import ISOWEB_LOG_LEVEL

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def configure_logging(verbose: bool = False) -> logging.Logger:
    level = logging.DEBUG if verbose else getattr(logging, ISOWEB_LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logger = logging.getLogger("isoweb")
    logger.setLevel(level)
    return logger
