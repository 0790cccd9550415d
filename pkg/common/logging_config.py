import logging
import sys
from contextlib import contextmanager
from pathlib import Path

LOG_FORMAT = "[%(asctime)s] %(levelname)s - %(name)s: %(message)s"


def setup_logging(level=logging.INFO, stream=sys.stderr):
    """Root handler on stderr; stdout stays free for piping. Repeated calls only change the level."""
    logger = logging.getLogger()
    logger.setLevel(level)
    if logger.hasHandlers():
        return  # already configured

    handler = logging.StreamHandler(stream)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(handler)


@contextmanager
def log_to_file(path: str | Path, level=logging.DEBUG):
    """Copies every record reaching the root logger into `path` while the block runs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode="w", encoding="utf-8")
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root = logging.getLogger()
    root.addHandler(handler)
    try:
        yield path
    finally:
        root.removeHandler(handler)
        handler.close()
