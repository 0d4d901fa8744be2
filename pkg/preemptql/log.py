import logging

from rich.console import Console
from rich.logging import RichHandler

stderr_console = Console(stderr=True)

_UVICORN_LOGGERS = ("uvicorn", "uvicorn.error", "uvicorn.access")


def setup_logging(level: str = "INFO") -> None:
    """Route every logger, uvicorn's included, through one rich handler on stderr."""
    handler = RichHandler(
        console=stderr_console,
        show_path=False,
        rich_tracebacks=True,
        log_time_format="[%X]",
    )
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level)
    for name in _UVICORN_LOGGERS:
        logger = logging.getLogger(name)
        logger.handlers[:] = []
        logger.propagate = True
    # one line per request is too chatty below DEBUG
    logging.getLogger("uvicorn.access").setLevel(level if level == "DEBUG" else "WARNING")
