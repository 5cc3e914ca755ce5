"""Easily set up logging for a regcheck run."""

import logging
import os
from logging.handlers import RotatingFileHandler
from typing import Optional, Union

from regcheck.exceptions import ArgumentError

FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"

LEVELS = dict(
    debug=logging.DEBUG,  # 10
    info=logging.INFO,  # 20
    warn=logging.WARN,
    warning=logging.WARNING,  # 30
    error=logging.ERROR,  # 40
    critical=logging.CRITICAL,
    fatal=logging.FATAL,  # 50
)


def decode_level(level: Union[int, str]) -> int:
    """Turn a level name such as "info" into its number."""
    if isinstance(level, int):
        return level
    try:
        return LEVELS[level.strip().lower()]
    except KeyError:
        raise ArgumentError("log_level", level)


def setup_log(
    name: Optional[str] = "regcheck",
    level: Union[int, str] = "info",
    path: Optional[str] = None,
    backups: int = 3,
    encoding: str = "utf-8",
) -> logging.Logger:
    """Log to the screen at ``level`` and, if ``path`` is given, to disk.

    The file handler rotates at 4 MB and always records DEBUG messages,
    which include the full prompts sent to providers.

    Calling this again replaces the handlers installed by the previous
    call instead of piling up duplicates.
    """
    level = decode_level(level)
    log = logging.getLogger(name)
    for handler in [h for h in log.handlers if getattr(h, "_regcheck", False)]:
        log.removeHandler(handler)
        handler.close()
    formatter = logging.Formatter(FORMAT)

    screen = logging.StreamHandler()
    screen.setLevel(level)
    screen.setFormatter(formatter)
    screen._regcheck = True  # type: ignore[attr-defined]
    log.addHandler(screen)
    log.setLevel(level)

    if path:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        disk = RotatingFileHandler(
            path, encoding=encoding, maxBytes=2 ** 22, backupCount=backups
        )
        disk.setLevel(logging.DEBUG)
        disk.setFormatter(formatter)
        disk._regcheck = True  # type: ignore[attr-defined]
        log.addHandler(disk)
        log.setLevel(logging.DEBUG)
    return log
