from __future__ import annotations

import logging

import colorlog

_FORMAT = "%(log_color)s%(asctime)s %(levelname)-7s%(reset)s %(name)s: %(message)s"
_HANDLER_NAME = "bench-console"


def configure_logging(level: str | int = "INFO") -> None:
    """Install one colored console handler on the root logger; repeated calls only change the level."""
    root = logging.getLogger()
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
        if not isinstance(level, int):
            level = logging.INFO
    root.setLevel(level)

    if any(h.get_name() == _HANDLER_NAME for h in root.handlers):
        return
    handler = colorlog.StreamHandler()
    handler.set_name(_HANDLER_NAME)
    handler.setFormatter(
        colorlog.ColoredFormatter(
            _FORMAT,
            datefmt="%H:%M:%S",
            log_colors={
                "DEBUG": "cyan",
                "INFO": "green",
                "WARNING": "yellow",
                "ERROR": "red",
                "CRITICAL": "bold_red",
            },
        )
    )
    root.addHandler(handler)
