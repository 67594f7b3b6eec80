"""
Logging helpers shared by all medimark modules.

Modules obtain their logger through :func:`get_logger` and compare against
the level constants exported here, so the package log level can be changed
in one place (for example from the command line)::

    import medimark.logging_utils as logging
    logger = logging.get_logger()
"""
import logging

__all__ = ["get_logger", "set_log_level", "DEBUG", "INFO", "WARN", "ERROR"]

DEBUG = logging.DEBUG
INFO = logging.INFO
WARN = logging.WARN
ERROR = logging.ERROR

_DEFAULT_NAME = "medimark"
_FORMAT = "%(levelname)s:%(name)s:%(message)s"


def get_logger(name=_DEFAULT_NAME):
    """
    Return the named logger, attaching a stderr handler to the package
    root logger the first time it is requested.
    """
    root = logging.getLogger(_DEFAULT_NAME)
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(_FORMAT))
        root.addHandler(handler)
        root.setLevel(WARN)
        root.propagate = False
    return logging.getLogger(name)


def set_log_level(level):
    """
    Set the level of the package root logger.

    Parameters
    ----------
    level : int or str
        A level constant of this module or a level name such as ``"DEBUG"``.
    """
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    get_logger().setLevel(level)
