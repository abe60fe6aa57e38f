import logging
from logging import Logger, StreamHandler

from naquant.meta import PACKAGE_NAME


def create_logger(name: str) -> Logger:
    """
    Creates a logger with the given name.
    :param name: name of the logger (gets prefixed with the package name unless already in the package namespace)
    :return: the created logger
    """
    if name != PACKAGE_NAME and not name.startswith(f"{PACKAGE_NAME}."):
        name = f"{PACKAGE_NAME}.{name}"
    logger = logging.getLogger(name)
    if not any(isinstance(handler, StreamHandler) for handler in logger.handlers):
        logger.addHandler(StreamHandler())
    return logger
