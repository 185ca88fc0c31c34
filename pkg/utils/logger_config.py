import logging
import sys
from pathlib import Path
from typing import Optional, Union

_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
_DATEFMT = '%Y-%m-%d %H:%M:%S'


def setup_logging(log_level=logging.INFO, log_file: Optional[Union[str, Path]] = None):
    """Configure logging for the application

    Safe to call more than once: handlers installed by a previous call are
    replaced rather than duplicated.
    """

    formatter = logging.Formatter(_FORMAT, datefmt=_DATEFMT)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    for handler in list(root_logger.handlers):
        if getattr(handler, "_indivar", False):
            root_logger.removeHandler(handler)
            handler.close()

    # Console handler
    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(formatter)
    console_handler.setLevel(log_level)
    console_handler._indivar = True
    root_logger.addHandler(console_handler)

    if log_file is not None:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, mode="w", encoding="utf-8")
        file_handler.setFormatter(formatter)
        file_handler.setLevel(log_level)
        file_handler._indivar = True
        root_logger.addHandler(file_handler)

    return root_logger
