import logging
import os

LOG_FORMAT = '%(asctime)s %(levelname)s %(message)s'


def setup_logger(name, log_file, level=logging.INFO):
    """Function to setup as many loggers as you want"""
    logger = logging.getLogger(name)
    logger.setLevel(level)

    # Re-imports and repeated setup must not stack handlers
    if logger.handlers:
        return logger

    formatter = logging.Formatter(LOG_FORMAT)

    # Ensure log directory exists
    os.makedirs(os.path.dirname(log_file), exist_ok=True)

    handler = logging.FileHandler(log_file)
    handler.setFormatter(formatter)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(formatter)

    logger.addHandler(handler)
    logger.addHandler(console_handler)

    return logger


def set_level(level):
    """Change the level of the default logger, accepting names like 'DEBUG'."""
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    logger.setLevel(level)


# Default system logger
logger = setup_logger('hecg', os.environ.get('HECG_LOG_FILE', 'data/logs/hecg.log'))
