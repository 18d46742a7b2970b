import os
import logging

from pythonjsonlogger import jsonlogger


def setup_logging(level=None):
    """
    Set up root logging, optionally with JSON records for log collectors.

    Args:
        level: Optional log level override (default: uses PIPER_LOG_LEVEL env var or INFO)
    """
    # Get log level from environment or use default
    if level is None:
        level = os.environ.get('PIPER_LOG_LEVEL', 'INFO')

    numeric_level = getattr(logging, str(level).upper(), logging.INFO)

    logging.basicConfig(
        level=numeric_level,
        format='%(asctime)s [%(levelname)s] %(name)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    logging.getLogger().setLevel(numeric_level)

    # Structured records for metrics scraping and batch clusters
    if os.environ.get('PIPER_LOG_FORMAT', '').lower() == 'json':
        root_logger = logging.getLogger()
        for handler in root_logger.handlers:
            handler.setFormatter(json_formatter())

    # Silence noisy loggers
    logging.getLogger('matplotlib').setLevel(logging.WARNING)
    logging.getLogger('numba').setLevel(logging.WARNING)
    logging.getLogger('urllib3').setLevel(logging.WARNING)

    logging.debug("Logging initialized")


def json_formatter():
    """
    JSON formatter carrying timestamp, level, source location and any `extra=` fields.
    """
    return jsonlogger.JsonFormatter(
        '%(asctime)s %(levelname)s %(name)s %(message)s %(pathname)s %(lineno)d %(funcName)s',
        rename_fields={'asctime': 'timestamp', 'levelname': 'level', 'lineno': 'line',
                       'pathname': 'file', 'funcName': 'function'},
        datefmt='%Y-%m-%d %H:%M:%S'
    )
