import logging
import sys
from pathlib import Path
from logging.handlers import RotatingFileHandler
from typing import Optional

from pythonjsonlogger import jsonlogger

from src.config import settings


# Configure JSON formatter
class CustomJsonFormatter(jsonlogger.JsonFormatter):
    def add_fields(self, log_record, record, message_dict):
        super(CustomJsonFormatter, self).add_fields(log_record, record, message_dict)
        log_record['level'] = record.levelname
        log_record['logger'] = record.name


# Create logger
logger = logging.getLogger(settings.APP_NAME)
logger.setLevel(settings.LOG_LEVEL)
logger.propagate = False

json_formatter = CustomJsonFormatter('%(timestamp)s %(level)s %(name)s %(message)s')

# Console handler writes to stderr; stdout carries the CLI summary
console_handler = logging.StreamHandler(sys.stderr)
console_handler.setFormatter(json_formatter)
logger.addHandler(console_handler)

if settings.LOG_TO_FILE:
    log_dir = Path(settings.LOG_DIR)
    log_dir.mkdir(exist_ok=True)
    file_handler = RotatingFileHandler(
        log_dir / "toolkit.log",
        maxBytes=10 * 1024 * 1024,  # 10MB
        backupCount=5
    )
    file_handler.setFormatter(json_formatter)
    logger.addHandler(file_handler)


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """Return the toolkit logger, or a child of it for a module name."""
    if not name:
        return logger
    return logger.getChild(name.removeprefix("src."))


def set_console_level(level: str) -> None:
    console_handler.setLevel(level)
