"""Reading TOML run configurations with file/line diagnostics."""

import re

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

from pydantic import ValidationError

from src.errors import ConfigError, ExpressionSyntaxError, UnknownIdentifier
from src.logger import get_logger
from src.models.run_config import RunConfig

logger = get_logger(__name__)

_TOML_LOCATION = re.compile(r"line (\d+)")


@dataclass(frozen=True)
class ConfigSource:
    path: str
    raw: bytes
    config: RunConfig

    @property
    def text(self) -> str:
        return self.raw.decode("utf-8")

    def line_of(self, dotted: str) -> Optional[int]:
        """Line defining the last key of ``dotted`` inside its table, if found."""
        return find_key_line(self.text, dotted)

    @contextmanager
    def expressions(self, dotted: str) -> Iterator[None]:
        """Report expression errors as ConfigErrors pointing at ``dotted``."""
        try:
            yield
        except (ExpressionSyntaxError, UnknownIdentifier) as exc:
            raise ConfigError(self.path, self.line_of(dotted), f"{dotted}: {exc}") from exc


def find_key_line(text: str, dotted: str) -> Optional[int]:
    parts = [p for p in dotted.split(".") if not p.isdigit()]
    if not parts:
        return None
    table, key = parts[:-1], parts[-1]
    current: list = []
    key_pattern = re.compile(rf"^\s*{re.escape(key)}\s*=")
    header = re.compile(r"^\s*\[([^\[\]]+)\]\s*$")
    for number, line in enumerate(text.splitlines(), start=1):
        match = header.match(line)
        if match:
            current = match.group(1).strip().split(".")
            continue
        if key_pattern.match(line) and (not table or current[: len(table)] == table):
            return number
    return None


def load_config(path: str) -> ConfigSource:
    """
    Parse and validate a run configuration.

    Args:
        path (str): TOML file.

    Returns:
        ConfigSource: Raw bytes (for the digest) and the validated model.

    Raises:
        ConfigError: For unreadable files, TOML syntax errors and schema
            violations, with the offending line where it can be located.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError(path, None, f"cannot read config: {exc.strerror}") from exc

    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        match = _TOML_LOCATION.search(str(exc))
        line = int(match.group(1)) if match else None
        raise ConfigError(path, line, f"invalid TOML: {exc}") from exc

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        dotted = ".".join(str(part) for part in first["loc"])
        message = f"{dotted}: {first['msg']}"
        logger.error(f"invalid config {path}: {message}")
        raise ConfigError(path, find_key_line(raw.decode("utf-8"), dotted), message) from exc

    return ConfigSource(path, raw, config)
