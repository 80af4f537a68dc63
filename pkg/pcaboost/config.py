"""
Configuration management for pcaboost.

Runtime settings come from environment variables (optionally a .env file);
experiment settings come from JSON files loaded through a strict dataclass
loader that rejects unknown keys.
"""
import dataclasses
import json
import logging
import os
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Type, TypeVar, Union

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

T = TypeVar("T")

VALID_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class ConfigError(ValueError):
    """Invalid configuration (unknown key, wrong type, out-of-range value)."""
    pass


@dataclass
class AppConfig:
    """Runtime settings that do not affect results."""
    log_level: str = "INFO"
    log_file: Optional[str] = None
    max_log_size: int = 1024 * 1024  # 1 MB
    log_backup_count: int = 5
    jobs: Optional[int] = None  # None -> available parallelism

    @classmethod
    def from_env(cls) -> "AppConfig":
        """Load settings from the environment and a .env file if present."""
        load_dotenv()

        log_level = os.getenv("PCABOOST_LOG_LEVEL", "INFO").upper()
        if log_level not in VALID_LOG_LEVELS:
            logger.warning(f"Unknown log level '{log_level}', using INFO")
            log_level = "INFO"

        jobs_raw = os.getenv("PCABOOST_JOBS")
        jobs: Optional[int] = None
        if jobs_raw:
            try:
                jobs = max(1, int(jobs_raw))
            except ValueError:
                logger.warning(f"Ignoring non-integer PCABOOST_JOBS='{jobs_raw}'")

        return cls(
            log_level=log_level,
            log_file=os.getenv("PCABOOST_LOG_FILE") or None,
            jobs=jobs,
        )


def _coerce(value: Any, hint: Any, path: str) -> Any:
    """Convert a JSON value to the annotated field type."""
    origin = typing.get_origin(hint)
    args = typing.get_args(hint)

    if origin is Union:
        if value is None and type(None) in args:
            return None
        errors = []
        for arg in args:
            if arg is type(None):
                continue
            try:
                return _coerce(value, arg, path)
            except ConfigError as e:
                errors.append(str(e))
        raise ConfigError("; ".join(errors) or f"{path}: invalid value {value!r}")

    if dataclasses.is_dataclass(hint):
        if not isinstance(value, Mapping):
            raise ConfigError(f"{path}: expected an object, got {type(value).__name__}")
        return load_dataclass(hint, value, path)  # type: ignore[arg-type]

    if origin in (list, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {type(value).__name__}")
        item_hint = args[0] if args else Any
        items = [_coerce(v, item_hint, f"{path}[{i}]") for i, v in enumerate(value)]
        return tuple(items) if origin is tuple else items

    if hint is Any:
        return value
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported field type {hint!r}")


def load_dataclass(cls: Type[T], data: Mapping[str, Any], path: str = "") -> T:
    """
    Build a dataclass from a mapping, recursing into nested dataclasses.

    Missing keys take the dataclass defaults. Validation in ``__post_init__``
    runs as usual; its ValueErrors are re-raised as ConfigError with the key path.

    Raises:
        ConfigError: On unknown keys, wrong value types or failed validation.
    """
    if not dataclasses.is_dataclass(cls):
        raise TypeError(f"{cls!r} is not a dataclass")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        where = path or cls.__name__
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")

    kwargs = {}
    for name, value in data.items():
        key_path = f"{path}.{name}" if path else name
        kwargs[name] = _coerce(value, hints[name], key_path)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{path or cls.__name__}: {e}") from e


def to_plain(obj: Any) -> Any:
    """Dataclass -> JSON-ready structure (tuples become lists)."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    return obj


def load_json_config(path: Union[str, Path], cls: Type[T]) -> T:
    """
    Read a JSON config file into ``cls``.

    Raises:
        ConfigError: If the file is missing, is not valid JSON, or fails validation.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top-level value must be an object")
    logger.debug(f"Loaded config from {path}")
    return load_dataclass(cls, raw)


def dump_json(data: Dict[str, Any]) -> str:
    return json.dumps(data, indent=2, sort_keys=False)
