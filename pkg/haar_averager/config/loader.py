"""Search configuration files: YAML in, a validated dict with defaults out.

A search file names a kernel family and the box to scan; everything else
(grid, stages, seed, quadrature tolerances, output prefix) falls back to
``DEFAULT_CONFIG``. Command-line flags are layered on top before validation.
"""

import copy
import logging
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import yaml

from haar_averager.config.schema import DEFAULT_CONFIG
from haar_averager.config.validator import validate_config

logger = logging.getLogger(__name__)


class ConfigParseError(Exception):
    """A search file that cannot be read, parsed or validated.

    Attributes:
        message: What went wrong.
        file_path: The offending file, or None for flag-only runs.
    """

    def __init__(self, message: str, file_path: Optional[str] = None):
        self.message = message
        self.file_path = file_path
        super().__init__(message if file_path is None else f"{message} [{file_path}]")


def _read_yaml(path: Path) -> Any:
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ConfigParseError(f"not UTF-8 text: {e}", str(path))
    except OSError as e:
        if isinstance(e, (FileNotFoundError, PermissionError)):
            raise
        raise ConfigParseError(f"cannot read search file: {e}", str(path))
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigParseError(f"malformed YAML: {e}", str(path))


def load_config(file_path: str) -> Dict[str, Any]:
    """Parse one search file and fill in the defaults.

    Raises:
        FileNotFoundError: no such file.
        ConfigParseError: unreadable, malformed, empty (comments only count
            as empty), or not a mapping at the top level.
    """
    path = Path(file_path)
    if not path.is_file():
        raise FileNotFoundError(f"Search file not found: {file_path}")
    document = _read_yaml(path)
    if document is None:
        raise ConfigParseError("search file is empty", file_path)
    if not isinstance(document, dict):
        raise ConfigParseError(f"expected a mapping at the top level, got {type(document).__name__}", file_path)
    return apply_defaults(document)


def apply_defaults(config: Mapping[str, Any]) -> Dict[str, Any]:
    """``config`` completed from DEFAULT_CONFIG; sections are completed key by key."""
    resolved = copy.deepcopy(dict(config))
    for section, default in DEFAULT_CONFIG.items():
        current = resolved.get(section)
        if section not in resolved:
            resolved[section] = copy.deepcopy(default)
        elif isinstance(default, dict) and isinstance(current, dict):
            resolved[section] = {**copy.deepcopy(default), **current}
    return resolved


def apply_overrides(config: Mapping[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Layer command-line values over ``config`` without mutating it.

    ``None`` means "flag not given" and is skipped, also inside sections;
    dict values update the matching section instead of replacing it.
    """
    merged = copy.deepcopy(dict(config))
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key].update((k, v) for k, v in value.items() if v is not None)
        else:
            merged[key] = value
    return merged


def load_search_config(file_path: Optional[str], overrides: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    """The configuration a search runs with: file (or defaults), then flags, then validation.

    Validation warnings are logged.

    Raises:
        ConfigParseError: the file is malformed or the merged result is invalid.
    """
    config = load_config(file_path) if file_path else apply_defaults({})
    config = apply_overrides(config, overrides or {})

    result = validate_config(config, Path(file_path).name if file_path else None)
    for warning in result.warnings:
        logger.warning(warning.message)
    if not result:
        details = "; ".join(f"{e.field_path}: {e.message}" for e in result.errors)
        raise ConfigParseError(f"Invalid configuration: {details}", file_path)
    logger.debug(f"Search config: family={config.get('family')} grid={config.get('grid')} "
                 f"stages={config.get('stages')}")
    return config
