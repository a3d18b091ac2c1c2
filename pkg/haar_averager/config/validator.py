"""Checks on a loaded search configuration.

Validation runs in two passes: the versioned JSON schema (structure and
types), then domain checks on the search box that a schema cannot express.

A box with a negative side length, plus an unknown quadrature key:
    ValidationResult(
        is_valid=False,
        errors=[
            ValidationError(
                field_path="bounds.b",
                message="b must stay > 0, got lower bound -1.0",
                value=[-1.0, 2.0]
            )
        ],
        warnings=[
            ValidationWarning(
                field_path="quad.tolerance",
                message="Unrecognized key 'tolerance' in section 'quad'"
            )
        ]
    )
"""

import math
import re
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from jsonschema import Draft7Validator

from haar_averager.config.schema import SUPPORTED_VERSIONS, get_schema_for_version


@dataclass
class ValidationError:
    """One rejected field: dotted path, message and offending value (None when missing)."""
    field_path: str
    message: str
    value: Any = None


@dataclass
class ValidationWarning:
    """A field that is accepted but probably not what was meant."""
    field_path: str
    message: str


@dataclass
class ValidationResult:
    """Errors and warnings of one validation; truthy when there are no errors."""
    is_valid: bool
    errors: List[ValidationError] = field(default_factory=list)
    warnings: List[ValidationWarning] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.is_valid


# Parameters each family can search over
_FAMILY_PARAMETERS = {
    "new": {"b", "phi"},
    "diagonal": {"b", "theta", "phi"},
    "triangle": {"a", "b", "arg_sigma_plus", "arg_sigma_minus"},
}
_QUAD_KNOWN_KEYS = {"abs_tol", "rel_tol", "max_subdiv", "gl_order"}
_PHASE_PARAMETERS = {"theta", "arg_sigma_plus", "arg_sigma_minus"}


def _check_interval(name: str, lo: float, hi: float, family: str) -> Optional[str]:
    if not lo < hi:
        return f"bounds for {name} must satisfy lo < hi, got [{lo}, {hi}]"
    if name == "b" and not lo > 0:
        return f"b must stay > 0, got lower bound {lo}"
    if name == "phi" and not (0 < lo and hi < math.pi):
        return f"phi must stay inside (0, pi), got [{lo}, {hi}]"
    if name in _PHASE_PARAMETERS and not (-math.pi <= lo and hi <= math.pi):
        return f"{name} must stay inside [-pi, pi], got [{lo}, {hi}]"
    if family == "diagonal" and name == "b" and hi > 1.0:
        return "diagonal searches run over b <= 1; C(1/b, theta) mirrors C(b, -theta)"
    if family == "triangle" and name == "a" and not (-1.0 <= lo and hi <= 2.0):
        return f"triangle a must stay inside [-1, 2], got [{lo}, {hi}]"
    if family == "triangle" and name == "b" and hi > 2.0:
        return f"triangle b must stay inside (0, 2], got [{lo}, {hi}]"
    return None


def validate_config(config: Dict[str, Any], config_file: Optional[str] = None) -> ValidationResult:
    """Validate a search configuration dictionary.

    Args:
        config: A dictionary representing the parsed configuration contents.
        config_file: Optional name of the config file being validated, included
            in warning messages.

    Returns:
        A ValidationResult with every schema and domain error, and warnings
        for unknown bound names and unknown quadrature keys.
    """
    errors: List[ValidationError] = []
    warnings: List[ValidationWarning] = []
    file_prefix = f"[{config_file}] " if config_file else ""

    # 1. The version picks the schema
    version = config.get("version")
    if not version:
        return ValidationResult(
            is_valid=False,
            errors=[ValidationError(field_path="version", message="'version' is a required property", value=None)]
        )

    # 2. Known versions only
    if version not in SUPPORTED_VERSIONS:
        return ValidationResult(
            is_valid=False,
            errors=[ValidationError(
                field_path="version",
                message=f"Unsupported config version '{version}'. Supported versions: {SUPPORTED_VERSIONS}",
                value=version
            )]
        )

    # 3. Structural validation against the versioned schema
    validator = Draft7Validator(get_schema_for_version(version))
    for error in validator.iter_errors(config):
        field_path = ".".join(str(p) for p in error.path) if error.path else ""
        offending_value = error.instance
        if error.validator == "required":
            match = re.search(r"'(\w+)'", error.message)
            if match:
                field_path = ".".join(filter(None, [field_path, match.group(1)]))
            offending_value = None
        errors.append(ValidationError(
            field_path=field_path or "root",
            message=error.message,
            value=offending_value
        ))
    if errors:
        return ValidationResult(is_valid=False, errors=errors, warnings=warnings)

    # 4. Search box against the family's parameter domain
    family = config["family"]
    known = _FAMILY_PARAMETERS[family]
    for name, interval in (config.get("bounds") or {}).items():
        if name not in known:
            warnings.append(ValidationWarning(
                field_path=f"bounds.{name}",
                message=(
                    f"{file_prefix}Unrecognized parameter '{name}' for family '{family}'. "
                    f"Known parameters: {sorted(known)}"
                )
            ))
            continue
        problem = _check_interval(name, float(interval[0]), float(interval[1]), family)
        if problem:
            errors.append(ValidationError(field_path=f"bounds.{name}", message=problem, value=list(interval)))

    for name, value in (config.get("fixed") or {}).items():
        if name not in known:
            warnings.append(ValidationWarning(
                field_path=f"fixed.{name}",
                message=f"{file_prefix}Unrecognized parameter '{name}' for family '{family}'"
            ))
        elif name == "b" and not value > 0:
            errors.append(ValidationError(field_path="fixed.b", message=f"b must be > 0, got {value}", value=value))
        elif name == "phi" and not 0 < value < math.pi:
            errors.append(ValidationError(field_path="fixed.phi", message=f"phi must lie in (0, pi), got {value}",
                                          value=value))

    # 5. Unrecognized quadrature keys
    quad = config.get("quad", {})
    if isinstance(quad, dict):
        for key in quad:
            if key not in _QUAD_KNOWN_KEYS:
                warnings.append(ValidationWarning(
                    field_path=f"quad.{key}",
                    message=(
                        f"{file_prefix}Unrecognized key '{key}' in section 'quad'. "
                        f"Known keys: {sorted(_QUAD_KNOWN_KEYS)}"
                    )
                ))

    return ValidationResult(
        is_valid=len(errors) == 0,
        errors=errors,
        warnings=warnings
    )
