"""JSON Schema definition for search configuration files.

Schema Versioning:
------------------
Each version has its own JSON Schema definition. When a config is loaded, the
version field is checked first, and the appropriate schema is used for validation.

Supported Versions:
- "1.0": Initial schema version
"""

# Supported schema versions
SUPPORTED_VERSIONS = ["1.0"]

SEARCH_FAMILIES = ["new", "diagonal", "triangle"]
OUTPUT_FORMATS = ["csv", "json"]

# Mapping of version to JSON Schema
SCHEMAS_BY_VERSION = {
    "1.0": None  # Will be populated with CONFIG_SCHEMA below
}

# Default values for optional configuration sections
DEFAULT_CONFIG = {
    "version": "1.0",
    "stages": 2,
    "seed": 0,
    "method": "reduced",
    "quad": {
        "abs_tol": 1e-10,
        "rel_tol": 1e-9,
        "max_subdiv": 20,
        "gl_order": 16,
    },
    "output": {
        "formats": ["csv", "json"],
        "destination": "./output/search",
    },
}

_BOUND = {
    "type": "array",
    "items": {"type": "number"},
    "minItems": 2,
    "maxItems": 2,
    "description": "Closed search interval [lo, hi]",
}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "Search Configuration",
    "type": "object",
    "required": ["version", "family"],
    "additionalProperties": False,
    "properties": {
        "version": {
            "type": "string",
            "description": "Config schema version",
        },
        "family": {
            "type": "string",
            "enum": SEARCH_FAMILIES,
            "description": "Kernel family to search",
        },
        "bounds": {
            "type": "object",
            "additionalProperties": _BOUND,
            "description": "Search box per parameter (b, phi, theta, a, arg_sigma_plus, arg_sigma_minus)",
        },
        "fixed": {
            "type": "object",
            "additionalProperties": {"type": "number"},
            "description": "Values of the parameters held fixed",
        },
        "grid": {
            "type": "integer",
            "minimum": 2,
            "description": "Grid points per axis in the first stage",
        },
        "stages": {
            "type": "integer",
            "minimum": 1,
            "description": "Grid stage plus refinement stages",
        },
        "seed": {
            "type": "integer",
            "minimum": 0,
        },
        "sigma": {
            "type": "array",
            "items": {"type": "number"},
            "minItems": 3,
            "maxItems": 3,
            "description": "Fixed phases (arg sigma0, arg sigma+, arg sigma-) in radians",
        },
        "method": {
            "type": "string",
            "enum": ["reduced", "planar"],
        },
        "quad": {
            "type": "object",
            "properties": {
                "abs_tol": {"type": "number", "exclusiveMinimum": 0},
                "rel_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_subdiv": {"type": "integer", "minimum": 1},
                "gl_order": {"type": "integer", "minimum": 2},
            },
        },
        "output": {
            "type": "object",
            "properties": {
                "formats": {
                    "type": "array",
                    "items": {"type": "string", "enum": OUTPUT_FORMATS},
                    "minItems": 1,
                },
                "destination": {
                    "type": "string",
                    "minLength": 1,
                    "description": "Path prefix; .csv and .json are appended",
                },
            },
            "additionalProperties": False,
        },
        "threads": {
            "type": ["integer", "null"],
            "minimum": 1,
        },
    },
}

SCHEMAS_BY_VERSION["1.0"] = CONFIG_SCHEMA


def get_schema_for_version(version: str) -> dict:
    """Get the JSON Schema for a specific config version.

    Raises:
        ValueError: If the version is not supported.
    """
    if version not in SUPPORTED_VERSIONS:
        raise ValueError(
            f"Unsupported config version '{version}'. "
            f"Supported versions: {SUPPORTED_VERSIONS}"
        )
    return SCHEMAS_BY_VERSION[version]
