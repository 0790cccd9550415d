import hashlib
import json
from pathlib import Path
from typing import Any, get_args

import numpy as np

import logging
logger = logging.getLogger(__name__)

def check_literal_values(val: str, arg_name: str, literal_type) -> str:
    valid_values = get_args(literal_type)
    if val not in valid_values:
        valid_vals_str = ", ".join(f"'{v}'" for v in valid_values)
        raise ValueError(
            f"Invalid value '{val}' for argument '{arg_name}'. "
            f"Expected one of ({valid_vals_str})."
        )
    return val


def format_dict_str(dict_to_print: dict, header: str = "") -> str:
    """One `key: value` line per entry, keys sorted, values as they would be written to JSON."""
    lines = [f"{key}: {to_jsonable(dict_to_print[key])}" for key in sorted(dict_to_print)]
    return "\n".join([header, *lines]) if header else "\n".join(lines)


def to_jsonable(obj: Any) -> Any:
    """
    Converts numpy scalars/arrays, tuples and non-finite floats into plain JSON values.
    Non-finite floats become the strings "inf", "-inf" and "nan".
    """
    if isinstance(obj, dict):
        return {str(key): to_jsonable(val) for key, val in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(val) for val in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(val) for val in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        if np.isnan(val):
            return "nan"
        if np.isinf(val):
            return "inf" if val > 0 else "-inf"
        return val
    return obj


def write_json(obj: Any, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")
    logger.info(f"Written {path}")
    return path


def read_json(path: str | Path) -> Any:
    with open(path) as f:
        return json.load(f)


def get_config_id(config: dict) -> str:
    """
    SHA-1 of the canonical JSON of a config. Used to tell runs apart in manifests.
    """
    canonical = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(canonical.encode("UTF-8")).hexdigest()
