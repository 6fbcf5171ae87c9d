# empbase/serializers.py
"""
This module implements serializations.

Config echoes, checkpoint headers, evaluation reports and generation
records are all written as JSON. The values that flow into them come
from numpy and dataclasses, so they are converted here first.
"""
from dataclasses import asdict, is_dataclass
from datetime import date, datetime
import json

import numpy as np

from .utils import xlate

DATE_FMT = "%F"
TIME_FMT = "%Y-%m-%d %H:%M:%S"


def _eval_value(value, to_camel_case=False):
    """ _eval_value

    This function converts some of the standard values as needed based
    upon type. Containers are walked recursively.

    parameters:
        value
            what is to be evaluated and perhaps converted

        to_camel_case
            Boolean for converting dict keys to camel case

    returns
        values that have been converted as needed
    """
    if isinstance(value, datetime):
        result = value.strftime(TIME_FMT)
    elif isinstance(value, date):
        result = value.strftime(DATE_FMT)
    elif isinstance(value, np.ndarray):
        result = [_eval_value(item, to_camel_case) for item in value.tolist()]
    elif isinstance(value, np.bool_):
        result = bool(value)
    elif isinstance(value, np.integer):
        result = int(value)
    elif isinstance(value, np.floating):
        result = float(value)
    elif is_dataclass(value) and not isinstance(value, type):
        result = _eval_value(asdict(value), to_camel_case)
    elif isinstance(value, dict):
        result = {}
        for key, item in value.items():
            if to_camel_case:
                key = xlate(key, camel_case=True)
            result[key] = _eval_value(item, to_camel_case)
    elif isinstance(value, (list, tuple)):
        result = [_eval_value(item, to_camel_case) for item in value]
    else:
        result = value

    return result


def to_json(value, to_camel_case=False, indent=None, sort=False):
    """to_json

    Output JSON formatted data after `_eval_value` conversion.

    Default:
        to_json(value, to_camel_case=False, indent=None, sort=False)

    Args:
        value: (obj) : dict, list, dataclass or scalar
        to_camel_case: (bool) : True converts dict keys to camel case.
        indent: (int : None) : spaces to indent for readability
        sort: (bool) : sort the keys

    Returns:
        (str) : JSON formatted string of the data.
    """
    return json.dumps(
        _eval_value(value, to_camel_case), indent=indent, sort_keys=sort
    )


def from_json(data, from_camel_case=False):
    """from_json

    Convert JSON back to a dict, optionally with snake_case keys.

    Args:
        data: (bytes : str : dict) : JSON text or an already parsed dict
        from_camel_case: (bool) : convert top level keys back to snake_case

    Returns:
        data (obj) : the converted data
    """
    if isinstance(data, (str, bytes)):
        data = json.loads(data)
    if not from_camel_case or not isinstance(data, dict):
        return data
    return {xlate(key, camel_case=False): value for key, value in data.items()}
