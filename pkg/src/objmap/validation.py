"""Small argument checks shared by the estimators, the store and the CLI config.

Every helper raises ``ValueError`` whose message starts with the argument
name, so config errors can be traced back to the offending key.
"""

from __future__ import annotations

import math
from numbers import Integral, Real


def check_real(name: str, value) -> float:
    if type(value) is float and value - value == 0.0:
        return value
    if isinstance(value, bool) or not isinstance(value, Real):
        raise ValueError(f"{name}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name}: must be finite, got {value!r}")
    return value


def check_positive(name: str, value) -> float:
    if type(value) is float and 0.0 < value < math.inf:
        return value
    value = check_real(name, value)
    if value <= 0.0:
        raise ValueError(f"{name}: must be > 0, got {value!r}")
    return value


def check_unit_interval(name: str, value) -> float:
    if type(value) is float and 0.0 <= value <= 1.0:
        return value
    value = check_real(name, value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name}: must lie in [0, 1], got {value!r}")
    return value


def check_count(name: str, value, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise ValueError(f"{name}: expected an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name}: must be >= {minimum}, got {value!r}")
    return int(value)


def check_choice(name: str, value, choices) -> str:
    if value not in choices:
        raise ValueError(f"{name}: must be one of {sorted(choices)}, got {value!r}")
    return value
