"""Small argument checks shared by the estimator wrappers."""

from __future__ import annotations

from numbers import Integral

from .exceptions import ConfigError


def check_int(name, value, minimum=1):
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_choice(name, value, choices):
    if value not in choices:
        raise ConfigError(f"{name} must be one of {tuple(choices)}, got {value!r}")
    return value


def check_unit_interval(name, value):
    value = float(value)
    if not 0.0 < value <= 1.0:
        raise ConfigError(f"{name} must lie in (0, 1], got {value}")
    return value


def as_list(X, kind):
    """Accept one item or a sequence of them; return ``(items, was_single)``."""
    if isinstance(X, kind):
        return [X], True
    items = list(X)
    for i, item in enumerate(items):
        if not isinstance(item, kind):
            raise ConfigError(f"item {i} is {type(item).__name__}, expected {kind.__name__}")
    return items, False
