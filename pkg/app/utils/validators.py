from builtins import float, int, str
from typing import Any, List, Sequence

import numpy as np

PROBABILITY_TOLERANCE = 1e-12


def split_list(value: Any) -> Any:
    """
    Turn a comma separated string (optionally wrapped in brackets) into a list.

    Config files carry vectors as text such as ``0.10, 0.01, 0.003`` or
    ``[2, 4, 6]``. Non-string values are returned unchanged so pydantic can
    validate them as usual.

    Args:
        value: Raw field value.

    Returns:
        A list of stripped string items, or the original value.
    """
    if not isinstance(value, str):
        return value
    text = value.strip()
    if text.startswith("[") and text.endswith("]"):
        text = text[1:-1]
    if not text:
        return []
    return [item.strip() for item in text.split(",") if item.strip()]


def validate_probability_vector(probs: Sequence[float]) -> List[float]:
    """
    Check that ``probs`` is a non-empty probability vector summing to one.

    Raises:
        ValueError: If an entry is negative or the sum is off by more than 1e-12.
    """
    values = [float(p) for p in probs]
    if not values:
        raise ValueError("Probability vector must not be empty.")
    if any(p < 0.0 for p in values):
        raise ValueError("Probability vector entries must be non-negative.")
    if abs(float(np.sum(values)) - 1.0) > PROBABILITY_TOLERANCE:
        raise ValueError(f"Probability vector must sum to 1, got {sum(values)!r}.")
    return values


def validate_open_unit_interval(values: Sequence[float], name: str) -> List[float]:
    """Every entry must lie strictly between 0 and 1."""
    checked = [float(v) for v in values]
    for v in checked:
        if not 0.0 < v < 1.0:
            raise ValueError(f"Every {name} entry must lie in (0, 1), got {v!r}.")
    return checked


def coerce_int(value: Any) -> Any:
    """
    Accept integral floats and scientific-notation strings (``2e5``) for integer fields.

    Anything that is not integral is returned unchanged so that pydantic reports it.
    """
    if isinstance(value, str):
        text = value.strip()
        try:
            return int(text)
        except ValueError:
            try:
                value = float(text)
            except ValueError:
                return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return value
