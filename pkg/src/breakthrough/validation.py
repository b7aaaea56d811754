"""Input validation helpers shared by the estimators."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array


def check_survival_y(y, n_samples=None):
    """Split a survival target into ``(time, event)`` arrays.

    Accepts a structured array with ``time`` and ``event`` fields, a
    ``(time, event)`` tuple, or a two-column array whose columns are time
    and event in that order.
    """
    if isinstance(y, np.ndarray) and y.dtype.names is not None:
        missing = {"time", "event"} - set(y.dtype.names)
        if missing:
            raise ValueError(f"structured y is missing fields {sorted(missing)}")
        time, event = y["time"], y["event"]
    elif isinstance(y, tuple) and len(y) == 2:
        time, event = y
    else:
        arr = check_array(y, ensure_2d=True, dtype=np.float64)
        if arr.shape[1] != 2:
            raise ValueError("y must have exactly two columns: time, event")
        time, event = arr[:, 0], arr[:, 1]

    time = np.asarray(time, dtype=np.float64).ravel()
    event = np.asarray(event).ravel()
    if time.shape != event.shape:
        raise ValueError("time and event must have the same length")
    if not np.all(np.isfinite(time)):
        raise ValueError("time must be finite")
    if not np.all(np.isin(event, (0, 1))):
        raise ValueError("event must contain only 0/1 values")
    if n_samples is not None and time.shape[0] != n_samples:
        raise ValueError(f"y has {time.shape[0]} samples, expected {n_samples}")
    return time, event.astype(np.int8)


def check_entry(entry, time):
    if entry is None:
        return np.zeros_like(time)
    entry = np.asarray(entry, dtype=np.float64).ravel()
    if entry.shape != time.shape:
        raise ValueError("entry must have the same length as time")
    if not np.all(np.isfinite(entry)) or np.any(entry < 0):
        raise ValueError("entry times must be finite and nonnegative")
    return entry


def check_probability(value, name, *, open_interval=True):
    if not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number")
    if open_interval and not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in (0, 1), got {value!r}")
    return float(value)


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not value > 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value
