"""Input checks shared by the estimator and the CLI."""
import numpy as np
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InvalidArgumentError

__all__ = ["check_traces", "check_is_fitted", "check_positive_int", "check_box"]


def check_traces(X, n_trace, name="X"):
    """Return ``X`` as a finite float array of shape ``(n_measurements, n_trace)``."""
    try:
        arr = check_array(X, dtype=np.float64, ensure_2d=True, ensure_min_samples=1,
                          input_name=name)
    except ValueError as exc:
        raise InvalidArgumentError(str(exc)) from exc
    if arr.shape[1] != n_trace:
        raise InvalidArgumentError(
            f"{name} has {arr.shape[1]} boundary values per row; the mesh has {n_trace}")
    return arr


def check_positive_int(value, name):
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise InvalidArgumentError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_box(box):
    box = tuple(float(b) for b in box)
    if len(box) != 4 or not (box[0] < box[1] and box[2] < box[3]):
        raise InvalidArgumentError(f"box must be (xmin, xmax, ymin, ymax) with min < max, got {box}")
    return box
