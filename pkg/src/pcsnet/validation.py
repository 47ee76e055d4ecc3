"""Input validation helpers used by every public entry point."""

import numbers

import numpy as np
from sklearn.utils import check_array

from ._errors import DataError


def check_points(X, *, min_points=1, name="points"):
    """Return ``X`` as a C-contiguous float64 array of shape (n, 3).

    Accepts anything array-like, plus objects exposing a ``points``
    attribute (:class:`~pcsnet.geometry.PointCloud`).
    """
    X = getattr(X, "points", X)
    try:
        X = check_array(
            X,
            dtype=np.float64,
            order="C",
            ensure_all_finite=True,
            ensure_min_samples=min_points,
            input_name=name,
        )
    except ValueError as exc:
        raise DataError("invalid-points", str(exc)) from exc
    if X.shape[1] != 3:
        raise DataError("invalid-points", f"{name} must have 3 columns, got {X.shape[1]}")
    return X


def check_saliency(s, n_points, *, name="saliency"):
    """Validate a per-point nonnegative weight vector of length ``n_points``."""
    s = np.asarray(s, dtype=np.float64).reshape(-1)
    if s.shape[0] != n_points:
        raise DataError("length-mismatch", f"{name} has {s.shape[0]} values for {n_points} points")
    if not np.all(np.isfinite(s)):
        raise DataError("non-finite", f"{name} contains NaN or Inf")
    if np.any(s < 0):
        raise DataError("negative-saliency", f"{name} must be >= 0")
    return s


def check_count(value, name, *, low=1, high=None, code="invalid-count"):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool):
        raise DataError(code, f"{name} must be an integer, got {value!r}")
    value = int(value)
    if value < low:
        raise DataError(code, f"{name}={value} < {low}")
    if high is not None and value > high:
        raise DataError(code, f"{name}={value} > {high}")
    return value


def make_rng(seed=None):
    """Turn ``None``, an int, or an existing Generator into a Generator.

    PCG64 streams are identical across platforms for a given seed.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, numbers.Integral):
        return np.random.default_rng(seed)
    raise DataError("invalid-seed", f"cannot seed a generator from {seed!r}")
