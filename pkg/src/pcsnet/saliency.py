"""Geometric saliency: offset of each point from the least-squares plane of
its neighborhood, and a Gaussian-weighted smoothing of that field."""

import logging

import numpy as np

from ._errors import DataError
from .geometry import KnnIndex, fit_planes
from .validation import check_count, check_points, check_saliency

logger = logging.getLogger(__name__)


def _drop_self(idx, dist):
    """Remove each row's own index from a ``(n, k+1)`` neighbor table.

    Rows where duplicates pushed the point itself out of the table lose
    their last (farthest) column instead.
    """
    n = len(idx)
    own = idx == np.arange(n)[:, None]
    missing = ~own.any(axis=1)
    own[missing, -1] = True
    keep = ~own
    k = idx.shape[1] - 1
    return idx[keep].reshape(n, k), dist[keep].reshape(n, k)


def raw_saliency(points, k=20, *, index=None):
    """Distance from every point to the plane fitted to its ``k`` neighbors.

    The point itself is excluded from its own neighborhood. Neighborhoods too
    degenerate to define a plane (collinear, coincident) get saliency 0.
    """
    P = check_points(points)
    k = check_count(k, "k", low=3)
    if len(P) < k + 1:
        raise DataError("cloud-too-small", f"need at least k+1={k + 1} points, got {len(P)}")
    index = index or KnnIndex(P)
    idx, dist = index.query(P, k + 1)
    idx, _ = _drop_self(idx, dist)
    normals, offsets, ok = fit_planes(P[idx])
    s = np.abs(np.einsum("ij,ij->i", normals, P) - offsets)
    s[~ok] = 0.0
    if not ok.all():
        logger.info("%d point(s) with rank-deficient neighborhoods set to saliency 0", int((~ok).sum()))
    return s


def smooth_saliency(points, raw, k=20, h=0.01, *, index=None):
    """Gaussian-weighted average of ``raw`` over each point's ``k``-neighborhood.

    The neighborhood includes the point itself (weight 1), so the denominator
    never vanishes. ``k`` is clipped to the cloud size.
    """
    P = check_points(points)
    raw = check_saliency(raw, len(P), name="raw")
    k = min(check_count(k, "k"), len(P))
    if not h > 0:
        raise DataError("invalid-bandwidth", f"h must be > 0, got {h}")
    index = index or KnnIndex(P)
    idx, dist = index.query(P, k)
    self_col = np.arange(len(P))
    absent = ~(idx == self_col[:, None]).any(axis=1)
    idx[absent, -1] = self_col[absent]
    dist[absent, -1] = 0.0
    w = np.exp(-(dist * dist) / (h * h))
    return (raw[idx] * w).sum(axis=1) / w.sum(axis=1)


def neighborhood_indices(points, k, *, index=None):
    """The ``k``-neighborhoods used by :func:`smooth_saliency` (self included)."""
    P = check_points(points)
    k = min(k, len(P))
    idx, _ = (index or KnnIndex(P)).query(P, k)
    absent = ~(idx == np.arange(len(P))[:, None]).any(axis=1)
    idx[absent, -1] = np.flatnonzero(absent)
    return idx


def compute_saliency(points, k=20, h=0.01, *, smooth=True):
    """Raw saliency, optionally followed by smoothing, sharing one index."""
    P = check_points(points)
    index = KnnIndex(P)
    s = raw_saliency(P, k, index=index)
    return smooth_saliency(P, s, k, h, index=index) if smooth else s
