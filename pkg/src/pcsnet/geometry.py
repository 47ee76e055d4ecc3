"""Point-cloud primitives: normalization, exact kNN, plane fitting, FPS and
saliency-weighted Poisson-disk seeding.

All functions take ``(n, 3)`` float arrays. Randomized functions take a
``rng`` argument accepted by :func:`pcsnet.validation.make_rng`.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._errors import DataError
from .validation import check_count, check_points, check_saliency, make_rng


@dataclass
class PointCloud:
    """Ordered points with optional per-point saliency."""

    points: np.ndarray
    saliency: np.ndarray = None

    def __post_init__(self):
        self.points = check_points(self.points)
        if self.saliency is not None:
            self.saliency = check_saliency(self.saliency, len(self.points))

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class FittedPlane:
    """The plane ``{x : normal . x = offset}`` with a unit normal."""

    normal: np.ndarray
    offset: float


def sq_dist(a, b):
    """Squared Euclidean distance over the last axis, broadcasting.

    Written out per coordinate so that every caller (and every test
    oracle using ``dx*dx + dy*dy + dz*dz``) gets bit-identical values.
    """
    d = np.asarray(a) - np.asarray(b)
    return d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]


def normalize_to_unit_sphere(points):
    """Center on the centroid and scale so the farthest point has norm 1.

    Returns ``(normalized, center, radius)``; invert with :func:`denormalize`.
    """
    P = check_points(points)
    center = P.mean(axis=0)
    radius = float(np.sqrt(sq_dist(P, center).max()))
    if not radius > 0.0:
        raise DataError("degenerate-extent", "all points coincide")
    return (P - center) / radius, center, radius


def denormalize(points, center, radius):
    return np.asarray(points, dtype=np.float64) * radius + np.asarray(center)


class KnnIndex:
    """Exact k-nearest-neighbor index over a frozen point set.

    Results are sorted by distance with ties broken by lower index, which
    makes them identical to a brute-force scan. A KD-tree proposes
    candidates; rows where the candidate set cannot prove completeness fall
    back to a full scan.
    """

    _slack = 8

    def __init__(self, points):
        self.points = check_points(points).copy()
        self.points.setflags(write=False)
        self._tree = cKDTree(self.points)

    def __len__(self):
        return len(self.points)

    def query(self, queries, k):
        """Return ``(indices, distances)``, both of shape ``(len(queries), k)``."""
        Q = check_points(np.atleast_2d(queries), name="queries")
        n = len(self.points)
        k = check_count(k, "k", high=None)
        if k > n:
            raise DataError("k-too-large", f"k={k} exceeds indexed cloud size {n}")
        kk = min(n, k + self._slack)
        _, cand = self._tree.query(Q, k=kk)
        cand = np.asarray(cand, dtype=np.intp).reshape(len(Q), kk)
        d2 = sq_dist(Q[:, None, :], self.points[cand])
        order = np.lexsort((cand, d2), axis=-1)
        cand = np.take_along_axis(cand, order, axis=-1)
        d2 = np.take_along_axis(d2, order, axis=-1)
        idx, out = cand[:, :k], d2[:, :k]
        if kk < n:
            # the k-th candidate must be strictly closer than the worst one,
            # otherwise an unseen point could tie with it
            unsure = ~(d2[:, k - 1] * (1.0 + 1e-9) < d2[:, kk - 1])
            for row in np.flatnonzero(unsure):
                full = sq_dist(self.points, Q[row])
                o = np.lexsort((np.arange(n), full))[:k]
                idx[row], out[row] = o, full[o]
        return idx, np.sqrt(out)


def knn(index, query, k):
    """k nearest neighbors of one point as a list of ``(index, distance)``."""
    idx, dist = index.query(np.asarray(query, dtype=np.float64).reshape(1, 3), k)
    return [(int(i), float(d)) for i, d in zip(idx[0], dist[0])]


def _orient(normal):
    # first non-negligible component positive, so the sign is reproducible
    j = int(np.argmax(np.abs(normal) > 1e-12))
    return -normal if normal[j] < 0 else normal


def fit_planes(neighborhoods, rtol=1e-12):
    """Total-least-squares planes for a stack of ``(b, k, 3)`` neighborhoods.

    Returns ``(normals, offsets, ok)`` where ``ok`` is False for rank-deficient
    (collinear or coincident) neighborhoods; their normal/offset are zeros.
    """
    X = np.asarray(neighborhoods, dtype=np.float64)
    centroid = X.mean(axis=1)
    C = X - centroid[:, None, :]
    cov = np.einsum("bki,bkj->bij", C, C)
    w, v = np.linalg.eigh(cov)
    normals = v[:, :, 0]
    ok = w[:, 1] > rtol * np.maximum(w[:, 2], np.finfo(float).tiny)
    ok &= w[:, 2] > 0
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    offsets = np.einsum("bi,bi->b", normals, centroid)
    normals[~ok] = 0.0
    offsets[~ok] = 0.0
    return normals, offsets, ok


def fit_plane(points):
    """Least-squares plane through ``points`` (smallest covariance eigenvector)."""
    P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(P) < 3:
        raise DataError("rank-deficient", f"need at least 3 points, got {len(P)}")
    normals, offsets, ok = fit_planes(P[None])
    if not ok[0]:
        raise DataError("rank-deficient", "points are collinear or coincident")
    return FittedPlane(_orient(normals[0]), float(offsets[0]))


def point_plane_distance(p, plane):
    return float(abs(np.dot(plane.normal, np.asarray(p, dtype=np.float64)) - plane.offset))


def farthest_point_sampling(points, count, rng=None, *, first=None):
    """Greedy max-min subset of ``count`` indices.

    The first index is drawn from ``rng`` unless ``first`` is given; later
    picks maximize the distance to the selected set (lowest index on ties).
    """
    P = check_points(points)
    n = len(P)
    count = check_count(count, "count")
    if count > n:
        raise DataError("count-too-large", f"count={count} exceeds cloud size {n}")
    if first is None:
        first = int(make_rng(rng).integers(n))
    selected = np.empty(count, dtype=np.intp)
    selected[0] = first
    min_d2 = sq_dist(P, P[first])
    min_d2[first] = -1.0
    for i in range(1, count):
        nxt = int(np.argmax(min_d2))
        selected[i] = nxt
        np.minimum(min_d2, sq_dist(P, P[nxt]), out=min_d2)
        min_d2[selected[: i + 1]] = -1.0
    return selected


def _dart_throw(P, order, radii, cap):
    """Accept points in ``order`` whose separation from every accepted seed
    exceeds the mean of both radii. Stops early after ``cap`` acceptances."""
    acc_pts = np.empty((cap + 1, 3))
    acc_r = np.empty(cap + 1)
    acc_idx = np.empty(cap + 1, dtype=np.intp)
    m = 0
    for i in order:
        if m:
            lim = 0.5 * (radii[i] + acc_r[:m])
            if np.any(sq_dist(acc_pts[:m], P[i]) <= lim * lim):
                continue
        acc_pts[m], acc_r[m], acc_idx[m] = P[i], radii[i], i
        m += 1
        if m > cap:
            break
    return acc_idx[:m].copy()


def poisson_disk_seeds(points, target_count, weights=None, rng=None, *, eps=0.1, max_rounds=20,
                       return_radius=False):
    """Weighted dart-throwing seeds, roughly ``target_count`` of them.

    Point ``i`` gets radius ``r_base * (1 + eps) / (eps + w_i / mean(w))``, so
    uniform weights give every point exactly ``r_base`` and heavy points get
    smaller disks (denser seeds). ``r_base`` is bisected until the accepted
    count lands in ``[0.9, 1.1] * target_count``; if that band is not reached
    within ``max_rounds`` the closest count seen is returned. With
    ``return_radius`` the result is ``(seeds, r_base)``.
    """
    P = check_points(points)
    n = len(P)
    target_count = check_count(target_count, "target_count")
    if target_count > n:
        raise DataError("count-too-large", f"target_count={target_count} exceeds cloud size {n}")
    if weights is None:
        factor = np.ones(n)
    else:
        w = check_saliency(weights, n, name="weights")
        if not np.any(w > 0):
            raise DataError("zero-weights", "weights must not all be zero")
        factor = (1.0 + eps) / (eps + w / w.mean())

    order = make_rng(rng).permutation(n)
    lo_band, hi_band = 0.9 * target_count, 1.1 * target_count
    cap = int(np.floor(hi_band)) + 1

    extent = np.ptp(P, axis=0)
    diam = float(np.sqrt(extent @ extent))
    hi = diam / factor.min() * (1.0 + 1e-9) + 1e-300
    lo = 0.0

    def done(seeds, r):
        return (seeds, r) if return_radius else seeds

    best, best_r = _dart_throw(P, order, hi * factor, cap), hi
    if lo_band <= len(best) <= hi_band or diam == 0.0:
        return done(best, best_r)
    for _ in range(max_rounds):
        mid = 0.5 * (lo + hi)
        seeds = _dart_throw(P, order, mid * factor, cap)
        if len(seeds) <= cap and abs(len(seeds) - target_count) < abs(len(best) - target_count):
            best, best_r = seeds, mid
        if lo_band <= len(seeds) <= hi_band:
            return done(seeds, mid)
        if len(seeds) > hi_band:
            lo = mid
        else:
            hi = mid
    return done(best, best_r)
