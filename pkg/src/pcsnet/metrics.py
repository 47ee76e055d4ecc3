"""Fidelity and mesh-quality metrics.

Chamfer and Hausdorff distances use *squared* nearest-neighbor distances;
point-to-face is the mean unsquared Euclidean distance to the nearest
triangle. Triangle quality is ``G = 2*sqrt(3) * area / (half_perimeter *
longest_edge)``, which is 1 for an equilateral triangle.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._errors import DataError
from .geometry import KnnIndex, sq_dist
from .io import sample_mesh_surface
from .validation import check_points, make_rng


def _nearest_sq(A, B):
    """Squared distance from every row of ``A`` to its nearest row of ``B``."""
    idx, _ = KnnIndex(B).query(A, 1)
    return sq_dist(A, B[idx[:, 0]])


def _pair(PD, QD):
    P = check_points(PD, name="PD")
    Q = check_points(QD, name="QD")
    return P, Q


def chamfer(PD, QD):
    P, Q = _pair(PD, QD)
    return float(np.mean(_nearest_sq(P, Q)) + np.mean(_nearest_sq(Q, P)))


def hausdorff(PD, QD):
    P, Q = _pair(PD, QD)
    return float(max(_nearest_sq(P, Q).max(), _nearest_sq(Q, P).max()))


def closest_points_on_triangles(p, a, b, c):
    """Closest point on triangle ``(a, b, c)`` to ``p``, row by row.

    Vertex, edge and face regions are classified with barycentric sign
    tests; all arguments are ``(q, 3)`` arrays.
    """
    ab, ac = b - a, c - a
    ap, bp, cp = p - a, p - b, p - c

    def dot(u, v):
        return np.einsum("ij,ij->i", u, v)

    d1, d2 = dot(ab, ap), dot(ac, ap)
    d3, d4 = dot(ab, bp), dot(ac, bp)
    d5, d6 = dot(ab, cp), dot(ac, cp)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = 1.0 / (va + vb + vc)
        out = a + ab * (vb * denom)[:, None] + ac * (vc * denom)[:, None]
        # regions in reverse precedence: later assignments win
        m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        out[m] = (b + (c - b) * w[:, None])[m]
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        w = d2 / (d2 - d6)
        out[m] = (a + ac * w[:, None])[m]
        m = (d6 >= 0) & (d5 <= d6)
        out[m] = c[m]
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        v = d1 / (d1 - d3)
        out[m] = (a + ab * v[:, None])[m]
        m = (d3 >= 0) & (d4 <= d3)
        out[m] = b[m]
        m = (d1 <= 0) & (d2 <= 0)
        out[m] = a[m]
    return out


def point_triangle_distances(points, corners):
    """Distance from each point to each paired triangle (``(q, 3)`` and ``(q, 3, 3)``)."""
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    return np.sqrt(sq_dist(points, closest_points_on_triangles(points, a, b, c)))


def nearest_face_distances(points, mesh):
    """Per-point distance to the nearest triangle of ``mesh``.

    Candidates come from a KD-tree over triangle centroids: any triangle
    within the current upper bound has its centroid within that bound plus
    the largest centroid-to-corner radius.
    """
    P = check_points(points)
    corners = mesh.corners()
    if len(corners) == 0:
        raise DataError("empty-mesh", "mesh has no triangles")
    centroids = corners.mean(axis=1)
    radius = np.sqrt(sq_dist(corners, centroids[:, None, :]).max())
    tree = cKDTree(centroids)
    _, first = tree.query(P, k=1)
    upper = point_triangle_distances(P, corners[first])
    scale = max(1.0, float(np.abs(corners).max()))
    reach = upper + radius + 1e-9 * scale
    lists = tree.query_ball_point(P, reach)
    counts = np.fromiter((len(x) for x in lists), dtype=np.intp, count=len(P))
    owner = np.repeat(np.arange(len(P)), counts)
    tri = np.fromiter((j for x in lists for j in x), dtype=np.intp, count=counts.sum())
    d = point_triangle_distances(P[owner], corners[tri])
    best = upper.copy()
    np.minimum.at(best, owner, d)
    return best


def point_to_face(points, mesh):
    return float(np.mean(nearest_face_distances(points, mesh)))


def triangle_stats(mesh):
    """Per-triangle ``(G, min_angle_degrees)`` arrays."""
    X = mesh.corners()
    if len(X) == 0:
        raise DataError("empty-mesh", "mesh has no triangles")
    e = [X[:, 1] - X[:, 0], X[:, 2] - X[:, 1], X[:, 0] - X[:, 2]]
    lengths = np.stack([np.linalg.norm(v, axis=1) for v in e], axis=1)
    cross = np.linalg.norm(np.cross(e[0], -e[2]), axis=1)
    area = 0.5 * cross
    if np.any(area <= 0.0):
        raise DataError("degenerate-triangle", f"{int((area <= 0).sum())} triangle(s) with zero area")
    half_perimeter = 0.5 * lengths.sum(axis=1)
    G = 2.0 * np.sqrt(3.0) * area / (half_perimeter * lengths.max(axis=1))
    angles = np.stack([
        np.arctan2(cross, np.einsum("ij,ij->i", e[0], -e[2])),
        np.arctan2(cross, np.einsum("ij,ij->i", e[1], -e[0])),
        np.arctan2(cross, np.einsum("ij,ij->i", e[2], -e[1])),
    ], axis=1)
    return G, np.degrees(angles.min(axis=1))


def triangle_quality(mesh):
    """``(mean G, mean minimum angle in degrees, % of triangles under 30 degrees)``."""
    G, theta = triangle_stats(mesh)
    return float(G.mean()), float(theta.mean()), float(100.0 * np.mean(theta < 30.0))


# display scale of each column, as in the usual results table
TABLE_COLUMNS = (
    ("d_c", "D_c (e-3)", 1e-3),
    ("d_h", "D_h (e-2)", 1e-2),
    ("p2f", "p2f (e-4)", 1e-4),
    ("g_mean", "G", 1.0),
    ("theta_avg_degrees", "theta_avg", 1.0),
    ("pct_below_30", "%<30deg", 1.0),
)


@dataclass
class MetricsReport:
    d_c: float
    d_h: float
    p2f: float = None
    g_mean: float = None
    theta_avg_degrees: float = None
    pct_below_30: float = None

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    def to_table(self, label="candidate"):
        heads = ["method"] + [h for _, h, _ in TABLE_COLUMNS]
        cells = [label]
        for key, _, scale in TABLE_COLUMNS:
            v = getattr(self, key)
            cells.append("-" if v is None else f"{v / scale:.4g}")
        widths = [max(len(h), len(c)) for h, c in zip(heads, cells)]
        line = lambda row: " | ".join(s.rjust(w) for s, w in zip(row, widths))
        return "\n".join([line(heads), "-+-".join("-" * w for w in widths), line(cells)])


def evaluate(points, *, gt_mesh=None, gt_points=None, recon_mesh=None, w=10_000, rng=None):
    """Build a :class:`MetricsReport` for a candidate cloud.

    The reference samples ``PD`` come from ``gt_mesh`` (``w`` area-uniform
    samples) or are ``gt_points`` verbatim. The candidate samples ``QD`` come
    from ``recon_mesh`` when given, else are the candidate ``points``.
    ``p2f`` needs ``gt_mesh``; the triangle columns need ``recon_mesh``.
    """
    rng = make_rng(rng)
    Q = check_points(points)
    if (gt_mesh is None) == (gt_points is None):
        raise DataError("invalid-reference", "give exactly one of gt_mesh or gt_points")
    PD = sample_mesh_surface(gt_mesh, w, rng).points if gt_mesh is not None else check_points(gt_points)
    QD = sample_mesh_surface(recon_mesh, w, rng).points if recon_mesh is not None else Q
    report = MetricsReport(chamfer(PD, QD), hausdorff(PD, QD))
    if gt_mesh is not None:
        report.p2f = point_to_face(Q, gt_mesh)
    if recon_mesh is not None:
        report.g_mean, report.theta_avg_degrees, report.pct_below_30 = triangle_quality(recon_mesh)
    return report
