"""Split a dense cloud into Voronoi patches around seeds and glue per-patch
outputs back together."""

from dataclasses import dataclass

import numpy as np

from ._errors import DataError
from .geometry import KnnIndex, farthest_point_sampling, poisson_disk_seeds
from .validation import check_count, check_points, check_saliency, make_rng

MODES = ("uniform", "adaptive")


@dataclass
class Partition:
    """Nearest-seed assignment of every parent point.

    ``assignment[i]`` is the position in ``seeds`` of the seed owning point
    ``i``; ``seeds`` holds parent indices.
    """

    assignment: np.ndarray
    seeds: np.ndarray
    mode: str

    def __len__(self):
        return len(self.seeds)

    def cell(self, seed_id):
        return np.flatnonzero(self.assignment == seed_id)

    def cells(self):
        order = np.argsort(self.assignment, kind="stable")
        bounds = np.cumsum(np.bincount(self.assignment, minlength=len(self.seeds)))
        return np.split(order, bounds[:-1])


@dataclass
class Patch:
    """A fixed-size network input drawn from one cell.

    ``target_points`` optionally carries the clean counterparts of
    ``input_points`` (same parent indices) for supervised denoising.
    """

    parent_indices: np.ndarray
    seed_index: int
    input_points: np.ndarray
    input_saliency: np.ndarray = None
    target_points: np.ndarray = None
    with_replacement: bool = False

    def __len__(self):
        return len(self.parent_indices)


def assign_to_seeds(points, seeds):
    """Nearest seed per point (ties go to the lower seed position)."""
    P = check_points(points)
    idx, _ = KnnIndex(P[seeds]).query(P, 1)
    return idx[:, 0]


def make_partition(points, num_patches, mode="uniform", rng=None, *, saliency=None):
    """Seed and cut a cloud into Voronoi cells.

    ``uniform`` seeds with farthest-point sampling; ``adaptive`` seeds with
    saliency-weighted Poisson-disk sampling (``saliency`` defaults to the
    cloud's own). Seeds whose cell ends up empty are dropped.
    """
    if saliency is None:
        saliency = getattr(points, "saliency", None)
    P = check_points(points)
    num_patches = check_count(num_patches, "num_patches")
    if num_patches > len(P):
        raise DataError("count-too-large", f"num_patches={num_patches} exceeds cloud size {len(P)}")
    rng = make_rng(rng)
    if mode == "uniform":
        seeds = farthest_point_sampling(P, num_patches, rng)
    elif mode == "adaptive":
        if saliency is None:
            raise DataError("missing-saliency", "adaptive patching needs per-point saliency")
        w = check_saliency(saliency, len(P))
        seeds = poisson_disk_seeds(P, num_patches, w, rng)
    else:
        raise DataError("invalid-mode", f"mode must be one of {MODES}, got {mode!r}")
    assignment = assign_to_seeds(P, seeds)
    counts = np.bincount(assignment, minlength=len(seeds))
    if np.any(counts == 0):
        keep = counts > 0
        relabel = np.cumsum(keep) - 1
        seeds, assignment = seeds[keep], relabel[assignment]
    return Partition(assignment.astype(np.intp), np.asarray(seeds, dtype=np.intp), mode)


def extract_patch_input(points, partition, seed_id, n=1024, rng=None, *, saliency=None, targets=None):
    """Draw ``n`` points from one cell.

    Cells with at least ``n`` points are subsampled without replacement.
    Smaller cells contribute every point once and are topped up with random
    repeats (``with_replacement=True``), then shuffled.
    """
    if saliency is None:
        saliency = getattr(points, "saliency", None)
    P = check_points(points)
    n = check_count(n, "n")
    rng = make_rng(rng)
    cell = partition.cell(seed_id)
    if len(cell) == 0:
        raise DataError("empty-cell", f"cell {seed_id} has no points")
    if len(cell) >= n:
        chosen, repeated = rng.choice(cell, size=n, replace=False), False
    else:
        extra = rng.choice(cell, size=n - len(cell), replace=True)
        chosen, repeated = rng.permutation(np.concatenate([cell, extra])), True
    return Patch(
        parent_indices=chosen,
        seed_index=int(partition.seeds[seed_id]),
        input_points=P[chosen],
        input_saliency=None if saliency is None else np.asarray(saliency, dtype=np.float64)[chosen],
        target_points=None if targets is None else check_points(targets)[chosen],
        with_replacement=repeated,
    )


def extract_patches(points, partition, n=1024, rng=None, *, saliency=None, targets=None):
    rng = make_rng(rng)
    return [extract_patch_input(points, partition, i, n, rng, saliency=saliency, targets=targets)
            for i in range(len(partition))]


def merge_outputs(patch_outputs, target, rng=None):
    """Concatenate per-patch outputs; farthest-point trim to ``target`` if larger."""
    parts = [check_points(q) for q in patch_outputs]
    if not parts:
        raise DataError("no-patches", "merge needs at least one patch output")
    target = check_count(target, "target")
    Q = np.concatenate(parts, axis=0)
    if len(Q) <= target:
        return Q
    keep = np.sort(farthest_point_sampling(Q, target, make_rng(rng)))
    return Q[keep]
