"""End-to-end simplification of a whole cloud, plus the FPS/random
baselines and synthetic noise used for robustness comparisons."""

import math
from dataclasses import dataclass

import numpy as np

from ._errors import DataError
from .geometry import denormalize, farthest_point_sampling, normalize_to_unit_sphere, sq_dist
from .network import predict_saliency
from .patching import extract_patch_input, make_partition, merge_outputs
from .saliency import compute_saliency
from .validation import check_count, check_points, check_saliency, make_rng

SIMPLIFY_MODES = ("uniform", "adaptive", "baseline")


@dataclass
class SimplifyConfig:
    """Inference settings.

    ``num_patches`` defaults to ``ceil(target / m)``. ``t`` is the T-softmax
    temperature used at inference (the end of the training schedule).
    """

    num_patches: int = None
    patch_size: int = 1024
    t: float = 0.1
    saliency_k: int = 20
    saliency_h: float = 0.01


def add_gaussian_noise(points, amplitude_pct, rng=None):
    """Isotropic Gaussian noise with sigma = ``amplitude_pct``% of the
    bounding-sphere radius (about the centroid)."""
    P = check_points(points)
    if amplitude_pct < 0:
        raise DataError("invalid-amplitude", "amplitude_pct must be >= 0")
    if amplitude_pct == 0:
        return P.copy()
    radius = float(np.sqrt(sq_dist(P, P.mean(axis=0)).max()))
    sigma = amplitude_pct / 100.0 * radius
    return P + make_rng(rng).normal(0.0, sigma, size=P.shape)


def baseline_select(points, target, method="fps", rng=None):
    """Pick ``target`` input points by farthest-point or uniform random sampling."""
    P = check_points(points)
    target = check_count(target, "target")
    if target > len(P):
        raise DataError("count-too-large", f"target={target} exceeds cloud size {len(P)}")
    rng = make_rng(rng)
    if method == "fps":
        idx = farthest_point_sampling(P, target, rng)
    elif method == "random":
        idx = rng.choice(len(P), size=target, replace=False)
    else:
        raise DataError("invalid-method", f"method must be 'fps' or 'random', got {method!r}")
    return P[idx]


def _predicted_saliency(Pn, saliency_net, num_patches, rng):
    """Run the saliency network cell by cell over a uniform partition."""
    part = make_partition(Pn, num_patches, "uniform", rng)
    out = np.empty(len(Pn))
    for cell in part.cells():
        if len(cell) < saliency_net.g_knn:
            out[cell] = 0.0
            continue
        out[cell] = predict_saliency(Pn[cell], saliency_net)
    return out


def simplify_cloud(points, net, mode="uniform", target=512, cfg=None, rng=None, *,
                   saliency=None, saliency_net=None):
    """Simplify a dense cloud to exactly ``target`` points.

    The cloud is normalized to the unit sphere, partitioned (farthest-point
    seeds, or saliency-weighted seeds in ``adaptive`` mode), each cell is
    run through ``net``, outputs are merged and trimmed, and the result is
    mapped back to the input frame. ``baseline`` mode skips the offset
    refinement. Adaptive saliency comes from ``saliency`` (input units),
    else ``saliency_net``, else is computed geometrically.
    """
    if saliency is None:
        saliency = getattr(points, "saliency", None)
    P = check_points(points)
    if mode not in SIMPLIFY_MODES:
        raise DataError("invalid-mode", f"mode must be one of {SIMPLIFY_MODES}, got {mode!r}")
    target = check_count(target, "target")
    if target > len(P):
        raise DataError("count-too-large", f"target={target} exceeds cloud size {len(P)}")
    cfg = cfg or SimplifyConfig()
    rng = make_rng(rng)
    Pn, center, radius = normalize_to_unit_sphere(P)

    per_patch = net.m
    num_patches = cfg.num_patches or math.ceil(target / per_patch)
    num_patches = min(num_patches, len(P))

    sal = None
    part_mode = "adaptive" if mode == "adaptive" else "uniform"
    if mode == "adaptive":
        if saliency is not None:
            sal = check_saliency(saliency, len(P)) / radius
        elif saliency_net is not None:
            sal = _predicted_saliency(Pn, saliency_net, num_patches, rng)
        else:
            sal = compute_saliency(Pn, cfg.saliency_k, cfg.saliency_h)
        if not np.any(sal > 0):
            part_mode = "uniform"
        else:
            # over-request so the +-10% seed band still covers the target
            num_patches = min(len(P), math.ceil(num_patches / 0.9))
    part = make_partition(Pn, num_patches, part_mode, rng, saliency=sal)

    patch_size = max(cfg.patch_size, per_patch)
    outputs = []
    for seed_id in range(len(part)):
        patch = extract_patch_input(Pn, part, seed_id, patch_size, rng)
        Q, _, _ = net.forward(patch.input_points, cfg.t, resample=mode != "baseline")
        outputs.append(Q.data)
    # top up from the largest cells if seeding left too little capacity
    sizes = np.bincount(part.assignment, minlength=len(part))
    by_size = np.argsort(-sizes, kind="stable")
    i = 0
    while sum(len(q) for q in outputs) < target:
        patch = extract_patch_input(Pn, part, int(by_size[i % len(by_size)]), patch_size, rng)
        Q, _, _ = net.forward(patch.input_points, cfg.t, resample=mode != "baseline")
        outputs.append(Q.data)
        i += 1
    merged = merge_outputs(outputs, target, rng)
    return denormalize(merged, center, radius)
