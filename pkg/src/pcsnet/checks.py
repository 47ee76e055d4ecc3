"""Finite-difference gradient suites shared by the CLI ``gradcheck``
command and the test-suite."""

import numpy as np

from . import autodiff as ad
from .autodiff import grad_check
from .losses import LossWeights, loss_joint, loss_reconstruction, loss_repulsion, loss_saliency, loss_spread
from .network import PcsNet


def _weighted(x, w):
    # contract against fixed random weights so every output entry matters
    return ad.reduce_sum(ad.mul(x, ad.Tensor(w)))


def primitive_cases(rng, shape=(3, 4)):
    """``(name, f, inputs)`` triples, one per differentiable primitive."""
    r, c = shape
    A = rng.normal(size=(r, c))
    B = rng.normal(size=(r, c))
    M = rng.normal(size=(c, 2))
    pos = rng.uniform(0.5, 2.0, size=(r, c))
    W = lambda *s: rng.normal(size=s)
    wrc, wr2, wcr = W(r, c), W(r, 2), W(c, r)
    w2c, wr1, w1c = W(r, 2 * c), W(r, 1), W(1, c)
    idx = rng.integers(0, r, size=r + 2)
    wi = W(len(idx), c)
    G = rng.normal(size=(2 * r, c))
    wgm, wgm2 = W(r, c), W(2 * r, c)
    pts_a, pts_b = rng.normal(size=(r, 3)), rng.normal(size=(c, 3))
    wd = W(r, c)
    nbrs = rng.integers(0, r, size=2 * r)
    we = W(2 * r, 2 * c)
    return [
        ("matmul", lambda a, m: _weighted(ad.matmul(a, m), wr2), [A, M]),
        ("add", lambda a, b: _weighted(ad.add(a, b), wrc), [A, B]),
        ("add_bias", lambda a, b: _weighted(ad.add(a, b), wrc), [A, B[:1]]),
        ("sub", lambda a, b: _weighted(ad.sub(a, b), wrc), [A, B]),
        ("mul", lambda a, b: _weighted(ad.mul(a, b), wrc), [A, B]),
        ("scalar_mul", lambda a: _weighted(ad.scalar_mul(a, -1.7), wrc), [A]),
        ("transpose", lambda a: _weighted(ad.transpose(a), wcr), [A]),
        ("concat_cols", lambda a, b: _weighted(ad.concat_cols([a, b]), w2c), [A, B]),
        ("relu", lambda a: _weighted(ad.relu(a), wrc), [A]),
        ("leaky_relu", lambda a: _weighted(ad.leaky_relu(a, 0.2), wrc), [A]),
        ("softplus", lambda a: _weighted(ad.softplus(a), wrc), [A]),
        ("reduce_sum", lambda a: _weighted(ad.reduce_sum(a, axis=1), wr1), [A]),
        ("reduce_mean", lambda a: _weighted(ad.reduce_mean(a, axis=0), w1c), [A]),
        ("reduce_min", lambda a: _weighted(ad.reduce_min(a, axis=1), wr1), [A]),
        ("group_max", lambda g: _weighted(ad.group_max(g, 2), wgm), [G]),
        ("square", lambda a: _weighted(ad.square(a), wrc), [A]),
        ("sqrt", lambda a: _weighted(ad.sqrt(a), wrc), [pos]),
        ("exp", lambda a: _weighted(ad.exp(a), wrc), [A]),
        ("gather_rows", lambda a: _weighted(ad.gather_rows(a, idx), wi), [A]),
        ("repeat_rows", lambda a: _weighted(ad.repeat_rows(a, 2), wgm2), [A]),
        ("linear", lambda a, m, b: _weighted(ad.linear(a, m, b), wr2), [A, M, M[:1]]),
        ("linear_leaky", lambda a, m, b: _weighted(ad.linear(a, m, b, 0.2), wr2), [A, M, M[:1]]),
        ("edge_features", lambda a: _weighted(ad.edge_features(a, nbrs, 2), we), [A]),
        ("pairwise_sqdist", lambda a, b: _weighted(ad.pairwise_sqdist(a, b), wd), [pts_a, pts_b]),
        ("t_softmax_rows", lambda a: _weighted(ad.t_softmax_rows(a, 0.7), wrc), [A]),
    ]


def loss_cases(rng, m=6, n=10):
    Q = rng.normal(size=(m, 3))
    P = rng.normal(size=(n, 3))
    s = rng.uniform(0.1, 1.0, size=n)
    return [
        ("loss_reconstruction", lambda q: loss_reconstruction(q, P), [Q]),
        ("loss_spread", lambda q: loss_spread(q, P), [Q]),
        ("loss_repulsion", lambda q: loss_repulsion(q), [Q]),
        ("loss_saliency", lambda q: loss_saliency(q, P, s), [Q]),
        ("loss_joint", lambda q: loss_joint(q, P, None, LossWeights()), [Q]),
    ]


def pipeline_case(rng, n=16, m=4, k=8, t=0.5, g_widths=(128, 128, 64), g_knn=4, scale=0.1):
    """Joint loss of a full patch forward pass as a function of every parameter.

    ``scale`` is the patch radius. Training patches come from clouds on the
    unit sphere, so 0.1 is typical; it also keeps the loss small enough that
    central-difference rounding noise stays well under the 1e-8 error floor.
    """
    net = PcsNet(m=m, k=k, g_knn=g_knn, blocks=2, g_widths=g_widths, rng=rng)
    P = scale * rng.normal(size=(n, 3))
    names = list(net.params)
    upstream = [i for i, name in enumerate(names) if not name.startswith("g")]
    cache = {}

    def f(*tensors):
        net.params.update(zip(names, tensors))
        # Most probes nudge an offset-MLP weight, which leaves R and the
        # offset features untouched. Reuse them when no upstream parameter
        # moved; the loss is bitwise the same as a full forward.
        key = b"".join(tensors[i].data.tobytes() for i in upstream)
        if any(x.requires_grad for x in tensors) or cache.get("key") != key:
            prep = net._prepare(P)
            R, S = net._simplify(prep, t)
            feats = net._offset_features(prep, R, S)
            if not any(x.requires_grad for x in tensors):
                cache.update(key=key, R=R, feats=feats, r=prep[2])
            return loss_joint(ad.add(R, ad.scalar_mul(net.offsets(feats), prep[2])), P)
        Q = ad.add(cache["R"], ad.scalar_mul(net.offsets(cache["feats"]), cache["r"]))
        return loss_joint(Q, P)

    return ("pcs_pipeline", f, [net.params[name].data.copy() for name in names])


def run_suite(full=False, tol=1e-4, seed=0):
    """Run every case and return ``[(name, GradCheckReport)]``.

    ``full`` adds the complete patch pipeline (all parameter tensors).
    """
    rng = np.random.default_rng(seed)
    cases = primitive_cases(rng) + loss_cases(rng)
    if full:
        cases.append(pipeline_case(rng))
    return [(name, grad_check(f, inputs, tol=tol)) for name, f, inputs in cases]
