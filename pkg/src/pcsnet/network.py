"""Network blocks: an EdgeConv-style feature extractor, the sampling-matrix
simplifier with double-scale offset refinement, and the saliency regressor.

Parameters live in plain ``{name: Tensor}`` dicts so they can be handed to
the optimizer and written to checkpoints without any module machinery.
"""

import json
from pathlib import Path

import numpy as np

from . import autodiff as ad
from ._errors import DataError
from .autodiff import Tensor
from .geometry import KnnIndex, sq_dist
from .validation import make_rng

CHECKPOINT_FORMAT = "pcsnet-checkpoint"
CHECKPOINT_VERSION = 1


def _linear(params, name, fan_in, fan_out, rng, gain=np.sqrt(2.0), bias=True):
    W = rng.normal(0.0, gain / np.sqrt(fan_in), size=(fan_in, fan_out))
    params[f"{name}.W"] = Tensor(W, requires_grad=True)
    if bias:
        params[f"{name}.b"] = Tensor(np.zeros((1, fan_out)), requires_grad=True)


def _apply(params, name, x, slope=None):
    return ad.linear(x, params[f"{name}.W"], params.get(f"{name}.b"), slope)


def _as_tensor(points):
    return points if isinstance(points, Tensor) else Tensor(np.asarray(points, dtype=np.float64))


_BRUTE_KNN = 128


def knn_groups(coords, g):
    """``(n, g)`` coordinate-space neighbor table, each point's own row first
    unless duplicates precede it. Ties go to the lower index."""
    n = len(coords)
    if n > _BRUTE_KNN:
        return KnnIndex(coords).query(coords, g)[0]
    # small patches: a full scan is cheaper than building a tree
    d2 = sq_dist(coords[:, None, :], coords[None, :, :])
    return np.argsort(d2, axis=1, kind="stable")[:, :g]


class FeatureExtractor:
    """Per-point features of width ``k`` from an ``(n, 3)`` point tensor.

    A lifting layer is followed by ``blocks`` edge-convolution blocks. Each
    block groups the ``g_knn`` nearest neighbors in coordinate space, runs a
    shared layer over ``[h_j - h_i, h_i]``, max-pools over the group,
    concatenates the pooled features with the block input and projects back
    to width ``k``.
    """

    def __init__(self, k=32, g_knn=8, blocks=2, slope=0.2, *, rng=None, prefix="f", params=None):
        self.k, self.g_knn, self.blocks, self.slope = k, g_knn, blocks, slope
        self.prefix = prefix
        rng = make_rng(rng)
        # an owning network passes its own dict so both see the same tensors
        self.params = {} if params is None else params
        _linear(self.params, f"{prefix}.lift", 3, k, rng)
        for b in range(blocks):
            _linear(self.params, f"{prefix}.edge{b}", 2 * k, k, rng)
            _linear(self.params, f"{prefix}.merge{b}", 2 * k, k, rng)

    def config(self):
        return {"k": self.k, "g_knn": self.g_knn, "blocks": self.blocks, "slope": self.slope}

    def __call__(self, points, neighbors=None):
        """``neighbors`` may pass a precomputed ``knn_groups`` table for ``points``."""
        x = _as_tensor(points)
        n = x.shape[0]
        if n < self.g_knn:
            raise DataError("patch-too-small", f"{n} points < group size {self.g_knn}")
        p, g = self.params, self.g_knn
        nbrs = (knn_groups(x.data, g) if neighbors is None else neighbors).reshape(-1)
        h = _apply(p, f"{self.prefix}.lift", x, self.slope)
        for b in range(self.blocks):
            e = _apply(p, f"{self.prefix}.edge{b}", ad.edge_features(h, nbrs, g), self.slope)
            pooled = ad.group_max(e, g)
            h = _apply(p, f"{self.prefix}.merge{b}", ad.concat_cols([h, pooled]), self.slope)
        return h


def extract_features(points, extractor):
    return extractor(points)


class _Net:
    kind = None

    def parameters(self):
        return dict(self.params)

    def state_dict(self):
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state_dict(self, state):
        missing = set(self.params) ^ set(state)
        if missing:
            raise DataError("checkpoint-mismatch", f"parameter names differ: {sorted(missing)[:5]}")
        for name, arr in state.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.shape != self.params[name].shape:
                raise DataError("checkpoint-mismatch", f"{name}: {arr.shape} vs {self.params[name].shape}")
            self.params[name].data = arr.copy()
        return self


def _frame(P, normalize):
    """Patch-local frame ``(center, scale)`` used to condition network inputs."""
    if not normalize:
        return np.zeros((1, 3)), 1.0
    c = P.mean(axis=0, keepdims=True)
    r = float(np.sqrt(((P - c) ** 2).sum(axis=1).max()))
    return c, (r if r > 0 else 1.0)


def _to_frame(x, c, r):
    return ad.scalar_mul(ad.sub(x, Tensor(c)), 1.0 / r)


class PcsNet(_Net):
    """Sampling-matrix simplifier with double-scale resampling.

    ``share_f1`` makes the logit path reuse the resampling extractor instead
    of owning a separate one. With ``normalize_patches`` every patch is fed
    to the extractors centered and scaled to unit radius; offsets are scaled
    back, so outputs stay in the caller's frame.
    """

    kind = "pcs"

    def __init__(self, m=32, k=32, g_knn=8, blocks=2, g_widths=(128, 128, 64),
                 share_f1=False, normalize_patches=True, slope=0.2, *, rng=None):
        rng = make_rng(rng)
        self.m, self.k, self.g_knn, self.blocks = m, k, g_knn, blocks
        self.g_widths = tuple(g_widths)
        self.share_f1, self.normalize_patches, self.slope = share_f1, normalize_patches, slope
        self.params = {}
        self.f = FeatureExtractor(k, g_knn, blocks, slope, rng=rng, prefix="f", params=self.params)
        self.f1 = self.f if share_f1 else FeatureExtractor(k, g_knn, blocks, slope, rng=rng, prefix="f1",
                                                           params=self.params)
        # no bias: the softmax over points ignores a per-channel shift
        _linear(self.params, "proj", k, m, rng, gain=1.0, bias=False)
        widths = (2 * k,) + self.g_widths + (3,)
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            _linear(self.params, f"g{i}", a, b, rng, gain=np.sqrt(2.0) if i < len(widths) - 2 else 0.1)

    def config(self):
        return {"m": self.m, "k": self.k, "g_knn": self.g_knn, "blocks": self.blocks,
                "g_widths": list(self.g_widths), "share_f1": self.share_f1,
                "normalize_patches": self.normalize_patches, "slope": self.slope}

    @property
    def g_layers(self):
        return len(self.g_widths) + 1

    def offsets(self, features):
        h = features
        for i in range(self.g_layers):
            h = _apply(self.params, f"g{i}", h, self.slope if i < self.g_layers - 1 else None)
        return h

    def _prepare(self, patch):
        # frame, framed input and its neighbor table, shared by both extractor passes
        P = _as_tensor(patch)
        c, r = _frame(P.data, self.normalize_patches)
        Pf = _to_frame(P, c, r)
        return P, c, r, Pf, knn_groups(Pf.data, self.g_knn) if P.shape[0] >= self.g_knn else None

    def _simplify(self, prep, t):
        P, _, _, Pf, nbrs = prep
        n = P.shape[0]
        if n < self.m:
            raise DataError("patch-too-small", f"patch has {n} points, needs at least m={self.m}")
        logits = _apply(self.params, "proj", self.f1(Pf, nbrs))
        S = ad.t_softmax_rows(ad.transpose(logits), t)
        return ad.matmul(S, P), S

    def _offset_features(self, prep, R, S):
        _, c, r, Pf, nbrs = prep
        F2 = self.f(Pf, nbrs)
        F3 = self.f(_to_frame(R, c, r))
        return ad.concat_cols([ad.matmul(S, F2), F3])

    def _resample(self, prep, R, S):
        return ad.add(R, ad.scalar_mul(self.offsets(self._offset_features(prep, R, S)), prep[2]))

    def simplify(self, patch, t):
        """Return ``(R, S)``: soft-selected points and the ``(m, n)`` sampling matrix."""
        return self._simplify(self._prepare(patch), t)

    def resample(self, patch, R, S):
        """Refine ``R`` with offsets regressed from dense and sparse features."""
        return self._resample(self._prepare(patch), R, S)

    def forward(self, patch, t, *, resample=True):
        """``(Q, R, S)`` for one patch; ``resample=False`` returns ``Q = R``."""
        prep = self._prepare(patch)
        R, S = self._simplify(prep, t)
        Q = self._resample(prep, R, S) if resample else R
        return Q, R, S


class SaliencyNet(_Net):
    """Feature extractor followed by a shared MLP and softplus."""

    kind = "saliency"

    def __init__(self, k=32, g_knn=8, blocks=2, head_widths=(128, 128, 64),
                 normalize_patches=True, slope=0.2, *, rng=None):
        rng = make_rng(rng)
        self.k, self.g_knn, self.blocks = k, g_knn, blocks
        self.head_widths = tuple(head_widths)
        self.normalize_patches, self.slope = normalize_patches, slope
        self.params = {}
        self.f = FeatureExtractor(k, g_knn, blocks, slope, rng=rng, prefix="f", params=self.params)
        widths = (k,) + self.head_widths + (1,)
        for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
            _linear(self.params, f"head{i}", a, b, rng)

    def config(self):
        return {"k": self.k, "g_knn": self.g_knn, "blocks": self.blocks,
                "head_widths": list(self.head_widths),
                "normalize_patches": self.normalize_patches, "slope": self.slope}

    def forward(self, points):
        P = _as_tensor(points)
        c, r = _frame(P.data, self.normalize_patches)
        h = self.f(_to_frame(P, c, r))
        layers = len(self.head_widths) + 1
        for i in range(layers):
            h = _apply(self.params, f"head{i}", h, self.slope if i < layers - 1 else None)
        return ad.softplus(h)


def simplify(patch, net, t):
    return net.simplify(patch, t)


def resample(patch, R, S, net):
    return net.resample(patch, R, S)


def predict_saliency(points, net):
    """Nonnegative saliency for every row of ``points`` as a 1-D array."""
    return net.forward(points).data[:, 0].copy()


_KINDS = {"pcs": PcsNet, "saliency": SaliencyNet}


def save_checkpoint(path, net, **extra):
    """Write ``net`` (plus JSON-serializable ``extra`` fields) to ``path``.

    Layout::

        {"format": "pcsnet-checkpoint", "version": 1, "kind": "pcs"|"saliency",
         "config": {...constructor kwargs...},
         "tensors": {name: {"shape": [rows, cols], "data": [row-major floats]}},
         ...extra}

    Floats are written with ``repr`` precision, so loading is bit-exact.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": net.kind,
        "config": net.config(),
        "tensors": {name: {"shape": list(a.shape), "data": a.ravel().tolist()}
                    for name, a in net.state_dict().items()},
    }
    doc.update(extra)
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path):
    """Return ``(net, doc)`` where ``doc`` is the full decoded checkpoint."""
    try:
        doc = json.loads(Path(path).read_text())
    except (ValueError, UnicodeDecodeError) as exc:
        raise DataError("bad-checkpoint", str(exc)) from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise DataError("bad-checkpoint", "not a pcsnet checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise DataError("bad-checkpoint", f"unsupported version {doc.get('version')}")
    cls = _KINDS.get(doc.get("kind"))
    if cls is None:
        raise DataError("bad-checkpoint", f"unknown kind {doc.get('kind')!r}")
    net = cls(**doc["config"])
    state = {name: np.array(t["data"], dtype=np.float64).reshape(t["shape"])
             for name, t in doc["tensors"].items()}
    return net.load_state_dict(state), doc
