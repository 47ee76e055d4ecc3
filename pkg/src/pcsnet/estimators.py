"""scikit-learn compatible wrappers.

``X`` is always one point cloud of shape ``(n_points, 3)`` (or, for
``fit``, a list of clouds). ``transform`` returns a *different* number of
rows than it receives: it resamples the cloud rather than mapping points
one to one.

    >>> simp = PCSNetSimplifier(target=512, epochs=50).fit(noisy, clean)
    >>> small = simp.transform(noisy)
"""

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._errors import DataError
from .geometry import normalize_to_unit_sphere
from .network import predict_saliency
from .patching import extract_patches, make_partition
from .pipeline import SimplifyConfig, baseline_select, simplify_cloud
from .saliency import compute_saliency
from .trainer import TrainConfig, train_pcs, train_saliency_net
from .validation import check_points, make_rng


def _as_clouds(X):
    if isinstance(X, (list, tuple)):
        return [check_points(x) for x in X]
    return [check_points(X)]


def _as_targets(y, clouds, what):
    if y is None:
        return [None] * len(clouds)
    ys = y if isinstance(y, (list, tuple)) else [y]
    if len(ys) != len(clouds):
        raise DataError("length-mismatch", f"{len(ys)} {what} for {len(clouds)} clouds")
    return ys


class PCSNetSimplifier(TransformerMixin, BaseEstimator):
    """Learned point-cloud simplifier.

    ``fit`` cuts every training cloud into ``num_patches`` Voronoi patches of
    ``patch_size`` points and trains the network on them. An optional ``y``
    supplies clean counterparts of ``X`` (same rows) so the losses are
    measured against noise-free points. ``transform`` simplifies a cloud to
    ``target`` points in the chosen ``mode``.
    """

    def __init__(self, target=512, mode="uniform", num_patches=None, patch_size=256,
                 m=32, k=32, g_knn=8, blocks=2, share_f1=False, epochs=200, lr=1e-3,
                 alpha=0.01, beta=0.0012, loss_mode="spread", saliency_k=20,
                 saliency_h=0.01, t_infer=0.1, random_state=0):
        self.target = target
        self.mode = mode
        self.num_patches = num_patches
        self.patch_size = patch_size
        self.m = m
        self.k = k
        self.g_knn = g_knn
        self.blocks = blocks
        self.share_f1 = share_f1
        self.epochs = epochs
        self.lr = lr
        self.alpha = alpha
        self.beta = beta
        self.loss_mode = loss_mode
        self.saliency_k = saliency_k
        self.saliency_h = saliency_h
        self.t_infer = t_infer
        self.random_state = random_state

    def _num_patches(self):
        return self.num_patches or math.ceil(self.target / self.m)

    def _train_config(self):
        return TrainConfig(
            epochs=self.epochs, lr=self.lr, seed=self.random_state, loss_mode=self.loss_mode,
            alpha=self.alpha, beta=self.beta,
            network={"m": self.m, "k": self.k, "g_knn": self.g_knn, "blocks": self.blocks,
                     "share_f1": self.share_f1},
        )

    def make_patches(self, X, y=None):
        """Training patches for ``X`` (normalized per cloud), as used by ``fit``."""
        clouds = _as_clouds(X)
        targets = _as_targets(y, clouds, "target clouds")
        rng = make_rng(self.random_state)
        patches = []
        for P, T in zip(clouds, targets):
            Pn, center, radius = normalize_to_unit_sphere(P)
            Tn = None if T is None else (check_points(T) - center) / radius
            if Tn is not None and Tn.shape != Pn.shape:
                raise DataError("length-mismatch", "y must have the same shape as X")
            sal = None
            if self.loss_mode == "saliency" or self.mode == "adaptive":
                sal = compute_saliency(Tn if Tn is not None else Pn, self.saliency_k, self.saliency_h)
            part_mode = "adaptive" if self.mode == "adaptive" else "uniform"
            part = make_partition(Pn, min(self._num_patches(), len(Pn)), part_mode, rng, saliency=sal)
            patches += extract_patches(Pn, part, self.patch_size, rng, saliency=sal, targets=Tn)
        return patches

    def fit(self, X, y=None):
        cfg = self._train_config()
        self.train_config_ = cfg
        self.net_, self.log_ = train_pcs(self.make_patches(X, y), cfg)
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "net_")
        cfg = SimplifyConfig(num_patches=self.num_patches, patch_size=self.patch_size,
                             t=self.t_infer, saliency_k=self.saliency_k, saliency_h=self.saliency_h)
        return simplify_cloud(X, self.net_, self.mode, self.target, cfg, self.random_state)


class SaliencyRegressor(RegressorMixin, BaseEstimator):
    """Predicts per-point smoothed saliency from coordinates alone.

    ``y`` defaults to the geometric smoothed saliency of ``X``. Both
    training and prediction run patch by patch in unit-sphere coordinates;
    predictions are returned in the input's units.
    """

    def __init__(self, num_patches=16, patch_size=256, k=32, g_knn=8, blocks=2,
                 epochs=100, lr=1e-3, saliency_k=20, saliency_h=0.01, random_state=0):
        self.num_patches = num_patches
        self.patch_size = patch_size
        self.k = k
        self.g_knn = g_knn
        self.blocks = blocks
        self.epochs = epochs
        self.lr = lr
        self.saliency_k = saliency_k
        self.saliency_h = saliency_h
        self.random_state = random_state

    def fit(self, X, y=None):
        clouds = _as_clouds(X)
        targets = _as_targets(y, clouds, "saliency vectors")
        rng = make_rng(self.random_state)
        items, labels = [], []
        for P, s in zip(clouds, targets):
            Pn, _, radius = normalize_to_unit_sphere(P)
            s = (compute_saliency(Pn, self.saliency_k, self.saliency_h) if s is None
                 else np.asarray(s, dtype=np.float64) / radius)
            part = make_partition(Pn, min(self.num_patches, len(Pn)), "uniform", rng)
            for patch in extract_patches(Pn, part, self.patch_size, rng, saliency=s):
                items.append(patch.input_points)
                labels.append(patch.input_saliency)
        cfg = TrainConfig(epochs=self.epochs, lr=self.lr, seed=self.random_state,
                          network={"k": self.k, "g_knn": self.g_knn, "blocks": self.blocks})
        self.net_, self.log_ = train_saliency_net(items, labels, cfg)
        self.n_features_in_ = 3
        return self

    def predict(self, X):
        check_is_fitted(self, "net_")
        P = check_points(X)
        Pn, _, radius = normalize_to_unit_sphere(P)
        part = make_partition(Pn, min(self.num_patches, len(Pn)), "uniform", make_rng(self.random_state))
        out = np.zeros(len(P))
        for cell in part.cells():
            if len(cell) >= self.net_.g_knn:
                out[cell] = predict_saliency(Pn[cell], self.net_)
        return out * radius


class BaselineSampler(TransformerMixin, BaseEstimator):
    """Non-learned simplification: farthest-point or uniform random subset."""

    def __init__(self, target=512, method="fps", random_state=0):
        self.target = target
        self.method = method
        self.random_state = random_state

    def fit(self, X, y=None):
        check_points(X)
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        return baseline_select(X, self.target, self.method, self.random_state)
