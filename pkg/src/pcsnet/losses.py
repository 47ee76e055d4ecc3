"""Training losses over an output patch ``Q`` (m, 3) and its input ``P`` (n, 3).

All losses are built from autodiff primitives and return ``(1, 1)`` tensors
so they can be back-propagated into ``Q`` and through it into parameters.
Plain arrays are accepted and treated as constants.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from ._errors import DataError
from .autodiff import Tensor


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.01
    beta: float = 0.0012
    mode: str = "spread"

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise DataError("invalid-weights", "alpha and beta must be > 0")
        if self.mode not in ("spread", "saliency"):
            raise DataError("invalid-mode", f"loss mode must be 'spread' or 'saliency', got {self.mode!r}")


def _t(x):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def loss_reconstruction(Q, P):
    """Mean over outputs of the squared distance to the nearest input."""
    D = ad.pairwise_sqdist(_t(Q), _t(P))
    return ad.reduce_mean(ad.reduce_min(D, axis=1))


def loss_spread(Q, P):
    """Mean over inputs of the squared distance to the nearest output."""
    D = ad.pairwise_sqdist(_t(P), _t(Q))
    return ad.reduce_mean(ad.reduce_min(D, axis=1))


def loss_repulsion(Q):
    """Negated mean squared distance from each output to its nearest other output."""
    Q = _t(Q)
    m = Q.shape[0]
    if m < 2:
        raise DataError("too-few-points", "repulsion needs at least 2 points")
    D = ad.pairwise_sqdist(Q, Q)
    nearest = ad.reduce_min(D, axis=1, mask=np.eye(m, dtype=bool))
    return ad.scalar_mul(ad.reduce_mean(nearest), -1.0)


def loss_saliency(Q, P, s_hat):
    """Spread loss with every input point weighted by its smoothed saliency."""
    P = _t(P)
    s = np.asarray(s_hat, dtype=np.float64).reshape(-1, 1)
    if s.shape[0] != P.shape[0]:
        raise DataError("length-mismatch", f"{s.shape[0]} saliency values for {P.shape[0]} points")
    D = ad.pairwise_sqdist(P, _t(Q))
    return ad.reduce_mean(ad.mul(ad.reduce_min(D, axis=1), Tensor(s)))


def loss_components(Q, P, s_hat=None, weights=LossWeights()):
    """``(total, recon, coverage, repulsion)``; coverage is spread or saliency
    depending on ``weights.mode``."""
    lr = loss_reconstruction(Q, P)
    if weights.mode == "saliency":
        if s_hat is None:
            raise DataError("missing-saliency", "saliency mode needs s_hat")
        cov = loss_saliency(Q, P, s_hat)
    else:
        cov = loss_spread(Q, P)
    rep = loss_repulsion(Q)
    total = ad.add(ad.add(ad.scalar_mul(lr, weights.alpha), cov), ad.scalar_mul(rep, weights.beta))
    return total, lr, cov, rep


def loss_joint(Q, P, s_hat=None, weights=LossWeights()):
    return loss_components(Q, P, s_hat, weights)[0]
