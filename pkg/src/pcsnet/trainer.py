"""Optimization loops for :class:`~pcsnet.network.PcsNet` and
:class:`~pcsnet.network.SaliencyNet`, with the temperature schedule, Adam,
resumable checkpoints and CSV logs."""

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import autodiff as ad
from ._errors import DataError, NumericalError
from .autodiff import Tensor
from .losses import LossWeights, loss_components
from .network import PcsNet, SaliencyNet, load_checkpoint, save_checkpoint

logger = logging.getLogger(__name__)

PAPER_EPOCHS = 2000
LOG_COLUMNS = ("epoch", "L_r", "L_sp_or_s", "L_rep", "L", "t")


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``anneal_begin``/``anneal_end`` default to 60% and 80% of ``epochs``
    (1200 and 1600 of 2000).
    """

    epochs: int = 200
    t_start: float = 1.0
    t_end: float = 0.1
    anneal_begin: float = None
    anneal_end: float = None
    lr: float = 1e-3
    seed: int = 0
    loss_mode: str = "spread"
    alpha: float = 0.01
    beta: float = 0.0012
    network: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.anneal_begin is None:
            self.anneal_begin = 1200 / PAPER_EPOCHS * self.epochs
        if self.anneal_end is None:
            self.anneal_end = 1600 / PAPER_EPOCHS * self.epochs
        if self.epochs < 0:
            raise DataError("invalid-config", "epochs must be >= 0")
        if self.epochs and not (self.anneal_begin < self.anneal_end <= self.epochs):
            raise DataError("invalid-config", "need anneal_begin < anneal_end <= epochs")
        if not (self.t_start >= self.t_end > 0):
            raise DataError("invalid-config", "need t_start >= t_end > 0")
        if not self.lr > 0:
            raise DataError("invalid-config", "lr must be > 0")
        self.weights  # validates alpha, beta, mode

    @property
    def weights(self):
        return LossWeights(self.alpha, self.beta, self.loss_mode)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError("invalid-config", f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)

    def digest(self):
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def temperature_at(epoch, cfg):
    """Constant ``t_start``, then a linear ramp to ``t_end``, then ``t_end``."""
    if epoch < cfg.anneal_begin:
        return cfg.t_start
    if epoch < cfg.anneal_end:
        frac = (epoch - cfg.anneal_begin) / (cfg.anneal_end - cfg.anneal_begin)
        return cfg.t_start + (cfg.t_end - cfg.t_start) * frac
    return cfg.t_end


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            self.v[k] = b2 * self.v[k] + (1.0 - b2) * g * g
            p.data = p.data - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def state(self):
        return {"step": self.step_count,
                "m": {k: a.ravel().tolist() for k, a in self.m.items()},
                "v": {k: a.ravel().tolist() for k, a in self.v.items()}}

    def load_state(self, state):
        self.step_count = int(state["step"])
        for k, p in self.params.items():
            self.m[k] = np.array(state["m"][k], dtype=np.float64).reshape(p.shape)
            self.v[k] = np.array(state["v"][k], dtype=np.float64).reshape(p.shape)


def _streams(seed):
    init, order = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init), np.random.default_rng(order)


def _patch_arrays(patch):
    if isinstance(patch, np.ndarray):
        return patch, patch, None
    target = patch.target_points if patch.target_points is not None else patch.input_points
    return patch.input_points, target, patch.input_saliency


def _save(path, net, cfg, epoch, order_rng, opt, log):
    save_checkpoint(path, net, epoch=epoch, config_hash=cfg.digest(), train_config=cfg.to_dict(),
                    rng_state=order_rng.bit_generator.state, optimizer=opt.state(), log=log)


def _restore(resume, cfg, net, opt, order_rng):
    loaded, doc = resume if isinstance(resume, tuple) else load_checkpoint(resume)
    if doc.get("config_hash") != cfg.digest():
        raise DataError("config-mismatch", "checkpoint was produced with a different config")
    net.load_state_dict(loaded.state_dict())
    opt.load_state(doc["optimizer"])
    order_rng.bit_generator.state = doc["rng_state"]
    return int(doc["epoch"]), [dict(r) for r in doc["log"]]


def _run(net, items, cfg, step_fn, *, resume=None, checkpoint_path=None, checkpoint_every=None,
         stop_after=None):
    _, order_rng = _streams(cfg.seed)
    opt = Adam(net.params, lr=cfg.lr)
    start, log = 0, []
    if resume is not None:
        start, log = _restore(resume, cfg, net, opt, order_rng)
    last = cfg.epochs if stop_after is None else min(cfg.epochs, stop_after)
    for epoch in range(start, last):
        t = temperature_at(epoch, cfg)
        sums = None
        for j in order_rng.permutation(len(items)):
            opt.zero_grad()
            values = step_fn(items[j], t)
            if not np.all(np.isfinite(values)):
                raise NumericalError("non-finite", f"loss {values} at epoch {epoch}, patch {j}")
            opt.step()
            sums = values if sums is None else sums + values
        log.append(_log_row(epoch, sums / len(items), t))
        if checkpoint_path and checkpoint_every and (epoch + 1) % checkpoint_every == 0:
            _save(checkpoint_path, net, cfg, epoch + 1, order_rng, opt, log)
    if checkpoint_path:
        _save(checkpoint_path, net, cfg, last, order_rng, opt, log)
    opt.zero_grad()
    return net, log


def _log_row(epoch, means, t):
    if len(means) == 1:
        return {"epoch": epoch, "L": float(means[0]), "t": t}
    total, lr, cov, rep = (float(v) for v in means)
    return {"epoch": epoch, "L_r": lr, "L_sp_or_s": cov, "L_rep": rep, "L": total, "t": t}


def train_pcs(patches, cfg=None, net=None, **kwargs):
    """Train a :class:`PcsNet` with one Adam step per patch per epoch.

    ``patches`` are :class:`~pcsnet.patching.Patch` objects (or bare
    ``(n, 3)`` arrays). When a patch has ``target_points`` the losses are
    measured against them instead of the network input. Returns
    ``(net, log)`` with one dict per epoch (mean loss components and ``t``).

    Keyword arguments ``resume``, ``checkpoint_path``, ``checkpoint_every``
    and ``stop_after`` control checkpointing.
    """
    cfg = cfg or TrainConfig()
    if not patches:
        raise DataError("no-patches", "training needs at least one patch")
    weights = cfg.weights
    if weights.mode == "saliency" and any(_patch_arrays(p)[2] is None for p in patches):
        raise DataError("missing-saliency", "saliency loss mode needs patches with saliency")
    if net is None:
        init_rng, _ = _streams(cfg.seed)
        net = PcsNet(**cfg.network, rng=init_rng)

    def step(patch, t):
        P, target, s_hat = _patch_arrays(patch)
        Q, _, _ = net.forward(P, t)
        total, lr, cov, rep = loss_components(Q, target, s_hat, weights)
        total.backward()
        return np.array([total.item(), lr.item(), cov.item(), rep.item()])

    return _run(net, list(patches), cfg, step, **kwargs)


def train_saliency_net(clouds, targets, cfg=None, net=None, **kwargs):
    """Fit a :class:`SaliencyNet` to per-point saliency by mean squared error.

    ``clouds`` is a list of ``(n, 3)`` arrays and ``targets`` the matching
    smoothed-saliency vectors. Returns ``(net, log)``.
    """
    cfg = cfg or TrainConfig()
    items = [(np.asarray(c, dtype=np.float64), np.asarray(s, dtype=np.float64).reshape(-1, 1))
             for c, s in zip(clouds, targets, strict=True)]
    if not items:
        raise DataError("no-patches", "training needs at least one cloud")
    if net is None:
        init_rng, _ = _streams(cfg.seed)
        net = SaliencyNet(**cfg.network, rng=init_rng)

    def step(item, t):
        X, y = item
        loss = ad.reduce_mean(ad.square(ad.sub(net.forward(X), Tensor(y))))
        loss.backward()
        return np.array([loss.item()])

    return _run(net, items, cfg, step, **kwargs)


def write_log_csv(log, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in log:
            writer.writerow({k: row.get(k, "") for k in LOG_COLUMNS})
