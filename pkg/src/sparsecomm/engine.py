"""Synchronous data-parallel SGD with error-feedback sparsification.

P workers are simulated in one process.  At every iteration each worker
adds its residual to its fresh stochastic gradient, compresses the sum,
and keeps what was dropped as the new residual.  The selections are
averaged in worker-id order and a single heavy-ball update is applied to
the shared parameters.  Momentum lives on the aggregated update, so with
``topk`` and ``k = d`` the trajectory equals plain momentum SGD bit for bit.
"""

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .compressors import CompressorSpec, compress
from .core import SparseSelection, as_dense
from .errors import DimensionError, DivergenceError, DomainError, NumericalError, StructuralError
from .models import MLP, Dataset
from .rng import SHUFFLE, WORKER, make_rng

log = logging.getLogger(__name__)


@dataclass
class WorkerState:
    worker_id: int
    residual: np.ndarray
    seed: int = 0
    step: int = 0

    @classmethod
    def fresh(cls, worker_id, d, seed=0):
        return cls(worker_id, np.zeros(d), seed)

    def rng(self):
        return make_rng(self.seed, WORKER, self.worker_id, self.step)


def ef_local_step(w, g, spec):
    """Compress ``g`` plus the residual; the dropped part becomes the new residual."""
    g = as_dense(g)
    if g.shape != w.residual.shape:
        raise DimensionError(f"gradient has d={g.size}, residual has d={w.residual.size}")
    u = g + w.residual
    sel, _ = compress(spec, u, rng=w.rng())
    residual = u.copy()
    residual[sel.indices] = 0.0
    w.residual = residual
    w.step += 1
    return sel


def aggregate(selections, P):
    if len(selections) != P:
        raise StructuralError(f"expected {P} selections, got {len(selections)}")
    d = selections[0].d
    acc = np.zeros(d)
    for s in selections:
        if s.d != d:
            raise StructuralError(f"selection dimension {s.d} != {d}")
        s.validate()
        acc[s.indices] += s.values
    return acc / P


def sgd_update(x, agg, v, lr, momentum):
    """Heavy-ball step; returns ``(x_new, v_new)``."""
    if not (x.shape == agg.shape == v.shape):
        raise DimensionError("parameter, update and momentum shapes differ")
    v = momentum * v + agg
    return x - lr * v, v


@dataclass
class TrainConfig:
    model: MLP
    data: Dataset
    compressor: CompressorSpec | None = None  # None -> dense SGD
    P: int = 4
    lr: float = 0.05
    momentum: float = 0.9
    epochs: int = 5
    iters: int | None = None  # overrides epochs when set
    batch_size: int = 32
    global_seed: int = 0
    lr_decay: float = 1.0  # multiplicative, applied every lr_decay_epochs
    lr_decay_epochs: int = 0

    def __post_init__(self):
        if self.P < 1:
            raise DomainError("P must be at least 1")
        if self.lr <= 0:
            raise DomainError("lr must be positive")
        if not 0 <= self.momentum < 1:
            raise DomainError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise DomainError("batch_size must be positive")
        if self.P * self.batch_size > self.data.n:
            raise DomainError(f"P * batch_size = {self.P * self.batch_size} exceeds dataset size {self.data.n}")


@dataclass
class TrainLog:
    P: int
    iters: list = field(default_factory=list)  # (t, loss, agg_l2sq, comm_cum, [sel counts])
    epochs: list = field(default_factory=list)  # (epoch, eval_loss, eval_acc)
    params: np.ndarray | None = None
    trajectory: list | None = None

    @property
    def final_loss(self):
        return self.epochs[-1][1] if self.epochs else math.nan

    def write_csv(self, iter_path, epoch_path):
        with open(iter_path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["iter", "loss", "agg_l2sq", "comm_count_cum"] + [f"sel_count_w{p}" for p in range(self.P)])
            for t, loss, l2, cum, counts in self.iters:
                w.writerow([t, repr(loss), repr(l2), cum, *counts])
        with open(epoch_path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["epoch", "eval_loss", "eval_acc"])
            for e, loss, acc in self.epochs:
                w.writerow([e, repr(loss), repr(acc)])


def train(config, record_trajectory=False, on_iteration=None):
    """Run the synchronous loop described in the module docstring.

    Evaluation after each epoch is on the full training set.  ``on_iteration``
    (if given) is called as ``f(t, worker_inputs)`` with the per-worker
    compressor inputs ``g + residual``; used for gradient-distribution dumps.
    """
    cfg = config
    model, data = cfg.model, cfg.data
    d = model.dim
    x = model.init_params(cfg.global_seed)
    v = np.zeros(d)
    workers = [WorkerState.fresh(p, d, cfg.global_seed) for p in range(cfg.P)]
    per_epoch = data.n // (cfg.P * cfg.batch_size)
    total = cfg.iters if cfg.iters is not None else cfg.epochs * per_epoch
    out = TrainLog(P=cfg.P, trajectory=[x.copy()] if record_trajectory else None)
    comm = 0
    lr = cfg.lr
    perm = None
    for t in range(total):
        epoch, pos = divmod(t, per_epoch)
        if pos == 0:
            perm = make_rng(cfg.global_seed, SHUFFLE, epoch).permutation(data.n)
            if cfg.lr_decay_epochs and epoch and epoch % cfg.lr_decay_epochs == 0:
                lr *= cfg.lr_decay
        losses, sels, grads, inputs = [], [], [], []
        for w in workers:
            start = (pos * cfg.P + w.worker_id) * cfg.batch_size
            idx = perm[start:start + cfg.batch_size]
            try:
                loss, g = model.grad(x, data.features[idx], data.labels[idx])
            except NumericalError:
                raise DivergenceError(t, math.nan) from None
            losses.append(loss)
            if cfg.compressor is None:
                grads.append(g)
                if on_iteration is not None:
                    inputs.append(g)
            else:
                if on_iteration is not None:
                    inputs.append(g + w.residual)
                sels.append(ef_local_step(w, g, cfg.compressor))
        if on_iteration is not None:
            on_iteration(t, inputs)
        if cfg.compressor is None:
            sels = [SparseSelection(np.arange(d), g, d) for g in grads]
        agg = aggregate(sels, cfg.P)
        counts = [len(s) for s in sels]
        comm += sum(counts)
        x, v = sgd_update(x, agg, v, lr, cfg.momentum)
        mean_loss = sum(losses) / cfg.P
        if not math.isfinite(mean_loss) or not np.isfinite(x).all():
            raise DivergenceError(t, mean_loss)
        out.iters.append((t, mean_loss, float(np.sum(agg * agg)), comm, counts))
        if record_trajectory:
            out.trajectory.append(x.copy())
        if pos == per_epoch - 1 or t == total - 1:
            ev_loss = model.loss(x, data.features, data.labels)
            ev_acc = model.accuracy(x, data.features, data.labels)
            out.epochs.append((epoch, ev_loss, ev_acc))
            log.info("epoch %d: loss=%.4f acc=%.4f", epoch, ev_loss, ev_acc)
    out.params = x
    return out


def dense_reference(config):
    """Plain momentum SGD over the same batches, without any sparsification machinery."""
    cfg = config
    model, data = cfg.model, cfg.data
    x = model.init_params(cfg.global_seed)
    v = np.zeros(model.dim)
    per_epoch = data.n // (cfg.P * cfg.batch_size)
    total = cfg.iters if cfg.iters is not None else cfg.epochs * per_epoch
    traj = [x.copy()]
    lr = cfg.lr
    perm = None
    for t in range(total):
        epoch, pos = divmod(t, per_epoch)
        if pos == 0:
            perm = make_rng(cfg.global_seed, SHUFFLE, epoch).permutation(data.n)
            if cfg.lr_decay_epochs and epoch and epoch % cfg.lr_decay_epochs == 0:
                lr *= cfg.lr_decay
        acc = np.zeros(model.dim)
        for p in range(cfg.P):
            start = (pos * cfg.P + p) * cfg.batch_size
            idx = perm[start:start + cfg.batch_size]
            acc += model.grad(x, data.features[idx], data.labels[idx])[1]
        v = cfg.momentum * v + acc / cfg.P
        x = x - lr * v
        traj.append(x.copy())
    return traj
