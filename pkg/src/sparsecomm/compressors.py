"""Gradient sparsification operators.

All operators take a dense vector ``u`` and return a :class:`SparseSelection`
whose values are copied unchanged from ``u``.  Magnitude comparisons against
a threshold are strict (``|u_i| > thres``).

Each operator also reports how many full sweeps over the ``d`` input
coordinates it made (fused elementwise work over the whole vector counts as
one sweep).  This is the hardware-independent cost metric used by the
benchmarks.
"""

import math
from dataclasses import dataclass

import numpy as np

from .core import P_MAX, P_MIN, SparseSelection, as_dense, normal_ppf
from .errors import DegenerateInputError, DomainError
from .rng import SAMPLE, make_rng, sample_without_replacement

KINDS = ("topk", "randk", "gaussiank", "dgck", "trimmedk")

TRIM_R0 = 0.99
TRIM_DECAY = 0.9
TRIM_FLOOR = 1e-4


@dataclass(frozen=True)
class CompressorSpec:
    kind: str
    k: int | None = None
    k_ratio: float | None = None
    sample_ratio: float = 0.01
    refine_iters: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown compressor {self.kind!r}; choose from {', '.join(KINDS)}")
        if (self.k is None) == (self.k_ratio is None):
            raise DomainError("exactly one of k and k_ratio must be given")
        if self.k_ratio is not None and not 0.0 < self.k_ratio <= 1.0:
            raise DomainError(f"k_ratio must lie in (0, 1], got {self.k_ratio}")
        if self.k is not None and self.k < 1:
            raise DomainError(f"k must be positive, got {self.k}")
        if not 0.0 < self.sample_ratio <= 1.0:
            raise DomainError(f"sample_ratio must lie in (0, 1], got {self.sample_ratio}")
        if self.refine_iters < 0:
            raise DomainError("refine_iters must be nonnegative")

    def resolve_k(self, d):
        k = self.k if self.k is not None else max(1, round(self.k_ratio * d))
        _check_k(k, d)
        return k


@dataclass
class PassCounter:
    full_passes: int = 0
    elements_touched: int = 0

    def sweep(self, d, n=1):
        self.full_passes += n
        self.elements_touched += n * d

    def partial(self, n):
        self.elements_touched += n


def _check_k(k, d):
    if not 1 <= k <= d:
        raise DomainError(f"k must satisfy 1 <= k <= d={d}, got {k}")


def _exact_top_indices(a, k):
    """Indices of the k largest entries of ``a`` (ties -> lower index), unsorted."""
    n = a.size
    if k >= n:
        return np.arange(n, dtype=np.int64)
    kth = np.partition(a, n - k)[n - k]
    above = np.flatnonzero(a > kth)
    ties = np.flatnonzero(a == kth)[: k - above.size]
    return np.concatenate((above, ties))


def top_k(u, k, counter=None):
    """Exact top-k by magnitude via selection (introselect partition)."""
    u = as_dense(u)
    _check_k(k, u.size)
    if counter is not None:
        counter.sweep(u.size, 2)  # abs + partition
    return SparseSelection.from_indices(u, _exact_top_indices(np.abs(u), k))


def top_k_sort(u, k, counter=None):
    """Exact top-k by magnitude via a full stable sort; same result as :func:`top_k`."""
    u = as_dense(u)
    _check_k(k, u.size)
    if counter is not None:
        counter.sweep(u.size, 2)
    order = np.argsort(-np.abs(u), kind="stable")
    return SparseSelection.from_indices(u, order[:k])


def rand_k(u, k, rng, counter=None):
    u = as_dense(u)
    _check_k(k, u.size)
    if counter is not None:
        counter.sweep(u.size)  # output allocation
    if k == u.size:
        idx = np.arange(u.size)
    else:
        idx = sample_without_replacement(rng, u.size, k)
    return SparseSelection.from_indices(u, idx)


def gaussian_threshold(k, d, mu, sigma):
    """Initial magnitude threshold from a normal fit of the coordinates.

    The selection keeps both tails, so the threshold is the quantile that
    leaves k/(2d) probability in the upper tail.  A nonpositive estimate
    (large negative mean) is replaced by the folded-normal quantile.
    """
    p = min(max(1.0 - k / d, P_MIN), P_MAX)
    p_upper = 0.5 + p / 2.0
    thres = normal_ppf(p_upper, mu, sigma)
    if thres <= 0:
        thres = abs(normal_ppf(p_upper, 0.0, sigma))
    return thres


def gaussian_k(u, k, refine_iters=4, counter=None):
    u = as_dense(u)
    d = u.size
    _check_k(k, d)
    counter = counter if counter is not None else PassCounter()
    counter.sweep(d)  # mean/std
    if k == d:
        counter.sweep(d)
        return SparseSelection.from_indices(u, np.flatnonzero(u))
    u64 = u.astype(np.float64, copy=False)
    mu = float(np.mean(u64))
    sigma = float(np.std(u64))
    if sigma == 0.0:
        counter.sweep(d)
        return SparseSelection.from_indices(u, np.arange(k))

    thres = gaussian_threshold(k, d, mu, sigma)
    a = np.abs(u)
    for _ in range(refine_iters):
        counter.sweep(d)
        est = int(np.count_nonzero(a > thres))
        if est < 2 * k / 3:
            thres *= 0.5
        elif est > 4 * k / 3:
            thres *= 1.5
        else:
            break
    counter.sweep(d)
    return SparseSelection.from_indices(u, np.flatnonzero(a > thres))


def dgc_k(u, k, sample_ratio, rng, counter=None):
    """Hierarchical sampling estimate of the top-k threshold.

    Exact top-k on a uniform sample gives a threshold; coordinates at or
    above it are collected, and if more than 2k were collected a second
    exact top-k trims them to k.
    """
    u = as_dense(u)
    d = u.size
    _check_k(k, d)
    if not 0.0 < sample_ratio <= 1.0:
        raise DomainError(f"sample_ratio must lie in (0, 1], got {sample_ratio}")
    counter = counter if counter is not None else PassCounter()
    s = max(1, math.ceil(sample_ratio * d))
    sample = np.arange(d) if s >= d else sample_without_replacement(rng, d, s)
    k_sample = min(s, max(1, round(k * s / d)))
    sample_abs = np.abs(u[sample])
    counter.partial(s)
    thres = sample_abs[_exact_top_indices(sample_abs, k_sample)].min()

    a = np.abs(u)
    collected = np.flatnonzero(a >= thres)
    counter.sweep(d)
    if collected.size > 2 * k:
        counter.partial(collected.size)
        collected = collected[_exact_top_indices(a[collected], k)]
    return SparseSelection.from_indices(u, collected)


def trimmed_k(u, k, counter=None):
    """Threshold search between the mean and max magnitude.

    The threshold ``A + r (M - A)`` starts at r=0.99 and r shrinks by 0.9
    until at least k coordinates exceed it.  Once r drops below 1e-4 the
    threshold falls to zero and every nonzero coordinate is kept.
    """
    u = as_dense(u)
    d = u.size
    _check_k(k, d)
    counter = counter if counter is not None else PassCounter()
    a = np.abs(u)
    M = float(a.max())
    if M == 0:
        raise DegenerateInputError("trimmed_k is undefined for the zero vector")
    A = float(np.mean(a, dtype=np.float64))
    counter.sweep(d, 2)
    r = TRIM_R0
    while True:
        thres = A + r * (M - A)
        counter.sweep(d)
        if np.count_nonzero(a > thres) >= k:
            break
        r *= TRIM_DECAY
        if r < TRIM_FLOOR:
            thres = 0.0
            break
    counter.sweep(d)
    return SparseSelection.from_indices(u, np.flatnonzero(a > thres))


def compress(spec, u, rng=None):
    """Apply the operator named by ``spec`` to ``u``.

    ``rng`` overrides the stream derived from ``spec.seed`` for the random
    operators.  Returns ``(selection, counter)``.
    """
    u = as_dense(u)
    k = spec.resolve_k(u.size)
    counter = PassCounter()
    if spec.kind == "topk":
        sel = top_k(u, k, counter)
    elif spec.kind == "randk":
        sel = rand_k(u, k, rng if rng is not None else make_rng(spec.seed, SAMPLE), counter)
    elif spec.kind == "gaussiank":
        sel = gaussian_k(u, k, spec.refine_iters, counter)
    elif spec.kind == "dgck":
        sel = dgc_k(u, k, spec.sample_ratio, rng if rng is not None else make_rng(spec.seed, SAMPLE), counter)
    else:
        sel = trimmed_k(u, k, counter)
    return sel, counter
