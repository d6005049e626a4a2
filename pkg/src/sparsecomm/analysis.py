"""Numerical checks of the top-k error bound and of gradient-shape assumptions.

The quantity of interest is the fraction of energy discarded by exact top-k,
``||u - topk(u)||^2 / ||u||^2``, compared against the Rand_k expectation
``1 - k/d`` and the tighter ``(1 - k/d)^2`` that holds for bell-shaped
vectors.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .compressors import rand_k, top_k
from .core import as_dense, normal_cdf, sorted_pi
from .errors import DegenerateInputError, DomainError, NumericalError
from .rng import DATA, TRIAL, make_rng

CONVEX_TOL = 1e-12
LINE_TOL = 1e-12
HEAD_SKIP_FRACTION = 1e-4
DISTRIBUTIONS = ("gaussian", "laplace", "uniform", "constant")


def synthetic_vector(dist, d, seed):
    rng = make_rng(seed, DATA)
    if dist == "gaussian":
        return rng.standard_normal(d)
    if dist == "laplace":
        return rng.laplace(0.0, 1.0, d)
    if dist == "uniform":
        return rng.uniform(-1.0, 1.0, d)
    if dist == "constant":
        return np.ones(d)
    raise DomainError(f"unknown distribution {dist!r}; choose from {', '.join(DISTRIBUTIONS)}")


@dataclass(frozen=True)
class BoundReportRow:
    k: int
    exact_ratio: float
    loose_bound: float
    tight_bound: float


def _check_nonzero(u):
    l2 = float(np.sum(u * u))
    if l2 == 0.0:
        raise DegenerateInputError("ratio is undefined for the zero vector")
    return l2


def exact_ratio(u, k):
    """Fraction of squared norm dropped by exact top-k."""
    u = as_dense(u, np.float64)
    if not 1 <= k <= u.size:
        raise DomainError(f"k must satisfy 1 <= k <= {u.size}")
    total = _check_nonzero(u)
    kept = top_k(u, k).values
    return max(0.0, (total - float(np.sum(kept * kept))) / total) if k < u.size else 0.0


def exact_ratio_sorted(u, k):
    """Same quantity from tail sums of the sorted normalized magnitudes."""
    u = as_dense(u, np.float64)
    if not 1 <= k <= u.size:
        raise DomainError(f"k must satisfy 1 <= k <= {u.size}")
    _check_nonzero(u)
    sq = sorted_pi(u) ** 2
    return float(np.sum(sq[k:]) / np.sum(sq))


def bound_report(u, ks):
    u = as_dense(u, np.float64)
    d = u.size
    _check_nonzero(u)
    # one sort serves every k; discarded energy is a suffix sum
    sq = np.sort(u * u)[::-1]
    suffix = np.concatenate((np.cumsum(sq[::-1])[::-1], [0.0]))
    total = float(suffix[0])
    rows = []
    for k in ks:
        if not 1 <= k <= d:
            raise DomainError(f"k must satisfy 1 <= k <= {d}, got {k}")
        loose = 1.0 - k / d
        rows.append(BoundReportRow(k, float(suffix[k]) / total, loose, loose * loose))
    return rows


def delta_form(k, d):
    """Contraction factor ``(2kd - k^2) / d^2``; equals ``1 - (1 - k/d)^2``."""
    return (2 * k * d - k * k) / (d * d)


@dataclass(frozen=True)
class PiShape:
    convex_violations: int
    line_violations: int
    skip_head: int
    stride: int


def pi_shape_check(u, stride=None):
    """Count departures of sorted ``pi^2`` from convexity and from the reference line.

    The line runs from (1, 1) to (d, 0).  The first ``skip_head`` indices and
    the endpoint ``i = d``, where the line is exactly zero, are not checked
    against it.  Convexity uses second differences over every ``stride``-th
    point (default 1, or ``d // 10_000`` when d exceeds one million).
    """
    pi = sorted_pi(u)
    s = pi * pi
    d = s.size
    skip = max(1, round(HEAD_SKIP_FRACTION * d))
    if stride is None:
        stride = max(1, d // 10_000) if d > 1_000_000 else 1
    t = s[::stride]
    second = t[2:] - 2.0 * t[1:-1] + t[:-2]
    convex = int(np.count_nonzero(second < -CONVEX_TOL))
    i = np.arange(1, d + 1)
    line = 1.0 - (i - 1) / (d - 1) if d > 1 else np.ones(1)
    checked = slice(skip, d - 1)
    line_v = int(np.count_nonzero(s[checked] > line[checked] + LINE_TOL))
    return PiShape(convex, line_v, skip, stride)


def pi_shape_rows(u):
    """(i, pi_sq, line) rows for CSV output, 1-based i."""
    s = sorted_pi(u) ** 2
    d = s.size
    for i in range(1, d + 1):
        yield i, float(s[i - 1]), 1.0 - (i - 1) / (d - 1) if d > 1 else 1.0


def area_inequality(a1, a2, a3, a4):
    """Whether A1/(A1+A2+A3) <= (A1+A4)/(A1+A2+A4).

    Checked in cross-multiplied form, which reduces to
    ``0 <= A1*A3 + A4*A2 + A4*A3``.
    """
    if min(a1, a2, a3, a4) < 0:
        raise DomainError("areas must be nonnegative")
    left_den = a1 + a2 + a3
    right_den = a1 + a2 + a4
    if left_den <= 0 or right_den <= 0:
        raise DomainError("zero denominator")
    return a1 * right_den <= (a1 + a4) * left_den


def area_reduced(a1, a2, a3, a4):
    return a1 * a3 + a4 * a2 + a4 * a3


@dataclass(frozen=True)
class HistogramData:
    bin_edges: np.ndarray
    counts: np.ndarray
    cdf: np.ndarray


def histogram(u, bins):
    if bins < 1:
        raise DomainError("bins must be at least 1")
    arr = np.asarray(u, dtype=np.float64).ravel()
    if not np.isfinite(arr).all():
        raise NumericalError("histogram input contains NaN or Inf")
    lo, hi = float(arr.min()), float(arr.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    counts, edges = np.histogram(arr, bins=bins, range=(lo, hi))
    cdf = np.cumsum(counts) / arr.size
    return HistogramData(edges, counts, cdf)


def kolmogorov_distance_to_normal(h, mu=0.0, sigma=1.0):
    """Max gap between the binned CDF and N(mu, sigma^2) at the right bin edges."""
    ref = np.array([normal_cdf((e - mu) / sigma) for e in h.bin_edges[1:]])
    return float(np.max(np.abs(h.cdf - ref)))


def randk_expectation_check(u, k, trials, seed):
    """Monte Carlo mean of the Rand_k discarded-energy fraction; returns (mean, 1 - k/d)."""
    u = as_dense(u, np.float64)
    d = u.size
    if trials < 1:
        raise DomainError("trials must be at least 1")
    total = _check_nonzero(u)
    ratios = np.empty(trials)
    for t in range(trials):
        kept = rand_k(u, k, make_rng(seed, TRIAL, t)).values
        ratios[t] = (total - float(np.sum(kept * kept))) / total
    return float(math.fsum(ratios) / trials), 1.0 - k / d


def write_bound_csv(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["k", "exact", "loose", "tight"])
        for r in rows:
            w.writerow([r.k, repr(r.exact_ratio), repr(r.loose_bound), repr(r.tight_bound)])


def write_histogram_csv(h, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count", "cdf"])
        for lo, hi, c, p in zip(h.bin_edges[:-1], h.bin_edges[1:], h.counts, h.cdf):
            w.writerow([repr(float(lo)), repr(float(hi)), int(c), repr(float(p))])


def write_pi_shape_csv(u, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["i", "pi_sq", "line"])
        for i, s, line in pi_shape_rows(u):
            w.writerow([i, repr(s), repr(line)])
