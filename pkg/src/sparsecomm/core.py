"""Dense and sparse gradient vectors, order statistics and the normal quantile."""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DimensionError, DomainError, NumericalError, StructuralError

P_MIN = 1e-12
P_MAX = 1.0 - 1e-12


def as_dense(u, dtype=None):
    """Return ``u`` as a finite, non-empty 1-D float array.

    float32 input is kept as float32 (benchmark path); everything else is
    promoted to float64 unless ``dtype`` says otherwise.
    """
    arr = np.asarray(u)
    if dtype is None:
        dtype = np.float32 if arr.dtype == np.float32 else np.float64
    arr = np.ascontiguousarray(arr, dtype=dtype)
    if arr.ndim != 1:
        raise DimensionError(f"expected a flat vector, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionError("vector is empty")
    if not np.isfinite(arr).all():
        raise NumericalError("vector contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class SparseSelection:
    """Index/value pairs of a compressed vector of dimension ``d``.

    ``indices`` are strictly increasing; ``values`` are the original
    coordinates at those positions.
    """

    indices: np.ndarray
    values: np.ndarray
    d: int

    def __len__(self):
        return len(self.indices)

    def validate(self):
        idx = np.asarray(self.indices)
        if idx.ndim != 1 or np.asarray(self.values).shape != idx.shape:
            raise StructuralError("indices and values must be 1-D arrays of equal length")
        if self.d < 1:
            raise StructuralError(f"invalid dimension {self.d}")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.d:
                raise StructuralError(f"index out of range [0, {self.d})")
            if idx.size > 1 and not (np.diff(idx) > 0).all():
                raise StructuralError("indices must be strictly increasing (duplicates or unsorted)")
        return self

    @classmethod
    def from_indices(cls, u, indices):
        idx = np.sort(np.asarray(indices, dtype=np.int64))
        return cls(idx, u[idx].copy(), u.size)


def densify(s):
    s.validate()
    out = np.zeros(s.d, dtype=np.result_type(s.values, np.float32) if len(s) else np.float64)
    out[s.indices] = s.values
    return out


@dataclass(frozen=True)
class VecStats:
    mean: float
    std: float
    l2_sq: float
    linf: float
    dim: int


def vector_stats(u):
    """Mean, population std, squared l2 norm and max-norm of ``u``.

    Two passes: sums are numpy's pairwise reductions, and the variance is
    taken about the mean rather than from the raw second moment.
    """
    u = as_dense(u)
    d = u.size
    u64 = u.astype(np.float64, copy=False)
    mean = float(np.sum(u64) / d)
    centered = u64 - mean
    var = float(np.sum(centered * centered) / d)
    return VecStats(
        mean=mean,
        std=math.sqrt(var),
        l2_sq=float(np.sum(u64 * u64)),
        linf=float(np.max(np.abs(u64))),
        dim=d,
    )


# Acklam's rational approximation to the inverse normal CDF (rel. error < 1.2e-9)
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def normal_cdf(x):
    return 0.5 * math.erfc(-x / _SQRT2)


def _lower_z(p):
    # p in (0, 0.5]
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
            ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    else:
        q = p - 0.5
        r = q * q
        x = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
            (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    # one Halley step against the erfc-based CDF
    e = normal_cdf(x) - p
    step = e * _SQRT2PI * math.exp(0.5 * x * x)
    return x - step / (1.0 + 0.5 * x * step)


def normal_ppf(p, mu=0.0, sigma=1.0):
    """Quantile of N(mu, sigma^2) at probability ``p``."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    if sigma < 0:
        raise DomainError(f"sigma must be nonnegative, got {sigma}")
    if p == 0.5:
        z = 0.0
    elif p < 0.5:
        z = _lower_z(p)
    else:
        z = -_lower_z(1.0 - p)
    return mu + sigma * z


def sorted_pi(u):
    """|u| / ||u||_inf sorted in descending order."""
    u = as_dense(u)
    a = np.abs(u.astype(np.float64, copy=False))
    m = a.max()
    if m == 0:
        raise DegenerateInputError("sorted_pi is undefined for the zero vector")
    pi = np.sort(a)[::-1] / m
    return pi
