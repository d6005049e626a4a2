"""Cost comparison of the sparsification operators on seeded Gaussian vectors.

Two metrics per (d, operator): median wall time (machine dependent,
informational) and the sweep count from the operator's pass counter
(deterministic).  ``topk`` is the partition-based exact baseline and
``topk-sort`` the full-sort one.
"""

import csv
import os
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .compressors import PassCounter, dgc_k, gaussian_k, rand_k, top_k, top_k_sort, trimmed_k
from .errors import DomainError
from .rng import DATA, SAMPLE, make_rng

BENCH_KINDS = ("topk", "topk-sort", "randk", "gaussiank", "dgck", "trimmedk")
# peak working set, in multiples of the vector size
_WORKSPACE_FACTOR = 6


@dataclass(frozen=True)
class BenchRow:
    d: int
    k: int
    kind: str
    wall_ms: float
    full_passes: int
    selected_count: int
    recall: float


def _available_bytes():
    try:
        return os.sysconf("SC_AVPHYS_PAGES") * os.sysconf("SC_PAGE_SIZE")
    except (ValueError, OSError, AttributeError):
        return None


def check_memory(d, itemsize):
    need = _WORKSPACE_FACTOR * d * itemsize
    avail = _available_bytes()
    if avail is not None and need > avail:
        raise MemoryError(f"d={d} needs about {need / 2**30:.1f} GiB, only {avail / 2**30:.1f} GiB available")


def _runner(kind, k, sample_ratio, refine_iters, seed):
    if kind == "topk":
        return lambda u, c: top_k(u, k, c)
    if kind == "topk-sort":
        return lambda u, c: top_k_sort(u, k, c)
    if kind == "randk":
        return lambda u, c: rand_k(u, k, make_rng(seed, SAMPLE), c)
    if kind == "gaussiank":
        return lambda u, c: gaussian_k(u, k, refine_iters, c)
    if kind == "dgck":
        return lambda u, c: dgc_k(u, k, sample_ratio, make_rng(seed, SAMPLE), c)
    if kind == "trimmedk":
        return lambda u, c: trimmed_k(u, k, c)
    raise DomainError(f"unknown benchmark kind {kind!r}; choose from {', '.join(BENCH_KINDS)}")


def run_bench(dims, k_ratio, kinds, repeats, seed, sample_ratio=0.01, refine_iters=4, dtype=np.float64):
    if repeats < 3:
        raise DomainError("repeats must be at least 3")
    if not 0 < k_ratio <= 1:
        raise DomainError("k_ratio must lie in (0, 1]")
    for kind in kinds:
        _runner(kind, 1, sample_ratio, refine_iters, seed)
    rows = []
    for d in dims:
        d = int(d)
        if d < 1:
            raise DomainError("dimensions must be positive")
        check_memory(d, np.dtype(dtype).itemsize)
        k = max(1, round(k_ratio * d))
        u = make_rng(seed, DATA, d).standard_normal(d).astype(dtype)
        exact = top_k(u, k).indices
        for kind in kinds:
            run = _runner(kind, k, sample_ratio, refine_iters, seed)
            run(u, None)  # warm-up
            times = []
            for _ in range(repeats):
                counter = PassCounter()
                t0 = time.perf_counter()
                sel = run(u, counter)
                times.append((time.perf_counter() - t0) * 1e3)
            hit = np.intersect1d(sel.indices, exact, assume_unique=True).size
            rows.append(BenchRow(d, k, kind, max(statistics.median(times), 1e-6),
                                 counter.full_passes, len(sel), hit / k))
    return rows


def write_bench_csv(rows, path, with_timing=True):
    """Write the benchmark table; ``with_timing=False`` blanks wall time for reproducible output."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["d", "k", "kind", "wall_ms_median", "full_passes", "selected_count", "recall"])
        for r in rows:
            w.writerow([r.d, r.k, r.kind, f"{r.wall_ms:.4f}" if with_timing else "",
                        r.full_passes, r.selected_count, repr(r.recall)])
