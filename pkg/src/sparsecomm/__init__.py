"""Gradient sparsification operators, error-feedback SGD simulation and bound checks."""

from .compressors import (
    CompressorSpec,
    PassCounter,
    compress,
    dgc_k,
    gaussian_k,
    rand_k,
    top_k,
    top_k_sort,
    trimmed_k,
)
from .core import SparseSelection, VecStats, densify, normal_cdf, normal_ppf, sorted_pi, vector_stats

__all__ = [
    "CompressorSpec",
    "PassCounter",
    "SparseSelection",
    "VecStats",
    "compress",
    "densify",
    "dgc_k",
    "gaussian_k",
    "normal_cdf",
    "normal_ppf",
    "rand_k",
    "sorted_pi",
    "top_k",
    "top_k_sort",
    "trimmed_k",
    "vector_stats",
]
