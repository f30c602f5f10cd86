"""Accuracy metrics between a quantized output and its full-precision twin.

Both tensors are flattened to vectors; the three figures are

* cosine similarity  sum(o o') / (sqrt(sum o^2) sqrt(sum o'^2))
* relative L1        sum|o - o'| / sum|o|
* RMSE               sqrt(mean((o - o')^2))

Accumulation happens in float64 regardless of input dtype, so the metric
itself never contaminates what it measures.  Degenerate denominators
raise instead of returning NaN: a silent NaN row in a sweep is worse
than a loud failure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateMetricsError(ValueError):
    """A metric denominator (sum of squares or absolute sum) is zero."""


@dataclass(frozen=True)
class MetricsReport:
    cossim: float
    l1: float
    rmse: float


def compare(o_ref, o_test) -> MetricsReport:
    """Compare a test tensor against the reference it approximates."""
    a = np.asarray(o_ref, dtype=np.float64)
    b = np.asarray(o_test, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    a = a.ravel()
    b = b.ravel()
    if a.size == 0:
        raise ValueError("cannot compare empty tensors")

    norm_a = float(np.sqrt(np.sum(a * a)))
    norm_b = float(np.sqrt(np.sum(b * b)))
    abs_a = float(np.sum(np.abs(a)))
    if norm_a == 0.0 or abs_a == 0.0:
        raise DegenerateMetricsError("reference tensor is all zeros")
    if norm_b == 0.0:
        raise DegenerateMetricsError("test tensor is all zeros")

    diff = a - b
    return MetricsReport(
        cossim=float(np.sum(a * b)) / (norm_a * norm_b),
        l1=float(np.sum(np.abs(diff))) / abs_a,
        rmse=float(np.sqrt(np.mean(diff * diff))),
    )
