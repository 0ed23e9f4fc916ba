"""Regression and classification metrics for the experiment reports.

MAPE is reported as a fraction (0.288 means 28.8%), not as a percentage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Probability threshold for turning direction probabilities into hard labels.
CLASSIFICATION_THRESHOLD = 0.5


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricSet:
    """Evaluation summary for one model on one split."""

    mae: float
    rmse: float
    mape: float
    n: int
    f1: float | None = None

    def __post_init__(self):
        if self.rmse < self.mae - 1e-12:
            raise MetricError(f"rmse ({self.rmse}) < mae ({self.mae})")

    def to_dict(self) -> dict:
        d = {"mae": self.mae, "rmse": self.rmse, "mape": self.mape, "n": self.n}
        if self.f1 is not None:
            d["f1"] = self.f1
        return d


def _paired(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise MetricError(f"shape mismatch: pred {p.shape} vs target {t.shape}")
    if p.size == 0:
        raise MetricError("empty prediction vector")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
        raise MetricError("non-finite values in metric input")
    return p, t


def mae(pred, target) -> float:
    p, t = _paired(pred, target)
    return float(np.mean(np.abs(p - t)))


def rmse(pred, target) -> float:
    p, t = _paired(pred, target)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def mape(pred, target) -> float:
    """Mean absolute percentage error, fractional. Rejects zero targets."""
    p, t = _paired(pred, target)
    if np.any(t == 0.0):
        raise MetricError("mape undefined: target contains zero (corrupt price data?)")
    return float(np.mean(np.abs(p - t) / np.abs(t)))


def f1_binary(pred_labels, true_labels) -> float:
    """F1 for class 1; returns 0.0 when precision + recall is zero."""
    p = np.asarray(pred_labels)
    t = np.asarray(true_labels)
    if p.shape != t.shape or p.ndim != 1 or p.size == 0:
        raise MetricError(f"bad label vectors: {p.shape} vs {t.shape}")
    for v in (p, t):
        if not np.all(np.isin(v, (0, 1))):
            raise MetricError("labels must be 0/1")
    tp = int(np.sum((p == 1) & (t == 1)))
    fp = int(np.sum((p == 1) & (t == 0)))
    fn = int(np.sum((p == 0) & (t == 1)))
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2 * tp / denom


def regression_metrics(pred, target, n: int | None = None, f1: float | None = None) -> MetricSet:
    return MetricSet(
        mae=mae(pred, target),
        rmse=rmse(pred, target),
        mape=mape(pred, target),
        n=len(np.asarray(pred)) if n is None else n,
        f1=f1,
    )
