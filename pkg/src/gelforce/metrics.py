"""Evaluation metrics: MAE, relative error, and 1 N binned error tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BIN_LO, BIN_HI = 1.0, 20.0  # half-open 1 N bins [1,2), [2,3), ...


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class BinStat:
    lo: float
    hi: float
    re_mean: float | None  # None for empty bins
    re_std: float | None
    count: int


@dataclass(frozen=True)
class MetricReport:
    n: int
    mae_mean: float
    mae_std: float
    re_mean: float
    re_std: float
    per_bin: list[BinStat]


def relative_error(pred: float, gt: float) -> float:
    """|pred - gt| / gt, the force error relative to the applied force."""
    if not gt > 0:
        raise MetricError(f"ground-truth force must be positive, got {gt}")
    return abs(pred - gt) / gt


def mae(preds, gts) -> tuple[float, float]:
    """Mean and population standard deviation of |pred - gt| in newtons."""
    preds = np.asarray(preds, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    if preds.shape != gts.shape or preds.ndim != 1 or preds.size < 1:
        raise MetricError(f"need equal-length 1-D arrays, got {preds.shape} vs {gts.shape}")
    err = np.abs(preds - gts)
    return float(err.mean()), float(err.std())


def relative_errors(preds, gts) -> np.ndarray:
    preds = np.asarray(preds, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    if (gts <= 0).any():
        raise MetricError("ground-truth forces must be positive")
    return np.abs(preds - gts) / gts


def binned_re(preds, gts) -> list[BinStat]:
    """Relative error in half-open 1 N force intervals [1,2), [2,3), ..."""
    preds = np.asarray(preds, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    if gts.size and (gts.min() < BIN_LO or gts.max() >= BIN_HI):
        raise MetricError(f"ground-truth forces must lie within [{BIN_LO}, {BIN_HI}) N")
    re = relative_errors(preds, gts)
    out = []
    for lo in np.arange(BIN_LO, BIN_HI):
        sel = (gts >= lo) & (gts < lo + 1)
        if sel.any():
            out.append(BinStat(float(lo), float(lo + 1), float(re[sel].mean()),
                               float(re[sel].std()), int(sel.sum())))
        else:
            out.append(BinStat(float(lo), float(lo + 1), None, None, 0))
    return out


def report(preds, gts) -> MetricReport:
    preds = np.asarray(preds, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    m_mean, m_std = mae(preds, gts)
    re = relative_errors(preds, gts)
    return MetricReport(n=int(preds.size), mae_mean=m_mean, mae_std=m_std,
                        re_mean=float(re.mean()), re_std=float(re.std()),
                        per_bin=binned_re(preds, gts))
