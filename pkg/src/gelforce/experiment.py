"""Experiment orchestration: config files, per-fold training, CSV reports.

Config files are line-based ``key = value`` text; unknown keys are rejected
with their line number. All randomness derives from the config seed, so a
rerun with the same config reproduces every report byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import force as forcemod
from . import metrics
from .datasets import FoldSplit, ingest_dataset, save_split, split_by_indenter
from .image import load_image


class ConfigError(ValueError):
    pass


_CONFIG_KEYS = {
    "dataset": str,
    "model": str,
    "outdir": str,
    "seed": int,
    "folds": int,
    "epochs": int,
    "batch_size": int,
    "lr": float,
    "resolution": str,
    "force_min": float,
    "force_max": float,
    "mask_threshold": float,
}

_MODEL_CHOICES = forcemod.MODEL_KINDS + ("poly",)


@dataclass
class ExperimentConfig:
    dataset: str
    model: str
    outdir: str
    seed: int = 0
    folds: int = 3
    epochs: int = 25
    batch_size: int = 64
    lr: float = 4e-5
    resolution: str = "160x120"
    force_min: float = 1.0
    force_max: float = 15.0
    mask_threshold: float = 0.04

    def __post_init__(self):
        if self.model not in _MODEL_CHOICES:
            raise ConfigError(f"unknown model kind {self.model!r}; "
                              f"expected one of {_MODEL_CHOICES}")
        if not (1 <= self.folds <= 3):
            raise ConfigError(f"folds must be in 1..3, got {self.folds}")

    @property
    def resolution_px(self) -> tuple[int, int]:
        try:
            w, h = self.resolution.lower().split("x")
            return int(w), int(h)
        except ValueError:
            raise ConfigError(f"bad resolution {self.resolution!r}; expected WxH")


def parse_config(path) -> ExperimentConfig:
    """Parse a `key = value` config file, rejecting unknown keys by line."""
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected `key = value`, got {raw.rstrip()!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            try:
                values[key] = _CONFIG_KEYS[key](val)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value {val!r} for {key}")
    for required in ("dataset", "model", "outdir"):
        if required not in values:
            raise ConfigError(f"{path}: missing required key {required!r}")
    return ExperimentConfig(**values)


# ---------------------------------------------------------------------------
# per-fold evaluation


@dataclass
class FoldResult:
    fold: int
    report: metrics.MetricReport
    preds: np.ndarray
    gts: np.ndarray
    paths: list[str]


def _poly_pairs(samples):
    pairs = []
    for s in samples:
        if s.depth_path is None:
            raise ConfigError(f"poly baseline needs depth images; {s.frame_path} has none")
        pairs.append((forcemod.max_deformation_byte(load_image(s.depth_path)), s.force_n))
    return pairs


def run_fold(cfg: ExperimentConfig, fold_idx: int, split: FoldSplit) -> FoldResult:
    if cfg.model == "poly":
        poly = forcemod.fit_poly_baseline(_poly_pairs(split.train + split.val))
        preds = np.array([forcemod.poly_predict(poly, load_image(s.depth_path))
                          for s in split.test])
    else:
        model = forcemod.build_model(cfg.model, cfg.resolution_px,
                                     seed=cfg.seed + fold_idx)
        ref_path = Path(cfg.dataset) / "reference.png"
        if model.wants_rgb and ref_path.exists():
            model.set_rgb_reference(load_image(ref_path))
        tc = forcemod.TrainConfig(batch_size=cfg.batch_size, lr=cfg.lr,
                                  epochs=cfg.epochs, seed=cfg.seed + fold_idx)
        model, _ = forcemod.train(model, split.train, split.val, tc)
        preds = forcemod.predict_samples(model, split.test)
    gts = np.array([s.force_n for s in split.test])
    return FoldResult(fold=fold_idx, report=metrics.report(preds, gts),
                      preds=preds, gts=gts,
                      paths=[str(s.frame_path) for s in split.test])


def _write_reports(outdir: Path, results: list[FoldResult],
                   aggregate: metrics.MetricReport) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "report.csv", "w") as f:
        f.write("fold,n,re_mean,re_std,mae_mean,mae_std\n")
        for r in results:
            rep = r.report
            f.write(f"{r.fold},{rep.n},{rep.re_mean!r},{rep.re_std!r},"
                    f"{rep.mae_mean!r},{rep.mae_std!r}\n")
        f.write(f"aggregate,{aggregate.n},{aggregate.re_mean!r},{aggregate.re_std!r},"
                f"{aggregate.mae_mean!r},{aggregate.mae_std!r}\n")

    with open(outdir / "per_bin.csv", "w") as f:
        f.write("fold,bin_lo,bin_hi,re_mean,re_std,count\n")
        for r in results:
            for b in r.report.per_bin:
                mean = "" if b.re_mean is None else repr(b.re_mean)
                std = "" if b.re_std is None else repr(b.re_std)
                f.write(f"{r.fold},{b.lo!r},{b.hi!r},{mean},{std},{b.count}\n")
        for b in aggregate.per_bin:
            mean = "" if b.re_mean is None else repr(b.re_mean)
            std = "" if b.re_std is None else repr(b.re_std)
            f.write(f"aggregate,{b.lo!r},{b.hi!r},{mean},{std},{b.count}\n")

    with open(outdir / "predictions.csv", "w") as f:
        f.write("fold,path,gt_n,pred_n\n")
        for r in results:
            for path, gt, pred in zip(r.paths, r.gts, r.preds):
                f.write(f"{r.fold},{path},{gt!r},{pred!r}\n")

    lines = ["fold  n      RE            MAE(N)"]
    for r in results:
        rep = r.report
        lines.append(f"{r.fold:<5} {rep.n:<6} {rep.re_mean:.3f} +- {rep.re_std:.3f}"
                     f"  {rep.mae_mean:.3f} +- {rep.mae_std:.3f}")
    lines.append(f"all   {aggregate.n:<6} {aggregate.re_mean:.3f} +- "
                 f"{aggregate.re_std:.3f}  {aggregate.mae_mean:.3f} +- "
                 f"{aggregate.mae_std:.3f}")
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")


def run_experiment(config_path) -> dict:
    """Train and evaluate per fold, writing report/per-bin/prediction CSVs."""
    cfg = parse_config(config_path)
    ingest = ingest_dataset(cfg.dataset, force_range=(cfg.force_min, cfg.force_max))
    folds = split_by_indenter(ingest.samples, cfg.seed)[: cfg.folds]

    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    save_split(folds, outdir / "split.json")

    results = [run_fold(cfg, i, split) for i, split in enumerate(folds)]
    all_preds = np.concatenate([r.preds for r in results])
    all_gts = np.concatenate([r.gts for r in results])
    aggregate = metrics.report(all_preds, all_gts)
    _write_reports(outdir, results, aggregate)
    return {
        "config": cfg,
        "folds": results,
        "aggregate": aggregate,
    }
