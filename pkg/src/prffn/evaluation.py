"""Metrics, cross-validation over the five model kinds, the resolution
degradation sweep, and pseudo-color map rendering."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import (
    FeatureTable,
    FoldPlan,
    RegisteredRoi,
    Roi,
    apply_normalizer,
    build_feature_table,
    fit_normalizer,
    lopo_splits,
    register_roi,
)
from .errors import ConfigError, DataError
from .model import TrainConfig, train_model
from .pbp import PbpImage
from .radiomics import RadiomicsConfig

LABEL_SET = (0, 1, 2)

#: pseudo-color palette: background, HCC, ICC, non-cancerous
MAP_PALETTE = {
    0: (0, 0, 0),
    1: (139, 69, 19),  # brown
    2: (220, 20, 60),  # red
    3: (255, 255, 255),  # white
}


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: np.ndarray  # (3, 3), rows true, cols predicted


def compute_metrics(y_true, y_pred) -> MetricsReport:
    """Accuracy plus macro-averaged precision/recall/F1 over the 3 classes.

    Macro averaging rules for partially represented label sets: recall and
    F1 average over classes present in y_true; precision averages over
    classes present in y_true or predicted, counting 0 for a class that is
    predicted but absent from y_true.
    """
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size == 0:
        raise DataError("label lists must be equal-length, 1-D, non-empty")
    if not (np.isin(y_true, LABEL_SET).all() and np.isin(y_pred, LABEL_SET).all()):
        raise DataError("labels must lie in {0, 1, 2}")

    confusion = np.zeros((3, 3), dtype=np.int64)
    np.add.at(confusion, (y_true, y_pred), 1)

    accuracy = float(np.trace(confusion) / confusion.sum())
    precisions, recalls, f1s = [], [], []
    for c in LABEL_SET:
        tp = confusion[c, c]
        in_true = confusion[c].sum() > 0
        predicted = confusion[:, c].sum() > 0
        p = tp / confusion[:, c].sum() if predicted else 0.0
        if in_true or predicted:
            precisions.append(p)
        if in_true:
            r = tp / confusion[c].sum()
            recalls.append(r)
            f1s.append(2 * p * r / (p + r) if (p + r) > 0 else 0.0)
    return MetricsReport(
        accuracy=accuracy,
        precision=float(np.mean(precisions)),
        recall=float(np.mean(recalls)),
        f1=float(np.mean(f1s)),
        confusion=confusion,
    )


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

@dataclass
class FoldOutcome:
    group_id: str
    metrics: MetricsReport | None
    error: str | None = None


@dataclass
class CvResult:
    kind: str
    folds: list[FoldOutcome]
    mean: MetricsReport  # arithmetic mean over successful folds; confusion summed

    def fold_accuracies(self) -> list[float]:
        return [f.metrics.accuracy for f in self.folds if f.metrics is not None]


def _mean_report(reports: list[MetricsReport]) -> MetricsReport:
    if not reports:
        raise DataError("no successful folds to aggregate")
    return MetricsReport(
        accuracy=float(np.mean([r.accuracy for r in reports])),
        precision=float(np.mean([r.precision for r in reports])),
        recall=float(np.mean([r.recall for r in reports])),
        f1=float(np.mean([r.f1 for r in reports])),
        confusion=np.sum([r.confusion for r in reports], axis=0),
    )


def run_cv(
    table: FeatureTable,
    plan: FoldPlan,
    kinds: list[str],
    train_cfg: TrainConfig,
    seed: int,
) -> dict[str, CvResult]:
    """Leave-one-patient-group-out CV: per fold, fit normalization on the
    training rows only, train every requested model kind, and score the
    held-out group. Per-fold training errors are recorded, not raised."""
    from .errors import TrainingError

    folds = lopo_splits(table, plan)
    if len(folds) < 2:
        raise ConfigError("need at least two folds for cross-validation")
    outcomes: dict[str, list[FoldOutcome]] = {kind: [] for kind in kinds}
    for fold_idx, (gid, train_idx, test_idx) in enumerate(folds):
        stats = fit_normalizer(table.features[train_idx])
        x_train = apply_normalizer(table.features[train_idx], stats)
        x_test = apply_normalizer(table.features[test_idx], stats)
        y_train = table.labels[train_idx]
        y_test = table.labels[test_idx]
        for kind_idx, kind in enumerate(kinds):
            fold_seed = seed + 1000 * fold_idx + kind_idx
            try:
                model, _ = train_model(kind, x_train, y_train, train_cfg, fold_seed)
                y_hat = np.argmax(model.predict_proba(x_test), axis=1)
                outcomes[kind].append(
                    FoldOutcome(group_id=gid, metrics=compute_metrics(y_test, y_hat))
                )
            except TrainingError as exc:
                outcomes[kind].append(
                    FoldOutcome(group_id=gid, metrics=None, error=str(exc))
                )
    return {
        kind: CvResult(
            kind=kind,
            folds=outcomes[kind],
            mean=_mean_report([f.metrics for f in outcomes[kind] if f.metrics]),
        )
        for kind in kinds
    }


def cv_results_to_csv(results: dict[str, CvResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "fold", "accuracy", "precision", "recall", "f1", "error"])
        for kind, res in results.items():
            for f in res.folds:
                if f.metrics is None:
                    writer.writerow([kind, f.group_id, "", "", "", "", f.error])
                else:
                    writer.writerow(
                        [kind, f.group_id]
                        + [repr(v) for v in (f.metrics.accuracy, f.metrics.precision,
                                             f.metrics.recall, f.metrics.f1)]
                        + [""]
                    )
            writer.writerow(
                [kind, "mean"]
                + [repr(v) for v in (res.mean.accuracy, res.mean.precision,
                                     res.mean.recall, res.mean.f1)]
                + [""]
            )


def summary_markdown(results: dict[str, CvResult]) -> str:
    """Mean-of-folds metrics per model, one row per kind."""
    lines = [
        "| Model | Accuracy | Precision | Recall | F1-score |",
        "|---|---|---|---|---|",
    ]
    for kind, res in results.items():
        m = res.mean
        lines.append(
            f"| {kind} | {m.accuracy:.3f} | {m.precision:.3f} "
            f"| {m.recall:.3f} | {m.f1:.3f} |"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Resolution sweep
# ---------------------------------------------------------------------------

def average_filter(image: np.ndarray, w: int) -> np.ndarray:
    """Mean filter over a w x w window with edge replication; w = 1 is the
    identity. Works on (H, W) and (H, W, C) arrays."""
    if w % 2 == 0 or w < 1:
        raise ConfigError(f"window must be odd and >= 1, got {w}")
    image = np.asarray(image, dtype=float)
    if w == 1:
        return image.copy()
    pad = w // 2
    pad_width = ((pad, pad), (pad, pad)) + ((0, 0),) * (image.ndim - 2)
    padded = np.pad(image, pad_width, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (w, w), axis=(0, 1))
    return windows.mean(axis=(-2, -1))


@dataclass
class SweepResult:
    windows: list[int]
    accuracy: dict[str, list[float]]  # model kind -> accuracy per window

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["window"] + list(self.accuracy))
            for i, w in enumerate(self.windows):
                writer.writerow([w] + [repr(self.accuracy[k][i]) for k in self.accuracy])


def _filtered_registered(reg: RegisteredRoi, w: int) -> RegisteredRoi:
    if w == 1:
        return reg
    return RegisteredRoi(
        roi=reg.roi,
        gray=average_filter(reg.gray, w),
        mask=reg.mask,
        pbp=PbpImage(values=average_filter(reg.pbp.values, w)),
    )


def resolution_sweep(
    rois: list[Roi],
    windows: list[int],
    kinds: list[str],
    plan: FoldPlan,
    train_cfg: TrainConfig,
    n_per_class: int,
    seed: int,
    patch_size: int = 100,
    radiomics_cfg: RadiomicsConfig | None = None,
    jobs: int = 1,
) -> SweepResult:
    """Degrade resolution by average-filtering the registered grayscale
    H&E and the decoded parameter planes before sampling, rebuild the
    feature table at each window, and re-run CV. The pixel sample is
    identical across windows (masks and seed are unchanged), so curves are
    comparable point-to-point."""
    if sorted(windows) != list(windows) or windows[0] != 1:
        raise ConfigError("windows must be ascending and start at 1")
    base = [register_roi(r) for r in rois]
    accuracy: dict[str, list[float]] = {k: [] for k in kinds}
    for w in windows:
        regs = [_filtered_registered(r, w) for r in base]
        table = build_feature_table(
            rois,
            n_per_class=n_per_class,
            patch_size=patch_size,
            seed=seed,
            radiomics_cfg=radiomics_cfg,
            jobs=jobs,
            registered=regs,
        )
        results = run_cv(table, plan, kinds, train_cfg, seed)
        for k in kinds:
            accuracy[k].append(results[k].mean.accuracy)
    return SweepResult(windows=list(windows), accuracy=accuracy)


# ---------------------------------------------------------------------------
# Pseudo-color rendering
# ---------------------------------------------------------------------------

def render_map(mask: np.ndarray) -> np.ndarray:
    """Label mask to RGB: HCC brown, ICC red, non-cancerous white,
    background black."""
    mask = np.asarray(mask)
    if not np.isin(mask, list(MAP_PALETTE)).all():
        raise DataError("mask contains labels outside the palette")
    lut = np.zeros((max(MAP_PALETTE) + 1, 3), dtype=np.uint8)
    for label, rgb in MAP_PALETTE.items():
        lut[label] = rgb
    return lut[mask]
