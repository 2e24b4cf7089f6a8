"""Assemble per-pixel training rows from registered ROIs.

A row pairs the 23 polarimetry parameters of one pixel on the fixed grid
with the 93 radiomics features of the patch-size x patch-size grayscale
block centered on that pixel, tagged with patient/ROI provenance and the
class label read off the transferred mask. Mask labels 1/2/3 map to class
labels 0/1/2 (HCC, ICC, non-cancerous).
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from .errors import ConfigError, DataError
from .mueller import MuellerImage, normalize_by_m11
from .pbp import PBP_NAMES, PbpImage, pbp_stack
from .radiomics import RADIOMICS_NAMES, GrayPatch, RadiomicsConfig, extract_radiomics, rgb_to_gray
from .registration import Affine2D, transfer_mask, warp_image

CLASS_TAGS = ("HCC", "ICC", "NonCancerous")
MASK_LABEL_BY_TAG = {"HCC": 1, "ICC": 2, "NonCancerous": 3}

FEATURE_COLUMNS = tuple(PBP_NAMES) + tuple(RADIOMICS_NAMES)
CSV_COLUMNS = ("patient_id", "roi_id", "x", "y", "label") + FEATURE_COLUMNS
assert len(CSV_COLUMNS) == 121


@dataclass
class Roi:
    """One region of interest: polarimetric stack, H&E raster, pathologist
    mask on the H&E frame, and the moving-to-fixed affine."""

    roi_id: str
    patient_id: str
    class_tag: str
    mueller: MuellerImage
    he_image: np.ndarray  # (Hm, Wm, 3), moving frame
    mask: np.ndarray  # (Hm, Wm) int labels, moving frame
    transform: Affine2D

    def __post_init__(self):
        if self.class_tag not in CLASS_TAGS:
            raise DataError(f"unknown class tag {self.class_tag!r}")


@dataclass
class RegisteredRoi:
    """ROI products resampled onto the fixed (m11) grid."""

    roi: Roi
    gray: np.ndarray  # (H, W) warped grayscale H&E
    mask: np.ndarray  # (H, W) transferred labels
    pbp: PbpImage


def register_roi(roi: Roi) -> RegisteredRoi:
    out_size = (roi.mueller.height, roi.mueller.width)
    warped = warp_image(roi.he_image, roi.transform, out_size)
    mask = transfer_mask(np.asarray(roi.mask), roi.transform, out_size)
    norm = normalize_by_m11(roi.mueller)
    return RegisteredRoi(
        roi=roi, gray=rgb_to_gray(warped), mask=mask, pbp=pbp_stack(norm.image)
    )


# ---------------------------------------------------------------------------
# Feature table
# ---------------------------------------------------------------------------

@dataclass
class FeatureRow:
    patient_id: str
    roi_id: str
    x: int
    y: int
    label: int
    features: np.ndarray  # (116,)


@dataclass
class FeatureTable:
    patient_ids: list[str]
    roi_ids: list[str]
    xy: np.ndarray  # (n, 2) int
    labels: np.ndarray  # (n,) int in {0, 1, 2}
    features: np.ndarray  # (n, 116) float64
    skipped_out_of_bounds: int = 0

    def __post_init__(self):
        n = len(self.patient_ids)
        if not (
            len(self.roi_ids) == n
            and self.xy.shape == (n, 2)
            and self.labels.shape == (n,)
            and self.features.shape == (n, len(FEATURE_COLUMNS))
        ):
            raise DataError("feature table arrays are inconsistent")

    def __len__(self) -> int:
        return len(self.patient_ids)

    def row(self, i: int) -> FeatureRow:
        return FeatureRow(
            patient_id=self.patient_ids[i],
            roi_id=self.roi_ids[i],
            x=int(self.xy[i, 0]),
            y=int(self.xy[i, 1]),
            label=int(self.labels[i]),
            features=self.features[i],
        )

    def subset(self, idx: np.ndarray) -> "FeatureTable":
        idx = np.asarray(idx)
        return FeatureTable(
            patient_ids=[self.patient_ids[i] for i in idx],
            roi_ids=[self.roi_ids[i] for i in idx],
            xy=self.xy[idx],
            labels=self.labels[idx],
            features=self.features[idx],
        )

    def patients(self) -> list[str]:
        return sorted(set(self.patient_ids))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for i in range(len(self)):
                writer.writerow(
                    [
                        self.patient_ids[i],
                        self.roi_ids[i],
                        int(self.xy[i, 0]),
                        int(self.xy[i, 1]),
                        int(self.labels[i]),
                    ]
                    + [repr(float(v)) for v in self.features[i]]
                )

    @classmethod
    def from_csv(cls, path: str | Path) -> "FeatureTable":
        patient_ids, roi_ids, xys, labels, feats = [], [], [], [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != CSV_COLUMNS:
                raise DataError(f"unexpected feature CSV header in {path}")
            for row in reader:
                patient_ids.append(row[0])
                roi_ids.append(row[1])
                xys.append((int(row[2]), int(row[3])))
                labels.append(int(row[4]))
                feats.append([float(v) for v in row[5:]])
        return cls(
            patient_ids=patient_ids,
            roi_ids=roi_ids,
            xy=np.array(xys, dtype=int).reshape(len(patient_ids), 2),
            labels=np.array(labels, dtype=int),
            features=np.array(feats, dtype=float).reshape(
                len(patient_ids), len(FEATURE_COLUMNS)
            ),
        )


def sample_pixels(
    mask: np.ndarray, label: int, n: int, seed: int
) -> np.ndarray:
    """Sample up to n distinct (x, y) positions carrying the given label.

    Uniform without replacement; deterministic for a fixed seed. If fewer
    than n pixels carry the label, all of them are returned and a shortfall
    warning is emitted.
    """
    coords = np.argwhere(np.asarray(mask) == label)  # (k, 2) as (y, x)
    if coords.shape[0] == 0:
        raise DataError(f"mask contains no pixels with label {label}")
    xy = coords[:, ::-1]
    if coords.shape[0] <= n:
        if coords.shape[0] < n:
            warnings.warn(
                f"requested {n} pixels of label {label}, only "
                f"{coords.shape[0]} available",
                stacklevel=2,
            )
        return xy
    rng = np.random.default_rng(seed)
    pick = rng.choice(coords.shape[0], size=n, replace=False)
    return xy[pick]


def interior_mask(mask: np.ndarray, patch_size: int) -> np.ndarray:
    """Zero out labels whose centered patch would leave the image."""
    lo = patch_size // 2
    hi = patch_size - lo
    out = np.zeros_like(mask)
    h, w = mask.shape
    if h >= patch_size and w >= patch_size:
        out[lo:h - hi + 1, lo:w - hi + 1] = mask[lo:h - hi + 1, lo:w - hi + 1]
    return out


def extract_patch(gray: np.ndarray, x: int, y: int, patch_size: int) -> np.ndarray:
    lo = patch_size // 2
    return gray[y - lo:y - lo + patch_size, x - lo:x - lo + patch_size]


def build_feature_table(
    rois: list[Roi],
    n_per_class: int,
    patch_size: int = 100,
    seed: int = 0,
    radiomics_cfg: RadiomicsConfig | None = None,
    jobs: int = 1,
    registered: list[RegisteredRoi] | None = None,
) -> FeatureTable:
    """Sample pixels per class across all ROIs and attach both feature sets.

    Pixels are drawn uniformly per class from the union of registered ROI
    masks, restricted to positions whose centered patch lies fully inside
    the image (out-of-bounds candidates are counted, not padded) and whose
    polarimetry planes are valid. Deterministic for fixed inputs and seed.
    """
    radiomics_cfg = radiomics_cfg or RadiomicsConfig()
    if registered is None:
        registered = [register_roi(r) for r in rois]
    rng = np.random.default_rng(seed)

    picks: list[tuple[int, int, int, int]] = []  # (roi_idx, x, y, class label)
    skipped = 0
    for mask_label in (1, 2, 3):
        candidates = []
        for ri, reg in enumerate(registered):
            inner = interior_mask(reg.mask, patch_size)
            valid_pbp = np.all(np.isfinite(reg.pbp.values), axis=2)
            inner = np.where(valid_pbp, inner, 0)
            skipped += int(
                np.count_nonzero(reg.mask == mask_label)
                - np.count_nonzero(inner == mask_label)
            )
            for y, x in np.argwhere(inner == mask_label):
                candidates.append((ri, int(x), int(y)))
        if not candidates:
            continue
        take = min(n_per_class, len(candidates))
        if take < n_per_class:
            warnings.warn(
                f"class label {mask_label}: requested {n_per_class} pixels, "
                f"only {len(candidates)} in bounds",
                stacklevel=2,
            )
        idx = (
            rng.choice(len(candidates), size=take, replace=False)
            if take < len(candidates)
            else np.arange(take)
        )
        for k in idx:
            ri, x, y = candidates[k]
            picks.append((ri, x, y, mask_label - 1))

    if not picks:
        raise DataError("no labeled in-bounds pixels found in any ROI")

    # polarimetry features are a cheap gather; radiomics patches dominate,
    # so parallel tasks ship one ROI's grayscale plus its pixel list only
    pbp_rows = np.stack(
        [registered[ri].pbp.values[y, x] for ri, x, y, _ in picks]
    )
    radiomics_rows = np.empty((len(picks), len(RADIOMICS_NAMES)))
    by_roi: dict[int, list[int]] = {}
    for pos, (ri, _, _, _) in enumerate(picks):
        by_roi.setdefault(ri, []).append(pos)

    def roi_chunk(gray: np.ndarray, coords: list[tuple[int, int]]) -> np.ndarray:
        return np.stack(
            [
                extract_radiomics(
                    GrayPatch(values=extract_patch(gray, x, y, patch_size)),
                    radiomics_cfg,
                )
                for x, y in coords
            ]
        )

    tasks = []
    task_positions = []
    for ri, positions in by_roi.items():
        for start in range(0, len(positions), 250):
            chunk_pos = positions[start : start + 250]
            tasks.append(
                (
                    registered[ri].gray,
                    [(picks[pos][1], picks[pos][2]) for pos in chunk_pos],
                )
            )
            task_positions.append(chunk_pos)
    if jobs > 1:
        chunks = Parallel(n_jobs=jobs)(
            delayed(roi_chunk)(gray, coords) for gray, coords in tasks
        )
    else:
        chunks = [roi_chunk(gray, coords) for gray, coords in tasks]
    for positions, chunk in zip(task_positions, chunks):
        radiomics_rows[positions] = chunk

    return FeatureTable(
        patient_ids=[registered[p[0]].roi.patient_id for p in picks],
        roi_ids=[registered[p[0]].roi.roi_id for p in picks],
        xy=np.array([(p[1], p[2]) for p in picks], dtype=int),
        labels=np.array([p[3] for p in picks], dtype=int),
        features=np.hstack([pbp_rows, radiomics_rows]),
        skipped_out_of_bounds=skipped,
    )


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

STD_FLOOR = 1e-12


@dataclass
class NormStats:
    mean: np.ndarray  # (116,)
    std: np.ndarray  # (116,), constant features carry std 1


def fit_normalizer(features: np.ndarray) -> NormStats:
    """Per-feature z-score statistics from training rows only."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 2 or features.shape[0] < 2:
        raise DataError("need at least two training rows to fit normalization")
    mean = features.mean(axis=0)
    std = features.std(axis=0)
    std = np.where(std < STD_FLOOR, 1.0, std)
    return NormStats(mean=mean, std=std)


def apply_normalizer(features: np.ndarray, stats: NormStats) -> np.ndarray:
    features = np.asarray(features, dtype=float)
    if features.size == 0:
        raise DataError("cannot normalize an empty feature array")
    return (features - stats.mean) / stats.std


# ---------------------------------------------------------------------------
# Leave-one-patient-out folds
# ---------------------------------------------------------------------------

@dataclass
class FoldPlan:
    """Patient groups: one group's rows form one test fold."""

    groups: dict[str, list[str]]  # group id -> patient ids

    def __post_init__(self):
        seen: dict[str, str] = {}
        for gid, patients in self.groups.items():
            for p in patients:
                if p in seen:
                    raise ConfigError(
                        f"patient {p!r} appears in groups {seen[p]!r} and {gid!r}"
                    )
                seen[p] = gid

    def patients(self) -> set[str]:
        return {p for ps in self.groups.values() for p in ps}

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps({"groups": self.groups}, indent=2, sort_keys=True) + "\n"
        )

    @classmethod
    def from_json(cls, path: str | Path) -> "FoldPlan":
        return cls(groups=json.loads(Path(path).read_text())["groups"])


def filter_patients(table: FeatureTable, patients: set[str]) -> FeatureTable:
    idx = np.array(
        [i for i, p in enumerate(table.patient_ids) if p in patients], dtype=int
    )
    return table.subset(idx)


def lopo_splits(
    table: FeatureTable, plan: FoldPlan
) -> list[tuple[str, np.ndarray, np.ndarray]]:
    """(group id, train indices, test indices) per fold, ordered by group id.

    Every patient in the table must be assigned to exactly one group so no
    row silently escapes testing.
    """
    assigned = plan.patients()
    missing = set(table.patient_ids) - assigned
    if missing:
        raise ConfigError(
            f"patients {sorted(missing)} are not assigned to any fold group; "
            "filter the table or extend the fold plan"
        )
    patient_arr = np.array(table.patient_ids)
    folds = []
    for gid in sorted(plan.groups):
        in_group = np.isin(patient_arr, plan.groups[gid])
        test_idx = np.flatnonzero(in_group)
        train_idx = np.flatnonzero(~in_group)
        folds.append((gid, train_idx, test_idx))
    return folds
