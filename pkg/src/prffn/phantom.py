"""Synthetic paired Mueller-matrix + H&E-like ROI generator.

Each ROI is built from per-pixel physical factors: a diagonal depolarizer,
a circular+linear retarder, and a linear diattenuator, composed per pixel
and scaled by a smooth intensity field, with Gaussian element noise on
top. Class identity enters through the means of the retardance /
depolarization / diattenuation fields (spread controlled by ``polar_gap``)
and through the correlation length and contrast of the H&E texture field
(spread controlled by ``texture_gap``). Per-patient parameter jitter makes
leave-one-patient-out splits meaningfully harder than random splits.

The texture is thresholded smoothed noise: its class signal lives at blob
scale, so average filtering erases it the way it erases fine H&E detail,
while the polarization class signal lives in local field means, which
averaging preserves. This is the mechanism behind the resolution-sweep
acceptance checks.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .dataset import CLASS_TAGS, MASK_LABEL_BY_TAG, FoldPlan, Roi
from .errors import SpecError
from .mueller import (
    MuellerImage,
    load_mueller_image,
    normalize_by_m11,
    save_mueller_image,
    validate_physical,
)
from .rasters import load_mask_png, load_rgb_png, save_mask_png, save_rgb_png
from .registration import Affine2D


def _stable_hash(*parts: str) -> int:
    digest = hashlib.sha256("/".join(parts).encode()).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass
class PhantomSpec:
    """Generative dials for the synthetic dataset.

    ``polar_gap`` and ``texture_gap`` in [0, 1] scale the between-class
    spread of the polarization and texture parameters; 0 collapses the
    classes, 1 separates them maximally.
    """

    roi_height: int = 160
    roi_width: int = 160
    polar_gap: float = 0.6
    texture_gap: float = 0.6
    joint_coupling: float = 0.6  # cross-modality correlation signal strength
    patient_jitter: float = 1.0  # scales all per-patient offsets
    reliability_jitter: float = 0.5  # amplitude of within-ROI reliability fields
    reliability_scale: float = 30.0  # correlation length of reliability fields
    noise_sigma: float = 0.005  # Gaussian noise on Mueller elements
    he_noise: float = 5.0  # iid gray-level noise on the H&E render
    region_fill: float = 0.55  # fraction of the ROI covered by labeled blobs
    region_scale: float = 18.0  # correlation length of the region layout
    affine_offset: tuple[int, int] | None = None  # (tx, ty) moving-frame shift

    def __post_init__(self):
        if not (0.0 <= self.polar_gap <= 1.0 and 0.0 <= self.texture_gap <= 1.0):
            raise SpecError("class separability gaps must lie in [0, 1]")
        if self.roi_height < 8 or self.roi_width < 8:
            raise SpecError("ROI dimensions too small")

    def to_json(self, path: str | Path) -> None:
        data = asdict(self)
        if data["affine_offset"] is not None:
            data["affine_offset"] = list(data["affine_offset"])
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "PhantomSpec":
        data = json.loads(Path(path).read_text())
        if data.get("affine_offset") is not None:
            data["affine_offset"] = tuple(data["affine_offset"])
        return cls(**data)


# Per-class parameter ladders. The polarimetry means sit on a
# NonCancerous < ICC < HCC ladder whose rungs scale with polar_gap, so the
# hard polar confusion is ICC vs NonCancerous; the texture blob radii sit
# on an HCC < ICC < NonCancerous ladder scaled by texture_gap, so texture
# struggles with HCC vs ICC. Fusing the two resolves both boundaries.

def _class_polar(spec: PhantomSpec, tag: str) -> dict[str, float]:
    g = spec.polar_gap
    step = {"NonCancerous": 0.0, "ICC": 1.0, "HCC": 2.0}[tag]
    return {
        "delta": 0.45 + 0.55 * g * step,
        "depol": 0.25 + 0.15 * g * step,
        "diatten": 0.05 + 0.08 * g * step,
    }


def _class_texture(spec: PhantomSpec, tag: str) -> dict[str, float]:
    t = spec.texture_gap
    step = {"HCC": -1.0, "ICC": 0.0, "NonCancerous": 1.0}[tag]
    return {
        "radius": 2.0 * float(np.exp(0.5 * t * step)),
        "contrast": 0.55 - 0.08 * t * step,
    }


def _patient_jitter(spec: PhantomSpec, patient_id: str, seed: int) -> dict[str, float]:
    """Mild per-patient offsets; these make leave-one-patient-out folds
    harder than random splits without shifting any patient's feature
    distribution out of the training envelope."""
    rng = np.random.default_rng([seed, _stable_hash(patient_id)])
    j = spec.patient_jitter
    return {
        "delta": rng.normal(0.0, 0.08 * j),
        "depol": rng.normal(0.0, 0.03 * j),
        "diatten": rng.normal(0.0, 0.015 * j),
        "radius_mult": float(np.exp(rng.normal(0.0, 0.15 * j))),
        "contrast": rng.normal(0.0, 0.05 * j),
        "polar_noise_mult": float(np.clip(np.exp(rng.normal(0.0, 0.12 * j)), 0.7, 1.4)),
        "contrast_mult": float(np.clip(np.exp(rng.normal(0.0, 0.12 * j)), 0.7, 1.4)),
    }


def _smooth_field(rng: np.random.Generator, shape, sigma: float) -> np.ndarray:
    """Unit-variance zero-mean Gaussian random field with correlation sigma."""
    f = gaussian_filter(rng.standard_normal(shape), sigma, mode="reflect")
    sd = f.std()
    return (f - f.mean()) / (sd if sd > 0 else 1.0)


# batched ideal-element constructors over (H, W) parameter fields

def _field_depolarizer(d_axes: np.ndarray) -> np.ndarray:
    h, w, _ = d_axes.shape
    m = np.zeros((h, w, 4, 4))
    m[..., 0, 0] = 1.0
    for i in range(3):
        m[..., i + 1, i + 1] = d_axes[..., i]
    return m


def _field_circular_retarder(psi: np.ndarray) -> np.ndarray:
    c, s = np.cos(psi), np.sin(psi)
    m = np.zeros((*psi.shape, 4, 4))
    m[..., 0, 0] = 1.0
    m[..., 1, 1] = c
    m[..., 1, 2] = -s
    m[..., 2, 1] = s
    m[..., 2, 2] = c
    m[..., 3, 3] = 1.0
    return m


def _field_linear_retarder(theta: np.ndarray, delta: np.ndarray) -> np.ndarray:
    c2, s2 = np.cos(2 * theta), np.sin(2 * theta)
    cd, sd = np.cos(delta), np.sin(delta)
    m = np.zeros((*theta.shape, 4, 4))
    m[..., 0, 0] = 1.0
    m[..., 1, 1] = c2 * c2 + s2 * s2 * cd
    m[..., 1, 2] = c2 * s2 * (1 - cd)
    m[..., 1, 3] = -s2 * sd
    m[..., 2, 1] = c2 * s2 * (1 - cd)
    m[..., 2, 2] = s2 * s2 + c2 * c2 * cd
    m[..., 2, 3] = c2 * sd
    m[..., 3, 1] = s2 * sd
    m[..., 3, 2] = -c2 * sd
    m[..., 3, 3] = cd
    return m


def _field_linear_diattenuator(d: np.ndarray, theta: np.ndarray) -> np.ndarray:
    c2, s2 = np.cos(2 * theta), np.sin(2 * theta)
    dv = np.stack([d * c2, d * s2, np.zeros_like(d)], axis=-1)
    dp = np.sqrt(np.clip(1.0 - d * d, 0.0, None))
    safe_d = np.where(d > 1e-15, d, 1.0)
    dh = dv / safe_d[..., None]
    m = np.zeros((*d.shape, 4, 4))
    m[..., 0, 0] = 1.0
    m[..., 0, 1:] = dv
    m[..., 1:, 0] = dv
    outer = dh[..., :, None] * dh[..., None, :]
    m[..., 1:, 1:] = dp[..., None, None] * np.eye(3) + (1.0 - dp)[
        ..., None, None
    ] * outer
    return m


def generate_roi(
    spec: PhantomSpec, class_tag: str, patient_id: str, roi_id: str, seed: int
) -> Roi:
    """Deterministically generate one fully registered ROI."""
    if class_tag not in CLASS_TAGS:
        raise SpecError(f"unknown class tag {class_tag!r}")
    h, w = spec.roi_height, spec.roi_width
    rng = np.random.default_rng([seed, _stable_hash(patient_id, roi_id)])
    jit = _patient_jitter(spec, patient_id, seed)
    polar = _class_polar(spec, class_tag)
    texture = _class_texture(spec, class_tag)

    # region layout: thresholded smooth noise
    layout = _smooth_field(rng, (h, w), spec.region_scale)
    thresh = np.quantile(layout, 1.0 - spec.region_fill)
    mask = np.where(layout > thresh, MASK_LABEL_BY_TAG[class_tag], 0).astype(np.int64)

    # within-ROI reliability fields: every ROI contains regions where the
    # polarimetric signal is noisy and regions where the texture contrast
    # is washed out, independently; this is what per-sample fusion
    # weighting can exploit and fixed late averaging cannot
    rel = spec.reliability_jitter
    rho_pol = np.clip(
        np.exp(rel * _smooth_field(rng, (h, w), spec.reliability_scale))
        * jit["polar_noise_mult"],
        0.35, 2.5,
    )
    rho_tex = np.clip(
        np.exp(rel * _smooth_field(rng, (h, w), spec.reliability_scale))
        * jit["contrast_mult"],
        0.35, 2.5,
    )

    # joint latent: a patch-scale field that shifts the retardance in every
    # class but modulates the texture amplitude with a class-dependent sign
    # (+ for HCC, - for ICC, absent for non-cancerous). The two cancer
    # classes therefore share marginal distributions along this axis and
    # can only be told apart by reading both modalities together.
    u = _smooth_field(rng, (h, w), 40.0)
    couple_sign = {"HCC": 1.0, "ICC": -1.0, "NonCancerous": 0.0}[class_tag]

    delta = np.clip(
        polar["delta"] + jit["delta"]
        + 0.22 * spec.joint_coupling * u
        + 0.20 * rho_pol * _smooth_field(rng, (h, w), 6.0),
        0.05, np.pi - 0.05,
    )
    theta = 0.5 * np.pi * _smooth_field(rng, (h, w), 10.0) * 0.5
    psi = 0.12 * _smooth_field(rng, (h, w), 10.0)
    depol = np.clip(
        polar["depol"] + jit["depol"]
        + 0.06 * rho_pol * _smooth_field(rng, (h, w), 6.0),
        0.02, 0.9,
    )
    diatten = np.clip(
        polar["diatten"] + jit["diatten"]
        + 0.03 * rho_pol * _smooth_field(rng, (h, w), 6.0),
        0.0, 0.8,
    )
    theta_d = 0.5 * np.pi * _smooth_field(rng, (h, w), 10.0) * 0.5
    axis_jitter = 0.02 * rng.standard_normal((h, w, 3))

    d_axes = np.clip(1.0 - depol[:, :, None] + axis_jitter, 0.02, 1.0)
    pixels = (
        _field_depolarizer(d_axes)
        @ _field_circular_retarder(psi)
        @ _field_linear_retarder(theta, delta)
        @ _field_linear_diattenuator(diatten, theta_d)
    )

    intensity = 1.0 + 0.2 * _smooth_field(rng, (h, w), 20.0)
    intensity = np.clip(intensity, 0.5, 1.5)
    pixels *= intensity[:, :, None, None]
    pixels += rng.normal(0.0, spec.noise_sigma, size=pixels.shape)
    mueller = MuellerImage(pixels=pixels)

    report = validate_physical(
        normalize_by_m11(mueller).image.pixels[h // 2, w // 2]
    )
    if report.nonfinite:
        raise SpecError("phantom spec produced non-finite Mueller matrices")

    # H&E-like render: class-scale texture modulated by the local texture
    # reliability (rho_tex < 1 washes contrast out) and by the joint
    # latent with the class-dependent sign, plus sensor noise
    radius = max(texture["radius"] * jit["radius_mult"], 0.4)
    contrast = float(np.clip(texture["contrast"] + jit["contrast"], 0.05, 1.0))
    amp_mod = np.clip(
        1.0 + couple_sign * 0.55 * spec.joint_coupling * u, 0.15, None
    )
    t = _smooth_field(rng, (h, w), radius)
    shade = np.clip(0.5 + 0.5 * contrast * rho_tex * amp_mod * t, 0.0, 1.0)
    he = np.empty((h, w, 3))
    he[:, :, 0] = 225.0 - 95.0 * shade
    he[:, :, 1] = 205.0 - 140.0 * shade
    he[:, :, 2] = 228.0 - 60.0 * shade
    he += rng.normal(0.0, spec.he_noise, size=he.shape)
    he = np.clip(he, 0.0, 255.0)

    transform = Affine2D.identity()
    if spec.affine_offset is not None:
        tx, ty = spec.affine_offset
        moved_he = np.zeros((h + abs(ty), w + abs(tx), 3))
        moved_mask = np.zeros((h + abs(ty), w + abs(tx)), dtype=np.int64)
        oy, ox = max(ty, 0), max(tx, 0)
        moved_he[oy:oy + h, ox:ox + w] = he
        moved_mask[oy:oy + h, ox:ox + w] = mask
        he, mask = moved_he, moved_mask
        transform = Affine2D.translation(-ox, -oy)

    return Roi(
        roi_id=roi_id,
        patient_id=patient_id,
        class_tag=class_tag,
        mueller=mueller,
        he_image=he,
        mask=mask,
        transform=transform,
    )


def generate_dataset(
    spec: PhantomSpec,
    n_patients_per_class: int,
    rois_per_patient: int,
    seed: int,
) -> tuple[list[Roi], FoldPlan]:
    """A patient-grouped dataset: group g holds one HCC and one ICC patient;
    non-cancerous ROIs are drawn from one of the group's patients
    (alternating) so every fold keeps patient-level separation."""
    if n_patients_per_class < 1 or rois_per_patient < 1:
        raise SpecError("patient and ROI counts must be >= 1")
    rois: list[Roi] = []
    groups: dict[str, list[str]] = {}
    for g in range(n_patients_per_class):
        hcc_patient = f"HCC{g:02d}"
        icc_patient = f"ICC{g:02d}"
        groups[f"group{g:02d}"] = [hcc_patient, icc_patient]
        for r in range(rois_per_patient):
            rois.append(
                generate_roi(spec, "HCC", hcc_patient, f"{hcc_patient}-roi{r}", seed)
            )
            rois.append(
                generate_roi(spec, "ICC", icc_patient, f"{icc_patient}-roi{r}", seed)
            )
            nc_patient = hcc_patient if g % 2 == 0 else icc_patient
            rois.append(
                generate_roi(
                    spec, "NonCancerous", nc_patient, f"{nc_patient}-nc{r}", seed
                )
            )
    return rois, FoldPlan(groups=groups)


# ---------------------------------------------------------------------------
# On-disk layout: one directory per ROI + fold plan + round-trippable spec
# ---------------------------------------------------------------------------

def save_dataset(
    rois: list[Roi], plan: FoldPlan, spec: PhantomSpec, directory: str | Path
) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = []
    for roi in rois:
        roi_dir = directory / roi.roi_id
        roi_dir.mkdir(parents=True, exist_ok=True)
        save_mueller_image(roi.mueller, roi_dir / "mueller")
        save_rgb_png(roi.he_image, roi_dir / "he.png")
        save_mask_png(roi.mask, roi_dir / "mask.png")
        np.savetxt(roi_dir / "transform.txt", roi.transform.matrix)
        index.append(
            {
                "roi_id": roi.roi_id,
                "patient_id": roi.patient_id,
                "class_tag": roi.class_tag,
            }
        )
    (directory / "index.json").write_text(
        json.dumps(index, indent=2, sort_keys=True) + "\n"
    )
    plan.to_json(directory / "fold_plan.json")
    spec.to_json(directory / "phantom_spec.json")


def load_dataset(directory: str | Path) -> tuple[list[Roi], FoldPlan, PhantomSpec]:
    directory = Path(directory)
    index = json.loads((directory / "index.json").read_text())
    rois = []
    for entry in index:
        roi_dir = directory / entry["roi_id"]
        rois.append(
            Roi(
                roi_id=entry["roi_id"],
                patient_id=entry["patient_id"],
                class_tag=entry["class_tag"],
                mueller=load_mueller_image(roi_dir / "mueller"),
                he_image=load_rgb_png(roi_dir / "he.png"),
                mask=load_mask_png(roi_dir / "mask.png"),
                transform=Affine2D(np.loadtxt(roi_dir / "transform.txt")),
            )
        )
    plan = FoldPlan.from_json(directory / "fold_plan.json")
    spec = PhantomSpec.from_json(directory / "phantom_spec.json")
    return rois, plan, spec
