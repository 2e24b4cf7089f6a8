"""Decode the 23 polarimetry basis parameters from normalized Mueller matrices.

Four parameter families are extracted per pixel:

* ``mmpd_*``  -- Lu-Chipman polar decomposition M = M_delta @ M_R @ M_D:
  diattenuation D, linear retardance delta, optical rotation psi,
  depolarization Delta.
* ``mmt_*``   -- transform parameters: anisotropy degree t1, polarizance b
  (here the (m22+m33)/2 convention), normalized anisotropy A, circular
  birefringence beta.
* ``ri_*``    -- rotation invariants DL, PL, DC, PC, rL, qL, kC.
* ``id_*``    -- residuals of the algebraic identities satisfied by pure
  linear retarders (P1..P4) and pure linear diattenuators (P5..P8); each
  vanishes exactly on its ideal element family.

All functions accept a single 4x4 matrix or any (..., 4, 4) stack and are
NaN-transparent: pixels flagged invalid upstream stay NaN in every output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .mueller import MuellerImage, save_plane_image, load_plane_image

PBP_NAMES = (
    "mmpd_D", "mmpd_delta", "mmpd_psi", "mmpd_Delta",
    "mmt_A", "mmt_b", "mmt_beta", "mmt_t1",
    "ri_DL", "ri_PL", "ri_DC", "ri_PC", "ri_rL", "ri_qL", "ri_kC",
    "id_P1", "id_P2", "id_P3", "id_P4",
    "id_P5", "id_P6", "id_P7", "id_P8",
)

#: diattenuation at which M_D is treated as singular (pseudo-inverse branch)
D_SINGULAR = 1.0 - 1e-9


def _check_stack(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim < 2 or m.shape[-2:] != (4, 4):
        raise DataError(f"expected (..., 4, 4) Mueller matrices, got {m.shape}")
    return m


def _robust_inv(stack: np.ndarray) -> np.ndarray:
    """Batched 4x4/3x3 inverse falling back to pseudo-inverse where singular."""
    det = np.linalg.det(stack)
    bad = np.abs(det) < 1e-12
    if not bad.any():
        return np.linalg.inv(stack)
    safe = np.where(bad[..., None, None], np.eye(stack.shape[-1]), stack)
    inv = np.linalg.inv(safe)
    if stack[bad].size:
        inv[bad] = np.linalg.pinv(stack[bad])
    return inv


# ---------------------------------------------------------------------------
# Lu-Chipman polar decomposition
# ---------------------------------------------------------------------------

@dataclass
class MmpdResult:
    D: np.ndarray
    delta: np.ndarray
    psi: np.ndarray
    Delta: np.ndarray
    md_singular: np.ndarray  # True where the pseudo-inverse branch was taken


def mmpd(m) -> MmpdResult:
    """Polar-decompose normalized matrices into (D, delta, psi, Delta).

    delta is the linear retardance in [0, pi]; psi the optical rotation in
    (-pi/2, pi/2]; Delta = 1 - (|tr M_delta| - 1)/3. Works on any stack
    shape; scalar inputs yield scalar arrays (0-d).
    """
    m = _check_stack(m)
    scalar = m.ndim == 2
    stack = m[None] if scalar else m

    valid = np.all(np.isfinite(stack), axis=(-2, -1))
    work = np.where(valid[..., None, None], stack, np.eye(4))

    dv = work[..., 0, 1:]
    d = np.linalg.norm(dv, axis=-1)
    md_singular = d >= D_SINGULAR

    # diattenuator factor
    dsq = np.clip(1.0 - d * d, 0.0, None)
    dp = np.sqrt(dsq)
    dh = np.where(d[..., None] > 1e-15, dv / np.maximum(d[..., None], 1e-300), 0.0)
    md = dp[..., None, None] * np.eye(3) + (1.0 - dp)[..., None, None] * (
        dh[..., :, None] * dh[..., None, :]
    )
    m_d = np.zeros_like(work)
    m_d[..., 0, 0] = 1.0
    m_d[..., 0, 1:] = dv
    m_d[..., 1:, 0] = dv
    m_d[..., 1:, 1:] = md

    mp = work @ _robust_inv(m_d)
    sub = mp[..., 1:, 1:]
    mm = sub @ np.swapaxes(sub, -2, -1)
    lam = np.clip(np.linalg.eigvalsh(mm), 0.0, None)  # ascending
    r1, r2, r3 = (np.sqrt(lam[..., i]) for i in range(3))
    sign = np.where(np.linalg.det(sub) < 0.0, -1.0, 1.0)

    eye3 = np.eye(3)
    a_mat = mm + (r1 * r2 + r2 * r3 + r3 * r1)[..., None, None] * eye3
    b_mat = (r1 + r2 + r3)[..., None, None] * mm + (r1 * r2 * r3)[
        ..., None, None
    ] * eye3
    m_delta_sub = sign[..., None, None] * (_robust_inv(a_mat) @ b_mat)

    m_delta = np.zeros_like(work)
    m_delta[..., 0, 0] = 1.0
    m_delta[..., 1:, 0] = mp[..., 1:, 0]
    m_delta[..., 1:, 1:] = m_delta_sub

    m_r = _robust_inv(m_delta) @ mp

    tr = 1.0 + np.trace(m_delta_sub, axis1=-2, axis2=-1)
    big_delta = 1.0 - (np.abs(tr) - 1.0) / 3.0

    num = m_r[..., 2, 1] - m_r[..., 1, 2]
    den = m_r[..., 1, 1] + m_r[..., 2, 2]
    delta = np.arccos(np.clip(np.hypot(num, den) - 1.0, -1.0, 1.0))
    psi = np.arctan2(num, den)
    psi = np.where(psi > np.pi / 2, psi - np.pi, psi)
    psi = np.where(psi <= -np.pi / 2, psi + np.pi, psi)

    nan = np.where(valid, 1.0, np.nan)
    out = MmpdResult(
        D=d * nan,
        delta=delta * nan,
        psi=psi * nan,
        Delta=big_delta * nan,
        md_singular=md_singular & valid,
    )
    if scalar:
        out = MmpdResult(*(np.asarray(v[0]) for v in
                           (out.D, out.delta, out.psi, out.Delta,
                            out.md_singular)))
    return out


# ---------------------------------------------------------------------------
# Transform parameters, rotation invariants, identity residuals
# ---------------------------------------------------------------------------

def mmt(m) -> dict[str, np.ndarray]:
    """Transform parameters {A, b, beta, t1} from the central 2x2 block."""
    m = _check_stack(m)
    m22, m23 = m[..., 1, 1], m[..., 1, 2]
    m32, m33 = m[..., 2, 1], m[..., 2, 2]
    t1 = 0.5 * np.hypot(m22 - m33, m23 + m32)
    b = 0.5 * (m22 + m33)
    denom = b * b + t1 * t1
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(denom > 0.0, 2.0 * b * t1 / np.where(denom > 0, denom, 1.0), 0.0)
    a = np.where(np.isfinite(denom), a, np.nan)
    beta = 0.5 * (m23 - m32)
    return {"A": a, "b": b, "beta": beta, "t1": t1}


def rotation_invariants(m) -> dict[str, np.ndarray]:
    """The seven parameters unchanged by in-plane sample rotation."""
    m = _check_stack(m)
    return {
        "DL": np.hypot(m[..., 0, 1], m[..., 0, 2]),
        "PL": np.hypot(m[..., 1, 0], m[..., 2, 0]),
        "DC": m[..., 0, 3],
        "PC": m[..., 3, 0],
        "rL": np.hypot(m[..., 1, 3], m[..., 2, 3]),
        "qL": np.hypot(m[..., 3, 1], m[..., 3, 2]),
        "kC": m[..., 3, 3],
    }


def identity_params(m) -> dict[str, np.ndarray]:
    """Residuals of the pure-linear-retarder identities (P1..P4) and the
    pure-linear-diattenuator identities (P5..P8)."""
    m = _check_stack(m)
    return {
        "P1": m[..., 1, 1] + m[..., 2, 2] - 1.0 - m[..., 3, 3],
        "P2": m[..., 1, 2] - m[..., 2, 1],
        "P3": m[..., 1, 3] + m[..., 3, 1],
        "P4": m[..., 2, 3] + m[..., 3, 2],
        "P5": m[..., 0, 1] - m[..., 1, 0],
        "P6": m[..., 0, 2] - m[..., 2, 0],
        "P7": m[..., 0, 3],
        "P8": m[..., 3, 0],
    }


def pbp_vector(m) -> np.ndarray:
    """All 23 parameters of one or more matrices, in canonical order.

    Returns shape (..., 23) matching the input stack shape.
    """
    m = _check_stack(m)
    pd = mmpd(m)
    tr = mmt(m)
    ri = rotation_invariants(m)
    ip = identity_params(m)
    planes = [
        pd.D, pd.delta, pd.psi, pd.Delta,
        tr["A"], tr["b"], tr["beta"], tr["t1"],
        ri["DL"], ri["PL"], ri["DC"], ri["PC"], ri["rL"], ri["qL"], ri["kC"],
        ip["P1"], ip["P2"], ip["P3"], ip["P4"],
        ip["P5"], ip["P6"], ip["P7"], ip["P8"],
    ]
    out = np.stack([np.asarray(p, dtype=float) for p in planes], axis=-1)
    # invalid pixels poison every parameter, not only the mmpd ones
    invalid = ~np.all(np.isfinite(m), axis=(-2, -1))
    if invalid.any():
        out[invalid] = np.nan
    return out


# ---------------------------------------------------------------------------
# Image-level stacking and serialization
# ---------------------------------------------------------------------------

@dataclass
class PbpImage:
    """H x W x 23 stack of decoded parameters in canonical plane order."""

    values: np.ndarray  # (H, W, 23)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[2] != len(PBP_NAMES):
            raise DataError(f"expected (H, W, 23) values, got {v.shape}")
        self.values = v

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def plane(self, name: str) -> np.ndarray:
        return self.values[:, :, PBP_NAMES.index(name)]

    def planes(self) -> np.ndarray:
        """Channel-first (23, H, W) view for serialization."""
        return np.moveaxis(self.values, -1, 0)


def pbp_stack(img: MuellerImage) -> PbpImage:
    """Decode every pixel of a normalized image into its 23 parameters."""
    return PbpImage(values=pbp_vector(img.pixels))


def save_pbp_image(img: PbpImage, directory) -> None:
    save_plane_image(
        np.asarray(img.planes(), dtype=np.float32), list(PBP_NAMES), directory
    )


def load_pbp_image(directory) -> PbpImage:
    planes, header = load_plane_image(directory)
    if list(header["channels"]) != list(PBP_NAMES):
        raise DataError(f"unexpected channel order in {directory}")
    return PbpImage(values=np.moveaxis(planes, 0, -1))
