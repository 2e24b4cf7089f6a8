"""Mueller matrix images: forward simulation, reconstruction, calibration,
normalization, physicality checks, and the on-disk plane format.

Conventions used throughout:

* Mueller matrices are 4x4 float64 arrays; element names m11..m44 follow
  1-based row/column indices, so ``m[0, 0]`` is m11.
* Images stack per-pixel matrices as arrays of shape (H, W, 4, 4).
* Angles are radians. Orientation angles enter element formulas through
  cos(2*theta)/sin(2*theta) as usual for Stokes space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CalibrationError, DataError

PLANE_NAMES = tuple(f"m{i}{j}" for i in range(1, 5) for j in range(1, 5))

#: m11 values at or below this are flagged invalid during normalization.
M11_EPS = 1e-12

#: |mij| may exceed 1 by at most this much and still count as physical.
PHYSICAL_TOL = 0.02


# ---------------------------------------------------------------------------
# Stokes vectors and ideal optical elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StokesVector:
    """Polarization state (s0 = total intensity)."""

    s0: float
    s1: float
    s2: float
    s3: float

    def as_array(self) -> np.ndarray:
        return np.array([self.s0, self.s1, self.s2, self.s3], dtype=float)

    def is_physical(self, tol: float = 1e-9) -> bool:
        return self.s0 >= 0 and (
            self.s1**2 + self.s2**2 + self.s3**2 <= self.s0**2 + tol
        )


def rotation_matrix(theta: float) -> np.ndarray:
    """Mueller rotation matrix for an in-plane sample rotation by theta."""
    c, s = np.cos(2 * theta), np.sin(2 * theta)
    return np.array(
        [[1, 0, 0, 0], [0, c, s, 0], [0, -s, c, 0], [0, 0, 0, 1]], dtype=float
    )


def linear_retarder(theta: float, delta: float) -> np.ndarray:
    """Linear retarder, fast axis at theta, retardance delta."""
    c2, s2 = np.cos(2 * theta), np.sin(2 * theta)
    cd, sd = np.cos(delta), np.sin(delta)
    return np.array(
        [
            [1, 0, 0, 0],
            [0, c2 * c2 + s2 * s2 * cd, c2 * s2 * (1 - cd), -s2 * sd],
            [0, c2 * s2 * (1 - cd), s2 * s2 + c2 * c2 * cd, c2 * sd],
            [0, s2 * sd, -c2 * sd, cd],
        ],
        dtype=float,
    )


def circular_retarder(psi: float) -> np.ndarray:
    """Circular retarder rotating the s1-s2 plane by psi.

    The angle convention matches the optical-rotation readout used in
    :func:`prffn.pbp.mmpd`: psi is the rotation angle of the (s1, s2)
    sub-plane itself, so decoding a pure ``circular_retarder(psi)`` returns
    exactly psi.
    """
    c, s = np.cos(psi), np.sin(psi)
    return np.array(
        [[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1]], dtype=float
    )


def linear_diattenuator(d: float, theta: float) -> np.ndarray:
    """Normalized linear diattenuator with diattenuation d, axis at theta."""
    if not 0.0 <= d <= 1.0:
        raise DataError(f"diattenuation must be in [0, 1], got {d}")
    c2, s2 = np.cos(2 * theta), np.sin(2 * theta)
    dv = d * np.array([c2, s2, 0.0])
    return diattenuator_from_vector(dv)


def diattenuator_from_vector(dv: np.ndarray) -> np.ndarray:
    """Normalized diattenuator built from a 3-component diattenuation vector."""
    dv = np.asarray(dv, dtype=float)
    d = float(np.linalg.norm(dv))
    m = np.eye(4)
    m[0, 1:] = dv
    m[1:, 0] = dv
    dp = np.sqrt(max(1.0 - d * d, 0.0))
    if d > 1e-15:
        dh = dv / d
        m[1:, 1:] = dp * np.eye(3) + (1 - dp) * np.outer(dh, dh)
    return m


def depolarizer(d1: float, d2: float, d3: float) -> np.ndarray:
    """Pure diagonal depolarizer diag(1, d1, d2, d3)."""
    return np.diag([1.0, d1, d2, d3])


def polarizer(theta: float) -> np.ndarray:
    """Ideal linear polarizer at theta (physical, transmittance 1/2)."""
    return 0.5 * linear_diattenuator(1.0, theta)


# ---------------------------------------------------------------------------
# PSG / PSA descriptions
# ---------------------------------------------------------------------------

#: Default quarter-wave plate angles for the generator arm (radians).
DEFAULT_PSG_ANGLES = tuple(np.deg2rad((-45.0, 0.0, 30.0, 60.0)))


@dataclass(frozen=True)
class PsgSequence:
    """Four input polarization states, stored as the columns of [S_in]."""

    states: np.ndarray  # (4, 4), column j = Stokes state j

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.shape != (4, 4):
            raise DataError(f"PSG state matrix must be 4x4, got {s.shape}")
        object.__setattr__(self, "states", s)

    @classmethod
    def from_retarder_angles(cls, angles=DEFAULT_PSG_ANGLES) -> "PsgSequence":
        """States of a horizontal polarizer followed by a quarter-wave plate
        rotated to each of the four given angles."""
        if len(angles) != 4:
            raise DataError("exactly four retarder angles required")
        h = np.array([1.0, 1.0, 0.0, 0.0])
        cols = [linear_retarder(a, np.pi / 2) @ h for a in angles]
        return cls(states=np.stack(cols, axis=1))

    @property
    def matrix(self) -> np.ndarray:
        return self.states

    def inverse(self) -> np.ndarray:
        if not _is_invertible(self.states):
            raise CalibrationError("PSG state matrix is singular")
        return np.linalg.inv(self.states)


@dataclass(frozen=True)
class InstrumentMatrix:
    """Analyzer-arm instrument matrix: one global 4x4 or per-pixel (H, W, 4, 4)."""

    a: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.shape[-2:] != (4, 4) or a.ndim not in (2, 4):
            raise DataError(f"instrument matrix must be (..., 4, 4), got {a.shape}")
        object.__setattr__(self, "a", a)

    @property
    def per_pixel(self) -> bool:
        return self.a.ndim == 4

    def condition_number(self) -> float:
        """Worst-case condition number over pixels."""
        return float(np.max(np.linalg.cond(self.a)))

    def inverse(self) -> np.ndarray:
        if not _is_invertible(self.a):
            raise CalibrationError("instrument matrix is singular")
        return np.linalg.inv(self.a)


def identity_instrument() -> InstrumentMatrix:
    return InstrumentMatrix(a=np.eye(4))


def _is_invertible(m: np.ndarray) -> bool:
    if not np.all(np.isfinite(m)):
        return False
    # rank via SVD handles the per-pixel stack as well
    ranks = np.linalg.matrix_rank(m)
    return bool(np.all(ranks == 4))


# ---------------------------------------------------------------------------
# Mueller images
# ---------------------------------------------------------------------------

@dataclass
class MuellerImage:
    """H x W grid of 4x4 Mueller matrices plus acquisition metadata."""

    pixels: np.ndarray  # (H, W, 4, 4) float64
    wavelength_nm: float = 633.0
    magnification: str = "4x"

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=float)
        if p.ndim != 4 or p.shape[2:] != (4, 4):
            raise DataError(f"pixels must be (H, W, 4, 4), got {p.shape}")
        self.pixels = p

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def m11(self) -> np.ndarray:
        return self.pixels[:, :, 0, 0]

    def planes(self) -> np.ndarray:
        """Channel-first view of shape (16, H, W), ordered m11..m44."""
        return np.moveaxis(
            self.pixels.reshape(self.height, self.width, 16), -1, 0
        )

    @classmethod
    def from_planes(cls, planes: np.ndarray, **meta) -> "MuellerImage":
        planes = np.asarray(planes, dtype=float)
        if planes.ndim != 3 or planes.shape[0] != 16:
            raise DataError(f"expected (16, H, W) planes, got {planes.shape}")
        pixels = np.moveaxis(planes, 0, -1).reshape(
            planes.shape[1], planes.shape[2], 4, 4
        )
        return cls(pixels=pixels, **meta)


# ---------------------------------------------------------------------------
# Forward model, reconstruction, calibration
# ---------------------------------------------------------------------------

def simulate_measurement(
    m: np.ndarray, psg: PsgSequence, a: InstrumentMatrix
) -> np.ndarray:
    """Detector intensities I = a @ m @ [S_in] for one sample matrix or a
    (H, W, 4, 4) stack; column j holds the four readings for PSG state j."""
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise DataError("sample matrix contains non-finite values")
    if not _is_invertible(psg.states):
        raise CalibrationError("PSG state matrix is singular")
    if not _is_invertible(a.a):
        raise CalibrationError("instrument matrix is singular")
    return a.a @ m @ psg.states


def reconstruct_mueller(
    intensities: np.ndarray, psg: PsgSequence, a: InstrumentMatrix
) -> np.ndarray:
    """Invert the forward model: M = a^-1 @ I @ [S_in]^-1.

    Accepts a single 4x4 intensity matrix or a per-pixel (H, W, 4, 4) stack;
    the instrument matrix may be global or per-pixel.
    """
    intensities = np.asarray(intensities, dtype=float)
    if not np.all(np.isfinite(intensities)):
        raise DataError("intensity frames contain non-finite values")
    a_inv = a.inverse()
    s_inv = psg.inverse()
    return a_inv @ intensities @ s_inv


def reconstruct_image(
    intensities: np.ndarray, psg: PsgSequence, a: InstrumentMatrix, **meta
) -> MuellerImage:
    """Pixel-wise reconstruction of a full image from (H, W, 4, 4) frames."""
    return MuellerImage(pixels=reconstruct_mueller(intensities, psg, a), **meta)


@dataclass
class CalibrationResult:
    instrument: InstrumentMatrix
    residual: float  # Frobenius-norm RMS over the stacked system
    rank: int


def calibrate_psa(
    standard_measurements: list[tuple[np.ndarray, np.ndarray]],
    psg: PsgSequence,
) -> CalibrationResult:
    """Least-squares instrument matrix from measurements of known standards.

    Each entry pairs a known (normalized) standard Mueller matrix with the
    4x4 intensities recorded for it. Solves min_a sum_k ||I_k - a M_k S||_F^2
    by stacking the k systems column-wise. At least two distinct standards
    are required so that the stacked system is overdetermined rather than
    resting on a single matrix inversion.
    """
    if len(standard_measurements) < 2:
        raise CalibrationError(
            "need at least two standard samples (e.g. air plus a retarder), "
            f"got {len(standard_measurements)}"
        )
    mats = [np.asarray(m, dtype=float) for m, _ in standard_measurements]
    for i, m1 in enumerate(mats):
        for m2 in mats[i + 1:]:
            if np.allclose(m1, m2, atol=1e-12):
                raise CalibrationError("standard samples must be distinct")

    b_blocks, i_blocks = [], []
    for m_k, i_k in standard_measurements:
        i_k = np.asarray(i_k, dtype=float)
        if not np.all(np.isfinite(i_k)):
            raise DataError("standard intensities contain non-finite values")
        b_blocks.append(np.asarray(m_k, dtype=float) @ psg.states)
        i_blocks.append(i_k)
    b = np.concatenate(b_blocks, axis=1)  # (4, 4k)
    i_stack = np.concatenate(i_blocks, axis=1)  # (4, 4k)

    rank = int(np.linalg.matrix_rank(b))
    if rank < 4:
        raise CalibrationError(
            f"stacked standard system has rank {rank} < 4; add standards "
            "with independent Mueller matrices"
        )
    # I = a B  =>  B^T a^T = I^T
    a_t, *_ = np.linalg.lstsq(b.T, i_stack.T, rcond=None)
    a_hat = a_t.T
    residual = float(np.sqrt(np.mean((a_hat @ b - i_stack) ** 2)))
    return CalibrationResult(
        instrument=InstrumentMatrix(a=a_hat), residual=residual, rank=rank
    )


# ---------------------------------------------------------------------------
# Normalization and physicality diagnostics
# ---------------------------------------------------------------------------

@dataclass
class NormalizeResult:
    image: MuellerImage
    flagged: int  # pixels whose m11 <= M11_EPS, set to NaN in the output


def normalize_by_m11(img: MuellerImage) -> NormalizeResult:
    """Divide every plane pixel-wise by m11; the output m11 plane is 1.

    Pixels with m11 <= M11_EPS cannot be normalized; all 16 of their
    elements become NaN and downstream stages skip them.
    """
    m11 = img.m11
    bad = ~(np.isfinite(m11) & (m11 > M11_EPS))
    with np.errstate(divide="ignore", invalid="ignore"):
        pixels = img.pixels / m11[:, :, None, None]
    pixels[bad] = np.nan
    # guard against residual rounding on valid pixels
    pixels[~bad, 0, 0] = 1.0
    out = MuellerImage(
        pixels=pixels,
        wavelength_nm=img.wavelength_nm,
        magnification=img.magnification,
    )
    return NormalizeResult(image=out, flagged=int(bad.sum()))


@dataclass
class PhysicalityReport:
    max_excess: float  # max over elements of |mij| - 1, clipped below at 0
    nonfinite: bool
    passed: bool


def validate_physical(m: np.ndarray, tol: float = PHYSICAL_TOL) -> PhysicalityReport:
    """Diagnostics for a normalized matrix: element magnitudes may exceed 1
    by at most tol. Purely informational; never raises."""
    m = np.asarray(m, dtype=float)
    nonfinite = not bool(np.all(np.isfinite(m)))
    if nonfinite:
        return PhysicalityReport(max_excess=np.inf, nonfinite=True, passed=False)
    excess = float(max(np.abs(m).max() - 1.0, 0.0))
    return PhysicalityReport(
        max_excess=excess, nonfinite=False, passed=excess <= tol
    )


# ---------------------------------------------------------------------------
# On-disk format: header.json + planes.bin (16 float32 LE planes, row-major,
# plane-sequential, ordered m11..m44)
# ---------------------------------------------------------------------------

HEADER_NAME = "header.json"
PLANES_NAME = "planes.bin"


def save_mueller_image(img: MuellerImage, directory: str | Path) -> None:
    save_plane_image(
        np.asarray(img.planes(), dtype=np.float32),
        list(PLANE_NAMES),
        directory,
        wavelength_nm=img.wavelength_nm,
        magnification=img.magnification,
    )


def load_mueller_image(directory: str | Path) -> MuellerImage:
    planes, header = load_plane_image(directory)
    if list(header["channels"]) != list(PLANE_NAMES):
        raise DataError(f"unexpected channel order in {directory}")
    return MuellerImage.from_planes(
        planes,
        wavelength_nm=header.get("wavelength_nm", 633.0),
        magnification=header.get("magnification", "4x"),
    )


def save_plane_image(
    planes: np.ndarray,
    channels: list[str],
    directory: str | Path,
    **extra_meta,
) -> None:
    """Write any channel-planar float image in the shared header+raw format."""
    planes = np.asarray(planes)
    if planes.ndim != 3 or planes.shape[0] != len(channels):
        raise DataError(
            f"planes shape {planes.shape} does not match {len(channels)} channels"
        )
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = {
        "width": int(planes.shape[2]),
        "height": int(planes.shape[1]),
        "channels": list(channels),
        "dtype": "float32",
        "endianness": "little",
        **extra_meta,
    }
    (directory / HEADER_NAME).write_text(
        json.dumps(header, indent=2, sort_keys=True) + "\n"
    )
    payload = np.ascontiguousarray(planes, dtype="<f4")
    (directory / PLANES_NAME).write_bytes(payload.tobytes())


def load_plane_image(directory: str | Path) -> tuple[np.ndarray, dict]:
    directory = Path(directory)
    header = json.loads((directory / HEADER_NAME).read_text())
    if header.get("endianness") != "little" or header.get("dtype") != "float32":
        raise DataError(f"unsupported payload encoding in {directory}")
    n = len(header["channels"])
    h, w = int(header["height"]), int(header["width"])
    raw = np.frombuffer((directory / PLANES_NAME).read_bytes(), dtype="<f4")
    if raw.size != n * h * w:
        raise DataError(
            f"payload size {raw.size} does not match header {n}x{h}x{w}"
        )
    return raw.reshape(n, h, w).astype(np.float64), header
