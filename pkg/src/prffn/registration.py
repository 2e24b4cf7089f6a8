"""Affine co-registration of the H&E raster onto the intensity (m11) grid.

Coordinates are (x, y) with x the column index and y the row index. The
transform maps moving-image coordinates to fixed-image coordinates; warping
is done by inverse mapping, so every output pixel samples the moving image
at the back-projected location. Intensity images use bilinear
interpolation, label masks nearest-neighbor (labels are never blended).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import RegistrationError

BACKGROUND = 0
LABEL_HCC = 1
LABEL_ICC = 2
LABEL_NONCANCER = 3
VALID_LABELS = (BACKGROUND, LABEL_HCC, LABEL_ICC, LABEL_NONCANCER)


@dataclass(frozen=True)
class Affine2D:
    """2x3 matrix [[a, b, tx], [c, d, ty]] mapping (x, y) -> fixed frame."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (2, 3):
            raise RegistrationError(f"affine matrix must be 2x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise RegistrationError("affine matrix contains non-finite entries")
        if abs(np.linalg.det(m[:, :2])) < 1e-12:
            raise RegistrationError("affine transform is singular")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Affine2D":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Affine2D":
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty]]))

    def apply(self, xy: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 2)."""
        xy = np.asarray(xy, dtype=float)
        return xy @ self.matrix[:, :2].T + self.matrix[:, 2]

    def inverse(self) -> "Affine2D":
        lin = self.matrix[:, :2]
        lin_inv = np.linalg.inv(lin)
        t_inv = -lin_inv @ self.matrix[:, 2]
        return Affine2D(np.column_stack([lin_inv, t_inv]))


@dataclass(frozen=True)
class ControlPoints:
    """Paired landmark coordinates: moving (x, y) -> fixed (x, y)."""

    moving: np.ndarray  # (n, 2)
    fixed: np.ndarray  # (n, 2)

    def __post_init__(self):
        mv = np.atleast_2d(np.asarray(self.moving, dtype=float))
        fx = np.atleast_2d(np.asarray(self.fixed, dtype=float))
        if mv.shape != fx.shape or mv.shape[1] != 2:
            raise RegistrationError(
                f"control point arrays must match with two columns, "
                f"got {mv.shape} and {fx.shape}"
            )
        object.__setattr__(self, "moving", mv)
        object.__setattr__(self, "fixed", fx)

    def __len__(self) -> int:
        return self.moving.shape[0]

    @classmethod
    def from_csv(cls, path: str | Path) -> "ControlPoints":
        """Load from CSV with header moving_x, moving_y, fixed_x, fixed_y."""
        moving, fixed = [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                moving.append((float(row["moving_x"]), float(row["moving_y"])))
                fixed.append((float(row["fixed_x"]), float(row["fixed_y"])))
        return cls(moving=np.array(moving), fixed=np.array(fixed))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["moving_x", "moving_y", "fixed_x", "fixed_y"])
            for (mx, my), (fx, fy) in zip(self.moving, self.fixed):
                writer.writerow([repr(mx), repr(my), repr(fx), repr(fy)])


@dataclass
class FitResult:
    transform: Affine2D
    rms_residual: float


def fit_affine(cp: ControlPoints) -> FitResult:
    """Least-squares affine from >= 3 non-collinear control point pairs."""
    n = len(cp)
    if n < 3:
        raise RegistrationError(f"need at least 3 control point pairs, got {n}")
    ones = np.ones((n, 1))
    design = np.hstack([cp.moving, ones])  # rows (x, y, 1)
    if np.linalg.matrix_rank(design) < 3:
        raise RegistrationError("moving control points are collinear")
    sol, *_ = np.linalg.lstsq(design, cp.fixed, rcond=None)  # (3, 2)
    transform = Affine2D(sol.T)
    resid = transform.apply(cp.moving) - cp.fixed
    rms = float(np.sqrt(np.mean(np.sum(resid**2, axis=1))))
    return FitResult(transform=transform, rms_residual=rms)


def _source_coords(t: Affine2D, out_size: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    h, w = out_size
    inv = t.inverse()
    ys, xs = np.mgrid[0:h, 0:w]
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(float)
    src = inv.apply(pts)
    return src[:, 0].reshape(h, w), src[:, 1].reshape(h, w)


def warp_image(
    img: np.ndarray, t: Affine2D, out_size: tuple[int, int]
) -> np.ndarray:
    """Inverse-mapping warp with bilinear sampling; out-of-bounds reads 0.

    Accepts (H, W) or (H, W, C) arrays; out_size is (height, width).
    """
    img = np.asarray(img, dtype=float)
    sx, sy = _source_coords(t, out_size)
    h_in, w_in = img.shape[:2]

    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    fx = sx - x0
    fy = sy - y0

    def fetch(yi, xi):
        inside = (yi >= 0) & (yi < h_in) & (xi >= 0) & (xi < w_in)
        yc = np.clip(yi, 0, h_in - 1)
        xc = np.clip(xi, 0, w_in - 1)
        vals = img[yc, xc]
        if img.ndim == 3:
            return np.where(inside[..., None], vals, 0.0)
        return np.where(inside, vals, 0.0)

    wx = fx[..., None] if img.ndim == 3 else fx
    wy = fy[..., None] if img.ndim == 3 else fy
    top = fetch(y0, x0) * (1 - wx) + fetch(y0, x0 + 1) * wx
    bot = fetch(y0 + 1, x0) * (1 - wx) + fetch(y0 + 1, x0 + 1) * wx
    return top * (1 - wy) + bot * wy


def transfer_mask(
    mask: np.ndarray, t: Affine2D, out_size: tuple[int, int]
) -> np.ndarray:
    """Warp a label mask with nearest-neighbor sampling; outside reads 0."""
    mask = np.asarray(mask)
    if not np.issubdtype(mask.dtype, np.integer):
        raise RegistrationError("label mask must be integer-valued")
    sx, sy = _source_coords(t, out_size)
    xi = np.rint(sx).astype(int)
    yi = np.rint(sy).astype(int)
    h_in, w_in = mask.shape
    inside = (yi >= 0) & (yi < h_in) & (xi >= 0) & (xi < w_in)
    out = np.zeros(out_size, dtype=mask.dtype)
    out[inside] = mask[yi[inside], xi[inside]]
    return out
