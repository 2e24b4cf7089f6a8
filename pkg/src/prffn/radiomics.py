"""The 93-feature radiomics vector of a grayscale patch.

Families and counts (18 + 24 + 16 + 16 + 5 + 14 = 93):

* first order   -- 18 intensity-histogram statistics
* GLCM          -- 24 gray level co-occurrence features
* GLRLM         -- 16 gray level run length features
* GLSZM         -- 16 gray level size zone features
* NGTDM         --  5 neighboring gray tone difference features
* GLDM          -- 14 gray level dependence features

Texture families operate on the fixed-bin-count quantized patch (bins
1..n_bins). Entropy-style features use log base 2 restricted to positive
probabilities. Aggregation over directions/offsets is the unweighted mean
of per-direction feature values. Degenerate cases follow documented rules
(constant patch: skewness = kurtosis = 0, GLCM correlation = MCC = 1,
NGTDM coarseness capped at 1e6).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DataError

FIRST_ORDER_NAMES = (
    "fo_energy", "fo_total_energy", "fo_entropy", "fo_minimum",
    "fo_percentile10", "fo_percentile90", "fo_maximum", "fo_mean",
    "fo_median", "fo_iqr", "fo_range", "fo_mad", "fo_rmad", "fo_rms",
    "fo_skewness", "fo_kurtosis", "fo_variance", "fo_uniformity",
)

GLCM_NAMES = (
    "glcm_autocorrelation", "glcm_joint_average", "glcm_cluster_prominence",
    "glcm_cluster_shade", "glcm_cluster_tendency", "glcm_contrast",
    "glcm_correlation", "glcm_difference_average", "glcm_difference_entropy",
    "glcm_difference_variance", "glcm_joint_energy", "glcm_joint_entropy",
    "glcm_imc1", "glcm_imc2", "glcm_idm", "glcm_idmn", "glcm_id", "glcm_idn",
    "glcm_inverse_variance", "glcm_maximum_probability", "glcm_sum_average",
    "glcm_sum_entropy", "glcm_sum_squares", "glcm_mcc",
)

GLRLM_NAMES = (
    "glrlm_sre", "glrlm_lre", "glrlm_gln", "glrlm_glnn", "glrlm_rln",
    "glrlm_rlnn", "glrlm_run_percentage", "glrlm_glv", "glrlm_rv",
    "glrlm_run_entropy", "glrlm_lglre", "glrlm_hglre", "glrlm_srlgle",
    "glrlm_srhgle", "glrlm_lrlgle", "glrlm_lrhgle",
)

GLSZM_NAMES = (
    "glszm_sae", "glszm_lae", "glszm_gln", "glszm_glnn", "glszm_szn",
    "glszm_sznn", "glszm_zone_percentage", "glszm_glv", "glszm_zv",
    "glszm_zone_entropy", "glszm_lglze", "glszm_hglze", "glszm_salgle",
    "glszm_sahgle", "glszm_lalgle", "glszm_lahgle",
)

NGTDM_NAMES = (
    "ngtdm_coarseness", "ngtdm_contrast", "ngtdm_busyness",
    "ngtdm_complexity", "ngtdm_strength",
)

GLDM_NAMES = (
    "gldm_sde", "gldm_lde", "gldm_gln", "gldm_dn", "gldm_dnn", "gldm_glv",
    "gldm_dv", "gldm_dependence_entropy", "gldm_lgle", "gldm_hgle",
    "gldm_sdlgle", "gldm_sdhgle", "gldm_ldlgle", "gldm_ldhgle",
)

RADIOMICS_NAMES = (
    FIRST_ORDER_NAMES + GLCM_NAMES + GLRLM_NAMES + GLSZM_NAMES
    + NGTDM_NAMES + GLDM_NAMES
)
assert len(RADIOMICS_NAMES) == 93

#: value returned for NGTDM coarseness when its denominator vanishes
COARSENESS_CAP = 1e6

GLCM_OFFSETS = ((0, 1), (1, 1), (1, 0), (1, -1))  # 0, 45, 90, 135 degrees


@dataclass
class RadiomicsConfig:
    n_bins: int = 32
    gldm_alpha: int = 0
    pixel_area: float = 1.0  # physical area per pixel, scales total energy


@dataclass
class GrayPatch:
    """Grayscale patch with optional precomputed quantization."""

    values: np.ndarray  # (H, W) float
    quantized: np.ndarray | None = None  # (H, W) int bins in 1..n_bins

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.size == 0:
            raise DataError(f"patch must be a non-empty 2-D array, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("patch contains non-finite values")
        self.values = v

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def quantize(patch: GrayPatch, n_bins: int) -> GrayPatch:
    """Fixed-bin-count quantization to integer bins 1..n_bins.

    bin = min(n_bins, floor((v - min) / ((max - min) / n_bins)) + 1);
    a constant patch maps every pixel to bin 1.
    """
    if n_bins < 2:
        raise DataError(f"n_bins must be >= 2, got {n_bins}")
    v = patch.values
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        q = np.ones(v.shape, dtype=np.int64)
    else:
        width = (hi - lo) / n_bins
        q = np.minimum(n_bins, np.floor((v - lo) / width).astype(np.int64) + 1)
    return GrayPatch(values=v, quantized=q)


def _require_quantized(patch: GrayPatch) -> np.ndarray:
    if patch.quantized is None:
        raise DataError("patch must be quantized first (see quantize())")
    return patch.quantized


def _plog2(p: np.ndarray) -> np.ndarray:
    """Entropy terms -p*log2(p), zero where p == 0."""
    out = np.zeros_like(p, dtype=float)
    pos = p > 0
    out[pos] = -p[pos] * np.log2(p[pos])
    return out


# ---------------------------------------------------------------------------
# First order
# ---------------------------------------------------------------------------

def first_order(patch: GrayPatch, cfg: RadiomicsConfig | None = None) -> dict:
    """The 18 intensity statistics. Entropy/uniformity come from the
    quantized histogram (quantizing on the fly if needed)."""
    cfg = cfg or RadiomicsConfig()
    x = patch.values.ravel()
    q = patch.quantized
    if q is None:
        q = quantize(patch, cfg.n_bins).quantized
    n = x.size

    mean = float(np.mean(x))
    diffs = x - mean
    m2 = float(np.mean(diffs**2))
    scale = max(1.0, abs(mean))
    degenerate = m2 <= (1e-12 * scale) ** 2
    if degenerate:
        skewness = kurtosis = 0.0
    else:
        m3 = float(np.mean(diffs**3))
        m4 = float(np.mean(diffs**4))
        skewness = m3 / m2**1.5
        kurtosis = m4 / m2**2

    p10, p25, p50, p75, p90 = np.percentile(x, [10, 25, 50, 75, 90])
    inner = x[(x >= p10) & (x <= p90)]
    rmad = float(np.mean(np.abs(inner - np.mean(inner)))) if inner.size else 0.0

    counts = np.bincount(q.ravel())[1:]
    p = counts[counts > 0] / n

    energy = float(np.sum(x**2))
    return {
        "fo_energy": energy,
        "fo_total_energy": cfg.pixel_area * energy,
        "fo_entropy": float(np.sum(_plog2(p))),
        "fo_minimum": float(x.min()),
        "fo_percentile10": float(p10),
        "fo_percentile90": float(p90),
        "fo_maximum": float(x.max()),
        "fo_mean": mean,
        "fo_median": float(p50),
        "fo_iqr": float(p75 - p25),
        "fo_range": float(x.max() - x.min()),
        "fo_mad": float(np.mean(np.abs(diffs))),
        "fo_rmad": rmad,
        "fo_rms": float(np.sqrt(np.mean(x**2))),
        "fo_skewness": skewness,
        "fo_kurtosis": kurtosis,
        "fo_variance": m2,
        "fo_uniformity": float(np.sum(p**2)),
    }


# ---------------------------------------------------------------------------
# GLCM
# ---------------------------------------------------------------------------

def glcm_matrix(
    q: np.ndarray, n_levels: int, offset: tuple[int, int], symmetric: bool = True
) -> np.ndarray:
    """Co-occurrence counts for one (dy, dx) offset; symmetric by default."""
    dy, dx = offset
    h, w = q.shape
    r0, r1 = max(0, -dy), h - max(0, dy)
    c0, c1 = max(0, -dx), w - max(0, dx)
    if r1 <= r0 or c1 <= c0:
        return np.zeros((n_levels, n_levels), dtype=np.int64)
    a = q[r0:r1, c0:c1].ravel()
    b = q[r0 + dy:r1 + dy, c0 + dx:c1 + dx].ravel()
    counts = np.bincount(
        (a - 1) * n_levels + (b - 1), minlength=n_levels * n_levels
    ).reshape(n_levels, n_levels)
    if symmetric:
        counts = counts + counts.T
    return counts


def _glcm_features_single(counts: np.ndarray) -> dict:
    total = counts.sum()
    ng = counts.shape[0]
    p = counts / total
    i = np.arange(1, ng + 1, dtype=float)
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    mu_x = float(np.sum(i * px))
    mu_y = float(np.sum(i * py))
    sig_x = float(np.sqrt(np.sum((i - mu_x) ** 2 * px)))
    sig_y = float(np.sqrt(np.sum((i - mu_y) ** 2 * py)))

    ii = i[:, None]
    jj = i[None, :]
    # p_{x+y}(k), k = 2..2Ng and p_{x-y}(k), k = 0..Ng-1
    ksum = (ii + jj).astype(int)
    kdiff = np.abs(ii - jj).astype(int)
    pxy_sum = np.bincount((ksum - 2).ravel(), weights=p.ravel(), minlength=2 * ng - 1)
    pxy_diff = np.bincount(kdiff.ravel(), weights=p.ravel(), minlength=ng)
    k_sum = np.arange(2, 2 * ng + 1, dtype=float)
    k_diff = np.arange(0, ng, dtype=float)

    da = float(np.sum(k_diff * pxy_diff))
    present = px > 0
    levels_present = int(np.count_nonzero(present))

    if sig_x > 0 and sig_y > 0:
        correlation = float((np.sum(ii * jj * p) - mu_x * mu_y) / (sig_x * sig_y))
    else:
        correlation = 1.0

    hx = float(np.sum(_plog2(px)))
    hy = float(np.sum(_plog2(py)))
    hxy = float(np.sum(_plog2(p)))
    pxpy = px[:, None] * py[None, :]
    pos = p > 0
    hxy1 = float(-np.sum(p[pos] * np.log2(pxpy[pos])))
    hxy2 = float(np.sum(_plog2(pxpy)))
    imc1 = (hxy - hxy1) / max(hx, hy) if max(hx, hy) > 0 else 0.0
    imc2 = float(np.sqrt(np.clip(1.0 - np.exp(-2.0 * (hxy2 - hxy)), 0.0, None)))

    if levels_present > 1:
        sub = p[np.ix_(present, present)]
        px_s = px[present]
        with np.errstate(divide="ignore", invalid="ignore"):
            qmat = np.einsum(
                "ik,jk->ij", sub / px_s[:, None], sub / px_s[None, :]
            )
        eig = np.sort(np.real(np.linalg.eigvals(qmat)))
        mcc = float(np.sqrt(max(eig[-2], 0.0)))
    else:
        mcc = 1.0

    off = ii - jj
    inv_var_mask = off != 0
    return {
        "glcm_autocorrelation": float(np.sum(ii * jj * p)),
        "glcm_joint_average": mu_x,
        "glcm_cluster_prominence": float(np.sum((ii + jj - mu_x - mu_y) ** 4 * p)),
        "glcm_cluster_shade": float(np.sum((ii + jj - mu_x - mu_y) ** 3 * p)),
        "glcm_cluster_tendency": float(np.sum((ii + jj - mu_x - mu_y) ** 2 * p)),
        "glcm_contrast": float(np.sum((ii - jj) ** 2 * p)),
        "glcm_correlation": correlation,
        "glcm_difference_average": da,
        "glcm_difference_entropy": float(np.sum(_plog2(pxy_diff))),
        "glcm_difference_variance": float(np.sum((k_diff - da) ** 2 * pxy_diff)),
        "glcm_joint_energy": float(np.sum(p**2)),
        "glcm_joint_entropy": hxy,
        "glcm_imc1": imc1,
        "glcm_imc2": imc2,
        "glcm_idm": float(np.sum(p / (1.0 + (ii - jj) ** 2))),
        "glcm_idmn": float(np.sum(p / (1.0 + ((ii - jj) / ng) ** 2))),
        "glcm_id": float(np.sum(p / (1.0 + np.abs(ii - jj)))),
        "glcm_idn": float(np.sum(p / (1.0 + np.abs(ii - jj) / ng))),
        "glcm_inverse_variance": float(
            np.sum(p[inv_var_mask] / off[inv_var_mask] ** 2)
        ),
        "glcm_maximum_probability": float(p.max()),
        "glcm_sum_average": float(np.sum(k_sum * pxy_sum)),
        "glcm_sum_entropy": float(np.sum(_plog2(pxy_sum))),
        "glcm_sum_squares": float(np.sum((ii - mu_x) ** 2 * p)),
        "glcm_mcc": mcc,
    }


def glcm_features(patch: GrayPatch) -> dict:
    """24 co-occurrence features, averaged over the four distance-1 offsets.

    Offsets that produce no pixel pairs (degenerate patch shapes) are
    skipped from the average.
    """
    q = _require_quantized(patch)
    ng = int(q.max())
    per_offset = []
    for offset in GLCM_OFFSETS:
        counts = glcm_matrix(q, ng, offset)
        if counts.sum() == 0:
            continue
        per_offset.append(_glcm_features_single(counts))
    if not per_offset:
        raise DataError("patch too small for any co-occurrence offset")
    return {k: float(np.mean([f[k] for f in per_offset])) for k in GLCM_NAMES}


# ---------------------------------------------------------------------------
# GLRLM
# ---------------------------------------------------------------------------

def _lines_for_direction(q: np.ndarray, direction: tuple[int, int]) -> list:
    h, w = q.shape
    if direction == (0, 1):
        return [q[r] for r in range(h)]
    if direction == (1, 0):
        return [q[:, c] for c in range(w)]
    if direction == (1, 1):
        return [np.diagonal(q, k) for k in range(-(h - 1), w)]
    if direction == (1, -1):
        fl = np.fliplr(q)
        return [np.diagonal(fl, k) for k in range(-(h - 1), w)]
    raise DataError(f"unsupported run direction {direction}")


def glrlm_matrix(
    q: np.ndarray, n_levels: int, direction: tuple[int, int]
) -> np.ndarray:
    """Run-length counts R[level-1, length-1] along one direction."""
    h, w = q.shape
    max_len = max(h, w)
    lines = _lines_for_direction(q, direction)
    sep = -1
    parts = []
    for ln in lines:
        parts.append(np.asarray(ln, dtype=np.int64))
        parts.append(np.array([sep], dtype=np.int64))
    c = np.concatenate(parts)
    starts = np.flatnonzero(np.diff(c) != 0) + 1
    starts = np.concatenate([[0], starts])
    lengths = np.diff(np.concatenate([starts, [c.size]]))
    vals = c[starts]
    keep = vals != sep
    vals, lengths = vals[keep], lengths[keep]
    return np.bincount(
        (vals - 1) * max_len + (lengths - 1), minlength=n_levels * max_len
    ).reshape(n_levels, max_len)


def _weighted_size_features(
    counts: np.ndarray, n_pixels: int, prefix: str, size_names: dict
) -> dict:
    """Shared feature math for GLRLM / GLSZM / GLDM style matrices: rows are
    gray levels, columns are run lengths / zone sizes / dependence sizes."""
    n = counts.sum()
    i = np.arange(1, counts.shape[0] + 1, dtype=float)[:, None]
    j = np.arange(1, counts.shape[1] + 1, dtype=float)[None, :]
    row = counts.sum(axis=1).astype(float)
    col = counts.sum(axis=0).astype(float)
    p = counts / n
    mu_i = float(np.sum(i * p))
    mu_j = float(np.sum(j * p))
    f = {
        f"{prefix}_{size_names['small']}": float(np.sum(counts / j**2) / n),
        f"{prefix}_{size_names['large']}": float(np.sum(counts * j**2) / n),
        f"{prefix}_gln": float(np.sum(row**2) / n),
        f"{prefix}_{size_names['size_nu']}": float(np.sum(col**2) / n),
        f"{prefix}_{size_names['size_nun']}": float(np.sum(col**2) / n**2),
        f"{prefix}_{size_names['percentage']}": float(n / n_pixels),
        f"{prefix}_glv": float(np.sum(p * (i - mu_i) ** 2)),
        f"{prefix}_{size_names['size_var']}": float(np.sum(p * (j - mu_j) ** 2)),
        f"{prefix}_{size_names['entropy']}": float(np.sum(_plog2(p))),
        f"{prefix}_{size_names['lgl']}": float(np.sum(counts / i**2) / n),
        f"{prefix}_{size_names['hgl']}": float(np.sum(counts * i**2) / n),
        f"{prefix}_{size_names['slgl']}": float(np.sum(counts / (i**2 * j**2)) / n),
        f"{prefix}_{size_names['shgl']}": float(np.sum(counts * i**2 / j**2) / n),
        f"{prefix}_{size_names['llgl']}": float(np.sum(counts * j**2 / i**2) / n),
        f"{prefix}_{size_names['lhgl']}": float(np.sum(counts * i**2 * j**2) / n),
    }
    return f


_GLRLM_SIZE_NAMES = dict(
    small="sre", large="lre", size_nu="rln", size_nun="rlnn",
    percentage="run_percentage", size_var="rv", entropy="run_entropy",
    lgl="lglre", hgl="hglre", slgl="srlgle", shgl="srhgle",
    llgl="lrlgle", lhgl="lrhgle",
)

_GLSZM_SIZE_NAMES = dict(
    small="sae", large="lae", size_nu="szn", size_nun="sznn",
    percentage="zone_percentage", size_var="zv", entropy="zone_entropy",
    lgl="lglze", hgl="hglze", slgl="salgle", shgl="sahgle",
    llgl="lalgle", lhgl="lahgle",
)


def glrlm_features(patch: GrayPatch) -> dict:
    """16 run-length features averaged over the four directions."""
    q = _require_quantized(patch)
    ng = int(q.max())
    n_pixels = q.size
    per_dir = []
    for direction in GLCM_OFFSETS:
        counts = glrlm_matrix(q, ng, direction)
        feats = _weighted_size_features(counts, n_pixels, "glrlm", _GLRLM_SIZE_NAMES)
        n = counts.sum()
        row = counts.sum(axis=1).astype(float)
        feats["glrlm_glnn"] = float(np.sum(row**2) / n**2)
        per_dir.append(feats)
    return {k: float(np.mean([f[k] for f in per_dir])) for k in GLRLM_NAMES}


# ---------------------------------------------------------------------------
# GLSZM
# ---------------------------------------------------------------------------

_ZONE_STRUCTURE = np.ones((3, 3), dtype=int)  # 8-connectivity


def glszm_matrix(q: np.ndarray, n_levels: int) -> np.ndarray:
    """Zone counts S[level-1, size-1]; zones are 8-connected components.
    Columns run up to the largest observed zone size."""
    levels, sizes = [], []
    for lvl in np.unique(q):
        labels, n_zones = ndimage.label(q == lvl, structure=_ZONE_STRUCTURE)
        if n_zones == 0:
            continue
        zone_sizes = np.bincount(labels.ravel())[1:]
        levels.append(np.full(zone_sizes.size, lvl - 1, dtype=np.int64))
        sizes.append(zone_sizes.astype(np.int64))
    levels = np.concatenate(levels)
    sizes = np.concatenate(sizes)
    max_size = int(sizes.max())
    return np.bincount(
        levels * max_size + (sizes - 1), minlength=n_levels * max_size
    ).reshape(n_levels, max_size)


def glszm_features(patch: GrayPatch) -> dict:
    q = _require_quantized(patch)
    ng = int(q.max())
    counts = glszm_matrix(q, ng)
    feats = _weighted_size_features(counts, q.size, "glszm", _GLSZM_SIZE_NAMES)
    n = counts.sum()
    row = counts.sum(axis=1).astype(float)
    feats["glszm_glnn"] = float(np.sum(row**2) / n**2)
    return {k: feats[k] for k in GLSZM_NAMES}


# ---------------------------------------------------------------------------
# NGTDM
# ---------------------------------------------------------------------------

def ngtdm_table(q: np.ndarray, n_levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-level (s_i, n_i): total absolute difference from the mean of the
    8-neighborhood, and the pixel count, for pixels with >= 1 neighbor."""
    qf = q.astype(float)
    kernel = np.ones((3, 3))
    kernel[1, 1] = 0.0
    nb_sum = ndimage.correlate(qf, kernel, mode="constant", cval=0.0)
    nb_cnt = ndimage.correlate(
        np.ones_like(qf), kernel, mode="constant", cval=0.0
    )
    has_nb = nb_cnt > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        avg = np.where(has_nb, nb_sum / np.where(has_nb, nb_cnt, 1.0), 0.0)
    diff = np.abs(qf - avg)
    s = np.zeros(n_levels)
    n = np.zeros(n_levels, dtype=np.int64)
    flat_q = q[has_nb].ravel()
    flat_d = diff[has_nb].ravel()
    np.add.at(s, flat_q - 1, flat_d)
    np.add.at(n, flat_q - 1, 1)
    return s, n


def ngtdm_features(patch: GrayPatch) -> dict:
    q = _require_quantized(patch)
    ng = int(q.max())
    s, n = ngtdm_table(q, ng)
    n_valid = int(n.sum())
    if n_valid == 0:
        raise DataError("patch has no pixels with neighbors")
    p = n / n_valid
    i = np.arange(1, ng + 1, dtype=float)
    present = p > 0
    ngp = int(np.count_nonzero(present))

    ps = float(np.sum(p * s))
    coarseness = 1.0 / ps if ps > 0 else COARSENESS_CAP
    coarseness = min(coarseness, COARSENESS_CAP)

    if ngp > 1:
        pi, pj = p[present][:, None], p[present][None, :]
        si, sj = s[present][:, None], s[present][None, :]
        li, lj = i[present][:, None], i[present][None, :]
        contrast = float(
            np.sum(pi * pj * (li - lj) ** 2)
            / (ngp * (ngp - 1))
            * np.sum(s) / n_valid
        )
        busy_den = float(np.sum(np.abs(li * pi - lj * pj)))
        busyness = ps / busy_den if busy_den > 0 else 0.0
        complexity = float(
            np.sum(np.abs(li - lj) * (pi * si + pj * sj) / (pi + pj)) / n_valid
        )
        s_total = float(np.sum(s))
        strength = (
            float(np.sum((pi + pj) * (li - lj) ** 2)) / s_total
            if s_total > 0
            else 0.0
        )
    else:
        contrast = busyness = complexity = strength = 0.0

    return {
        "ngtdm_coarseness": coarseness,
        "ngtdm_contrast": contrast,
        "ngtdm_busyness": busyness,
        "ngtdm_complexity": complexity,
        "ngtdm_strength": strength,
    }


# ---------------------------------------------------------------------------
# GLDM
# ---------------------------------------------------------------------------

def gldm_matrix(q: np.ndarray, n_levels: int, alpha: int = 0) -> np.ndarray:
    """Dependence counts D[level-1, d-1] where d = 1 + number of 8-neighbors
    within alpha of the center level (the center counts itself)."""
    h, w = q.shape
    dep = np.ones(q.shape, dtype=np.int64)
    for dy, dx in ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1)):
        r0, r1 = max(0, -dy), h - max(0, dy)
        c0, c1 = max(0, -dx), w - max(0, dx)
        if r1 <= r0 or c1 <= c0:
            continue
        a = q[r0:r1, c0:c1]
        b = q[r0 + dy:r1 + dy, c0 + dx:c1 + dx]
        dep[r0:r1, c0:c1] += np.abs(a - b) <= alpha
    max_dep = 9
    return np.bincount(
        (q.ravel() - 1) * max_dep + (dep.ravel() - 1),
        minlength=n_levels * max_dep,
    ).reshape(n_levels, max_dep)


def gldm_features(patch: GrayPatch, alpha: int = 0) -> dict:
    q = _require_quantized(patch)
    ng = int(q.max())
    counts = gldm_matrix(q, ng, alpha)
    n = counts.sum()
    i = np.arange(1, ng + 1, dtype=float)[:, None]
    j = np.arange(1, counts.shape[1] + 1, dtype=float)[None, :]
    row = counts.sum(axis=1).astype(float)
    col = counts.sum(axis=0).astype(float)
    p = counts / n
    mu_i = float(np.sum(i * p))
    mu_j = float(np.sum(j * p))
    return {
        "gldm_sde": float(np.sum(counts / j**2) / n),
        "gldm_lde": float(np.sum(counts * j**2) / n),
        "gldm_gln": float(np.sum(row**2) / n),
        "gldm_dn": float(np.sum(col**2) / n),
        "gldm_dnn": float(np.sum(col**2) / n**2),
        "gldm_glv": float(np.sum(p * (i - mu_i) ** 2)),
        "gldm_dv": float(np.sum(p * (j - mu_j) ** 2)),
        "gldm_dependence_entropy": float(np.sum(_plog2(p))),
        "gldm_lgle": float(np.sum(counts / i**2) / n),
        "gldm_hgle": float(np.sum(counts * i**2) / n),
        "gldm_sdlgle": float(np.sum(counts / (i**2 * j**2)) / n),
        "gldm_sdhgle": float(np.sum(counts * i**2 / j**2) / n),
        "gldm_ldlgle": float(np.sum(counts * j**2 / i**2) / n),
        "gldm_ldhgle": float(np.sum(counts * i**2 * j**2) / n),
    }


# ---------------------------------------------------------------------------
# Full vector
# ---------------------------------------------------------------------------

def extract_radiomics(
    patch: GrayPatch, cfg: RadiomicsConfig | None = None
) -> np.ndarray:
    """All 93 features in canonical order (see RADIOMICS_NAMES)."""
    cfg = cfg or RadiomicsConfig()
    qp = quantize(patch, cfg.n_bins)
    feats = {}
    feats.update(first_order(qp, cfg))
    feats.update(glcm_features(qp))
    feats.update(glrlm_features(qp))
    feats.update(glszm_features(qp))
    feats.update(ngtdm_features(qp))
    feats.update(gldm_features(qp, cfg.gldm_alpha))
    return np.array([feats[name] for name in RADIOMICS_NAMES], dtype=float)


def rgb_to_gray(rgb: np.ndarray) -> np.ndarray:
    """Luminance conversion used for H&E patches before texture extraction."""
    rgb = np.asarray(rgb, dtype=float)
    if rgb.ndim == 2:
        return rgb
    if rgb.ndim != 3 or rgb.shape[2] < 3:
        raise DataError(f"expected (H, W, 3) RGB raster, got {rgb.shape}")
    return 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
