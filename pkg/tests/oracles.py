"""Independent brute-force re-implementations used as test oracles.

Everything here favors explicit enumeration (python loops, flood fill,
pair listings) over vectorization so that agreement with the fast library
paths is meaningful. Formulas follow the same documented definitions; the
construction of every intermediate structure is independent.
"""

from __future__ import annotations

import math

import numpy as np


# ---------------------------------------------------------------------------
# first order
# ---------------------------------------------------------------------------

def percentile_linear(sorted_vals: list[float], pct: float) -> float:
    """Linear-interpolation percentile matching numpy's default."""
    n = len(sorted_vals)
    if n == 1:
        return sorted_vals[0]
    rank = pct / 100.0 * (n - 1)
    lo = int(math.floor(rank))
    hi = min(lo + 1, n - 1)
    frac = rank - lo
    return sorted_vals[lo] * (1 - frac) + sorted_vals[hi] * frac


def first_order_oracle(values: np.ndarray, bins: np.ndarray, pixel_area: float = 1.0) -> dict:
    xs = [float(v) for v in values.ravel()]
    n = len(xs)
    mean = sum(xs) / n
    m2 = sum((x - mean) ** 2 for x in xs) / n
    m3 = sum((x - mean) ** 3 for x in xs) / n
    m4 = sum((x - mean) ** 4 for x in xs) / n
    scale = max(1.0, abs(mean))
    if m2 <= (1e-12 * scale) ** 2:
        skew = kurt = 0.0
    else:
        skew = m3 / m2**1.5
        kurt = m4 / m2**2
    srt = sorted(xs)
    p10 = percentile_linear(srt, 10)
    p25 = percentile_linear(srt, 25)
    p50 = percentile_linear(srt, 50)
    p75 = percentile_linear(srt, 75)
    p90 = percentile_linear(srt, 90)
    inner = [x for x in xs if p10 <= x <= p90]
    if inner:
        im = sum(inner) / len(inner)
        rmad = sum(abs(x - im) for x in inner) / len(inner)
    else:
        rmad = 0.0
    counts: dict[int, int] = {}
    for b in bins.ravel():
        counts[int(b)] = counts.get(int(b), 0) + 1
    entropy = -sum((c / n) * math.log2(c / n) for c in counts.values())
    uniformity = sum((c / n) ** 2 for c in counts.values())
    energy = sum(x * x for x in xs)
    return {
        "fo_energy": energy,
        "fo_total_energy": pixel_area * energy,
        "fo_entropy": entropy,
        "fo_minimum": srt[0],
        "fo_percentile10": p10,
        "fo_percentile90": p90,
        "fo_maximum": srt[-1],
        "fo_mean": mean,
        "fo_median": p50,
        "fo_iqr": p75 - p25,
        "fo_range": srt[-1] - srt[0],
        "fo_mad": sum(abs(x - mean) for x in xs) / n,
        "fo_rmad": rmad,
        "fo_rms": math.sqrt(energy / n),
        "fo_skewness": skew,
        "fo_kurtosis": kurt,
        "fo_variance": m2,
        "fo_uniformity": uniformity,
    }


# ---------------------------------------------------------------------------
# GLCM
# ---------------------------------------------------------------------------

def glcm_matrix_oracle(q: np.ndarray, n_levels: int, offset: tuple[int, int]) -> np.ndarray:
    """Symmetric co-occurrence counts from an explicit pair listing."""
    dy, dx = offset
    h, w = q.shape
    counts = np.zeros((n_levels, n_levels), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w:
                a, b = int(q[y, x]), int(q[yy, xx])
                counts[a - 1, b - 1] += 1
                counts[b - 1, a - 1] += 1
    return counts


def glcm_features_oracle_single(counts: np.ndarray) -> dict:
    ng = counts.shape[0]
    total = counts.sum()
    p = [[counts[i, j] / total for j in range(ng)] for i in range(ng)]
    px = [sum(p[i]) for i in range(ng)]
    py = [sum(p[i][j] for i in range(ng)) for j in range(ng)]
    mu_x = sum((i + 1) * px[i] for i in range(ng))
    mu_y = sum((j + 1) * py[j] for j in range(ng))
    sig_x = math.sqrt(sum((i + 1 - mu_x) ** 2 * px[i] for i in range(ng)))
    sig_y = math.sqrt(sum((j + 1 - mu_y) ** 2 * py[j] for j in range(ng)))

    pxy_sum = {k: 0.0 for k in range(2, 2 * ng + 1)}
    pxy_diff = {k: 0.0 for k in range(ng)}
    for i in range(ng):
        for j in range(ng):
            pxy_sum[i + j + 2] += p[i][j]
            pxy_diff[abs(i - j)] += p[i][j]

    def plog2_sum(vals):
        return -sum(v * math.log2(v) for v in vals if v > 0)

    da = sum(k * v for k, v in pxy_diff.items())
    hx = plog2_sum(px)
    hy = plog2_sum(py)
    hxy = plog2_sum(pv for row in p for pv in row)
    hxy1 = -sum(
        p[i][j] * math.log2(px[i] * py[j])
        for i in range(ng)
        for j in range(ng)
        if p[i][j] > 0
    )
    hxy2 = plog2_sum(px[i] * py[j] for i in range(ng) for j in range(ng))

    present = [i for i in range(ng) if px[i] > 0]
    if len(present) > 1:
        corr = (
            sum((i + 1) * (j + 1) * p[i][j] for i in range(ng) for j in range(ng))
            - mu_x * mu_y
        ) / (sig_x * sig_y)
        qmat = np.zeros((len(present), len(present)))
        for a, i in enumerate(present):
            for b, j in enumerate(present):
                qmat[a, b] = sum(
                    p[i][k] * p[j][k] / (px[i] * py[k])
                    for k in range(ng)
                    if py[k] > 0
                )
        eig = sorted(np.real(np.linalg.eigvals(qmat)))
        mcc = math.sqrt(max(eig[-2], 0.0))
    else:
        corr = 1.0
        mcc = 1.0

    imc1 = (hxy - hxy1) / max(hx, hy) if max(hx, hy) > 0 else 0.0
    imc2 = math.sqrt(max(0.0, 1.0 - math.exp(-2.0 * (hxy2 - hxy))))

    feats = {
        "glcm_autocorrelation": sum(
            (i + 1) * (j + 1) * p[i][j] for i in range(ng) for j in range(ng)
        ),
        "glcm_joint_average": mu_x,
        "glcm_cluster_prominence": sum(
            (i + j + 2 - mu_x - mu_y) ** 4 * p[i][j]
            for i in range(ng) for j in range(ng)
        ),
        "glcm_cluster_shade": sum(
            (i + j + 2 - mu_x - mu_y) ** 3 * p[i][j]
            for i in range(ng) for j in range(ng)
        ),
        "glcm_cluster_tendency": sum(
            (i + j + 2 - mu_x - mu_y) ** 2 * p[i][j]
            for i in range(ng) for j in range(ng)
        ),
        "glcm_contrast": sum(
            (i - j) ** 2 * p[i][j] for i in range(ng) for j in range(ng)
        ),
        "glcm_correlation": corr,
        "glcm_difference_average": da,
        "glcm_difference_entropy": plog2_sum(pxy_diff.values()),
        "glcm_difference_variance": sum(
            (k - da) ** 2 * v for k, v in pxy_diff.items()
        ),
        "glcm_joint_energy": sum(pv * pv for row in p for pv in row),
        "glcm_joint_entropy": hxy,
        "glcm_imc1": imc1,
        "glcm_imc2": imc2,
        "glcm_idm": sum(
            p[i][j] / (1 + (i - j) ** 2) for i in range(ng) for j in range(ng)
        ),
        "glcm_idmn": sum(
            p[i][j] / (1 + ((i - j) / ng) ** 2)
            for i in range(ng) for j in range(ng)
        ),
        "glcm_id": sum(
            p[i][j] / (1 + abs(i - j)) for i in range(ng) for j in range(ng)
        ),
        "glcm_idn": sum(
            p[i][j] / (1 + abs(i - j) / ng) for i in range(ng) for j in range(ng)
        ),
        "glcm_inverse_variance": sum(
            p[i][j] / (i - j) ** 2
            for i in range(ng) for j in range(ng) if i != j
        ),
        "glcm_maximum_probability": max(pv for row in p for pv in row),
        "glcm_sum_average": sum(k * v for k, v in pxy_sum.items()),
        "glcm_sum_entropy": plog2_sum(pxy_sum.values()),
        "glcm_sum_squares": sum(
            (i + 1 - mu_x) ** 2 * p[i][j] for i in range(ng) for j in range(ng)
        ),
        "glcm_mcc": mcc,
    }
    return feats


def glcm_features_oracle(q: np.ndarray, n_levels: int) -> dict:
    offsets = ((0, 1), (1, 1), (1, 0), (1, -1))
    per = []
    for off in offsets:
        counts = glcm_matrix_oracle(q, n_levels, off)
        if counts.sum() > 0:
            per.append(glcm_features_oracle_single(counts))
    return {k: sum(f[k] for f in per) / len(per) for k in per[0]}


# ---------------------------------------------------------------------------
# GLRLM
# ---------------------------------------------------------------------------

def _lines_oracle(q: np.ndarray, direction: tuple[int, int]) -> list[list[int]]:
    h, w = q.shape
    dy, dx = direction
    starts = []
    for y in range(h):
        for x in range(w):
            py, px = y - dy, x - dx
            if not (0 <= py < h and 0 <= px < w):
                starts.append((y, x))
    lines = []
    for y0, x0 in starts:
        line = []
        y, x = y0, x0
        while 0 <= y < h and 0 <= x < w:
            line.append(int(q[y, x]))
            y, x = y + dy, x + dx
        lines.append(line)
    return lines


def glrlm_matrix_oracle(q: np.ndarray, n_levels: int, direction) -> np.ndarray:
    max_len = max(q.shape)
    counts = np.zeros((n_levels, max_len), dtype=np.int64)
    for line in _lines_oracle(q, direction):
        i = 0
        while i < len(line):
            j = i
            while j < len(line) and line[j] == line[i]:
                j += 1
            counts[line[i] - 1, (j - i) - 1] += 1
            i = j
    return counts


def size_matrix_features_oracle(counts: np.ndarray, n_pixels: int) -> dict:
    """Shared run/zone/dependence feature formulas, evaluated by loops.
    Keys are generic; callers rename."""
    n = counts.sum()
    ni, nj = counts.shape
    row = [counts[i].sum() for i in range(ni)]
    col = [counts[:, j].sum() for j in range(nj)]
    mu_i = sum((i + 1) * counts[i, j] for i in range(ni) for j in range(nj)) / n
    mu_j = sum((j + 1) * counts[i, j] for i in range(ni) for j in range(nj)) / n
    ent = -sum(
        (counts[i, j] / n) * math.log2(counts[i, j] / n)
        for i in range(ni) for j in range(nj) if counts[i, j] > 0
    )
    return {
        "small": sum(counts[i, j] / (j + 1) ** 2 for i in range(ni) for j in range(nj)) / n,
        "large": sum(counts[i, j] * (j + 1) ** 2 for i in range(ni) for j in range(nj)) / n,
        "gln": sum(r * r for r in row) / n,
        "glnn": sum(r * r for r in row) / n**2,
        "size_nu": sum(c * c for c in col) / n,
        "size_nun": sum(c * c for c in col) / n**2,
        "percentage": n / n_pixels,
        "glv": sum(
            (counts[i, j] / n) * (i + 1 - mu_i) ** 2
            for i in range(ni) for j in range(nj)
        ),
        "size_var": sum(
            (counts[i, j] / n) * (j + 1 - mu_j) ** 2
            for i in range(ni) for j in range(nj)
        ),
        "entropy": ent,
        "lgl": sum(counts[i, j] / (i + 1) ** 2 for i in range(ni) for j in range(nj)) / n,
        "hgl": sum(counts[i, j] * (i + 1) ** 2 for i in range(ni) for j in range(nj)) / n,
        "slgl": sum(
            counts[i, j] / ((i + 1) ** 2 * (j + 1) ** 2)
            for i in range(ni) for j in range(nj)
        ) / n,
        "shgl": sum(
            counts[i, j] * (i + 1) ** 2 / (j + 1) ** 2
            for i in range(ni) for j in range(nj)
        ) / n,
        "llgl": sum(
            counts[i, j] * (j + 1) ** 2 / (i + 1) ** 2
            for i in range(ni) for j in range(nj)
        ) / n,
        "lhgl": sum(
            counts[i, j] * (i + 1) ** 2 * (j + 1) ** 2
            for i in range(ni) for j in range(nj)
        ) / n,
    }


_GLRLM_RENAME = {
    "glrlm_sre": "small", "glrlm_lre": "large", "glrlm_gln": "gln",
    "glrlm_glnn": "glnn", "glrlm_rln": "size_nu", "glrlm_rlnn": "size_nun",
    "glrlm_run_percentage": "percentage", "glrlm_glv": "glv",
    "glrlm_rv": "size_var", "glrlm_run_entropy": "entropy",
    "glrlm_lglre": "lgl", "glrlm_hglre": "hgl", "glrlm_srlgle": "slgl",
    "glrlm_srhgle": "shgl", "glrlm_lrlgle": "llgl", "glrlm_lrhgle": "lhgl",
}

_GLSZM_RENAME = {
    "glszm_sae": "small", "glszm_lae": "large", "glszm_gln": "gln",
    "glszm_glnn": "glnn", "glszm_szn": "size_nu", "glszm_sznn": "size_nun",
    "glszm_zone_percentage": "percentage", "glszm_glv": "glv",
    "glszm_zv": "size_var", "glszm_zone_entropy": "entropy",
    "glszm_lglze": "lgl", "glszm_hglze": "hgl", "glszm_salgle": "slgl",
    "glszm_sahgle": "shgl", "glszm_lalgle": "llgl", "glszm_lahgle": "lhgl",
}


def glrlm_features_oracle(q: np.ndarray, n_levels: int) -> dict:
    per = []
    for direction in ((0, 1), (1, 1), (1, 0), (1, -1)):
        counts = glrlm_matrix_oracle(q, n_levels, direction)
        generic = size_matrix_features_oracle(counts, q.size)
        per.append({k: generic[v] for k, v in _GLRLM_RENAME.items()})
    return {k: sum(f[k] for f in per) / len(per) for k in per[0]}


# ---------------------------------------------------------------------------
# GLSZM via flood fill
# ---------------------------------------------------------------------------

def zones_oracle(q: np.ndarray) -> list[tuple[int, int]]:
    """(level, size) of every 8-connected constant-level zone."""
    h, w = q.shape
    seen = np.zeros((h, w), dtype=bool)
    zones = []
    for y in range(h):
        for x in range(w):
            if seen[y, x]:
                continue
            lvl = int(q[y, x])
            stack = [(y, x)]
            seen[y, x] = True
            size = 0
            while stack:
                cy, cx = stack.pop()
                size += 1
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = cy + dy, cx + dx
                        if (
                            0 <= ny < h and 0 <= nx < w
                            and not seen[ny, nx] and int(q[ny, nx]) == lvl
                        ):
                            seen[ny, nx] = True
                            stack.append((ny, nx))
            zones.append((lvl, size))
    return zones


def glszm_matrix_oracle(q: np.ndarray, n_levels: int) -> np.ndarray:
    zones = zones_oracle(q)
    max_size = max(s for _, s in zones)
    counts = np.zeros((n_levels, max_size), dtype=np.int64)
    for lvl, size in zones:
        counts[lvl - 1, size - 1] += 1
    return counts


def glszm_features_oracle(q: np.ndarray, n_levels: int) -> dict:
    counts = glszm_matrix_oracle(q, n_levels)
    generic = size_matrix_features_oracle(counts, q.size)
    return {k: generic[v] for k, v in _GLSZM_RENAME.items()}


# ---------------------------------------------------------------------------
# NGTDM
# ---------------------------------------------------------------------------

def ngtdm_table_oracle(q: np.ndarray, n_levels: int):
    h, w = q.shape
    s = [0.0] * n_levels
    n = [0] * n_levels
    for y in range(h):
        for x in range(w):
            nbrs = []
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if dy == 0 and dx == 0:
                        continue
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w:
                        nbrs.append(int(q[ny, nx]))
            if not nbrs:
                continue
            lvl = int(q[y, x])
            s[lvl - 1] += abs(lvl - sum(nbrs) / len(nbrs))
            n[lvl - 1] += 1
    return np.array(s), np.array(n)


def ngtdm_features_oracle(q: np.ndarray, n_levels: int) -> dict:
    s, n = ngtdm_table_oracle(q, n_levels)
    n_valid = int(n.sum())
    p = [c / n_valid for c in n]
    present = [i for i in range(n_levels) if p[i] > 0]
    ngp = len(present)
    ps = sum(p[i] * s[i] for i in range(n_levels))
    coarseness = min(1.0 / ps if ps > 0 else 1e6, 1e6)
    if ngp > 1:
        contrast = (
            sum(
                p[i] * p[j] * (i - j) ** 2
                for i in present for j in present
            ) / (ngp * (ngp - 1))
            * sum(s) / n_valid
        )
        busy_den = sum(
            abs((i + 1) * p[i] - (j + 1) * p[j]) for i in present for j in present
        )
        busyness = ps / busy_den if busy_den > 0 else 0.0
        complexity = sum(
            abs(i - j) * (p[i] * s[i] + p[j] * s[j]) / (p[i] + p[j])
            for i in present for j in present
        ) / n_valid
        s_total = sum(s)
        strength = (
            sum((p[i] + p[j]) * (i - j) ** 2 for i in present for j in present)
            / s_total if s_total > 0 else 0.0
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

def gldm_matrix_oracle(q: np.ndarray, n_levels: int, alpha: int = 0) -> np.ndarray:
    h, w = q.shape
    counts = np.zeros((n_levels, 9), dtype=np.int64)
    for y in range(h):
        for x in range(w):
            dep = 1
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if dy == 0 and dx == 0:
                        continue
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w:
                        if abs(int(q[y, x]) - int(q[ny, nx])) <= alpha:
                            dep += 1
            counts[int(q[y, x]) - 1, dep - 1] += 1
    return counts


def gldm_features_oracle(q: np.ndarray, n_levels: int, alpha: int = 0) -> dict:
    counts = gldm_matrix_oracle(q, n_levels, alpha)
    generic = size_matrix_features_oracle(counts, q.size)
    return {
        "gldm_sde": generic["small"],
        "gldm_lde": generic["large"],
        "gldm_gln": generic["gln"],
        "gldm_dn": generic["size_nu"],
        "gldm_dnn": generic["size_nun"],
        "gldm_glv": generic["glv"],
        "gldm_dv": generic["size_var"],
        "gldm_dependence_entropy": generic["entropy"],
        "gldm_lgle": generic["lgl"],
        "gldm_hgle": generic["hgl"],
        "gldm_sdlgle": generic["slgl"],
        "gldm_sdhgle": generic["shgl"],
        "gldm_ldlgle": generic["llgl"],
        "gldm_ldhgle": generic["lhgl"],
    }


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def metrics_oracle(y_true, y_pred) -> dict:
    conf = [[0] * 3 for _ in range(3)]
    for t, p in zip(y_true, y_pred):
        conf[int(t)][int(p)] += 1
    total = sum(sum(r) for r in conf)
    acc = sum(conf[c][c] for c in range(3)) / total
    precisions, recalls, f1s = [], [], []
    for c in range(3):
        col = sum(conf[r][c] for r in range(3))
        row = sum(conf[c])
        p = conf[c][c] / col if col > 0 else 0.0
        if row > 0 or col > 0:
            precisions.append(p)
        if row > 0:
            r = conf[c][c] / row
            recalls.append(r)
            f1s.append(2 * p * r / (p + r) if p + r > 0 else 0.0)
    return {
        "accuracy": acc,
        "precision": sum(precisions) / len(precisions),
        "recall": sum(recalls) / len(recalls),
        "f1": sum(f1s) / len(f1s),
        "confusion": np.array(conf),
    }


# ---------------------------------------------------------------------------
# forward-pass oracles
# ---------------------------------------------------------------------------

def softmax_oracle(row: np.ndarray) -> np.ndarray:
    m = max(row)
    e = [math.exp(v - m) for v in row]
    s = sum(e)
    return np.array([v / s for v in e])


def mlp_forward_oracle(params: dict, x: np.ndarray, n_hidden: int) -> np.ndarray:
    """One sample at a time, explicit loops over layers."""
    out = []
    for row in x:
        h = row
        for i in range(1, n_hidden + 1):
            h = np.maximum(h @ params[f"W{i}"] + params[f"b{i}"], 0.0)
        out.append(softmax_oracle(h @ params["Wh"] + params["bh"]))
    return np.array(out)


def prffn_forward_oracle(
    params: dict, x: np.ndarray, k: int, in_polar: int
) -> np.ndarray:
    out = []
    for row in x:
        hp = row[:in_polar]
        hr = row[in_polar:]
        heads = []
        for i in range(1, k + 1):
            hp = np.maximum(hp @ params[f"P_W{i}"] + params[f"P_b{i}"], 0.0)
            hr = np.maximum(hr @ params[f"R_W{i}"] + params[f"R_b{i}"], 0.0)
            cat = np.concatenate([hp, hr])
            alpha = softmax_oracle(cat @ params[f"A_W{i}"] + params[f"A_b{i}"])
            fused = alpha[0] * hp + alpha[1] * hr
            heads.append(softmax_oracle(fused @ params[f"H_W{i}"] + params[f"H_b{i}"]))
        beta = softmax_oracle(
            np.concatenate(heads) @ params["L_W"] + params["L_b"]
        )
        y = sum(beta[i] * heads[i] for i in range(k))
        out.append(y)
    return np.array(out)
