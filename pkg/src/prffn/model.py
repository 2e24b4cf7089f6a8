"""The two-tier fusion classifier and its comparison baselines.

Architecture, per sample: two ReLU MLP towers (polarimetry: 23 inputs,
radiomics: 93 inputs) with matching hidden widths; at every depth i the
two tower activations are blended by a per-sample attention layer
(concatenate, map to 2 logits, softmax) into a fused feature y_i; a linear
softmax head turns each y_i into class probabilities X_i; a late attention
layer (concatenate all X_i, map to k logits, softmax) produces weights b_i
and the final prediction Y = sum_i b_i X_i. Y is a convex combination of
probability vectors, hence itself a probability vector.

Everything is plain numpy with hand-written backpropagation; training is
mini-batch SGD with momentum, seeded and bit-deterministic. Baselines:
single-modality MLPs, an early-fusion MLP on the 116-dim concatenation,
and uniform late averaging of the two single-modality models.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ModelError, TrainingError

N_CLASSES = 3
POLAR_DIM = 23
RADIOMICS_DIM = 93
FUSED_DIM = POLAR_DIM + RADIOMICS_DIM

PROB_CLIP = 1e-12

MODEL_KINDS = ("prffn", "polar_only", "radiomics_only", "early_concat", "late_result")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 256
    epochs: int = 100
    patience: int = 10
    val_fraction: float = 0.1
    aux_weight: float = 0.3  # per-layer head cross-entropy weight (fusion net)
    hidden_sizes: tuple[int, ...] = (512, 256, 128)

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise TrainingError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1 or self.epochs < 1:
            raise TrainingError("batch size and epochs must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise TrainingError("validation fraction must be in [0, 1)")
        if len(self.hidden_sizes) < 1:
            raise TrainingError("at least one hidden layer required")


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_backward(s: np.ndarray, ds: np.ndarray) -> np.ndarray:
    """Gradient through a row-wise softmax: s = softmax(z), given dL/ds."""
    return s * (ds - np.sum(ds * s, axis=-1, keepdims=True))


def _he_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _cross_entropy(probs: np.ndarray, y: np.ndarray) -> float:
    picked = np.clip(probs[np.arange(len(y)), y], PROB_CLIP, None)
    return float(-np.mean(np.log(picked)))


def _cross_entropy_grad(probs: np.ndarray, y: np.ndarray, weight: float) -> np.ndarray:
    """dL/dprobs for L = weight * mean(-log probs[y]); the clip region has
    zero slope only on the clipped side, matching the forward value."""
    n = len(y)
    grad = np.zeros_like(probs)
    picked = probs[np.arange(n), y]
    grad[np.arange(n), y] = -weight / (n * np.clip(picked, PROB_CLIP, None))
    return grad


# ---------------------------------------------------------------------------
# Single-tower MLP (the four baselines all reduce to this)
# ---------------------------------------------------------------------------

class MlpModel:
    """ReLU MLP with a linear softmax head; operates on a feature slice."""

    def __init__(self, in_dim: int, hidden_sizes: tuple[int, ...], feature_slice: slice):
        self.in_dim = in_dim
        self.hidden_sizes = tuple(hidden_sizes)
        self.feature_slice = feature_slice
        self.params: dict[str, np.ndarray] | None = None

    def init_params(self, seed: int) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        params: dict[str, np.ndarray] = {}
        dims = (self.in_dim, *self.hidden_sizes)
        for i in range(1, len(dims)):
            params[f"W{i}"] = _he_uniform(rng, dims[i - 1], dims[i])
            params[f"b{i}"] = np.zeros(dims[i])
        params["Wh"] = _he_uniform(rng, dims[-1], N_CLASSES)
        params["bh"] = np.zeros(N_CLASSES)
        return params

    def _slice(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2:
            raise ModelError(f"expected a 2-D batch, got shape {x.shape}")
        x = x[:, self.feature_slice]
        if x.shape[1] != self.in_dim:
            raise ModelError(
                f"input provides {x.shape[1]} features, model expects {self.in_dim}"
            )
        return x

    def forward(self, params: dict, x: np.ndarray) -> tuple[np.ndarray, dict]:
        x = self._slice(x)
        k = len(self.hidden_sizes)
        acts = [x]
        pre = []
        h = x
        for i in range(1, k + 1):
            z = h @ params[f"W{i}"] + params[f"b{i}"]
            pre.append(z)
            h = np.maximum(z, 0.0)
            acts.append(h)
        logits = h @ params["Wh"] + params["bh"]
        probs = softmax(logits)
        return probs, {"acts": acts, "pre": pre, "probs": probs}

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        if self.params is None:
            raise ModelError("model is not trained")
        return self.forward(self.params, x)[0]

    def loss_and_grads(
        self, params: dict, x: np.ndarray, y: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray]]:
        probs, cache = self.forward(params, x)
        loss = _cross_entropy(probs, y)
        dprobs = _cross_entropy_grad(probs, y, 1.0)
        dlogits = _softmax_backward(probs, dprobs)
        grads: dict[str, np.ndarray] = {}
        k = len(self.hidden_sizes)
        grads["Wh"] = cache["acts"][k].T @ dlogits
        grads["bh"] = dlogits.sum(axis=0)
        dh = dlogits @ params["Wh"].T
        for i in range(k, 0, -1):
            dz = dh * (cache["pre"][i - 1] > 0)
            grads[f"W{i}"] = cache["acts"][i - 1].T @ dz
            grads[f"b{i}"] = dz.sum(axis=0)
            dh = dz @ params[f"W{i}"].T
        return loss, grads


# ---------------------------------------------------------------------------
# The fusion network
# ---------------------------------------------------------------------------

class PrffnModel:
    """Dual towers + per-layer attention fusion + per-layer heads + late fusion."""

    def __init__(
        self,
        hidden_sizes: tuple[int, ...] = (512, 256, 128),
        aux_weight: float = 0.3,
        in_polar: int = POLAR_DIM,
        in_radiomics: int = RADIOMICS_DIM,
    ):
        self.hidden_sizes = tuple(hidden_sizes)
        self.k = len(self.hidden_sizes)
        self.aux_weight = float(aux_weight)
        self.in_polar = in_polar
        self.in_radiomics = in_radiomics
        self.params: dict[str, np.ndarray] | None = None

    def init_params(self, seed: int) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        params: dict[str, np.ndarray] = {}
        for tag, in_dim in (("P", self.in_polar), ("R", self.in_radiomics)):
            dims = (in_dim, *self.hidden_sizes)
            for i in range(1, len(dims)):
                params[f"{tag}_W{i}"] = _he_uniform(rng, dims[i - 1], dims[i])
                params[f"{tag}_b{i}"] = np.zeros(dims[i])
        for i, d in enumerate(self.hidden_sizes, start=1):
            params[f"A_W{i}"] = _he_uniform(rng, 2 * d, 2)
            params[f"A_b{i}"] = np.zeros(2)
            params[f"H_W{i}"] = _he_uniform(rng, d, N_CLASSES)
            params[f"H_b{i}"] = np.zeros(N_CLASSES)
        params["L_W"] = _he_uniform(rng, N_CLASSES * self.k, self.k)
        params["L_b"] = np.zeros(self.k)
        return params

    def _split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.in_polar + self.in_radiomics:
            raise ModelError(
                f"expected (n, {self.in_polar + self.in_radiomics}) inputs, "
                f"got {x.shape}"
            )
        return x[:, : self.in_polar], x[:, self.in_polar:]

    def forward(self, params: dict, x: np.ndarray) -> tuple[np.ndarray, dict]:
        xp, xr = self._split(x)
        cache: dict = {
            "yP": [xp], "yR": [xr], "preP": [], "preR": [],
            "alpha": [], "fused": [], "heads": [], "concat_att": [],
        }
        hp, hr = xp, xr
        for i in range(1, self.k + 1):
            zp = hp @ params[f"P_W{i}"] + params[f"P_b{i}"]
            zr = hr @ params[f"R_W{i}"] + params[f"R_b{i}"]
            hp = np.maximum(zp, 0.0)
            hr = np.maximum(zr, 0.0)
            cache["preP"].append(zp)
            cache["preR"].append(zr)
            cache["yP"].append(hp)
            cache["yR"].append(hr)
            cat = np.concatenate([hp, hr], axis=1)
            alpha = softmax(cat @ params[f"A_W{i}"] + params[f"A_b{i}"])
            fused = alpha[:, :1] * hp + alpha[:, 1:] * hr
            head = softmax(fused @ params[f"H_W{i}"] + params[f"H_b{i}"])
            cache["concat_att"].append(cat)
            cache["alpha"].append(alpha)
            cache["fused"].append(fused)
            cache["heads"].append(head)
        cat_heads = np.concatenate(cache["heads"], axis=1)
        beta = softmax(cat_heads @ params["L_W"] + params["L_b"])
        y_hat = sum(
            beta[:, i : i + 1] * cache["heads"][i] for i in range(self.k)
        )
        cache["cat_heads"] = cat_heads
        cache["beta"] = beta
        cache["probs"] = y_hat
        return y_hat, cache

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        if self.params is None:
            raise ModelError("model is not trained")
        return self.forward(self.params, x)[0]

    def attention_report(self, x: np.ndarray) -> dict[str, np.ndarray]:
        """Per-sample interpretability weights: alpha (n, k, 2), beta (n, k)."""
        if self.params is None:
            raise ModelError("model is not trained")
        _, cache = self.forward(self.params, x)
        return {
            "alpha": np.stack(cache["alpha"], axis=1),
            "beta": cache["beta"],
            "heads": np.stack(cache["heads"], axis=1),
        }

    def loss_and_grads(
        self, params: dict, x: np.ndarray, y: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray]]:
        y_hat, cache = self.forward(params, x)
        loss = _cross_entropy(y_hat, y)
        if self.aux_weight > 0:
            loss += self.aux_weight * sum(
                _cross_entropy(h, y) for h in cache["heads"]
            )

        grads = {name: np.zeros_like(p) for name, p in params.items()}
        k = self.k
        beta = cache["beta"]
        heads = cache["heads"]

        dy = _cross_entropy_grad(y_hat, y, 1.0)

        # late fusion: Y = sum_i beta_i X_i
        dbeta = np.stack([np.sum(dy * heads[i], axis=1) for i in range(k)], axis=1)
        dheads = [beta[:, i : i + 1] * dy for i in range(k)]
        dz_late = _softmax_backward(beta, dbeta)
        grads["L_W"] = cache["cat_heads"].T @ dz_late
        grads["L_b"] = dz_late.sum(axis=0)
        dcat_heads = dz_late @ params["L_W"].T
        for i in range(k):
            dheads[i] = dheads[i] + dcat_heads[:, N_CLASSES * i : N_CLASSES * (i + 1)]
            if self.aux_weight > 0:
                dheads[i] = dheads[i] + _cross_entropy_grad(
                    heads[i], y, self.aux_weight
                )

        # per-layer heads and attention fusion
        dyP = [np.zeros_like(cache["yP"][i + 1]) for i in range(k)]
        dyR = [np.zeros_like(cache["yR"][i + 1]) for i in range(k)]
        for i in range(k):
            dlogits = _softmax_backward(heads[i], dheads[i])
            grads[f"H_W{i + 1}"] = cache["fused"][i].T @ dlogits
            grads[f"H_b{i + 1}"] = dlogits.sum(axis=0)
            dfused = dlogits @ params[f"H_W{i + 1}"].T

            alpha = cache["alpha"][i]
            hp, hr = cache["yP"][i + 1], cache["yR"][i + 1]
            dalpha = np.stack(
                [np.sum(dfused * hp, axis=1), np.sum(dfused * hr, axis=1)], axis=1
            )
            dyP[i] += alpha[:, :1] * dfused
            dyR[i] += alpha[:, 1:] * dfused
            dz_att = _softmax_backward(alpha, dalpha)
            grads[f"A_W{i + 1}"] = cache["concat_att"][i].T @ dz_att
            grads[f"A_b{i + 1}"] = dz_att.sum(axis=0)
            dcat = dz_att @ params[f"A_W{i + 1}"].T
            d = hp.shape[1]
            dyP[i] += dcat[:, :d]
            dyR[i] += dcat[:, d:]

        # towers, top down; activations feed both fusion and the next layer
        for tag, dtop, pre_key, act_key in (
            ("P", dyP, "preP", "yP"),
            ("R", dyR, "preR", "yR"),
        ):
            carry = np.zeros_like(dtop[-1])
            for i in range(k, 0, -1):
                dh = dtop[i - 1] + carry
                dz = dh * (cache[pre_key][i - 1] > 0)
                grads[f"{tag}_W{i}"] = cache[act_key][i - 1].T @ dz
                grads[f"{tag}_b{i}"] = dz.sum(axis=0)
                carry = dz @ params[f"{tag}_W{i}"].T
        return loss, grads


class LateAverageModel:
    """Uniform average of the two single-modality MLP probability outputs."""

    def __init__(self, hidden_sizes: tuple[int, ...] = (512, 256, 128)):
        self.polar = MlpModel(POLAR_DIM, hidden_sizes, slice(0, POLAR_DIM))
        self.radio = MlpModel(RADIOMICS_DIM, hidden_sizes, slice(POLAR_DIM, FUSED_DIM))

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return 0.5 * (self.polar.predict_proba(x) + self.radio.predict_proba(x))


def build_model(kind: str, cfg: TrainConfig):
    """Instantiate one of the five comparison models (untrained)."""
    hs = cfg.hidden_sizes
    if kind == "prffn":
        return PrffnModel(hidden_sizes=hs, aux_weight=cfg.aux_weight)
    if kind == "polar_only":
        return MlpModel(POLAR_DIM, hs, slice(0, POLAR_DIM))
    if kind == "radiomics_only":
        return MlpModel(RADIOMICS_DIM, hs, slice(POLAR_DIM, FUSED_DIM))
    if kind == "early_concat":
        return MlpModel(FUSED_DIM, hs, slice(0, FUSED_DIM))
    if kind == "late_result":
        return LateAverageModel(hidden_sizes=hs)
    raise ModelError(f"unknown model kind {kind!r}; choose from {MODEL_KINDS}")


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    params: dict[str, np.ndarray]
    history: list[tuple[int, float, float]]  # (epoch, train loss, val loss)
    best_epoch: int


def _sgd_fit(model, x: np.ndarray, y: np.ndarray, cfg: TrainConfig, seed: int) -> TrainResult:
    cfg.validate()
    if len(np.unique(y)) < 2:
        raise TrainingError("training rows contain fewer than two classes")
    rng = np.random.default_rng(seed)
    params = model.init_params(seed)
    velocity = {name: np.zeros_like(p) for name, p in params.items()}

    n = len(y)
    n_val = int(round(cfg.val_fraction * n))
    order = rng.permutation(n)
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(train_idx) == 0:
        raise TrainingError("validation split leaves no training rows")
    x_tr, y_tr = x[train_idx], y[train_idx]
    x_val, y_val = x[val_idx], y[val_idx]

    best = {name: p.copy() for name, p in params.items()}
    best_loss = np.inf
    best_epoch = 0
    strikes = 0
    history: list[tuple[int, float, float]] = []

    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(len(y_tr))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(y_tr), cfg.batch_size):
            sel = perm[start : start + cfg.batch_size]
            loss, grads = model.loss_and_grads(params, x_tr[sel], y_tr[sel])
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}; reduce the learning rate"
                )
            for name in params:
                velocity[name] = cfg.momentum * velocity[name] - cfg.learning_rate * grads[name]
                params[name] = params[name] + velocity[name]
            epoch_loss += loss
            n_batches += 1

        train_loss = epoch_loss / n_batches
        if len(y_val):
            probs, _ = model.forward(params, x_val)
            monitor = _cross_entropy(probs, y_val)
        else:
            monitor = train_loss
        history.append((epoch, train_loss, monitor))
        if not np.isfinite(monitor):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")

        if monitor < best_loss - 1e-12:
            best_loss = monitor
            best = {name: p.copy() for name, p in params.items()}
            best_epoch = epoch
            strikes = 0
        else:
            strikes += 1
            if strikes >= cfg.patience:
                break

    return TrainResult(params=best, history=history, best_epoch=best_epoch)


def train_model(kind: str, x: np.ndarray, y: np.ndarray, cfg: TrainConfig, seed: int):
    """Train one model kind on normalized features; returns the fitted model
    and its training history. Deterministic for fixed (kind, data, cfg, seed)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=int)
    model = build_model(kind, cfg)
    if kind == "late_result":
        rp = _sgd_fit(model.polar, x, y, cfg, seed)
        rr = _sgd_fit(model.radio, x, y, cfg, seed + 1)
        model.polar.params = rp.params
        model.radio.params = rr.params
        history = [
            (e1, 0.5 * (t1 + t2), 0.5 * (v1 + v2))
            for (e1, t1, v1), (_, t2, v2) in zip(rp.history, rr.history)
        ]
        return model, history
    result = _sgd_fit(model, x, y, cfg, seed)
    model.params = result.params
    return model, result.history


# ---------------------------------------------------------------------------
# Checkpoints: compact JSON header line + float32 little-endian payload
# ---------------------------------------------------------------------------

def feature_order_hash(columns: tuple[str, ...]) -> str:
    return hashlib.sha256(",".join(columns).encode()).hexdigest()[:16]


def save_checkpoint(
    path: str | Path,
    kind: str,
    params: dict[str, np.ndarray],
    cfg: TrainConfig,
    seed: int,
    columns: tuple[str, ...],
    extra_header: dict | None = None,
) -> None:
    names = sorted(params)
    header = {
        "schema": 1,
        "kind": kind,
        "shapes": {n: list(params[n].shape) for n in names},
        "hyperparameters": {
            "learning_rate": cfg.learning_rate,
            "momentum": cfg.momentum,
            "batch_size": cfg.batch_size,
            "epochs": cfg.epochs,
            "patience": cfg.patience,
            "val_fraction": cfg.val_fraction,
            "aux_weight": cfg.aux_weight,
            "hidden_sizes": list(cfg.hidden_sizes),
        },
        "seed": seed,
        "feature_order_hash": feature_order_hash(columns),
        **(extra_header or {}),
    }
    payload = b"".join(
        np.ascontiguousarray(params[n], dtype="<f4").tobytes() for n in names
    )
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(payload)


def load_checkpoint(path: str | Path, columns: tuple[str, ...]):
    """Returns (kind, params, header). Weights come back as float64 arrays
    (rounded through the float32 payload)."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        payload = fh.read()
    if header.get("feature_order_hash") != feature_order_hash(columns):
        raise ModelError("checkpoint was trained with a different feature order")
    params: dict[str, np.ndarray] = {}
    offset = 0
    for name in sorted(header["shapes"]):
        shape = tuple(header["shapes"][name])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        params[name] = arr.reshape(shape).astype(np.float64)
        offset += count * 4
    if offset != len(payload):
        raise ModelError("checkpoint payload size does not match header shapes")
    return header["kind"], params, header


def rebuild_model(kind: str, params: dict[str, np.ndarray], cfg: TrainConfig):
    model = build_model(kind, cfg)
    if kind == "late_result":
        model.polar.params = {
            k[len("polar."):]: v for k, v in params.items() if k.startswith("polar.")
        }
        model.radio.params = {
            k[len("radio."):]: v for k, v in params.items() if k.startswith("radio.")
        }
    else:
        model.params = params
    return model


def model_params(model) -> dict[str, np.ndarray]:
    """Flat parameter dict for checkpointing any of the five model kinds."""
    if isinstance(model, LateAverageModel):
        out = {f"polar.{k}": v for k, v in model.polar.params.items()}
        out.update({f"radio.{k}": v for k, v in model.radio.params.items()})
        return out
    if model.params is None:
        raise ModelError("model is not trained")
    return model.params


# ---------------------------------------------------------------------------
# Per-pixel classification of a whole ROI
# ---------------------------------------------------------------------------

def predict_map(model, roi, norm_stats, patch_size: int = 100,
                radiomics_cfg=None, registered=None, batch_size: int = 512):
    """Classify every pixel of a registered ROI into a label mask.

    Pixels whose centered patch leaves the image, or whose polarimetry
    decode is invalid, stay background (0); everything else receives the
    predicted class mapped to mask labels 1/2/3.
    """
    from .dataset import (
        GrayPatch,
        apply_normalizer,
        extract_patch,
        interior_mask,
        register_roi,
    )
    from .radiomics import RadiomicsConfig, extract_radiomics

    radiomics_cfg = radiomics_cfg or RadiomicsConfig()
    reg = registered if registered is not None else register_roi(roi)
    h, w = reg.mask.shape
    inner = interior_mask(np.ones((h, w), dtype=np.int64), patch_size)
    valid_pbp = np.all(np.isfinite(reg.pbp.values), axis=2)
    coords = np.argwhere((inner > 0) & valid_pbp)  # (n, 2) as (y, x)

    out = np.zeros((h, w), dtype=np.int64)
    for start in range(0, len(coords), batch_size):
        chunk = coords[start : start + batch_size]
        feats = np.stack(
            [
                np.concatenate(
                    [
                        reg.pbp.values[y, x],
                        extract_radiomics(
                            GrayPatch(values=extract_patch(reg.gray, x, y, patch_size)),
                            radiomics_cfg,
                        ),
                    ]
                )
                for y, x in chunk
            ]
        )
        probs = model.predict_proba(apply_normalizer(feats, norm_stats))
        out[chunk[:, 0], chunk[:, 1]] = np.argmax(probs, axis=1) + 1
    return out
