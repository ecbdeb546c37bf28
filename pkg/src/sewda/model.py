"""Two-layer feature extractor + linear classifier with hand-derived
gradients and an SGD-with-momentum optimizer.

The parameter set splits into two groups: the extractor (w1, b1, w2, b2) and
the classifier (wc, bc). backward() returns one gradient per group objective:
the extractor descends composite + lam * entropy, the classifier descends
composite - lam * entropy, which realizes the adversarial entropy update as a
pair of ordinary gradient steps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .losses import (
    LossBreakdown,
    LossSpec,
    ce_rows,
    focal_source_ce,
    pseudo_label_gate,
    pseudo_label_loss,
    source_ce,
    unlabeled_entropy,
    weighted_source_ce,
)
from .numerics import LOG_EPS, NORM_EPS, SeededRng, one_hot_rows, softmax

ARRAY_FIELDS = ("w1", "b1", "w2", "b2", "wc", "bc")
F_GROUP = ("w1", "b1", "w2", "b2")
C_GROUP = ("wc", "bc")


@dataclass
class ModelParams:
    w1: np.ndarray  # (h, d_in)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (d_f, h)
    b2: np.ndarray  # (d_f,)
    wc: np.ndarray  # (k, d_f)
    bc: np.ndarray  # (k,)
    normalize_features: bool = False
    feature_temperature: float = 0.05

    @property
    def d_in(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def d_f(self) -> int:
        return self.w2.shape[0]

    @property
    def k(self) -> int:
        return self.wc.shape[0]

    def check_shapes(self) -> None:
        h, d_f, k = self.hidden, self.d_f, self.k
        ok = (
            self.b1.shape == (h,)
            and self.w2.shape == (d_f, h)
            and self.b2.shape == (d_f,)
            and self.wc.shape == (k, d_f)
            and self.bc.shape == (k,)
        )
        if not ok:
            raise ValueError("inconsistent parameter shapes")
        for name in ARRAY_FIELDS:
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name}")

    def copy(self) -> "ModelParams":
        return ModelParams(
            *(getattr(self, name).copy() for name in ARRAY_FIELDS),
            normalize_features=self.normalize_features,
            feature_temperature=self.feature_temperature,
        )


@dataclass
class Gradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    wc: np.ndarray
    bc: np.ndarray

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "Gradients":
        return cls(*(np.zeros_like(getattr(params, name)) for name in ARRAY_FIELDS))

    @classmethod
    def combine(cls, a: "Gradients", coeff_a: float, b: "Gradients", coeff_b: float) -> "Gradients":
        return cls(
            *(coeff_a * getattr(a, name) + coeff_b * getattr(b, name) for name in ARRAY_FIELDS)
        )


def init_params(
    d_in: int,
    hidden: int,
    d_f: int,
    k: int,
    rng: SeededRng,
    normalize_features: bool = False,
    feature_temperature: float = 0.05,
) -> ModelParams:
    """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer."""

    def layer(rows, cols):
        bound = 1.0 / np.sqrt(cols)
        w = rng.uniform(-bound, bound, size=(rows, cols))
        b = rng.uniform(-bound, bound, size=rows)
        return w, b

    w1, b1 = layer(hidden, d_in)
    w2, b2 = layer(d_f, hidden)
    wc, bc = layer(k, d_f)
    params = ModelParams(w1, b1, w2, b2, wc, bc, normalize_features, feature_temperature)
    params.check_shapes()
    return params


def _forward(params: ModelParams, x: np.ndarray) -> dict:
    """Full forward pass with the intermediates backprop needs."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.d_in:
        raise ValueError(f"input dimension {x.shape[1]} != d_in {params.d_in}")
    v = x @ params.w1.T + params.b1
    a = np.maximum(v, 0.0)
    u = a @ params.w2.T + params.b2
    f = np.tanh(u)
    if params.normalize_features:
        norms = np.maximum(np.linalg.norm(f, axis=1, keepdims=True), NORM_EPS)
        g = f / (norms * params.feature_temperature)
    else:
        norms = None
        g = f
    z = g @ params.wc.T + params.bc
    p = softmax(z)
    return {"x": x, "v": v, "a": a, "f": f, "g": g, "norms": norms, "z": z, "p": p}


def features(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Representation f = tanh(W2 relu(W1 x + b1) + b2); (d_f,) or (B, d_f)."""
    single = np.asarray(x).ndim == 1
    f = _forward(params, x)["f"]
    return f[0] if single else f


def logits(params: ModelParams, f: np.ndarray) -> np.ndarray:
    """Classifier scores from a feature vector or batch."""
    f = np.asarray(f, dtype=np.float64)
    single = f.ndim == 1
    f2 = np.atleast_2d(f)
    if f2.shape[1] != params.d_f:
        raise ValueError(f"feature dimension {f2.shape[1]} != d_f {params.d_f}")
    if params.normalize_features:
        norms = np.maximum(np.linalg.norm(f2, axis=1, keepdims=True), NORM_EPS)
        f2 = f2 / (norms * params.feature_temperature)
    z = f2 @ params.wc.T + params.bc
    return z[0] if single else z


def predict_probs(params: ModelParams, x: np.ndarray) -> np.ndarray:
    single = np.asarray(x).ndim == 1
    p = _forward(params, x)["p"]
    return p[0] if single else p


def predict_labels(params: ModelParams, x: np.ndarray) -> np.ndarray:
    return np.argmax(_forward(params, x)["p"], axis=1)


def _backprop_from_logits(params: ModelParams, cache: dict, d_z: np.ndarray, grads: Gradients) -> None:
    """Accumulate d(loss)/d(params) given d(loss)/d(logits)."""
    grads.wc += d_z.T @ cache["g"]
    grads.bc += d_z.sum(axis=0)
    d_g = d_z @ params.wc
    if params.normalize_features:
        f, norms = cache["f"], cache["norms"]
        scale = 1.0 / (norms * params.feature_temperature)
        clamped = norms[:, 0] <= NORM_EPS
        inner = np.sum(f * d_g, axis=1, keepdims=True)
        d_f = scale * (d_g - f * inner / norms**2)
        if np.any(clamped):  # norm floor active: normalization is locally affine
            d_f[clamped] = (d_g * scale)[clamped]
    else:
        d_f = d_g
    d_u = d_f * (1.0 - cache["f"] ** 2)
    grads.w2 += d_u.T @ cache["a"]
    grads.b2 += d_u.sum(axis=0)
    d_a = d_u @ params.w2
    d_v = d_a * (cache["v"] > 0.0)
    grads.w1 += d_v.T @ cache["x"]
    grads.b1 += d_v.sum(axis=0)


@dataclass
class TrainBatch:
    """One iteration's data: labeled source rows with their loss weights,
    pre-augmented weak/strong unlabeled views, and optional labeled targets."""

    x_source: np.ndarray | None = None
    y_source: np.ndarray | None = None
    w_source: np.ndarray | None = None
    x_unlabeled_weak: np.ndarray | None = None
    x_unlabeled_strong: np.ndarray | None = None
    x_target: np.ndarray | None = None
    y_target: np.ndarray | None = None


def _has_rows(x: np.ndarray | None) -> bool:
    return x is not None and np.atleast_2d(x).shape[0] > 0


def backward(params: ModelParams, batch: TrainBatch, spec: LossSpec) -> tuple[LossBreakdown, Gradients, Gradients]:
    """Loss values plus the two group-objective gradients.

    Returns (breakdown, grads_f, grads_c): grads_f is the gradient of
    l1 + lam * l_ult, grads_c of l1 - lam * l_ult, both over all parameters;
    the optimizer applies each to its own group. Empty or disabled streams
    contribute exactly zero.
    """
    d_l1 = Gradients.zeros_like(params)
    d_ult = Gradients.zeros_like(params)
    out = LossBreakdown(source_style=spec.source_mode)

    if spec.source_mode != "off" and _has_rows(batch.x_source):
        cache = _forward(params, batch.x_source)
        p = cache["p"]
        n = p.shape[0]
        y_rows = one_hot_rows(batch.y_source, params.k)
        if spec.source_mode == "plain":
            out.l_s = source_ce(batch.y_source, p)
            out.source_active = True
            d_z = (p - y_rows) / n
        elif spec.source_mode == "weighted":
            w = np.asarray(batch.w_source, dtype=np.float64)
            out.l_s_w = weighted_source_ce(batch.y_source, p, w)
            out.weighted_source_active = True
            d_z = w[:, None] * (p - y_rows) / n
        else:  # focal
            out.l_s_w = focal_source_ce(batch.y_source, p, spec.gamma)
            out.weighted_source_active = True
            labels = np.asarray(batch.y_source, dtype=np.int64)
            rows = np.arange(n)
            q = np.maximum(p[rows, labels], LOG_EPS)
            one_m = 1.0 - p[rows, labels]
            # d/dq of (1-q)^g * (-log q); the g=0 branch avoids 0^(-1)
            if spec.gamma == 0.0:
                dl_dq = -1.0 / q
            else:
                dl_dq = spec.gamma * np.maximum(one_m, 0.0) ** (spec.gamma - 1.0) * np.log(q) - one_m**spec.gamma / q
            # chain rule: dq/dz_j = q * (delta_jy - p_j)
            d_z = (dl_dq / n)[:, None] * (p[rows, labels][:, None] * (y_rows - p))
        _backprop_from_logits(params, cache, d_z, d_l1)

    weak_cache = None
    if (spec.use_pseudo or spec.use_ult) and _has_rows(batch.x_unlabeled_weak):
        weak_cache = _forward(params, batch.x_unlabeled_weak)

    if spec.use_pseudo and weak_cache is not None and _has_rows(batch.x_unlabeled_strong):
        strong_cache = _forward(params, batch.x_unlabeled_strong)
        p_w, p_s = weak_cache["p"], strong_cache["p"]
        out.l_p = pseudo_label_loss(p_w, p_s, spec.tau)
        out.pseudo_active = True
        mask, labels = pseudo_label_gate(p_w, spec.tau)
        out.pseudo_count = int(np.sum(mask))
        if out.pseudo_count:
            n = p_s.shape[0]
            d_z = mask[:, None] * (p_s - one_hot_rows(labels, params.k)) / n
            _backprop_from_logits(params, strong_cache, d_z, d_l1)

    if spec.use_ult and weak_cache is not None:
        p = weak_cache["p"]
        n = p.shape[0]
        out.l_ult = unlabeled_entropy(p)
        out.ult_active = True
        logp = np.log(np.maximum(p, LOG_EPS))
        h_rows = -np.sum(p * logp, axis=1, keepdims=True)
        d_z = -(p * (logp + h_rows)) / n
        _backprop_from_logits(params, weak_cache, d_z, d_ult)

    if spec.use_lt and _has_rows(batch.x_target):
        cache = _forward(params, batch.x_target)
        p = cache["p"]
        n = p.shape[0]
        out.l_lt = float(np.mean(ce_rows(batch.y_target, p)))
        out.lt_active = True
        d_z = (p - one_hot_rows(batch.y_target, params.k)) / n
        _backprop_from_logits(params, cache, d_z, d_l1)

    out.l1 = out.l_p + out.l_s + out.l_s_w + out.l_lt
    grads_f = Gradients.combine(d_l1, 1.0, d_ult, spec.lam)
    grads_c = Gradients.combine(d_l1, 1.0, d_ult, -spec.lam)
    return out, grads_f, grads_c


@dataclass
class OptimizerState:
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    velocity: Gradients | None = None

    def ensure_buffers(self, params: ModelParams) -> None:
        if self.velocity is None:
            self.velocity = Gradients.zeros_like(params)


def sgd_step(params: ModelParams, opt: OptimizerState, grads_f: Gradients, grads_c: Gradients) -> ModelParams:
    """v <- mu v + g + wd theta; theta <- theta - lr v, per parameter group."""
    opt.ensure_buffers(params)
    for name in ARRAY_FIELDS:
        g = getattr(grads_f if name in F_GROUP else grads_c, name)
        theta = getattr(params, name)
        v = getattr(opt.velocity, name)
        v *= opt.momentum
        v += g + opt.weight_decay * theta
        theta -= opt.lr * v
    return params


def params_to_vector(params: ModelParams) -> np.ndarray:
    return np.concatenate([getattr(params, name).ravel() for name in ARRAY_FIELDS])


def vector_to_params(vec: np.ndarray, like: ModelParams) -> ModelParams:
    out = like.copy()
    offset = 0
    for name in ARRAY_FIELDS:
        arr = getattr(out, name)
        size = arr.size
        arr[...] = vec[offset : offset + size].reshape(arr.shape)
        offset += size
    if offset != vec.size:
        raise ValueError("parameter vector length mismatch")
    return out


def group_slices(params: ModelParams) -> dict[str, np.ndarray]:
    """Boolean masks over the flat parameter vector for the two groups."""
    masks = {}
    flat_len = params_to_vector(params).size
    mask_f = np.zeros(flat_len, dtype=bool)
    offset = 0
    for name in ARRAY_FIELDS:
        size = getattr(params, name).size
        if name in F_GROUP:
            mask_f[offset : offset + size] = True
        offset += size
    masks["F"] = mask_f
    masks["C"] = ~mask_f
    return masks


def gradients_to_vector(grads: Gradients) -> np.ndarray:
    return np.concatenate([getattr(grads, name).ravel() for name in ARRAY_FIELDS])


def save_checkpoint(params: ModelParams, path) -> None:
    """JSON checkpoint; float values round-trip exactly (repr-based)."""
    doc = {
        "format": "sewda-checkpoint-v1",
        "normalize_features": params.normalize_features,
        "feature_temperature": params.feature_temperature,
        "arrays": {name: getattr(params, name).tolist() for name in ARRAY_FIELDS},
    }
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_checkpoint(path) -> ModelParams:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != "sewda-checkpoint-v1":
        raise ValueError(f"{path}: not a model checkpoint")
    arrays = {name: np.asarray(doc["arrays"][name], dtype=np.float64) for name in ARRAY_FIELDS}
    params = ModelParams(
        **arrays,
        normalize_features=bool(doc["normalize_features"]),
        feature_temperature=float(doc["feature_temperature"]),
    )
    params.check_shapes()
    return params
