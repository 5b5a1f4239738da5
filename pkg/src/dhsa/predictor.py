"""Learned boundary scoring.

For every position i, two windows of w key vectors — the w tokens
ending at i and the w tokens after i — pass through a shared one-layer
multi-head self-attention encoder with mean pooling.  The two pooled
encodings are fused (identity, absolute difference, product, cosine)
and a two-layer MLP maps the fused feature to a boundary probability.
Training minimizes a focal binary cross-entropy against the soft labels
produced by attention-mass labeling; gradients are hand-derived and
validated by a finite-difference check.

The exported ``focal_bce`` keeps its (1-p)^gamma modulator on both the
positive and negative terms.  That form is the reference for spot
values, but as a training objective it is degenerate — for any target
below 1 its minimum sits at p = 1, because the modulator decays faster
than -log(1-p) grows — so the training loss applies the standard
one-sided modulation (p^gamma on the negative term), which coincides
with the two-sided form on hard positive targets.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .serialization import load_checkpoint, save_checkpoint

__all__ = [
    "PredictorParams", "TrainConfig", "init_predictor",
    "encode_window", "fuse", "predict", "predict_sequence",
    "focal_bce", "train", "evaluate", "grad_check", "top_k_overlap",
    "save_predictor", "load_predictor",
]

PARAM_ORDER = ("Wq", "Wk", "Wv", "Wo", "W1", "b1", "W2", "b2")
P_CLAMP = 1e-7
DEFAULT_W_POS = 1.3
DEFAULT_GAMMA = 2.0
TOP_K_CAP = 500


@dataclass(frozen=True)
class PredictorParams:
    """Weights plus the shape metadata needed to rebuild them."""

    dim: int
    window: int
    heads: int
    hidden: int
    tensors: dict

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(
                f"dim {self.dim} not divisible by heads {self.heads}")
        missing = [n for n in PARAM_ORDER if n not in self.tensors]
        if missing:
            raise ValueError(f"missing parameter tensors: {missing}")

    def copy(self) -> "PredictorParams":
        return replace(
            self, tensors={n: self.tensors[n].copy() for n in PARAM_ORDER})


@dataclass
class TrainConfig:
    """Knobs for the training loop."""

    epochs: int = 50
    lr: float = 1e-3
    batch_size: int = 1024
    seed: int = 0
    targets: str = "binary"        # "binary": soft >= 0.5; "soft": as-is
    w_pos: float = DEFAULT_W_POS
    gamma: float = DEFAULT_GAMMA


def _glorot(rng, fan_in, fan_out, shape=None):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, (fan_in, fan_out) if shape is None else shape)


def init_predictor(dim, window=4, heads=8, hidden=256, seed=0) -> PredictorParams:
    """Fresh parameters, uniform in +-sqrt(6 / (fan_in + fan_out))."""
    rng = np.random.default_rng(seed)
    feat = 4 * dim + 1
    tensors = {
        "Wq": _glorot(rng, dim, dim),
        "Wk": _glorot(rng, dim, dim),
        "Wv": _glorot(rng, dim, dim),
        "Wo": _glorot(rng, dim, dim),
        "W1": _glorot(rng, feat, hidden),
        "b1": np.zeros(hidden),
        "W2": _glorot(rng, hidden, 1)[:, 0],
        "b2": np.zeros(()),
    }
    return PredictorParams(dim, window, heads, hidden, tensors)


def _mha_pool_forward(X, params: PredictorParams):
    """(N, w, d) windows -> (N, d) pooled self-attention encodings."""
    P = params.tensors
    N, w, d = X.shape
    dh = d // params.heads
    Q, K, V = X @ P["Wq"], X @ P["Wk"], X @ P["Wv"]
    Qh = Q.reshape(N, w, params.heads, dh).transpose(0, 2, 1, 3)
    Kh = K.reshape(N, w, params.heads, dh).transpose(0, 2, 1, 3)
    Vh = V.reshape(N, w, params.heads, dh).transpose(0, 2, 1, 3)
    S = Qh @ Kh.swapaxes(-1, -2) / np.sqrt(dh)
    S -= S.max(axis=-1, keepdims=True)
    E = np.exp(S)
    att = E / E.sum(axis=-1, keepdims=True)
    Oh = att @ Vh
    Ocat = Oh.transpose(0, 2, 1, 3).reshape(N, w, d)
    pooled = (Ocat @ P["Wo"]).mean(axis=1)
    return pooled, (X, Qh, Kh, Vh, att, Ocat)


def _mha_pool_backward(dpool, cache, params: PredictorParams, grads):
    P = params.tensors
    X, Qh, Kh, Vh, att, Ocat = cache
    N, w, d = X.shape
    dh = d // params.heads
    dOf = np.broadcast_to(dpool[:, None, :] / w, (N, w, d))
    grads["Wo"] += np.einsum("nwd,nwe->de", Ocat, dOf)
    dOcat = dOf @ P["Wo"].T
    dOh = dOcat.reshape(N, w, params.heads, dh).transpose(0, 2, 1, 3)
    datt = dOh @ Vh.swapaxes(-1, -2)
    dVh = att.swapaxes(-1, -2) @ dOh
    dS = att * (datt - (datt * att).sum(axis=-1, keepdims=True)) / np.sqrt(dh)
    dQ = (dS @ Kh).transpose(0, 2, 1, 3).reshape(N, w, d)
    dK = (dS.swapaxes(-1, -2) @ Qh).transpose(0, 2, 1, 3).reshape(N, w, d)
    dV = dVh.transpose(0, 2, 1, 3).reshape(N, w, d)
    grads["Wq"] += np.einsum("nwd,nwe->de", X, dQ)
    grads["Wk"] += np.einsum("nwd,nwe->de", X, dK)
    grads["Wv"] += np.einsum("nwd,nwe->de", X, dV)


def encode_window(window_keys, params: PredictorParams) -> np.ndarray:
    """Encode one (w, d) window of keys into a single d-vector."""
    X = np.asarray(window_keys, dtype=np.float64)
    if X.shape != (params.window, params.dim):
        raise ValueError(
            f"expected a ({params.window}, {params.dim}) window, "
            f"got {X.shape}")
    pooled, _ = _mha_pool_forward(X[None], params)
    return pooled[0]


def _fuse_forward(kl, kr):
    diff = np.abs(kl - kr)
    prod = kl * kr
    nl = np.linalg.norm(kl, axis=1)
    nr = np.linalg.norm(kr, axis=1)
    denom = nl * nr
    safe = denom > 0
    cos = np.zeros(len(kl))
    cos[safe] = np.clip((kl * kr).sum(axis=1)[safe] / denom[safe], -1.0, 1.0)
    h = np.concatenate([kl, kr, diff, prod, cos[:, None]], axis=1)
    return h, (kl, kr, nl, nr, cos, safe)


def _fuse_backward(dh, cache):
    kl, kr, nl, nr, cos, safe = cache
    d = kl.shape[1]
    dkl = dh[:, :d].copy()
    dkr = dh[:, d:2 * d].copy()
    sgn = np.sign(kl - kr)
    dkl += dh[:, 2 * d:3 * d] * sgn
    dkr -= dh[:, 2 * d:3 * d] * sgn
    dkl += dh[:, 3 * d:4 * d] * kr
    dkr += dh[:, 3 * d:4 * d] * kl
    dcos = dh[:, 4 * d]
    scale = np.where(safe, dcos / np.where(safe, nl * nr, 1.0), 0.0)
    # d cos / d kl = kr / (|kl||kr|) - cos * kl / |kl|^2, and symmetrically
    dkl += scale[:, None] * kr - np.where(
        safe, dcos * cos / np.maximum(nl ** 2, 1e-300), 0.0)[:, None] * kl
    dkr += scale[:, None] * kl - np.where(
        safe, dcos * cos / np.maximum(nr ** 2, 1e-300), 0.0)[:, None] * kr
    return dkl, dkr


def fuse(left_encoding, right_encoding) -> np.ndarray:
    """Fuse two window encodings into one comparison feature.

    Layout: [left, right, |left - right|, left * right, cosine], giving
    4 * dim + 1 features.  Cosine of a zero-norm encoding is 0.
    """
    kl = np.atleast_2d(np.asarray(left_encoding, dtype=np.float64))
    kr = np.atleast_2d(np.asarray(right_encoding, dtype=np.float64))
    if kl.shape != kr.shape:
        raise ValueError("encodings must have matching shapes")
    h, _ = _fuse_forward(kl, kr)
    return h[0] if np.asarray(left_encoding).ndim == 1 else h


def _forward(Xl, Xr, params: PredictorParams):
    P = params.tensors
    kl, cl = _mha_pool_forward(Xl, params)
    kr, cr = _mha_pool_forward(Xr, params)
    h, cf = _fuse_forward(kl, kr)
    z1 = h @ P["W1"] + P["b1"]
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ P["W2"] + P["b2"]
    p = 1.0 / (1.0 + np.exp(-z2))
    return p, (cl, cr, cf, h, z1, a1, p)


def focal_bce(p, y, w_pos=DEFAULT_W_POS, gamma=DEFAULT_GAMMA):
    """Focal binary cross-entropy with the modulator on both terms.

    (1 - p)^gamma * (-w_pos * y * log p - (1 - y) * log(1 - p)),
    elementwise, with p clamped away from {0, 1}.  See the module
    docstring for why training does not minimize this form directly.
    """
    p = np.clip(np.asarray(p, dtype=np.float64), P_CLAMP, 1.0 - P_CLAMP)
    y = np.asarray(y, dtype=np.float64)
    ce = -w_pos * y * np.log(p) - (1.0 - y) * np.log(1.0 - p)
    out = (1.0 - p) ** gamma * ce
    return float(out) if out.ndim == 0 else out


def _training_focal(p, y, w_pos, gamma):
    """One-sided focal loss used for optimization (see module docstring)."""
    p = np.clip(p, P_CLAMP, 1.0 - P_CLAMP)
    pos = -w_pos * y * (1.0 - p) ** gamma * np.log(p)
    neg = -(1.0 - y) * p ** gamma * np.log(1.0 - p)
    return pos + neg


def _backward(cache, y, params: PredictorParams, w_pos, gamma):
    P = params.tensors
    cl, cr, cf, h, z1, a1, p = cache
    n = len(y)
    pc = np.clip(p, P_CLAMP, 1.0 - P_CLAMP)
    # d(training focal)/d(logit), positive and negative terms
    dpos = w_pos * y * (1.0 - pc) ** gamma * (
        gamma * pc * np.log(pc) - (1.0 - pc))
    dneg = (1.0 - y) * pc ** gamma * (
        pc - gamma * (1.0 - pc) * np.log(1.0 - pc))
    dz2 = (dpos + dneg) / n
    grads = {k: np.zeros_like(v) for k, v in P.items()}
    grads["W2"] += a1.T @ dz2
    grads["b2"] += dz2.sum()
    dz1 = np.outer(dz2, P["W2"]) * (z1 > 0)
    grads["W1"] += h.T @ dz1
    grads["b1"] += dz1.sum(axis=0)
    dh = dz1 @ P["W1"].T
    dkl, dkr = _fuse_backward(dh, cf)
    _mha_pool_backward(dkl, cl, params, grads)
    _mha_pool_backward(dkr, cr, params, grads)
    return grads


def _key_windows(keys, window):
    k = np.asarray(keys, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] < 2 * window + 1:
        raise ValueError(
            f"need at least {2 * window + 1} keys, got shape {k.shape}")
    return np.lib.stride_tricks.sliding_window_view(
        k, (window, k.shape[1])).squeeze(1)


def predictable_positions(length, window) -> np.ndarray:
    """Positions whose left and right windows both fit in the sequence."""
    return np.arange(window - 1, length - window)


def predict_sequence(keys, params: PredictorParams):
    """Boundary probabilities for every predictable position.

    Returns (positions, probabilities); position i scores a break
    between tokens i and i + 1.
    """
    wins = _key_windows(keys, params.window)
    pos = predictable_positions(len(keys), params.window)
    Xl = wins[pos - (params.window - 1)]
    Xr = wins[pos + 1]
    p, _ = _forward(Xl, Xr, params)
    return pos, p


def predict(position, keys, params: PredictorParams) -> float:
    """Boundary probability for one position."""
    pos = predictable_positions(len(keys), params.window)
    if position not in pos:
        raise ValueError(
            f"position {position} not predictable in a length-{len(keys)} "
            f"sequence with window {params.window}")
    wins = _key_windows(keys, params.window)
    i = int(position)
    p, _ = _forward(wins[i - (params.window - 1)][None], wins[i + 1][None],
                    params)
    return float(p[0])


def boundary_scores(keys, params: PredictorParams) -> np.ndarray:
    """Full-length score vector (zeros at unpredictable edge positions)."""
    pos, p = predict_sequence(keys, params)
    scores = np.zeros(len(keys))
    scores[pos] = p
    return scores


def top_k_overlap(pred_scores, label_scores, k_cap=TOP_K_CAP) -> float:
    """|top-K by prediction ∩ top-K by label| / K, K = min(k_cap, count)."""
    p = np.asarray(pred_scores, dtype=np.float64)
    y = np.asarray(label_scores, dtype=np.float64)
    if p.shape != y.shape or p.ndim != 1 or p.size == 0:
        raise ValueError("score vectors must be 1-D, equal length, non-empty")
    k = min(int(k_cap), p.size)
    top_p = set(np.argsort(-p, kind="stable")[:k].tolist())
    top_y = set(np.argsort(-y, kind="stable")[:k].tolist())
    return len(top_p & top_y) / k


def _corpus_arrays(corpus, params: PredictorParams):
    """Stack (keys, labels) pairs into aligned window/target arrays."""
    Xl, Xr, soft = [], [], []
    for keys, labels in corpus:
        wins = _key_windows(keys, params.window)
        pos = np.asarray(labels.positions, dtype=np.intp)
        Xl.append(wins[pos - (params.window - 1)])
        Xr.append(wins[pos + 1])
        soft.append(np.asarray(labels.soft, dtype=np.float64))
    if not Xl:
        raise ValueError("corpus is empty")
    return np.concatenate(Xl), np.concatenate(Xr), np.concatenate(soft)


def _metrics(p, soft, w_pos, gamma):
    pred_pos = p >= 0.5
    true_pos = soft >= 0.5
    tp = int(np.sum(pred_pos & true_pos))
    precision = tp / max(int(pred_pos.sum()), 1)
    recall = tp / max(int(true_pos.sum()), 1)
    f1 = 0.0 if precision + recall == 0 else \
        2 * precision * recall / (precision + recall)
    return {
        "loss": float(np.mean(_training_focal(p, soft, w_pos, gamma))),
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "top_k": top_k_overlap(p, soft),
    }


def evaluate(params: PredictorParams, corpus,
             w_pos=DEFAULT_W_POS, gamma=DEFAULT_GAMMA) -> dict:
    """Precision/recall/F1 (0.5 threshold) and top-K overlap on a corpus."""
    Xl, Xr, soft = _corpus_arrays(corpus, params)
    p, _ = _forward(Xl, Xr, params)
    return _metrics(p, soft, w_pos, gamma)


def train(corpus, params: PredictorParams, config: TrainConfig,
          eval_corpus=None):
    """Minibatch Adam training; returns (trained params, epoch history).

    ``corpus`` is a list of (keys, label set) pairs.  History entries
    carry loss/precision/recall/F1/top-K per epoch, computed on
    ``eval_corpus`` when given, else on the training corpus.
    """
    Xl, Xr, soft = _corpus_arrays(corpus, params)
    if config.targets == "binary":
        targets = (soft >= 0.5).astype(np.float64)
    elif config.targets == "soft":
        targets = soft
    else:
        raise ValueError(f"unknown target mode {config.targets!r}")
    eval_arrays = (Xl, Xr, soft) if eval_corpus is None else \
        _corpus_arrays(eval_corpus, params)

    params = params.copy()
    P = params.tensors
    m = {k: np.zeros_like(v) for k, v in P.items()}
    v = {k: np.zeros_like(v_) for k, v_ in P.items()}
    b1, b2, eps = 0.9, 0.999, 1e-8
    rng = np.random.default_rng(config.seed)
    history = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(targets))
        for s in range(0, len(order), config.batch_size):
            sel = order[s:s + config.batch_size]
            p, cache = _forward(Xl[sel], Xr[sel], params)
            grads = _backward(cache, targets[sel], params,
                              config.w_pos, config.gamma)
            step += 1
            for k in P:
                m[k] = b1 * m[k] + (1 - b1) * grads[k]
                v[k] = b2 * v[k] + (1 - b2) * grads[k] ** 2
                mh = m[k] / (1 - b1 ** step)
                vh = v[k] / (1 - b2 ** step)
                P[k] -= config.lr * mh / (np.sqrt(vh) + eps)
        p_eval, _ = _forward(eval_arrays[0], eval_arrays[1], params)
        entry = _metrics(p_eval, eval_arrays[2], config.w_pos, config.gamma)
        entry["epoch"] = epoch + 1
        if not np.isfinite(entry["loss"]):
            raise FloatingPointError(
                f"training diverged at epoch {epoch + 1}: loss is not finite")
        history.append(entry)
    return params, history


def grad_check(params: PredictorParams, batch, seed=0, num_coords=60,
               step=1e-4) -> float:
    """Analytic vs central finite-difference gradients on a small batch.

    Samples ``num_coords`` random weight coordinates and returns the
    worst relative error (absolute tolerance 1e-8 absorbs locally flat
    directions).
    """
    Xl, Xr, y = batch
    Xl = np.asarray(Xl, dtype=np.float64)
    Xr = np.asarray(Xr, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    params = params.copy()
    _, cache = _forward(Xl, Xr, params)
    grads = _backward(cache, y, params, DEFAULT_W_POS, DEFAULT_GAMMA)

    def loss_at():
        p, _ = _forward(Xl, Xr, params)
        return float(np.mean(
            _training_focal(p, y, DEFAULT_W_POS, DEFAULT_GAMMA)))

    rng = np.random.default_rng(seed)
    names = list(PARAM_ORDER)
    worst = 0.0
    for _ in range(num_coords):
        name = names[rng.integers(len(names))]
        arr = params.tensors[name]
        idx = tuple(rng.integers(s) for s in arr.shape)
        keep = arr[idx]
        arr[idx] = keep + step
        lp = loss_at()
        arr[idx] = keep - step
        lm = loss_at()
        arr[idx] = keep
        numeric = (lp - lm) / (2 * step)
        analytic = float(grads[name][idx])
        rel = abs(numeric - analytic) / max(abs(numeric), abs(analytic), 1e-8)
        worst = max(worst, rel)
    return worst


def save_predictor(path, params: PredictorParams):
    """Write parameters to a checkpoint (float32, bit-exact round-trip)."""
    meta = {"dim": params.dim, "window": params.window,
            "heads": params.heads, "hidden": params.hidden}
    save_checkpoint(path, meta,
                    {n: params.tensors[n] for n in PARAM_ORDER})


def load_predictor(path) -> PredictorParams:
    meta, tensors = load_checkpoint(path)
    return PredictorParams(int(meta["dim"]), int(meta["window"]),
                           int(meta["heads"]), int(meta["hidden"]), tensors)
