"""Dense attention reference path and small tensor utilities.

Everything downstream (chunk scoring, sparsity masks, the evaluation
harness) is measured against the exact attention computed here, so this
module keeps one canonical implementation of row softmax, causal dense
attention, and cosine similarity.  All arithmetic is float64; score
matrices always use ``np.einsum`` so that matrix, single-row, and
single-vector evaluations of the same scores are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "TokenSequence",
    "softmax_row",
    "dense_attention",
    "causal_attention_probs",
    "cosine_similarity",
]


def _as_float_matrix(x, name):
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


@dataclass(frozen=True)
class TokenSequence:
    """Per-token queries, keys, and values for one attention head.

    All three arrays are (length, dim) float64 and must be finite.
    """

    queries: np.ndarray
    keys: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        q = _as_float_matrix(self.queries, "queries")
        k = _as_float_matrix(self.keys, "keys")
        v = _as_float_matrix(self.values, "values")
        if not (q.shape == k.shape == v.shape):
            raise ValueError(
                f"queries/keys/values shapes differ: "
                f"{q.shape}, {k.shape}, {v.shape}")
        if q.shape[0] < 1:
            raise ValueError("sequence must contain at least one token")
        object.__setattr__(self, "queries", q)
        object.__setattr__(self, "keys", k)
        object.__setattr__(self, "values", v)

    @property
    def length(self) -> int:
        return self.queries.shape[0]

    @property
    def dim(self) -> int:
        return self.queries.shape[1]


def softmax_row(scores):
    """Numerically stable softmax of a 1-D score vector."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("softmax_row expects a non-empty 1-D array")
    if not np.all(np.isfinite(s)):
        raise ValueError("softmax_row: non-finite scores")
    e = np.exp(s - s.max())
    return e / e.sum()


def _mask_rows(mask, length):
    """Normalize a mask argument to per-row index arrays and validate it."""
    rows = mask.rows if hasattr(mask, "rows") else mask
    if len(rows) != length:
        raise ValueError(f"mask has {len(rows)} rows, sequence has {length}")
    out = []
    for i, r in enumerate(rows):
        idx = np.asarray(r, dtype=np.intp)
        if idx.size == 0:
            raise ValueError(f"mask row {i} is empty")
        if idx.min() < 0 or idx.max() > i:
            raise ValueError(f"mask row {i} is not causal")
        if i not in idx:
            raise ValueError(f"mask row {i} does not include itself")
        out.append(np.unique(idx))
    return out


def dense_attention(seq: TokenSequence, mask=None) -> np.ndarray:
    """Causal scaled-dot-product attention, optionally restricted by a mask.

    Row i attends to key positions ``mask.rows[i]`` (which must be causal
    and contain i itself), or to all of ``0..i`` when ``mask`` is None.
    Scores are q·k / sqrt(dim); each row is softmax-normalized over its
    allowed positions only.  The unmasked case runs through the identical
    per-row code path, so a full causal mask reproduces it bit for bit.
    """
    q, k, v = seq.queries, seq.keys, seq.values
    L, d = q.shape
    if mask is None:
        rows = [np.arange(i + 1) for i in range(L)]
    else:
        rows = _mask_rows(mask, L)
    inv_sqrt_d = 1.0 / np.sqrt(d)
    out = np.empty_like(v)
    for i in range(L):
        idx = rows[i]
        scores = np.einsum("jd,d->j", k[idx], q[i]) * inv_sqrt_d
        out[i] = softmax_row(scores) @ v[idx]
    return out


def causal_attention_probs(seq: TokenSequence) -> np.ndarray:
    """Full causal attention probability matrix (rows sum to 1).

    Row i holds softmax(q_i · k_j / sqrt(d)) over j <= i and zeros above
    the diagonal.  This is the ground-truth mass that sparsity masks are
    scored against.
    """
    q, k = seq.queries, seq.keys
    L, d = q.shape
    inv_sqrt_d = 1.0 / np.sqrt(d)
    A = np.zeros((L, L))
    for i in range(L):
        scores = np.einsum("jd,d->j", k[: i + 1], q[i]) * inv_sqrt_d
        A[i, : i + 1] = softmax_row(scores)
    return A


def cosine_similarity(a, b) -> float:
    """Cosine of two vectors; 0.0 when either has zero norm.

    The result is clamped to [-1, 1] to absorb rounding drift.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("cosine_similarity expects two equal-length vectors")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))
