"""Boundary labels derived from attention mass.

For each position i in an attention matrix, compare how much attention
rows far to the right of i pay to the w tokens ending at i (past mass)
versus the w tokens starting at i + 1 (future mass).  Where the two
masses are lopsided, i sits at a content break: the ratio of the larger
to the smaller mass converts into a soft boundary label, and the
top-scoring positions become hard labels.  Position i marks a break
after token i, i.e. boundary i + 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LabelSet",
    "past_mass",
    "future_mass",
    "attention_ratio",
    "soft_label",
    "hard_boundaries",
    "label_sequence",
]

RATIO_EPS = 1e-3         # additive smoothing inside the mass ratio
RATIO_THRESHOLD = 1.1    # minimum ratio for a hard-label candidate
SOFT_ALPHA = 2.0         # logistic sharpness of the soft label
SOFT_ZETA = 1e-6         # guard inside the soft label's log
LABEL_WINDOW = 4         # mass window width w


def _check_attention(A):
    a = np.asarray(A, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("attention matrix must be square")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ValueError("attention matrix must be finite and non-negative")
    return a


def _check_position(L, i, w):
    if w < 1:
        raise ValueError("window must be >= 1")
    if i < w - 1 or i > L - w - 2:
        raise ValueError(
            f"position {i} outside labelable range [{w - 1}, {L - w - 2}]")


def past_mass(A, i, w=LABEL_WINDOW) -> float:
    """Mean attention from rows past i + w to the w tokens ending at i.

    Averages A[u, v] over u in [i + w + 1, L) and v in [i - w + 1, i],
    normalized by the number of contributing rows (L - 1 - i - w).
    """
    a = _check_attention(A)
    L = a.shape[0]
    _check_position(L, i, w)
    rows = a[i + w + 1:, i - w + 1: i + 1]
    return float(rows.sum() / (L - 1 - i - w))


def future_mass(A, i, w=LABEL_WINDOW) -> float:
    """Mean attention from rows past i + w to the w tokens after i."""
    a = _check_attention(A)
    L = a.shape[0]
    _check_position(L, i, w)
    rows = a[i + w + 1:, i + 1: i + w + 1]
    return float(rows.sum() / (L - 1 - i - w))


def attention_ratio(past, future, eps=RATIO_EPS) -> float:
    """Smoothed imbalance ratio of two attention masses, always >= 1."""
    p = float(past)
    f = float(future)
    if p < 0 or f < 0 or eps <= 0:
        raise ValueError("masses must be non-negative and eps positive")
    hi, lo = (p, f) if p >= f else (f, p)
    return (hi + eps) / (lo + eps)


def soft_label(ratio, alpha=SOFT_ALPHA, zeta=SOFT_ZETA):
    """Map a mass ratio to a soft boundary probability in (0, 1).

    Logistic in log space, centered at ratio 2: soft_label(2) = 0.5 and
    a perfectly balanced ratio of 1 gives the floor value 0.2.
    """
    r = np.asarray(ratio, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("ratio must be non-negative")
    out = 1.0 / (1.0 + np.exp(-alpha * (np.log(r + zeta) - np.log(2.0))))
    return float(out) if np.isscalar(ratio) else out


def hard_boundaries(ratios, positions=None, max_chunks=16,
                    theta=RATIO_THRESHOLD):
    """Positions of the strongest mass imbalances.

    Keeps at most ``max_chunks`` - 1 positions whose ratio exceeds
    ``theta``, preferring higher ratios with ties resolved toward the
    lower position.  Returns sorted positions.
    """
    r = np.asarray(ratios, dtype=np.float64)
    if r.ndim != 1:
        raise ValueError("ratios must be 1-D")
    if max_chunks < 1:
        raise ValueError("max_chunks must be >= 1")
    pos = np.arange(r.size) if positions is None else \
        np.asarray(positions, dtype=np.intp)
    if pos.shape != r.shape:
        raise ValueError("positions and ratios must align")
    order = np.argsort(-r, kind="stable")
    keep = [int(pos[j]) for j in order[: max_chunks - 1] if r[j] > theta]
    return sorted(keep)


def _mass_profiles(A, w):
    """Past and future mass at every labelable position, vectorized.

    Returns (positions, past, future); empty arrays when the sequence is
    too short to label anything.
    """
    L = A.shape[0]
    lo, hi = w - 1, L - w - 2
    if hi < lo:
        return (np.empty(0, dtype=np.intp), np.empty(0), np.empty(0))
    pos = np.arange(lo, hi + 1)
    # suffix column sums: csuf[u0, v] = sum of A[u, v] over u >= u0
    csuf = np.zeros((L + 1, L))
    csuf[:L] = np.cumsum(A[::-1], axis=0)[::-1]
    # prefix over columns of each suffix row for O(1) window sums
    ps = np.zeros((L + 1, L + 1))
    ps[:, 1:] = np.cumsum(csuf, axis=1)
    rows = pos + w + 1
    past = ps[rows, pos + 1] - ps[rows, pos - w + 1]
    future = ps[rows, pos + w + 1] - ps[rows, pos + 1]
    norm = L - 1 - pos - w
    return pos, past / norm, future / norm


@dataclass(frozen=True)
class LabelSet:
    """Boundary labels for one sequence.

    ``positions`` are the labelable positions; ``ratios`` and ``soft``
    align with them.  ``hard`` is the sorted subset of positions chosen
    as hard boundary labels.
    """

    length: int
    window: int
    positions: np.ndarray
    ratios: np.ndarray
    soft: np.ndarray
    hard: list

    def hard_boundary_list(self):
        """Hard label positions converted to chunk boundaries (i -> i+1)."""
        return [p + 1 for p in self.hard]


def label_sequence(A, w=LABEL_WINDOW, max_chunks=16, theta=RATIO_THRESHOLD,
                   eps=RATIO_EPS, alpha=SOFT_ALPHA, zeta=SOFT_ZETA) -> LabelSet:
    """Label every position of one attention matrix.

    Positions outside [w - 1, L - w - 2] have no defined masses and are
    omitted (they carry an implicit soft label of 0).
    """
    a = _check_attention(A)
    pos, past, future = _mass_profiles(a, w)
    if pos.size == 0:
        return LabelSet(a.shape[0], w, pos, np.empty(0), np.empty(0), [])
    hi = np.maximum(past, future)
    lo = np.minimum(past, future)
    ratios = (hi + eps) / (lo + eps)
    soft = soft_label(ratios, alpha=alpha, zeta=zeta)
    hard = hard_boundaries(ratios, positions=pos, max_chunks=max_chunks,
                           theta=theta)
    return LabelSet(a.shape[0], w, pos, ratios, soft, hard)
