"""Token-level sparsity masks from chunk-level scores.

The pipeline is: chunk similarity matrix -> nearest-token upsampling ->
per-row causal top-k selection under a fixed budget.  Prefill builds
all rows at once; decoding produces the single newest row from cached
chunk representations and must match the prefill construction bit for
bit whenever both see the same chunks (see DecodeSession).

Cost accounting: ``score_ops`` counts score evaluations (chunk-pair dot
products, dense token-pair scores, predictor positions — counted where
the scores are computed), and ``attended_pairs`` counts (query, key)
pairs admitted by masks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chunk_repr import aggregate_chunk, aggregate_rows, build_chunk_reps, \
    chunk_similarity
from .chunking import check_boundaries, extend_for_decode
from .core import TokenSequence

__all__ = [
    "CostCounters",
    "SparsityMask",
    "upsample",
    "topk_row",
    "mask_from_chunk_scores",
    "prefill_mask",
    "decode_mask_row",
    "DecodeSession",
]


@dataclass
class CostCounters:
    """Tally of score evaluations and mask-admitted attention pairs."""

    score_ops: int = 0
    attended_pairs: int = 0

    def add_score_ops(self, n: int):
        self.score_ops += int(n)

    def add_attended(self, n: int):
        self.attended_pairs += int(n)

    def total(self) -> int:
        return self.score_ops + self.attended_pairs


@dataclass(frozen=True)
class SparsityMask:
    """Per-row allowed key positions for causal sparse attention."""

    length: int
    rows: tuple

    def __post_init__(self):
        if self.length < 1 or len(self.rows) != self.length:
            raise ValueError("mask must have one row per token")
        rows = []
        for i, r in enumerate(self.rows):
            idx = np.asarray(r, dtype=np.intp)
            if idx.size == 0 or idx.min() < 0 or idx.max() > i:
                raise ValueError(f"mask row {i} is empty or not causal")
            if np.any(np.diff(idx) <= 0):
                raise ValueError(f"mask row {i} is not sorted and unique")
            if i not in idx:
                raise ValueError(f"mask row {i} does not include itself")
            rows.append(idx)
        object.__setattr__(self, "rows", tuple(rows))

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.length, self.length), dtype=bool)
        for i, idx in enumerate(self.rows):
            out[i, idx] = True
        return out

    def row_sizes(self) -> np.ndarray:
        return np.array([len(r) for r in self.rows], dtype=np.intp)


def upsample(chunk_scores, bounds) -> np.ndarray:
    """Expand a chunk-level score matrix to token level.

    Token pair (i, j) receives the score of (chunk of i, chunk of j);
    rows and columns are repeated by their chunk lengths.
    """
    s = np.asarray(chunk_scores, dtype=np.float64)
    bs = check_boundaries(bounds)
    n_chunks = len(bs) - 1
    if s.shape != (n_chunks, n_chunks):
        raise ValueError(
            f"expected a {n_chunks}x{n_chunks} score matrix, got {s.shape}")
    lens = np.diff(np.asarray(bs, dtype=np.intp))
    return np.repeat(np.repeat(s, lens, axis=0), lens, axis=1)


def topk_row(scores, row, budget) -> np.ndarray:
    """Select attended positions for one causal row under a budget.

    The row's own position is always kept and consumes one budget slot;
    the remaining budget - 1 slots go to the highest-scoring positions
    among 0..row (ties resolved toward the lower index).  Returns sorted
    ascending indices; rows with fewer than ``budget`` causal positions
    keep them all.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size < row + 1:
        raise ValueError("scores must cover positions 0..row")
    causal = s[: row + 1]
    k = min(int(budget), row + 1)
    order = np.argsort(-causal, kind="stable")
    others = order[order != row][: k - 1]
    idx = np.concatenate([others, [row]])
    return np.sort(idx.astype(np.intp))


def mask_from_chunk_scores(chunk_scores, bounds, budget,
                           counters: CostCounters | None = None) -> SparsityMask:
    """Build the full prefill mask from a chunk-level score matrix.

    This is the single selection path shared by every chunking policy:
    fixed grids, predicted boundaries, and ground-truth boundaries only
    differ in the ``bounds`` they pass in.
    """
    bs = check_boundaries(bounds)
    token_scores = upsample(chunk_scores, bs)
    length = bs[-1]
    rows = tuple(topk_row(token_scores[i], i, budget) for i in range(length))
    mask = SparsityMask(length=length, rows=rows)
    if counters is not None:
        counters.add_attended(int(mask.row_sizes().sum()))
    return mask


def prefill_mask(seq: TokenSequence, bounds, budget,
                 counters: CostCounters | None = None) -> SparsityMask:
    """Chunk a sequence, score chunks, and select the full sparsity mask."""
    reps = build_chunk_reps(seq, bounds)
    scores = chunk_similarity(reps)
    if counters is not None:
        counters.add_score_ops(scores.size)
    return mask_from_chunk_scores(scores, reps.bounds, budget, counters)


def _decode_row(prompt_bounds, cached_chunk_keys, gen_sum, gen_count,
                newest_key, current_query, budget, counters):
    """Shared decode-row construction from prompt caches and running sums."""
    prompt_len = prompt_bounds[-1]
    total_length = prompt_len + gen_count + 1
    bounds_ext = extend_for_decode(prompt_bounds, total_length)
    parts = [np.asarray(cached_chunk_keys, dtype=np.float64)]
    if gen_count >= 1:
        parts.append((gen_sum / np.sqrt(gen_count))[None, :])
    parts.append(aggregate_chunk(newest_key[None, :])[None, :])
    chunk_keys = np.concatenate(parts, axis=0)
    chunk_query = aggregate_chunk(current_query[None, :])
    scores = np.einsum("id,jd->ij", chunk_query[None, :], chunk_keys)[0]
    if counters is not None:
        counters.add_score_ops(scores.size)
    lens = np.diff(np.asarray(bounds_ext, dtype=np.intp))
    token_scores = np.repeat(scores, lens)
    row = topk_row(token_scores, total_length - 1, budget)
    if counters is not None:
        counters.add_attended(len(row))
    return row


def decode_mask_row(prompt_bounds, cached_chunk_keys, generated_keys,
                    current_query, total_length, budget,
                    counters: CostCounters | None = None) -> np.ndarray:
    """Mask row for the newest token during decoding.

    ``generated_keys`` holds the keys of all tokens produced after the
    prompt, including the current one (g rows, g >= 1, so total_length =
    prompt length + g).  Completed generated tokens form one chunk and
    the current token is a singleton chunk; with zero completed tokens
    the mask row equals the corresponding prefill row over the prompt
    boundaries plus the singleton, exactly.
    """
    bs = check_boundaries(prompt_bounds)
    gen = np.asarray(generated_keys, dtype=np.float64)
    if gen.ndim != 2 or gen.shape[0] < 1:
        raise ValueError("generated_keys must hold at least the current key")
    if bs[-1] + gen.shape[0] != total_length:
        raise ValueError(
            f"prompt length {bs[-1]} + {gen.shape[0]} generated keys "
            f"!= total_length {total_length}")
    gen_count = gen.shape[0] - 1
    gen_sum = np.zeros(gen.shape[1])
    for r in gen[:gen_count]:
        gen_sum += r
    return _decode_row(bs, cached_chunk_keys, gen_sum, gen_count,
                       gen[-1], np.asarray(current_query, dtype=np.float64),
                       budget, counters)


class DecodeSession:
    """Stateful decoding: cached prompt chunks plus an O(1) running sum.

    The generated-token chunk representation is maintained incrementally
    (one vector add per step, in token order), which reproduces the
    stateless ``decode_mask_row`` — and the prefill construction over
    the extended boundaries — bit for bit.
    """

    def __init__(self, prompt_keys, prompt_bounds, budget,
                 counters: CostCounters | None = None):
        keys = np.asarray(prompt_keys, dtype=np.float64)
        self.prompt_bounds = check_boundaries(prompt_bounds, keys.shape[0])
        self.budget = int(budget)
        self.counters = counters
        self.cached_chunk_keys = aggregate_rows(keys, self.prompt_bounds)
        self._gen_sum = np.zeros(keys.shape[1])
        self._gen_count = 0

    @property
    def total_length(self) -> int:
        return self.prompt_bounds[-1] + self._gen_count

    def step(self, query, key) -> np.ndarray:
        """Admit one generated token; return its mask row."""
        q = np.asarray(query, dtype=np.float64)
        k = np.asarray(key, dtype=np.float64)
        row = _decode_row(self.prompt_bounds, self.cached_chunk_keys,
                          self._gen_sum, self._gen_count, k, q,
                          self.budget, self.counters)
        self._gen_sum += k
        self._gen_count += 1
        return row
