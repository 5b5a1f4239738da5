"""Length-normalized chunk representations and chunk-level similarity.

A chunk of n token vectors is represented by sum / sqrt(n), i.e. the
mean scaled by sqrt(n): averaging removes length bias from the dot
products while the sqrt(n) factor keeps longer chunks from vanishing
next to short ones.  Chunk similarity is the plain dot product between
aggregated queries and keys — no sqrt(dim) scaling and no softmax, the
scores only feed a top-k selection.

Sums accumulate sequentially in token order.  Incremental decoding
maintains the same running sum one token at a time, and identical
accumulation order is what makes a decode-step rebuild of a chunk
bit-equal to the prefill construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chunking import check_boundaries
from .core import TokenSequence

__all__ = ["ChunkReps", "aggregate_chunk", "aggregate_rows",
           "build_chunk_reps", "chunk_similarity"]


def sequential_sum(rows) -> np.ndarray:
    """Sum of row vectors accumulated one row at a time, in order."""
    rows = np.asarray(rows, dtype=np.float64)
    total = np.zeros(rows.shape[1])
    for r in rows:
        total += r
    return total


def aggregate_chunk(tokens, valid_count=None) -> np.ndarray:
    """Aggregate a (n, dim) chunk of token vectors into one vector.

    Returns sum(tokens) / sqrt(n).  ``valid_count`` gives the true token
    count when ``tokens`` carries trailing all-zero padding rows; the
    padding then contributes nothing (zero rows are exact no-ops in the
    sum and the count excludes them).
    """
    t = np.asarray(tokens, dtype=np.float64)
    if t.ndim != 2:
        raise ValueError("chunk must be a 2-D (tokens, dim) array")
    n = t.shape[0] if valid_count is None else int(valid_count)
    if n < 1:
        raise ValueError("chunk must contain at least one token")
    if n > t.shape[0]:
        raise ValueError(f"valid_count {n} exceeds {t.shape[0]} rows")
    return sequential_sum(t) / np.sqrt(n)


def aggregate_rows(matrix, bounds) -> np.ndarray:
    """Aggregate each chunk of ``matrix`` rows into one row.

    Returns a (num_chunks, dim) array whose row c is
    ``aggregate_chunk(matrix[bounds[c]:bounds[c+1]])``.
    """
    m = np.asarray(matrix, dtype=np.float64)
    bs = check_boundaries(bounds, m.shape[0])
    out = np.empty((len(bs) - 1, m.shape[1]))
    for c, (lo, hi) in enumerate(zip(bs, bs[1:])):
        out[c] = aggregate_chunk(m[lo:hi])
    return out


@dataclass(frozen=True)
class ChunkReps:
    """Aggregated chunk-level queries and keys for one sequence."""

    chunk_queries: np.ndarray
    chunk_keys: np.ndarray
    lengths: np.ndarray
    bounds: tuple

    @property
    def num_chunks(self) -> int:
        return len(self.lengths)


def build_chunk_reps(seq: TokenSequence, bounds) -> ChunkReps:
    """Aggregate a sequence's queries and keys chunk by chunk."""
    bs = check_boundaries(bounds, seq.length)
    lengths = np.diff(np.asarray(bs, dtype=np.intp))
    return ChunkReps(
        chunk_queries=aggregate_rows(seq.queries, bs),
        chunk_keys=aggregate_rows(seq.keys, bs),
        lengths=lengths,
        bounds=tuple(bs),
    )


def chunk_similarity(reps: ChunkReps) -> np.ndarray:
    """Chunk-to-chunk score matrix: aggregated queries times keys.

    Plain dot products; downstream top-k selection is scale-invariant
    per row, so no normalization is applied.
    """
    return np.einsum("id,jd->ij", reps.chunk_queries, reps.chunk_keys)
