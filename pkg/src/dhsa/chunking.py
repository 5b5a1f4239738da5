"""Chunk boundary construction: fixed-size grids, NMS over predicted
boundary scores, and boundary extension for incremental decoding.

A boundary list describes a partition of ``length`` tokens into
contiguous chunks: it starts at 0, ends at ``length``, and is strictly
increasing, so chunk c covers tokens ``[bounds[c], bounds[c+1])``.
Boundary-score position i denotes a break *after* token i, i.e. an
accepted position i contributes the boundary i + 1.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "check_boundaries",
    "static_boundaries",
    "nms_boundaries",
    "extend_for_decode",
]


def check_boundaries(bounds, length=None):
    """Validate a boundary list and return it as a list of ints.

    Requires bounds[0] == 0, strictly increasing values, and, when
    ``length`` is given, bounds[-1] == length.
    """
    out = [int(b) for b in bounds]
    if len(out) < 2:
        raise ValueError("boundary list needs at least [0, length]")
    if out[0] != 0:
        raise ValueError(f"boundary list must start at 0, got {out[0]}")
    for a, b in zip(out, out[1:]):
        if b <= a:
            raise ValueError(f"boundaries not strictly increasing: {a} >= {b}")
    if length is not None and out[-1] != length:
        raise ValueError(f"boundary list ends at {out[-1]}, expected {length}")
    return out


def static_boundaries(length, chunk_size):
    """Fixed-size chunk grid: [0, c, 2c, ..., length].

    The final chunk may be shorter than ``chunk_size`` when it does not
    divide ``length``.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    bounds = list(range(0, length, chunk_size))
    bounds.append(length)
    return bounds


def nms_boundaries(scores, min_conf=0.1, window=8, max_chunks=16):
    """Greedy 1-D non-maximum suppression over boundary scores.

    Candidates are positions scoring strictly above ``min_conf``,
    visited in descending score order (ties resolved toward the lower
    position).  An accepted position suppresses all positions within
    ``window`` of it.  Accepted position i yields boundary i + 1; at
    most ``max_chunks`` - 1 interior boundaries are kept.  A position
    whose boundary coincides with the sequence end is deduplicated
    against the final boundary and does not count toward the cap.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("scores must be a non-empty 1-D array")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores contain non-finite values")
    if max_chunks < 1:
        raise ValueError("max_chunks must be >= 1")
    length = s.size
    order = np.argsort(-s, kind="stable")
    accepted = []
    interior = []
    for pos in order:
        if s[pos] <= min_conf:
            break
        if len(interior) >= max_chunks - 1:
            break
        if any(abs(int(pos) - a) <= window for a in accepted):
            continue
        accepted.append(int(pos))
        if pos + 1 < length:
            interior.append(int(pos) + 1)
    return [0] + sorted(interior) + [length]


def extend_for_decode(bounds, total_length):
    """Extend prompt boundaries for decoding step ``total_length``.

    Tokens [prompt_length, total_length - 1) generated so far form one
    chunk and the current token is a singleton chunk, so the result
    appends total_length - 1 and total_length (the generated chunk is
    dropped when empty, i.e. at the first decoded token).
    """
    out = check_boundaries(bounds)
    if total_length <= out[-1]:
        raise ValueError(
            f"total_length {total_length} must exceed prompt length {out[-1]}")
    if total_length - 1 > out[-1]:
        out.append(total_length - 1)
    out.append(total_length)
    return out
