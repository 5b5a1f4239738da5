"""Synthetic corpora and mask-quality measurement.

Corpus construction plants two aligned structures per sequence:

* an attention matrix with known segment boundaries — every segment
  start receives a small sink of mass from all later rows (bounded by
  the ``leakage`` budget), and each segment after the first carries an
  opening ramp: a block of rows inside the segment attends the
  segment's first tokens with a fixed tapering profile.  The
  mass-imbalance labeling recovers exactly the planted boundaries from
  this matrix, with the strongest response at position b - 1 for each
  planted boundary b;

* per-head token geometry — each segment draws its own unit direction,
  tokens are that direction at fixed scale plus Gaussian noise, and the
  key of each segment's first token additionally carries a fixed global
  marker direction (the synthetic analogue of a heading token), which
  makes boundaries recoverable from keys alone.

Mask quality is scored against real causal softmax attention computed
from the planted queries/keys: ``attention_mass_recall`` measures the
fraction of true attention probability a mask captures, and
``output_fidelity`` the cosine between masked and dense outputs.
``compare`` runs dense, fixed-grid, ground-truth-boundary, and
predicted-boundary masking over a corpus under one shared selection
path and emits per-sequence rows plus a summary.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import asdict, dataclass

import numpy as np

from .chunk_repr import build_chunk_reps, chunk_similarity
from .chunking import check_boundaries, nms_boundaries, static_boundaries
from .core import TokenSequence, causal_attention_probs, cosine_similarity, \
    dense_attention
from .labeling import label_sequence
from .masks import CostCounters, SparsityMask, mask_from_chunk_scores
from .predictor import boundary_scores, predictable_positions
from .serialization import load_tensor, save_tensor, write_csv, write_json

__all__ = [
    "PlantedCorpusSpec", "PlantedSequence", "PlantedCorpus",
    "gen_planted", "planted_attention", "save_corpus", "load_corpus",
    "attention_mass_recall", "output_fidelity",
    "aggregated_chunk_scores", "method_mask", "compare", "write_report",
    "COMPARE_METHODS",
]

MASS_WINDOW = 4                  # labeling window the ramp geometry targets
SINK_MASS = 8e-3                 # per-row mass each later segment start gets
RAMP_ROW_FRACTION = 0.18         # fraction of rows forming a segment's ramp
MIN_SEGMENT = 28                 # profile span + window + 1
MAX_SEGMENT = 100                # segment length cap
SEGMENT_FRACTION = (0.14, 0.55)  # segment length as a fraction of the rest
# opening-ramp attention profile over a segment's first tokens: a short
# head, a stronger third token, then a geometric tail
RAMP_PROFILE = 2.22e-3 * np.array(
    [4.0, 4.0, 14.0, 6.5, 6.5, 6.0, 5.5, 5.2]
    + [5.0 * 0.82 ** j for j in range(15)])

COMPARE_METHODS = ("dense", "static", "dhsa_oracle", "dhsa_predicted")


@dataclass(frozen=True)
class PlantedCorpusSpec:
    """Parameters of a planted corpus; fully determines its contents."""

    num_sequences: int = 50
    length: int = 256
    dim: int = 32
    heads: int = 4
    num_segments: int = 4
    leakage: float = 0.05
    scale: float = 4.0
    noise: float = 0.6
    marker_scale: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.num_sequences < 1 or self.dim < 1 or self.heads < 1:
            raise ValueError("num_sequences, dim, heads must be >= 1")
        if self.length < 2 * MIN_SEGMENT + 2:
            raise ValueError(
                f"length must be at least {2 * MIN_SEGMENT + 2} "
                f"to fit two segments")
        if self.num_segments < 2:
            raise ValueError("num_segments must be >= 2")
        if not (0.0 <= self.leakage < 0.5):
            raise ValueError("leakage must be in [0, 0.5)")

    @property
    def effective_segments(self) -> int:
        """Segment-count cap implied by the leakage budget.

        Every segment start past the first contributes SINK_MASS per
        row, so cross-segment mass stays within ``leakage`` only for
        1 + floor(leakage / SINK_MASS) segments.  Zero leakage plants a
        block-diagonal matrix (no sinks), which carries no labeling
        signal across segments; the cap does not apply there.
        """
        if self.leakage == 0.0:
            return self.num_segments
        return min(self.num_segments, 1 + int(self.leakage / SINK_MASS))


@dataclass(frozen=True)
class PlantedSequence:
    """One planted sequence: shared attention, per-head token tensors."""

    attention: np.ndarray
    bounds: tuple
    heads: tuple


@dataclass(frozen=True)
class PlantedCorpus:
    spec: PlantedCorpusSpec
    sequences: tuple

    def __len__(self):
        return len(self.sequences)


def _segment_bounds(length, rng, num_segments):
    """Random segment layout honoring minimum lengths and the ramp span."""
    bounds = [0]
    while (length - bounds[-1] >= 2 * MIN_SEGMENT + 2
           and len(bounds) < num_segments):
        rem = length - bounds[-1]
        seg = int(round(rng.uniform(*SEGMENT_FRACTION) * rem))
        seg = max(MIN_SEGMENT, min(seg, MAX_SEGMENT))
        if bounds[-1] > 0:
            # this segment opens with a ramp; its attending rows sit at
            # [b + 2w, b + 2w + T) and must fit inside the segment
            ramp_rows = int(np.ceil(RAMP_ROW_FRACTION * (rem - MASS_WINDOW)))
            seg = max(seg, ramp_rows + 2 * MASS_WINDOW + 1)
        if length - (bounds[-1] + seg) < MIN_SEGMENT + 2:
            break
        bounds.append(bounds[-1] + seg)
    bounds.append(length)
    return tuple(bounds)


def planted_attention(length, bounds, leakage) -> np.ndarray:
    """Deterministic planted attention matrix for a segment layout.

    Sinks: every row attends each earlier segment start (except token 0)
    with SINK_MASS when ``leakage`` > 0.  Ramps: for each segment after
    the first, rows [b + 2w, b + 2w + T) attend the segment's opening
    tokens b + 1, b + 2, ... with RAMP_PROFILE.  The remaining mass goes
    to the diagonal, keeping rows stochastic.
    """
    bs = check_boundaries(bounds, length)
    A = np.zeros((length, length))
    if leakage > 0.0:
        starts = [b for b in bs[:-1] if b > 0]
        for b in starts:
            A[b + 1:, b] = SINK_MASS
    w = MASS_WINDOW
    for si in range(1, len(bs) - 1):
        b, seg_end = bs[si], bs[si + 1]
        ramp_rows = int(np.ceil(RAMP_ROW_FRACTION * (length - b - w)))
        row_lo = b + 2 * w
        row_hi = row_lo + ramp_rows
        if row_hi > seg_end:
            raise ValueError(
                f"segment [{b}, {seg_end}) too short for its ramp "
                f"({ramp_rows} rows)")
        for u in range(row_lo, row_hi):
            span = min(len(RAMP_PROFILE), seg_end - (b + 1), u - (b + 1))
            A[u, b + 1: b + 1 + span] += RAMP_PROFILE[:span]
    off_diag = A.sum(axis=1) - np.diag(A)
    np.fill_diagonal(A, 1.0 - off_diag)
    if np.diag(A).min() <= 0.3:
        raise ValueError("planted attention left too little diagonal mass")
    return A


def _marker_direction(dim):
    return np.ones(dim) / np.sqrt(dim)


def _head_tokens(length, bounds, spec, rng) -> TokenSequence:
    """Queries/keys/values for one head over a segment layout."""
    dirs = rng.standard_normal((len(bounds) - 1, spec.dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    q = rng.standard_normal((length, spec.dim)) * spec.noise
    k = rng.standard_normal((length, spec.dim)) * spec.noise
    for seg, (lo, hi) in enumerate(zip(bounds, bounds[1:])):
        q[lo:hi] += spec.scale * dirs[seg]
        k[lo:hi] += spec.scale * dirs[seg]
    marker = spec.marker_scale * _marker_direction(spec.dim)
    for b in bounds[:-1]:
        k[b] += marker
    v = rng.standard_normal((length, spec.dim))
    return TokenSequence(queries=q, keys=k, values=v)


def gen_planted(spec: PlantedCorpusSpec) -> PlantedCorpus:
    """Generate a corpus; identical spec (incl. seed) -> identical corpus."""
    sequences = []
    n_seg = spec.effective_segments
    for i in range(spec.num_sequences):
        rng = np.random.default_rng((spec.seed, i))
        bounds = _segment_bounds(spec.length, rng, n_seg)
        A = planted_attention(spec.length, bounds, spec.leakage)
        heads = tuple(_head_tokens(spec.length, bounds, spec, rng)
                      for _ in range(spec.heads))
        sequences.append(PlantedSequence(A, bounds, heads))
    return PlantedCorpus(spec, tuple(sequences))


def save_corpus(corpus: PlantedCorpus, out_dir):
    """Write a corpus directory: manifest + per-head tensor files.

    The attention matrices are not stored; they are a deterministic
    function of (length, bounds, leakage) and are rebuilt on load.
    """
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "format": 1,
        "spec": asdict(corpus.spec),
        "bounds": [list(seq.bounds) for seq in corpus.sequences],
    }
    write_json(os.path.join(out_dir, "manifest.json"), manifest)
    for i, seq in enumerate(corpus.sequences):
        for h, head in enumerate(seq.heads):
            base = os.path.join(out_dir, f"seq{i:04d}_head{h}")
            save_tensor(base + "_q.dht", head.queries)
            save_tensor(base + "_k.dht", head.keys)
            save_tensor(base + "_v.dht", head.values)


def load_corpus(in_dir) -> PlantedCorpus:
    with open(os.path.join(in_dir, "manifest.json"), "r") as fh:
        manifest = json.load(fh)
    spec = PlantedCorpusSpec(**manifest["spec"])
    sequences = []
    for i, bounds in enumerate(manifest["bounds"]):
        bounds = tuple(int(b) for b in bounds)
        A = planted_attention(spec.length, bounds, spec.leakage)
        heads = []
        for h in range(spec.heads):
            base = os.path.join(in_dir, f"seq{i:04d}_head{h}")
            heads.append(TokenSequence(
                queries=load_tensor(base + "_q.dht"),
                keys=load_tensor(base + "_k.dht"),
                values=load_tensor(base + "_v.dht")))
        sequences.append(PlantedSequence(A, bounds, tuple(heads)))
    return PlantedCorpus(spec, tuple(sequences))


def corpus_labels(corpus: PlantedCorpus, **label_kwargs):
    """Label every sequence's planted attention matrix."""
    return [label_sequence(seq.attention, **label_kwargs)
            for seq in corpus.sequences]


def attention_mass_recall(attention_probs, mask: SparsityMask) -> float:
    """Mean fraction of each row's true attention mass the mask captures."""
    P = np.asarray(attention_probs, dtype=np.float64)
    if P.shape != (mask.length, mask.length):
        raise ValueError("probability matrix and mask sizes differ")
    fractions = np.empty(mask.length)
    for i, idx in enumerate(mask.rows):
        total = P[i, : i + 1].sum()
        fractions[i] = P[i, idx].sum() / total if total > 0 else 0.0
    return float(fractions.mean())


def output_fidelity(seq: TokenSequence, mask: SparsityMask,
                    dense_out=None) -> float:
    """Mean per-row cosine between masked and dense attention outputs."""
    if dense_out is None:
        dense_out = dense_attention(seq)
    sparse_out = dense_attention(seq, mask)
    cos = [cosine_similarity(sparse_out[i], dense_out[i])
           for i in range(seq.length)]
    return float(np.mean(cos))


def aggregated_chunk_scores(seq: PlantedSequence, bounds, agg="max",
                            counters: CostCounters | None = None) -> np.ndarray:
    """Per-head chunk similarities aggregated across heads.

    ``agg`` is "max" (default) or "mean".  Scoring cost is one chunk
    pair per head.
    """
    per_head = []
    for head in seq.heads:
        reps = build_chunk_reps(head, bounds)
        per_head.append(chunk_similarity(reps))
    if counters is not None:
        counters.add_score_ops(sum(s.size for s in per_head))
    stack = np.stack(per_head)
    if agg == "max":
        return stack.max(axis=0)
    if agg == "mean":
        return stack.mean(axis=0)
    raise ValueError(f"unknown aggregation {agg!r}")


def method_mask(seq: PlantedSequence, method, budget, chunk_size=64,
                predictor=None, agg="max", min_conf=0.5, nms_window=8,
                max_chunks=16, counters: CostCounters | None = None):
    """Build one sequence's mask for a named comparison method.

    All chunk-based methods share the same scoring and selection path;
    they differ only in where their boundaries come from.  "dense"
    returns the full causal mask.
    """
    length = seq.attention.shape[0]
    if method == "dense":
        rows = tuple(np.arange(i + 1) for i in range(length))
        mask = SparsityMask(length=length, rows=rows)
        if counters is not None:
            counters.add_score_ops(length * (length + 1) // 2)
            counters.add_attended(length * (length + 1) // 2)
        return mask
    if method == "static":
        bounds = static_boundaries(length, chunk_size)
    elif method == "dhsa_oracle":
        bounds = seq.bounds
    elif method == "dhsa_predicted":
        if predictor is None:
            raise ValueError("dhsa_predicted requires a predictor")
        keys = seq.heads[0].keys
        scores = boundary_scores(keys, predictor)
        if counters is not None:
            counters.add_score_ops(
                len(predictable_positions(length, predictor.window)))
        bounds = nms_boundaries(scores, min_conf=min_conf,
                                window=nms_window, max_chunks=max_chunks)
    else:
        raise ValueError(f"unknown method {method!r}")
    scores_c = aggregated_chunk_scores(seq, bounds, agg=agg, counters=counters)
    return mask_from_chunk_scores(scores_c, bounds, budget, counters)


def compare(corpus: PlantedCorpus, budget, chunk_size=64, predictor=None,
            methods=COMPARE_METHODS, agg="max", min_conf=0.5, nms_window=8,
            max_chunks=16, fidelity=True):
    """Measure every method over a corpus.

    Returns (rows, summary, timings): per-sequence report rows, a
    per-method aggregate, and per-method wall-clock seconds (reported
    separately because timings are not deterministic).
    """
    methods = [m for m in methods]
    for m in methods:
        if m not in COMPARE_METHODS:
            raise ValueError(f"unknown method {m!r}")
    probs = [[causal_attention_probs(h) for h in seq.heads]
             for seq in corpus.sequences]
    dense_outs = None
    if fidelity:
        dense_outs = [[dense_attention(h) for h in seq.heads]
                      for seq in corpus.sequences]
    rows = []
    summary = {}
    timings = {}
    for method in methods:
        t0 = time.monotonic()
        counters_total = CostCounters()
        recalls, fidelities = [], []
        for i, seq in enumerate(corpus.sequences):
            counters = CostCounters()
            mask = method_mask(seq, method, budget, chunk_size=chunk_size,
                               predictor=predictor, agg=agg,
                               min_conf=min_conf, nms_window=nms_window,
                               max_chunks=max_chunks, counters=counters)
            recall = float(np.mean(
                [attention_mass_recall(P, mask) for P in probs[i]]))
            if fidelity:
                fid = float(np.mean(
                    [output_fidelity(h, mask, dense_out=o)
                     for h, o in zip(seq.heads, dense_outs[i])]))
            else:
                fid = float("nan")
            rows.append({"sequence": i, "method": method, "recall": recall,
                         "fidelity": fid, "score_ops": counters.score_ops,
                         "attended_pairs": counters.attended_pairs})
            recalls.append(recall)
            fidelities.append(fid)
            counters_total.add_score_ops(counters.score_ops)
            counters_total.add_attended(counters.attended_pairs)
        summary[method] = {
            "mean_recall": float(np.mean(recalls)),
            "mean_fidelity": float(np.mean(fidelities)) if fidelity else None,
            "score_ops": counters_total.score_ops,
            "attended_pairs": counters_total.attended_pairs,
            "total_ops": counters_total.total(),
        }
        timings[method] = time.monotonic() - t0
    return rows, summary, timings


def write_report(rows, summary, out_dir):
    """Write report.csv and summary.json (deterministic; no timings)."""
    os.makedirs(out_dir, exist_ok=True)
    header = ["sequence", "method", "recall", "fidelity",
              "score_ops", "attended_pairs"]
    table = [[r[h] for h in header] for r in rows]
    write_csv(os.path.join(out_dir, "report.csv"), header, table)
    write_json(os.path.join(out_dir, "summary.json"), summary)
