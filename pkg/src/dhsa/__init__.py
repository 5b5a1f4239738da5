"""Dynamic hierarchical sparse attention: learned chunk boundaries,
length-normalized chunk scoring, and budgeted token-level sparsity
masks for prefill and decode, with a measurement harness that scores
masks against exact dense attention on planted synthetic corpora.
"""

from .core import TokenSequence, causal_attention_probs, cosine_similarity, \
    dense_attention, softmax_row
from .chunking import check_boundaries, extend_for_decode, nms_boundaries, \
    static_boundaries
from .chunk_repr import ChunkReps, aggregate_chunk, aggregate_rows, \
    build_chunk_reps, chunk_similarity
from .masks import CostCounters, DecodeSession, SparsityMask, \
    decode_mask_row, mask_from_chunk_scores, prefill_mask, topk_row, upsample
from .labeling import LabelSet, attention_ratio, future_mass, \
    hard_boundaries, label_sequence, past_mass, soft_label
from .predictor import PredictorParams, TrainConfig, boundary_scores, \
    encode_window, evaluate, focal_bce, fuse, grad_check, init_predictor, \
    load_predictor, predict, predict_sequence, save_predictor, \
    top_k_overlap, train
from .harness import PlantedCorpus, PlantedCorpusSpec, PlantedSequence, \
    attention_mass_recall, compare, corpus_labels, gen_planted, load_corpus, \
    method_mask, output_fidelity, planted_attention, save_corpus, \
    write_report

__version__ = "0.1.0"

__all__ = [
    "TokenSequence", "softmax_row", "dense_attention",
    "causal_attention_probs", "cosine_similarity",
    "check_boundaries", "static_boundaries", "nms_boundaries",
    "extend_for_decode",
    "ChunkReps", "aggregate_chunk", "aggregate_rows", "build_chunk_reps",
    "chunk_similarity",
    "CostCounters", "SparsityMask", "upsample", "topk_row",
    "mask_from_chunk_scores", "prefill_mask", "decode_mask_row",
    "DecodeSession",
    "LabelSet", "past_mass", "future_mass", "attention_ratio", "soft_label",
    "hard_boundaries", "label_sequence",
    "PredictorParams", "TrainConfig", "init_predictor", "encode_window",
    "fuse", "predict", "predict_sequence", "boundary_scores", "focal_bce",
    "train", "evaluate", "grad_check", "top_k_overlap", "save_predictor",
    "load_predictor",
    "PlantedCorpusSpec", "PlantedCorpus", "PlantedSequence", "gen_planted",
    "planted_attention", "save_corpus", "load_corpus", "corpus_labels",
    "attention_mass_recall", "output_fidelity", "method_mask", "compare",
    "write_report",
    "__version__",
]
