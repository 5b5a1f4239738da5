"""Command-line interface.

Subcommands cover the full pipeline: ``gen`` writes a planted corpus,
``label`` derives boundary labels from attention, ``train`` fits the
boundary predictor, ``mask`` emits one sequence's sparsity mask,
``compare`` scores masking methods over a corpus, and ``gradcheck``
validates the hand-written gradients.

Every option resolves as: explicit flag > JSON config file (--config) >
built-in default.  Config files may only set keys the subcommand knows;
unknown keys are rejected.  Outputs are deterministic for a fixed seed
(timings go to stderr, never into artifacts).  Exit codes: 0 success,
1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import harness
from .labeling import label_sequence
from .masks import SparsityMask
from .predictor import TrainConfig, evaluate, grad_check, init_predictor, \
    load_predictor, save_predictor, train
from .serialization import load_tensor, mask_to_json, save_mask, write_jsonl

__all__ = ["main"]


class UsageError(Exception):
    """Bad flags, bad config keys, or missing input files (exit 2)."""


DEFAULTS = {
    "gen": {
        "num_sequences": 50, "length": 256, "dim": 32, "heads": 4,
        "num_segments": 4, "leakage": 0.05, "scale": 4.0, "noise": 0.6,
        "marker_scale": 8.0, "seed": 0,
    },
    "label": {
        "window": 4, "max_chunks": 16, "theta": 1.1, "eps": 1e-3,
        "alpha": 2.0, "zeta": 1e-6,
    },
    "train": {
        "epochs": 50, "lr": 1e-3, "batch_size": 1024, "seed": 0,
        "targets": "binary", "w_pos": 1.3, "gamma": 2.0,
        "heads": 8, "hidden": 256, "val_fraction": 0.0,
    },
    "mask": {
        "budget": 64, "method": "oracle", "chunk_size": 64, "agg": "max",
        "min_conf": 0.5, "nms_window": 8, "max_chunks": 16, "seq_index": 0,
    },
    "compare": {
        "budget": 64, "chunk_size": 64, "agg": "max", "min_conf": 0.5,
        "nms_window": 8, "max_chunks": 16, "fidelity": 1,
        "methods": "dense,static,dhsa_oracle,dhsa_predicted",
    },
    "gradcheck": {
        "seed": 0, "dim": 32, "window": 4, "heads": 8, "hidden": 256,
        "batch": 8, "num_coords": 60,
    },
}

_METHOD_ALIASES = {
    "static": "static", "oracle": "dhsa_oracle", "predicted": "dhsa_predicted",
    "dense": "dense", "dhsa_oracle": "dhsa_oracle",
    "dhsa_predicted": "dhsa_predicted",
}


def _config_help(sub):
    pairs = ", ".join(f"{k}={v}" for k, v in DEFAULTS[sub].items())
    return (f"Config keys (flag > --config JSON > default): {pairs}. "
            f"--threads affects wall time only, never outputs.")


def _add_common(parser, sub):
    parser.add_argument("--config", help="JSON file of config key/values")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker hint; wall time only, never outputs")
    for key, default in DEFAULTS[sub].items():
        flag = "--" + key.replace("_", "-")
        parser.add_argument(flag, dest=key, default=None,
                            type=type(default),
                            help=f"default: {default}")


def _resolve(sub, args):
    cfg = dict(DEFAULTS[sub])
    if args.config:
        if not os.path.exists(args.config):
            raise UsageError(f"config file not found: {args.config}")
        with open(args.config) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as e:
                raise UsageError(f"config file is not valid JSON: {e}")
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(data) - set(cfg))
        if unknown:
            raise UsageError(
                f"unknown config keys for '{sub}': {', '.join(unknown)}")
        for k, v in data.items():
            cfg[k] = type(cfg[k])(v)
    for key in DEFAULTS[sub]:
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    return cfg


def _require_file(path, what):
    if not os.path.exists(path):
        raise UsageError(f"{what} not found: {path}")
    return path


def _load_corpus(path):
    _require_file(os.path.join(path, "manifest.json"), "corpus manifest")
    return harness.load_corpus(path)


def _cmd_gen(args):
    cfg = _resolve("gen", args)
    spec = harness.PlantedCorpusSpec(**cfg)
    corpus = harness.gen_planted(spec)
    harness.save_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} sequences "
          f"(length {spec.length}, {spec.heads} heads, "
          f"{spec.effective_segments} segments) to {args.out}")
    return 0


def _label_records(corpus, cfg, attention_dir=None):
    records = []
    for i, seq in enumerate(corpus.sequences):
        layers = [(0, seq.attention)]
        if attention_dir is not None:
            layers = []
            layer = 0
            while True:
                path = os.path.join(attention_dir,
                                    f"seq{i:04d}_layer{layer}.dht")
                if not os.path.exists(path):
                    break
                layers.append((layer, load_tensor(path)))
                layer += 1
            if not layers:
                raise UsageError(
                    f"no attention files for sequence {i} in {attention_dir}")
        for layer, A in layers:
            labels = label_sequence(
                A, w=cfg["window"], max_chunks=cfg["max_chunks"],
                theta=cfg["theta"], eps=cfg["eps"], alpha=cfg["alpha"],
                zeta=cfg["zeta"])
            records.append({
                "sequence_id": i,
                "layer": layer,
                "positions": labels.positions.tolist(),
                "soft": [float(s) for s in labels.soft],
                "hard": list(labels.hard),
            })
    return records


def _cmd_label(args):
    cfg = _resolve("label", args)
    corpus = _load_corpus(args.corpus)
    records = _label_records(corpus, cfg, attention_dir=args.attention_dir)
    write_jsonl(args.out, records)
    print(f"wrote {len(records)} label records to {args.out}")
    return 0


class _LabelView:
    """Positions/soft pair reconstructed from a label record."""

    def __init__(self, record):
        self.positions = np.asarray(record["positions"], dtype=np.intp)
        self.soft = np.asarray(record["soft"], dtype=np.float64)
        self.hard = list(record["hard"])


def _training_pairs(corpus, labels_path):
    from .serialization import read_jsonl

    _require_file(labels_path, "labels file")
    by_seq = {}
    for rec in read_jsonl(labels_path):
        if rec["layer"] == 0:
            by_seq[rec["sequence_id"]] = rec
    pairs = []
    for i, seq in enumerate(corpus.sequences):
        if i not in by_seq:
            raise UsageError(f"labels file has no record for sequence {i}")
        pairs.append((seq.heads[0].keys, _LabelView(by_seq[i])))
    return pairs


def _cmd_train(args):
    cfg = _resolve("train", args)
    corpus = _load_corpus(args.corpus)
    pairs = _training_pairs(corpus, args.labels)
    n_val = int(round(cfg["val_fraction"] * len(pairs)))
    train_pairs = pairs[: len(pairs) - n_val] if n_val else pairs
    val_pairs = pairs[len(pairs) - n_val:] if n_val else None
    params = init_predictor(
        dim=corpus.spec.dim, window=DEFAULTS["label"]["window"],
        heads=cfg["heads"], hidden=cfg["hidden"], seed=cfg["seed"])
    config = TrainConfig(
        epochs=cfg["epochs"], lr=cfg["lr"], batch_size=cfg["batch_size"],
        seed=cfg["seed"], targets=cfg["targets"], w_pos=cfg["w_pos"],
        gamma=cfg["gamma"])
    params, history = train(train_pairs, params, config,
                            eval_corpus=val_pairs)
    for entry in history:
        print(f"epoch {entry['epoch']:3d}  loss {entry['loss']:.6f}  "
              f"precision {entry['precision']:.4f}  "
              f"recall {entry['recall']:.4f}  f1 {entry['f1']:.4f}  "
              f"top_k {entry['top_k']:.4f}")
    save_predictor(args.out, params)
    print(f"wrote checkpoint to {args.out}")
    return 0


def _cmd_mask(args):
    cfg = _resolve("mask", args)
    corpus = _load_corpus(args.corpus)
    if not (0 <= cfg["seq_index"] < len(corpus)):
        raise UsageError(f"seq_index {cfg['seq_index']} out of range "
                         f"(corpus has {len(corpus)} sequences)")
    method = _METHOD_ALIASES.get(cfg["method"])
    if method is None:
        raise UsageError(f"unknown method {cfg['method']!r}")
    predictor = None
    if method == "dhsa_predicted":
        if not args.model:
            raise UsageError("method 'predicted' requires --model")
        predictor = load_predictor(_require_file(args.model, "model file"))
    seq = corpus.sequences[cfg["seq_index"]]
    mask = harness.method_mask(
        seq, method, cfg["budget"], chunk_size=cfg["chunk_size"],
        predictor=predictor, agg=cfg["agg"], min_conf=cfg["min_conf"],
        nms_window=cfg["nms_window"], max_chunks=cfg["max_chunks"])
    if args.out.endswith(".json"):
        with open(args.out, "w") as fh:
            fh.write(mask_to_json(mask) + "\n")
    else:
        save_mask(args.out, mask)
    sizes = mask.row_sizes()
    print(f"wrote mask ({mask.length} rows, {int(sizes.sum())} attended "
          f"pairs, max row {int(sizes.max())}) to {args.out}")
    return 0


def _cmd_compare(args):
    cfg = _resolve("compare", args)
    corpus = _load_corpus(args.corpus)
    methods = []
    for name in cfg["methods"].split(","):
        method = _METHOD_ALIASES.get(name.strip())
        if method is None:
            raise UsageError(f"unknown method {name.strip()!r}")
        methods.append(method)
    predictor = None
    if "dhsa_predicted" in methods:
        if not args.model:
            raise UsageError("method 'dhsa_predicted' requires --model")
        predictor = load_predictor(_require_file(args.model, "model file"))
    rows, summary, timings = harness.compare(
        corpus, cfg["budget"], chunk_size=cfg["chunk_size"],
        predictor=predictor, methods=methods, agg=cfg["agg"],
        min_conf=cfg["min_conf"], nms_window=cfg["nms_window"],
        max_chunks=cfg["max_chunks"], fidelity=bool(cfg["fidelity"]))
    harness.write_report(rows, summary, args.out_dir)
    for method in methods:
        s = summary[method]
        fid = "-" if s["mean_fidelity"] is None else \
            f"{s['mean_fidelity']:.4f}"
        print(f"{method:15s} recall {s['mean_recall']:.4f}  fidelity {fid}  "
              f"score_ops {s['score_ops']}  "
              f"attended_pairs {s['attended_pairs']}")
        print(f"{method}: {timings[method]:.2f}s", file=sys.stderr)
    print(f"wrote report.csv and summary.json to {args.out_dir}")
    return 0


def _cmd_gradcheck(args):
    cfg = _resolve("gradcheck", args)
    rng = np.random.default_rng(cfg["seed"])
    params = init_predictor(dim=cfg["dim"], window=cfg["window"],
                            heads=cfg["heads"], hidden=cfg["hidden"],
                            seed=cfg["seed"])
    n, w, d = cfg["batch"], cfg["window"], cfg["dim"]
    batch = (rng.standard_normal((n, w, d)), rng.standard_normal((n, w, d)),
             rng.uniform(0.0, 1.0, n))
    err = grad_check(params, batch, seed=cfg["seed"],
                     num_coords=cfg["num_coords"])
    print(f"gradcheck max relative error: {err:.3e}")
    if err >= 1e-4:
        print("gradcheck FAILED (threshold 1e-4)", file=sys.stderr)
        return 1
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="dhsa",
        description="Dynamic hierarchical sparse attention toolkit")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("gen", help="generate a planted corpus",
                        epilog=_config_help("gen"))
    p.add_argument("--out", required=True, help="output corpus directory")
    _add_common(p, "gen")
    p.set_defaults(func=_cmd_gen)

    p = subs.add_parser("label", help="derive boundary labels from attention",
                        epilog=_config_help("label"))
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--out", required=True, help="output labels JSONL")
    p.add_argument("--attention-dir", default=None,
                   help="directory of external attention tensors "
                        "(seq####_layerN.dht); default: planted attention")
    _add_common(p, "label")
    p.set_defaults(func=_cmd_label)

    p = subs.add_parser("train", help="train the boundary predictor",
                        epilog=_config_help("train"))
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--labels", required=True, help="labels JSONL file")
    p.add_argument("--out", required=True, help="output checkpoint path")
    _add_common(p, "train")
    p.set_defaults(func=_cmd_train)

    p = subs.add_parser("mask", help="emit one sequence's sparsity mask",
                        epilog=_config_help("mask"))
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--out", required=True,
                   help="output mask path (.json for the JSON form)")
    p.add_argument("--model", default=None, help="predictor checkpoint")
    _add_common(p, "mask")
    p.set_defaults(func=_cmd_mask)

    p = subs.add_parser("compare", help="score masking methods over a corpus",
                        epilog=_config_help("compare"))
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--out-dir", required=True, help="report directory")
    p.add_argument("--model", default=None, help="predictor checkpoint")
    _add_common(p, "compare")
    p.set_defaults(func=_cmd_compare)

    p = subs.add_parser("gradcheck", help="finite-difference gradient check",
                        epilog=_config_help("gradcheck"))
    _add_common(p, "gradcheck")
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: missing file: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failure
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
