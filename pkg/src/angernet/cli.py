"""Command-line entry point.

Commands: train, eval, predict, stream, manifest (build | synth), and
weights (inspect). All program output is JSON lines; errors land on stderr
as a single machine-parsable line. Exit codes: 0 success, 1 usage or
configuration error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import queue
import sys
import threading
from pathlib import Path

import numpy as np

from .audio import TARGET_RATE, WindowSpec, read_wav_file, resample
from .data import (
    SyntheticSpec,
    build_manifest_from_tree,
    generate_synthetic_dataset,
    load_manifest,
    save_manifest,
)
from .errors import (
    AudioFormatError,
    ClipTooShortError,
    ConfigError,
    DataError,
    InputTooShortError,
    ManifestError,
    NumericError,
    WeightFormatError,
)
from .evaluation import delong_compare, emit_roc, roc_auc, score_dataset
from .model import load_checkpoint
from .streaming import predict_clip, stream_scores
from .train import TrainConfig, run_training
from .weights import load_store

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_DATA_ERRORS = (
    ManifestError,
    AudioFormatError,
    WeightFormatError,
    DataError,
    InputTooShortError,
    ClipTooShortError,
    FileNotFoundError,
    IsADirectoryError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; the contract wants 1
        raise _UsageError(message)


def _diagnostic(code: int, message: str) -> int:
    print(json.dumps({"error": message, "code": code}), file=sys.stderr)
    return code


def _emit(record: dict) -> None:
    print(json.dumps(record), flush=True)


def _seed_override(seed: int) -> int:
    env = os.environ.get("ANGERNET_SEED")
    if env is None:
        return seed
    try:
        return int(env)
    except ValueError as exc:
        raise ConfigError(f"ANGERNET_SEED must be an integer, got {env!r}") from exc


# -- train ---------------------------------------------------------------------


def _cmd_train(args) -> int:
    file_cfg = {}
    if args.config is not None:
        with open(args.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
    overrides = {
        "lr": args.lr,
        "batch_size": args.batch_size,
        "val_every": args.val_every,
        "max_steps": args.max_steps,
        "dropout": args.dropout,
        "transfer_store": args.transfer_store,
        "load_first_k": args.load_first_k,
        "freeze_first_k": args.freeze_first_k,
        "seed": args.seed,
        "norm_basis": args.norm_basis,
        "stop_at_val_auc": args.stop_at_val_auc,
    }
    for key, value in overrides.items():
        if value is not None:
            file_cfg[key] = value
    if args.no_augment:
        file_cfg.setdefault("augment", {})["enabled"] = False
    cfg = TrainConfig.from_dict(file_cfg)
    cfg.seed = _seed_override(cfg.seed)

    manifest = Path(args.manifest)
    entries = load_manifest(manifest)
    _emit({"event": "config", **cfg.to_dict()})
    state, _net = run_training(cfg, entries, root=manifest.parent, out_dir=args.out)
    _emit(
        {
            "event": "done",
            "steps": state.step,
            "best_val_auc": state.best_val_auc,
            "best_checkpoint": str(state.best_checkpoint) if state.best_checkpoint else None,
        }
    )
    return EXIT_OK


# -- eval ------------------------------------------------------------------------


def _scores_for(net, entries, loader_root, basis):
    from .data import ClipLoader

    loader = ClipLoader(root=loader_root, basis=basis)
    scored, failures = score_dataset(net, entries, loader=loader)
    for entry, message in failures:
        _emit({"event": "skip", "audio_path": entry.audio_path, "reason": message})
    return scored


def _cmd_eval(args) -> int:
    manifest = Path(args.manifest)
    entries = [e for e in load_manifest(manifest) if e.split == args.split]
    if not entries:
        raise DataError(f"manifest has no entries for split {args.split!r}")
    net = load_checkpoint(args.checkpoint).net
    scored = _scores_for(net, entries, manifest.parent, args.norm_basis)
    if not scored:
        raise DataError("no scoreable windows in the selected split")
    curve = roc_auc([s.p_anger for s in scored], [s.label for s in scored])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    emit_roc(curve, out_dir / "roc.csv", out_dir / "roc.json")
    _emit({"auc": curve.auc, "n_pos": curve.n_pos, "n_neg": curve.n_neg})
    if args.compare is None:
        return EXIT_OK
    net_b = load_checkpoint(args.compare).net
    scored_b = _scores_for(net_b, entries, manifest.parent, args.norm_basis)
    if len(scored_b) != len(scored) or any(
        a.source != b.source or a.label != b.label for a, b in zip(scored, scored_b)
    ):
        raise DataError("comparison models scored different window sets")
    cmp_result = delong_compare(
        [s.p_anger for s in scored],
        [s.p_anger for s in scored_b],
        [s.label for s in scored],
    )
    report = {
        "auc_a": cmp_result.auc_a,
        "auc_b": cmp_result.auc_b,
        "z": cmp_result.z,
        "p": cmp_result.p,
    }
    with open(out_dir / "comparison.json", "w") as fh:
        json.dump(report, fh)
        fh.write("\n")
    _emit(report)
    return EXIT_OK


# -- predict ---------------------------------------------------------------------


def _cmd_predict(args) -> int:
    net = load_checkpoint(args.checkpoint).net
    clip = resample(read_wav_file(args.audio), TARGET_RATE)
    rows = predict_clip(net, clip, norm=args.norm, basis=args.norm_basis)
    if not rows:
        raise DataError("no scoreable windows")
    for start_s, p_anger in rows:
        _emit({"start_s": start_s, "p_anger": p_anger})
    _emit({"max_p_anger": max(p for _s, p in rows)})
    return EXIT_OK


# -- stream ----------------------------------------------------------------------


def _cmd_stream(args) -> int:
    net = load_checkpoint(args.checkpoint).net
    handoff: queue.Queue = queue.Queue(maxsize=16)

    def reader():
        while True:
            chunk = sys.stdin.buffer.read(args.chunk_bytes)
            if not chunk:
                handoff.put(None)
                return
            handoff.put(chunk)

    threading.Thread(target=reader, daemon=True).start()

    def chunks():
        while True:
            chunk = handoff.get()
            if chunk is None:
                return
            yield chunk

    for score in stream_scores(chunks(), net, basis=args.norm_basis):
        _emit({"t_end_s": score.t_end_s, "p_anger": score.p_anger})
    return EXIT_OK


# -- manifest ----------------------------------------------------------------------


def _cmd_manifest_build(args) -> int:
    entries = build_manifest_from_tree(args.root, dataset_name=args.dataset_name,
                                       split=args.split)
    save_manifest(entries, args.out)
    _emit({"event": "done", "entries": len(entries), "manifest": str(args.out)})
    return EXIT_OK


def _cmd_manifest_synth(args) -> int:
    spec = SyntheticSpec(
        train_positive=args.train_pos,
        train_negative=args.train_neg,
        val_positive=args.val_pos,
        val_negative=args.val_neg,
        test_positive=args.test_pos,
        test_negative=args.test_neg,
    )
    seed = _seed_override(args.seed)
    entries, manifest_path = generate_synthetic_dataset(
        spec, args.out, np.random.default_rng(seed)
    )
    _emit({"event": "done", "entries": len(entries), "manifest": str(manifest_path)})
    return EXIT_OK


# -- weights -----------------------------------------------------------------------


_PARAM_SUFFIXES = (".conv.weight", ".conv.bias", ".bn.gamma", ".bn.beta")


def _cmd_weights_inspect(args) -> int:
    store, trailer = load_store(args.file)
    total = 0
    for name, values in store.items():
        _emit({"name": name, "shape": list(values.shape)})
        if name.startswith("layer") and name.endswith(_PARAM_SUFFIXES):
            total += values.size
    _emit({"parameter_total": int(total), "tensors": len(store),
           "checkpoint": trailer is not None})
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="angernet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a manifest")
    p_train.add_argument("--config", help="JSON config file mirroring the training options")
    p_train.add_argument("--manifest", required=True)
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--batch-size", type=int, dest="batch_size")
    p_train.add_argument("--val-every", type=int, dest="val_every")
    p_train.add_argument("--max-steps", type=int, dest="max_steps")
    p_train.add_argument("--dropout", type=float)
    p_train.add_argument("--transfer-store", dest="transfer_store")
    p_train.add_argument("--load-first-k", type=int, dest="load_first_k")
    p_train.add_argument("--freeze-first-k", type=int, dest="freeze_first_k")
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--stop-at-val-auc", type=float, dest="stop_at_val_auc")
    p_train.add_argument("--no-augment", action="store_true")
    p_train.add_argument("--norm", dest="norm_basis", choices=["rms", "peak"], default=None)
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="score a manifest split and report AU-ROC")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--split", default="test", choices=["train", "val", "test"])
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--compare", help="second checkpoint for a DeLong comparison")
    p_eval.add_argument("--norm", dest="norm_basis", choices=["rms", "peak"], default="rms")
    p_eval.set_defaults(func=_cmd_eval)

    p_predict = sub.add_parser("predict", help="per-window probabilities for one WAV file")
    p_predict.add_argument("--checkpoint", required=True)
    p_predict.add_argument("audio")
    p_predict.add_argument("--norm", choices=["per-utterance", "per-window"],
                           default="per-utterance")
    p_predict.add_argument("--norm-basis", dest="norm_basis", choices=["rms", "peak"],
                           default="rms")
    p_predict.set_defaults(func=_cmd_predict)

    p_stream = sub.add_parser(
        "stream", help="score raw mono PCM16-LE 16 kHz audio from standard input"
    )
    p_stream.add_argument("--checkpoint", required=True)
    p_stream.add_argument("--chunk-bytes", type=int, default=4096, dest="chunk_bytes")
    p_stream.add_argument("--norm-basis", dest="norm_basis", choices=["rms", "peak"],
                          default="rms")
    p_stream.set_defaults(func=_cmd_stream)

    p_manifest = sub.add_parser("manifest", help="build or synthesize dataset manifests")
    manifest_sub = p_manifest.add_subparsers(dest="manifest_command", required=True)
    p_build = manifest_sub.add_parser("build", help="scan a <root>/<tag>/*.wav tree")
    p_build.add_argument("--root", required=True)
    p_build.add_argument("--out", required=True)
    p_build.add_argument("--dataset-name", dest="dataset_name")
    p_build.add_argument("--split", default="train", choices=["train", "val", "test"])
    p_build.set_defaults(func=_cmd_manifest_build)
    p_synth = manifest_sub.add_parser("synth", help="generate the synthetic corpus")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--train-pos", type=int, default=50, dest="train_pos")
    p_synth.add_argument("--train-neg", type=int, default=50, dest="train_neg")
    p_synth.add_argument("--val-pos", type=int, default=20, dest="val_pos")
    p_synth.add_argument("--val-neg", type=int, default=20, dest="val_neg")
    p_synth.add_argument("--test-pos", type=int, default=0, dest="test_pos")
    p_synth.add_argument("--test-neg", type=int, default=0, dest="test_neg")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=_cmd_manifest_synth)

    p_weights = sub.add_parser("weights", help="inspect weight/checkpoint files")
    weights_sub = p_weights.add_subparsers(dest="weights_command", required=True)
    p_inspect = weights_sub.add_parser("inspect", help="list tensors and parameter total")
    p_inspect.add_argument("file")
    p_inspect.set_defaults(func=_cmd_weights_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        return _diagnostic(EXIT_USAGE, str(exc))
    except ConfigError as exc:
        return _diagnostic(EXIT_USAGE, str(exc))
    except _DATA_ERRORS as exc:
        return _diagnostic(EXIT_DATA, str(exc))
    except NumericError as exc:
        return _diagnostic(EXIT_NUMERIC, str(exc))


if __name__ == "__main__":
    sys.exit(main())
