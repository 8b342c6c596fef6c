"""Command-line interface.

Commands: train, train-fixed, ensemble, predict, evaluate, baseline,
gradcheck. Exit status is 0 on success, 1 on usage errors, 2 on data or
model errors. The default seed is 42, overridable by the CHARLID_SEED
environment variable and the --seed flag, and is always echoed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    DataFormatError,
    build_alphabet,
    build_label_set,
    encode,
    encode_corpus,
    load_dsl_file,
    load_texts,
    split_train_dev,
)
from .ensemble import predict_ensemble, train_ensemble, vote
from .metrics import confusion, majority_baseline, random_baseline, render_confusion, report
from .model import (
    ModelConfig,
    Prediction,
    predict_probs,
    run_gradient_check_suite,
)
from .persist import load_ensemble, load_model, save_ensemble, save_model
from .plots import plot_confusion, plot_training_curves
from .train import TrainConfig, train_fixed_epochs, train_model

DEFAULT_SEED = 42

# the tuned configuration (dialect sub-task) doubles as the global default
PRESETS: dict[str, dict] = {
    "subtask2-best": {
        "max_len": 400,
        "embed_dim": 50,
        "filter_spec": [[1, 50], [2, 50], [3, 100], [4, 100], [5, 100], [6, 100], [7, 100]],
        "fc_dim": 250,
        "dropout_embed": 0.2,
        "dropout_fc": 0.5,
        "batch_size": 16,
        "patience": 10,
    },
    # similar-languages sub-task: same network, bigger batches
    "subtask1-run1": {
        "max_len": 400,
        "embed_dim": 50,
        "filter_spec": [[1, 50], [2, 50], [3, 100], [4, 100], [5, 100], [6, 100], [7, 100]],
        "fc_dim": 250,
        "dropout_embed": 0.2,
        "dropout_fc": 0.5,
        "batch_size": 64,
        "patience": 10,
    },
    # more filter maps
    "subtask1-run2": {
        "max_len": 400,
        "embed_dim": 50,
        "filter_spec": [[1, 50], [2, 100], [3, 150], [4, 200], [5, 200], [6, 200], [7, 200]],
        "fc_dim": 250,
        "dropout_embed": 0.2,
        "dropout_fc": 0.5,
        "batch_size": 64,
        "patience": 10,
    },
    # run2 filters with a wider, more regularized fully-connected layer
    "subtask1-run3": {
        "max_len": 400,
        "embed_dim": 50,
        "filter_spec": [[1, 50], [2, 100], [3, 150], [4, 200], [5, 200], [6, 200], [7, 200]],
        "fc_dim": 500,
        "dropout_embed": 0.2,
        "dropout_fc": 0.7,
        "batch_size": 64,
        "patience": 10,
    },
}

_MODEL_FIELDS = {f.name for f in fields(ModelConfig)}
_TRAIN_FIELDS = {f.name for f in fields(TrainConfig)}


def _parse_filter_spec(value) -> tuple[tuple[int, int], ...]:
    if isinstance(value, str):
        pairs = []
        for part in value.split(","):
            w, _, n = part.partition(":")
            pairs.append((int(w), int(n)))
        return tuple(pairs)
    if isinstance(value, dict):
        return tuple((int(w), int(n)) for w, n in value.items())
    return tuple((int(w), int(n)) for w, n in value)


def _load_settings(args) -> dict:
    """Merge preset, config file, and command-line flags (later wins)."""
    settings: dict = {}
    if getattr(args, "preset", None):
        settings.update(PRESETS[args.preset])
    if getattr(args, "config", None):
        try:
            file_settings = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise DataFormatError(f"cannot read config file {args.config}: {exc}") from exc
        except ValueError as exc:
            raise DataFormatError(f"{args.config}: invalid JSON ({exc})") from exc
        unknown = set(file_settings) - _MODEL_FIELDS - _TRAIN_FIELDS
        if unknown:
            raise DataFormatError(f"{args.config}: unknown config fields {sorted(unknown)}")
        settings.update(file_settings)
    flag_map = {
        "max_len": "max_len",
        "embed_dim": "embed_dim",
        "filters": "filter_spec",
        "fc_dim": "fc_dim",
        "dropout_embed": "dropout_embed",
        "dropout_fc": "dropout_fc",
        "batch_size": "batch_size",
        "learning_rate": "learning_rate",
        "patience": "patience",
        "max_epochs": "max_epochs",
    }
    for flag, field_name in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            settings[field_name] = value
    if "filter_spec" in settings:
        settings["filter_spec"] = _parse_filter_spec(settings["filter_spec"])
    return settings


def _resolve_seed(args, settings: dict) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    if "seed" in settings:
        return int(settings["seed"])
    env = os.environ.get("CHARLID_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise DataFormatError(f"CHARLID_SEED is not an integer: {env!r}") from None
    return DEFAULT_SEED


def _model_config(settings: dict, alphabet_size: int, num_classes: int) -> ModelConfig:
    defaults = PRESETS["subtask2-best"]
    derived = {"alphabet_size": alphabet_size, "num_classes": num_classes}
    for key, expected in derived.items():
        if key in settings and int(settings[key]) != expected:
            raise DataFormatError(f"config {key}={settings[key]} does not match the data ({key}={expected})")
    return ModelConfig(
        alphabet_size=alphabet_size,
        num_classes=num_classes,
        max_len=int(settings.get("max_len", defaults["max_len"])),
        embed_dim=int(settings.get("embed_dim", defaults["embed_dim"])),
        filter_spec=_parse_filter_spec(settings.get("filter_spec", defaults["filter_spec"])),
        fc_dim=int(settings.get("fc_dim", defaults["fc_dim"])),
        dropout_embed=float(settings.get("dropout_embed", defaults["dropout_embed"])),
        dropout_fc=float(settings.get("dropout_fc", defaults["dropout_fc"])),
    )


def _train_config(settings: dict, seed: int, fixed_epochs: int | None = None) -> TrainConfig:
    return TrainConfig(
        batch_size=int(settings.get("batch_size", 16)),
        learning_rate=float(settings.get("learning_rate", 0.001)),
        beta1=float(settings.get("beta1", 0.9)),
        beta2=float(settings.get("beta2", 0.999)),
        epsilon=float(settings.get("epsilon", 1e-8)),
        patience=int(settings.get("patience", 10)),
        max_epochs=int(settings.get("max_epochs", 500)),
        seed=seed,
        fixed_epochs=fixed_epochs,
    )


def _log_streams(args):
    streams = [sys.stdout]
    if getattr(args, "log", None):
        streams.append(open(args.log, "a", encoding="utf-8"))
    return streams


def _close_extra(streams) -> None:
    for stream in streams[1:]:
        stream.close()


def cmd_train(args) -> int:
    settings = _load_settings(args)
    seed = _resolve_seed(args, settings)
    print(f"seed\t{seed}")
    examples = load_dsl_file(args.data)
    if args.dev:
        train_examples = examples
        dev_examples = load_dsl_file(args.dev)
        alphabet = build_alphabet(train_examples)
        labels = build_label_set(train_examples)
    else:
        alphabet = build_alphabet(examples)
        labels = build_label_set(examples)
        train_examples, dev_examples = split_train_dev(examples, args.dev_split, seed)
    model_config = _model_config(settings, alphabet.size, labels.size)
    train_config = _train_config(settings, seed)
    train_enc = encode_corpus(train_examples, alphabet, labels, model_config.max_len)
    dev_enc = encode_corpus(dev_examples, alphabet, labels, model_config.max_len)

    streams = _log_streams(args)
    try:
        params, history = train_model(train_enc, dev_enc, model_config, train_config, log_streams=streams)
    finally:
        _close_extra(streams)
    print(f"best_epoch\t{history.best_epoch}")
    print(f"stopped_epoch\t{history.stopped_epoch}")
    save_model(params, model_config, alphabet, labels, args.out, seed=seed)
    print(f"model\t{args.out}")
    if args.curves_out:
        plot_training_curves(history, args.curves_out)
        print(f"curves\t{args.curves_out}")
    return 0


def cmd_train_fixed(args) -> int:
    settings = _load_settings(args)
    seed = _resolve_seed(args, settings)
    print(f"seed\t{seed}")
    examples = load_dsl_file(args.data)
    alphabet = build_alphabet(examples)
    labels = build_label_set(examples)
    model_config = _model_config(settings, alphabet.size, labels.size)
    train_config = _train_config(settings, seed, fixed_epochs=args.epochs)
    train_enc = encode_corpus(examples, alphabet, labels, model_config.max_len)

    streams = _log_streams(args)
    try:
        params = train_fixed_epochs(train_enc, model_config, train_config, log_streams=streams)
    finally:
        _close_extra(streams)
    save_model(params, model_config, alphabet, labels, args.out, seed=seed)
    print(f"model\t{args.out}")
    return 0


def cmd_ensemble(args) -> int:
    settings = _load_settings(args)
    seed = _resolve_seed(args, settings)
    print(f"seed\t{seed}")
    examples = load_dsl_file(args.data)
    alphabet = build_alphabet(examples)
    labels = build_label_set(examples)
    model_config = _model_config(settings, alphabet.size, labels.size)
    train_config = _train_config(settings, seed)

    # interleaved member logs are useless, so logging stays off for jobs > 1
    streams = _log_streams(args) if args.jobs == 1 else []
    try:
        ens = train_ensemble(
            examples,
            args.k,
            model_config,
            train_config,
            base_seed=seed,
            dev_fraction=args.dev_split,
            jobs=args.jobs,
            log_streams=streams,
        )
    finally:
        if args.jobs == 1:
            _close_extra(streams)
    save_ensemble(ens, args.out)
    print(f"ensemble\t{args.out}\tmembers\t{args.k}")
    return 0


def _load_predictor(path):
    """A model file or an ensemble directory, behind one predict interface."""
    path = Path(path)
    if path.is_dir():
        ens = load_ensemble(path)
        max_len = ens.members[0][1].max_len

        def bulk(inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            stacked = np.stack([predict_probs(p, c, inputs) for p, c in ens.members])  # [M, N, K]
            mean_probs = stacked.mean(axis=0)
            picks = np.empty(len(inputs), dtype=np.int64)
            for row in range(len(inputs)):
                preds = [Prediction(probabilities=stacked[m, row], label=int(np.argmax(stacked[m, row])))
                         for m in range(len(ens.members))]
                picks[row], _ = vote(preds)
            return picks, mean_probs

        return ens.alphabet, ens.labels, max_len, bulk

    params, config, alphabet, labels = load_model(path)

    def bulk(inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        probs = predict_probs(params, config, inputs)
        return np.argmax(probs, axis=1), probs

    return alphabet, labels, config.max_len, bulk


def cmd_predict(args) -> int:
    alphabet, labels, max_len, bulk = _load_predictor(args.model)
    texts = load_texts(args.input)
    lines = []
    if texts:
        inputs = np.stack([encode(t, alphabet, max_len) for t in texts])
        picks, probs = bulk(inputs)
        for i in range(len(texts)):
            line = labels.name(int(picks[i]))
            if args.probs:
                line += "\t" + "\t".join(f"{p:.6f}" for p in probs[i])
            lines.append(line)
    Path(args.out).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    print(f"predictions\t{args.out}\t{len(lines)}")
    return 0


def cmd_evaluate(args) -> int:
    alphabet, labels, max_len, bulk = _load_predictor(args.model)
    examples = load_dsl_file(args.test)
    gold = [labels.index(ex.label) for ex in examples]
    inputs = np.stack([encode(ex.text, alphabet, max_len) for ex in examples])
    picks, _ = bulk(inputs)
    cm = confusion(gold, picks, labels.names)
    rep = report(cm, include_absent_in_macro=args.macro_include_absent)
    for line in rep.as_lines():
        print(line)
    if args.confusion_out:
        _, csv_text = render_confusion(cm, normalize=args.normalize)
        Path(args.confusion_out).write_text(csv_text, encoding="utf-8")
        print(f"confusion\t{args.confusion_out}")
    if args.figure_out:
        plot_confusion(cm, args.figure_out, normalize=args.normalize, title=Path(args.test).name)
        print(f"figure\t{args.figure_out}")
    return 0


def cmd_baseline(args) -> int:
    test_examples = load_dsl_file(args.test)
    if args.kind == "majority":
        if not args.train:
            raise DataFormatError("majority baseline needs --train")
        train_examples = load_dsl_file(args.train)
        labels = build_label_set(train_examples + test_examples)
        train_idx = [labels.index(ex.label) for ex in train_examples]
        gold = [labels.index(ex.label) for ex in test_examples]
        rep = majority_baseline(train_idx, gold, labels.names)
    else:
        seed = _resolve_seed(args, {})
        print(f"seed\t{seed}")
        pool = (load_dsl_file(args.train) if args.train else []) + test_examples
        labels = build_label_set(pool)
        gold = [labels.index(ex.label) for ex in test_examples]
        rep = random_baseline(labels.size, gold, seed, labels.names)
    for line in rep.as_lines():
        print(line)
    if args.confusion_out:
        _, csv_text = render_confusion(rep.confusion)
        Path(args.confusion_out).write_text(csv_text, encoding="utf-8")
        print(f"confusion\t{args.confusion_out}")
    return 0


def cmd_gradcheck(args) -> int:
    seed = _resolve_seed(args, {})
    print(f"seed\t{seed}")
    err = run_gradient_check_suite(seeds=(seed, seed + 1, seed + 2))
    print(f"{err:.6e}")
    return 0 if err < 1e-6 else 2


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file with ModelConfig/TrainConfig fields")
    parser.add_argument("--preset", choices=sorted(PRESETS), help="named built-in configuration")
    parser.add_argument("--max-len", type=int, dest="max_len")
    parser.add_argument("--embed-dim", type=int, dest="embed_dim")
    parser.add_argument("--filters", help="filter spec, e.g. 1:50,2:50,3:100")
    parser.add_argument("--fc-dim", type=int, dest="fc_dim")
    parser.add_argument("--dropout-embed", type=float, dest="dropout_embed")
    parser.add_argument("--dropout-fc", type=float, dest="dropout_fc")
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--learning-rate", type=float, dest="learning_rate")
    parser.add_argument("--patience", type=int)
    parser.add_argument("--max-epochs", type=int, dest="max_epochs")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--log", help="append epoch log lines to this file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="charlid",
        description="Character-level CNN toolkit for discriminating similar languages and dialects.",
    )
    parser.add_argument("--version", action="version", version=f"charlid {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model with early stopping on a dev set")
    p.add_argument("--data", required=True, help="training file (text TAB label per line)")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--dev", help="separate dev file")
    group.add_argument("--dev-split", type=float, default=0.1, dest="dev_split",
                       help="fraction of --data held out for dev (default 0.1)")
    p.add_argument("--out", required=True, help="output model file (.ccnn)")
    p.add_argument("--curves-out", dest="curves_out", help="write loss/accuracy curves to this image file")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-fixed", help="train on 100%% of the data for a fixed number of epochs")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train_fixed)

    p = sub.add_parser("ensemble", help="train k models on distinct random splits")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--dev-split", type=float, default=0.1, dest="dev_split")
    p.add_argument("--jobs", type=int, default=1, help="train members concurrently (default 1)")
    p.add_argument("--out", required=True, help="output ensemble directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("predict", help="predict labels for unlabeled texts")
    p.add_argument("--model", required=True, help="model file or ensemble directory")
    p.add_argument("--input", required=True, help="one text per line")
    p.add_argument("--out", required=True, help="one predicted label per line")
    p.add_argument("--probs", action="store_true", help="append tab-separated class probabilities")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a model on a labeled test file")
    p.add_argument("--model", required=True, help="model file or ensemble directory")
    p.add_argument("--test", required=True)
    p.add_argument("--confusion-out", dest="confusion_out", help="write the confusion matrix as CSV")
    p.add_argument("--figure-out", dest="figure_out", help="write a confusion-matrix heatmap image")
    p.add_argument("--normalize", action="store_true", help="row-normalize the confusion outputs")
    p.add_argument("--macro-include-absent", action="store_true", dest="macro_include_absent",
                   help="average gold-absent classes into macro F1")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", help="random or majority-class baseline")
    p.add_argument("--kind", choices=("majority", "random"), required=True)
    p.add_argument("--train", help="training file (required for majority)")
    p.add_argument("--test", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--confusion-out", dest="confusion_out")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check on a tiny model")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
