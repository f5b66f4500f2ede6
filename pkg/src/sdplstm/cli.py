"""``sdplstm`` command line: extract-sdp, train, predict, eval, gradcheck, synth.

Run options come from three layers, later ones winning: ``HyperConfig``
defaults, a flat ``key = value`` file given with ``--config``, then flags.
Exit status is 0 on success, 1 for usage or configuration errors, 2 for
data errors and 3 for numerical failure.
"""

import argparse
import logging
import os
import sys
from dataclasses import fields

from sdplstm._io import write_text
from sdplstm.deptree import ConllError, extract_sdp, parse_conll, read_conll, sentence_to_sample
from sdplstm.evaluation import score, write_report
from sdplstm.labels import LABELS, OTHER
from sdplstm.model import CheckpointError, HyperConfig, load_checkpoint, predict, save_checkpoint
from sdplstm.synth import write_synth
from sdplstm.training import DivergenceError, grad_check, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
PATH_KEYS = ("train", "val", "test", "pretrained", "checkpoint", "log", "output")
CHANNEL_ALIASES = {"wordnet": "hypernym"}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------- configuration

def _field_types():
    return {f.name: f.default for f in fields(HyperConfig)}


def parse_channels(value):
    chans = []
    for raw in value.split(","):
        name = raw.strip()
        name = CHANNEL_ALIASES.get(name, name)
        if name:
            chans.append(name)
    return tuple(chans)


def _coerce(key, value, default):
    try:
        if key == "channels":
            return parse_channels(value)
        if isinstance(default, tuple):
            return tuple(v.strip() for v in value.split(",") if v.strip())
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        return value
    except ValueError:
        raise UsageError(f"bad value for {key}: {value!r}") from None


def parse_config_text(text, source="<config>"):
    """Flat ``key = value`` lines; ``#`` starts a comment.  Unknown keys are errors."""
    defaults = _field_types()
    hyper, paths = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().replace("-", "_"), value.strip()
        if not sep or not key:
            raise UsageError(f"{source}:{lineno}: expected key = value")
        if key in defaults:
            hyper[key] = _coerce(key, value, defaults[key])
        elif key in PATH_KEYS:
            paths[key] = value
        else:
            raise UsageError(f"{source}:{lineno}: unknown key {key!r}")
    return hyper, paths


def resolve_config(args):
    """Merge defaults, the ``--config`` file and flags into ``(HyperConfig, paths)``."""
    hyper, paths = {}, {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as f:
                text = f.read()
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
        hyper, paths = parse_config_text(text, args.config)
    defaults = _field_types()
    for item in getattr(args, "set", None) or ():
        key, sep, value = item.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in defaults:
            raise UsageError(f"--set expects a known KEY=VALUE, got {item!r}")
        hyper[key] = _coerce(key, value.strip(), defaults[key])
    flags = {
        "seed": args.seed,
        "cell": args.cell,
        "path": args.path,
        "channels": parse_channels(args.channels) if args.channels else None,
        "dropout_embed": args.dropout_embed,
        "dropout_penultimate": args.dropout_penultimate,
        "dropout_cell": args.dropout_cell,
        "epochs": getattr(args, "epochs", None),
    }
    hyper.update({k: v for k, v in flags.items() if v is not None})
    for key in PATH_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            paths[key] = value
    try:
        return HyperConfig(**hyper), paths
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from None


def _need_readable(path, what):
    if not path:
        raise UsageError(f"missing {what} path")
    if not os.path.isfile(path):
        raise DataError(f"{what} file not found: {path}")


def _need_writable(path, what):
    directory = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(directory):
        raise UsageError(f"directory for {what} does not exist: {directory}")


def _read_corpus(path):
    try:
        return read_conll(path)
    except ConllError as exc:
        raise DataError(f"{path}: {exc}") from None


def _emit(text, output):
    if output:
        write_text(output, text)
    else:
        sys.stdout.write(text)


# ----------------------------------------------------------------- commands

def sdp_line(sent):
    """``left | right`` tokens, ``left | right`` relations, ancestor form and label, TAB-separated."""
    path = extract_sdp(sent)

    def forms(nodes):
        return " ".join(sent.tokens[n].form for n in nodes)

    tokens = f"{forms(path.left_nodes)} | {forms(path.right_nodes)}"
    rels = f"{' '.join(path.left_rels)} | {' '.join(path.right_rels)}"
    return "\t".join((tokens, rels, sent.tokens[path.ancestor].form, sent.label))


def cmd_extract_sdp(args):
    _need_readable(args.input, "input")
    if args.output:
        _need_writable(args.output, "output")
    sents = _read_corpus(args.input)
    _emit("".join(sdp_line(s) + "\n" for s in sents), args.output)
    return EXIT_OK


def cmd_train(args):
    cfg, paths = resolve_config(args)
    if not paths.get("checkpoint"):
        raise UsageError("train needs --checkpoint")
    _need_readable(paths.get("train"), "training")
    for key in ("val", "pretrained"):
        if paths.get(key):
            _need_readable(paths[key], key)
    for key in ("checkpoint", "log"):
        if paths.get(key):
            _need_writable(paths[key], key)
    train_sents = _read_corpus(paths["train"])
    val_sents = _read_corpus(paths["val"]) if paths.get("val") else None
    if not train_sents:
        raise DataError(f"{paths['train']}: no sentences")
    try:
        state = train(train_sents, cfg, val_sentences=val_sents, pretrained=paths.get("pretrained"),
                      log_path=paths.get("log"))
    except (ValueError, KeyError) as exc:
        raise DataError(str(exc)) from None
    save_checkpoint(state.params, cfg, state.vocabs, paths["checkpoint"])
    print(f"best epoch {state.best_epoch} of {state.epoch}, validation F1 {state.best_val_f1:.2f}")
    return EXIT_OK


def cmd_predict(args):
    _need_readable(args.checkpoint, "checkpoint")
    _need_readable(args.input, "input")
    if args.output:
        _need_writable(args.output, "output")
    try:
        params, cfg, vocabs = load_checkpoint(args.checkpoint)
    except CheckpointError as exc:
        raise DataError(f"{args.checkpoint}: {exc}") from None
    sents = _read_corpus(args.input)
    samples = [sentence_to_sample(s, vocabs) for s in sents]
    preds = predict(params, samples, cfg)
    _emit("".join(LABELS[p.label] + "\n" for p in preds), args.output)
    return EXIT_OK


def read_labels(path):
    """Labels from an annotated corpus (``#rel`` headers) or from one-label-per-line text."""
    with open(path, encoding="utf-8") as f:
        text = f.read()
    if text.lstrip().startswith("#"):
        try:
            return [s.label for s in parse_conll(text)]
        except ConllError as exc:
            raise DataError(f"{path}: {exc}") from None
    labels = [line.strip() for line in text.splitlines() if line.strip()]
    for i, label in enumerate(labels, start=1):
        if label not in LABELS:
            raise DataError(f"{path}: line {i}: unknown label {label!r}")
    return labels


def cmd_eval(args):
    _need_readable(args.gold, "gold")
    _need_readable(args.pred, "prediction")
    for out in (args.json, args.csv):
        if out:
            _need_writable(out, "report")
    gold, pred = read_labels(args.gold), read_labels(args.pred)
    if len(gold) != len(pred):
        raise DataError(f"{len(gold)} gold labels but {len(pred)} predictions")
    if args.all_labels:
        label_set = LABELS
    else:
        seen = set(gold) | set(pred) | {OTHER}
        label_set = tuple(label for label in LABELS if label in seen)
    report = score(gold, pred, label_set)
    print(report.table())
    if args.json:
        write_report(report, args.json, args.csv)
    elif args.csv:
        write_text(args.csv, report.confusion_csv())
    return EXIT_OK


def cmd_gradcheck(args):
    cells = (args.cell,) if args.cell else ("lstm", "rnn")
    paths = (args.path,) if args.path else ("split", "full")
    entries = grad_check(cells=cells, paths=paths, seed=args.seed if args.seed is not None else 0)
    failed = 0
    print(f"{'cell':<5} {'path':<6} {'l2':>6} {'drop':<5} {'tensor':<26} {'max':>10} {'p99':>10}")
    for e in entries:
        ok = e.passed()
        failed += not ok
        print(f"{e.cell:<5} {e.path:<6} {e.l2:>6g} {str(e.dropout):<5} {e.tensor:<26} {e.max_err:10.2e} {e.p99_err:10.2e}"
              f"{'' if ok else '  FAIL'}")
    print(f"{len(entries) - failed}/{len(entries)} tensors pass")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


def cmd_synth(args):
    if args.n_train < 1 or args.n_test < 1:
        raise UsageError("--n-train and --n-test must be >= 1")
    train_path, test_path = write_synth(args.seed if args.seed is not None else 42, args.n_train, args.n_test, args.out)
    print(f"wrote {train_path} and {test_path}")
    return EXIT_OK


# -------------------------------------------------------------------- parser

def _add_model_flags(p):
    p.add_argument("--config", help="flat key = value file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any model option")
    p.add_argument("--cell", choices=("lstm", "rnn"))
    p.add_argument("--path", choices=("split", "full"))
    p.add_argument("--channels", help="comma list from word,pos,gr,wordnet")
    p.add_argument("--dropout-embed", type=float)
    p.add_argument("--dropout-penultimate", type=float)
    p.add_argument("--dropout-cell", type=float)
    p.add_argument("--epochs", type=int)


def build_parser():
    parser = _Parser(prog="sdplstm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract-sdp", help="print the shortest dependency path of every sentence")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_extract_sdp)

    p = sub.add_parser("train", help="train a model and write its best checkpoint")
    p.add_argument("train", nargs="?", help="training corpus (.sdpc)")
    p.add_argument("--val", help="validation corpus; default splits off a tenth of the training data")
    p.add_argument("--pretrained", help="word2vec text file for the word embeddings")
    p.add_argument("--checkpoint", help="where to write the best model")
    p.add_argument("--log", help="line-delimited JSON epoch log")
    p.add_argument("--seed", type=int)
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="label every sentence of a corpus")
    p.add_argument("checkpoint")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against gold labels")
    p.add_argument("gold", help="annotated corpus or one label per line")
    p.add_argument("pred", help="one label per line (or an annotated corpus)")
    p.add_argument("--json", help="write the full report as JSON")
    p.add_argument("--csv", help="write the confusion matrix as CSV")
    p.add_argument("--all-labels", action="store_true", help="score over all 19 labels, not only those present")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    p.add_argument("--seed", type=int)
    p.add_argument("--cell", choices=("lstm", "rnn"))
    p.add_argument("--path", choices=("split", "full"))
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write a seeded synthetic corpus")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ConllError, CheckpointError, UnicodeDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (DivergenceError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
