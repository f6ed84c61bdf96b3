"""Command-line front end: ``gdclassify {train,predict,evaluate,synth,transform}``.

Exit codes: 0 on success, 2 for usage or input problems, 3 for numerical
failures during fitting.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import dgd, evaluation, hmgd, persistence
from .distribution import GDParams
from .errors import InputError, NumericalError
from .simplex import Dataset, alpha_transform, dataset_from_table, preprocess_uci, read_csv

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _positive_float(flag):
    def parse(text):
        try:
            value = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag} expects a number, got {text!r}") from None
        if not value > 0:
            raise argparse.ArgumentTypeError(f"{flag} must be positive, got {text}")
        return value
    return parse


def _positive_int(flag):
    def parse(text):
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag} expects an integer, got {text!r}") from None
        if value < 1:
            raise argparse.ArgumentTypeError(f"{flag} must be at least 1, got {text}")
        return value
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gdclassify", description="Generalized Dirichlet classifiers for compositional data.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data_flags(sp, label_required=True):
        sp.add_argument("--data", required=True, help="CSV file, one composition per row")
        sp.add_argument("--label", required=label_required, help="label column (header name or index)")
        sp.add_argument("--scale", type=_positive_float("--scale"), default=1.0,
                        help="simplex scale A the rows are closed to (default 1)")
        sp.add_argument("--preprocess", choices=["none", "uci"], default="none",
                        help="'uci' drops binary columns, rescales and closes rows")

    def structure_flags(sp):
        sp.add_argument("--experts", type=_positive_int("--experts"), default=2,
                        help="HMGD regions K (default 2)")
        sp.add_argument("--inner", type=_positive_int("--inner"), default=1,
                        help="HMGD sub-regions per region M (default 1)")

    def fit_flags(sp):
        sp.add_argument("--tol", type=_positive_float("--tol"), default=1e-4)
        sp.add_argument("--max-iter", type=_positive_int("--max-iter"), default=None,
                        help="EM iterations for dgd/mgd, outer iterations for hmgd (default 50 / 10)")
        sp.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="fit a model and write it as JSON")
    data_flags(t)
    t.add_argument("--model", choices=evaluation.MODEL_KINDS, default="dgd")
    structure_flags(t)
    t.add_argument("--out", required=True, help="model file to write")
    fit_flags(t)

    pr = sub.add_parser("predict", help="classify rows with a saved model")
    pr.add_argument("--model", required=True, help="model file written by train")
    data_flags(pr, label_required=False)
    pr.add_argument("--out", help="CSV of predictions (default: standard output)")

    ev = sub.add_parser("evaluate", help="stratified cross-validation")
    data_flags(ev)
    ev.add_argument("--model-kind", choices=evaluation.MODEL_KINDS, default="dgd")
    ev.add_argument("--folds", type=_positive_int("--folds"), default=5)
    structure_flags(ev)
    fit_flags(ev)
    ev.add_argument("--result", help="also write the result document here")
    ev.add_argument("--alpha-baseline", type=_positive_float("--alpha-baseline"),
                    help="write the alpha-transformed data set for an external baseline")
    ev.add_argument("--alpha-out", help="where --alpha-baseline writes (default: <data>.alpha.csv)")

    sy = sub.add_parser("synth", help="draw a labelled synthetic GD data set")
    sy.add_argument("--n", type=_positive_int("--n"), default=600)
    sy.add_argument("--dim", type=_positive_int("--dim"), default=4, help="D (the rows have D+1 parts)")
    sy.add_argument("--classes", type=_positive_int("--classes"), default=3)
    sy.add_argument("--strength", type=_positive_float("--strength"), default=12.0,
                    help="large shape of the separated class GDs")
    sy.add_argument("--spec", help="JSON list of {\"a\": [...], \"b\": [...], \"prior\": p}")
    sy.add_argument("--scale", type=_positive_float("--scale"), default=1.0)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--out", required=True)

    tr = sub.add_parser("transform", help="alpha-transform or preprocess a CSV")
    data_flags(tr, label_required=False)
    tr.add_argument("--alpha", type=_positive_float("--alpha"),
                    help="write z_alpha instead of the compositions")
    tr.add_argument("--out", required=True)
    return p


# ---------------------------------------------------------------------------


def _load(args):
    table = read_csv(args.data, args.label)
    if args.preprocess == "uci":
        data = preprocess_uci(table.values, table.labels, table.feature_names, table.class_names)
        if args.scale != 1.0:
            data = Dataset(data.X * args.scale, data.labels, data.class_count, args.scale,
                           data.names, data.class_names)
    else:
        data = dataset_from_table(table, args.scale)
    return data, table


def _fmt(x) -> str:
    return repr(float(x))


def _write_rows(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    if path is None:
        sys.stdout.write(buf.getvalue())
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())


def _cmd_train(args):
    data, table = _load(args)
    if args.model == "hmgd":
        cfg = hmgd.HMGDConfig(outer_iter=args.max_iter or 10, tol=args.tol, seed=args.seed)
        model, report = hmgd.fit(data, args.experts, args.inner, cfg)
        last = report.objective[-1][1] if report.objective else float("nan")
        print(f"hmgd K={model.K} M={model.M}: {report.iterations} outer iterations, "
              f"log-likelihood {last:.6f}")
    else:
        cfg = dgd.FitConfig(tol=args.tol, max_iter=args.max_iter or 50, seed=args.seed)
        fitter = dgd.fit if args.model == "dgd" else dgd.fit_generative
        model, report = fitter(data, cfg=cfg)
        print(f"{args.model}: {report.summary()}")
    for w in report.warnings[:5]:
        print(f"warning: {w}", file=sys.stderr)
    train_acc = float(np.mean(model.predict(data.X) == data.labels))
    print(f"training accuracy {100 * train_acc:.2f}")
    persistence.save(model, args.out, table.class_names)
    return EXIT_OK


def _cmd_predict(args):
    model, names = persistence.load(args.model)
    data, table = _load(args)
    if data.dim != model.dim:
        raise InputError(f"--data rows have {data.dim + 1} parts, the model expects {model.dim + 1}"
                         " (pass --label if the file has a label column)")
    proba = model.predict_proba(data.X) if hasattr(model, "predict_proba") else model.posterior(data.X)
    pred = np.argmax(proba, axis=1)
    names = names or [str(c) for c in range(proba.shape[1])]
    shown = [names[k] for k in pred]
    header = ["prediction"] + [f"p_{n}" for n in names]
    _write_rows(args.out, header, [[s] + [_fmt(p) for p in row] for s, row in zip(shown, proba)])
    if table.labels is not None:
        truth = [table.class_names[k] for k in table.labels]
        acc = float(np.mean([s == t for s, t in zip(shown, truth)]))
        print(f"accuracy {100 * acc:.2f}", file=sys.stderr if args.out is None else sys.stdout)
    return EXIT_OK


def _cmd_evaluate(args):
    data, _ = _load(args)
    if args.model_kind == "hmgd":
        cfg = hmgd.HMGDConfig(outer_iter=args.max_iter or 10, tol=args.tol, seed=args.seed)
    else:
        cfg = dgd.FitConfig(tol=args.tol, max_iter=args.max_iter or 50, seed=args.seed)
    structure = {"K": args.experts, "M": args.inner} if args.model_kind == "hmgd" else {}
    result = evaluation.run_experiment(data, args.model_kind, structure, cfg, args.folds, args.seed)
    print(result.summary())
    if args.result:
        result.save(args.result)
    if args.alpha_baseline is not None:
        out = args.alpha_out or f"{args.data}.alpha.csv"
        Z = alpha_transform(data.X / data.scale, args.alpha_baseline)
        _write_rows(out, [f"z{j + 1}" for j in range(Z.shape[1])] + ["label"],
                    [[_fmt(z) for z in row] + [int(y)] for row, y in zip(Z, data.labels)])
    return EXIT_OK


def _cmd_synth(args):
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            specs = [evaluation.ClassSpec(GDParams(s["a"], s["b"], args.scale), float(s.get("prior", 1.0)))
                     for s in raw]
        except (KeyError, TypeError) as exc:
            raise InputError(f"--spec: malformed class entry ({exc})") from None
    else:
        specs = evaluation.separated_specs(args.classes, args.dim, args.seed, args.strength, args.scale)
    data = evaluation.synth_gd(specs, args.n, args.seed)
    header = [f"x{j}" for j in range(data.dim + 1)] + ["label"]
    _write_rows(args.out, header,
                [[_fmt(x) for x in row] + [int(y)] for row, y in zip(data.X, data.labels)])
    return EXIT_OK


def _cmd_transform(args):
    data, table = _load(args)
    if args.alpha is not None:
        values = alpha_transform(data.X / data.scale, args.alpha)
        header = [f"z{j + 1}" for j in range(values.shape[1])]
    else:
        values = data.X
        header = list(data.names) if data.names else [f"x{j}" for j in range(values.shape[1])]
    rows = [[_fmt(v) for v in row] for row in values]
    if table.labels is not None:
        header.append("label")
        rows = [r + [table.class_names[k]] for r, k in zip(rows, table.labels)]
    _write_rows(args.out, header, rows)
    return EXIT_OK


COMMANDS = {"train": _cmd_train, "predict": _cmd_predict, "evaluate": _cmd_evaluate,
            "synth": _cmd_synth, "transform": _cmd_transform}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (InputError, OSError) as exc:
        print(f"gdclassify {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"gdclassify {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def run():
    sys.exit(main())
