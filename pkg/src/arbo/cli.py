"""Command line surface: compile, decode, export, validate, predict, bench,
selfcheck.

Exit codes are fixed for scripting: 0 success, 1 domain failure (invalid
structure matrix, backend disagreement, failed selfcheck), 2 usage or
input error (missing file, malformed document, bad flag).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import batch as _batch
from .backends import (
    SoftmaxSelector,
    SparsemaxSelector,
    predict_soft,
)
from .compiler import (
    CompiledTree,
    TernaryForm,
    compile_tree,
    decode_structure,
    sum_product_form,
    ternary_form,
)
from .ensemble import Ensemble, run_bench, score_batch
from .errors import DegenerateTreeError, DomainError, InputError
from .io import (
    _fmt_float,
    load_dataset_csv,
    load_model,
    read_document,
    save_model,
)
from .selfcheck import replay, run_selfcheck
from .structure import validate_structure
from .trees import ConstantLeaf, DecisionTree, evaluate_classic

HARD = ("classic", "matrix", "bitwise", "ternary", "sumproduct")
BACKENDS = HARD + ("soft",)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arbo", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="tree document -> tuple document")
    c.add_argument("--model", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--ordering", choices=("bfs", "preorder"), default="bfs")

    d = sub.add_parser("decode", help="tuple/matrix document -> shape skeleton document")
    d.add_argument("--model", required=True)
    d.add_argument("--out", required=True)

    e = sub.add_parser("export", help="tree/tuple document -> ternary document")
    e.add_argument("--model", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--to", choices=("ternary",), default="ternary")

    v = sub.add_parser("validate", help="check a mask matrix document, report as JSON")
    v.add_argument("--model", required=True)
    v.add_argument("--out", default=None)

    r = sub.add_parser("predict", help="score a CSV dataset")
    r.add_argument("--model", required=True)
    r.add_argument("--data", required=True)
    r.add_argument("--backend", choices=BACKENDS, default="matrix")
    r.add_argument("--activation", default="binarized-relu")
    r.add_argument("--temperature", type=float, default=1.0)
    r.add_argument("--selector", choices=("softmax", "weighted-sparsemax"), default="softmax")
    r.add_argument("--out", required=True)
    r.add_argument("--workers", type=int, default=1)

    b = sub.add_parser("bench", help="verified backend timing over a dataset")
    b.add_argument("--model", required=True)
    b.add_argument("--data", required=True)
    b.add_argument("--backends", default="classic,matrix,bitwise")
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--out", required=True)

    s = sub.add_parser("selfcheck", help="run the invariant suite on fuzzed trees")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--count", type=int, default=100)
    s.add_argument("--max-leaves", type=int, default=16)
    s.add_argument("--inject", choices=("corrupt-b",), default=None)
    s.add_argument("--report-dir", default=".")
    s.add_argument("--replay", default=None)
    return p


def _matrix_of(doc):
    kind = doc["kind"]
    if kind == "matrix":
        from .io import _parse_mask_rows

        return _parse_mask_rows(doc["payload"].get("masks", []))
    if kind in ("tuple", "ternary"):
        from .io import _parse_mask_rows

        return _parse_mask_rows(doc["payload"]["masks"])
    raise InputError(f"document kind {kind!r} carries no mask matrix")


def cmd_validate(args) -> int:
    report = validate_structure(_matrix_of(read_document(args.model)))
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return 0 if report.valid else 1


def cmd_compile(args) -> int:
    model = load_model(args.model)
    if not isinstance(model, DecisionTree):
        raise InputError("compile expects a tree document")
    save_model(compile_tree(model, args.ordering), args.out)
    return 0


def cmd_decode(args) -> int:
    doc = read_document(args.model)
    skeleton = decode_structure(_matrix_of(doc))
    save_model(skeleton, args.out)
    return 0


def cmd_export(args) -> int:
    model = load_model(args.model)
    if isinstance(model, DecisionTree):
        model = compile_tree(model)
    if isinstance(model, TernaryForm):
        tf = model
    elif isinstance(model, CompiledTree):
        tf = ternary_form(model)
    else:
        raise InputError("export expects a tree or tuple document")
    save_model(tf, args.out)
    return 0


def _format_value(v) -> str:
    if isinstance(v, str):
        return v
    return _fmt_float(float(v))


def _predict_single(model, X, args):
    """(leaf index or None, value) columns for a single-tree model."""
    if isinstance(model, TernaryForm):
        ct, tree = model.base, model.base.as_tree()
        tf = model
    elif isinstance(model, CompiledTree):
        ct, tree, tf = model, model.as_tree(), None
    else:
        tree = model
        try:
            ct = compile_tree(tree)
        except DegenerateTreeError:
            # single leaf: every backend degenerates to the constant predictor
            vals = [evaluate_classic(tree, x).value for x in X]
            return [0] * X.shape[0], vals
        tf = None

    backend = args.backend
    if backend == "classic":
        out = [evaluate_classic(tree, x) for x in X]
        return [o.leaf_index for o in out], [o.value for o in out]
    if backend == "sumproduct":
        spf = sum_product_form(tree)
        idx, vals = _batch.batch_sum_product(spf, X)
        return [int(i) if i >= 0 else None for i in idx], list(vals)
    if backend == "soft":
        selector = (
            SoftmaxSelector(args.temperature)
            if args.selector == "softmax"
            else SparsemaxSelector()
        )
        vals = [predict_soft(ct, x, selector, args.activation) for x in X]
        return [None] * X.shape[0], vals
    idx = _batch.batch_leaf_indices(ct, X, backend, tf, args.activation)
    vals = _batch.batch_values(ct, X, idx)
    return [int(i) for i in idx], list(vals)


def cmd_predict(args) -> int:
    model = load_model(args.model)
    if isinstance(model, np.ndarray) or (
        isinstance(model, DecisionTree) and model.is_skeleton()
    ):
        raise InputError("matrix and skeleton documents cannot predict")
    schema = model.base.schema if isinstance(model, TernaryForm) else model.schema
    X = load_dataset_csv(args.data, schema)
    if isinstance(model, Ensemble):
        selector = (
            SoftmaxSelector(args.temperature)
            if args.selector == "softmax"
            else SparsemaxSelector()
        )
        vals = score_batch(
            model, X, backend=args.backend, workers=args.workers,
            activation=args.activation, selector=selector,
        )
        leaf_col = [None] * X.shape[0]
    else:
        leaf_col, vals = _predict_single(model, X, args)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "leaf", "value"])
        for i, (leaf, val) in enumerate(zip(leaf_col, vals)):
            writer.writerow([i, "" if leaf is None else leaf, _format_value(val)])
    return 0


def cmd_bench(args) -> int:
    model = load_model(args.model)
    if isinstance(model, CompiledTree):
        model = Ensemble(trees=(model,))
    if not isinstance(model, Ensemble):
        raise InputError("bench expects an ensemble (or tuple) document")
    X = load_dataset_csv(args.data, model.schema)
    backends = tuple(b.strip() for b in args.backends.split(",") if b.strip())
    for b in backends:
        if b not in ("classic", "matrix", "bitwise", "ternary"):
            raise InputError(f"bench cannot time backend {b!r}")
    report = run_bench(model, X, backends=backends, repetitions=args.reps)
    text = report.to_json() + "\n"
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return 0


def cmd_selfcheck(args) -> int:
    if args.replay:
        result = replay(args.replay)
        if result.failure:
            print(f"replay FAILED {result.failure['property']}: {result.failure['detail']}")
            return 1
        print("replay passed: the stored case no longer fails")
        return 0
    result = run_selfcheck(
        args.seed, args.count, args.max_leaves, inject=args.inject,
        report_dir=args.report_dir,
    )
    if result.failure:
        print(
            f"FAILED case {result.failure['case_index']} "
            f"({result.failure['property']}): {result.failure['detail']}"
        )
        print(f"reproducer written to {result.failure['reproducer_path']}")
        return 1
    print(f"ok: {result.cases} cases passed")
    return 0


_COMMANDS = {
    "compile": cmd_compile,
    "decode": cmd_decode,
    "export": cmd_export,
    "validate": cmd_validate,
    "predict": cmd_predict,
    "bench": cmd_bench,
    "selfcheck": cmd_selfcheck,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
