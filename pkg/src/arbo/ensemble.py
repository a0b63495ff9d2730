"""Ensembles of compiled trees, batch scoring, and the backend benchmark.

An ensemble is an ordered list of compiled trees sharing one feature
schema, aggregated either additively (weighted sum, regression style) or
by majority vote over class labels.  Batch scoring partitions rows into
fixed-size blocks, so the output is byte-identical for any worker count.

The benchmark refuses to report timings unless every requested backend
agreed with classic per-row traversal on a verification sample and all
backends produced identical leaf choices over the full dataset.
"""

from __future__ import annotations

import json
import platform
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import batch as _batch
from .backends import Prediction, SoftSelector, SoftmaxSelector, predict_soft
from .compiler import CompiledTree, ternary_form
from .errors import BackendMismatchError, InputError, UnsupportedFormError
from .trees import ConstantLeaf, evaluate_classic

BLOCK_ROWS = 8192


@dataclass(eq=False)
class Ensemble:
    """Ordered compiled trees plus an aggregation rule.

    ``weights`` applies in sum mode only (defaults to all ones);
    ``classes`` fixes the tie-break order in vote mode (defaults to the
    labels' first appearance across the trees).
    """

    trees: tuple[CompiledTree, ...]
    aggregation: str = "sum"  # "sum" | "vote"
    weights: Optional[tuple[float, ...]] = None
    classes: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.aggregation not in ("sum", "vote"):
            raise InputError(f"unknown aggregation {self.aggregation!r}")
        schemas = {t.schema for t in self.trees}
        if len(schemas) > 1:
            raise InputError("ensemble trees must share one feature schema")
        if self.aggregation == "sum":
            if self.weights is None:
                self.weights = (1.0,) * len(self.trees)
            if len(self.weights) != len(self.trees):
                raise InputError("one weight per tree required")
            if any(t.numeric_values is None and not self._all_linear(t) for t in self.trees):
                raise UnsupportedFormError("sum aggregation needs numeric leaves")
        else:
            labels = []
            for t in self.trees:
                for leaf in t.leaves:
                    if not isinstance(leaf, ConstantLeaf) or not isinstance(leaf.value, str):
                        raise UnsupportedFormError("vote aggregation needs class-label leaves")
                    if leaf.value not in labels:
                        labels.append(leaf.value)
            if self.classes is None:
                self.classes = tuple(labels)
            missing = [l for l in labels if l not in self.classes]
            if missing:
                raise InputError(f"labels {missing} missing from declared classes")

    @staticmethod
    def _all_linear(t: CompiledTree) -> bool:
        return all(not (isinstance(l, ConstantLeaf) and isinstance(l.value, str)) for l in t.leaves)

    @property
    def schema(self):
        if not self.trees:
            raise InputError("empty ensemble has no schema")
        return self.trees[0].schema


def score_ensemble(model: Ensemble, x, backend: str = "matrix",
                   activation="binarized-relu", selector: Optional[SoftSelector] = None):
    """Aggregate one input: weighted sum of per-tree values, or plurality
    vote with first-index tie-break over the declared class order."""
    if model.aggregation == "sum":
        total = 0.0
        for w, ct in zip(model.weights, model.trees):
            total += w * _tree_value(ct, x, backend, activation, selector)
        return total
    counts = {}
    for ct in model.trees:
        label = _tree_value(ct, x, backend, activation, selector)
        counts[label] = counts.get(label, 0) + 1
    best = max(model.classes, key=lambda c: (counts.get(c, 0), -model.classes.index(c)))
    return best


def _tree_value(ct: CompiledTree, x, backend, activation, selector):
    from .backends import predict_bitwise, predict_matrix, predict_sum_product, predict_ternary
    from .compiler import sum_product_form

    if backend == "classic":
        return evaluate_classic(ct.as_tree(), x).value
    if backend == "matrix":
        return predict_matrix(ct, x, activation).value
    if backend == "bitwise":
        return predict_bitwise(ct, x).value
    if backend == "ternary":
        return predict_ternary(ternary_form(ct), x).value
    if backend == "sumproduct":
        return predict_sum_product(sum_product_form(ct.as_tree()), x).value
    if backend == "soft":
        return predict_soft(ct, x, selector or SoftmaxSelector(), activation)
    raise InputError(f"unknown backend {backend!r}")


# ---------------------------------------------------------------------------
# Batch scoring
# ---------------------------------------------------------------------------


def _validate_rows(schema, X) -> None:
    """Schema checks with row-level diagnostics for categorical columns."""
    for j, kind in enumerate(schema.kinds):
        if kind != "categorical":
            continue
        col = X[:, j]
        size = len(schema.vocabularies[j])
        bad = np.flatnonzero((col != np.floor(col)) | (col < 0) | (col >= size))
        if bad.size:
            raise InputError(
                f"row {int(bad[0])}: column {schema.names[j]!r} holds {col[bad[0]]!r}, "
                f"not a category id below {size}"
            )


def _score_block(model: Ensemble, X, backend, activation, selector, ternaries):
    rows = X.shape[0]
    if model.aggregation == "sum":
        total = np.zeros(rows, dtype=np.float64)
        for k, ct in enumerate(model.trees):
            if backend == "soft":
                vals = _batch.batch_soft(ct, X, selector or SoftmaxSelector(), activation)
            elif backend == "sumproduct":
                from .compiler import sum_product_form

                _, vals = _batch.batch_sum_product(sum_product_form(ct.as_tree()), X)
            else:
                idx = _batch.batch_leaf_indices(ct, X, backend, ternaries[k], activation)
                vals = _batch.batch_values(ct, X, idx)
            total += model.weights[k] * vals
        return total
    class_index = {c: i for i, c in enumerate(model.classes)}
    counts = np.zeros((rows, len(model.classes)), dtype=np.int64)
    for k, ct in enumerate(model.trees):
        idx = _batch.batch_leaf_indices(ct, X, backend, ternaries[k], activation)
        leaf_class = np.array([class_index[l.value] for l in ct.leaves], dtype=np.int64)
        votes = leaf_class[idx]
        counts[np.arange(rows), votes] += 1
    winners = np.argmax(counts, axis=1)  # first index wins ties, matching class order
    return np.array([model.classes[w] for w in winners], dtype=object)


def score_batch(model: Ensemble, X, backend: str = "matrix", workers: int = 1,
                activation="binarized-relu", selector: Optional[SoftSelector] = None,
                block_rows: int = BLOCK_ROWS) -> np.ndarray:
    """Score a dataset; elementwise equal to mapping score_ensemble.

    Rows are split into fixed blocks independent of the worker count, so
    outputs are identical bytes for any ``workers``.
    """
    if not model.trees:
        X = np.asarray(X, dtype=np.float64)
        if model.aggregation == "sum":
            return np.zeros(X.shape[0], dtype=np.float64)
        raise InputError("empty vote ensemble cannot score")
    X = _batch.check_matrix(model.schema, X)
    _validate_rows(model.schema, X)
    ternaries = [ternary_form(ct) if backend == "ternary" else None for ct in model.trees]
    blocks = [X[i : i + block_rows] for i in range(0, X.shape[0], block_rows)]
    if not blocks:
        return np.zeros(0, dtype=np.float64 if model.aggregation == "sum" else object)

    def work(block):
        return _score_block(model, block, backend, activation, selector, ternaries)

    if workers <= 1:
        parts = [work(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(work, blocks))
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Benchmark harness
# ---------------------------------------------------------------------------


@dataclass
class BenchEntry:
    backend: str
    median_seconds: float
    rows_per_second: float
    repetitions: int


@dataclass
class BenchReport:
    trees: int
    leaves_per_tree: int
    rows: int
    entries: list[BenchEntry] = field(default_factory=list)
    environment: dict = field(default_factory=dict)
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "trees": self.trees,
            "leaves_per_tree": self.leaves_per_tree,
            "rows": self.rows,
            "entries": [
                {
                    "backend": e.backend,
                    "median_seconds": e.median_seconds,
                    "rows_per_second": e.rows_per_second,
                    "repetitions": e.repetitions,
                }
                for e in self.entries
            ],
            "environment": self.environment,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _leaf_index_pass(model: Ensemble, X, backend, block_rows) -> np.ndarray:
    """(rows, trees) leaf choices; also the timed unit of work."""
    out = np.empty((X.shape[0], len(model.trees)), dtype=np.int64)
    ternaries = [ternary_form(ct) if backend == "ternary" else None for ct in model.trees]
    for start in range(0, X.shape[0], block_rows):
        block = X[start : start + block_rows]
        for k, ct in enumerate(model.trees):
            out[start : start + block.shape[0], k] = _batch.batch_leaf_indices(
                ct, block, backend, ternaries[k]
            )
    return out


def run_bench(model: Ensemble, X, backends=("classic", "matrix", "bitwise"),
              repetitions: int = 5, verify_rows: int = 256,
              block_rows: int = BLOCK_ROWS) -> BenchReport:
    """Median-of-N timing with a warm-up pass and mandatory verification.

    Verification has two layers: every backend's leaf choices are compared
    over the whole dataset, and a sample of rows is re-checked against
    per-row classic traversal.  Any disagreement aborts with a diff sample
    and no timings are emitted.
    """
    if repetitions < 1:
        raise InputError("repetitions must be >= 1")
    X = _batch.check_matrix(model.schema, X)

    # verification pass (doubles as warm-up)
    reference = None
    ref_name = None
    for backend in backends:
        got = _leaf_index_pass(model, X, backend, block_rows)
        if reference is None:
            reference, ref_name = got, backend
            continue
        if not np.array_equal(got, reference):
            rows, cols = np.nonzero(got != reference)
            sample = [
                {"row": int(r), "tree": int(c), ref_name: int(reference[r, c]),
                 backend: int(got[r, c])}
                for r, c in list(zip(rows, cols))[:5]
            ]
            raise BackendMismatchError(
                f"backend {backend!r} disagrees with {ref_name!r} on "
                f"{len(rows)} (row, tree) pairs; sample: {sample}"
            )
    sample_rows = min(verify_rows, X.shape[0])
    for r in range(sample_rows):
        for k, ct in enumerate(model.trees):
            want = evaluate_classic(ct.as_tree(), X[r]).leaf_index
            if want != int(reference[r, k]):
                raise BackendMismatchError(
                    f"classic per-row traversal picked leaf {want} on row {r}, "
                    f"tree {k}; batch backends picked {int(reference[r, k])}"
                )

    report = BenchReport(
        trees=len(model.trees),
        leaves_per_tree=max((ct.n_leaves for ct in model.trees), default=0),
        rows=X.shape[0],
        environment={
            "python": platform.python_version(),
            "numpy": np.__version__,
            "machine": platform.machine(),
        },
        notes=(
            "all backends iterate tree-major over fixed row blocks; "
            "verified against per-row classic traversal before timing"
        ),
    )
    for backend in backends:
        times = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            _leaf_index_pass(model, X, backend, block_rows)
            times.append(time.perf_counter() - t0)
        med = statistics.median(times)
        report.entries.append(
            BenchEntry(backend, med, X.shape[0] / med if med > 0 else float("inf"), repetitions)
        )
    return report
