"""Model documents and dataset ingestion.

One self-describing JSON container holds every payload kind: node-based
trees, compiled tuples, ternary forms, ensembles, bare mask matrices,
and shape-only skeletons.  Serialization is canonical: keys sorted,
floats printed with 17 significant digits, two-space indent.  Saving the
same model twice yields identical bytes, and save/load round-trips are
exact (floats included).

Mask matrices are stored as one '0'/'1' string per row, which keeps the
files compact and diffs readable.  Datasets are CSV with a header row
matching the feature schema.
"""

from __future__ import annotations

import csv
import io as _stdio
import json
import math
import os

import numpy as np

from .compiler import CompiledTree, TernaryForm, ternary_form
from .ensemble import Ensemble
from .errors import (
    DatasetError,
    InputError,
    InvalidStructureError,
    MalformedDocumentError,
    UnknownVersionError,
)
from .structure import validate_structure
from .trees import (
    CATEGORICAL,
    NUMERIC,
    AxisTest,
    CategoricalTest,
    ComposedTest,
    ConstantLeaf,
    DecisionTree,
    FeatureSchema,
    LinearLeaf,
    Node,
    ObliqueTest,
)

FORMAT_VERSION = "1"
SUFFIX = ".arbo.json"


# ---------------------------------------------------------------------------
# Canonical JSON
# ---------------------------------------------------------------------------


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise InputError("documents cannot hold non-finite floats")
    s = format(float(x), ".17g")
    if not any(c in s for c in ".eE"):
        s += ".0"
    return s


def canonical_json(obj) -> str:
    """Deterministic JSON: sorted keys, fixed float formatting."""
    out = _stdio.StringIO()

    def emit(o, indent):
        pad = "  " * indent
        if o is None:
            out.write("null")
        elif isinstance(o, bool):
            out.write("true" if o else "false")
        elif isinstance(o, (int, np.integer)):
            out.write(str(int(o)))
        elif isinstance(o, (float, np.floating)):
            out.write(_fmt_float(float(o)))
        elif isinstance(o, str):
            out.write(json.dumps(o))
        elif isinstance(o, (list, tuple)):
            if not o:
                out.write("[]")
                return
            out.write("[\n")
            for i, item in enumerate(o):
                out.write(pad + "  ")
                emit(item, indent + 1)
                out.write(",\n" if i + 1 < len(o) else "\n")
            out.write(pad + "]")
        elif isinstance(o, dict):
            if not o:
                out.write("{}")
                return
            out.write("{\n")
            keys = sorted(o)
            for i, k in enumerate(keys):
                if not isinstance(k, str):
                    raise InputError("document keys must be strings")
                out.write(pad + "  " + json.dumps(k) + ": ")
                emit(o[k], indent + 1)
                out.write(",\n" if i + 1 < len(keys) else "\n")
            out.write(pad + "}")
        else:
            raise InputError(f"cannot serialize {type(o).__name__}")

    emit(obj, 0)
    out.write("\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# Schema / test / leaf encoding
# ---------------------------------------------------------------------------


def _encode_schema(schema: FeatureSchema) -> dict:
    features = []
    for i, (name, kind) in enumerate(zip(schema.names, schema.kinds)):
        f = {"name": name, "kind": kind}
        if kind == CATEGORICAL:
            f["vocabulary"] = list(schema.vocabularies[i])
        features.append(f)
    return {"features": features}


def _decode_schema(obj) -> FeatureSchema:
    try:
        features = obj["features"]
        names = tuple(f["name"] for f in features)
        kinds = tuple(f["kind"] for f in features)
        vocab = {
            i: tuple(f["vocabulary"]) for i, f in enumerate(features) if f["kind"] == CATEGORICAL
        }
    except (KeyError, TypeError) as exc:
        raise MalformedDocumentError(f"bad schema section: {exc}") from exc
    return FeatureSchema(names, kinds, vocab)


def _encode_test(test, schema: FeatureSchema) -> dict:
    if isinstance(test, AxisTest):
        return {"type": "axis", "feature": test.feature, "threshold": test.threshold}
    if isinstance(test, CategoricalTest):
        vocab = schema.vocabularies[test.feature]
        return {
            "type": "categorical",
            "feature": test.feature,
            "accepted": sorted(vocab[c] for c in test.accepted),
        }
    if isinstance(test, ObliqueTest):
        return {"type": "oblique", "weights": list(test.weights), "offset": test.offset}
    if isinstance(test, ComposedTest):
        return {
            "type": "composed",
            "threshold": test.threshold,
            "model": _encode_tuple(test.inner),
        }
    raise InputError(f"cannot encode test {type(test).__name__}")


def _decode_test(obj, schema: FeatureSchema):
    kind = obj.get("type")
    if kind == "axis":
        return AxisTest(int(obj["feature"]), float(obj["threshold"]))
    if kind == "categorical":
        j = int(obj["feature"])
        vocab = schema.vocabularies.get(j)
        if vocab is None:
            raise MalformedDocumentError(f"feature {j} is not categorical in the schema")
        try:
            accepted = frozenset(vocab.index(label) for label in obj["accepted"])
        except ValueError as exc:
            raise MalformedDocumentError(f"unknown category in test: {exc}") from exc
        return CategoricalTest(j, accepted)
    if kind == "oblique":
        return ObliqueTest(tuple(float(w) for w in obj["weights"]), float(obj["offset"]))
    if kind == "composed":
        return ComposedTest(_decode_tuple(obj["model"], schema), float(obj["threshold"]))
    raise MalformedDocumentError(f"unknown test type {kind!r}")


def _encode_leaf(leaf) -> dict:
    if isinstance(leaf, ConstantLeaf):
        return {"type": "constant", "value": leaf.value}
    if isinstance(leaf, LinearLeaf):
        return {"type": "linear", "weights": list(leaf.weights), "offset": leaf.offset}
    raise InputError(f"cannot encode leaf {type(leaf).__name__}")


def _decode_leaf(obj):
    kind = obj.get("type")
    if kind == "constant":
        v = obj["value"]
        return ConstantLeaf(v if isinstance(v, str) else float(v))
    if kind == "linear":
        return LinearLeaf(tuple(float(w) for w in obj["weights"]), float(obj["offset"]))
    raise MalformedDocumentError(f"unknown leaf type {kind!r}")


# ---------------------------------------------------------------------------
# Payload encoders
# ---------------------------------------------------------------------------


def _encode_tree(tree: DecisionTree) -> dict:
    nodes = []
    for node in tree.nodes:
        if node.kind == "leaf":
            nodes.append({"kind": "leaf", "leaf": _encode_leaf(node.leaf) if node.leaf else None})
        else:
            nodes.append(
                {
                    "kind": "internal",
                    "test": _encode_test(node.test, tree.schema) if node.test else None,
                    "left": node.left,
                    "right": node.right,
                }
            )
    return {"root": tree.root, "nodes": nodes}


def _decode_tree(obj, schema: FeatureSchema, allow_skeleton=False) -> DecisionTree:
    try:
        nodes = []
        for n in obj["nodes"]:
            if n["kind"] == "leaf":
                leaf = _decode_leaf(n["leaf"]) if n.get("leaf") is not None else None
                if leaf is None and not allow_skeleton:
                    raise MalformedDocumentError("tree document has a leaf without a model")
                nodes.append(Node(kind="leaf", leaf=leaf))
            else:
                test = _decode_test(n["test"], schema) if n.get("test") is not None else None
                if test is None and not allow_skeleton:
                    raise MalformedDocumentError("tree document has a node without a test")
                nodes.append(Node(kind="internal", test=test, left=int(n["left"]),
                                  right=int(n["right"])))
        return DecisionTree(nodes, int(obj["root"]), schema)
    except (KeyError, TypeError) as exc:
        raise MalformedDocumentError(f"bad tree payload: {exc}") from exc


def _mask_rows(masks: np.ndarray) -> list[str]:
    return ["".join("1" if v else "0" for v in row) for row in masks]


def _parse_mask_rows(rows) -> np.ndarray:
    try:
        out = np.array([[int(c) for c in row] for row in rows], dtype=np.uint8)
    except (TypeError, ValueError) as exc:
        raise MalformedDocumentError(f"bad mask rows: {exc}") from exc
    if out.ndim != 2 or not np.isin(out, (0, 1)).all():
        raise MalformedDocumentError("mask rows must be equal-length strings of 0/1")
    return out


def _encode_tuple(ct: CompiledTree) -> dict:
    return {
        "ordering": ct.ordering,
        "selection": [list(row) for row in ct.selection],
        "thresholds": list(ct.thresholds),
        "masks": _mask_rows(ct.masks),
        "tests": [_encode_test(t, ct.schema) for t in ct.tests],
        "leaves": [_encode_leaf(l) for l in ct.leaves],
        "internal_order": list(ct.internal_order),
        "leaf_order": list(ct.leaf_order),
    }


def _decode_tuple(obj, schema: FeatureSchema) -> CompiledTree:
    try:
        masks = _parse_mask_rows(obj["masks"])
        selection = np.asarray(obj["selection"], dtype=np.float64)
        thresholds = np.asarray(obj["thresholds"], dtype=np.float64)
        tests = tuple(_decode_test(t, schema) for t in obj["tests"])
        leaves = tuple(_decode_leaf(l) for l in obj["leaves"])
        ordering = obj.get("ordering", "bfs")
        internal_order = tuple(int(i) for i in obj["internal_order"])
        leaf_order = tuple(int(i) for i in obj["leaf_order"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDocumentError(f"bad tuple payload: {exc}") from exc
    n_leaves, n_internal = masks.shape
    if selection.shape != (n_internal, schema.n_features) or thresholds.shape != (n_internal,):
        raise MalformedDocumentError("selection/threshold shapes disagree with the masks")
    if len(tests) != n_internal or len(leaves) != n_leaves:
        raise MalformedDocumentError("tests/leaves lengths disagree with the masks")
    for j, test in enumerate(tests):
        row = np.zeros(schema.n_features)
        tj = 0.0
        if isinstance(test, AxisTest):
            row[test.feature] = 1.0
            tj = test.threshold
        elif isinstance(test, ObliqueTest):
            row = np.asarray(test.weights, dtype=np.float64)
            tj = test.offset
        if not (np.array_equal(selection[j], row) and thresholds[j] == tj):
            raise MalformedDocumentError(
                f"selection row {j} disagrees with the stored test function"
            )
    return CompiledTree(
        selection=selection,
        thresholds=thresholds,
        masks=masks,
        leaves=leaves,
        tests=tests,
        internal_order=internal_order,
        leaf_order=leaf_order,
        ordering=ordering,
        schema=schema,
    )


def _encode_ternary(tf: TernaryForm) -> dict:
    payload = _encode_tuple(tf.base)
    payload["pattern"] = [[int(v) for v in row] for row in tf.pattern]
    return payload


def _decode_ternary(obj, schema: FeatureSchema) -> TernaryForm:
    base = _decode_tuple(obj, schema)
    tf = ternary_form(base)
    stored = np.asarray(obj.get("pattern"), dtype=np.int8)
    if not np.array_equal(stored, tf.pattern):
        raise MalformedDocumentError("stored ternary pattern disagrees with the mask matrix")
    return tf


def _encode_ensemble(model: Ensemble) -> dict:
    return {
        "aggregation": model.aggregation,
        "weights": list(model.weights) if model.weights is not None else None,
        "classes": list(model.classes) if model.classes is not None else None,
        "trees": [_encode_tuple(ct) for ct in model.trees],
    }


def _decode_ensemble(obj, schema: FeatureSchema) -> Ensemble:
    try:
        trees = tuple(_decode_tuple(t, schema) for t in obj["trees"])
        weights = obj.get("weights")
        classes = obj.get("classes")
    except (KeyError, TypeError) as exc:
        raise MalformedDocumentError(f"bad ensemble payload: {exc}") from exc
    return Ensemble(
        trees=trees,
        aggregation=obj.get("aggregation", "sum"),
        weights=tuple(float(w) for w in weights) if weights is not None else None,
        classes=tuple(classes) if classes is not None else None,
    )


# ---------------------------------------------------------------------------
# Documents
# ---------------------------------------------------------------------------


def document_for(model) -> dict:
    """Wrap a model object in its document dict."""
    if isinstance(model, DecisionTree):
        kind = "skeleton" if model.is_skeleton() else "tree"
        schema = _encode_schema(model.schema) if model.schema.n_features else None
        return {
            "format_version": FORMAT_VERSION,
            "kind": kind,
            "schema": schema,
            "payload": _encode_tree(model),
        }
    if isinstance(model, TernaryForm):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "ternary",
            "schema": _encode_schema(model.base.schema),
            "payload": _encode_ternary(model),
        }
    if isinstance(model, CompiledTree):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "tuple",
            "schema": _encode_schema(model.schema),
            "payload": _encode_tuple(model),
        }
    if isinstance(model, Ensemble):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "ensemble",
            "schema": _encode_schema(model.schema),
            "payload": _encode_ensemble(model),
        }
    if isinstance(model, np.ndarray):
        return {
            "format_version": FORMAT_VERSION,
            "kind": "matrix",
            "schema": None,
            "payload": {"masks": _mask_rows(np.asarray(model, dtype=np.uint8))},
        }
    raise InputError(f"cannot build a document for {type(model).__name__}")


def save_model(model, destination=None) -> bytes:
    """Canonical document bytes; also written to ``destination`` when given."""
    data = canonical_json(document_for(model)).encode("utf-8")
    if destination is not None:
        try:
            with open(destination, "wb") as fh:
                fh.write(data)
        except OSError as exc:
            raise InputError(f"cannot write {destination}: {exc}") from exc
    return data


def read_document(source) -> dict:
    """Parse and version-check a document without validating the model."""
    if isinstance(source, (bytes, str)) and not _looks_like_path(source):
        text = source.decode("utf-8") if isinstance(source, bytes) else source
    else:
        try:
            with open(source, "rb") as fh:
                text = fh.read().decode("utf-8")
        except OSError as exc:
            raise InputError(f"cannot read {source}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocumentError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "kind" not in doc or "payload" not in doc:
        raise MalformedDocumentError("document must be an object with kind and payload")
    if doc.get("format_version") != FORMAT_VERSION:
        raise UnknownVersionError(
            f"format_version {doc.get('format_version')!r} is not {FORMAT_VERSION!r}"
        )
    return doc


def _looks_like_path(source) -> bool:
    if isinstance(source, bytes):
        return False
    stripped = source.lstrip()
    return not stripped.startswith("{")


def model_from_document(doc: dict):
    """Instantiate the model a document describes; tuple-bearing payloads run
    the structure validator first."""
    kind = doc["kind"]
    schema = _decode_schema(doc["schema"]) if doc.get("schema") else FeatureSchema((), ())
    payload = doc["payload"]
    if kind == "tree":
        return _decode_tree(payload, schema)
    if kind == "skeleton":
        return _decode_tree(payload, schema, allow_skeleton=True)
    if kind == "matrix":
        masks = _parse_mask_rows(payload.get("masks", []))
        _require_valid(masks)
        return masks
    if kind == "tuple":
        ct = _decode_tuple(payload, schema)
        _require_valid(ct.masks)
        return ct
    if kind == "ternary":
        tf = _decode_ternary(payload, schema)
        _require_valid(tf.base.masks)
        return tf
    if kind == "ensemble":
        model = _decode_ensemble(payload, schema)
        for ct in model.trees:
            _require_valid(ct.masks)
        return model
    raise MalformedDocumentError(f"unknown document kind {kind!r}")


def _require_valid(masks: np.ndarray) -> None:
    report = validate_structure(masks)
    if not report.valid:
        first = report.violations[0]
        raise InvalidStructureError(
            f"mask matrix fails rule {first.rule}: {first.message}", report
        )


def load_model(source):
    """Read, version-check, validate, and instantiate a model document."""
    return model_from_document(read_document(source))


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


def load_dataset_csv(source, schema: FeatureSchema) -> np.ndarray:
    """CSV with a header row matching the schema names, in order.

    Numeric cells parse with '.' decimals regardless of locale;
    categorical cells map through the vocabulary.  Bad cells raise
    DatasetError carrying the offending data row index (0-based).
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        try:
            with open(source, "r", newline="", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise InputError(f"cannot read {source}: {exc}") from exc
    reader = csv.reader(_stdio.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("dataset has no header row") from None
    if tuple(h.strip() for h in header) != schema.names:
        raise DatasetError(
            f"header {header} does not match schema names {list(schema.names)}"
        )
    rows = []
    for i, cells in enumerate(reader):
        if not cells:
            continue
        if len(cells) != schema.n_features:
            raise DatasetError(f"row {i}: expected {schema.n_features} cells, got {len(cells)}",
                               row=i)
        parsed = np.empty(schema.n_features, dtype=np.float64)
        for j, cell in enumerate(cells):
            cell = cell.strip()
            if schema.kinds[j] == NUMERIC:
                try:
                    parsed[j] = float(cell)
                except ValueError:
                    raise DatasetError(
                        f"row {i}: {cell!r} is not numeric for column {schema.names[j]!r}",
                        row=i,
                    ) from None
            else:
                vocab = schema.vocabularies[j]
                if cell not in vocab:
                    raise DatasetError(
                        f"row {i}: unknown category {cell!r} for column {schema.names[j]!r}",
                        row=i,
                    )
                parsed[j] = vocab.index(cell)
        rows.append(parsed)
    if not rows:
        return np.zeros((0, schema.n_features), dtype=np.float64)
    return np.vstack(rows)
