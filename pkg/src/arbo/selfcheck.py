"""Fuzzing self-check: the full invariant suite over random trees.

Each case builds one random tree, compiles it both ways, and runs every
cross-cutting property: rule validity and the exact-arithmetic lemmas of
the mask matrix, the decode round-trip, backend equivalence on random
inputs, activation invariance, and ordering equivalence.  The first
failing case is written to disk as a reproducer document that re-triggers
the same failure when replayed.

Fault injection (``inject="corrupt-b"``) flips one mask bit before the
checks run, which must trip the suite; it exists to prove the guard rails
fire.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .backends import (
    get_activation,
    predict_bitwise,
    predict_matrix,
    predict_sum_product,
    predict_ternary,
)
from .compiler import (
    compile_tree,
    decode_structure,
    masks_from_tree,
    sum_product_form,
    ternary_form,
    tuples_equivalent,
)
from .errors import ArboError, InputError, UnsupportedFormError
from .fuzz import GeneratorParams, generate_random_tree, random_inputs, shape_signature
from .io import canonical_json, document_for, model_from_document
from .structure import (
    augmented_invertible,
    check_complement_pairs,
    rank_exact,
    validate_structure,
)
from .trees import evaluate_classic

ACTIVATIONS = ("binarized-relu", "relu", "scaled-relu:3.5", "rectified-quadratic")


class PropertyFailure(AssertionError):
    def __init__(self, prop: str, detail: str):
        super().__init__(f"{prop}: {detail}")
        self.prop = prop
        self.detail = detail


@dataclass
class SelfcheckResult:
    cases: int
    failure: Optional[dict] = None  # reproducer document on failure

    @property
    def passed(self) -> bool:
        return self.failure is None


def _case_params(rng) -> GeneratorParams:
    return GeneratorParams(
        p_oblique=float(rng.uniform(0, 0.3)),
        p_categorical=float(rng.uniform(0, 0.3)),
        n_categorical_features=1,
        leaf_kind="numeric",
    )


def check_case(tree, masks_override=None, inputs=None) -> None:
    """Run every invariant over one tree; raise PropertyFailure on the first break."""
    ct = compile_tree(tree)
    if masks_override is not None:
        ct.masks = np.asarray(masks_override, dtype=np.uint8)
        ct.__dict__.pop("packed_columns", None)
        ct.__dict__.pop("reconstruction", None)

    B = ct.masks
    n_internal = B.shape[1]

    report = validate_structure(B)
    if not report.valid:
        raise PropertyFailure(
            "structure-rules", f"{report.violations[0].rule}: {report.violations[0].message}"
        )
    if report.rank != n_internal:
        raise PropertyFailure("mask-rank", f"rank {report.rank} != {n_internal}")
    if rank_exact(1 - B) != n_internal:
        raise PropertyFailure("complement-rank", "complement matrix is rank deficient")
    if not augmented_invertible(B):
        raise PropertyFailure("augmented-invertible", "det([B | 1]) == 0")
    if not check_complement_pairs(B):
        raise PropertyFailure("complement-pairs", "two columns sum to all ones")

    skeleton = decode_structure(B)
    if shape_signature(skeleton) != shape_signature(tree):
        raise PropertyFailure("decode-shape", "decoded shape differs from the source tree")
    if not np.array_equal(masks_from_tree(skeleton), B):
        raise PropertyFailure("mask-roundtrip", "masks(decode(B)) != B")

    pre = compile_tree(tree, "preorder")
    eq = tuples_equivalent(ct, pre)
    if not eq.ok:
        raise PropertyFailure("ordering-equivalence", eq.reason)

    tf = ternary_form(ct)
    try:
        spf = sum_product_form(tree)
    except UnsupportedFormError:
        spf = None

    if inputs is None:
        inputs = random_inputs(0, tree.schema, 8)
    for x in np.asarray(inputs, dtype=np.float64):
        want = evaluate_classic(tree, x)
        got_m = predict_matrix(ct, x)
        got_b = predict_bitwise(ct, x)
        got_t = predict_ternary(tf, x)
        if not (want.leaf_index == got_m.leaf_index == got_b.leaf_index == got_t.leaf_index):
            raise PropertyFailure(
                "backend-equivalence",
                f"classic={want.leaf_index} matrix={got_m.leaf_index} "
                f"bitwise={got_b.leaf_index} ternary={got_t.leaf_index} on x={x.tolist()}",
            )
        for name in ACTIVATIONS:
            alt = predict_matrix(ct, x, get_activation(name))
            if alt.leaf_index != want.leaf_index:
                raise PropertyFailure(
                    "activation-invariance",
                    f"{name} picked {alt.leaf_index}, classic {want.leaf_index}",
                )
        if spf is not None:
            sp = predict_sum_product(spf, x)
            if sp.leaf_index != want.leaf_index:
                raise PropertyFailure(
                    "sum-product-equivalence",
                    f"sum-product={sp.leaf_index} classic={want.leaf_index} on x={x.tolist()}",
                )


def _reproducer(seed, case_index, tree, masks_override, inputs, failure) -> dict:
    return {
        "reproducer_version": "1",
        "property": failure.prop,
        "detail": failure.detail,
        "seed": seed,
        "case_index": case_index,
        "tree": document_for(tree),
        "masks_override": (
            ["".join(str(int(v)) for v in row) for row in masks_override]
            if masks_override is not None
            else None
        ),
        "inputs": [list(map(float, row)) for row in np.asarray(inputs)],
    }


def run_selfcheck(seed: int, count: int, max_leaves: int, inject: Optional[str] = None,
                  report_dir: str = ".") -> SelfcheckResult:
    if count < 1:
        raise InputError("count must be >= 1")
    if max_leaves < 2:
        raise InputError("max_leaves must be >= 2")
    master = np.random.default_rng(seed)
    for case in range(count):
        case_seed = int(master.integers(0, 2**31))
        rng = np.random.default_rng(case_seed)
        n_leaves = int(rng.integers(2, max_leaves + 1))
        n_features = int(rng.integers(3, 7))
        tree = generate_random_tree(case_seed, n_leaves, n_features, _case_params(rng))
        inputs = random_inputs(case_seed + 1, tree.schema, 8)
        masks_override = None
        if inject == "corrupt-b":
            B = masks_from_tree(tree).copy()
            r = int(rng.integers(B.shape[0]))
            c = int(rng.integers(B.shape[1]))
            B[r, c] ^= 1
            masks_override = B
        try:
            check_case(tree, masks_override, inputs)
        except PropertyFailure as failure:
            doc = _reproducer(seed, case, tree, masks_override, inputs, failure)
            path = f"{report_dir}/selfcheck-reproducer-{seed}-{case}.json"
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(canonical_json(doc))
            doc["reproducer_path"] = path
            return SelfcheckResult(cases=case + 1, failure=doc)
    return SelfcheckResult(cases=count)


def replay(path: str) -> SelfcheckResult:
    """Re-run the single case stored in a reproducer document."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read reproducer {path}: {exc}") from exc
    tree = model_from_document(doc["tree"])
    masks_override = None
    if doc.get("masks_override") is not None:
        masks_override = np.array(
            [[int(c) for c in row] for row in doc["masks_override"]], dtype=np.uint8
        )
    inputs = np.asarray(doc["inputs"], dtype=np.float64)
    try:
        check_case(tree, masks_override, inputs)
    except PropertyFailure as failure:
        info = dict(doc)
        info["property"] = failure.prop
        info["detail"] = failure.detail
        return SelfcheckResult(cases=1, failure=info)
    return SelfcheckResult(cases=1)
