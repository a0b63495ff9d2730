"""Vectorized single-tree scoring over row blocks.

Every kernel returns the selected leaf index per row and must match the
per-row backend exactly; the batch layer only changes the iteration
shape, never the arithmetic (margins are computed with the same dot
products, so float results are bit-identical).
"""

from __future__ import annotations

import numpy as np

from .backends import (
    SoftSelector,
    get_activation,
    leaf_predictions,
    sign_with_negative_zero,
)
from .compiler import CompiledTree, SumProductForm, TernaryForm
from .errors import InputError, UnsupportedFormError
from .trees import (
    AxisTest,
    CategoricalTest,
    ComposedTest,
    ConstantLeaf,
    LinearLeaf,
    ObliqueTest,
)

HARD_BACKENDS = ("classic", "matrix", "bitwise", "ternary", "sumproduct")


def check_matrix(ct_schema, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != ct_schema.n_features:
        raise InputError(
            f"dataset has shape {X.shape}, schema declares {ct_schema.n_features} features"
        )
    return X


def batch_margins(ct: CompiledTree, X) -> np.ndarray:
    """(rows, n_internal) margins; column j positive iff node j fails."""
    X = check_matrix(ct.schema, X)
    M = X @ ct.selection.T - ct.thresholds
    for j in ct.override_positions:
        test = ct.tests[j]
        if isinstance(test, CategoricalTest):
            member = np.isin(X[:, test.feature].astype(np.int64), sorted(test.accepted))
            M[:, j] = np.where(member, -1.0, 1.0)
        elif isinstance(test, ComposedTest):
            M[:, j] = batch_predict_value(test.inner, X) - test.threshold
        else:
            raise InputError(f"unexpected override test {type(test).__name__}")
    return M


def batch_matrix(ct: CompiledTree, X, activation="binarized-relu", mask_matrix=None) -> np.ndarray:
    act = get_activation(activation)
    H = act(batch_margins(ct, X))
    entries = ct.masks if mask_matrix is None else np.asarray(mask_matrix)
    scores = H @ entries.astype(np.float64).T
    return np.argmax(scores, axis=1)


def batch_ternary(tf: TernaryForm, X) -> np.ndarray:
    signs = sign_with_negative_zero(batch_margins(tf.base, X))
    scores = (signs @ tf.pattern.astype(np.float64).T) / tf.norms
    return np.argmax(scores, axis=1)


def _packed_planes(ct: CompiledTree) -> np.ndarray:
    """(n_internal, planes) uint64 view of the packed mask columns."""
    planes = (ct.n_leaves + 63) // 64
    out = np.zeros((ct.n_internal, planes), dtype=np.uint64)
    for j, bits in enumerate(ct.packed_columns):
        for p in range(planes):
            out[j, p] = (bits >> (64 * p)) & 0xFFFFFFFFFFFFFFFF
    return out


def batch_bitwise(ct: CompiledTree, X) -> np.ndarray:
    """AND the failed nodes' packed columns per row; lowest set bit wins."""
    false = batch_margins(ct, X) > 0
    rows = false.shape[0]
    planes = (ct.n_leaves + 63) // 64
    colbits = _packed_planes(ct)
    masks = np.empty((rows, planes), dtype=np.uint64)
    full = ct.all_leaves_mask
    for p in range(planes):
        masks[:, p] = (full >> (64 * p)) & 0xFFFFFFFFFFFFFFFF
    for j in range(ct.n_internal):
        cond = false[:, j]
        if not cond.any():
            continue
        for p in range(planes):
            masks[cond, p] &= colbits[j, p]
    out = np.full(rows, -1, dtype=np.int64)
    for p in range(planes):
        plane = masks[:, p]
        todo = (out < 0) & (plane != 0)
        if not todo.any():
            continue
        v = plane[todo]
        lsb = v & (~v + np.uint64(1))
        out[todo] = 64 * p + np.log2(lsb.astype(np.float64)).astype(np.int64)
    return out


def batch_classic(ct: CompiledTree, X) -> np.ndarray:
    """Vectorized path following: rows walk the node pool level by level.

    Axis-only trees read features directly at each visited node; trees
    with other test kinds fall back to a precomputed margin matrix.
    """
    X = check_matrix(ct.schema, X)
    tree = ct.as_tree()
    n_nodes = len(tree.nodes)
    is_leaf = np.zeros(n_nodes, dtype=bool)
    left = np.zeros(n_nodes, dtype=np.int64)
    right = np.zeros(n_nodes, dtype=np.int64)
    leaf_pos = np.zeros(n_nodes, dtype=np.int64)
    for nid, node in enumerate(tree.nodes):
        if node.kind == "leaf":
            is_leaf[nid] = True
            leaf_pos[nid] = tree.leaf_position(nid)
        else:
            left[nid], right[nid] = node.left, node.right

    axis_only = all(isinstance(t, AxisTest) for t in ct.tests)
    rows = np.arange(X.shape[0])
    cur = np.full(X.shape[0], tree.root, dtype=np.int64)
    if axis_only:
        feat = np.zeros(n_nodes, dtype=np.int64)
        thr = np.zeros(n_nodes, dtype=np.float64)
        for nid, node in enumerate(tree.nodes):
            if node.kind == "internal":
                feat[nid] = node.test.feature
                thr[nid] = node.test.threshold
        while True:
            active = ~is_leaf[cur]
            if not active.any():
                break
            go_left = X[rows, feat[cur]] <= thr[cur]
            cur = np.where(active, np.where(go_left, left[cur], right[cur]), cur)
    else:
        col_of = np.zeros(n_nodes, dtype=np.int64)
        if tree is ct.source:
            for j, nid in enumerate(ct.internal_order):
                col_of[nid] = j
        else:
            # rebuilt tree: node ids coincide with the reconstruction's
            recon = ct.reconstruction
            for nid, col in enumerate(recon.node_col):
                if col is not None:
                    col_of[nid] = col
        passed = batch_margins(ct, X) <= 0
        while True:
            active = ~is_leaf[cur]
            if not active.any():
                break
            go_left = passed[rows, col_of[cur]]
            cur = np.where(active, np.where(go_left, left[cur], right[cur]), cur)
    return leaf_pos[cur]


def batch_sum_product(spf: SumProductForm, X) -> tuple[np.ndarray, np.ndarray]:
    """(active term index or -1, value) per row."""
    X = check_matrix(spf.schema, X)
    rows = X.shape[0]
    total = np.zeros(rows, dtype=np.float64)
    active = np.full(rows, -1, dtype=np.int64)
    for idx, term in enumerate(spf.terms):
        prod = np.ones(rows, dtype=np.float64)
        for sense, feature, threshold in term.factors:
            prod *= (sense * (X[:, feature] - threshold) > 0).astype(np.float64)
        total += term.coefficient * prod
        hit = (prod > 0) & (active < 0)
        active[hit] = idx
    return active, total


def leaf_predictions_batch(ct: CompiledTree, X) -> np.ndarray:
    """(rows, n_leaves) numeric per-leaf predictions."""
    X = check_matrix(ct.schema, X)
    out = np.empty((X.shape[0], ct.n_leaves), dtype=np.float64)
    for i, leaf in enumerate(ct.leaves):
        if isinstance(leaf, ConstantLeaf):
            if isinstance(leaf.value, str):
                raise UnsupportedFormError("soft prediction needs numeric leaves")
            out[:, i] = float(leaf.value)
        else:
            out[:, i] = X @ np.asarray(leaf.weights) + leaf.offset
    return out


def batch_soft(ct: CompiledTree, X, selector: SoftSelector, activation="binarized-relu") -> np.ndarray:
    act = get_activation(activation)
    scores = act(batch_margins(ct, X)) @ ct.masks.astype(np.float64).T
    P = np.vstack([selector(row) for row in scores])
    return np.einsum("ij,ij->i", P, leaf_predictions_batch(ct, X))


def batch_values(ct: CompiledTree, X, leaf_idx: np.ndarray) -> np.ndarray:
    """Values of the selected leaves; floats for numeric trees, otherwise an
    object array of labels."""
    X = check_matrix(ct.schema, X)
    numeric = ct.numeric_values
    if numeric is not None:
        return numeric[leaf_idx]
    if all(isinstance(l, ConstantLeaf) for l in ct.leaves):
        labels = np.array([l.value for l in ct.leaves], dtype=object)
        return labels[leaf_idx]
    out = np.empty(X.shape[0], dtype=np.float64)
    for i, leaf in enumerate(ct.leaves):
        rows = leaf_idx == i
        if not rows.any():
            continue
        if isinstance(leaf, ConstantLeaf):
            out[rows] = float(leaf.value)
        else:
            out[rows] = X[rows] @ np.asarray(leaf.weights) + leaf.offset
    return out


def batch_predict_value(ct: CompiledTree, X) -> np.ndarray:
    """Numeric predictions via the dense pipeline (used by composed tests)."""
    idx = batch_matrix(ct, X)
    values = batch_values(ct, X, idx)
    if values.dtype == object:
        raise UnsupportedFormError("composed tests need a numeric inner model")
    return values


def batch_leaf_indices(ct: CompiledTree, X, backend: str, tf: TernaryForm = None,
                       activation="binarized-relu") -> np.ndarray:
    """Dispatch table for the hard leaf-selecting backends."""
    if backend == "classic":
        return batch_classic(ct, X)
    if backend == "matrix":
        return batch_matrix(ct, X, activation)
    if backend == "bitwise":
        return batch_bitwise(ct, X)
    if backend == "ternary":
        from .compiler import ternary_form

        return batch_ternary(tf if tf is not None else ternary_form(ct), X)
    raise InputError(f"unknown hard backend {backend!r}")
