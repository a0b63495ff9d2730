"""Compile decision trees into their explicit matrix parameterization.

A compiled tree is the 4-piece description (selection matrix, threshold
vector, leaf-mask matrix, leaf vector) plus the recorded node orderings.
Column j of the leaf-mask matrix carries a 0 at exactly the rows whose
leaves would be ruled out if internal node j fails its test; rows follow
the leaves left to right.

The same module derives the row-wise ternary pattern form, the
sum-product (indicator expansion) form, and the inverse direction:
recovering tree shape from the mask matrix alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np

from .errors import DegenerateTreeError, InputError, InvalidStructureError, UnsupportedFormError
from .structure import Reconstruction, ValidationReport, check_structure_shape, reconstruct
from .trees import (
    AxisTest,
    ConstantLeaf,
    DecisionTree,
    FeatureSchema,
    LeafModel,
    LinearLeaf,
    Node,
    ObliqueTest,
    TestFunction,
)

BFS = "bfs"
PREORDER = "preorder"


@dataclass(eq=False)
class CompiledTree:
    """Matrix form of a binary decision tree.

    Treat instances as immutable.  ``selection`` rows are one-hot for
    axis tests and general real rows for oblique tests; categorical and
    composed tests keep a zero row and compute their margin through the
    stored test function instead.
    """

    selection: np.ndarray      # (n_internal, n_features) float64
    thresholds: np.ndarray     # (n_internal,) float64
    masks: np.ndarray          # (n_leaves, n_internal) uint8
    leaves: tuple[LeafModel, ...]
    tests: tuple[TestFunction, ...]
    internal_order: tuple[int, ...]
    leaf_order: tuple[int, ...]
    ordering: str
    schema: FeatureSchema
    source: Optional[DecisionTree] = None  # set by compile_tree only
    _rebuilt: Optional[DecisionTree] = None

    @property
    def n_leaves(self) -> int:
        return self.masks.shape[0]

    @property
    def n_internal(self) -> int:
        return self.masks.shape[1]

    @cached_property
    def override_positions(self) -> tuple[int, ...]:
        """Columns whose margin does not come from the selection matrix."""
        return tuple(
            j for j, t in enumerate(self.tests) if not isinstance(t, (AxisTest, ObliqueTest))
        )

    @cached_property
    def packed_columns(self) -> tuple[int, ...]:
        """Column bitmasks as integers; bit i is leaf i, so the lowest set bit
        is the leftmost surviving leaf."""
        cols = []
        for j in range(self.n_internal):
            bits = 0
            col = self.masks[:, j]
            for i in range(self.n_leaves):
                if col[i]:
                    bits |= 1 << i
            cols.append(bits)
        return tuple(cols)

    @property
    def all_leaves_mask(self) -> int:
        return (1 << self.n_leaves) - 1

    @cached_property
    def numeric_values(self) -> Optional[np.ndarray]:
        """Constant leaf values as a float vector, or None when any leaf is
        a label or a linear model."""
        vals = []
        for leaf in self.leaves:
            if isinstance(leaf, ConstantLeaf) and isinstance(leaf.value, (int, float)):
                vals.append(float(leaf.value))
            else:
                return None
        return np.asarray(vals, dtype=np.float64)

    @cached_property
    def reconstruction(self) -> Reconstruction:
        recon = reconstruct(self.masks)
        if not recon.ok:
            raise InvalidStructureError("mask matrix is not a structure matrix", None)
        return recon

    def predict_value(self, x) -> float:
        """Numeric prediction via the matrix backend (used by composed tests)."""
        from .backends import predict_matrix

        value = predict_matrix(self, x).value
        if isinstance(value, str):
            raise UnsupportedFormError("composed tests need a numeric inner model")
        return float(value)

    def as_tree(self) -> DecisionTree:
        """Node-based tree carrying the same tests and leaves.

        Returns the compile-time source when available; otherwise rebuilds
        the tree from the mask matrix (node ids then follow the
        reconstruction's preorder allocation).
        """
        if self.source is not None:
            return self.source
        if self._rebuilt is None:
            self._rebuilt = rebuild_tree(self)
        return self._rebuilt

    def __eq__(self, other) -> bool:
        if not isinstance(other, CompiledTree):
            return NotImplemented
        return (
            np.array_equal(self.selection, other.selection)
            and np.array_equal(self.thresholds, other.thresholds)
            and np.array_equal(self.masks, other.masks)
            and self.leaves == other.leaves
            and self.tests == other.tests
            and self.schema == other.schema
        )


def _leaf_spans(tree: DecisionTree) -> dict[int, tuple[int, int]]:
    """For every node id: first and last left-to-right leaf position below it."""
    spans: dict[int, tuple[int, int]] = {}

    def walk(nid: int) -> tuple[int, int]:
        node = tree.nodes[nid]
        if node.kind == "leaf":
            pos = tree.leaf_position(nid)
            spans[nid] = (pos, pos)
        else:
            l0, l1 = walk(node.left)
            r0, r1 = walk(node.right)
            spans[nid] = (l0, r1)
        return spans[nid]

    walk(tree.root)
    return spans


def internal_ordering(tree: DecisionTree, ordering: str) -> tuple[int, ...]:
    """Internal node ids in breadth-first (top to bottom, left to right) or
    preorder sequence."""
    order = []
    if ordering == BFS:
        queue = [tree.root]
        while queue:
            nid = queue.pop(0)
            node = tree.nodes[nid]
            if node.kind == "internal":
                order.append(nid)
                queue.append(node.left)
                queue.append(node.right)
    elif ordering == PREORDER:
        stack = [tree.root]
        while stack:
            nid = stack.pop()
            node = tree.nodes[nid]
            if node.kind == "internal":
                order.append(nid)
                stack.append(node.right)
                stack.append(node.left)
    else:
        raise InputError(f"unknown ordering {ordering!r}")
    return tuple(order)


def masks_from_tree(tree: DecisionTree, ordering: str = BFS) -> np.ndarray:
    """Just the leaf-mask matrix of a tree shape (tests not required)."""
    if tree.n_internal == 0:
        raise DegenerateTreeError("degenerate: no internal nodes")
    order = internal_ordering(tree, ordering)
    spans = _leaf_spans(tree)
    B = np.ones((tree.n_leaves, len(order)), dtype=np.uint8)
    for j, nid in enumerate(order):
        lo, hi = spans[tree.nodes[nid].left]
        B[lo : hi + 1, j] = 0
    return B


def compile_tree(tree: DecisionTree, ordering: str = BFS) -> CompiledTree:
    """Turn a node-based tree into its matrix form.

    Raises DegenerateTreeError for a single-leaf tree: the matrix form
    needs at least one internal node, callers should fall back to a
    constant predictor.
    """
    if tree.n_internal == 0:
        raise DegenerateTreeError("degenerate: no internal nodes")
    if tree.is_skeleton():
        raise InputError("skeleton tree has unassigned tests")

    order = internal_ordering(tree, ordering)
    n_int, n_feat, n_leaves = len(order), tree.schema.n_features, tree.n_leaves
    B = masks_from_tree(tree, ordering)

    S = np.zeros((n_int, n_feat), dtype=np.float64)
    t = np.zeros(n_int, dtype=np.float64)
    tests = []
    for j, nid in enumerate(order):
        node = tree.nodes[nid]
        test = node.test
        tests.append(test)
        if isinstance(test, AxisTest):
            S[j, test.feature] = 1.0
            t[j] = test.threshold
        elif isinstance(test, ObliqueTest):
            S[j, :] = np.asarray(test.weights, dtype=np.float64)
            t[j] = test.offset

    leaves = tuple(tree.nodes[nid].leaf for nid in tree.leaf_ids)
    labels = any(isinstance(l, ConstantLeaf) and isinstance(l.value, str) for l in leaves)
    if labels and any(isinstance(l, LinearLeaf) for l in leaves):
        raise InputError("linear leaves are only permitted in regression trees")

    return CompiledTree(
        selection=S,
        thresholds=t,
        masks=B,
        leaves=leaves,
        tests=tuple(tests),
        internal_order=order,
        leaf_order=tree.leaf_ids,
        ordering=ordering,
        schema=tree.schema,
        source=tree,
    )


# ---------------------------------------------------------------------------
# Mask matrix -> tree shape
# ---------------------------------------------------------------------------


def decode_structure(B) -> DecisionTree:
    """Recover the tree shape a mask matrix encodes.

    The result is a skeleton: tests and leaf values are unknowable from
    the matrix alone and stay unassigned.  Raises InvalidStructureError
    (with the rule report) when the matrix encodes no tree.
    """
    M = check_structure_shape(B)
    recon = reconstruct(M)
    if not recon.ok:
        report = ValidationReport(False, list(recon.violations), 0, False)
        raise InvalidStructureError(
            "; ".join(f"{v.rule}: {v.message}" for v in recon.violations), report
        )
    return _skeleton_from(recon, FeatureSchema((), ()), None, None)


def _skeleton_from(
    recon: Reconstruction,
    schema: FeatureSchema,
    tests: Optional[tuple[TestFunction, ...]],
    leaves: Optional[tuple[LeafModel, ...]],
) -> DecisionTree:
    nodes = []
    for nid, kids in enumerate(recon.children):
        if kids is None:
            pos = recon.node_span[nid][0]
            nodes.append(Node(kind="leaf", leaf=leaves[pos] if leaves else None))
        else:
            col = recon.node_col[nid]
            nodes.append(
                Node(
                    kind="internal",
                    test=tests[col] if tests else None,
                    left=kids[0],
                    right=kids[1],
                )
            )
    return DecisionTree(nodes, recon.root, schema)


def rebuild_tree(ct: CompiledTree) -> DecisionTree:
    """Inverse of compile_tree: node-based tree from the matrix form."""
    return _skeleton_from(ct.reconstruction, ct.schema, ct.tests, ct.leaves)


def left_reachable_set(B, column: int) -> frozenset[int]:
    """Leaf rows in the left subtree of the node behind ``column``: exactly
    the zero rows of that column."""
    M = check_structure_shape(B)
    if not 0 <= column < M.shape[1]:
        raise InputError(f"column {column} out of range for {M.shape[1]} columns")
    return frozenset(int(i) for i in np.flatnonzero(M[:, column] == 0))


def complement_bits(b) -> np.ndarray:
    """Elementwise complement: b + complement(b) is all ones."""
    arr = np.asarray(b)
    if not np.isin(arr, (0, 1)).all():
        raise InputError("complement expects a 0/1 vector")
    return (1 - arr).astype(arr.dtype)


# ---------------------------------------------------------------------------
# Ternary pattern form
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class TernaryForm:
    """Row-per-leaf signed path encoding.

    Row i holds -1 at tests the leaf's path passes, +1 at tests it fails,
    0 at tests it never takes; exactly depth(leaf)-1 entries are nonzero.
    Scores divide the integer pattern/sign dot product by the row's L1
    norm, so the realized path scores exactly 1.0.
    """

    base: CompiledTree
    pattern: np.ndarray  # (n_leaves, n_internal) int8
    norms: np.ndarray    # (n_leaves,) int64, L1 norm per row

    @property
    def normalized(self) -> np.ndarray:
        """The row-normalized pattern matrix."""
        return self.pattern.astype(np.float64) / self.norms[:, None]

    @property
    def augmented_selection(self) -> np.ndarray:
        """Selection matrix with the threshold column appended, so that the
        margins are this matrix applied to (x, -1)."""
        return np.hstack([self.base.selection, self.base.thresholds[:, None]])


def ternary_form(ct: CompiledTree) -> TernaryForm:
    recon = ct.reconstruction
    L, n_int = ct.n_leaves, ct.n_internal
    pattern = np.zeros((L, n_int), dtype=np.int8)
    for nid, kids in enumerate(recon.children):
        if kids is None:
            continue
        col = recon.node_col[nid]
        lo, hi = recon.node_span[nid]
        _, mid = recon.node_span[kids[0]]
        pattern[lo : mid + 1, col] = -1
        pattern[mid + 1 : hi + 1, col] = 1
    norms = np.abs(pattern).astype(np.int64).sum(axis=1)
    return TernaryForm(base=ct, pattern=pattern, norms=norms)


# ---------------------------------------------------------------------------
# Sum-product (indicator expansion) form
# ---------------------------------------------------------------------------


class Factor(NamedTuple):
    sense: int        # -1: active below threshold, +1: active above
    feature: int
    threshold: float


class Term(NamedTuple):
    coefficient: float
    factors: tuple[Factor, ...]


@dataclass(frozen=True)
class SumProductForm:
    """One additive term per leaf; a term's product of step indicators is 1
    exactly on that leaf's cell (boundaries excluded by the step-at-zero
    convention)."""

    terms: tuple[Term, ...]
    schema: FeatureSchema


def sum_product_form(tree: DecisionTree) -> SumProductForm:
    """Expand an axis-test regression tree into its indicator sum."""
    terms: list[Term] = []

    def walk(nid: int, factors: list[Factor]):
        node = tree.nodes[nid]
        if node.kind == "leaf":
            if not isinstance(node.leaf, ConstantLeaf) or isinstance(node.leaf.value, str):
                raise UnsupportedFormError("sum-product form needs constant numeric leaves")
            terms.append(Term(float(node.leaf.value), tuple(factors)))
            return
        if not isinstance(node.test, AxisTest):
            raise UnsupportedFormError("sum-product form needs axis tests only")
        f = node.test.feature
        th = node.test.threshold
        walk(node.left, factors + [Factor(-1, f, th)])
        walk(node.right, factors + [Factor(+1, f, th)])

    walk(tree.root, [])
    return SumProductForm(tuple(terms), tree.schema)


# ---------------------------------------------------------------------------
# Characteristic vectors and tuple equivalence
# ---------------------------------------------------------------------------


def characteristic_vector(ct: CompiledTree, leaf_index: int) -> np.ndarray:
    """Minimal-support 0/1 vector u with first-argmax(masks @ u) = leaf_index.

    Equals the indicator of the failed tests on the leaf's path: those
    columns jointly rule out every leaf to the left, and no smaller
    selection can.
    """
    if not 0 <= leaf_index < ct.n_leaves:
        raise InputError(f"leaf index {leaf_index} out of range for {ct.n_leaves} leaves")
    recon = ct.reconstruction
    u = np.zeros(ct.n_internal, dtype=np.uint8)
    nid = recon.root
    while recon.children[nid] is not None:
        left, right = recon.children[nid]
        _, mid = recon.node_span[left]
        if leaf_index > mid:
            u[recon.node_col[nid]] = 1
            nid = right
        else:
            nid = left
    return u


class Equivalence(NamedTuple):
    ok: bool
    reason: str

    def __bool__(self) -> bool:
        return self.ok


def _canonical_permutation(ct: CompiledTree) -> list[int]:
    """Columns reordered breadth-first over the decoded shape."""
    recon = ct.reconstruction
    perm = []
    queue = [recon.root]
    while queue:
        nid = queue.pop(0)
        kids = recon.children[nid]
        if kids is None:
            continue
        perm.append(recon.node_col[nid])
        queue.extend(kids)
    return perm


def tuples_equivalent(a: CompiledTree, b: CompiledTree) -> Equivalence:
    """Whether two compiled trees describe the same tree up to a permutation
    of internal nodes (leaf order is canonical in both)."""
    if a.masks.shape != b.masks.shape:
        return Equivalence(False, f"dimension mismatch: {a.masks.shape} vs {b.masks.shape}")
    if a.schema != b.schema:
        return Equivalence(False, "feature schemas differ")
    pa, pb = _canonical_permutation(a), _canonical_permutation(b)
    if not np.array_equal(a.masks[:, pa], b.masks[:, pb]):
        return Equivalence(False, "mask matrices differ after canonical reordering")
    if not np.array_equal(a.thresholds[pa], b.thresholds[pb]):
        return Equivalence(False, "threshold vectors differ after canonical reordering")
    if not np.array_equal(a.selection[pa, :], b.selection[pb, :]):
        return Equivalence(False, "selection matrices differ after canonical reordering")
    if tuple(a.tests[j] for j in pa) != tuple(b.tests[j] for j in pb):
        return Equivalence(False, "test functions differ after canonical reordering")
    if a.leaves != b.leaves:
        return Equivalence(False, "leaf vectors differ")
    return Equivalence(True, "equivalent")
