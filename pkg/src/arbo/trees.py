"""Node-based binary decision trees and the classic traversal oracle.

The tree model here is the reference representation: a pool of nodes, each
internal node holding a test function, each leaf holding a leaf model.
Every other evaluation backend in this package is verified against
:func:`evaluate_classic`.

Conventions (fixed project-wide, all modules inherit them):

* a test that holds (margin <= 0) sends the input to the LEFT child;
* the *margin* of a test is positive exactly when the test fails, so a
  node is a "false node" for ``x`` iff ``margin(x) > 0``.  Ties at the
  threshold therefore pass the test.
* leaf positions, feature indices and node ids are 0-based.

Trees are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import InputError

NUMERIC = "numeric"
CATEGORICAL = "categorical"


@dataclass(frozen=True)
class FeatureSchema:
    """Declares the feature space: names, kinds and categorical vocabularies.

    Inputs are dense float vectors; categorical features hold the integer
    position of the category inside the declared vocabulary.
    """

    names: tuple[str, ...]
    kinds: tuple[str, ...]
    vocabularies: dict[int, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.names) != len(self.kinds):
            raise InputError("schema names and kinds must have equal length")
        for i, kind in enumerate(self.kinds):
            if kind not in (NUMERIC, CATEGORICAL):
                raise InputError(f"unknown feature kind {kind!r}")
            if kind == CATEGORICAL and i not in self.vocabularies:
                raise InputError(f"categorical feature {self.names[i]!r} has no vocabulary")

    @property
    def n_features(self) -> int:
        return len(self.names)

    @classmethod
    def numeric(cls, n: int, prefix: str = "f") -> "FeatureSchema":
        """All-numeric schema with generated names f1..fn."""
        return cls(tuple(f"{prefix}{i + 1}" for i in range(n)), (NUMERIC,) * n)

    def check_vector(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_features,):
            raise InputError(
                f"input has shape {x.shape}, schema declares {self.n_features} features"
            )
        return x


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AxisTest:
    """Single-feature threshold test: holds when x[feature] <= threshold."""

    feature: int
    threshold: float


@dataclass(frozen=True)
class CategoricalTest:
    """Set-membership test: holds when the category at `feature` is in `accepted`.

    `accepted` stores vocabulary positions, not strings.
    """

    feature: int
    accepted: frozenset[int]


@dataclass(frozen=True)
class ObliqueTest:
    """Linear test: holds when weights . x - offset <= 0."""

    weights: tuple[float, ...]
    offset: float


@dataclass(frozen=True)
class ComposedTest:
    """Test driven by an inner compiled model: holds when inner(x) - threshold <= 0.

    The inner model must produce numeric predictions.
    """

    inner: object  # CompiledTree; kept untyped to avoid a circular import
    threshold: float


TestFunction = Union[AxisTest, CategoricalTest, ObliqueTest, ComposedTest]


def margin_of(test: TestFunction, x: np.ndarray) -> float:
    """Signed margin of a test at ``x``; positive iff the node is a false node."""
    if isinstance(test, AxisTest):
        return float(x[test.feature] - test.threshold)
    if isinstance(test, ObliqueTest):
        return float(np.dot(np.asarray(test.weights, dtype=np.float64), x) - test.offset)
    if isinstance(test, CategoricalTest):
        return -1.0 if int(x[test.feature]) in test.accepted else 1.0
    if isinstance(test, ComposedTest):
        from .backends import predict_matrix  # deferred: backends imports this module

        return float(predict_matrix(test.inner, x).value) - test.threshold
    raise InputError(f"unknown test function {type(test).__name__}")


# ---------------------------------------------------------------------------
# Leaf models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantLeaf:
    """Leaf returning a fixed value: a float (regression) or a label (classification)."""

    value: Union[float, str]


@dataclass(frozen=True)
class LinearLeaf:
    """Leaf returning weights . x + offset; regression only."""

    weights: tuple[float, ...]
    offset: float


LeafModel = Union[ConstantLeaf, LinearLeaf]


def leaf_value(leaf: LeafModel, x: np.ndarray):
    if isinstance(leaf, ConstantLeaf):
        return leaf.value
    if isinstance(leaf, LinearLeaf):
        return float(np.dot(np.asarray(leaf.weights, dtype=np.float64), x) + leaf.offset)
    raise InputError(f"unknown leaf model {type(leaf).__name__}")


# ---------------------------------------------------------------------------
# Nodes and trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Node:
    """One slot of the node pool.

    Internal nodes carry ``test`` plus child ids; leaves carry ``leaf``.
    ``test`` may be None in skeleton trees recovered from a structure
    matrix alone, where tests are unknowable and never fabricated.
    """

    kind: str  # "internal" | "leaf"
    test: Optional[TestFunction] = None
    left: Optional[int] = None
    right: Optional[int] = None
    leaf: Optional[LeafModel] = None


@dataclass(frozen=True)
class LeafOutcome:
    """Result of one traversal: leaf position (left-to-right), its value, and
    the taken path as (node_id, passed) pairs."""

    leaf_index: int
    value: object
    path: tuple[tuple[int, bool], ...]


class DecisionTree:
    """Full binary decision tree over an indexed node pool.

    Immutable after construction.  ``n_leaves == n_internal + 1`` always
    holds; every node is reachable from the root exactly once.
    """

    def __init__(self, nodes, root: int, schema: FeatureSchema):
        self.nodes = tuple(nodes)
        self.root = root
        self.schema = schema
        self._check_shape()
        self.leaf_ids = self._leaves_left_to_right()
        self._leaf_pos = {nid: i for i, nid in enumerate(self.leaf_ids)}

    # -- structural checks ---------------------------------------------------

    def _check_shape(self):
        seen = set()
        stack = [self.root]
        while stack:
            nid = stack.pop()
            if nid in seen:
                raise InputError("node pool contains a cycle or shared node")
            seen.add(nid)
            node = self.nodes[nid]
            if node.kind == "internal":
                if node.left is None or node.right is None:
                    raise InputError(f"internal node {nid} is missing a child")
                stack.append(node.left)
                stack.append(node.right)
            elif node.kind != "leaf":
                raise InputError(f"node {nid} has unknown kind {node.kind!r}")
        if len(seen) != len(self.nodes):
            raise InputError("node pool contains nodes unreachable from the root")

    def _leaves_left_to_right(self) -> tuple[int, ...]:
        order = []
        stack = [self.root]
        while stack:
            nid = stack.pop()
            node = self.nodes[nid]
            if node.kind == "leaf":
                order.append(nid)
            else:
                stack.append(node.right)
                stack.append(node.left)
        return tuple(order)

    # -- counts ---------------------------------------------------------------

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_ids)

    @property
    def n_internal(self) -> int:
        return len(self.nodes) - self.n_leaves

    def leaf_position(self, node_id: int) -> int:
        """Left-to-right position of a leaf node id."""
        return self._leaf_pos[node_id]

    def is_skeleton(self) -> bool:
        """True when some internal node has no test assigned."""
        return any(n.kind == "internal" and n.test is None for n in self.nodes)


def evaluate_classic(tree: DecisionTree, x) -> LeafOutcome:
    """Traverse the tree node by node; the oracle all other backends must match."""
    x = tree.schema.check_vector(x)
    path = []
    nid = tree.root
    node = tree.nodes[nid]
    while node.kind == "internal":
        if node.test is None:
            raise InputError("skeleton tree has unassigned tests and cannot be evaluated")
        passed = margin_of(node.test, x) <= 0.0
        path.append((nid, passed))
        nid = node.left if passed else node.right
        node = tree.nodes[nid]
    return LeafOutcome(tree.leaf_position(nid), leaf_value(node.leaf, x), tuple(path))


def tree_depth(tree: DecisionTree) -> int:
    """Number of node levels on the longest root-to-leaf path (single leaf -> 1)."""
    depth = 0
    stack = [(tree.root, 1)]
    while stack:
        nid, d = stack.pop()
        node = tree.nodes[nid]
        if node.kind == "leaf":
            depth = max(depth, d)
        else:
            stack.append((node.left, d + 1))
            stack.append((node.right, d + 1))
    return depth


def build_tree(structure, schema: FeatureSchema) -> DecisionTree:
    """Build a tree from a nested structure of (test, left, right) | LeafModel.

    Convenience constructor used heavily by tests and fixtures; allocates
    node ids in preorder.
    """
    nodes = []

    def alloc(spec) -> int:
        nid = len(nodes)
        nodes.append(None)
        if isinstance(spec, (ConstantLeaf, LinearLeaf)):
            nodes[nid] = Node(kind="leaf", leaf=spec)
        else:
            test, left, right = spec
            left_id = alloc(left)
            right_id = alloc(right)
            nodes[nid] = Node(kind="internal", test=test, left=left_id, right=right_id)
        return nid

    root = alloc(structure)
    return DecisionTree(nodes, root, schema)
