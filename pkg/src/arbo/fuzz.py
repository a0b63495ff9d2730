"""Random tree / input generators and exhaustive shape enumeration.

Everything here is deterministic for a fixed seed (PCG64).  The generator
grows shape by uniform random leaf-splitting, which covers both skewed
and balanced shapes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .trees import (
    CATEGORICAL,
    NUMERIC,
    AxisTest,
    CategoricalTest,
    ConstantLeaf,
    DecisionTree,
    FeatureSchema,
    LinearLeaf,
    Node,
    ObliqueTest,
)


@dataclass(frozen=True)
class GeneratorParams:
    """Knobs for :func:`generate_random_tree`.

    ``p_oblique`` / ``p_categorical`` are per-node probabilities of drawing
    an oblique or a membership test instead of an axis test.  Categorical
    tests require ``n_categorical_features > 0``.
    """

    threshold_range: tuple[float, float] = (-5.0, 5.0)
    p_oblique: float = 0.0
    p_categorical: float = 0.0
    n_categorical_features: int = 0
    n_categories: int = 3
    leaf_kind: str = "numeric"  # "numeric" | "label" | "linear"
    value_range: tuple[float, float] = (-10.0, 10.0)


def make_schema(n_features: int, params: GeneratorParams = GeneratorParams()) -> FeatureSchema:
    """Schema with ``n_features`` columns, the trailing ones categorical."""
    n_cat = params.n_categorical_features
    if n_cat > n_features:
        raise InputError("more categorical features than features")
    names = tuple(f"f{i + 1}" for i in range(n_features))
    kinds = (NUMERIC,) * (n_features - n_cat) + (CATEGORICAL,) * n_cat
    vocab = {
        i: tuple(f"c{j}" for j in range(params.n_categories))
        for i in range(n_features - n_cat, n_features)
    }
    return FeatureSchema(names, kinds, vocab)


def _random_test(rng, schema: FeatureSchema, params: GeneratorParams):
    lo, hi = params.threshold_range
    numeric = [i for i, k in enumerate(schema.kinds) if k == NUMERIC]
    categorical = [i for i, k in enumerate(schema.kinds) if k == CATEGORICAL]
    r = rng.random()
    if categorical and r < params.p_categorical:
        j = int(rng.choice(categorical))
        size = len(schema.vocabularies[j])
        n_in = int(rng.integers(1, size))  # proper nonempty subset
        accepted = frozenset(int(c) for c in rng.choice(size, size=n_in, replace=False))
        return CategoricalTest(j, accepted)
    if numeric and r < params.p_categorical + params.p_oblique:
        w = rng.normal(size=schema.n_features)
        for j in range(schema.n_features):
            if schema.kinds[j] != NUMERIC:
                w[j] = 0.0
        return ObliqueTest(tuple(float(v) for v in w), float(rng.uniform(lo, hi)))
    j = int(rng.choice(numeric)) if numeric else 0
    return AxisTest(j, float(rng.uniform(lo, hi)))


def _random_leaf(rng, schema: FeatureSchema, params: GeneratorParams, index: int):
    lo, hi = params.value_range
    if params.leaf_kind == "label":
        return ConstantLeaf(f"v{index + 1}")
    if params.leaf_kind == "linear":
        w = tuple(
            float(rng.normal()) if k == NUMERIC else 0.0 for k in schema.kinds
        )
        return LinearLeaf(w, float(rng.uniform(lo, hi)))
    return ConstantLeaf(float(rng.uniform(lo, hi)))


def generate_random_tree(
    seed: int,
    n_leaves: int,
    n_features: int,
    params: GeneratorParams = GeneratorParams(),
) -> DecisionTree:
    """Grow a full binary tree by splitting a uniformly chosen leaf at a time."""
    if n_leaves < 1:
        raise InputError("n_leaves must be >= 1")
    rng = np.random.default_rng(seed)
    schema = make_schema(n_features, params)

    # children[nid] = (left, right) for internals; leaves absent.
    children: dict[int, tuple[int, int]] = {}
    leaves = [0]
    next_id = 1
    for _ in range(n_leaves - 1):
        pick = int(rng.integers(len(leaves)))
        nid = leaves.pop(pick)
        left, right = next_id, next_id + 1
        next_id += 2
        children[nid] = (left, right)
        # keep left-to-right intent irrelevant here; order fixed by ids
        leaves.extend([left, right])

    nodes = [None] * next_id
    leaf_counter = 0
    for nid in range(next_id):
        if nid in children:
            left, right = children[nid]
            nodes[nid] = Node(
                kind="internal", test=_random_test(rng, schema, params), left=left, right=right
            )
        else:
            nodes[nid] = Node(kind="leaf", leaf=_random_leaf(rng, schema, params, leaf_counter))
            leaf_counter += 1
    return DecisionTree(nodes, 0, schema)


def random_inputs(seed: int, schema: FeatureSchema, count: int,
                  spread: tuple[float, float] = (-6.0, 6.0)) -> np.ndarray:
    """Matrix of random feature vectors matching the schema."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(spread[0], spread[1], size=(count, schema.n_features))
    for j, kind in enumerate(schema.kinds):
        if kind == CATEGORICAL:
            X[:, j] = rng.integers(0, len(schema.vocabularies[j]), size=count)
    return X


# ---------------------------------------------------------------------------
# Exhaustive shape enumeration (Catalan family)
# ---------------------------------------------------------------------------

LEAF = "leaf"


def enumerate_shapes(n_leaves: int):
    """All full binary tree shapes with the given number of leaves.

    Shapes are nested tuples ``(left, right)`` with ``"leaf"`` terminals.
    Counts follow the Catalan numbers: 1, 1, 2, 5, 14, 42, ...
    """
    if n_leaves == 1:
        yield LEAF
        return
    for k in range(1, n_leaves):
        for left in enumerate_shapes(k):
            for right in enumerate_shapes(n_leaves - k):
                yield (left, right)


def tree_from_shape(shape, seed: int = 0, n_features: int = 3,
                    params: GeneratorParams = GeneratorParams()) -> DecisionTree:
    """Materialize a shape with random axis tests and numeric leaves."""
    rng = np.random.default_rng(seed)
    schema = make_schema(n_features, params)
    nodes = []

    leaf_counter = [0]

    def alloc(sh) -> int:
        nid = len(nodes)
        nodes.append(None)
        if sh == LEAF:
            nodes[nid] = Node(kind="leaf", leaf=_random_leaf(rng, schema, params, leaf_counter[0]))
            leaf_counter[0] += 1
        else:
            left, right = sh
            lid = alloc(left)
            rid = alloc(right)
            nodes[nid] = Node(
                kind="internal", test=_random_test(rng, schema, params), left=lid, right=rid
            )
        return nid

    root = alloc(shape)
    return DecisionTree(nodes, root, schema)


def shape_signature(tree: DecisionTree) -> tuple:
    """Hashable signature of the tree shape alone (tests and values ignored)."""

    def sig(nid: int):
        node = tree.nodes[nid]
        if node.kind == "leaf":
            return LEAF
        return (sig(node.left), sig(node.right))

    return sig(tree.root)
