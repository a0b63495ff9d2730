"""Shared fixtures: the worked-example tree, its matrices, and a fuzz corpus.

The worked-example tree (four numeric features, six leaves):

    f1 <= 1 ?
      yes: f2 <= 4 ?
             yes: f2 <= 2 ?
                    yes: v1
                    no:  f4 <= 5 ?  yes: v2   no: v3
             no:  v4
      no:  f3 <= 3 ?
             yes: v5
             no:  v6

Compiled breadth-first this yields thresholds (1,4,3,2,5) and the 6x5
mask matrix FIG1_B below.  All indices in tests are 0-based: "leaf 4"
is the fifth leaf (value v5).
"""

import numpy as np
import pytest

from arbo import (
    AxisTest,
    ConstantLeaf,
    FeatureSchema,
    GeneratorParams,
    build_tree,
    compile_tree,
    generate_random_tree,
)

FIG1_B = np.array(
    [
        [0, 0, 1, 0, 1],
        [0, 0, 1, 1, 0],
        [0, 0, 1, 1, 1],
        [0, 1, 1, 1, 1],
        [1, 1, 0, 1, 1],
        [1, 1, 1, 1, 1],
    ],
    dtype=np.uint8,
)

FIG1_S = np.array(
    [
        [1, 0, 0, 0],
        [0, 1, 0, 0],
        [0, 0, 1, 0],
        [0, 1, 0, 0],
        [0, 0, 0, 1],
    ],
    dtype=np.float64,
)

FIG1_T = np.array([1.0, 4.0, 3.0, 2.0, 5.0])

# a 0/1 matrix that encodes no tree (column 1 has a torn zero block)
COUNTEREXAMPLE_B = np.array(
    [
        [0, 0, 0, 0, 1],
        [0, 0, 0, 0, 0],
        [1, 1, 0, 0, 1],
        [1, 1, 0, 0, 1],
        [1, 0, 1, 0, 1],
        [1, 1, 1, 1, 1],
    ],
    dtype=np.uint8,
)

# the row-per-leaf signed path encoding of the same tree, unnormalized
FIG1_TERNARY = np.array(
    [
        [-1, -1, 0, -1, 0],
        [-1, -1, 0, 1, -1],
        [-1, -1, 0, 1, 1],
        [-1, 1, 0, 0, 0],
        [1, 0, -1, 0, 0],
        [1, 0, 1, 0, 0],
    ],
    dtype=np.int8,
)

# its generalization: per column, ones -> one positive constant, zeros ->
# arbitrary negative constants; must select the same leaves
FIG1_GENERALIZED = np.array(
    [
        [-2.0, -200.0, 2.0, -3.0, 1.0],
        [-3.0, -400.0, 2.0, 4.0, -1.0],
        [-4.0, -4.0, 2.0, 4.0, 1.0],
        [-5.0, 20.0, 2.0, 4.0, 1.0],
        [5.1, 20.0, -2.0, 4.0, 1.0],
        [5.1, 20.0, 2.0, 4.0, 1.0],
    ]
)

X_V5 = np.array([2.0, 1.0, 2.0, 2.0])  # reaches v5 (leaf 4)
X_V1 = np.array([1.0, 1.0, 2.0, 3.0])  # no failed test: leftmost leaf


def make_fig1(values=None) -> "arbo.DecisionTree":
    """The worked-example tree; values default to the labels v1..v6."""
    schema = FeatureSchema.numeric(4)
    v = values if values is not None else [f"v{i}" for i in range(1, 7)]
    leaves = [ConstantLeaf(x) for x in v]
    return build_tree(
        (
            AxisTest(0, 1.0),
            (
                AxisTest(1, 4.0),
                (AxisTest(1, 2.0), leaves[0], (AxisTest(3, 5.0), leaves[1], leaves[2])),
                leaves[3],
            ),
            (AxisTest(2, 3.0), leaves[4], leaves[5]),
        ),
        schema,
    )


@pytest.fixture(scope="session")
def fig1():
    return make_fig1()


@pytest.fixture(scope="session")
def fig1_numeric():
    return make_fig1(values=[10.0, 20.0, 30.0, 40.0, 50.0, 60.0])


@pytest.fixture(scope="session")
def fig1_compiled(fig1):
    return compile_tree(fig1)


@pytest.fixture(scope="session")
def fig1_numeric_compiled(fig1_numeric):
    return compile_tree(fig1_numeric)


def corpus_params(seed: int) -> GeneratorParams:
    rng = np.random.default_rng(seed)
    return GeneratorParams(
        p_oblique=float(rng.uniform(0, 0.35)),
        p_categorical=float(rng.uniform(0, 0.35)),
        n_categorical_features=1,
        leaf_kind="numeric",
    )


@pytest.fixture(scope="session")
def fuzz_corpus():
    """60 mixed random trees (2..64 leaves) with their compiled forms."""
    out = []
    for i in range(60):
        rng = np.random.default_rng(1000 + i)
        n_leaves = int(rng.integers(2, 65))
        tree = generate_random_tree(1000 + i, n_leaves, 5, corpus_params(i))
        out.append((tree, compile_tree(tree)))
    return out


@pytest.fixture(scope="session")
def axis_corpus():
    """Plain axis-test regression trees (for sum-product and bench paths)."""
    out = []
    for i in range(30):
        rng = np.random.default_rng(2000 + i)
        n_leaves = int(rng.integers(2, 33))
        tree = generate_random_tree(2000 + i, n_leaves, 4, GeneratorParams())
        out.append((tree, compile_tree(tree)))
    return out
