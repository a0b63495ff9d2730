"""Backend equivalence, activations, soft selectors, generalized masks."""

import itertools
import math

import numpy as np
import pytest

import arbo
from arbo import (
    AxisTest,
    ConfigError,
    ConstantLeaf,
    FeatureSchema,
    InputError,
    SoftmaxSelector,
    SparsemaxSelector,
    UnsupportedFormError,
    build_tree,
    classify_generalized,
    compile_tree,
    default_index_weights,
    evaluate_classic,
    first_argmax,
    get_activation,
    negate_mask_zeros,
    predict_bitwise,
    predict_matrix,
    predict_soft,
    predict_sum_product,
    predict_ternary,
    register_activation,
    scale_mask_columns,
    softmax_select,
    sum_product_form,
    ternary_form,
    ternary_scores,
    traversal_phase,
    weighted_sparsemax,
)
from arbo.backends import margins
from arbo.fuzz import random_inputs

from conftest import FIG1_B, FIG1_GENERALIZED, X_V1, X_V5


def one_split(left=3.0, right=7.0):
    return compile_tree(
        build_tree(
            (AxisTest(0, 0.0), ConstantLeaf(left), ConstantLeaf(right)),
            FeatureSchema.numeric(1),
        )
    )


class TestPhases:
    def test_margins_golden(self, fig1_compiled):
        assert margins(fig1_compiled, X_V5).tolist() == [1.0, -3.0, -1.0, -1.0, -3.0]

    def test_activated_margins_golden(self, fig1_compiled):
        h = arbo.test_phase(fig1_compiled, X_V5)
        assert h.tolist() == [1.0, 0.0, 0.0, 0.0, 0.0]

    def test_relu_gives_same_h_here(self, fig1_compiled):
        # the only positive margin is exactly 1, so relu coincides
        h = arbo.test_phase(fig1_compiled, X_V5, "relu")
        assert h.tolist() == [1.0, 0.0, 0.0, 0.0, 0.0]

    def test_all_passed_gives_zero_vector(self, fig1_compiled):
        assert arbo.test_phase(fig1_compiled, X_V1).tolist() == [0.0] * 5

    def test_unknown_activation(self, fig1_compiled):
        with pytest.raises(ConfigError):
            arbo.test_phase(fig1_compiled, X_V5, "sigmoid")

    def test_traversal_golden(self):
        b = traversal_phase(FIG1_B, [1, 0, 0, 0, 0])
        assert b.tolist() == [0.0, 0.0, 0.0, 0.0, 1.0, 1.0]

    def test_traversal_zero(self):
        assert traversal_phase(FIG1_B, np.zeros(5)).tolist() == [0.0] * 6

    def test_traversal_two_columns(self):
        b = traversal_phase(FIG1_B, [1, 0, 1, 0, 0])
        assert b.tolist() == [1.0, 1.0, 1.0, 1.0, 1.0, 2.0]

    def test_traversal_dimension_mismatch(self):
        with pytest.raises(InputError):
            traversal_phase(FIG1_B, np.zeros(4))

    def test_first_argmax_golden(self):
        assert first_argmax([0, 0, 0, 0, 1, 1]) == 4
        assert first_argmax([2, 2, 2]) == 0
        assert first_argmax([1, 1, 2, 2, 2, 2]) == 2

    def test_first_argmax_empty(self):
        with pytest.raises(InputError):
            first_argmax([])


class TestHardBackends:
    def test_matrix_worked_example(self, fig1_compiled):
        assert predict_matrix(fig1_compiled, X_V5) == (4, "v5")
        assert predict_matrix(fig1_compiled, X_V1) == (0, "v1")

    def test_bitwise_worked_example(self, fig1_compiled):
        assert predict_bitwise(fig1_compiled, X_V5) == (4, "v5")
        assert predict_bitwise(fig1_compiled, X_V1) == (0, "v1")

    def test_ternary_scores_golden(self, fig1_compiled):
        scores = ternary_scores(ternary_form(fig1_compiled), X_V5)
        assert scores.tolist() == [1 / 3, 0.0, -0.5, -1.0, 1.0, 0.0]

    def test_ternary_worked_example(self, fig1_compiled):
        tf = ternary_form(fig1_compiled)
        assert predict_ternary(tf, X_V5) == (4, "v5")
        assert predict_ternary(tf, X_V1) == (0, "v1")

    def test_ternary_one_split(self):
        tf = ternary_form(one_split())
        assert ternary_scores(tf, [-1.0]).tolist() == [1.0, -1.0]

    def test_ternary_realized_score_is_exactly_one(self, fuzz_corpus):
        for tree, ct in fuzz_corpus[:10]:
            tf = ternary_form(ct)
            for x in random_inputs(5, tree.schema, 5):
                scores = ternary_scores(tf, x)
                hit = evaluate_classic(tree, x).leaf_index
                assert scores[hit] == 1.0
                others = np.delete(np.arange(ct.n_leaves), hit)
                # any other row misses at least one test: two units off its norm
                assert (scores[others] <= 1.0 - 2.0 / tf.norms[others] + 1e-15).all()

    def test_backend_equivalence_on_corpus(self, fuzz_corpus):
        for tree, ct in fuzz_corpus:
            tf = ternary_form(ct)
            for x in random_inputs(7, tree.schema, 5):
                want = evaluate_classic(tree, x).leaf_index
                assert predict_matrix(ct, x).leaf_index == want
                assert predict_bitwise(ct, x).leaf_index == want
                assert predict_ternary(tf, x).leaf_index == want

    def test_sum_product_one_split(self):
        spf = sum_product_form(one_split(3.0, 7.0).as_tree())
        assert predict_sum_product(spf, [-1.0]).value == 3.0
        assert predict_sum_product(spf, [1.0]).value == 7.0

    def test_sum_product_worked_example(self, fig1_numeric):
        spf = sum_product_form(fig1_numeric)
        assert predict_sum_product(spf, X_V5).value == 50.0

    def test_sum_product_one_active_term(self, axis_corpus):
        for tree, _ in axis_corpus[:10]:
            spf = sum_product_form(tree)
            for x in random_inputs(11, tree.schema, 5):
                active = [
                    idx
                    for idx, term in enumerate(spf.terms)
                    if all(s * (x[f] - t) > 0 for s, f, t in term.factors)
                ]
                assert len(active) == 1
                got = predict_sum_product(spf, x)
                assert got.leaf_index == active[0]
                assert got.leaf_index == evaluate_classic(tree, x).leaf_index

    def test_sum_product_boundary_convention(self):
        # exactly at the threshold every step is zero: empty sum
        spf = sum_product_form(one_split(3.0, 7.0).as_tree())
        assert predict_sum_product(spf, [0.0]).value == 0.0


class TestActivations:
    @pytest.mark.parametrize(
        "name", ["binarized-relu", "relu", "scaled-relu:3.5", "rectified-quadratic"]
    )
    def test_positivity_contract(self, name):
        act = get_activation(name)
        x = np.array([-5.0, -1e-12, 0.0, 1e-12, 2.0])
        out = act(x)
        assert (out[x <= 0] == 0).all()
        assert (out[x > 0] > 0).all()

    def test_rectified_quadratic_values(self):
        act = get_activation("rectified-quadratic")
        assert act(np.array([3.0, -3.0])).tolist() == [9.0, 0.0]

    def test_scaled_relu_needs_positive_alpha(self):
        with pytest.raises(ConfigError):
            get_activation("scaled-relu", alpha=-1.0)

    def test_registry_rejects_non_positivity(self):
        register_activation("bad-identity", lambda: (lambda x: np.asarray(x)))
        with pytest.raises(ConfigError):
            get_activation("bad-identity")

    def test_custom_registration(self):
        register_activation("cube", lambda: (lambda x: np.where(np.asarray(x) > 0, x**3, 0.0)))
        act = get_activation("cube")
        assert act(np.array([2.0, -2.0])).tolist() == [8.0, 0.0]

    def test_invariance_across_activations(self, fuzz_corpus):
        acts = [get_activation(n) for n in
                ("binarized-relu", "relu", "scaled-relu:3.5", "rectified-quadratic")]
        for tree, ct in fuzz_corpus[:15]:
            for x in random_inputs(13, tree.schema, 4):
                picks = {predict_matrix(ct, x, a).leaf_index for a in acts}
                assert len(picks) == 1

    def test_scaling_invariance_of_argmax(self):
        rng = np.random.default_rng(21)
        for _ in range(200):
            n = int(rng.integers(1, 8))
            L = n + 1
            h = rng.uniform(0, 3, size=n) * rng.integers(0, 2, size=n)
            B = rng.integers(0, 2, size=(L, n))
            alpha = rng.uniform(0.1, 10, size=n)
            assert first_argmax(B @ h) == first_argmax(B @ np.diag(alpha) @ h)


class TestTheoremOneProperty:
    def test_leftmost_and_bit_equals_first_argmax_of_sum(self, fuzz_corpus):
        rng = np.random.default_rng(99)
        for _, ct in fuzz_corpus[:25]:
            packed = ct.packed_columns
            for _ in range(20):
                subset = np.flatnonzero(rng.integers(0, 2, size=ct.n_internal))
                mask = ct.all_leaves_mask
                total = np.zeros(ct.n_leaves, dtype=np.int64)
                for j in subset:
                    mask &= packed[j]
                    total += ct.masks[:, j]
                assert mask != 0
                leftmost = (mask & -mask).bit_length() - 1
                assert leftmost == first_argmax(total)


class TestSoftmax:
    def test_worked_example_scores(self):
        p = softmax_select(np.array([0, 0, 0, 0, 1, 1.0]), 1.0)
        e = math.e
        want = np.array([1, 1, 1, 1, e, e]) / (4 + 2 * e)
        assert np.allclose(p, want, atol=1e-15)

    def test_uniform_on_equal_scores(self):
        assert np.allclose(softmax_select(np.ones(6)), np.full(6, 1 / 6))

    def test_low_temperature_concentrates(self):
        p = softmax_select(np.array([0.0, 1.0]), 1e-3)
        assert p[1] > 1 - 1e-12

    def test_temperature_must_be_positive(self):
        with pytest.raises(ConfigError):
            softmax_select(np.ones(3), 0.0)

    def test_simplex_constraints(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            p = softmax_select(rng.normal(size=8), float(rng.uniform(0.1, 5)))
            assert (p >= 0).all()
            assert abs(p.sum() - 1) < 1e-12


def grid_search_sparsemax(z, w, rounds=6, steps=12):
    """Independent oracle: refine a dense simplex grid around the best point."""
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    L = z.size

    def objective(p):
        return float(np.sum(w * (p - z) ** 2) + np.sum(np.abs(p)))

    best = np.full(L, 1.0 / L)
    width = 1.0
    for _ in range(rounds):
        lo = np.maximum(0.0, best - width)
        candidates = []
        axes = [np.linspace(lo[i], min(1.0, lo[i] + 2 * width), steps) for i in range(L - 1)]
        for combo in itertools.product(*axes):
            s = sum(combo)
            if s <= 1.0 + 1e-12:
                p = np.append(combo, max(0.0, 1.0 - s))
                candidates.append(p)
        best = min(candidates, key=objective)
        width /= 4.0
    return best


class TestWeightedSparsemax:
    def test_two_point_golden(self):
        p = weighted_sparsemax([1.0, 2.0], [1.0, 0.5])
        assert np.allclose(p, [1 / 3, 2 / 3], atol=1e-12)

    def test_one_hot_passthrough(self):
        p = weighted_sparsemax([10.0, 0.0, 0.0], default_index_weights(3))
        assert np.allclose(p, [1.0, 0.0, 0.0], atol=1e-12)

    def test_all_ones_with_harmonic_weights(self):
        # ties lean toward small indices but do not reach an exact one-hot
        p = weighted_sparsemax(np.ones(5), default_index_weights(5))
        assert np.allclose(p, [2 / 3, 1 / 3, 0, 0, 0], atol=1e-9)
        assert (np.diff(p) <= 1e-12).all()

    def test_weight_validation(self):
        with pytest.raises(ConfigError):
            weighted_sparsemax([1.0, 2.0], [1.0, 2.0])  # increasing
        with pytest.raises(ConfigError):
            weighted_sparsemax([1.0, 2.0], [1.0, -0.5])  # not positive

    def test_simplex_and_kkt_residuals(self):
        rng = np.random.default_rng(17)
        for _ in range(300):
            L = int(rng.integers(2, 9))
            z = rng.normal(size=L) * 2
            w = np.sort(rng.uniform(0.05, 3.0, size=L))[::-1]
            w = w + np.linspace(1e-3 * L, 0, L)  # force strict decrease
            p = weighted_sparsemax(z, w)
            assert abs(p.sum() - 1.0) <= 1e-12
            assert (p >= 0).all()
            active = p > 1e-9
            lam = 2 * w[active] * (z[active] - p[active])
            assert lam.max() - lam.min() <= 1e-10
            if (~active).any():
                assert (2 * w[~active] * z[~active] <= lam.mean() + 1e-10).all()

    def test_matches_grid_oracle_small(self):
        rng = np.random.default_rng(23)
        for _ in range(6):
            L = int(rng.integers(2, 5))
            z = rng.uniform(-1, 2, size=L)
            w = np.sort(rng.uniform(0.2, 2.0, size=L))[::-1] + np.linspace(0.01 * L, 0, L)
            got = weighted_sparsemax(z, w)
            ref = grid_search_sparsemax(z, w)
            assert np.abs(got - ref).max() < 1e-4


class TestSoftPrediction:
    def test_saturated_split_picks_right_leaf(self):
        ct = one_split(3.0, 7.0)
        assert abs(predict_soft(ct, [1e6], SoftmaxSelector(1.0)) - 7.0) < 1e-6

    def test_worked_example_blend(self, fig1_numeric_compiled):
        e = math.e
        v = np.array([10.0, 20, 30, 40, 50, 60])
        want = float((v[0] + v[1] + v[2] + v[3] + e * v[4] + e * v[5]) / (4 + 2 * e))
        got = predict_soft(fig1_numeric_compiled, X_V5, SoftmaxSelector(1.0))
        assert abs(got - want) < 1e-12

    def test_sparsemax_selector_weights_toward_small_index(self):
        p = SparsemaxSelector()(np.array([0, 0, 0, 0, 1, 1.0]))
        assert p[:4].sum() == 0.0
        assert p[4] > p[5] > 0.0

    def test_label_leaves_unsupported(self, fig1_compiled):
        with pytest.raises(UnsupportedFormError):
            predict_soft(fig1_compiled, X_V5)

    def test_soft_limit_matches_hard_when_untied(self):
        # f1 failing both tests leaves a unique top leaf
        schema = FeatureSchema.numeric(1)
        tree = build_tree(
            (AxisTest(0, 0.0), ConstantLeaf(1.0),
             (AxisTest(0, 1.0), ConstantLeaf(2.0), ConstantLeaf(3.0))),
            schema,
        )
        ct = compile_tree(tree)
        hard = predict_matrix(ct, [5.0]).value
        soft = predict_soft(ct, [5.0], SoftmaxSelector(1e-3))
        assert abs(soft - hard) <= 1e-6 * abs(hard)


class TestGeneralizedMasks:
    def test_positive_scaling_keeps_choice(self, fig1_compiled):
        gm = scale_mask_columns(fig1_compiled, 2.0)
        assert gm.provenance == "positive-scaled"
        assert predict_matrix(fig1_compiled, X_V5, mask_matrix=gm).leaf_index == 4

    def test_zero_negation_keeps_choice(self, fig1_compiled):
        gm = negate_mask_zeros(fig1_compiled, -1.0)
        assert gm.provenance == "zero-negated"
        assert predict_matrix(fig1_compiled, X_V5, mask_matrix=gm).leaf_index == 4

    def test_published_generalized_matrix_matches(self, fig1_compiled, fig1):
        gm = classify_generalized(FIG1_GENERALIZED, fig1_compiled.masks)
        assert gm.provenance == "zero-negated"
        for x in random_inputs(31, fig1.schema, 100):
            want = evaluate_classic(fig1, x).leaf_index
            assert predict_matrix(fig1_compiled, x, mask_matrix=gm).leaf_index == want

    def test_transform_validation(self, fig1_compiled):
        with pytest.raises(ConfigError):
            scale_mask_columns(fig1_compiled, 0.0)
        with pytest.raises(ConfigError):
            negate_mask_zeros(fig1_compiled, 0.5)

    def test_per_column_scaling_on_corpus(self, fuzz_corpus):
        rng = np.random.default_rng(41)
        for tree, ct in fuzz_corpus[:10]:
            alpha = rng.uniform(0.2, 5.0, size=ct.n_internal)
            gm = scale_mask_columns(ct, alpha)
            for x in random_inputs(43, tree.schema, 5):
                want = evaluate_classic(tree, x).leaf_index
                assert predict_matrix(ct, x, mask_matrix=gm).leaf_index == want

    def test_classify_free_matrix(self, fig1_compiled):
        E = np.arange(30, dtype=np.float64).reshape(6, 5)
        assert classify_generalized(E, fig1_compiled.masks).provenance == "free"
