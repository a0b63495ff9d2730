"""Compilation goldens, decode round-trips, derived forms, and equivalence."""

import itertools

import numpy as np
import pytest

from arbo import (
    AxisTest,
    CategoricalTest,
    ConstantLeaf,
    DegenerateTreeError,
    FeatureSchema,
    InputError,
    InvalidStructureError,
    LinearLeaf,
    UnsupportedFormError,
    build_tree,
    characteristic_vector,
    compile_tree,
    complement_bits,
    decode_structure,
    evaluate_classic,
    first_argmax,
    left_reachable_set,
    masks_from_tree,
    rebuild_tree,
    sum_product_form,
    ternary_form,
    tuples_equivalent,
)
from arbo.fuzz import enumerate_shapes, random_inputs, shape_signature, tree_from_shape

from conftest import COUNTEREXAMPLE_B, FIG1_B, FIG1_S, FIG1_T, FIG1_TERNARY, make_fig1


def one_split_tree(left=3.0, right=7.0, threshold=0.0):
    return build_tree(
        (AxisTest(0, threshold), ConstantLeaf(left), ConstantLeaf(right)),
        FeatureSchema.numeric(1),
    )


class TestCompile:
    def test_worked_example_matrices(self, fig1_compiled):
        assert np.array_equal(fig1_compiled.thresholds, FIG1_T)
        assert np.array_equal(fig1_compiled.selection, FIG1_S)
        assert np.array_equal(fig1_compiled.masks, FIG1_B)

    def test_one_split(self):
        ct = compile_tree(one_split_tree())
        assert np.array_equal(ct.masks, [[0], [1]])
        assert np.array_equal(ct.thresholds, [0.0])

    def test_single_leaf_rejected(self):
        tree = build_tree(ConstantLeaf(1.0), FeatureSchema.numeric(1))
        with pytest.raises(DegenerateTreeError, match="degenerate"):
            compile_tree(tree)

    def test_leaf_order_is_left_to_right(self, fig1, fig1_compiled):
        values = [fig1.nodes[nid].leaf.value for nid in fig1_compiled.leaf_order]
        assert values == ["v1", "v2", "v3", "v4", "v5", "v6"]

    def test_preorder_ordering(self, fig1):
        pre = compile_tree(fig1, "preorder")
        assert np.array_equal(pre.thresholds, [1.0, 4.0, 2.0, 5.0, 3.0])

    def test_compiled_predictions_match_classic(self, fuzz_corpus):
        from arbo import predict_matrix

        for tree, ct in fuzz_corpus[:15]:
            for x in random_inputs(3, tree.schema, 10):
                assert predict_matrix(ct, x).leaf_index == evaluate_classic(tree, x).leaf_index

    def test_mixed_labels_and_linear_leaves_rejected(self):
        tree = build_tree(
            (AxisTest(0, 0.0), ConstantLeaf("a"), LinearLeaf((1.0,), 0.0)),
            FeatureSchema.numeric(1),
        )
        with pytest.raises(InputError):
            compile_tree(tree)


class TestDecode:
    def test_worked_example_shape(self, fig1):
        skeleton = decode_structure(FIG1_B)
        assert shape_signature(skeleton) == shape_signature(fig1)
        assert skeleton.is_skeleton()

    def test_one_split(self):
        skeleton = decode_structure(np.array([[0], [1]]))
        assert skeleton.n_leaves == 2
        assert skeleton.n_internal == 1

    def test_counterexample_rejected_with_rule(self):
        with pytest.raises(InvalidStructureError) as err:
            decode_structure(COUNTEREXAMPLE_B)
        assert err.value.report is not None
        assert err.value.report.violations[0].rule in {"R1", "R2", "R3", "R4"}

    def test_roundtrip_on_fuzz_corpus(self, fuzz_corpus):
        for tree, ct in fuzz_corpus:
            skeleton = decode_structure(ct.masks)
            assert shape_signature(skeleton) == shape_signature(tree)
            assert np.array_equal(masks_from_tree(skeleton), ct.masks)

    def test_roundtrip_exhaustive_small(self):
        for n_leaves in range(2, 6):
            for shape in enumerate_shapes(n_leaves):
                B = masks_from_tree(tree_from_shape(shape))
                rebuilt = masks_from_tree(decode_structure(B))
                assert np.array_equal(rebuilt, B)


class TestTernary:
    def test_worked_example_pattern(self, fig1_compiled):
        tf = ternary_form(fig1_compiled)
        assert np.array_equal(tf.pattern, FIG1_TERNARY)
        assert np.array_equal(tf.norms, [3, 4, 4, 2, 2, 2])

    def test_third_leaf_row(self, fig1_compiled):
        # the row for v3 reads: passed, passed, absent, failed, failed
        tf = ternary_form(fig1_compiled)
        assert tf.pattern[2].tolist() == [-1, -1, 0, 1, 1]

    def test_one_split_rows(self):
        tf = ternary_form(compile_tree(one_split_tree()))
        assert tf.pattern.tolist() == [[-1], [1]]

    def test_nonzeros_equal_path_depth(self, fuzz_corpus):
        from arbo import tree_depth

        for tree, ct in fuzz_corpus[:20]:
            tf = ternary_form(ct)
            for i, nid in enumerate(tree.leaf_ids):
                depth = 1
                # walk down to count the leaf's node levels
                cur = tree.root
                while cur != nid:
                    node = tree.nodes[cur]
                    lo, hi = _span(tree, node.left)
                    cur = node.left if lo <= i <= hi else node.right
                    depth += 1
                assert tf.norms[i] == depth - 1

    def test_normalized_rows_have_unit_l1(self, fig1_compiled):
        tf = ternary_form(fig1_compiled)
        assert np.allclose(np.abs(tf.normalized).sum(axis=1), 1.0)

    def test_augmented_selection_stacks_thresholds(self, fig1_compiled):
        tf = ternary_form(fig1_compiled)
        aug = tf.augmented_selection
        assert aug.shape == (5, 5)
        x_aug = np.append([2.0, 1.0, 2.0, 2.0], -1.0)
        assert np.array_equal(aug @ x_aug, [1.0, -3.0, -1.0, -1.0, -3.0])


def _span(tree, nid):
    node = tree.nodes[nid]
    if node.kind == "leaf":
        p = tree.leaf_position(nid)
        return p, p
    lo, _ = _span(tree, node.left)
    _, hi = _span(tree, node.right)
    return lo, hi


class TestSumProduct:
    def test_one_split_terms(self):
        spf = sum_product_form(one_split_tree(3.0, 7.0))
        assert len(spf.terms) == 2
        a, b = spf.terms
        assert a.coefficient == 3.0 and a.factors == ((-1, 0, 0.0),)
        assert b.coefficient == 7.0 and b.factors == ((+1, 0, 0.0),)

    def test_factor_counts_match_path_tests(self, fig1_numeric):
        spf = sum_product_form(fig1_numeric)
        # one factor per internal test on the leaf's path
        assert [len(t.factors) for t in spf.terms] == [3, 4, 4, 2, 2, 2]

    def test_coefficients_are_leaf_values(self, fig1_numeric):
        spf = sum_product_form(fig1_numeric)
        assert [t.coefficient for t in spf.terms] == [10.0, 20.0, 30.0, 40.0, 50.0, 60.0]

    def test_categorical_tests_unsupported(self):
        schema = FeatureSchema(("c",), ("categorical",), {0: ("a", "b")})
        tree = build_tree(
            (CategoricalTest(0, frozenset({0})), ConstantLeaf(1.0), ConstantLeaf(2.0)), schema
        )
        with pytest.raises(UnsupportedFormError):
            sum_product_form(tree)

    def test_label_leaves_unsupported(self, fig1):
        with pytest.raises(UnsupportedFormError):
            sum_product_form(fig1)


class TestCharacteristicVectors:
    def test_v5_golden(self, fig1_compiled):
        assert characteristic_vector(fig1_compiled, 4).tolist() == [1, 0, 0, 0, 0]

    def test_v6_golden(self, fig1_compiled):
        assert characteristic_vector(fig1_compiled, 5).tolist() == [1, 0, 1, 0, 0]

    def test_v3_brute_force_value(self, fig1_compiled):
        # minimal support with first-argmax 2 is the two failed path tests
        assert characteristic_vector(fig1_compiled, 2).tolist() == [0, 0, 0, 1, 1]

    def test_leftmost_leaf_is_empty_vector(self, fig1_compiled):
        assert characteristic_vector(fig1_compiled, 0).sum() == 0

    def test_out_of_range(self, fig1_compiled):
        with pytest.raises(InputError):
            characteristic_vector(fig1_compiled, 6)

    def test_matches_brute_force_minimal_support(self, fuzz_corpus):
        small = [(t, c) for t, c in fuzz_corpus if c.n_internal <= 10][:8]
        assert small, "corpus must contain small trees"
        for _, ct in small:
            B = ct.masks.astype(np.int64)
            for i in range(ct.n_leaves):
                got = characteristic_vector(ct, i)
                matches = _brute_force_min_support(B, i)
                assert len(matches) == 1, f"leaf {i}: minimal-support vector not unique"
                assert matches[0] == tuple(got)


def _brute_force_min_support(B, leaf):
    n = B.shape[1]
    for support in range(n + 1):
        found = []
        for cols in itertools.combinations(range(n), support):
            u = np.zeros(n, dtype=np.int64)
            u[list(cols)] = 1
            if first_argmax(B @ u) == leaf:
                found.append(tuple(u))
        if found:
            return found
    return []


class TestLeftReachable:
    def test_root_column(self):
        assert left_reachable_set(FIG1_B, 0) == {0, 1, 2, 3}

    def test_deep_column(self):
        assert left_reachable_set(FIG1_B, 4) == {1}

    def test_one_split(self):
        assert left_reachable_set(np.array([[0], [1]]), 0) == {0}

    def test_out_of_range(self):
        with pytest.raises(InputError):
            left_reachable_set(FIG1_B, 5)

    def test_zero_count_law(self, fuzz_corpus):
        for tree, ct in fuzz_corpus[:20]:
            spans = {}
            _span_fill(tree, tree.root, spans)
            for j, nid in enumerate(ct.internal_order):
                lo, hi = spans[tree.nodes[nid].left]
                assert left_reachable_set(ct.masks, j) == set(range(lo, hi + 1))


def _span_fill(tree, nid, spans):
    node = tree.nodes[nid]
    if node.kind == "leaf":
        p = tree.leaf_position(nid)
        spans[nid] = (p, p)
    else:
        _span_fill(tree, node.left, spans)
        _span_fill(tree, node.right, spans)
        spans[nid] = (spans[node.left][0], spans[node.right][1])
    return spans


class TestComplement:
    def test_golden(self):
        assert complement_bits([0, 0, 0, 0, 1, 1]).tolist() == [1, 1, 1, 1, 0, 0]

    def test_all_zeros(self):
        assert complement_bits(np.zeros(4, dtype=int)).tolist() == [1, 1, 1, 1]

    def test_involution(self):
        b = np.array([0, 1, 1, 0, 1])
        assert np.array_equal(complement_bits(complement_bits(b)), b)


class TestEquivalence:
    def test_orderings_are_equivalent(self, fig1, fig1_compiled):
        pre = compile_tree(fig1, "preorder")
        eq = tuples_equivalent(fig1_compiled, pre)
        assert eq.ok

    def test_dimension_mismatch_reports_reason(self, fig1_compiled):
        other = compile_tree(one_split_tree())
        eq = tuples_equivalent(fig1_compiled, other)
        assert not eq.ok
        assert "dimension" in eq.reason

    def test_reflexive(self, fig1_compiled):
        assert tuples_equivalent(fig1_compiled, fig1_compiled).ok

    def test_different_threshold_not_equivalent(self):
        a = compile_tree(one_split_tree(threshold=0.0))
        b = compile_tree(one_split_tree(threshold=1.0))
        assert not tuples_equivalent(a, b).ok

    def test_corpus_orderings_equivalent(self, fuzz_corpus):
        for tree, ct in fuzz_corpus[:20]:
            assert tuples_equivalent(ct, compile_tree(tree, "preorder")).ok


class TestRebuild:
    def test_recompile_is_identity(self, fuzz_corpus):
        for _, ct in fuzz_corpus[:10]:
            again = compile_tree(rebuild_tree(ct))
            assert again == ct

    def test_rebuilt_tree_predicts_identically(self, fig1_compiled, fig1):
        rebuilt = rebuild_tree(fig1_compiled)
        for x in random_inputs(9, fig1.schema, 20):
            assert (
                evaluate_classic(rebuilt, x).leaf_index
                == evaluate_classic(fig1, x).leaf_index
            )
