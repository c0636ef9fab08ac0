"""Expression tree construction, genetic operators, evaluation, parsing."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esparse.expr import (
    ExpressionTree,
    NonFiniteColumn,
    PrimitiveSet,
    binary,
    canonical_string,
    constant,
    crossover,
    default_primitives,
    eval_columns,
    mutate,
    parse_expression,
    random_tree,
    subtree_at,
    swap_subtrees,
    unary,
    variable,
)

PRIMS = default_primitives()
PRIMS_DIV = default_primitives(divide=True)


def random_trees(max_depth=5, primitives=PRIMS):
    """Hypothesis strategy: a tree grown from a seeded generator."""
    return st.integers(0, 2**32 - 1).map(
        lambda s: random_tree(primitives, max_depth, np.random.default_rng(s))
    )


class TestConstruction:
    def test_variable_key(self):
        assert variable(2).key == "X2"
        assert variable(0).size == 1
        assert variable(0).depth == 1

    def test_constant_requires_finite(self):
        with pytest.raises(ValueError):
            constant(float("nan"))
        with pytest.raises(ValueError):
            constant(float("inf"))

    def test_variable_requires_index(self):
        with pytest.raises(ValueError):
            ExpressionTree("var", -1)

    def test_unary_arity(self):
        with pytest.raises(ValueError):
            ExpressionTree("abs", None, (variable(0), variable(1)))

    def test_binary_arity(self):
        with pytest.raises(ValueError):
            ExpressionTree("+", None, (variable(0),))

    def test_commutative_key_orders_operands(self):
        a = binary("+", variable(1), variable(0))
        b = binary("+", variable(0), variable(1))
        assert a.key == b.key == "(X0 + X1)"

    def test_noncommutative_key_keeps_order(self):
        a = binary("-", variable(1), variable(0))
        b = binary("-", variable(0), variable(1))
        assert a.key != b.key

    def test_size_and_depth(self):
        t = binary("*", unary("abs", variable(0)), variable(1))
        assert t.size == 4
        assert t.depth == 3

    @given(random_trees())
    @settings(max_examples=50, deadline=None)
    def test_commutative_swap_preserves_key_and_column(self, tree):
        """Swapping operands of every commutative node leaves the key (and
        therefore the evaluated column) unchanged."""

        def flipped(t):
            if not t.children:
                return t
            kids = tuple(flipped(c) for c in t.children)
            if t.kind in ("+", "*"):
                kids = kids[::-1]
            return ExpressionTree(t.kind, t.value, kids)

        assert flipped(tree).key == tree.key


class TestRandomTree:
    @given(st.integers(0, 2**32 - 1), st.integers(1, 6))
    @settings(max_examples=60, deadline=None)
    def test_depth_budget_respected(self, seed, max_depth):
        tree = random_tree(PRIMS, max_depth, np.random.default_rng(seed))
        assert 1 <= tree.depth <= max_depth

    def test_depth_one_is_leaf(self, rng):
        for _ in range(20):
            tree = random_tree(PRIMS, 1, rng)
            assert tree.size == 1

    def test_same_seed_same_tree(self):
        a = random_tree(PRIMS, 5, np.random.default_rng(7))
        b = random_tree(PRIMS, 5, np.random.default_rng(7))
        assert a.key == b.key

    def test_only_declared_operators_appear(self, rng):
        no_div = default_primitives(divide=False)

        def ops(t):
            yield t.kind
            for c in t.children:
                yield from ops(c)

        for _ in range(50):
            tree = random_tree(no_div, 6, rng)
            assert "/" not in set(ops(tree))

    def test_invalid_depth_rejected(self, rng):
        with pytest.raises(ValueError):
            random_tree(PRIMS, 0, rng)


class TestPrimitiveSet:
    def test_unknown_operator_rejected(self):
        with pytest.raises(ValueError):
            PrimitiveSet(unary=("tanh",))

    def test_bad_constant_range_rejected(self):
        with pytest.raises(ValueError):
            PrimitiveSet(const_low=0.0)

    def test_default_sets(self):
        assert "/" not in default_primitives().binary
        assert "/" in default_primitives(divide=True).binary


class TestGeneticOperators:
    @given(random_trees(), random_trees(), st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_crossover_respects_depth(self, a, b, seed):
        rng = np.random.default_rng(seed)
        for child in crossover(a, b, PRIMS, 6, rng):
            assert child.depth <= 6

    @given(random_trees(), st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_mutate_respects_depth(self, a, seed):
        child = mutate(a, PRIMS, 6, np.random.default_rng(seed))
        assert child.depth <= 6

    def test_swap_subtrees_exchanges_material(self):
        a = binary("+", variable(0), variable(1))
        b = unary("abs", variable(2))
        new_a, new_b = swap_subtrees(a, b, 1, 1)
        assert new_a.key == "(X1 + X2)"
        assert new_b.key == "abs(X0)"

    def test_swap_at_root_swaps_whole_trees(self):
        a, b = variable(0), variable(1)
        new_a, new_b = swap_subtrees(a, b, 0, 0)
        assert (new_a.key, new_b.key) == ("X1", "X0")

    def test_subtree_at_preorder(self):
        t = binary("*", unary("abs", variable(0)), variable(1))
        assert subtree_at(t, 0) is t
        assert subtree_at(t, 1).key == "abs(X0)"
        assert subtree_at(t, 2).key == "X0"
        assert subtree_at(t, 3).key == "X1"
        with pytest.raises(IndexError):
            subtree_at(t, 4)

    def test_parents_unchanged(self, rng):
        a = random_tree(PRIMS, 5, np.random.default_rng(3))
        b = random_tree(PRIMS, 5, np.random.default_rng(4))
        ka, kb = a.key, b.key
        crossover(a, b, PRIMS, 6, rng)
        mutate(a, PRIMS, 6, rng)
        assert (a.key, b.key) == (ka, kb)


class TestEvaluation:
    def test_matches_manual_evaluation(self):
        X = np.array([[1.0, -2.0, 0.5], [0.0, 3.0, -1.0], [-1.5, 0.5, 2.0]])
        tree = binary("*", binary("+", variable(0), variable(2)),
                      unary("sgn", variable(1)))
        expected = (X[:, 0] + X[:, 2]) * np.sign(X[:, 1])
        np.testing.assert_allclose(eval_columns(tree, X), expected)

    def test_constant_broadcasts(self):
        X = np.zeros((4, 3))
        np.testing.assert_allclose(eval_columns(constant(2.5), X), 2.5)

    def test_division_by_zero_raises(self):
        X = np.array([[1.0, 0.0, 0.0], [2.0, 1.0, 0.0]])
        tree = binary("/", variable(0), variable(1))
        with pytest.raises(NonFiniteColumn):
            eval_columns(tree, X)

    def test_check_false_returns_nonfinite(self):
        X = np.array([[1.0, 0.0, 0.0]])
        tree = binary("/", variable(0), variable(1))
        out = eval_columns(tree, X, check=False)
        assert not np.isfinite(out).all()

    def test_requires_matrix(self):
        with pytest.raises(ValueError):
            eval_columns(variable(0), np.zeros(5))

    @given(random_trees(primitives=PRIMS_DIV), st.integers(0, 2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_equal_keys_evaluate_equal(self, tree, seed):
        """The canonical string determines the function: re-parsing the key
        reproduces the column bit for bit."""
        X = np.random.default_rng(seed).normal(size=(40, 3))
        reparsed = parse_expression(tree.key)
        a = eval_columns(tree, X, check=False)
        b = eval_columns(reparsed, X, check=False)
        np.testing.assert_array_equal(
            np.where(np.isfinite(a), a, 0.0), np.where(np.isfinite(b), b, 0.0)
        )


class TestParse:
    @given(random_trees(primitives=PRIMS_DIV))
    @settings(max_examples=60, deadline=None)
    def test_round_trip(self, tree):
        assert parse_expression(tree.key).key == tree.key

    def test_canonical_string_is_key(self):
        t = binary("+", variable(0), constant(1.5))
        assert canonical_string(t) == t.key

    def test_rejects_trailing_tokens(self):
        with pytest.raises(ValueError):
            parse_expression("X0 X1")

    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            parse_expression("qqq")

    def test_scientific_notation_constant(self):
        t = parse_expression("(X0 * -1.5e3)")
        assert t.children[1].value == -1500.0
