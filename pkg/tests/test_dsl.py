import numpy as np
import pytest

from evocortex import dsl
from evocortex.dsl import Dimension, Node


def _random_env(rng, names=("r", "g", "b", "k", "v"), shape=(8, 8)):
    return {name: rng.random(shape) for name in names}


FULL_ENV_NAMES = ("r", "g", "b", "c", "m", "y", "k", "h", "s", "v")


class TestPrimitiveTable:
    def test_color_has_no_spatial(self):
        table = dsl.primitive_table(Dimension.COLOR)
        assert all(p.kind != "spatial" for p in table)

    def test_orientation_has_gradients(self):
        names = {p.name for p in dsl.primitive_table(Dimension.ORIENTATION)}
        assert "dx" in names and "dy" in names

    def test_shape_terminals(self):
        terms = {p.name for p in dsl.primitive_table(Dimension.SHAPE)
                 if p.kind == "terminal"}
        assert terms == {"r", "g", "b", "k", "v"}

    def test_color_terminals_are_all_ten(self):
        terms = {p.name for p in dsl.primitive_table(Dimension.COLOR)
                 if p.kind == "terminal"}
        assert terms == set(FULL_ENV_NAMES)

    def test_merge_terminal_is_cm(self):
        terms = [p.name for p in dsl.primitive_table(Dimension.MERGE)
                 if p.kind == "terminal"]
        assert terms == ["cm"]

    def test_terminal_iff_arity_zero(self):
        for dim in Dimension:
            for p in dsl.primitive_table(dim):
                assert (p.arity == 0) == (p.kind == "terminal")


class TestRandomTree:
    def test_depth_cap_two(self):
        rng = np.random.default_rng(0)
        saw_full = False
        for _ in range(50):
            t = dsl.random_tree(Dimension.SHAPE, 2, rng)
            assert dsl.depth(t) <= 2
            if t.children and all(not c.children for c in t.children):
                saw_full = True
        assert saw_full  # full method at depth 2: function over terminals

    def test_same_seed_identical(self):
        a = dsl.random_tree(Dimension.COLOR, 6, np.random.default_rng(42))
        b = dsl.random_tree(Dimension.COLOR, 6, np.random.default_rng(42))
        assert a == b
        assert dsl.serialize(a) == dsl.serialize(b)

    def test_fuzz_depth_and_arity(self):
        rng = np.random.default_rng(1)
        for _ in range(2000):
            dim = list(Dimension)[int(rng.integers(5))]
            t = dsl.random_tree(dim, 6, rng)
            assert dsl.validate_tree(t, dim)
            assert dsl.depth(t) <= 6

    def test_depth_cap_validation(self):
        with pytest.raises(ValueError):
            dsl.random_tree(Dimension.COLOR, 1, np.random.default_rng(0))
        with pytest.raises(ValueError):
            dsl.random_tree(Dimension.COLOR, 9, np.random.default_rng(0))


class TestEvaluate:
    def test_add_pre_rescale(self):
        env = {"r": np.array([[0.2, 0.9], [0.0, 0.4]]),
               "g": np.array([[0.3, 0.1], [0.5, 0.2]])}
        out = dsl.evaluate_tree(dsl.parse("(add r g)"), env, rescale=False)
        assert abs(out[0, 0] - 0.5) < 1e-12

    def test_complement_involution(self):
        rng = np.random.default_rng(2)
        v = rng.random((6, 6))
        out = dsl.evaluate_tree(dsl.parse("(complement (complement v))"),
                                {"v": v}, rescale=False)
        assert np.abs(out - v).max() < 1e-9

    def test_protected_division_by_zero_map(self):
        env = {"r": np.random.default_rng(3).random((4, 4)),
               "g": np.zeros((4, 4))}
        out = dsl.evaluate_tree(dsl.parse("(div_p r g)"), env, rescale=False)
        assert np.all(out == 1.0)

    def test_rescaled_output_range(self):
        rng = np.random.default_rng(4)
        env = _random_env(rng)
        out = dsl.evaluate_tree(dsl.parse("(sub (mul r g) v)"), env)
        assert out.min() == 0.0 and out.max() == 1.0

    def test_constant_output_rescales_to_zero(self):
        env = {"r": np.full((4, 4), 0.5), "g": np.full((4, 4), 0.5)}
        out = dsl.evaluate_tree(dsl.parse("(add r g)"), env)
        assert np.all(out == 0.0)

    def test_unbound_terminal_named(self):
        with pytest.raises(dsl.EvalError, match="'s'"):
            dsl.evaluate_tree(dsl.parse("(add r s)"), {"r": np.zeros((2, 2))})

    def test_batched_matches_per_image(self):
        rng = np.random.default_rng(5)
        batch = {n: rng.random((4, 8, 8)) for n in FULL_ENV_NAMES}
        tree = dsl.random_tree(Dimension.COLOR, 5, np.random.default_rng(9))
        got = dsl.evaluate_tree(tree, batch)
        for i in range(4):
            single = dsl.evaluate_tree(tree, {n: batch[n][i] for n in batch})
            assert np.array_equal(got[i], single)

    def test_fuzz_finite_and_bounded(self):
        rng = np.random.default_rng(6)
        for trial in range(1000):
            dim = list(Dimension)[int(rng.integers(4))]
            tree = dsl.random_tree(dim, 6, rng)
            env = _random_env(rng, FULL_ENV_NAMES, (6, 6))
            out = dsl.evaluate_tree(tree, env)
            assert np.all(np.isfinite(out))
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_adversarial_inputs_stay_finite(self):
        zero = np.zeros((5, 5))
        const = np.full((5, 5), 1.0)
        envs = [{n: zero for n in FULL_ENV_NAMES},
                {n: const for n in FULL_ENV_NAMES}]
        trees = ["(div_p r g)", "(log_p (div_p v k))", "(exp_s (exp_s v))",
                 "(sqrt_p (sub r v))", "(mul (exp_s v) (exp_s v))",
                 "(div_p (exp_s v) (sub r r))"]
        for env in envs:
            for text in trees:
                out = dsl.evaluate_tree(dsl.parse(text), env, rescale=False)
                assert np.all(np.isfinite(out)), text

    def test_deep_multiplication_chain_finite(self):
        # worst-case growth: repeated squaring of saturated exponentials
        text = "(mul (mul (mul (exp_s v) (exp_s v)) (mul (exp_s v) (exp_s v)))" \
               " (mul (mul (exp_s v) (exp_s v)) (mul (exp_s v) (exp_s v))))"
        out = dsl.evaluate_tree(dsl.parse(text), {"v": np.full((3, 3), 1.0)},
                                rescale=False)
        assert np.all(np.isfinite(out))


class TestSerialization:
    def test_simple_tree(self):
        t = dsl.parse("(add r g)")
        assert t.name == "add"
        assert [c.name for c in t.children] == ["r", "g"]
        assert dsl.node_count(t) == 3

    def test_canonical_fixed_point(self):
        text = "( add   ( gauss_1  r )   v )"
        once = dsl.serialize(dsl.parse(text))
        assert once == "(add (gauss_1 r) v)"
        assert dsl.serialize(dsl.parse(once)) == once

    def test_round_trip_preserves_evaluation(self):
        rng = np.random.default_rng(7)
        env = _random_env(rng, FULL_ENV_NAMES)
        for _ in range(50):
            t = dsl.random_tree(Dimension.COLOR, 6, rng)
            rt = dsl.parse(dsl.serialize(t))
            assert rt == t
            assert np.array_equal(dsl.evaluate_tree(t, env),
                                  dsl.evaluate_tree(rt, env))

    def test_arity_mismatch(self):
        with pytest.raises(dsl.ParseError, match="takes 2"):
            dsl.parse("(add r)")

    def test_unbalanced_parens(self):
        with pytest.raises(dsl.ParseError, match="unbalanced"):
            dsl.parse("(add r g")
        with pytest.raises(dsl.ParseError, match="unbalanced"):
            dsl.parse(")")

    def test_unknown_symbol_with_position(self):
        with pytest.raises(dsl.ParseError, match="position"):
            dsl.parse("(add r qq)")
        with pytest.raises(dsl.ParseError):
            dsl.parse("(frob r g)")

    def test_bare_function_rejected(self):
        with pytest.raises(dsl.ParseError):
            dsl.parse("add")

    def test_trailing_garbage(self):
        with pytest.raises(dsl.ParseError, match="trailing"):
            dsl.parse("(add r g) v")


class TestTreeSurgery:
    def test_paths_and_subtrees(self):
        t = dsl.parse("(add (gauss_1 r) v)")
        paths = dsl.node_paths(t)
        assert () in paths and (0,) in paths and (0, 0) in paths and (1,) in paths
        assert dsl.subtree_at(t, (0, 0)).name == "r"

    def test_replace_at_rebuilds(self):
        t = dsl.parse("(add (gauss_1 r) v)")
        t2 = dsl.replace_at(t, (0, 0), Node("g"))
        assert dsl.serialize(t2) == "(add (gauss_1 g) v)"
        assert dsl.serialize(t) == "(add (gauss_1 r) v)"  # original untouched

    def test_depth(self):
        assert dsl.depth(Node("r")) == 1
        assert dsl.depth(dsl.parse("(add (gauss_1 r) v)")) == 3
