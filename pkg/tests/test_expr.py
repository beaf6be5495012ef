import math
import random
import statistics

import pytest
from hypothesis import given, settings, strategies as st

from dungeonpersonas.expr import (
    MAX_DEPTH, VARIABLES, BinOp, Const, ExprParseError, Var, compile_tree, crossover, depth,
    evaluate, format_tree, mutate, parse_tree, random_tree, simplify, size, subtrees,
)
from dungeonpersonas.personas import BUILTIN_POLICIES

seeds = st.integers(0, 2**40)
finite = st.floats(-1e6, 1e6, allow_nan=False)
bindings_st = st.fixed_dictionaries({v: finite for v in VARIABLES})


def zero_bindings():
    return {v: 0.0 for v in VARIABLES}


def check_shape(tree):
    assert depth(tree) <= MAX_DEPTH
    assert size(tree) <= 2 ** MAX_DEPTH
    for _, sub in subtrees(tree):
        if isinstance(sub, BinOp):
            assert sub.left is not None and sub.right is not None
        elif isinstance(sub, Var):
            assert sub.name in VARIABLES
        else:
            assert isinstance(sub, Const)


def test_forced_depth_two_shape():
    for seed in range(50):
        t = random_tree(seed, 2, 2)
        assert isinstance(t, BinOp) and depth(t) == 2
        assert not isinstance(t.left, BinOp) and not isinstance(t.right, BinOp)


def test_initial_depths_cover_range():
    rng = random.Random(7)
    depths = {depth(random_tree(rng)) for _ in range(1000)}
    assert depths == {2, 3, 4, 5}


def test_random_tree_seeded():
    assert random_tree(42) == random_tree(42)
    assert format_tree(random_tree(42)) == format_tree(random_tree(42))


def test_random_tree_rejects_bad_bounds():
    with pytest.raises(ValueError):
        random_tree(0, 1, 3)
    with pytest.raises(ValueError):
        random_tree(0, 4, 3)
    with pytest.raises(ValueError):
        random_tree(0, 2, 9)


def test_constants_in_unit_interval():
    rng = random.Random(3)
    for _ in range(300):
        for _, sub in subtrees(random_tree(rng)):
            if isinstance(sub, Const):
                assert -1.0 <= sub.value <= 1.0


def test_evaluate_examples():
    b = zero_bindings()
    b["PE"] = 0.5
    assert evaluate(parse_tree("(PE + 1)"), b) == 1.5
    b.update(MS=0.3, ST=0.0)
    assert evaluate(parse_tree("(MS / ST)"), b) == 0.0
    b.update(ST=1e-10)
    assert evaluate(parse_tree("(MS / ST)"), b) == 0.0


def test_runner_policy_hand_value():
    b = zero_bindings()
    b.update(ST=10, PE=0.5, R=0.4, HL=0.3)
    expected = 6.235 * 10 * 0.25 * 1.5 + 0.4 * 0.7
    assert expected == pytest.approx(23.66125, abs=1e-12)
    assert evaluate(parse_tree(BUILTIN_POLICIES["runner-evolved"]), b) == pytest.approx(expected, abs=1e-9)


def test_parse_error_offset():
    with pytest.raises(ExprParseError) as err:
        parse_tree("(PE + )")
    assert err.value.offset == 6
    for bad in ("", "(PE + 1", "PE + 1", "(PE % 1)", "(FOO + 1)", "(PE + 1))"):
        with pytest.raises(ExprParseError):
            parse_tree(bad)


def test_builtins_round_trip():
    for text in BUILTIN_POLICIES.values():
        t = parse_tree(text)
        assert format_tree(t) == text
        check_shape(t)


def test_rbar_alias():
    assert parse_tree("(R̄ + Rbar)") == parse_tree("(R + R)")


def test_root_swap_crossover():
    a, b = parse_tree("(PE + 1.0)"), parse_tree("(ST * MS)")

    class RootRng(random.Random):
        def choice(self, seq):
            return seq[0]

    assert crossover(a, b, RootRng()) == (b, a)


def test_depth_two_crossover_bound():
    rng = random.Random(11)
    for _ in range(200):
        c, d = crossover(random_tree(rng, 2, 2), random_tree(rng, 2, 2), rng)
        assert depth(c) <= 3 and depth(d) <= 3


def test_thousand_crossovers_respect_cap():
    rng = random.Random(5)
    pop = [random_tree(rng) for _ in range(40)]
    for _ in range(1000):
        a, b = rng.sample(range(len(pop)), 2)
        pop[a], pop[b] = crossover(pop[a], pop[b], rng)
        assert depth(pop[a]) <= MAX_DEPTH and depth(pop[b]) <= MAX_DEPTH


def test_crossover_gives_up_with_parents():
    deep = parse_tree("(((((((PE + 1.0) + 1.0) + 1.0) + 1.0) + 1.0) + 1.0) + 1.0)")
    assert depth(deep) == MAX_DEPTH

    class DeepRng(random.Random):
        # alternately pick the deepest node of the first parent and the root of the
        # second: every graft would reach depth 15
        calls = 0

        def choice(self, seq):
            self.calls += 1
            return max(seq, key=len) if self.calls % 2 else seq[0]

    assert crossover(deep, deep, DeepRng()) == (deep, deep)


def test_mutation_is_fresh_tree():
    rng = random.Random(9)
    for _ in range(200):
        m = mutate(parse_tree("(PE + 1.0)"), rng)
        assert 2 <= depth(m) <= 5
    assert mutate(None, 4) == mutate(parse_tree("(ST * ST)"), 4)


def test_mutation_distribution_matches_generator():
    r1, r2 = random.Random(1), random.Random(2)
    a = [random_tree(r1) for _ in range(10000)]
    b = [mutate(None, r2) for _ in range(10000)]
    for stat in (depth, size):
        xa, xb = [stat(t) for t in a], [stat(t) for t in b]
        pooled = math.sqrt((statistics.variance(xa) + statistics.variance(xb)) / 10000)
        assert abs(statistics.mean(xa) - statistics.mean(xb)) < 4 * pooled


def test_simplify_folds_constants():
    t = parse_tree("((2.0 * 3.0) + PE)")
    assert simplify(t) == parse_tree("(6.0 + PE)")


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_format_parse_round_trip(seed):
    t = random_tree(seed)
    assert parse_tree(format_tree(t)) == t


@settings(max_examples=200, deadline=None)
@given(seeds, bindings_st)
def test_evaluate_total_and_matches_compiled(seed, b):
    t = random_tree(seed)
    v = evaluate(t, b)
    assert math.isfinite(v)
    metrics = [b[k] for k in VARIABLES if k != "R"]
    assert compile_tree(t)(metrics, b["R"]) == v


@settings(max_examples=100, deadline=None)
@given(seeds, st.lists(st.booleans(), min_size=1, max_size=30))
def test_variation_sequences_keep_invariants(seed, ops):
    rng = random.Random(seed)
    a, b = random_tree(rng), random_tree(rng)
    for is_cross in ops:
        if is_cross:
            a, b = crossover(a, b, rng)
        else:
            a = mutate(a, rng)
        check_shape(a)
        check_shape(b)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_variation_seeded(seed):
    a, b = random_tree(seed), random_tree(seed + 1)
    assert crossover(a, b, seed) == crossover(a, b, seed)
    assert mutate(a, seed) == mutate(a, seed)
