"""Acceptance criteria. Each test prints one ``criterion N: PASS|FAIL ...`` line.

The heavy criteria (6, 7, 8) run the full-size experiments and take tens of minutes
on a single core. ``pytest -k acceptance -s`` runs only this file with the lines shown.
"""
import json
import os
import time

import pytest

from dungeonpersonas.evolution import EvolutionConfig, evolve
from dungeonpersonas.maps import bundled_map, structural_metrics
from dungeonpersonas.mcts import UCB1, ExpressionPolicy, Search, SearchBudget, plan
from dungeonpersonas.personas import (
    MONSTER_KILLER, PERSONAS, RUNNER, TREASURE_COLLECTOR, builtin_policy,
)
from dungeonpersonas.playtest import batch
from dungeonpersonas.stats import welch_t

from golden_scenarios import SCENARIOS
from test_maps import FIXTURE_MAPS, brute_force_metrics
from test_mcts import UCB_CASES, conservation_errors, ucb1, ucb_oracle, ucb_case_errors
from test_personas import CLOSED_FORMS, check_builtin_against_closed_form
from test_stats import pearson_errors, welch_errors

JOBS = os.cpu_count() or 1


@pytest.fixture
def say(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'} {detail}")
    return emit


def test_criterion_01_golden_suite(say):
    t0 = time.perf_counter()
    failures = []
    for name, fn in SCENARIOS.items():
        try:
            fn()
        except AssertionError as exc:
            failures.append(f"{name}: {exc}")
    elapsed = time.perf_counter() - t0
    ok = len(SCENARIOS) >= 25 and not failures and elapsed < 1.0
    say(1, ok, f"{len(SCENARIOS)} scenarios, {len(failures)} failed, {elapsed:.3f}s (limit 1s)")
    assert ok, failures


def test_criterion_02_ucb1_oracle(say):
    errors = ucb_case_errors()
    example = ucb1(3, 4, 16)
    example_err = abs(example - float(ucb_oracle(3, 4, 16, UCB_CASES[0][3])))
    ok = len(errors) == 20 and max(errors) <= 1e-12 and example_err <= 1e-12
    say(2, ok, f"{len(errors)} cases, max error {max(errors):.2e}; ucb1(3, 4, 16) = {example:.10f}")
    assert ok


def test_criterion_03_policy_closed_forms(say):
    from dungeonpersonas.expr import VARIABLES, evaluate

    worst = {name: check_builtin_against_closed_form(name, points=100) for name in CLOSED_FORMS}
    tc_zero = evaluate(builtin_policy("tc-evolved"), {v: 0.0 for v in VARIABLES})
    ok = len(worst) == 4 and max(worst.values()) <= 1e-9 and tc_zero == 0.19
    detail = ", ".join(f"{k} {v:.1e}" for k, v in sorted(worst.items()))
    say(3, ok, f"max relative error per policy: {detail}; TC at zero = {tc_zero!r}")
    assert ok


def _plan_bytes(seed):
    tr = plan(bundled_map("map09"), MONSTER_KILLER, None, SearchBudget(seconds=None, nodes=2000), seed)
    data = tr.to_json()
    data.pop("elapsed")
    return json.dumps(data, sort_keys=True).encode()


def _evolve_bytes(seed):
    cfg = EvolutionConfig(population=14, islands=2, generations=2, maps=["corridor", "nook"],
                          budget_nodes=300, seed=seed)
    res = evolve(cfg, RUNNER)
    return json.dumps([[h.generation, h.best, h.mean, h.best_genome] for h in res.history]
                      + [res.best.text]).encode()


def test_criterion_04_determinism(say):
    t0 = time.perf_counter()
    plan_same = [_plan_bytes(s) == _plan_bytes(s) for s in range(10)]
    evolve_same = [_evolve_bytes(s) == _evolve_bytes(s) for s in range(10)]
    distinct = len({_plan_bytes(s) for s in (0, 1)}) == 2
    elapsed = time.perf_counter() - t0
    ok = all(plan_same) and all(evolve_same) and distinct and elapsed < 120
    say(4, ok, f"plan {sum(plan_same)}/10 and evolve {sum(evolve_same)}/10 identical, "
               f"{elapsed:.1f}s (limit 120s)")
    assert ok


def test_criterion_05_conservation(say):
    results = []
    for label, pol in (("ucb1", UCB1()), ("mk-evolved", ExpressionPolicy(builtin_policy("mk-evolved")))):
        search = Search(bundled_map("map09"), MONSTER_KILLER, pol, SearchBudget(seconds=None, nodes=500),
                        seed=3, record=True).run()
        root_ok, counts_ok, worst = conservation_errors(search)
        results.append((label, search.simulations, root_ok and counts_ok, worst))
    ok = all(sims == 500 and good and worst <= 1e-9 for _, sims, good, worst in results)
    say(5, ok, "; ".join(f"{lab}: {sims} simulations, counts {'ok' if good else 'BAD'}, "
                         f"max |W error| {w:.1e}" for lab, sims, good, w in results))
    assert ok


C6_MAPS = ("arena", "detour", "hall")
C6_TRIALS = 50
C6_RUNTIME_TARGET = 600.0


@pytest.fixture(scope="module")
def c6_results():
    t0 = time.perf_counter()
    recs = batch(list(C6_MAPS), list(PERSONAS.values()), ["builtin", "ucb1"], trials=C6_TRIALS,
                 budget=SearchBudget(seconds=None, nodes=50000), seed=2024, jobs=JOBS)
    wins = {}
    for r in recs:
        kind = "ucb1" if r.policy == "ucb1" else "evolved"
        wins.setdefault((r.map, r.persona, kind), 0)
        wins[(r.map, r.persona, kind)] += int(r.win)
    return wins, time.perf_counter() - t0


def test_criterion_06_evolved_beats_ucb1(say, c6_results):
    wins, elapsed = c6_results
    lines, ok = [], True
    for persona in PERSONAS:
        evo = [wins[(m, persona, "evolved")] for m in C6_MAPS]
        base = [wins[(m, persona, "ucb1")] for m in C6_MAPS]
        good = all(e >= b for e, b in zip(evo, base)) and any(e > b for e, b in zip(evo, base))
        ok &= good
        lines.append(f"{persona} evolved {'/'.join(map(str, evo))} vs ucb1 {'/'.join(map(str, base))}")
    say(6, ok, f"wins of {C6_TRIALS} on {', '.join(C6_MAPS)}: " + "; ".join(lines))
    assert ok


def test_criterion_06_runtime_target(say, c6_results):
    _, elapsed = c6_results
    ok = elapsed < C6_RUNTIME_TARGET
    say(6, ok, f"runtime {elapsed:.0f}s with {JOBS} worker(s) (target {C6_RUNTIME_TARGET:.0f}s)")
    assert ok


def _ratios(records, persona, attr):
    return [getattr(r, attr) for r in records if r.persona == persona.name]


def test_criterion_07_persona_differentiation(say):
    budget = SearchBudget(seconds=None, nodes=50000)
    lair = batch(["lair"], [RUNNER, MONSTER_KILLER], ["builtin"], trials=50, budget=budget,
                 seed=7, jobs=JOBS)
    vault = batch(["vault"], [RUNNER, MONSTER_KILLER, TREASURE_COLLECTOR], ["builtin"], trials=50,
                  budget=budget, seed=7, jobs=JOBS)
    checks = []
    for label, recs, hi, lo, attr in (
            ("lair MK>R monsters", lair, MONSTER_KILLER, RUNNER, "monsters_ratio"),
            ("vault TC>R treasures", vault, TREASURE_COLLECTOR, RUNNER, "treasures_ratio"),
            ("vault TC>MK treasures", vault, TREASURE_COLLECTOR, MONSTER_KILLER, "treasures_ratio")):
        a, b = _ratios(recs, hi, attr), _ratios(recs, lo, attr)
        res = welch_t(a, b)
        good = len(a) == len(b) == 50 and res.t > 0 and res.p < 0.05
        checks.append((label, good, sum(a) / 50, sum(b) / 50, res.p))
    ok = all(c[1] for c in checks)
    say(7, ok, "; ".join(f"{lab}: {ma:.3f} vs {mb:.3f}, p={p:.2e}" for lab, _, ma, mb, p in checks))
    assert ok


C8_SEEDS = range(5)
C8_REQUIRED = 4  # the pre-registered pilot improved on every seed it ran


def test_criterion_08_evolution_improves(say):
    rows = []
    for seed in C8_SEEDS:
        cfg = EvolutionConfig(population=40, islands=5, generations=20,
                              maps=["corridor", "nook", "arena"], budget_nodes=20000, seed=seed,
                              jobs=JOBS)
        bests = [h.best for h in evolve(cfg, RUNNER).history]
        monotone = all(b >= a for a, b in zip(bests, bests[1:]))
        rows.append((seed, bests[0], bests[-1], monotone, len(bests)))
    improved = sum(final > first for _, first, final, _, _ in rows)
    ok = all(r[3] and r[4] == 21 for r in rows) and improved >= C8_REQUIRED
    say(8, ok, f"{improved}/5 seeds improved (need {C8_REQUIRED}); "
               + ", ".join(f"seed {s}: {a:.4f}->{b:.4f}{'' if m else ' NON-MONOTONE'}"
                           for s, a, b, m, _ in rows))
    assert ok


def test_criterion_09_statistics(say):
    wt, wp = welch_errors()
    pr, pp = pearson_errors()
    ex = welch_t([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
    ok = wt <= 1e-6 and pr <= 1e-6 and wp <= 1e-4 and pp <= 1e-4 and ex.t == -1.0 and ex.df == 8.0
    say(9, ok, f"welch max |dt| {wt:.1e} |dp| {wp:.1e}; pearson max |dr| {pr:.1e} |dp| {pp:.1e}; "
               f"worked example t={ex.t}, df={ex.df}")
    assert ok


def test_criterion_10_structural_metrics(say):
    mismatched = []
    for name in FIXTURE_MAPS:
        lv = bundled_map(name)
        m = structural_metrics(lv)
        got = {"shortest": m.shortest_path_length, "choke": m.choke_point_count,
               "dead": m.dead_end_count, "open": m.open_area_count}
        if got != brute_force_metrics(lv.format()):
            mismatched.append(name)
    ok = len(FIXTURE_MAPS) == 10 and not mismatched
    say(10, ok, f"{len(FIXTURE_MAPS) - len(mismatched)}/10 maps match the brute-force counts")
    assert ok
