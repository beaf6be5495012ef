"""Batch playtesting: run personas on maps, aggregate, compare and correlate.

A batch produces one :class:`TrialRecord` per (map, persona, policy, trial).
Reports are deterministic folds over records sorted by (map, persona, policy,
trial); wall-clock figures are left out whenever the search budget is node-only,
so identical seeds give byte-identical files.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from itertools import combinations
from pathlib import Path

from .expr import format_tree, parse_tree
from .game import CAPPED, DEAD, RUNNING, WON
from .maps import HEIGHT, WIDTH, LevelMap, resolve_map, structural_metrics
from .mcts import UCB1, ExpressionPolicy, Playtrace, SearchBudget, plan, replay
from .personas import BUILTIN_POLICIES, PERSONA_ABBREV, Persona, builtin_policy
from .seeds import derive_seed
from .stats import ci95, mean, pearson, welch_t

TIMEOUT = "timeout"
SIGNIFICANCE = 0.05

# metrics compared between personas and policies
METRICS = ("win", "monsters_ratio", "potions_ratio", "treasures_ratio", "interactive_ratio",
           "steps", "time")
CORE_PRIORITY_METRIC = {
    "time": "time",
    "monsters": "monsters_ratio",
    "treasures": "treasures_ratio",
    "interactive": "interactive_ratio",
}


@dataclass
class TrialRecord:
    map: str
    persona: str
    policy: str
    trial: int
    seed: int
    outcome: str
    monsters_ratio: float
    potions_ratio: float
    treasures_ratio: float
    interactive_ratio: float
    steps: int
    nodes: int
    elapsed: float | None
    utility: float
    trace: Playtrace | None = field(default=None, repr=False, compare=False)

    @property
    def win(self) -> float:
        return 1.0 if self.outcome == WON else 0.0

    @property
    def time(self) -> float:
        """Search effort: seconds in wall-clock mode, expanded nodes in node-only mode."""
        return self.elapsed if self.elapsed is not None else float(self.nodes)

    def value(self, metric: str) -> float:
        return float(getattr(self, metric))


RECORD_COLUMNS = tuple(f.name for f in fields(TrialRecord) if f.name != "trace")


def outcome_of(status: str) -> str:
    return TIMEOUT if status == RUNNING else status


# --------------------------------------------------------------------------- policies

def resolve_policy(spec: str, persona: Persona):
    """Turn a policy spec into ``(policy, policy_id)``.

    Specs: ``ucb1``, ``builtin`` (the persona's own evolved policy),
    ``builtin:<name>``, ``expr:<text>`` or the path of a file holding an expression.
    """
    if spec == "ucb1":
        return UCB1(), "ucb1"
    if spec == "builtin":
        if not persona.builtin:
            raise ValueError(f"persona {persona.name!r} has no built-in policy")
        spec = f"builtin:{persona.builtin}"
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        return ExpressionPolicy(builtin_policy(name), name=spec), spec
    if spec.startswith("expr:"):
        tree = parse_tree(spec[5:])
        text = f"expr:{format_tree(tree)}"
        return ExpressionPolicy(tree, name=text), text
    path = Path(spec)
    if path.is_file():
        tree = parse_tree(path.read_text().strip().splitlines()[0])
        text = f"expr:{format_tree(tree)}"
        return ExpressionPolicy(tree, name=text), text
    raise ValueError(f"bad policy spec {spec!r}: use ucb1, builtin, builtin:<name> "
                     f"({', '.join(sorted(BUILTIN_POLICIES))}), expr:<text> or a file")


# --------------------------------------------------------------------------- batch

def run_trial(level: LevelMap, persona: Persona, policy_spec: str, trial: int,
              budget: SearchBudget, seed: int, max_turns: int = 1000) -> TrialRecord:
    policy, policy_id = resolve_policy(policy_spec, persona)
    trace = plan(level, persona, policy, budget, seed, max_turns)
    m = trace.metrics
    return TrialRecord(
        map=level.name, persona=persona.name, policy=policy_id, trial=trial, seed=seed,
        outcome=outcome_of(trace.status), monsters_ratio=m.MS, potions_ratio=m.PD,
        treasures_ratio=m.TO, interactive_ratio=m.IC, steps=trace.steps,
        nodes=trace.nodes_expanded,
        elapsed=None if budget.deterministic else round(trace.elapsed, 6),
        utility=trace.utility, trace=trace,
    )


def _trial_job(args):
    return run_trial(*args)


def batch(maps, personas, policies=("builtin",), trials: int = 50,
          budget: SearchBudget | None = None, seed: int = 0, jobs: int = 1,
          max_turns: int = 1000, progress=None) -> list[TrialRecord]:
    """Run every (map, persona, policy) combination ``trials`` times.

    Trial seeds derive from ``seed``, the map, the persona and the trial index, so
    different policies face the same seeds. Records come back sorted.
    """
    levels = [m if isinstance(m, LevelMap) else resolve_map(m) for m in maps]
    if not levels or not personas or not policies:
        raise ValueError("batch needs at least one map, persona and policy")
    budget = budget or SearchBudget()
    jobs_args = []
    for level in levels:
        for persona in personas:
            for spec in policies:
                resolve_policy(spec, persona)  # fail fast on bad specs
                for k in range(trials):
                    s = derive_seed(seed, level.name, persona.name, k)
                    jobs_args.append((level, persona, spec, k, budget, s, max_turns))
    records = []
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            for rec in ex.map(_trial_job, jobs_args):
                records.append(rec)
                if progress:
                    progress(rec)
    else:
        for args in jobs_args:
            rec = _trial_job(args)
            records.append(rec)
            if progress:
                progress(rec)
    return sort_records(records)


def sort_records(records):
    return sorted(records, key=lambda r: (r.map, r.persona, r.policy, r.trial))


# --------------------------------------------------------------------------- heatmaps

def heatmap(traces, level: LevelMap | None = None) -> list[list[int]]:
    """Per-tile hero visit counts summed over traces, as HEIGHT rows of WIDTH counts."""
    flat = [0] * (WIDTH * HEIGHT)
    for tr in traces:
        for p, c in enumerate(tr.visits):
            flat[p] += c
    if level is not None:
        for p, wall in enumerate(level.walls):
            if wall:
                flat[p] = 0
    return [flat[r * WIDTH:(r + 1) * WIDTH] for r in range(HEIGHT)]


def heatmap_from_actions(level: LevelMap, action_lists, max_turns: int = 1000):
    return heatmap([replay(level, acts, max_turns) for acts in action_lists], level)


def format_pgm(grid) -> str:
    peak = max(1, max(max(row) for row in grid))
    lines = ["P2", f"{len(grid[0])} {len(grid)}", str(peak)]
    lines += [" ".join(str(v) for v in row) for row in grid]
    return "\n".join(lines) + "\n"


def format_grid_csv(grid) -> str:
    return "\n".join(",".join(str(v) for v in row) for row in grid) + "\n"


# --------------------------------------------------------------------------- statistics

def _group(records, *keys):
    out = {}
    for r in records:
        out.setdefault(tuple(getattr(r, k) for k in keys), []).append(r)
    return out


def _summary(values) -> dict:
    vals = [float(v) for v in values]
    if len(vals) >= 2:
        m, half = ci95(vals)
    else:
        m, half = mean(vals), None
    return {"mean": m, "ci95": half, "n": len(vals)}


def _ttest_entry(a, b):
    if len(a) < 2 or len(b) < 2:
        return None
    t = welch_t(a, b)
    return {"t": t.t, "p": t.p, "df": t.df}


def persona_matrices(records) -> dict:
    """policy -> map -> metric -> persona -> persona -> Welch t-test (row minus column)."""
    out = {}
    for (policy, map_name), recs in sorted(_group(records, "policy", "map").items()):
        by_persona = _group(recs, "persona")
        names = sorted(p for (p,) in by_persona)
        per_metric = {}
        for metric in METRICS:
            values = {p: [r.value(metric) for r in by_persona[(p,)]] for p in names}
            per_metric[metric] = {
                a: {b: (None if a == b else _ttest_entry(values[a], values[b])) for b in names}
                for a in names
            }
        out.setdefault(policy, {})[map_name] = per_metric
    return out


def significance_counts(matrices) -> dict:
    """policy -> metric -> "A>B" -> number of maps where A is significantly higher than B."""
    out = {}
    for policy, maps in matrices.items():
        counts = {}
        for per_metric in maps.values():
            for metric, rows in per_metric.items():
                for a, row in rows.items():
                    for b, entry in row.items():
                        if a == b:
                            continue
                        key = f"{a}>{b}"
                        hit = entry is not None and entry["p"] < SIGNIFICANCE and entry["t"] > 0
                        counts.setdefault(metric, {}).setdefault(key, 0)
                        counts[metric][key] += int(hit)
        out[policy] = counts
    return out


def policy_comparisons(records) -> dict:
    """map -> persona -> "P1 vs P2" -> metric -> Welch t-test, for each pair of policies."""
    out = {}
    for (map_name, persona), recs in sorted(_group(records, "map", "persona").items()):
        by_policy = _group(recs, "policy")
        names = sorted(p for (p,) in by_policy)
        for a, b in combinations(names, 2):
            key = f"{a} vs {b}"
            out.setdefault(map_name, {}).setdefault(persona, {})[key] = {
                metric: _ttest_entry([r.value(metric) for r in by_policy[(a,)]],
                                     [r.value(metric) for r in by_policy[(b,)]])
                for metric in METRICS
            }
    return out


def per_map_means(records) -> dict:
    """(persona, policy) -> map -> metric -> mean."""
    out = {}
    for (persona, policy, map_name), recs in _group(records, "persona", "policy", "map").items():
        out.setdefault((persona, policy), {})[map_name] = {
            m: mean(r.value(m) for r in recs) for m in METRICS
        }
    return out


def correlate_levels(records, level_metrics: dict, personas=None) -> list[dict]:
    """Pearson correlations between persona performance and structural level metrics.

    For every (persona, policy), the per-map mean of the persona's core-priority
    metric and of its win rate is correlated with every structural metric across
    maps. Pairs where either side is constant are reported as skipped.
    ``level_metrics`` maps a map name to its :class:`LevelMetrics`.
    """
    from .personas import PERSONAS

    personas = personas or PERSONAS
    results = []
    means = per_map_means(records)
    for (persona, policy), by_map in sorted(means.items()):
        maps = sorted(m for m in by_map if m in level_metrics)
        if len(maps) < 3:
            continue
        p = personas.get(persona)
        core = CORE_PRIORITY_METRIC.get(p.core_priority if p else "time", "time")
        level_names = list(level_metrics[maps[0]].as_dict())
        for perf in (core, "win"):
            ys = [by_map[m][perf] for m in maps]
            for lm in level_names:
                xs = [float(level_metrics[m].as_dict()[lm]) for m in maps]
                entry = {"persona": persona, "policy": policy, "performance": perf,
                         "level_metric": lm, "n": len(maps)}
                if len(set(xs)) < 2 or len(set(ys)) < 2:
                    entry.update(r=None, p=None, skipped=True,
                                 reason="constant level metric" if len(set(xs)) < 2
                                 else "constant performance")
                else:
                    c = pearson(xs, ys)
                    entry.update(r=c.r, p=c.p, skipped=False,
                                 significant=c.p < SIGNIFICANCE)
                results.append(entry)
    return results


def build_report(records, levels: dict, personas=None) -> dict:
    """All aggregates for ``records``; ``levels`` maps a map name to its LevelMap."""
    records = sort_records(records)
    groups = {}
    for (map_name, persona, policy), recs in sorted(_group(records, "map", "persona", "policy").items()):
        entry = {m: _summary(r.value(m) for r in recs) for m in METRICS}
        entry["outcomes"] = {o: sum(r.outcome == o for r in recs) for o in (WON, DEAD, CAPPED, TIMEOUT)}
        groups.setdefault(map_name, {}).setdefault(persona, {})[policy] = entry
    pooled = {}
    for (persona, policy), recs in sorted(_group(records, "persona", "policy").items()):
        pooled.setdefault(persona, {})[policy] = {m: _summary(r.value(m) for r in recs) for m in METRICS}
    matrices = persona_matrices(records)
    level_metrics = {name: structural_metrics(level) for name, level in sorted(levels.items())}
    return {
        "n_records": len(records),
        "metrics": list(METRICS),
        "time_unit": "seconds" if any(r.elapsed is not None for r in records) else "nodes",
        "per_map": groups,
        "pooled": pooled,
        "persona_ttests": matrices,
        "significance_counts": significance_counts(matrices),
        "policy_ttests": policy_comparisons(records),
        "level_metrics": {k: v.as_dict() for k, v in level_metrics.items()},
        "correlations": correlate_levels(records, level_metrics, personas),
    }


# --------------------------------------------------------------------------- files

def _clean(obj):
    """Replace non-finite floats (JSON has no inf/nan) with None, recursively."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_records_csv(records, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in sort_records(records):
            row = asdict(r)
            w.writerow(["" if row[c] is None else row[c] for c in RECORD_COLUMNS])


def read_records_csv(path: Path) -> list[TrialRecord]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(TrialRecord(
                map=row["map"], persona=row["persona"], policy=row["policy"],
                trial=int(row["trial"]), seed=int(row["seed"]), outcome=row["outcome"],
                monsters_ratio=float(row["monsters_ratio"]), potions_ratio=float(row["potions_ratio"]),
                treasures_ratio=float(row["treasures_ratio"]),
                interactive_ratio=float(row["interactive_ratio"]), steps=int(row["steps"]),
                nodes=int(row["nodes"]), elapsed=float(row["elapsed"]) if row["elapsed"] else None,
                utility=float(row["utility"]),
            ))
    return out


def write_traces_jsonl(records, path: Path) -> None:
    with open(path, "w") as fh:
        for r in sort_records(records):
            if r.trace is None:
                continue
            line = {"map": r.map, "persona": r.persona, "policy": r.policy, "trial": r.trial,
                    "seed": r.seed, "actions": [str(a) for a in r.trace.actions]}
            fh.write(json.dumps(line, sort_keys=True) + "\n")


def read_traces_jsonl(path: Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def heatmap_stem(map_name: str, persona: str, policy: str | None = None) -> str:
    stem = f"heatmap_{map_name}_{persona}"
    if policy is not None:
        slug = "".join(ch if ch.isalnum() or ch in "-_" else "-" for ch in policy)
        stem += f"_{slug[:40]}"
    return stem


def heatmap_grids(records, levels: dict) -> dict:
    """(map, persona, policy) -> visit grid, from the traces attached to ``records``."""
    out = {}
    for (map_name, persona, policy), recs in sorted(_group(records, "map", "persona", "policy").items()):
        traces = [r.trace for r in recs if r.trace is not None]
        out[(map_name, persona, policy)] = heatmap(traces, levels.get(map_name))
    return out


def write_report(records, levels: dict, out_dir, personas=None, plots: bool = True) -> dict:
    """Write records.csv, traces.jsonl, report.json and heatmaps into ``out_dir``.

    Returns the report dictionary. PNG figures are rendered when ``plots`` is true.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = sort_records(records)
    write_records_csv(records, out_dir / "records.csv")
    if any(r.trace is not None for r in records):
        write_traces_jsonl(records, out_dir / "traces.jsonl")
    report = build_report(records, levels, personas)
    (out_dir / "report.json").write_text(dumps_json(report))

    grids = heatmap_grids(records, levels)
    several_policies = len({r.policy for r in records}) > 1
    for (map_name, persona, policy), grid in grids.items():
        stem = heatmap_stem(map_name, persona, policy if several_policies else None)
        (out_dir / f"{stem}.pgm").write_text(format_pgm(grid))
        (out_dir / f"{stem}.csv").write_text(format_grid_csv(grid))
        if plots:
            from .plotting import render_heatmap

            title = f"{map_name} / {PERSONA_ABBREV.get(persona, persona)} / {policy}"
            render_heatmap(grid, levels.get(map_name), out_dir / f"{stem}.png", title)
    return report
