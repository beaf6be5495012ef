"""Command-line interface: ``dungeonpersonas {simulate,evolve,playtest,report}``.

A YAML config file (``--config``) may set any long option, using either dashes or
underscores in key names; its values override the command line. The default
output directory comes from ``$DUNGEONPERSONAS_OUTPUT`` (fallback ``./out``).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import yaml

from . import evolution, playtest
from .expr import ExprParseError, format_tree, parse_tree
from .maps import MapError, bundled_map_names, resolve_map
from .mcts import SearchBudget, plan, replay
from .personas import PERSONAS, custom_persona, get_persona
from .seeds import derive_seed

log = logging.getLogger("dungeonpersonas")

OUTPUT_ENV = "DUNGEONPERSONAS_OUTPUT"


class UsageError(Exception):
    """Bad user input; reported on stderr with exit status 2."""


def default_output() -> str:
    return os.environ.get(OUTPUT_ENV, "out")


# --------------------------------------------------------------------------- parsing

def _add_common(p: argparse.ArgumentParser, personas_default):
    p.add_argument("--map", action="append", dest="maps", metavar="MAP",
                   help="map file or bundled map name (repeatable, or comma separated)")
    p.add_argument("--persona", action="append", dest="personas", metavar="NAME",
                   help=f"persona ({', '.join(PERSONAS)}); repeatable; default {personas_default}")
    p.add_argument("--budget-nodes", type=int, help="node-count limit (deterministic mode)")
    p.add_argument("--budget-seconds", type=float, help="wall-clock limit per search (default 300)")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--out", default=None, help=f"output directory (default ${OUTPUT_ENV} or ./out)")
    p.add_argument("--max-turns", type=int, default=1000)
    p.add_argument("--config", help="YAML file whose keys override these options")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dungeonpersonas",
                                     description="Procedural persona playtesting for dungeon maps.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="plan one playthrough per (map, persona)")
    _add_common(p, "runner")
    p.add_argument("--policy", default="builtin",
                   help='ucb1 | builtin | builtin:<name> | expr:"<text>" | file with an expression')
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("evolve", help="evolve a tree policy for one persona")
    _add_common(p, "runner")
    p.add_argument("--population", type=int, default=100)
    p.add_argument("--islands", type=int, default=5)
    p.add_argument("--generations", type=int, default=100)
    p.add_argument("--elitism", type=float, default=0.15)
    p.add_argument("--mutation-rate", type=float, default=0.10)
    p.add_argument("--mating-pool", type=int, default=5)
    p.add_argument("--trials", type=int, default=1, help="playthroughs per map per fitness evaluation")
    p.add_argument("--runs", type=int, default=1, help="independent runs; the best by core priority is kept")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("playtest", help="batch trials, statistics, heatmaps")
    _add_common(p, "all four")
    p.add_argument("--policy", action="append", dest="policies", metavar="SPEC",
                   help="policy spec (repeatable); default builtin")
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("report", help="rebuild report.json, heatmaps and figures from a run directory")
    p.add_argument("--in", dest="input", required=True, help="directory holding records.csv")
    p.add_argument("--map", action="append", dest="maps", metavar="MAP",
                   help="map files for maps that are not bundled")
    p.add_argument("--out", default=None, help="output directory (default: the input directory)")
    p.add_argument("--max-turns", type=int, default=1000)
    p.add_argument("--config", help="YAML file whose keys override these options")
    p.add_argument("--no-plots", action="store_true")
    return parser


def apply_config(args: argparse.Namespace, path: str) -> dict:
    """Override ``args`` with the config file; returns extra sections (e.g. personas)."""
    try:
        data = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a mapping")
    extras = {}
    aliases = {"map": "maps", "persona": "personas", "policy": "policies"}
    for key, value in data.items():
        dest = key.replace("-", "_")
        if dest == "custom_personas" or dest == "personas" and isinstance(value, dict):
            extras["custom_personas"] = value
            continue
        dest = aliases.get(dest, dest)
        if args.command == "simulate" and dest == "policies":
            dest = "policy"
        if not hasattr(args, dest) or dest in ("command", "config"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        if dest in ("maps", "personas", "policies") and isinstance(value, str):
            value = [value]
        setattr(args, dest, value)
    return extras


def _split(values) -> list[str]:
    out = []
    for v in values or []:
        out.extend(x.strip() for x in str(v).split(",") if x.strip())
    return out


def resolve_personas(names, extras, default) -> list:
    custom = {}
    for name, spec in (extras.get("custom_personas") or {}).items():
        if not isinstance(spec, dict) or "weights" not in spec:
            raise UsageError(f"custom persona {name!r} needs a 'weights' mapping")
        try:
            custom[name] = custom_persona(name, spec["weights"], spec.get("death_penalty", 5.0),
                                          spec.get("core_priority", "time"))
        except ValueError as exc:
            raise UsageError(f"custom persona {name!r}: {exc}") from None
    names = _split(names) or default
    out = []
    for name in names:
        if name in custom:
            out.append(custom[name])
            continue
        try:
            out.append(get_persona(name))
        except KeyError:
            raise UsageError(f"unknown persona {name!r}; choose from "
                             f"{', '.join(list(PERSONAS) + list(custom))}") from None
    return out


def resolve_maps(specs) -> list:
    specs = _split(specs)
    if not specs:
        raise UsageError("no maps given (use --map)")
    levels, missing = [], []
    for spec in specs:
        try:
            levels.append(resolve_map(spec))
        except FileNotFoundError:
            missing.append(spec)
        except MapError as exc:
            raise UsageError(f"map {spec}: {exc}") from None
    if missing:
        raise UsageError(f"missing map(s): {', '.join(missing)} "
                         f"(bundled: {', '.join(bundled_map_names())})")
    return levels


def make_budget(args) -> SearchBudget:
    if args.budget_nodes is not None and args.budget_nodes < 1:
        raise UsageError("--budget-nodes must be positive")
    if args.budget_seconds is not None and args.budget_seconds <= 0:
        raise UsageError("--budget-seconds must be positive")
    if args.budget_nodes is None and args.budget_seconds is None:
        return SearchBudget()
    return SearchBudget(seconds=args.budget_seconds, nodes=args.budget_nodes)


def out_dir(args) -> Path:
    path = Path(args.out or default_output())
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {path}: {exc}") from None
    return path


# --------------------------------------------------------------------------- commands

def cmd_simulate(args, extras) -> int:
    levels = resolve_maps(args.maps)
    personas = resolve_personas(args.personas, extras, ["runner"])
    budget = make_budget(args)
    out = out_dir(args)
    for level in levels:
        for persona in personas:
            try:
                policy, policy_id = playtest.resolve_policy(args.policy, persona)
            except (ValueError, ExprParseError) as exc:
                raise UsageError(str(exc)) from None
            seed = derive_seed(args.seed, level.name, persona.name, 0)
            trace = plan(level, persona, policy, budget, seed, args.max_turns)
            data = trace.to_json()
            if budget.deterministic:
                data["elapsed"] = None
            data.update(map=level.name, persona=persona.name, policy=policy_id,
                        policy_spec=args.policy, seed=seed, master_seed=args.seed)
            stem = f"{level.name}_{persona.name}"
            (out / f"trace_{stem}.json").write_text(playtest.dumps_json(data))
            grid = playtest.heatmap([trace], level)
            (out / f"heatmap_{stem}.pgm").write_text(playtest.format_pgm(grid))
            (out / f"heatmap_{stem}.csv").write_text(playtest.format_grid_csv(grid))
            if not args.no_plots:
                from .plotting import render_heatmap

                render_heatmap(grid, level, out / f"heatmap_{stem}.png",
                               f"{level.name} / {persona.name} / {policy_id}")
            print("\t".join([level.name, persona.name, policy_id, trace.status,
                             str(trace.steps), str(trace.nodes_expanded), f"{trace.utility:.6f}"]))
    return 0


def _core_score(persona, level_list, tree, config) -> float:
    """Mean core-priority value of ``tree`` on the training maps, oriented so that
    larger is better (the Runner's search effort is negated)."""
    core = playtest.CORE_PRIORITY_METRIC.get(persona.core_priority, "time")
    spec = f"expr:{format_tree(tree)}"
    budget = config.budget
    values = []
    for level in level_list:
        for k in range(config.trials):
            rec = playtest.run_trial(level, persona, spec, k, budget,
                                     derive_seed(config.seed, "select", level.name, k))
            values.append(rec.value(core))
    score = sum(values) / len(values)
    return -score if core == "time" else score


def cmd_evolve(args, extras) -> int:
    personas = resolve_personas(args.personas, extras, ["runner"])
    if len(personas) != 1:
        raise UsageError("evolve takes exactly one persona")
    persona = personas[0]
    maps = _split(args.maps) or list(evolution.DEFAULT_TRAINING_MAPS)
    levels = resolve_maps(maps)
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    if args.budget_nodes is None and args.budget_seconds is None:
        args.budget_nodes = 20000
    make_budget(args)
    out = out_dir(args)
    results = []
    for run in range(args.runs):
        try:
            config = evolution.EvolutionConfig(
                population=args.population, islands=args.islands, generations=args.generations,
                elitism=args.elitism, mutation_rate=args.mutation_rate, mating_pool=args.mating_pool,
                maps=levels, trials=args.trials, budget_nodes=args.budget_nodes,
                budget_seconds=args.budget_seconds,
                seed=derive_seed(args.seed, "run", run) if args.runs > 1 else args.seed,
                jobs=args.jobs)
        except ValueError as exc:
            raise UsageError(str(exc)) from None

        def progress(stats, run=run):
            log.info("run %d generation %d best %.4f mean %.4f", run, stats.generation,
                     stats.best, stats.mean)

        result = evolution.evolve(config, persona, progress)
        suffix = f"_run{run}" if args.runs > 1 else ""
        with open(out / f"history{suffix}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["generation", "best", "mean", "best_genome"])
            for h in result.history:
                w.writerow([h.generation, repr(h.best), repr(h.mean), h.best_genome])
        (out / f"best{suffix}.txt").write_text(result.best.text + "\n")
        results.append((run, config, result))
        print("\t".join([f"run{run}", repr(result.best.fitness), result.best.text]))

    chosen = results[0]
    selection = []
    if len(results) > 1:
        scored = []
        for run, config, result in results:
            score = _core_score(persona, levels, result.best.genome, config)
            scored.append((score, result.best.fitness, -run, run))
            selection.append({"run": run, "core_priority_score": score,
                              "fitness": result.best.fitness, "genome": result.best.text})
        best_run = max(scored)[3]
        chosen = results[best_run]
    run, config, result = chosen
    (out / "best_genome.txt").write_text(result.best.text + "\n")
    summary = {"persona": persona.name, "core_priority": persona.core_priority,
               "selected_run": run, "fitness": result.best.fitness,
               "per_map": result.best.per_map, "genome": result.best.text, "runs": selection}
    (out / "evolve.json").write_text(playtest.dumps_json(summary))
    if not args.no_plots:
        from .plotting import plot_fitness_history

        plot_fitness_history([r.history for _, _, r in results], out / "fitness_history.png",
                             f"{persona.name} fitness")
    return 0


def cmd_playtest(args, extras) -> int:
    levels = resolve_maps(args.maps)
    personas = resolve_personas(args.personas, extras, list(PERSONAS))
    policies = _split(args.policies) or ["builtin"]
    budget = make_budget(args)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    for persona in personas:
        for spec in policies:
            try:
                playtest.resolve_policy(spec, persona)
            except (ValueError, ExprParseError) as exc:
                raise UsageError(str(exc)) from None
    out = out_dir(args)
    records = playtest.batch(levels, personas, policies, args.trials, budget, args.seed,
                             jobs=args.jobs, max_turns=args.max_turns)
    playtest.write_report(records, {lv.name: lv for lv in levels}, out,
                          {p.name: p for p in personas}, plots=not args.no_plots)
    _print_summary(records)
    return 0


def _print_summary(records) -> None:
    groups = {}
    for r in records:
        groups.setdefault((r.map, r.persona, r.policy), []).append(r)
    print("\t".join(["map", "persona", "policy", "win_rate", "monsters", "potions", "treasures",
                     "interactive", "steps"]))
    for (m, p, pol), recs in sorted(groups.items()):
        n = len(recs)
        avg = lambda attr: sum(getattr(r, attr) for r in recs) / n  # noqa: E731
        print("\t".join([m, p, pol, f"{avg('win'):.3f}", f"{avg('monsters_ratio'):.3f}",
                         f"{avg('potions_ratio'):.3f}", f"{avg('treasures_ratio'):.3f}",
                         f"{avg('interactive_ratio'):.3f}", f"{avg('steps'):.2f}"]))


def cmd_report(args, extras) -> int:
    src = Path(args.input)
    if not (src / "records.csv").is_file():
        raise UsageError(f"{src} has no records.csv")
    records = playtest.read_records_csv(src / "records.csv")
    levels = {lv.name: lv for lv in resolve_maps(args.maps)} if args.maps else {}
    names = sorted({r.map for r in records} - set(levels))
    for lv in resolve_maps(names) if names else []:
        levels[lv.name] = lv
    traces_path = src / "traces.jsonl"
    if traces_path.is_file():
        by_key = {}
        for row in playtest.read_traces_jsonl(traces_path):
            by_key[(row["map"], row["persona"], row["policy"], row["trial"])] = row["actions"]
        for r in records:
            acts = by_key.get((r.map, r.persona, r.policy, r.trial))
            if acts is not None:
                r.trace = replay(levels[r.map], acts, args.max_turns)
    out = Path(args.out) if args.out else src
    playtest.write_report(records, levels, out, plots=not args.no_plots)
    if not args.no_plots:
        from .plotting import plot_fitness_history

        histories = [_read_history(p) for p in sorted(src.glob("history*.csv"))]
        if histories:
            plot_fitness_history(histories, out / "fitness_history.png", "fitness")
    _print_summary(records)
    return 0


def _read_history(path: Path):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(evolution.GenerationStats(int(row["generation"]), float(row["best"]),
                                                  float(row["mean"]), row["best_genome"]))
    return rows


COMMANDS = {"simulate": cmd_simulate, "evolve": cmd_evolve, "playtest": cmd_playtest,
            "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        extras = apply_config(args, args.config) if args.config else {}
        return COMMANDS[args.command](args, extras)
    except UsageError as exc:
        print(f"dungeonpersonas {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (MapError, ExprParseError, ValueError) as exc:
        print(f"dungeonpersonas {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
