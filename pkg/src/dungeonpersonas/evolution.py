"""Island-model genetic programming of MCTS tree policies.

Each genome is an :class:`~dungeonpersonas.expr.ExprTree` used as the tree policy
of a persona's search. Its fitness is the persona's utility at the end of the
playthrough, averaged over the training maps.

One generation, per island:

1. migration along a ring: every island receives a copy of its upstream
   neighbour's best individual, which replaces its own worst;
2. the five fittest individuals form the mating pool, and each pool member is
   replaced by a fresh random tree with the mutation probability;
3. the elites (top 15%) and the migrant survive unchanged;
4. the rest of the island is refilled with crossover offspring of parents drawn
   uniformly from the pool.

Only new offspring are evaluated; survivors keep their fitness.
"""
from __future__ import annotations

import logging
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

from .expr import MAX_DEPTH, ExprTree, crossover, format_tree, mutate, random_tree
from .maps import LevelMap, resolve_map
from .mcts import ExpressionPolicy, SearchBudget, plan
from .personas import Persona
from .seeds import derive_seed

log = logging.getLogger(__name__)

DEFAULT_TRAINING_MAPS = ("map01", "map02", "map03", "map04", "map07", "map10")


@dataclass
class EvolutionConfig:
    population: int = 100
    islands: int = 5
    generations: int = 100
    elitism: float = 0.15
    mutation_rate: float = 0.10
    mating_pool: int = 5
    maps: list = field(default_factory=lambda: list(DEFAULT_TRAINING_MAPS))
    trials: int = 1
    budget_nodes: int | None = 20000
    budget_seconds: float | None = None
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if self.islands < 1 or self.population % self.islands:
            raise ValueError("population must split evenly into at least one island")
        for name in ("elitism", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.elites_per_island < 1:
            raise ValueError("elitism keeps no individual; raise it or the island size")
        if not 1 <= self.mating_pool <= self.island_size:
            raise ValueError("mating pool must hold between 1 and island-size individuals")
        if not self.maps:
            raise ValueError("at least one training map is needed")
        if self.generations < 0 or self.trials < 1:
            raise ValueError("generations must be >= 0 and trials >= 1")

    @property
    def island_size(self) -> int:
        return self.population // self.islands

    @property
    def elites_per_island(self) -> int:
        return math.floor(self.elitism * self.island_size + 1e-9)

    @property
    def budget(self) -> SearchBudget:
        return SearchBudget(seconds=self.budget_seconds, nodes=self.budget_nodes)

    @classmethod
    def from_dict(cls, data: dict) -> "EvolutionConfig":
        known = {f.name for f in fields(cls)}
        bad = set(data) - known
        if bad:
            raise ValueError(f"unknown evolution config key(s): {sorted(bad)}")
        return cls(**data)


@dataclass
class EvaluatedIndividual:
    genome: ExprTree
    fitness: float
    per_map: dict

    @property
    def text(self) -> str:
        return format_tree(self.genome)


@dataclass
class GenerationStats:
    generation: int
    best: float
    mean: float
    best_genome: str


@dataclass
class EvolutionResult:
    best: EvaluatedIndividual
    history: list
    islands: list


def _load_maps(maps) -> list[LevelMap]:
    return [m if isinstance(m, LevelMap) else resolve_map(m) for m in maps]


def fitness(genome: ExprTree, persona: Persona, maps, budget: SearchBudget, seed: int = 0,
            trials: int = 1) -> EvaluatedIndividual:
    """Mean end-of-playthrough utility of ``persona`` searching with ``genome``."""
    levels = _load_maps(maps)
    if not levels:
        raise ValueError("fitness needs at least one map")
    policy = ExpressionPolicy(genome)
    per_map = {}
    for i, level in enumerate(levels):
        total = 0.0
        for k in range(trials):
            trace = plan(level, persona, policy, budget, derive_seed(seed, i, k))
            total += trace.utility
        key = level.name if level.name not in per_map else f"{level.name}#{i}"
        per_map[key] = total / trials
    return EvaluatedIndividual(genome, sum(per_map.values()) / len(per_map), per_map)


def _fitness_job(args):
    return fitness(*args)


def migrate(islands: list, rng=None) -> list:
    """Ring migration: island ``i``'s best replaces island ``i+1``'s worst.

    Migrants are chosen from the islands as they were before any replacement.
    Returns new lists; the inputs are not modified.
    """
    if len(islands) < 2:
        return [list(isl) for isl in islands]
    migrants = [_best_index(isl) for isl in islands]
    out = [list(isl) for isl in islands]
    for i, isl in enumerate(islands):
        dest = (i + 1) % len(islands)
        worst = _worst_index(out[dest])
        out[dest][worst] = isl[migrants[i]]
    return out


def _best_index(island) -> int:
    best = 0
    for i, ind in enumerate(island):
        if ind.fitness > island[best].fitness:
            best = i
    return best


def _worst_index(island) -> int:
    worst = 0
    for i, ind in enumerate(island):
        if ind.fitness < island[worst].fitness:
            worst = i
    return worst


def _ranked(island) -> list:
    # stable: equal fitness keeps the earlier individual first
    return sorted(island, key=lambda ind: -ind.fitness)


class _Evaluator:
    def __init__(self, config: EvolutionConfig, persona: Persona):
        self.config = config
        self.persona = persona
        self.maps = _load_maps(config.maps)
        self.executor = ProcessPoolExecutor(config.jobs) if config.jobs > 1 else None

    def __call__(self, genomes: list, generation: int) -> list:
        cfg = self.config
        jobs = [(g, self.persona, self.maps, cfg.budget, derive_seed(cfg.seed, "fitness", generation, i),
                 cfg.trials) for i, g in enumerate(genomes)]
        if self.executor is None:
            return [_fitness_job(j) for j in jobs]
        # map() yields in submission order, so scheduling never changes the outcome
        return list(self.executor.map(_fitness_job, jobs))

    def close(self):
        if self.executor is not None:
            self.executor.shutdown()


def evolve(config: EvolutionConfig, persona: Persona, progress=None) -> EvolutionResult:
    """Run the island model and return the best individual plus per-generation history.

    ``progress`` is called with each :class:`GenerationStats` as it is produced.
    """
    rng = random.Random(config.seed)
    size = config.island_size
    n_elite = config.elites_per_island
    evaluate = _Evaluator(config, persona)
    try:
        genomes = [random_tree(rng) for _ in range(config.population)]
        pop = evaluate(genomes, 0)
        islands = [pop[i * size:(i + 1) * size] for i in range(config.islands)]
        history = [_stats(0, islands)]
        if progress:
            progress(history[-1])

        for gen in range(1, config.generations + 1):
            before = [list(isl) for isl in islands]
            islands = migrate(islands, rng)
            survivors_per_island = []
            offspring_genomes = []
            slots = []
            for idx, island in enumerate(islands):
                migrant = None
                if len(islands) > 1:
                    src = before[(idx - 1) % len(islands)]
                    migrant = src[_best_index(src)]
                ranked = _ranked(island)
                survivors = ranked[:n_elite]
                if migrant is not None and not any(s is migrant for s in survivors):
                    survivors.append(migrant)
                pool = [ind.genome for ind in ranked[:config.mating_pool]]
                pool = [mutate(g, rng) if rng.random() < config.mutation_rate else g for g in pool]
                children = []
                need = size - len(survivors)
                while len(children) < need:
                    a, b = rng.choice(pool), rng.choice(pool)
                    c1, c2 = crossover(a, b, rng, MAX_DEPTH)
                    children.append(c1)
                    if len(children) < need:
                        children.append(c2)
                survivors_per_island.append(survivors)
                slots.append((len(offspring_genomes), need))
                offspring_genomes.extend(children)

            evaluated = evaluate(offspring_genomes, gen)
            islands = [
                survivors + evaluated[start:start + n]
                for survivors, (start, n) in zip(survivors_per_island, slots)
            ]
            history.append(_stats(gen, islands))
            if progress:
                progress(history[-1])
            log.debug("generation %d best %.4f", gen, history[-1].best)

        best = max((ind for isl in islands for ind in isl), key=lambda ind: ind.fitness)
        return EvolutionResult(best, history, islands)
    finally:
        evaluate.close()


def _stats(gen: int, islands) -> GenerationStats:
    everyone = [ind for isl in islands for ind in isl]
    best = everyone[0]
    for ind in everyone:
        if ind.fitness > best.fitness:
            best = ind
    mean = sum(ind.fitness for ind in everyone) / len(everyone)
    return GenerationStats(gen, best.fitness, mean, best.text)
