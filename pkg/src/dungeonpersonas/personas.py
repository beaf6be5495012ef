"""Persona utilities, gameplay metric extraction and the built-in evolved policies."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

from .expr import ExprTree, parse_tree
from .game import DEAD, JT, MAX_HP, MS, MTK, PD, ST, TO, TS, TU, GameState

DEATH_PENALTY = 5.0


@dataclass(frozen=True)
class GameplayMetrics:
    """Gameplay metrics of one state. PD, TO, MS, IC are ratios of the map's
    initial object counts; HL is hp / 10."""

    ST: float = 0
    PE: float = 0.0
    PD: float = 0.0
    TO: float = 0.0
    MTK: float = 0
    MS: float = 0.0
    JT: float = 0
    HL: float = 1.0
    TU: float = 0
    TS: float = 0
    IC: float = 0.0

    def as_tuple(self) -> tuple:
        # field order equals expr.METRIC_VARIABLES
        return tuple(getattr(self, f.name) for f in fields(self))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def bindings(self, mean_reward: float = 0.0) -> dict:
        d = self.as_dict()
        d["R"] = mean_reward
        return d


def proximity_to_exit(state: GameState) -> float:
    """1 on the exit, 0 on the passable tile farthest (by walking distance) from it."""
    level = state.level
    return 1.0 - level.exit_distances[state.hero_pos] / level.max_exit_distance


def metrics_vector(state: GameState) -> tuple:
    """Fast path of :func:`metrics_from_state` returning a plain tuple."""
    level = state.level
    c = state._c
    n_pot = len(level.potions)
    n_tre = len(level.treasures)
    n_mon = level.killable_monsters
    total = n_pot + n_tre + n_mon
    return (
        c[ST],
        1.0 - level.exit_distances[state.hero_pos] / level.max_exit_distance,
        c[PD] / n_pot if n_pot else 0.0,
        c[TO] / n_tre if n_tre else 0.0,
        c[MTK],
        c[MS] / n_mon if n_mon else 0.0,
        c[JT],
        state.hp / MAX_HP,
        c[TU],
        c[TS],
        (c[PD] + c[TO] + c[MS]) / total if total else 0.0,
    )


def metrics_from_state(state: GameState) -> GameplayMetrics:
    return GameplayMetrics(*metrics_vector(state))


@dataclass(frozen=True)
class Persona:
    """A utility over gameplay metrics: ``sum(weight * metric) - penalty if dead``."""

    name: str
    weights: dict = field(default_factory=dict)
    death_penalty: float = DEATH_PENALTY
    core_priority: str = "time"
    builtin: str | None = None

    def __post_init__(self):
        bad = set(self.weights) - set(GameplayMetrics.__dataclass_fields__)
        if bad:
            raise ValueError(f"unknown metric(s) in weights: {sorted(bad)}")
        names = list(GameplayMetrics.__dataclass_fields__)
        object.__setattr__(self, "_index_weights",
                           tuple((names.index(k), float(w)) for k, w in self.weights.items()))

    def __hash__(self):
        return hash((self.name, tuple(sorted(self.weights.items())), self.death_penalty))

    def utility(self, metrics: GameplayMetrics | tuple, alive: bool = True) -> float:
        vec = metrics.as_tuple() if isinstance(metrics, GameplayMetrics) else metrics
        u = 0.0
        for i, w in self._index_weights:
            u += w * vec[i]
        if not alive:
            u -= self.death_penalty
        return u

    def state_utility(self, state: GameState) -> float:
        return self.utility(metrics_vector(state), state.status != DEAD)

    @property
    def policy(self) -> ExprTree | None:
        return builtin_policy(self.builtin) if self.builtin else None


RUNNER = Persona("runner", {"PE": 1.0, "ST": -0.01}, core_priority="time", builtin="runner-evolved")
MONSTER_KILLER = Persona("monster-killer", {"MS": 0.7, "PE": 0.3}, core_priority="monsters",
                         builtin="mk-evolved")
TREASURE_COLLECTOR = Persona("treasure-collector", {"TO": 0.7, "PE": 0.3},
                             core_priority="treasures", builtin="tc-evolved")
COMPLETIONIST = Persona("completionist", {"IC": 0.7, "PE": 0.3}, core_priority="interactive",
                        builtin="c-evolved")

PERSONAS = {p.name: p for p in (RUNNER, MONSTER_KILLER, TREASURE_COLLECTOR, COMPLETIONIST)}
PERSONA_ABBREV = {"runner": "R", "monster-killer": "MK", "treasure-collector": "TC",
                  "completionist": "C"}

# Simplified evolved tree policies, one per persona. Sums are re-associated so each
# tree stays within the depth cap.
BUILTIN_POLICIES = {
    "runner-evolved":
        "(((6.235 * ST) * ((PE * PE) * (PE + 1.0))) + (R * (1.0 - HL)))",
    "mk-evolved":
        "(((4.0 * MS) * PE) * (MS + ((2.0 * HL) * (PE - IC))))",
    "tc-evolved":
        "((((2.0 * PD) + (2.0 * MS)) + (TO + (3.0 * R))) + ((ST + PE) + 0.19))",
    "c-evolved":
        "(((((ST * MS) * (((ST * ST) * MS) + IC)) + R) + (IC - TO))"
        " + ((((2.0 * ST) * PE) * ((ST * MS) + 1.0)) - PE))",
}


def builtin_policy(name: str) -> ExprTree:
    if isinstance(name, Persona):
        name = name.builtin
    if name not in BUILTIN_POLICIES:
        raise KeyError(f"unknown built-in policy {name!r}; choose from {sorted(BUILTIN_POLICIES)}")
    return parse_tree(BUILTIN_POLICIES[name])


def get_persona(name: str) -> Persona:
    try:
        return PERSONAS[name]
    except KeyError:
        raise KeyError(f"unknown persona {name!r}; choose from {sorted(PERSONAS)}") from None


def custom_persona(name: str, weights: dict, death_penalty: float = DEATH_PENALTY,
                   core_priority: str = "time") -> Persona:
    return Persona(name, dict(weights), float(death_penalty), core_priority)
