"""Single-tree MCTS for the deterministic dungeon game.

Because the game is deterministic each node owns its concrete reached state, and a
persona builds one tree per level: search stops the moment any expanded or
simulated state is a win and returns the full action sequence that produced it.
Otherwise, when the budget runs out, the action sequence of the best simulation
seen is returned.

The tree policy is pluggable: :class:`UCB1` or :class:`ExpressionPolicy` (an
evolved formula over gameplay metrics and the child's mean reward).
"""
from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field

from .expr import ExprTree, compile_tree, evaluate, format_tree, variables
from .game import (DEFAULT_MAX_TURNS, RUNNING, WON, Action, GameState, IllegalActionError,
                   initial_state, legal_actions, state_hash, step)
from .maps import N_TILES, LevelMap
from .personas import GameplayMetrics, Persona, metrics_from_state, metrics_vector

ROLLOUT_LENGTH = 10
DEFAULT_SECONDS = 300.0


def ucb1(w: float, n: int, t: int, c: float = math.sqrt(2)) -> float:
    """Mean reward plus the exploration bonus ``c * sqrt(ln t / n)``."""
    if n < 1:
        raise ValueError("ucb1 is undefined for unvisited nodes; select them first")
    return w / n + c * math.sqrt(math.log(t) / n)


@dataclass
class SearchBudget:
    seconds: float | None = DEFAULT_SECONDS
    nodes: int | None = None
    rollout_length: int = ROLLOUT_LENGTH

    def __post_init__(self):
        if self.seconds is None and self.nodes is None:
            raise ValueError("a search budget needs a time or a node limit")

    @property
    def deterministic(self) -> bool:
        return self.seconds is None


class SearchNode:
    __slots__ = ("action", "state", "parent", "children", "untried", "n", "w",
                 "metrics", "exhausted")

    def __init__(self, action, state, parent, with_metrics=False):
        self.action = action
        self.state = state
        self.parent = parent
        self.children = []
        self.untried = legal_actions(state)
        self.n = 0
        self.w = 0.0
        self.metrics = metrics_vector(state) if with_metrics else None
        self.exhausted = False

    @property
    def mean_reward(self) -> float:
        return self.w / self.n

    def path(self) -> list[Action]:
        out = []
        node = self
        while node.parent is not None:
            out.append(node.action)
            node = node.parent
        out.reverse()
        return out

    def __repr__(self):
        return f"SearchNode({self.action}, n={self.n}, w={self.w:.3f}, children={len(self.children)})"


class UCB1:
    name = "ucb1"
    needs_metrics = False

    def __init__(self, c: float = math.sqrt(2)):
        self.c = c

    def score(self, node: SearchNode, parent_visits: int) -> float:
        return ucb1(node.w, node.n, parent_visits, self.c)

    def select(self, parent: SearchNode) -> SearchNode:
        log_t = math.log(parent.n)
        c = self.c
        best = None
        best_score = -math.inf
        for ch in parent.children:
            if ch.exhausted:
                continue
            if ch.n == 0:
                return ch
            s = ch.w / ch.n + c * math.sqrt(log_t / ch.n)
            if s > best_score:
                best, best_score = ch, s
        return best


class ExpressionPolicy:
    """Tree policy given by an expression over the child's metrics and mean reward."""

    needs_metrics = True

    def __init__(self, tree: ExprTree, name: str | None = None):
        self.tree = tree
        self.text = format_tree(tree)
        self.name = name or f"expr:{self.text}"
        self._f = compile_tree(tree)
        # without R, a child's score depends only on its fixed state
        self.static = "R" not in variables(tree)

    def score(self, node: SearchNode, parent_visits: int = 0) -> float:
        m = node.metrics if node.metrics is not None else metrics_vector(node.state)
        return self._f(m, node.w / node.n)

    def reference_score(self, node: SearchNode) -> float:
        """Same as :meth:`score` via the recursive evaluator (used by tests)."""
        return evaluate(self.tree, metrics_from_state(node.state).bindings(node.w / node.n))

    def select(self, parent: SearchNode) -> SearchNode:
        f = self._f
        best = None
        best_score = -math.inf
        for ch in parent.children:
            if ch.exhausted:
                continue
            if ch.n == 0:
                return ch
            s = f(ch.metrics, ch.w / ch.n)
            if best is None or s > best_score:
                best, best_score = ch, s
        return best


def tree_policy_score(policy, node: SearchNode) -> float:
    if node.n < 1:
        return math.inf
    return policy.score(node, node.parent.n if node.parent is not None else node.n)


def select_index(scores: list[float]) -> int:
    """Index of the highest score, first one on ties."""
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    return best


@dataclass
class Playtrace:
    actions: list[Action]
    digests: list[int]
    metrics: GameplayMetrics
    status: str
    visits: list[int]
    nodes_expanded: int = 0
    elapsed: float = 0.0
    utility: float | None = None
    best_utility: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.actions)

    @property
    def won(self) -> bool:
        return self.status == WON

    def to_json(self) -> dict:
        return {
            "actions": [str(a) for a in self.actions],
            "digests": [f"{d:016x}" for d in self.digests],
            "metrics": self.metrics.as_dict(),
            "status": self.status,
            "steps": self.steps,
            "nodes_expanded": self.nodes_expanded,
            "elapsed": self.elapsed,
            "utility": self.utility,
            "best_utility": self.best_utility,
            "visits": self.visits,
            **self.meta,
        }


class ReplayError(IllegalActionError):
    def __init__(self, index: int, action, reason: str):
        super().__init__(f"action #{index} ({action}) is illegal: {reason}")
        self.index = index


def replay(level: LevelMap, actions, max_turns: int = DEFAULT_MAX_TURNS,
           start: GameState | None = None) -> Playtrace:
    state = start if start is not None else initial_state(level, max_turns)
    visits = [0] * N_TILES
    visits[state.hero_pos] += 1
    digests = [state_hash(state)]
    acts = []
    for i, a in enumerate(actions):
        if isinstance(a, str):
            a = Action.parse(a)
        if state.status != RUNNING:
            raise ReplayError(i, a, f"game already over ({state.status})")
        try:
            state = step(state, a)
        except IllegalActionError as exc:
            raise ReplayError(i, a, str(exc)) from None
        acts.append(a)
        visits[state.hero_pos] += 1
        digests.append(state_hash(state))
    return Playtrace(acts, digests, metrics_from_state(state), state.status, visits)


class Search:
    """One MCTS tree. ``record=True`` logs every simulation as (leaf, utility)."""

    def __init__(self, level: LevelMap, persona: Persona, policy, budget: SearchBudget,
                 seed=0, max_turns: int = DEFAULT_MAX_TURNS, record: bool = False):
        self.level = level
        self.persona = persona
        self.policy = policy
        self.budget = budget
        self.rng = seed if isinstance(seed, random.Random) else random.Random(seed)
        self.root = SearchNode(None, initial_state(level, max_turns), None, policy.needs_metrics)
        self.expansions = 0
        self.simulations = 0
        self.log = [] if record else None
        self.best_utility = -math.inf
        self.best = None      # (leaf, rollout suffix)
        self.win = None       # (leaf, rollout suffix) of the first win
        self.elapsed = 0.0
        self._ran = False

    def _mark_exhausted(self, node: SearchNode) -> SearchNode:
        """Flag ``node`` and every ancestor left without live options; returns the
        topmost node flagged."""
        node.exhausted = True
        parent = node.parent
        while parent is not None and not parent.untried and all(c.exhausted for c in parent.children):
            parent.exhausted = True
            node = parent
            parent = node.parent
        return node

    def run(self) -> "Search":
        """Search until a win, the budget, or an exhausted root. Call once per tree.

        With a static policy (scores independent of visit statistics) every
        choice above the last expanded node stays fixed until some node becomes
        exhausted, so descent resumes from that node and the visit/reward sums
        are accumulated once at the end. Results are identical to the plain
        algorithm; only the cost per iteration drops from O(depth) to O(1).
        """
        if self._ran:
            raise RuntimeError("Search.run() may only be called once")
        self._ran = True
        rng = self.rng
        rand = rng.random
        policy = self.policy
        persona_utility = self.persona.state_utility
        with_metrics = policy.needs_metrics
        rollout_length = self.budget.rollout_length
        node_limit = self.budget.nodes
        deadline = None
        if self.budget.seconds is not None:
            deadline = time.perf_counter() + self.budget.seconds
        started = time.perf_counter()
        root = self.root
        if not root.untried:
            root.exhausted = True
        static = getattr(policy, "static", False)
        created = []
        cursor = root

        while not root.exhausted:
            if node_limit is not None and self.expansions >= node_limit:
                break
            if deadline is not None and time.perf_counter() >= deadline:
                break

            node = cursor
            while not node.untried and node.children:
                node = policy.select(node)
            if static:
                cursor = node

            untried = node.untried
            action = untried.pop(int(rand() * len(untried)))
            child = SearchNode(action, step(node.state, action), node, with_metrics)
            node.children.append(child)
            self.expansions += 1
            state = child.state
            if state.status == WON:
                self.win = (child, [])
                break

            suffix = []
            for _ in range(rollout_length):
                if state.status != RUNNING:
                    break
                acts = legal_actions(state)
                if not acts:
                    break
                a = acts[int(rand() * len(acts))]
                state = step(state, a)
                suffix.append(a)
            if state.status == WON:
                self.win = (child, suffix)
                break

            u = persona_utility(state)
            self.simulations += 1
            if u > self.best_utility:
                self.best_utility = u
                self.best = (child, suffix)
            if self.log is not None:
                self.log.append((child, u))
            if static:
                child.n += 1
                child.w += u
                created.append(child)
            else:
                n = child
                while n is not None:
                    n.n += 1
                    n.w += u
                    n = n.parent
            if child.state.status != RUNNING or not child.untried:
                top = self._mark_exhausted(child)
                # only the choice made at the parent of ``top`` can change
                cursor = top.parent or root

        # children were created after their parents, so reverse order folds each
        # finished subtree total into its parent
        for ch in reversed(created):
            ch.parent.n += ch.n
            ch.parent.w += ch.w
        self.elapsed = time.perf_counter() - started
        return self

    def result_actions(self) -> list[Action]:
        found = self.win or self.best
        if found is None:
            return []
        leaf, suffix = found
        return leaf.path() + suffix

    def playtrace(self) -> Playtrace:
        trace = replay(self.level, self.result_actions(), self.root.state.max_turns)
        trace.nodes_expanded = self.expansions
        trace.elapsed = self.elapsed
        final = replay_state(self.level, trace.actions, self.root.state.max_turns)
        trace.utility = self.persona.state_utility(final)
        trace.best_utility = max(self.best_utility, trace.utility) if self.win else self.best_utility
        if trace.best_utility == -math.inf:
            trace.best_utility = trace.utility
        return trace


def replay_state(level: LevelMap, actions, max_turns: int = DEFAULT_MAX_TURNS) -> GameState:
    state = initial_state(level, max_turns)
    for a in actions:
        state = step(state, Action.parse(a) if isinstance(a, str) else a)
    return state


def make_policy(policy) -> UCB1 | ExpressionPolicy:
    if policy is None or policy == "ucb1":
        return UCB1()
    if isinstance(policy, (UCB1, ExpressionPolicy)):
        return policy
    return ExpressionPolicy(policy)


def plan(level: LevelMap, persona: Persona, policy=None, budget: SearchBudget | None = None,
         seed=0, max_turns: int = DEFAULT_MAX_TURNS) -> Playtrace:
    """Build one search tree for ``level`` and return the resulting playthrough."""
    budget = budget or SearchBudget()
    search = Search(level, persona, make_policy(policy), budget, seed, max_turns).run()
    return search.playtrace()
