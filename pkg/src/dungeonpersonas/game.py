"""Deterministic turn-based rules for the dungeon game.

The hero acts first each turn, then every monster acts in the row-major order of
its original spawn tile. States are immutable values; :func:`step` returns a new
state.

Collision rule: a character entering a tile held by a hostile character trades
collision damage with it simultaneously. The mover only takes the tile if the
defender dies. Knocked-out minitaurs are traversable and never fight.
"""
from __future__ import annotations

import hashlib
from typing import NamedTuple

from .maps import DIRECTIONS, MANHATTAN, N_TILES, LevelMap, step_pos

MAX_HP = 10
DEFAULT_MAX_TURNS = 1000
KNOCKOUT_ROUNDS = 3
WIZARD_RANGE = 5
MAX_BLOB_LEVEL = 3

RUNNING = "running"
WON = "won"
DEAD = "dead"
CAPPED = "turn-capped"

# collision damage dealt by each monster kind; blobs deal their level
COLLISION_DAMAGE = {"g": 1, "w": 0, "o": 2, "m": 1}
MONSTER_NAMES = {"g": "goblin", "w": "wizard", "b": "blob", "o": "ogre", "m": "minitaur"}
_STARTING_HP = {"g": 1, "w": 1, "b": 1, "o": 2, "m": 1}

# NPC record layout (plain lists while a step is being resolved)
_ORD, _KIND, _POS, _HP, _KO = range(5)

# EventCounters layout
ST, PD, TO, MTK, MS, JT, TU, TS = range(8)


class IllegalActionError(ValueError):
    """An action that is not in ``legal_actions(state)`` was passed to ``step``."""


class Action(NamedTuple):
    """``kind`` is "move" (arg: N/S/E/W) or "throw" (arg: spawn ordinal of the target)."""

    kind: str
    arg: object

    def __str__(self):
        return self.arg if self.kind == "move" else f"J{self.arg}"

    @classmethod
    def parse(cls, text: str) -> "Action":
        text = text.strip()
        if text in MOVES:
            return MOVES[text]
        if text[:1] == "J" and text[1:].isdigit():
            return cls("throw", int(text[1:]))
        raise ValueError(f"bad action token {text!r}")


MOVES = {name: Action("move", name) for name, _ in DIRECTIONS}
_DELTA = dict(DIRECTIONS)


class EventCounters(NamedTuple):
    steps_taken: int = 0
    potions_drunk: int = 0
    treasures_opened: int = 0
    minitaur_knockouts: int = 0
    monsters_slain: int = 0
    javelins_thrown: int = 0
    teleports_used: int = 0
    traps_sprung: int = 0


class Npc(NamedTuple):
    ordinal: int
    kind: str
    pos: int
    hp: int
    knockout: int

    @property
    def blob_level(self) -> int:
        return self.hp if self.kind == "b" else 0


class GameState:
    """One snapshot of a playthrough. Treat as immutable."""

    __slots__ = (
        "level", "hero_pos", "hp", "has_javelin", "javelin_pos", "potions",
        "treasures", "_npcs", "_c", "score", "turn", "status", "max_turns",
        "blob_potions", "ogre_treasures",
    )

    def __init__(self, level, hero_pos, hp, has_javelin, javelin_pos, potions,
                 treasures, npcs, counters, score, turn, status, max_turns,
                 blob_potions=0, ogre_treasures=0):
        self.level = level
        self.hero_pos = hero_pos
        self.hp = hp
        self.has_javelin = has_javelin
        self.javelin_pos = javelin_pos
        self.potions = potions
        self.treasures = treasures
        self._npcs = npcs
        self._c = counters
        self.score = score
        self.turn = turn
        self.status = status
        self.max_turns = max_turns
        self.blob_potions = blob_potions
        self.ogre_treasures = ogre_treasures

    @property
    def npcs(self) -> tuple[Npc, ...]:
        """Living NPCs in spawn order."""
        return tuple(Npc(*n) for n in self._npcs)

    @property
    def counters(self) -> EventCounters:
        return EventCounters(*self._c)

    @property
    def alive(self) -> bool:
        return self.status != DEAD

    def npc(self, ordinal: int) -> Npc | None:
        for n in self.npcs:
            if n.ordinal == ordinal:
                return n
        return None

    def replace(self, **kw) -> "GameState":
        fields = {k: getattr(self, k) for k in self.__slots__}
        fields["counters"] = fields.pop("_c")
        fields["npcs"] = fields.pop("_npcs")
        if "counters" in kw:
            kw["counters"] = tuple(kw["counters"])
        if "npcs" in kw:
            kw["npcs"] = tuple(tuple(n) for n in kw["npcs"])
        fields.update(kw)
        return GameState(**fields)

    def __eq__(self, other):
        return isinstance(other, GameState) and _key(self) == _key(other)

    def __hash__(self):
        return hash(_key(self))

    def __repr__(self):
        return (f"GameState(turn={self.turn}, status={self.status}, hero={self.hero_pos}, "
                f"hp={self.hp}, npcs={len(self.npcs)})")


def initial_state(level: LevelMap, max_turns: int = DEFAULT_MAX_TURNS) -> GameState:
    npcs = tuple(
        (i, kind, pos, _STARTING_HP[kind], 0) for i, (kind, pos) in enumerate(level.monsters)
    )
    return GameState(
        level=level, hero_pos=level.hero_spawn, hp=MAX_HP, has_javelin=True,
        javelin_pos=-1, potions=frozenset(level.potions), treasures=frozenset(level.treasures),
        npcs=npcs, counters=(0,) * 8, score=0, turn=0, status=RUNNING, max_turns=max_turns,
    )


def _key(s: GameState) -> tuple:
    return (s.level.rows, s.hero_pos, s.hp, s.has_javelin, s.javelin_pos,
            tuple(sorted(s.potions)), tuple(sorted(s.treasures)), s._npcs,
            tuple(s._c), s.score, s.turn, s.status, s.max_turns, s.blob_potions,
            s.ogre_treasures)


def state_hash(state: GameState) -> int:
    """64-bit digest over the whole state."""
    return int.from_bytes(hashlib.blake2b(repr(_key(state)).encode(), digest_size=8).digest(), "big")


def line_of_sight(state: GameState, a: int, b: int) -> bool:
    return state.level.line_of_sight(a, b)


def is_terminal(state: GameState) -> str:
    return state.status


def legal_actions(state: GameState) -> list[Action]:
    if state.status != RUNNING:
        return []
    pos = state.hero_pos
    out = [MOVES[name] for name, _ in state.level.neighbors[pos]]
    if state.has_javelin:
        los = state.level.los_table
        row = pos * N_TILES
        for n in state._npcs:
            if n[_KIND] == "m" and n[_KO] > 0:
                continue
            if los[row + n[_POS]]:
                out.append(Action("throw", n[_ORD]))
    return out


def _blocker(npcs, pos, skip=None):
    """The NPC that physically holds ``pos`` (knocked-out minitaurs do not)."""
    for n in npcs:
        if n is not skip and n[_POS] == pos and n[_HP] > 0 and not (n[_KIND] == "m" and n[_KO] > 0):
            return n
    return None


def _collision_damage(n) -> int:
    return n[_HP] if n[_KIND] == "b" else COLLISION_DAMAGE[n[_KIND]]


class _Turn:
    """Mutable scratch space for resolving one turn."""

    __slots__ = ("level", "hero", "hp", "has_jav", "jav_pos", "potions", "treasures",
                 "npcs", "c", "score", "status", "blob_potions", "ogre_treasures")

    def hurt_hero(self, dmg):
        if dmg <= 0:
            return
        self.hp -= dmg
        if self.hp <= 0:
            self.hp = 0
            self.status = DEAD

    def hurt_npc(self, n, dmg, by_hero):
        """Apply damage to an NPC; returns True if it died."""
        if dmg <= 0:
            return False
        if n[_KIND] == "m":
            n[_KO] = KNOCKOUT_ROUNDS
            if by_hero:
                self.c[MTK] += 1
            return False
        n[_HP] -= dmg
        if n[_HP] <= 0:
            n[_HP] = 0
            if by_hero:
                self.c[MS] += 1
            return True
        return False

    def npc_enters(self, n, dest):
        """Move NPC ``n`` onto an unoccupied tile and resolve what lies there."""
        n[_POS] = dest
        kind = n[_KIND]
        if kind == "b" and dest in self.potions:
            self.potions = self.potions - {dest}
            self.blob_potions += 1
        elif kind == "o" and dest in self.treasures:
            self.treasures = self.treasures - {dest}
            self.ogre_treasures += 1
        if dest in self.level.traps:
            self.hurt_npc(n, 1, by_hero=False)

    def hero_enters(self, dest):
        self.hero = dest
        level = self.level
        if self.jav_pos == dest:
            self.has_jav = True
            self.jav_pos = -1
        if dest in self.potions:
            self.potions = self.potions - {dest}
            self.hp = min(MAX_HP, self.hp + 1)
            self.c[PD] += 1
        if dest in self.treasures:
            self.treasures = self.treasures - {dest}
            self.score += 1
            self.c[TO] += 1
        if dest in level.traps:
            self.c[TS] += 1
            self.hurt_hero(1)
            if self.status == DEAD:
                return
        other = level.portals.get(dest)
        if other is not None and _blocker(self.npcs, other) is None:
            self.hero = other
            self.c[TU] += 1
            if self.jav_pos == other:
                self.has_jav = True
                self.jav_pos = -1
        if self.hero == level.exit:
            self.status = WON

    def step_toward(self, n, target, passable):
        """Cardinal step (N, S, E, W priority) that reduces Manhattan distance and passes
        ``passable``; returns -1 to stand still."""
        pos = n[_POS]
        here = MANHATTAN[pos * N_TILES + target]
        for _, q in self.level.neighbors[pos]:
            if MANHATTAN[q * N_TILES + target] < here and passable(q):
                return q
        return -1


def step(state: GameState, action: Action) -> GameState:
    """Resolve one full turn: the hero's action, then every NPC in spawn order."""
    if state.status != RUNNING:
        raise IllegalActionError(f"game is over ({state.status})")
    level = state.level
    t = _Turn()
    t.level = level
    t.hero = state.hero_pos
    t.hp = state.hp
    t.has_jav = state.has_javelin
    t.jav_pos = state.javelin_pos
    t.potions = state.potions
    t.treasures = state.treasures
    t.npcs = [list(n) for n in state._npcs]
    t.c = list(state._c)
    t.score = state.score
    t.status = RUNNING
    t.blob_potions = state.blob_potions
    t.ogre_treasures = state.ogre_treasures

    kind = action[0]
    if kind == "move":
        delta = _DELTA.get(action[1])
        dest = step_pos(t.hero, delta) if delta is not None else -1
        if dest < 0 or level.walls[dest]:
            raise IllegalActionError(f"cannot move {action[1]} from {t.hero}")
        t.c[ST] += 1
        target = _blocker(t.npcs, dest)
        if target is None:
            t.hero_enters(dest)
        else:
            t.hurt_hero(_collision_damage(target))
            died = t.hurt_npc(target, 1, by_hero=True)
            if died and t.status == RUNNING:
                t.hero_enters(dest)
    elif kind == "throw":
        target = None
        for n in t.npcs:
            if n[_ORD] == action[1]:
                target = n
        if (not t.has_jav or target is None or (target[_KIND] == "m" and target[_KO] > 0)
                or not level.los_table[t.hero * N_TILES + target[_POS]]):
            raise IllegalActionError(f"cannot throw at {action[1]}")
        t.has_jav = False
        t.jav_pos = target[_POS]
        t.c[JT] += 1
        t.hurt_npc(target, 1, by_hero=True)
    else:
        raise IllegalActionError(f"unknown action {action!r}")

    if t.status == RUNNING:
        _npc_phase(t)

    turn = state.turn + 1
    status = t.status
    if status == RUNNING and turn >= state.max_turns:
        status = CAPPED
    return GameState(
        level, t.hero, t.hp, t.has_jav, t.jav_pos, t.potions, t.treasures,
        tuple(tuple(n) for n in t.npcs if n[_HP] > 0), tuple(t.c), t.score, turn, status,
        state.max_turns, t.blob_potions, t.ogre_treasures,
    )


def _npc_phase(t: _Turn) -> None:
    level = t.level
    los = level.los_table
    npcs = t.npcs
    for n in npcs:
        if n[_HP] <= 0:
            continue
        kind = n[_KIND]
        pos = n[_POS]
        hero = t.hero

        if kind == "m":
            if n[_KO] > 0:
                n[_KO] -= 1
                continue
            if pos == hero:
                continue
            dest = level.astar_next(pos, hero)
            if dest == pos:
                continue
            if dest == hero:
                t.hurt_hero(COLLISION_DAMAGE["m"])
                t.hurt_npc(n, 1, by_hero=True)
            elif _blocker(npcs, dest, skip=n) is None:
                t.npc_enters(n, dest)

        elif kind == "g" or kind == "w":
            if not los[pos * N_TILES + hero]:
                continue
            if kind == "w" and MANHATTAN[pos * N_TILES + hero] <= WIZARD_RANGE:
                t.hurt_hero(1)
            else:
                dest = -1
                here = MANHATTAN[pos * N_TILES + hero]
                for _, q in level.neighbors[pos]:
                    if MANHATTAN[q * N_TILES + hero] < here and (
                            q == hero or _blocker(npcs, q, skip=n) is None):
                        dest = q
                        break
                if dest < 0:
                    continue
                if dest == hero:
                    t.hurt_hero(_collision_damage(n))
                    t.hurt_npc(n, 1, by_hero=True)
                else:
                    t.npc_enters(n, dest)

        else:  # blob or ogre chases its favourite object or the hero
            items = t.potions if kind == "b" else t.treasures
            best = None
            row = pos * N_TILES
            if los[row + hero]:
                best = (MANHATTAN[row + hero], 1, hero)
            for item in items:
                if los[row + item]:
                    cand = (MANHATTAN[row + item], 0, item)
                    if best is None or cand < best:
                        best = cand
            if best is None:
                continue
            target = best[2]
            if kind == "b":
                def passable(q):
                    b = _blocker(npcs, q, skip=n)
                    return b is None or b[_KIND] == "b"
            else:
                def passable(q):
                    return True
            dest = t.step_toward(n, target, passable)
            if dest < 0:
                continue
            if dest == hero:
                t.hurt_hero(_collision_damage(n))
                t.hurt_npc(n, 1, by_hero=True)
                continue
            other = _blocker(npcs, dest, skip=n)
            if other is None:
                t.npc_enters(n, dest)
            elif kind == "b":
                other[_HP] = min(MAX_BLOB_LEVEL, other[_HP] + n[_HP])
                n[_HP] = 0
            else:
                # ogres batter whatever stands in their way
                n_dmg = _collision_damage(other)
                other_died = t.hurt_npc(other, COLLISION_DAMAGE["o"], by_hero=False)
                died = t.hurt_npc(n, n_dmg, by_hero=False)
                if other_died and not died:
                    t.npc_enters(n, dest)

        if t.status != RUNNING:
            return
