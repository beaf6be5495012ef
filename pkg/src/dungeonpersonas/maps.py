"""Level files: parsing, validation and structural metrics.

A level is 20 lines of 10 glyphs::

    #  wall          .  floor         H  hero spawn    E  exit
    P  potion        T  treasure      ^  trap          1 2 3  portal pairs
    g  goblin        w  wizard        b  blob          o  ogre    m  minitaur

Objects and monsters stand on implicit floor.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from pathlib import Path

WIDTH = 10
HEIGHT = 20
N_TILES = WIDTH * HEIGHT

GLYPHS = frozenset("#.HEPT^123gwbom")
MONSTER_GLYPHS = "gwbom"
PORTAL_GLYPHS = "123"

# (name, delta) in the fixed N, S, E, W order used everywhere for tie-breaking
DIRECTIONS = (("N", -WIDTH), ("S", WIDTH), ("E", 1), ("W", -1))


class MapError(ValueError):
    """Base class for level parse errors."""


class DimensionError(MapError):
    pass


class UnknownGlyphError(MapError):
    pass


class UnmatchedPortalError(MapError):
    pass


class HeroCountError(MapError):
    pass


class ExitCountError(MapError):
    pass


class UnreachableExitError(MapError):
    pass


def to_pos(row: int, col: int) -> int:
    return row * WIDTH + col


def to_rc(pos: int) -> tuple[int, int]:
    return divmod(pos, WIDTH)


def manhattan(a: int, b: int) -> int:
    ar, ac = divmod(a, WIDTH)
    br, bc = divmod(b, WIDTH)
    return abs(ar - br) + abs(ac - bc)


MANHATTAN = tuple(manhattan(a, b) for a in range(N_TILES) for b in range(N_TILES))


def step_pos(pos: int, delta: int) -> int:
    """Destination of a cardinal step, or -1 when it leaves the grid."""
    col = pos % WIDTH
    if delta == 1 and col == WIDTH - 1:
        return -1
    if delta == -1 and col == 0:
        return -1
    dest = pos + delta
    if dest < 0 or dest >= N_TILES:
        return -1
    return dest


def bresenham(a: int, b: int) -> list[int]:
    """Tiles on the Bresenham line between tile centers ``a`` and ``b``, inclusive."""
    r0, c0 = divmod(a, WIDTH)
    r1, c1 = divmod(b, WIDTH)
    dr = abs(r1 - r0)
    dc = abs(c1 - c0)
    sr = 1 if r1 > r0 else -1
    sc = 1 if c1 > c0 else -1
    err = dc - dr
    out = []
    r, c = r0, c0
    while True:
        out.append(r * WIDTH + c)
        if r == r1 and c == c1:
            return out
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr


@dataclass(frozen=True)
class LevelMetrics:
    wall_count: int
    open_area_count: int
    choke_point_count: int
    dead_end_count: int
    shortest_path_length: int
    potions: int
    treasures: int
    traps: int
    portal_pairs: int
    goblins: int
    wizards: int
    blobs: int
    ogres: int
    minitaurs: int

    @property
    def monsters(self) -> int:
        # minitaurs cannot be slain, so they never count as interactive
        return self.goblins + self.wizards + self.blobs + self.ogres

    @property
    def interactive_objects(self) -> int:
        return self.potions + self.treasures + self.monsters

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["monsters"] = self.monsters
        d["interactive_objects"] = self.interactive_objects
        return d


@dataclass(frozen=True, eq=True)
class LevelMap:
    """A validated 10x20 level. Equality and hashing are on ``rows`` only."""

    rows: tuple[str, ...]
    name: str = "unnamed"

    def __eq__(self, other):
        return isinstance(other, LevelMap) and self.rows == other.rows

    def __hash__(self):
        return hash(self.rows)

    def glyph(self, pos: int) -> str:
        return self.rows[pos // WIDTH][pos % WIDTH]

    @cached_property
    def walls(self) -> tuple[bool, ...]:
        return tuple(self.glyph(p) == "#" for p in range(N_TILES))

    def _positions(self, glyphs: str) -> tuple[int, ...]:
        return tuple(p for p in range(N_TILES) if self.glyph(p) in glyphs)

    @cached_property
    def hero_spawn(self) -> int:
        return self._positions("H")[0]

    @cached_property
    def exit(self) -> int:
        return self._positions("E")[0]

    @cached_property
    def potions(self) -> tuple[int, ...]:
        return self._positions("P")

    @cached_property
    def treasures(self) -> tuple[int, ...]:
        return self._positions("T")

    @cached_property
    def traps(self) -> frozenset[int]:
        return frozenset(self._positions("^"))

    @cached_property
    def portals(self) -> dict[int, int]:
        """Maps each portal tile to its partner."""
        out = {}
        for g in PORTAL_GLYPHS:
            ps = self._positions(g)
            if len(ps) == 2:
                out[ps[0]] = ps[1]
                out[ps[1]] = ps[0]
        return out

    @cached_property
    def monsters(self) -> tuple[tuple[str, int], ...]:
        """(kind glyph, position) in row-major order, which is also NPC turn order."""
        return tuple((self.glyph(p), p) for p in self._positions(MONSTER_GLYPHS))

    @cached_property
    def killable_monsters(self) -> int:
        return sum(1 for k, _ in self.monsters if k != "m")

    @cached_property
    def neighbors(self) -> tuple[tuple[tuple[str, int], ...], ...]:
        """Per tile, the passable (direction, destination) pairs in N, S, E, W order."""
        walls = self.walls
        out = []
        for p in range(N_TILES):
            nb = []
            for name, delta in DIRECTIONS:
                q = step_pos(p, delta)
                if q >= 0 and not walls[q]:
                    nb.append((name, q))
            out.append(tuple(nb))
        return tuple(out)

    def bfs_distances(self, source: int) -> list[int]:
        """Shortest 4-connected path length from ``source``; -1 where unreachable."""
        dist = [-1] * N_TILES
        dist[source] = 0
        queue = deque([source])
        nbs = self.neighbors
        while queue:
            p = queue.popleft()
            d = dist[p] + 1
            for _, q in nbs[p]:
                if dist[q] < 0:
                    dist[q] = d
                    queue.append(q)
        return dist

    @cached_property
    def exit_distances(self) -> tuple[int, ...]:
        return tuple(self.bfs_distances(self.exit))

    @cached_property
    def max_exit_distance(self) -> int:
        return max(self.exit_distances)

    @cached_property
    def los_table(self) -> bytes:
        """Dense ``a * N_TILES + b`` lookup of :meth:`line_of_sight` over all tile pairs."""
        walls = self.walls
        table = bytearray(N_TILES * N_TILES)
        for a in range(N_TILES):
            if walls[a]:
                continue
            for b in range(a, N_TILES):
                if walls[b]:
                    continue
                if not any(walls[p] for p in bresenham(a, b)):
                    table[a * N_TILES + b] = 1
                    table[b * N_TILES + a] = 1
        return bytes(table)

    def line_of_sight(self, a: int, b: int) -> bool:
        """True iff no wall lies on the Bresenham line between ``a`` and ``b``.

        The line is always traced from the lower to the higher index, which makes
        the relation symmetric.
        """
        if a > b:
            a, b = b, a
        walls = self.walls
        return not any(walls[p] for p in bresenham(a, b))

    @cached_property
    def _astar_cache(self) -> dict:
        return {}

    def astar_next(self, start: int, goal: int) -> int:
        """First step of the A* path from ``start`` to ``goal`` (``start`` if none)."""
        key = start * N_TILES + goal
        cache = self._astar_cache
        nxt = cache.get(key)
        if nxt is None:
            path = astar_path(self, start, goal)
            nxt = path[1] if len(path) > 1 else start
            cache[key] = nxt
        return nxt

    def format(self) -> str:
        return "\n".join(self.rows) + "\n"

    def metrics(self) -> LevelMetrics:
        return structural_metrics(self)


def astar_path(level: LevelMap, start: int, goal: int) -> list[int]:
    """A* on the 4-connected grid with unit costs and a Manhattan heuristic.

    Open-list ties are broken on (f, h, row-major position) so the returned path is
    unique. Returns ``[]`` if the goal is unreachable.
    """
    import heapq

    if start == goal:
        return [start]
    nbs = level.neighbors
    g = {start: 0}
    parent = {start: -1}
    heap = [(manhattan(start, goal), manhattan(start, goal), start)]
    closed = set()
    while heap:
        _, _, p = heapq.heappop(heap)
        if p in closed:
            continue
        if p == goal:
            path = [p]
            while parent[p] >= 0:
                p = parent[p]
                path.append(p)
            return path[::-1]
        closed.add(p)
        gp = g[p] + 1
        for _, q in nbs[p]:
            if q in closed:
                continue
            if gp < g.get(q, 1 << 30):
                g[q] = gp
                parent[q] = p
                h = manhattan(q, goal)
                heapq.heappush(heap, (gp + h, h, q))
    return []


def parse_map(text: str, name: str = "unnamed") -> LevelMap:
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) != HEIGHT:
        raise DimensionError(f"expected {HEIGHT} lines, got {len(lines)}")
    for i, line in enumerate(lines):
        if len(line) != WIDTH:
            raise DimensionError(f"line {i}: expected {WIDTH} characters, got {len(line)}")
        for j, ch in enumerate(line):
            if ch not in GLYPHS:
                raise UnknownGlyphError(f"line {i}, column {j}: unknown glyph {ch!r}")
    flat = "".join(lines)
    if flat.count("H") != 1:
        raise HeroCountError(f"expected exactly one 'H', found {flat.count('H')}")
    if flat.count("E") != 1:
        raise ExitCountError(f"expected exactly one 'E', found {flat.count('E')}")
    for g in PORTAL_GLYPHS:
        n = flat.count(g)
        if n not in (0, 2):
            raise UnmatchedPortalError(f"portal {g!r} appears {n} time(s); needs exactly 2")
    level = LevelMap(tuple(lines), name)
    if level.bfs_distances(level.hero_spawn)[level.exit] < 0:
        raise UnreachableExitError("exit is not reachable from the hero spawn")
    return level


def load_map(path: str | Path) -> LevelMap:
    path = Path(path)
    return parse_map(path.read_text(), name=path.stem)


def bundled_map_names() -> list[str]:
    root = resources.files("dungeonpersonas") / "maps"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".map"))


def bundled_map(name: str) -> LevelMap:
    root = resources.files("dungeonpersonas") / "maps"
    return parse_map((root / f"{name}.map").read_text(), name=name)


def resolve_map(spec: str) -> LevelMap:
    """Load ``spec`` as a file path, falling back to a bundled map name."""
    p = Path(spec)
    if p.is_file():
        return load_map(p)
    stem = p.stem if p.suffix == ".map" else spec
    if stem in bundled_map_names():
        return bundled_map(stem)
    raise FileNotFoundError(spec)


def structural_metrics(level: LevelMap) -> LevelMetrics:
    walls = level.walls
    nbs = level.neighbors
    open_area = choke = dead = 0
    for p in range(N_TILES):
        if walls[p]:
            continue
        degree = len(nbs[p])
        if degree == 4:
            open_area += 1
        elif degree == 2:
            choke += 1
        elif degree == 1:
            dead += 1
    kinds = [k for k, _ in level.monsters]
    return LevelMetrics(
        wall_count=sum(walls),
        open_area_count=open_area,
        choke_point_count=choke,
        dead_end_count=dead,
        shortest_path_length=level.bfs_distances(level.hero_spawn)[level.exit],
        potions=len(level.potions),
        treasures=len(level.treasures),
        traps=len(level.traps),
        portal_pairs=len(level.portals) // 2,
        goblins=kinds.count("g"),
        wizards=kinds.count("w"),
        blobs=kinds.count("b"),
        ogres=kinds.count("o"),
        minitaurs=kinds.count("m"),
    )
