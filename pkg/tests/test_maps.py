import pytest
from hypothesis import given, settings, strategies as st

from dungeonpersonas.maps import (
    DimensionError, ExitCountError, HeroCountError, UnknownGlyphError, UnmatchedPortalError,
    UnreachableExitError, astar_path, bresenham, bundled_map, bundled_map_names, manhattan,
    parse_map, structural_metrics,
)

FIXTURE_MAPS = [f"map{i:02d}" for i in range(1, 11)]


def brute_force_metrics(text):
    """Second implementation working on raw text: degree counts by direct lookup and
    shortest path by repeated relaxation until nothing changes."""
    grid = text.splitlines()[:20]
    h, w = len(grid), len(grid[0])

    def passable(r, c):
        return 0 <= r < h and 0 <= c < w and grid[r][c] != "#"

    counts = {1: 0, 2: 0, 4: 0}
    cells = []
    for r in range(h):
        for c in range(w):
            if not passable(r, c):
                continue
            cells.append((r, c))
            deg = sum(passable(r + dr, c + dc) for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)))
            if deg in counts:
                counts[deg] += 1
    start = next((r, c) for r, c in cells if grid[r][c] == "H")
    goal = next((r, c) for r, c in cells if grid[r][c] == "E")
    inf = float("inf")
    dist = {cell: inf for cell in cells}
    dist[start] = 0
    changed = True
    while changed:
        changed = False
        for r, c in cells:
            best = min(dist.get((r + dr, c + dc), inf) + 1
                       for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)))
            if best < dist[(r, c)]:
                dist[(r, c)] = best
                changed = True
    return {"shortest": dist[goal], "choke": counts[2], "dead": counts[1], "open": counts[4]}


@pytest.mark.parametrize("name", FIXTURE_MAPS)
def test_structural_metrics_match_brute_force(name):
    lv = bundled_map(name)
    m = structural_metrics(lv)
    ref = brute_force_metrics(lv.format())
    got = {"shortest": m.shortest_path_length, "choke": m.choke_point_count,
           "dead": m.dead_end_count, "open": m.open_area_count}
    assert got == ref


def test_all_bundled_maps_parse():
    names = bundled_map_names()
    assert set(FIXTURE_MAPS) <= set(names)
    for name in names:
        m = bundled_map(name).metrics()
        lv = bundled_map(name)
        assert m.shortest_path_length >= manhattan(lv.hero_spawn, lv.exit)


def test_minimal_open_map():
    rows = ["H" + "." * 9] + ["." * 10] * 18 + ["." * 9 + "E"]
    m = parse_map("\n".join(rows)).metrics()
    assert (m.wall_count, m.shortest_path_length) == (0, 28)


def test_corridor_tiles_are_choke_points():
    lv = bundled_map("corridor")
    m = lv.metrics()
    # 8 tiles in a 1-wide corridor: the 6 interior tiles are choke points, the ends dead ends
    assert (m.choke_point_count, m.dead_end_count, m.open_area_count) == (6, 2, 0)
    assert m.shortest_path_length == 7


def _rows(**edits):
    rows = ["#" * 10] + ["#" + "." * 8 + "#" for _ in range(18)] + ["#" * 10]
    rows[1] = "#H.......#"
    rows[18] = "#.......E#"
    for idx, row in edits.items():
        rows[int(idx[1:])] = row
    return rows


def test_parse_errors_are_distinct():
    good = _rows()
    parse_map("\n".join(good))
    with pytest.raises(DimensionError):
        parse_map("\n".join(good[:-1]))
    with pytest.raises(DimensionError):
        parse_map("\n".join(good[:-1] + ["#" * 11]))
    with pytest.raises(UnknownGlyphError):
        parse_map("\n".join(_rows(r5="#...x....#")))
    with pytest.raises(UnmatchedPortalError):
        parse_map("\n".join(_rows(r5="#...1....#")))
    with pytest.raises(HeroCountError):
        parse_map("\n".join(_rows(r5="#...H....#")))
    with pytest.raises(HeroCountError):
        parse_map("\n".join(_rows(r1="#........#")))
    with pytest.raises(ExitCountError):
        parse_map("\n".join(_rows(r5="#...E....#")))
    with pytest.raises(UnreachableExitError):
        parse_map("\n".join(_rows(r17="##########")))


def test_round_trip_format():
    for name in bundled_map_names():
        lv = bundled_map(name)
        assert parse_map(lv.format()) == lv


tiles = st.tuples(st.integers(0, 19), st.integers(0, 9)).map(lambda rc: rc[0] * 10 + rc[1])


@settings(max_examples=200, deadline=None)
@given(tiles, tiles)
def test_bresenham_endpoints_and_adjacency(a, b):
    line = bresenham(a, b)
    assert line[0] == a and line[-1] == b
    for p, q in zip(line, line[1:]):
        dr, dc = abs(p // 10 - q // 10), abs(p % 10 - q % 10)
        assert max(dr, dc) == 1


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(FIXTURE_MAPS), tiles, tiles)
def test_line_of_sight_symmetric_and_astar_optimal(name, a, b):
    lv = bundled_map(name)
    if lv.walls[a] or lv.walls[b]:
        return
    assert lv.line_of_sight(a, b) == lv.line_of_sight(b, a)
    assert lv.line_of_sight(a, b) == bool(lv.los_table[a * 200 + b])
    d = lv.bfs_distances(a)[b]
    path = astar_path(lv, a, b)
    if d < 0:
        assert path == []
    else:
        assert len(path) - 1 == d
        assert all(manhattan(p, q) == 1 for p, q in zip(path, path[1:]))
