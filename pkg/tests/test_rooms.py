"""Room templates and instantiation: door carving, category sampling
frequencies, traversability, and the block-puzzle solver against an
exact-state oracle."""

from __future__ import annotations

import math

import pytest

from towerforge.errors import (
    InstantiationFailed,
    MissingTemplate,
    NotAPuzzleRoom,
    ParseError,
)
from towerforge.grammar import NodeType
from towerforge.rng import Stream
from towerforge.rooms import (
    BLOCK_REST,
    CHAR_TILES,
    REJECTION_BOUND,
    SIDES,
    STANDABLE,
    TEMPLATE_SIZES,
    CellSpec,
    DoorKind,
    RoomTemplate,
    TemplateLibrary,
    TileType,
    check_puzzle_solvable,
    default_template_library,
    door_position,
    instantiate_room,
    reachable_on_foot,
    validate_template_library,
)

DIRS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def grid_from_chars(rows) -> tuple[tuple[TileType, ...], ...]:
    table = dict(CHAR_TILES)
    table["+"] = TileType.DOOR_OPEN
    table["L"] = TileType.DOOR_LOCKED
    return tuple(tuple(table[ch] for ch in row) for row in rows)


# ---------------------------------------------------------------------------
# Exact-state oracle for the block puzzle: no region normalization, just a
# BFS over (block position, agent position) with stepwise moves.

def oracle_puzzle_solvable(grid, block=None, agent=None) -> bool:
    n = len(grid)
    blocks = [(r, c) for r, row in enumerate(grid) for c, t in enumerate(row) if t is TileType.BLOCK]
    plates = {(r, c) for r, row in enumerate(grid) for c, t in enumerate(row) if t is TileType.PLATE}
    if block is None:
        assert len(blocks) == 1
        block = blocks[0]
    base = [list(row) for row in grid]
    if base[block[0]][block[1]] is TileType.BLOCK:
        base[block[0]][block[1]] = TileType.FLOOR
    if agent is None:
        doors = [
            (r, c)
            for r, row in enumerate(base)
            for c, t in enumerate(row)
            if t in (TileType.DOOR_OPEN, TileType.DOOR_LOCKED)
        ]
        assert doors
        agent = doors[0]
    standable = {(r, c) for r, row in enumerate(base) for c, t in enumerate(row) if t in STANDABLE}

    def rest_ok(pos):
        r, c = pos
        return 0 < r < n - 1 and 0 < c < len(base[0]) - 1 and base[r][c] in BLOCK_REST

    if agent not in standable or agent == block:
        return False
    seen = {(block, agent)}
    frontier = [(block, agent)]
    while frontier:
        bpos, apos = frontier.pop(0)
        if bpos in plates:
            return True
        nxt = []
        for dr, dc in DIRS:
            step = (apos[0] + dr, apos[1] + dc)
            if step in standable and step != bpos:
                nxt.append((bpos, step))
            mid = (apos[0] + dr, apos[1] + dc)
            land = (apos[0] + 2 * dr, apos[1] + 2 * dc)
            if (
                0 <= mid[0] < n
                and 0 <= mid[1] < len(base[0])
                and base[mid[0]][mid[1]] is TileType.PIT
                and land in standable
                and land != bpos
            ):
                nxt.append((bpos, land))
            if step == bpos:
                target = (bpos[0] + dr, bpos[1] + dc)
                if rest_ok(target):
                    nxt.append((target, bpos))
        for state in nxt:
            if state not in seen:
                seen.add(state)
                frontier.append(state)
    return False


# ---------------------------------------------------------------------------
# Template parsing and doors

def test_door_positions_tie_toward_lower_index():
    assert door_position(3, "N") == (0, 2)
    assert door_position(4, "N") == (0, 2)
    assert door_position(5, "N") == (0, 3)
    assert door_position(3, "S") == (4, 2)
    assert door_position(4, "W") == (2, 0)
    assert door_position(5, "E") == (3, 6)
    with pytest.raises(ValueError):
        door_position(3, "Q")


def test_template_round_trip_and_errors():
    rows = ["?..", ".s.", "..!"]
    t = RoomTemplate.from_rows("t", NodeType.START, rows)
    assert t.to_rows() == rows
    assert t.concrete_count(TileType.SPAWN) == 1
    with pytest.raises(ParseError):
        RoomTemplate.from_rows("bad", NodeType.START, ["..", "..."])
    with pytest.raises(ParseError):
        RoomTemplate.from_rows("bad", NodeType.START, ["Z.."] + rows[1:])
    with pytest.raises(ParseError):
        CellSpec(tile=TileType.FLOOR, category="scatter")
    with pytest.raises(ParseError):
        CellSpec()


def test_default_library_is_complete_and_clean(library):
    assert validate_template_library(library) == []
    assert len(library.templates) == len(NodeType) * len(TEMPLATE_SIZES) * 2
    for kind in NodeType:
        for size in TEMPLATE_SIZES:
            assert len(library.candidates(kind, size)) == 2


def test_library_candidates_missing_combo():
    lib = TemplateLibrary([RoomTemplate.from_rows("only", NodeType.START, ["...", ".s.", "..."])], {})
    with pytest.raises(MissingTemplate):
        lib.candidates(NodeType.EXIT, 3)


def test_library_json_round_trip(library):
    doc = library.to_json()
    again = TemplateLibrary.from_json(doc)
    assert again.to_json() == doc
    assert validate_template_library(again) == []
    with pytest.raises(ParseError):
        TemplateLibrary.from_json({"categories": {}, "templates": [{"name": "x"}]})


def test_validate_flags_each_violation_kind(library):
    def lib_with(template, categories=None):
        return TemplateLibrary([template], categories or library.categories)

    dup = TemplateLibrary(
        [
            RoomTemplate.from_rows("d", NodeType.START, ["...", ".s.", "..."]),
            RoomTemplate.from_rows("d", NodeType.START, ["...", ".s.", "..."]),
        ],
        library.categories,
    )
    assert any(v.code == "DuplicateTemplate" for v in validate_template_library(dup))

    big = RoomTemplate.from_rows("b", NodeType.START, ["....s.", "......", "......", "......", "......", "......"])
    assert any(v.code == "BadSize" for v in validate_template_library(lib_with(big)))

    ghost = TemplateLibrary(
        [RoomTemplate.from_rows("g", NodeType.START, ["?..", ".s.", "..."])], {}
    )
    codes = {v.code for v in validate_template_library(ghost)}
    assert "UnknownCategory" in codes

    nokey = lib_with(RoomTemplate.from_rows("n", NodeType.KEY, ["...", "...", "..."]))
    assert any(v.code == "TileCount" for v in validate_template_library(nokey))

    stray = lib_with(RoomTemplate.from_rows("s", NodeType.NORMAL, ["...", ".k.", "..."]))
    assert any(v.code == "MisplacedTile" for v in validate_template_library(stray))

    empty_cat = TemplateLibrary([], {"scatter": []})
    assert any(v.code == "EmptyCategory" for v in validate_template_library(empty_cat))

    bad_weight = TemplateLibrary([], {"scatter": [(TileType.FLOOR, 0)]})
    assert any(v.code == "BadWeight" for v in validate_template_library(bad_weight))

    reserved = TemplateLibrary([], {"scatter": [(TileType.KEY, 1)]})
    assert any(v.code == "ReservedInCategory" for v in validate_template_library(reserved))

    assert any(v.code == "TooFewTemplates" for v in validate_template_library(empty_cat))


# ---------------------------------------------------------------------------
# Instantiation

def test_instantiation_frames_and_carves_doors(library):
    template = library.candidates(NodeType.NORMAL, 4)[0]
    doors = {"N": DoorKind.OPEN, "E": DoorKind.LOCKED}
    room = instantiate_room(template, doors, library.categories, Stream.for_tag(1, "frame"))
    n = template.size + 2
    assert len(room.grid) == n and all(len(row) == n for row in room.grid)
    for i in range(n):
        for pos in ((0, i), (n - 1, i), (i, 0), (i, n - 1)):
            tile = room.grid[pos[0]][pos[1]]
            if pos == door_position(template.size, "N"):
                assert tile is TileType.DOOR_OPEN
            elif pos == door_position(template.size, "E"):
                assert tile is TileType.DOOR_LOCKED
            else:
                assert tile is TileType.WALL
    # Concrete template cells survive verbatim; category cells draw from their pool.
    pools = {name: {tile for tile, _ in entries} for name, entries in library.categories.items()}
    for r, row in enumerate(template.cells):
        for c, cell in enumerate(row):
            got = room.grid[r + 1][c + 1]
            if cell.tile is not None:
                assert got is cell.tile
            else:
                assert got in pools[cell.category]


def test_instantiation_is_deterministic(library):
    template = library.candidates(NodeType.NORMAL, 5)[1]
    doors = {"S": DoorKind.OPEN}
    a = instantiate_room(template, doors, library.categories, Stream.for_tag(7, "det"))
    b = instantiate_room(template, doors, library.categories, Stream.for_tag(7, "det"))
    assert a.grid == b.grid


def test_instantiation_keeps_anchors_reachable(library):
    # Every door, spawn, stairs, and key tile sits in one walkable region.
    for kind in NodeType:
        for size in TEMPLATE_SIZES:
            for template in library.candidates(kind, size):
                for seed in range(6):
                    doors = {"N": DoorKind.OPEN, "S": DoorKind.OPEN}
                    room = instantiate_room(
                        template, doors, library.categories, Stream.for_tag(seed, "reach", template.name)
                    )
                    blocked = frozenset(room.find_tiles(TileType.BLOCK))
                    anchors = [door_position(size, s) for s in SIDES if s in doors]
                    for tile in (TileType.SPAWN, TileType.STAIRS, TileType.KEY):
                        anchors.extend(room.find_tiles(tile))
                    region = reachable_on_foot(room.grid, anchors[0], blocked)
                    assert all(a in region for a in anchors)


def test_instantiation_category_frequencies(library):
    # A room whose only category cell sits at the center and can never break
    # connectivity, so no rejection skews the draw.
    template = RoomTemplate.from_rows("probe", NodeType.NORMAL, ["...", ".?.", "..."])
    counts: dict[TileType, int] = {}
    n = 3000
    for i in range(n):
        room = instantiate_room(
            template, {"N": DoorKind.OPEN}, library.categories, Stream.for_tag(i, "freq")
        )
        tile = room.grid[2][2]
        counts[tile] = counts.get(tile, 0) + 1
    weights = dict(library.categories["scatter"])
    total = sum(weights.values())
    for tile, weight in weights.items():
        p = weight / total
        sigma = math.sqrt(p * (1 - p) / n)
        assert abs(counts.get(tile, 0) / n - p) < 6 * sigma


def test_instantiation_gives_up_on_impossible_templates(library):
    walled = RoomTemplate.from_rows("walled", NodeType.NORMAL, ["###", "#.#", "###"])
    doors = {"N": DoorKind.OPEN, "S": DoorKind.OPEN}
    with pytest.raises(InstantiationFailed):
        instantiate_room(walled, doors, library.categories, Stream.for_tag(0, "fail"))
    assert REJECTION_BOUND == 32


def test_reachability_jumps_single_pits_only():
    grid = grid_from_chars(
        [
            "#####",
            "#.^.#",
            "#.#^#",
            "#..^#",
            "#####",
        ]
    )
    region = reachable_on_foot(grid, (1, 1))
    assert (1, 3) in region  # one pit, straight jump
    # Landing on a pit is not a landing.
    grid2 = grid_from_chars(["#####", "#.^^#", "#...#", "#...#", "#####"])
    assert (1, 3) not in reachable_on_foot(grid2, (1, 1))
    # Two pits in a row: no double jumps.
    grid3 = grid_from_chars(["######", "#.^^.#", "######"])
    assert (1, 4) not in reachable_on_foot(grid3, (1, 1))


def test_reachability_blocks_are_obstacles():
    grid = grid_from_chars(["#####", "#.B.#", "#####"])
    region = reachable_on_foot(grid, (1, 1), blocked=frozenset({(1, 2)}))
    assert (1, 3) not in region


# ---------------------------------------------------------------------------
# Puzzle solvability vs. the oracle

def test_puzzle_check_agrees_with_oracle_on_all_templates(library):
    door_layouts = [
        {"N": DoorKind.OPEN},
        {"S": DoorKind.OPEN},
        {"N": DoorKind.OPEN, "S": DoorKind.OPEN},
        {"E": DoorKind.LOCKED, "W": DoorKind.OPEN},
        {"N": DoorKind.OPEN, "E": DoorKind.OPEN, "S": DoorKind.OPEN, "W": DoorKind.OPEN},
    ]
    for size in TEMPLATE_SIZES:
        for template in library.candidates(NodeType.PUZZLE, size):
            for doors in door_layouts:
                room = instantiate_room(
                    template, doors, library.categories, Stream.for_tag(size, "pz", template.name)
                )
                solvable, pushes = check_puzzle_solvable(room.grid)
                assert solvable == oracle_puzzle_solvable(room.grid)
                assert solvable  # instantiation already filtered for it
                assert pushes


def test_puzzle_solvable_positions_sweep():
    # One fixed room, every legal explicit block/agent position pair.
    grid = grid_from_chars(
        [
            "##+##",
            "#...#",
            "#.x.#",
            "#...#",
            "##+##",
        ]
    )
    cells = [(r, c) for r in range(1, 4) for c in range(1, 4)]
    for block in cells:
        if grid[block[0]][block[1]] is not TileType.FLOOR:
            continue
        for agent in cells + [(0, 2), (4, 2)]:
            if agent == block or grid[agent[0]][agent[1]] not in STANDABLE:
                continue
            got, _ = check_puzzle_solvable(grid, block=block, agent=agent)
            assert got == oracle_puzzle_solvable(grid, block=block, agent=agent)


def test_puzzle_corner_block_is_dead():
    grid = grid_from_chars(
        [
            "##+##",
            "#B..#",
            "#...#",
            "#..x#",
            "#####",
        ]
    )
    solvable, pushes = check_puzzle_solvable(grid)
    assert not solvable and pushes == []
    assert not oracle_puzzle_solvable(grid)


def test_puzzle_center_push_works():
    grid = grid_from_chars(
        [
            "##+##",
            "#...#",
            "#.Bx#",
            "#...#",
            "#####",
        ]
    )
    solvable, pushes = check_puzzle_solvable(grid)
    assert solvable
    assert pushes == [((2, 2), (2, 3))]
    assert oracle_puzzle_solvable(grid)


def test_puzzle_block_against_wall_is_stuck():
    # Pushing right needs the agent in the wall cell behind the block.
    grid = grid_from_chars(
        [
            "##+##",
            "#...#",
            "#B.x#",
            "#...#",
            "#####",
        ]
    )
    solvable, pushes = check_puzzle_solvable(grid)
    assert not solvable and pushes == []
    assert not oracle_puzzle_solvable(grid)


def test_puzzle_agent_cut_off_from_push_side():
    # The agent enters from the north; pushing the block south onto the plate
    # needs the agent north of the block, but a pit row denies the approach.
    grid = grid_from_chars(
        [
            "##+##",
            "#^^^#",
            "#.B.#",
            "#.x.#",
            "#####",
        ]
    )
    got, _ = check_puzzle_solvable(grid)
    assert got == oracle_puzzle_solvable(grid)


def test_puzzle_push_witness_is_replayable():
    grid = grid_from_chars(
        [
            "##+##",
            "#...#",
            "#.B.#",
            "#.x.#",
            "#####",
        ]
    )
    solvable, pushes = check_puzzle_solvable(grid)
    assert solvable
    base = [list(row) for row in grid]
    block = (2, 2)
    base[2][2] = TileType.FLOOR
    agent = (0, 2)
    for src, dst in pushes:
        assert src == block
        dr, dc = dst[0] - src[0], dst[1] - src[1]
        behind = (src[0] - dr, src[1] - dc)
        region = reachable_on_foot(tuple(tuple(r) for r in base), agent, frozenset({block}))
        assert behind in region
        assert base[dst[0]][dst[1]] in BLOCK_REST
        agent = block
        block = dst
    assert grid[block[0]][block[1]] is TileType.PLATE


def test_puzzle_rejects_non_puzzle_rooms():
    no_block = grid_from_chars(["#+#", "#.#", "###"])
    with pytest.raises(NotAPuzzleRoom):
        check_puzzle_solvable(no_block)
    no_plate = grid_from_chars(["#+##", "#B.#", "#..#", "####"])
    with pytest.raises(NotAPuzzleRoom):
        check_puzzle_solvable(no_plate)
    sealed = grid_from_chars(["####", "#Bx#", "#..#", "####"])
    with pytest.raises(NotAPuzzleRoom):
        check_puzzle_solvable(sealed)  # no door, no agent given
