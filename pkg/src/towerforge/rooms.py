"""Room templates and their instantiation into concrete tile grids.

A template is an n x n abstract grid (n in {3, 4, 5}) of concrete tiles and
weighted category cells.  Instantiation resolves categories through a stream,
wraps the result in a wall border with carved door tiles, and rejects samples
until every door (plus spawn, stairs, key) is mutually reachable on foot,
counting single-tile jumps across pits.  Puzzle rooms must additionally be
solvable by block pushes.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterable, Optional

from .errors import InstantiationFailed, MissingTemplate, NotAPuzzleRoom, ParseError
from .grammar import NodeType, Violation
from .rng import Stream

TEMPLATE_SIZES = (3, 4, 5)
REJECTION_BOUND = 32


class TileType(IntEnum):
    FLOOR = 0
    WALL = 1
    PIT = 2
    STAIRS = 3
    SPAWN = 4
    KEY = 5
    ORB = 6
    BLOCK = 7
    PLATE = 8
    ENEMY = 9
    PLATFORM = 10
    DECOR = 11
    DOOR_OPEN = 12
    DOOR_LOCKED = 13


# Tiles an agent can stand on.  BLOCK is walkable only after being pushed away,
# so it stays out of this set for static reachability.
STANDABLE = frozenset(
    {
        TileType.FLOOR,
        TileType.STAIRS,
        TileType.SPAWN,
        TileType.KEY,
        TileType.ORB,
        TileType.PLATE,
        TileType.ENEMY,
        TileType.PLATFORM,
        TileType.DECOR,
        TileType.DOOR_OPEN,
        TileType.DOOR_LOCKED,
    }
)

# A pushed block may only come to rest on these.
BLOCK_REST = frozenset({TileType.FLOOR, TileType.DECOR, TileType.PLATE})


class DoorKind(Enum):
    OPEN = "Open"
    LOCKED = "Locked"


SIDES = ("N", "E", "S", "W")
SIDE_STEP = {"N": (-1, 0), "E": (0, 1), "S": (1, 0), "W": (0, -1)}


@dataclass(frozen=True)
class CellSpec:
    tile: Optional[TileType] = None
    category: Optional[str] = None

    def __post_init__(self):
        if (self.tile is None) == (self.category is None):
            raise ParseError("cell must be exactly one of concrete tile or category")


CHAR_TILES = {
    ".": TileType.FLOOR,
    "#": TileType.WALL,
    "^": TileType.PIT,
    ">": TileType.STAIRS,
    "s": TileType.SPAWN,
    "k": TileType.KEY,
    "o": TileType.ORB,
    "B": TileType.BLOCK,
    "x": TileType.PLATE,
    "e": TileType.ENEMY,
    "=": TileType.PLATFORM,
    ",": TileType.DECOR,
}

CHAR_CATEGORIES = {
    "?": "scatter",
    "!": "hazard",
}

Category = list[tuple[TileType, int]]


@dataclass(frozen=True)
class RoomTemplate:
    name: str
    kind: NodeType
    size: int
    cells: tuple[tuple[CellSpec, ...], ...]

    @classmethod
    def from_rows(cls, name: str, kind: NodeType, rows: Iterable[str]) -> "RoomTemplate":
        rows = list(rows)
        size = len(rows)
        cells = []
        for row in rows:
            if len(row) != size:
                raise ParseError(f"template {name}: grid is not square")
            parsed = []
            for ch in row:
                if ch in CHAR_TILES:
                    parsed.append(CellSpec(tile=CHAR_TILES[ch]))
                elif ch in CHAR_CATEGORIES:
                    parsed.append(CellSpec(category=CHAR_CATEGORIES[ch]))
                else:
                    raise ParseError(f"template {name}: unknown cell char {ch!r}")
            cells.append(tuple(parsed))
        return cls(name, kind, size, tuple(cells))

    def to_rows(self) -> list[str]:
        tile_chars = {v: k for k, v in CHAR_TILES.items()}
        cat_chars = {v: k for k, v in CHAR_CATEGORIES.items()}
        rows = []
        for row in self.cells:
            chars = []
            for cell in row:
                if cell.tile is not None:
                    chars.append(tile_chars[cell.tile])
                else:
                    chars.append(cat_chars[cell.category])
            rows.append("".join(chars))
        return rows

    def concrete_count(self, tile: TileType) -> int:
        return sum(1 for row in self.cells for c in row if c.tile is tile)


@dataclass
class RoomInstance:
    """Concrete (size+2) x (size+2) grid with border walls and carved doors."""

    template_name: str
    kind: NodeType
    size: int
    grid: tuple[tuple[TileType, ...], ...]
    doors: dict[str, DoorKind]

    def door_position(self, side: str) -> tuple[int, int]:
        return door_position(self.size, side)

    def find_tiles(self, tile: TileType) -> list[tuple[int, int]]:
        return [
            (r, c)
            for r, row in enumerate(self.grid)
            for c, t in enumerate(row)
            if t is tile
        ]


def door_position(size: int, side: str) -> tuple[int, int]:
    """Border coordinate of a door; even sizes resolve toward the lower index."""
    mid = 1 + (size - 1) // 2
    if side == "N":
        return (0, mid)
    if side == "S":
        return (size + 1, mid)
    if side == "W":
        return (mid, 0)
    if side == "E":
        return (mid, size + 1)
    raise ValueError(f"unknown side {side!r}")


class TemplateLibrary:
    def __init__(self, templates: Iterable[RoomTemplate], categories: dict[str, Category]):
        self.templates = list(templates)
        self.categories = dict(categories)
        self._by_key: dict[tuple[NodeType, int], list[RoomTemplate]] = {}
        for t in self.templates:
            self._by_key.setdefault((t.kind, t.size), []).append(t)
        for group in self._by_key.values():
            group.sort(key=lambda t: t.name)

    def candidates(self, kind: NodeType, size: int) -> list[RoomTemplate]:
        group = self._by_key.get((kind, size), [])
        if not group:
            raise MissingTemplate(f"no template for kind={kind.value} size={size}")
        return group

    def to_json(self) -> dict:
        return {
            "categories": {
                name: [[tile.name, weight] for tile, weight in entries]
                for name, entries in sorted(self.categories.items())
            },
            "templates": [
                {"name": t.name, "kind": t.kind.value, "rows": t.to_rows()}
                for t in sorted(self.templates, key=lambda t: t.name)
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "TemplateLibrary":
        try:
            categories = {
                name: [(TileType[tile], int(weight)) for tile, weight in entries]
                for name, entries in data["categories"].items()
            }
            templates = [
                RoomTemplate.from_rows(td["name"], NodeType(td["kind"]), td["rows"])
                for td in data["templates"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed template library ({exc})")
        return cls(templates, categories)


# Tiles that must never appear through a category draw; each is load-bearing
# for exactly one room kind.
_RESERVED_TILES = frozenset(
    {TileType.SPAWN, TileType.STAIRS, TileType.KEY, TileType.BLOCK, TileType.PLATE}
)

_KIND_REQUIREMENTS: dict[NodeType, list[tuple[TileType, int, int | None]]] = {
    NodeType.START: [(TileType.SPAWN, 1, 1)],
    NodeType.EXIT: [(TileType.STAIRS, 1, 1)],
    NodeType.KEY: [(TileType.KEY, 1, 1)],
    NodeType.PUZZLE: [(TileType.BLOCK, 1, 1), (TileType.PLATE, 1, None)],
}


def validate_template_library(library: TemplateLibrary) -> list[Violation]:
    out: list[Violation] = []
    names = set()
    for t in library.templates:
        if t.name in names:
            out.append(Violation("DuplicateTemplate", f"template name {t.name!r} reused"))
        names.add(t.name)
        if t.size not in TEMPLATE_SIZES:
            out.append(Violation("BadSize", f"{t.name}: size {t.size} not in {TEMPLATE_SIZES}"))
        for row in t.cells:
            for cell in row:
                if cell.category is not None and cell.category not in library.categories:
                    out.append(
                        Violation("UnknownCategory", f"{t.name}: category {cell.category!r} undefined")
                    )
        for tile, lo, hi in _KIND_REQUIREMENTS.get(t.kind, []):
            n = t.concrete_count(tile)
            if n < lo or (hi is not None and n > hi):
                out.append(
                    Violation(
                        "TileCount",
                        f"{t.name}: expected {lo}{'' if hi == lo else '+'} {tile.name}, found {n}",
                    )
                )
        for tile in _RESERVED_TILES:
            owner = {
                TileType.SPAWN: NodeType.START,
                TileType.STAIRS: NodeType.EXIT,
                TileType.KEY: NodeType.KEY,
                TileType.BLOCK: NodeType.PUZZLE,
                TileType.PLATE: NodeType.PUZZLE,
            }[tile]
            if t.kind is not owner and t.concrete_count(tile) > 0:
                out.append(
                    Violation("MisplacedTile", f"{t.name}: {tile.name} outside {owner.value} room")
                )
    for name, entries in library.categories.items():
        if not entries:
            out.append(Violation("EmptyCategory", f"category {name!r} has no entries"))
        for tile, weight in entries:
            if weight <= 0:
                out.append(Violation("BadWeight", f"category {name!r}: weight {weight} for {tile.name}"))
            if tile in _RESERVED_TILES:
                out.append(Violation("ReservedInCategory", f"category {name!r} can emit {tile.name}"))
    for kind in NodeType:
        for size in TEMPLATE_SIZES:
            count = len(library._by_key.get((kind, size), []))
            if count < 2:
                out.append(
                    Violation(
                        "TooFewTemplates",
                        f"kind={kind.value} size={size} has {count} templates, needs 2",
                    )
                )
    return out


# ---------------------------------------------------------------------------
# Instantiation

def _resolve_cells(template: RoomTemplate, categories: dict[str, Category], stream: Stream):
    grid = []
    for row in template.cells:
        resolved = []
        for cell in row:
            if cell.tile is not None:
                resolved.append(cell.tile)
            else:
                entries = categories[cell.category]
                idx = stream.weighted_index([w for _, w in entries])
                resolved.append(entries[idx][0])
        grid.append(resolved)
    return grid


def _frame(inner: list[list[TileType]], doors: dict[str, DoorKind]) -> list[list[TileType]]:
    size = len(inner)
    framed = [[TileType.WALL] * (size + 2) for _ in range(size + 2)]
    for r in range(size):
        for c in range(size):
            framed[r + 1][c + 1] = inner[r][c]
    for side, kind in doors.items():
        r, c = door_position(size, side)
        framed[r][c] = TileType.DOOR_OPEN if kind is DoorKind.OPEN else TileType.DOOR_LOCKED
    return framed


def _standable_positions(grid) -> set[tuple[int, int]]:
    return {
        (r, c)
        for r, row in enumerate(grid)
        for c, t in enumerate(row)
        if t in STANDABLE
    }


def reachable_on_foot(
    grid, start: tuple[int, int], blocked: frozenset[tuple[int, int]] = frozenset()
) -> set[tuple[int, int]]:
    """Flood fill with orthogonal steps plus single-tile jumps across pits."""
    n = len(grid)
    standable = _standable_positions(grid) - blocked
    if start not in standable:
        return set()
    seen = {start}
    frontier = [start]
    while frontier:
        r, c = frontier.pop()
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            step = (r + dr, c + dc)
            if step in standable and step not in seen:
                seen.add(step)
                frontier.append(step)
                continue
            # Jump: one pit tile, landing on the far side.
            jr, jc = r + 2 * dr, c + 2 * dc
            if (
                0 <= r + dr < n
                and 0 <= c + dc < n
                and grid[r + dr][c + dc] is TileType.PIT
                and (jr, jc) in standable
                and (jr, jc) not in seen
            ):
                seen.add((jr, jc))
                frontier.append((jr, jc))
    return seen


def _anchors(grid, doors: dict[str, DoorKind], size: int) -> list[tuple[int, int]]:
    anchors = [door_position(size, side) for side in SIDES if side in doors]
    for r, row in enumerate(grid):
        for c, t in enumerate(row):
            if t in (TileType.SPAWN, TileType.STAIRS, TileType.KEY):
                anchors.append((r, c))
    return anchors


def _connected(grid, doors: dict[str, DoorKind], size: int, blocked=frozenset()) -> bool:
    anchors = _anchors(grid, doors, size)
    if not anchors:
        return True
    region = reachable_on_foot(grid, anchors[0], blocked)
    return all(a in region for a in anchors)


def instantiate_room(
    template: RoomTemplate,
    doors: dict[str, DoorKind],
    categories: dict[str, Category],
    stream: Stream,
) -> RoomInstance:
    """Sample category cells until the room is traversable; bounded rejection."""
    for _ in range(REJECTION_BOUND):
        inner = _resolve_cells(template, categories, stream)
        grid = _frame(inner, doors)
        blocked = frozenset(
            (r, c) for r, row in enumerate(grid) for c, t in enumerate(row) if t is TileType.BLOCK
        )
        if not _connected(grid, doors, template.size, blocked):
            continue
        frozen = tuple(tuple(row) for row in grid)
        if template.kind is NodeType.PUZZLE:
            solvable, _ = check_puzzle_solvable(frozen)
            if not solvable:
                continue
        return RoomInstance(template.name, template.kind, template.size, frozen, dict(doors))
    raise InstantiationFailed(
        f"template {template.name}: no traversable sample in {REJECTION_BOUND} draws"
    )


# ---------------------------------------------------------------------------
# Puzzle solvability

def check_puzzle_solvable(
    grid: tuple[tuple[TileType, ...], ...],
    block: tuple[int, int] | None = None,
    agent: tuple[int, int] | None = None,
) -> tuple[bool, list[tuple[tuple[int, int], tuple[int, int]]]]:
    """Decide whether the block can be pushed onto a plate.

    Search states are (block position, normalized agent region).  The agent
    walks and jumps like the live simulator; a push moves the block one tile
    with the agent stepping into its old cell.  Returns the push sequence as
    (from, to) pairs when solvable.
    """
    blocks = [
        (r, c) for r, row in enumerate(grid) for c, t in enumerate(row) if t is TileType.BLOCK
    ]
    plates = {
        (r, c) for r, row in enumerate(grid) for c, t in enumerate(row) if t is TileType.PLATE
    }
    if block is None:
        if len(blocks) != 1:
            raise NotAPuzzleRoom(f"expected exactly one block, found {len(blocks)}")
        block = blocks[0]
    if not plates:
        raise NotAPuzzleRoom("room has no pressure plate")

    # The underlying tile at the block's cell, for walkability once it moves.
    base = [list(row) for row in grid]
    br, bc = block
    if base[br][bc] is TileType.BLOCK:
        base[br][bc] = TileType.FLOOR

    if agent is None:
        door_cells = [
            (r, c)
            for r, row in enumerate(base)
            for c, t in enumerate(row)
            if t in (TileType.DOOR_OPEN, TileType.DOOR_LOCKED)
        ]
        if not door_cells:
            raise NotAPuzzleRoom("no doors and no explicit agent position")
        agent = door_cells[0]

    def rest_ok(pos: tuple[int, int]) -> bool:
        r, c = pos
        if not (0 < r < len(base) - 1 and 0 < c < len(base[0]) - 1):
            return False
        return base[r][c] in BLOCK_REST

    def region(block_pos: tuple[int, int], agent_pos: tuple[int, int]) -> set[tuple[int, int]]:
        return reachable_on_foot(base, agent_pos, frozenset({block_pos}))

    start_region = region(block, agent)
    if not start_region:
        return False, []

    def norm(cells: set[tuple[int, int]]) -> tuple[int, int]:
        return min(cells)

    initial = (block, norm(start_region))
    parents: dict[tuple, tuple] = {initial: None}
    frontier = [(block, start_region)]
    while frontier:
        bpos, reach = frontier.pop(0)
        state = (bpos, norm(reach))
        if bpos in plates:
            pushes = []
            cur = state
            while parents[cur] is not None:
                prev_state, move = parents[cur]
                pushes.append(move)
                cur = prev_state
            pushes.reverse()
            return True, pushes
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            behind = (bpos[0] - dr, bpos[1] - dc)
            target = (bpos[0] + dr, bpos[1] + dc)
            if behind not in reach or not rest_ok(target):
                continue
            new_reach = region(target, bpos)
            new_state = (target, norm(new_reach))
            if new_state in parents:
                continue
            parents[new_state] = ((bpos, norm(reach)), (bpos, target))
            frontier.append((target, new_reach))
    return False, []


# ---------------------------------------------------------------------------
# Built-in templates

_DEFAULT_CATEGORIES: dict[str, Category] = {
    "scatter": [
        (TileType.FLOOR, 6),
        (TileType.DECOR, 2),
        (TileType.ORB, 1),
        (TileType.PIT, 1),
    ],
    "hazard": [
        (TileType.FLOOR, 4),
        (TileType.PIT, 2),
        (TileType.ENEMY, 1),
        (TileType.DECOR, 1),
    ],
}

_DEFAULT_TEMPLATE_ROWS: list[tuple[str, NodeType, list[str]]] = [
    ("start_clearing_3", NodeType.START, ["...", ".s.", "..."]),
    ("start_corner_3", NodeType.START, ["s..", ".,.", "..?"]),
    ("start_hall_4", NodeType.START, ["....", ".s..", "..?.", "...."]),
    ("start_posts_4", NodeType.START, ["?...", ".s,.", "....", "..?."]),
    ("start_plaza_5", NodeType.START, ["?...?", ".....", "..s..", ".....", "?...?"]),
    ("start_garden_5", NodeType.START, [".....", ".,.,.", "..s..", ".?.?.", "....."]),
    ("exit_landing_3", NodeType.EXIT, ["...", ".>.", "..."]),
    ("exit_step_3", NodeType.EXIT, [".?.", ".>.", "..."]),
    ("exit_hall_4", NodeType.EXIT, ["....", "..>.", ".?..", "...."]),
    ("exit_side_4", NodeType.EXIT, ["....", ".>..", "...?", "...."]),
    ("exit_plaza_5", NodeType.EXIT, ["?...?", ".....", "..>..", ".....", "?...?"]),
    ("exit_alcove_5", NodeType.EXIT, [".....", ".##..", ".#>..", ".....", "....."]),
    ("room_bare_3", NodeType.NORMAL, ["...", ".?.", "..."]),
    ("room_diag_3", NodeType.NORMAL, ["?..", "...", "..!"]),
    ("room_court_4", NodeType.NORMAL, ["....", ".??.", ".??.", "...."]),
    ("room_corners_4", NodeType.NORMAL, ["#...", "...,", ",...", "...#"]),
    ("room_pillar_5", NodeType.NORMAL, ["?...?", ".....", "..#..", ".....", "?...?"]),
    ("room_ravine_5", NodeType.NORMAL, ["....?", ".^^..", ".....", "..^^.", "?...."]),
    ("key_pedestal_3", NodeType.KEY, ["...", ".k.", "..."]),
    ("key_nook_3", NodeType.KEY, ["..k", ".#.", "..."]),
    ("key_hall_4", NodeType.KEY, ["....", "..k.", ".?..", "...."]),
    ("key_corner_4", NodeType.KEY, [".,..", "....", "..k.", "...."]),
    ("key_vault_5", NodeType.KEY, [".....", ".???.", "..k..", ".???.", "....."]),
    ("key_posts_5", NodeType.KEY, ["#...#", ".....", "..k..", ".....", "#...#"]),
    ("lock_cell_3", NodeType.LOCK, ["...", ".,.", "..."]),
    ("lock_trap_3", NodeType.LOCK, ["...", ".!.", "..."]),
    ("lock_store_4", NodeType.LOCK, ["....", ".,,.", ".,,.", "...."]),
    ("lock_split_4", NodeType.LOCK, ["....", "..?.", ".?..", "...."]),
    ("lock_shrine_5", NodeType.LOCK, [".....", ".,.,.", "..?..", ".,.,.", "....."]),
    ("lock_cross_5", NodeType.LOCK, ["#...#", ".....", "..!..", ".....", "#...#"]),
    ("puzzle_slide_3", NodeType.PUZZLE, ["...", ".B.", "..x"]),
    ("puzzle_hook_3", NodeType.PUZZLE, ["x..", ".B.", "..."]),
    ("puzzle_drift_4", NodeType.PUZZLE, ["....", ".B..", "...x", "...."]),
    ("puzzle_turn_4", NodeType.PUZZLE, ["....", "..B.", ".x..", "...."]),
    ("puzzle_lane_5", NodeType.PUZZLE, [".....", ".....", "..B..", ".....", "..x.."]),
    ("puzzle_steps_5", NodeType.PUZZLE, [".....", ".B...", ".....", "...x.", "....."]),
]


def default_template_library() -> TemplateLibrary:
    templates = [
        RoomTemplate.from_rows(name, kind, rows) for name, kind, rows in _DEFAULT_TEMPLATE_ROWS
    ]
    return TemplateLibrary(templates, _DEFAULT_CATEGORIES)
