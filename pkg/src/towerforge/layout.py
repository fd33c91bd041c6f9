"""Spatial realization of mission graphs.

graph_to_layout embeds the mission tree on a bounded grid, inserting connector
cells when a child cannot sit beside its parent.  Doors are placed along every
realized edge; an edge into a Lock node locks only its final door.
solve_floor is the floor-level oracle: exhaustive search over rooms, carried
keys, and opened doors.  assemble_floor stitches mission, layout, theme, and
instantiated rooms into a serializable FloorPlan.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import GenerationFailed
from .grammar import (
    MissionGraph,
    NodeType,
    RecipeTable,
    GraphRule,
    generate_mission_graph,
)
from .rng import Stream
from .rooms import (
    DoorKind,
    RoomInstance,
    TemplateLibrary,
    default_template_library,
    instantiate_room,
)
from .serialize import canonical_dumps
from .themes import (
    ALL_THEMES,
    LightingParams,
    VisualTheme,
    sample_lighting,
    theme_for_floor,
)

MAX_GRID = 8
LAYOUT_RETRIES = 16

Coord = tuple[int, int]
DoorPair = tuple[Coord, Coord]

# Scan order for neighbor cells; fixed so layout is a pure function of the seed.
_STEPS = ((-1, 0), (0, 1), (1, 0), (0, -1))


@dataclass
class LayoutCell:
    node_id: Optional[int]  # None for connectors
    kind: NodeType
    edge: Optional[tuple[int, int]] = None  # mission edge a connector realizes


@dataclass
class LayoutGrid:
    rows: int
    cols: int
    cells: dict[Coord, LayoutCell] = field(default_factory=dict)
    doors: dict[DoorPair, DoorKind] = field(default_factory=dict)

    def door_between(self, a: Coord, b: Coord) -> Optional[DoorKind]:
        return self.doors.get(_pair(a, b))

    def cell_of_node(self, node_id: int) -> Coord:
        for pos, cell in self.cells.items():
            if cell.node_id == node_id:
                return pos
        raise KeyError(f"node {node_id} not placed")

    def neighbors(self, pos: Coord) -> list[Coord]:
        out = []
        for dr, dc in _STEPS:
            q = (pos[0] + dr, pos[1] + dc)
            if _pair(pos, q) in self.doors:
                out.append(q)
        return out

    def to_json(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "cells": [
                {
                    "pos": list(pos),
                    "node": cell.node_id,
                    "kind": cell.kind.value,
                    "edge": None if cell.edge is None else list(cell.edge),
                }
                for pos, cell in sorted(self.cells.items())
            ],
            "doors": [
                {"between": [list(a), list(b)], "kind": kind.value}
                for (a, b), kind in sorted(self.doors.items())
            ],
        }


def _pair(a: Coord, b: Coord) -> DoorPair:
    return (a, b) if a <= b else (b, a)


def _tree_order(graph: MissionGraph) -> list[tuple[int, int]]:
    """(parent, child) pairs in breadth-first order from Start, children by id."""
    start = graph.nodes_of_type(NodeType.START)[0].id
    seen = {start}
    frontier = [start]
    order = []
    while frontier:
        nid = frontier.pop(0)
        for nb in graph.neighbors(nid):
            if nb not in seen:
                seen.add(nb)
                order.append((nid, nb))
                frontier.append(nb)
    return order


def graph_to_layout(graph: MissionGraph, stream: Stream) -> LayoutGrid:
    """Embed the mission tree on the grid, or raise GenerationFailed."""
    occupied: dict[Coord, LayoutCell] = {}
    doors: dict[DoorPair, DoorKind] = {}
    placed: dict[int, Coord] = {}

    start = graph.nodes_of_type(NodeType.START)[0]
    origin = (stream.randint(0, MAX_GRID - 1), stream.randint(0, MAX_GRID - 1))
    occupied[origin] = LayoutCell(start.id, start.node_type)
    placed[start.id] = origin

    def free_neighbors(pos: Coord) -> list[Coord]:
        out = []
        for dr, dc in _STEPS:
            q = (pos[0] + dr, pos[1] + dc)
            if 0 <= q[0] < MAX_GRID and 0 <= q[1] < MAX_GRID and q not in occupied:
                out.append(q)
        return out

    for parent_id, child_id in _tree_order(graph):
        child = graph.nodes[child_id]
        src = placed[parent_id]
        lock_final = child.node_type is NodeType.LOCK
        direct = free_neighbors(src)
        if not direct:
            raise GenerationFailed("mission tree does not fit the layout grid")
        # One draw in four stretches the edge through a connector room.
        want_connector = stream.below(4) == 0
        spot = stream.choice(direct)
        if want_connector:
            onward = free_neighbors(spot)
            if onward:
                occupied[spot] = LayoutCell(None, NodeType.NORMAL, edge=(parent_id, child_id))
                doors[_pair(src, spot)] = DoorKind.OPEN
                child_spot = stream.choice(onward)
                occupied[child_spot] = LayoutCell(child_id, child.node_type)
                placed[child_id] = child_spot
                doors[_pair(spot, child_spot)] = (
                    DoorKind.LOCKED if lock_final else DoorKind.OPEN
                )
                continue
        occupied[spot] = LayoutCell(child_id, child.node_type)
        placed[child_id] = spot
        doors[_pair(src, spot)] = DoorKind.LOCKED if lock_final else DoorKind.OPEN

    min_r = min(p[0] for p in occupied)
    min_c = min(p[1] for p in occupied)
    max_r = max(p[0] for p in occupied)
    max_c = max(p[1] for p in occupied)
    shifted_cells = {(r - min_r, c - min_c): cell for (r, c), cell in occupied.items()}
    shifted_doors = {
        _pair((a[0] - min_r, a[1] - min_c), (b[0] - min_r, b[1] - min_c)): kind
        for (a, b), kind in doors.items()
    }
    return LayoutGrid(max_r - min_r + 1, max_c - min_c + 1, shifted_cells, shifted_doors)


# ---------------------------------------------------------------------------
# Floor-level solvability

@dataclass
class FloorSolution:
    path: list[Coord]
    keys_collected: list[Coord]
    doors_opened: list[DoorPair]


def solve_floor(
    grid: LayoutGrid,
    start: Optional[Coord] = None,
    carried_keys: int = 0,
    opened: frozenset[DoorPair] = frozenset(),
    depleted_keys: frozenset[Coord] = frozenset(),
) -> Optional[FloorSolution]:
    """Shortest room path to the Exit under key/lock semantics, else None.

    Keys are fungible and consumable; entering a Key room collects its key
    once.  Defaults model a fresh floor entry at the Start room; the optional
    arguments describe a partially played floor (keys in hand, doors already
    opened, key rooms already emptied).
    """
    if start is None:
        for pos, cell in grid.cells.items():
            if cell.kind is NodeType.START:
                start = pos
                break
        else:
            return None

    def keys_at(pos: Coord, collected: frozenset) -> frozenset:
        cell = grid.cells[pos]
        if (
            cell.kind is NodeType.KEY
            and cell.node_id is not None
            and pos not in collected
            and pos not in depleted_keys
        ):
            return collected | {pos}
        return collected

    initial = (start, keys_at(start, frozenset()), frozenset(opened))
    parents: dict[tuple, Optional[tuple]] = {initial: None}
    frontier = [initial]
    goal_state = None
    while frontier and goal_state is None:
        state = frontier.pop(0)
        pos, collected, opened_now = state
        if grid.cells[pos].kind is NodeType.EXIT:
            goal_state = state
            break
        held = carried_keys + len(collected) - (len(opened_now) - len(opened))
        for nxt in grid.neighbors(pos):
            door = grid.doors[_pair(pos, nxt)]
            next_opened = opened_now
            if door is DoorKind.LOCKED and _pair(pos, nxt) not in opened_now:
                if held < 1:
                    continue
                next_opened = opened_now | {_pair(pos, nxt)}
            next_state = (nxt, keys_at(nxt, collected), next_opened)
            if next_state not in parents:
                parents[next_state] = state
                frontier.append(next_state)
    if goal_state is None:
        return None

    path = []
    cur = goal_state
    while cur is not None:
        path.append(cur[0])
        cur = parents[cur]
    path.reverse()

    keys_order: list[Coord] = []
    doors_order: list[DoorPair] = []
    collected: set[Coord] = set()
    opened_set: set[DoorPair] = set(opened)
    for i, pos in enumerate(path):
        cell = grid.cells[pos]
        if cell.kind is NodeType.KEY and cell.node_id is not None and pos not in collected:
            collected.add(pos)
            keys_order.append(pos)
        if i + 1 < len(path):
            pair = _pair(pos, path[i + 1])
            if grid.doors[pair] is DoorKind.LOCKED and pair not in opened_set:
                opened_set.add(pair)
                doors_order.append(pair)
    return FloorSolution(path, keys_order, doors_order)


# ---------------------------------------------------------------------------
# Floor assembly

@dataclass
class FloorPlan:
    floor_number: int
    tower_seed: int
    mission: MissionGraph
    layout: LayoutGrid
    theme: VisualTheme
    lighting: LightingParams
    rooms: dict[Coord, RoomInstance]

    def to_json(self) -> dict:
        return {
            "floor": self.floor_number,
            "tower_seed": self.tower_seed,
            "mission": self.mission.to_json(),
            "layout": self.layout.to_json(),
            "theme": self.theme.value,
            "lighting": self.lighting.to_json(),
            "rooms": {
                f"{r},{c}": {
                    "template": room.template_name,
                    "kind": room.kind.value,
                    "size": room.size,
                    "doors": {side: kind.value for side, kind in sorted(room.doors.items())},
                    "grid": [[int(t) for t in row] for row in room.grid],
                }
                for (r, c), room in sorted(self.rooms.items())
            },
        }

    def canonical(self) -> str:
        return canonical_dumps(self.to_json())


def _door_sides(grid: LayoutGrid, pos: Coord) -> dict[str, DoorKind]:
    sides = {}
    for side, (dr, dc) in (("N", (-1, 0)), ("E", (0, 1)), ("S", (1, 0)), ("W", (0, -1))):
        q = (pos[0] + dr, pos[1] + dc)
        kind = grid.door_between(pos, q)
        if kind is not None:
            sides[side] = kind
    return sides


def assemble_floor(
    floor_number: int,
    tower_seed: int,
    allowed_themes: tuple[VisualTheme, ...] = ALL_THEMES,
    library: TemplateLibrary | None = None,
    recipe_table: RecipeTable | None = None,
    rule_library: dict[str, GraphRule] | None = None,
) -> FloorPlan:
    """Fully deterministic floor construction from (floor_number, tower_seed)."""
    lib = library if library is not None else default_template_library()
    mission = generate_mission_graph(
        floor_number, tower_seed, recipe_table=recipe_table, rule_library=rule_library
    )

    layout = None
    for attempt in range(LAYOUT_RETRIES):
        stream = Stream.for_tag(tower_seed, floor_number, f"layout:{attempt}")
        try:
            candidate = graph_to_layout(mission, stream)
        except GenerationFailed:
            continue
        if solve_floor(candidate) is not None:
            layout = candidate
            break
    if layout is None:
        raise GenerationFailed(
            f"floor {floor_number}, seed {tower_seed}: no solvable layout in {LAYOUT_RETRIES} attempts"
        )

    theme = theme_for_floor(tower_seed, floor_number, allowed_themes)
    lighting = sample_lighting(tower_seed, floor_number)

    rooms: dict[Coord, RoomInstance] = {}
    for pos in sorted(layout.cells):
        cell = layout.cells[pos]
        room_stream = Stream.for_tag(tower_seed, floor_number, f"room:{pos[0]},{pos[1]}")
        size = room_stream.choice([3, 4, 5])
        doors = _door_sides(layout, pos)
        candidates = list(lib.candidates(cell.kind, size))
        room_stream.shuffle(candidates)
        room = None
        last_error: Exception | None = None
        for template in candidates:
            try:
                room = instantiate_room(template, doors, lib.categories, room_stream)
                break
            except Exception as exc:  # keep trying alternate templates
                last_error = exc
        if room is None:
            raise GenerationFailed(
                f"floor {floor_number}, seed {tower_seed}: cell {pos} has no usable template ({last_error})"
            )
        rooms[pos] = room
    return FloorPlan(floor_number, tower_seed, mission, layout, theme, lighting, rooms)
