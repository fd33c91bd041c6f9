"""Scripted episode controller with privileged state access.

The solver recomputes its intent from simulator state on every action: route
rooms with the floor oracle, pick an in-room target (key, block push, stairs,
or the door toward the next room), then emit one action along a tile path.
Each candidate action is validated on a cloned simulator before it is played,
so enemy motion and platform phase never surprise the real episode.  When a
move is blocked the solver waits; persistent blockage triggers replanning
around enemy tiles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .actions import Action, NOOP
from .grammar import NodeType
from .layout import Coord, solve_floor
from .rooms import DoorKind, TileType, check_puzzle_solvable, door_position
from .simulator import (
    DOOR_TILES,
    HEADINGS,
    RoomState,
    Simulator,
    WALKABLE,
)

PUZZLE_TIME_SLACK = 600
AVOID_ENEMIES_AFTER = 6
MAX_STALL = 400

_DIR_INDEX = {d: i for i, d in enumerate(HEADINGS)}


def _walk_action(rel: int) -> Action:
    if rel == 0:
        return Action(move_fb=1)
    if rel == 1:
        return Action(move_lr=2)
    if rel == 2:
        return Action(move_fb=2)
    return Action(move_lr=1)


def _turn_action(rel: int) -> Action:
    # Shortest rotation toward the needed heading; rel 2 takes two actions.
    return Action(camera=1) if rel == 3 else Action(camera=2)


class ScriptedSolver:
    """One action per act() call; drives the bound simulator's episode."""

    def __init__(self, sim: Simulator):
        self.sim = sim
        self._stall = 0
        self._last_spot: Optional[tuple] = None
        self._abandoned_puzzles: set[tuple[int, Coord]] = set()

    # -- runtime inspection

    def _room(self) -> RoomState:
        return self.sim.runtime.rooms[self.sim.room_position]

    def _opened_pairs(self) -> frozenset:
        runtime = self.sim.runtime
        opened = set()
        for pair, kind in runtime.plan.layout.doors.items():
            if kind is not DoorKind.LOCKED:
                continue
            a, b = pair
            room = runtime.rooms[a]
            side = {(-1, 0): "N", (0, 1): "E", (1, 0): "S", (0, -1): "W"}[
                (b[0] - a[0], b[1] - a[1])
            ]
            dr, dc = door_position(room.instance.size, side)
            if room.grid[dr][dc] is TileType.DOOR_OPEN:
                opened.add(pair)
        return frozenset(opened)

    def _depleted_keys(self) -> frozenset:
        runtime = self.sim.runtime
        depleted = set()
        for pos, cell in runtime.plan.layout.cells.items():
            if cell.kind is NodeType.KEY and cell.node_id is not None:
                room = runtime.rooms[pos]
                if not any(TileType.KEY in row for row in room.grid):
                    depleted.add(pos)
        return frozenset(depleted)

    def _key_tile(self, room: RoomState) -> Optional[Coord]:
        for r, row in enumerate(room.grid):
            for c, t in enumerate(row):
                if t is TileType.KEY:
                    return (r, c)
        return None

    def _stairs_tile(self, room: RoomState) -> Optional[Coord]:
        for r, row in enumerate(room.grid):
            for c, t in enumerate(row):
                if t is TileType.STAIRS:
                    return (r, c)
        return None

    # -- tile pathfinding

    def _passable(self, room: RoomState, pos: Coord, avoid: frozenset) -> bool:
        tile = room.grid[pos[0]][pos[1]]
        if tile in DOOR_TILES:
            return False
        if pos in room.blocks or pos in avoid:
            return False
        if tile is TileType.PLATFORM:
            return True  # wait out the phase at runtime
        return tile in WALKABLE

    def _tile_path(
        self,
        room: RoomState,
        src: Coord,
        goals: set[Coord],
        avoid: frozenset = frozenset(),
    ) -> Optional[list[Coord]]:
        """Shortest tile path; a step of length two rides a jump over a pit."""
        side = room.instance.size + 2
        parents: dict[Coord, Coord] = {src: src}
        frontier = [src]
        found = None
        if src in goals:
            return [src]
        while frontier and found is None:
            cur = frontier.pop(0)
            for dr, dc in HEADINGS:
                step = (cur[0] + dr, cur[1] + dc)
                land = (cur[0] + 2 * dr, cur[1] + 2 * dc)
                nxt = None
                if 0 <= step[0] < side and 0 <= step[1] < side and step not in parents:
                    if step in goals or self._passable(room, step, avoid):
                        nxt = step
                if nxt is None and 0 <= land[0] < side and 0 <= land[1] < side:
                    hurdle = (
                        0 <= step[0] < side
                        and 0 <= step[1] < side
                        and (
                            room.grid[step[0]][step[1]] is TileType.PIT
                            or step in room.blocks
                        )
                    )
                    if (
                        hurdle
                        and land not in parents
                        and (land in goals or self._passable(room, land, avoid))
                    ):
                        nxt = land
                if nxt is None:
                    continue
                parents[nxt] = cur
                if nxt in goals:
                    found = nxt
                    break
                frontier.append(nxt)
        if found is None:
            return None
        path = [found]
        while path[-1] != src:
            path.append(parents[path[-1]])
        path.reverse()
        return path

    # -- targets

    def _door_goal(self, room: RoomState, next_room: Coord) -> Coord:
        here = self.sim.room_position
        side = {(-1, 0): "N", (0, 1): "E", (1, 0): "S", (0, -1): "W"}[
            (next_room[0] - here[0], next_room[1] - here[1])
        ]
        return door_position(room.instance.size, side)

    def _puzzle_pushes(self, room: RoomState) -> Optional[list[tuple[Coord, Coord]]]:
        if len(room.blocks) != 1:
            return None
        block = next(iter(room.blocks))
        grid = tuple(tuple(row) for row in room.grid)
        try:
            solvable, pushes = check_puzzle_solvable(
                grid, block=block, agent=self.sim.agent_position
            )
        except Exception:
            return None
        return pushes if solvable else None

    def _pick_goal(self) -> tuple[set[Coord], bool]:
        """Target tiles in the current room, and whether a push is intended."""
        sim = self.sim
        room = self._room()
        cell = sim.runtime.plan.layout.cells[sim.room_position]

        key_tile = self._key_tile(room)
        if key_tile is not None and cell.kind is NodeType.KEY:
            return {key_tile}, False

        puzzle_id = (sim.floor, sim.room_position)
        if (
            cell.kind is NodeType.PUZZLE
            and not room.puzzle_solved
            and puzzle_id not in self._abandoned_puzzles
            and sim.time_remaining > PUZZLE_TIME_SLACK
        ):
            pushes = self._puzzle_pushes(room)
            if pushes:
                frm, to = pushes[0]
                behind = (2 * frm[0] - to[0], 2 * frm[1] - to[1])
                return {behind}, True
            self._abandoned_puzzles.add(puzzle_id)

        if cell.kind is NodeType.EXIT:
            stairs = self._stairs_tile(room)
            if stairs is not None:
                return {stairs}, False

        route = solve_floor(
            sim.runtime.plan.layout,
            start=sim.room_position,
            carried_keys=sim.keys,
            opened=self._opened_pairs(),
            depleted_keys=self._depleted_keys(),
        )
        if route is None or len(route.path) < 2:
            # No route (should not happen on a generated floor): hold position.
            return set(), False
        return {self._door_goal(room, route.path[1])}, False

    # -- action synthesis

    def _action_toward(self, path: list[Coord]) -> Action:
        if len(path) < 2:
            return NOOP
        cur, nxt = path[0], path[1]
        dr, dc = nxt[0] - cur[0], nxt[1] - cur[1]
        if abs(dr) + abs(dc) == 1:
            rel = (_DIR_INDEX[(dr, dc)] - self.sim.heading) % 4
            return _walk_action(rel)
        half = (dr // 2, dc // 2)
        rel = (_DIR_INDEX[half] - self.sim.heading) % 4
        if rel == 0:
            return Action(move_fb=1, jump=1)
        return _turn_action(rel)

    def _push_action(self, room: RoomState) -> Optional[Action]:
        """When beside the block with a push lined up, step into it."""
        pushes = self._puzzle_pushes(room)
        if not pushes:
            return None
        frm, to = pushes[0]
        behind = (2 * frm[0] - to[0], 2 * frm[1] - to[1])
        if self.sim.agent_position != behind:
            return None
        d = (frm[0] - behind[0], frm[1] - behind[1])
        rel = (_DIR_INDEX[d] - self.sim.heading) % 4
        return _walk_action(rel)

    def _safe(self, action: Action) -> tuple[bool, bool]:
        """(survives, made progress) after simulating the action on a clone."""
        probe = self.sim.clone()
        before = (probe.floor, probe.room_position, probe.agent_position, probe.keys)
        result = probe.step(action)
        if result.outcome == "death":
            return False, False
        after = (probe.floor, probe.room_position, probe.agent_position, probe.keys)
        return True, after != before

    def act(self) -> Action:
        sim = self.sim
        if sim.done:
            return NOOP

        spot = (sim.floor, sim.room_position, sim.agent_position)
        if spot != self._last_spot:
            self._stall = 0
            self._last_spot = spot

        room = self._room()
        goals, pushing = self._pick_goal()

        action: Optional[Action] = None
        if pushing:
            action = self._push_action(room)
        if action is None and goals:
            avoid = frozenset()
            if self._stall >= AVOID_ENEMIES_AFTER:
                avoid = frozenset(room.enemy_positions())
            path = self._tile_path(room, sim.agent_position, goals, avoid)
            if path is None and avoid:
                path = self._tile_path(room, sim.agent_position, goals)
            if path is not None:
                action = self._action_toward(path)

        if action is None or action == NOOP:
            self._stall += 1
            return NOOP

        survives, progress = self._safe(action)
        if not survives or (not progress and action.camera == 0):
            self._stall += 1
            return NOOP
        return action


@dataclass
class SolveReport:
    success: bool
    outcome: Optional[str]
    floors: int
    actions: int
    reward: float


def solve_episode(sim: Simulator, max_actions: int = 20000) -> SolveReport:
    """Drive a fresh episode to completion with the scripted solver."""
    result = sim.reset()
    solver = ScriptedSolver(sim)
    total = result.reward
    actions = 0
    while not sim.done and actions < max_actions:
        action = solver.act()
        result = sim.step(action)
        total += result.reward
        actions += 1
        if solver._stall > MAX_STALL:
            break
    return SolveReport(
        success=sim.outcome == "success",
        outcome=sim.outcome,
        floors=result.counters["floors"],
        actions=actions,
        reward=total,
    )
