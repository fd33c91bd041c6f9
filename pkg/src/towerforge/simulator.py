"""Tile-level episode simulator.

One agent action spans exactly five internal ticks: camera and entity motion
resolve on tick 1, the forward/back sub-move on tick 2, the strafe sub-move on
tick 4, and the timer settles on tick 5.  A jump replaces both sub-moves with
a two-tile arc.  Floors are assembled lazily and cached; all dynamics draw
from streams derived off (tower_seed, dynamics_seed, floor), so an episode is
a pure function of its config and action sequence.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field

import numpy as np

from .actions import (
    Action,
    CAMERA_LEFT,
    CAMERA_RIGHT,
    MOVE_BACK,
    MOVE_FORWARD,
    STRAFE_LEFT,
    STRAFE_RIGHT,
    unflatten_action,
)
from .errors import BadConfig, EpisodeDone, InvalidAction, OutOfRange
from .layout import Coord, FloorPlan, assemble_floor
from .rng import Stream
from .rooms import (
    DoorKind,
    RoomInstance,
    TemplateLibrary,
    TileType,
    default_template_library,
    door_position,
)
from .serialize import canonical_dumps
from .themes import ALL_THEMES, VisualTheme, light_bucket, palette_code

TICKS_PER_STEP = 5
WINDOW = 21
HALF_WINDOW = WINDOW // 2
AGENT_ENTRY = 14
PLATFORM_PERIOD = 8

DEFAULT_MAX_FLOOR = 25
DEFAULT_STARTING_TIME = 1800
DEFAULT_ORB_BONUS = 150
DEFAULT_FLOOR_BONUS = 300

# Grid directions: N, E, S, W.  Camera right turns clockwise.
HEADINGS = ((-1, 0), (0, 1), (1, 0), (0, -1))
OPPOSITE_SIDE = {"N": "S", "E": "W", "S": "N", "W": "E"}
SIDE_OFFSET = {"N": (-1, 0), "E": (0, 1), "S": (1, 0), "W": (0, -1)}

ENEMY_WALKABLE = frozenset({TileType.FLOOR, TileType.DECOR})
WALKABLE = frozenset(
    {
        TileType.FLOOR,
        TileType.SPAWN,
        TileType.DECOR,
        TileType.KEY,
        TileType.ORB,
        TileType.PLATE,
        TileType.STAIRS,
    }
)
DOOR_TILES = frozenset({TileType.DOOR_OPEN, TileType.DOOR_LOCKED})

REWARD_MODES = ("sparse", "dense")
OBS_SIZES = (84, 168)


@dataclass(frozen=True)
class EpisodeConfig:
    tower_seed: int = 0
    dynamics_seed: int = 0
    max_floor: int = DEFAULT_MAX_FLOOR
    start_floor: int = 0
    reward_mode: str = "sparse"
    obs_size: int = 84
    allowed_themes: tuple[VisualTheme, ...] = ALL_THEMES
    starting_time: int = DEFAULT_STARTING_TIME
    orb_bonus: int = DEFAULT_ORB_BONUS
    floor_bonus: int = DEFAULT_FLOOR_BONUS

    def validate(self) -> None:
        if not isinstance(self.tower_seed, int) or not isinstance(self.dynamics_seed, int):
            raise BadConfig("seeds must be integers")
        if not 1 <= self.max_floor <= 100:
            raise BadConfig(f"max_floor {self.max_floor} outside 1..100")
        if not 0 <= self.start_floor < self.max_floor:
            raise BadConfig(f"start_floor {self.start_floor} outside 0..{self.max_floor - 1}")
        if self.reward_mode not in REWARD_MODES:
            raise BadConfig(f"reward_mode {self.reward_mode!r}")
        if self.obs_size not in OBS_SIZES:
            raise BadConfig(f"obs_size {self.obs_size} not in {OBS_SIZES}")
        if not self.allowed_themes:
            raise BadConfig("allowed_themes is empty")
        for t in self.allowed_themes:
            if not isinstance(t, VisualTheme):
                raise BadConfig(f"bad theme {t!r}")
        if len(set(self.allowed_themes)) != len(self.allowed_themes):
            raise BadConfig("allowed_themes has duplicates")
        if self.starting_time <= 0 or self.orb_bonus < 0 or self.floor_bonus < 0:
            raise BadConfig("time parameters out of range")

    def to_json(self) -> dict:
        return {
            "tower_seed": self.tower_seed,
            "dynamics_seed": self.dynamics_seed,
            "max_floor": self.max_floor,
            "start_floor": self.start_floor,
            "reward_mode": self.reward_mode,
            "obs_size": self.obs_size,
            "allowed_themes": [t.value for t in self.allowed_themes],
            "starting_time": self.starting_time,
            "orb_bonus": self.orb_bonus,
            "floor_bonus": self.floor_bonus,
        }

    @classmethod
    def from_json(cls, data: dict) -> "EpisodeConfig":
        if not isinstance(data, dict):
            raise BadConfig("config must be an object")
        allowed = set(cls.__dataclass_fields__)
        unknown = set(data) - allowed
        if unknown:
            raise BadConfig(f"unknown config fields {sorted(unknown)}")
        kwargs = dict(data)
        if "allowed_themes" in kwargs:
            try:
                kwargs["allowed_themes"] = tuple(VisualTheme(t) for t in kwargs["allowed_themes"])
            except (ValueError, TypeError):
                raise BadConfig(f"bad allowed_themes {kwargs['allowed_themes']!r}")
        config = cls(**kwargs)
        config.validate()
        return config


class RoomState:
    """Mutable view of one instantiated room: grid plus movable entities."""

    __slots__ = ("instance", "grid", "entries", "blocks", "enemies", "door_sides", "puzzle_solved")

    def __init__(self, instance: RoomInstance, enemy_stream: Stream):
        self.instance = instance
        self.grid: list[list[TileType]] = [list(row) for row in instance.grid]
        self.blocks: set[Coord] = set()
        self.enemies: list[list] = []  # [position, direction]
        self.door_sides: dict[Coord, str] = {
            door_position(instance.size, side): side for side in instance.doors
        }
        self.puzzle_solved = False
        for r, row in enumerate(self.grid):
            for c, tile in enumerate(row):
                if tile is TileType.BLOCK:
                    self.blocks.add((r, c))
                    self.grid[r][c] = TileType.FLOOR
                elif tile is TileType.ENEMY:
                    self.enemies.append([(r, c), enemy_stream.below(4)])
                    self.grid[r][c] = TileType.FLOOR
        # Static raster of the grid; movers are drawn over it at render time.
        self.entries = np.array([[int(t) for t in row] for row in self.grid], dtype=np.uint8)

    def set_tile(self, pos: Coord, tile: TileType) -> None:
        self.grid[pos[0]][pos[1]] = tile
        self.entries[pos[0], pos[1]] = int(tile)

    def enemy_positions(self) -> set[Coord]:
        return {e[0] for e in self.enemies}

    def clone(self) -> "RoomState":
        other = object.__new__(RoomState)
        other.instance = self.instance
        other.grid = [list(row) for row in self.grid]
        other.entries = self.entries.copy()
        other.blocks = set(self.blocks)
        other.enemies = [[pos, d] for pos, d in self.enemies]
        other.door_sides = self.door_sides
        other.puzzle_solved = self.puzzle_solved
        return other


class FloorRuntime:
    __slots__ = ("plan", "rooms", "enemy_streams", "platform_offset")

    def __init__(self, plan: FloorPlan, dynamics_seed: int):
        self.plan = plan
        self.enemy_streams: dict[Coord, Stream] = {}
        self.rooms: dict[Coord, RoomState] = {}
        for pos in sorted(plan.rooms):
            stream = Stream.for_tag(
                plan.tower_seed, dynamics_seed, plan.floor_number, f"enemies:{pos[0]},{pos[1]}"
            )
            self.enemy_streams[pos] = stream
            self.rooms[pos] = RoomState(plan.rooms[pos], stream)
        self.platform_offset = Stream.for_tag(
            plan.tower_seed, dynamics_seed, plan.floor_number, "platform"
        ).below(2 * PLATFORM_PERIOD)

    def start_position(self) -> tuple[Coord, Coord]:
        for pos, cell_room in self.rooms.items():
            spawns = [
                (r, c)
                for r, row in enumerate(cell_room.grid)
                for c, t in enumerate(row)
                if t is TileType.SPAWN
            ]
            if spawns:
                return pos, spawns[0]
        raise RuntimeError("floor has no spawn tile")

    def clone(self) -> "FloorRuntime":
        other = object.__new__(FloorRuntime)
        other.plan = self.plan
        other.rooms = {pos: room.clone() for pos, room in self.rooms.items()}
        other.enemy_streams = {pos: s.clone() for pos, s in self.enemy_streams.items()}
        other.platform_offset = self.platform_offset
        return other


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    floor: int
    keys: int
    time_remaining: int
    outcome: str | None
    counters: dict[str, int]

    def to_json(self, include_obs: bool = True) -> dict:
        data = {
            "reward": self.reward,
            "done": self.done,
            "floor": self.floor,
            "keys": self.keys,
            "time": self.time_remaining,
            "outcome": self.outcome,
            "counters": dict(self.counters),
        }
        if include_obs:
            data["obs_shape"] = list(self.observation.shape)
            data["obs_b64"] = base64.b64encode(self.observation.tobytes()).decode("ascii")
        return data

    def canonical(self, include_obs: bool = True) -> str:
        return canonical_dumps(self.to_json(include_obs))


class Simulator:
    """Deterministic episode engine over assembled floors."""

    def __init__(self, config: EpisodeConfig, library: TemplateLibrary | None = None):
        config.validate()
        self.config = config
        self._library = library if library is not None else default_template_library()
        self._plans: dict[int, FloorPlan] = {}
        self._luts: dict[int, np.ndarray] = {}
        self._started = False
        self.reset()

    # -- floor plumbing

    def _plan_for(self, floor: int) -> FloorPlan:
        plan = self._plans.get(floor)
        if plan is None:
            plan = assemble_floor(
                floor,
                self.config.tower_seed,
                allowed_themes=self.config.allowed_themes,
                library=self._library,
            )
            self._plans[floor] = plan
            lut = np.array(
                [
                    palette_code(entry, plan.theme, light_bucket(plan.lighting))
                    for entry in range(16)
                ],
                dtype=np.uint8,
            )
            self._luts[floor] = lut
        return plan

    def _load_floor(self, floor: int) -> None:
        self._runtime = FloorRuntime(self._plan_for(floor), self.config.dynamics_seed)
        self._room_pos, self._agent = self._runtime.start_position()
        self._keys = 0

    # -- public api

    def reset(self) -> StepResult:
        self._floor = self.config.start_floor
        self._time = self.config.starting_time
        self._heading = 0
        self._done = False
        self._outcome: str | None = None
        self._total_ticks = 0
        self._pushed_this_step = False
        self._counters = {"floors": 0, "keys": 0, "doors": 0, "puzzles": 0, "orbs": 0}
        self._load_floor(self._floor)
        self._started = True
        return self._result(0.0)

    def step(self, action: Action) -> StepResult:
        if self._done:
            raise EpisodeDone("episode is over; call reset")
        if not isinstance(action, Action):
            raise InvalidAction(f"expected Action, got {type(action).__name__}")
        reward = 0.0
        self._pushed_this_step = False

        for tick in range(1, TICKS_PER_STEP + 1):
            self._total_ticks += 1
            self._time -= 1
            if self._time <= 0:
                self._done = True
                self._outcome = "timeout"
                break

            if tick == 1:
                if action.camera == CAMERA_LEFT:
                    self._heading = (self._heading - 1) % 4
                elif action.camera == CAMERA_RIGHT:
                    self._heading = (self._heading + 1) % 4
                self._move_enemies()
            elif tick == 2:
                if action.jump:
                    if action.move_fb == MOVE_FORWARD:
                        reward += self._attempt_jump(HEADINGS[self._heading])
                else:
                    d = None
                    if action.move_fb == MOVE_FORWARD:
                        d = HEADINGS[self._heading]
                    elif action.move_fb == MOVE_BACK:
                        d = HEADINGS[(self._heading + 2) % 4]
                    if d is not None:
                        reward += self._attempt_move(d)
            elif tick == 4:
                if not action.jump:
                    d = None
                    if action.move_lr == STRAFE_LEFT:
                        d = HEADINGS[(self._heading - 1) % 4]
                    elif action.move_lr == STRAFE_RIGHT:
                        d = HEADINGS[(self._heading + 1) % 4]
                    if d is not None:
                        reward += self._attempt_move(d)
            if self._done:
                break

        return self._result(reward)

    def observe(self) -> StepResult:
        """Zero-reward snapshot of the current state as a StepResult."""
        return self._result(0.0)

    def step_flat(self, index: int) -> StepResult:
        try:
            action = unflatten_action(index)
        except OutOfRange as exc:
            raise InvalidAction(str(exc))
        return self.step(action)

    def clone(self) -> "Simulator":
        other = object.__new__(Simulator)
        other.config = self.config
        other._library = self._library
        other._plans = self._plans  # immutable plans, shared cache
        other._luts = self._luts
        other._started = self._started
        other._runtime = self._runtime.clone()
        other._room_pos = self._room_pos
        other._agent = self._agent
        other._keys = self._keys
        other._floor = self._floor
        other._time = self._time
        other._heading = self._heading
        other._done = self._done
        other._outcome = self._outcome
        other._total_ticks = self._total_ticks
        other._pushed_this_step = self._pushed_this_step
        other._counters = dict(self._counters)
        return other

    # -- read-only state for planners and adapters

    @property
    def done(self) -> bool:
        return self._done

    @property
    def outcome(self) -> str | None:
        return self._outcome

    @property
    def floor(self) -> int:
        return self._floor

    @property
    def keys(self) -> int:
        return self._keys

    @property
    def time_remaining(self) -> int:
        return self._time

    @property
    def heading(self) -> int:
        return self._heading

    @property
    def agent_position(self) -> Coord:
        return self._agent

    @property
    def room_position(self) -> Coord:
        return self._room_pos

    @property
    def runtime(self) -> FloorRuntime:
        return self._runtime

    @property
    def total_ticks(self) -> int:
        return self._total_ticks

    @property
    def visited_themes(self) -> tuple[str, ...]:
        """Themes of every floor assembled so far, sorted by name."""
        return tuple(sorted({plan.theme.value for plan in self._plans.values()}))

    @property
    def theme(self) -> str:
        return self._runtime.plan.theme.value

    @property
    def palette(self) -> list[int]:
        """Current floor's tile-entry to palette-code table (16 entries)."""
        return [int(v) for v in self._luts[self._runtime.plan.floor_number]]

    def platform_standable(self, at_tick: int | None = None) -> bool:
        t = self._total_ticks if at_tick is None else at_tick
        return ((t + self._runtime.platform_offset) // PLATFORM_PERIOD) % 2 == 0

    # -- mechanics

    def _room(self) -> RoomState:
        return self._runtime.rooms[self._room_pos]

    def _die(self) -> None:
        self._done = True
        self._outcome = "death"

    def _tile_standable(self, room: RoomState, pos: Coord) -> bool:
        tile = room.grid[pos[0]][pos[1]]
        if tile is TileType.PLATFORM:
            return self.platform_standable()
        return tile in WALKABLE

    def _arrival(self, pos: Coord) -> float:
        """Pickups and stairs on the tile just entered."""
        room = self._room()
        tile = room.grid[pos[0]][pos[1]]
        reward = 0.0
        if tile is TileType.KEY:
            room.set_tile(pos, TileType.FLOOR)
            self._keys += 1
            self._counters["keys"] += 1
            if self.config.reward_mode == "dense":
                reward += 0.1
        elif tile is TileType.ORB:
            room.set_tile(pos, TileType.FLOOR)
            self._time += self.config.orb_bonus
            self._counters["orbs"] += 1
        elif tile is TileType.STAIRS:
            reward += self._advance_floor()
        return reward

    def _advance_floor(self) -> float:
        self._counters["floors"] += 1
        self._time += self.config.floor_bonus
        self._floor += 1
        if self._floor >= self.config.max_floor:
            self._done = True
            self._outcome = "success"
        else:
            self._load_floor(self._floor)
        return 1.0

    def _unlock_and_cross(self, side: str) -> float | None:
        """Pass through the door on ``side``, unlocking first when possible.

        Returns the reward earned, or None when a locked door blocks the way.
        """
        room = self._room()
        here = door_position(room.instance.size, side)
        other_pos = (
            self._room_pos[0] + SIDE_OFFSET[side][0],
            self._room_pos[1] + SIDE_OFFSET[side][1],
        )
        neighbor = self._runtime.rooms[other_pos]
        far = door_position(neighbor.instance.size, OPPOSITE_SIDE[side])
        reward = 0.0
        if room.grid[here[0]][here[1]] is TileType.DOOR_LOCKED:
            if self._keys < 1:
                return None
            self._keys -= 1
            self._counters["doors"] += 1
            if self.config.reward_mode == "dense":
                reward += 0.1
            room.set_tile(here, TileType.DOOR_OPEN)
            neighbor.set_tile(far, TileType.DOOR_OPEN)
        self._room_pos = other_pos
        self._agent = far
        return reward

    def _attempt_move(self, d: Coord) -> float:
        room = self._room()
        size = room.instance.size
        target = (self._agent[0] + d[0], self._agent[1] + d[1])
        if not (0 <= target[0] < size + 2 and 0 <= target[1] < size + 2):
            return 0.0
        tile = room.grid[target[0]][target[1]]
        if tile is TileType.WALL:
            return 0.0
        if tile in DOOR_TILES:
            side = room.door_sides.get(target)
            if side is None:
                return 0.0
            crossed = self._unlock_and_cross(side)
            return 0.0 if crossed is None else crossed
        if target in room.blocks:
            return self._attempt_push(room, target, d)
        if target in room.enemy_positions():
            self._agent = target
            self._die()
            return 0.0
        if tile is TileType.PIT:
            self._agent = target
            self._die()
            return 0.0
        if tile is TileType.PLATFORM and not self.platform_standable():
            return 0.0
        if tile in WALKABLE or tile is TileType.PLATFORM:
            self._agent = target
            return self._arrival(target)
        return 0.0

    def _attempt_push(self, room: RoomState, block: Coord, d: Coord) -> float:
        if self._pushed_this_step:
            return 0.0
        size = room.instance.size
        dest = (block[0] + d[0], block[1] + d[1])
        if not (1 <= dest[0] <= size and 1 <= dest[1] <= size):
            return 0.0
        tile = room.grid[dest[0]][dest[1]]
        if tile not in (TileType.FLOOR, TileType.DECOR, TileType.PLATE):
            return 0.0
        if dest in room.blocks or dest in room.enemy_positions():
            return 0.0
        room.blocks.discard(block)
        room.blocks.add(dest)
        self._agent = block
        self._pushed_this_step = True
        reward = 0.0
        if tile is TileType.PLATE and not room.puzzle_solved:
            room.puzzle_solved = True
            self._counters["puzzles"] += 1
            if self.config.reward_mode == "dense":
                reward += 0.1
        return reward

    def _attempt_jump(self, d: Coord) -> float:
        room = self._room()
        size = room.instance.size
        mid = (self._agent[0] + d[0], self._agent[1] + d[1])
        land = (self._agent[0] + 2 * d[0], self._agent[1] + 2 * d[1])
        if not (0 <= mid[0] < size + 2 and 0 <= mid[1] < size + 2):
            return 0.0
        if not (0 <= land[0] < size + 2 and 0 <= land[1] < size + 2):
            return 0.0
        mid_tile = room.grid[mid[0]][mid[1]]
        if mid_tile is TileType.WALL or mid_tile in DOOR_TILES:
            return 0.0
        land_tile = room.grid[land[0]][land[1]]
        if land in room.blocks or land in room.enemy_positions():
            return 0.0
        if land_tile in DOOR_TILES:
            side = room.door_sides.get(land)
            if side is None:
                return 0.0
            crossed = self._unlock_and_cross(side)
            return 0.0 if crossed is None else crossed
        if land_tile is TileType.PLATFORM:
            if self.platform_standable():
                self._agent = land
                return self._arrival(land)
            return 0.0
        if land_tile in WALKABLE:
            self._agent = land
            return self._arrival(land)
        return 0.0

    def _move_enemies(self) -> None:
        room = self._room()
        if not room.enemies:
            return
        stream = self._runtime.enemy_streams[self._room_pos]
        size = room.instance.size
        occupied = room.enemy_positions()
        for enemy in room.enemies:
            pos, direction = enemy
            if stream.below(4) == 0:
                direction = stream.below(4)

            def valid(p: Coord) -> bool:
                if not (1 <= p[0] <= size and 1 <= p[1] <= size):
                    return False
                if room.grid[p[0]][p[1]] not in ENEMY_WALKABLE:
                    return False
                if p in occupied or p in room.blocks or p == self._agent:
                    return False
                return True

            moved = False
            for turn in range(4):
                d = (direction + turn) % 4
                target = (pos[0] + HEADINGS[d][0], pos[1] + HEADINGS[d][1])
                if valid(target):
                    occupied.discard(pos)
                    occupied.add(target)
                    enemy[0] = target
                    enemy[1] = d
                    moved = True
                    break
            if not moved:
                enemy[1] = direction

    # -- rendering

    def render_observation(self) -> np.ndarray:
        room = self._room()
        lut = self._luts[self._runtime.plan.floor_number]
        side = room.instance.size + 2

        entries = room.entries.copy()
        for br, bc in room.blocks:
            entries[br, bc] = int(TileType.BLOCK)
        for pos, _ in room.enemies:
            entries[pos[0], pos[1]] = int(TileType.ENEMY)

        window = np.full((WINDOW, WINDOW), int(TileType.WALL), dtype=np.uint8)
        ar, ac = self._agent
        r0 = HALF_WINDOW - ar
        c0 = HALF_WINDOW - ac
        window[r0 : r0 + side, c0 : c0 + side] = entries

        # rot90 turns the k-th heading's axis to the top of the image.
        if self._heading:
            window = np.ascontiguousarray(np.rot90(window, k=self._heading))
        window[HALF_WINDOW, HALF_WINDOW] = AGENT_ENTRY

        coded = lut[window]
        scale = self.config.obs_size // WINDOW
        return np.repeat(np.repeat(coded, scale, axis=0), scale, axis=1)

    def _result(self, reward: float) -> StepResult:
        return StepResult(
            observation=self.render_observation(),
            reward=reward,
            done=self._done,
            floor=self._floor,
            keys=self._keys,
            time_remaining=self._time,
            outcome=self._outcome,
            counters=dict(self._counters),
        )
