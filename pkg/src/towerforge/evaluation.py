"""Evaluation protocols, reports, and throughput measurement.

Three generalization regimes: "none" tests on the training seeds, "weak"
tests on held-out seeds crossed with held-out dynamics seeds, and "strong"
additionally swaps the visual theme pool between train and test.  Seed lists
derive from a protocol seed, so a protocol is reproducible from one integer.
Reports carry per-episode records, aggregate statistics, a theme audit, and a
fingerprint over their canonical serialization.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

from .actions import Action, ACTION_COUNT, unflatten_action
from .errors import SeedOverlap, ThemeOverlap
from .rng import Stream
from .serialize import canonical_dumps
from .simulator import EpisodeConfig, Simulator, StepResult
from .solver import ScriptedSolver
from .themes import ALL_THEMES, VisualTheme

SEED_SPACE = 1_000_000
DEFAULT_TRAIN_SEEDS = 100
DEFAULT_TEST_SEEDS = 5
DEFAULT_DYNAMICS_SEEDS = 5

STRONG_TRAIN_THEMES = (VisualTheme.ANCIENT, VisualTheme.MOORISH)
STRONG_TEST_THEMES = (VisualTheme.INDUSTRIAL,)

THROUGHPUT_FLOORS = (0, 5, 10, 15, 20)
THROUGHPUT_SEEDS = 5
THROUGHPUT_STEPS = 500

MODES = ("none", "weak", "strong")


@dataclass(frozen=True)
class Protocol:
    mode: str
    train_seeds: tuple[int, ...]
    test_seeds: tuple[int, ...]
    dynamics_seeds: tuple[int, ...]
    train_themes: tuple[VisualTheme, ...]
    test_themes: tuple[VisualTheme, ...]

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "train_seeds": list(self.train_seeds),
            "test_seeds": list(self.test_seeds),
            "dynamics_seeds": list(self.dynamics_seeds),
            "train_themes": [t.value for t in self.train_themes],
            "test_themes": [t.value for t in self.test_themes],
        }


def _draw_distinct(stream: Stream, count: int, taken: set[int]) -> list[int]:
    out: list[int] = []
    while len(out) < count:
        candidate = stream.below(SEED_SPACE)
        if candidate in taken:
            continue
        taken.add(candidate)
        out.append(candidate)
    return out


def make_protocol(
    mode: str,
    protocol_seed: int = 0,
    train_count: int = DEFAULT_TRAIN_SEEDS,
    test_count: int = DEFAULT_TEST_SEEDS,
    dynamics_count: int = DEFAULT_DYNAMICS_SEEDS,
) -> Protocol:
    if mode not in MODES:
        raise ValueError(f"unknown protocol mode {mode!r}")
    taken: set[int] = set()
    train = _draw_distinct(Stream.for_tag(protocol_seed, "train"), train_count, taken)
    if mode == "none":
        test = train[:test_count]
    else:
        test = _draw_distinct(Stream.for_tag(protocol_seed, "test"), test_count, taken)
    dynamics_stream = Stream.for_tag(protocol_seed, "dynamics")
    dynamics = [dynamics_stream.below(SEED_SPACE) for _ in range(dynamics_count)]
    if mode == "strong":
        train_themes, test_themes = STRONG_TRAIN_THEMES, STRONG_TEST_THEMES
    else:
        train_themes = test_themes = ALL_THEMES
    protocol = Protocol(mode, tuple(train), tuple(test), tuple(dynamics), train_themes, test_themes)
    validate_protocol(protocol)
    return protocol


def validate_protocol(protocol: Protocol) -> None:
    if protocol.mode not in MODES:
        raise ValueError(f"unknown protocol mode {protocol.mode!r}")
    if protocol.mode in ("weak", "strong"):
        overlap = set(protocol.train_seeds) & set(protocol.test_seeds)
        if overlap:
            raise SeedOverlap(f"test seeds seen in training: {sorted(overlap)}")
    if protocol.mode == "strong":
        shared = set(protocol.train_themes) & set(protocol.test_themes)
        if shared:
            raise ThemeOverlap(f"themes in both pools: {sorted(t.value for t in shared)}")


# ---------------------------------------------------------------------------
# Agents

class RandomAgent:
    """Uniform over the 54 flat actions, seeded."""

    def __init__(self, seed: int = 0):
        self._seed = seed
        self._stream = Stream.for_tag(seed, "random-agent")

    def reset(self, sim: Simulator) -> None:
        self._stream = Stream.for_tag(
            self._seed, "random-agent", sim.config.tower_seed, sim.config.dynamics_seed
        )

    def act(self, result: StepResult) -> Action:
        return unflatten_action(self._stream.below(ACTION_COUNT))


class SolverAgent:
    """Scripted controller bound to the live simulator at reset."""

    def __init__(self):
        self._solver: Optional[ScriptedSolver] = None

    def reset(self, sim: Simulator) -> None:
        self._solver = ScriptedSolver(sim)

    def act(self, result: StepResult) -> Action:
        return self._solver.act()


AgentFactory = Callable[[], object]

AGENT_FACTORIES: dict[str, AgentFactory] = {
    "random": RandomAgent,
    "solver": SolverAgent,
}


# ---------------------------------------------------------------------------
# Episode running and reports

@dataclass
class EpisodeRecord:
    tower_seed: int
    dynamics_seed: int
    reward: float
    floors: int
    steps: int
    outcome: Optional[str]
    themes: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "tower_seed": self.tower_seed,
            "dynamics_seed": self.dynamics_seed,
            "reward": self.reward,
            "floors": self.floors,
            "steps": self.steps,
            "outcome": self.outcome,
            "themes": list(self.themes),
        }


@dataclass
class EvalReport:
    protocol: Protocol
    agent_name: str
    records: list[EpisodeRecord]
    theme_violations: int

    def aggregates(self) -> dict:
        rewards = [r.reward for r in self.records]
        floors = [r.floors for r in self.records]
        n = len(self.records)
        mean_reward = sum(rewards) / n if n else 0.0
        variance = sum((x - mean_reward) ** 2 for x in rewards) / n if n else 0.0
        return {
            "episodes": n,
            "mean_reward": mean_reward,
            "std_reward": variance**0.5,
            "mean_floors": sum(floors) / n if n else 0.0,
            "max_floors": max(floors) if floors else 0,
        }

    def to_json(self) -> dict:
        return {
            "protocol": self.protocol.to_json(),
            "agent": self.agent_name,
            "records": [r.to_json() for r in self.records],
            "aggregates": self.aggregates(),
            "theme_violations": self.theme_violations,
        }

    def fingerprint(self) -> str:
        return hashlib.sha256(canonical_dumps(self.to_json()).encode()).hexdigest()


def run_episode(
    config: EpisodeConfig, agent, max_actions: int = 5000
) -> EpisodeRecord:
    sim = Simulator(config)
    result = sim.reset()
    agent.reset(sim)
    themes = {sim.runtime.plan.theme.value}
    total = result.reward
    steps = 0
    while not sim.done and steps < max_actions:
        result = sim.step(agent.act(result))
        total += result.reward
        steps += 1
        if not sim.done:
            themes.add(sim.runtime.plan.theme.value)
    return EpisodeRecord(
        tower_seed=config.tower_seed,
        dynamics_seed=config.dynamics_seed,
        reward=total,
        floors=result.counters["floors"],
        steps=steps,
        outcome=sim.outcome,
        themes=tuple(sorted(themes)),
    )


def run_protocol(
    protocol: Protocol,
    agent: str | AgentFactory = "random",
    max_floor: int = 25,
    reward_mode: str = "sparse",
    max_actions: int = 5000,
    workers: int = 1,
) -> EvalReport:
    """Evaluate on every (test seed, dynamics seed) pair; order-independent."""
    validate_protocol(protocol)
    if isinstance(agent, str):
        agent_name, factory = agent, AGENT_FACTORIES[agent]
    else:
        agent_name, factory = getattr(agent, "__name__", "custom"), agent

    jobs = [
        (tower_seed, dynamics_seed)
        for tower_seed in protocol.test_seeds
        for dynamics_seed in protocol.dynamics_seeds
    ]

    def one(job: tuple[int, int]) -> EpisodeRecord:
        tower_seed, dynamics_seed = job
        config = EpisodeConfig(
            tower_seed=tower_seed,
            dynamics_seed=dynamics_seed,
            max_floor=max_floor,
            reward_mode=reward_mode,
            allowed_themes=protocol.test_themes,
        )
        return run_episode(config, factory(), max_actions=max_actions)

    if workers <= 1:
        records = [one(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(one, jobs))
    records.sort(key=lambda r: (r.tower_seed, r.dynamics_seed))

    allowed = {t.value for t in protocol.test_themes}
    violations = sum(
        1 for r in records for theme in r.themes if theme not in allowed
    )
    return EvalReport(protocol, agent_name, records, violations)


# ---------------------------------------------------------------------------
# Throughput

@dataclass
class ThroughputRow:
    floor: int
    mean_ms: float
    steps_per_second: float

    def to_json(self) -> dict:
        return {
            "floor": self.floor,
            "mean_ms": self.mean_ms,
            "steps_per_second": self.steps_per_second,
        }


def measure_throughput(
    bench_seed: int = 0,
    floors: tuple[int, ...] = THROUGHPUT_FLOORS,
    seeds_per_floor: int = THROUGHPUT_SEEDS,
    steps: int = THROUGHPUT_STEPS,
) -> list[ThroughputRow]:
    """Wall-clock stepping rate per floor; each row averages several towers."""
    seed_stream = Stream.for_tag(bench_seed, "bench")
    tower_seeds = [seed_stream.below(SEED_SPACE) for _ in range(seeds_per_floor)]
    rows = []
    for floor in floors:
        elapsed = 0.0
        for tower_seed in tower_seeds:
            config = EpisodeConfig(
                tower_seed=tower_seed, max_floor=max(floor + 1, 25), start_floor=floor
            )
            sim = Simulator(config)
            sim.reset()
            action_stream = Stream.for_tag(bench_seed, "bench-actions", floor, tower_seed)
            flats = [action_stream.below(ACTION_COUNT) for _ in range(steps)]
            t0 = time.perf_counter()
            for flat in flats:
                if sim.done:
                    sim.reset()
                sim.step_flat(flat)
            elapsed += time.perf_counter() - t0
        mean_ms = (elapsed / (seeds_per_floor * steps)) * 1000.0
        rows.append(ThroughputRow(floor, mean_ms, 1000.0 / mean_ms))
    return rows
