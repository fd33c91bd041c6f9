"""Session registry: capacity-limited simulators behind opaque tokens.

One request may be in flight per session at a time; a second concurrent
request gets Busy rather than queueing, so a stalled client cannot pile
up work. The registry itself is guarded by a separate lock and is safe
under concurrent HTTP and WebSocket handlers.
"""

from __future__ import annotations

import dataclasses
import secrets
import threading
from typing import Callable, Optional, Union

from towerforge.actions import Action, unflatten_action
from towerforge.errors import Busy, CapacityExceeded, InvalidAction, UnknownSession
from towerforge.simulator import EpisodeConfig, Simulator, StepResult

DEFAULT_CAPACITY = 50


def _coerce_action(action: Union[int, tuple, list, Action]) -> Action:
    if isinstance(action, Action):
        return action
    if isinstance(action, bool):
        raise InvalidAction("boolean is not an action")
    if isinstance(action, int):
        try:
            return unflatten_action(action)
        except Exception:
            raise InvalidAction(f"flat action {action!r} outside 0..53")
    if isinstance(action, (tuple, list)) and len(action) == 4:
        try:
            return Action(*action)
        except Exception:
            raise InvalidAction(f"structured action {tuple(action)!r} out of range")
    raise InvalidAction(f"unusable action {action!r}")


class Session:
    """A live simulator plus per-session bookkeeping."""

    def __init__(self, session_id: str, sim: Simulator):
        self.id = session_id
        self.sim = sim
        self.lock = threading.Lock()
        self.steps = 0
        self.total_reward = float(sim.reset().reward)
        # Optional tag linking this session to an external evaluation slot.
        self.episode_index: Optional[int] = None

    def snapshot(self) -> dict:
        return {
            "session_id": self.id,
            "config": self.sim.config.to_json(),
            "done": self.sim.done,
            "floor": self.sim.floor,
            "keys": self.sim.keys,
            "time": self.sim.time_remaining,
            "steps": self.steps,
            "total_reward": self.total_reward,
        }


class SessionManager:
    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        self.capacity = capacity
        self._sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()
        # Called with (session, result) when a step finishes an episode.
        self.on_episode_done: Optional[Callable[[Session, StepResult], None]] = None

    def __len__(self) -> int:
        with self._registry_lock:
            return len(self._sessions)

    def create(self, config: EpisodeConfig) -> Session:
        config.validate()
        with self._registry_lock:
            if len(self._sessions) >= self.capacity:
                raise CapacityExceeded(
                    f"{len(self._sessions)} live sessions; capacity {self.capacity}"
                )
            session_id = secrets.token_hex(16)
            while session_id in self._sessions:
                session_id = secrets.token_hex(16)
            session = Session(session_id, Simulator(config))
            self._sessions[session_id] = session
            return session

    def get(self, session_id: str) -> Session:
        with self._registry_lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"no session {session_id!r}")
        return session

    def close(self, session_id: str) -> None:
        with self._registry_lock:
            if self._sessions.pop(session_id, None) is None:
                raise UnknownSession(f"no session {session_id!r}")

    def close_all(self) -> None:
        with self._registry_lock:
            self._sessions.clear()

    # -- per-session operations; each holds that session's lock

    def _locked(self, session_id: str) -> Session:
        session = self.get(session_id)
        if not session.lock.acquire(blocking=False):
            raise Busy(f"session {session_id!r} has a request in flight")
        return session

    def step(self, session_id: str, action: Union[int, tuple, list, Action]) -> StepResult:
        session = self._locked(session_id)
        try:
            result = session.sim.step(_coerce_action(action))
            session.steps += 1
            session.total_reward += result.reward
            if result.done and self.on_episode_done is not None:
                self.on_episode_done(session, result)
            return result
        finally:
            session.lock.release()

    def reset(self, session_id: str, overrides: Optional[dict] = None) -> StepResult:
        session = self._locked(session_id)
        try:
            if overrides:
                config = dataclasses.replace(session.sim.config, **overrides)
                config.validate()
                session.sim = Simulator(config)
                result = session.sim.reset()
            else:
                result = session.sim.reset()
            session.steps = 0
            session.total_reward = float(result.reward)
            return result
        finally:
            session.lock.release()

    def render(self, session_id: str):
        session = self._locked(session_id)
        try:
            return session.sim.render_observation()
        finally:
            session.lock.release()
