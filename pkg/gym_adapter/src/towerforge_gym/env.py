"""Thin gym-style environment over the session service REST surface.

One environment instance owns one server session. Observations come back
as (raster, aux) where the raster is the palette-coded uint8 array the
service sent (base64-decoded, nothing recomputed) and aux is
[keys_held, time_remaining]. Vectorized training stacks N adapters
against one server; the server's session capacity governs parallelism.
"""

from __future__ import annotations

import atexit
import base64
import socket
import subprocess
import time
from dataclasses import dataclass, field

import httpx
import numpy as np

ACTION_COUNT = 54
ACTION_RADIX = (3, 3, 3, 2)
AUX_FIELDS = ("keys", "time")


class AdapterError(Exception):
    """Service-reported failure; `code` mirrors the wire error code."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


class ConnectionFailed(AdapterError):
    def __init__(self, message: str):
        super().__init__("ConnectionFailed", message)


@dataclass(frozen=True)
class DiscreteSpace:
    n: int

    def contains(self, value) -> bool:
        return isinstance(value, (int, np.integer)) and not isinstance(value, bool) \
            and 0 <= int(value) < self.n

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.n))


@dataclass(frozen=True)
class MultiDiscreteSpace:
    nvec: tuple[int, ...]

    def contains(self, value) -> bool:
        try:
            parts = [int(v) for v in value]
        except (TypeError, ValueError):
            return False
        if any(isinstance(v, bool) for v in value):
            return False
        return len(parts) == len(self.nvec) and all(
            0 <= p < n for p, n in zip(parts, self.nvec)
        )

    def sample(self, rng: np.random.Generator) -> tuple[int, ...]:
        return tuple(int(rng.integers(n)) for n in self.nvec)


@dataclass(frozen=True)
class BoxSpace:
    shape: tuple[int, ...]
    dtype: str
    low: int
    high: int

    def contains(self, value) -> bool:
        arr = np.asarray(value)
        return arr.shape == self.shape and bool(
            (arr >= self.low).all() and (arr <= self.high).all()
        )


@dataclass(frozen=True)
class AdapterConfig:
    address: str = "http://127.0.0.1:8808"
    action_mode: str = "flat"  # or "multi"
    obs_size: int = 84
    auto_start: bool = False
    episode: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.action_mode not in ("flat", "multi"):
            raise ValueError(f"action_mode {self.action_mode!r}")
        if self.obs_size not in (84, 168):
            raise ValueError(f"obs_size {self.obs_size!r} not one of 84, 168")


def _port_of(address: str) -> int:
    tail = address.rsplit(":", 1)[-1].strip("/")
    return int(tail) if tail.isdigit() else 8808


def _wait_reachable(client: httpx.Client, deadline: float) -> bool:
    while time.monotonic() < deadline:
        try:
            if client.get("/v1/health").status_code == 200:
                return True
        except httpx.TransportError:
            time.sleep(0.1)
    return False


class TowerEnv:
    """reset() -> (raster, aux); step(action) -> (obs, reward, done, info)."""

    def __init__(self, config: AdapterConfig | None = None, **episode):
        self.config = config or AdapterConfig()
        self._episode = {**self.config.episode, **episode, "obs_size": self.config.obs_size}
        self._client = httpx.Client(base_url=self.config.address, timeout=30.0)
        self._server: subprocess.Popen | None = None
        self._session_id: str | None = None
        self._last_payload: dict | None = None
        size = self.config.obs_size
        self.observation_space = BoxSpace(shape=(size, size), dtype="uint8", low=0, high=255)
        self.aux_space = BoxSpace(shape=(2,), dtype="int64", low=0, high=2**31 - 1)
        if self.config.action_mode == "flat":
            self.action_space: DiscreteSpace | MultiDiscreteSpace = DiscreteSpace(ACTION_COUNT)
        else:
            self.action_space = MultiDiscreteSpace(ACTION_RADIX)
        self._connect()

    # -- lifecycle ---------------------------------------------------------

    def _connect(self) -> None:
        if _wait_reachable(self._client, time.monotonic() + 0.5):
            return
        if not self.config.auto_start:
            raise ConnectionFailed(f"no service at {self.config.address}")
        port = _port_of(self.config.address)
        self._server = subprocess.Popen(
            ["towerforge", "serve", "--port", str(port)],
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
        )
        atexit.register(self._stop_server)
        if not _wait_reachable(self._client, time.monotonic() + 15.0):
            self._stop_server()
            raise ConnectionFailed(f"auto-started server never came up on port {port}")

    def _stop_server(self) -> None:
        if self._server is not None and self._server.poll() is None:
            self._server.terminate()
            try:
                self._server.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._server.kill()
        self._server = None

    def close(self) -> None:
        if self._session_id is not None:
            try:
                self._client.delete(f"/v1/sessions/{self._session_id}")
            except httpx.TransportError:
                pass
            self._session_id = None
        self._client.close()
        self._stop_server()

    def __enter__(self) -> "TowerEnv":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- wire helpers ------------------------------------------------------

    def _call(self, method: str, path: str, body: dict | None = None) -> dict:
        try:
            resp = self._client.request(method, path, json=body)
        except httpx.TransportError as exc:
            raise ConnectionFailed(str(exc))
        data = resp.json()
        if resp.status_code != 200:
            err = data.get("error", {})
            raise AdapterError(err.get("code", "Unknown"), err.get("message", resp.text))
        return data

    def _decode(self, payload: dict) -> tuple[np.ndarray, np.ndarray]:
        self._last_payload = payload
        h, w = payload["obs_shape"]
        raster = np.frombuffer(base64.b64decode(payload["obs_b64"]), dtype=np.uint8)
        raster = raster.reshape(h, w)
        aux = np.array([payload[f] for f in AUX_FIELDS], dtype=np.int64)
        return raster, aux

    def _flatten(self, action) -> int | list[int]:
        if self.config.action_mode == "flat":
            if not self.action_space.contains(action):
                raise AdapterError("InvalidAction", f"{action!r} outside 0..{ACTION_COUNT - 1}")
            return int(action)
        if not self.action_space.contains(action):
            raise AdapterError("OutOfRange", f"{action!r} outside radix {ACTION_RADIX}")
        return [int(v) for v in action]

    # -- gym surface -------------------------------------------------------

    def reset(self, **seed_overrides) -> tuple[np.ndarray, np.ndarray]:
        if self._session_id is None:
            body = {"config": {**self._episode, **seed_overrides}}
            data = self._call("POST", "/v1/sessions", body)
            self._session_id = data["session_id"]
        else:
            data = self._call(
                "POST", f"/v1/sessions/{self._session_id}/reset", seed_overrides or None
            )
        return self._decode(data["step"])

    def step(self, action):
        if self._session_id is None:
            raise AdapterError("NotStarted", "call reset() before step()")
        wire = self._flatten(action)
        data = self._call(
            "POST", f"/v1/sessions/{self._session_id}/step", {"action": wire}
        )
        payload = data["step"]
        obs = self._decode(payload)
        info = {
            "floor_index": payload["floor"],
            "outcome": payload["outcome"],
            "counters": payload["counters"],
        }
        return obs, payload["reward"], payload["done"], info

    def render(self) -> np.ndarray:
        if self._session_id is None:
            raise AdapterError("NotStarted", "call reset() before render()")
        data = self._call("GET", f"/v1/sessions/{self._session_id}/render")
        h, w = data["obs_shape"]
        return np.frombuffer(base64.b64decode(data["obs_b64"]), dtype=np.uint8).reshape(h, w)

    def session_info(self) -> dict:
        if self._session_id is None:
            raise AdapterError("NotStarted", "call reset() before session_info()")
        return self._call("GET", f"/v1/sessions/{self._session_id}/info")
