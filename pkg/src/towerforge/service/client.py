"""Thin clients for the session service.

ServiceClient speaks the REST surface over httpx; WsClient speaks the
WebSocket protocol. Service-side error payloads are rehydrated into the
package's own exception types, so callers handle one error hierarchy
whether the engine runs in process or behind the service.
"""

from __future__ import annotations

import base64
from typing import Callable, Optional, Union

import httpx
import numpy as np

from towerforge.errors import TowerforgeError, error_for_code
from towerforge.service.schemas import PROTOCOL_VERSION


def decode_observation(payload: dict) -> np.ndarray:
    """Rebuild the uint8 raster from an obs_shape/obs_b64 payload."""
    shape = tuple(payload["obs_shape"])
    raw = base64.b64decode(payload["obs_b64"])
    return np.frombuffer(raw, dtype=np.uint8).reshape(shape)


def _raise_wire_error(body) -> None:
    if isinstance(body, dict) and isinstance(body.get("error"), dict):
        err = body["error"]
        raise error_for_code(str(err.get("code", "Error")), str(err.get("message", "")))


class ServiceClient:
    """Synchronous REST client; one instance per server."""

    def __init__(self, base_url: str, timeout: float = 30.0, transport=None):
        self._http = httpx.Client(base_url=base_url, timeout=timeout, transport=transport)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _call(self, method: str, path: str, json: Optional[dict] = None) -> dict:
        response = self._http.request(method, path, json=json)
        try:
            body = response.json()
        except ValueError:
            response.raise_for_status()
            raise TowerforgeError(f"non-JSON response from {path}")
        if response.status_code >= 400:
            _raise_wire_error(body)
            response.raise_for_status()
        return body

    def health(self) -> dict:
        return self._call("GET", "/v1/health")

    def create_session(self, config: Optional[dict] = None) -> dict:
        return self._call("POST", "/v1/sessions", json={"config": config or {}})

    def step(self, session_id: str, action: Union[int, list]) -> dict:
        return self._call("POST", f"/v1/sessions/{session_id}/step", json={"action": action})

    def reset(self, session_id: str, **overrides) -> dict:
        return self._call("POST", f"/v1/sessions/{session_id}/reset", json=overrides)

    def render(self, session_id: str) -> dict:
        return self._call("GET", f"/v1/sessions/{session_id}/render")

    def info(self, session_id: str) -> dict:
        return self._call("GET", f"/v1/sessions/{session_id}/info")

    def close_session(self, session_id: str) -> dict:
        return self._call("DELETE", f"/v1/sessions/{session_id}")


class WsClient:
    """Synchronous WebSocket client; one request in flight at a time."""

    def __init__(self, url: str, open_timeout: float = 10.0):
        from websockets.sync.client import connect  # lazy; server side has no need

        self._ws = connect(url, open_timeout=open_timeout)
        self._next_id = 0

    def close(self) -> None:
        self._ws.close()

    def __enter__(self) -> "WsClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def request(self, op: str, **fields) -> dict:
        import json

        self._next_id += 1
        message = {"v": PROTOCOL_VERSION, "op": op, "id": self._next_id} | fields
        self._ws.send(json.dumps(message))
        reply = json.loads(self._ws.recv())
        if not reply.get("ok", False):
            _raise_wire_error(reply)
            raise TowerforgeError(f"malformed error reply for op {op!r}")
        return reply


PolicyFn = Callable[[dict, dict], Union[int, list]]


def attach_remote_agent(url: str, policy: PolicyFn, max_steps: int = 20000) -> int:
    """Reference remote-agent loop: drain the server's evaluation manifest.

    policy(step_payload, episode_header) -> action. Returns the number of
    episodes played. The server records results from its own state, so
    this loop reports nothing back.
    """
    episodes = 0
    with WsClient(url) as ws:
        while True:
            handed = ws.request("eval_next")
            if handed.get("done"):
                return episodes
            header = {"episode": handed["episode"], "config": handed["config"]}
            created = ws.request("create", episode=handed["episode"])
            session_id = created["session_id"]
            step = created["step"]
            for _ in range(max_steps):
                if step["done"]:
                    break
                reply = ws.request(
                    "step", session_id=session_id, action=policy(step, header)
                )
                step = reply["step"]
            ws.request("close", session_id=session_id)
            episodes += 1
