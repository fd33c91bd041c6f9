"""HTTP + WebSocket application serving simulator sessions.

Surface (all under /v1):
  GET  /v1/health                      liveness, live session count
  POST /v1/sessions                    create; body {"config": {...}}
  GET  /v1/sessions/{id}/info          config and progress snapshot
  POST /v1/sessions/{id}/step          body {"action": flat index or 4-list}
  POST /v1/sessions/{id}/reset         body with optional seed overrides
  GET  /v1/sessions/{id}/render        current frame without stepping
  DELETE /v1/sessions/{id}             close
  WS   /v1/ws                          one JSON request per JSON response

Every WebSocket message carries "v": 1; requests name an "op" and may
carry a client "id" that is echoed back verbatim. Step payloads reuse
the engine's own serialization so wire results are byte-identical to
in-process results.
"""

from __future__ import annotations

import base64
import threading
from typing import Optional

from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from towerforge.errors import BadConfig, ParseError, TowerforgeError
from towerforge.evaluation import EpisodeRecord, EvalReport, Protocol
from towerforge.service import schemas
from towerforge.service.sessions import Session, SessionManager
from towerforge.simulator import EpisodeConfig, StepResult

# HTTP status per error code; anything unlisted is a 500.
STATUS_BY_CODE = {
    "BadConfig": 400,
    "InvalidAction": 400,
    "ParseError": 400,
    "OutOfRange": 400,
    "UnknownSession": 404,
    "CapacityExceeded": 409,
    "Busy": 409,
    "EpisodeDone": 409,
}


class RemoteEval:
    """Hands evaluation episodes to attached clients and collects results.

    The server stays authoritative: rewards and floor counts come from
    its own sessions, not from anything the client reports. A client
    asks for work with {"op": "eval_next"}, creates the session with the
    returned episode index, and plays until done.
    """

    def __init__(
        self,
        protocol: Protocol,
        max_floor: int = 25,
        reward_mode: str = "sparse",
    ):
        self.protocol = protocol
        self.agent_name = "remote"
        self._configs = [
            EpisodeConfig(
                tower_seed=tower_seed,
                dynamics_seed=dynamics_seed,
                max_floor=max_floor,
                reward_mode=reward_mode,
                allowed_themes=protocol.test_themes,
            )
            for tower_seed in protocol.test_seeds
            for dynamics_seed in protocol.dynamics_seeds
        ]
        self._handed = 0
        self._records: dict[int, EpisodeRecord] = {}
        self._lock = threading.Lock()

    def next_episode(self) -> Optional[tuple[int, EpisodeConfig]]:
        with self._lock:
            if self._handed >= len(self._configs):
                return None
            index = self._handed
            self._handed += 1
            return index, self._configs[index]

    def config_for(self, index: int) -> EpisodeConfig:
        if not 0 <= index < len(self._configs):
            raise BadConfig(f"episode index {index} outside the manifest")
        return self._configs[index]

    def record(self, session: Session, result: StepResult) -> None:
        index = session.episode_index
        if index is None:
            return
        config = session.sim.config
        with self._lock:
            self._records[index] = EpisodeRecord(
                tower_seed=config.tower_seed,
                dynamics_seed=config.dynamics_seed,
                reward=session.total_reward,
                floors=result.counters["floors"],
                steps=session.steps,
                outcome=session.sim.outcome,
                themes=session.sim.visited_themes,
            )

    @property
    def complete(self) -> bool:
        with self._lock:
            return len(self._records) == len(self._configs)

    def report(self) -> EvalReport:
        with self._lock:
            records = [self._records[i] for i in sorted(self._records)]
        records.sort(key=lambda r: (r.tower_seed, r.dynamics_seed))
        allowed = {t.value for t in self.protocol.test_themes}
        violations = sum(
            1 for r in records for theme in r.themes if theme not in allowed
        )
        return EvalReport(self.protocol, self.agent_name, records, violations)


def _error_payload(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


def _step_wire(result: StepResult, include_obs: bool = True) -> dict:
    return result.to_json(include_obs=include_obs)


def create_app(
    capacity: int = 50,
    remote_eval: Optional[RemoteEval] = None,
) -> FastAPI:
    app = FastAPI(title="towerforge session service", docs_url=None, redoc_url=None)
    manager = SessionManager(capacity=capacity)
    app.state.manager = manager
    app.state.remote_eval = remote_eval
    if remote_eval is not None:
        manager.on_episode_done = remote_eval.record

    @app.exception_handler(TowerforgeError)
    async def _domain_error(request: Request, exc: TowerforgeError):
        status = STATUS_BY_CODE.get(exc.code, 500)
        return JSONResponse(status_code=status, content=_error_payload(exc.code, str(exc)))

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400, content=_error_payload("ParseError", str(exc.errors()))
        )

    # -- REST surface

    @app.get("/v1/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(
            status="ok", sessions=len(manager), capacity=manager.capacity
        )

    @app.post("/v1/sessions", response_model=schemas.CreateResponse)
    def create_session(body: schemas.CreateRequest):
        config = body.config.to_config()
        session = manager.create(config)
        first = session.sim.observe()
        return {
            "session_id": session.id,
            "config": config.to_json(),
            "step": _step_wire(first),
        }

    @app.get("/v1/sessions/{session_id}/info", response_model=schemas.InfoResponse)
    def session_info(session_id: str):
        session = manager.get(session_id)
        data = session.snapshot()
        data["theme"] = session.sim.theme
        data["palette"] = session.sim.palette
        return data

    @app.post("/v1/sessions/{session_id}/step", response_model=schemas.StepEnvelope)
    def step_session(session_id: str, body: schemas.StepRequest):
        action = schemas.parse_action_field(body.action)
        result = manager.step(session_id, action)
        return {"session_id": session_id, "step": _step_wire(result)}

    @app.post("/v1/sessions/{session_id}/reset", response_model=schemas.StepEnvelope)
    def reset_session(session_id: str, body: Optional[schemas.ResetRequest] = None):
        overrides = body.overrides() if body is not None else {}
        result = manager.reset(session_id, overrides)
        return {"session_id": session_id, "step": _step_wire(result)}

    @app.get("/v1/sessions/{session_id}/render", response_model=schemas.RenderResponse)
    def render_session(session_id: str):
        frame = manager.render(session_id)
        return {
            "session_id": session_id,
            "obs_shape": list(frame.shape),
            "obs_b64": base64.b64encode(frame.tobytes()).decode("ascii"),
        }

    @app.delete("/v1/sessions/{session_id}", response_model=schemas.CloseResponse)
    def close_session(session_id: str):
        manager.close(session_id)
        return {"session_id": session_id, "closed": True}

    # -- WebSocket surface: same operations, one response per request

    @app.websocket("/v1/ws")
    async def websocket_endpoint(ws: WebSocket):
        await ws.accept()
        try:
            while True:
                try:
                    message = await ws.receive_json()
                except (ValueError, TypeError):
                    await ws.send_json(
                        {"v": schemas.PROTOCOL_VERSION, "ok": False}
                        | _error_payload("ParseError", "frame is not valid JSON")
                    )
                    continue
                await ws.send_json(_handle_ws(app, message))
        except WebSocketDisconnect:
            return

    return app


def _handle_ws(app: FastAPI, message) -> dict:
    """Process one WebSocket request; always returns exactly one response."""
    manager: SessionManager = app.state.manager
    remote_eval: Optional[RemoteEval] = app.state.remote_eval

    base = {"v": schemas.PROTOCOL_VERSION}
    if isinstance(message, dict) and "id" in message:
        base["id"] = message["id"]

    try:
        if not isinstance(message, dict):
            raise ParseError("request must be a JSON object")
        if message.get("v") != schemas.PROTOCOL_VERSION:
            raise ParseError(f"protocol version must be {schemas.PROTOCOL_VERSION}")
        op = message.get("op")
        if op == "create":
            episode = message.get("episode")
            if episode is not None:
                if remote_eval is None:
                    raise BadConfig("no evaluation manifest loaded")
                if not isinstance(episode, int) or isinstance(episode, bool):
                    raise ParseError("episode must be an integer")
                config = remote_eval.config_for(episode)
            else:
                config = EpisodeConfig.from_json(message.get("config") or {})
            session = manager.create(config)
            session.episode_index = episode
            first = session.sim.observe()
            return base | {
                "ok": True,
                "op": op,
                "session_id": session.id,
                "config": config.to_json(),
                "step": _step_wire(first),
            }
        if op == "step":
            session_id = _require_session_id(message)
            action = message.get("action")
            if not isinstance(action, (int, list)) or isinstance(action, bool):
                raise ParseError("action must be an integer or a 4-list")
            result = manager.step(session_id, action)
            return base | {
                "ok": True, "op": op, "session_id": session_id,
                "step": _step_wire(result),
            }
        if op == "reset":
            session_id = _require_session_id(message)
            overrides = {
                k: message[k]
                for k in ("tower_seed", "dynamics_seed", "start_floor")
                if k in message
            }
            result = manager.reset(session_id, overrides)
            return base | {
                "ok": True, "op": op, "session_id": session_id,
                "step": _step_wire(result),
            }
        if op == "render":
            session_id = _require_session_id(message)
            frame = manager.render(session_id)
            return base | {
                "ok": True, "op": op, "session_id": session_id,
                "obs_shape": list(frame.shape),
                "obs_b64": base64.b64encode(frame.tobytes()).decode("ascii"),
            }
        if op == "info":
            session_id = _require_session_id(message)
            session = manager.get(session_id)
            data = session.snapshot()
            data["theme"] = session.sim.theme
            data["palette"] = session.sim.palette
            return base | {"ok": True, "op": op} | data
        if op == "close":
            session_id = _require_session_id(message)
            manager.close(session_id)
            return base | {"ok": True, "op": op, "session_id": session_id, "closed": True}
        if op == "eval_next":
            if remote_eval is None:
                raise BadConfig("no evaluation manifest loaded")
            handed = remote_eval.next_episode()
            if handed is None:
                return base | {"ok": True, "op": op, "done": True}
            index, config = handed
            return base | {
                "ok": True, "op": op, "done": False,
                "episode": index, "config": config.to_json(),
            }
        raise ParseError(f"unknown op {op!r}")
    except TowerforgeError as exc:
        return base | {"ok": False} | _error_payload(exc.code, str(exc))


def _require_session_id(message: dict) -> str:
    session_id = message.get("session_id")
    if not isinstance(session_id, str):
        raise ParseError("session_id must be a string")
    return session_id
