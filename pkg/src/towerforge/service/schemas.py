"""Request and response models for the session service.

Payload field names match the engine's own JSON shapes exactly, so a
serialized step travelling through the service stays byte-identical to
one produced in process.
"""

from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field

from towerforge.errors import BadConfig
from towerforge.simulator import EpisodeConfig

PROTOCOL_VERSION = 1


class ConfigModel(BaseModel):
    """Wire mirror of EpisodeConfig; defaults match the engine defaults."""

    model_config = ConfigDict(extra="forbid")

    tower_seed: int = 0
    dynamics_seed: int = 0
    max_floor: Optional[int] = None
    start_floor: Optional[int] = None
    reward_mode: Optional[str] = None
    obs_size: Optional[int] = None
    allowed_themes: Optional[list[str]] = None
    starting_time: Optional[int] = None
    orb_bonus: Optional[int] = None
    floor_bonus: Optional[int] = None

    def to_config(self) -> EpisodeConfig:
        data = {k: v for k, v in self.model_dump().items() if v is not None}
        return EpisodeConfig.from_json(data)


class CreateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: ConfigModel = Field(default_factory=ConfigModel)


class StepRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # Either a flat index in [0, 54) or a structured [move, turn, strafe, jump].
    action: Union[int, list[int]]


class ResetRequest(BaseModel):
    """Optional seed overrides; omitted fields keep the session's config."""

    model_config = ConfigDict(extra="forbid")

    tower_seed: Optional[int] = None
    dynamics_seed: Optional[int] = None
    start_floor: Optional[int] = None

    def overrides(self) -> dict:
        out = self.model_dump()
        return {k: v for k, v in out.items() if v is not None}


class StepPayload(BaseModel):
    """Serialized StepResult; see StepResult.to_json for the source shape."""

    reward: float
    done: bool
    floor: int
    keys: int
    time: int
    outcome: Optional[str]
    counters: dict[str, int]
    obs_shape: Optional[list[int]] = None
    obs_b64: Optional[str] = None

    def to_wire(self) -> dict:
        data = self.model_dump()
        if data["obs_shape"] is None:
            del data["obs_shape"]
            del data["obs_b64"]
        return data


class CreateResponse(BaseModel):
    session_id: str
    config: dict
    step: StepPayload


class StepEnvelope(BaseModel):
    session_id: str
    step: StepPayload


class RenderResponse(BaseModel):
    session_id: str
    obs_shape: list[int]
    obs_b64: str


class InfoResponse(BaseModel):
    session_id: str
    config: dict
    done: bool
    floor: int
    keys: int
    time: int
    theme: str
    palette: list[int]
    steps: int
    total_reward: float


class CloseResponse(BaseModel):
    session_id: str
    closed: bool


class HealthResponse(BaseModel):
    status: str
    sessions: int
    capacity: int
    version: int = PROTOCOL_VERSION


class ErrorBody(BaseModel):
    code: str
    message: str


class ErrorResponse(BaseModel):
    error: ErrorBody


def parse_action_field(action: Union[int, list[int]]) -> Union[int, tuple[int, ...]]:
    """Normalize the wire action field; range errors are left to the engine."""
    if isinstance(action, bool):
        raise BadConfig("action must be an integer or a 4-list")
    if isinstance(action, int):
        return action
    if isinstance(action, list):
        if len(action) != 4 or not all(
            isinstance(x, int) and not isinstance(x, bool) for x in action
        ):
            raise BadConfig("structured action must be 4 integers")
        return tuple(action)
    raise BadConfig("action must be an integer or a 4-list")
