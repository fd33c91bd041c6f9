"""Gym-style adapter: reset/step against a running session service.

The adapter is a wire-protocol client only; all game state lives
server-side and every observation, reward, and flag is decoded straight
off the step payload.
"""

from .env import (
    AdapterConfig,
    AdapterError,
    BoxSpace,
    ConnectionFailed,
    DiscreteSpace,
    MultiDiscreteSpace,
    TowerEnv,
)

__all__ = [
    "AdapterConfig",
    "AdapterError",
    "BoxSpace",
    "ConnectionFailed",
    "DiscreteSpace",
    "MultiDiscreteSpace",
    "TowerEnv",
]
