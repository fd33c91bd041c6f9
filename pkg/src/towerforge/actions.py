"""Multi-discrete action space and its flat encoding.

Four sub-actions: forward/back, strafe left/right, camera left/right, jump.
The flat index packs them in mixed radix (3, 3, 3, 2), giving 54 actions.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import OutOfRange

MOVE_NONE, MOVE_FORWARD, MOVE_BACK = 0, 1, 2
STRAFE_NONE, STRAFE_LEFT, STRAFE_RIGHT = 0, 1, 2
CAMERA_NONE, CAMERA_LEFT, CAMERA_RIGHT = 0, 1, 2

ACTION_COUNT = 54


@dataclass(frozen=True)
class Action:
    move_fb: int = 0
    move_lr: int = 0
    camera: int = 0
    jump: int = 0

    def __post_init__(self):
        if self.move_fb not in (0, 1, 2):
            raise OutOfRange(f"move_fb {self.move_fb}")
        if self.move_lr not in (0, 1, 2):
            raise OutOfRange(f"move_lr {self.move_lr}")
        if self.camera not in (0, 1, 2):
            raise OutOfRange(f"camera {self.camera}")
        if self.jump not in (0, 1):
            raise OutOfRange(f"jump {self.jump}")


NOOP = Action()


def flatten_action(action: Action) -> int:
    return ((action.move_fb * 3 + action.move_lr) * 3 + action.camera) * 2 + action.jump


def unflatten_action(index: int) -> Action:
    if not isinstance(index, int) or isinstance(index, bool) or not 0 <= index < ACTION_COUNT:
        raise OutOfRange(f"flat action {index!r} outside 0..{ACTION_COUNT - 1}")
    jump = index % 2
    rest = index // 2
    camera = rest % 3
    rest //= 3
    move_lr = rest % 3
    move_fb = rest // 3
    return Action(move_fb, move_lr, camera, jump)
