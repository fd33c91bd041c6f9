"""Exception hierarchy shared across the package."""


class TowerforgeError(Exception):
    """Base class for all towerforge errors."""

    code = "Error"


class GenerationFailed(TowerforgeError):
    """Procedural generation exhausted its retry budget."""

    code = "GenerationFailed"


class StaleMatch(TowerforgeError):
    """A rule match refers to nodes that no longer exist in the graph."""

    code = "StaleMatch"


class InvariantViolation(TowerforgeError):
    """A rewrite or construction broke a structural invariant."""

    code = "InvariantViolation"

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class ParseError(TowerforgeError):
    """Input data failed schema validation; message carries field context."""

    code = "ParseError"


class MissingTemplate(TowerforgeError):
    code = "MissingTemplate"


class InstantiationFailed(TowerforgeError):
    """Room resampling bound exhausted; indicates a template authoring bug."""

    code = "InstantiationFailed"


class NotAPuzzleRoom(TowerforgeError):
    code = "NotAPuzzleRoom"


class OutOfRange(TowerforgeError):
    code = "OutOfRange"


class InvalidAction(TowerforgeError):
    code = "InvalidAction"


class EpisodeDone(TowerforgeError):
    """step() was called on a finished episode; episode state is unchanged."""

    code = "EpisodeDone"


class BadConfig(TowerforgeError):
    code = "BadConfig"


class SeedOverlap(TowerforgeError):
    code = "SeedOverlap"


class ThemeOverlap(TowerforgeError):
    code = "ThemeOverlap"


class CapacityExceeded(TowerforgeError):
    code = "CapacityExceeded"


class UnknownSession(TowerforgeError):
    code = "UnknownSession"


class Busy(TowerforgeError):
    """A request arrived while another was in flight for the same session."""

    code = "Busy"


_BY_CODE = {cls.code: cls for cls in TowerforgeError.__subclasses__()}


def error_for_code(code: str, message: str) -> TowerforgeError:
    """Rebuild a wire error payload as the matching exception type."""
    return _BY_CODE.get(code, TowerforgeError)(message)
