"""Exception types shared across the simulator, engine, and service layers."""


class CorobotError(Exception):
    """Base class for all library errors."""


class UnresolvableTarget(CorobotError):
    """An action references a target that does not exist in the catalog."""


class ArmOccupied(CorobotError):
    """A pickup was attempted while the gripper already holds an item."""


class MismatchedWorkcell(CorobotError):
    """Two observations do not describe the same workcell."""


class UnknownFrame(CorobotError):
    """Candidate generation named a frame the workcell does not contain."""


class NotAGraspTarget(CorobotError):
    """A grasp-only operation was applied to a tool candidate."""


class NoFeasibleTarget(CorobotError):
    """No candidate satisfies the instruction semantics."""


class TransportError(CorobotError):
    """The remote endpoint could not be reached or returned a transport-level failure."""


class MalformedReply(CorobotError):
    """A remote reply does not match the expected output grammar."""


class ConfigError(CorobotError):
    """A scenario, workcell, or experiment configuration is invalid."""


class WrongPhase(CorobotError):
    """An instruction was submitted while the session cannot accept one."""


class UnknownSession(CorobotError):
    """A session id does not resolve to a live session."""
