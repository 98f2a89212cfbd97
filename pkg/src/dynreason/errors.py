"""Exception hierarchy.

Every error carries a short machine-readable ``kind`` so that the CLI and the
evaluation report can bucket failures without string matching.
"""


class DynReasonError(Exception):
    kind = "internal"


class InvalidSpecError(DynReasonError, ValueError):
    kind = "invalid-spec"


class DomainError(DynReasonError, ValueError):
    kind = "domain"


class SimulationDivergedError(DynReasonError):
    kind = "simulation-diverged"

    def __init__(self, frame, object_id, detail=""):
        self.frame = frame
        self.object_id = object_id
        msg = f"simulation diverged at frame {frame}, object {object_id}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class GenerationError(DynReasonError):
    kind = "generation"


class TemplateError(DynReasonError):
    kind = "template"


class ParseError(DynReasonError):
    kind = "parse-failure"


class TrackingError(DynReasonError):
    kind = "tracking"


class ExecutionError(DynReasonError):
    """Base for failures raised while running a program."""

    kind = "execution"


class ProgramTypeError(ExecutionError):
    kind = "type-error"


class UniqueViolation(ExecutionError):
    kind = "unique-violation"


class Unanswerable(ExecutionError):
    kind = "unanswerable"


class FrameOutOfRange(ExecutionError):
    kind = "frame-out-of-range"


class HorizonViolation(ExecutionError):
    """A program tried to read a frame the question did not show."""

    kind = "horizon-violation"
