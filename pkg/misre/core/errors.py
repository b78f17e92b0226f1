"""Exception hierarchy shared by the estimator, the readers and the CLI.

Every error carries a short ``kind`` string. The CLI maps kinds to exit
codes, the pipeline records them in its diagnostics.
"""
from typing import Any, Dict, Optional


class MisreError(RuntimeError):
    kind = "error"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(f"[{self.kind}] {message}")
        self.message = message
        self.details = dict(details or {})


class InvalidInputError(MisreError):
    kind = "invalid-input"


class DegenerateInputError(MisreError):
    kind = "degenerate-input"


class ConstraintError(MisreError):
    kind = "constraint"


class SamplingFailureError(MisreError):
    """Not enough acceptable elemental subsets could be drawn."""

    kind = "sampling-failure"

    def __init__(self, message: str, rejections: Optional[Dict[str, int]] = None):
        rejections = dict(rejections or {})
        dominant = max(rejections, key=rejections.get) if rejections else None
        super().__init__(message, {"rejections": rejections, "dominant_reason": dominant})
        self.rejections = rejections
        self.dominant_reason = dominant


class RefinementFailureError(MisreError):
    kind = "refinement-failure"


class ParseError(MisreError):
    kind = "parse"

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        where = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(f"{where}{message}", {"path": path, "line": line})
        self.path = path
        self.line = line


class InternalError(MisreError):
    kind = "internal"
