"""
Project exception hierarchy and standardized error payloads.

Every error raised by the lab carries a category and a process exit code so
the experiment CLI can report it uniformly.
Format: {success: false, category: "...", message: "...", errors: {...}}
"""
import logging

logger = logging.getLogger(__name__)


class SutureLabError(Exception):
    """Base class for all lab errors."""
    exit_code = 1
    category = "error"

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.message = message
        self.errors = errors


class ConfigurationError(SutureLabError):
    """Invalid experiment configuration or impossible stage setup."""
    exit_code = 2
    category = "configuration"


class MissingArtifactError(SutureLabError):
    """A required upstream artifact (checkpoint, manifest, images) is absent."""
    exit_code = 3
    category = "missing_artifact"


class LeakageError(SutureLabError):
    """Training or validation data overlaps held-out data."""
    exit_code = 4
    category = "leakage"


class DataValidationError(SutureLabError, ValueError):
    """Values outside their documented domain."""
    exit_code = 5
    category = "validation"


class AnnotationParseError(DataValidationError):
    """An annotation file could not be parsed; names the offending record."""
    category = "annotation_parse"


class ShapeError(SutureLabError, ValueError):
    """Tensor or array shapes incompatible with the operation."""
    exit_code = 6
    category = "shape"


class ContractViolationError(SutureLabError):
    """A frozen-detector contract was broken."""
    exit_code = 7
    category = "contract_violation"


class CheckpointError(SutureLabError):
    """Checkpoint unreadable or written by an incompatible version."""
    exit_code = 8
    category = "checkpoint"


def error_payload(exc):
    """
    Render an exception as the standardized error payload.

    Args:
        exc: Any exception

    Returns:
        dict with format: {success: false, category: "...", message: "...", errors: ...}
    """
    if isinstance(exc, SutureLabError):
        payload = {
            "success": False,
            "category": exc.category,
            "message": exc.message,
        }
        if exc.errors:
            payload["errors"] = exc.errors
        return payload

    logger.error(f"Unexpected error: {str(exc)}", exc_info=exc)
    return {
        "success": False,
        "category": "internal",
        "message": str(exc) or exc.__class__.__name__,
    }


def exit_code_for(exc):
    """Process exit code for an exception (1 for anything unexpected)."""
    return getattr(exc, "exit_code", 1)
