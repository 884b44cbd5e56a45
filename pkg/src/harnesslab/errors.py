"""Exception types shared across harnesslab."""


class HarnessError(Exception):
    """Base class for all harnesslab errors."""

    #: short machine-readable tag, echoed in CLI error JSON
    reason = "error"

    def to_dict(self):
        return {"error": type(self).__name__, "reason": self.reason, "message": str(self)}


class RejectedKernel(HarnessError):
    """The jump law fails one of the admissibility conditions."""

    REASONS = (
        "not-probability",
        "range-exceeded",
        "degenerate",
        "not-strongly-aperiodic",
        "zero-variance",
    )

    def __init__(self, reason, message=""):
        if reason not in self.REASONS:
            raise ValueError(f"unknown rejection reason {reason!r}")
        self.reason = reason
        super().__init__(message or reason)


class ResourceLimit(HarnessError):
    reason = "resource-limit"


class DimensionUnsupported(HarnessError):
    reason = "dimension-unsupported"


class WindowTooSmall(HarnessError):
    reason = "window-too-small"


class UnsupportedOrder(HarnessError):
    reason = "unsupported-order"


class ConfigError(HarnessError):
    reason = "invalid-config"
