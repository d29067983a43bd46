from __future__ import annotations


class BenchError(Exception):
    """Base class for every error raised by the test-bench simulator."""


class InvalidSeed(BenchError, ValueError):
    """Raised when an LFSR seed is zero or wider than the register."""


class InvalidPolynomial(BenchError, ValueError):
    """Raised when an LFSR tap set is empty or describes a register shorter than 2 stages."""


class InvalidPattern(BenchError, ValueError):
    """Raised for empty, non-binary, or badly rated bit patterns."""


class ShapeMismatch(BenchError, ValueError):
    """Raised when channel lengths, rates, or stream sizes do not line up."""


class RangeExceeded(BenchError, ValueError):
    """Raised when a requested delay or period is outside the programmable range."""


class UnsupportedFanIn(BenchError, ValueError):
    """Raised when a multiplexer stage is asked for a fan-in it does not have."""


class EdgeCollision(BenchError, ValueError):
    """Raised when edge delays or jitter would reorder adjacent transitions."""


class InvalidEdgeSequence(BenchError, ValueError):
    """Raised when an edge sequence breaks direction alternation or its time span."""


class QuantizationError(BenchError, ValueError):
    """Raised when a time value is not on the programmable resolution grid."""


class OutOfRange(BenchError, ValueError):
    """Raised when a strobe falls outside the sampled waveform span."""


class InvalidJitter(BenchError, ValueError):
    """Raised when a jitter amplitude is negative."""


class InvalidChannel(BenchError, ValueError):
    """Raised when a channel delay, attenuation, or bandwidth is out of range."""


class InvalidWaveform(BenchError, ValueError):
    """Raised when a waveform has no samples, a non-positive interval, or non-finite voltages."""


class ResolutionTooCoarse(BenchError, ValueError):
    """Raised when the render interval cannot resolve the configured transition times."""


class InvalidLevels(BenchError, ValueError):
    """Raised when logic levels would put the high level at or below the low level."""


class InsufficientData(BenchError, ValueError):
    """Raised when a measurement does not have enough periods, crossings, or transitions."""


class ClosedEye(BenchError, ValueError):
    """Raised when peak-to-peak jitter exceeds the unit interval."""


class LevelsUnresolved(BenchError, ValueError):
    """Raised when a waveform's voltage distribution does not show two logic levels."""


class ConfigSyntaxError(BenchError):
    """Raised when a scenario file is missing or is not valid TOML."""


class ConfigInvalid(BenchError, ValueError):
    """Raised when a scenario parses but violates a field constraint."""

    def __init__(self, field: str, message: str) -> None:
        self.field = field
        super().__init__(f"{field}: {message}")


class UnsupportedFormat(BenchError, ValueError):
    """Raised when an export format tag is unknown."""


class IoError(BenchError, OSError):
    """Raised when an export or import cannot read or write its file."""


class PipelineStageError(BenchError):
    """Wraps a pipeline failure with the name of the stage that raised it."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
