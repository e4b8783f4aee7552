"""Exception taxonomy shared by all simulator modules.

Every error carries a short stable ``code`` string so command-line output and
tests can match on it without parsing prose.  Input problems derive from
:class:`InputError` (CLI exit status 1), numerical failures derive from
:class:`SolverError` (exit status 2).
"""

from __future__ import annotations


class CytofocusError(Exception):
    """Base class for all errors raised by this package."""

    code = "ERROR"

    def __init__(self, message: str):
        super().__init__(f"{self.code}: {message}")
        self.message = message


class InputError(CytofocusError):
    """Invalid configuration, geometry, or call arguments (exit status 1)."""

    code = "INPUT_ERROR"


class SolverError(CytofocusError):
    """A numerical solve failed to produce a usable answer (exit status 2)."""

    code = "SOLVER_ERROR"


# --- geometry ---------------------------------------------------------------

class OrderingViolation(InputError):
    code = "ORDERING_VIOLATION"


class NonpositiveDimension(InputError):
    code = "NONPOSITIVE_DIMENSION"


class ResolutionTooCoarse(InputError):
    code = "RESOLUTION_TOO_COARSE"


# --- flow -------------------------------------------------------------------

class SolverDiverged(SolverError):
    code = "SOLVER_DIVERGED"


class PointOutsideFluid(InputError):
    code = "POINT_OUTSIDE_FLUID"


# --- tracer -----------------------------------------------------------------

class ReleaseOutsideFluid(InputError):
    code = "RELEASE_OUTSIDE_FLUID"


class StepUnstable(InputError):
    code = "STEP_UNSTABLE"


class EmptySpeciesList(InputError):
    code = "EMPTY_SPECIES_LIST"


# --- metrics ----------------------------------------------------------------

class NoCrossings(InputError):
    code = "NO_CROSSINGS"


# --- sweep ------------------------------------------------------------------

class AllRowsFailed(SolverError):
    code = "ALL_ROWS_FAILED"


# --- impedance --------------------------------------------------------------

class FrequencyMismatch(InputError):
    code = "FREQUENCY_MISMATCH"


class EmptyBand(InputError):
    code = "EMPTY_BAND"


class NoCalibration(InputError):
    code = "NO_CALIBRATION"


# --- config / cli -----------------------------------------------------------

class ConfigSyntaxError(InputError):
    code = "SYNTAX_ERROR"

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class UnknownKey(InputError):
    code = "UNKNOWN_KEY"


class ConfigValidationError(InputError):
    code = "VALIDATION_ERROR"


class EmptyResults(InputError):
    code = "EMPTY_RESULTS"
