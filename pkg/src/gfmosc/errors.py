"""Exception hierarchy shared by every layer of the package."""


class GfmError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DomainError(GfmError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""

    exit_code = 2


class ContractError(GfmError, ValueError):
    """Inputs violate a structural precondition (frame mismatch, bad sampling)."""

    exit_code = 2


class ConfigurationError(GfmError, ValueError):
    """Parameters are inconsistent with the selected model variant."""

    exit_code = 2


class ScenarioError(ConfigurationError):
    """Scenario file is malformed or carries an invalid value.

    ``key`` names the offending entry and ``line`` its 1-based line number
    when known.
    """

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class InfeasibleOperatingPoint(GfmError):
    """The steady-state solve did not converge; dispatch likely exceeds transfer capability."""

    exit_code = 3


class NumericalBlowup(GfmError):
    """Integration produced non-finite values.

    ``time`` is the last instant at which the state was still finite.
    """

    exit_code = 3

    def __init__(self, message, time=None):
        self.time = time
        super().__init__(message if time is None else f"{message} (last valid t = {time:.6g} s)")
