"""Exception and warning types shared across the toolkit."""

from __future__ import annotations


class DopoClusterError(Exception):
    """Base class for all toolkit errors."""


class LayoutError(DopoClusterError, ValueError):
    """A mode layout is invalid, or two objects live on incompatible layouts."""


class ValidationError(DopoClusterError, ValueError):
    """A state or operator violates one of its declared invariants
    (Hermiticity, trace, normalization, positivity)."""


class CutoffError(DopoClusterError, ValueError):
    """The Fock truncation is too small for the requested object: either a
    truncation-rule precondition failed, or a constructed operator is so
    badly distorted by the truncation edge that it cannot be repaired."""


class ConfigError(DopoClusterError, ValueError):
    """A scenario/CLI configuration is malformed: unknown key, unparsable
    value, or a value outside its allowed range."""


class CostLimitError(DopoClusterError, RuntimeError):
    """The estimated cost of a run exceeds the configured --max-cost guard."""


class IntegratorDivergedError(DopoClusterError, RuntimeError):
    """Propagation broke a record-point tolerance (trace drift, Hermiticity
    defect, positivity floor) or produced non-finite entries.

    Attributes
    ----------
    time : float
        The evolution time at which the breach was detected.
    """

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (at t = {time:.6g})")
        self.time = float(time)


class CalibrationError(DopoClusterError, RuntimeError):
    """Pump calibration found no admissible amplitude in the scanned bracket.

    Attributes
    ----------
    scan : list[tuple[float, float]]
        Every (|pump amplitude|, steady photon number) pair evaluated.
    """

    def __init__(self, message: str, scan):
        super().__init__(message)
        self.scan = list(scan)


class TruncationWarning(UserWarning):
    """The Fock truncation measurably distorts a constructed object
    (displacement leakage, Hermiticity defect of a modular Pauli, ...);
    the object was repaired but carries truncation error."""


class PositivityWarning(UserWarning):
    """A propagated state's smallest eigenvalue dipped below the silent
    tolerance but stayed above the hard failure floor."""
