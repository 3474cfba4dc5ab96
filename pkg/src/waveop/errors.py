"""Exception hierarchy with machine-readable codes."""

from typing import Any


class WaveOpError(RuntimeError):
    """Base class of every domain error raised by waveop."""

    code = "waveop_error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.details: dict[str, Any] = dict(details)

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-friendly description of the error."""
        return {"code": self.code, "message": str(self), **self.details}


class UnresolvedPotential(WaveOpError):
    """Grid spacing too coarse for the narrowest Gaussian."""

    code = "unresolved_potential"


class TailTooLarge(WaveOpError):
    """Field mass outside the inscribed ball is not negligible."""

    code = "tail_too_large"


class UnsupportedOrder(WaveOpError):
    code = "unsupported_order"


class SingularPoint(WaveOpError):
    """Kernel evaluated on its diagonal."""

    code = "singular_point"


class NearSingular(WaveOpError):
    """I + R0(z)V is numerically singular at the given spectral point."""

    code = "near_singular"


class UnresolvedFrequency(WaveOpError):
    code = "unresolved_frequency"


class GridMismatch(WaveOpError):
    code = "grid_mismatch"


class UnresolvedOscillation(WaveOpError):
    code = "unresolved_oscillation"


class NotRegular(WaveOpError):
    """Zero energy is an eigenvalue or resonance."""

    code = "not_regular"


class BornDivergent(WaveOpError):
    code = "born_divergent"


class NotInvertible(WaveOpError):
    """1 + f^ comes too close to zero."""

    code = "not_invertible"


class NoConvergence(WaveOpError):
    code = "no_convergence"


class PatchFailure(WaveOpError):
    """Local contraction condition unsatisfiable at the smallest patch radius."""

    code = "patch_failure"


class DomainError(WaveOpError):
    code = "domain_error"


class StepTooLarge(WaveOpError):
    code = "step_too_large"


class WrapAround(WaveOpError):
    """Free wave reaches the box boundary before the damped integrand dies out."""

    code = "wrap_around"


class ConfigInvalid(WaveOpError):
    code = "config_invalid"


class FieldFormatError(WaveOpError):
    code = "field_format_error"
