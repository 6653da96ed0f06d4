"""Numerical tolerances shared across the package."""

from dataclasses import dataclass, replace

__all__ = ["Tolerances", "DEFAULT"]


@dataclass(frozen=True)
class Tolerances:
    """Tolerance set.

    ``structural`` guards type invariants (normalization, Hermiticity,
    unitarity), ``derived`` guards comparisons of computed quantities,
    ``conceal`` is the trace-distance threshold for calling a protocol
    concealing and ``attack`` is the allowed deficit of an attack overlap
    from 1.
    """

    structural: float = 1e-10
    derived: float = 1e-9
    conceal: float = 1e-9
    attack: float = 1e-9

    def __post_init__(self):
        for name in ("structural", "derived", "conceal", "attack"):
            if not getattr(self, name) > 0:
                raise ValueError(f"tolerance {name!r} must be positive")

    def with_overrides(self, **kwargs):
        """Copy with the non-None keyword values replaced."""
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


DEFAULT = Tolerances()
