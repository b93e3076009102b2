"""Physical constants used throughout the package (CODATA 2018, SI units)."""

from dataclasses import dataclass

from scipy import constants as _sc

__all__ = ["PhysicalConstants", "CONSTANTS", "PHI0", "MU0", "HBAR"]


@dataclass(frozen=True)
class PhysicalConstants:
    """Immutable bundle of the constants the models depend on."""

    flux_quantum: float = _sc.physical_constants["mag. flux quantum"][0]
    vacuum_permeability: float = _sc.mu_0
    reduced_planck: float = _sc.hbar


CONSTANTS = PhysicalConstants()
PHI0 = CONSTANTS.flux_quantum
MU0 = CONSTANTS.vacuum_permeability
HBAR = CONSTANTS.reduced_planck
