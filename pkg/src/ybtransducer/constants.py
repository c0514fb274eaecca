"""Physical constants used throughout the package (SI unless noted)."""

from dataclasses import dataclass

import numpy as np
from scipy import constants as _sc


@dataclass(frozen=True)
class Constants:
    planck_h: float = _sc.h
    reduced_planck: float = _sc.hbar
    bohr_magneton: float = _sc.physical_constants["Bohr magneton"][0]
    boltzmann_k: float = _sc.k
    vacuum_permeability: float = _sc.mu_0
    vacuum_permittivity: float = _sc.epsilon_0
    speed_of_light: float = _sc.c

    @property
    def bohr_magneton_GHz_per_T(self) -> float:
        """Bohr magneton expressed as a frequency per tesla (about 13.996 GHz/T)."""
        return self.bohr_magneton / self.planck_h * 1e-9

    @property
    def kT_GHz_per_K(self) -> float:
        return self.boltzmann_k / self.planck_h * 1e-9

    @property
    def impedance_of_free_space(self) -> float:
        return float(np.sqrt(self.vacuum_permeability / self.vacuum_permittivity))


CONST = Constants()
MU_B_GHZ_PER_T = CONST.bohr_magneton_GHz_per_T
