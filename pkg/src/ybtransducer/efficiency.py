"""Cavity-enhanced transduction efficiency algebra.

Unit conventions
----------------
* Rabi frequencies and detunings are cyclic, in MHz on input.  ``R`` uses
  the angular pump Rabi frequency ``2*pi*Omega``.
* Inhomogeneous widths are FWHM in MHz; the magneto-optic integrals run
  over cyclic detunings in Hz, so each carries units of 1/Hz.
* ``mu21`` enters in J/T, converted from the GHz/T spin dipole via ``h``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence

import numpy as np
from scipy import integrate, special

from .constants import CONST
from .io import KVFile, format_float, parse_kv, read_kv, write_csv

_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class MissingParameter(ValueError):
    pass


class CutoffTooSmall(ValueError):
    pass


class DivideByZeroDetuning(ZeroDivisionError):
    pass


class InconsistentParameters(ValueError):
    pass


# -- eta(R) ----------------------------------------------------------------


def eta_from_R(R):
    """Impedance-matching efficiency ``4 R^2 / (R^2 + 1)^2``."""
    R = np.asarray(R, dtype=float)
    if np.any(R < 0):
        raise ValueError("R must be non-negative")
    out = 4 * R**2 / (R**2 + 1) ** 2
    return float(out) if out.ndim == 0 else out


def R_from_eta(eta: float, branch: str = "weak") -> float:
    """Invert ``eta_from_R``; ``weak`` returns the root with R <= 1."""
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    if eta == 0:
        return 0.0 if branch == "weak" else math.inf
    r = (1 - math.sqrt(1 - eta)) / math.sqrt(eta)
    return r if branch == "weak" else 1 / r


@dataclass(frozen=True)
class EfficiencyParams:
    """Device parameters entering R.

    Either ``(omega_pump_MHz, alpha_coeff_s, filling_factor, q_optical,
    q_microwave)`` or ``(coupling_S_Hz, kappa_o_Hz, kappa_m_Hz)`` may be
    given; when both are complete they must agree.
    """

    omega_pump_MHz: float | None = None
    alpha_coeff_s: float | None = None
    filling_factor: float | None = None
    q_optical: float | None = None
    q_microwave: float | None = None
    kappa_o_Hz: float | None = None
    kappa_m_Hz: float | None = None
    coupling_S_Hz: float | None = None

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")
        if self._product_complete and self._rate_complete:
            a, b = R_product(self), R_rates(self)
            if not math.isclose(a, b, rel_tol=1e-6, abs_tol=1e-300):
                raise InconsistentParameters(f"R from products ({a:.6g}) and from rates ({b:.6g}) disagree")

    @property
    def _product_complete(self) -> bool:
        return None not in (self.omega_pump_MHz, self.alpha_coeff_s, self.filling_factor, self.q_optical, self.q_microwave)

    @property
    def _rate_complete(self) -> bool:
        return None not in (self.coupling_S_Hz, self.kappa_o_Hz, self.kappa_m_Hz)


def R_product(p: EfficiencyParams) -> float:
    omega = 2 * math.pi * 1e6 * p.omega_pump_MHz
    return omega * p.alpha_coeff_s * p.filling_factor * math.sqrt(p.q_optical * p.q_microwave)


def R_rates(p: EfficiencyParams) -> float:
    denom = math.sqrt(p.kappa_o_Hz * p.kappa_m_Hz)
    if denom == 0:
        return 0.0 if p.coupling_S_Hz == 0 else math.inf
    return 2 * p.coupling_S_Hz / denom


def R_from_params(p: EfficiencyParams) -> float:
    """``R = Omega alpha F sqrt(Qo Qm)`` (or ``2S/sqrt(kappa_o kappa_m)``)."""
    if p._product_complete:
        return R_product(p)
    if p._rate_complete:
        return R_rates(p)
    missing = [k for k in ("omega_pump_MHz", "alpha_coeff_s", "filling_factor", "q_optical", "q_microwave") if getattr(p, k) is None]
    raise MissingParameter(f"cannot form R; missing {missing}")


# -- magneto-optic coefficient --------------------------------------------


@dataclass(frozen=True)
class MaterialSpec:
    name: str
    rho_max: float  # m^-3
    mu31: float  # C m
    mu12_spin: float  # GHz/T
    gamma_ih_opt: float  # MHz FWHM
    gamma_ih_spin: float  # MHz FWHM
    microwave_GHz: float = 3.369
    optical_GHz: float = 304501.0
    refractive_index: float = 2.17

    def __post_init__(self):
        for k in ("rho_max", "mu31", "mu12_spin", "gamma_ih_opt", "gamma_ih_spin"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{self.name}: {k} must be positive")


_MATERIAL_KEYS = {
    "rho_max": float,
    "mu31": float,
    "mu12_spin": float,
    "gamma_ih_opt": float,
    "gamma_ih_spin": float,
    "microwave_GHz": float,
    "optical_GHz": float,
    "refractive_index": float,
}


def materials_from_kv(kv: KVFile) -> dict[str, MaterialSpec]:
    blocks: dict[str, dict] = {}
    for key in kv:
        if "." not in key:
            raise kv.error(key, f"material keys must look like 'name.field', got '{key}'")
        name, fld = key.split(".", 1)
        if fld not in _MATERIAL_KEYS:
            raise kv.error(key, f"unknown material field '{fld}'")
        blocks.setdefault(name, {})[fld] = kv.get_float(key)
    out = {}
    for name, vals in blocks.items():
        try:
            out[name] = MaterialSpec(name=name, **vals)
        except TypeError as exc:
            raise kv.error(None, f"material '{name}': {exc}") from None
        except ValueError as exc:
            raise kv.error(f"{name}.rho_max", str(exc)) from None
    return out


def load_materials(path=None) -> dict[str, MaterialSpec]:
    if path is None:
        text = resources.files("ybtransducer.data").joinpath("presets.materials").read_text()
        return materials_from_kv(parse_kv(text, "presets.materials"))
    return materials_from_kv(read_kv(path))


def gaussian_tail_integral(cutoff_Hz: float, fwhm_Hz: float) -> float:
    """``int_eps^inf D(d)/d dd`` for a normalised Gaussian, by quadrature."""
    if not cutoff_Hz > 0:
        raise CutoffTooSmall("cutoff must be positive")
    sigma = fwhm_Hz * _FWHM_TO_SIGMA
    if cutoff_Hz < 1e-9 * sigma:
        raise CutoffTooSmall(f"cutoff {cutoff_Hz:.3g} Hz is below 1e-9 of the line width")
    # substitute x = d / sigma
    f = lambda x: math.exp(-0.5 * x * x) / x
    a = cutoff_Hz / sigma
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, max(a, 1.0), limit=200, epsabs=0, epsrel=1e-12)
            tail, err2 = integrate.quad(f, max(a, 1.0), np.inf, limit=200, epsabs=0, epsrel=1e-12)
        except integrate.IntegrationWarning as exc:
            raise CutoffTooSmall(f"integral did not converge: {exc}") from None
    total = (val + tail) / (sigma * math.sqrt(2 * math.pi))
    if (err + err2) > 1e-7 * abs(val + tail):
        raise CutoffTooSmall("integral did not reach the requested accuracy")
    return total


def gaussian_tail_integral_closed(cutoff_Hz: float, fwhm_Hz: float) -> float:
    """Closed form ``E1(eps^2 / 2 sigma^2) / (2 sigma sqrt(2 pi))``."""
    sigma = fwhm_Hz * _FWHM_TO_SIGMA
    return float(special.exp1(cutoff_Hz**2 / (2 * sigma**2))) / (2 * sigma * math.sqrt(2 * math.pi))


def default_cutoffs(mat: MaterialSpec, rule: str = "sigma") -> tuple[float, float]:
    """Cutoffs ``(eps_m, eps_o)`` in Hz.

    ``sigma`` (default) uses one Gaussian standard deviation of each line;
    ``hwhm`` uses the half width at half maximum.
    """
    if rule == "sigma":
        k = _FWHM_TO_SIGMA
    elif rule == "hwhm":
        k = 0.5
    else:
        raise ValueError(f"unknown cutoff rule {rule!r}")
    return k * mat.gamma_ih_spin * 1e6, k * mat.gamma_ih_opt * 1e6


def cavity_cutoffs(microwave_GHz: float, q_microwave: float, optical_GHz: float, q_optical: float) -> tuple[float, float]:
    """Cavity half-linewidths ``f/(2Q)`` in Hz."""
    return microwave_GHz * 1e9 / (2 * q_microwave), optical_GHz * 1e9 / (2 * q_optical)


@dataclass(frozen=True)
class AlphaResult:
    alpha_s: float
    cutoffs_Hz: tuple[float, float]
    integral_m: float
    integral_o: float
    sensitivity: dict = field(default_factory=dict)


def alpha_coefficient(
    mat: MaterialSpec,
    cutoffs: tuple[float, float] | None = None,
    rho: float | None = None,
    sensitivity: Sequence[float] = (0.5, 2.0),
) -> AlphaResult:
    """``alpha = sqrt(mu0/(hbar^2 eps0)) mu31 mu21 rho I_m I_o`` in seconds.

    ``sensitivity`` lists factors applied to both cutoffs; the matching alpha
    values are reported alongside, since the cutoffs are a modelling choice.
    """
    eps_m, eps_o = cutoffs if cutoffs is not None else default_cutoffs(mat)
    rho = mat.rho_max if rho is None else rho
    if rho < 0:
        raise ValueError("density must be non-negative")
    prefactor = CONST.impedance_of_free_space / CONST.reduced_planck
    mu21 = CONST.planck_h * mat.mu12_spin * 1e9

    def _alpha(em, eo):
        Im = gaussian_tail_integral(em, mat.gamma_ih_spin * 1e6)
        Io = gaussian_tail_integral(eo, mat.gamma_ih_opt * 1e6)
        return prefactor * mat.mu31 * mu21 * rho * Im * Io, Im, Io

    a, Im, Io = _alpha(eps_m, eps_o)
    sens = {format_float(f): _alpha(f * eps_m, f * eps_o)[0] for f in sensitivity}
    return AlphaResult(a, (eps_m, eps_o), Im, Io, sens)


# -- cavities --------------------------------------------------------------


@dataclass(frozen=True)
class FinesseResult:
    fwhm_GHz: float
    fsr_GHz: float
    finesse: float


def finesse(length_m: float, refractive_index: float, f0_GHz: float, Q: float) -> FinesseResult:
    """Linewidth ``f0/Q`` and finesse ``FSR/FWHM`` with ``FSR = c/(2 n L)``."""
    if min(length_m, refractive_index, f0_GHz, Q) <= 0:
        raise ValueError("finesse inputs must be positive")
    fwhm = f0_GHz / Q
    fsr = CONST.speed_of_light / (2 * refractive_index * length_m) * 1e-9
    return FinesseResult(fwhm, fsr, fsr / fwhm)


def cavity_gain(q_optical: float, q_microwave: float, length_m: float = 30e-6, refractive_index: float = 2.17,
                f0_GHz: float = 304501.0) -> float:
    """R gain ``sqrt(F_o F_m)`` from replacing both waveguides by cavities (``F_m ~ Q_m``)."""
    Fo = finesse(length_m, refractive_index, f0_GHz, q_optical).finesse
    return math.sqrt(Fo * q_microwave)


@dataclass(frozen=True)
class UpgradeStep:
    name: str
    factor: float


@dataclass(frozen=True)
class LedgerResult:
    R0: float
    eta0: float
    total_factor: float
    R: float
    eta: float
    steps: tuple[UpgradeStep, ...]
    bandwidth_kHz: float | None = None


def upgrade_ledger(
    baseline_eta: float | None = None,
    steps: Iterable[UpgradeStep | tuple[str, float]] = (),
    baseline_R: float | None = None,
    q_microwave: float | None = None,
    microwave_GHz: float = 3.369,
) -> LedgerResult:
    """Project R and eta after multiplying R by each step's factor.

    The baseline may be given as eta (inverted on the weak-coupling branch)
    or directly as R.  With ``q_microwave`` the microwave cavity linewidth
    ``f/Q_m`` is reported as the resulting bandwidth.
    """
    if (baseline_eta is None) == (baseline_R is None):
        raise ValueError("give exactly one of baseline_eta and baseline_R")
    R0 = R_from_eta(baseline_eta) if baseline_R is None else float(baseline_R)
    st = tuple(s if isinstance(s, UpgradeStep) else UpgradeStep(*s) for s in steps)
    total = math.prod(s.factor for s in st)
    R = R0 * total
    bw = microwave_GHz * 1e6 / q_microwave if q_microwave else None
    return LedgerResult(R0, eta_from_R(R0), total, R, eta_from_R(R), st, bw)


def adiabatic_check(omega_MHz: float, delta_o_MHz: float, delta_m_MHz: float) -> dict:
    """``Omega^2 < delta_o delta_m``; ``reduction`` is the factor by which Omega must drop."""
    limit = delta_o_MHz * delta_m_MHz
    omega2 = omega_MHz**2
    margin = math.inf if omega2 == 0 else limit / omega2
    return {
        "ok": bool(omega2 < limit),
        "margin": margin,
        "max_omega_MHz": math.sqrt(limit) if limit > 0 else 0.0,
        "reduction": 0.0 if omega2 == 0 else (math.inf if limit <= 0 else omega_MHz / math.sqrt(limit)),
    }


# -- four-level coupling ---------------------------------------------------


@dataclass(frozen=True)
class FourLevelParams:
    omega_12_MHz: float
    omega_23_MHz: float
    g_M_Hz: float
    g_o_Hz: float
    N: float
    delta_2_MHz: float
    delta_3_MHz: float
    delta_4_MHz: float
    filling: float = 1.0


def four_level_S(p: FourLevelParams) -> float:
    """``S = sqrt(N) Om12 Om23 g_M sqrt(N) g_o / (d2 d3 d4) * F`` in Hz."""
    if 0 in (p.delta_2_MHz, p.delta_3_MHz, p.delta_4_MHz):
        raise DivideByZeroDetuning("four-level coupling needs nonzero detunings")
    num = math.sqrt(p.N) * p.omega_12_MHz * 1e6 * p.omega_23_MHz * 1e6 * p.g_M_Hz * math.sqrt(p.N) * p.g_o_Hz
    return num / (p.delta_2_MHz * p.delta_3_MHz * p.delta_4_MHz * 1e18) * p.filling


def three_level_S(p: FourLevelParams) -> float:
    """Three-level analogue at the same optical pump: drops the ground-pair pump leg."""
    if 0 in (p.delta_3_MHz, p.delta_4_MHz):
        raise DivideByZeroDetuning("three-level coupling needs nonzero detunings")
    num = math.sqrt(p.N) * p.omega_23_MHz * 1e6 * p.g_M_Hz * math.sqrt(p.N) * p.g_o_Hz
    return num / (p.delta_3_MHz * p.delta_4_MHz * 1e12) * p.filling


# -- design scan -----------------------------------------------------------


def design_scan(
    q_optical: Sequence[float],
    q_microwave: Sequence[float],
    filling: Sequence[float],
    omega_MHz: Sequence[float],
    alpha_s: float,
    microwave_GHz: float = 3.369,
):
    """Rows ``(Qo, Qm, F, omega_MHz, R, eta, bandwidth_kHz)`` over the full product grid."""
    rows = []
    for qo in q_optical:
        for qm in q_microwave:
            for F in filling:
                for om in omega_MHz:
                    R = R_from_params(EfficiencyParams(om, alpha_s, F, qo, qm))
                    rows.append((qo, qm, F, om, R, eta_from_R(R), microwave_GHz * 1e6 / qm))
    return rows


def write_design_scan(path, rows):
    return write_csv(
        path,
        ("Qo", "Qm", "F", "omega_MHz", "R", "eta", "bandwidth_kHz"),
        ([format_float(v) for v in r] for r in rows),
    )
