"""Photon-number efficiency calibration and temperature extraction from spectra."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy import optimize

from .constants import CONST
from .io import KVFile, parse_kv, read_csv_columns, read_kv
from .spectra import (
    EnsembleModel,
    SpectrumTrace,
    absorption_basis,
    absorption_from_basis,
    boltzmann_weights,
)
from .spin import ModelParams, default_params
from .transitions import Polarization, build_transition_table

FREQ_TOL_GHZ = 1e-6


class MissingAnchor(ValueError):
    pass


class AnchorMismatch(ValueError):
    pass


class UnknownFrequency(KeyError):
    pass


class InsufficientLines(ValueError):
    pass


# -- unit arithmetic -------------------------------------------------------


def dbm_to_watts(p_dBm: float) -> float:
    return 1e-3 * 10 ** (p_dBm / 10)


def watts_to_dbm(p_W: float) -> float:
    if p_W <= 0:
        return -math.inf
    return 10 * math.log10(p_W / 1e-3)


def photons_per_second(P_W: float, f_GHz: float) -> float:
    if not f_GHz > 0:
        raise ValueError("frequency must be positive")
    return P_W / (CONST.planck_h * f_GHz * 1e9)


# -- calibration chain -----------------------------------------------------


@dataclass(frozen=True)
class CalibrationChain:
    """Input/output losses and the heterodyne anchor.

    ``heterodyne_anchor`` is ``(electrical dBm, optical W)`` recorded at
    ``electrical_gain_dB``.  The ``*_factors`` entries are optional
    breakdowns into sub-efficiencies whose products must match the
    composite values to 1e-2.
    """

    eta_output: float = 0.09
    eta_input_by_freq: dict = field(default_factory=lambda: {3.369: 0.15, 0.674: 0.45})
    responsivity: float = 0.18
    electrical_gain_dB: float = 39.3
    heterodyne_anchor: tuple[float, float] | None = (-71.62, 280e-15)
    anchor_bandwidth_kHz: float = 3.0
    eta_output_factors: tuple[float, ...] = (0.22, 0.40)
    eta_input_factors: dict = field(default_factory=lambda: {3.369: (0.74, 0.20), 0.674: (0.88, 0.51)})

    def __post_init__(self):
        effs = [self.eta_output, *self.eta_input_by_freq.values(), *self.eta_output_factors]
        effs += [x for fs in self.eta_input_factors.values() for x in fs]
        if any(not 0 < e <= 1 for e in effs):
            raise ValueError("efficiencies must lie in (0, 1]")
        if self.eta_output_factors and abs(math.prod(self.eta_output_factors) - self.eta_output) > 1e-2:
            raise ValueError("eta_output does not match the product of its factors")
        for f, fs in self.eta_input_factors.items():
            comp = self._lookup(self.eta_input_by_freq, f)
            if abs(math.prod(fs) - comp) > 1e-2:
                raise ValueError(f"eta_input({f} GHz) does not match the product of its factors")

    @staticmethod
    def _lookup(table: dict, f_GHz: float):
        for k, v in table.items():
            if abs(float(k) - f_GHz) <= FREQ_TOL_GHZ:
                return v
        raise UnknownFrequency(f"no input efficiency for {f_GHz} GHz; known: {sorted(table)}")

    def eta_input(self, f_GHz: float, factored: bool = False) -> float:
        if factored:
            return math.prod(self._lookup(self.eta_input_factors, f_GHz))
        return self._lookup(self.eta_input_by_freq, f_GHz)

    def output_efficiency(self, factored: bool = False) -> float:
        return math.prod(self.eta_output_factors) if factored else self.eta_output


def _pairs(kv: KVFile, key: str) -> dict:
    out = {}
    for item in kv[key].split(","):
        if not item.strip():
            continue
        try:
            f, v = item.split(":")
            out[float(f)] = tuple(float(x) for x in v.split("*")) if "*" in v else float(v)
        except ValueError:
            raise kv.error(key, f"expected 'freq:value' entries, got {item.strip()!r}") from None
    return out


def chain_from_kv(kv: KVFile) -> CalibrationChain:
    known = {
        "eta_output", "eta_input_by_freq", "responsivity", "electrical_gain_dB", "heterodyne_anchor",
        "anchor_bandwidth_kHz", "eta_output_factors", "eta_input_factors",
    }
    for key in kv:
        if key not in known:
            raise kv.error(key, f"unknown calibration field '{key}'")
    kw = {}
    for k in ("eta_output", "responsivity", "electrical_gain_dB", "anchor_bandwidth_kHz"):
        if k in kv:
            kw[k] = kv.get_float(k)
    if "eta_input_by_freq" in kv:
        kw["eta_input_by_freq"] = _pairs(kv, "eta_input_by_freq")
    if "eta_input_factors" in kv:
        kw["eta_input_factors"] = {f: (v if isinstance(v, tuple) else (v,)) for f, v in _pairs(kv, "eta_input_factors").items()}
    if "eta_output_factors" in kv:
        kw["eta_output_factors"] = tuple(kv.get_floats("eta_output_factors"))
    if "heterodyne_anchor" in kv:
        vals = kv.get_floats("heterodyne_anchor")
        if len(vals) != 2:
            raise kv.error("heterodyne_anchor", "expected 'electrical_dBm, optical_W'")
        kw["heterodyne_anchor"] = (vals[0], vals[1])
    try:
        return CalibrationChain(**kw)
    except (ValueError, KeyError) as exc:
        raise kv.error(None, str(exc)) from None


def load_chain(path=None) -> CalibrationChain:
    if path is None:
        text = resources.files("ybtransducer.data").joinpath("default.chain").read_text()
        return chain_from_kv(parse_kv(text, "default.chain"))
    return chain_from_kv(read_kv(path))


def heterodyne_optical_power(
    electrical_dBm: float, chain: CalibrationChain, gain_dB: float | None = None, rescale: bool = False
) -> float:
    """Optical signal power (W) behind a heterodyne reading, scaled through the anchor.

    The beat-note power is linear in signal optical power, so a 10 dB change
    in electrical power maps to a factor 10 in optical power.  A reading
    taken at a gain other than the anchor's raises ``AnchorMismatch`` unless
    ``rescale`` is set, in which case the gain difference is removed first.
    """
    if chain.heterodyne_anchor is None:
        raise MissingAnchor("calibration chain has no heterodyne anchor")
    a_dBm, a_W = chain.heterodyne_anchor
    delta_gain = 0.0
    if gain_dB is not None and abs(gain_dB - chain.electrical_gain_dB) > 1e-9:
        if not rescale:
            raise AnchorMismatch(
                f"reading at {gain_dB} dB gain cannot use the anchor recorded at {chain.electrical_gain_dB} dB"
            )
        delta_gain = gain_dB - chain.electrical_gain_dB
    return a_W * 10 ** ((electrical_dBm - delta_gain - a_dBm) / 10)


@dataclass(frozen=True)
class EfficiencyReport:
    eta: float
    input_rate: float
    detected_rate: float
    generated_rate: float
    delivered_rate: float
    eta_input: float
    eta_output: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def device_photon_efficiency(
    mw_dBm: float,
    mw_GHz: float,
    chain: CalibrationChain,
    detected_W: float | None = None,
    detected_rate: float | None = None,
    optical_GHz: float = 304501.0,
    factored: bool = False,
) -> EfficiencyReport:
    """``eta = (detected / eta_output) / (input * eta_input)``."""
    eta_in = chain.eta_input(mw_GHz, factored)
    eta_out = chain.output_efficiency(factored)
    if (detected_W is None) == (detected_rate is None):
        raise ValueError("give exactly one of detected_W and detected_rate")
    det = detected_rate if detected_rate is not None else photons_per_second(detected_W, optical_GHz)
    n_in = photons_per_second(dbm_to_watts(mw_dBm), mw_GHz)
    generated = det / eta_out
    delivered = n_in * eta_in
    return EfficiencyReport(generated / delivered, n_in, det, generated, delivered, eta_in, eta_out)


# -- temperature -----------------------------------------------------------


def boltzmann_populations(energies_GHz, T_K: float) -> np.ndarray:
    """Thermal fractions of the given levels (``T = inf`` allowed)."""
    return boltzmann_weights(energies_GHz, T_K)


@dataclass(frozen=True)
class TemperatureFitResult:
    temperature_K: float
    uncertainty_K: float
    beta: float
    beta_uncertainty: float
    isotope_fraction_171: float
    even_isotope_strength: float
    residual_rms: float
    lines_in_range: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def read_spectrum_csv(path, anchor_GHz: float = 304501.0) -> SpectrumTrace:
    """Load ``freq_GHz,transmission``; frequencies above 1e5 GHz are absolute."""
    cols = read_csv_columns(path, ("freq_GHz", "transmission"))
    f, t = cols["freq_GHz"], cols["transmission"]
    if f.size and np.median(f) > 1e5:
        f = f - anchor_GHz
    order = np.argsort(f, kind="stable")
    return SpectrumTrace(f[order], np.clip(t[order], 0.0, 1.0), "transmission", anchor_GHz, {"source": str(path)})


def zero_field_line_offsets(model: ModelParams, pol=Polarization.E_PARALLEL_C, B_mT: float = 0.0) -> list[float]:
    """Distinct offsets of the allowed 171Yb lines (GHz from transition A)."""
    table = build_transition_table(model, B_mT, (pol,))
    offs = sorted({round(l.freq_GHz - table.anchor_GHz, 9) for l in table.optical if abs(l.amplitude) > 1e-6})
    return offs


def fit_temperature(
    measured: SpectrumTrace,
    model: ModelParams | None = None,
    ens: EnsembleModel | None = None,
    B_mT: float = 0.0,
    pol=Polarization.E_PARALLEL_C,
    fit_beta: bool = True,
    T_bounds: tuple[float, float] = (1e-3, 1e3),
) -> TemperatureFitResult:
    """Least-squares temperature (and leakage ``beta``) from a transmission spectrum.

    Isotope fractions, absorption scale and length stay fixed at the
    ensemble's values.  The fit runs in ``log T`` from the best point of a
    logarithmic grid (with ``beta`` solved linearly at each grid point); the
    uncertainty comes from the residual variance times the inverse
    curvature ``(J^T J)^-1``.
    """
    model = model or default_params()
    ens = ens or EnsembleModel()
    if measured.kind != "transmission":
        raise ValueError("fit_temperature needs a transmission spectrum")
    x, y = measured.axis, measured.values
    half = ens.optical_width / 2
    lines = [o for o in zero_field_line_offsets(model, pol, B_mT) if x.min() - half <= o <= x.max() + half]
    if len(lines) < 2:
        raise InsufficientLines(f"only {len(lines)} line(s) within the spectrum; temperature is unidentifiable")
    if np.ptp(y) < 1e-6:
        raise InsufficientLines("spectrum is flat; no absorption lines to fit")

    table = build_transition_table(model, B_mT, (pol,))
    _, S, even = absorption_basis(table, ens, pol, x)
    E = table.ground.energies
    L = ens.waveguide_length_m

    def base(logT):
        return np.exp(-absorption_from_basis(S, even, boltzmann_weights(E, math.exp(logT)), ens) * L)

    def model_T(params):
        logT = params[0]
        beta = params[1] if fit_beta else ens.background_leakage_beta
        return (1 - beta) * base(logT) + beta

    def best_beta(b):
        # y = b + beta (1 - b): linear in beta
        d = 1 - b
        beta = float(np.dot(y - b, d) / np.dot(d, d)) if np.dot(d, d) > 0 else 0.0
        return min(max(beta, 0.0), 0.999)

    lo, hi = math.log(T_bounds[0]), math.log(T_bounds[1])
    grid = np.linspace(lo, hi, 121)
    costs = []
    for g in grid:
        b = base(g)
        beta = best_beta(b) if fit_beta else ens.background_leakage_beta
        costs.append(np.sum(((1 - beta) * b + beta - y) ** 2))
    k = int(np.argmin(costs))
    start = [grid[k]] + ([best_beta(base(grid[k]))] if fit_beta else [])
    bounds = ([lo] + ([0.0] if fit_beta else []), [hi] + ([0.999] if fit_beta else []))
    res = optimize.least_squares(
        lambda p: model_T(p) - y, start, bounds=bounds, x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15,
        max_nfev=2000,
    )
    dof = max(y.size - res.x.size, 1)
    s2 = float(np.sum(res.fun**2)) / dof
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac) * s2
    except np.linalg.LinAlgError:
        cov = np.full((res.x.size, res.x.size), np.inf)
    T = math.exp(res.x[0])
    sT = T * math.sqrt(max(cov[0, 0], 0.0))
    beta = float(res.x[1]) if fit_beta else ens.background_leakage_beta
    sb = math.sqrt(max(cov[1, 1], 0.0)) if fit_beta else 0.0
    return TemperatureFitResult(
        T, sT, beta, sb, ens.isotope_fraction_171, ens.even_strength,
        float(np.sqrt(np.mean(res.fun**2))), len(lines),
    )
