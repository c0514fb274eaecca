"""Ensemble time-domain behaviour: Rabi flopping, echoes, T1 recovery, pulse bandwidth.

Times are in microseconds except T1 (milliseconds); frequencies in MHz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
import numpy as np
from scipy import integrate, optimize, special

from .io import format_float, write_csv, write_json

_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))

DRIVES = ("optical_init", "microwave_drive", "combined_readout", "wait", "pi_pulse", "pi_half_pulse")


class NonPositiveSignal(ValueError):
    pass


class DegenerateFit(ValueError):
    pass


@dataclass(frozen=True)
class PulseSegment:
    duration_us: float
    drive: str
    rabi_MHz: float = 0.0
    detuning_MHz: float = 0.0

    def __post_init__(self):
        if not self.duration_us > 0:
            raise ValueError("segment durations must be positive")
        if self.drive not in DRIVES:
            raise ValueError(f"unknown drive {self.drive!r}; expected one of {DRIVES}")


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple[PulseSegment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("pulse sequence must not be empty")
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def duration_us(self) -> float:
        return sum(s.duration_us for s in self.segments)

    @classmethod
    def rabi(cls, drive_us: float, rabi_MHz: float, init_us: float = 10.0, readout_us: float = 2.0):
        return cls((
            PulseSegment(init_us, "optical_init"),
            PulseSegment(drive_us, "microwave_drive", rabi_MHz),
            PulseSegment(readout_us, "combined_readout", rabi_MHz),
        ))

    @classmethod
    def hahn(cls, tau_us: float, rabi_MHz: float, init_us: float = 10.0, readout_us: float = 2.0):
        t_pi = 1 / (2 * rabi_MHz)
        return cls((
            PulseSegment(init_us, "optical_init"),
            PulseSegment(t_pi / 2, "pi_half_pulse", rabi_MHz),
            PulseSegment(tau_us, "wait"),
            PulseSegment(t_pi, "pi_pulse", rabi_MHz),
            PulseSegment(tau_us, "wait"),
            PulseSegment(readout_us, "combined_readout", rabi_MHz),
        ))


@dataclass(frozen=True, eq=False)
class DecayTrace:
    delays: np.ndarray
    values: np.ndarray
    fit: dict | None = None
    unit: str = "us"

    def __post_init__(self):
        d = np.asarray(self.delays, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if d.shape != v.shape or d.ndim != 1:
            raise ValueError("delays and values must be 1-D arrays of equal length")
        if d.size > 1 and np.any(np.diff(d) <= 0):
            raise ValueError("delays must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "delays", d)
        object.__setattr__(self, "values", v)

    def with_noise(self, rel_sigma: float, seed: int = 0) -> "DecayTrace":
        """Additive Gaussian noise scaled to the first value."""
        rng = np.random.default_rng(seed)
        scale = abs(self.values[0]) if self.values.size else 1.0
        return DecayTrace(self.delays, self.values + rel_sigma * scale * rng.standard_normal(self.values.size), unit=self.unit)

    def write_csv(self, path) -> Path:
        col = "t_us" if self.unit == "us" else f"t_{self.unit}"
        return write_csv(path, (col, "value"), ((format_float(t), format_float(v)) for t, v in zip(self.delays, self.values)))


# -- Rabi flopping ---------------------------------------------------------


def _rabi_integrand(delta, t, rabi):
    gen = np.sqrt(rabi**2 + delta**2)
    return rabi**2 / gen**2 * (1 - np.cos(2 * np.pi * gen * t)) / 2


def ensemble_rabi(rabi_MHz: float, gamma_ih_kHz: float, t_grid_us, rtol: float = 1e-9) -> np.ndarray:
    """Inverted fraction of a Gaussian-detuned ensemble after resonant driving.

    ``w(t) = int D(d) Om^2/(Om^2+d^2) (1 - cos(2 pi sqrt(Om^2+d^2) t)) / 2 dd``
    """
    if not rabi_MHz > 0:
        raise ValueError("Rabi frequency must be positive")
    t = np.asarray(t_grid_us, dtype=float)
    if gamma_ih_kHz == 0:
        return (1 - np.cos(2 * np.pi * rabi_MHz * t)) / 2
    sigma = gamma_ih_kHz * 1e-3 * _FWHM_TO_SIGMA

    # integrate over x = d / sigma with the Gaussian weight folded in
    def f(x):
        return np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi) * _rabi_integrand(sigma * x, t, rabi_MHz)

    val, _ = integrate.quad_vec(f, -12.0, 12.0, epsabs=1e-13, epsrel=rtol, limit=2000)
    return np.clip(val, 0.0, 1.0)


def rabi_coherence_envelope(rabi_MHz: float, gamma_ih_kHz: float, t_grid_us) -> np.ndarray:
    """Magnitude of the oscillating part, ``|int D Om^2/(Om^2+d^2) exp(2 pi i sqrt(Om^2+d^2) t) dd|``."""
    t = np.asarray(t_grid_us, dtype=float)
    if gamma_ih_kHz == 0:
        return np.ones_like(t)
    sigma = gamma_ih_kHz * 1e-3 * _FWHM_TO_SIGMA

    def f(x):
        d = sigma * x
        gen = np.sqrt(rabi_MHz**2 + d**2)
        w = np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi) * rabi_MHz**2 / gen**2
        ph = 2 * np.pi * gen * t
        return np.concatenate([w * np.cos(ph), w * np.sin(ph)])

    val, _ = integrate.quad_vec(f, -12.0, 12.0, epsabs=1e-13, epsrel=1e-10, limit=2000)
    n = t.size
    return np.hypot(val[:n], val[n:])


def rabi_envelope_time(rabi_MHz: float, gamma_ih_kHz: float, level: float = 1 / math.sqrt(2)) -> float:
    """Time (us) at which the oscillation envelope falls to ``level`` of its start."""
    if gamma_ih_kHz == 0:
        return math.inf
    env0 = rabi_coherence_envelope(rabi_MHz, gamma_ih_kHz, [0.0])[0]
    g = lambda t: rabi_coherence_envelope(rabi_MHz, gamma_ih_kHz, [t])[0] - level * env0
    sigma = gamma_ih_kHz * 1e-3 * _FWHM_TO_SIGMA
    hi = max(1.0 / sigma, rabi_MHz / sigma**2)
    while g(hi) > 0:
        hi *= 2
    return optimize.brentq(g, 0.0, hi, xtol=1e-12, rtol=1e-10)


def local_extrema(values: np.ndarray, kind: str = "max") -> np.ndarray:
    v = np.asarray(values)
    s = 1 if kind == "max" else -1
    return np.array([k for k in range(1, len(v) - 1) if s * v[k] > s * v[k - 1] and s * v[k] >= s * v[k + 1]], dtype=int)


# -- echoes ----------------------------------------------------------------


def hahn_echo_trace(T2_us: float, delay_grid_us, kind: str = "amplitude", stretch: float = 1.0) -> DecayTrace:
    """Echo signal ``exp(-(2 tau / T2)^n)`` (amplitude) or its square (intensity)."""
    if not T2_us > 0:
        raise ValueError("T2 must be positive")
    tau = np.asarray(delay_grid_us, dtype=float)
    amp = np.exp(-((2 * tau / T2_us) ** stretch))
    if kind == "amplitude":
        vals = amp
    elif kind == "intensity":
        vals = amp**2
    else:
        raise ValueError("kind must be 'amplitude' or 'intensity'")
    return DecayTrace(tau, vals, {"model": f"hahn_{kind}", "T2_us": T2_us, "stretch": stretch})


@dataclass(frozen=True)
class T2Fit:
    T2_us: float
    stderr_us: float
    amplitude: float
    kind: str
    stretch: float
    residual_rms: float
    mismatch: bool

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def fit_T2(
    trace: DecayTrace,
    kind: str = "amplitude",
    fit_stretch: bool = False,
    mismatch_threshold: float = 0.01,
) -> T2Fit:
    """Echo decay constant from a weighted log-linear least-squares fit.

    The log model uses weights equal to the signal, which undoes the
    noise amplification of the logarithm.  ``fit_stretch`` refines a stretched
    exponent by nonlinear least squares starting from the log-linear result.
    ``mismatch`` flags an RMS residual above ``mismatch_threshold`` of the
    fitted amplitude (a sign the decay is not exponential).
    """
    x, y = trace.delays, trace.values
    if x.size < 4:
        raise ValueError("need at least 4 points")
    if np.any(y <= 0):
        raise NonPositiveSignal("log-linear fit needs strictly positive values")
    if np.ptp(y) <= 1e-12 * np.max(np.abs(y)):
        raise DegenerateFit("trace is constant; decay time is undetermined")
    per = {"amplitude": 2.0, "intensity": 4.0}[kind]
    coef, cov = np.polyfit(x, np.log(y), 1, w=y, cov=True)
    slope, intercept = coef
    if slope >= 0:
        raise DegenerateFit("trace does not decay")
    T2 = -per / slope
    se = per * math.sqrt(max(cov[0, 0], 0.0)) / slope**2
    amp, n = math.exp(intercept), 1.0
    if fit_stretch:
        model = lambda t, A, T, m: A * np.exp(-(per / 2) * (2 * t / T) ** m)
        popt, pcov = optimize.curve_fit(model, x, y, p0=(amp, T2, 1.0), bounds=([0, 0, 0.2], [np.inf, np.inf, 5.0]))
        amp, T2, n = (float(v) for v in popt)
        se = float(math.sqrt(max(pcov[1, 1], 0.0)))
    fitted = amp * np.exp(-(per / 2) * (2 * x / T2) ** n)
    resid = float(np.sqrt(np.mean((y - fitted) ** 2)))
    return T2Fit(float(T2), float(se), float(amp), kind, float(n), resid, bool(resid > mismatch_threshold * amp))


def optical_echo_T2(trace: DecayTrace, kind: str = "intensity", **kw) -> T2Fit:
    """Optical coherence time from a two-pulse photon echo (intensity by default)."""
    return fit_T2(trace, kind, **kw)


# -- spin-lattice recovery -------------------------------------------------


@dataclass(frozen=True)
class T1Model:
    T1_fast_ms: float = 12.5
    fast_fraction: float = 0.6
    T1_slow_ms: float = 400.0

    def __post_init__(self):
        if not (self.T1_fast_ms > 0 and self.T1_slow_ms > 0):
            raise ValueError("T1 values must be positive")
        if not 0 <= self.fast_fraction <= 1:
            raise ValueError("fast_fraction must lie in [0, 1]")


def t1_recovery(model: T1Model, wait_grid_ms) -> DecayTrace:
    """``1 - a exp(-w/T1f) - (1-a) exp(-w/T1s)``; zero right after depletion."""
    w = np.asarray(wait_grid_ms, dtype=float)
    if np.any(w < 0):
        raise ValueError("waits must be non-negative")
    a = model.fast_fraction
    vals = 1 - a * np.exp(-w / model.T1_fast_ms) - (1 - a) * np.exp(-w / model.T1_slow_ms)
    return DecayTrace(w, vals, {"model": "t1_biexponential", **model.__dict__}, unit="ms")


@dataclass(frozen=True)
class T1Fit:
    T1_fast_ms: float
    T1_fast_stderr_ms: float
    fast_fraction: float
    T1_slow_ms: float
    T1_slow_bound_ms: float
    slow_resolved: bool
    residual_rms: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def fit_T1(trace: DecayTrace, resolve_factor: float = 1.0) -> T1Fit:
    """Invert ``t1_recovery``.

    The slow component counts as resolved only if its fitted value is below
    ``resolve_factor`` times the longest wait; otherwise only the lower bound
    (the longest wait) is meaningful.
    """
    w, y = trace.delays, trace.values
    if w.size < 5:
        raise ValueError("need at least 5 points")
    span = float(w.max())
    model = lambda t, a, tf, ts: 1 - a * np.exp(-t / tf) - (1 - a) * np.exp(-t / ts)
    # deterministic start: fast time from the early log slope of 1 - y
    early = (w > 0) & (w <= span / 4) & (1 - y > 0)
    tf0 = span / 5
    if early.sum() >= 2:
        s = np.polyfit(w[early], np.log(1 - y[early]), 1)[0]
        if s < 0:
            tf0 = min(-1 / s, span)
    popt, pcov = optimize.curve_fit(
        model, w, y, p0=(0.5, tf0, 10 * span), bounds=([0, 1e-9, 1e-9], [1, np.inf, np.inf]),
        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000,
    )
    a, tf, ts = (float(v) for v in popt)
    if tf > ts:
        a, tf, ts = 1 - a, ts, tf
    resid = float(np.sqrt(np.mean((y - model(w, *popt)) ** 2)))
    se = float(math.sqrt(max(pcov[1, 1], 0.0))) if np.all(np.isfinite(pcov)) else math.inf
    return T1Fit(tf, se, a, ts, span, bool(ts < resolve_factor * span), resid)


# -- pulse-length bandwidth ------------------------------------------------


def pulsed_bandwidth(gamma_ih_spin_kHz: float, pulse_lengths_us) -> np.ndarray:
    """Overlap of a rectangular pulse's power spectrum with the spin line.

    ``a(T) = int T sinc^2(f T) G(f) df`` with ``G`` a Gaussian of FWHM
    ``gamma`` scaled to 1 at line centre; ``a -> 1`` as ``T -> inf``.
    Evaluated in the time domain, where the pulse spectrum becomes a
    triangle of half-width ``T`` and the Gaussian stays Gaussian:

        a(T) = 2 s sqrt(2 pi) [ int_0^T exp(-c t^2) dt - (1/T) int_0^T t exp(-c t^2) dt ]

    with ``s`` the standard deviation and ``c = 2 pi^2 s^2``.  ``gamma = 0``
    means no inhomogeneity to cut off the pulse spectrum and returns ones.
    """
    T = np.atleast_1d(np.asarray(pulse_lengths_us, dtype=float))
    if np.any(T <= 0):
        raise ValueError("pulse lengths must be positive")
    if gamma_ih_spin_kHz == 0:
        return np.ones_like(T)
    s = gamma_ih_spin_kHz * 1e-3 * _FWHM_TO_SIGMA
    c = 2 * np.pi**2 * s**2
    rc = np.sqrt(c)
    first = np.sqrt(np.pi) / (2 * rc) * special.erf(rc * T)
    second = -np.expm1(-c * T**2) / (2 * c * T)
    return 2 * s * np.sqrt(2 * np.pi) * (first - second)


def pulsed_bandwidth_quad(gamma_ih_spin_kHz: float, pulse_length_us: float) -> float:
    """Frequency-domain quadrature of the same overlap (slow; used as a cross-check)."""
    s = gamma_ih_spin_kHz * 1e-3 * _FWHM_TO_SIGMA
    Ts = pulse_length_us * s
    g = lambda x: np.sinc(x) ** 2 * math.exp(-0.5 * (x / Ts) ** 2)
    xmax = max(200.0, 12 * Ts)
    edges = np.arange(0.0, xmax + 1.0, 1.0)
    total = sum(integrate.quad(g, a, b, epsabs=1e-15, epsrel=1e-13)[0] for a, b in zip(edges[:-1], edges[1:]))
    # past xmax sinc^2 averages to 1/(2 pi^2 x^2)
    total += integrate.quad(lambda x: math.exp(-0.5 * (x / Ts) ** 2) / (2 * math.pi**2 * x**2), edges[-1], np.inf)[0]
    return 2 * total


def pulsed_bandwidth_knee(gamma_ih_spin_kHz: float, level: float = 1 / math.sqrt(2)) -> float:
    """Pulse length (us) at which the relative amplitude crosses ``level``."""
    f = lambda logT: pulsed_bandwidth(gamma_ih_spin_kHz, [math.exp(logT)])[0] - level
    return math.exp(optimize.brentq(f, math.log(1e-3), math.log(1e5), xtol=1e-10))


def write_fit_json(path, payload: dict) -> Path:
    return write_json(path, payload)
