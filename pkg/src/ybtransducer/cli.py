"""Command-line front end.

Each subcommand reads a key-value config (``--config``), writes CSV/JSON
into ``--out`` and exits 0; failures print a JSON error object on stderr
and exit nonzero (2 for configuration problems, 1 otherwise).
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import calibration as cal
from . import dynamics as dyn
from . import efficiency as eff
from . import spectra as sp
from .config import RunConfig, load_run_config
from .io import ConfigError, format_float, write_csv, write_json
from .spin import level_diagram_scan, solve_model
from .transitions import Polarization, build_transition_table

COMMANDS = ("levels", "spectrum", "map", "efficiency", "dynamics", "calibrate", "fit-temperature")
MODES = {
    "spectrum": ("point", "field_scan"),
    "map": ("three_level", "four_level", "interference"),
    "efficiency": ("point", "ledger", "alpha", "scan"),
    "dynamics": ("rabi", "hahn", "t1", "bandwidth", "optical_echo"),
}
DEFAULT_MODES = {"spectrum": "point", "map": "three_level", "efficiency": "point", "dynamics": "hahn"}


def _axis(cfg: RunConfig, prefix: str, start, stop, n):
    a = cfg.float(f"{prefix}_start", start)
    b = cfg.float(f"{prefix}_stop", stop)
    k = cfg.int(f"{prefix}_points", n)
    if k < 2 or b <= a:
        raise cfg.block.error(f"{prefix}_points", f"{prefix} axis needs stop > start and at least 2 points")
    return np.linspace(a, b, k)


# -- commands --------------------------------------------------------------


def cmd_levels(cfg: RunConfig, out: Path, mode: str | None) -> dict:
    cfg.require_known({"B_start_mT", "B_stop_mT", "B_step_mT", "orientation"})
    model = cfg.model()
    orient = cfg.floats("orientation", (0, 0, 1))
    if len(orient) != 3:
        raise cfg.block.error("orientation", "orientation needs three components")
    scan = level_diagram_scan(
        model, cfg.float("B_start_mT", 0.0), cfg.float("B_stop_mT", 40.0), cfg.float("B_step_mT", 0.5), orient, cfg.threads
    )
    scan.write_csv(out)
    g0, e0 = solve_model(model, 0.0)
    report = {
        "command": "levels",
        "n_fields": len(scan.B_mT),
        "zero_field": {
            "ground_energies_GHz": g0.energies,
            "excited_energies_GHz": e0.energies,
            "ground_34_gap_GHz": g0.gap(3, 4),
            "excited_12_gap_GHz": e0.gap(1, 2),
        },
    }
    write_json(out / "report.json", report)
    return report


def _pol(cfg: RunConfig, key="polarization", default=Polarization.E_PARALLEL_C.value) -> Polarization:
    try:
        return Polarization.parse(cfg.str(key, default))
    except ValueError as exc:
        raise cfg.block.error(key, str(exc)) from None


def cmd_spectrum(cfg: RunConfig, out: Path, mode: str) -> dict:
    cfg.require_known({"B_mT", "polarization", "grid_start", "grid_stop", "grid_points", "B_start_mT", "B_stop_mT", "B_points"})
    model, ens = cfg.model(), cfg.ensemble()
    pol = _pol(cfg)
    grid = _axis(cfg, "grid", -1.0, 8.0, 901)
    if mode == "point":
        B = cfg.float("B_mT", 0.0)
        table = build_transition_table(model, B)
        a = sp.absorption_spectrum(table, ens, pol, grid)
        t = sp.transmission_spectrum(a, ens.waveguide_length_m, ens.background_leakage_beta)
        sp.write_spectrum_csv(out / "spectrum.csv", a, t)
        table.write_csv(out / "transitions.csv")
        k = int(np.argmin(t.values))
        depth = 1 - t.values
        dips = [
            float(grid[i]) for i in range(1, grid.size - 1)
            if depth[i] > depth[i - 1] and depth[i] >= depth[i + 1] and depth[i] > 0.05 * depth.max()
        ]
        report = {
            "command": "spectrum", "mode": mode, "field_mT": B, "polarization": pol.value,
            "min_transmission": float(t.values.min()), "min_at_offset_GHz": float(grid[k]),
            "dips_offset_GHz": dips,
            "populations": ens.populations(table.ground),
        }
    else:
        fields = np.linspace(cfg.float("B_start_mT", 0.0), cfg.float("B_stop_mT", 40.0), cfg.int("B_points", 81))
        A = sp.field_absorption_scan(model, ens, fields, grid, pol)
        rows = ((format_float(b), format_float(f), format_float(v)) for b, r in zip(fields, A) for f, v in zip(grid, r))
        write_csv(out / "absorption_scan.csv", ("B_mT", "offset_GHz", "absorption_per_m"), rows)
        report = {"command": "spectrum", "mode": mode, "n_fields": len(fields), "max_absorption_per_m": float(A.max())}
    write_json(out / "report.json", report)
    return report


def _pumps(cfg: RunConfig) -> sp.Pumps:
    return sp.Pumps(cfg.float("omega_o_MHz", 6.0), cfg.float("omega_m_MHz", 1.0), cfg.float("omega_mg_MHz", 1.0))


def cmd_map(cfg: RunConfig, out: Path, mode: str) -> dict:
    model, ens = cfg.model(), cfg.ensemble()
    pump_keys = {"omega_o_MHz", "omega_m_MHz", "omega_mg_MHz"}
    if mode == "three_level":
        cfg.require_known(pump_keys | {"B_mT", "polarization", "optical_start", "optical_stop", "optical_points",
                                       "microwave_start", "microwave_stop", "microwave_points"})
        B = cfg.float("B_mT", 5.1)
        pol = _pol(cfg)
        table = build_transition_table(model, B)
        rm = sp.three_level_map(
            table, ens, _axis(cfg, "optical", -0.5, 1.2, 200), _axis(cfg, "microwave", 3.366, 3.382, 200), _pumps(cfg), pol
        )
    elif mode == "four_level":
        cfg.require_known(pump_keys | {"B_mT", "optical_offset_GHz", "fM_start", "fM_stop", "fM_points",
                                       "fMG_start", "fMG_stop", "fMG_points"})
        rm = sp.four_level_map(
            model, ens, _axis(cfg, "fM", 3.3685, 3.3695, 200), _axis(cfg, "fMG", 0.6735, 0.6745, 200), _pumps(cfg),
            cfg.float("B_mT", 0.0), cfg.float("optical_offset_GHz", 0.0),
        )
    else:
        cfg.require_known(pump_keys | {"optical_offset_GHz", "lobe_field_mT", "B_start_mT", "B_stop_mT", "B_points",
                                       "fM_start", "fM_stop", "fM_points"})
        fields = np.linspace(cfg.float("B_start_mT", 0.0), cfg.float("B_stop_mT", 5.0), cfg.int("B_points", 51))
        rm = sp.interference_map(
            model, ens, fields, _axis(cfg, "fM", 3.366, 3.378, 241), cfg.float("optical_offset_GHz", 2.75), _pumps(cfg)
        )
    rm.write(out, ens)
    r, m = rm.argmax()
    report = {"command": "map", "mode": mode, "argmax": {"row": r, "microwave_GHz": m}, "max_abs": float(rm.magnitude.max())}
    if mode == "interference":
        mag = rm.magnitude
        report["zero_field_ratio"] = float(mag[0].max() / mag.max()) if mag.max() > 0 else 0.0
        g0, e0 = solve_model(model, 0.0)
        report["relative_sx_sign"] = sp.relative_sx_sign(g0, e0)
        k = int(np.argmin(np.abs(rm.optical_axis - cfg.float("lobe_field_mT", float(np.median(rm.optical_axis))))))
        lobes = sp.lobe_phases(rm.values[k], rm.microwave_axis)
        report["lobes"] = {"field_mT": float(rm.optical_axis[k]), "peaks": [list(p) for p in lobes]}
        if len(lobes) >= 2:
            a, b = sorted(lobes, key=lambda p: -p[1])[:2]
            report["lobes"]["phase_difference_rad"] = float(abs(np.angle(np.exp(1j * (a[2] - b[2])))))
    write_json(out / "report.json", report)
    return report


def _material(cfg: RunConfig, key="material", default="yb171_yvo") -> eff.MaterialSpec:
    mats = cfg.materials()
    name = cfg.str(key, default)
    if name not in mats:
        raise cfg.block.error(key, f"unknown material '{name}'; available: {sorted(mats)}")
    return mats[name]


def _alpha_block(cfg: RunConfig, mat: eff.MaterialSpec) -> dict:
    rule = cfg.str("cutoff_rule", "sigma")
    try:
        cut = eff.default_cutoffs(mat, rule)
    except ValueError as exc:
        raise cfg.block.error("cutoff_rule", str(exc)) from None
    res = eff.alpha_coefficient(mat, cut)
    return {"material": mat.name, "alpha_s": res.alpha_s, "cutoffs_Hz": list(res.cutoffs_Hz),
            "cutoff_rule": rule, "sensitivity_by_cutoff_factor": res.sensitivity}


def cmd_efficiency(cfg: RunConfig, out: Path, mode: str) -> dict:
    report: dict = {"command": "efficiency", "mode": mode}
    if mode == "point":
        cfg.require_known({"R", "omega_MHz", "alpha_s", "filling", "Qo", "Qm", "length_m", "refractive_index", "f0_GHz"})
        if "R" in cfg.block:
            R = cfg.float("R")
        else:
            R = eff.R_from_params(eff.EfficiencyParams(
                cfg.float("omega_MHz", 3.0), cfg.float("alpha_s", 1.4e-8), cfg.float("filling", 1e-3),
                cfg.float("Qo", 1e4), cfg.float("Qm", 1e4)))
        fin = eff.finesse(cfg.float("length_m", 30e-6), cfg.float("refractive_index", 2.17),
                          cfg.float("f0_GHz", 304501.0), cfg.float("Qo", 1e4))
        report.update(R=R, eta=eff.eta_from_R(R), fwhm_GHz=fin.fwhm_GHz, fsr_GHz=fin.fsr_GHz, finesse=fin.finesse)
    elif mode == "ledger":
        cfg.require_known({"baseline_eta", "population", "cavity", "filling", "pump", "Qo", "Qm", "microwave_GHz",
                           "omega_MHz", "delta_o_MHz", "delta_m_MHz"})
        qo, qm = cfg.float("Qo", 2e4), cfg.float("Qm", 2e4)
        cav = cfg.float("cavity", eff.cavity_gain(qo, qm))
        adi = eff.adiabatic_check(cfg.float("omega_MHz", 6.0), cfg.float("delta_o_MHz", 100.0), cfg.float("delta_m_MHz", 0.065))
        pump = cfg.float("pump", 0.5)
        steps = [("population", cfg.float("population", 4.0)), ("cavity", cav), ("filling", cfg.float("filling", 600.0)),
                 ("pump", pump)]
        led = eff.upgrade_ledger(cfg.float("baseline_eta", 1.2e-13), steps, q_microwave=qm,
                                 microwave_GHz=cfg.float("microwave_GHz", 3.369))
        report.update(R0=led.R0, eta0=led.eta0, total_factor=led.total_factor, R=led.R, eta=led.eta,
                      steps={s.name: s.factor for s in led.steps}, bandwidth_kHz=led.bandwidth_kHz,
                      cavity_gain_computed=eff.cavity_gain(qo, qm), adiabatic=adi)
    elif mode == "alpha":
        cfg.require_known({"material", "reference", "cutoff_rule"})
        a = _alpha_block(cfg, _material(cfg))
        b = _alpha_block(cfg, _material(cfg, "reference", "er_yso"))
        report.update(alpha=a, reference=b, ratio=a["alpha_s"] / b["alpha_s"])
    else:
        cfg.require_known({"Qo", "Qm", "filling", "omega_MHz", "alpha_s", "material", "cutoff_rule", "microwave_GHz"})
        alpha = cfg.float("alpha_s", 0.0) or _alpha_block(cfg, _material(cfg))["alpha_s"]
        rows = eff.design_scan(cfg.floats("Qo", (1e4, 2e4, 1e5)), cfg.floats("Qm", (1e4, 2e4, 1e5)),
                               cfg.floats("filling", (1e-3, 8.4e-3)), cfg.floats("omega_MHz", (3.0, 6.0)), alpha,
                               cfg.float("microwave_GHz", 3.369))
        eff.write_design_scan(out / "design_scan.csv", rows)
        best = max(rows, key=lambda r: r[5])
        report.update(alpha_s=alpha, n_points=len(rows), best={"Qo": best[0], "Qm": best[1], "F": best[2], "omega_MHz": best[3],
                                                                "R": best[4], "eta": best[5]})
    write_json(out / "report.json", report)
    return report


def cmd_dynamics(cfg: RunConfig, out: Path, mode: str) -> dict:
    rng_noise = cfg.float("noise_rel", 0.0) if "noise_rel" in cfg.block else 0.0
    report: dict = {"command": "dynamics", "mode": mode, "seed": cfg.seed}
    if mode == "rabi":
        cfg.require_known({"rabi_MHz", "gamma_ih_kHz", "t_stop_us", "t_points"})
        t = np.linspace(0, cfg.float("t_stop_us", 10.0), cfg.int("t_points", 1001))
        w = dyn.ensemble_rabi(cfg.float("rabi_MHz", 1.0), cfg.float("gamma_ih_kHz", 130.0), t)
        trace = dyn.DecayTrace(t, w)
        peaks = dyn.local_extrema(w)
        report.update(n_periods=int(len(peaks)), peak_values=w[peaks],
                      envelope_monotone=bool(np.all(np.diff(w[peaks]) <= 0)),
                      envelope_time_us=dyn.rabi_envelope_time(cfg.float("rabi_MHz", 1.0), cfg.float("gamma_ih_kHz", 130.0)))
    elif mode in ("hahn", "optical_echo"):
        cfg.require_known({"T2_us", "kind", "tau_stop_us", "tau_points", "noise_rel", "stretch"})
        kind = cfg.str("kind", "amplitude" if mode == "hahn" else "intensity")
        T2 = cfg.float("T2_us", 14.0 if mode == "hahn" else 25.0)
        tau = np.linspace(0, cfg.float("tau_stop_us", T2), cfg.int("tau_points", 21))
        trace = dyn.hahn_echo_trace(T2, tau, kind, cfg.float("stretch", 1.0))
        if rng_noise:
            trace = trace.with_noise(rng_noise, cfg.seed)
        fit = dyn.fit_T2(trace, kind)
        report.update(input_T2_us=T2, fit=fit.as_dict())
    elif mode == "t1":
        cfg.require_known({"T1_fast_ms", "fast_fraction", "T1_slow_ms", "wait_stop_ms", "wait_points", "noise_rel"})
        model = dyn.T1Model(cfg.float("T1_fast_ms", 12.5), cfg.float("fast_fraction", 0.6), cfg.float("T1_slow_ms", 400.0))
        w = np.linspace(0, cfg.float("wait_stop_ms", 40.0), cfg.int("wait_points", 41))
        trace = dyn.t1_recovery(model, w)
        if rng_noise:
            trace = trace.with_noise(rng_noise, cfg.seed)
        fit = dyn.fit_T1(trace)
        report.update(input=model.__dict__, fit=fit.as_dict())
    else:
        cfg.require_known({"gamma_ih_kHz", "pulse_start_us", "pulse_stop_us", "pulse_points"})
        T = np.geomspace(cfg.float("pulse_start_us", 1.0), cfg.float("pulse_stop_us", 200.0), cfg.int("pulse_points", 41))
        G = cfg.float("gamma_ih_kHz", 130.0)
        trace = dyn.DecayTrace(T, dyn.pulsed_bandwidth(G, T))
        report.update(knee_us=dyn.pulsed_bandwidth_knee(G) if G > 0 else 0.0)
    trace.write_csv(out / "trace.csv")
    write_json(out / "fit.json", report)
    return report


def cmd_calibrate(cfg: RunConfig, out: Path, mode: str | None) -> dict:
    cfg.require_known({"mw_dBm", "mw_GHz", "electrical_dBm", "gain_dB", "rescale_gain", "optical_GHz"})
    chain = cfg.chain()
    try:
        P = cal.heterodyne_optical_power(cfg.float("electrical_dBm", -71.62), chain,
                                         cfg.float("gain_dB") if "gain_dB" in cfg.block else None,
                                         cfg.bool("rescale_gain", False))
    except cal.AnchorMismatch as exc:
        raise cfg.block.error("gain_dB", str(exc)) from None
    f_opt = cfg.float("optical_GHz", 304501.0)
    try:
        r = cal.device_photon_efficiency(cfg.float("mw_dBm", 3.0), cfg.float("mw_GHz", 3.369), chain, detected_W=P,
                                         optical_GHz=f_opt)
        rf = cal.device_photon_efficiency(cfg.float("mw_dBm", 3.0), cfg.float("mw_GHz", 3.369), chain, detected_W=P,
                                          optical_GHz=f_opt, factored=True)
    except cal.UnknownFrequency as exc:
        raise cfg.block.error("mw_GHz", str(exc.args[0])) from None
    report = {"command": "calibrate", "optical_power_W": P, **r.as_dict(), "eta_factored": rf.eta}
    write_json(out / "report.json", report)
    return report


def cmd_fit_temperature(cfg: RunConfig, out: Path, mode: str | None, spectrum: str | None = None) -> dict:
    cfg.require_known({"spectrum", "synth_temperature_K", "noise_rel", "grid_start", "grid_stop", "grid_points",
                       "fit_beta", "B_mT"})
    model, ens = cfg.model(), cfg.ensemble()
    B = cfg.float("B_mT", 0.0)
    if spectrum is None and "spectrum" in cfg.block:
        spectrum = str(cfg.path.parent / cfg.str("spectrum"))
    synth = None
    if spectrum is not None:
        measured = cal.read_spectrum_csv(spectrum, model.optical_anchor_GHz)
    else:
        synth = cfg.float("synth_temperature_K")
        grid = _axis(cfg, "grid", -1.0, 8.0, 901)
        measured = sp.forward_transmission(model, replace(ens, temperature_K=synth), grid, B)
        noise = cfg.float("noise_rel", 0.0)
        if noise:
            rng = np.random.default_rng(cfg.seed)
            measured = sp.SpectrumTrace(
                measured.axis, np.clip(measured.values + noise * rng.standard_normal(measured.axis.size), 0, 1),
                "transmission", measured.anchor_GHz,
            )
        t = sp.SpectrumTrace(measured.axis, measured.values, "transmission", measured.anchor_GHz)
        write_csv(out / "spectrum.csv", ("freq_GHz", "transmission"),
                  ((format_float(f), format_float(v)) for f, v in zip(t.absolute_GHz, t.values)))
    try:
        fit = cal.fit_temperature(measured, model, ens, B, fit_beta=cfg.bool("fit_beta", True))
    except cal.InsufficientLines as exc:
        raise ConfigError(spectrum or cfg.path, None, str(exc)) from None
    report = {"command": "fit-temperature", **fit.as_dict()}
    if synth is not None:
        report["synth_temperature_K"] = synth
    write_json(out / "fit.json", report)
    return report


HANDLERS = {
    "levels": cmd_levels,
    "spectrum": cmd_spectrum,
    "map": cmd_map,
    "efficiency": cmd_efficiency,
    "dynamics": cmd_dynamics,
    "calibrate": cmd_calibrate,
    "fit-temperature": cmd_fit_temperature,
}


# -- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ybtransducer", description="171Yb:YVO transducer model")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS + ("run",):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="key-value run configuration")
        s.add_argument("--out", help="output directory (default: config 'out' or ./out)")
        s.add_argument("--mode", help="command mode")
        s.add_argument("--seed", type=int, help="seed for synthetic noise")
        s.add_argument("--threads", type=int, help="worker threads for field scans")
        if name in ("fit-temperature", "run"):
            s.add_argument("--spectrum", help="measured spectrum CSV (freq_GHz,transmission)")
    return p


def _error(kind: str, message: str, path=None, line=None) -> int:
    payload = {"error": kind, "message": message, "file": None if path is None else str(path), "line": line}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return 2 if kind == "ConfigError" else 1


def run(argv=None) -> dict:
    """Parse ``argv`` and execute; raises on failure (``main`` maps to exit codes)."""
    args = build_parser().parse_args(argv)
    cfg = load_run_config(args.config)
    command = args.command
    if command == "run":
        if cfg.command is None:
            raise ConfigError(cfg.path, None, "'run' needs a 'command' key in the config")
        command = cfg.command
    if command not in HANDLERS:
        raise ConfigError(cfg.path, cfg.block.lines.get("command"), f"unknown command '{command}'")
    if cfg.command is not None and cfg.command != command:
        raise ConfigError(cfg.path, None, f"config is for '{cfg.command}', not '{command}'")
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(cfg.path, None, "seed must be non-negative")
        cfg = replace(cfg, seed=args.seed)
    if args.threads is not None:
        cfg = replace(cfg, threads=max(1, args.threads))
    mode = args.mode or cfg.mode or DEFAULT_MODES.get(command)
    if command in MODES and mode not in MODES[command]:
        raise ConfigError(cfg.path, None, f"unknown mode '{mode}' for {command}; choose from {MODES[command]}")
    out = Path(args.out) if args.out else (cfg.out or Path("out"))
    out.mkdir(parents=True, exist_ok=True)
    handler = HANDLERS[command]
    if command == "fit-temperature":
        return handler(cfg, out, mode, getattr(args, "spectrum", None))
    return handler(cfg, out, mode)


def main(argv=None) -> int:
    try:
        run(argv)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    except ConfigError as exc:
        return _error("ConfigError", exc.message, exc.path, exc.line)
    except Exception as exc:  # noqa: BLE001 - reported as machine-readable JSON
        return _error(type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
