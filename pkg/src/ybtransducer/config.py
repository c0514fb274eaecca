"""Run configuration: a key-value file naming data files plus command parameters."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .calibration import CalibrationChain, load_chain
from .efficiency import MaterialSpec, load_materials
from .io import ConfigError, KVFile, parse_kv, read_kv
from .spectra import EnsembleModel
from .spin import ModelParams, default_params, params_from_kv

FILE_KEYS = ("params", "materials", "ensemble", "calibration")
RUN_KEYS = ("command", "mode", "seed", "threads", "out")


def ensemble_from_kv(kv: KVFile, base: EnsembleModel | None = None) -> EnsembleModel:
    base = base or EnsembleModel()
    fields = {f.name: f for f in dataclasses.fields(EnsembleModel)}
    kw = {}
    for key in kv:
        if key not in fields:
            raise kv.error(key, f"unknown ensemble field '{key}'")
        if key == "lineshape":
            kw[key] = kv.get_str(key)
        elif kv[key].strip().lower() in ("none", "auto"):
            kw[key] = None
        else:
            kw[key] = kv.get_float(key)
    try:
        return dataclasses.replace(base, **kw)
    except ValueError as exc:
        raise kv.error(next(iter(kv), None), str(exc)) from None


def default_ensemble() -> EnsembleModel:
    text = resources.files("ybtransducer.data").joinpath("default.ensemble").read_text()
    return ensemble_from_kv(parse_kv(text, "default.ensemble"))


def load_ensemble(path=None) -> EnsembleModel:
    if path is None:
        return default_ensemble()
    return ensemble_from_kv(read_kv(path))


@dataclass(frozen=True, eq=False)
class RunConfig:
    path: Path
    block: KVFile
    params_path: Path | None = None
    materials_path: Path | None = None
    ensemble_path: Path | None = None
    calibration_path: Path | None = None
    out: Path | None = None
    seed: int = 0
    threads: int = 1
    command: str | None = None
    mode: str | None = None

    def model(self) -> ModelParams:
        if self.params_path is None:
            return default_params()
        return params_from_kv(read_kv(self.params_path))

    def ensemble(self) -> EnsembleModel:
        return load_ensemble(self.ensemble_path)

    def materials(self) -> dict[str, MaterialSpec]:
        return load_materials(self.materials_path)

    def chain(self) -> CalibrationChain:
        return load_chain(self.calibration_path)

    # command-block accessors with config-file error locations
    def float(self, key, default=None):
        return self.block.get_float(key, default)

    def int(self, key, default=None):
        return self.block.get_int(key, default)

    def str(self, key, default=None):
        return self.block.get_str(key, default)

    def floats(self, key, default=None):
        return self.block.get_floats(key, default)

    def bool(self, key, default=False):
        return self.block.get_bool(key, default)

    def require_known(self, allowed) -> None:
        allowed = set(allowed)
        for key in self.block:
            if key not in allowed:
                raise self.block.error(key, f"unknown key '{key}' for this command; allowed: {sorted(allowed)}")


def load_run_config(path) -> RunConfig:
    """Parse a run config; data-file paths resolve relative to the config's directory."""
    path = Path(path)
    kv = read_kv(path)
    if not kv:
        raise ConfigError(path, None, "configuration is empty")
    base_dir = path.parent
    files: dict[str, Path | None] = {}
    for key in FILE_KEYS:
        if key in kv:
            p = Path(kv[key])
            p = p if p.is_absolute() else base_dir / p
            if not p.is_file():
                raise kv.error(key, f"referenced file does not exist: {kv[key]}")
            files[key] = p
        else:
            files[key] = None
    block = KVFile(path)
    for key, value in kv.items():
        if key not in FILE_KEYS and key not in RUN_KEYS:
            block[key] = value
            block.lines[key] = kv.lines[key]
    out = None
    if "out" in kv:
        o = Path(kv["out"])
        out = o if o.is_absolute() else base_dir / o
    seed = kv.get_int("seed", 0)
    if seed < 0:
        raise kv.error("seed", "seed must be a non-negative integer")
    threads = kv.get_int("threads", 1)
    if threads < 1:
        raise kv.error("threads", "threads must be at least 1")
    return RunConfig(
        path, block, files["params"], files["materials"], files["ensemble"], files["calibration"], out,
        seed, threads, kv.get("command"), kv.get("mode"),
    )
