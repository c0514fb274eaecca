import json

import pytest

from ybtransducer.cli import main
from ybtransducer.config import ensemble_from_kv, load_run_config
from ybtransducer.io import ConfigError, parse_kv, read_csv_columns


def write(path, text):
    path.write_text(text)
    return path


def err_json(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_empty_config_is_usage_error(tmp_path, capsys):
    cfg = write(tmp_path / "e.cfg", "# nothing\n")
    assert main(["levels", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    e = err_json(capsys)
    assert e["error"] == "ConfigError" and "empty" in e["message"]


def test_missing_config_arg(capsys):
    assert main(["levels"]) != 0


def test_unknown_key_reports_line(tmp_path, capsys):
    cfg = write(tmp_path / "c.cfg", "B_stop_mT = 5\n\nB_stpe_mT = 1\n")
    assert main(["levels", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    e = err_json(capsys)
    assert e["line"] == 3 and e["file"].endswith("c.cfg")


def test_bad_number_reports_line(tmp_path, capsys):
    cfg = write(tmp_path / "c.cfg", "B_stop_mT = five\n")
    assert main(["levels", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert err_json(capsys)["line"] == 1


def test_missing_referenced_file(tmp_path, capsys):
    cfg = write(tmp_path / "c.cfg", "params = nowhere.params\n")
    assert main(["levels", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "does not exist" in err_json(capsys)["message"]


def test_unknown_mode(tmp_path, capsys):
    cfg = write(tmp_path / "c.cfg", "seed = 1\n")
    assert main(["map", "--config", str(cfg), "--mode", "five_level", "--out", str(tmp_path / "o")]) == 2


def test_command_mismatch(tmp_path, capsys):
    cfg = write(tmp_path / "c.cfg", "command = levels\n")
    assert main(["calibrate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_runtime_error_is_json(tmp_path, capsys):
    cfg = write(tmp_path / "c.cfg", "mw_GHz = 5.0\n")
    assert main(["calibrate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "5.0" in err_json(capsys)["message"]


def test_levels_outputs(tmp_path):
    cfg = write(tmp_path / "c.cfg", "B_stop_mT = 2\nB_step_mT = 1\n")
    out = tmp_path / "o"
    assert main(["levels", "--config", str(cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["spec_version"] == "1.0"
    cols = read_csv_columns(out / "levels_excited.csv", ("B_mT", "level_index", "energy_GHz"))
    assert cols["B_mT"].size == 12


def test_run_dispatch_and_determinism(tmp_path):
    cfg = write(tmp_path / "c.cfg", "command = dynamics\nmode = hahn\nnoise_rel = 0.01\nT2_us = 14\n")
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["run", "--config", str(cfg), "--out", str(out), "--seed", "9"]) == 0
        outs.append({p.name: p.read_bytes() for p in out.iterdir()})
    assert outs[0] == outs[1]
    out = tmp_path / "o2"
    main(["run", "--config", str(cfg), "--out", str(out), "--seed", "10"])
    assert (out / "trace.csv").read_bytes() != outs[0]["trace.csv"]


def test_no_absolute_paths_in_outputs(tmp_path):
    cfg = write(tmp_path / "c.cfg", "command = map\nmode = four_level\nfM_points = 5\nfMG_points = 5\n")
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    for p in out.iterdir():
        assert str(tmp_path) not in p.read_text()


def test_fit_temperature_from_file(tmp_path):
    synth = write(tmp_path / "s.cfg", "synth_temperature_K = 0.2\n")
    out = tmp_path / "synth"
    assert main(["fit-temperature", "--config", str(synth), "--out", str(out)]) == 0
    cfg = write(tmp_path / "f.cfg", "fit_beta = true\n")
    out2 = tmp_path / "fit"
    assert main(["fit-temperature", "--config", str(cfg), "--out", str(out2), "--spectrum", str(out / "spectrum.csv")]) == 0
    fit = json.loads((out2 / "fit.json").read_text())
    assert fit["temperature_K"] == pytest.approx(0.2, rel=1e-3)


def test_config_paths_relative(tmp_path):
    (tmp_path / "sub").mkdir()
    write(tmp_path / "sub" / "x.ensemble", "temperature_K = 2\n")
    cfg = write(tmp_path / "sub" / "c.cfg", "ensemble = x.ensemble\nseed = 4\nthreads = 2\n")
    rc = load_run_config(cfg)
    assert rc.ensemble().temperature_K == 2.0
    assert rc.seed == 4 and rc.threads == 2
    assert "ensemble" not in rc.block


def test_config_rejects_negative_seed(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(write(tmp_path / "c.cfg", "seed = -1\n"))


def test_ensemble_kv():
    e = ensemble_from_kv(parse_kv("lineshape = lorentzian\neven_isotope_strength = none\n"))
    assert e.lineshape == "lorentzian" and e.even_isotope_strength is None
    with pytest.raises(ConfigError):
        ensemble_from_kv(parse_kv("colour = red\n"))
