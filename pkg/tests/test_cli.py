"""CLI contract: config resolution, artifacts, exit codes.

main() is exercised in-process (no subprocesses), so exit codes and
stderr/stdout routing are asserted directly.
"""
import json

import pytest

from histent.cli import main, parse_config


def _write_cfg(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


SMALL_SWEEP = {"V": 16, "N": 8, "count": 400, "seed": 3,
               "dx": [1, 4], "dt": [2, 8], "resamples": 4}


# -- Parsing ---------------------------------------------------------------------

def test_version_flag():
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_parse_defaults():
    rc = parse_config(["sweep"])
    assert rc.subcommand == "sweep"
    assert rc.params["model"] == "rw"
    assert rc.params["config"]["seed"] == 0
    assert rc.workers == 1 and rc.fmt == "csv" and not rc.stdout


def test_figure_selects_model():
    rc = parse_config(["sweep", "--figure", "2"])
    assert rc.params["model"] == "diffusion"
    rc = parse_config(["sweep", "--figure", "3"])
    assert rc.params["model"] == "brownian"


def test_figure_model_conflict_is_an_error():
    assert main(["sweep", "--figure", "2", "--model", "rw"]) == 2


def test_unknown_config_key_is_an_error(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "c.json", {"volume": 16})
    assert main(["sweep", cfg]) == 2
    assert "unknown sweep config key" in capsys.readouterr().err


def test_missing_config_file_is_an_error():
    assert main(["sweep", "/no/such/file.json"]) == 2


def test_bad_axis_list_is_an_error():
    assert main(["sweep", "--dx", "1,two"]) == 2


def test_urn_rejects_sweep_flags():
    assert main(["urn", "--model", "rw"]) == 2
    assert main(["urn", "--figure", "7"]) == 2


def test_check_rejects_config_keys(tmp_path):
    cfg = _write_cfg(tmp_path, "c.json", {"R": 3})
    assert main(["check", cfg]) == 2


def test_flag_overrides_config_with_warning(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "c.json", dict(SMALL_SWEEP, seed=1))
    rc = parse_config(["sweep", cfg, "--seed", "9"])
    assert rc.params["config"]["seed"] == 9
    assert "overrides config value" in capsys.readouterr().err


def test_env_seed_is_the_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("HISTENT_SEED", "31")
    rc = parse_config(["sweep"])
    assert rc.params["config"]["seed"] == 31
    # an explicit seed beats the environment
    rc = parse_config(["sweep", "--seed", "5"])
    assert rc.params["config"]["seed"] == 5
    monkeypatch.setenv("HISTENT_SEED", "not-a-number")
    assert main(["sweep"]) == 2


def test_workers_must_be_positive():
    assert main(["sweep", "--workers", "0"]) == 2


# -- Execution ---------------------------------------------------------------------

def test_sweep_writes_csv(tmp_path):
    cfg = _write_cfg(tmp_path, "c.json", SMALL_SWEEP)
    assert main(["sweep", cfg, "--out", str(tmp_path)]) == 0
    text = (tmp_path / "sweep_rw.csv").read_text()
    lines = text.splitlines()
    assert lines[0].startswith("# {")
    assert json.loads(lines[0][2:])["seed"] == 3
    assert len(lines) == 2 + 4


def test_sweep_stdout_json(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "c.json", SMALL_SWEEP)
    assert main(["sweep", cfg, "--stdout", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["axis_names"] == ["dx", "dt"]


def test_urn_figures_write_artifacts(tmp_path):
    cfg4 = _write_cfg(tmp_path, "f4.json",
                      {"figure": 4, "R": 3, "t1": [0, 2], "m": [1, 2]})
    assert main(["urn", cfg4, "--out", str(tmp_path)]) == 0
    surface = (tmp_path / "urn_surface.csv").read_text()
    assert surface.splitlines()[1].startswith("t1,m,")
    cfg5 = _write_cfg(tmp_path, "f5.json",
                      {"figure": 5, "R": 3, "t1": [0, 1], "ks": [1, 2]})
    assert main(["urn", cfg5, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "urn_curves.csv").exists()


def test_translate_writes_artifact(tmp_path):
    cfg = _write_cfg(tmp_path, "t.json", {"R": 3, "T": [0, 1, 2]})
    assert main(["translate", cfg, "--out", str(tmp_path)]) == 0
    text = (tmp_path / "translate_urn.csv").read_text()
    assert text.splitlines()[1].startswith("T,")


def test_maxent_writes_report(tmp_path):
    cfg = _write_cfg(tmp_path, "m.json", {"V": 4, "N": 2, "seed": 1})
    assert main(["maxent", cfg, "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "maxent_report.json").read_text())
    assert doc["report"]["ok"] is True
    assert doc["instance"] == {"V": 4, "N": 2, "seed": 1,
                               "coarse_times": doc["instance"]["coarse_times"]}


def test_check_writes_report_and_succeeds(tmp_path, capsys):
    assert main(["check", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "check_report.json").read_text())
    assert all(c["ok"] for c in doc["checks"])
    assert "[ok]" in capsys.readouterr().err


def test_stdout_keeps_progress_on_stderr(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, "c.json", SMALL_SWEEP)
    assert main(["sweep", cfg, "--stdout"]) == 0
    captured = capsys.readouterr()
    assert captured.out.splitlines()[0].startswith("# {")
    assert "histent:" in captured.err
    assert "histent:" not in captured.out
