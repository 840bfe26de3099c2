import csv
import json
import sys

import pytest

from coagfrag import ConfigError
from coagfrag.cli import main
from coagfrag.config import load_config, parse_config

SMALL = {
    "grid": {"x_min": 0.05, "x_max": 20.0, "n_cells": 10},
    "kernels": {"coagulation": {"family": "constant", "k": 1.0},
                "collision": {"family": "constant", "k2": 0.1},
                "breakup": {"family": "power_law", "nu": 0.0}},
    "time": {"t_end": 0.2, "sample_count": 3},
    "truncation": {"n": 20.0},
    "moments": {"omega": 0.75, "xi": [0.5]},
}


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL))
    return path


def test_emit_parse_emit_is_byte_identical(configs_dir):
    for path in sorted(configs_dir.glob("*.json")):
        first = load_config(path).emit()
        assert parse_config(first).emit() == first, path.name


def test_hash_changes_with_content():
    a = parse_config(json.dumps(SMALL))
    b = parse_config(json.dumps({**SMALL, "time": {"t_end": 0.3, "sample_count": 3}}))
    assert a.hash != b.hash and len(a.hash) == 64


@pytest.mark.parametrize("mutate, field", [
    (lambda d: d["grid"].pop("x_min"), "grid.x_min"),
    (lambda d: d["grid"].update(bogus=1), "grid"),
    (lambda d: d["grid"].update(n_cells="ten"), "grid.n_cells"),
    (lambda d: d["kernels"]["coagulation"].update(family="nope"), "kernels.coagulation"),
])
def test_config_errors_name_the_field(mutate, field):
    data = json.loads(json.dumps(SMALL))
    mutate(data)
    with pytest.raises(ConfigError) as exc:
        cfg = parse_config(json.dumps(data))
        cfg.build_kernels()
    assert str(exc.value).startswith(field)


def test_invalid_json_is_config_error():
    with pytest.raises(ConfigError):
        parse_config("{not json")


def test_cli_run_writes_outputs(small_config, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(small_config), "--out", str(out), "--threads", "1"]) == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0].startswith("# manifest=manifest.json config_hash=")
    header = next(csv.reader([lines[1]]))
    assert header[:8] == ["t", "M_minus_omega", "M0", "M1", "M2", "mass_drift",
                          "overflow_mass", "dt"]
    assert "M_xi=0.5" in header
    assert len(lines) == 2 + 3
    assert len(list((out / "snapshots").glob("snapshot_*.csv"))) == 3
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_hash"] in lines[0]
    assert "threads" not in json.dumps(manifest)


def test_cli_threads_do_not_change_bytes(small_config, tmp_path):
    for n in (1, 4):
        assert main(["run", "--config", str(small_config), "--out", str(tmp_path / f"t{n}"),
                     "--threads", str(n)]) == 0
    for name in ("trajectory.csv", "envelopes.csv", "snapshots/snapshot_0002.csv"):
        assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t4" / name).read_bytes()


def test_cli_exit_codes(small_config, tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({**SMALL, "grid": {"x_min": -1, "x_max": 1, "n_cells": 3}}))
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "b")]) == 2
    assert "grid.x_min" in capsys.readouterr().err
    assert main(["run", "--config", str(small_config), "--threads", "0"]) == 2


def test_cli_check_kernels_exit_codes(configs_dir, tmp_path):
    assert main(["check-kernels", "--config", str(configs_dir / "mass_conservation.json")]) == 0
    understated = {**SMALL, "kernels": {**SMALL["kernels"],
                                        "coagulation": {"family": "constant", "k": 5.0, "k1": 1.0}}}
    path = tmp_path / "under.json"
    path.write_text(json.dumps(understated))
    assert main(["check-kernels", "--config", str(path)]) == 1


def test_cli_compare_identical_is_zero(small_config, tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(small_config), "--config", str(small_config),
                 "--out", str(out), "--theta", "0.25"]) == 0
    rows = list(csv.reader((out / "compare.csv").read_text().splitlines()[2:]))
    assert all(float(r[1]) == 0.0 for r in rows)


def test_cli_envelopes_and_convergence(small_config, tmp_path):
    assert main(["envelopes", "--config", str(small_config)]) == 0
    assert main(["convergence", "--config", str(small_config), "--n-list", "2,4,8",
                 "--out", str(tmp_path / "conv")]) in (0, 1)


def test_cli_run_flags_mass_violation(tmp_path):
    tight = {**SMALL, "analysis": {"mass_tol": 0.0},
             "time": {"t_end": 0.2, "sample_count": 3, "positivity_mode": "clip_and_report"},
             "truncation": {"n": 20.0}}
    path = tmp_path / "tight.json"
    path.write_text(json.dumps(tight))
    code = main(["run", "--config", str(path), "--out", str(tmp_path / "o")])
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert code == (0 if manifest["mass_conservation"]["passed"] else 1)


def test_cli_compare_mismatched_grids(small_config, tmp_path):
    other = tmp_path / "other.json"
    other.write_text(json.dumps({**SMALL, "grid": {"x_min": 0.05, "x_max": 20.0, "n_cells": 11}}))
    assert main(["compare", "--config", str(small_config), "--config", str(other),
                 "--out", str(tmp_path / "c")]) == 2
