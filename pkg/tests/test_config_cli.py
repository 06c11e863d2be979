import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from shubin_lab.cli import main
from shubin_lab.config import ConfigError, config_from_text, parse_grid, validate_text

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SPECTRUM = """
[experiment]
kind = spectrum
[operator]
k = 1
m = 1
n = 48
"""


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


# parsing and validation ---------------------------------------------------------

def test_grid_forms():
    np.testing.assert_array_equal(parse_grid("1, 2.5, 4"), [1, 2.5, 4])
    np.testing.assert_allclose(parse_grid("linspace(0, 1, 5)"), np.linspace(0, 1, 5))
    np.testing.assert_allclose(parse_grid("geomspace(0.05, 2, 12)"), np.geomspace(0.05, 2, 12))
    for bad in ("", "geomspace(0, 1, 3)", "linspace(0, 1, 0)", "1, x"):
        with pytest.raises(ValueError):
            parse_grid(bad)


def test_defaults_fill_in():
    cfg = config_from_text(SPECTRUM)
    assert cfg.operator == {"k": 1, "m": 1, "s": 1.0, "n": 48}
    assert cfg.tolerances["residual"] == 1e-6 and cfg.seed == 0
    json.dumps(cfg.echo())


@pytest.mark.parametrize("patch,field,kind", [
    ("k = 0", "operator.k", "range"),
    ("k = two", "operator.k", "type"),
    ("colour = red", "operator.colour", "unknown-key"),
])
def test_single_issue(patch, field, kind):
    issues = validate_text(SPECTRUM.replace("k = 1", patch))
    assert [(i.field, i.kind) for i in issues] == [(field, kind)]


def test_delta_out_of_range_and_missing_kind_reported_together():
    text = "[region]\nname = omega_delta\ndelta = 1.5\n[operator]\nm = 0\n[bogus]\nx = 1\n"
    got = {(i.field, i.kind) for i in validate_text(text)}
    assert got == {("region.delta", "range"), ("operator.m", "range"), ("[bogus]", "unknown-key"),
                   ("experiment.kind", "required")}
    with pytest.raises(ConfigError) as info:
        config_from_text(text)
    assert len(info.value.issues) == 4


def test_cross_field_rules():
    base = "[experiment]\nkind = {kind}\n[region]\n{region}\n"
    assert validate_text(base.format(kind="constant_sweep", region="name = interval\na = 1\nb = 0"))[0].field == "region.b"
    assert validate_text(base.format(kind="control", region="name = cone\ntheta = 0.3"))[0].field == "region.name"
    assert validate_text(base.format(kind="spectrum", region="name = omega_delta\ndelta = 1"))[0].kind == "range"


def test_bad_ini_syntax():
    issues = validate_text("kind = spectrum\n")
    assert issues and issues[0].kind == "parse"


def test_shipped_configs_validate():
    for p in sorted(CONFIGS.glob("*.ini")):
        assert validate_text(p.read_text()) == [], p.name


# command line -------------------------------------------------------------------

def test_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    for kind in ("spectrum", "constant_sweep", "control", "cost_blowup"):
        assert kind in out


def test_validate_exit_codes(tmp_path, capsys):
    assert main(["validate", str(write(tmp_path, SPECTRUM))]) == 0
    assert main(["validate", str(write(tmp_path, SPECTRUM.replace("n = 48", "n = 2")))]) == 2
    assert "operator.n" in capsys.readouterr().out
    assert main(["validate", str(tmp_path / "missing.ini")]) == 2
    assert main(["frobnicate"]) == 2


def test_run_spectrum_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["run", str(write(tmp_path, SPECTRUM)), "--out", str(out)]) == 0
    with open(out / "eigenvalues.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    reliable = [float(r["lambda"]) for r in rows if r["reliable"] == "1"]
    np.testing.assert_allclose(reliable, 2 * np.arange(len(reliable)) + 1, atol=1e-9)
    assert b"\r\n" not in (out / "eigenvalues.csv").read_bytes()
    man = json.loads((out / "manifest.json").read_text())
    listed = {f["path"] for f in man["files"]}
    on_disk = {p.name for p in out.iterdir()} - {"manifest.json"}
    assert listed == on_disk
    assert man["reliability_index"] == len(reliable) - 1
    assert man["config"]["operator"]["n"] == 48


def test_rerun_is_byte_identical(tmp_path):
    cfg = write(tmp_path, "[experiment]\nkind = constant_sweep\n[operator]\nk = 2\nm = 2\nn = 128\n"
                          "[region]\nname = omega_zero\n")
    hashes = []
    for tag in "ab":
        assert main(["run", str(cfg), "--out", str(tmp_path / tag)]) == 0
        man = json.loads((tmp_path / tag / "manifest.json").read_text())
        hashes.append({f["path"]: f["sha256"] for f in man["files"]})
    assert hashes[0] == hashes[1]
    with open(tmp_path / "a" / "constants.csv", newline="") as fh:
        C = [float(r["C"]) for r in csv.DictReader(fh)]
    assert np.all(np.diff(C) >= -1e-12 * np.abs(C[1:]))  # equal subspaces may differ by one ulp


def test_seed_override(tmp_path):
    cfg = write(tmp_path, "[experiment]\nkind = control\nseed = 1\n[operator]\nk = 2\nm = 2\nn = 128\n"
                          "[region]\nname = omega_zero\n[grids]\nT = 1\nn_control = 8\nn_probes = 1\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "a"), "--seed", "77"]) == 0
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["config"]["seed"] == 77
    assert main(["run", str(cfg), "--out", str(tmp_path / "b"), "--seed", str(2 ** 64)]) == 2


def test_fail_and_numerical_exit_codes(tmp_path):
    fail = write(tmp_path, "[experiment]\nkind = cost_blowup\n[operator]\nk = 1\nm = 1\ns = 2\nn = 128\n"
                           "[region]\nname = half_line\n[grids]\nT = geomspace(0.05, 2, 8)\nn_control = 8\n"
                           "[tolerances]\nr2_min = 0.999\n", "fail.ini")
    assert main(["run", str(fail), "--out", str(tmp_path / "f")]) == 1
    bad = write(tmp_path, "[experiment]\nkind = control\n[operator]\nk = 1\nm = 1\nn = 128\n"
                          "[region]\nname = half_line\n[grids]\nT = 0.01\nn_control = 40\nn_probes = 1\n", "bad.ini")
    assert main(["run", str(bad), "--out", str(tmp_path / "b")]) == 3


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "shubin_lab", "list-experiments"], capture_output=True, text=True)
    assert proc.returncode == 0 and "bernstein" in proc.stdout
