import shutil
import subprocess
import sys

import numpy as np
import pytest
import yaml

from guidedmodes.cli import fmt, main, run
from guidedmodes.config import load_config

from conftest import CONFIGS, GOLDEN


def read_csv(path):
    lines = path.read_text().split("\n")
    assert lines[-1] == ""
    return lines[0].split(","), [list(map(float, l.split(","))) for l in lines[1:-1]]


def test_float_format_round_trips():
    for v in (np.pi, 1e-300, -2.5e17, 0.1, 4.3312630351827845):
        assert float(fmt(v)) == v
    assert fmt(3) == "3" and fmt(np.int64(7)) == "7"


def test_bands_on_free_space(tmp_path):
    assert run("bands", CONFIGS / "free_space_eps4.yaml", tmp_path) == 0
    head, rows = read_csv(tmp_path / "bands.csv")
    assert head == ["k", "s", "lambda"]
    rows = np.array(rows)
    for k in np.unique(rows[:, 0])[::8]:
        n, m = np.meshgrid(np.arange(-4, 5), np.arange(-4, 5))
        want = np.sort(((2 * np.pi * n + 0.5) ** 2 + (2 * np.pi * m + k) ** 2).ravel() / 4.0)[:10]
        assert np.allclose(np.sort(rows[rows[:, 0] == k, 2]), want, rtol=1e-12)
    man = (tmp_path / "manifest.txt").read_text()
    assert "config_sha256: " in man and "version: 0.1.0" in man and "wall_time_s: " in man


def test_gaps_and_touchpoints_match_golden(tmp_path):
    assert run("gaps", CONFIGS / "layered_positive.yaml", tmp_path) == 0
    for name in ("gaps.csv", "touchpoints.csv"):
        assert (tmp_path / name).read_bytes() == (GOLDEN / "layered_positive" / name).read_bytes()


def test_repeated_runs_are_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run("bands", CONFIGS / "square_inclusion.yaml", tmp_path / d) == 0
    assert (tmp_path / "a" / "bands.csv").read_bytes() == (tmp_path / "b" / "bands.csv").read_bytes()


def test_malformed_config_exits_2(tmp_path, capsys):
    assert run("bands", CONFIGS / "malformed.yaml", tmp_path) == 2
    assert "inf eps0" in capsys.readouterr().err


@pytest.mark.parametrize("patch, needle", [
    ({"bogus": 1}, "bogus"),
    ({"solver": {"J": 64}}, "J must be odd"),
    ({"solver": {"N": [1, 2, 3]}}, "solver/N"),
    ({"supercell": {"Ng": 8}}, "supercell/Ng"),
    ({"solver": {"kx": 4.0}}, "kx"),
    ({"profile": {"background": 1.0, "colour": "red"}}, "colour"),
])
def test_schema_violations_exit_2(tmp_path, capsys, patch, needle):
    data = yaml.safe_load((CONFIGS / "layered_positive.yaml").read_text())
    for key, val in patch.items():
        if isinstance(val, dict) and key in data:
            data[key] = {**data[key], **val} if key != "profile" else val
        else:
            data[key] = val
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(data))
    assert run("bands", path, tmp_path / "out") == 2
    assert needle in capsys.readouterr().err


def test_missing_gap_exits_3(tmp_path, capsys):
    data = yaml.safe_load((CONFIGS / "free_space_eps1.yaml").read_text())
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(data))
    assert run("modes", path, tmp_path / "out") == 3
    assert "no gap" in capsys.readouterr().err
    assert "status: 3" in (tmp_path / "out" / "manifest.txt").read_text()


def test_every_shipped_config_validates():
    for path in CONFIGS.glob("*.yaml"):
        if path.name == "malformed.yaml":
            continue
        assert load_config(path).profile.background > 0


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "guidedmodes", "bands", str(CONFIGS / "free_space_eps1.yaml"),
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "bands.csv").exists()
    with pytest.raises(SystemExit) as exc:
        main(["nonsense", "x.yaml"])
    assert exc.value.code == 2
