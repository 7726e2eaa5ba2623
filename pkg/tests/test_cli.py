import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from wavelab.cli import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, REGISTRY, config_schema, list_experiments, main

ROOT = Path(__file__).resolve().parents[1]

WS_SMALL = """
experiment = "weighted-strichartz-1"
seed = 3

[grid]
kind = "radial"
L = 256.0
n = 4096

[family]
profile = "shifted-bump"
count = 2

[params]
beta1 = 0.5
beta2 = 0.6
p = 4.0
r = 4.0
t = 20.0

[sweep]
k = [0]
"family.radius" = [0.0, 2.0]
"""

HUYGENS = """
experiment = "huygens"

[grid]
kind = "radial"
L = 32.0
n = 4096

[family]
profile = "shifted-bump"
count = 2
bump_radius = 0.5

[params]
t = 10.0
margin = 0.5

[acceptance]
column = "sup"
max = {limit}
"""


def _write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def _run(tmp_path, text, out="out"):
    cfg = _write(tmp_path, text)
    status = main(["run", cfg, "--out", str(tmp_path / out)])
    return status, tmp_path / out


class TestCatalog:
    def test_stable(self, capsys):
        main(["list", "--json"])
        a = capsys.readouterr().out
        main(["list", "--json"])
        assert capsys.readouterr().out == a
        ids = [e["id"] for e in json.loads(a)]
        assert len(ids) == len(set(ids))

    def test_contents(self):
        ids = {i for i, _, _ in list_experiments()}
        for need in ("kernel-sweep", "lowfreq-kernel", "lowfreq-inverse-square-kernel", "dispersive",
                     "strichartz", "strichartz-endpoint", "strichartz-endpoint-inverse",
                     "weighted-strichartz-1", "weighted-strichartz-2", "technical-lemma", "a2-weight",
                     "preset-relativistic-membrane", "preset-wave-maps-cubic", "lifespan"):
            assert need in ids

    def test_one_operation_each(self):
        for exp in REGISTRY.values():
            assert isinstance(exp.operation, str) and exp.operation
            assert callable(exp.runner)

    def test_schema_file_in_sync(self):
        on_disk = json.loads((ROOT / "configs" / "schema.json").read_text())
        assert on_disk == json.loads(json.dumps(config_schema()))

    def test_shipped_configs_validate(self, capsys):
        for p in sorted((ROOT / "configs").glob("*.toml")):
            status = main(["validate", str(p)])
            assert status == (EXIT_CONFIG if p.stem.endswith("_bad") else EXIT_OK), p.name


class TestRun:
    def test_kernel_columns(self, tmp_path):
        status, out = _run(tmp_path, """
experiment = "kernel-sweep"
[params]
k = 0
t_min = 1.0
t_max = 10.0
t_count = 4
""")
        assert status == EXIT_OK
        with open(out / "results.csv") as fh:
            header = next(csv.reader(fh))
        assert header == ["k", "iota", "M", "t", "r", "regime", "abs_value", "envelope", "ratio", "quad_err"]
        for name in ("results.csv", "summary.json", "manifest.json"):
            assert (out / name).exists()

    def test_deterministic(self, tmp_path):
        a_status, a = _run(tmp_path, WS_SMALL, "a")
        b_status, b = _run(tmp_path, WS_SMALL, "b")
        assert a_status == b_status == EXIT_OK
        for name in ("results.csv", "summary.json", "manifest.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_workers_do_not_change_output(self, tmp_path, monkeypatch):
        _, a = _run(tmp_path, WS_SMALL, "serial")
        monkeypatch.setenv("WAVELAB_WORKERS", "2")
        _, b = _run(tmp_path, WS_SMALL, "pool")
        assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()

    def test_manifest_round_trip(self, tmp_path):
        _, a = _run(tmp_path, WS_SMALL, "first")
        status = main(["run", str(a / "manifest.json"), "--out", str(tmp_path / "again")])
        assert status == EXIT_OK
        for name in ("results.csv", "summary.json", "manifest.json"):
            assert (a / name).read_bytes() == (tmp_path / "again" / name).read_bytes()

    def test_manifest_contents(self, tmp_path):
        _, a = _run(tmp_path, WS_SMALL)
        m = json.loads((a / "manifest.json").read_text())
        assert set(m["versions"]) == {"wavelab", "numpy", "scipy", "python"}
        assert m["config"]["experiment"] == "weighted-strichartz-1"
        assert m["validity"]["flagged_rows"] == 0

    def test_hypothesis_rejected(self, tmp_path, capsys):
        text = WS_SMALL.replace("beta1 = 0.5", "beta1 = 0.8").replace("beta2 = 0.6", "beta2 = 1.1")
        status, out = _run(tmp_path, text)
        err = capsys.readouterr().err
        assert status == EXIT_CONFIG
        assert "β₂ < min{3β₁/2, 1}" in err
        assert "cfg.toml:14: params" in err
        assert not (out / "results.csv").exists()

    def test_field_error_has_line(self, tmp_path, capsys):
        status, _ = _run(tmp_path, WS_SMALL.replace("L = 256.0", "L = -1.0"))
        err = capsys.readouterr().err
        assert status == EXIT_CONFIG and "grid.L" in err and "cfg.toml:7:" in err

    def test_toml_syntax_error(self, tmp_path, capsys):
        status, _ = _run(tmp_path, "experiment = \n")
        assert status == EXIT_CONFIG and capsys.readouterr().err

    def test_unknown_experiment(self, tmp_path, capsys):
        status, _ = _run(tmp_path, 'experiment = "nope"\n')
        assert status == EXIT_CONFIG and "nope" in capsys.readouterr().err

    def test_flagged_rows_listed(self, tmp_path):
        # the box is too small for the light cone: every report carries a wraparound flag
        status, out = _run(tmp_path, """
experiment = "dispersive"
[grid]
kind = "radial"
L = 32.0
n = 512
[family]
profile = "gaussian-bump"
count = 2
[params]
k = 0
t_max = 50.0
""")
        summary = json.loads((out / "summary.json").read_text())
        assert status == EXIT_NUMERICAL
        assert summary["valid_rows"] == 0 and summary["flagged"]
        assert "wraparound" in summary["flagged"][0]["flags"]

    def test_acceptance_exit_codes(self, tmp_path):
        assert _run(tmp_path, HUYGENS.format(limit="1e-3"), "pass")[0] == EXIT_OK
        status, out = _run(tmp_path, HUYGENS.format(limit="1e-30"), "fail")
        assert status == EXIT_ACCEPTANCE
        assert json.loads((out / "summary.json").read_text())["acceptance"]["passed"] is False

    def test_validate_verb(self, tmp_path, capsys):
        cfg = _write(tmp_path, WS_SMALL)
        assert main(["validate", cfg]) == EXIT_OK
        assert "2 sweep points" in capsys.readouterr().out

    def test_console_script(self, tmp_path):
        res = subprocess.run([sys.executable, "-m", "wavelab.cli", "list"], capture_output=True, text=True)
        assert res.returncode == 0 and "kernel-sweep" in res.stdout
