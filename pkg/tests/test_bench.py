import csv
import hashlib
import json
import math
import os
import re
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from lts0.bench import cli
from lts0.bench.grid import (
    CSV_HEADER,
    ExperimentConfig,
    ResultRow,
    compare_trajectories,
    emit_csv,
    emit_norms_csv,
    run_grid,
    run_trial,
    zigzag_profile,
)
from lts0.bench.svg import cell_summary, emit_svg, emit_trace_svg
from lts0.errors import EmptyInput, IllConditioned, IoError

ROOT = Path(__file__).resolve().parents[1]
SMOKE = ROOT / "configs" / "smoke.toml"


def _row(method="lts0", n=8, sigma_w=0.0, seed=0, steps=20, stable=True):
    return ResultRow(method, n, 3, sigma_w, seed, steps, 10, 2, 3, 0.5, 12.5, stable, 0)


FIXED_ROWS = [
    _row(n=n, seed=s, steps=10 + n // 4 + s, sigma_w=w)
    for n in (8, 16, 32) for s in range(3) for w in (0.0, 0.1)
] + [_row("baseline", n=n, seed=0, steps=n + 3) for n in (8, 16, 32)]

# sha256 of emit_svg(FIXED_ROWS); changes only when the plot layout changes
SVG_SHA256 = "ffac797aecbf2737683ce75844eb15477bca2f81a80f3df52e6ec4254fe28d01"


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# config


def test_config_defaults_and_roundtrip():
    c = ExperimentConfig()
    assert c.n_grid == (8, 16, 32, 64, 128) and c.sigma_w_grid == (0.0, 0.01, 0.1)
    assert c.trials_per_cell == 30 and c.k == 3 and c.adaptive
    assert ExperimentConfig.from_dict(c.to_dict()) == c


@pytest.mark.parametrize("bad", [
    {"n_grid": []}, {"n_grid": [2]}, {"sigma_w_grid": [-0.1]}, {"trials_per_cell": 0},
    {"methods": ["lqr"]}, {"retry_factor": 0}, {"workers": 0}, {"unknown_key": 1},
])
def test_config_validation(bad):
    with pytest.raises((ValueError, TypeError)):
        ExperimentConfig.from_dict({**ExperimentConfig().to_dict(), **bad})


def test_load_config_toml_json_and_seed_override(tmp_path):
    c = cli.load_config(SMOKE, env={})
    assert c.n_grid == (4,) and c.methods == ("lts0", "baseline")
    assert cli.load_config(SMOKE, env={"LTS0_SEED": "7"}).base_seed == 7
    j = tmp_path / "c.json"
    j.write_text(json.dumps({"n_grid": [8], "trials_per_cell": 2}))
    assert cli.load_config(j, env={}).trials_per_cell == 2
    with pytest.raises(IoError):
        cli.load_config(tmp_path / "missing.toml", env={})


# rows and CSV


def test_csv_header_and_rows(tmp_path):
    emit_csv(FIXED_ROWS, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == len(FIXED_ROWS) + 1
    rec = next(csv.DictReader(lines))
    assert rec["stable"] == "true" and rec["method"] == "lts0" and float(rec["rho_closed"]) == 0.5


def test_csv_empty_rejected(tmp_path):
    with pytest.raises(EmptyInput):
        emit_csv([], tmp_path / "r.csv")
    with pytest.raises(EmptyInput):
        emit_svg([], tmp_path / "r.svg")
    with pytest.raises(EmptyInput):
        emit_norms_csv({}, tmp_path / "n.csv")


def test_csv_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(IoError):
        emit_csv(FIXED_ROWS, blocker / "sub" / "r.csv")


def test_run_trial_row():
    config = ExperimentConfig(n_grid=(8,), sigma_w_grid=(0.0,), trials_per_cell=1)
    out = run_trial("lts0", 8, 0.0, 0, config)
    r = out.row
    assert (r.method, r.n, r.k, r.seed) == ("lts0", 8, 3, 0)
    assert r.steps_used == out.model.steps_used == r.t0 + 3 * (1 + r.tau) + r.omega_total
    assert r.stable == (r.rho_closed < 1)
    assert r.max_state_norm == pytest.approx(float(np.max(out.trajectory.norms())))


def test_run_trial_reraises_resample_error():
    config = ExperimentConfig(n_grid=(8,), sigma_w_grid=(0.0,), trials_per_cell=1,
                              adaptive=False, params={"t0": 200})
    with pytest.raises(IllConditioned):
        run_trial("lts0", 8, 0.0, 0, config)


def test_grid_retained_rows_and_sort():
    config = ExperimentConfig(n_grid=(4, 8), sigma_w_grid=(0.0,), trials_per_cell=3,
                              methods=("lts0", "baseline"))
    result = run_grid(config)
    assert not result.failed_cells
    assert len(result) == 2 * 2 * 3
    keys = [r.sort_key() for r in result]
    assert keys == sorted(keys)
    for method in ("lts0", "baseline"):
        for n in (4, 8):
            seeds = [r.seed for r in result if r.method == method and r.n == n]
            assert len(seeds) == 3 and seeds == sorted(set(seeds))
    assert all(r.t0 == 0 and r.omega_total == 0 for r in result if r.method == "baseline")


def test_grid_workers_match_serial():
    base = dict(n_grid=(4, 8), sigma_w_grid=(0.0, 0.01), trials_per_cell=2)
    a = run_grid(ExperimentConfig(**base))
    b = run_grid(ExperimentConfig(**base, workers=2))
    assert [r.csv_fields() for r in a] == [r.csv_fields() for r in b]


def test_grid_budget_exhaustion_reported():
    config = ExperimentConfig(n_grid=(8,), sigma_w_grid=(0.0,), trials_per_cell=2, retry_factor=1,
                              adaptive=False, params={"t0": 200})
    result = run_grid(config)
    assert len(result) == 0 and result.failed_cells == [("lts0", 8, 0.0)]


# SVG


def test_cell_summary_quartiles():
    s = cell_summary(FIXED_ROWS)
    n, q25, med, q75 = s[("lts0", 0.0)][0]
    assert n == 8 and med == 13.0 and q25 == 12.5 and q75 == 13.5


def test_svg_deterministic_and_golden(tmp_path):
    emit_svg(FIXED_ROWS, tmp_path / "a.svg")
    emit_svg(list(reversed(FIXED_ROWS)), tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    text = (tmp_path / "a.svg").read_text()
    assert text.startswith("<svg") and text.rstrip().endswith("</svg>")
    assert text.count("<polyline") == 3 and text.count("<polygon") == 3
    if SVG_SHA256 is not None:
        assert _sha(tmp_path / "a.svg") == SVG_SHA256


def test_svg_skips_infinite_values(tmp_path):
    rows = [_row(n=8), ResultRow("lts0", 16, 3, 0.0, 0, 20, 10, 2, 3, math.inf, math.inf, False, 0)]
    emit_svg(rows, tmp_path / "rho.svg", value="rho_closed")
    text = (tmp_path / "rho.svg").read_text()
    assert not re.search(r"\b(nan|inf)\b", text)


# compare and zig-zag


def test_compare_toy_has_both_series(tmp_path):
    a, b, series = compare_trajectories(8, 0)
    assert set(series) == {"lts0", "baseline"}
    assert a.method == "lts0" and b.method == "baseline" and a.n == b.n == 8
    for method, (norms, phases) in series.items():
        assert len(norms) == len(phases) + 1
        assert "controlled" in phases
    emit_norms_csv(series, tmp_path / "n.csv")
    emit_trace_svg(series, tmp_path / "n.svg")
    rows = list(csv.DictReader((tmp_path / "n.csv").read_text().splitlines()))
    assert {r["method"] for r in rows} == {"lts0", "baseline"}


def test_zigzag_tau1_is_monotone_free():
    z = zigzag_profile([8.0, 4.0, 2.0, 1.0, 0.5], 0, 1)
    assert not z["within_nonmonotone"]
    assert z["boundary_decreasing"] == 1.0
    assert z["boundary_log_slope"] == pytest.approx(-math.log10(2))


def test_zigzag_detects_growth_inside_hop():
    # controlled at 0 and 3: norms dip, grow during the open-loop steps, then drop
    z = zigzag_profile([10.0, 1.0, 2.0, 4.0, 0.5, 1.0, 2.0], 0, 3)
    assert z["within_nonmonotone"]
    assert z["boundary_decreasing"] == 1.0


# CLI


def test_cli_gen_run_certify(tmp_path, capsys):
    assert cli.main(["gen", "--n", "8", "--seed", "1", "--out", str(tmp_path / "s.json")]) == 0
    assert json.loads((tmp_path / "s.json").read_text())["n"] == 8
    rc = cli.main(["run", "--n", "8", "--adaptive", "--out", str(tmp_path / "t.csv"),
                   "--system-out", str(tmp_path / "sys.json"), "--model-out", str(tmp_path / "m.json")])
    assert rc == 0
    row = json.loads(capsys.readouterr().out)
    assert row["method"] == "lts0" and row["n"] == 8
    rc = cli.main(["certify", "--system", str(tmp_path / "sys.json"), "--model", str(tmp_path / "m.json"),
                   "--constraints", "--t0", str(row["t0"]), "--out", str(tmp_path / "c.json")])
    assert rc == 0
    rep = json.loads((tmp_path / "c.json").read_text())
    assert rep["stability"]["stable"] == row["stable"]
    assert rep["hat_L"]["rho_closed"] == pytest.approx(row["rho_closed"], rel=1e-9)
    assert "tau_floors" in rep["constraints"]


def test_cli_run_requires_t0():
    with pytest.raises(SystemExit):
        cli.main(["run", "--n", "8"])


def test_cli_lts0_error_exit_code(tmp_path, capsys):
    assert cli.main(["run", "--n", "8", "--t0", "300"]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_bench_smoke(tmp_path, monkeypatch):
    monkeypatch.setenv("LTS0_SEED", "3")
    assert cli.main(["bench", str(SMOKE), "--output-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "results.csv").read_text().splitlines()
    assert lines[0] == CSV_HEADER and len(lines) == 3
    assert all(line.split(",")[4] >= "3" for line in lines[1:])
    assert (tmp_path / "steps.svg").exists()


def test_cli_compare(tmp_path, capsys):
    assert cli.main(["compare", "--n", "8", "--output-dir", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"lts0", "baseline", "lts0_zigzag"}
    for name in ("compare.csv", "norms.csv", "norms.svg"):
        assert (tmp_path / name).stat().st_size > 0


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "lts0", "gen", "--n", "4"], capture_output=True, text=True,
                       env={**os.environ, "LTS0_DISABLE_NUMBA": "1"})
    assert r.returncode == 0, r.stderr
    assert json.loads(r.stdout)["n"] == 4
