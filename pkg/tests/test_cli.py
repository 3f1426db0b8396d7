import csv
import io
import json
from pathlib import Path

import pytest

from patchmg.bench import BENCH_COLUMNS, TRAFFIC_COLUMNS, RunSpec, run_traffic
from patchmg.cli import main, read_config

GOLDEN = Path(__file__).parent / "golden"


def _json_keys(obj, prefix=""):
    keys = []
    for k, v in obj.items():
        keys.append(prefix + k)
        if isinstance(v, dict):
            keys += _json_keys(v, prefix + k + ".")
    return keys


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_dry_run_reports_problem_size(capsys):
    code, out, _ = _run(["solve", "--dim", "2", "--degree", "3", "--level", "10", "--dry-run"], capsys)
    assert code == 0
    assert json.loads(out)["dofs"] == 37_761_025


def test_solve_report_schema(capsys, tmp_path):
    target = tmp_path / "solve.json"
    code, _, _ = _run(["solve", "--degree", "2", "--level", "2", "--reps", "3",
                       "--tol", "1e-12", "--out", str(target)], capsys)
    assert code == 0
    rep = json.loads(target.read_text())
    assert rep["tol"] == 1e-12
    assert '"tol": 1e-12' in target.read_text()
    assert len(rep["solve_seconds"]["samples"]) == 3
    assert rep["solve_seconds"]["mean"] == pytest.approx(sum(rep["solve_seconds"]["samples"]) / 3)
    golden = (GOLDEN / "solve_keys.txt").read_text().split()
    assert sorted(_json_keys(rep)) == sorted(golden)


def test_solve_nonconvergence_exit_status(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("degree = 2\nlevel = 3\ntol = 1e-30  # unreachable\nreps = 1\n")
    target = tmp_path / "out.json"
    code = main(["solve", "--config", str(cfg), "--out", str(target)])
    assert code == 1
    assert json.loads(target.read_text())["converged"] is False


def test_bench_csv_header_and_counts(capsys):
    code, out, _ = _run(["smoother-bench", "--degree", "2", "--level", "2,3", "--reps", "2",
                         "--variant", "combined,batched"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert tuple(rows[0].keys()) == BENCH_COLUMNS
    assert ",".join(BENCH_COLUMNS) == (GOLDEN / "bench_header.csv").read_text().strip()
    assert len(rows) == 4
    for r in rows:
        level = int(r["level"])
        assert int(r["cell_apply_count"]) == 4 * (2 ** (level + 1) - 1) ** 2
        assert float(r["ratio"]) == pytest.approx(
            float(r["smoother_seconds_mean"]) / float(r["vmult_seconds_mean"]))


def test_traffic_csv(capsys):
    code, out, _ = _run(["traffic", "--degree", "2", "--level", "3", "--variant", "batched",
                         "--batch-size", "1,8", "--ordering", "z_curve,hierarchical",
                         "--cache-lines", "16,64,256,none"], capsys)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert tuple(rows[0].keys()) == TRAFFIC_COLUMNS
    assert ",".join(TRAFFIC_COLUMNS) == (GOLDEN / "traffic_header.csv").read_text().strip()
    assert {r["ordering"] for r in rows} == {"z_curve", "hierarchical"}
    assert len(rows) == 2 * 2 * 4
    for k in range(0, len(rows), 4):
        dpd = [float(r["doubles_per_dof"]) for r in rows[k:k + 4]]
        assert all(a >= b for a, b in zip(dpd, dpd[1:]))


def test_traffic_default_capacity():
    rows = run_traffic([RunSpec(degree=2, level=2)])
    assert rows[0]["capacity"] == max(1, -(-((2 * 8 + 1) ** 2) // 8) // 20)


def test_validate_passes_and_mutation_fails(capsys, tmp_path):
    target = tmp_path / "v.json"
    code, _, err = _run(["validate", "--out", str(target)], capsys)
    assert code == 0
    rep = json.loads(target.read_text())
    assert rep["passed"] and all(s["total"] > 0 for s in rep["suites"].values())
    assert "PASS oracle" in err
    code, _, err = _run(["validate", "--mutate", "sign-flip"], capsys)
    assert code == 1
    assert "FAIL oracle" in err


@pytest.mark.parametrize("argv", [
    ["smoother-bench", "--batch-size", "4"],
    ["smoother-bench", "--threads", "2"],
    ["smoother-bench", "--dim", "4"],
    ["smoother-bench", "--ordering", "hilbert"],
    ["solve", "--level", "2,3"],
    ["traffic", "--cache-lines", "0"],
])
def test_inconsistent_specs_rejected(argv, capsys):
    code, _, err = _run(argv, capsys)
    assert code == 2 and "error" in err


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\ndim = 2\n--degree=2\nlevel = 1\n")
    assert read_config(cfg) == {"dim": "2", "degree": "2", "level": "1"}
    code, out, _ = _run(["solve", "--config", str(cfg), "--level", "4", "--dry-run"], capsys)
    assert json.loads(out)["dofs"] == (2 * 32 + 1) ** 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = red\n")
    with pytest.raises(ValueError):
        read_config(bad)


def test_runspec_round_trip():
    spec = RunSpec(dim=3, degree=5, level=2, variant="batched", batch_size=8, threads=2)
    assert RunSpec(**spec.to_dict()) == spec


def test_deterministic_non_timing_fields(capsys):
    outs = []
    for _ in range(2):
        _, out, _ = _run(["solve", "--degree", "2", "--level", "2", "--reps", "1"], capsys)
        rep = json.loads(out)
        outs.append({k: rep[k] for k in ("dofs", "iterations", "converged", "relative_residual")})
    assert outs[0] == outs[1]
