"""End-to-end runs of the command line driver in temporary directories."""

from __future__ import annotations

import json

import numpy as np
import pytest

from semidirac import Grid2D, Params, assemble_T, read_coordinate_text
from semidirac.cli import (
    ConfigError,
    canonical_text,
    config_hash,
    format_cell,
    main,
    parse_config,
    render_csv,
)

BASE_GRID = {"x_min": -20.0, "x_max": 20.0, "y_max": 20.0, "nx": 81, "ny": 41}


def write_config(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def read_summary(out_dir):
    return json.loads((out_dir / "summary.json").read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# config parsing


def test_canonical_form_is_idempotent():
    cfg = parse_config({"params": {"delta": 1.0}})
    canon = cfg.canonical
    assert canon["potential"] == {"type": "none"}
    assert canon["output"] == {"formats": ["csv", "json"]}
    assert canon["fiber"]["ny"] == 400
    again = parse_config(json.loads(canonical_text(canon)))
    assert canonical_text(again.canonical) == canonical_text(canon)
    assert config_hash(again.canonical) == config_hash(canon)


def test_config_hash_ignores_key_order():
    a = parse_config({"params": {"delta": 2.0}, "grid": BASE_GRID})
    b = parse_config({"grid": dict(reversed(list(BASE_GRID.items()))), "params": {"delta": 2.0}})
    assert config_hash(a.canonical) == config_hash(b.canonical)
    c = parse_config({"params": {"delta": 2.5}})
    assert config_hash(c.canonical) != config_hash(a.canonical)


@pytest.mark.parametrize(
    "doc,fragment",
    [
        ({}, "$.params"),
        ({"params": {"delta": 1.0, "gamma": 2.0}}, "$.params.gamma: unknown key"),
        ({"params": {"delta": -1.0}}, "$.params.delta"),
        ({"params": {"delta": "one"}}, "expected a number"),
        ({"params": {"delta": 1.0}, "grid": {**BASE_GRID, "nx": 2}}, "$.grid: grid too coarse"),
        ({"params": {"delta": 1.0}, "potential": {"type": "well"}}, "$.potential.type"),
        ({"params": {"delta": 1.0}, "potential": {"type": "box", "a": 2.0, "b": 1.0, "value": -1.0}}, "$.potential"),
        ({"params": {"delta": 1.0}, "solver": {"mode": "gap", "tol": 2.0}}, "$.solver.tol"),
        ({"params": {"delta": 1.0}, "solver": {"mode": "gap", "interval": [1.0, -1.0]}}, "$.solver.interval"),
        ({"params": {"delta": 1.0}, "scan": {"axis": "epsilon", "values": [1.0]}}, "$.perturbation"),
        ({"params": {"delta": 1.0}, "scan": {"axis": "convergence", "values": [8.5, 16, 32], "observable": "gap-edge"}}, "$.scan.values"),
        ({"params": {"delta": 1.0}, "output": {"formats": ["csv", "yaml"]}}, "$.output.formats[1]"),
        ({"params": {"delta": 1.0}, "quasimode": {"weyl_ns": [1, 8]}}, "$.quasimode"),
        ({"params": {"delta": 1.0}, "perturbation": {"type": "disk", "amplitude": -1.0, "center": [0.0, 2.0], "radius": 5.0}}, "$.perturbation"),
    ],
)
def test_rejected_configs_point_at_the_offending_key(doc, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(doc)
    assert fragment in str(info.value)


def test_top_level_must_be_object():
    with pytest.raises(ConfigError, match="top level"):
        parse_config([1, 2])


# ---------------------------------------------------------------------------
# serialization rules


def test_format_cell_rules():
    assert format_cell(True) == "true"
    assert format_cell(False) == "false"
    assert format_cell(7) == "7"
    assert format_cell(np.int64(7)) == "7"
    assert format_cell(0.1) == "0.10000000000000001"
    assert format_cell(float("nan")) == "nan"
    assert format_cell(1.0) == "1"
    assert format_cell("gap-edge") == "gap-edge"


def test_render_csv_golden():
    header = ("a", "b")
    rows = [{"a": 1, "b": True}, {"a": 0.5, "b": float("nan")}]
    assert render_csv(header, rows) == "a,b\n1,true\n0.5,nan\n"


# ---------------------------------------------------------------------------
# subcommand runs


def test_spectrum_gap_run_certifies_empty_window(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "params": {"delta": 1.0},
        "grid": BASE_GRID,
        "solver": {"mode": "gap"},
    })
    out = tmp_path / "out"
    assert main(["spectrum", "--config", cfg, "--out", str(out)]) == 0
    printed = capsys.readouterr().out.splitlines()
    assert str(out / "eigenvalues.csv") in printed
    assert str(out / "summary.json") in printed
    summary = read_summary(out)
    assert summary["checks"]["certified"] is True
    assert summary["checks"]["gap_empty"] is True
    assert summary["checks"]["hermitian_exact"] is True
    assert summary["detail"]["in_window_count"] == 0
    csv = (out / "eigenvalues.csv").read_text(encoding="utf-8")
    assert csv == "index,lambda,residual,participation_ratio,y_decay_rate\n"
    assert summary["config"]["solver"]["interval"] == [-0.95, 0.95]


def test_dense_mode_refuses_large_grids(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "params": {"delta": 1.0},
        "grid": BASE_GRID,
        "solver": {"mode": "dense"},
    })
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "$.solver.mode" in err and "dense mode caps" in err


def test_starved_solver_exits_3_with_diagnostics(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "params": {"delta": 2.0},
        "grid": {"x_min": -9.0, "x_max": 14.0, "y_max": 14.0, "nx": 47, "ny": 29},
        "potential": {"type": "box", "a": 1.0, "b": 4.14, "value": -3.0},
        "solver": {"mode": "gap", "max_iter": 1},
    })
    out = tmp_path / "out"
    assert main(["spectrum", "--config", cfg, "--out", str(out)]) == 3
    assert "solver:" in capsys.readouterr().err
    summary = read_summary(out)
    assert summary["checks"]["converged"] is False
    assert "certified" in summary["detail"]["error"]
    assert "history_tail" in summary["detail"]


def test_validate_config_prints_canonical_and_writes_nothing(tmp_path, capsys):
    doc = {"params": {"delta": 1.5}, "solver": {"mode": "gap"}}
    cfg = write_config(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["validate-config", "--config", cfg, "--out", str(out)]) == 0
    echoed = capsys.readouterr().out
    assert echoed == canonical_text(parse_config(doc).canonical)
    assert not out.exists()
    # a nonzero --seed must land in the canonical solver block
    assert main(["validate-config", "--config", cfg, "--out", str(out), "--seed", "7"]) == 0
    assert json.loads(capsys.readouterr().out)["solver"]["seed"] == 7


def test_quasimode_run_coincidence_reference(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "params": {"delta": 1.0},
        "quasimode": {"weyl_ns": [8, 16], "cutoff_ns": [4], "eps_values": [0.1, 3.0]},
    })
    out = tmp_path / "out"
    assert main(["quasimode", "--config", cfg, "--out", str(out)]) == 0
    capsys.readouterr()
    summary = read_summary(out)
    checks = summary["checks"]
    assert checks["weyl_residuals_below_bound"] is True
    assert checks["weyl_slopes_near_inverse_n"] is True
    assert checks["cutoff_first_identity"] is True
    assert checks["cutoff_second_bound_slack"] is True
    assert checks["aeps_negative_below_threshold"] is True
    assert summary["detail"]["eps_threshold"] == pytest.approx(2.0, rel=1e-12)
    lines = (out / "aeps.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "eps,a_eps_paper,a_eps_derived,rel_gap,diverges"
    row = lines[1].split(",")
    assert float(row[0]) == 0.1
    assert float(row[1]) == pytest.approx(-0.38, abs=1e-12)
    assert float(row[2]) == pytest.approx(-0.38, abs=1e-12)
    assert row[4] == "false"
    assert float(lines[2].split(",")[2]) == pytest.approx(6.0, abs=1e-12)


def test_fiber_run_hits_analytic_edges(tmp_path, capsys):
    cfg = write_config(tmp_path, {
        "params": {"delta": 1.0},
        "fiber": {"xi_values": [-1.0, 0.0, 1.0], "ny": 80},
    })
    out = tmp_path / "out"
    assert main(["fiber", "--config", cfg, "--out", str(out)]) == 0
    capsys.readouterr()
    summary = read_summary(out)
    assert summary["checks"]["union_edge_is_delta"] is True
    assert summary["checks"]["edges_within_5pct"] is True
    lines = (out / "fiber.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "xi,edge_analytic,min_abs_lambda,rel_err"
    for line in lines[1:]:
        xi, edge, got, rel = (float(v) for v in line.split(","))
        assert edge == xi * xi + 1.0
        assert rel < 1e-10


def scan_doc():
    return {
        "params": {"delta": 2.0},
        "grid": {"x_min": -9.0, "x_max": 14.0, "y_max": 14.0, "nx": 47, "ny": 29},
        "scan": {"axis": "potential", "values": [-3.0, 0.0], "a": 1.0, "b": 1.0 + float(np.pi)},
    }


def test_scan_run_with_fiber_cross_check(tmp_path, capsys):
    cfg = write_config(tmp_path, scan_doc())
    out = tmp_path / "out"
    assert main(["scan", "--config", cfg, "--out", str(out)]) == 0
    capsys.readouterr()
    summary = read_summary(out)
    assert summary["checks"]["all_agree"] is True
    assert summary["checks"]["fiber_cross_check"] is True
    cross = summary["detail"]["fiber_cross_check"]
    assert cross["union_edge"] == 2.0
    assert cross["rel_err"] < 0.05
    lines = (out / "scan.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "axis_value,predicted,observed_count,min_abs_lambda,min_participation,agreement"
    assert lines[1].startswith("-3,true,22,")
    assert lines[2].startswith("0,false,0,nan,nan,true")


def test_scan_reruns_are_byte_identical(tmp_path, capsys):
    cfg = write_config(tmp_path, scan_doc())
    outs = []
    for name, threads in (("a", 1), ("b", 1), ("c", 2)):
        out = tmp_path / name
        code = main(["scan", "--config", cfg, "--out", str(out), "--threads", str(threads)])
        assert code == 0
        outs.append((out / "scan.csv").read_bytes())
    capsys.readouterr()
    assert outs[0] == outs[1]
    assert outs[0] == outs[2]


def test_export_matrix_roundtrip(tmp_path, capsys):
    grid = {"x_min": -3.0, "x_max": 3.0, "y_max": 3.0, "nx": 13, "ny": 9}
    cfg = write_config(tmp_path, {"params": {"delta": 1.0}, "grid": grid})
    out = tmp_path / "out"
    assert main(["export-matrix", "--config", cfg, "--out", str(out)]) == 0
    capsys.readouterr()
    summary = read_summary(out)
    assert summary["detail"]["operator"] == "T"
    assert summary["checks"]["hermitian_exact"] is True
    M = read_coordinate_text((out / "matrix.txt").read_text(encoding="utf-8"))
    T = assemble_T(Grid2D(-3.0, 3.0, 3.0, 13, 9), Params(1.0))
    assert abs(M - T.matrix).max() == 0.0


# ---------------------------------------------------------------------------
# driver level failures


def test_missing_config_file(tmp_path, capsys):
    assert main(["spectrum", "--config", str(tmp_path / "nope.json")]) == 2
    assert "config:" in capsys.readouterr().err


def test_malformed_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json", encoding="utf-8")
    assert main(["spectrum", "--config", str(path)]) == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_bad_flags(tmp_path, capsys):
    cfg = write_config(tmp_path, {"params": {"delta": 1.0}})
    assert main(["validate-config", "--config", cfg, "--seed", "-1"]) == 2
    assert main(["validate-config", "--config", cfg, "--threads", "0"]) == 2
    err = capsys.readouterr().err
    assert "--seed" in err and "--threads" in err


def test_spectrum_without_solver_block(tmp_path, capsys):
    cfg = write_config(tmp_path, {"params": {"delta": 1.0}, "grid": BASE_GRID})
    assert main(["spectrum", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "$.solver" in capsys.readouterr().err
