import csv
import dataclasses
import json
import math

import pytest

from artifact.cli import main
from artifact.pipeline import (ConfigError, RunConfig, StageError, default_config, parse_config, solve,
                               validate, verify)
from artifact.problem import worked_example_problem


def small_config_dict() -> dict:
    d = default_config().to_dict()
    return {
        "problem": d["problem"],
        "grids": {"r_max": 30.0, "h_fine": 0.25, "fine_until": 1.0, "growth": 1.3, "h_max": 3.0,
                  "nodes_per_panel": 12, "freq_step": 0.4},
        "ladder": {"arc_nodes": 6, "arc_radial_nodes": 8},
        "residual": {"eps_offsets_deg": [0.0], "eps_abs": [0.65], "points": [[0.6, 0.0, 0.2, 0.1]]},
    }


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("small")
    cfg = RunConfig.from_dict(small_config_dict())
    res = solve(cfg, out)
    return cfg, out, res


def test_config_roundtrip():
    cfg = default_config()
    back = parse_config(cfg.to_json())
    assert back.to_dict() == cfg.to_dict()
    assert back.digest() == cfg.digest()
    assert back.problem == worked_example_problem()


def test_digest_ignores_threads_only():
    a = default_config()
    b = dataclasses.replace(a, threads=8)
    c = dataclasses.replace(a, seed=1)
    assert a.digest() == b.digest() != c.digest()


@pytest.mark.parametrize("text,where", [
    ('{"problem": {}\n "x": 1}', "line 2, column 2"),
    ('{"problem": {"k": 3}}', "problem.kprime"),
    ('{"problem": PROBLEM, "grids": {"r_max": "far"}}', "grids.r_max"),
    ('{"problem": PROBLEM, "ladder": {"pointz": 3}}', "ladder.pointz"),
    ('{"problem": PROBLEM, "pair": [0]}', "pair"),
    ('{"problem": PROBLEM, "schema_version": 9}', "schema_version"),
    ('{"problem": PROBLEM, "admissible": "manual"}', "admissible"),
    ('{"problem": PROBLEM, "threads": 1.5}', "threads"),
])
def test_config_errors_name_the_field(text, where):
    text = text.replace("PROBLEM", json.dumps(default_config().to_dict()["problem"]))
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert where in str(exc.value)


def test_validate_default_passes():
    rep = validate(default_config())
    assert rep["ok"], [c for c in rep["checks"] if not c["ok"]]
    assert (rep["kappa"], rep["kappa1"], rep["kappa2"]) == ("6/5", "2", "6")
    assert rep["geometry"]["ladder_direction_deg"] == pytest.approx(30.0)


@pytest.mark.parametrize("mutation,failing", [
    ({"kprime": 3}, "k delta_D = m_D k'"),
    ({"k1": 2}, "0 < k1 < k'"),
])
def test_validate_reports_structural_failures(mutation, failing):
    cfg = dataclasses.replace(default_config(), problem=dataclasses.replace(worked_example_problem(), **mutation))
    rep = validate(cfg)
    assert not rep["ok"]
    assert failing in [c["name"] for c in rep["checks"] if not c["ok"]]


def test_validate_rejects_strip_and_arc_settings():
    cfg = default_config()
    cfg.ladder.z_imag = (0.25, 1.5)
    cfg.ladder.r0 = 1.2
    bad = [c["name"] for c in validate(cfg)["checks"] if not c["ok"]]
    assert "Im z=1.5 inside the strip" in bad
    assert "arc radius below the nearest root" in bad


def test_cli_validate_exit_codes(tmp_path, capsys):
    assert main(["validate", "-q"]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text('{"problem": {}\n "x": 1}')
    assert main(["validate", "--config", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err
    d = default_config().to_dict()
    d["problem"]["kprime"] = 3
    mut = tmp_path / "mut.json"
    mut.write_text(json.dumps(d))
    assert main(["validate", "--config", str(mut)]) == 1
    assert "[FAIL] structure: k delta_D = m_D k'" in capsys.readouterr().out
    assert main(["validate", "--ladder", "2"]) == 2
    assert main(["validate", "--tol", "-1"]) == 2


def test_cli_verify_without_solve(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path / "empty"), "-q"]) == 3
    assert "stage error" in capsys.readouterr().err


def test_solve_rejects_invalid_config(tmp_path):
    cfg = dataclasses.replace(default_config(), problem=dataclasses.replace(worked_example_problem(), k1=2))
    with pytest.raises(StageError) as exc:
        solve(cfg, tmp_path)
    assert exc.value.stage == "validate"


@pytest.mark.slow
def test_small_solve_outputs(small_run):
    cfg, out, res = small_run
    assert set(res["contraction"]) == {"sector_p", "sector_q", "ladder_lo", "ladder_hi", "arc", "arc_check"}
    for name in ("sector_p", "sector_q", "ladder_lo", "ladder_hi"):
        assert res["contraction"][name]["ratio_ok"] and res["contraction"][name]["residual_ok"]
    assert res["refinement"]["ok"]
    run = json.loads((out / "run.json").read_text())
    assert run["config_hash"] == cfg.digest()
    with open(out / "solutions" / "sector_0.csv") as fh:
        assert fh.readline().strip() == f"# config_hash: {cfg.digest()}"
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert float(rows[0]["residual_rel"]) <= 1e-4
    assert 3.0 <= float(rows[0]["t_op_ratio_min"]) <= float(rows[0]["t_op_ratio_max"]) <= 5.0
    # plain decimal floats, no numpy reprs
    assert "np." not in (out / "solutions" / "sector_0.csv").read_text()


@pytest.mark.slow
def test_rerun_is_bit_identical(small_run, tmp_path):
    cfg, out, _ = small_run
    before = {p.name: p.read_bytes() for p in (out / "solutions").iterdir()}
    run_before = json.loads((out / "run.json").read_text())
    solve(cfg, out)  # cache hits
    assert {p.name: p.read_bytes() for p in (out / "solutions").iterdir()} == before
    assert json.loads((out / "run.json").read_text()) == run_before
    # a fresh directory recomputes every ray and reproduces the same bytes
    solve(cfg, tmp_path)
    assert {p.name: p.read_bytes() for p in (tmp_path / "solutions").iterdir()} == before
    fresh = json.loads((tmp_path / "run.json").read_text())
    assert fresh["solve"]["contraction"] == run_before["solve"]["contraction"]


@pytest.mark.slow
def test_zero_forcing_solve(tmp_path):
    d = small_config_dict()
    d["problem"]["K0"] = 0.0
    cfg = RunConfig.from_dict(d)
    res = solve(cfg, tmp_path, refine=False)
    for r in res["residuals"].values():
        assert r["max_rep_rel"] == 0.0 and r["rep_ok"] and r["fd_ok"]
        assert all(math.isnan(v) for v in r["t_op_ratio_range"])
    with open(tmp_path / "solutions" / "sector_0.csv") as fh:
        fh.readline()
        row = next(csv.DictReader(fh))
    assert float(row["u_re"]) == 0.0 and float(row["u_im"]) == 0.0
    # no flatness signal in an identically zero solution: verify stops with a stage error
    with pytest.raises(StageError):
        verify(cfg, tmp_path)
