import json

import numpy as np
import pytest

from fundalloc import io
from fundalloc.benchmark import run_benchmark
from fundalloc.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def golden_dir(tmp_path, capsys):
    assert run(capsys, "simulate", "--golden", "--out", tmp_path / "g")[0] == 0
    return tmp_path / "g"


def allocate(capsys, d, tmp_path, *extra):
    stats = tmp_path / "stats.json"
    code, out, err = run(capsys, "allocate", "--customers", d / "customers.csv",
                         "--funds", d / "funds.csv", "--revenue", d / "revenue.csv",
                         "--out", tmp_path / "alloc.csv", "--stats", stats, *extra)
    return code, (json.loads(stats.read_text()) if code == 0 else None), err


def test_golden_pipeline(golden_dir, tmp_path, capsys):
    code, stats, _ = allocate(capsys, golden_dir, tmp_path)
    assert code == 0 and stats["objective"] == 1850.0
    assert stats["schema"] == 1 and set(stats) == {"schema", "solver", "objective", "wall_ms",
                                                   "rounds", "gap"}
    for solver in ("ha-top3", "exact-bf", "exact-flow"):
        assert allocate(capsys, golden_dir, tmp_path, "--solver", solver)[1]["objective"] == 1850.0


def test_manual_priority(golden_dir, tmp_path, capsys):
    assert allocate(capsys, golden_dir, tmp_path, "--solver", "manual",
                    "--priority", "f1,f2")[1]["objective"] == 1710.0
    assert allocate(capsys, golden_dir, tmp_path, "--solver", "manual",
                    "--priority", "f2,f1")[1]["objective"] == 1610.0
    code, _, err = allocate(capsys, golden_dir, tmp_path, "--solver", "manual", "--priority", "f7")
    assert code == 2 and "INVALID_CONFIG" in err


def test_simulate_writes_four_files(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--n", 50, "--m", 4, "--k", 1, "--seed", 7,
                     "--out", tmp_path / "s")
    assert code == 0
    names = sorted(p.name for p in (tmp_path / "s").iterdir())
    assert names == ["customers.csv", "funds.csv", "train.csv", "truth.csv"]


def test_simulate_zero_customers(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "--n", 0, "--m", 8, "--out", tmp_path)
    assert code == 2 and "INVALID_CONFIG" in err


def test_full_pipeline_deterministic(tmp_path, capsys):
    outputs = []
    for rep in ("a", "b"):
        d = tmp_path / rep
        assert run(capsys, "simulate", "--n", 120, "--m", 4, "--k", 2, "--seed", 3, "--out", d)[0] == 0
        assert run(capsys, "train", "--data", d / "train.csv", "--model", d / "m.json",
                   "--epochs", 2, "--seed", 1)[0] == 0
        assert run(capsys, "predict", "--model", d / "m.json", "--customers", d / "customers.csv",
                   "--funds", d / "funds.csv", "--out", d / "revenue.csv")[0] == 0
        code, _, _ = run(capsys, "allocate", "--customers", d / "customers.csv",
                         "--funds", d / "funds.csv", "--revenue", d / "revenue.csv", "--k", 2,
                         "--out", d / "alloc.csv", "--stats", d / "stats.json")
        assert code == 0
        stats = json.loads((d / "stats.json").read_text())
        stats.pop("wall_ms")
        outputs.append(({p.name: p.read_bytes() for p in d.iterdir() if p.suffix == ".csv"
                         or p.name == "m.json"}, stats))
    assert outputs[0] == outputs[1]


def test_predict_dimension_mismatch(tmp_path, capsys):
    d = tmp_path / "s"
    run(capsys, "simulate", "--n", 40, "--m", 3, "--out", d)
    run(capsys, "train", "--data", d / "train.csv", "--model", d / "m.json", "--epochs", 1)
    lines = (d / "customers.csv").read_text().splitlines()
    (d / "narrow.csv").write_text("\n".join(",".join(r.split(",")[:-1]) for r in lines) + "\n")
    code, _, err = run(capsys, "predict", "--model", d / "m.json", "--customers", d / "narrow.csv",
                       "--funds", d / "funds.csv", "--out", d / "r.csv")
    assert code == 2 and "DIM_MISMATCH" in err


def test_config_file_and_override(tmp_path, capsys, golden_dir):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"customers": str(golden_dir / "customers.csv"),
                               "funds": str(golden_dir / "funds.csv"),
                               "revenue": str(golden_dir / "revenue.csv"),
                               "solver": "manual", "priority": "f1,f2",
                               "out": str(tmp_path / "a.csv"), "stats": str(tmp_path / "s.json")}))
    assert run(capsys, "allocate", "--config", cfg)[0] == 0
    assert json.loads((tmp_path / "s.json").read_text())["objective"] == 1710.0
    assert run(capsys, "allocate", "--config", cfg, "--priority", "f2,f1")[0] == 0
    assert json.loads((tmp_path / "s.json").read_text())["objective"] == 1610.0
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(capsys, "allocate", "--config", cfg)[0] == 2


def test_error_exit_codes(tmp_path, capsys, golden_dir):
    code, _, err = run(capsys, "allocate", "--customers", tmp_path / "missing.csv",
                       "--funds", golden_dir / "funds.csv", "--revenue", golden_dir / "revenue.csv")
    assert code == 3 and "IO_ERROR" in err
    (tmp_path / "bad.csv").write_text("id,risk_level\n1,1\n")
    code, _, err = run(capsys, "allocate", "--customers", golden_dir / "customers.csv",
                       "--funds", tmp_path / "bad.csv", "--revenue", golden_dir / "revenue.csv")
    assert code == 3 and "SCHEMA_ERROR" in err


def test_infeasible_instance_writes_nothing(tmp_path, capsys):
    d = tmp_path / "inf"
    d.mkdir()
    (d / "customers.csv").write_text("id,risk_tolerance\n1,1\n2,1\n3,2\n")
    (d / "funds.csv").write_text("id,risk_level,demand\n1,1,1\n2,2,1\n3,2,1\n")
    (d / "revenue.csv").write_text("customer_id,fund_id,value\n" + "".join(
        f"{c},{f},1.0\n" for c in (1, 2, 3) for f in (1, 2, 3)))
    code, _, err = allocate(capsys, d, tmp_path)
    assert code == 4 and "INFEASIBLE" in err
    assert not (tmp_path / "alloc.csv").exists()


def test_training_divergence_exit(tmp_path, capsys):
    (tmp_path / "t.csv").write_text("u_feat_0,f_feat_0,y,R\n" + "1e300,1e300,1,5.0\n1e300,1e300,0,0.0\n" * 4)
    code, _, err = run(capsys, "train", "--data", tmp_path / "t.csv", "--model", tmp_path / "m.json",
                       "--epochs", 1)
    assert code == 5 and "DIVERGED" in err


def test_benchmark_cli(tmp_path, capsys):
    code, out, _ = run(capsys, "benchmark", "--scales", "60,120,240", "--m", 4)
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "scale,solver,objective,gap,wall_ms,rounds" and len(lines) == 10
    code, _, _ = run(capsys, "benchmark", "--scales", "60", "--format", "json", "--out", tmp_path / "b.json")
    assert code == 0 and json.loads((tmp_path / "b.json").read_text())["schema"] == 1
    assert run(capsys, "benchmark", "--scales", "200,100")[0] == 2


def test_benchmark_default_scales():
    rows = run_benchmark()
    assert len(rows) == 9
    by = {(r.scale, r.solver): r for r in rows}
    for scale in (1000, 5000, 20000):
        assert by[scale, "ha-eq8"].gap <= 0.05
        assert by[scale, "exact-flow"].gap == 0.0
        assert by[scale, "manual"].gap >= 0.0
    assert by[20000, "ha-eq8"].wall_ms < by[20000, "exact-flow"].wall_ms
