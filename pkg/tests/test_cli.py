import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from nahmtransform.cli import field_header, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


@pytest.mark.parametrize("cfg", ["cfg_a.json", "cfg_b.json", "cfg_c.json"])
def test_validate_exact_families(cfg):
    res = run("validate", "--config", str(CONFIGS / cfg))
    assert res.exit_code == 0
    rep = json.loads(res.output)
    assert rep["status"] == "pass"
    assert rep["provenance"]["report_version"] == "nahm-run/1"
    assert len(rep["provenance"]["document_sha256"]) == 64


def test_validate_not_trace_free(tmp_path):
    doc = {"type": {"lambda": [-1, 2], "ranks": [1, 1], "chern": [[1], [-1]]}, "family": "flat_zero"}
    res = run("validate", "--config", write(tmp_path, "bad.json", doc))
    assert res.exit_code == 1
    assert "NotTraceFree" in res.output


@pytest.mark.parametrize("text", ['{"type": ', "[1, 2]", '{"data": 3}'])
def test_usage_errors(tmp_path, text):
    assert run("validate", "--config", write(tmp_path, "c.json", text)).exit_code == 2


def test_field_origin_row(tmp_path):
    cfg = {"data": str(CONFIGS / "cfg_a.json"), "points": [[0, 0, 0], [0, 0, 1]]}
    out = tmp_path / "f.csv"
    res = run("field", "--config", write(tmp_path, "c.json", cfg), "--out", str(out))
    assert res.exit_code == 0
    lines = out.read_text().splitlines()
    assert lines[0].split(",") == field_header(2)
    row = [float(v) for v in lines[1].split(",")[4:12]]
    assert max(abs(v) for v in row) <= 1e-12
    assert json.loads(out.with_suffix(".report.json").read_text())["status"] == "pass"


@pytest.mark.parametrize("cfg, code", [("ray_b.json", 0), ("ray_b_mislabeled.json", 1)])
def test_ray(cfg, code):
    assert run("ray", "--config", str(CONFIGS / cfg)).exit_code == code


def test_reduce_asymmetric():
    res = run("reduce", "--config", str(CONFIGS / "reduce_b.json"))
    assert res.exit_code == 1
    assert "TypeNotSymmetric" in res.output


def test_sweep(tmp_path):
    out = tmp_path / "s.csv"
    assert run("sweep", "--config", str(CONFIGS / "sweep_a.json"), "--out", str(out)).exit_code == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 7 and rows[0].startswith("index,nodes,x1")


def test_flag_overrides(tmp_path):
    out = tmp_path / "s.csv"
    res = run("sweep", "--config", str(CONFIGS / "sweep_a.json"), "--out", str(out), "--nodes", "10",
              "--collar", "0.002", "--seed", "4")
    assert res.exit_code == 0
    rep = json.loads(out.with_suffix(".report.json").read_text())
    assert rep["provenance"]["collar"] == 0.002 and rep["provenance"]["seed"] == 4
