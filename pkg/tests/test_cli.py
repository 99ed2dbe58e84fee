import json
import subprocess
import sys
from pathlib import Path

import pytest

from diagline.cli import main

INSTANCES = Path(__file__).resolve().parent.parent / "instances"
FLAGSHIP = str(INSTANCES / "flagship.json")
K1 = str(INSTANCES / "k1_chain.json")
K2 = str(INSTANCES / "k2_s6.json")
SING = str(INSTANCES / "singular_k2.json")


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    return code, capsys.readouterr()


def test_count_json(capsys):
    code, out = run(capsys, "count", FLAGSHIP, "--box", 1)
    doc = json.loads(out.out)
    assert code == 0
    assert doc["count"] == "11723"
    assert doc["method"] in ("mitm", "naive")


def test_count_csv(capsys):
    code, out = run(capsys, "count", K1, "-B", 1000, "--csv")
    lines = out.out.splitlines()
    assert lines[0] == "count,box,method,seconds"
    assert lines[1].startswith("2001,1000,")


def test_count_errors(capsys):
    code, out = run(capsys, "count", K1, "--box", -1)
    assert code == 2 and "error" in out.err
    code, out = run(capsys, "count", "/nonexistent.json", "--box", 1)
    assert code == 2


def test_arcs(capsys):
    code, out = run(capsys, "arcs", "--k", 2, "--X", 1000, "--L", 2, "--Q", 8, "--samples", 50, "--seed", 1)
    doc = json.loads(out.out)
    assert code == 0 and sum(doc["labels"].values()) == 50
    code, again = run(capsys, "arcs", "--k", 2, "--X", 1000, "--L", 2, "--Q", 8, "--samples", 50, "--seed", 1)
    assert again.out == out.out


def test_densities(capsys):
    code, out = run(capsys, "densities", SING, "--primes", "3", "--h-max", 4, "--series-D", 3)
    doc = json.loads(out.out)
    assert code == 0
    assert doc["primes"]["3"]["d_h"] == ["1", "3", "3", "9"]
    assert doc["primes"]["3"]["stabilized"] is False
    assert doc["series"]["per_q"].keys() == {"1", "2", "3"}


def test_densities_csv_table(capsys):
    code, out = run(capsys, "densities", K1, "--primes", "2,3", "--h-max", 2, "--series-D", 4, "--csv")
    lines = out.out.splitlines()
    assert lines[0] == "p,h,M_p,d_h"
    assert lines[1:] == ["2,1,2,1", "2,2,4,1", "3,1,3,1", "3,2,9,1"]


def test_realdensity_k1(capsys):
    code, out = run(capsys, "realdensity", K1, "--eta", "0.4,0.2,0.1", "--mc-samples", 200000,
                    "--D", "20,40", "--tol", 1e-7)
    doc = json.loads(out.out)
    assert code == 0 and doc["passed"]
    assert float(doc["sigma_slab"]) == pytest.approx(2, abs=1e-2)
    assert float(doc["rel_diff"]) < 1e-2


def test_singular_from_file(capsys, tmp_path):
    zs = tmp_path / "z.json"
    zs.write_text(json.dumps([[1, 1, 1], [2, 2, 2], [1, 0, 0]]))
    code, out = run(capsys, "singular", SING, zs, "--relaxed")
    doc = json.loads(out.out)
    assert code == 0
    assert [r["rank"] for r in doc["reports"]] == [1, 1, 2]
    assert doc["summary"] == {"total": 3, "solutions": 2, "nonsingular": 1, "guaranteed": 0}


def test_singular_from_box(capsys):
    code, out = run(capsys, "singular", K2, "--box", 1)
    doc = json.loads(out.out)
    assert code == 0
    assert doc["summary"]["solutions"] == doc["summary"]["total"] > 1


def test_singular_needs_input(capsys):
    code, out = run(capsys, "singular", K2)
    assert code == 2


def test_asymptotic_outdir(capsys, tmp_path):
    code, out = run(capsys, "asymptotic", "--config", INSTANCES / "k1_chain.conf", "--outdir", tmp_path)
    doc = json.loads(out.out)
    assert code == 0 and doc["passed"]
    assert (tmp_path / "asymptotic_counts.csv").exists()
    assert doc["provenance"]["seed"] == 0


def test_asymptotic_override(capsys):
    code, out = run(capsys, "asymptotic", "--config", INSTANCES / "k1_chain.conf",
                    "--boxes", "5,50,500", "--no-real-density", "--csv")
    assert out.out.splitlines()[:2] == ["B,N,N/B^e", "5,11,2.2000000000000002"]


def test_subconvexity(capsys):
    code, out = run(capsys, "subconvexity", "--c", "1,1,-1", "--k", 2, "--xs", "2,4,8,16")
    doc = json.loads(out.out)
    assert code == 0 and doc["checks"] == {"slope": True, "averaging": True}
    code, out = run(capsys, "subconvexity", "--c", "1,-1", "--k", 2)
    assert code == 2


def test_check(capsys):
    code, out = run(capsys, "check", K2)
    doc = json.loads(out.out)
    assert code == 0 and all(doc["checks"].values())
    code, out = run(capsys, "check", K1, "--suite", "--config", INSTANCES / "k1_chain.conf")
    doc = json.loads(out.out)
    assert code == 0 and doc["suite"]["passed"]


def test_threads_env(monkeypatch, capsys):
    monkeypatch.setenv("DIAGLINE_THREADS", "2")
    code, out = run(capsys, "count", FLAGSHIP, "--box", 1)
    assert json.loads(out.out)["count"] == "11723"


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "diagline.cli", "count", K1, "--box", "3"],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["count"] == "7"
