import json
import subprocess
import sys

import pytest

from nnrank.cli import main
from nnrank.rank_oracles import paper_222_tensor
from nnrank.tensor import dump_json


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def ex222_file(tmp_path):
    p = tmp_path / "ex222.json"
    dump_json(paper_222_tensor(), p)
    return str(p)


def test_construct_and_rank(capsys, tmp_path):
    code, out, _ = run(capsys, "construct", "latin", "3")
    assert code == 0
    p = tmp_path / "latin.json"
    p.write_text(out)
    code, out, _ = run(capsys, "rank", str(p))
    rep = json.loads(out)
    assert code == 0
    assert rep["lower"] == rep["upper"] == 9 and rep["certified"]


def test_construct_ex222(capsys):
    code, out, _ = run(capsys, "construct", "paper222")
    assert json.loads(out)["data"] == [1, 0, 0, 1, 0, 1, 1, 0]


def test_rank_csv(capsys, ex222_file, tmp_path):
    csv = tmp_path / "r.csv"
    code, _, _ = run(capsys, "rank", ex222_file, "--r-max", "4",
                     "--csv", str(csv))
    assert code == 0
    lines = csv.read_text().splitlines()
    assert lines[0] == "key,value" and "lower,4" in lines
    assert (tmp_path / "r.csv.gp").exists()


def test_approx_and_cells(capsys, ex222_file, tmp_path):
    code, out, _ = run(capsys, "approx", ex222_file, "--rank", "4",
                       "--restarts", "5", "--seed", "1")
    rep = json.loads(out)
    assert code == 0 and rep["residual"] < 1e-8
    assert rep["solver_config"]["seed"] == 1
    d = tmp_path / "d.json"
    d.write_text(json.dumps(rep["best"]))
    code, out, _ = run(capsys, "cells", str(d), "--supp-eps", "1e-6")
    cell = json.loads(out)
    assert code == 0 and cell["admissible"] and cell["on_boundary"]
    assert cell["eps_supp"] == 1e-6


def test_approx_real(capsys, ex222_file):
    code, out, _ = run(capsys, "approx", ex222_file, "--rank", "2", "--real")
    assert code == 0 and json.loads(out)["residual"] < 1e-8


def test_identifiability(capsys):
    code, out, _ = run(capsys, "identifiability", "--shape", "4,4,3",
                       "--rank", "5", "--symmetric", "3,2")
    rep = json.loads(out)
    assert code == 0
    assert rep["verdicts"]["exception_table"] == "defective"
    assert rep["jacobian_rank"] == 44
    assert "symmetric" in rep["verdicts"]


def test_generic_rank(capsys):
    code, out, _ = run(capsys, "generic-rank", "--shape", "3,3,3")
    assert json.loads(out)["r_g_estimate"] == 5


def test_uniqueness(capsys, ex222_file):
    code, out, _ = run(capsys, "uniqueness", ex222_file, "--rank", "4")
    assert code == 0
    assert json.loads(out)["verdict"] == "unique_evidence"


def test_typical_csv(capsys, tmp_path):
    csv = tmp_path / "h.csv"
    code, out, _ = run(capsys, "typical", "--shape", "2,2,2", "--samples",
                       "10", "--r-max", "4", "--seed", "3", "--csv", str(csv))
    assert code == 0
    assert json.loads(out)["samples"] == 10
    assert csv.read_text().splitlines()[0] == "rank,count,fraction"


def test_binaryform(capsys):
    code, out, _ = run(capsys, "binaryform", "--degree", "3", "--samples",
                       "100", "--seed", "1")
    assert code == 0 and 0 <= json.loads(out)["fraction"] <= 1


def test_survey(capsys):
    code, out, _ = run(capsys, "survey", "--shape", "3,3,3", "--rank", "1",
                       "--samples", "2", "--seed", "0")
    assert code == 0 and json.loads(out)["r"] == 1


def test_coincidence(capsys):
    code, out, _ = run(capsys, "coincidence", "--shape", "3,3,3", "--rank",
                       "2", "--samples", "3", "--include-paper222")
    rep = json.loads(out)
    assert code == 0 and rep["coincidence_fraction"] == 1.0
    assert len(rep["extra"]) == 1


@pytest.mark.parametrize("argv", [
    ["typical", "--shape", "x,y", "--samples", "3", "--r-max", "4"],
    ["binaryform", "--degree", "1", "--samples", "3"],
    ["rank", "/nonexistent/file.json"],
    ["construct", "latin"],
    ["generic-rank", "--shape", "0,2,2"],
    ["nosuchcommand"],
])
def test_invalid_arguments(capsys, argv):
    assert main(argv) == 2


def test_non_finite_exit_code(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"shape": [2, 2], "data": [1, 2, 3, NaN], "nonneg": false}')
    code = main(["approx", str(p), "--rank", "1", "--real"])
    assert code == 3


def test_console_script_module():
    out = subprocess.run([sys.executable, "-m", "nnrank.cli", "construct",
                          "paper222"], capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)["shape"] == [2, 2, 2]
