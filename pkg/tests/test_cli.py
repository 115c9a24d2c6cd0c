import json
import subprocess
import sys

import pytest

from genflow.cli import main

GEN = [sys.executable, "-m", "genflow.cli"]


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("gen")
    for fam in ("linear", "concave", "adnb"):
        main(["gen", "--family", fam, "--seed", "3", "--count", "2", "--out", str(d)])
    main(["gen", "--family", "adnb", "--seed", "9", "--infeasible", "--out", str(d)])
    return d


def test_solve_linear_certificate(corpus, capsys):
    code, out, _ = run(["solve-linear", "--certificate", str(corpus / "linear_3.cgf")], capsys)
    assert code == 0
    d = json.loads(out)
    assert d["certificate"]["ok"] and d["status"] == "optimal"


def test_solve_concave_trace(corpus, capsys):
    code, out, err = run(["solve-concave", "--eps", "1e-6", "--trace", "--certificate",
                          str(corpus / "concave_3.cgf")], capsys)
    assert code == 0
    rows = err.strip().splitlines()
    assert rows[0] == "delta,ex_start,iterations,kappa"
    assert len(rows) - 1 == json.loads(out)["phase_count"]
    assert json.loads(out)["certificate"]["ok"]


def test_deterministic_output(corpus, capsys):
    argv = ["solve-concave", "--eps", "1e-5", str(corpus / "concave_4.cgf")]
    assert run(argv, capsys)[1] == run(argv, capsys)[1]


def test_bad_file_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.cgf"
    p.write_text("p cgf 2 1\na 1 5 0 1 lin 1\n")
    code, _, err = run(["solve-linear", str(p)], capsys)
    assert code == 2 and "line 2" in err


def test_missing_file_exit_2(tmp_path, capsys):
    assert run(["solve-linear", str(tmp_path / "nope.cgf")], capsys)[0] == 2


def test_sink_needs_eps(corpus, capsys):
    assert run(["solve-sink", "--sink", "1", str(corpus / "concave_3.cgf")], capsys)[0] == 2


def test_adnb_exact_and_infeasible(corpus, capsys):
    code, out, _ = run(["adnb", "--exact", str(corpus / "adnb_3.json")], capsys)
    assert code in (0, 1)
    code, out, _ = run(["adnb", "--exact", str(corpus / "adnb_9.json")], capsys)
    assert code == 1 and json.loads(out)["status"] == "infeasible"


def test_fisher(tmp_path, capsys):
    p = tmp_path / "f.json"
    p.write_text(json.dumps({"buyers": [{"id": "a", "budget": 1}, {"id": "b", "budget": 2}],
                             "goods": ["g"], "utilities": [["a", "g", 1], ["b", "g", 1]]}))
    code, out, _ = run(["fisher", str(p)], capsys)
    assert code == 0
    assert float(json.loads(out)["equilibrium"]["prices"]["g"]) == pytest.approx(3, abs=1e-5)


def test_verify(corpus, capsys):
    code, out, _ = run(["verify", "--against", "lp", str(corpus / "linear_3.cgf")], capsys)
    assert code == 0 and out.startswith("match")
    code, out, _ = run(["verify", "--against", "pwl", str(corpus / "concave_3.cgf")], capsys)
    assert code == 0 and out.startswith("match")


def test_verify_saved_report_mismatch(corpus, tmp_path, capsys):
    _, out, _ = run(["solve-linear", str(corpus / "linear_3.cgf")], capsys)
    d = json.loads(out)
    d["flows"] = ["0"] * len(d["flows"])
    rep = tmp_path / "r.json"
    rep.write_text(json.dumps(d))
    code, out, _ = run(["verify", "--against", "lp", "--report", str(rep), str(corpus / "linear_3.cgf")], capsys)
    if out.startswith("mismatch"):
        assert code == 3
    else:
        assert code == 0


def test_many_files_with_jobs(corpus, capsys):
    files = [str(corpus / "linear_3.cgf"), str(corpus / "linear_4.cgf")]
    code, out, _ = run(["solve-linear", "--jobs", "2", *files], capsys)
    assert code == 0
    assert out.count("# ") == 2


def test_module_entry_point(corpus):
    r = subprocess.run(GEN + ["solve-linear", str(corpus / "linear_3.cgf")], capture_output=True, text=True)
    assert r.returncode == 0
    assert json.loads(r.stdout)["solver"] == "linear"
