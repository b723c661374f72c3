import subprocess
import sys

import pytest

from whrtcert.certify import reference_table
from whrtcert.cli import CliError, main, parse_params_file
from whrtcert.graph import build_graph, parse_text
from whrtcert.constraints import any_n_in_m


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_tmax_equal_case(capsys):
    code, out, _ = run(capsys, "tmax", "--gamma", "2", "--lambda-cap", "2")
    assert code == 0
    assert "t_max 0.5\n" in out and "branch equal" in out


def test_tmax_with_lambda(capsys):
    code, out, _ = run(capsys, "tmax", "--gamma", "2", "--lambda-cap", "1", "--lam", "0.5")
    assert code == 0 and "t_tilde_max" in out


def test_graph_row_2_5(capsys):
    code, out, _ = run(capsys, "graph", "--constraint", "row:2/5", "--validate", "10")
    assert code == 0
    assert "nodes 3" in out and "edges 5" in out and "validation pass" in out


def test_graph_export_roundtrip(capsys, tmp_path):
    path = tmp_path / "g.txt"
    dot = tmp_path / "g.dot"
    code, _, _ = run(capsys, "graph", "--constraint", "any:17/20", "--export", str(path), "--dot", str(dot))
    assert code == 0
    assert parse_text(path.read_text()) == build_graph(any_n_in_m(17, 20))
    code, out, _ = run(capsys, "graph", "--load", str(path))
    assert code == 0 and "nodes 969" in out


def test_graph_bad_constraint(capsys):
    code, _, err = run(capsys, "graph", "--constraint", "row:2/5x")
    assert code == 2 and "column 7" in err


def test_walks(capsys, tmp_path):
    hist = tmp_path / "h.csv"
    dump = tmp_path / "w.txt"
    code, out, _ = run(capsys, "walks", "--constraint", "row:2/5", "--cwalk", "8", "--starts", "initial",
                       "--dump", str(dump), "--histogram", str(hist))
    assert code == 0
    assert "walks in S(G, 8): 79" in out
    assert hist.read_text().startswith("walk_sum,count\n")
    assert len(dump.read_text().splitlines()) == 79


def test_walks_bad_starts(capsys):
    code, _, err = run(capsys, "walks", "--constraint", "row:2/5", "--cwalk", "8", "--starts", "a,b")
    assert code == 2 and "--starts" in err


def test_certify_exit_codes(capsys, tmp_path):
    code, out, _ = run(capsys, "certify", "--constraint", "any:17/20", "--h", "0.195", "--cwalk", "20")
    assert code == 0 and "verdict: certified" in out
    code, out, _ = run(capsys, "certify", "--constraint", "any:17/20", "--h", "0.2", "--cwalk", "20")
    assert code == 1 and "i=4" in out and "verdict: not-certified" in out


def test_certify_with_params_and_system(capsys, tmp_path):
    p = tmp_path / "params.cfg"
    p.write_text(reference_table().to_text())
    code, out, _ = run(capsys, "certify", "--constraint", "any:17/20", "--h", "0.195", "--cwalk", "20",
                       "--params", str(p), "--system", "example", "--points", "200")
    assert code == 0
    assert out.count("feasible (V margin") == 4
    assert "not a sum-of-squares certificate" in out


def test_certify_bad_params(capsys, tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("1 5.77 2 2.75 1.5\n0 1 1 1 1\n")
    code, _, err = run(capsys, "certify", "--constraint", "any:17/20", "--h", "0.195", "--cwalk", "20",
                       "--params", str(p))
    assert code == 2 and "line 2" in err and "gap index must be >= 1" in err


def test_certify_bad_system(capsys):
    code, _, err = run(capsys, "certify", "--constraint", "any:17/20", "--h", "0.195", "--cwalk", "20",
                       "--system", "poly:p=0;zz=1")
    assert code == 2 and "column" in err


def test_parse_params_file(tmp_path):
    p = tmp_path / "t.cfg"
    p.write_text("# i gamma L Lambda epsilon\n" + reference_table().to_text())
    t = parse_params_file(p)
    assert len(t) == 4 and t[3].epsilon == -2
    empty = tmp_path / "e.cfg"
    empty.write_text("")
    with pytest.raises(CliError, match="no parameter rows"):
        parse_params_file(empty)
    with pytest.raises(CliError, match="no such"):
        parse_params_file(tmp_path / "missing.cfg")


def test_feasibility(capsys):
    code, out, _ = run(capsys, "feasibility", "--points", "200")
    assert code == 0 and out.count("feasible") >= 4
    code, out, _ = run(capsys, "feasibility", "--gamma", "1", "--epsilon", "1.5")
    assert code == 1 and "INFEASIBLE" in out


def test_simulate(capsys, tmp_path):
    csv = tmp_path / "tr.csv"
    code, out, _ = run(capsys, "simulate", "--h", "0.195", "--t-end", "20", "--constraint", "any:17/20",
                       "--mode", "worst", "--check", "--csv", str(csv))
    assert code == 0
    assert "100%" in out
    assert csv.read_text().startswith("t,x,e,V,received\n")


def test_simulate_bad_sequence(capsys):
    code, _, err = run(capsys, "simulate", "--h", "0.1", "--t-end", "0.3", "--sequence", "1121")
    assert code == 2 and "column 3" in err


def test_reproduce(capsys, tmp_path):
    code, out, _ = run(capsys, "reproduce-paper", "--outdir", str(tmp_path))
    assert code == 0
    assert "baseline h [s]" in out and "certified at h=0.195" in out
    assert (tmp_path / "worst_case_trace.csv").exists()
    code2, out2, _ = run(capsys, "reproduce-paper")
    strip = lambda s: [l for l in s.splitlines() if not l.startswith(("elapsed", "artifacts"))]
    assert strip(out) == strip(out2)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "whrtcert", "tmax", "--gamma", "2", "--lambda-cap", "2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and "0.5" in res.stdout


def test_unknown_subcommand(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["nope"])
    assert exc.value.code == 2
