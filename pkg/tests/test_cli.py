"""Command-line interface: subcommands, exit codes, reproducibility stamps."""
import json
import os
import subprocess
import sys

import pytest

from passforge.cli import main
from passforge.reporting import MethodResult, geomean, make_folds, report


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["corpus-gen", "--out", str(d / "corpus"), "--n", "6",
                 "--seed", "3", "--quiet"]) == 0
    return d


def test_parse_and_verify(workdir, capsys):
    design = str(workdir / "corpus" / "dot_01.ir")
    assert main(["parse", design]) == 0
    out = capsys.readouterr().out
    assert "top func" in out
    assert main(["verify", design, "--quiet"]) == 0


def test_verify_reports_violations(tmp_path, capsys):
    bad = tmp_path / "bad.ir"
    bad.write_text("""
top func @f(%a: i32) -> i32 {
block entry:
  %x = add i32 %y, 1
  ret i32 %x
}
""")
    assert main(["verify", str(bad)]) == 1
    assert "use-before-def" in capsys.readouterr().err


def test_user_error_exit_code():
    assert main(["parse", "/nonexistent/file.ir"]) == 1


def test_graph_outputs(workdir):
    design = str(workdir / "corpus" / "dot_01.ir")
    dot = str(workdir / "g.dot")
    js = str(workdir / "g.json")
    assert main(["graph", design, "--dot", dot, "--json-out", js,
                 "--quiet"]) == 0
    assert open(dot).read().startswith("digraph")
    doc = json.loads(open(js).read())
    assert doc["schema"] == "hetgraph_v1"


def test_run_with_stats(workdir, capsys):
    design = str(workdir / "corpus" / "vec_combine_00.ir")
    stats = str(workdir / "stats.json")
    emit = str(workdir / "out.ir")
    code = main(["run", design, "-p", "adce,dse,simplifycfg",
                 "--stats", stats, "--emit", emit, "--quiet"])
    assert code == 0
    recs = json.loads(open(stats).read())
    assert [r["pass"] for r in recs] == ["adce", "dse", "simplifycfg"]
    assert main(["verify", emit, "--quiet"]) == 0


def test_estimate_json(workdir, capsys):
    design = str(workdir / "corpus" / "case2.ir")
    assert main(["estimate", design, "--quiet"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["cycles"] >= 1
    assert any(l["achieved_ii"] is not None for l in doc["loops"])


def test_interp_with_inputs_file(workdir, tmp_path, capsys):
    design = str(workdir / "corpus" / "dot_01.ir")
    m_doc = json.loads(subprocess.run(
        [sys.executable, "-c",
         "import json;"
         "from passforge.ir import parse_module;"
         f"m = parse_module(open({design!r}).read());"
         "print(json.dumps([[1]*p[1].length if p[1].is_array else 1"
         " for p in m.top.params]))"],
        capture_output=True, text=True, check=True).stdout)
    inputs = tmp_path / "inputs.json"
    inputs.write_text(json.dumps(m_doc))
    assert main(["interp", design, "--inputs", str(inputs), "--oracle"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert "memory_digest" in doc and "dynamic_cycles" in doc


def test_hged_cli(workdir, capsys):
    a = str(workdir / "corpus" / "dot_01.ir")
    b = str(workdir / "corpus" / "vec_combine_00.ir")
    assert main(["hged", a, b, "--mode", "beam:8"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert 0.0 <= doc["normalized"] <= 1.0
    assert main(["hged", a, a, "--mode", "exact"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["total"] == 0.0 and doc["exact"] is True


def test_corpus_gen_resumable(workdir, capsys):
    # Re-running the completed stage is a no-op (stamp digest matches).
    code = main(["corpus-gen", "--out", str(workdir / "corpus"), "--n", "6",
                 "--seed", "3"])
    assert code == 0
    assert "up to date" in capsys.readouterr().out


def test_corpus_gen_byte_identical(tmp_path):
    for d in ("r1", "r2"):
        assert main(["corpus-gen", "--out", str(tmp_path / d), "--n", "5",
                     "--seed", "9", "--quiet"]) == 0
    for fname in sorted(os.listdir(tmp_path / "r1")):
        if fname.endswith(".stamp"):
            continue
        a = (tmp_path / "r1" / fname).read_bytes()
        b = (tmp_path / "r2" / fname).read_bytes()
        assert a == b, fname


def test_catalog_lists_action_indexing(capsys):
    assert main(["catalog", "--quiet"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows[0]["pass"] == "simplifycfg" and rows[0]["index"] == 0
    assert sum(1 for r in rows if not r["pragma_anchored"]) == 17


def test_report_geomean(tmp_path, capsys):
    results = [
        MethodResult("d1", "rl", 50, 100, 1, 100, 100, 1).to_dict(),
        MethodResult("d2", "rl", 200, 100, 1, 100, 100, 1).to_dict(),
    ]
    path = tmp_path / "res.json"
    path.write_text(json.dumps(results))
    out_csv = tmp_path / "table.csv"
    assert main(["report", "--results", str(path),
                 "--out-csv", str(out_csv)]) == 0
    text = out_csv.read_text()
    # ratios 0.5 and 2.0 -> geometric mean exactly 1.0
    assert "geomean[rl]" in text and "1.0000" in text


def test_geomean_arithmetic():
    assert geomean([0.5, 2.0]) == pytest.approx(1.0)
    assert geomean([1.0, 1.0, 1.0]) == pytest.approx(1.0)


def test_make_folds_partition():
    names = [f"d{i}" for i in range(11)]
    folds = make_folds(names, 5)
    assert [len(f) for f in folds] == [5, 5, 1]
    flat = [n for f in folds for n in f]
    assert flat == names
