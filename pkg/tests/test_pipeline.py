import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from phyloload.cli import main
from phyloload.funcload import load_appendix_a
from phyloload.phylotree import format_tree_sample, random_tree
from phyloload.pipeline import (
    AnalysisConfig,
    PipelineError,
    build_config,
    normalize_taxon,
    parse_matrix,
    read_config_file,
)

from oracles import pearson
from test_segmental import INVENTORY

LANGS = [r.language for r in load_appendix_a()]


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _digest(directory):
    return {p.relative_to(directory).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(Path(directory).rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def trees_file(tmp_path_factory):
    """100 random dated trees over the 90 fixture languages plus extra tips,
    written with underscores for spaces as tree files usually are."""
    rng = np.random.default_rng(2024)
    labels = [lab.replace(" ", "_") for lab in LANGS] + ["Extra_1", "Extra_2"]
    path = tmp_path_factory.mktemp("trees") / "sample.trees"
    path.write_text(format_tree_sample(random_tree(labels, rng) for _ in range(100)))
    return path


@pytest.fixture
def corpus(tmp_path):
    """Three toy languages; Gamma has too few domain tokens for min_n=50."""
    lex, inv = tmp_path / "lex", tmp_path / "inv"
    lex.mkdir()
    inv.mkdir()
    forms = {
        "Alpha": ["t a t a", "t aa t a", "m a n a", "p aa d a", "t i n a"] * 20,
        "Beta": ["t a t a", "t a a t a", "m a r a", "p u w u t a", "t ii n a"] * 15,
        "Gamma": ["t a t a", "t aa t a"] * 5,
    }
    for name, fs in forms.items():
        (inv / f"{name}.tsv").write_text(INVENTORY)
        (lex / f"{name}.tsv").write_text("form\tgloss\n" + "\n".join(fs) + "\n")
    return tmp_path


def test_fl_toy_corpus(corpus):
    out = corpus / "out"
    code = main(["fl", "--lexicons", str(corpus / "lex"), "--inventories", str(corpus / "inv"),
                 "--out", str(out), "--min-n", "1"])
    assert code == 0
    rows = _rows(out / "fl.csv")
    assert [r["language"] for r in rows] == ["Alpha", "Beta", "Gamma"]
    assert list(rows[0]) == ["language", "fl_v", "fl_c", "fl_p", "n"]
    assert int(rows[0]["n"]) == 100


def test_fl_exclusion_log_partitions_languages(corpus):
    out = corpus / "out"
    assert main(["fl", "--lexicons", str(corpus / "lex"), "--inventories", str(corpus / "inv"),
                 "--out", str(out), "--min-n", "50"]) == 0
    kept = {r["language"] for r in _rows(out / "fl.csv")}
    excluded = {r["language"]: r for r in _rows(out / "fl_exclusions.csv")}
    assert kept == {"Alpha", "Beta"}
    assert set(excluded) == {"Gamma"} and excluded["Gamma"]["n"] == "10"
    assert kept | set(excluded) == {"Alpha", "Beta", "Gamma"} and not kept & set(excluded)


def test_fl_missing_inventory(corpus, capsys):
    (corpus / "inv" / "Beta.tsv").unlink()
    code = main(["fl", "--lexicons", str(corpus / "lex"), "--inventories", str(corpus / "inv"),
                 "--out", str(corpus / "out")])
    assert code == 2
    assert str(corpus / "inv" / "Beta.tsv") in capsys.readouterr().err


def test_fl_parse_error(corpus, capsys):
    (corpus / "lex" / "Alpha.tsv").write_text("form\tgloss\nt a x a\n")
    code = main(["fl", "--lexicons", str(corpus / "lex"), "--inventories", str(corpus / "inv"),
                 "--out", str(corpus / "out")])
    assert code == 2
    assert "offset 4" in capsys.readouterr().err


def test_fl_config_file_and_precedence(corpus):
    cfg = corpus / "run.cfg"
    cfg.write_text(f"# toy run\nlexicons = {corpus / 'lex'}\ninventories = {corpus / 'inv'}\n"
                   f"min_n = 1000\nout = {corpus / 'cfg_out'}\n")
    assert main(["fl", "--config", str(cfg)]) == 0
    assert _rows(corpus / "cfg_out" / "fl.csv") == []
    assert main(["fl", "--config", str(cfg), "--min-n", "1"]) == 0
    assert len(_rows(corpus / "cfg_out" / "fl.csv")) == 3


def test_config_parsing(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("seed = 7\njitter = yes\ndrop-zero-flv = false\n")
    values = read_config_file(p)
    assert values == {"seed": 7, "jitter": True, "drop_zero_flv": False}
    cfg = build_config(values, {"seed": 9, "jitter": None})
    assert cfg == AnalysisConfig(seed=9, jitter=True, drop_zero_flv=False)
    p.write_text("colour = blue\n")
    with pytest.raises(PipelineError, match="unknown key"):
        read_config_file(p)
    with pytest.raises(PipelineError):
        AnalysisConfig(min_n=0)


def test_normalize_taxon():
    assert normalize_taxon("  Kuku_Yalanji ") == "Kuku Yalanji"
    assert normalize_taxon("Kuuku Ya'u") == "Kuuku Ya'u"


def test_signal_on_fixture(trees_file, tmp_path):
    out = tmp_path / "out"
    assert main(["signal", "--trees", str(trees_file), "--trait", "fl_v", "--out", str(out), "--seed", "3"]) == 0
    summary = json.loads((out / "signal_fl_v.json").read_text())
    assert summary["n_taxa"] == 90 and summary["n_trees"] == 100 and summary["seed"] == 3
    assert set(summary) >= {"mean", "sd", "lo95", "hi95", "p", "n_taxa", "n_trees", "seed"}
    rows = _rows(out / "signal_fl_v_k.csv")
    assert len(rows) == 100 and list(rows[0]) == ["tree_index", "k"]
    recon = _rows(out / "reconciliation.csv")
    assert list(recon[0]) == ["in_data_only", "in_trees_only", "matched"]
    assert sum(1 for r in recon if r["matched"]) == 90
    assert {r["in_trees_only"] for r in recon} - {""} == {"Extra 1", "Extra 2"}


def test_signal_single_tree_sd_zero(tmp_path, trees_file):
    one = tmp_path / "one.nwk"
    one.write_text(trees_file.read_text().splitlines()[0] + "\n")
    assert main(["signal", "--trees", str(one), "--out", str(tmp_path / "o"), "--n-perm", "99"]) == 0
    summary = json.loads((tmp_path / "o" / "signal_fl_v.json").read_text())
    assert summary["sd"] == 0.0 and summary["n_trees"] == 1
    assert 0 < summary["p"] <= 1


def test_signal_degenerate_trait(tmp_path, trees_file, capsys):
    data = tmp_path / "flat.csv"
    data.write_text("language,fl_v,fl_c,fl_p,n\n" + "".join(f"\"{lang}\",0.5,1,1,300\n" for lang in LANGS))
    code = main(["signal", "--fl", str(data), "--trees", str(trees_file), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "degenerate trait" in capsys.readouterr().err


def test_signal_reconciliation_failure(tmp_path, capsys):
    trees = tmp_path / "few.trees"
    trees.write_text("((Adnyamathanha:1,Bandjalang:1):1,Batyala:2);\n")
    code = main(["signal", "--trees", str(trees), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "missing from the tree sample" in capsys.readouterr().err
    recon = _rows(tmp_path / "o" / "reconciliation.csv")
    assert sum(1 for r in recon if r["in_data_only"]) == 87
    assert sum(1 for r in recon if r["matched"]) == 3


def test_signal_bad_trait(tmp_path, trees_file):
    assert main(["signal", "--trees", str(trees_file), "--trait", "fl_x", "--out", str(tmp_path)]) == 2


def test_signal_missing_trees(tmp_path):
    assert main(["signal", "--out", str(tmp_path)]) == 2
    assert main(["signal", "--trees", str(tmp_path / "nope.trees"), "--out", str(tmp_path)]) == 2


def test_corr_on_fixture(trees_file, tmp_path):
    out = tmp_path / "out"
    assert main(["corr", "--trees", str(trees_file), "--pair", "fl_v,fl_p", "--out", str(out)]) == 0
    summary = json.loads((out / "corr_fl_v_fl_p.json").read_text())
    assert summary["lo95"] <= summary["hi95"]
    assert 0 <= summary["p"] <= 1 and summary["n_trees"] == 100
    assert len(_rows(out / "corr_fl_v_fl_p_r.csv")) == 100


def test_corr_identical_pair(tmp_path, trees_file):
    data = tmp_path / "same.csv"
    rng = np.random.default_rng(1)
    data.write_text("language,a,b\n" + "".join(f"\"{lang}\",{v!r},{v!r}\n" for lang, v in zip(LANGS, rng.normal(size=90).tolist())))
    with pytest.warns(UserWarning):
        code = main(["corr", "--fl", str(data), "--pair", "a,b", "--trees", str(trees_file), "--out", str(tmp_path / "o")])
    assert code == 0
    summary = json.loads((tmp_path / "o" / "corr_a_b.json").read_text())
    assert summary["mean"] == pytest.approx(1.0) and summary["p"] == pytest.approx(0.0, abs=1e-12)


def test_corr_no_phylo_matches_independent_pearson(tmp_path):
    assert main(["corr", "--no-phylo", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "corr_fl_v_fl_c.json").read_text())
    rows = load_appendix_a()
    expected = pearson([r.fl_v for r in rows], [r.fl_c for r in rows])
    assert expected < 0
    assert summary["mean"] == pytest.approx(expected, abs=1e-12)
    assert summary["phylo"] is False


def test_corr_bad_pair(tmp_path):
    assert main(["corr", "--no-phylo", "--pair", "fl_v", "--out", str(tmp_path)]) == 2
    assert main(["corr", "--no-phylo", "--pair", "fl_v,nope", "--out", str(tmp_path)]) == 2


def test_simulate_rate_zero_and_determinism(tmp_path, trees_file):
    tree = tmp_path / "t.nwk"
    tree.write_text(trees_file.read_text().splitlines()[0] + "\n")
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", "--tree", str(tree), "--rate", "0,0;0,0", "--root", "1,2",
                     "--replicates", "3", "--seed", "5", "--out", str(out)]) == 0
    rows = _rows(a / "sim" / "rep_0000.csv")
    assert {r["fl_v"] for r in rows} == {"1.0"} and {r["fl_c"] for r in rows} == {"2.0"}
    assert _digest(a) == _digest(b)
    manifest = json.loads((a / "sim" / "manifest.json").read_text())
    assert manifest["seed"] == 5 and len(manifest["files"]) == 3

    c, d = tmp_path / "c", tmp_path / "d"
    for out in (c, d):
        assert main(["simulate", "--tree", str(tree), "--rate", "1,0.3;0.3,1", "--replicates", "2",
                     "--seed", "5", "--out", str(out)]) == 0
    assert _digest(c) == _digest(d)


def test_simulate_non_psd(tmp_path, trees_file):
    code = main(["simulate", "--tree", str(trees_file), "--rate", "1,2;2,1", "--out", str(tmp_path)])
    assert code == 2


def test_parse_matrix():
    assert parse_matrix("1,-0.5;-0.5,1").tolist() == [[1, -0.5], [-0.5, 1]]
    assert parse_matrix("2").tolist() == [[2.0]]
    with pytest.raises(PipelineError):
        parse_matrix("1,2;3")


def test_simulate_into_corr(tmp_path):
    """Correlated simulation piped into corr recovers the generating correlation."""
    rng = np.random.default_rng(77)
    labels = [f"L{i:02d}" for i in range(90)]
    tree = tmp_path / "t.nwk"
    tree.write_text(format_tree_sample([random_tree(labels, rng)]))
    out = tmp_path / "out"
    assert main(["simulate", "--tree", str(tree), "--rate", "1,-0.5;-0.5,1", "--replicates", "100",
                 "--seed", "11", "--out", str(out)]) == 0
    rs = []
    for rep in sorted((out / "sim").glob("rep_*.csv")):
        res_dir = tmp_path / "corr" / rep.stem
        assert main(["corr", "--fl", str(rep), "--trees", str(tree), "--out", str(res_dir)]) == 0
        rs.append(json.loads((res_dir / "corr_fl_v_fl_c.json").read_text())["mean"])
    assert -0.6 <= np.mean(rs) <= -0.4


def test_report(tmp_path, trees_file):
    out = tmp_path / "out"
    assert main(["report", "--out", str(out)]) == 2  # nothing there yet
    out.mkdir()
    assert main(["report", "--out", str(out)]) == 2
    assert main(["signal", "--trees", str(trees_file), "--out", str(out)]) == 0
    assert main(["corr", "--trees", str(trees_file), "--out", str(out)]) == 0
    assert main(["report", "--out", str(out)]) == 0
    svg = out / "report" / "k_hist_fl_v.svg"
    assert svg.is_file() and svg.stat().st_size > 0
    assert (out / "report" / "r_hist_fl_v_fl_c.svg").stat().st_size > 0
    assert (out / "report" / "scatter_fl_v_fl_c.svg").stat().st_size > 0
    html = (out / "report" / "report.html").read_text()
    assert "mean K" in html and "95% interval" in html
    first = _digest(out / "report")
    assert main(["report", "--out", str(out)]) == 0
    assert _digest(out / "report") == first


def test_report_missing_inputs(tmp_path, trees_file, capsys):
    out = tmp_path / "out"
    assert main(["signal", "--trees", str(trees_file), "--out", str(out)]) == 0
    (out / "signal_fl_v_k.csv").unlink()
    assert main(["report", "--out", str(out)]) == 2
    assert "signal_fl_v_k.csv" in capsys.readouterr().err
