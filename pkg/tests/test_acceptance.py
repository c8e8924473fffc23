"""Exit criteria for the package, one test per criterion.

Each test carries an ``acceptance`` marker; the terminal summary prints a
[PASS]/[FAIL] line per criterion.
"""
import hashlib
import time
from pathlib import Path

import numpy as np
import pytest

from phyloload.cli import main
from phyloload.funcload import (
    ContrastSpec,
    DomainDistribution,
    collapse_lexicon,
    domain_entropy,
    functional_load,
    load_appendix_a,
)
from phyloload.phylostats import (
    blomberg_k,
    correlation_p,
    evolutionary_rates,
    gls_mean,
    phylo_correlation,
    simulate_bm_replicates,
)
from phyloload.phylotree import (
    balanced_tree,
    format_tree_sample,
    parse_newick,
    prune,
    random_tree,
    star_tree,
    to_newick,
    vcv,
)

from conftest import random_newick
from oracles import brute_functional_load, mean, pearson, sample_variance

SYMBOLS = ["a", "aa", "i", "ii", "u", "uu", "t", "d", "n", "m", "p", "b"]
SPECS = [
    [{"a", "aa"}],
    [{"a", "aa"}, {"i", "ii"}, {"u", "uu"}],
    [{"t", "d", "n"}],
    [{"t", "d"}, {"p", "b"}, {"n", "m"}],
    [{"a", "i", "u"}],
]


def _random_instances(n=1000, seed=0):
    rng = np.random.default_rng(seed)
    keys = [(v, c) for v in SYMBOLS for c in SYMBOLS]
    for _ in range(n):
        k = int(rng.integers(1, 21))
        chosen = rng.choice(len(keys), size=k, replace=False)
        counts = {keys[j]: int(rng.integers(1, 500)) for j in chosen}
        yield counts, SPECS[int(rng.integers(len(SPECS)))]


def _tree_shape(node):
    return (node.name, node.length, tuple(_tree_shape(c) for c in node.children))


@pytest.mark.acceptance("FL oracle equivalence (1000 random distributions, 1e-12 bits, hand examples, < 5 s)")
def test_fl_oracle_equivalence():
    uniform = DomainDistribution({("a", "t"): 1, ("aa", "t"): 1, ("a", "d"): 1, ("aa", "d"): 1})
    skewed = DomainDistribution({("a", "t"): 4, ("aa", "t"): 2, ("a", "d"): 1, ("aa", "d"): 1})
    length = ContrastSpec("FL_V", [{"a", "aa"}])
    assert functional_load(uniform, length) == 1.0
    assert round(functional_load(skewed, length), 6) == 0.938722

    start = time.perf_counter()
    worst = 0.0
    for counts, sets in _random_instances():
        got = functional_load(DomainDistribution(counts), ContrastSpec("s", sets))
        worst = max(worst, abs(got - brute_functional_load(counts, sets)))
    elapsed = time.perf_counter() - start
    assert worst <= 1e-12
    assert elapsed < 5.0


@pytest.mark.acceptance("FL nonnegativity and idempotence (same 1000 instances, zero failures)")
def test_fl_nonnegative_idempotent():
    failures = 0
    for counts, sets in _random_instances():
        spec = ContrastSpec("s", sets)
        d = DomainDistribution(counts)
        once = collapse_lexicon(d, spec)
        ok = (
            functional_load(d, spec) >= 0
            and domain_entropy(once) <= domain_entropy(d)
            and collapse_lexicon(once, spec) == once
        )
        failures += not ok
    assert failures == 0


@pytest.mark.acceptance("Shipped FL fixture sanity (FL_V range and extremes, N range, negative ordinary r)")
def test_appendix_a_sanity():
    rows = load_appendix_a()
    assert len(rows) == 90
    flv = [r.fl_v for r in rows]
    assert min(flv) == 0.006 and max(flv) == 0.822
    assert rows[flv.index(min(flv))].language == "Kuku Yalanji"
    assert rows[flv.index(max(flv))].language == "Kuuku Ya'u"
    ns = [r.n for r in rows]
    assert min(ns) == 208 and max(ns) == 3215
    r_oracle = pearson(flv, [r.fl_c for r in rows])
    assert r_oracle < 0
    r_pkg = phylo_correlation(flv, [r.fl_c for r in rows], np.eye(90))
    assert r_pkg == pytest.approx(r_oracle, abs=1e-12)


@pytest.mark.acceptance("Star-tree identity K = 1 within 1e-9 (100 random vectors)")
def test_star_tree_k_is_one():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 60))
        C = vcv(star_tree([f"s{i}" for i in range(n)], float(rng.uniform(0.1, 10))))
        x = rng.normal(size=n) * rng.uniform(0.01, 100)
        worst = max(worst, abs(blomberg_k(x, C) - 1.0))
    assert worst <= 1e-9


@pytest.mark.acceptance("BM calibration on 64 tips, 1000 reps: mean K in [0.95, 1.05], shuffled < 0.7, < 60 s")
def test_bm_calibration():
    start = time.perf_counter()
    C = vcv(balanced_tree(6))
    _, X = simulate_bm_replicates(C, 1.0, seed=2024, n_reps=1000)
    ks = np.array([blomberg_k(X[i, 0], C) for i in range(1000)])
    rng = np.random.default_rng(99)
    shuffled = np.array([blomberg_k(rng.permutation(X[i, 0]), C) for i in range(1000)])
    elapsed = time.perf_counter() - start
    print(f"mean K = {ks.mean():.4f}, shuffled mean K = {shuffled.mean():.4f}, {elapsed:.1f} s")
    assert 0.95 <= ks.mean() <= 1.05
    assert shuffled.mean() < 0.7
    assert elapsed < 60


@pytest.mark.acceptance("Correlation recovery on 90 tips, 500 reps: rho=-0.5 within 0.1, rho=0 gives |mean r| < 0.1")
def test_correlation_recovery():
    tree = random_tree([f"L{i:02d}" for i in range(90)], np.random.default_rng(8))
    C = vcv(tree)
    for rho, seed in ((-0.5, 31), (0.0, 32)):
        _, X = simulate_bm_replicates(C, [[1.0, rho], [rho, 1.0]], seed=seed, n_reps=500)
        rs = np.array([phylo_correlation(X[i, 0], X[i, 1], C) for i in range(500)])
        print(f"rho = {rho}: mean r = {rs.mean():.4f}")
        assert abs(rs.mean() - rho) <= 0.1


@pytest.mark.acceptance("correlation_p bands: (-0.28, 90) in [0.004, 0.010]; (0.03, 90) in [0.7, 0.85]")
def test_correlation_p_bands():
    assert 0.004 <= correlation_p(-0.28, 90) <= 0.010
    assert 0.7 <= correlation_p(0.03, 90) <= 0.85


@pytest.mark.acceptance("Newick round-trip and prune/vcv commutation (500 random trees, <= 128 tips)")
def test_newick_round_trip_and_prune_commutation():
    rng = np.random.default_rng(17)
    failures = 0
    for i in range(500):
        dyadic = i % 2 == 0
        n = int(rng.integers(2, 129))
        t = parse_newick(random_newick(rng, n, dyadic=dyadic, fancy_labels=True))
        text = to_newick(t)
        back = parse_newick(text)
        if _tree_shape(back.root) != _tree_shape(t.root) or to_newick(back) != text:
            failures += 1
            continue
        labels = t.tip_labels
        k = int(rng.integers(2, n + 1))
        keep = [labels[j] for j in sorted(rng.choice(n, size=k, replace=False))]
        pruned = vcv(prune(t, keep), keep).matrix
        restricted = vcv(t).submatrix(keep).matrix
        if dyadic:
            failures += not np.array_equal(pruned, restricted)
        else:
            failures += not np.allclose(pruned, restricted, rtol=1e-12, atol=0)
    assert failures == 0


@pytest.mark.acceptance("C = Identity reduces to classical statistics within 1e-9 (100 datasets)")
def test_identity_reduces_to_classical():
    rng = np.random.default_rng(23)
    for _ in range(100):
        n = int(rng.integers(3, 100))
        x = rng.normal(size=n) * rng.uniform(0.1, 10)
        y = 0.3 * x + rng.normal(size=n)
        eye = np.eye(n)
        assert gls_mean(x, eye) == pytest.approx(mean(x), abs=1e-9)
        R = evolutionary_rates(np.column_stack([x, y]), eye)
        assert R[0, 0] == pytest.approx(sample_variance(x), abs=1e-9)
        assert R[1, 1] == pytest.approx(sample_variance(y), abs=1e-9)
        # K's observed ratio MSE0/MSE and its expectation are both 1 under C = I
        assert blomberg_k(x, eye) == pytest.approx(1.0, abs=1e-9)
        assert phylo_correlation(x, y, eye) == pytest.approx(pearson(x, y), abs=1e-9)


@pytest.mark.acceptance("End-to-end determinism: repeated signal/corr runs are byte-identical")
def test_end_to_end_determinism(tmp_path):
    rng = np.random.default_rng(4)
    labels = [r.language for r in load_appendix_a()]
    trees = tmp_path / "s.trees"
    trees.write_text(format_tree_sample(random_tree(labels, rng) for _ in range(20)))

    def run(out):
        assert main(["signal", "--trees", str(trees), "--trait", "fl_c", "--n-perm", "199",
                     "--seed", "42", "--out", str(out)]) == 0
        assert main(["corr", "--trees", str(trees), "--pair", "fl_v,fl_p", "--seed", "42", "--out", str(out)]) == 0
        return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(Path(out).iterdir()) if p.is_file()}

    first, second = run(tmp_path / "a"), run(tmp_path / "b")
    assert len(first) >= 5
    assert first == second
