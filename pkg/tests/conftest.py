import numpy as np
import pytest

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(name): exit criterion, reported in the summary")
    config.addinivalue_line("markers", "slow: statistical checks taking several seconds")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _ACCEPTANCE.append((marker.args[0], rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE:
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{status}] {name}")


def random_newick(rng, n_tips, dyadic=False, fancy_labels=False):
    """Random rooted tree as a Newick string; multifurcations allowed.

    With ``dyadic`` every branch length is a multiple of 1/64 so sums are
    exact in floating point.
    """
    labels = [f"T{i}" for i in range(n_tips)]
    if fancy_labels:
        for i in rng.choice(n_tips, size=min(3, n_tips), replace=False):
            labels[i] = f"'tip {i} o''x'"

    def length():
        if dyadic:
            return repr(int(rng.integers(0, 256)) / 64)
        return repr(float(rng.exponential(1.0)))

    def build(tips):
        if len(tips) == 1:
            return tips[0]
        k = 2 if len(tips) == 2 or rng.random() < 0.8 else int(rng.integers(2, min(4, len(tips)) + 1))
        cuts = np.sort(rng.choice(np.arange(1, len(tips)), size=k - 1, replace=False))
        groups = np.split(np.array(tips, dtype=object), cuts)
        return "(" + ",".join(f"{build(list(g))}:{length()}" for g in groups) + ")"

    order = list(rng.permutation(labels))
    return build(order) + ";"


def brute_vcv(tree, taxa):
    """Shared path length by intersecting the edge sets on root-to-tip paths."""
    edges = {}
    for node in tree.preorder():
        if node.is_leaf():
            path = {}
            cur = node
            while cur.parent is not None:
                path[id(cur)] = cur.length
                cur = cur.parent
            edges[node.name] = path
    n = len(taxa)
    C = np.zeros((n, n))
    for i, a in enumerate(taxa):
        for j, b in enumerate(taxa):
            C[i, j] = sum(edges[a][k] for k in edges[a].keys() & edges[b].keys())
    return C
