"""Newick trees, tree samples, pruning and Brownian-motion covariance."""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np


class NewickError(ValueError):
    pass


class TaxonError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class Node:
    __slots__ = ("name", "length", "children", "parent")

    def __init__(self, name: str | None = None, length: float | None = None):
        self.name = name
        self.length = length
        self.children: list[Node] = []
        self.parent: Node | None = None

    def add_child(self, child: "Node") -> "Node":
        child.parent = self
        self.children.append(child)
        return child

    def is_leaf(self) -> bool:
        return not self.children

    def __repr__(self):
        return f"Node({self.name!r}, {self.length!r}, {len(self.children)} children)"


def _preorder(root: Node) -> Iterator[Node]:
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def _postorder(root: Node) -> Iterator[Node]:
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done or not node.children:
            yield node
        else:
            stack.append((node, True))
            stack.extend((c, False) for c in reversed(node.children))


class Phylogeny:
    """Rooted tree with branch lengths and unique tip labels.

    Trees are treated as immutable once built; :func:`prune` returns a new
    tree.  The root's own branch length (if any) is kept for serialization
    but ignored by :func:`vcv`.
    """

    def __init__(self, root: Node):
        self.root = root
        tips = [n for n in _preorder(root) if n.is_leaf()]
        labels = [t.name for t in tips]
        if len(tips) < 2:
            raise NewickError("a tree needs at least 2 tips")
        if any(not lab for lab in labels):
            raise NewickError("every tip needs a label")
        dupes = sorted({lab for lab in labels if labels.count(lab) > 1})
        if dupes:
            raise NewickError(f"duplicate tip labels: {dupes}")
        for node in _preorder(root):
            if node is root:
                continue
            if node.length is None:
                raise NewickError(f"missing branch length above {node.name or 'internal node'}")
            if not np.isfinite(node.length) or node.length < 0:
                raise NewickError(f"negative or non-finite branch length {node.length!r}")
        self._tips = tips

    @property
    def tip_labels(self) -> list[str]:
        return [t.name for t in self._tips]

    @property
    def n_tips(self) -> int:
        return len(self._tips)

    def preorder(self) -> Iterator[Node]:
        return _preorder(self.root)

    def postorder(self) -> Iterator[Node]:
        return _postorder(self.root)

    def depths(self) -> dict[Node, float]:
        """Root-to-node path length for every node."""
        depth = {self.root: 0.0}
        for node in _preorder(self.root):
            for c in node.children:
                depth[c] = depth[node] + c.length
        return depth

    def tip_depths(self) -> dict[str, float]:
        d = self.depths()
        return {t.name: d[t] for t in self._tips}

    def height(self) -> float:
        return max(self.tip_depths().values())

    def is_ultrametric(self, tol: float = 1e-9) -> bool:
        d = np.array(list(self.tip_depths().values()))
        return bool(d.max() - d.min() <= tol * max(1.0, d.max()))

    def to_newick(self) -> str:
        return to_newick(self)

    def __str__(self):
        return self.to_newick()

    def __repr__(self):
        return f"Phylogeny({self.n_tips} tips)"


# --------------------------------------------------------------------- parsing

_TOKEN = re.compile(r"\s*(?:(\[)|(')|([(),:;])|([^\s()\[\]',:;]+))")


def _tokens(text: str):
    """Yield (kind, value, pos); kinds: punct, quoted, word."""
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                return
            raise NewickError(f"unexpected character {text[pos]!r} at position {pos}")
        start = m.start(m.lastindex) if m.lastindex else pos
        if m.group(1):
            depth = 1
            j = m.end()
            while j < n and depth:
                if text[j] == "[":
                    depth += 1
                elif text[j] == "]":
                    depth -= 1
                j += 1
            if depth:
                raise NewickError(f"unterminated comment starting at position {start}")
            pos = j
            continue
        if m.group(2):
            j = m.end()
            chars = []
            while True:
                k = text.find("'", j)
                if k < 0:
                    raise NewickError(f"unterminated quoted label at position {start}")
                chars.append(text[j:k])
                if k + 1 < n and text[k + 1] == "'":
                    chars.append("'")
                    j = k + 2
                    continue
                pos = k + 1
                break
            yield "quoted", "".join(chars), start
            continue
        if m.group(3):
            yield "punct", m.group(3), start
        else:
            yield "word", m.group(4), start
        pos = m.end()


def _parse_length(value: str, pos: int) -> float:
    try:
        x = float(value)
    except ValueError:
        raise NewickError(f"bad branch length {value!r} at position {pos}") from None
    if not np.isfinite(x):
        raise NewickError(f"non-finite branch length {value!r} at position {pos}")
    if x < 0:
        raise NewickError(f"negative branch length {value!r} at position {pos}")
    return x


def parse_newick(text: str) -> Phylogeny:
    """Parse one Newick statement (terminated by ``;``) with branch lengths."""
    root = Node()
    current = root
    stack: list[Node] = []
    expect_label = True  # a label may follow '(' ',' or ')'
    finished = False
    toks = list(_tokens(text))
    i = 0
    while i < len(toks):
        kind, val, pos = toks[i]
        if finished:
            raise NewickError(f"unexpected text after ';' at position {pos}")
        if kind == "punct":
            if val == "(":
                stack.append(current)
                current = current.add_child(Node())
                expect_label = True
            elif val == ",":
                if not stack:
                    raise NewickError(f"',' outside parentheses at position {pos}")
                current = stack[-1].add_child(Node())
                expect_label = True
            elif val == ")":
                if not stack:
                    raise NewickError(f"unbalanced ')' at position {pos}")
                current = stack.pop()
                expect_label = True
            elif val == ":":
                if i + 1 >= len(toks) or toks[i + 1][0] != "word":
                    raise NewickError(f"missing branch length after ':' at position {pos}")
                if current.length is not None:
                    raise NewickError(f"second branch length at position {pos}")
                current.length = _parse_length(toks[i + 1][1], toks[i + 1][2])
                expect_label = False
                i += 1
            elif val == ";":
                if stack:
                    raise NewickError("unbalanced parentheses: missing ')'")
                finished = True
        else:
            if not expect_label or current.name is not None:
                raise NewickError(f"unexpected label {val!r} at position {pos}")
            current.name = val
            expect_label = False
        i += 1
    if stack:
        raise NewickError("unbalanced parentheses: missing ')'")
    if not finished:
        raise NewickError("missing ';' at end of tree")
    return Phylogeny(root)


_NEEDS_QUOTES = re.compile(r"[\s()\[\]',:;]")


def _fmt_label(name: str | None) -> str:
    if not name:
        return ""
    if _NEEDS_QUOTES.search(name):
        return "'" + name.replace("'", "''") + "'"
    return name


def _fmt_length(x: float) -> str:
    return repr(float(x))


def to_newick(tree: Phylogeny) -> str:
    """Serialize so that parsing the result reproduces lengths bit for bit."""
    out: dict[Node, str] = {}
    for node in _postorder(tree.root):
        s = _fmt_label(node.name)
        if node.children:
            s = "(" + ",".join(out.pop(c) for c in node.children) + ")" + s
        if node.length is not None:
            s += ":" + _fmt_length(node.length)
        out[node] = s
    return out[tree.root] + ";"


@dataclass
class TreeSample:
    trees: list[Phylogeny]

    def __post_init__(self):
        if not self.trees:
            raise NewickError("no trees")

    def __len__(self):
        return len(self.trees)

    def __iter__(self):
        return iter(self.trees)

    def __getitem__(self, i):
        return self.trees[i]


def _strip_comments(line: str) -> str:
    return re.sub(r"\[[^\]]*\]", "", line)


def _parse_nexus(text: str) -> list[Phylogeny]:
    lines = text.splitlines()
    in_trees = False
    translate: dict[str, str] = {}
    collecting_translate = False
    pending = ""
    trees = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        low = line.lower()
        if not in_trees:
            if re.match(r"begin\s+trees\s*;", low):
                in_trees = True
            continue
        if re.match(r"end\s*;", low) or low.startswith("endblock"):
            break
        if collecting_translate or low.startswith("translate"):
            body = line[len("translate"):] if low.startswith("translate") else line
            collecting_translate = not body.rstrip().endswith(";")
            for key, name in re.findall(r"(\S+)\s+('(?:[^']|'')*'|[^\s,;]+)", body):
                if name.startswith("'"):
                    name = name[1:-1].replace("''", "'")
                translate[key] = name
            continue
        m = re.match(r"u?tree\s+(?:\*\s*)?[^=]*=\s*(.*)$", line, re.IGNORECASE)
        if m or pending:
            stmt = pending + (m.group(1) if m else line)
            if ";" not in stmt:
                pending = stmt + " "
                continue
            pending = ""
            try:
                tree = parse_newick(stmt[: stmt.index(";") + 1])
            except NewickError as exc:
                raise NewickError(f"line {lineno}: {exc}") from None
            if translate:
                for node in tree.preorder():
                    if node.is_leaf() and node.name in translate:
                        node.name = translate[node.name]
                tree = Phylogeny(tree.root)
            trees.append(tree)
    return trees


def parse_tree_sample(text: str) -> TreeSample:
    """One Newick tree per line, or a Nexus file with a TREES block."""
    if text.lstrip().upper().startswith("#NEXUS"):
        trees = _parse_nexus(text)
    else:
        trees = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                trees.append(parse_newick(line))
            except NewickError as exc:
                raise NewickError(f"line {lineno}: {exc}") from None
    if not trees:
        raise NewickError("no trees")
    return TreeSample(trees)


def read_tree_sample(path) -> TreeSample:
    with open(path, encoding="utf-8") as fh:
        return parse_tree_sample(fh.read())


def format_tree_sample(sample: Iterable[Phylogeny]) -> str:
    return "".join(to_newick(t) + "\n" for t in sample)


# --------------------------------------------------------------- manipulation

def prune(tree: Phylogeny, keep: Iterable[str]) -> Phylogeny:
    """Restrict ``tree`` to the tips in ``keep``.

    Unary internal nodes left behind are suppressed (branch lengths summed),
    except that the root keeps its single child so every kept tip retains
    its root-to-tip distance.
    """
    keep = set(keep)
    labels = set(tree.tip_labels)
    missing = sorted(keep - labels)
    if missing:
        raise TaxonError(f"labels not in tree: {missing}")
    if len(keep) < 2:
        raise ValueError("prune needs at least 2 tips to keep")

    copies: dict[Node, Node | None] = {}
    for node in _postorder(tree.root):
        if node.is_leaf():
            copies[node] = Node(node.name, node.length) if node.name in keep else None
            continue
        kids = [copies.pop(c) for c in node.children]
        kids = [k for k in kids if k is not None]
        if not kids:
            copies[node] = None
        elif len(kids) == 1 and node is not tree.root:
            only = kids[0]
            only.length = node.length + only.length
            copies[node] = only
        else:
            new = Node(node.name, node.length)
            for k in kids:
                new.add_child(k)
            copies[node] = new
    return Phylogeny(copies[tree.root])


def rename_tips(tree: Phylogeny, mapping) -> Phylogeny:
    """Copy of ``tree`` with tip labels passed through ``mapping`` (callable or dict)."""
    fn = mapping if callable(mapping) else (lambda s: mapping.get(s, s))
    copies: dict[Node, Node] = {}
    for node in _postorder(tree.root):
        new = Node(fn(node.name) if node.is_leaf() else node.name, node.length)
        for c in node.children:
            new.add_child(copies.pop(c))
        copies[node] = new
    return Phylogeny(copies[tree.root])


@dataclass(frozen=True)
class PhyloCovariance:
    """Shared root-to-tip path lengths between taxa (Brownian-motion ``C``)."""

    taxa: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (len(self.taxa), len(self.taxa)):
            raise ValueError("covariance shape does not match taxa")
        object.__setattr__(self, "taxa", tuple(self.taxa))
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return len(self.taxa)

    def index(self, labels: Sequence[str]) -> list[int]:
        pos = {t: i for i, t in enumerate(self.taxa)}
        missing = [t for t in labels if t not in pos]
        if missing:
            raise TaxonError(f"taxa not in covariance: {missing}")
        return [pos[t] for t in labels]

    def submatrix(self, labels: Sequence[str]) -> "PhyloCovariance":
        idx = self.index(labels)
        return PhyloCovariance(tuple(labels), self.matrix[np.ix_(idx, idx)])

    @classmethod
    def identity(cls, taxa: Sequence[str]) -> "PhyloCovariance":
        return cls(tuple(taxa), np.eye(len(taxa)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([""] + list(self.taxa))
        for t, row in zip(self.taxa, self.matrix):
            w.writerow([t] + [repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PhyloCovariance":
        rows = list(csv.reader(io.StringIO(text)))
        taxa = tuple(rows[0][1:])
        if [r[0] for r in rows[1:]] != list(taxa):
            raise ValueError("row and column taxa differ")
        return cls(taxa, np.array([[float(v) for v in r[1:]] for r in rows[1:]]))


def vcv(tree: Phylogeny, taxa: Sequence[str] | None = None) -> PhyloCovariance:
    """Phylogenetic variance-covariance matrix of ``tree``.

    Entry ``(i, j)`` is the depth of the most recent common ancestor of
    tips i and j; the diagonal holds root-to-tip distances.  ``taxa``
    fixes the row order (default: tip order in the tree).
    """
    order = list(tree.tip_labels) if taxa is None else list(taxa)
    pos = {t: i for i, t in enumerate(order)}
    missing = sorted(set(order) ^ set(tree.tip_labels))
    if missing:
        raise TaxonError(f"taxa and tree tips differ: {missing}")
    depth = tree.depths()
    n = len(order)
    C = np.zeros((n, n))
    below: dict[Node, list[int]] = {}
    for node in tree.postorder():
        if node.is_leaf():
            i = pos[node.name]
            C[i, i] = depth[node]
            below[node] = [i]
            continue
        groups = [below.pop(c) for c in node.children]
        d = depth[node]
        for a in range(len(groups)):
            for b in range(a + 1, len(groups)):
                ia, ib = groups[a], groups[b]
                C[np.ix_(ia, ib)] = d
                C[np.ix_(ib, ia)] = d
        below[node] = [i for g in groups for i in g]
    return PhyloCovariance(tuple(order), C)


# ------------------------------------------------------------------ builders

def balanced_tree(n_levels: int, branch_length: float = 1.0, prefix: str = "t") -> Phylogeny:
    """Fully balanced binary tree with ``2**n_levels`` tips and equal branches."""
    root = Node()
    frontier = [root]
    for _ in range(n_levels):
        nxt = []
        for node in frontier:
            for _ in range(2):
                nxt.append(node.add_child(Node(length=branch_length)))
        frontier = nxt
    width = len(str(len(frontier)))
    for i, leaf in enumerate(frontier):
        leaf.name = f"{prefix}{i:0{width}d}"
    return Phylogeny(root)


def star_tree(labels: Sequence[str], branch_length: float = 1.0) -> Phylogeny:
    root = Node()
    for lab in labels:
        root.add_child(Node(lab, branch_length))
    return Phylogeny(root)


def random_tree(labels: Sequence[str], rng: np.random.Generator, ultrametric: bool = True) -> Phylogeny:
    """Random binary tree by successive merging of lineages.

    With ``ultrametric`` the result is a coalescent-style dated tree of
    height about 1; otherwise branch lengths are i.i.d. exponential.
    """
    nodes = [Node(lab) for lab in labels]
    if len(nodes) < 2:
        raise ValueError("need at least 2 labels")
    times = {id(n): 0.0 for n in nodes}
    t = 0.0
    active = list(nodes)
    while len(active) > 1:
        k = len(active)
        t += rng.exponential(2.0 / (k * (k - 1)))
        i, j = sorted(rng.choice(k, size=2, replace=False))
        a, b = active[i], active[j]
        parent = Node()
        for child in (a, b):
            child.length = (t - times[id(child)]) if ultrametric else float(rng.exponential(0.5))
            parent.add_child(child)
        times[id(parent)] = t
        active = [n for idx, n in enumerate(active) if idx not in (i, j)] + [parent]
    return Phylogeny(active[0])
