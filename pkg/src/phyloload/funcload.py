"""Domain entropy and functional load of phonological contrasts."""
from __future__ import annotations

import csv
import io
import logging
import math
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .segmental import (
    RESERVED_PREFIX,
    LexicalEntry,
    SegmentInventory,
    domain_tokens,
)

logger = logging.getLogger(__name__)

FL_COLUMNS = ("language", "fl_v", "fl_c", "fl_p", "n")


class ContrastError(ValueError):
    """A contrast specification that cannot be built or is invalid."""


class DomainDistribution:
    """Multiset of domain string types (tuples of symbols) with counts."""

    __slots__ = ("_counts", "_n")

    def __init__(self, counts: Mapping[Sequence[str], int]):
        table: dict[tuple[str, ...], int] = {}
        for key, c in counts.items():
            if isinstance(key, str):
                key = (key,)
            if int(c) != c or c < 1:
                raise ValueError(f"count for {key!r} must be a positive integer, got {c!r}")
            key = tuple(key)
            table[key] = table.get(key, 0) + int(c)
        self._counts = MappingProxyType(table)
        self._n = sum(table.values())

    @property
    def counts(self) -> Mapping[tuple[str, ...], int]:
        return self._counts

    @property
    def n(self) -> int:
        return self._n

    N = n

    def __len__(self) -> int:
        return len(self._counts)

    def __eq__(self, other):
        if not isinstance(other, DomainDistribution):
            return NotImplemented
        return dict(self._counts) == dict(other._counts)

    def __repr__(self):
        body = ", ".join(f"{''.join(k)}:{c}" for k, c in sorted(self._counts.items()))
        return f"DomainDistribution({{{body}}}, N={self._n})"

    def probabilities(self) -> dict[tuple[str, ...], float]:
        return {k: c / self._n for k, c in self._counts.items()}


@dataclass(frozen=True)
class ContrastSpec:
    """Named collection of pairwise disjoint symbol sets to be merged."""

    name: str
    sets: tuple[frozenset[str], ...]

    def __post_init__(self):
        sets = tuple(frozenset(s) for s in self.sets)
        object.__setattr__(self, "sets", sets)
        seen: set[str] = set()
        for s in sets:
            if len(s) < 2:
                raise ContrastError(f"{self.name}: contrast set {sorted(s)} has fewer than 2 members")
            if seen & s:
                raise ContrastError(f"{self.name}: sets overlap on {sorted(seen & s)}")
            seen |= s

    def validate(self, inv: SegmentInventory) -> None:
        missing = sorted(sym for s in self.sets for sym in s if sym not in inv)
        if missing:
            raise ContrastError(f"{self.name}: symbols not in inventory: {missing}")

    def merge_map(self) -> dict[str, str]:
        """Symbol -> fresh merged symbol, one per set."""
        return {sym: f"{RESERVED_PREFIX}{i}" for i, s in enumerate(self.sets) for sym in s}


def domain_entropy(dist: DomainDistribution) -> float:
    """Shannon entropy in bits of the domain type distribution."""
    if dist.n == 0:
        raise ValueError("entropy of an empty distribution")
    n = dist.n
    # sorted so equal multisets of counts give bit-identical entropies
    return -math.fsum(c / n * math.log2(c / n) for c in sorted(dist.counts.values()))


def collapse_lexicon(dist: DomainDistribution, spec: ContrastSpec) -> DomainDistribution:
    mapping = spec.merge_map()
    merged: dict[tuple[str, ...], int] = {}
    for key, c in dist.counts.items():
        new = tuple(mapping.get(sym, sym) for sym in key)
        merged[new] = merged.get(new, 0) + c
    return DomainDistribution(merged)


def functional_load(dist: DomainDistribution, spec: ContrastSpec) -> float:
    """Entropy lost, in bits, when every set of ``spec`` is merged."""
    return domain_entropy(dist) - domain_entropy(collapse_lexicon(dist, spec))


def make_length_spec(inv: SegmentInventory) -> ContrastSpec:
    if not inv.long_counterpart:
        raise ContrastError("no length contrast: inventory has no short/long vowel pair")
    sets = [frozenset(pair) for _, pair in sorted(inv.long_counterpart.items())]
    return ContrastSpec("FL_V", tuple(sets))


def _group_consonants(inv: SegmentInventory, attr: str) -> list[frozenset[str]]:
    groups: dict[str, set[str]] = {}
    for seg in inv.consonants():
        groups.setdefault(getattr(seg, attr), set()).add(seg.symbol)
    return [frozenset(groups[k]) for k in sorted(groups) if len(groups[k]) >= 2]


def make_manner_spec(inv: SegmentInventory) -> ContrastSpec:
    """Merge all consonants sharing a place, so only place distinctions survive."""
    sets = _group_consonants(inv, "place")
    if not sets:
        raise ContrastError("no manner contrast: every place has a single consonant")
    return ContrastSpec("FL_C", tuple(sets))


def make_place_spec(inv: SegmentInventory) -> ContrastSpec:
    """Merge all consonants sharing a manner, so only manner distinctions survive."""
    sets = _group_consonants(inv, "manner")
    if not sets:
        raise ContrastError("no place contrast: every manner has a single consonant")
    return ContrastSpec("FL_P", tuple(sets))


@dataclass(frozen=True)
class FLResult:
    language: str
    fl_v: float
    fl_c: float
    fl_p: float
    n: int

    def __post_init__(self):
        if min(self.fl_v, self.fl_c, self.fl_p) < 0:
            raise ValueError(f"{self.language}: negative functional load")
        if self.n < 1:
            raise ValueError(f"{self.language}: n must be >= 1")


@dataclass(frozen=True)
class Exclusion:
    language: str
    reason: str
    n: int


def _fl_or_zero(dist, inv, make_spec, language):
    try:
        spec = make_spec(inv)
    except ContrastError as exc:
        logger.info("%s: %s; FL set to 0", language, exc)
        return 0.0
    return functional_load(dist, spec)


def _fl_from_tokens(language, tokens, inv) -> FLResult:
    dist = DomainDistribution(Counter(t.key for t in tokens))
    return FLResult(
        language,
        _fl_or_zero(dist, inv, make_length_spec, language),
        _fl_or_zero(dist, inv, make_manner_spec, language),
        _fl_or_zero(dist, inv, make_place_spec, language),
        dist.n,
    )


def language_fl(
    language: str,
    entries: Iterable[LexicalEntry],
    inv: SegmentInventory,
    glides: Mapping[str, str] | None = None,
) -> FLResult:
    tokens, _ = domain_tokens(entries, inv, glides)
    if not tokens:
        raise ValueError(f"{language}: no qualifying domain tokens")
    return _fl_from_tokens(language, tokens, inv)


def compute_fl_table(
    languages: Mapping[str, tuple[Sequence[LexicalEntry], SegmentInventory]],
    min_n: int = 200,
    drop_zero_flv: bool = True,
    glides: Mapping[str, str] | None = None,
) -> tuple[list[FLResult], list[Exclusion]]:
    """FL_V, FL_C and FL_P per language, with filtered languages reported.

    Returns ``(kept, excluded)``; together they cover every input language.
    """
    if min_n < 1:
        raise ValueError("min_n must be >= 1")
    kept: list[FLResult] = []
    excluded: list[Exclusion] = []
    for language in sorted(languages):
        entries, inv = languages[language]
        tokens, _ = domain_tokens(entries, inv, glides)
        if len(tokens) < min_n:
            excluded.append(Exclusion(language, f"n<{min_n}", len(tokens)))
            logger.info("%s excluded: %d domain tokens < %d", language, len(tokens), min_n)
            continue
        res = _fl_from_tokens(language, tokens, inv)
        if drop_zero_flv and res.fl_v == 0:
            excluded.append(Exclusion(language, "fl_v=0", res.n))
            logger.info("%s excluded: FL_V is zero", language)
            continue
        kept.append(res)
    return kept, excluded


def read_fl_table(source) -> list[FLResult]:
    """Read an FL CSV (``language,fl_v,fl_c,fl_p,n``) from a path or text stream."""
    if hasattr(source, "read"):
        return _read_fl(source)
    with open(source, newline="", encoding="utf-8") as fh:
        return _read_fl(fh)


def _read_fl(fh) -> list[FLResult]:
    reader = csv.DictReader(fh)
    missing = set(FL_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"FL table missing columns {sorted(missing)}")
    return [
        FLResult(row["language"], float(row["fl_v"]), float(row["fl_c"]), float(row["fl_p"]), int(row["n"]))
        for row in reader
    ]


def load_appendix_a() -> list[FLResult]:
    """The published 90-language Pama-Nyungan FL table shipped with the package."""
    text = resources.files("phyloload").joinpath("data/appendix_a.csv").read_text(encoding="utf-8")
    return _read_fl(io.StringIO(text))


def appendix_a_path():
    return resources.files("phyloload").joinpath("data/appendix_a.csv")


def format_fl_table(rows: Iterable[FLResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FL_COLUMNS)
    for r in rows:
        w.writerow([r.language, f"{r.fl_v:.6f}", f"{r.fl_c:.6f}", f"{r.fl_p:.6f}", r.n])
    return buf.getvalue()
