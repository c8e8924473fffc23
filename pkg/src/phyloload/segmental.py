"""Segment inventories, segmented lexicons and VC domain extraction.

Inventory and lexicon files are UTF-8 TSV (see README).  Every lexical
entry contributes at most one domain token: its first (tonic) vowel plus
the single intervocalic consonant that follows it.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

logger = logging.getLogger(__name__)

VOWEL = "vowel"
CONSONANT = "consonant"
SHORT = "short"
LONG = "long"

# Prefix reserved for merged symbols produced when a contrast is collapsed.
RESERVED_PREFIX = "*"

DEFAULT_GLIDES = {"w": "u", "j": "i"}

_CATEGORY_ALIASES = {"v": VOWEL, "vowel": VOWEL, "c": CONSONANT, "consonant": CONSONANT}
_LENGTH_ALIASES = {"s": SHORT, "short": SHORT, "l": LONG, "long": LONG}
INVENTORY_HEADER = ("symbol", "category", "length", "quality", "place", "manner")


class InventoryError(ValueError):
    """Malformed or inconsistent inventory file."""


class LexiconError(ValueError):
    """Lexicon entry that cannot be resolved against the inventory."""


@dataclass(frozen=True)
class Segment:
    symbol: str
    category: str
    length: str | None = None
    quality: str | None = None
    place: str | None = None
    manner: str | None = None

    def __post_init__(self):
        if self.category == VOWEL:
            if self.length not in (SHORT, LONG) or not self.quality:
                raise InventoryError(f"vowel {self.symbol!r} needs length and quality")
            if self.place or self.manner:
                raise InventoryError(f"vowel {self.symbol!r} cannot carry place/manner")
        elif self.category == CONSONANT:
            if not self.place or not self.manner:
                raise InventoryError(f"consonant {self.symbol!r} needs place and manner")
            if self.length or self.quality:
                raise InventoryError(f"consonant {self.symbol!r} cannot carry length/quality")
        else:
            raise InventoryError(f"unknown category {self.category!r} for {self.symbol!r}")

    @property
    def is_vowel(self) -> bool:
        return self.category == VOWEL

    @property
    def is_short_vowel(self) -> bool:
        return self.category == VOWEL and self.length == SHORT


@dataclass(frozen=True)
class SegmentInventory:
    """Symbol table plus the short/long vowel pairing by quality."""

    segments: Mapping[str, Segment]
    long_counterpart: Mapping[str, tuple[str, str]] = field(default_factory=dict)

    def __post_init__(self):
        for quality, (short, long_) in self.long_counterpart.items():
            s, l = self.segments.get(short), self.segments.get(long_)
            if s is None or l is None:
                raise InventoryError(f"length pair for {quality!r} references unknown symbols")
            if not (s.is_vowel and l.is_vowel) or s.quality != quality or l.quality != quality:
                raise InventoryError(f"length pair for {quality!r} must be vowels of that quality")
            if (s.length, l.length) != (SHORT, LONG):
                raise InventoryError(f"length pair for {quality!r} must be (short, long)")

    @classmethod
    def from_segments(cls, segments: Iterable[Segment]) -> "SegmentInventory":
        table: dict[str, Segment] = {}
        for seg in segments:
            if seg.symbol in table:
                raise InventoryError(f"duplicate symbol {seg.symbol!r}")
            table[seg.symbol] = seg
        return cls(table, _pair_lengths(table))

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.segments

    def __getitem__(self, symbol: str) -> Segment:
        return self.segments[symbol]

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def symbols(self) -> list[str]:
        return list(self.segments)

    def vowels(self) -> list[Segment]:
        return [s for s in self.segments.values() if s.category == VOWEL]

    def consonants(self) -> list[Segment]:
        return [s for s in self.segments.values() if s.category == CONSONANT]

    def short_vowel(self, quality: str) -> str | None:
        pair = self.long_counterpart.get(quality)
        if pair is not None:
            return pair[0]
        shorts = [s.symbol for s in self.vowels() if s.quality == quality and s.length == SHORT]
        return shorts[0] if len(shorts) == 1 else None


def _pair_lengths(table: Mapping[str, Segment]) -> dict[str, tuple[str, str]]:
    by_quality: dict[str, dict[str, list[str]]] = {}
    for seg in table.values():
        if seg.is_vowel:
            by_quality.setdefault(seg.quality, {SHORT: [], LONG: []})[seg.length].append(seg.symbol)
    pairs = {}
    for quality, groups in by_quality.items():
        if len(groups[SHORT]) > 1 or len(groups[LONG]) > 1:
            raise InventoryError(
                f"quality {quality!r} has several vowels of one length: "
                f"{groups[SHORT] + groups[LONG]}"
            )
        if groups[SHORT] and groups[LONG]:
            pairs[quality] = (groups[SHORT][0], groups[LONG][0])
    return pairs


def parse_inventory(text: str) -> SegmentInventory:
    """Parse an inventory TSV.

    Columns are ``symbol category length quality place manner`` with a
    header row; inapplicable cells are left empty.  Category accepts
    ``V``/``C`` or ``vowel``/``consonant``; length accepts ``short``/``long``
    (or ``S``/``L``).
    """
    lines = text.splitlines()
    rows = [(i + 1, line) for i, line in enumerate(lines) if line.strip() and not line.startswith("#")]
    if not rows:
        raise InventoryError("empty inventory")
    header_line, header = rows[0]
    if tuple(c.strip().lower() for c in header.split("\t")) != INVENTORY_HEADER:
        raise InventoryError(f"line {header_line}: expected header {' '.join(INVENTORY_HEADER)}")

    table: dict[str, Segment] = {}
    seen: dict[str, int] = {}
    for lineno, line in rows[1:]:
        cells = [c.strip() for c in line.split("\t")]
        if len(cells) < len(INVENTORY_HEADER):
            cells += [""] * (len(INVENTORY_HEADER) - len(cells))
        if len(cells) > len(INVENTORY_HEADER) or not cells[0]:
            raise InventoryError(f"line {lineno}: malformed row {line!r}")
        symbol, category, length, quality, place, manner = cells
        if symbol in seen:
            raise InventoryError(
                f"line {lineno}: duplicate symbol {symbol!r} (first defined on line {seen[symbol]})"
            )
        if symbol.startswith(RESERVED_PREFIX) or any(ch.isspace() for ch in symbol):
            raise InventoryError(f"line {lineno}: symbol {symbol!r} uses a reserved character")
        cat = _CATEGORY_ALIASES.get(category.lower())
        if cat is None:
            raise InventoryError(f"line {lineno}: unknown category {category!r}")
        if cat == VOWEL:
            if not quality:
                raise InventoryError(f"line {lineno}: vowel {symbol!r} missing quality")
            if length.lower() not in _LENGTH_ALIASES:
                raise InventoryError(f"line {lineno}: vowel {symbol!r} missing or bad length {length!r}")
            if place or manner:
                raise InventoryError(f"line {lineno}: vowel {symbol!r} has place/manner")
            seg = Segment(symbol, VOWEL, _LENGTH_ALIASES[length.lower()], quality)
        else:
            if not place or not manner:
                raise InventoryError(f"line {lineno}: consonant {symbol!r} missing place/manner")
            if length or quality:
                raise InventoryError(f"line {lineno}: consonant {symbol!r} has length/quality")
            seg = Segment(symbol, CONSONANT, place=place, manner=manner)
        seen[symbol] = lineno
        table[symbol] = seg
    try:
        return SegmentInventory(table, _pair_lengths(table))
    except InventoryError as exc:
        raise InventoryError(f"{exc} (inventory ending line {rows[-1][0]})") from None


@dataclass(frozen=True)
class LexicalEntry:
    form: tuple[str, ...]
    gloss: str | None = None
    source_line: int = 0


@dataclass(frozen=True)
class DomainToken:
    vowel: Segment
    consonant: Segment

    def __post_init__(self):
        if self.vowel.category != VOWEL or self.consonant.category != CONSONANT:
            raise ValueError("domain token needs a vowel then a consonant")

    @property
    def key(self) -> tuple[str, str]:
        return (self.vowel.symbol, self.consonant.symbol)


def tokenize(text: str, inv: SegmentInventory, *, offset: int = 0) -> list[str]:
    """Greedy longest-match segmentation of an undelimited string."""
    symbols = sorted(inv.segments, key=len, reverse=True)
    out: list[str] = []
    pos = 0
    while pos < len(text):
        for sym in symbols:
            if text.startswith(sym, pos):
                out.append(sym)
                pos += len(sym)
                break
        else:
            raise LexiconError(f"no inventory symbol matches at offset {offset + pos} in {text!r}")
    return out


def _split_with_offsets(form: str):
    pos = 0
    for chunk in form.split():
        pos = form.index(chunk, pos)
        yield pos, chunk
        pos += len(chunk)


def parse_form(form: str, inv: SegmentInventory, *, mode: str = "canonical") -> list[str]:
    """Turn one lexicon form into a list of inventory symbols.

    In ``canonical`` mode symbols are whitespace separated; in ``tokenize``
    mode each whitespace-delimited chunk is segmented by longest match.
    Error offsets are character offsets into ``form``.
    """
    symbols: list[str] = []
    for pos, chunk in _split_with_offsets(form):
        if mode == "canonical":
            if chunk not in inv:
                raise LexiconError(f"unknown symbol {chunk!r} at offset {pos}")
            symbols.append(chunk)
        elif mode == "tokenize":
            symbols.extend(tokenize(chunk, inv, offset=pos))
        else:
            raise ValueError(f"unknown lexicon mode {mode!r}")
    return symbols


def format_form(form: Sequence[str]) -> str:
    return " ".join(form)


def parse_lexicon(text: str, inv: SegmentInventory, *, mode: str = "canonical") -> list[LexicalEntry]:
    lines = text.splitlines()
    entries: list[LexicalEntry] = []
    header_seen = False
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.split("\t")
        if not header_seen:
            header_seen = True
            if [c.strip().lower() for c in cells[:2]] == ["form", "gloss"] or cells[0].strip().lower() == "form":
                continue
            raise LexiconError(f"line {lineno}: expected header 'form<TAB>gloss'")
        form = cells[0]
        gloss = cells[1].strip() if len(cells) > 1 and cells[1].strip() else None
        try:
            symbols = parse_form(form, inv, mode=mode)
        except LexiconError as exc:
            raise LexiconError(f"line {lineno}: entry {form.strip()!r}: {exc}") from None
        if not symbols:
            raise LexiconError(f"line {lineno}: empty form")
        entries.append(LexicalEntry(tuple(symbols), gloss, lineno))
    return entries


def normalize_vowel_length(
    form: Sequence[str], inv: SegmentInventory, glides: Mapping[str, str] | None = None
) -> list[str]:
    """Rewrite vowel-glide-vowel and short-short vowel sequences as long vowels.

    ``glides`` maps a glide symbol to the vowel quality it lengthens
    (default ``w -> u`` and ``j -> i``).  Glide trigraphs are handled
    first, then adjacent short vowels, both scanning left to right.
    """
    glides = DEFAULT_GLIDES if glides is None else glides
    out: list[str] = []
    i = 0
    while i < len(form):
        sym = form[i]
        quality = glides.get(sym)
        if quality is not None and out and i + 1 < len(form):
            short = inv.short_vowel(quality)
            pair = inv.long_counterpart.get(quality)
            if short is not None and pair is not None and out[-1] == short and form[i + 1] == short:
                out[-1] = pair[1]
                i += 2
                continue
        out.append(sym)
        i += 1

    merged: list[str] = []
    i = 0
    while i < len(out):
        seg = inv[out[i]]
        if seg.is_short_vowel and i + 1 < len(out) and inv[out[i + 1]].is_short_vowel:
            pair = inv.long_counterpart.get(seg.quality)
            if pair is None:
                raise LexiconError(
                    f"adjacent short vowels {out[i]}{out[i + 1]} but quality "
                    f"{seg.quality!r} has no long counterpart"
                )
            merged.append(pair[1])
            i += 2
        else:
            merged.append(out[i])
            i += 1
    return merged


# reasons an entry yields no domain token
NO_VOWEL = "no_vowel"
WORD_FINAL = "word_final"
CLUSTER = "cluster"
NOT_INTERVOCALIC = "not_intervocalic"


def _classify(form: Sequence[str], inv: SegmentInventory) -> DomainToken | str:
    for i, sym in enumerate(form):
        if inv[sym].is_vowel:
            break
    else:
        return NO_VOWEL
    if i + 1 >= len(form):
        return WORD_FINAL
    nxt = inv[form[i + 1]]
    if nxt.is_vowel:
        # long/short normalisation leaves no vowel-vowel sequence for the
        # common case; a remaining one (e.g. long + short) has no consonant
        return NOT_INTERVOCALIC
    if i + 2 >= len(form):
        return NOT_INTERVOCALIC
    if not inv[form[i + 2]].is_vowel:
        return CLUSTER
    return DomainToken(inv[form[i]], nxt)


def extract_domains(entry: LexicalEntry, inv: SegmentInventory) -> DomainToken | None:
    """Tonic vowel plus its single following intervocalic consonant, if any."""
    result = _classify(entry.form, inv)
    return result if isinstance(result, DomainToken) else None


@dataclass
class ExtractionStats:
    entries: int = 0
    tokens: int = 0
    skipped: Counter = field(default_factory=Counter)


def domain_tokens(
    entries: Iterable[LexicalEntry],
    inv: SegmentInventory,
    glides: Mapping[str, str] | None = None,
) -> tuple[list[DomainToken], ExtractionStats]:
    """Normalize each entry and collect its domain token, with skip counts."""
    stats = ExtractionStats()
    tokens = []
    for entry in entries:
        stats.entries += 1
        form = normalize_vowel_length(entry.form, inv, glides)
        result = _classify(form, inv)
        if isinstance(result, DomainToken):
            tokens.append(result)
        else:
            if result == NO_VOWEL:
                logger.warning("line %d: entry %r has no vowel; skipped", entry.source_line, format_form(entry.form))
            stats.skipped[result] += 1
    stats.tokens = len(tokens)
    return tokens, stats


def build_distribution(
    entries: Iterable[LexicalEntry],
    inv: SegmentInventory,
    glides: Mapping[str, str] | None = None,
):
    """Count VC domain types over a lexicon (one token per qualifying entry)."""
    from .funcload import DomainDistribution

    tokens, stats = domain_tokens(entries, inv, glides)
    if not tokens:
        raise ValueError(f"no qualifying domain tokens among {stats.entries} entries")
    return DomainDistribution(Counter(t.key for t in tokens))
