"""Analysis configuration, data loading and the command implementations.

Each ``cmd_*`` function takes an :class:`AnalysisConfig` and writes its
outputs atomically under ``config.out``.  Failures are raised as
:class:`PipelineError` carrying the process exit code.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import funcload, phylostats, phylotree, segmental

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DEGENERATE = 1
EXIT_INPUT = 2

TRAITS = ("fl_v", "fl_c", "fl_p")


class PipelineError(Exception):
    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


@dataclass
class AnalysisConfig:
    lexicons: str | None = None
    inventories: str | None = None
    trees: str | None = None
    fl: str | None = None
    out: str = "phyloload-out"
    min_n: int = 200
    drop_zero_flv: bool = True
    seed: int = 0
    jitter: bool = False
    tokenize: bool = False
    n_perm: int = 0

    def __post_init__(self):
        if self.min_n < 1:
            raise PipelineError("min_n must be >= 1")


_BOOL = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file (``#`` comments, blank lines ignored)."""
    fields = {f.name: f for f in dataclasses.fields(AnalysisConfig)}
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise PipelineError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise PipelineError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in fields:
            raise PipelineError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(fields[key], value, f"{path}:{lineno}")
    return values


def _coerce(f: dataclasses.Field, value: str, where: str):
    kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    try:
        if kind.startswith("bool"):
            return _BOOL[value.lower()]
        if kind.startswith("int"):
            return int(value)
    except (KeyError, ValueError):
        raise PipelineError(f"{where}: bad value {value!r} for {f.name}") from None
    return value


def build_config(file_values: dict | None = None, cli_values: dict | None = None) -> AnalysisConfig:
    """Defaults < config file < command-line flags (``None`` means unset)."""
    merged = dict(file_values or {})
    merged.update({k: v for k, v in (cli_values or {}).items() if v is not None})
    return AnalysisConfig(**merged)


# ---------------------------------------------------------------------- I/O

def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def normalize_taxon(name: str) -> str:
    return re.sub(r"\s+", " ", name.strip().replace("_", " "))


def read_traits(path, columns: Sequence[str]) -> dict[str, phylostats.TraitVector]:
    """Read named numeric columns of a CSV keyed by its ``language`` column."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
            header = reader.fieldnames or []
    except OSError as exc:
        raise PipelineError(f"cannot read trait table {path}: {exc.strerror}") from None
    if "language" not in header:
        raise PipelineError(f"{path}: no 'language' column")
    missing = [c for c in columns if c not in header]
    if missing:
        raise PipelineError(f"{path}: missing columns {missing}")
    taxa = [normalize_taxon(r["language"]) for r in rows]
    if len(set(taxa)) != len(taxa):
        raise PipelineError(f"{path}: duplicate language names")
    out = {}
    for c in columns:
        try:
            vals = [float(r[c]) for r in rows]
        except ValueError as exc:
            raise PipelineError(f"{path}: column {c}: {exc}") from None
        out[c] = phylostats.TraitVector(taxa, vals)
    return out


def _fl_source(config: AnalysisConfig):
    return config.fl if config.fl else str(funcload.appendix_a_path())


def _data_label(config: AnalysisConfig) -> str:
    return config.fl if config.fl else "appendix_a"


def load_trees(config: AnalysisConfig) -> phylotree.TreeSample:
    if not config.trees:
        raise PipelineError("no tree sample given (use --trees)")
    try:
        sample = phylotree.read_tree_sample(config.trees)
    except OSError as exc:
        raise PipelineError(f"cannot read trees {config.trees}: {exc.strerror}") from None
    except phylotree.NewickError as exc:
        raise PipelineError(f"{config.trees}: {exc}") from None
    try:
        trees = [phylotree.rename_tips(t, normalize_taxon) for t in sample]
    except phylotree.NewickError as exc:
        raise PipelineError(f"{config.trees}: labels collide after normalization: {exc}") from None
    return phylotree.TreeSample(trees)


def reconcile(taxa: Sequence[str], sample: phylotree.TreeSample, out_dir: Path) -> None:
    """Write the three-column reconciliation report; fail if data taxa are missing."""
    data = set(taxa)
    common = set.intersection(*(set(t.tip_labels) for t in sample))
    every = set.union(*(set(t.tip_labels) for t in sample))
    data_only = sorted(data - common)
    trees_only = sorted(every - data)
    matched = sorted(data & common)
    width = max(len(data_only), len(trees_only), len(matched))
    pad = lambda xs: xs + [""] * (width - len(xs))  # noqa: E731
    atomic_write(
        out_dir / "reconciliation.csv",
        _csv_text(("in_data_only", "in_trees_only", "matched"), zip(pad(data_only), pad(trees_only), pad(matched))),
    )
    if data_only:
        raise PipelineError(
            f"{len(data_only)} data taxa missing from the tree sample: {data_only} "
            f"(see {out_dir / 'reconciliation.csv'})"
        )


def _fmt(x: float | None):
    return None if x is None else float(x)


# ----------------------------------------------------------------- commands

def cmd_fl(config: AnalysisConfig) -> list[funcload.FLResult]:
    """Compute the per-language FL table from lexicon and inventory directories."""
    if not config.lexicons or not config.inventories:
        raise PipelineError("fl needs --lexicons and --inventories directories")
    lex_dir, inv_dir = Path(config.lexicons), Path(config.inventories)
    for d in (lex_dir, inv_dir):
        if not d.is_dir():
            raise PipelineError(f"not a directory: {d}")
    lex_files = sorted(lex_dir.glob("*.tsv"))
    if not lex_files:
        raise PipelineError(f"no *.tsv lexicons in {lex_dir}")
    mode = "tokenize" if config.tokenize else "canonical"
    languages = {}
    for lex_path in lex_files:
        inv_path = inv_dir / lex_path.name
        if not inv_path.is_file():
            raise PipelineError(f"missing inventory file {inv_path}")
        try:
            inv = segmental.parse_inventory(inv_path.read_text(encoding="utf-8"))
            entries = segmental.parse_lexicon(lex_path.read_text(encoding="utf-8"), inv, mode=mode)
        except (segmental.InventoryError, segmental.LexiconError) as exc:
            raise PipelineError(f"{inv_path if isinstance(exc, segmental.InventoryError) else lex_path}: {exc}") from None
        languages[lex_path.stem] = (entries, inv)
    try:
        kept, excluded = funcload.compute_fl_table(languages, config.min_n, config.drop_zero_flv)
    except segmental.LexiconError as exc:
        raise PipelineError(str(exc)) from None
    out = Path(config.out)
    atomic_write(out / "fl.csv", funcload.format_fl_table(kept))
    atomic_write(
        out / "fl_exclusions.csv",
        _csv_text(("language", "reason", "n"), [(e.language, e.reason, e.n) for e in excluded]),
    )
    return kept


def cmd_signal(config: AnalysisConfig, trait: str = "fl_v") -> phylostats.SignalResult:
    """Blomberg's K of one trait over every tree of the sample."""
    out = Path(config.out)
    x = read_traits(_fl_source(config), [trait])[trait]
    sample = load_trees(config)
    reconcile(x.taxa, sample, out)
    try:
        res = phylostats.signal_over_sample(x, sample, n_perm=config.n_perm, seed=config.seed, jitter=config.jitter)
    except (phylostats.DegenerateTraitError, np.linalg.LinAlgError) as exc:
        raise PipelineError(str(exc), EXIT_DEGENERATE) from None
    rows = [(i, repr(float(k))) for i, k in enumerate(res.k)]
    header = ("tree_index", "k")
    if res.p_per_tree is not None:
        rows = [(i, k, repr(float(p))) for (i, k), p in zip(rows, res.p_per_tree)]
        header = ("tree_index", "k", "p_perm")
    atomic_write(out / f"signal_{trait}_k.csv", _csv_text(header, rows))
    write_json(out / f"signal_{trait}.json", {
        "statistic": "blomberg_k",
        "trait": trait,
        "data": _data_label(config),
        "mean": _fmt(res.mean_k),
        "sd": _fmt(res.sd_k),
        "lo95": _fmt(res.lo95),
        "hi95": _fmt(res.hi95),
        "p": _fmt(res.p_perm),
        "n_perm": config.n_perm,
        "n_taxa": res.n_taxa,
        "n_trees": len(res.k),
        "seed": config.seed,
    })
    return res


def parse_pair(pair: str | Sequence[str]) -> tuple[str, str]:
    parts = [p.strip() for p in pair.split(",")] if isinstance(pair, str) else list(pair)
    if len(parts) != 2 or parts[0] == parts[1]:
        raise PipelineError(f"--pair needs two distinct columns, got {pair!r}")
    return parts[0], parts[1]


def cmd_corr(config: AnalysisConfig, pair=("fl_v", "fl_c"), no_phylo: bool = False) -> phylostats.CorrResult:
    """Phylogenetic Pearson correlation of a trait pair over the tree sample."""
    a, b = parse_pair(pair)
    out = Path(config.out)
    traits = read_traits(_fl_source(config), [a, b])
    x, y = traits[a], traits[b]
    sample = None
    if not no_phylo:
        sample = load_trees(config)
        reconcile(x.taxa, sample, out)
    try:
        res = phylostats.correlation_over_sample(x, y, sample, jitter=config.jitter)
    except (phylostats.DegenerateTraitError, np.linalg.LinAlgError) as exc:
        raise PipelineError(str(exc), EXIT_DEGENERATE) from None
    stem = f"corr_{a}_{b}"
    atomic_write(out / f"{stem}_r.csv", _csv_text(("tree_index", "r"), [(i, repr(float(r))) for i, r in enumerate(res.r)]))
    write_json(out / f"{stem}.json", {
        "statistic": "phylo_pearson_r" if sample is not None else "pearson_r",
        "pair": [a, b],
        "data": _data_label(config),
        "phylo": sample is not None,
        "mean": _fmt(res.mean_r),
        "sd": _fmt(res.sd_r),
        "lo95": _fmt(res.interval[0]),
        "hi95": _fmt(res.interval[1]),
        "p": _fmt(res.p),
        "n_taxa": res.n_taxa,
        "n_trees": len(sample) if sample is not None else 0,
        "seed": config.seed,
    })
    return res


def parse_matrix(text: str) -> np.ndarray:
    """``"1,-0.5;-0.5,1"`` -> 2x2 array (rows split on ``;``)."""
    try:
        rows = [[float(v) for v in row.split(",")] for row in text.split(";") if row.strip()]
        M = np.array(rows, dtype=float)
    except ValueError:
        raise PipelineError(f"cannot parse matrix {text!r}") from None
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise PipelineError(f"matrix {text!r} is not square")
    return M


def cmd_simulate(
    config: AnalysisConfig,
    tree_path: str,
    rate: str = "1",
    replicates: int = 1,
    root: str | None = None,
    names: Sequence[str] | None = None,
) -> list[Path]:
    """Simulate Brownian-motion traits on one tree; one CSV per replicate."""
    R = parse_matrix(rate)
    k = R.shape[0]
    names = list(names) if names else list(TRAITS[:k]) if k <= 3 else [f"trait_{i + 1}" for i in range(k)]
    if len(names) != k:
        raise PipelineError(f"{k} traits but {len(names)} names")
    root_state = np.zeros(k) if root is None else np.array([float(v) for v in root.split(",")])
    if root_state.shape != (k,):
        raise PipelineError(f"root state needs {k} values")
    if replicates < 1:
        raise PipelineError("replicates must be >= 1")
    config = dataclasses.replace(config, trees=tree_path)
    tree = load_trees(config)[0]
    try:
        taxa, X = phylostats.simulate_bm_replicates(tree, R, root_state, config.seed, replicates)
    except ValueError as exc:
        raise PipelineError(str(exc)) from None
    out = Path(config.out) / "sim"
    width = max(4, len(str(replicates - 1)))
    files = []
    for rep in range(replicates):
        path = out / f"rep_{rep:0{width}d}.csv"
        rows = [[t] + [repr(float(v)) for v in X[rep, :, j]] for j, t in enumerate(taxa)]
        atomic_write(path, _csv_text(["language"] + names, rows))
        files.append(path)
    write_json(out / "manifest.json", {
        "tree": tree_path,
        "rate_matrix": R.tolist(),
        "root_state": root_state.tolist(),
        "traits": names,
        "replicates": replicates,
        "seed": config.seed,
        "files": [p.name for p in files],
    })
    return files


def cmd_report(config: AnalysisConfig) -> Path:
    from .report import build_report

    return build_report(config)
