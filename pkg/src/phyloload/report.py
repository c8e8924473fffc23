"""Static HTML/SVG report over the outputs of the other commands."""
from __future__ import annotations

import csv
import html
import io
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .pipeline import PipelineError, atomic_write, read_traits  # noqa: E402

_LABELS = {"fl_v": "FL of tonic vowel length", "fl_c": "FL of post-tonic consonant manner", "fl_p": "FL of post-tonic consonant place"}
_SVG_RC = {"svg.hashsalt": "phyloload", "svg.fonttype": "path", "font.family": "DejaVu Sans"}


def _svg(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return buf.getvalue()


def _column(path: Path, name: str) -> list[float]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [float(r[name]) for r in csv.DictReader(fh)]


def _hist(values, xlabel, title, ref=None) -> str:
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.hist(values, bins=min(30, max(5, len(values) // 5)), color="#4c72b0", edgecolor="white")
        if ref is not None:
            ax.axvline(ref, color="k", linestyle="--", linewidth=1)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("trees")
        ax.set_title(title)
        fig.tight_layout()
        return _svg(fig)


def _scatter(x, y, xlabel, ylabel) -> str:
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(4.5, 4))
        ax.scatter(x, y, s=12, color="#4c72b0")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        fig.tight_layout()
        return _svg(fig)


def _fl_table_path(out: Path, results: list[dict]) -> str | None:
    if (out / "fl.csv").is_file():
        return str(out / "fl.csv")
    for res in results:
        data = res.get("data")
        if data == "appendix_a":
            from .funcload import appendix_a_path

            return str(appendix_a_path())
        if data and Path(data).is_file():
            return data
    return None


def build_report(config) -> Path:
    out = Path(config.out)
    if not out.is_dir() or not any(out.iterdir()):
        raise PipelineError(f"no command outputs in {out}; run fl/signal/corr first")
    signal = sorted(out.glob("signal_*.json"))
    corr = sorted(out.glob("corr_*.json"))
    needed = [p.with_name(p.stem + "_k.csv") for p in signal] + [p.with_name(p.stem + "_r.csv") for p in corr]
    missing = [str(p) for p in needed if not p.is_file()]
    if not signal and not corr and not (out / "fl.csv").is_file():
        missing.append(str(out / "fl.csv or signal_*.json or corr_*.json"))
    if missing:
        raise PipelineError("missing report inputs: " + ", ".join(missing))

    rep = out / "report"
    parts = ["<!DOCTYPE html>", "<html><head><meta charset='utf-8'><title>phyloload report</title>",
             "<style>body{font-family:sans-serif;max-width:60em;margin:auto}"
             "table{border-collapse:collapse}td,th{border:1px solid #999;padding:2px 8px}</style>",
             "</head><body><h1>phyloload report</h1>"]

    sig_rows = []
    for path in signal:
        res = json.loads(path.read_text(encoding="utf-8"))
        trait = res["trait"]
        ks = _column(path.with_name(path.stem + "_k.csv"), "k")
        name = f"k_hist_{trait}.svg"
        atomic_write(rep / name, _hist(ks, "Blomberg's K", _LABELS.get(trait, trait), ref=1.0))
        sig_rows.append((_LABELS.get(trait, trait), res["mean"], res["sd"], res["n_trees"], name))
    if sig_rows:
        parts.append("<h2>Phylogenetic signal</h2><table><tr><th>measure</th><th>mean K</th><th>std.dev of K</th><th>trees</th></tr>")
        parts += [f"<tr><td>{html.escape(m)}</td><td>{mu:.3f}</td><td>{sd:.3f}</td><td>{n}</td></tr>" for m, mu, sd, n, _ in sig_rows]
        parts.append("</table>")
        parts += [f"<img src='{name}' alt='K histogram'>" for *_, name in sig_rows]

    corr_rows = []
    for path in corr:
        res = json.loads(path.read_text(encoding="utf-8"))
        a, b = res["pair"]
        rs = _column(path.with_name(path.stem + "_r.csv"), "r")
        name = f"r_hist_{a}_{b}.svg"
        atomic_write(rep / name, _hist(rs, "r", f"{a} vs {b}", ref=0.0))
        corr_rows.append((f"{a} versus {b}", res["mean"], res["lo95"], res["hi95"], res["p"], name))
    if corr_rows:
        parts.append("<h2>Correlation</h2><table><tr><th>measures</th><th>r</th><th>95% interval</th><th>p</th></tr>")
        parts += [f"<tr><td>{html.escape(m)}</td><td>{r:.2f}</td><td>[{lo:.3f} {hi:.3f}]</td><td>{p:.3f}</td></tr>"
                  for m, r, lo, hi, p, _ in corr_rows]
        parts.append("</table>")
        parts += [f"<img src='{name}' alt='r histogram'>" for *_, name in corr_rows]

    fl_path = _fl_table_path(out, [json.loads(p.read_text(encoding="utf-8")) for p in signal + corr])
    if fl_path:
        traits = read_traits(fl_path, ["fl_v", "fl_c", "fl_p"])
        parts.append("<h2>Functional load</h2>")
        for other in ("fl_c", "fl_p"):
            name = f"scatter_fl_v_{other}.svg"
            atomic_write(rep / name, _scatter(traits["fl_v"].values, traits[other].aligned(traits["fl_v"].taxa), "FL_V (bits)", f"{other.upper()} (bits)"))
            parts.append(f"<img src='{name}' alt='FL scatter'>")

    parts.append("</body></html>\n")
    index = rep / "report.html"
    atomic_write(index, "\n".join(parts))
    return index
