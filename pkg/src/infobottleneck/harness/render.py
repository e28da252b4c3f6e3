"""
Vector-graphics rendering of sweep reports and the plain-text summary.

Output is byte-deterministic for identical inputs: SVG ids come from a fixed
salt, no timestamp is embedded and text is kept as text.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Optional

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from ..data import decode_f32
from ..errors import ParseError
from ..evaluation.curves import CurveReport, higher_is_better, loads_records
from .probes import read_probes

SVG_RC = {"svg.hashsalt": "infobottleneck-report", "svg.fonttype": "none", "font.size": 9,
          "axes.spines.top": False, "axes.spines.right": False}
COLORS = {"score": "#1f4e79", "floor": "#7f7f7f", "ceiling": "#2e7d32", "full": "#c55a11"}


def _save(fig: Figure, path: Path):
    with matplotlib.rc_context(SVG_RC):
        fig.savefig(path, format="svg", metadata={"Date": None})


def _figure(w, h) -> Figure:
    with matplotlib.rc_context(SVG_RC):
        return Figure(figsize=(w, h))


def _log_x(ax, sizes):
    ax.set_xscale("log")
    ax.set_xticks(sizes)
    ax.set_xticklabels([str(s) for s in sizes])
    ax.minorticks_off()
    lo, hi = min(sizes), max(sizes)
    ax.set_xlim(lo / 1.5, hi * 1.5)


def render_metric(rep: CurveReport, metric: str, path: Path):
    sizes = rep.bottleneck_sizes
    cells = [rep.scores[metric][L] for L in sizes]
    normalized = rep.normalized.get(metric, {})
    has_norm = any(v is not None for v in normalized.values())
    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=(8.0 if has_norm else 4.6, 3.4))
        axes = fig.subplots(1, 2 if has_norm else 1, squeeze=False)[0]
        ax = axes[0]
        ax.errorbar(sizes, [c.mean for c in cells], yerr=[c.seed_std for c in cells], color=COLORS["score"],
                    marker="o", ms=4, capsize=3, label="bottleneck")
        for role, cell in (("floor", rep.floor[metric]), ("ceiling", rep.ceiling[metric]),
                           ("full", rep.full_input[metric])):
            label = rep.ceiling_label if role == "ceiling" else ("full input" if role == "full" else "floor")
            ax.axhline(cell.mean, color=COLORS[role], ls="--" if role == "floor" else ":", lw=1.2, label=label)
        _log_x(ax, sizes)
        suffix = "" if higher_is_better(metric) else " (lower is better)"
        title = metric + (f" [{rep.labels[metric]}]" if rep.labels.get(metric) else "")
        ax.set_title(title, fontsize=9)
        ax.set_xlabel("bottleneck width L")
        ax.set_ylabel("score" + suffix)
        ax.legend(fontsize=7, frameon=False)
        if has_norm:
            nx = [L for L in sizes if normalized.get(L) is not None]
            axes[1].plot(nx, [normalized[L] for L in nx], color=COLORS["score"], marker="o", ms=4)
            axes[1].axhline(0.0, color=COLORS["floor"], ls="--", lw=1.0)
            axes[1].axhline(1.0, color=COLORS["ceiling"], ls=":", lw=1.0)
            _log_x(axes[1], sizes)
            axes[1].set_xlabel("bottleneck width L")
            axes[1].set_ylabel("(score - floor) / (ceiling - floor)")
            axes[1].set_title("floor/ceiling normalized", fontsize=9)
        else:
            fig.text(0.02, 0.01, "normalization undefined: ceiling does not exceed floor", fontsize=7,
                     color="#a00000")
        fig.tight_layout(rect=(0, 0.04, 1, 1))
        _save(fig, path)


def _grouped_order(labels: List[str]):
    """Channel order grouping equal region tags, in order of first appearance."""
    first: Dict[str, int] = {}
    for i, lab in enumerate(labels):
        first.setdefault(lab, i)
    return sorted(range(len(labels)), key=lambda i: (first[labels[i]], i))


def render_saliency(saliency: Dict[int, np.ndarray], labels: Optional[List[str]], path: Path):
    sizes = sorted(saliency)
    n = len(next(iter(saliency.values())))
    labels = labels if labels and len(labels) == n and any(labels) else None
    order = _grouped_order(labels) if labels else list(range(n))
    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=(7.5, 0.55 * len(sizes) + 1.0))
        axes = fig.subplots(len(sizes), 1, squeeze=False)[:, 0]
        for ax, L in zip(axes, sizes):
            w = np.asarray(saliency[L], dtype=np.float64)[order]
            peak = w.max()
            ax.imshow((w / peak if peak > 0 else w)[None, :], aspect="auto", cmap="viridis", vmin=0, vmax=1,
                      interpolation="nearest")
            ax.set_yticks([0])
            ax.set_yticklabels([f"L={L}"])
            ax.set_xticks([])
            if labels:
                tags = [labels[i] for i in order]
                starts = [i for i in range(n) if i == 0 or tags[i] != tags[i - 1]]
                for s in starts[1:]:
                    ax.axvline(s - 0.5, color="white", lw=0.8)
        if labels:
            tags = [labels[i] for i in order]
            starts = [i for i in range(n) if i == 0 or tags[i] != tags[i - 1]]
            ends = starts[1:] + [n]
            axes[-1].set_xticks([(a + b - 1) / 2 for a, b in zip(starts, ends)])
            axes[-1].set_xticklabels([tags[s] for s in starts], fontsize=7)
        axes[-1].set_xlabel("channel" + (" (grouped by region)" if labels else ""))
        axes[0].set_title("saliency (row norm of compression weights, scaled to peak)", fontsize=9)
        fig.tight_layout()
        _save(fig, path)


def render_effective_dim(rep: CurveReport, path: Path):
    sizes = rep.bottleneck_sizes
    means = [rep.mean_effective_dim(L) for L in sizes]
    stds = [float(np.std(rep.effective_dimensionality.get(L, [0]))) for L in sizes]
    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=(4.6, 3.2))
        ax = fig.subplots()
        x = np.arange(len(sizes))
        ax.bar(x, means, yerr=stds, color=COLORS["score"], capsize=3, label="effective dim (95% variance)")
        ax.plot(x, sizes, color=COLORS["floor"], ls="--", marker="_", label="width L")
        ax.set_xticks(x)
        ax.set_xticklabels([str(s) for s in sizes])
        ax.set_xlabel("bottleneck width L")
        ax.set_ylabel("dimensions")
        ax.legend(fontsize=7, frameon=False)
        fig.tight_layout()
        _save(fig, path)


def render_probes(rows, path: Path):
    probes = []
    for r in rows:
        if r.probe not in probes:
            probes.append(r.probe)
    sizes = sorted({r.L for r in rows})
    with matplotlib.rc_context(SVG_RC):
        fig = Figure(figsize=(4.8, 3.4))
        ax = fig.subplots()
        for p in probes:
            pr = sorted((r for r in rows if r.probe == p), key=lambda r: r.L)
            ax.errorbar([r.L for r in pr], [r.explained for r in pr], yerr=[r.std_error for r in pr],
                        marker="o", ms=3, capsize=2, label=p, ls=":" if p == "class_shuffled" else "-")
        _log_x(ax, sizes)
        ax.set_xlabel("bottleneck width L")
        ax.set_ylabel("explained (0 = chance / mean baseline)")
        ax.legend(fontsize=7, frameon=False)
        fig.tight_layout()
        _save(fig, path)


def _num(v, fmt="{:.4f}"):
    return "undefined" if v is None else fmt.format(v)


def summary_text(rep: CurveReport, probes=None, saliency_meta=None) -> str:
    lines = [f"seeds: {', '.join(str(s) for s in rep.seeds)}", ""]
    for m in rep.metrics:
        lab = f" [{rep.labels[m]}]" if rep.labels.get(m) else ""
        lines.append(f"{m}{lab} ({'higher' if higher_is_better(m) else 'lower'} is better)")
        lines.append(f"  floor {rep.floor[m].mean:.4f}   {rep.ceiling_label} {rep.ceiling[m].mean:.4f}   "
                     f"full input {rep.full_input[m].mean:.4f}")
        lines.append(f"  {'L':>6} {'mean':>8} {'se':>8} {'seed sd':>8} {'of full':>8} {'normalized':>10} {'effdim':>7}")
        for L in rep.bottleneck_sizes:
            c = rep.scores[m][L]
            lines.append(f"  {L:>6} {c.mean:>8.4f} {c.std_error:>8.4f} {c.seed_std:>8.4f} "
                         f"{_num(rep.fraction_of_full[m][L]):>8} {_num(rep.normalized[m][L]):>10} "
                         f"{rep.mean_effective_dim(L):>7.2f}")
        lines.append("")
    if probes:
        lines.append("probes (explained: 0 = chance or mean baseline, 1 = perfect)")
        lines.append(f"  {'probe':<24} {'L':>6} {'score':>8} {'reference':>9} {'explained':>9}")
        for r in probes:
            lines.append(f"  {r.probe:<24} {r.L:>6} {r.score:>8.4f} {r.reference:>9.4f} {r.explained:>9.4f}")
        lines.append("")
    if saliency_meta and saliency_meta.get("region_fraction"):
        lines.append("saliency mass by region")
        for L, frac in sorted(saliency_meta["region_fraction"].items(), key=lambda kv: int(kv[0])):
            top = sorted(frac.items(), key=lambda kv: (-kv[1], kv[0]))[:3]
            lines.append(f"  L={L}: " + ", ".join(f"{k or '(untagged)'} {v:.3f}" for k, v in top))
        lines.append("")
    lines.append("flags:" if rep.flags else "flags: none")
    lines.extend(f"  - {f}" for f in rep.flags)
    return "\n".join(lines) + "\n"


def render_report(report_dir) -> List[Path]:
    """Render every figure and ``summary.txt`` for a sweep output directory.

    Reads ``records.jsonl`` (required) plus ``saliency_<L>.f32``,
    ``saliency.json`` and ``probes.csv`` when present. Figures go to
    ``report/``; ``summary.txt`` sits next to the records.
    """
    report_dir = Path(report_dir)
    rec_path = report_dir / "records.jsonl"
    if not rec_path.exists():
        raise ParseError(f"no records.jsonl in {report_dir}", 0)
    rep = loads_records(rec_path.read_text())
    fig_dir = report_dir / "report"
    fig_dir.mkdir(exist_ok=True)
    written = []
    for m in rep.metrics:
        p = fig_dir / f"{m}.svg"
        render_metric(rep, m, p)
        written.append(p)
    p = fig_dir / "effective_dim.svg"
    render_effective_dim(rep, p)
    written.append(p)
    meta = None
    if (report_dir / "saliency.json").exists():
        meta = json.loads((report_dir / "saliency.json").read_text())
    sal = {}
    for L in rep.bottleneck_sizes:
        sp = report_dir / f"saliency_{L}.f32"
        if sp.exists():
            sal[L] = decode_f32(sp.read_bytes(), sp.name)
    if sal:
        p = fig_dir / "saliency.svg"
        render_saliency(sal, meta.get("channel_labels") if meta else None, p)
        written.append(p)
    probes = None
    if (report_dir / "probes.csv").exists():
        probes = read_probes(report_dir / "probes.csv")
        if probes:
            p = fig_dir / "probes.svg"
            render_probes(probes, p)
            written.append(p)
    p = report_dir / "summary.txt"
    p.write_text(summary_text(rep, probes, meta))
    written.append(p)
    return written
