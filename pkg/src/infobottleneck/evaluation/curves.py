"""
Metric results, batch scoring of reconstructions, and curve assembly with
floor/ceiling normalization.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from ..errors import ConfigError, InfoBottleneckError, ParseError
from .image import RandomProjectionImageEmbedder, cosine, pixel_correlation, ssim
from .representation import identification_scores
from .text import BagOfTokensEmbedder, bleu, meteor_simplified, wer

NORMALIZE_EPS = 1e-9


@dataclass
class MetricResult:
    metric_name: str
    per_example_scores: np.ndarray
    mean: float = float("nan")
    std_error: float = float("nan")
    undefined: int = 0
    label: str = ""

    def __post_init__(self):
        s = np.asarray(self.per_example_scores, dtype=np.float64)
        self.per_example_scores = s
        self.mean = float(s.mean()) if s.size else float("nan")
        self.std_error = float(s.std(ddof=1) / np.sqrt(s.size)) if s.size > 1 else 0.0


# name -> (kind, higher_is_better)
METRICS = {
    "pixel_correlation": ("image", True),
    "ssim": ("image", True),
    "embedding_cosine": ("any", True),
    "identification_accuracy": ("any", True),
    "wer": ("text", False),
    "bleu": ("text", True),
    "meteor_simplified": ("text", True),
}
DEFAULT_METRICS = {
    "image": ("pixel_correlation", "ssim", "embedding_cosine", "identification_accuracy"),
    "text": ("wer", "bleu", "meteor_simplified", "embedding_cosine"),
}


def higher_is_better(metric: str) -> bool:
    return METRICS[metric][1]


def default_embedder(kind: str):
    return RandomProjectionImageEmbedder() if kind == "image" else BagOfTokensEmbedder()


def _items(stimuli):
    return list(stimuli.images) if stimuli.kind == "image" else list(stimuli.texts)


def score_stimuli(metric: str, reconstructed, true, embedder=None) -> MetricResult:
    """Score reconstructions against the true stimuli, one value per example.

    Examples where the metric is undefined (e.g. a zero embedding) score 0
    and are counted in ``undefined``.
    """
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}; known: {sorted(METRICS)}")
    kind, _ = METRICS[metric]
    if kind not in ("any", true.kind):
        raise ConfigError(f"metric {metric!r} does not apply to {true.kind} stimuli")
    if len(reconstructed) != len(true):
        raise ConfigError("reconstructions and stimuli differ in count")
    rec, ref = _items(reconstructed), _items(true)
    label = ""
    if metric in ("embedding_cosine", "identification_accuracy"):
        embedder = embedder or default_embedder(true.kind)
        label = getattr(embedder, "name", type(embedder).__name__)
        er, et = np.asarray(embedder(rec)), np.asarray(embedder(ref))
        if metric == "identification_accuracy":
            return MetricResult(metric, identification_scores(er, et), label=label)
        pairs = list(zip(er, et))
        fn = lambda a, b: abs(cosine(a, b))
    else:
        pairs = list(zip(rec, ref))
        fn = {
            "pixel_correlation": lambda a, b: pixel_correlation(a, b),
            "ssim": lambda a, b: ssim(a, b),
            "wer": lambda a, b: wer(b, a),
            "bleu": lambda a, b: bleu(b, a),
            "meteor_simplified": lambda a, b: meteor_simplified(b, a),
        }[metric]
        if metric == "meteor_simplified":
            label = "simplified"
    scores, undefined = [], 0
    for a, b in pairs:
        try:
            scores.append(fn(a, b))
        except InfoBottleneckError:
            undefined += 1
            scores.append(0.0)
    return MetricResult(metric, np.array(scores), undefined=undefined, label=label)


# ---------------------------------------------------------------- curves

@dataclass
class CurveCell:
    """Aggregate of one metric for one configuration across seeds."""

    mean: float
    std_error: float
    seed_std: float
    n: int
    seed_means: List[float] = field(default_factory=list)

    def as_dict(self):
        return {"mean": self.mean, "std_error": self.std_error, "seed_std": self.seed_std,
                "n": self.n, "seed_means": self.seed_means}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["mean"]), float(d["std_error"]), float(d["seed_std"]), int(d["n"]),
                   [float(v) for v in d.get("seed_means", [])])


def pool(results: Sequence[MetricResult]) -> CurveCell:
    """Pool per-example scores of several seeds.

    The mean is over all examples of all seeds; the standard error uses the
    pooled per-example spread.
    """
    if not results:
        raise ConfigError("nothing to pool")
    allv = np.concatenate([r.per_example_scores for r in results])
    means = [float(r.mean) for r in results]
    se = float(allv.std(ddof=1) / np.sqrt(allv.size)) if allv.size > 1 else 0.0
    sstd = float(np.std(means, ddof=1)) if len(means) > 1 else 0.0
    return CurveCell(float(allv.mean()), se, sstd, int(allv.size), means)


@dataclass
class CurveReport:
    metrics: List[str]
    bottleneck_sizes: List[int]
    scores: Dict[str, Dict[int, CurveCell]]
    floor: Dict[str, CurveCell]
    ceiling: Dict[str, CurveCell]
    full_input: Dict[str, CurveCell]
    effective_dimensionality: Dict[int, List[int]]
    seeds: List[int]
    ceiling_label: str = "ceiling"
    labels: Dict[str, str] = field(default_factory=dict)
    fraction_of_full: Dict[str, Dict[int, Optional[float]]] = field(default_factory=dict)
    normalized: Dict[str, Dict[int, Optional[float]]] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)

    def mean_effective_dim(self, L) -> float:
        v = self.effective_dimensionality.get(L, [])
        return float(np.mean(v)) if v else float("nan")

    def undefined_normalization(self, metric) -> bool:
        return all(v is None for v in self.normalized.get(metric, {}).values())


def _normalize(metric, cell, floor, ceiling, full):
    better = higher_is_better(metric)
    frac = cell.mean / full.mean if abs(full.mean) > NORMALIZE_EPS else None
    span = ceiling.mean - floor.mean
    if not better:
        span = -span
    if span <= NORMALIZE_EPS:
        return frac, None
    return frac, (cell.mean - floor.mean) / (ceiling.mean - floor.mean)


def assemble_curve(runs: Mapping[int, Mapping[str, Sequence[MetricResult]]],
                   floor: Mapping[str, Sequence[MetricResult]],
                   ceiling: Mapping[str, Sequence[MetricResult]],
                   full: Mapping[str, Sequence[MetricResult]],
                   effective_dims: Optional[Mapping[int, Sequence[int]]] = None,
                   seeds: Sequence[int] = (0,), ceiling_label: str = "ceiling") -> CurveReport:
    """Build a :class:`CurveReport`.

    ``runs`` maps width -> metric -> one MetricResult per seed; ``floor``,
    ``ceiling`` and ``full`` map metric -> results per seed.

    fraction_of_full = mean_L / mean_full; floor_ceiling_normalized =
    (mean_L - floor) / (ceiling - floor), left undefined (None, flagged) when
    the ceiling does not beat the floor by more than 1e-9 in the metric's
    preferred direction.
    """
    sizes = sorted(runs)
    if not sizes:
        raise ConfigError("no runs to assemble")
    metrics = list(next(iter(runs.values())).keys())
    for L in sizes:
        if list(runs[L].keys()) != metrics:
            raise ConfigError("all runs must share one metric set")
    rep = CurveReport(metrics, sizes, {}, {}, {}, {}, {int(k): list(v) for k, v in (effective_dims or {}).items()},
                      list(seeds), ceiling_label)
    for m in metrics:
        rep.scores[m] = {L: pool(runs[L][m]) for L in sizes}
        rep.floor[m], rep.ceiling[m], rep.full_input[m] = pool(floor[m]), pool(ceiling[m]), pool(full[m])
        for r in list(floor[m]) + list(ceiling[m]):
            if r.label:
                rep.labels[m] = r.label
        rep.fraction_of_full[m], rep.normalized[m] = {}, {}
        for L in sizes:
            frac, norm = _normalize(m, rep.scores[m][L], rep.floor[m], rep.ceiling[m], rep.full_input[m])
            rep.fraction_of_full[m][L] = frac
            rep.normalized[m][L] = norm
        if all(v is None for v in rep.normalized[m].values()):
            rep.flags.append(f"{m}: ceiling does not exceed floor; normalization undefined")
        sign = 1.0 if higher_is_better(m) else -1.0
        for a, b in zip(sizes, sizes[1:]):
            ca, cb = rep.scores[m][a], rep.scores[m][b]
            pooled = np.sqrt(ca.std_error**2 + cb.std_error**2)
            if sign * (ca.mean - cb.mean) > pooled:
                rep.flags.append(f"{m}: non-monotonic between L={a} and L={b}")
    return rep


# ---------------------------------------------------------------- serialization

CSV_COLUMNS = ("metric", "L", "mean", "std_error", "floor", "ceiling", "full", "fraction_of_full",
               "normalized", "effective_dim")


def _fmt(v):
    if v is None:
        return "undefined"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(round(float(v), 10))


def curve_csv(rep: CurveReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for m in rep.metrics:
        for L in rep.bottleneck_sizes:
            c = rep.scores[m][L]
            w.writerow([m, L, _fmt(c.mean), _fmt(c.std_error), _fmt(rep.floor[m].mean), _fmt(rep.ceiling[m].mean),
                        _fmt(rep.full_input[m].mean), _fmt(rep.fraction_of_full[m][L]),
                        _fmt(rep.normalized[m][L]), _fmt(rep.mean_effective_dim(L))])
    return buf.getvalue()


def report_records(rep: CurveReport) -> List[dict]:
    """One structured record per (metric, run); floor/ceiling/full use L=null."""
    out = [{"record": "header", "metrics": rep.metrics, "sizes": rep.bottleneck_sizes, "seeds": rep.seeds,
            "ceiling_label": rep.ceiling_label, "labels": rep.labels, "flags": rep.flags,
            "effective_dimensionality": {str(k): v for k, v in rep.effective_dimensionality.items()}}]
    for m in rep.metrics:
        for role, cell in (("floor", rep.floor[m]), ("ceiling", rep.ceiling[m]), ("full", rep.full_input[m])):
            out.append({"record": role, "metric": m, "L": None, **cell.as_dict()})
        for L in rep.bottleneck_sizes:
            out.append({"record": "run", "metric": m, "L": L, **rep.scores[m][L].as_dict(),
                        "fraction_of_full": rep.fraction_of_full[m][L], "normalized": rep.normalized[m][L]})
    return out


def dumps_records(rep: CurveReport) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in report_records(rep))


def loads_records(text: str) -> CurveReport:
    """Parse ``records.jsonl`` back into a report; errors carry the line number."""
    header = None
    cells: Dict[str, Dict] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            r = json.loads(line)
            kind = r["record"]
            if kind == "header":
                header = r
                continue
            m = r["metric"]
            cell = CurveCell.from_dict(r)
            d = cells.setdefault(m, {"run": {}, "fraction": {}, "normalized": {}})
            if kind == "run":
                L = int(r["L"])
                d["run"][L] = cell
                d["fraction"][L] = r["fraction_of_full"]
                d["normalized"][L] = r["normalized"]
            elif kind in ("floor", "ceiling", "full"):
                d[kind] = cell
            else:
                raise ValueError(f"unknown record kind {kind!r}")
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"malformed report record: {exc}", lineno) from None
    if header is None:
        raise ParseError("report has no header record", 1)
    try:
        metrics = list(header["metrics"])
        sizes = [int(v) for v in header["sizes"]]
        rep = CurveReport(metrics, sizes, {m: cells[m]["run"] for m in metrics},
                          {m: cells[m]["floor"] for m in metrics}, {m: cells[m]["ceiling"] for m in metrics},
                          {m: cells[m]["full"] for m in metrics},
                          {int(k): list(v) for k, v in header["effective_dimensionality"].items()},
                          list(header["seeds"]), header["ceiling_label"], dict(header["labels"]),
                          {m: cells[m]["fraction"] for m in metrics}, {m: cells[m]["normalized"] for m in metrics},
                          list(header["flags"]))
        for m in metrics:
            missing = set(sizes) - set(rep.scores[m])
            if missing:
                raise KeyError(f"metric {m} lacks sizes {sorted(missing)}")
    except KeyError as exc:
        raise ParseError(f"incomplete report: {exc}", len(text.splitlines())) from None
    return rep
