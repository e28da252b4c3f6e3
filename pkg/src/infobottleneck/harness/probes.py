"""
Feature probes on the hidden vectors of a finished sweep.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import List

import numpy as np

from ..bottleneck import apply_bottleneck, load_bottleneck
from ..data import load_dataset
from ..errors import MissingRun
from ..evaluation.representation import FEATURE_NAMES, feature_matrix, probe_classification, probe_regression
from .config import SweepConfig
from .sweep import Cell

PROBE_COLUMNS = ("probe", "L", "score", "chance_or_baseline", "explained", "std_error", "n_test", "n_seeds")
SHUFFLE_SALT = 0x5AFF1E


@dataclass
class ProbeRow:
    probe: str
    L: int
    score: float  # accuracy for class probes, test MSE for regression probes
    reference: float  # chance accuracy or training-mean baseline MSE
    explained: float  # (acc - chance) / (1 - chance), or 1 - mse / baseline
    std_error: float
    n_test: int
    n_seeds: int


def _pool(values, ses):
    return float(np.mean(values)), float(np.sqrt(np.sum(np.square(ses))) / len(ses))


def run_probes(config: SweepConfig) -> List[ProbeRow]:
    """Class and image-feature probes for every width of a finished sweep.

    Per width and seed the saved bottleneck is applied to all examples and
    the probes are fitted on the train split, tuned on validation and scored
    on test. Values are averaged over seeds. A shuffled-label class probe is
    reported as a null control. Writes ``probes.csv``.

    Raises MissingRun if the dataset or any (width, seed) bottleneck is absent.
    """
    out = config.output_dir
    if not (out / "dataset" / "manifest.json").exists():
        raise MissingRun(f"no sweep dataset under {out}; run the sweep first")
    paths = {}
    for L in config.sizes:
        for s in config.seeds:
            p = out / "cells" / Cell("run", L, s).name / "bottleneck"
            if not (p / "manifest.json").exists():
                raise MissingRun(f"missing bottleneck for L={L}, seed={s} ({p})")
            paths[L, s] = p
    dataset = load_dataset(out / "dataset")
    stim = dataset.stimuli
    splits = dataset.splits
    labels = stim.class_labels
    features = feature_matrix(stim.images) if stim.kind == "image" else None
    rows: List[ProbeRow] = []
    for L in config.sizes:
        acc = {"class": ([], [], []), "class_shuffled": ([], [], [])}
        reg = {f: ([], [], []) for f in FEATURE_NAMES}
        n_test = len(splits.test)
        for s in config.seeds:
            tb = load_bottleneck(paths[L, s])
            hidden = apply_bottleneck(tb, dataset).hidden
            steps = hidden.shape[0] // dataset.num_examples
            if steps > 1:
                # one probe row per example: concatenate its steps
                hidden = hidden.reshape(dataset.num_examples, -1)
            if labels is not None and stim.num_classes and stim.num_classes > 1:
                r = probe_classification(hidden, labels, splits, stim.num_classes)
                acc["class"][0].append(r.accuracy)
                acc["class"][1].append(r.std_error)
                acc["class"][2].append(r.chance)
                shuffled = np.random.default_rng([s, SHUFFLE_SALT]).permutation(labels)
                r = probe_classification(hidden, shuffled, splits, stim.num_classes)
                acc["class_shuffled"][0].append(r.accuracy)
                acc["class_shuffled"][1].append(r.std_error)
                acc["class_shuffled"][2].append(r.chance)
            if features is not None:
                for j, f in enumerate(FEATURE_NAMES):
                    r = probe_regression(hidden, features[:, j], splits)
                    reg[f][0].append(r.mse)
                    reg[f][1].append(r.baseline_mse)
                    reg[f][2].append(r.explained)
        for name, (a, se, chance) in acc.items():
            if not a:
                continue
            m, e = _pool(a, se)
            c = float(np.mean(chance))
            rows.append(ProbeRow(name, L, m, c, (m - c) / (1 - c), e, n_test, len(a)))
        for f, (mse, base, expl) in reg.items():
            if not mse:
                continue
            # spread of the explained fraction across seeds
            se = float(np.std(expl, ddof=1) / np.sqrt(len(expl))) if len(expl) > 1 else 0.0
            rows.append(ProbeRow(f, L, float(np.mean(mse)), float(np.mean(base)), float(np.mean(expl)), se,
                                 n_test, len(mse)))
    (out / "probes.csv").write_text(probes_csv(rows))
    return rows


def _fmt(v):
    return str(v) if isinstance(v, (int, np.integer)) else repr(round(float(v), 10))


def probes_csv(rows: List[ProbeRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PROBE_COLUMNS)
    for r in rows:
        w.writerow([r.probe, r.L, _fmt(r.score), _fmt(r.reference), _fmt(r.explained), _fmt(r.std_error),
                    r.n_test, r.n_seeds])
    return buf.getvalue()


def read_probes(path) -> List[ProbeRow]:
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return [ProbeRow(d["probe"], int(d["L"]), float(d["score"]), float(d["chance_or_baseline"]),
                         float(d["explained"]), float(d["std_error"]), int(d["n_test"]), int(d["n_seeds"]))
                for d in rd]
