"""Acceptance suite.

Every test prints one ``PASS``/``FAIL`` line for its criterion (also
collected into the terminal summary) and then asserts the verdict. The
default vision sweep (k=8, 4 classes, noise 0.05, widths 1..32, seeds 0-2)
is run once per session and shared.
"""

import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from infobottleneck.bottleneck import BottleneckSpec, apply_bottleneck, train_bottleneck
from infobottleneck.data import decode_f32
from infobottleneck.evaluation import higher_is_better
from infobottleneck.harness import SweepConfig, render_report, run_probes, run_sweep
from infobottleneck.numerics import TrainerConfig, ridge_solve
from infobottleneck.pipelines import LatentTarget
from infobottleneck.synthetic import (SyntheticWorldConfig, generate_vision_world, oracle_best_linear,
                                      oracle_spectrum)

SIZES = [1, 2, 4, 8, 12, 16, 32]
SEEDS = [0, 1, 2]
TEXT_WORLD = {"kind": "ngram-text", "latent_dim": 16, "num_channels": 64, "informative_channels": list(range(32)),
              "num_examples": 600, "num_classes": 1}


def vision_config(base, output, **world):
    return SweepConfig.from_dict({"world": dict(world), "pipeline": "vision-pca", "sizes": SIZES,
                                  "seeds": SEEDS, "output": output}, base)


def text_config(base, output, sizes, seeds, **world):
    return SweepConfig.from_dict({"world": {**TEXT_WORLD, **world}, "pipeline": "text-encoding", "sizes": sizes,
                                  "seeds": seeds, "output": output}, base)


@pytest.fixture(scope="session")
def default_sweep(tmp_path_factory):
    cfg = vision_config(tmp_path_factory.mktemp("acceptance"), "default")
    t0 = time.perf_counter()
    rep = run_sweep(cfg)
    elapsed = time.perf_counter() - t0
    probes = run_probes(cfg)
    return cfg, rep, probes, elapsed


@pytest.fixture(scope="session")
def text_sweep(tmp_path_factory):
    cfg = text_config(tmp_path_factory.mktemp("acceptance_text"), "text", [4, 16], SEEDS)
    return cfg, run_sweep(cfg)


@pytest.fixture
def report(verdicts):
    def emit(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        print(line)
        verdicts.append((n, line))
        return ok
    return emit


def _cell(cfg, name):
    return json.loads((cfg.output_dir / "cells" / name / "result.json").read_text())


def test_c01_saturation_point(default_sweep, report):
    cfg, rep, _, elapsed = default_sweep
    frac = rep.fraction_of_full["pixel_correlation"]
    L_star = cfg.world_config().oracle_width
    ok = frac[L_star] >= 0.95 and frac[2] < 0.80 and elapsed <= 600
    assert report(1, ok, f"pixel correlation at L*={L_star} is {frac[L_star]:.3f} of full (>= 0.95), "
                         f"at L=2 {frac[2]:.3f} (< 0.80), sweep {elapsed:.0f} s (<= 600 s)")


def _oracle_case(seed):
    ds, gt = generate_vision_world(SyntheticWorldConfig(num_examples=2000, seed=seed))
    return ds, gt, gt.code()


def test_c02_oracle_equivalence(report):
    widths = [1, 2, 4, 8, 16]
    mse = {L: [] for L in widths}
    oracle = {L: [] for L in widths}
    ols = []
    for seed in SEEDS:
        ds, gt, u = _oracle_case(seed)
        tr, te = ds.splits.train, ds.splits.test
        for L in widths:
            spec = BottleneckSpec(L, {"code": 1.0}, TrainerConfig(seed=seed))
            tb = train_bottleneck(ds, [LatentTarget("code", u)], spec)
            pred = apply_bottleneck(tb, ds, rows=te).latents["code"]
            mse[L].append(float(np.mean((pred - u[te]) ** 2)))
            oracle[L].append(oracle_best_linear(gt, L))
        # unrestricted least squares on the same rows: the estimation excess every fitted map pays
        x = ds.streams[0].data.astype(np.float64)
        xm = x[tr].mean(0)
        W = ridge_solve(np.hstack([x[tr] - xm, np.ones((len(tr), 1))]), u[tr]).weights
        pred = np.hstack([x[te] - xm, np.ones((len(te), 1))]) @ W
        ols.append(float(np.mean((pred - u[te]) ** 2)))
    ratios = {L: np.mean(mse[L]) / np.mean(oracle[L]) for L in widths}
    ok = all(abs(r - 1) <= 0.10 for r in ratios.values())
    detail = ", ".join(f"L={L} {r:.3f}" for L, r in ratios.items())
    ols_ratio = np.mean(ols) / np.mean(oracle[16])
    assert report(2, ok, f"trained / oracle latent MSE: {detail} (each within 1 +/- 0.10); "
                         f"unrestricted least squares at L=16 reaches {ols_ratio:.3f}")


def test_c03_floor_ceiling_bracketing(default_sweep, text_sweep, report):
    bad, checked = [], 0
    for cfg, rep in ((default_sweep[0], default_sweep[1]), text_sweep):
        for m in rep.metrics:
            fl, ce = rep.floor[m], rep.ceiling[m]
            lo, hi = (fl, ce) if higher_is_better(m) else (ce, fl)
            for L, c in rep.scores[m].items():
                checked += 1
                eps_lo = np.hypot(c.std_error, lo.std_error)
                eps_hi = np.hypot(c.std_error, hi.std_error)
                if not (lo.mean - eps_lo <= c.mean <= hi.mean + eps_hi):
                    bad.append(f"{cfg.pipeline}/{m}/L={L}")
    assert report(3, not bad, f"{checked - len(bad)}/{checked} (metric, L) scores inside floor/ceiling +/- one "
                              f"pooled SE" + (f"; outside: {', '.join(bad)}" if bad else ""))


def test_c04_floor_behaviour(default_sweep, report):
    cfg = default_sweep[0]
    mean_r, abs_r, dominance, n = [], [], [], 0
    for s in SEEDS:
        res = _cell(cfg, f"floor_s{s}")
        r = np.asarray(res["metrics"]["pixel_correlation"]["scores"])
        n = r.size
        mean_r.append(float(r.mean()))
        abs_r.append(float(np.abs(r).mean()))
        d = res["floor_diagnostics"]
        dominance.append((d["distance_to_prior"], d["distance_to_true"]))
    # per-image |r| of an information-free guess (a random training image) for scale
    ds, _ = generate_vision_world(cfg.world_config())
    im = ds.stimuli.images.reshape(ds.num_examples, -1).astype(np.float64)
    pick = np.random.default_rng(0).choice(ds.splits.train, len(ds.splits.test))
    blind = np.mean([abs(np.corrcoef(im[j], im[i])[0, 1]) for i, j in zip(ds.splits.test, pick)])
    ok = n == 200 and max(abs(v) for v in mean_r) < 0.1 and all(p < t for p, t in dominance)
    dd = ", ".join(f"{p:.3f} < {t:.3f}" for p, t in dominance)
    assert report(4, ok, f"floor |mean pixel r| per seed {[round(abs(v), 3) for v in mean_r]} (< 0.1, n={n}); "
                         f"embedding distance to prior vs true {dd}; per-image |r| {np.mean(abs_r):.3f}, "
                         f"random-training-image guess {blind:.3f}")


def test_c05_effective_dimensionality(default_sweep, text_sweep, tmp_path, report):
    over = []
    for cfg in (default_sweep[0], text_sweep[0]):
        for L in cfg.sizes:
            for s in cfg.seeds:
                e = _cell(cfg, f"L{L}_s{s}")["effective_dim"]
                if e > L:
                    over.append(f"{cfg.pipeline} L={L} s={s}: {e}")
    zcfg = SweepConfig.from_dict({"world": {"noise_std": 0.0}, "pipeline": "vision-pca", "sizes": [32],
                                  "seeds": SEEDS, "output": "zero"}, tmp_path)
    zrep = run_sweep(zcfg)
    L_star = zcfg.world_config().oracle_width
    dims = zrep.effective_dimensionality[32]
    edim = float(np.mean(dims))
    # the same 95% rule on the oracle's explained-covariance spectrum
    _, gt = generate_vision_world(zcfg.world_config())
    ev = oracle_spectrum(gt)[0]
    oracle_dim = int(np.searchsorted(np.cumsum(ev) / ev.sum(), 0.95 - 1e-12) + 1)
    ok = not over and L_star - 2 <= edim <= L_star + 2
    assert report(5, ok, f"effdim <= L for every run ({len(over)} violations); zero-noise L=32 effdim {dims} "
                         f"mean {edim:.2f}, band [{L_star - 2}, {L_star + 2}]; oracle spectrum gives {oracle_dim}")


def test_c06_probe_ordering(default_sweep, report):
    probes = default_sweep[2]
    row = {(r.probe, r.L): r for r in probes}
    last = SIZES[-1]
    feats = {f: row[f, 4].explained / row[f, last].explained for f in ("brightness", "rms_contrast")}
    c1 = row["class", 1]
    near_chance = abs(c1.score - c1.reference) <= 3 * c1.std_error
    high = [row["class", L].score for L in SIZES if L >= 12]
    ok = all(v >= 0.9 for v in feats.values()) and near_chance and min(high) >= 0.9
    assert report(6, ok, f"explained at L=4 / L={last}: brightness {feats['brightness']:.3f}, contrast "
                         f"{feats['rms_contrast']:.3f} (>= 0.9); class at L=1 {c1.score:.3f} vs chance "
                         f"{c1.reference:.2f} (3 SE = {3 * c1.std_error:.3f}); class at L>=12 min {min(high):.3f}")


def test_c07_saliency_localization(default_sweep, report):
    cfg = default_sweep[0]
    inf = list(cfg.world_config().informative_channels)
    share = {}
    for L in SIZES:
        w = decode_f32((cfg.output_dir / f"saliency_{L}.f32").read_bytes()).astype(np.float64)
        share[L] = float(w[inf].sum() / w.sum())
    ok = all(v >= 0.8 for v in share.values())
    detail = ", ".join(f"L={L} {v:.3f}" for L, v in share.items())
    assert report(7, ok, f"saliency share on {len(inf)} informative channels at noise "
                         f"{cfg.world_config().noise_std}: {detail} (each >= 0.80)")


def test_c08_metric_unit_suite(report):
    here = Path(__file__).parent
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           str(here / "test_evaluation.py")], capture_output=True, text=True)
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    assert report(8, proc.returncode == 0, f"metric examples and WER enumeration property: {tail}")


def test_c09_text_surrogate(text_sweep, tmp_path, report):
    zcfg = text_config(tmp_path, "zero", [16], [0], vocab_size=8, sentence_length=10, noise_std=0.0)
    zrep = run_sweep(zcfg)
    exact = zrep.scores["wer"][16].mean
    floor = text_sweep[1].floor["wer"].mean
    ok = exact == 0.0 and zrep.ceiling["wer"].mean == 0.0 and abs(floor - 1.0) <= 0.15
    assert report(9, ok, f"zero-noise vocab 8 length 10 WER {exact:.4f} (== 0); noise-floor WER on the default "
                         f"text world {floor:.3f} (1.0 +/- 0.15)")


def test_c10_determinism(default_sweep, tmp_path, report):
    cfg_a = default_sweep[0]
    cfg_b = vision_config(tmp_path, "again")
    run_sweep(cfg_b)
    run_probes(cfg_b)
    names = ["curve.csv", "records.jsonl", "probes.csv"]
    same = [n for n in names if (cfg_a.output_dir / n).read_bytes() == (cfg_b.output_dir / n).read_bytes()]
    ra = sorted(p.relative_to(cfg_a.output_dir) for p in render_report(cfg_a.output_dir))
    rb = sorted(p.relative_to(cfg_b.output_dir) for p in render_report(cfg_b.output_dir))
    graphics = ra == rb and all((cfg_a.output_dir / p).read_bytes() == (cfg_b.output_dir / p).read_bytes()
                                for p in ra)
    ok = len(same) == len(names) and graphics and len(ra) > 0
    assert report(10, ok, f"repeated sweep: {len(same)}/{len(names)} result files identical, "
                          f"{len(ra)} rendered files identical: {graphics}")
