"""
Sweep runner: floor, one run per (width, seed), full-input reference and
ceiling, scored and assembled into a curve report.

Every cell is an isolated deterministic task that writes its own directory
under ``cells/`` and finishes by atomically writing ``result.json``; a cell
with a result carrying the current config hash is complete and skipped on
re-runs. Cells load the dataset and the fitted pipeline from the output
directory, so sequential and parallel runs compute on identical inputs.
"""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .. import __version__
from ..bottleneck import (BottleneckSpec, apply_bottleneck, export_saliency, floor_recordings, save_bottleneck,
                          train_bottleneck, train_random_floor)
from ..data import decode_f32, encode_f32, load_dataset, save_dataset
from ..errors import ConfigError, RefusesToMix
from ..evaluation.curves import (CurveReport, MetricResult, assemble_curve, curve_csv, default_embedder,
                                 dumps_records, score_stimuli)
from ..evaluation.representation import effective_dimensionality
from ..pipelines import compute_ceiling, make_pipeline
from ..pipelines.text import EncodingModelTextPipeline
from ..pipelines.vision import PcaPriorVisionPipeline
from ..synthetic import generate_text_world, generate_vision_world
from .config import SweepConfig

log = logging.getLogger(__name__)

PIPELINE_CLASSES = {"vision-pca": PcaPriorVisionPipeline, "text-encoding": EncodingModelTextPipeline}
# prior samples drawn for the floor's prior-dominance check
PRIOR_SAMPLES = 200


@dataclass(frozen=True)
class Cell:
    role: str  # run | floor | full | ceiling
    width: Optional[int] = None
    seed: Optional[int] = None

    @property
    def name(self) -> str:
        if self.role == "run":
            return f"L{self.width}_s{self.seed}"
        if self.role == "ceiling":
            return "ceiling"
        return f"{self.role}_s{self.seed}"


@dataclass
class RunRecord:
    config_hash: str
    artifact_version: str
    seeds: List[int]
    result_paths: Dict[str, str] = field(default_factory=dict)
    wall_clock: Dict[str, float] = field(default_factory=dict)

    def as_dict(self):
        return {"config_hash": self.config_hash, "artifact_version": self.artifact_version, "seeds": self.seeds,
                "result_paths": self.result_paths, "wall_clock": self.wall_clock}


def cells_for(config: SweepConfig) -> List[Cell]:
    out = [Cell("ceiling")]
    for s in config.seeds:
        out.append(Cell("floor", seed=s))
        out.append(Cell("full", seed=s))
        out.extend(Cell("run", L, s) for L in config.sizes)
    return out


def _read_json(path: Path):
    return json.loads(path.read_text())


def _write_json(path: Path, obj):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------- preparation

def _default_params(config: SweepConfig, dataset) -> Dict:
    """Pipeline arguments implied by the dataset (text: vocabulary and the
    world's encoding map), overridden by ``pipeline_params``."""
    params: Dict = {}
    if config.pipeline == "text-encoding":
        params["vocab"] = list(dataset.stimuli.vocab)
        world = dataset.meta.get("world")
        if world:
            params["hidden_dim"] = int(world["latent_dim"])
            params["seed"] = int(world["seed"])
    params.update(config.pipeline_params)
    return params


def prepare(config: SweepConfig, out: Path) -> str:
    """Create the output directory, dataset and fitted pipeline; returns the run hash.

    Raises RefusesToMix when ``out`` holds a run with another hash.
    """
    h = config.config_hash()
    out.mkdir(parents=True, exist_ok=True)
    rec_path = out / "run.json"
    if rec_path.exists():
        prev = _read_json(rec_path).get("config_hash")
        if prev != h:
            raise RefusesToMix(f"{out} holds a run with config hash {prev}; this config hashes to {h}")
    else:
        stale = [p for p in (out / "cells").glob("*/result.json")] if (out / "cells").exists() else []
        for p in stale:
            if _read_json(p).get("config_hash") != h:
                raise RefusesToMix(f"{p.parent} was produced by a different config")
    ds_dir = out / "dataset"
    if not (ds_dir / "manifest.json").exists():
        if config.world is not None:
            wc = config.world_config()
            if wc.kind == "shapes-image":
                dataset, _ = generate_vision_world(wc)
            else:
                dataset, _ = generate_text_world(wc)
        else:
            dataset = load_dataset(config.dataset_dir)
        kind = dataset.stimuli.kind
        if kind != config.kind:
            raise ConfigError(f"pipeline {config.pipeline!r} needs {config.kind} stimuli, dataset has {kind}")
        save_dataset(dataset, ds_dir)
    pipe_dir = out / "pipeline"
    if not (pipe_dir / "manifest.json").exists():
        dataset = load_dataset(ds_dir)
        pipe = make_pipeline(config.pipeline, **_default_params(config, dataset))
        pipe.fit(dataset.stimuli.subset(dataset.splits.train))
        pipe.save(pipe_dir)
    if not rec_path.exists():
        _write_json(rec_path, RunRecord(h, __version__, list(config.seeds)).as_dict())
    return h


_CACHE: Dict[str, tuple] = {}


def _load_inputs(out: Path, config: SweepConfig):
    # manifests carry payload checksums, so a regenerated directory misses the cache
    key = str(out) + (out / "dataset" / "manifest.json").read_text() + (out / "pipeline" / "manifest.json").read_text()
    if key not in _CACHE:
        dataset = load_dataset(out / "dataset")
        pipe = PIPELINE_CLASSES[config.pipeline].load(out / "pipeline")
        targets = pipe.latent_targets(dataset.stimuli)
        _CACHE.clear()
        _CACHE[key] = (dataset, pipe, targets)
    return _CACHE[key]


# ---------------------------------------------------------------- cells

def _spec(config: SweepConfig, pipe, width, seed) -> BottleneckSpec:
    weights = config.loss_weights if config.loss_weights is not None else getattr(pipe, "default_loss_weights", {})
    return BottleneckSpec(width, dict(weights), config.trainer_config(seed, getattr(pipe, "default_trainer", {})),
                          standardize_inputs=config.standardize_inputs, allow_wide=config.allow_wide)


def _score(config, reconstructed, true) -> Dict[str, dict]:
    out = {}
    for m in config.metric_names:
        r = score_stimuli(m, reconstructed, true)
        out[m] = {"scores": [float(v) for v in r.per_example_scores], "undefined": r.undefined, "label": r.label}
    return out


def _floor_diagnostics(pipe, reconstructed, true, seed) -> dict:
    """Embedding distances of floor reconstructions to their true stimuli and
    to the centroid of prior samples (prior dominance check)."""
    emb = default_embedder(true.kind)
    items = (lambda s: list(s.images) if s.kind == "image" else list(s.texts))
    er = np.asarray(emb(items(reconstructed)))
    et = np.asarray(emb(items(true)))
    prior = pipe.prior_sample(seed, PRIOR_SAMPLES)
    centroid = np.asarray(emb(items(prior))).mean(axis=0)
    d_true = np.linalg.norm(er - et, axis=1)
    d_prior = np.linalg.norm(er - centroid, axis=1)
    return {"distance_to_true": float(d_true.mean()), "distance_to_prior": float(d_prior.mean()),
            "embedder": getattr(emb, "name", "")}


def run_cell(out: Path, config: SweepConfig, cell: Cell, config_hash: str) -> str:
    """Compute one cell and write ``cells/<name>/result.json``; returns the name."""
    t0 = time.perf_counter()
    dataset, pipe, targets = _load_inputs(out, config)
    test = dataset.splits.test
    true = dataset.stimuli.subset(test)
    cdir = out / "cells" / cell.name
    cdir.mkdir(parents=True, exist_ok=True)
    result = {"config_hash": config_hash, "role": cell.role, "L": cell.width, "seed": cell.seed}
    if cell.role == "ceiling":
        rec = compute_ceiling(pipe, dataset, "test")
        result["metrics"] = _score(config, rec, true)
    else:
        width = {"run": cell.width, "full": None, "floor": config.floor_width}[cell.role]
        spec = _spec(config, pipe, width, cell.seed)
        if cell.role == "floor":
            tb = train_random_floor(dataset, targets, spec)
            out_b = apply_bottleneck(tb, floor_recordings(dataset, cell.seed), rows=test)
        else:
            tb = train_bottleneck(dataset, targets, spec)
            out_b = apply_bottleneck(tb, dataset, rows=test)
        rec = pipe.reconstruct(out_b.latents)
        result["metrics"] = _score(config, rec, true)
        result["effective_dim"] = effective_dimensionality(out_b.hidden)
        result["hidden_width"] = int(out_b.hidden.shape[1])
        result["best_validation_loss"] = tb.best_validation_loss
        result["train_loss"] = tb.train_loss
        save_bottleneck(tb, cdir / "bottleneck")
        if cell.role == "run":
            sal = export_saliency(tb)
            (cdir / "saliency.f32").write_bytes(encode_f32(np.concatenate([sal[u.stream] for u in tb.units])))
        if cell.role == "floor":
            result["floor_diagnostics"] = _floor_diagnostics(pipe, rec, true, cell.seed)
    result["wall_clock"] = time.perf_counter() - t0
    _write_json(cdir / "result.json", result)
    return cell.name


def _cell_done(out: Path, cell: Cell, config_hash: str) -> bool:
    p = out / "cells" / cell.name / "result.json"
    if not p.exists():
        return False
    prev = _read_json(p).get("config_hash")
    if prev != config_hash:
        raise RefusesToMix(f"{p.parent} was produced by a different config")
    return True


def _worker(args):
    out, cfg_dict, base_dir, cell, h = args
    config = SweepConfig.from_dict(cfg_dict, base_dir)
    return run_cell(Path(out), config, cell, h)


# ---------------------------------------------------------------- assembly

def _metric_results(result: dict) -> Dict[str, MetricResult]:
    return {m: MetricResult(m, np.array(v["scores"]), undefined=v["undefined"], label=v["label"])
            for m, v in result["metrics"].items()}


def assemble(out: Path, config: SweepConfig) -> CurveReport:
    """Reduce completed cells into the curve report and write its artifacts."""
    load = lambda c: _read_json(out / "cells" / c.name / "result.json")
    metrics = config.metric_names
    ceiling = _metric_results(load(Cell("ceiling")))
    floor = {m: [] for m in metrics}
    full = {m: [] for m in metrics}
    runs = {L: {m: [] for m in metrics} for L in config.sizes}
    effdims = {L: [] for L in config.sizes}
    for s in config.seeds:
        for m, r in _metric_results(load(Cell("floor", seed=s))).items():
            floor[m].append(r)
        for m, r in _metric_results(load(Cell("full", seed=s))).items():
            full[m].append(r)
        for L in config.sizes:
            res = load(Cell("run", L, s))
            for m, r in _metric_results(res).items():
                runs[L][m].append(r)
            effdims[L].append(int(res["effective_dim"]))
    pipe = _load_inputs(out, config)[1]
    rep = assemble_curve(runs, floor, {m: [ceiling[m]] for m in metrics}, full, effdims, config.seeds,
                         getattr(pipe, "ceiling_label", "ceiling"))
    (out / "curve.csv").write_text(curve_csv(rep))
    (out / "records.jsonl").write_text(dumps_records(rep))
    _write_saliency(out, config)
    return rep


def _write_saliency(out: Path, config: SweepConfig):
    dataset = _load_inputs(out, config)[0]
    labels, streams = [], []
    for s in dataset.streams:
        streams.append({"name": s.name, "channels": s.channels})
        labels.extend(s.channel_labels or [""] * s.channels)
    regions = {}
    for L in config.sizes:
        per_seed = [decode_f32((out / "cells" / Cell("run", L, s).name / "saliency.f32").read_bytes())
                    for s in config.seeds]
        mean = np.mean(per_seed, axis=0)
        (out / f"saliency_{L}.f32").write_bytes(encode_f32(mean))
        tot = float(mean.sum())
        agg: Dict[str, float] = {}
        for lab, v in zip(labels, mean.astype(np.float64)):
            agg[lab] = agg.get(lab, 0.0) + float(v)
        regions[str(L)] = {k: round(v / tot, 10) if tot > 0 else 0.0 for k, v in sorted(agg.items())}
    meta = {"streams": streams, "channel_labels": labels, "sizes": config.sizes, "region_fraction": regions}
    (out / "saliency.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")


def run_sweep(config: SweepConfig, workers: int = 1) -> CurveReport:
    """Run (or resume) every cell of ``config`` and assemble the report.

    Writes ``curve.csv``, ``records.jsonl``, ``saliency_<L>.f32`` and
    ``saliency.json`` into the output directory. Completed cells of a prior
    run with the same config hash are reused.
    """
    out = config.output_dir
    h = prepare(config, out)
    todo = [c for c in cells_for(config) if not _cell_done(out, c, h)]
    log.info("sweep %s: %d cells to run", h[:12], len(todo))
    if workers > 1 and len(todo) > 1:
        args = [(str(out), config.to_dict(), config.base_dir, c, h) for c in todo]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            list(ex.map(_worker, args))
    else:
        for c in todo:
            run_cell(out, config, c, h)
    rep = assemble(out, config)
    record = _read_json(out / "run.json")
    for c in cells_for(config):
        res = _read_json(out / "cells" / c.name / "result.json")
        record["result_paths"][c.name] = f"cells/{c.name}/result.json"
        record["wall_clock"][c.name] = res["wall_clock"]
    record["seeds"] = sorted(set(record["seeds"]) | set(config.seeds))
    _write_json(out / "run.json", record)
    return rep
