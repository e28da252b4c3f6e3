"""
Linear information bottlenecks trained against a pipeline's latent targets.

For width ``L`` every recording stream passes through an affine compression
``g`` (channels -> L) and an affine readout ``f`` (L -> each latent target).
Both maps are learned jointly with minibatch AdamW on the weighted sum of
per-target mean squared errors, and the snapshot with the lowest
validation loss is kept. Weight decay acts on the weight matrices only;
biases are not decayed.

Several streams are bottlenecked separately, each with the same width and
its own readout to the targets assigned to it. Streams recorded over several
steps (one example = ``steps`` consecutive measurements) are unrolled so
that the bottleneck acts on every step independently.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from .data import PairedDataset, load_arrays, save_arrays
from .errors import AlignmentError, ConfigError, ShapeError, WidthExceedsInput
from .numerics import Standardizer, TrainerConfig, standardize, train_adamw
from .pipelines.base import LatentTarget

log = logging.getLogger(__name__)

FLOOR_STREAM_SALT = 0xF1004


@dataclass(frozen=True)
class BottleneckSpec:
    """Width and training recipe of a bottleneck.

    ``width=None`` requests the unrestricted reference: the compression map is
    fixed to the identity on the (standardized) channels and only the
    readout is trained.
    """

    width: Optional[int]
    loss_weights: Mapping[str, float] = field(default_factory=dict)
    trainer: TrainerConfig = TrainerConfig()
    standardize_inputs: bool = True
    g_bias: bool = True
    f_bias: bool = True
    allow_wide: bool = False
    g_init_scale: float = 0.0
    stream_targets: Optional[Mapping[str, Sequence[str]]] = None

    def __post_init__(self):
        if self.width is not None and self.width < 1:
            raise ConfigError("bottleneck width must be >= 1")
        if any(w < 0 for w in self.loss_weights.values()):
            raise ConfigError("loss weights must be non-negative")


@dataclass
class StreamBottleneck:
    stream: str
    standardizer: Standardizer
    G: np.ndarray  # (channels, L)
    bg: np.ndarray  # (L,)
    readouts: Dict[str, tuple]  # name -> (F (L, D), bf (D,))
    steps: int = 1
    trainable_g: bool = True
    best_validation_loss: float = float("nan")
    train_loss: float = float("nan")
    best_epoch: int = -1
    train_curve: List[float] = field(default_factory=list)
    validation_curve: List[float] = field(default_factory=list)

    @property
    def width(self):
        return self.G.shape[1]

    @property
    def channels(self):
        return self.G.shape[0]

    def hidden(self, x):
        """Unrolled rows (examples * steps, channels) -> hidden (rows, L)."""
        return self.standardizer.transform(x) @ self.G + self.bg

    def predict(self, h):
        return {name: h @ F + bf for name, (F, bf) in self.readouts.items()}


@dataclass
class TrainedBottleneck:
    units: List[StreamBottleneck]
    width: Optional[int]
    loss_weights: Dict[str, float]
    seed: int
    floor: bool = False
    floor_seed: Optional[int] = None

    @property
    def best_validation_loss(self):
        return float(sum(u.best_validation_loss for u in self.units))

    @property
    def train_loss(self):
        return float(sum(u.train_loss for u in self.units))

    @property
    def training_curve(self):
        return {u.stream: {"train": u.train_curve, "validation": u.validation_curve} for u in self.units}

    def unit(self, stream) -> StreamBottleneck:
        for u in self.units:
            if u.stream == stream:
                return u
        raise KeyError(stream)


# ---------------------------------------------------------------- helpers

def _unroll(data, steps):
    data = np.asarray(data)
    n = data.shape[0]
    return data.reshape(n * steps, data.shape[1] // steps)


def _rows(idx, steps):
    idx = np.asarray(idx, dtype=np.int64)
    return (idx[:, None] * steps + np.arange(steps)[None, :]).ravel()


def _assign(dataset: PairedDataset, targets: Sequence[LatentTarget], spec: BottleneckSpec):
    names = [t.name for t in targets]
    streams = [s.name for s in dataset.streams]
    if spec.stream_targets:
        mapping = {k: list(v) for k, v in spec.stream_targets.items()}
        unknown = set(mapping) - set(streams)
        if unknown:
            raise ConfigError(f"stream_targets names unknown streams {sorted(unknown)}")
        for v in mapping.values():
            for t in v:
                if t not in names:
                    raise ConfigError(f"stream_targets names unknown target {t!r}")
    elif len(streams) == 1:
        mapping = {streams[0]: names}
    elif len(streams) == len(names):
        mapping = {s: [t] for s, t in zip(streams, names)}
    else:
        raise ConfigError("several streams need an explicit stream_targets assignment")
    return mapping


def _weights(targets, spec):
    weights = {}
    for t in targets:
        if t.name not in spec.loss_weights:
            if spec.loss_weights:
                raise ConfigError(f"no loss weight for latent target {t.name!r}")
            weights[t.name] = 1.0
        else:
            weights[t.name] = float(spec.loss_weights[t.name])
    return weights


def _check_targets(dataset, targets):
    n = dataset.num_examples
    for t in targets:
        if t.data.shape[0] != n:
            raise AlignmentError(f"latent target {t.name!r} has {t.data.shape[0]} rows, dataset has {n}")
        if not np.all(np.isfinite(t.data)):
            raise AlignmentError(f"latent target {t.name!r} contains non-finite values")


def floor_recordings(dataset: PairedDataset, seed: int) -> Dict[str, np.ndarray]:
    """Standard-normal stand-ins for every stream, one fixed draw per example."""
    out = {}
    for i, s in enumerate(dataset.streams):
        rng = np.random.default_rng([int(seed), FLOOR_STREAM_SALT, i])
        out[s.name] = rng.standard_normal(s.data.shape).astype(np.float32)
    return out


# ---------------------------------------------------------------- training

def _fit_unit(x_all, ys: Dict[str, np.ndarray], weights, train_rows, val_rows, width, spec, seed):
    if spec.standardize_inputs:
        st, _ = standardize(x_all[train_rows])
    else:
        st = Standardizer.identity(x_all.shape[1])
    xs = st.transform(x_all)
    xs[:, st.constant] = 0.0
    C = xs.shape[1]
    full = width is None
    L = C if full else int(width)
    if not full and L >= C:
        msg = f"bottleneck width {L} >= input channels {C}; it cannot restrict information"
        if not spec.allow_wide:
            raise WidthExceedsInput(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    names = list(ys)
    rng = np.random.default_rng([int(seed), 0xB0771E])
    params = {"bg": np.zeros(L)}
    if full:
        params["G"] = np.eye(C)
    else:
        params["G"] = rng.standard_normal((C, L)) * (spec.g_init_scale / np.sqrt(C))
    for nm in names:
        params[f"F:{nm}"] = rng.standard_normal((L, ys[nm].shape[1])) / np.sqrt(L)
        params[f"bf:{nm}"] = np.zeros(ys[nm].shape[1])
    scale = {nm: weights[nm] / ys[nm].shape[1] for nm in names}
    frozen = {"bg"} if not spec.g_bias else set()
    if full:
        frozen |= {"G", "bg"}
    if not spec.f_bias:
        frozen |= {f"bf:{nm}" for nm in names}

    def forward(p, rows):
        h = xs[rows] @ p["G"] + p["bg"]
        return h, {nm: h @ p[f"F:{nm}"] + p[f"bf:{nm}"] for nm in names}

    def loss_only(p, rows):
        _, pred = forward(p, rows)
        return float(sum(scale[nm] * np.sum((pred[nm] - ys[nm][rows]) ** 2) for nm in names) / len(rows))

    def loss_and_grad(p, idx):
        rows = train_rows[idx]
        h, pred = forward(p, rows)
        B = len(rows)
        loss = 0.0
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dh = np.zeros_like(h)
        for nm in names:
            r = pred[nm] - ys[nm][rows]
            loss += scale[nm] * np.sum(r * r) / B
            dp = (2.0 * scale[nm] / B) * r
            if f"F:{nm}" not in frozen:
                grads[f"F:{nm}"] = h.T @ dp
            if f"bf:{nm}" not in frozen:
                grads[f"bf:{nm}"] = dp.sum(axis=0)
            dh += dp @ p[f"F:{nm}"].T
        if "G" not in frozen:
            grads["G"] = xs[rows].T @ dh
        if "bg" not in frozen:
            grads["bg"] = dh.sum(axis=0)
        return loss, grads

    trainer = spec.trainer.replace(seed=int(seed))
    frozen_vals = {k: params[k].copy() for k in frozen}

    def guarded(p, idx):
        return loss_and_grad(_restore(p, frozen_vals), idx)

    result = train_adamw(
        params, guarded, len(train_rows), trainer,
        validation_loss=lambda p: loss_only(_restore(p, frozen_vals), val_rows),
        train_loss=lambda p: loss_only(_restore(p, frozen_vals), train_rows),
        no_decay=[k for k in params if k == "bg" or k.startswith("bf:")],
    )
    p = _restore(result.params, frozen_vals)
    readouts = {nm: (p[f"F:{nm}"], p[f"bf:{nm}"]) for nm in names}
    return dict(standardizer=st, G=p["G"], bg=p["bg"], readouts=readouts, trainable_g=not full,
                best_validation_loss=result.best_validation_loss, train_loss=loss_only(p, train_rows),
                best_epoch=result.best_epoch, train_curve=result.train_curve,
                validation_curve=result.validation_curve)


def _restore(p, frozen_vals):
    # weight decay must not move frozen parameters
    for k, v in frozen_vals.items():
        p[k][...] = v
    return p


def _train(dataset, targets, spec, recordings, floor=False):
    _check_targets(dataset, targets)
    weights = _weights(targets, spec)
    mapping = _assign(dataset, targets, spec)
    by_name = {t.name: t for t in targets}
    splits = dataset.splits
    seed = spec.trainer.seed
    units = []
    for si, stream in enumerate(dataset.streams):
        if stream.name not in mapping:
            continue
        steps = stream.steps
        ys = {}
        for nm in mapping[stream.name]:
            t = by_name[nm]
            if t.steps != steps:
                raise AlignmentError(f"target {nm!r} has {t.steps} steps, stream {stream.name!r} has {steps}")
            ys[nm] = _unroll(t.data, steps)
        x = _unroll(recordings[stream.name], steps).astype(np.float64)
        fitted = _fit_unit(x, ys, weights, _rows(splits.train, steps), _rows(splits.validation, steps),
                           spec.width, spec, seed + si)
        units.append(StreamBottleneck(stream=stream.name, steps=steps, **fitted))
        log.debug("stream %s width %s: best epoch %d val %.6g", stream.name, spec.width,
                  fitted["best_epoch"], fitted["best_validation_loss"])
    return TrainedBottleneck(units, spec.width, weights, seed, floor=floor,
                             floor_seed=seed if floor else None)


def train_bottleneck(dataset: PairedDataset, targets: Sequence[LatentTarget], spec: BottleneckSpec) -> TrainedBottleneck:
    """Jointly learn compression and readout maps on the training split."""
    recordings = {s.name: s.data for s in dataset.streams}
    return _train(dataset, targets, spec, recordings)


def train_random_floor(dataset: PairedDataset, targets: Sequence[LatentTarget], spec: BottleneckSpec) -> TrainedBottleneck:
    """Same procedure with every recording row replaced by N(0, 1) noise.

    The noise is drawn once per example from ``spec.trainer.seed`` and stays
    fixed across epochs; use :func:`floor_recordings` to regenerate it for
    evaluation.
    """
    return _train(dataset, targets, spec, floor_recordings(dataset, spec.trainer.seed), floor=True)


# ---------------------------------------------------------------- inference

@dataclass
class BottleneckOutput:
    hidden: np.ndarray  # (examples * steps, total width)
    latents: Dict[str, np.ndarray]  # name -> (examples, steps * dims)
    hidden_by_stream: Dict[str, np.ndarray]


def apply_bottleneck(tb: TrainedBottleneck, recordings: Union[Mapping[str, np.ndarray], np.ndarray, PairedDataset],
                     rows=None) -> BottleneckOutput:
    """Compress recordings and predict latents.

    ``recordings`` may be a dataset, a mapping of stream name to data, or a
    bare matrix when the bottleneck has a single stream. ``rows`` selects
    examples.
    """
    if isinstance(recordings, PairedDataset):
        recordings = {s.name: s.data for s in recordings.streams}
    elif not isinstance(recordings, Mapping):
        if len(tb.units) != 1:
            raise ShapeError("bare matrix input needs a single-stream bottleneck")
        recordings = {tb.units[0].stream: recordings}
    hidden, latents, by_stream = [], {}, {}
    for u in tb.units:
        if u.stream not in recordings:
            raise ShapeError(f"missing recordings for stream {u.stream!r}")
        data = np.asarray(recordings[u.stream], dtype=np.float64)
        if rows is not None:
            data = data[np.asarray(rows)]
        if data.ndim != 2 or data.shape[1] != u.channels * u.steps:
            raise ShapeError(f"stream {u.stream!r}: expected {u.channels * u.steps} columns, got {data.shape}")
        x = _unroll(data, u.steps)
        xs = u.standardizer.transform(x)
        xs[:, u.standardizer.constant] = 0.0
        h = xs @ u.G + u.bg
        n = data.shape[0]
        for name, pred in u.predict(h).items():
            latents[name] = pred.reshape(n, -1)
        by_stream[u.stream] = h
        hidden.append(h)
    return BottleneckOutput(np.hstack(hidden), latents, by_stream)


def export_saliency(tb: TrainedBottleneck, channel_labels: Optional[Mapping[str, Sequence[str]]] = None):
    """Per-channel importance of every stream's compression map.

    Saliency of a channel is the Euclidean norm of its row of weights acting
    on standardized input (bias excluded), i.e. the raw weight times the
    channel's training standard deviation, so every channel is scored per
    unit of its own variability. Channels flagged constant at
    standardization carry no signal and get zero.

    Returns ``{stream: weights}``, plus ``{stream: {region: summed weight}}``
    when ``channel_labels`` are given.
    """
    sal = {}
    for u in tb.units:
        w = np.linalg.norm(u.G, axis=1)
        w[u.standardizer.constant] = 0.0
        sal[u.stream] = w
    if channel_labels is None:
        return sal
    regions = {}
    for stream, w in sal.items():
        labels = channel_labels.get(stream)
        if labels is None:
            continue
        agg: Dict[str, float] = {}
        for lab, v in zip(labels, w):
            agg[lab] = agg.get(lab, 0.0) + float(v)
        regions[stream] = dict(sorted(agg.items()))
    return sal, regions


# ---------------------------------------------------------------- persistence

def save_bottleneck(tb: TrainedBottleneck, directory):
    arrays = {}
    units = []
    for i, u in enumerate(tb.units):
        pre = f"u{i}_"
        arrays[pre + "mean"] = u.standardizer.mean
        arrays[pre + "scale"] = u.standardizer.scale
        arrays[pre + "constant"] = u.standardizer.constant.astype(np.float32)
        arrays[pre + "G"] = u.G
        arrays[pre + "bg"] = u.bg
        for name, (F, bf) in u.readouts.items():
            arrays[f"{pre}F_{name}"] = F
            arrays[f"{pre}bf_{name}"] = bf
        units.append({"stream": u.stream, "steps": u.steps, "targets": list(u.readouts),
                      "trainable_g": u.trainable_g, "best_validation_loss": u.best_validation_loss,
                      "train_loss": u.train_loss, "best_epoch": u.best_epoch,
                      "train_curve": u.train_curve, "validation_curve": u.validation_curve})
    meta = {"width": tb.width, "loss_weights": tb.loss_weights, "seed": tb.seed, "floor": tb.floor,
            "floor_seed": tb.floor_seed, "units": units}
    return save_arrays(directory, "trained_bottleneck", arrays, meta)


def load_bottleneck(directory) -> TrainedBottleneck:
    a, meta = load_arrays(directory, "trained_bottleneck")
    f = lambda k: a[k].astype(np.float64)
    units = []
    for i, um in enumerate(meta["units"]):
        pre = f"u{i}_"
        st = Standardizer(f(pre + "mean"), f(pre + "scale"), a[pre + "constant"] > 0.5)
        readouts = {nm: (f(f"{pre}F_{nm}"), f(f"{pre}bf_{nm}")) for nm in um["targets"]}
        units.append(StreamBottleneck(um["stream"], st, f(pre + "G"), f(pre + "bg"), readouts, um["steps"],
                                      um["trainable_g"], um["best_validation_loss"], um["train_loss"],
                                      um["best_epoch"], um["train_curve"], um["validation_curve"]))
    return TrainedBottleneck(units, meta["width"], meta["loss_weights"], meta["seed"], meta["floor"],
                             meta["floor_seed"])
