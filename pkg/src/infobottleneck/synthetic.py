"""
Forward-model worlds with known ground truth.

Two generators produce :class:`~infobottleneck.data.PairedDataset` objects
whose recordings are a known linear mix of known latents:

* ``generate_vision_world``: procedural shape images driven by ``k``
  latent coordinates and a class label.
* ``generate_text_world``: sentences from a seeded bigram source, with
  per-step hidden targets produced by the text pipeline's encoding map.

``oracle_best_linear`` gives the exact population MSE of the best rank-L
affine predictor of the ground-truth latents from the recordings.

Vision world layout
-------------------
Classes come in pairs that share a shape archetype and position but have
opposite polarity (bright-on-dark, dark-on-bright). Dark classes mirror the
geometry latents (``z -> -z``), so every latent keeps the same first-order
effect across a pair while the two class means cancel. The training mean
image is therefore flat, and a reconstruction that ignores the recordings
carries no spatial information about any particular stimulus. Archetypes
differ in radius (``PAIR_SCALES``), so contrast and edge energy vary with
the class as well as with the latents.

Latent roles, in order (extra coordinates beyond eight add smooth cosine
patterns)::

    0 base brightness   1 contrast   2 size   3 x-shift   4 y-shift
    5 aspect ratio      6 background tilt (x)  7 background tilt (y)
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .data import PairedDataset, RecordingStream, StimulusSet, load_arrays, save_arrays, split_dataset
from .errors import ConfigError

LATENT_ROLES = ("brightness", "contrast", "size", "shift_x", "shift_y", "aspect", "tilt_x", "tilt_y")
MIRRORED = (1, 2, 3, 4, 5)
SUPERSAMPLE = 4
# latent gains: log-contrast, log-radius, shift (fraction of size), log-aspect
GAINS = {"contrast": 0.1, "size": 0.075, "shift": 0.04, "aspect": 0.075, "tilt": 0.06}
# radius of each shape archetype relative to the default 0.2 * size
PAIR_SCALES = (0.75, 1.35, 1.0, 1.15)


@dataclass(frozen=True)
class SyntheticWorldConfig:
    latent_dim: int = 8
    num_channels: int = 256
    informative_channels: Tuple[int, ...] = tuple(range(32))
    noise_std: float = 0.05
    num_examples: int = 2000
    kind: str = "shapes-image"
    num_classes: int = 4
    image_size: int = 32
    vocab_size: int = 50
    seed: int = 0
    split_fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    # text world only
    sentence_length: int = 8
    branching: int = 4
    identity_mixing: bool = False
    num_regions: int = 8

    def __post_init__(self):
        object.__setattr__(self, "informative_channels", tuple(int(i) for i in self.informative_channels))
        object.__setattr__(self, "split_fractions", tuple(float(f) for f in self.split_fractions))
        if self.kind not in ("shapes-image", "ngram-text"):
            raise ConfigError(f"unknown world kind {self.kind!r}")
        if self.latent_dim < 1 or self.latent_dim > self.num_channels:
            raise ConfigError("latent_dim must be in [1, num_channels]")
        inf = self.informative_channels
        if not inf or min(inf) < 0 or max(inf) >= self.num_channels or len(set(inf)) != len(inf):
            raise ConfigError("informative_channels must be distinct indices in [0, num_channels)")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")
        if self.kind == "shapes-image":
            if self.image_size < 16:
                raise ConfigError(f"image_size {self.image_size} too small for shapes (< 16)")
            if self.num_classes < 1:
                raise ConfigError("num_classes must be >= 1")
        else:
            if self.vocab_size < 8:
                raise ConfigError("text worlds need vocab_size >= 8")
            if self.identity_mixing and len(inf) != self.latent_dim:
                raise ConfigError("identity mixing needs exactly latent_dim informative channels")

    @classmethod
    def default_text(cls, **overrides):
        base = dict(kind="ngram-text", latent_dim=16, num_channels=64,
                    informative_channels=tuple(range(32)), num_examples=600, num_classes=1)
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        d = asdict(self)
        d["informative_channels"] = list(self.informative_channels)
        d["split_fractions"] = list(self.split_fractions)
        return d

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown world keys: {sorted(unknown)}")
        return cls(**d)

    @property
    def oracle_width(self) -> int:
        """Width at which the rank-restricted oracle reaches its noise floor."""
        return self.latent_dim + (self.num_classes if self.kind == "shapes-image" else 0)


@dataclass
class GroundTruth:
    """Generating quantities of a world; used by oracle tests only."""

    latents: np.ndarray  # (n, k)
    mixing: np.ndarray  # (num_informative, k + C) for vision, (num_informative, hidden) for text
    class_labels: Optional[np.ndarray]
    config: SyntheticWorldConfig
    hidden_targets: Optional[np.ndarray] = None  # text: (n, steps * hidden)
    extras: dict = field(default_factory=dict)

    def code(self) -> np.ndarray:
        """The linear code mixed into the informative channels."""
        if self.config.kind == "shapes-image":
            return np.hstack([self.latents, np.eye(self.config.num_classes)[self.class_labels]])
        return self.latents

    def save(self, directory):
        arrays = {"latents": self.latents, "mixing": self.mixing}
        if self.class_labels is not None:
            arrays["class_labels"] = self.class_labels.astype(np.float32)
        if self.hidden_targets is not None:
            arrays["hidden_targets"] = self.hidden_targets
        return save_arrays(directory, "ground_truth", arrays, {"config": self.config.to_dict()})

    @classmethod
    def load(cls, directory):
        arrays, meta = load_arrays(directory, "ground_truth")
        cfg = SyntheticWorldConfig.from_dict(meta["config"])
        labels = arrays.get("class_labels")
        return cls(arrays["latents"], arrays["mixing"],
                   None if labels is None else labels.astype(np.int64), cfg,
                   arrays.get("hidden_targets"))


# ---------------------------------------------------------------- rendering

def class_archetypes(num_classes: int, size: int):
    """(shape, centre_x, centre_y, polarity) for every class."""
    shapes = ("ellipse", "square", "diamond", "cross")
    pairs = (num_classes + 1) // 2
    out = []
    for c in range(num_classes):
        pair = c // 2
        if pairs == 1:
            cx = cy = 0.5
        else:
            angle = 2 * np.pi * pair / pairs + np.pi / 4
            cx, cy = 0.5 - 0.14 * np.cos(angle), 0.5 - 0.14 * np.sin(angle)
        out.append((shapes[pair % len(shapes)], cx * size, cy * size, 1.0 if c % 2 == 0 else -1.0))
    return out


def _shape_mask(shape, xs, ys, cx, cy, rx, ry):
    """Boolean coverage of supersampled points; arrays broadcast as (n, 1, 1)."""
    u = (xs - cx) / rx
    v = (ys - cy) / ry
    if shape == "ellipse":
        return u * u + v * v <= 1.0
    if shape == "square":
        return np.maximum(np.abs(u), np.abs(v)) <= 0.88
    if shape == "diamond":
        return np.abs(u) + np.abs(v) <= 1.25
    return (np.minimum(np.abs(u), np.abs(v)) <= 0.4) & (np.maximum(np.abs(u), np.abs(v)) <= 1.1)


def render_shapes(latents, class_labels, num_classes: int, size: int = 32) -> np.ndarray:
    """Render grayscale images in [0, 1], shape (n, size, size, 1).

    Anti-aliased by averaging a ``4x`` supersampled coverage mask.
    """
    z = np.asarray(latents, dtype=np.float64)
    labels = np.asarray(class_labels, dtype=np.int64)
    n, k = z.shape
    full = np.zeros((n, max(k, 8)))
    full[:, :k] = z
    archetypes = class_archetypes(num_classes, size)
    pol = np.array([archetypes[c][3] for c in labels])
    g = full.copy()
    g[:, list(MIRRORED)] *= pol[:, None]

    base = 0.5 + 0.1 * full[:, 0]
    contrast = 0.3 * np.exp(GAINS["contrast"] * g[:, 1])
    scale = np.array([PAIR_SCALES[(c // 2) % len(PAIR_SCALES)] for c in labels])
    radius = 0.2 * size * scale * np.exp(GAINS["size"] * g[:, 2])
    aspect = np.exp(GAINS["aspect"] * g[:, 5])
    shift_x = GAINS["shift"] * size * g[:, 3]
    shift_y = GAINS["shift"] * size * g[:, 4]

    ss = size * SUPERSAMPLE
    coords = (np.arange(ss) + 0.5) / SUPERSAMPLE
    xs = coords[None, None, :]
    ys = coords[None, :, None]
    pix = (np.arange(size) + 0.5) / size - 0.5

    images = np.empty((n, size, size), dtype=np.float64)
    chunk = 128
    for start in range(0, n, chunk):
        sl = slice(start, min(n, start + chunk))
        m = sl.stop - sl.start
        cov = np.zeros((m, size, size))
        for c in np.unique(labels[sl]):
            rows = np.nonzero(labels[sl] == c)[0]
            shape, cx, cy, _ = archetypes[c]
            idx = rows + sl.start
            col = lambda a: a[idx][:, None, None]
            mask = _shape_mask(shape, xs, ys, cx + col(shift_x), cy + col(shift_y),
                               col(radius) * col(aspect), col(radius) / col(aspect))
            cov[rows] = mask.reshape(len(rows), size, SUPERSAMPLE, size, SUPERSAMPLE).mean(axis=(2, 4))
        area = cov.mean(axis=(1, 2), keepdims=True)
        img = base[sl, None, None] + (pol[sl] * contrast[sl])[:, None, None] * (cov - area)
        img += GAINS["tilt"] * full[sl, 6, None, None] * pix[None, None, :]
        img += GAINS["tilt"] * full[sl, 7, None, None] * pix[None, :, None]
        for j in range(8, k):
            fx, fy = 1 + (j - 8) % 2, 1 + ((j - 8) // 2) % 2
            pattern = np.cos(2 * np.pi * fx * pix[None, :]) * np.cos(2 * np.pi * fy * pix[:, None])
            img += 0.04 * full[sl, j, None, None] * pattern[None]
        images[sl] = img
    return np.clip(images, 0.0, 1.0)[..., None].astype(np.float32)


# ---------------------------------------------------------------- vision world

def _region_labels(cfg: SyntheticWorldConfig) -> List[str]:
    per = -(-cfg.num_channels // cfg.num_regions)
    return [f"area{c // per}" for c in range(cfg.num_channels)]


def _mix(code, cfg: SyntheticWorldConfig, rng) -> Tuple[np.ndarray, np.ndarray]:
    n, d = code.shape
    inf = np.asarray(cfg.informative_channels)
    if cfg.identity_mixing:
        mixing = np.eye(len(inf), d)
    else:
        mixing = rng.standard_normal((len(inf), d)) / np.sqrt(d)
    rec = np.zeros((n, cfg.num_channels))
    rec[:, inf] = code @ mixing.T
    if cfg.noise_std > 0:
        rec += cfg.noise_std * rng.standard_normal(rec.shape)
    return rec.astype(np.float32), mixing


def generate_vision_world(cfg: Optional[SyntheticWorldConfig] = None) -> Tuple[PairedDataset, GroundTruth]:
    """Shape-image world: recordings mix ``[z, onehot(class)]`` into the informative channels."""
    cfg = cfg or SyntheticWorldConfig()
    if cfg.kind != "shapes-image":
        raise ConfigError("generate_vision_world needs kind='shapes-image'")
    rng = np.random.default_rng(cfg.seed)
    z = rng.standard_normal((cfg.num_examples, cfg.latent_dim))
    labels = rng.integers(0, cfg.num_classes, cfg.num_examples)
    images = render_shapes(z, labels, cfg.num_classes, cfg.image_size)
    code = np.hstack([z, np.eye(cfg.num_classes)[labels]])
    rec, mixing = _mix(code, cfg, rng)
    splits = split_dataset(cfg.num_examples, cfg.split_fractions, cfg.seed)
    ds = PairedDataset(
        [RecordingStream("recordings", rec, _region_labels(cfg))],
        StimulusSet("image", images=images, class_labels=labels, num_classes=cfg.num_classes),
        splits, seed=cfg.seed, meta={"world": cfg.to_dict()},
    )
    return ds, GroundTruth(z.astype(np.float32), mixing.astype(np.float32), labels, cfg)


# ---------------------------------------------------------------- text world

def source_bigram(vocab_size: int, branching: int, seed: int):
    """Sparse bigram source: (start distribution, transition matrix).

    Every word has ``branching`` successors and sentences open with one of
    ``2 * branching`` words.
    """
    rng = np.random.default_rng([seed, 0x5EED])
    start = np.zeros(vocab_size)
    first = rng.choice(vocab_size, size=min(2 * branching, vocab_size), replace=False)
    start[first] = rng.dirichlet(np.ones(len(first)))
    trans = np.zeros((vocab_size, vocab_size))
    for i in range(vocab_size):
        succ = rng.choice(vocab_size, size=min(branching, vocab_size), replace=False)
        trans[i, succ] = rng.dirichlet(np.ones(len(succ)))
    return start, trans


def sample_sentences(start, trans, n: int, length: int, rng) -> np.ndarray:
    V = len(start)
    out = np.empty((n, length), dtype=np.int64)
    out[:, 0] = rng.choice(V, size=n, p=start)
    cum = np.cumsum(trans, axis=1)
    for t in range(1, length):
        r = rng.random(n)
        out[:, t] = np.minimum((cum[out[:, t - 1]] < r[:, None]).sum(axis=1), V - 1)
    return out


def vocabulary(vocab_size: int) -> List[str]:
    return [f"w{i:03d}" for i in range(vocab_size)]


def generate_text_world(cfg: Optional[SyntheticWorldConfig] = None, pipeline=None):
    """Bigram-sentence world with per-step recordings of encoded contexts.

    The text pipeline's encoding map defines the hidden target of every
    word position; recordings mix those targets into the informative
    channels and add noise. One example is one sentence; its stream holds
    ``sentence_length`` consecutive per-step recordings.
    """
    from .pipelines.text import EncodingModelTextPipeline

    cfg = cfg or SyntheticWorldConfig.default_text()
    if cfg.kind != "ngram-text":
        raise ConfigError("generate_text_world needs kind='ngram-text'")
    rng = np.random.default_rng(cfg.seed)
    start, trans = source_bigram(cfg.vocab_size, cfg.branching, cfg.seed)
    ids = sample_sentences(start, trans, cfg.num_examples, cfg.sentence_length, rng)
    vocab = vocabulary(cfg.vocab_size)
    texts = [[vocab[i] for i in row] for row in ids]
    if pipeline is None:
        pipeline = EncodingModelTextPipeline(vocab, hidden_dim=cfg.latent_dim, seed=cfg.seed)
    hidden = pipeline.encode_ids(ids)  # (n, T, d)
    n, T, d = hidden.shape
    rec, mixing = _mix(hidden.reshape(n * T, d), cfg, rng)
    rec = rec.reshape(n, T * cfg.num_channels)
    splits = split_dataset(cfg.num_examples, cfg.split_fractions, cfg.seed)
    ds = PairedDataset(
        [RecordingStream("recordings", rec, _region_labels(cfg), steps=T)],
        StimulusSet("text", texts=texts, vocab=vocab),
        splits, seed=cfg.seed, meta={"world": cfg.to_dict()},
    )
    gt = GroundTruth(ids.astype(np.float32), mixing.astype(np.float32), None, cfg,
                     hidden.reshape(n, T * d).astype(np.float32),
                     extras={"start": start, "transitions": trans})
    return ds, gt


def sentence_log_prob(ids: Sequence[int], start, trans) -> float:
    lp = np.log(start[ids[0]])
    for a, b in zip(ids[:-1], ids[1:]):
        lp += np.log(trans[a, b])
    return float(lp)


# ---------------------------------------------------------------- oracle

def code_covariance(cfg: SyntheticWorldConfig) -> np.ndarray:
    k, C = cfg.latent_dim, cfg.num_classes
    cov = np.zeros((k + C, k + C))
    cov[:k, :k] = np.eye(k)
    p = np.full(C, 1.0 / C)
    cov[k:, k:] = np.diag(p) - np.outer(p, p)
    return cov


def oracle_spectrum(gt: GroundTruth) -> Tuple[np.ndarray, float, int]:
    """Eigenvalues of the explained-covariance operator, total variance, target dims."""
    cfg = gt.config
    A = np.asarray(gt.mixing, dtype=np.float64)
    if cfg.kind == "shapes-image":
        suu = code_covariance(cfg)
    else:
        h = np.asarray(gt.hidden_targets, dtype=np.float64).reshape(-1, A.shape[1])
        suu = np.cov(h, rowvar=False)
    sxx = A @ suu @ A.T + cfg.noise_std**2 * np.eye(A.shape[0])
    sxu = A @ suu
    explained = sxu.T @ np.linalg.pinv(sxx, hermitian=True) @ sxu
    ev = np.clip(np.sort(np.linalg.eigvalsh((explained + explained.T) / 2))[::-1], 0.0, None)
    return ev, float(np.trace(suu)), suu.shape[0]


def oracle_best_linear(gt: GroundTruth, L: int) -> float:
    """Population MSE (mean over target dimensions) of the best rank-L affine
    predictor of the ground-truth code from the recordings.

    Uninformative channels are independent of the code and drop out, so the
    computation runs on the informative block only.
    """
    ev, total, dims = oracle_spectrum(gt)
    L = max(0, int(L))
    return max(total - float(ev[:L].sum()), 0.0) / dims


def oracle_noise_floor(gt: GroundTruth) -> float:
    ev, total, dims = oracle_spectrum(gt)
    return max(total - float(ev.sum()), 0.0) / dims
