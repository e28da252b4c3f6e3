"""
Paired recording/stimulus datasets and their on-disk container.

A container directory holds ``manifest.json`` (schema version, shapes,
dtypes, CRC-32 per payload, seed, split indices) next to raw payload
files. Float payloads (``<stream>.f32``, ``images.f32``) start with a small
little-endian header::

    magic   4 bytes   b"F32\\0"
    ndim    uint32
    dims    ndim x uint64
    data    float32, little-endian, row-major

Token sequences go to ``texts.tok`` (one sequence per line, space-separated
token ids) with ``vocab.tsv`` mapping ``token<TAB>id``.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import AlignmentError, CorruptDataset, SplitTooSmall, UnsupportedVersion

SCHEMA_VERSION = 1
MAGIC = b"F32\x00"
MANIFEST = "manifest.json"


# ---------------------------------------------------------------- payloads

def encode_f32(arr) -> bytes:
    a = np.ascontiguousarray(np.asarray(arr, dtype="<f4"))
    header = MAGIC + struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape)
    return header + a.tobytes(order="C")


def decode_f32(buf: bytes, name: str = "payload") -> np.ndarray:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise CorruptDataset(f"{name}: bad header")
    (ndim,) = struct.unpack_from("<I", buf, 4)
    off = 8 + 8 * ndim
    if len(buf) < off:
        raise CorruptDataset(f"{name}: truncated header")
    shape = struct.unpack_from(f"<{ndim}Q", buf, 8)
    count = int(np.prod(shape)) if ndim else 1
    if len(buf) - off != 4 * count:
        raise CorruptDataset(f"{name}: expected {4 * count} data bytes, found {len(buf) - off}")
    return np.frombuffer(buf, dtype="<f4", offset=off).reshape(shape).astype(np.float32)


def crc32(buf: bytes) -> str:
    return f"{zlib.crc32(buf) & 0xFFFFFFFF:08x}"


def write_payload(path: Path, arr) -> dict:
    buf = encode_f32(arr)
    Path(path).write_bytes(buf)
    return {"file": Path(path).name, "shape": list(np.shape(arr)), "dtype": "float32-le", "crc32": crc32(buf)}


def read_payload(directory: Path, entry: dict, name: str) -> np.ndarray:
    path = Path(directory) / entry["file"]
    if not path.exists():
        raise CorruptDataset(f"{name}: payload file {entry['file']} is missing")
    buf = path.read_bytes()
    if crc32(buf) != entry["crc32"]:
        raise CorruptDataset(f"{name}: checksum mismatch in {entry['file']}")
    arr = decode_f32(buf, name)
    if list(arr.shape) != list(entry["shape"]):
        raise CorruptDataset(f"{name}: shape {list(arr.shape)} != manifest {entry['shape']}")
    return arr


def write_manifest(directory: Path, manifest: dict) -> Path:
    path = Path(directory) / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_manifest(directory: Path, kind: Optional[str] = None) -> dict:
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise CorruptDataset(f"no {MANIFEST} in {directory}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise CorruptDataset(f"unreadable manifest: {exc}") from exc
    version = manifest.get("schema_version")
    if version != SCHEMA_VERSION:
        raise UnsupportedVersion(f"schema version {version!r} (supported: {SCHEMA_VERSION})")
    if kind is not None and manifest.get("kind") != kind:
        raise CorruptDataset(f"manifest kind {manifest.get('kind')!r}, expected {kind!r}")
    return manifest


def save_arrays(directory, kind: str, arrays: Dict[str, np.ndarray], meta: Optional[dict] = None) -> Path:
    """Write a generic container of named float matrices plus metadata."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = {name: write_payload(directory / f"{name}.f32", arr) for name, arr in arrays.items()}
    manifest = {"schema_version": SCHEMA_VERSION, "kind": kind, "arrays": entries, "meta": meta or {}}
    return write_manifest(directory, manifest)


def load_arrays(directory, kind: str):
    manifest = read_manifest(directory, kind)
    arrays = {name: read_payload(directory, e, name) for name, e in manifest["arrays"].items()}
    return arrays, manifest.get("meta", {})


# ---------------------------------------------------------------- dataset types

@dataclass
class RecordingStream:
    """One block of recording channels, ``data`` is examples x (steps * channels)."""

    name: str
    data: np.ndarray
    channel_labels: Optional[List[str]] = None
    steps: int = 1

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError("stream data must be 2-D")
        if self.data.shape[1] % self.steps:
            raise ValueError("stream width must be a multiple of steps")
        if self.channel_labels is not None and len(self.channel_labels) != self.channels:
            raise ValueError("channel_labels length must equal channel count")

    @property
    def channels(self) -> int:
        return self.data.shape[1] // self.steps

    @property
    def num_examples(self) -> int:
        return self.data.shape[0]


@dataclass
class StimulusSet:
    kind: str
    images: Optional[np.ndarray] = None
    texts: Optional[List[List[str]]] = None
    class_labels: Optional[np.ndarray] = None
    num_classes: Optional[int] = None
    vocab: Optional[List[str]] = None

    def __post_init__(self):
        if self.kind not in ("image", "text"):
            raise ValueError(f"unknown stimulus kind {self.kind!r}")
        if (self.images is None) == (self.texts is None):
            raise ValueError("exactly one of images/texts must be populated")
        if self.kind == "image" and self.images is None:
            raise ValueError("image stimuli need images")
        if self.kind == "text" and self.texts is None:
            raise ValueError("text stimuli need texts")
        if self.images is not None:
            self.images = np.asarray(self.images, dtype=np.float32)
            if self.images.ndim == 3:
                self.images = self.images[..., None]
            if self.images.ndim != 4:
                raise ValueError("images must be examples x height x width x channels")
        if self.class_labels is not None:
            self.class_labels = np.asarray(self.class_labels, dtype=np.int64)
            if self.num_classes is None:
                self.num_classes = int(self.class_labels.max()) + 1 if self.class_labels.size else 0
            if self.class_labels.size and (
                self.class_labels.min() < 0 or self.class_labels.max() >= self.num_classes
            ):
                raise ValueError("class labels out of range")
        if self.texts is not None and self.vocab is None:
            seen = {}
            for seq in self.texts:
                for tok in seq:
                    seen.setdefault(tok, len(seen))
            self.vocab = list(seen)

    def __len__(self):
        return len(self.images) if self.images is not None else len(self.texts)

    def subset(self, idx) -> "StimulusSet":
        idx = np.asarray(idx, dtype=np.int64)
        return StimulusSet(
            kind=self.kind,
            images=None if self.images is None else self.images[idx],
            texts=None if self.texts is None else [self.texts[i] for i in idx],
            class_labels=None if self.class_labels is None else self.class_labels[idx],
            num_classes=self.num_classes,
            vocab=self.vocab,
        )


@dataclass
class Splits:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def __getitem__(self, name):
        return {"train": self.train, "validation": self.validation, "test": self.test}[name]

    def as_dict(self):
        return {"train": self.train.tolist(), "validation": self.validation.tolist(), "test": self.test.tolist()}


@dataclass
class PairedDataset:
    streams: List[RecordingStream]
    stimuli: StimulusSet
    splits: Splits
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.stimuli)
        for s in self.streams:
            if s.num_examples != n:
                raise AlignmentError(f"stream {s.name!r} has {s.num_examples} examples, stimuli have {n}")
        names = [s.name for s in self.streams]
        if len(set(names)) != len(names):
            raise ValueError("stream names must be unique")
        parts = [np.asarray(self.splits[k]) for k in ("train", "validation", "test")]
        allidx = np.concatenate(parts)
        if any(p.size == 0 for p in parts):
            raise SplitTooSmall("every split must be non-empty")
        if np.unique(allidx).size != allidx.size:
            raise ValueError("splits overlap")
        if allidx.min() < 0 or allidx.max() >= n:
            raise ValueError("split index out of range")

    @property
    def num_examples(self):
        return len(self.stimuli)

    def stream(self, name) -> RecordingStream:
        for s in self.streams:
            if s.name == name:
                return s
        raise KeyError(name)

    def equals(self, other: "PairedDataset") -> bool:
        """Bitwise equality of payloads plus equality of all metadata."""
        def same(a, b):
            if a is None or b is None:
                return a is None and b is None
            a, b = np.asarray(a), np.asarray(b)
            return a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()

        if len(self.streams) != len(other.streams) or self.seed != other.seed:
            return False
        for s, o in zip(self.streams, other.streams):
            if (s.name, s.steps, s.channel_labels) != (o.name, o.steps, o.channel_labels):
                return False
            if not same(s.data, o.data):
                return False
        a, b = self.stimuli, other.stimuli
        if (a.kind, a.num_classes, a.texts, a.vocab) != (b.kind, b.num_classes, b.texts, b.vocab):
            return False
        if not same(a.images, b.images) or not same(a.class_labels, b.class_labels):
            return False
        return all(same(self.splits[k], other.splits[k]) for k in ("train", "validation", "test"))


# ---------------------------------------------------------------- splits

def split_dataset(n: int, fractions: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0) -> Splits:
    """Deterministic shuffled train/validation/test partition of ``range(n)``."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError("need three positive fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    if n < 3:
        raise SplitTooSmall(f"cannot split {n} examples three ways")
    n_train = int(np.floor(n * fractions[0] + 0.5))
    n_val = int(np.floor(n * fractions[1] + 0.5))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise SplitTooSmall(f"split sizes {(n_train, n_val, n_test)} for n={n}")
    order = np.random.default_rng(seed).permutation(n)
    return Splits(
        np.sort(order[:n_train]),
        np.sort(order[n_train:n_train + n_val]),
        np.sort(order[n_train + n_val:]),
    )


# ---------------------------------------------------------------- save / load

def save_dataset(dataset: PairedDataset, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    streams = []
    for s in dataset.streams:
        entry = write_payload(directory / f"{s.name}.f32", s.data)
        entry.update(name=s.name, steps=s.steps, channel_labels=s.channel_labels)
        streams.append(entry)
    st = dataset.stimuli
    stim = {"kind": st.kind, "num_classes": st.num_classes,
            "class_labels": None if st.class_labels is None else st.class_labels.tolist()}
    if st.images is not None:
        stim["images"] = write_payload(directory / "images.f32", st.images)
    else:
        vocab = {tok: i for i, tok in enumerate(st.vocab)}
        lines = [" ".join(str(vocab[t]) for t in seq) for seq in st.texts]
        tok_bytes = ("\n".join(lines) + "\n").encode()
        voc_bytes = "".join(f"{t}\t{i}\n" for t, i in vocab.items()).encode()
        (directory / "texts.tok").write_bytes(tok_bytes)
        (directory / "vocab.tsv").write_bytes(voc_bytes)
        stim["texts"] = {"file": "texts.tok", "count": len(st.texts), "crc32": crc32(tok_bytes)}
        stim["vocab"] = {"file": "vocab.tsv", "size": len(vocab), "crc32": crc32(voc_bytes)}
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "kind": "paired_dataset",
        "num_examples": dataset.num_examples,
        "seed": int(dataset.seed),
        "streams": streams,
        "stimuli": stim,
        "splits": dataset.splits.as_dict(),
        "meta": dataset.meta,
    }
    return write_manifest(directory, manifest)


def _read_checked(directory: Path, entry: dict, name: str) -> bytes:
    path = directory / entry["file"]
    if not path.exists():
        raise CorruptDataset(f"{name}: file {entry['file']} is missing")
    buf = path.read_bytes()
    if crc32(buf) != entry["crc32"]:
        raise CorruptDataset(f"{name}: checksum mismatch in {entry['file']}")
    return buf


def load_dataset(directory) -> PairedDataset:
    directory = Path(directory)
    m = read_manifest(directory, "paired_dataset")
    streams = []
    for e in m["streams"]:
        data = read_payload(directory, e, f"stream {e['name']!r}")
        streams.append(RecordingStream(e["name"], data, e.get("channel_labels"), e.get("steps", 1)))
    s = m["stimuli"]
    labels = None if s.get("class_labels") is None else np.asarray(s["class_labels"], dtype=np.int64)
    if "images" in s:
        stim = StimulusSet("image", images=read_payload(directory, s["images"], "images"),
                           class_labels=labels, num_classes=s.get("num_classes"))
    else:
        voc_lines = _read_checked(directory, s["vocab"], "vocab").decode().splitlines()
        vocab = [None] * len(voc_lines)
        for line in voc_lines:
            tok, i = line.split("\t")
            vocab[int(i)] = tok
        tok_lines = _read_checked(directory, s["texts"], "texts").decode().split("\n")[:-1]
        texts = [[vocab[int(t)] for t in line.split()] for line in tok_lines]
        if len(texts) != s["texts"]["count"]:
            raise CorruptDataset("texts: sequence count mismatch")
        stim = StimulusSet("text", texts=texts, class_labels=labels,
                           num_classes=s.get("num_classes"), vocab=vocab)
    sp = m["splits"]
    splits = Splits(*(np.asarray(sp[k], dtype=np.int64) for k in ("train", "validation", "test")))
    return PairedDataset(streams, stim, splits, seed=m.get("seed", 0), meta=m.get("meta", {}))
