"""
Sweep configuration: a flat JSON document with a fixed key schema.

Keys
----
world : object, optional
    Synthetic world parameters (see ``SyntheticWorldConfig``). Exactly one of
    ``world`` and ``dataset`` must be given.
dataset : str, optional
    Path to a saved dataset directory, relative to the config file.
pipeline : str
    Registered pipeline id (``vision-pca`` or ``text-encoding``).
pipeline_params : object
    Keyword arguments for the pipeline constructor.
sizes : list of int
    Bottleneck widths, strictly ascending.
seeds : list of int
    Training seeds; every width is trained once per seed.
metrics : list of str, optional
    Defaults to the standard metrics of the stimulus kind.
trainer : object
    Overrides of ``TrainerConfig`` fields (``seed`` is set per run).
loss_weights : object, optional
    Per-target loss weights; defaults to the pipeline's.
standardize_inputs, allow_wide : bool
floor_width : int or null
    Width of the random-input floor; null trains it without compression.
output : str
    Output directory, relative to the config file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from ..errors import ConfigError
from ..evaluation.curves import DEFAULT_METRICS, METRICS
from ..numerics import TrainerConfig
from ..pipelines import pipeline_ids
from ..synthetic import SyntheticWorldConfig

# keys that do not change any cell's result stay out of the hash; cells are
# keyed by seed, so extending the seed list reuses finished cells
UNHASHED = ("output", "seeds")
TRAINER_KEYS = tuple(k for k in TrainerConfig.__dataclass_fields__ if k != "seed")
PIPELINE_KIND = {"vision-pca": "image", "text-encoding": "text"}


@dataclass
class SweepConfig:
    pipeline: str
    sizes: List[int]
    seeds: List[int]
    output: str
    world: Optional[Dict] = None
    dataset: Optional[str] = None
    pipeline_params: Dict = field(default_factory=dict)
    metrics: Optional[List[str]] = None
    trainer: Dict = field(default_factory=dict)
    loss_weights: Optional[Dict[str, float]] = None
    standardize_inputs: bool = True
    allow_wide: bool = False
    floor_width: Optional[int] = None
    base_dir: str = field(default=".", compare=False, repr=False)

    def __post_init__(self):
        if self.pipeline not in pipeline_ids():
            raise ConfigError(f"unknown pipeline id {self.pipeline!r}; known: {pipeline_ids()}")
        if (self.world is None) == (self.dataset is None):
            raise ConfigError("give exactly one of 'world' and 'dataset'")
        if self.world is not None:
            self.world_config()
        self.sizes = [_int(v, "sizes") for v in self.sizes]
        self.seeds = [_int(v, "seeds") for v in self.seeds]
        if not self.sizes:
            raise ConfigError("sizes must be non-empty")
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])) or self.sizes[0] < 1:
            raise ConfigError("sizes must be positive and strictly ascending")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.metrics is not None:
            self.metrics = list(self.metrics)
            if not self.metrics:
                raise ConfigError("metrics, when given, must be non-empty")
            for m in self.metrics:
                if m not in METRICS:
                    raise ConfigError(f"unknown metric {m!r}; known: {sorted(METRICS)}")
                if METRICS[m][0] not in ("any", self.kind):
                    raise ConfigError(f"metric {m!r} does not apply to {self.kind} stimuli")
        unknown = set(self.trainer) - set(TRAINER_KEYS)
        if unknown:
            raise ConfigError(f"unknown trainer keys: {sorted(unknown)}")
        try:
            self.trainer_config(0)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid trainer settings: {exc}") from None
        if self.floor_width is not None:
            self.floor_width = _int(self.floor_width, "floor_width")

    # ------------------------------------------------------------ derived

    @property
    def kind(self) -> str:
        return PIPELINE_KIND[self.pipeline]

    @property
    def metric_names(self) -> List[str]:
        return list(self.metrics) if self.metrics is not None else list(DEFAULT_METRICS[self.kind])

    def world_config(self) -> SyntheticWorldConfig:
        try:
            return SyntheticWorldConfig.from_dict(dict(self.world))
        except TypeError as exc:
            raise ConfigError(f"invalid world settings: {exc}") from None

    def trainer_config(self, seed: int, defaults: Optional[Dict] = None) -> TrainerConfig:
        return TrainerConfig(**{**(defaults or {}), **self.trainer, "seed": int(seed)})

    @property
    def output_dir(self) -> Path:
        return (Path(self.base_dir) / self.output).resolve()

    @property
    def dataset_dir(self) -> Optional[Path]:
        return None if self.dataset is None else (Path(self.base_dir) / self.dataset).resolve()

    # ------------------------------------------------------------ serialization

    def to_dict(self) -> Dict:
        return {
            "world": self.world, "dataset": self.dataset, "pipeline": self.pipeline,
            "pipeline_params": self.pipeline_params, "sizes": self.sizes, "seeds": self.seeds,
            "metrics": self.metrics, "trainer": self.trainer, "loss_weights": self.loss_weights,
            "standardize_inputs": self.standardize_inputs, "allow_wide": self.allow_wide,
            "floor_width": self.floor_width, "output": self.output,
        }

    @classmethod
    def from_dict(cls, d: Dict, base_dir=".") -> "SweepConfig":
        if not isinstance(d, dict):
            raise ConfigError("sweep config must be a JSON object")
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"pipeline", "sizes", "seeds", "output"} - set(d)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        return cls(**d, base_dir=str(base_dir))

    @classmethod
    def load(cls, path) -> "SweepConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(d, base_dir=path.parent)

    def with_seeds(self, seeds) -> "SweepConfig":
        d = self.to_dict()
        d["seeds"] = list(seeds)
        return SweepConfig.from_dict(d, self.base_dir)

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON of every result-relevant key (key order irrelevant)."""
        d = {k: v for k, v in self.to_dict().items() if k not in UNHASHED}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _int(v, name):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{name} entries must be integers, got {v!r}")
    return int(v)
