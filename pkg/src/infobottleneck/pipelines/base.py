"""Reconstruction-pipeline interface, latent containers and the registry."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Protocol, runtime_checkable

import numpy as np

from ..data import PairedDataset, StimulusSet
from ..errors import ConfigError


@dataclass
class LatentTarget:
    """Named matrix of latent targets, examples x (steps * dims)."""

    name: str
    data: np.ndarray
    steps: int = 1

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.shape[1] % self.steps:
            raise ValueError(f"latent {self.name!r}: bad shape {self.data.shape} for steps={self.steps}")

    @property
    def dims(self) -> int:
        return self.data.shape[1] // self.steps

    def subset(self, idx) -> "LatentTarget":
        return LatentTarget(self.name, self.data[np.asarray(idx)], self.steps)


@runtime_checkable
class ReconstructionPipeline(Protocol):
    """What the bottleneck harness needs from a reconstruction method."""

    kind: str

    def fit(self, stimuli: StimulusSet) -> "ReconstructionPipeline": ...

    def latent_targets(self, stimuli: StimulusSet) -> List[LatentTarget]: ...

    def reconstruct(self, latents: Dict[str, np.ndarray]) -> StimulusSet: ...

    def prior_sample(self, seed: int, n: int) -> StimulusSet: ...


def compute_ceiling(pipeline, dataset: PairedDataset, split: str = "test") -> StimulusSet:
    """Reconstructions from ground-truth latents of ``split``.

    For the text pipeline this is a surrogate: it feeds the true per-step
    hidden targets to the decoder, see ``pipeline.ceiling_label``.
    """
    stim = dataset.stimuli.subset(dataset.splits[split])
    latents = {t.name: t.data for t in pipeline.latent_targets(stim)}
    return pipeline.reconstruct(latents)


_REGISTRY = {}


def register(name):
    def deco(cls):
        _REGISTRY[name] = cls
        cls.pipeline_id = name
        return cls
    return deco


def make_pipeline(name: str, **params):
    if name not in _REGISTRY:
        raise ConfigError(f"unknown pipeline id {name!r}; known: {sorted(_REGISTRY)}")
    return _REGISTRY[name](**params)


def pipeline_ids():
    return sorted(_REGISTRY)
