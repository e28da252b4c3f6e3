"""
Desk-scale image reconstruction pipeline with an explicit image prior.

Two latent targets per image:

``coarse``
    the top ``pca_k`` PCA coefficients of the image, fitted on training
    stimuli;
``semantic``
    a fixed seeded random projection of the centered class one-hot.

Reconstruction inverts the PCA and then lets the semantic latent add the
training-mean residual (detail the coarse latents miss) of the nearest class
prototype, scaled by the cosine similarity to that prototype.
"""

from __future__ import annotations

from typing import Dict, List, Optional

import numpy as np

from ..data import StimulusSet, load_arrays, save_arrays
from ..errors import ConfigError, NotFitted, ShapeError
from ..numerics import fit_pca
from .base import LatentTarget, register


@register("vision-pca")
class PcaPriorVisionPipeline:
    kind = "image"
    ceiling_label = "ceiling"
    # semantic head weighted like the heaviest head of the reference recipe
    default_loss_weights = {"coarse": 1.0, "semantic": 4.0}
    default_trainer = {}

    def __init__(self, pca_k: int = 16, semantic_dim: int = 16, seed: int = 0):
        self.pca_k = int(pca_k)
        self.semantic_dim = int(semantic_dim)
        self.seed = int(seed)
        self.pca = None
        self.image_shape = None
        self.prototypes = None  # (C, semantic_dim)
        self.residuals = None  # (C, pixels)
        self.coarse_mean = self.coarse_cov = None
        self.semantic_mean = self.semantic_cov = None

    @property
    def fitted(self):
        return self.pca is not None

    def _check(self):
        if not self.fitted:
            raise NotFitted("vision pipeline must be fitted on training stimuli first")

    def params(self):
        return {"pca_k": self.pca_k, "semantic_dim": self.semantic_dim, "seed": self.seed}

    # ------------------------------------------------------------ fitting

    def fit(self, stimuli: StimulusSet) -> "PcaPriorVisionPipeline":
        if stimuli.kind != "image":
            raise ConfigError("vision pipeline needs image stimuli")
        if stimuli.class_labels is None:
            raise ConfigError("vision pipeline needs class labels for the semantic latent")
        x = stimuli.images.reshape(len(stimuli), -1).astype(np.float64)
        self.image_shape = stimuli.images.shape[1:]
        self.pca = fit_pca(x, self.pca_k)
        C = stimuli.num_classes
        rng = np.random.default_rng([self.seed, 0xC1A55])
        proj = rng.standard_normal((C, self.semantic_dim)) / np.sqrt(self.semantic_dim)
        self.prototypes = (np.eye(C) - 1.0 / C) @ proj
        recon = self.pca.inverse_transform(self.pca.transform(x))
        resid = x - recon
        labels = stimuli.class_labels
        self.residuals = np.zeros((C, x.shape[1]))
        for c in range(C):
            if np.any(labels == c):
                self.residuals[c] = resid[labels == c].mean(axis=0)
        coarse = self.pca.transform(x)
        sem = self.prototypes[labels]
        self.coarse_mean, self.coarse_cov = coarse.mean(0), np.atleast_2d(np.cov(coarse, rowvar=False))
        self.semantic_mean, self.semantic_cov = sem.mean(0), np.atleast_2d(np.cov(sem, rowvar=False))
        return self

    # ------------------------------------------------------------ interface

    def latent_targets(self, stimuli: StimulusSet) -> List[LatentTarget]:
        self._check()
        if stimuli.images is None or stimuli.images.shape[1:] != self.image_shape:
            raise ShapeError("stimuli do not match the fitted image shape")
        x = stimuli.images.reshape(len(stimuli), -1)
        targets = [LatentTarget("coarse", self.pca.transform(x))]
        if stimuli.class_labels is None:
            raise ConfigError("semantic latent needs class labels")
        targets.append(LatentTarget("semantic", self.prototypes[stimuli.class_labels]))
        return targets

    def latent_dims(self) -> Dict[str, int]:
        self._check()
        return {"coarse": self.pca.n_components, "semantic": self.semantic_dim}

    def semantic_residual(self, semantic) -> np.ndarray:
        """Residual image contribution of each semantic vector (rows)."""
        s = np.asarray(semantic, dtype=np.float64)
        pn = np.linalg.norm(self.prototypes, axis=1)
        sn = np.linalg.norm(s, axis=1)
        denom = np.outer(sn, pn)
        with np.errstate(invalid="ignore", divide="ignore"):
            cos = np.where(denom > 0, (s @ self.prototypes.T) / np.where(denom > 0, denom, 1.0), -np.inf)
        nearest = np.argmax(cos, axis=1)
        scale = np.clip(cos[np.arange(len(s)), nearest], 0.0, None)
        scale[sn == 0] = 0.0
        return scale[:, None] * self.residuals[nearest]

    def reconstruct(self, latents: Dict[str, np.ndarray], use_semantic: bool = True) -> StimulusSet:
        self._check()
        coarse = np.atleast_2d(np.asarray(latents["coarse"], dtype=np.float64))
        if coarse.shape[1] != self.pca.n_components:
            raise ShapeError(f"coarse latent has {coarse.shape[1]} dims, expected {self.pca.n_components}")
        img = self.pca.inverse_transform(coarse)
        if use_semantic and "semantic" in latents:
            sem = np.atleast_2d(np.asarray(latents["semantic"], dtype=np.float64))
            if sem.shape != (len(coarse), self.semantic_dim):
                raise ShapeError(f"semantic latent shape {sem.shape} does not match")
            img = img + self.semantic_residual(sem)
        img = np.clip(img, 0.0, 1.0).reshape((len(coarse),) + tuple(self.image_shape))
        return StimulusSet("image", images=img.astype(np.float32))

    def prior_sample(self, seed: int, n: int) -> StimulusSet:
        """Reconstructions from latents drawn from Gaussians fitted to training latents."""
        self._check()
        if n == 0:
            return StimulusSet("image", images=np.zeros((0,) + tuple(self.image_shape), dtype=np.float32))
        rng = np.random.default_rng(seed)
        coarse = rng.multivariate_normal(self.coarse_mean, self.coarse_cov, size=n, method="eigh")
        sem = rng.multivariate_normal(self.semantic_mean, self.semantic_cov, size=n, method="eigh")
        return self.reconstruct({"coarse": coarse, "semantic": sem})

    # ------------------------------------------------------------ persistence

    def save(self, directory):
        self._check()
        arrays = {
            "pca_mean": self.pca.mean, "pca_components": self.pca.components,
            "pca_ratio": self.pca.explained_variance_ratio, "pca_variance": self.pca.explained_variance,
            "prototypes": self.prototypes, "residuals": self.residuals,
            "coarse_mean": self.coarse_mean, "coarse_cov": self.coarse_cov,
            "semantic_mean": self.semantic_mean, "semantic_cov": self.semantic_cov,
        }
        meta = {"pipeline": self.pipeline_id, "params": self.params(), "image_shape": list(self.image_shape)}
        return save_arrays(directory, "pipeline", arrays, meta)

    @classmethod
    def load(cls, directory) -> "PcaPriorVisionPipeline":
        from ..numerics import PcaModel

        a, meta = load_arrays(directory, "pipeline")
        p = cls(**meta["params"])
        f = lambda k: a[k].astype(np.float64)
        p.pca = PcaModel(f("pca_mean"), f("pca_components"), f("pca_ratio"), f("pca_variance"))
        p.image_shape = tuple(meta["image_shape"])
        p.prototypes, p.residuals = f("prototypes"), f("residuals")
        p.coarse_mean, p.coarse_cov = f("coarse_mean"), f("coarse_cov")
        p.semantic_mean, p.semantic_cov = f("semantic_mean"), f("semantic_cov")
        return p
