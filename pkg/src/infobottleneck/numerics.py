"""
Deterministic numerical kernels.

Standardization, PCA, closed-form ridge regression and a minibatch AdamW
trainer with decoupled weight decay. Everything here is a pure function of
its inputs (and a seed, where one is taken). Stored arrays are float32;
reductions run in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InsufficientData, TrainingDiverged

CONSTANT_STD = 1e-8

Params = Dict[str, np.ndarray]


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine transform fitted on training rows."""

    mean: np.ndarray
    scale: np.ndarray
    constant: np.ndarray

    def transform(self, x):
        x = np.asarray(x, dtype=np.float64)
        return (x - self.mean) / self.scale

    def inverse(self, z):
        return np.asarray(z, dtype=np.float64) * self.scale + self.mean

    @classmethod
    def identity(cls, cols):
        return cls(np.zeros(cols), np.ones(cols), np.zeros(cols, dtype=bool))


def standardize(train) -> Tuple[Standardizer, np.ndarray]:
    """Fit column means and standard deviations on ``train``.

    Constant columns (std below 1e-8) are only mean-centered and flagged.

    Returns
    -------
    standardizer : Standardizer
    transformed : ndarray
        ``train`` mapped through the fitted transform (float64).
    """
    x = np.asarray(train, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InsufficientData("standardize needs at least 2 rows")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = std < CONSTANT_STD
    scale = np.where(constant, 1.0, std)
    st = Standardizer(mean, scale, constant)
    return st, st.transform(x)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (k, cols), row-orthonormal
    explained_variance_ratio: np.ndarray
    explained_variance: np.ndarray

    @property
    def n_components(self):
        return self.components.shape[0]

    def transform(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, coeffs):
        return np.asarray(coeffs, dtype=np.float64) @ self.components + self.mean


def fit_pca(data, max_components: Optional[int] = None) -> PcaModel:
    """Principal components of mean-centered ``data`` via SVD.

    Components with numerically zero singular values are dropped, so
    zero-variance data yields an empty model. Each component is signed so
    that its largest-magnitude entry is non-negative.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InsufficientData("fit_pca needs at least 2 rows")
    mean = x.mean(axis=0)
    xc = x - mean
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    total = float(np.sum(xc * xc))
    if total <= 0.0 or s.size == 0:
        cols = x.shape[1]
        return PcaModel(mean, np.zeros((0, cols)), np.zeros(0), np.zeros(0))
    tol = s[0] * max(x.shape) * np.finfo(np.float64).eps
    keep = int(np.sum(s > tol))
    if max_components is not None:
        keep = min(keep, int(max_components))
    s = s[:keep]
    vt = vt[:keep].copy()
    pivots = np.argmax(np.abs(vt), axis=1)
    signs = np.sign(vt[np.arange(keep), pivots])
    signs[signs == 0] = 1.0
    vt *= signs[:, None]
    var = s**2 / (x.shape[0] - 1)
    ratio = s**2 / total
    return PcaModel(mean, vt, ratio, var)


@dataclass(frozen=True)
class LinearMap:
    weights: np.ndarray
    min_norm: bool = False  # set when lambda == 0 and X is rank deficient

    def __call__(self, x):
        return np.asarray(x, dtype=np.float64) @ self.weights


def ridge_solve(X, Y, lam: float = 0.0) -> LinearMap:
    """Minimise ``||XW - Y||^2 + lam ||W||^2`` in closed form.

    Solved through the SVD of ``X``; with ``lam == 0`` and a rank-deficient
    ``X`` the minimum-norm least-squares solution is returned and flagged.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    squeeze = Y.ndim == 1
    if squeeze:
        Y = Y[:, None]
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"row mismatch: X has {X.shape[0]}, Y has {Y.shape[0]}")
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    u, s, vt = np.linalg.svd(X, full_matrices=False)
    tol = (s[0] if s.size else 0.0) * max(X.shape) * np.finfo(np.float64).eps
    rank = int(np.sum(s > tol))
    if lam == 0:
        inv = np.where(s > tol, 1.0 / np.where(s > tol, s, 1.0), 0.0)
    else:
        inv = s / (s**2 + lam)
    W = vt.T @ (inv[:, None] * (u.T @ Y))
    if squeeze:
        W = W[:, 0]
    return LinearMap(W, min_norm=(lam == 0 and rank < X.shape[1]))


@dataclass(frozen=True)
class TrainerConfig:
    batch_size: int = 128
    learning_rate: float = 0.01
    weight_decay: float = 0.1
    epochs: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")

    def replace(self, **changes):
        values = {**self.__dict__, **changes}
        return TrainerConfig(**values)


@dataclass
class TrainResult:
    params: Params
    best_epoch: int
    best_validation_loss: float
    train_curve: List[float] = field(default_factory=list)
    validation_curve: List[float] = field(default_factory=list)


def _copy(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}


def train_adamw(
    params: Params,
    loss_and_grad: Callable[[Params, np.ndarray], Tuple[float, Params]],
    n_train: int,
    config: TrainerConfig,
    validation_loss: Callable[[Params], float],
    train_loss: Optional[Callable[[Params], float]] = None,
    no_decay: Sequence[str] = (),
) -> TrainResult:
    """Minibatch AdamW with decoupled weight decay and best-epoch checkpointing.

    Parameters
    ----------
    params : dict of ndarray
        Initial parameters; not modified.
    loss_and_grad : callable
        ``loss_and_grad(params, batch_indices) -> (loss, grads)`` over rows
        ``0..n_train-1``.
    n_train : int
        Number of training rows to shuffle into minibatches each epoch.
    config : TrainerConfig
    validation_loss : callable
        Evaluated on the held-out rows after every epoch.
    train_loss : callable, optional
        Full-pass training loss recorded per epoch. Defaults to the mean of
        the minibatch losses seen during the epoch.
    no_decay : sequence of str
        Parameter names exempt from weight decay (typically biases).

    Returns
    -------
    TrainResult
        The parameter snapshot with the lowest validation loss over all epoch
        boundaries; ties keep the earlier epoch.
    """
    rng = np.random.default_rng(config.seed)
    p = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
    m = {k: np.zeros_like(v) for k, v in p.items()}
    v2 = {k: np.zeros_like(v) for k, v in p.items()}
    b1, b2, eps = config.beta1, config.beta2, config.epsilon
    lr, wd = config.learning_rate, config.weight_decay
    skip = set(no_decay)
    step = 0
    best_val, best_epoch, best = np.inf, -1, _copy(p)
    train_curve: List[float] = []
    val_curve: List[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n_train)
        batch_losses = []
        for start in range(0, n_train, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_grad(p, idx)
            if not np.isfinite(loss):
                raise TrainingDiverged(epoch)
            batch_losses.append(loss)
            step += 1
            c1 = 1.0 - b1**step
            c2 = 1.0 - b2**step
            for k in p:
                g = grads[k]
                if k not in skip:
                    p[k] *= 1.0 - lr * wd
                m[k] = b1 * m[k] + (1.0 - b1) * g
                v2[k] = b2 * v2[k] + (1.0 - b2) * (g * g)
                p[k] -= lr * (m[k] / c1) / (np.sqrt(v2[k] / c2) + eps)
        val = float(validation_loss(p))
        if not np.isfinite(val):
            raise TrainingDiverged(epoch, "validation loss became non-finite")
        tl = float(train_loss(p)) if train_loss is not None else float(np.mean(batch_losses))
        train_curve.append(tl)
        val_curve.append(val)
        if val < best_val:
            best_val, best_epoch, best = val, epoch, _copy(p)
    return TrainResult(best, best_epoch, best_val, train_curve, val_curve)
