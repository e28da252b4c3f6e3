"""
Analyses of hidden representations: identification accuracy, effective
dimensionality, image features and linear probes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..errors import InsufficientData, ShapeError
from ..numerics import TrainerConfig, fit_pca, ridge_solve, standardize, train_adamw

RIDGE_GRID = (0.0, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)


def _unit_rows(x):
    x = np.asarray(x, dtype=np.float64)
    n = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(n > 0, n, 1.0)


def identification_scores(decoded, true) -> np.ndarray:
    """Per-example two-way identification scores (see ``identification_accuracy``)."""
    d = np.atleast_2d(np.asarray(decoded, dtype=np.float64))
    t = np.atleast_2d(np.asarray(true, dtype=np.float64))
    if d.shape != t.shape:
        raise ShapeError(f"embedding sets differ in shape: {d.shape} vs {t.shape}")
    n = d.shape[0]
    if n < 2:
        raise InsufficientData("identification needs at least 2 examples")
    sim = _unit_rows(d) @ _unit_rows(t).T
    own = np.diag(sim)[:, None]
    wins = (own > sim).astype(np.float64) + 0.5 * (own == sim)
    np.fill_diagonal(wins, 0.0)
    return wins.sum(axis=1) / (n - 1)


def identification_accuracy(decoded, true) -> float:
    """Fraction of (i, j != i) comparisons where decoded_i is closer (cosine) to
    true_i than to true_j; ties count one half."""
    return float(identification_scores(decoded, true).mean())


def effective_dimensionality(representations, threshold: float = 0.95) -> int:
    """Smallest number of principal components explaining ``threshold`` of
    the variance; 0 for zero-variance data."""
    x = np.asarray(representations, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InsufficientData("effective dimensionality needs at least 2 rows")
    ratio = fit_pca(x).explained_variance_ratio
    if ratio.size == 0:
        return 0
    cum = np.cumsum(ratio)
    return int(min(np.searchsorted(cum, threshold - 1e-12) + 1, ratio.size))


@dataclass(frozen=True)
class ImageFeatureVector:
    brightness: float
    rms_contrast: float
    avg_gradient_magnitude: float
    class_label: Optional[int] = None

    def as_array(self):
        return np.array([self.brightness, self.rms_contrast, self.avg_gradient_magnitude])


FEATURE_NAMES = ("brightness", "rms_contrast", "avg_gradient_magnitude")


def _gradient_magnitude(g):
    # central differences with replicated edges
    p = np.pad(g, 1, mode="edge")
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) / 2.0
    gy = (p[2:, 1:-1] - p[:-2, 1:-1]) / 2.0
    return np.sqrt(gx * gx + gy * gy)


def image_features(image, class_label=None) -> ImageFeatureVector:
    g = np.asarray(image, dtype=np.float64)
    if g.ndim == 3:
        g = g.mean(axis=2)
    return ImageFeatureVector(float(g.mean()), float(g.std()), float(_gradient_magnitude(g).mean()),
                              None if class_label is None else int(class_label))


def feature_matrix(images) -> np.ndarray:
    """(n, 3) brightness, contrast and gradient energy of a stack of images."""
    return np.array([image_features(im).as_array() for im in images]).reshape(-1, 3)


# ---------------------------------------------------------------- probes

@dataclass
class ClassProbeResult:
    accuracy: float
    chance: float
    std_error: float
    n_test: int
    flags: List[str] = field(default_factory=list)


@dataclass
class RegressionProbeResult:
    mse: float
    baseline_mse: float
    lam: float
    n_test: int

    @property
    def explained(self):
        """1 - mse / baseline; 1 when both are zero."""
        if self.baseline_mse <= 0:
            return 1.0 if self.mse <= 1e-12 else 0.0
        return 1.0 - self.mse / self.baseline_mse


def _split_rows(hidden, splits):
    hidden = np.asarray(hidden, dtype=np.float64)
    if hidden.ndim == 1:
        hidden = hidden[:, None]
    return {k: hidden[np.asarray(v)] for k, v in splits.items()}


def probe_classification(hidden, labels, splits, num_classes: Optional[int] = None,
                         config: Optional[TrainerConfig] = None) -> ClassProbeResult:
    """Multinomial logistic probe on standardized hidden vectors.

    ``splits`` maps ``train``/``validation``/``test`` to row indices into
    ``hidden`` and ``labels``. The validation split picks the checkpoint.
    """
    splits = dict(splits.as_dict()) if hasattr(splits, "as_dict") else dict(splits)
    labels = np.asarray(labels, dtype=np.int64)
    C = int(num_classes if num_classes is not None else labels.max() + 1)
    h = _split_rows(hidden, splits)
    y = {k: labels[np.asarray(v)] for k, v in splits.items()}
    present = np.unique(y["train"])
    if present.size < 2:
        raise InsufficientData("class probe needs at least 2 classes in the train split")
    flags = []
    missing = sorted(set(np.unique(y["test"])) - set(present))
    if missing:
        flags.append(f"classes {missing} absent from train split; scored as errors")
    st, xtr = standardize(h["train"])
    xs = {k: st.transform(v) for k, v in h.items()}
    for v in xs.values():
        v[:, st.constant] = 0.0
    xtr = xs["train"]
    onehot = np.eye(C)[y["train"]]
    cfg = config or TrainerConfig(batch_size=128, learning_rate=0.01, weight_decay=1e-3, epochs=60)

    def logits(p, x):
        return x @ p["W"] + p["b"]

    def xent(p, x, yy):
        z = logits(p, x)
        z = z - z.max(axis=1, keepdims=True)
        return float(np.mean(np.log(np.exp(z).sum(axis=1)) - z[np.arange(len(yy)), yy]))

    def loss_and_grad(p, idx):
        x = xtr[idx]
        z = logits(p, x)
        z = z - z.max(axis=1, keepdims=True)
        e = np.exp(z)
        prob = e / e.sum(axis=1, keepdims=True)
        loss = float(np.mean(np.log(e.sum(axis=1)) - z[np.arange(len(idx)), y["train"][idx]]))
        d = (prob - onehot[idx]) / len(idx)
        return loss, {"W": x.T @ d, "b": d.sum(axis=0)}

    val_key = "validation" if "validation" in xs and len(xs["validation"]) else "train"
    params = {"W": np.zeros((xtr.shape[1], C)), "b": np.zeros(C)}
    res = train_adamw(params, loss_and_grad, len(xtr), cfg,
                      validation_loss=lambda p: xent(p, xs[val_key], y[val_key]), no_decay=["b"])
    pred = np.argmax(logits(res.params, xs["test"]), axis=1)
    correct = (pred == y["test"]).astype(np.float64)
    n = len(correct)
    se = float(correct.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return ClassProbeResult(float(correct.mean()), 1.0 / C, se, n, flags)


def probe_regression(hidden, feature, splits, grid=RIDGE_GRID) -> RegressionProbeResult:
    """Ridge probe with the penalty chosen on the validation split.

    Intercept is unpenalized (features and target are centered on training
    statistics). The baseline predicts the training mean.
    """
    splits = dict(splits.as_dict()) if hasattr(splits, "as_dict") else dict(splits)
    f = np.asarray(feature, dtype=np.float64).ravel()
    h = _split_rows(hidden, splits)
    y = {k: f[np.asarray(v)] for k, v in splits.items()}
    if len(y["train"]) < 2:
        raise InsufficientData("regression probe needs at least 2 train rows")
    st, _ = standardize(h["train"])
    xs = {k: st.transform(v) for k, v in h.items()}
    for v in xs.values():
        v[:, st.constant] = 0.0
    ymean = y["train"].mean()
    val_key = "validation" if "validation" in xs and len(xs["validation"]) else "train"
    best = None
    for lam in grid:
        w = ridge_solve(xs["train"], y["train"] - ymean, lam).weights
        mse = float(np.mean((xs[val_key] @ w + ymean - y[val_key]) ** 2))
        if best is None or mse < best[0] - 1e-15:
            best = (mse, lam, w)
    _, lam, w = best
    test_mse = float(np.mean((xs["test"] @ w + ymean - y["test"]) ** 2))
    baseline = float(np.mean((ymean - y["test"]) ** 2))
    return RegressionProbeResult(test_mse, baseline, float(lam), len(y["test"]))
