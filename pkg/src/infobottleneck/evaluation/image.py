"""
Image similarity metrics and the default image embedder.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError, UndefinedCorrelation, UndefinedSimilarity

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _gray(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        img = img.mean(axis=2)
    return img


def pixel_correlation(a, b) -> float:
    """Pearson correlation over flattened pixels.

    If exactly one image is constant the covariance vanishes and 0.0 is
    returned; two constant images raise :class:`UndefinedCorrelation`.
    """
    x = np.asarray(a, dtype=np.float64).ravel()
    y = np.asarray(b, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"images differ in size: {np.shape(a)} vs {np.shape(b)}")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(np.dot(xc, xc))
    sy = np.sqrt(np.dot(yc, yc))
    if sx == 0 and sy == 0:
        raise UndefinedCorrelation("both images are constant")
    if sx == 0 or sy == 0:
        return 0.0
    return float(np.clip(np.dot(xc, yc) / (sx * sy), -1.0, 1.0))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_plane(x, y, c1, c2, window):
    if x.shape[0] < window.shape[0] or x.shape[1] < window.shape[1]:
        # global statistics for images smaller than the window
        mx, my = x.mean(), y.mean()
        vx, vy = x.var(), y.var()
        cxy = np.mean((x - mx) * (y - my))
        return float(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2)))
    wx = sliding_window_view(x, window.shape)
    wy = sliding_window_view(y, window.shape)
    filt = lambda v: np.einsum("ijkl,kl->ij", v, window)
    mx, my = filt(wx), filt(wy)
    vx = filt(wx * wx) - mx**2
    vy = filt(wy * wy) - my**2
    cxy = filt(wx * wy) - mx * my
    s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx**2 + my**2 + c1) * (vx + vy + c2))
    return float(s.mean())


def ssim(a, b, dynamic_range: float = 1.0) -> float:
    """Mean structural similarity.

    Uses an 11x11 Gaussian window (sigma 1.5) over valid positions,
    C1 = (0.01 R)^2, C2 = (0.03 R)^2. Images smaller than the window fall
    back to a single global comparison. Multi-channel images are averaged
    over channels.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"images differ in shape: {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    if x.ndim != 3:
        raise ShapeError("ssim expects (h, w) or (h, w, c) images")
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    window = gaussian_window()
    return float(np.mean([_ssim_plane(x[..., c], y[..., c], c1, c2, window) for c in range(x.shape[2])]))


class RandomProjectionImageEmbedder:
    """Block-average to ``grid x grid`` gray pixels, subtract ``offset``, then
    apply a fixed seeded Gaussian projection.

    A cheap stand-in for a learned perceptual embedding. It is sensitive to
    coarse spatial layout, which is what the similarity comparisons need.
    """

    def __init__(self, dim: int = 64, grid: int = 8, offset: float = 0.5, seed: int = 0):
        self.dim, self.grid, self.offset, self.seed = int(dim), int(grid), float(offset), int(seed)
        rng = np.random.default_rng([self.seed, 0xE3BED])
        self.projection = rng.standard_normal((self.grid * self.grid, self.dim)) / np.sqrt(self.dim)

    @property
    def name(self):
        return f"random-projection(dim={self.dim}, grid={self.grid}, seed={self.seed})"

    def downsample(self, images) -> np.ndarray:
        x = np.asarray(images, dtype=np.float64)
        if x.ndim == 4:
            x = x.mean(axis=3)
        if x.ndim == 2:
            x = x[None]
        n, h, w = x.shape
        # bin edges handle sizes that are not multiples of the grid
        rows = (np.arange(h) * self.grid) // h
        cols = (np.arange(w) * self.grid) // w
        out = np.zeros((n, self.grid, self.grid))
        np.add.at(out, (slice(None), rows[:, None], cols[None, :]), x)
        counts = np.zeros((self.grid, self.grid))
        np.add.at(counts, (rows[:, None], cols[None, :]), 1.0)
        return out / counts

    def __call__(self, images) -> np.ndarray:
        d = self.downsample(images).reshape(-1, self.grid * self.grid) - self.offset
        return d @ self.projection


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise UndefinedSimilarity("zero-norm embedding")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def embedding_cosine(a, b, embedder=None) -> float:
    """|cos(embed(a), embed(b))| for two stimuli."""
    embedder = embedder or RandomProjectionImageEmbedder()
    ea = np.asarray(embedder(a if isinstance(a, list) else np.asarray(a)[None]))[0]
    eb = np.asarray(embedder(b if isinstance(b, list) else np.asarray(b)[None]))[0]
    return abs(cosine(ea, eb))
