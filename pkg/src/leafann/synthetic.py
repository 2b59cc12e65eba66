"""Seeded synthetic datasets.

``sift_like`` and ``fashion_like`` mimic the statistics that matter for the
corresponding public benchmarks (non-negative, integer-valued, clustered
descriptors; 28x28 images with empty borders) when the real files are not
available. Real files can be loaded with :func:`leafann.dataset.load_vectors`.
"""

from __future__ import annotations

import numpy as np


def gaussian(n: int, d: int, seed: int = 0, n_centers: int = 0, spread: float = 4.0) -> np.ndarray:
    """Isotropic N(0, I) samples, or a mixture around ``n_centers`` random centers."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d), dtype=np.float32)
    if n_centers:
        centers = rng.standard_normal((n_centers, d), dtype=np.float32) * spread
        x += centers[rng.integers(0, n_centers, n)]
    return x


def unit_sphere(n: int, d: int, seed: int = 0, n_centers: int = 0) -> np.ndarray:
    x = gaussian(n, d, seed, n_centers).astype(np.float64)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return x.astype(np.float32)


class SiftLike:
    """Mixture of low-rank Gaussians, rectified and rounded into [0, 255]."""

    def __init__(self, d: int = 128, n_components: int = 512, rank: int = 16, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.d = d
        base = rng.gamma(0.8, 18.0, size=(n_components, d))
        sparse = rng.random((n_components, d)) < 0.35
        self.means = np.where(sparse, 0.0, base) - 4.0
        self.bases = rng.standard_normal((n_components, d, rank)) * rng.uniform(3.0, 9.0, size=(n_components, 1, rank))
        self.weights = rng.dirichlet(np.full(n_components, 2.0))
        self.noise = 5.0

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        out = np.empty((n, self.d), dtype=np.float32)
        rank = self.bases.shape[2]
        for s in range(0, n, 8192):
            c = comp[s : s + 8192]
            z = rng.standard_normal((c.size, rank))
            x = self.means[c] + np.einsum("ndr,nr->nd", self.bases[c], z)
            x += rng.standard_normal(x.shape) * self.noise
            out[s : s + c.size] = np.clip(np.rint(np.maximum(x, 0.0)), 0, 255)
        return out


def sift_like(n: int = 100_000, n_queries: int = 1000, seed: int = 0, d: int = 128):
    """``(base, queries)`` drawn from one :class:`SiftLike` model with independent streams."""
    gen = SiftLike(d=d, seed=seed)
    return gen.sample(n, seed + 1), gen.sample(n_queries, seed + 2)


class FashionLike:
    """28x28 grey images: ten smooth class silhouettes with per-sample low-rank variation.

    A two-pixel border is left empty apart from rare speckle, like centred
    product photos.
    """

    side = 28

    def __init__(self, n_classes: int = 10, rank: int = 8, seed: int = 0):
        rng = np.random.default_rng(seed)
        yy, xx = np.mgrid[0 : self.side, 0 : self.side].astype(np.float64)
        self.protos = []
        self.bases = []
        for _ in range(n_classes):
            img = np.zeros((self.side, self.side))
            for _ in range(rng.integers(3, 7)):
                cy, cx = rng.uniform(7, 21, 2)
                sy, sx = rng.uniform(2.5, 7.0, 2)
                img += rng.uniform(0.6, 1.0) * np.exp(-0.5 * (((yy - cy) / sy) ** 2 + ((xx - cx) / sx) ** 2))
            img = np.clip(img / img.max() * 1.6 - 0.35, 0, 1)
            self.protos.append(img * 220.0)
            b = []
            for _ in range(rank):
                cy, cx = rng.uniform(5, 23, 2)
                s = rng.uniform(2.0, 5.0)
                b.append(np.exp(-0.5 * (((yy - cy) ** 2 + (xx - cx) ** 2) / s**2)) * rng.choice([-1, 1]))
            self.bases.append(np.stack(b))
        self.protos = np.stack(self.protos)
        self.bases = np.stack(self.bases)

    def sample(self, n: int, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        S = self.side
        cls = rng.integers(0, len(self.protos), n)
        out = np.empty((n, S * S), dtype=np.float32)
        for s in range(0, n, 4096):
            c = cls[s : s + 4096]
            m = c.size
            z = rng.standard_normal((m, self.bases.shape[1])) * 45.0
            img = self.protos[c] * rng.uniform(0.7, 1.15, (m, 1, 1))
            img = img + np.einsum("nr,nrhw->nhw", z, self.bases[c]) * (self.protos[c] > 0)
            shift = rng.integers(-1, 2, (m, 2))
            for i in range(m):
                img[i] = np.roll(img[i], tuple(shift[i]), axis=(0, 1))
            img += rng.standard_normal(img.shape) * 12.0 * (img > 0)
            img[:, :2, :] = 0
            img[:, -2:, :] = 0
            img[:, :, :2] = 0
            img[:, :, -2:] = 0
            speck = rng.random(img.shape) < 0.002
            img = np.where(speck, rng.uniform(0, 60, img.shape), img)
            out[s : s + m] = np.clip(np.rint(img), 0, 255).reshape(m, S * S)
        return out


def fashion_like(n: int = 60_000, n_queries: int = 1000, seed: int = 0):
    gen = FashionLike(seed=seed)
    return gen.sample(n, seed + 1), gen.sample(n_queries, seed + 2)
