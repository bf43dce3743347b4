"""Optimal weight function, sampling measure and its sampler.

For an index set Lambda of size n the sampling measure is the mixture

    dmu = (1/n) sum_{nu in Lambda} |H_nu(y)|^2 dgamma_J

and the weight ``w = n / sum_nu |H_nu|^2`` is its inverse density with respect
to the Gaussian measure. A draw picks ``nu`` uniformly and then each
coordinate independently from ``|H_{nu_j}|^2 g``.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Iterator

import numpy as np

from .hermite import TensorBasis, gaussian_density, hermite_table
from .multiindex import IndexSet

BLOCK_SIZE = 1024
CDF_TOLERANCE = 1e-8


class UnivariateSampler:
    """Inverse-CDF sampler for the density ``H_k(t)^2 g(t)``.

    The CDF is tabulated on ``[0, T]`` with ``T = sqrt(4k + 2) + 8`` by
    composite Simpson quadrature, doubling the grid until linear interpolation
    of the CDF is accurate to ``CDF_TOLERANCE``. The left half follows from
    the evenness of the density, which makes the median exactly zero.
    """

    def __init__(self, k: int, tol: float = CDF_TOLERANCE):
        if k < 0:
            raise ValueError("degree must be >= 0")
        self.k = k
        self.T = np.sqrt(4 * k + 2) + 8.0
        cells = 1024
        grid, half = self._tabulate(cells)
        while True:
            cells *= 2
            fine_grid, fine_half = self._tabulate(cells)
            # fine midpoints measure the interpolation error of the coarse table
            interp_err = np.max(np.abs(fine_half[1::2] - 0.5 * (half[:-1] + half[1:])))
            quad_err = np.max(np.abs(fine_half[::2] - half))
            grid, half = fine_grid, fine_half
            if interp_err < tol and quad_err < 0.01 * tol:
                break
        self.mass_error = abs(2.0 * half[-1] - 1.0)
        # renormalize the (negligible) mass beyond T away
        self.grid = grid
        self.half_cdf = 0.5 * half / half[-1]

    def _density(self, t):
        return hermite_table(self.k, t)[self.k] ** 2 * gaussian_density(t)

    def _tabulate(self, cells: int) -> tuple[np.ndarray, np.ndarray]:
        grid = np.linspace(0.0, self.T, cells + 1)
        h = grid[1] - grid[0]
        f = self._density(grid)
        fm = self._density(0.5 * (grid[:-1] + grid[1:]))
        pieces = h / 6.0 * (f[:-1] + 4.0 * fm + f[1:])
        return grid, np.concatenate(([0.0], np.cumsum(pieces)))

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        val = 0.5 + np.sign(t) * np.interp(np.abs(t), self.grid, self.half_cdf, right=0.5)
        return float(val) if val.ndim == 0 else val

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        d = u - 0.5
        val = np.sign(d) * np.interp(np.abs(d), self.half_cdf, self.grid)
        return float(val) if val.ndim == 0 else val

    def moment(self, p: int) -> float:
        """``int t^p H_k^2 g`` from the tabulated CDF (Riemann-Stieltjes sum)."""
        mid = 0.5 * (self.grid[:-1] + self.grid[1:])
        half = np.sum(mid**p * np.diff(self.half_cdf))
        return float(half * (1 + (-1) ** p))


@lru_cache(maxsize=None)
def univariate_sampler(k: int) -> UnivariateSampler:
    return UnivariateSampler(k)


def _block_rng(seed: np.random.SeedSequence, block: int) -> np.random.Generator:
    child = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + (block,))
    return np.random.default_rng(child)


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


class SamplingMeasure:
    """Mixture measure of an index set restricted to the first J variables."""

    def __init__(self, index_set: IndexSet, J: int | None = None):
        if len(index_set) == 0:
            raise ValueError("empty index set")
        self.index_set = index_set
        self.J = index_set.max_position if J is None else J
        if self.J < 1:
            self.J = 1
        if index_set.max_position > self.J:
            raise ValueError("index set uses variables beyond J")
        self.n = len(index_set)
        self.basis = TensorBasis(index_set, self.J)
        sizes = np.array([len(nu) for nu in index_set], dtype=np.intp)
        self._ptr = np.concatenate(([0], np.cumsum(sizes)))
        self._sizes = sizes
        self._cols = np.array([j - 1 for nu in index_set for j, _ in nu], dtype=np.intp)
        self._degs = np.array([k for nu in index_set for _, k in nu], dtype=np.intp)
        self.samplers = {k: univariate_sampler(k) for k in np.unique(self._degs)}

    def weight(self, y) -> np.ndarray | float:
        Y = np.atleast_2d(np.asarray(y, dtype=float))
        w = self.weights_from_basis(self.basis.evaluate(Y))
        return float(w[0]) if np.ndim(y) == 1 else w

    def weights_from_basis(self, B: np.ndarray) -> np.ndarray:
        christoffel = np.sum(B * B, axis=0)
        # the zero index contributes H_0^2 = 1, so this never vanishes
        assert np.all(christoffel >= 1.0 - 1e-12)
        return self.n / christoffel

    def _fill(self, rng: np.random.Generator, size: int) -> np.ndarray:
        chosen = rng.integers(self.n, size=size)
        Y = rng.standard_normal((size, self.J))
        counts = self._sizes[chosen]
        total = int(counts.sum())
        U = rng.random(total)
        if total:
            rows = np.repeat(np.arange(size), counts)
            offsets = np.repeat(self._ptr[chosen] - np.cumsum(counts) + counts, counts)
            flat = offsets + np.arange(total)
            cols, degs = self._cols[flat], self._degs[flat]
            for k, sampler in self.samplers.items():
                sel = degs == k
                Y[rows[sel], cols[sel]] = sampler.quantile(U[sel])
        return Y

    def draw(self, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        Y = self._fill(rng, 1)
        return Y[0], float(self.weight(Y)[0])

    def blocks(self, m: int, seed, block_size: int = BLOCK_SIZE
               ) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
        """Yield ``(Y, w, B)`` per block, where ``B`` is the basis matrix.

        Block ``b`` draws from its own stream derived from ``seed`` and ``b``,
        so draw ``i`` depends only on the seed, never on scheduling.
        """
        ss = as_seed_sequence(seed)
        for b, start in enumerate(range(0, m, block_size)):
            size = min(block_size, m - start)
            Y = self._fill(_block_rng(ss, b), size)
            B = self.basis.evaluate(Y)
            yield Y, self.weights_from_basis(B), B

    def sample(self, m: int, seed) -> tuple[np.ndarray, np.ndarray]:
        Ys, ws = [], []
        for Y, w, _ in self.blocks(m, seed):
            Ys.append(Y)
            ws.append(w)
        if not Ys:
            return np.zeros((0, self.J)), np.zeros(0)
        return np.vstack(Ys), np.concatenate(ws)
