"""Orthonormal probabilists' Hermite polynomials and Gauss-Hermite quadrature.

The polynomials satisfy ``int H_j H_k g = delta_jk`` for the standard Gaussian
density ``g(t) = exp(-t^2/2) / sqrt(2 pi)``.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .multiindex import IndexSet, MultiIndex

MAX_DEGREE = 200


def gaussian_density(t):
    return np.exp(-0.5 * np.square(t)) / np.sqrt(2.0 * np.pi)


def hermite_table(max_degree: int, t) -> np.ndarray:
    """Values ``H_0(t), ..., H_max_degree(t)`` stacked along axis 0.

    Uses ``H_{k+1} = (t H_k - sqrt(k) H_{k-1}) / sqrt(k+1)``.
    """
    if not 0 <= max_degree <= MAX_DEGREE:
        raise ValueError(f"degree {max_degree} outside [0, {MAX_DEGREE}]")
    t = np.asarray(t, dtype=float)
    out = np.empty((max_degree + 1,) + t.shape)
    out[0] = 1.0
    if max_degree >= 1:
        out[1] = t
    for k in range(1, max_degree):
        out[k + 1] = (t * out[k] - np.sqrt(k) * out[k - 1]) / np.sqrt(k + 1)
    return out


class HermiteEvaluator:
    """Evaluates univariate and tensorized Hermite polynomials up to ``max_degree``."""

    def __init__(self, max_degree: int = MAX_DEGREE):
        if not 0 <= max_degree <= MAX_DEGREE:
            raise ValueError(f"max_degree must lie in [0, {MAX_DEGREE}]")
        self.max_degree = max_degree

    def eval_univariate(self, k: int, t):
        if not 0 <= k <= self.max_degree:
            raise ValueError(f"degree {k} exceeds max_degree={self.max_degree}")
        vals = hermite_table(k, t)[k]
        return float(vals) if vals.ndim == 0 else vals

    def eval_tensor(self, nu: MultiIndex, y) -> float:
        y = np.asarray(y, dtype=float)
        if nu.max_position > y.shape[-1]:
            raise ValueError(f"support of {nu!r} exceeds vector length {y.shape[-1]}")
        val = 1.0
        for j, k in nu:
            val = val * self.eval_univariate(k, y[..., j - 1])
        return val


def eval_univariate(k: int, t):
    return HermiteEvaluator().eval_univariate(k, t)


def eval_tensor(nu: MultiIndex, y):
    return HermiteEvaluator().eval_tensor(nu, y)


class TensorBasis:
    """Vectorized evaluation of ``{H_nu : nu in index_set}`` at many points.

    The per-index support is packed into padded ``(n, s)`` arrays so that
    evaluation is ``s`` gathers of univariate tables, with ``s`` the largest
    support size in the set.
    """

    def __init__(self, index_set: IndexSet, J: int | None = None):
        self.index_set = index_set
        self.n = len(index_set)
        self.J = index_set.max_position if J is None else J
        if index_set.max_position > self.J:
            raise ValueError("index set uses variables beyond J")
        self.max_degree = index_set.max_degree
        width = max((len(nu) for nu in index_set), default=0)
        self.active = np.array(sorted({j - 1 for nu in index_set for j in nu.support}),
                               dtype=np.intp)
        column = {j: c for c, j in enumerate(self.active)}
        # padding slots point at an extra all-ones column
        self.pos = np.full((self.n, width), len(self.active), dtype=np.intp)
        self.deg = np.zeros((self.n, width), dtype=np.intp)
        for i, nu in enumerate(index_set):
            for s, (j, k) in enumerate(nu):
                self.pos[i, s] = column[j - 1]
                self.deg[i, s] = k

    def evaluate(self, Y) -> np.ndarray:
        """Matrix ``B[i, p] = H_{nu_i}(Y[p])`` of shape ``(n, P)``."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if Y.shape[1] < self.J:
            raise ValueError(f"points have {Y.shape[1]} coordinates, need {self.J}")
        P = Y.shape[0]
        table = np.ones((self.max_degree + 1, len(self.active) + 1, P))
        if self.active.size:
            table[:, :-1, :] = hermite_table(self.max_degree, Y[:, self.active].T)
        out = np.ones((self.n, P))
        for s in range(self.pos.shape[1]):
            out *= table[self.deg[:, s], self.pos[:, s], :]
        return out


def gauss_hermite_nodes(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Golub-Welsch nodes and weights for the standard Gaussian measure.

    Exact for polynomials of degree <= 2q - 1; weights sum to one.
    """
    if not 1 <= q <= MAX_DEGREE:
        raise ValueError(f"node count must lie in [1, {MAX_DEGREE}]")
    if q == 1:
        return np.zeros(1), np.ones(1)
    off = np.sqrt(np.arange(1, q, dtype=float))
    nodes, vecs = eigh_tridiagonal(np.zeros(q), off)
    weights = vecs[0] ** 2
    weights /= weights.sum()
    # symmetrize away eigensolver round-off
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return nodes, weights
