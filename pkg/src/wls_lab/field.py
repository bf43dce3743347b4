"""Truncated Brownian bridge through its Schauder (Levy-Ciesielski) expansion.

Level ``l`` holds ``2^l`` hats ``psi_{l,k}(x) = 2^{-l/2} psi(2^l x - k)`` with
``psi(x) = max(1/2 - |x - 1/2|, 0)``. The flat enumeration is ``j = 2^l + k``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def mother_hat(x):
    return np.maximum(0.5 - np.abs(np.asarray(x, dtype=float) - 0.5), 0.0)


def decode(j: int) -> tuple[int, int]:
    """Flat index ``j >= 1`` to ``(level, shift)``."""
    if j < 1:
        raise ValueError(f"flat index must be >= 1, got {j}")
    level = j.bit_length() - 1
    return level, j - (1 << level)


def encode(level: int, k: int) -> int:
    if not 0 <= k < (1 << level):
        raise ValueError(f"shift {k} out of range for level {level}")
    return (1 << level) + k


@dataclass(frozen=True)
class SchauderField:
    """``b_J(x, y) = tau * sum_{l <= L} sum_k y_{l,k} psi_{l,k}(x)``."""

    L: int
    tau: float = 1.0

    def __post_init__(self):
        if self.L < 0:
            raise ValueError("L must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be positive")

    @property
    def J(self) -> int:
        return 2 ** (self.L + 1) - 1

    def eval_basis(self, j: int, x):
        if not 1 <= j <= self.J:
            raise ValueError(f"flat index {j} outside 1..{self.J}")
        x = np.asarray(x, dtype=float)
        if np.any((x < 0) | (x > 1)):
            raise ValueError("x must lie in [0, 1]")
        level, k = decode(j)
        vals = 2.0 ** (-level / 2) * mother_hat(2.0**level * x - k)
        return float(vals) if vals.ndim == 0 else vals

    def basis_matrix(self, x) -> np.ndarray:
        """``Psi[j-1, i] = psi_j(x_i)``, without the ``tau`` factor."""
        x = np.asarray(x, dtype=float)
        out = np.empty((self.J, x.size))
        for j in range(1, self.J + 1):
            level, k = decode(j)
            out[j - 1] = 2.0 ** (-level / 2) * mother_hat(2.0**level * x - k)
        return out

    def eval_field(self, y, x):
        """Field value at ``x`` for one parameter vector ``y`` (only the
        single active hat per level is visited)."""
        y = np.asarray(y, dtype=float)
        if y.shape[-1] < self.J:
            raise ValueError(f"parameter vector needs {self.J} entries")
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape)
        for level in range(self.L + 1):
            scaled = (2.0**level) * x
            k = np.minimum(np.floor(scaled).astype(int), 2**level - 1)
            hat = 2.0 ** (-level / 2) * mother_hat(scaled - k)
            total = total + y[(1 << level) + k - 1] * hat
        total = self.tau * total
        return float(total) if total.ndim == 0 else total

    def breakpoints(self) -> np.ndarray:
        """Dyadic grid of step ``2^-(L+1)``; ``b_J`` is linear between nodes."""
        return np.arange(2 ** (self.L + 1) + 1) / 2.0 ** (self.L + 1)

    def sup_norm(self, y) -> float:
        """Exact ``max_x |b_J(x, y)|`` (attained on the breakpoints)."""
        return float(np.max(np.abs(self.eval_field(y, self.breakpoints()))))
