"""Anisotropy weights ``xi_nu`` and the near-optimal sets Lambda_n.

The weight of a multi-index is

    xi_nu = prod_j sum_{l=0}^{r} binom(nu_j, l) rho_j^(2l),

and Lambda_n collects the n indices with the smallest weights. Because
``xi`` is monotone for the componentwise order, the n smallest weights always
form a downward-closed set, which lets us grow Lambda_n greedily from the
reduced margin instead of enumerating an infinite candidate space.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np

from .field import SchauderField
from .multiindex import IndexSet, MultiIndex

_LOG_MAX = math.log(1e300)
# weights whose logs agree to this many decimals count as ties; rounding noise
# would otherwise decide between exactly equal weights such as xi(2 e_1) and
# xi(e_2) for beta = 1/2, where rho_2^2 = 2 rho_1^2
TIE_DECIMALS = 10


@dataclass(frozen=True)
class RhoSequence:
    beta: float
    L: int
    r: int
    tau: float
    values: np.ndarray = dc_field(repr=False)
    normalizer: float = 1.0

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, j: int) -> float:
        """1-based access, matching multi-index positions."""
        return float(self.values[j - 1])

    def condition_value(self) -> float:
        """``max_x sum_i rho_i |tau psi_i(x)|`` on the breakpoint grid."""
        fld = SchauderField(self.L, self.tau)
        psi = fld.basis_matrix(fld.breakpoints())
        return float(np.max(self.values @ (self.tau * np.abs(psi))))

    def rescaled(self, factor: float) -> RhoSequence:
        """Same construction with every ``rho_i`` multiplied by ``factor``."""
        return RhoSequence(self.beta, self.L, self.r, self.tau / factor,
                           self.values * factor, self.normalizer)


def build_rho(beta: float, L: int, r: int = 1, tau: float = 1.0) -> RhoSequence:
    """Per-level weights ``2^(beta*level)``, normalized so that
    ``sup_x sum rho_i |tau psi_i(x)| = ln 2 / (2 sqrt r)``.

    The sup of the piecewise-linear sum is attained on the dyadic grid, so the
    normalizer is an exact grid maximum.
    """
    if beta <= 0 or L < 0 or r < 1 or tau <= 0:
        raise ValueError("need beta > 0, L >= 0, r >= 1, tau > 0")
    fld = SchauderField(L, 1.0)
    J = fld.J
    levels = np.array([(j).bit_length() - 1 for j in range(1, J + 1)], dtype=float)
    rho_tilde = 2.0 ** (beta * levels)
    psi = fld.basis_matrix(fld.breakpoints())
    C = float(np.max(rho_tilde @ np.abs(psi)))
    values = rho_tilde * math.log(2.0) / (2.0 * C * math.sqrt(r)) / tau
    return RhoSequence(beta, L, r, tau, values, C)


@dataclass(frozen=True, order=True)
class XiWeight:
    log_value: float
    index: MultiIndex = dc_field(compare=False)

    @property
    def value(self) -> float:
        # beyond ~1e300 only the log is meaningful
        return math.exp(self.log_value) if self.log_value < _LOG_MAX else math.inf


@lru_cache(maxsize=65536)
def _factor(k: int, rho: float, r: int) -> float:
    rho2 = rho * rho
    return math.fsum(math.comb(k, l) * rho2**l for l in range(min(k, r) + 1))


def _factors(nu: MultiIndex, rho: RhoSequence) -> list[float]:
    if nu.max_position > len(rho):
        raise ValueError(f"support of {nu!r} exceeds the rho sequence length {len(rho)}")
    return sorted(_factor(k, rho[j], rho.r) for j, k in nu)


def log_xi(nu: MultiIndex, rho: RhoSequence) -> float:
    # sorted factors + fsum: permutations of equal-rho variables give identical keys
    return math.fsum(math.log(f) for f in _factors(nu, rho))


def xi(nu: MultiIndex, rho: RhoSequence) -> XiWeight:
    return XiWeight(log_xi(nu, rho), nu)


def xi_value(nu: MultiIndex, rho: RhoSequence) -> float:
    """Plain product of the factors; falls back to the log domain on overflow."""
    factors = _factors(nu, rho)
    val = float(math.prod(factors))
    if math.isinf(val) or val > 1e300:
        return xi(nu, rho).value
    return val


def selection_key(nu: MultiIndex, rho: RhoSequence):
    """Smallest weight first; ties resolved by the canonical order."""
    return (round(log_xi(nu, rho), TIE_DECIMALS), nu.degree, nu.revlex_key())


def build_lambda(n: int, rho: RhoSequence, J: int | None = None) -> IndexSet:
    """The n indices on variables 1..J with the smallest ``xi``.

    Members are returned in selection order, which is also a valid
    topological order of the set.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    J = len(rho) if J is None else J
    if J > len(rho):
        raise ValueError(f"J={J} exceeds rho length {len(rho)}")
    chosen: list[MultiIndex] = []
    members: set[MultiIndex] = set()
    seen: set[MultiIndex] = set()
    zero = MultiIndex.zero()
    heap = [(selection_key(zero, rho), zero)]
    seen.add(zero)
    while len(chosen) < n:
        _, nu = heapq.heappop(heap)
        chosen.append(nu)
        members.add(nu)
        for j in range(1, J + 1):
            cand = nu.add_unit(j)
            if cand in seen:
                continue
            if all(p in members for p in cand.predecessors()):
                seen.add(cand)
                heapq.heappush(heap, (selection_key(cand, rho), cand))
    return IndexSet(chosen, check=False)


def xi_table(index_set: IndexSet, rho: RhoSequence) -> list[tuple[MultiIndex, float]]:
    return [(nu, xi_value(nu, rho)) for nu in index_set]
