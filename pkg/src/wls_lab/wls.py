"""Weighted least squares onto ``V_h (x) P_Lambda`` and Parseval distances.

Each sample contributes ``w^i H(y^i) H(y^i)^T`` to the Gram matrix and
``w^i H(y^i) (u^i)^T`` to the right-hand block, both scaled by ``1/m``. The
conditioned estimator is returned only when ``||G - I||_2 <= 1/2`` and is
zero otherwise.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .fem1d import FemSolution, Mesh, MeshMismatch, v_inner_values
from .hermite import TensorBasis
from .multiindex import IndexSet, MultiIndex

CONDITIONING_THRESHOLD = 0.5
_MAGIC = b"WLSEST1\n"


def budget_log_rule(n: int, factor: int = 3) -> int:
    """``factor * n * ceil(ln n)``, at least ``n`` (the rule is 0 at n = 1)."""
    return max(n, factor * n * math.ceil(math.log(n)))


def kappa(s: float) -> float:
    return (1.0 - math.log(2.0)) / (2.0 + 4.0 * s)


def budget_kappa_rule(n: int, s: float) -> int:
    """Smallest m with ``n <= kappa(s) m / ln m``."""
    k = kappa(s)
    m = max(2, math.ceil(n / k))
    while n > k * m / math.log(m):
        m = math.ceil(m * 1.05) + 1
    lo, hi = max(2, m // 2), m
    while lo < hi:
        mid = (lo + hi) // 2
        if n <= k * mid / math.log(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def spectral_deviation(G: np.ndarray) -> float:
    """``||G - I||_2`` from the full symmetric eigendecomposition."""
    eig = np.linalg.eigvalsh(G - np.eye(G.shape[0]))
    return float(np.max(np.abs(eig)))


@dataclass
class GramSystem:
    G: np.ndarray
    D: np.ndarray
    m: int
    gram_deviation: float


class GramAccumulator:
    """Streams samples into the normal equations in a fixed summation order."""

    def __init__(self, index_set: IndexSet, mesh: Mesh, J: int | None = None):
        self.index_set = index_set
        self.mesh = mesh
        self.basis = TensorBasis(index_set, J)
        n = len(index_set)
        self._G = np.zeros((n, n))
        self._D = np.zeros((n, mesh.n_dofs))
        self.m = 0

    def add(self, Y, w, U, B: np.ndarray | None = None) -> None:
        """Add a block: ``Y`` (b, J) points, ``w`` (b,) weights, ``U`` (b, n_dofs) solutions."""
        U = np.asarray(U, dtype=float)
        if U.ndim != 2 or U.shape[1] != self.mesh.n_dofs:
            raise MeshMismatch(f"solutions must have {self.mesh.n_dofs} interior values")
        w = np.asarray(w, dtype=float)
        if B is None:
            B = self.basis.evaluate(Y)
        Bw = B * w
        self._G += Bw @ B.T
        self._D += Bw @ U
        self.m += U.shape[0]

    def finalize(self) -> GramSystem:
        if self.m == 0:
            raise ValueError("no samples were added")
        G = self._G / self.m
        G = 0.5 * (G + G.T)
        D = self._D / self.m
        return GramSystem(G, D, self.m, spectral_deviation(G))


def assemble(samples, index_set: IndexSet, mesh: Mesh | None = None) -> GramSystem:
    """Normal equations from ``(y, w, u)`` triples, ``u`` a FemSolution."""
    samples = list(samples)
    if not samples:
        raise ValueError("empty sample list")
    mesh = samples[0][2].mesh if mesh is None else mesh
    for _, _, u in samples:
        if u.mesh != mesh:
            raise MeshMismatch("all samples must share one mesh")
    acc = GramAccumulator(index_set, mesh, J=max(index_set.max_position,
                                                 len(np.atleast_1d(samples[0][0]))))
    Y = np.array([np.atleast_1d(y) for y, _, _ in samples], dtype=float)
    w = np.array([wi for _, wi, _ in samples], dtype=float)
    U = np.array([u.values for _, _, u in samples])
    acc.add(Y, w, U)
    return acc.finalize()


@dataclass
class WlsEstimator:
    index_set: IndexSet
    mesh: Mesh
    coefficients: np.ndarray = dc_field(repr=False)   # (n, n_dofs), row i <-> index_set[i]
    conditioned: bool = True
    gram_deviation: float = 0.0

    def __post_init__(self):
        if self.coefficients.shape != (len(self.index_set), self.mesh.n_dofs):
            raise ValueError("coefficient matrix shape does not match (n, n_dofs)")

    @classmethod
    def zero(cls, index_set: IndexSet, mesh: Mesh, gram_deviation: float = math.inf,
             conditioned: bool = False) -> WlsEstimator:
        return cls(index_set, mesh, np.zeros((len(index_set), mesh.n_dofs)),
                   conditioned, gram_deviation)

    def coefficient(self, nu: MultiIndex) -> FemSolution:
        if nu not in self.index_set:
            return FemSolution.zeros(self.mesh)
        return FemSolution(self.mesh, self.coefficients[self.index_set.position(nu)].copy())

    def __add__(self, other: WlsEstimator) -> WlsEstimator:
        if self.mesh != other.mesh:
            raise MeshMismatch("estimators live on different meshes")
        members = list(self.index_set) + [nu for nu in other.index_set
                                           if nu not in self.index_set]
        union = IndexSet(members, check=False)
        C = np.zeros((len(union), self.mesh.n_dofs))
        C[: len(self.index_set)] = self.coefficients
        for i, nu in enumerate(other.index_set):
            C[union.position(nu)] += other.coefficients[i]
        return WlsEstimator(union, self.mesh, C, self.conditioned and other.conditioned,
                            max(self.gram_deviation, other.gram_deviation))

    def to_bytes(self) -> bytes:
        header = {
            "mesh": ({"uniform": self.mesh.exponent} if self.mesh.exponent is not None
                     else {"nodes": self.mesh.nodes.tolist()}),
            "n": len(self.index_set),
            "n_dofs": self.mesh.n_dofs,
            "conditioned": self.conditioned,
            "gram_deviation": self.gram_deviation,
            "indices": [nu.to_text() for nu in self.index_set],
        }
        buf = io.BytesIO()
        buf.write(_MAGIC)
        buf.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        buf.write(np.ascontiguousarray(self.coefficients, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> WlsEstimator:
        if not data.startswith(_MAGIC):
            raise ValueError("not an estimator file")
        end = data.index(b"\n", len(_MAGIC))
        header = json.loads(data[len(_MAGIC):end])
        mesh_info = header["mesh"]
        mesh = Mesh.uniform(mesh_info["uniform"]) if "uniform" in mesh_info else Mesh(mesh_info["nodes"])
        index_set = IndexSet((MultiIndex.from_text(t) for t in header["indices"]), check=False)
        C = np.frombuffer(data[end + 1:], dtype="<f8").reshape(header["n"], header["n_dofs"])
        gd = header["gram_deviation"]
        return cls(index_set, mesh, C.astype(float), header["conditioned"],
                   math.inf if gd is None else float(gd))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> WlsEstimator:
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def estimate(system: GramSystem, index_set: IndexSet, mesh: Mesh,
             gate: bool = True) -> WlsEstimator:
    """Conditioned estimator; ``gate=False`` returns the plain weighted
    least-squares solution whatever ``||G - I||`` is (diagnostics only)."""
    conditioned = system.gram_deviation <= CONDITIONING_THRESHOLD
    if gate and not conditioned:
        return WlsEstimator.zero(index_set, mesh, system.gram_deviation)
    try:
        V = cho_solve(cho_factor(system.G, lower=True), system.D)
    except LinAlgError as exc:
        if conditioned:
            # ||G - I|| <= 1/2 forces eigenvalues >= 1/2; reaching here is a bug
            raise RuntimeError(
                f"Cholesky failed with ||G-I||={system.gram_deviation:.3g}") from exc
        V = np.linalg.lstsq(system.G, system.D, rcond=None)[0]
    return WlsEstimator(index_set, mesh, V, conditioned, system.gram_deviation)


def evaluate(est: WlsEstimator, y) -> FemSolution:
    basis = TensorBasis(est.index_set, max(est.index_set.max_position, 1))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size < basis.J:
        y = np.concatenate((y, np.zeros(basis.J - y.size)))
    h = basis.evaluate(y[None, :])[:, 0]
    return FemSolution(est.mesh, h @ est.coefficients)


def parseval_distance(a: WlsEstimator, b: WlsEstimator) -> float:
    """V_2 distance between two finite Hermite expansions on one mesh."""
    if a.mesh != b.mesh:
        raise MeshMismatch("estimators live on different meshes")
    diff = a.coefficients.copy()
    extra = []
    for i, nu in enumerate(b.index_set):
        if nu in a.index_set:
            diff[a.index_set.position(nu)] -= b.coefficients[i]
        else:
            extra.append(b.coefficients[i])
    total = float(np.sum(v_inner_values(a.mesh, diff, diff)))
    if extra:
        E = np.array(extra)
        total += float(np.sum(v_inner_values(a.mesh, E, E)))
    return math.sqrt(max(total, 0.0))


def normal_equation_residual(system: GramSystem, est: WlsEstimator) -> float:
    """``||G V - D|| / ||D||`` (Frobenius)."""
    R = system.G @ est.coefficients - system.D
    return float(np.linalg.norm(R) / max(np.linalg.norm(system.D), 1e-300))
