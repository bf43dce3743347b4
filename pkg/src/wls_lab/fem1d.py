"""P1 finite elements on [0, 1] for ``-(a u')' = f`` with ``u(0) = u(1) = 0``.

The coefficient is ``a = exp(b_J)`` for a truncated Schauder field. Solutions
are measured in the H^1_0 seminorm ``||v'||_{L^2}``, which is exact
elementwise for piecewise-linear functions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .field import SchauderField

Forcing = Union[float, Callable[[np.ndarray], np.ndarray]]

# 3-point Gauss-Legendre on [0, 1]
_GL_X = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
_GL_W = np.array([5.0, 8.0, 5.0]) / 18.0


class MeshMismatch(ValueError):
    pass


class Mesh:
    """Sorted nodes ``0 = x_0 < ... < x_N = 1``; interior dofs are ``x_1..x_{N-1}``."""

    def __init__(self, nodes, exponent: int | None = None):
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("a mesh needs at least two elements")
        if nodes[0] != 0.0 or nodes[-1] != 1.0:
            raise ValueError("mesh must span [0, 1]")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("mesh nodes must be strictly increasing")
        self.nodes = nodes
        self.nodes.setflags(write=False)
        self.h = np.diff(nodes)
        self.exponent = exponent

    @classmethod
    def uniform(cls, M: int) -> Mesh:
        """Dyadic mesh with ``2^M`` elements."""
        if M < 1:
            raise ValueError("need M >= 1")
        return cls(np.arange(2**M + 1) / 2.0**M, exponent=M)

    @property
    def n_elements(self) -> int:
        return self.h.size

    @property
    def n_dofs(self) -> int:
        return self.h.size - 1

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    def contains(self, points) -> bool:
        return bool(np.all(np.isin(np.asarray(points, dtype=float), self.nodes)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mesh):
            return NotImplemented
        return self is other or np.array_equal(self.nodes, other.nodes)

    def __hash__(self) -> int:
        return hash(self.nodes.tobytes())

    def __repr__(self) -> str:
        if self.exponent is not None:
            return f"Mesh.uniform({self.exponent})"
        return f"Mesh(n_elements={self.n_elements})"


@dataclass(frozen=True, eq=False)
class FemSolution:
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.mesh.n_dofs,):
            raise ValueError(f"expected {self.mesh.n_dofs} interior values, "
                             f"got shape {self.values.shape}")

    @classmethod
    def zeros(cls, mesh: Mesh) -> FemSolution:
        return cls(mesh, np.zeros(mesh.n_dofs))

    def full(self) -> np.ndarray:
        """Nodal values including the pinned boundary zeros."""
        return np.concatenate(([0.0], self.values, [0.0]))

    def __add__(self, other: FemSolution) -> FemSolution:
        return axpy(1.0, other, self)

    def __sub__(self, other: FemSolution) -> FemSolution:
        return axpy(-1.0, other, self)

    def __mul__(self, alpha: float) -> FemSolution:
        return FemSolution(self.mesh, alpha * self.values)

    __rmul__ = __mul__


def _check_same(u: FemSolution, w: FemSolution) -> None:
    if u.mesh != w.mesh:
        raise MeshMismatch("solutions live on different meshes")


def v_inner_values(mesh: Mesh, U, W) -> np.ndarray:
    """Batched ``int u' w'`` for interior-value arrays with trailing axis n_dofs."""
    pad = [(0, 0)] * (np.ndim(U) - 1) + [(1, 1)]
    dU = np.diff(np.pad(U, pad), axis=-1)
    dW = np.diff(np.pad(W, pad), axis=-1)
    return np.sum(dU * dW / mesh.h, axis=-1)


def v_inner(u: FemSolution, w: FemSolution) -> float:
    _check_same(u, w)
    return float(v_inner_values(u.mesh, u.values, w.values))


def v_norm(u: FemSolution) -> float:
    return float(np.sqrt(max(v_inner(u, u), 0.0)))


def v_norm_values(mesh: Mesh, U) -> np.ndarray:
    return np.sqrt(np.maximum(v_inner_values(mesh, U, U), 0.0))


def axpy(alpha: float, u: FemSolution, w: FemSolution) -> FemSolution:
    """``alpha * u + w``."""
    _check_same(u, w)
    return FemSolution(u.mesh, alpha * u.values + w.values)


def prolongate(u: FemSolution, fine: Mesh) -> FemSolution:
    """Interpolate a P1 function onto a finer mesh containing its nodes."""
    if not fine.contains(u.mesh.nodes):
        raise MeshMismatch("target mesh does not refine the source mesh")
    return FemSolution(fine, np.interp(fine.interior, u.mesh.nodes, u.full()))


class FemSolver:
    """Assembles and solves the tridiagonal P1 system for many parameter vectors.

    Element integrals of ``exp(b_J)`` are taken with 3-point Gauss-Legendre on
    the cells of the common refinement of the mesh and the field breakpoints,
    so ``b_J`` is linear on every quadrature cell whatever the mesh.
    """

    def __init__(self, field: SchauderField, mesh: Mesh, forcing: Forcing = 1.0):
        self.field = field
        self.mesh = mesh
        self.forcing = forcing
        cells = np.union1d(mesh.nodes, field.breakpoints())
        self._cells = cells
        self._cell_h = np.diff(cells)
        # element owning each cell
        self._owner = np.searchsorted(mesh.nodes, cells[:-1], side="right") - 1
        self._starts = np.searchsorted(self._owner, np.arange(mesh.n_elements))
        self._psi_cells = field.tau * field.basis_matrix(cells)  # (J, n_cells + 1)
        self._load = self._assemble_load()

    def _assemble_load(self) -> np.ndarray:
        mesh = self.mesh
        if not callable(self.forcing):
            half = 0.5 * float(self.forcing) * mesh.h
            return half[:-1] + half[1:]
        # hat functions restricted to each element, integrated with the same rule
        x = mesh.nodes[:-1, None] + mesh.h[:, None] * _GL_X
        fx = np.asarray(self.forcing(x), dtype=float) * mesh.h[:, None] * _GL_W
        left = np.sum(fx * (1.0 - _GL_X), axis=1)   # weight on the element's left node
        right = np.sum(fx * _GL_X, axis=1)
        return right[:-1] + left[1:]

    @property
    def load(self) -> np.ndarray:
        return self._load

    def element_integrals(self, Y) -> np.ndarray:
        """``int_e exp(b_J(x, y)) dx`` for every element, shape ``(m, n_elements)``."""
        Y = np.atleast_2d(np.asarray(Y, dtype=float))[:, : self.field.J]
        b = Y @ self._psi_cells
        bq = b[:, :-1, None] + (b[:, 1:] - b[:, :-1])[:, :, None] * _GL_X
        cell = np.exp(bq) @ _GL_W * self._cell_h
        if cell.shape[1] == self.mesh.n_elements:
            return cell
        return np.add.reduceat(cell, self._starts, axis=1)

    def stiffness(self, Y) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal ``(m, n_dofs)`` and off-diagonal ``(m, n_dofs - 1)`` bands."""
        k = self.element_integrals(Y) / self.mesh.h**2
        return k[:, :-1] + k[:, 1:], -k[:, 1:-1]

    def solve_values(self, Y) -> np.ndarray:
        """Interior nodal values for every row of ``Y``, shape ``(m, n_dofs)``."""
        diag, off = self.stiffness(Y)
        rhs = np.broadcast_to(self._load, diag.shape)
        return thomas(off, diag, off, rhs)

    def solve(self, y) -> FemSolution:
        y = np.asarray(y, dtype=float)
        if y.ndim != 1 or y.size < self.field.J:
            raise ValueError(f"parameter vector needs {self.field.J} entries")
        return FemSolution(self.mesh, self.solve_values(y[None, :])[0])

    def residual(self, u: FemSolution, y) -> np.ndarray:
        """``A(y) u - F`` on the interior dofs."""
        diag, off = self.stiffness(np.asarray(y, dtype=float)[None, :])
        v = u.values
        r = diag[0] * v - self._load
        r[:-1] += off[0] * v[1:]
        r[1:] += off[0] * v[:-1]
        return r


def thomas(lower, diag, upper, rhs) -> np.ndarray:
    """Batched tridiagonal solve; arrays carry a leading batch axis.

    Raises when a pivot is not positive, which cannot happen for the SPD
    systems assembled here unless assembly is broken.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = np.array(diag, dtype=float)
    x = np.array(rhs, dtype=float)
    n = d.shape[-1]
    for i in range(1, n):
        if np.any(d[..., i - 1] <= 0):
            raise np.linalg.LinAlgError(f"non-positive pivot at row {i - 1}")
        f = lower[..., i - 1] / d[..., i - 1]
        d[..., i] -= f * upper[..., i - 1]
        x[..., i] -= f * x[..., i - 1]
    if np.any(d[..., n - 1] <= 0):
        raise np.linalg.LinAlgError(f"non-positive pivot at row {n - 1}")
    x[..., n - 1] /= d[..., n - 1]
    for i in range(n - 2, -1, -1):
        x[..., i] = (x[..., i] - upper[..., i] * x[..., i + 1]) / d[..., i]
    return x


def solve(field: SchauderField, y, forcing: Forcing = 1.0, mesh: Mesh | None = None) -> FemSolution:
    mesh = Mesh.uniform(field.L + 1) if mesh is None else mesh
    return FemSolver(field, mesh, forcing).solve(y)


def forcing_dual_norm(forcing: Forcing, M: int = 14) -> float:
    """``||f||_{V'}``: the V-norm of the solution of ``-w'' = f``, computed on
    a fine uniform mesh (nodally exact for piecewise-smooth f)."""
    fine = Mesh.uniform(M)
    solver = FemSolver(SchauderField(0, 1.0), fine, forcing)
    w = solver.solve(np.zeros(1))  # y = 0, so a = 1
    return v_norm(w)
