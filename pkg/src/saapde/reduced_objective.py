"""Reduced tracking objective ``f(z, xi)`` and its measure averages.

Two evaluation routes are provided.

* Per-atom: a state solve and an adjoint solve for each parameter point
  (:func:`integrand_value`, :func:`integrand_gradient`, :func:`objective`).
* Assembled: because ``f(., xi)`` is quadratic and the stiffness is affine in
  ``xi``, a measure average is the quadratic form
  ``F(z) = z'Hz/2 - c'z + k``. :class:`AtomCache` stores each atom's
  ``(H_i, c_i, k_i)`` so that averages over any weighted subset are cheap
  sums. The solver and the experiment drivers use this route.

Controls are nodal P1 vectors over all mesh vertices; all inner products
on controls are mass-matrix weighted.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .mesh_fem import Mesh, assemble_mass, assemble_stiffness, factorize, solve_linear
from .random_field import CoefficientModel, DiscreteMeasure, SourceModel

#: Interior-node count up to which atoms are solved as dense batches.
DENSE_BATCH_LIMIT = 600
_CHUNK = 1024


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """Linear-quadratic control problem on a mesh with box control bounds."""

    mesh: Mesh
    coefficient: CoefficientModel
    source: SourceModel
    target: np.ndarray
    alpha: float
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        n = self.mesh.n_vertices
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.coefficient.n_params != self.source.n_params:
            raise ValueError("coefficient and source must share the parameter dimension")
        target = np.asarray(self.target, dtype=float).reshape(n)
        lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if not np.all(np.isfinite(target)):
            raise ValueError("target must be finite")
        if np.any(lower > upper):
            raise ValueError("control bounds need lower <= upper nodewise")
        for name, val in (("target", target), ("lower", lower), ("upper", upper)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_params(self) -> int:
        return self.coefficient.n_params

    @property
    def n_controls(self) -> int:
        return self.mesh.n_vertices

    @cached_property
    def mass(self) -> sp.csr_matrix:
        return assemble_mass(self.mesh)

    @cached_property
    def mass_dense(self) -> np.ndarray:
        return self.mass.toarray()

    @cached_property
    def lumped_mass(self) -> np.ndarray:
        """Row sums of the mass matrix."""
        return np.asarray(self.mass.sum(axis=1)).ravel()

    @cached_property
    def mass_cho(self):
        return sla.cho_factor(self.mass_dense)

    @cached_property
    def load_matrix(self) -> sp.csr_matrix:
        """Interior rows of the mass matrix: nodal density -> load vector."""
        return self.mass[self.mesh.interior, :].tocsr()

    @cached_property
    def stiffness_parts(self) -> list[sp.csr_matrix]:
        """Interior stiffness for the base field and for each mode."""
        fields = [self.coefficient.base, *self.coefficient.modes]
        return [assemble_stiffness(self.mesh, f) for f in fields]

    @cached_property
    def source_parts(self) -> np.ndarray:
        """Nodal source components, shape (N, 1 + d)."""
        return self.source.components(self.mesh.vertices)

    def stiffness(self, xi) -> sp.csr_matrix:
        xi = np.asarray(xi, dtype=float).reshape(self.n_params)
        A = self.stiffness_parts[0].copy()
        for x, Aj in zip(xi, self.stiffness_parts[1:]):
            A = A + x * Aj
        return A.tocsr()

    def source_nodal(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float).reshape(self.n_params)
        return self.source_parts[:, 0] + self.source_parts[:, 1:] @ xi

    def norm(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(np.sqrt(max(z @ (self.mass @ z), 0.0)))

    def inner(self, z, h) -> float:
        return float(np.asarray(z) @ (self.mass @ np.asarray(h)))

    def riesz(self, dual) -> np.ndarray:
        """Mass-matrix Riesz representative of a load-type vector."""
        return sla.cho_solve(self.mass_cho, dual)


# --------------------------------------------------------------------------
# per-atom route


def state_solve(prob: ProblemInstance, z, xi) -> np.ndarray:
    """Interior nodal state for control ``z`` at parameter ``xi``."""
    rhs = prob.load_matrix @ (np.asarray(z, dtype=float) + prob.source_nodal(xi))
    return solve_linear(prob.stiffness(xi), rhs)


def integrand_value(prob: ProblemInstance, z, xi) -> float:
    z = np.asarray(z, dtype=float)
    e = prob.mesh.extend(state_solve(prob, z, xi)) - prob.target
    return 0.5 * prob.inner(e, e) + 0.5 * prob.alpha * prob.inner(z, z)


def integrand_gradient(prob: ProblemInstance, z, xi) -> np.ndarray:
    """Mass-weighted gradient ``p + alpha z`` with ``A' p = M (u - target)``."""
    z = np.asarray(z, dtype=float)
    A = prob.stiffness(xi)
    rhs = prob.load_matrix @ (z + prob.source_nodal(xi))
    u = solve_linear(A, rhs)
    e = prob.mesh.extend(u) - prob.target
    p = solve_linear(A.T.tocsr(), prob.load_matrix @ e)
    return prob.mesh.extend(p) + prob.alpha * z


def objective(prob: ProblemInstance, Q: DiscreteMeasure, z) -> float:
    total = 0.0
    for w, xi in zip(Q.weights, Q.points):
        total += w * integrand_value(prob, z, xi)
    return float(total)


def objective_gradient(prob: ProblemInstance, Q: DiscreteMeasure, z) -> np.ndarray:
    total = np.zeros(prob.n_controls)
    for w, xi in zip(Q.weights, Q.points):
        total += w * integrand_gradient(prob, z, xi)
    return total


# --------------------------------------------------------------------------
# assembled route


@dataclass(frozen=True, eq=False)
class QuadraticObjective:
    """``F(z) = z'Hz/2 - c'z + k`` with mass-weighted gradient ``M^-1 (Hz - c)``."""

    hessian: np.ndarray
    linear: np.ndarray
    constant: float
    prob: ProblemInstance

    @cached_property
    def _riesz_hessian(self) -> np.ndarray:
        return self.prob.riesz(self.hessian)

    @cached_property
    def _riesz_linear(self) -> np.ndarray:
        return self.prob.riesz(self.linear)

    def value(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ (self.hessian @ z) - self.linear @ z + self.constant)

    def gradient(self, z) -> np.ndarray:
        return self._riesz_hessian @ np.asarray(z, dtype=float) - self._riesz_linear

    def hessian_action(self, h) -> np.ndarray:
        return self._riesz_hessian @ np.asarray(h, dtype=float)

    def lumped_gradient(self, z) -> np.ndarray:
        """Gradient in the lumped-mass metric, where nodal clipping is the exact projection."""
        return (self.hessian @ np.asarray(z, dtype=float) - self.linear) / self.prob.lumped_mass


def _atom_terms_dense(prob: ProblemInstance, points: np.ndarray):
    mesh = prob.mesh
    A_parts = np.stack([A.toarray() for A in prob.stiffness_parts])
    B = prob.load_matrix.toarray()  # (Ni, N)
    Mii = prob.mass_dense[np.ix_(mesh.interior, mesh.interior)]
    Mu = (prob.mass @ prob.target)[mesh.interior]
    uMu = float(prob.target @ (prob.mass @ prob.target))
    n = points.shape[0]
    H = np.empty((n, prob.n_controls, prob.n_controls))
    c = np.empty((n, prob.n_controls))
    k = np.empty(n)
    for s in range(0, n, _CHUNK):
        xi = points[s:s + _CHUNK]
        coef = np.column_stack([np.ones(len(xi)), xi])
        A = np.einsum("nj,jab->nab", coef, A_parts)
        S = np.linalg.solve(A, np.broadcast_to(B, (len(xi),) + B.shape))  # (n, Ni, N)
        g = coef @ prob.source_parts.T  # (n, N)
        r = np.einsum("nab,nb->na", S, g)
        T = Mii @ S
        H[s:s + _CHUNK] = np.swapaxes(S, 1, 2) @ T
        w = r @ Mii - Mu
        c[s:s + _CHUNK] = -np.einsum("nab,na->nb", S, w)
        k[s:s + _CHUNK] = 0.5 * (np.einsum("na,na->n", r @ Mii, r) - 2.0 * r @ Mu + uMu)
    return H, c, k


def _atom_terms_sparse(prob: ProblemInstance, points: np.ndarray):
    mesh = prob.mesh
    B = prob.load_matrix.toarray()
    Mii = prob.mass[mesh.interior, :][:, mesh.interior]
    Mu = (prob.mass @ prob.target)[mesh.interior]
    uMu = float(prob.target @ (prob.mass @ prob.target))
    n = points.shape[0]
    H = np.empty((n, prob.n_controls, prob.n_controls))
    c = np.empty((n, prob.n_controls))
    k = np.empty(n)
    for i, xi in enumerate(points):
        S = factorize(prob.stiffness(xi))(B)
        r = S @ prob.source_nodal(xi)
        H[i] = S.T @ (Mii @ S)
        c[i] = -S.T @ (Mii @ r - Mu)
        k[i] = 0.5 * (r @ (Mii @ r) - 2.0 * r @ Mu + uMu)
    return H, c, k


@dataclass(frozen=True, eq=False)
class AtomCache:
    """Per-atom quadratic pieces ``f(z, xi_i) - alpha/2 |z|^2``."""

    prob: ProblemInstance
    points: np.ndarray
    H: np.ndarray
    c: np.ndarray
    k: np.ndarray

    @classmethod
    def build(cls, prob: ProblemInstance, points) -> "AtomCache":
        pts = np.asarray(points, dtype=float).reshape(-1, prob.n_params)
        if prob.mesh.n_interior <= DENSE_BATCH_LIMIT:
            H, c, k = _atom_terms_dense(prob, pts)
        else:
            H, c, k = _atom_terms_sparse(prob, pts)
        return cls(prob, pts, H, c, k)

    def __len__(self) -> int:
        return self.points.shape[0]

    def objective(self, idx=None, weights=None) -> QuadraticObjective:
        """Average over atoms ``idx`` (all by default), equal weights unless given."""
        if idx is None:
            idx = np.arange(len(self))
        idx = np.asarray(idx)
        if weights is None:
            weights = np.full(idx.size, 1.0 / idx.size)
        weights = np.asarray(weights, dtype=float)
        H = np.tensordot(weights, self.H[idx], axes=1) + self.prob.alpha * self.prob.mass_dense
        H = 0.5 * (H + H.T)
        c = weights @ self.c[idx]
        k = float(weights @ self.k[idx])
        return QuadraticObjective(H, c, k, self.prob)


def quadratic_objective(prob: ProblemInstance, Q: DiscreteMeasure) -> QuadraticObjective:
    """Assembled ``F_Q`` for a discrete measure."""
    if Q.dim != prob.n_params:
        raise ValueError(f"measure has dimension {Q.dim}, problem expects {prob.n_params}")
    N = prob.n_controls
    H = np.zeros((N, N))
    c = np.zeros(N)
    k = 0.0
    for s in range(0, Q.n_atoms, _CHUNK):
        cache = AtomCache.build(prob, Q.points[s:s + _CHUNK])
        w = Q.weights[s:s + _CHUNK]
        H += np.tensordot(w, cache.H, axes=1)
        c += w @ cache.c
        k += float(w @ cache.k)
    H += prob.alpha * prob.mass_dense
    return QuadraticObjective(0.5 * (H + H.T), c, k, prob)
