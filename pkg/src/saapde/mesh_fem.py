"""P1 finite elements on the unit interval and the unit square.

Meshes are immutable; assembly routines are pure functions returning
``scipy.sparse`` matrices, so they can be shared between threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import factorial
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DOMAINS = ("interval", "square")


class LinearSolveError(RuntimeError):
    """Raised when a linear solve is singular or misses the residual target."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Simplicial mesh of the unit interval or square.

    Attributes
    ----------
    vertices : (N, m) array of coordinates
    elements : (E, m + 1) array of vertex indices
    boundary : (N,) bool array, True on the domain boundary
    """

    vertices: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray
    resolution: int = 0
    domain: str = ""

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @cached_property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def n_interior(self) -> int:
        return self.interior.size

    @cached_property
    def _jacobians(self) -> np.ndarray:
        X = self.vertices[self.elements]  # (E, m+1, m)
        return np.swapaxes(X[:, 1:, :] - X[:, :1, :], 1, 2)  # (E, m, m)

    @cached_property
    def volumes(self) -> np.ndarray:
        return np.abs(np.linalg.det(self._jacobians)) / factorial(self.dim)

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.vertices[self.elements].mean(axis=1)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Constant gradients of the local hat functions, shape (E, m+1, m)."""
        inv_t = np.linalg.inv(self._jacobians)  # rows: grads of lambda_1..lambda_m
        g = inv_t  # (E, m, m), g[e, a, :] = grad lambda_{a+1}
        g0 = -g.sum(axis=1, keepdims=True)
        return np.concatenate([g0, g], axis=1)

    def extend(self, interior_values: np.ndarray) -> np.ndarray:
        """Pad interior nodal values with zeros on the boundary."""
        full = np.zeros(self.n_vertices)
        full[self.interior] = interior_values
        return full


def build_mesh(domain: str, resolution: int) -> Mesh:
    """Uniform mesh of (0,1) or (0,1)^2 with spacing ``1/resolution``.

    The square is split into right triangles, two per grid cell.
    """
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}; expected one of {DOMAINS}")
    if int(resolution) != resolution or resolution < 2:
        raise ValueError(f"resolution must be an integer >= 2, got {resolution!r}")
    r = int(resolution)
    t = np.linspace(0.0, 1.0, r + 1)
    if domain == "interval":
        vertices = t[:, None]
        elements = np.column_stack([np.arange(r), np.arange(1, r + 1)])
        boundary = np.zeros(r + 1, dtype=bool)
        boundary[[0, r]] = True
    else:
        X, Y = np.meshgrid(t, t, indexing="xy")
        vertices = np.column_stack([X.ravel(), Y.ravel()])
        i, j = np.meshgrid(np.arange(r), np.arange(r), indexing="xy")
        v00 = (i + j * (r + 1)).ravel()
        v10, v01, v11 = v00 + 1, v00 + r + 1, v00 + r + 2
        elements = np.concatenate(
            [np.column_stack([v00, v10, v11]), np.column_stack([v00, v11, v01])]
        )
        on_edge = lambda c: np.isclose(c, 0.0) | np.isclose(c, 1.0)  # noqa: E731
        boundary = on_edge(vertices[:, 0]) | on_edge(vertices[:, 1])
    for a in (vertices, elements, boundary):
        a.setflags(write=False)
    return Mesh(vertices, elements, boundary, r, domain)


def _coefficient_values(mesh: Mesh, coeff, xi) -> np.ndarray:
    """Coefficient at element barycenters: (E,) scalar or (E, m, m) tensor."""
    if np.isscalar(coeff):
        return np.full(mesh.n_elements, float(coeff))
    if hasattr(coeff, "evaluate"):
        return np.asarray(coeff.evaluate(mesh.barycenters, xi), dtype=float)
    if callable(coeff):
        return np.asarray(coeff(mesh.barycenters), dtype=float)
    return np.asarray(coeff, dtype=float)


def _restrict(mesh: Mesh, A: sp.spmatrix, rows: bool, cols: bool) -> sp.csr_matrix:
    A = A.tocsr()
    if rows:
        A = A[mesh.interior, :]
    if cols:
        A = A[:, mesh.interior]
    return A.tocsr()


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    k = mesh.dim + 1
    rows = np.repeat(mesh.elements, k, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, k)).ravel()
    n = mesh.n_vertices
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return A


def assemble_stiffness(mesh: Mesh, coeff, xi=None, interior: bool = True) -> sp.csr_matrix:
    """Assemble ``A[k, l] = int_D sum_ij b_ij d_i phi_l d_j phi_k dx``.

    ``coeff`` may be a number, an array of per-element values (scalar or
    m-by-m tensors), a callable of the barycenters, or a model with an
    ``evaluate(x, xi)`` method. The coefficient is sampled once per element
    at its barycenter. With ``interior=True`` the rows and columns of
    boundary vertices are dropped (homogeneous Dirichlet conditions).
    """
    b = _coefficient_values(mesh, coeff, xi)
    G = mesh.basis_gradients
    if b.ndim == 1:
        local = b[:, None, None] * np.einsum("eki,eli->ekl", G, G)
    else:
        local = np.einsum("eli,eij,ekj->ekl", G, b, G)
    local *= mesh.volumes[:, None, None]
    A = _scatter(mesh, local)
    return _restrict(mesh, A, interior, interior)


def assemble_mass(mesh: Mesh, interior: bool = False) -> sp.csr_matrix:
    """Consistent P1 mass matrix, over all vertices by default."""
    k = mesh.dim + 1
    ref = (np.ones((k, k)) + np.eye(k)) / ((k) * (k + 1))
    local = mesh.volumes[:, None, None] * ref[None]
    M = _scatter(mesh, local)
    return _restrict(mesh, M, interior, interior)


def _load_rule(dim: int, order: int):
    """Barycentric quadrature points and weights on the reference simplex."""
    if order == 1:
        return np.full((1, dim + 1), 1.0 / (dim + 1)), np.ones(1)
    if order == 2:
        if dim == 1:
            s = 0.5 / np.sqrt(3.0)
            lam = np.array([[0.5 + s, 0.5 - s], [0.5 - s, 0.5 + s]])
            return lam, np.full(2, 0.5)
        lam = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        return lam, np.full(3, 1.0 / 3.0)
    raise ValueError(f"unsupported load quadrature order {order}")


def assemble_load(mesh: Mesh, density, order: int = 1, interior: bool = True) -> np.ndarray:
    """Load vector ``int_D density * phi_k dx``.

    ``order=1`` is the barycentric (midpoint) rule used throughout; ``order=2``
    integrates quadratics exactly, e.g. products of hat functions.
    """
    lam, w = _load_rule(mesh.dim, order)
    X = mesh.vertices[mesh.elements]  # (E, k, m)
    pts = np.einsum("qa,eam->eqm", lam, X)
    if callable(density):
        f = np.asarray(density(pts.reshape(-1, mesh.dim)), dtype=float)
        f = np.broadcast_to(f, (pts.shape[0] * pts.shape[1],)).reshape(pts.shape[:2])
    else:
        f = np.full(pts.shape[:2], float(density))
    local = np.einsum("eq,q,qa->ea", f, w, lam) * mesh.volumes[:, None]
    F = np.bincount(mesh.elements.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)
    return F[mesh.interior] if interior else F


def factorize(A: sp.spmatrix) -> Callable[[np.ndarray], np.ndarray]:
    """Sparse LU factorization; returns a solve callable."""
    try:
        lu = spla.splu(sp.csc_matrix(A))
    except RuntimeError as exc:  # "Factor is exactly singular"
        raise LinearSolveError(str(exc)) from exc
    return lu.solve


def solve_linear(A: sp.spmatrix, rhs: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Solve ``A x = rhs`` by sparse LU and check the relative residual."""
    rhs = np.asarray(rhs, dtype=float)
    norm_b = np.linalg.norm(rhs)
    if norm_b == 0.0:
        return np.zeros_like(rhs)
    x = factorize(A)(rhs)
    res = np.linalg.norm(A @ x - rhs) / norm_b
    if not np.isfinite(res) or res > rtol:
        raise LinearSolveError(f"relative residual {res:.3e} exceeds {rtol:.1e}")
    return x


# degree-5 Gauss rule on intervals, degree-4 Dunavant rule on triangles
def _error_rule(dim: int):
    if dim == 1:
        nodes, weights = np.polynomial.legendre.leggauss(3)
        t = 0.5 * (nodes + 1.0)
        return np.column_stack([1.0 - t, t]), 0.5 * weights
    a, b = 0.445948490915965, 0.091576213509771
    wa, wb = 0.223381589678011, 0.109951743655322
    lam = np.array(
        [[a, a, 1 - 2 * a], [a, 1 - 2 * a, a], [1 - 2 * a, a, a],
         [b, b, 1 - 2 * b], [b, 1 - 2 * b, b], [1 - 2 * b, b, b]]
    )
    return lam, np.array([wa] * 3 + [wb] * 3)


def l2_error(mesh: Mesh, nodal: np.ndarray, exact: Callable[[np.ndarray], np.ndarray]) -> float:
    """L2(D) distance between a P1 function (all-vertex values) and ``exact``."""
    lam, w = _error_rule(mesh.dim)
    X = mesh.vertices[mesh.elements]
    pts = np.einsum("qa,eam->eqm", lam, X)
    uh = np.einsum("qa,ea->eq", lam, nodal[mesh.elements])
    ue = np.asarray(exact(pts.reshape(-1, mesh.dim))).reshape(uh.shape)
    return float(np.sqrt(np.sum((uh - ue) ** 2 * w[None] * mesh.volumes[:, None])))


def manufactured_error(domain: str, resolution: int) -> float:
    """L2 error of the P1 solution of ``-Laplace u = f`` with u = prod sin(pi x_i)."""
    mesh = build_mesh(domain, resolution)
    m = mesh.dim

    def exact(x):
        return np.prod(np.sin(np.pi * x), axis=1)

    A = assemble_stiffness(mesh, 1.0)
    F = assemble_load(mesh, lambda x: m * np.pi**2 * exact(x))
    u = mesh.extend(solve_linear(A, F))
    return l2_error(mesh, u, exact)


def convergence_table(domain: str, resolutions) -> list[dict]:
    """Manufactured-solution errors and observed orders under refinement."""
    rows = []
    prev = None
    for r in resolutions:
        err = manufactured_error(domain, r)
        order = float("nan") if prev is None else float(np.log(prev[1] / err) / np.log(r / prev[0]))
        rows.append({"domain": domain, "resolution": r, "h": 1.0 / r, "l2_error": err, "order": order})
        prev = (r, err)
    return rows
