"""Affine random coefficient and source models, parameter boxes and measures."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

#: Upper bound on tensor-quadrature node counts.
MAX_QUADRATURE_NODES = 100_000


class EllipticityViolation(ValueError):
    """Coefficient leaves the declared ellipticity band; carries the witness."""

    def __init__(self, message, x=None, xi=None, value=None):
        super().__init__(message)
        self.x = x
        self.xi = xi
        self.value = value


# --------------------------------------------------------------------------
# spatial profiles


@dataclass(frozen=True)
class Term:
    """One analytic profile: ``const``, or a product of sines/cosines.

    ``sin`` evaluates ``amplitude * prod_i sin(frequency * pi * x_i)``.
    """

    kind: str = "const"
    amplitude: float = 1.0
    frequency: float = 1.0

    KINDS = ("const", "sin", "cos")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        if self.kind == "const":
            return np.full(x.shape[0], float(self.amplitude))
        f = np.sin if self.kind == "sin" else np.cos
        return self.amplitude * np.prod(f(self.frequency * np.pi * x), axis=1)

    def sup_norm(self) -> float:
        return abs(self.amplitude)

    def to_spec(self) -> dict:
        return {"kind": self.kind, "amplitude": self.amplitude, "frequency": self.frequency}


@dataclass(frozen=True)
class Field:
    """Sum of :class:`Term` profiles."""

    terms: tuple[Term, ...] = ()

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.zeros(x.shape[0])
        for t in self.terms:
            out += t(x)
        return out

    def sup_norm(self) -> float:
        return float(sum(t.sup_norm() for t in self.terms))

    @classmethod
    def from_spec(cls, spec) -> "Field":
        """Parse a number, a term dict, or a list of either."""
        if isinstance(spec, Field):
            return spec
        if isinstance(spec, bool):
            raise TypeError("profile must be a number, a dict or a list")
        if isinstance(spec, (int, float)):
            return cls((Term("const", float(spec)),))
        if isinstance(spec, dict):
            extra = set(spec) - {"kind", "amplitude", "frequency"}
            if extra:
                raise ValueError(f"unknown profile keys {sorted(extra)}")
            return cls((Term(spec.get("kind", "const"), float(spec.get("amplitude", 1.0)),
                             float(spec.get("frequency", 1.0))),))
        if isinstance(spec, (list, tuple)):
            terms = []
            for s in spec:
                terms.extend(cls.from_spec(s).terms)
            return cls(tuple(terms))
        raise TypeError(f"cannot parse profile from {type(spec).__name__}")

    def to_spec(self) -> list:
        return [t.to_spec() for t in self.terms]


def constant(value: float) -> Field:
    return Field((Term("const", float(value)),))


# --------------------------------------------------------------------------
# affine models


@dataclass(frozen=True)
class AffineField:
    """``base(x) + sum_j xi_j * modes[j](x)``."""

    base: Field
    modes: tuple[Field, ...] = ()

    @property
    def n_params(self) -> int:
        return len(self.modes)

    def components(self, x: np.ndarray) -> np.ndarray:
        """Base and mode values at points, shape (len(x), 1 + d)."""
        return np.column_stack([self.base(x)] + [psi(x) for psi in self.modes])

    def evaluate(self, x: np.ndarray, xi=None) -> np.ndarray:
        c = self.components(x)
        if self.n_params == 0:
            return c[:, 0]
        xi = np.asarray(xi, dtype=float).reshape(self.n_params)
        return c[:, 0] + c[:, 1:] @ xi


@dataclass(frozen=True)
class CoefficientModel(AffineField):
    """Isotropic diffusion coefficient ``b(x, xi) I`` with declared bounds."""

    gamma: float | None = None
    L: float | None = None

    def __post_init__(self):
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.gamma is not None and self.L is not None and self.L < self.gamma:
            raise ValueError("L must be >= gamma")


@dataclass(frozen=True)
class SourceModel(AffineField):
    """Right-hand side ``g(x, xi)``, affine in the parameters."""


# --------------------------------------------------------------------------
# parameter distribution and measures


@dataclass(frozen=True)
class UniformBox:
    """Product of uniform distributions on ``prod_j [lo_j, hi_j]``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper must have equal length")
        if any(not hi > lo for lo, hi in zip(self.lower, self.upper)):
            raise ValueError("box requires lo < hi in every coordinate")

    @classmethod
    def symmetric(cls, d: int, half_width: float = 1.0) -> "UniformBox":
        return cls((-half_width,) * d, (half_width,) * d)

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.array(self.lower) + np.array(self.upper))

    def corners(self) -> np.ndarray:
        if self.dim == 0:
            return np.zeros((1, 0))
        return np.array(list(itertools.product(*zip(self.lower, self.upper))), dtype=float).reshape(-1, self.dim)

    def contains(self, xi) -> bool:
        xi = np.asarray(xi, dtype=float)
        return bool(np.all(xi >= np.array(self.lower)) and np.all(xi <= np.array(self.upper)))


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted atoms in parameter space.

    ``kind`` is ``"empirical"`` (equal weights ``1/n``) or ``"quadrature"``.
    """

    points: np.ndarray
    weights: np.ndarray
    kind: str = "empirical"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float)
        if pts.shape[0] == 0 or w.shape != (pts.shape[0],):
            raise ValueError("measure needs one positive weight per atom")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        if self.kind not in ("empirical", "quadrature"):
            raise ValueError(f"unknown measure kind {self.kind!r}")
        if self.kind == "empirical" and np.any(w != w[0]):
            raise ValueError("empirical measures carry equal weights")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def empirical(cls, points) -> "DiscreteMeasure":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        n = pts.shape[0]
        return cls(pts, np.full(n, 1.0 / n), "empirical")

    @classmethod
    def point_mass(cls, xi) -> "DiscreteMeasure":
        return cls.empirical(np.atleast_2d(np.asarray(xi, dtype=float)))

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def subset(self, idx) -> "DiscreteMeasure":
        return DiscreteMeasure.empirical(self.points[np.asarray(idx)])


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based (Philox) generator for the stream ``(seed, *stream)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


def sample(box: UniformBox, n: int, seed=0, stream: Sequence[int] = ()) -> DiscreteMeasure:
    """Empirical measure of ``n`` iid uniform draws from ``box``.

    ``seed`` may also be a ready :class:`numpy.random.Generator`.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"sample size must be a positive integer, got {n!r}")
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed, *stream)
    pts = rng.uniform(np.array(box.lower), np.array(box.upper), size=(int(n), box.dim))
    return DiscreteMeasure.empirical(pts)


def quadrature_measure(box: UniformBox, q: int) -> DiscreteMeasure:
    """Tensor Gauss-Legendre rule with ``q`` nodes per coordinate."""
    if int(q) != q or q < 2:
        raise ValueError("need at least 2 nodes per dimension")
    if q**box.dim > MAX_QUADRATURE_NODES:
        raise ValueError(
            f"{q}^{box.dim} nodes exceed the cap of {MAX_QUADRATURE_NODES}; parameter dimension too large"
        )
    t, w = np.polynomial.legendre.leggauss(int(q))
    lo, hi = np.array(box.lower), np.array(box.upper)
    nodes_1d = [0.5 * (l + h) + 0.5 * (h - l) * t for l, h in zip(lo, hi)]
    pts = np.array(list(itertools.product(*nodes_1d))).reshape(-1, box.dim)
    wts = np.array([np.prod(c) for c in itertools.product(*([0.5 * w] * box.dim))])
    wts = wts / wts.sum()
    return DiscreteMeasure(pts, wts, "quadrature")


# --------------------------------------------------------------------------
# ellipticity


@dataclass(frozen=True)
class EllipticityReport:
    gamma_observed: float
    L_observed: float
    argmin: tuple = field(default=())
    argmax: tuple = field(default=())


def verification_grid(dim: int, grid_resolution: int) -> np.ndarray:
    t = np.linspace(0.0, 1.0, grid_resolution + 1)
    return np.array(list(itertools.product(t, repeat=dim)))


def validate_ellipticity(
    model: CoefficientModel, box: UniformBox, grid_resolution: int = 256, dim: int = 1
) -> EllipticityReport:
    """Extremes of ``b(x, xi)`` over a spatial grid and the corners of ``box``.

    Affine fields attain their extremes over the box at corners. Raises
    :class:`EllipticityViolation` if the minimum is not positive or the
    observed range leaves the declared ``[gamma, L]``.
    """
    if box.dim != model.n_params:
        raise ValueError(f"model has {model.n_params} parameters, box has {box.dim}")
    x = verification_grid(dim, grid_resolution)
    corners = box.corners() if box.dim else np.zeros((1, 0))
    comp = model.components(x)
    vals = comp[:, :1] + comp[:, 1:] @ corners.T  # (grid, corners)
    i_min = np.unravel_index(np.argmin(vals), vals.shape)
    i_max = np.unravel_index(np.argmax(vals), vals.shape)
    lo, hi = float(vals[i_min]), float(vals[i_max])
    wmin = (tuple(x[i_min[0]]), tuple(corners[i_min[1]]))
    wmax = (tuple(x[i_max[0]]), tuple(corners[i_max[1]]))
    if lo <= 0:
        raise EllipticityViolation(f"coefficient reaches {lo:.6g} <= 0", *wmin, lo)
    if model.gamma is not None and lo < model.gamma:
        raise EllipticityViolation(f"coefficient {lo:.6g} below declared gamma {model.gamma}", *wmin, lo)
    if model.L is not None and hi > model.L:
        raise EllipticityViolation(f"coefficient {hi:.6g} above declared L {model.L}", *wmax, hi)
    return EllipticityReport(lo, hi, wmin, wmax)


# --------------------------------------------------------------------------
# truncated expansion surrogate


def kl_amplitudes(d: int, correlation_length: float, sigma: float) -> np.ndarray:
    """Decaying mode amplitudes, ``sigma`` for the first and ~ j^-2 after."""
    j = np.arange(1, d + 1)
    c = np.pi * correlation_length
    return sigma * (1.0 + c**2) / (1.0 + (j * c) ** 2)


def kl_model(
    d: int,
    correlation_length: float = 0.5,
    sigma: float = 0.5,
    base: float = 2.0,
    gamma: float | None = None,
    box: UniformBox | None = None,
) -> CoefficientModel:
    """Truncated expansion ``b = base + sum_j xi_j a_j psi_j(x)`` on (0,1).

    Modes alternate ``sin(2 pi k x)``, ``cos(2 pi k x)``. Amplitudes are scaled
    down uniformly when needed so that ``b >= gamma`` on every corner of
    ``box`` (default ``[-1, 1]^d``, ``gamma = base / 2``).
    """
    if d < 0:
        raise ValueError("truncation order must be nonnegative")
    if correlation_length <= 0 or sigma < 0 or base <= 0:
        raise ValueError("need correlation_length > 0, sigma >= 0, base > 0")
    gamma = 0.5 * base if gamma is None else gamma
    box = UniformBox.symmetric(d) if box is None else box
    if box.dim != d:
        raise ValueError("box dimension must equal the truncation order")
    amps = kl_amplitudes(d, correlation_length, sigma)
    reach = np.maximum(np.abs(box.lower), np.abs(box.upper)) if d else np.zeros(0)
    worst = float(np.sum(amps * reach))
    if worst > base - gamma:
        amps = amps * (base - gamma) / worst
        worst = base - gamma
    modes = []
    for j, a in enumerate(amps, start=1):
        k = (j + 1) // 2
        kind = "sin" if j % 2 else "cos"
        modes.append(Field((Term(kind, float(a), 2.0 * k),)))
    model = CoefficientModel(constant(base), tuple(modes), gamma=gamma, L=base + worst)
    validate_ellipticity(model, box)
    return model
