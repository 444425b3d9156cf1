"""Prediction measures and the moment matrix A = E_F[g g^T (dh^{-1}/deta)^2]."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.stats import qmc

from .errors import DependentBasisError, DimensionError, QuadratureError
from .glm import Basis, GlmModel


@dataclass(frozen=True)
class MeasureSpec:
    """Uniform distribution on a box, or a finite set of weighted atoms.

    A Dirac measure is a discrete measure with a single atom of mass one.
    """

    kind: str
    bounds: Optional[np.ndarray] = None
    points: Optional[np.ndarray] = None
    probs: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "uniform":
            b = np.asarray(self.bounds, dtype=float).reshape(-1, 2)
            if np.any(b[:, 0] >= b[:, 1]):
                raise ValueError("uniform measure bounds need lo < hi on every axis")
            object.__setattr__(self, "bounds", b)
        elif self.kind == "discrete":
            pts = np.asarray(self.points, dtype=float)
            if pts.ndim == 1:
                pts = pts[:, None]
            pr = np.asarray(self.probs, dtype=float).reshape(-1)
            if pts.shape[0] != pr.size or pr.size == 0:
                raise ValueError("discrete measure needs one probability per atom")
            if np.any(pr <= 0):
                raise ValueError("atom probabilities must be positive")
            if abs(pr.sum() - 1.0) > 1e-12:
                raise ValueError(f"atom probabilities sum to {pr.sum():.15g}, not 1")
            object.__setattr__(self, "points", pts)
            object.__setattr__(self, "probs", pr)
        else:
            raise ValueError(f"unknown measure kind {self.kind!r}")

    @classmethod
    def uniform(cls, bounds) -> "MeasureSpec":
        return cls("uniform", bounds=bounds)

    @classmethod
    def discrete(cls, points, probs) -> "MeasureSpec":
        return cls("discrete", points=points, probs=probs)

    @classmethod
    def dirac(cls, point) -> "MeasureSpec":
        return cls("discrete", points=np.atleast_2d(np.asarray(point, dtype=float)), probs=[1.0])

    @property
    def dim(self) -> int:
        return self.bounds.shape[0] if self.kind == "uniform" else self.points.shape[1]


@dataclass(frozen=True)
class QuadratureConfig:
    """How to integrate against a measure.

    ``method`` is one of ``auto``, ``gauss-legendre``, ``sobol``, ``exact``.
    ``auto`` picks exact sums for discrete measures, Gauss-Legendre with 32
    nodes per axis for d <= 3 and 2**14 Sobol points otherwise.
    """

    method: str = "auto"
    nodes: int = 32
    points: int = 2**14

    def __post_init__(self):
        if self.method not in ("auto", "gauss-legendre", "sobol", "exact"):
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if self.nodes < 2:
            raise ValueError("need at least 2 Gauss-Legendre nodes per axis")
        if self.points < 1 or self.points & (self.points - 1):
            raise ValueError("Sobol quadrature size must be a power of two")

    def resolve(self, measure: MeasureSpec) -> "QuadratureConfig":
        if self.method != "auto":
            if (self.method == "exact") != (measure.kind == "discrete"):
                raise QuadratureError(
                    f"quadrature method {self.method!r} is incompatible with a {measure.kind} measure"
                )
            return self
        if measure.kind == "discrete":
            method = "exact"
        elif measure.dim <= 3:
            method = "gauss-legendre"
        else:
            method = "sobol"
        return QuadratureConfig(method, self.nodes, self.points)


@lru_cache(maxsize=64)
def _gauss_legendre(m: int):
    i = np.arange(1, m + 1)
    x = np.cos(np.pi * (i - 0.25) / (m + 0.5))
    for _ in range(100):
        p0, p1 = np.ones_like(x), x.copy()
        for k in range(2, m + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        dp = m * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    p0, p1 = np.ones_like(x), x.copy()
    for k in range(2, m + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = m * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    return x[order], w[order]


def gauss_legendre(m: int):
    """Nodes and weights of the m-point Gauss-Legendre rule on [-1, 1]."""
    x, w = _gauss_legendre(int(m))
    return x.copy(), w.copy()


def sobol_points(dim: int, n: int, skip: int = 0) -> np.ndarray:
    """First ``n`` unscrambled Sobol points in [0, 1)^dim after skipping ``skip``."""
    eng = qmc.Sobol(dim, scramble=False)
    if skip:
        eng.fast_forward(skip)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return eng.random(n)


def quadrature_rule(measure: MeasureSpec, quad: QuadratureConfig):
    """Nodes (K, d) and probability weights (K,) summing to one."""
    quad = quad.resolve(measure)
    if quad.method == "exact":
        return measure.points, measure.probs
    lo, hi = measure.bounds[:, 0], measure.bounds[:, 1]
    d = measure.dim
    if quad.method == "gauss-legendre":
        x, w = gauss_legendre(quad.nodes)
        grids = np.meshgrid(*([x] * d), indexing="ij")
        wgrids = np.meshgrid(*([w / 2.0] * d), indexing="ij")
        unit = np.stack([g.ravel() for g in grids], axis=1)
        probs = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
        nodes = lo + (unit + 1.0) * 0.5 * (hi - lo)
        return nodes, probs
    u = sobol_points(d, quad.points)
    return lo + u * (hi - lo), np.full(quad.points, 1.0 / quad.points)


@dataclass(frozen=True)
class MomentMatrix:
    A: np.ndarray
    measure: MeasureSpec
    quad: QuadratureConfig
    eigmin: float

    @property
    def is_positive_definite(self) -> bool:
        return bool(self.eigmin > 1e-10 * np.abs(self.A).sum(axis=1).max())


def compute_A(model: GlmModel, measure: MeasureSpec, quad: QuadratureConfig = QuadratureConfig()) -> MomentMatrix:
    """Integrate g g^T (dh^{-1}/deta)^2 against ``measure``."""
    if measure.dim != model.dim:
        raise DimensionError(f"measure has dimension {measure.dim}, model has {model.dim}")
    quad = quad.resolve(measure)
    nodes, probs = quadrature_rule(measure, quad)
    with np.errstate(over="ignore", invalid="ignore"):
        G = model.design_matrix(nodes)
        v = model.mean_deriv_sq(nodes)
    bad = ~np.isfinite(v) | ~np.all(np.isfinite(G), axis=1)
    if bad.any():
        k = int(np.argmax(bad))
        raise QuadratureError(f"non-finite integrand at quadrature node {nodes[k].tolist()}")
    A = (G * (probs * v)[:, None]).T @ G
    A = 0.5 * (A + A.T)
    if not np.all(np.isfinite(A)):
        raise QuadratureError("moment matrix has non-finite entries")
    return MomentMatrix(A, measure, quad, float(np.linalg.eigvalsh(A)[0]))


def assert_A_positive_definite(A) -> tuple:
    """(is positive definite, smallest eigenvalue).

    Positive definite means eigmin > 1e-10 * ||A||_inf. When this fails the
    basis should be re-chosen, e.g. with :func:`orthogonalize_basis`.
    """
    M = A.A if isinstance(A, MomentMatrix) else np.asarray(A, dtype=float)
    lam = float(np.linalg.eigvalsh(0.5 * (M + M.T))[0])
    return bool(lam > 1e-10 * np.abs(M).sum(axis=1).max()), lam


def orthogonalize_basis(model: GlmModel, measure: MeasureSpec, quad: QuadratureConfig = QuadratureConfig(),
                        pivot_tol: float = 1e-12) -> Basis:
    """Orthonormalize the basis under <u, v> = E_F[u v (dh^{-1}/deta)^2].

    Modified Gram-Schmidt on the raw monomials; the result is a basis with a
    lower-triangular ``transform``. Use ``model.with_basis`` to carry beta over.
    """
    raw = Basis(model.basis.terms, model.dim, model.basis.kind)
    raw_model = model.with_basis(raw)
    gram = compute_A(raw_model, measure, quad).A
    l = raw.size
    V = np.eye(l)
    lead = gram[0, 0]
    for i in range(l):
        for j in range(i):
            V[i] -= (V[j] @ gram @ V[i]) * V[j]
        nrm2 = V[i] @ gram @ V[i]
        if not nrm2 > pivot_tol * lead:
            raise DependentBasisError(
                f"basis term {raw.term_name(i)!r} is linearly dependent on earlier terms under the measure",
                term=raw.terms[i],
            )
        V[i] /= np.sqrt(nrm2)
    return Basis(raw.terms, raw.dim, raw.kind, transform=np.tril(V))
