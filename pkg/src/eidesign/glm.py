"""Generalized linear model pieces: monomial bases, link functions, GLM weights."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError

LINKS = ("logit", "log", "identity")


@dataclass(frozen=True)
class Basis:
    """Monomial basis g(x) = [prod_j x_j^alpha_ij]_i, optionally mixed by a
    lower-triangular matrix ``transform`` (rows give combinations of terms).
    """

    terms: tuple
    dim: int
    kind: str = "terms"
    transform: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        terms = tuple(tuple(int(a) for a in t) for t in self.terms)
        object.__setattr__(self, "terms", terms)
        if self.dim < 1:
            raise ValueError("basis dimension must be positive")
        if not terms:
            raise ValueError("basis needs at least one term")
        for t in terms:
            if len(t) != self.dim:
                raise DimensionError(f"term {t} does not have {self.dim} exponents")
            if min(t) < 0:
                raise ValueError(f"term {t} has a negative exponent")
        if len(set(terms)) != len(terms):
            raise ValueError("basis terms must be pairwise distinct")
        if self.transform is not None:
            T = np.asarray(self.transform, dtype=float)
            if T.shape != (len(terms), len(terms)):
                raise DimensionError("basis transform must be l x l")
            object.__setattr__(self, "transform", T)

    @classmethod
    def linear(cls, dim: int) -> "Basis":
        """Intercept plus linear terms: g(x) = (1, x_1, ..., x_d)."""
        terms = [(0,) * dim] + [tuple(int(i == j) for i in range(dim)) for j in range(dim)]
        return cls(tuple(terms), dim, kind="linear")

    @classmethod
    def polynomial(cls, dim: int, degree: int) -> "Basis":
        """All monomials of total degree <= ``degree``, graded then lexicographic."""
        if degree < 0:
            raise ValueError("degree must be nonnegative")
        terms = []
        for total in range(degree + 1):
            block = [a for a in itertools.product(range(total + 1), repeat=dim) if sum(a) == total]
            terms.extend(sorted(block, reverse=True))
        return cls(tuple(terms), dim, kind=f"polynomial:{degree}")

    @property
    def size(self) -> int:
        return len(self.terms)

    def term_name(self, i: int) -> str:
        parts = []
        for j, a in enumerate(self.terms[i]):
            if a == 1:
                parts.append(f"x{j + 1}")
            elif a > 1:
                parts.append(f"x{j + 1}^{a}")
        return "*".join(parts) or "1"

    def monomials(self, X: np.ndarray) -> np.ndarray:
        """Raw monomials for an (N, d) array of points -> (N, l)."""
        X = np.asarray(X, dtype=float)
        alpha = np.asarray(self.terms)
        out = np.ones((X.shape[0], len(self.terms)))
        for j in range(self.dim):
            col = X[:, j]
            for k in np.unique(alpha[:, j]):
                if k:
                    out[:, alpha[:, j] == k] *= (col ** k)[:, None]
        return out

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        G = self.monomials(X)
        if self.transform is not None:
            G = G @ self.transform.T
        return G


def _logistic_density(eta):
    # e^eta / (1 + e^eta)^2 written with e^{-|eta|} so it never overflows
    e = np.exp(-np.abs(eta))
    return e / (1.0 + e) ** 2


@dataclass(frozen=True)
class GlmModel:
    """A GLM with a fixed local coefficient guess over a box domain."""

    basis: Basis
    link: str
    beta: np.ndarray
    domain: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        if self.link not in LINKS:
            raise ValueError(f"unknown link {self.link!r}; expected one of {LINKS}")
        beta = np.asarray(self.beta, dtype=float).reshape(-1)
        dom = np.asarray(self.domain, dtype=float).reshape(-1, 2)
        if beta.size != self.basis.size:
            raise DimensionError(
                f"beta has length {beta.size} but the basis has l={self.basis.size} functions"
            )
        if dom.shape[0] != self.basis.dim:
            raise DimensionError(
                f"domain has {dom.shape[0]} axes but the basis has dimension {self.basis.dim}"
            )
        if np.any(dom[:, 0] >= dom[:, 1]):
            raise ValueError("domain bounds need lo < hi on every axis")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "domain", dom)

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def n_params(self) -> int:
        return self.basis.size

    def _points(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim <= 1:
            X = X.reshape(-1, self.dim) if X.size == self.dim else X.reshape(-1, 1)
        if X.shape[1] != self.dim:
            raise DimensionError(f"points have {X.shape[1]} coordinates, model expects {self.dim}")
        return X

    def design_matrix(self, X) -> np.ndarray:
        return self.basis.evaluate(self._points(X))

    def eta(self, X) -> np.ndarray:
        return self.design_matrix(X) @ self.beta

    def weight_from_eta(self, eta) -> np.ndarray:
        if self.link == "logit":
            return _logistic_density(eta)
        if self.link == "log":
            return np.exp(eta)
        return np.full(np.shape(eta), 1.0 / self.sigma**2)

    def mean_deriv_sq_from_eta(self, eta) -> np.ndarray:
        if self.link == "logit":
            return _logistic_density(eta) ** 2
        if self.link == "log":
            return np.exp(2.0 * np.asarray(eta))
        return np.ones(np.shape(eta))

    def weights(self, X) -> np.ndarray:
        """GLM weights w(x) for an array of points."""
        return self.weight_from_eta(self.eta(X))

    def mean_deriv_sq(self, X) -> np.ndarray:
        """[d h^{-1} / d eta]^2 for an array of points."""
        return self.mean_deriv_sq_from_eta(self.eta(X))

    def with_basis(self, basis: Basis) -> "GlmModel":
        """Re-express the model in a new basis spanning the same functions.

        The linear predictor is unchanged: if g_new = T g_old then
        beta_new = T^{-T} beta_old.
        """
        if basis.terms != self.basis.terms:
            raise ValueError("new basis must share the monomial terms of the old one")
        T_old = self.basis.transform if self.basis.transform is not None else np.eye(self.n_params)
        T_new = basis.transform if basis.transform is not None else np.eye(self.n_params)
        raw = T_old.T @ self.beta
        beta = np.linalg.solve(T_new.T, raw)
        return GlmModel(basis, self.link, beta, self.domain, self.sigma)


def basis_eval(model: GlmModel, x: Sequence[float]) -> np.ndarray:
    """g(x) at a single point."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (model.dim,):
        raise DimensionError(f"point has {x.size} coordinates, model expects {model.dim}")
    return model.design_matrix(x[None, :])[0]


def glm_weight(model: GlmModel, x: Sequence[float]) -> float:
    return float(model.weight_from_eta(basis_eval(model, x) @ model.beta))


def mean_deriv_sq(model: GlmModel, x: Sequence[float]) -> float:
    return float(model.mean_deriv_sq_from_eta(basis_eval(model, x) @ model.beta))
