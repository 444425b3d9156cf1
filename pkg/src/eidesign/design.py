"""Designs, Fisher information and the EI / Phi_p / D criteria."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionError, SingularInformationError
from .glm import GlmModel
from .measure import MomentMatrix

SUM_TOL = 1e-12
DUP_TOL = 1e-12
SINGULAR_TOL = 1e-12


@dataclass(frozen=True)
class Design:
    """Approximate design: distinct support points (n, d) with simplex weights."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        lam = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.shape[0] != lam.size or lam.size == 0:
            raise DimensionError("design needs one weight per support point")
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("design weights must be nonnegative")
        if abs(lam.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"design weights sum to {lam.sum():.15g}, not 1")
        if _first_duplicate(pts) is not None:
            raise ValueError("design support points must be distinct")
        pts.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", lam)

    @classmethod
    def from_points(cls, points, weights=None) -> "Design":
        """Build a design, merging near-duplicate points and normalizing weights."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        lam = np.full(pts.shape[0], 1.0 / pts.shape[0]) if weights is None else np.asarray(weights, dtype=float)
        keep_pts, keep_w = [], []
        for x, w in zip(pts, lam):
            for k, y in enumerate(keep_pts):
                if np.max(np.abs(x - y)) < DUP_TOL:
                    keep_w[k] += w
                    break
            else:
                keep_pts.append(x)
                keep_w.append(float(w))
        keep_w = np.asarray(keep_w)
        return cls(np.asarray(keep_pts), keep_w / keep_w.sum())

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def with_weights(self, weights) -> "Design":
        return Design(self.points, weights)

    def index_of(self, x, tol: float = DUP_TOL) -> Optional[int]:
        hit = np.flatnonzero(np.max(np.abs(self.points - np.asarray(x, dtype=float)), axis=1) < tol)
        return int(hit[0]) if hit.size else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(self.dim)] + ["weight"])
        for x, lam in zip(self.points, self.weights):
            w.writerow([repr(float(v)) for v in x] + [f"{lam:.12g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Design":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], [r for r in rows[1:] if r]
        if header[-1] != "weight" or header[:-1] != [f"x{j + 1}" for j in range(len(header) - 1)]:
            raise ValueError(f"unexpected design header {header}")
        data = np.array([[float(v) for v in r] for r in body])
        lam = data[:, -1]
        # 12 significant digits leave the sum off by ~1e-12; renormalize
        return cls(data[:, :-1], lam / lam.sum())


def _first_duplicate(pts):
    n = pts.shape[0]
    if n < 2:
        return None
    order = np.lexsort(pts.T[::-1])
    s = pts[order]
    for i in range(n - 1):
        for k in range(i + 1, n):
            if s[k, 0] - s[i, 0] >= DUP_TOL:
                break
            if np.max(np.abs(s[k] - s[i])) < DUP_TOL:
                return order[k]
    return None


class InfoMatrix:
    """Symmetric Fisher information with cached eigen and Cholesky factors."""

    def __init__(self, I):
        I = np.asarray(I, dtype=float)
        self.I = 0.5 * (I + I.T)
        self.eigvals, self.eigvecs = np.linalg.eigh(self.I)
        top = max(self.eigvals[-1], 0.0)
        self.condition = top / self.eigvals[0] if self.eigvals[0] > 0 else np.inf
        self._inv = None
        self._chol = None

    @property
    def size(self) -> int:
        return self.I.shape[0]

    @property
    def is_singular(self) -> bool:
        return not self.eigvals[0] > SINGULAR_TOL * max(self.eigvals[-1], 0.0)

    def check(self):
        if self.is_singular:
            raise SingularInformationError(
                f"Fisher information is singular (condition estimate {self.condition:.3e})",
                condition=self.condition,
            )
        return self

    @property
    def cholesky(self) -> np.ndarray:
        if self._chol is None:
            self._chol = np.linalg.cholesky(self.check().I)
        return self._chol

    def inverse(self) -> np.ndarray:
        if self._inv is None:
            Linv = np.linalg.inv(self.cholesky)
            inv = Linv.T @ Linv
            self._inv = 0.5 * (inv + inv.T)
        return self._inv

    def inv_sqrt(self) -> np.ndarray:
        self.check()
        U, s = self.eigvecs, self.eigvals
        return (U / np.sqrt(s)) @ U.T


def information_from(G: np.ndarray, w: np.ndarray, lam: np.ndarray) -> InfoMatrix:
    """sum_i lam_i w_i g_i g_i^T from a precomputed (n, l) basis matrix."""
    return InfoMatrix((G * (lam * w)[:, None]).T @ G)


def fisher_information(design: Design, model: GlmModel) -> InfoMatrix:
    G = model.design_matrix(design.points)
    return information_from(G, model.weights(design.points), design.weights)


def spd_matrix_power(M, r: float) -> np.ndarray:
    """M**r for a symmetric positive semidefinite M via eigendecomposition."""
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + M.T)
    if r == 0:
        return np.eye(M.shape[0])
    if r == 1:
        return M.copy()
    s, U = np.linalg.eigh(M)
    scale = max(abs(s[-1]), abs(s[0]), np.finfo(float).tiny)
    if s[0] < -1e-10 * scale:
        raise ValueError(f"matrix has a negative eigenvalue {s[0]:.3e}")
    s = np.clip(s, 0.0, None)
    if r < 0 and not s[0] > 0:
        raise ValueError("negative power of a singular matrix")
    P = (U * s**r) @ U.T
    return 0.5 * (P + P.T)


@dataclass
class CriterionState:
    """Everything the algorithms need from a criterion at one design.

    ``value`` is the criterion; the point sensitivity is
    ``scale * w(x) * g(x)^T K g(x)`` and its design average equals
    ``reference`` (the criterion itself for EI and Phi_p, l for D).
    """

    value: float
    K: np.ndarray
    scale: float
    reference: float


class Criterion:
    name = "criterion"
    default_delta = 0.5

    def state(self, info: InfoMatrix) -> CriterionState:
        raise NotImplementedError

    def value(self, info: InfoMatrix) -> float:
        return self.state(info).value

    def kernel_args(self):
        """(kind code, matrix, p, q) for the compiled weight loop."""
        raise NotImplementedError


class EICriterion(Criterion):
    """Elastic I-optimality: tr(A I^{-1})."""

    name = "EI"

    def __init__(self, A):
        self.moment = A if isinstance(A, MomentMatrix) else None
        A = A.A if isinstance(A, MomentMatrix) else np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError("A must be a square matrix")
        if not np.allclose(A, A.T, rtol=1e-12, atol=1e-14 * np.abs(A).max()):
            raise ValueError("A must be symmetric")
        self.A = 0.5 * (A + A.T)

    def state(self, info):
        if self.A.shape != info.I.shape:
            raise DimensionError(f"A is {self.A.shape} but information is {info.I.shape}")
        Iinv = info.inverse()
        IA = Iinv @ self.A
        K = IA @ Iinv
        value = float(np.trace(IA))
        return CriterionState(value, 0.5 * (K + K.T), 1.0, value)

    def kernel_args(self):
        return 0, self.A, 1.0, 1.0


class PhiPCriterion(Criterion):
    """(q^{-1} tr[(I^{-1} B)^p])^{1/p}; B = identity gives A-optimality at p = 1."""

    name = "phi-p"

    def __init__(self, p: float = 1.0, B=None, q: Optional[int] = None, l: Optional[int] = None):
        if not p > 0:
            raise ValueError("p must be positive")
        self.p = float(p)
        if B is None:
            if l is None:
                raise ValueError("need the number of parameters l when B defaults to identity")
            B = np.eye(l)
        B = np.asarray(B, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise DimensionError("B must be a square matrix")
        if not np.allclose(B, B.T):
            raise ValueError("B must be symmetric")
        self.B = 0.5 * (B + B.T)
        ev = np.linalg.eigvalsh(self.B)
        if ev[0] < -1e-10 * max(abs(ev[-1]), 1.0):
            raise ValueError("B must be positive semidefinite")
        rank = int(np.sum(ev > 1e-10 * max(ev[-1], np.finfo(float).tiny)))
        if q is not None and int(q) != rank:
            raise ValueError(f"declared q={q} but rank(B)={rank}")
        self.q = rank if q is None else int(q)
        if self.q < 1:
            raise ValueError("B must be nonzero")

    @property
    def default_delta(self):
        return 0.5

    def state(self, info):
        if self.B.shape != info.I.shape:
            raise DimensionError(f"B is {self.B.shape} but information is {info.I.shape}")
        p = self.p
        if p in (1.0, 2.0, 3.0):
            Iinv = info.inverse()
            IB = Iinv @ self.B
            P = IB
            for _ in range(int(p) - 1):
                P = P @ IB
            tr = float(np.trace(P))
            K = (P @ Iinv) if p > 1 else IB @ Iinv
        else:
            H = info.inv_sqrt()
            Mp = spd_matrix_power(H @ self.B @ H, p)
            tr = float(np.trace(Mp))
            K = H @ Mp @ H
        value = (tr / self.q) ** (1.0 / p)
        scale = self.q ** (-1.0 / p) * tr ** (1.0 / p - 1.0)
        return CriterionState(value, 0.5 * (K + K.T), scale, value)

    def kernel_args(self):
        return 1, self.B, self.p, float(self.q)


class DCriterion(Criterion):
    """D-optimality stored as -log det I."""

    name = "D"
    default_delta = 1.0

    def state(self, info):
        info.check()
        value = -float(np.sum(np.log(info.eigvals)))
        return CriterionState(value, info.inverse(), 1.0, float(info.size))

    def kernel_args(self):
        return 2, np.zeros((1, 1)), 1.0, 1.0


def criterion_value(design: Design, model: GlmModel, crit: Criterion) -> float:
    return crit.state(fisher_information(design, model).check()).value
