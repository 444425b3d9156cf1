"""Sequential support-point algorithm with multiplicative weight updates.

Each round optimizes the weights of the current support, then adds the pool
point with the most negative directional derivative phi(x, xi). The run
stops when no pool point has phi(x, xi) < -epsilon.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .design import Criterion, Design, information_from
from .errors import DesignError, DimensionError
from .glm import GlmModel
from .measure import sobol_points
from .weights import Support, WeightOptConfig, optimize_weights, prune_design, verify_weight_optimality

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidatePool:
    kind: str
    points: np.ndarray
    step: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return self.points.shape[0]


def _dedup(points: np.ndarray) -> np.ndarray:
    _, idx = np.unique(np.round(points, 12), axis=0, return_index=True)
    return points[np.sort(idx)]


def build_pool(domain, kind: str = "grid", *, levels: Union[int, Sequence[int], None] = None,
               s: Optional[int] = None, n: Optional[int] = None, skip: int = 1,
               points=None, min_size: int = 1) -> CandidatePool:
    """Materialize a candidate pool over the box ``domain`` (d x 2).

    ``grid`` takes either ``levels`` points per axis or ``s`` intervals per
    axis (s + 1 levels); ``sobol`` takes ``n`` points after skipping ``skip``
    initial points of the sequence; ``explicit`` takes ``points``.
    """
    dom = np.asarray(domain, dtype=float).reshape(-1, 2)
    d = dom.shape[0]
    step = None
    if kind == "grid":
        if (levels is None) == (s is None):
            raise ValueError("grid pool needs exactly one of levels or s")
        lv = np.broadcast_to(np.asarray(levels if levels is not None else np.asarray(s) + 1), (d,))
        if np.any(lv < 2):
            raise ValueError("grid pool needs at least 2 levels per axis")
        axes = [np.linspace(lo, hi, int(k)) for (lo, hi), k in zip(dom, lv)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        step = (dom[:, 1] - dom[:, 0]) / (lv - 1)
    elif kind == "sobol":
        if n is None or n < 1:
            raise ValueError("sobol pool needs a positive n")
        pts = dom[:, 0] + sobol_points(d, int(n), skip=skip) * (dom[:, 1] - dom[:, 0])
    elif kind == "explicit":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[1] != d:
            raise DimensionError(f"explicit pool points have {pts.shape[1]} coordinates, domain has {d}")
    else:
        raise ValueError(f"unknown pool kind {kind!r}")
    pts = _dedup(pts)
    if pts.shape[0] < min_size:
        raise ValueError(f"candidate pool has {pts.shape[0]} points, need at least {min_size}")
    return CandidatePool(kind, pts, step)


def _sensitivity(G, w, st):
    return st.scale * w * np.einsum("ij,jk,ik->i", G, st.K, G)


def phi_values(X, design: Design, model: GlmModel, crit: Criterion) -> np.ndarray:
    """phi(x, xi) for every row of X."""
    st = Support(design.points, model).state(design.weights, crit)
    G = model.design_matrix(X)
    w = model.weight_from_eta(G @ model.beta)
    return st.reference - _sensitivity(G, w, st)


def phi_point(x, design: Design, model: GlmModel, crit: Criterion) -> float:
    """Directional derivative of the criterion toward the one-point design at x."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    return float(phi_values(x, design, model, crit)[0])


def select_candidate(pool: CandidatePool, design: Design, model: GlmModel, crit: Criterion):
    """Pool point minimizing phi (lowest index on ties) and its phi value."""
    phi = phi_values(pool.points, design, model, crit)
    j = int(np.argmin(phi))
    return pool.points[j].copy(), float(phi[j])


@dataclass
class Equivalence:
    max_lhs: float
    rhs: float
    gap: float
    argmax: np.ndarray
    support_lhs: np.ndarray

    @property
    def relative_gap(self) -> float:
        return self.gap / abs(self.rhs)


def equivalence_check(design: Design, model: GlmModel, crit: Criterion, pool: CandidatePool) -> Equivalence:
    """Compare the point sensitivity over the pool against its design average.

    A design is optimal on the pool when the sensitivity never exceeds the
    average (gap <= 0 up to tolerance), with equality on the support.
    """
    sup = Support(design.points, model)
    st = sup.state(design.weights, crit)
    G = model.design_matrix(pool.points)
    lhs = _sensitivity(G, model.weight_from_eta(G @ model.beta), st)
    j = int(np.argmax(lhs))
    return Equivalence(float(lhs[j]), st.reference, float(lhs[j] - st.reference),
                       pool.points[j].copy(), st.scale * sup.sensitivities(st))


@dataclass
class SeqConfig:
    epsilon: float = 1e-6
    max_rounds: int = 500
    initial: Optional[Design] = None
    seed: int = 0
    inner: WeightOptConfig = field(default_factory=WeightOptConfig)
    gap_tolerance: float = 1e-4
    max_init_draws: int = 100
    cond_limit: float = 1e10

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")


@dataclass
class SeqReport:
    rounds: int = 0
    criterion_per_round: list = field(default_factory=list)
    added_points: list = field(default_factory=list)
    inner_iterations: int = 0
    inner_traces: list = field(default_factory=list)
    inner_gaps: list = field(default_factory=list)
    support_phi: list = field(default_factory=list)
    final_gap: float = float("nan")
    relative_gap: float = float("nan")
    converged: bool = False
    message: str = ""


def initial_design(model: GlmModel, pool: CandidatePool, cfg: SeqConfig) -> Design:
    """l + 1 distinct random pool points with equal weights and cond(I) < cond_limit."""
    l = model.n_params
    if pool.size < l + 1:
        raise DesignError(f"pool has {pool.size} points, need at least l + 1 = {l + 1}")
    rng = np.random.default_rng(cfg.seed)
    G = model.design_matrix(pool.points)
    w = model.weight_from_eta(G @ model.beta)
    lam = np.full(l + 1, 1.0 / (l + 1))
    for _ in range(cfg.max_init_draws):
        idx = np.sort(rng.choice(pool.size, size=l + 1, replace=False))
        info = information_from(G[idx], w[idx], lam)
        if info.eigvals[0] > 0 and info.condition < cfg.cond_limit:
            return Design(pool.points[idx], lam)
    raise DesignError(f"no nonsingular initial design found in {cfg.max_init_draws} draws")


def _add_point(design: Design, x, value: float, model: GlmModel, crit: Criterion) -> Design:
    # warm start at 1/(n+1); shrink the new weight until the criterion does not increase
    n = design.size
    pts = np.vstack([design.points, x])
    sup = Support(pts, model)
    alpha = 1.0 / (n + 1)
    for _ in range(60):
        lam = np.append((1.0 - alpha) * design.weights, alpha)
        try:
            if sup.state(lam, crit).value < value:
                break
        except DesignError:
            pass
        alpha *= 0.5
    return Design(pts, lam / lam.sum())


def run_sequential(model: GlmModel, crit: Criterion, pool: CandidatePool, cfg: SeqConfig = SeqConfig()):
    """Build an optimal design on ``pool``; returns (design, SeqReport)."""
    design = cfg.initial if cfg.initial is not None else initial_design(model, pool, cfg)
    if np.any(design.weights <= 0):
        design = Design.from_points(design.points)
    inner = cfg.inner
    iter_cap = max(256 * inner.max_iters, 10**6)
    report = SeqReport()
    G = model.design_matrix(pool.points)
    w = model.weight_from_eta(G @ model.beta)
    prev = None
    for r in range(cfg.max_rounds):
        design, wrep = optimize_weights(design, model, crit, inner, prune=False)
        design = prune_design(design, model, crit, inner.prune_threshold, max_value=prev)
        sup = Support(design.points, model)
        st = sup.state(design.weights, crit)
        report.rounds = r + 1
        report.inner_iterations += wrep.iterations
        report.inner_traces.append(wrep.trace)
        report.inner_gaps.append(verify_weight_optimality(design, model, crit, inner.prune_threshold))
        report.criterion_per_round.append(st.value)
        report.support_phi.append((st.reference - st.scale * sup.sensitivities(st), design.weights.copy()))
        prev = st.value
        phi = st.reference - _sensitivity(G, w, st)
        j = int(np.argmin(phi))
        if phi[j] >= -cfg.epsilon * abs(st.reference):
            report.converged = True
            report.message = "no pool point with phi < -epsilon"
            break
        x = pool.points[j]
        if design.index_of(x) is not None:
            # the best direction is already in the support: weights are under-converged
            if inner.tol <= 1e-16 and inner.max_iters >= iter_cap:
                report.message = f"pool point {x.tolist()} keeps being reselected; weights cannot be refined further"
                break
            inner = replace(inner, tol=max(inner.tol * 0.01, 1e-16), max_iters=min(inner.max_iters * 2, iter_cap))
            log.debug("round %d: reselected support point %s, tightening tol to %g", r, x, inner.tol)
            continue
        report.added_points.append(x.copy())
        design = _add_point(design, x, st.value, model, crit)
    else:
        report.message = f"max_rounds={cfg.max_rounds} exceeded"
    eq = equivalence_check(design, model, crit, pool)
    report.final_gap = eq.gap
    report.relative_gap = eq.relative_gap
    return design, report


def refine_sequential(model: GlmModel, crit: Criterion, pool: CandidatePool, cfg: SeqConfig = SeqConfig(),
                      k: int = 4, rel_tol: float = 1e-6, max_refinements: int = 10):
    """Re-run on successively denser local grids around the support points.

    Each refinement adds a (k+1)^d lattice spanning one grid step on either
    side of every support point. Stops when the criterion improves by less
    than ``rel_tol`` relative. Returns (design, [SeqReport, ...], final pool).
    """
    design, rep = run_sequential(model, crit, pool, cfg)
    reports = [rep]
    dom = model.domain
    step = pool.step if pool.step is not None else (dom[:, 1] - dom[:, 0]) / max(pool.size ** (1 / model.dim) - 1, 1)
    value = rep.criterion_per_round[-1]
    for _ in range(max_refinements):
        local = []
        for x in design.points:
            lo = np.maximum(x - step, dom[:, 0])
            hi = np.minimum(x + step, dom[:, 1])
            axes = [np.linspace(a, b, k + 1) for a, b in zip(lo, hi)]
            mesh = np.meshgrid(*axes, indexing="ij")
            local.append(np.stack([m.ravel() for m in mesh], axis=1))
        step = 2 * step / k
        pool = CandidatePool("refined", _dedup(np.vstack([design.points] + local)), step)
        design, rep = run_sequential(model, crit, pool, replace(cfg, initial=design))
        reports.append(rep)
        new_value = rep.criterion_per_round[-1]
        done = abs(value - new_value) < rel_tol * abs(value)
        value = new_value
        if done:
            break
    return design, reports, pool
