"""Multiplicative optimization of design weights on a fixed support."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .design import Criterion, CriterionState, Design, information_from
from .errors import FeasibilityError, SingularInformationError
from ._kernels import INFEASIBLE, SINGULAR, multiplicative_loop
from .glm import GlmModel

log = logging.getLogger(__name__)

# relative size of a criterion increase we attribute to floating point
NOISE_FLOOR = 1e-12


@dataclass
class WeightOptConfig:
    delta: Optional[float] = None
    tol: float = 1e-10
    max_iters: int = 10_000
    prune_threshold: float = 1e-8

    def __post_init__(self):
        if self.delta is not None and not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.prune_threshold < 0:
            raise ValueError("prune_threshold must be nonnegative")

    def delta_for(self, crit: Criterion) -> float:
        return crit.default_delta if self.delta is None else self.delta


@dataclass
class WeightOptReport:
    iterations: int = 0
    trace: list = field(default_factory=list)
    converged: bool = False
    final_gap: float = float("nan")


class Support:
    """Basis values and GLM weights cached for a fixed set of points."""

    def __init__(self, points, model: GlmModel):
        self.points = np.asarray(points, dtype=float)
        self.G = model.design_matrix(self.points)
        self.w = model.weight_from_eta(self.G @ model.beta)

    def state(self, lam, crit: Criterion) -> CriterionState:
        return crit.state(information_from(self.G, self.w, lam).check())

    def sensitivities(self, st: CriterionState) -> np.ndarray:
        """Unscaled w(x_i) g_i^T K g_i for every support point."""
        return self.w * np.einsum("ij,jk,ik->i", self.G, st.K, self.G)


def _update(lam, s, delta):
    s = np.clip(s, 0.0, None)
    num = lam * s**delta
    den = num.sum()
    if not den > 0:
        raise FeasibilityError("multiplicative update has a zero denominator (I^{-1}B = 0)")
    return num / den


def multiplicative_step(design: Design, model: GlmModel, crit: Criterion, delta: float) -> Design:
    """One multiplicative update lam_i <- lam_i s_i^delta / sum_j lam_j s_j^delta."""
    sup = Support(design.points, model)
    st = sup.state(design.weights, crit)
    return design.with_weights(_update(design.weights, sup.sensitivities(st), delta))


def point_sensitivities(design: Design, model: GlmModel, crit: Criterion):
    """Normalized sensitivities t_i and the criterion state at ``design``.

    The weighted average sum_i lam_i t_i equals ``state.reference``.
    """
    sup = Support(design.points, model)
    st = sup.state(design.weights, crit)
    return st.scale * sup.sensitivities(st), st


def directional_derivative(design: Design, model: GlmModel, crit: Criterion, direction) -> float:
    """Derivative of the criterion along (1 - a) lam + a * direction at a = 0+."""
    direction = np.asarray(direction, dtype=float)
    t, st = point_sensitivities(design, model, crit)
    return float(st.reference - direction @ t)


def verify_weight_optimality(design: Design, model: GlmModel, crit: Criterion,
                             prune_threshold: float = 1e-8) -> float:
    """Largest violation of the optimal-weight conditions (0 at the optimum).

    Points with weight above the threshold need t_i == reference, the rest
    need t_i <= reference.
    """
    t, st = point_sensitivities(design, model, crit)
    live = design.weights > prune_threshold
    viol = np.where(live, np.abs(t - st.reference), np.maximum(t - st.reference, 0.0))
    return float(viol.max())


def optimize_weights(design: Design, model: GlmModel, crit: Criterion,
                     cfg: WeightOptConfig = WeightOptConfig(), prune: bool = True):
    """Iterate multiplicative steps until the relative criterion change drops below tol.

    Returns the new design and a :class:`WeightOptReport`. Zero starting
    weights are rejected since the multiplicative update can never revive them.
    """
    lam = np.array(design.weights, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("starting weights must be strictly positive")
    delta = cfg.delta_for(crit)
    sup = Support(design.points, model)
    kind, M, p, q = crit.kernel_args()
    lam, trace, iters, converged, status = multiplicative_loop(
        sup.G, sup.w, lam, kind, np.ascontiguousarray(M, dtype=float), p, q,
        delta, cfg.tol, cfg.max_iters, NOISE_FLOOR)
    if status == SINGULAR:
        sup.state(lam, crit)  # raises with the condition estimate
        raise SingularInformationError("Fisher information became singular")
    if status == INFEASIBLE:
        raise FeasibilityError("multiplicative update has a zero denominator (I^{-1}B = 0)")
    report = WeightOptReport(iterations=int(iters), trace=trace.tolist(), converged=bool(converged))
    out = Design(design.points, lam / lam.sum())
    if prune and cfg.prune_threshold > 0:
        out = prune_design(out, model, crit, cfg.prune_threshold)
        out = _drop_fading_points(out, model, crit, cfg, delta, report)
    report.final_gap = verify_weight_optimality(out, model, crit, cfg.prune_threshold)
    return out, report


def _run_loop(design, model, crit, cfg, delta):
    sup = Support(design.points, model)
    kind, M, p, q = crit.kernel_args()
    lam, trace, iters, converged, status = multiplicative_loop(
        sup.G, sup.w, np.array(design.weights, dtype=float), kind, np.ascontiguousarray(M, dtype=float),
        p, q, delta, cfg.tol, cfg.max_iters, NOISE_FLOOR)
    if status != 0:
        return None, trace, iters, False
    return Design(design.points, lam / lam.sum()), trace, iters, converged


def _drop_fading_points(design, model, crit, cfg, delta, report, cap=1e-2):
    """Remove small weights that are still shrinking, if the result certifies better.

    Multiplicative updates only shrink a non-optimal weight geometrically, so
    a run can stop with weights of 1e-7 that are headed to zero. Points with
    weight below ``cap`` and sensitivity below the average are dropped and the
    rest re-optimized; the result is kept only when the optimality gap over
    the original support (dropped points count with weight zero) shrinks and
    the criterion does not increase.
    """
    t, st = point_sensitivities(design, model, crit)
    fading = (design.weights < cap) & (t < st.reference)
    gap = verify_weight_optimality(design, model, crit, cfg.prune_threshold)
    if not fading.any() or fading.all() or gap == 0:
        return design
    keep = ~fading
    lam = design.weights[keep]
    reduced = Design(design.points[keep], lam / lam.sum())
    new, trace, iters, converged = _run_loop(reduced, model, crit, cfg, delta)
    if new is None:
        return design
    full = np.zeros(design.size)
    full[keep] = new.weights
    candidate = Design(design.points, full)
    new_value = trace[-1] if len(trace) else np.inf
    new_gap = verify_weight_optimality(candidate, model, crit, cfg.prune_threshold)
    if new_value > st.value + NOISE_FLOOR * abs(st.reference) or new_gap >= gap:
        return design
    report.iterations += int(iters)
    report.trace.append(float(new_value))
    report.converged = report.converged or bool(converged)
    return new


def prune_design(design: Design, model: GlmModel, crit: Criterion, threshold: float,
                 max_value: Optional[float] = None) -> Design:
    """Drop points with weight below ``threshold`` and renormalize.

    The original design is kept when pruning would make the information
    singular or push the criterion above ``max_value``.
    """
    keep = design.weights >= threshold
    if keep.all():
        return design
    lam = design.weights[keep]
    pruned = Design(design.points[keep], lam / lam.sum())
    try:
        value = Support(pruned.points, model).state(pruned.weights, crit).value
    except SingularInformationError:
        return design
    if max_value is not None and value > max_value:
        return design
    return pruned
