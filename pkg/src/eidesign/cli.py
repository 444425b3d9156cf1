"""Command-line runner: ``eidesign --config problem.yaml --out results/``.

Writes design.csv, report.json, convergence.csv and (for grid pools in one
or two dimensions, or when forced) phi_profile.csv. Wall time goes to
timing.json so that report.json is byte-identical across reruns.

Exit status: 0 when the run converged and the relative equivalence gap is
within ``algorithm.gap_tolerance``, 2 when it did not, 1 on any error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .config import (
    ProblemConfig,
    emit_config,
    field_context,
    load_config,
    make_criterion,
    make_measure,
    make_model,
    make_points,
    make_pool,
    make_quadrature,
    seq_config,
)
from .design import Design
from .errors import ConfigError, DesignError
from .measure import compute_A, orthogonalize_basis
from .sequential import equivalence_check, phi_values, refine_sequential, run_sequential
from .weights import optimize_weights, point_sensitivities

log = logging.getLogger("eidesign")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CONVERGED = 0, 1, 2


@dataclass
class RunResult:
    design: Design
    report: dict
    convergence: list
    phi_profile: str | None
    wall_time: float

    @property
    def certified(self) -> bool:
        return bool(self.report["converged"] and self.report["relative_gap"] <= self.report["gap_tolerance"])


def _num(x):
    # JSON has no inf/nan; keep them readable as strings
    x = float(x)
    return x if np.isfinite(x) else repr(x)


def solve(cfg: ProblemConfig, quiet: bool = True) -> RunResult:
    """Run the configured problem without touching the file system for output."""
    t0 = time.perf_counter()
    model = make_model(cfg)
    A = None
    if cfg.criterion["kind"] == "EI":
        measure = make_measure(cfg.measure)
        quad = make_quadrature(cfg)
        with field_context("measure"):
            if cfg.model["orthogonalize"]:
                model = model.with_basis(orthogonalize_basis(model, measure, quad))
            A = compute_A(model, measure, quad)
        if not A.is_positive_definite:
            log.warning("moment matrix A is only positive semidefinite (smallest eigenvalue %.3e); "
                        "the weight updates may stall, consider model.orthogonalize or another basis", A.eigmin)
    crit = make_criterion(cfg, model, A)
    alg = cfg.algorithm
    sc = seq_config(alg)
    report = {"version": __version__, "mode": cfg.mode, "criterion": crit.name}
    pool = make_pool(cfg, model)

    if cfg.mode == "weights-only":
        pts, lam = make_points(cfg)
        with field_context("points"):
            start = Design.from_points(pts, lam)
            design, wrep = optimize_weights(start, model, crit, sc.inner)
        t, st = point_sensitivities(design, model, crit)
        # on a fixed support the certificate is the weight-optimality gap
        gap = float(np.max(t) - st.reference)
        report.update(rounds=1, inner_iterations=wrep.iterations, converged=wrep.converged,
                      message="weights optimized on the given support")
        convergence = [(0, v) for v in wrep.trace]
        value = st.value
    else:
        with field_context("algorithm"):
            if alg["refine"]:
                design, reps, pool = refine_sequential(model, crit, pool, sc)
            else:
                design, rep = run_sequential(model, crit, pool, sc)
                reps = [rep]
        st = point_sensitivities(design, model, crit)[1]
        value = st.value
        eq = equivalence_check(design, model, crit, pool)
        gap = eq.gap
        convergence = [(r, v) for r, v in enumerate((v for rep in reps for v in rep.criterion_per_round), 1)]
        last = reps[-1]
        report.update(rounds=sum(r.rounds for r in reps), inner_iterations=sum(r.inner_iterations for r in reps),
                      converged=all(r.converged for r in reps), message=last.message,
                      added_points=[[float(v) for v in x] for r in reps for x in r.added_points],
                      max_sensitivity_point=[float(v) for v in eq.argmax])
    rel = gap / abs(st.reference)
    report.update(
        criterion_value=_num(value),
        reference=_num(st.reference),
        equivalence_gap=_num(gap),
        relative_gap=_num(rel),
        gap_tolerance=alg["gap_tolerance"],
        pool_size=int(pool.size),
        design={"points": design.points.tolist(), "weights": design.weights.tolist()},
        config=cfg.to_dict(),
    )

    phi_csv = None
    mode = cfg.output["phi_profile"]
    if mode == "always" or (mode == "auto" and not quiet and pool.kind == "grid" and model.dim <= 2):
        phi = phi_values(pool.points, design, model, crit)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(model.dim)] + ["phi"])
        for x, v in zip(pool.points, phi):
            w.writerow([repr(float(c)) for c in x] + [repr(float(v))])
        phi_csv = buf.getvalue()
    return RunResult(design, report, convergence, phi_csv, time.perf_counter() - t0)


def write_outputs(result: RunResult, outdir: str, cfg: ProblemConfig):
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "design.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(result.design.to_csv())
    with open(os.path.join(outdir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(result.report, fh, indent=2)
        fh.write("\n")
    with open(os.path.join(outdir, "config.yaml"), "w", encoding="utf-8") as fh:
        fh.write(emit_config(cfg))
    with open(os.path.join(outdir, "convergence.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "criterion"])
        for r, v in result.convergence:
            w.writerow([r, repr(float(v))])
    if result.phi_profile is not None:
        with open(os.path.join(outdir, "phi_profile.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(result.phi_profile)
    with open(os.path.join(outdir, "timing.json"), "w", encoding="utf-8") as fh:
        json.dump({"wall_time_seconds": result.wall_time}, fh)
        fh.write("\n")


def run(cfg: ProblemConfig, outdir: str, quiet: bool = False) -> int:
    """Solve ``cfg``, write outputs to ``outdir`` and return the exit status."""
    try:
        result = solve(cfg, quiet=quiet)
        write_outputs(result, outdir, cfg)
    except OSError as exc:
        print(f"eidesign: I/O error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (DesignError, ValueError) as exc:
        print(f"eidesign: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    rep = result.report
    if not quiet:
        print(f"criterion {rep['criterion']} = {rep['criterion_value']!r}; rounds {rep['rounds']}; "
              f"relative gap {rep['relative_gap']!r}; {result.design.size} support points; "
              f"{result.wall_time:.2f} s")
    if not result.certified:
        print(f"eidesign: not certified: converged={rep['converged']}, relative gap {rep['relative_gap']!r} "
              f"vs tolerance {rep['gap_tolerance']!r} ({rep['message']})", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="eidesign", description="Locally optimal approximate designs for GLMs.")
    ap.add_argument("--config", required=True, metavar="PATH", help="YAML problem configuration")
    ap.add_argument("--out", required=True, metavar="DIR", help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="override algorithm.seed")
    ap.add_argument("--quiet", action="store_true", help="no summary line and no default phi profile")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
    except OSError as exc:
        print(f"eidesign: cannot read config: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ConfigError as exc:
        print(f"eidesign: config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return run(cfg, args.out, quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())
