"""Problem configuration: YAML schema, validation and round-trip emission.

A configuration is one YAML document::

    mode: sequential            # or weights-only
    model:
      link: logit               # logit | log | identity
      sigma: 1.0                # noise scale, used by the identity link
      basis: {kind: linear}     # linear | polynomial (degree) | terms (list of exponents)
      beta: [0.2, 1.6]
      domain: [[-1, 1]]
      orthogonalize: false
    measure: {kind: uniform, bounds: [[-1, 1]]}   # uniform | discrete (atoms, probs) | dirac (point)
    criterion: {kind: EI}       # EI | phi-p (p, B or B_file) | D
    quadrature: {method: auto, nodes: 32, points: 16384}
    pool: {kind: grid, levels: 101}               # grid (s | levels) | sobol (n, skip) | explicit (points | file)
    algorithm: {seed: 0, epsilon: 1.0e-6, gap_tolerance: 1.0e-4, ...}
    points: {file: support.csv}                   # weights-only mode
    output: {phi_profile: auto}                   # auto | always | never

Unknown keys are rejected. Relative file paths resolve against the
directory of the configuration file.
"""
from __future__ import annotations

import copy
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np
import yaml

from .design import DCriterion, EICriterion, PhiPCriterion
from .errors import ConfigError, DesignError
from .glm import LINKS, Basis, GlmModel
from .measure import MeasureSpec, QuadratureConfig
from .sequential import SeqConfig, build_pool
from .weights import WeightOptConfig

MODES = ("sequential", "weights-only")

_ALGORITHM_DEFAULTS = {
    "delta": None,
    "epsilon": 1e-6,
    "tol": 1e-10,
    "max_iters": 10_000,
    "prune_threshold": 1e-8,
    "max_rounds": 500,
    "gap_tolerance": 1e-4,
    "seed": 0,
    "refine": False,
}


@dataclass
class ProblemConfig:
    """Normalized configuration; every section is a plain dict of YAML scalars and lists."""

    mode: str
    model: dict
    measure: dict
    criterion: dict
    quadrature: dict
    pool: dict
    algorithm: dict
    points: Optional[dict] = None
    output: dict = field(default_factory=lambda: {"phi_profile": "auto"})
    base_dir: str = field(default=".", compare=False)

    def with_seed(self, seed: int) -> "ProblemConfig":
        out = copy.deepcopy(self)
        out.algorithm["seed"] = _int(seed, "algorithm.seed")
        return out

    def to_dict(self) -> dict:
        doc = {
            "mode": self.mode,
            "model": self.model,
            "measure": self.measure,
            "criterion": self.criterion,
            "quadrature": self.quadrature,
            "pool": self.pool,
            "algorithm": self.algorithm,
        }
        if self.points is not None:
            doc["points"] = self.points
        doc["output"] = self.output
        return copy.deepcopy(doc)


@contextmanager
def field_context(path: str):
    """Re-raise library errors as ConfigError tagged with ``path``."""
    try:
        yield
    except ConfigError:
        raise
    except (DesignError, ValueError, TypeError) as exc:
        raise ConfigError(str(exc), path) from exc


def _keys(section, path, allowed, required=()):
    if not isinstance(section, dict):
        raise ConfigError(f"expected a mapping, got {type(section).__name__}", path)
    for k in section:
        if k not in allowed:
            raise ConfigError(f"unknown key {k!r} (allowed: {', '.join(allowed)})", f"{path}.{k}" if path else k)
    for k in required:
        if k not in section:
            raise ConfigError("missing required key", f"{path}.{k}" if path else k)


def _float(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}", path)
    if not np.isfinite(v):
        raise ConfigError("must be finite", path)
    return float(v)


def _int(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"expected an integer, got {v!r}", path)
    return int(v)


def _bool(v, path):
    if not isinstance(v, bool):
        raise ConfigError(f"expected true or false, got {v!r}", path)
    return v


def _vector(v, path):
    if not isinstance(v, list) or not v:
        raise ConfigError("expected a non-empty list of numbers", path)
    return [_float(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _matrix(v, path, cols=None):
    if not isinstance(v, list) or not v:
        raise ConfigError("expected a non-empty list of rows", path)
    rows = []
    for i, r in enumerate(v):
        r = [r] if not isinstance(r, list) else r
        rows.append(_vector(r, f"{path}[{i}]"))
    width = {len(r) for r in rows}
    if len(width) != 1:
        raise ConfigError("rows have different lengths", path)
    if cols is not None and width != {cols}:
        raise ConfigError(f"rows need {cols} entries, got {width.pop()}", path)
    return rows


def _bounds(v, path):
    b = _matrix(v, path, cols=2)
    for i, (lo, hi) in enumerate(b):
        if not lo < hi:
            raise ConfigError(f"need lo < hi, got [{lo}, {hi}]", f"{path}[{i}]")
    return b


def _choice(v, path, options):
    if v not in options:
        raise ConfigError(f"expected one of {', '.join(map(str, options))}, got {v!r}", path)
    return v


def _parse_model(sec):
    _keys(sec, "model", ("link", "sigma", "basis", "beta", "domain", "orthogonalize"),
          ("link", "basis", "beta", "domain"))
    out = {"link": _choice(sec["link"], "model.link", LINKS)}
    out["sigma"] = _float(sec.get("sigma", 1.0), "model.sigma")
    if not out["sigma"] > 0:
        raise ConfigError("must be positive", "model.sigma")
    out["domain"] = _bounds(sec["domain"], "model.domain")
    d = len(out["domain"])
    basis = sec["basis"]
    _keys(basis, "model.basis", ("kind", "degree", "terms"), ("kind",))
    kind = _choice(basis["kind"], "model.basis.kind", ("linear", "polynomial", "terms"))
    if kind == "linear":
        _keys(basis, "model.basis", ("kind",))
        out["basis"] = {"kind": "linear"}
    elif kind == "polynomial":
        _keys(basis, "model.basis", ("kind", "degree"), ("degree",))
        out["basis"] = {"kind": "polynomial", "degree": _int(basis["degree"], "model.basis.degree")}
    else:
        _keys(basis, "model.basis", ("kind", "terms"), ("terms",))
        terms = basis["terms"]
        if not isinstance(terms, list) or not terms:
            raise ConfigError("expected a non-empty list of exponent lists", "model.basis.terms")
        rows = []
        for i, t in enumerate(terms):
            t = [t] if not isinstance(t, list) else t
            rows.append([_int(a, f"model.basis.terms[{i}][{j}]") for j, a in enumerate(t)])
        out["basis"] = {"kind": "terms", "terms": rows}
    out["beta"] = _vector(sec["beta"], "model.beta")
    out["orthogonalize"] = _bool(sec.get("orthogonalize", False), "model.orthogonalize")
    with field_context("model.basis"):
        b = make_basis(out["basis"], d)
    if len(out["beta"]) != b.size:
        raise ConfigError(
            f"model.beta has {len(out['beta'])} entries but model.basis has l={b.size} terms", "model.beta")
    return out


def _parse_measure(sec, domain):
    _keys(sec, "measure", ("kind", "bounds", "atoms", "probs", "point"), ("kind",))
    kind = _choice(sec["kind"], "measure.kind", ("uniform", "discrete", "dirac"))
    d = len(domain)
    if kind == "uniform":
        _keys(sec, "measure", ("kind", "bounds"))
        b = _bounds(sec.get("bounds", domain), "measure.bounds")
        if len(b) != d:
            raise ConfigError(f"has {len(b)} axes but model.domain has {d}", "measure.bounds")
        return {"kind": "uniform", "bounds": b}
    if kind == "discrete":
        _keys(sec, "measure", ("kind", "atoms", "probs"), ("atoms", "probs"))
        atoms = _matrix(sec["atoms"], "measure.atoms", cols=d)
        probs = _vector(sec["probs"], "measure.probs")
        if len(probs) != len(atoms):
            raise ConfigError(f"has {len(probs)} entries but measure.atoms has {len(atoms)}", "measure.probs")
        with field_context("measure.probs"):
            MeasureSpec.discrete(atoms, probs)
        return {"kind": "discrete", "atoms": atoms, "probs": probs}
    _keys(sec, "measure", ("kind", "point"), ("point",))
    point = _vector(sec["point"], "measure.point")
    if len(point) != d:
        raise ConfigError(f"has {len(point)} coordinates but model.domain has {d}", "measure.point")
    return {"kind": "dirac", "point": point}


def _parse_criterion(sec, l):
    _keys(sec, "criterion", ("kind", "p", "B", "B_file"), ("kind",))
    kind = _choice(sec["kind"], "criterion.kind", ("EI", "phi-p", "D"))
    if kind != "phi-p":
        _keys(sec, "criterion", ("kind",))
        return {"kind": kind}
    out = {"kind": kind, "p": _float(sec.get("p", 1.0), "criterion.p")}
    if not out["p"] > 0:
        raise ConfigError("must be positive", "criterion.p")
    if "B" in sec and "B_file" in sec:
        raise ConfigError("give either B or B_file, not both", "criterion.B")
    if "B" in sec:
        out["B"] = _matrix(sec["B"], "criterion.B", cols=l)
        if len(out["B"]) != l:
            raise ConfigError(f"must be {l} x {l} to match model.basis", "criterion.B")
    elif "B_file" in sec:
        if not isinstance(sec["B_file"], str):
            raise ConfigError("expected a file path", "criterion.B_file")
        out["B_file"] = sec["B_file"]
    return out


def _parse_quadrature(sec):
    _keys(sec, "quadrature", ("method", "nodes", "points"))
    out = {
        "method": sec.get("method", "auto"),
        "nodes": _int(sec.get("nodes", 32), "quadrature.nodes"),
        "points": _int(sec.get("points", 2**14), "quadrature.points"),
    }
    with field_context("quadrature"):
        QuadratureConfig(**out)
    return out


def _parse_pool(sec, d):
    _keys(sec, "pool", ("kind", "s", "levels", "n", "skip", "points", "file"), ("kind",))
    kind = _choice(sec["kind"], "pool.kind", ("grid", "sobol", "explicit"))
    if kind == "grid":
        _keys(sec, "pool", ("kind", "s", "levels"))
        if ("s" in sec) == ("levels" in sec):
            raise ConfigError("grid pool needs exactly one of s or levels", "pool")
        key = "s" if "s" in sec else "levels"
        v = _int(sec[key], f"pool.{key}")
        if v < (1 if key == "s" else 2):
            raise ConfigError("too small", f"pool.{key}")
        return {"kind": "grid", key: v}
    if kind == "sobol":
        _keys(sec, "pool", ("kind", "n", "skip"), ("n",))
        n = _int(sec["n"], "pool.n")
        skip = _int(sec.get("skip", 1), "pool.skip")
        if n < 1 or skip < 0:
            raise ConfigError("need n >= 1 and skip >= 0", "pool")
        return {"kind": "sobol", "n": n, "skip": skip}
    _keys(sec, "pool", ("kind", "points", "file"))
    if ("points" in sec) == ("file" in sec):
        raise ConfigError("explicit pool needs exactly one of points or file", "pool")
    if "points" in sec:
        return {"kind": "explicit", "points": _matrix(sec["points"], "pool.points", cols=d)}
    if not isinstance(sec["file"], str):
        raise ConfigError("expected a file path", "pool.file")
    return {"kind": "explicit", "file": sec["file"]}


def _parse_algorithm(sec):
    _keys(sec, "algorithm", tuple(_ALGORITHM_DEFAULTS))
    out = dict(_ALGORITHM_DEFAULTS)
    for k, v in sec.items():
        path = f"algorithm.{k}"
        if k == "delta":
            out[k] = None if v is None else _float(v, path)
        elif k in ("max_iters", "max_rounds", "seed"):
            out[k] = _int(v, path)
        elif k == "refine":
            out[k] = _bool(v, path)
        else:
            out[k] = _float(v, path)
    with field_context("algorithm"):
        seq_config(out)
    if not out["gap_tolerance"] > 0:
        raise ConfigError("must be positive", "algorithm.gap_tolerance")
    return out


def _parse_points(sec, d):
    _keys(sec, "points", ("file", "points", "weights"))
    if ("points" in sec) == ("file" in sec):
        raise ConfigError("weights-only mode needs exactly one of points.points or points.file", "points")
    if "file" in sec:
        if "weights" in sec:
            raise ConfigError("weights come from the file when points.file is given", "points.weights")
        if not isinstance(sec["file"], str):
            raise ConfigError("expected a file path", "points.file")
        return {"file": sec["file"]}
    out = {"points": _matrix(sec["points"], "points.points", cols=d)}
    if "weights" in sec:
        out["weights"] = _vector(sec["weights"], "points.weights")
        if len(out["weights"]) != len(out["points"]):
            raise ConfigError(f"has {len(out['weights'])} entries but points.points has {len(out['points'])}",
                              "points.weights")
    return out


def config_from_dict(doc: Any, base_dir: str = ".") -> ProblemConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping at the top level")
    _keys(doc, "", ("mode", "model", "measure", "criterion", "quadrature", "pool", "algorithm", "points", "output"),
          ("model", "criterion", "pool"))
    mode = _choice(doc.get("mode", "sequential"), "mode", MODES)
    model = _parse_model(doc["model"])
    d = len(model["domain"])
    l = make_basis(model["basis"], d).size
    measure = _parse_measure(doc.get("measure", {"kind": "uniform"}), model["domain"])
    criterion = _parse_criterion(doc["criterion"], l)
    if model["orthogonalize"] and criterion["kind"] != "EI":
        raise ConfigError("basis orthogonalization is only supported for EI", "model.orthogonalize")
    quadrature = _parse_quadrature(doc.get("quadrature", {}))
    if criterion["kind"] == "EI":
        with field_context("quadrature.method"):
            QuadratureConfig(**quadrature).resolve(make_measure(measure))
    pool = _parse_pool(doc["pool"], d)
    algorithm = _parse_algorithm(doc.get("algorithm", {}))
    points = None
    if mode == "weights-only":
        if "points" not in doc:
            raise ConfigError("weights-only mode needs a points section", "points")
        points = _parse_points(doc["points"], d)
    elif "points" in doc:
        raise ConfigError("only used in weights-only mode", "points")
    output = doc.get("output", {})
    _keys(output, "output", ("phi_profile",))
    output = {"phi_profile": _choice(output.get("phi_profile", "auto"), "output.phi_profile",
                                     ("auto", "always", "never"))}
    return ProblemConfig(mode, model, measure, criterion, quadrature, pool, algorithm, points, output,
                         base_dir=base_dir)


def parse_config(text: str, base_dir: str = ".") -> ProblemConfig:
    """Parse and validate a YAML configuration document."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark is not None else ""
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigError(f"YAML parse error at {where}{problem}") from exc
    return config_from_dict(doc, base_dir)


def load_config(path: str) -> ProblemConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text, os.path.dirname(os.path.abspath(path)))


def emit_config(cfg: ProblemConfig) -> str:
    """YAML text that parses back to an equal configuration."""
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


# builders from normalized sections to library objects

def make_basis(sec: dict, d: int) -> Basis:
    if sec["kind"] == "linear":
        return Basis.linear(d)
    if sec["kind"] == "polynomial":
        return Basis.polynomial(d, sec["degree"])
    return Basis(tuple(tuple(t) for t in sec["terms"]), d)


def make_model(cfg: ProblemConfig) -> GlmModel:
    m = cfg.model
    with field_context("model"):
        return GlmModel(make_basis(m["basis"], len(m["domain"])), m["link"], m["beta"], m["domain"],
                        sigma=m["sigma"])


def make_measure(sec: dict) -> MeasureSpec:
    if sec["kind"] == "uniform":
        return MeasureSpec.uniform(sec["bounds"])
    if sec["kind"] == "discrete":
        return MeasureSpec.discrete(sec["atoms"], sec["probs"])
    return MeasureSpec.dirac(sec["point"])


def _resolve(cfg: ProblemConfig, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(cfg.base_dir, path)


def read_matrix_file(path: str) -> np.ndarray:
    """Numbers separated by commas or whitespace; a non-numeric first line is a header."""
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    rows = [ln.replace(",", " ").split() for ln in lines]
    try:
        [float(v) for v in rows[0]]
    except (ValueError, IndexError):
        rows = rows[1:]
    return np.atleast_2d(np.array([[float(v) for v in r] for r in rows], dtype=float))


def make_criterion(cfg: ProblemConfig, model: GlmModel, A=None):
    c = cfg.criterion
    with field_context("criterion"):
        if c["kind"] == "EI":
            return EICriterion(A)
        if c["kind"] == "D":
            return DCriterion()
        if "B" in c:
            B = np.asarray(c["B"])
        elif "B_file" in c:
            B = read_matrix_file(_resolve(cfg, c["B_file"]))
        else:
            B = None
        return PhiPCriterion(c["p"], B=B, l=model.n_params)


def make_quadrature(cfg: ProblemConfig) -> QuadratureConfig:
    return QuadratureConfig(**cfg.quadrature)


def make_pool(cfg: ProblemConfig, model: GlmModel):
    p = cfg.pool
    with field_context("pool"):
        if p["kind"] == "grid":
            return build_pool(model.domain, "grid", s=p.get("s"), levels=p.get("levels"))
        if p["kind"] == "sobol":
            return build_pool(model.domain, "sobol", n=p["n"], skip=p["skip"])
        pts = p["points"] if "points" in p else read_matrix_file(_resolve(cfg, p["file"]))
        pool = build_pool(model.domain, "explicit", points=pts)
        lo, hi = model.domain[:, 0], model.domain[:, 1]
        if np.any(pool.points < lo) or np.any(pool.points > hi):
            raise ValueError("explicit pool points must lie inside model.domain")
        return pool


def make_points(cfg: ProblemConfig):
    """(points, weights or None) for weights-only mode."""
    p = cfg.points
    with field_context("points"):
        if "file" in p:
            raw = read_matrix_file(_resolve(cfg, p["file"]))
            d = len(cfg.model["domain"])
            if raw.shape[1] == d + 1:
                return raw[:, :d], raw[:, d]
            if raw.shape[1] != d:
                raise ValueError(f"points file has {raw.shape[1]} columns, expected {d} or {d + 1}")
            return raw, None
        return np.asarray(p["points"]), (np.asarray(p["weights"]) if "weights" in p else None)


def seq_config(alg: dict) -> SeqConfig:
    inner = WeightOptConfig(delta=alg["delta"], tol=alg["tol"], max_iters=alg["max_iters"],
                            prune_threshold=alg["prune_threshold"])
    return SeqConfig(epsilon=alg["epsilon"], max_rounds=alg["max_rounds"], seed=alg["seed"], inner=inner,
                     gap_tolerance=alg["gap_tolerance"])
