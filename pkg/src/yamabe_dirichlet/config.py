"""Plain-text experiment configuration.

A config file has ``[domain]``, ``[problem]``, ``[run]`` and optionally
``[sweep]`` sections. ``[domain]`` holds a domain literal (``ball cx cy cz r``,
``box lx ly lz hx hy hz`` or ``polytope`` followed by rows ``nx ny nz b``);
the other sections hold ``key = value`` lines. ``#`` starts a comment.

Example::

    [domain]
    ball 0 0 0 0.08

    [problem]
    R = cos(20*x)
    S = -0.5
    Lambda = 1
    gamma = 0.5

    [run]
    mode = solve
    mesh_size = 0.005

Parsing collects every problem it finds and raises a single
:class:`ConfigError` listing them with line numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from .expressions import ExpressionError, parse_expression
from .geometry import DomainError, domain_literal, parse_domain_literal

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MODES",
    "parse_config",
    "load_config",
    "estimate_sup",
    "PROBE_POINTS",
    "SAFETY_FACTOR",
]

MODES = ("solve", "shifted", "deform", "sweep", "certify", "estimate-green", "verify")
SWEEP_BASES = ("solve", "shifted", "deform")
SWEEPABLE = ("lambda", "d", "c", "mesh_size", "Lambda", "gamma")
PROBE_POINTS = 64
SAFETY_FACTOR = 1.05

_PROBLEM_KEYS = {
    "n": "int",
    "R": "expr",
    "S": "expr",
    "Lambda": "float",
    "gamma": "float",
    "bounds_estimated": "bool",
    "c": "float",
    "lambda": "float",
    "d": "float",
    "theorem": "str",
    "iteration_coefficient": "str",
}
_RUN_KEYS = {
    "mode": "str",
    "mesh_size": "float",
    "tol": "float",
    "max_iter": "int",
    "seed": "int",
    "output_dir": "str",
    "override_certificate": "bool",
    "check_resolution": "bool",
    "green_rtol": "float",
}
_SWEEP_KEYS = {"base": "str", **{k: "list" for k in SWEEPABLE}}


class ConfigError(ValueError):
    """All problems found in a config; ``errors`` is a list of ``(line, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        lines = [f"line {ln}: {msg}" if ln else msg for ln, msg in self.errors]
        super().__init__("invalid config:\n  " + "\n  ".join(lines))


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    domain: object = None
    n: int = 3
    R: str | None = None
    S: str | None = None
    Lam: float | None = None
    gamma: float | None = None
    bounds_estimated: bool = False
    c: float = 0.0
    lam: float | None = None
    d: float | None = None
    theorem: str = "T1"
    coefficient: str = "eq3"
    mesh_size: float | None = None
    tol: float = 1e-9
    max_iter: int = 200
    seed: int = 0
    output_dir: str | None = None
    override_certificate: bool = False
    check_resolution: bool = True
    green_rtol: float = 1e-4
    sweep_base: str = "solve"
    sweep: tuple = ()

    def with_values(self, **changes):
        """Copy with overrides; sweep keys use their config names."""
        rename = {"lambda": "lam", "Lambda": "Lam"}
        return replace(self, **{rename.get(k, k): v for k, v in changes.items()})

    def to_text(self):
        """Serialise so that :func:`parse_config` returns an equal config."""
        fmt = lambda v: format(float(v), ".17g")  # noqa: E731
        out = []
        if self.domain is not None:
            out += ["[domain]", domain_literal(self.domain), ""]
        out.append("[problem]")
        out.append(f"n = {self.n}")
        for key, val in (("R", self.R), ("S", self.S)):
            if val is not None:
                out.append(f"{key} = {val}")
        for key, val in (("Lambda", self.Lam), ("gamma", self.gamma), ("lambda", self.lam), ("d", self.d)):
            if val is not None:
                out.append(f"{key} = {fmt(val)}")
        if self.bounds_estimated:
            out.append("bounds_estimated = true")
        out.append(f"c = {fmt(self.c)}")
        out.append(f"theorem = {self.theorem}")
        out.append(f"iteration_coefficient = {self.coefficient}")
        out += ["", "[run]", f"mode = {self.mode}"]
        if self.mesh_size is not None:
            out.append(f"mesh_size = {fmt(self.mesh_size)}")
        out.append(f"tol = {fmt(self.tol)}")
        out.append(f"max_iter = {self.max_iter}")
        out.append(f"seed = {self.seed}")
        if self.output_dir is not None:
            out.append(f"output_dir = {self.output_dir}")
        out.append(f"override_certificate = {str(self.override_certificate).lower()}")
        out.append(f"check_resolution = {str(self.check_resolution).lower()}")
        out.append(f"green_rtol = {fmt(self.green_rtol)}")
        if self.sweep:
            out += ["", "[sweep]", f"base = {self.sweep_base}"]
            for name, values in self.sweep:
                out.append(f"{name} = " + ", ".join(fmt(v) for v in values))
        return "\n".join(out) + "\n"

    def as_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["domain"] = None if self.domain is None else domain_literal(self.domain)
        d["sweep"] = {name: list(vals) for name, vals in self.sweep}
        return d


def _coerce(kind, raw):
    if kind == "float":
        v = float(raw)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v
    if kind == "int":
        return int(raw)
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected true/false, got {raw!r}")
    if kind == "expr":
        parse_expression(raw)
        return raw
    if kind == "list":
        return _parse_range(raw)
    return raw


def _parse_range(raw):
    """``a, b, c`` or ``start:stop:count`` (inclusive linspace)."""
    raw = raw.strip()
    if ":" in raw:
        parts = raw.split(":")
        if len(parts) != 3:
            raise ValueError("range must be start:stop:count")
        count = int(parts[2])
        if count < 1:
            raise ValueError("range count must be positive")
        return tuple(float(v) for v in np.linspace(float(parts[0]), float(parts[1]), count))
    vals = tuple(float(v) for v in raw.split(",") if v.strip())
    if not vals:
        raise ValueError("empty list")
    return vals


def _split_sections(text, errors):
    sections = {}
    current = None
    for ln, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip().lower()
            if current not in ("domain", "problem", "run", "sweep"):
                errors.append((ln, f"unknown section [{current}]"))
                current = None
                continue
            if current in sections:
                errors.append((ln, f"duplicate section [{current}]"))
            sections.setdefault(current, [])
            continue
        if current is None:
            errors.append((ln, "text outside a known section"))
            continue
        sections[current].append((ln, stripped))
    return sections


def _parse_keys(lines, spec, section, errors):
    values, where = {}, {}
    for ln, line in lines:
        if "=" not in line:
            errors.append((ln, f"expected 'key = value' in [{section}]"))
            continue
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in spec:
            errors.append((ln, f"unknown key {key!r} in [{section}]"))
            continue
        if key in values:
            errors.append((ln, f"duplicate key {key!r}"))
            continue
        try:
            values[key] = _coerce(spec[key], raw)
            where[key] = ln
        except (ValueError, ExpressionError) as exc:
            errors.append((ln, f"{key}: {exc}"))
            where[key] = ln  # present but invalid: reported once, not also as missing
    return values, where


def parse_config(text, mode=None, estimate_bounds=True):
    """Parse and validate a config.

    ``mode`` overrides ``[run] mode``. When ``Lambda`` or ``gamma`` is absent
    but the expression is present, the bound is estimated on a probe grid
    (see :func:`estimate_sup`) and ``bounds_estimated`` is set.
    """
    errors = []
    sections = _split_sections(text, errors)
    problem, p_line = _parse_keys(sections.get("problem", []), _PROBLEM_KEYS, "problem", errors)
    run, r_line = _parse_keys(sections.get("run", []), _RUN_KEYS, "run", errors)
    sweep, s_line = _parse_keys(sections.get("sweep", []), _SWEEP_KEYS, "sweep", errors)

    mode = mode or run.get("mode")
    if mode is None:
        errors.append((0, "missing key 'mode' in [run]"))
    elif mode not in MODES:
        errors.append((r_line.get("mode", 0), f"unknown mode {mode!r}; expected one of {', '.join(MODES)}"))
        mode = None

    domain = None
    if "domain" in sections and sections["domain"]:
        dlines = sections["domain"]
        try:
            domain = parse_domain_literal([line for _, line in dlines])
        except DomainError as exc:
            errors.append((dlines[0][0], f"domain: {exc}"))
    n = problem.get("n", domain.dimension if domain is not None else 3)
    if domain is not None and domain.dimension != n:
        errors.append((p_line.get("n", 0), f"n = {n} does not match the domain dimension {domain.dimension}"))

    seen = {"problem": p_line, "run": r_line, "sweep": s_line}

    def need(key, table, section):
        if key not in table and key not in seen[section]:
            errors.append((0, f"missing key {key!r} in [{section}] (required for mode {mode})"))

    base = sweep.get("base", "solve")
    if base not in SWEEP_BASES:
        errors.append((s_line.get("base", 0), f"sweep base must be one of {', '.join(SWEEP_BASES)}"))
    effective = base if mode == "sweep" else mode
    swept = {k for k in SWEEPABLE if k in sweep}

    if mode in ("solve", "shifted", "deform", "sweep", "certify"):
        if domain is None:
            errors.append((0, "missing [domain] section"))
        if "mesh_size" not in run and mode != "certify" and "mesh_size" not in swept:
            need("mesh_size", run, "run")
    if effective in ("solve", "certify"):
        need("R", problem, "problem")
        need("S", problem, "problem")
    required = {"shifted": ("lambda",), "deform": ("lambda", "d")}.get(effective, ())
    for key in required:
        if key not in swept:
            need(key, problem, "problem")
    if mode == "sweep" and not swept:
        errors.append((0, "[sweep] declares no parameter ranges"))

    for key, table, lines_ in (("mesh_size", run, r_line), ("tol", run, r_line), ("d", problem, p_line)):
        if key in table and not table[key] > 0:
            errors.append((lines_[key], f"{key} must be positive"))
    for key in ("Lambda", "gamma"):
        if key in problem and problem[key] < 0:
            errors.append((p_line[key], f"{key} must be nonnegative"))
    if "max_iter" in run and run["max_iter"] < 1:
        errors.append((r_line["max_iter"], "max_iter must be at least 1"))
    if problem.get("theorem", "T1") not in ("T1", "T2"):
        errors.append((p_line["theorem"], "theorem must be T1 or T2"))
    if problem.get("iteration_coefficient", "eq3") not in ("eq3", "eq5"):
        errors.append((p_line["iteration_coefficient"], "iteration_coefficient must be eq3 or eq5"))
    for key in ("R", "S"):
        if key in problem and parse_expression(problem[key]).max_axis >= n:
            errors.append((p_line[key], f"{key} uses a coordinate beyond dimension {n}"))
    if errors:
        raise ConfigError(sorted(errors, key=lambda e: e[0]))

    cfg = ExperimentConfig(
        mode=mode,
        domain=domain,
        n=n,
        R=problem.get("R"),
        S=problem.get("S"),
        Lam=problem.get("Lambda"),
        gamma=problem.get("gamma"),
        bounds_estimated=problem.get("bounds_estimated", False),
        c=problem.get("c", 0.0),
        lam=problem.get("lambda"),
        d=problem.get("d"),
        theorem=problem.get("theorem", "T1"),
        coefficient=problem.get("iteration_coefficient", "eq3"),
        mesh_size=run.get("mesh_size"),
        tol=run.get("tol", 1e-9),
        max_iter=run.get("max_iter", 200),
        seed=run.get("seed", 0),
        output_dir=run.get("output_dir"),
        override_certificate=run.get("override_certificate", False),
        check_resolution=run.get("check_resolution", True),
        green_rtol=run.get("green_rtol", 1e-4),
        sweep_base=base,
        sweep=tuple((k, sweep[k]) for k in SWEEPABLE if k in sweep),
    )
    if estimate_bounds and domain is not None:
        updates = {}
        for expr_key, bound_key, attr in (("R", "Lambda", "Lam"), ("S", "gamma", "gamma")):
            if bound_key not in problem and problem.get(expr_key) is not None:
                updates[attr] = SAFETY_FACTOR * estimate_sup(problem[expr_key], domain)
        if updates:
            cfg = replace(cfg, bounds_estimated=True, **updates)
    return cfg


def load_config(path, mode=None):
    with open(path) as fh:
        return parse_config(fh.read(), mode=mode)


def probe_points(domain, per_axis=PROBE_POINTS):
    """Points of a ``per_axis^3``-sized lattice over the bounding box lying in the closed domain.

    In dimension n the per-axis count is reduced so the total stays near
    ``per_axis^3``.
    """
    lo, hi = domain.bounding_box()
    n = domain.dimension
    m = max(2, int(round(per_axis ** (3.0 / n))))
    axes = [np.linspace(lo[a], hi[a], m) for a in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    return pts[domain.signed_distance(pts) <= 1e-12]


def estimate_sup(expression, domain, per_axis=PROBE_POINTS):
    """Sampled ``sup |expression|`` over the probe lattice of ``domain`` (no safety factor)."""
    vals = parse_expression(expression)(probe_points(domain, per_axis))
    if vals.size == 0 or not np.all(np.isfinite(vals)):
        raise ValueError(f"cannot estimate sup of {expression!r} on the domain")
    return float(np.max(np.abs(vals)))
