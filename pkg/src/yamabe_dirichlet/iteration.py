"""Picard iteration for the gradient-form Yamabe Dirichlet problem.

The unknown ``f`` solves

    Delta f = -(1/(2(n-1))) [R e^{2f} + (n-1)(n-2) |grad f|^2] + S   in Omega,
    f = c                                                            on the boundary.

Each Picard step freezes the bracket at the previous iterate and solves one
linear Poisson problem. The conformal factor ``u = exp((n-2) f / 2)`` turns
this into the power-nonlinearity form

    Delta u = ((n-2)/2) S u - ((n-2)/(4(n-1))) R u^{(n+2)/(n-2)},

because ``Delta u = ((n-2)/2) u (Delta f + ((n-2)/2)|grad f|^2)`` and the
gradient terms cancel exactly. ``tests/test_iteration.py`` re-derives this
with sympy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .expressions import Expression, parse_expression
from .geometry import check_admissibility, largest_admissible_scale, scale_domain
from .poisson import ScalarField, build_grid, gradient, laplacian, norms, solve_dirichlet

__all__ = [
    "CertificateError",
    "ProblemSpecError",
    "ProblemSpec",
    "StepRecord",
    "IterationTrace",
    "Solution",
    "DeformResult",
    "gradient_coefficient",
    "picard_step",
    "run_iteration",
    "nonlinear_residual",
    "to_standard_form",
    "standard_residual",
    "chain_rule_defect",
    "solve_shifted",
    "constant_curvature_deform",
    "gradient_slack",
]

COEFFICIENTS = ("eq3", "eq5")
SHIFTED_LAMBDA = 0.25


class CertificateError(RuntimeError):
    """Raised when a run is requested outside the certified regime."""

    def __init__(self, message, report=None, smallest_admissible=None):
        super().__init__(message)
        self.report = report
        self.smallest_admissible = smallest_admissible


class ProblemSpecError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients and certified bounds of one Dirichlet problem.

    ``R`` and ``S`` are expressions in the coordinates (or numbers). ``Lam``
    and ``gamma`` must bound ``|R|`` and ``|S|``; they feed the certificate
    and are checked against the grid values before a run. ``coefficient``
    selects the gradient coefficient used by the iteration: ``"eq3"`` is
    ``(n-1)(n-2)``, ``"eq5"`` is 1.
    """

    domain: object
    R: Expression
    S: Expression
    Lam: float
    gamma: float
    boundary_c: float = 0.0
    curvature: float | None = None
    coefficient: str = "eq3"

    def __post_init__(self):
        object.__setattr__(self, "R", parse_expression(self.R))
        object.__setattr__(self, "S", parse_expression(self.S))
        object.__setattr__(self, "Lam", float(self.Lam))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "boundary_c", float(self.boundary_c))
        if not (self.Lam >= 0 and self.gamma >= 0):
            raise ProblemSpecError("Lambda and gamma must be nonnegative")
        if self.coefficient not in COEFFICIENTS:
            raise ProblemSpecError(f"coefficient must be one of {COEFFICIENTS}")
        n = self.dimension
        for name in ("R", "S"):
            expr = getattr(self, name)
            if expr.max_axis >= n:
                raise ProblemSpecError(f"{name} = {expr.text!r} uses a coordinate beyond dimension {n}")

    @property
    def dimension(self):
        return self.domain.dimension

    def coefficient_values(self, grid):
        return self.R(grid.points), self.S(grid.points)

    def check_bounds(self, grid):
        """Raise :class:`ProblemSpecError` if ``|R| > Lam`` or ``|S| > gamma`` at a node."""
        R, S = self.coefficient_values(grid)
        for name, vals, bound in (("R", R, self.Lam), ("S", S, self.gamma)):
            if not np.all(np.isfinite(vals)):
                raise ProblemSpecError(f"{name} is not finite at every grid node")
            peak = float(np.max(np.abs(vals)))
            if peak > bound * (1 + 1e-12) + 1e-300:
                label = "Lambda" if name == "R" else "gamma"
                raise ProblemSpecError(f"sup|{name}| = {peak:.6g} at grid nodes exceeds {label} = {bound:.6g}")
        return R, S


def gradient_coefficient(n, coefficient="eq3"):
    return (n - 1.0) * (n - 2.0) if coefficient == "eq3" else 1.0


def gradient_slack(mesh_size):
    """Allowance between the sup-gradient of an iterate and ``K`` on a grid."""
    return 0.05 + 10.0 * mesh_size


# --------------------------------------------------------------------------
# single step and residuals


def _bracket_rhs(f, R, S, n, coef, grad=None):
    grad = gradient(f).values if grad is None else grad
    g2 = np.sum(grad * grad, axis=1)
    with np.errstate(over="ignore", invalid="ignore"):
        return -(R * np.exp(2.0 * f.values) + coef * g2) / (2.0 * (n - 1.0)) + S


def picard_step(f_k, spec, grid=None, coefficients=None):
    """One Picard step from ``f_k`` (zero boundary) to ``f_{k+1}``.

    ``coefficients`` may carry precomputed node values ``(R, S)``.
    """
    grid = f_k.grid if grid is None else grid
    R, S = spec.coefficient_values(grid) if coefficients is None else coefficients
    n = grid.dimension
    rhs = _bracket_rhs(f_k, R, S, n, gradient_coefficient(n, spec.coefficient))
    if not np.all(np.isfinite(rhs)):
        raise FloatingPointError("right-hand side overflowed")
    return solve_dirichlet(grid, rhs, 0.0, x0=f_k.values)


def nonlinear_residual(f, spec, coefficient="eq3"):
    """Sup over interior nodes of the gradient-form equation residual."""
    grid = f.grid
    R, S = spec.coefficient_values(grid)
    n = grid.dimension
    rhs = _bracket_rhs(f, R, S, n, gradient_coefficient(n, coefficient))
    return float(np.max(np.abs(laplacian(f) - rhs)))


def to_standard_form(f):
    """``u = exp((n-2) f / 2)`` with the matching boundary value."""
    n = f.grid.dimension
    a = (n - 2.0) / 2.0
    b = f.boundary
    if b is None:
        ub = 1.0
    elif callable(b):
        ub = lambda p: np.exp(a * np.asarray(b(p), dtype=float))  # noqa: E731
    else:
        ub = math.exp(a * float(b))
    return ScalarField(f.grid, np.exp(a * f.values), ub)


def standard_residual(u, spec, form="substituted", region="all"):
    """Sup residual of the power-nonlinearity equation for ``u``.

    ``form="substituted"`` uses the coefficients obtained by substituting
    ``u = exp((n-2)f/2)`` into the gradient form:
    ``Delta u - ((n-2)/2) S u + ((n-2)/(4(n-1))) R u^{(n+2)/(n-2)}``.
    ``form="printed"`` uses ``Delta u - S u + ((n-2)/(2(n-1))) R u^{(n+2)/(n-2)}``,
    which the gradient form does not reduce to; it is kept for comparison.
    ``region="regular"`` restricts the sup to nodes without cut legs.
    """
    grid = u.grid
    n = grid.dimension
    R, S = spec.coefficient_values(grid)
    if np.any(u.values <= 0):
        raise ValueError("standard form needs u > 0")
    p = (n + 2.0) / (n - 2.0)
    if form == "substituted":
        a, b = (n - 2.0) / 2.0, (n - 2.0) / (4.0 * (n - 1.0))
    elif form == "printed":
        a, b = 1.0, (n - 2.0) / (2.0 * (n - 1.0))
    else:
        raise ValueError("form must be 'substituted' or 'printed'")
    res = laplacian(u) - a * S * u.values + b * R * u.values**p
    return float(np.max(np.abs(_region(grid, res, region)), initial=0.0))


def _region(grid, values, region):
    if region == "all":
        return values
    if region == "regular":
        return values[grid.regular_mask]
    raise ValueError("region must be 'all' or 'regular'")


def chain_rule_defect(f, region="all"):
    """Sup of ``Delta_h u - a u (Delta_h f + a |grad_h f|^2)`` with ``u = e^{a f}``, ``a = (n-2)/2``.

    The chain rule makes this vanish for smooth fields; on the grid it is the
    discretisation error of the change of variables. Together with the
    gradient-form residual it bounds the standard-form residual:
    ``standard_residual <= a max(u) nonlinear_residual + chain_rule_defect``.
    """
    n = f.grid.dimension
    a = (n - 2.0) / 2.0
    u = to_standard_form(f)
    g = gradient(f).values
    expected = a * u.values * (laplacian(f) + a * np.sum(g * g, axis=1))
    return float(np.max(np.abs(_region(f.grid, laplacian(u) - expected, region)), initial=0.0))


# --------------------------------------------------------------------------
# the iteration


@dataclass(frozen=True)
class StepRecord:
    k: int
    sup_grad: float
    diff_h10: float | None
    diff_l2: float | None
    poincare_ratio: float | None
    ratio: float | None
    residual: float


@dataclass
class IterationTrace:
    """Per-step diagnostics. Row ``k`` describes ``f_k``; ``diff_*`` refer to
    ``f_k - f_{k-1}`` and ``ratio`` to ``diff_h10_k / diff_h10_{k-1}``."""

    steps: list = field(default_factory=list)
    stop_reason: str = ""

    def __len__(self):
        return len(self.steps)

    @property
    def ratios(self):
        return [(s.k, s.ratio) for s in self.steps if s.ratio is not None]

    @property
    def max_sup_grad(self):
        return max(s.sup_grad for s in self.steps)

    def max_ratio(self, k_min=3):
        vals = [r for k, r in self.ratios if k >= k_min]
        return max(vals) if vals else None

    def rows(self):
        for s in self.steps:
            yield (s.k, s.sup_grad, s.diff_h10, s.diff_l2, s.poincare_ratio, s.ratio, s.residual)


@dataclass
class Solution:
    """Result of a run. ``f`` carries boundary value ``c`` and ``u`` its
    standard-form counterpart."""

    f: ScalarField
    u: ScalarField
    certificate: object
    trace: IterationTrace
    spec: ProblemSpec
    mesh_size: float
    tol: float
    converged: bool
    certified: bool
    override: bool
    residual: float
    residual_eq3: float
    gradient_violations: list = field(default_factory=list)

    @property
    def grid(self):
        return self.f.grid

    @property
    def iterations(self):
        return self.trace.steps[-1].k

    @property
    def K(self):
        return self.certificate.K

    @property
    def q(self):
        return self.certificate.q

    @property
    def label(self):
        return "certified" if self.certified else "uncertified"


def run_iteration(
    spec,
    mesh_size,
    tol=1e-9,
    max_iter=200,
    *,
    override_certificate=False,
    theorem="T1",
    certificate=None,
    grid=None,
    seed=0,
    check_resolution=True,
):
    """Picard iteration from ``f_0 = 0`` with zero boundary data.

    Stops when the H^1_0 seminorm of the last difference is ``<= tol``; the
    run counts as converged only if the final sup residual is also
    ``<= 10 * tol``. Exhausting ``max_iter`` returns a non-converged
    :class:`Solution` rather than raising. When the certificate passed, every
    iterate's sup-gradient is compared with ``K + gradient_slack(h)`` and any
    excess is listed in ``gradient_violations``.

    Raises :class:`CertificateError` if the certificate fails and
    ``override_certificate`` is false.
    """
    if spec.boundary_c != 0.0:
        raise ProblemSpecError("run_iteration works with zero boundary data; use solve_shifted")
    if certificate is None:
        certificate = check_admissibility(spec.domain, spec.Lam, spec.gamma, theorem=theorem, seed=seed)
    if not certificate.passed and not override_certificate:
        raise CertificateError(
            f"domain is not certified ({certificate.clause}: violated {certificate.violated_bound})",
            report=certificate,
        )
    if grid is None:
        grid = build_grid(spec.domain, mesh_size, check_resolution=check_resolution)
    h = grid.mesh_size
    R, S = spec.check_bounds(grid)
    n = grid.dimension
    coef_name = spec.coefficient
    certified = bool(certificate.passed)
    K_limit = certificate.K + gradient_slack(h) if (certified and certificate.K is not None) else None

    f = ScalarField(grid, np.zeros(grid.size), 0.0)
    trace = IterationTrace()
    trace.steps.append(StepRecord(0, 0.0, None, None, None, None, nonlinear_residual(f, spec, coef_name)))
    violations = []
    prev_h10 = None
    for k in range(1, max_iter + 1):
        try:
            f_new = picard_step(f, spec, grid, coefficients=(R, S))
        except (FloatingPointError, ValueError):
            trace.stop_reason = "diverged"
            break
        diff = ScalarField(grid, f_new.values - f.values, 0.0)
        dn = norms(diff)
        h10 = dn.h10_seminorm
        poincare = dn.l2_norm / h10 if h10 > 0 else None
        ratio = h10 / prev_h10 if (prev_h10 is not None and prev_h10 > 0) else None
        sup_grad = norms(gradient(f_new)).sup_norm
        res = nonlinear_residual(f_new, spec, coef_name)
        trace.steps.append(StepRecord(k, sup_grad, h10, dn.l2_norm, poincare, ratio, res))
        if K_limit is not None and sup_grad > K_limit:
            violations.append((k, sup_grad, K_limit))
        f, prev_h10 = f_new, h10
        if not math.isfinite(h10):
            trace.stop_reason = "diverged"
            break
        if h10 <= tol:
            trace.stop_reason = "converged"
            break
    else:
        trace.stop_reason = "max_iter"

    final_res = trace.steps[-1].residual
    converged = trace.stop_reason == "converged" and final_res <= 10.0 * tol
    if trace.stop_reason == "converged" and not converged:
        trace.stop_reason = "residual_above_tolerance"
    res_eq3 = final_res if coef_name == "eq3" else nonlinear_residual(f, spec, "eq3")
    return Solution(
        f=f,
        u=to_standard_form(f),
        certificate=certificate,
        trace=trace,
        spec=spec,
        mesh_size=h,
        tol=tol,
        converged=converged,
        certified=certified,
        override=bool(override_certificate and not certified),
        residual=final_res,
        residual_eq3=res_eq3,
        gradient_violations=violations,
    )


# --------------------------------------------------------------------------
# boundary constant and constant curvature


def solve_shifted(spec, mesh_size, tol=1e-9, max_iter=200, **kwargs):
    """Solve with boundary value ``c`` and constant curvature ``lambda``.

    With ``v = f - c`` the problem becomes a zero-boundary one with
    ``R = lambda e^{2c}``; the certificate is the one for ``Lambda = 1/4``,
    which does not depend on ``c``. Requires ``|lambda| e^{2c} <= 1/4``.
    """
    lam = spec.curvature
    if lam is None:
        raise ProblemSpecError("solve_shifted needs a curvature value")
    c = spec.boundary_c
    effective = lam * math.exp(2.0 * c)
    if abs(effective) > SHIFTED_LAMBDA * (1 + 1e-12):
        raise ProblemSpecError(
            f"|lambda| e^(2c) = {abs(effective):.6g} exceeds 1/4; rescale lambda to at most "
            f"e^(-2c)/4 = {SHIFTED_LAMBDA * math.exp(-2.0 * c):.6g} in magnitude"
        )
    inner = replace(spec, R=parse_expression(effective), Lam=SHIFTED_LAMBDA, boundary_c=0.0, curvature=None)
    kwargs.setdefault("theorem", "T2")
    sol = run_iteration(inner, mesh_size, tol, max_iter, **kwargs)
    f = ScalarField(sol.grid, sol.f.values + c, c)
    return replace(sol, f=f, u=to_standard_form(f), spec=spec)


@dataclass
class DeformResult:
    """Constant-curvature run on ``d * Omega`` and its pull-back to ``Omega``.

    ``pulled_back`` holds ``f(d x)`` on a grid of ``Omega``. Substituting it
    into the gradient-form equation on ``Omega`` gives curvature
    ``pullback_curvature = lambda d^2``; ``stated_curvature`` is ``lambda / d^2``.
    The residuals are sup-norms on the respective grids.
    """

    solution: Solution
    pulled_back: ScalarField
    d: float
    lam: float
    stated_curvature: float
    pullback_curvature: float
    residual_domain: float
    residual_pulled_back: float
    residual_stated: float

    @property
    def amplification_estimate(self):
        """Residual bound obtained by multiplying the domain residual by ``1/d^2``."""
        return self.residual_domain / self.d**2


def constant_curvature_deform(base_domain, d, lam, mesh_size, tol=1e-9, max_iter=200, seed=0,
                              coefficient="eq3"):
    """Solve with ``R = lambda``, ``S = 0`` on ``d * Omega`` and pull back to ``Omega``.

    ``mesh_size`` is the spacing on ``Omega``; the solve uses the same lattice
    scaled by ``d``. Raises :class:`CertificateError` carrying an estimate of
    the largest admissible scale when ``d * Omega`` is not certified.
    """
    d = float(d)
    lam = float(lam)
    if not d > 0:
        raise ValueError("d must be positive")
    scaled = scale_domain(base_domain, d)
    cert = check_admissibility(scaled, abs(lam), 0.0, seed=seed)
    if not cert.passed:
        best = largest_admissible_scale(base_domain, abs(lam), 0.0, d_max=d, seed=seed)
        raise CertificateError(
            f"d * Omega is not certified for |lambda| = {abs(lam):.6g} "
            f"({cert.clause}: violated {cert.violated_bound}); admissible for d <= {best:.6g}",
            report=cert,
            smallest_admissible=best,
        )
    base_grid = build_grid(base_domain, mesh_size)
    grid = base_grid.scaled(d, scaled)
    spec = ProblemSpec(scaled, lam, 0.0, abs(lam), 0.0, curvature=lam, coefficient=coefficient)
    sol = run_iteration(spec, grid.mesh_size, tol, max_iter, certificate=cert, grid=grid, seed=seed)
    pulled = ScalarField(base_grid, sol.f.values.copy(), 0.0)
    pull_spec = ProblemSpec(base_domain, lam * d * d, 0.0, abs(lam) * d * d, 0.0, coefficient=coefficient)
    stated_spec = ProblemSpec(base_domain, lam / (d * d), 0.0, abs(lam) / (d * d), 0.0, coefficient=coefficient)
    return DeformResult(
        solution=sol,
        pulled_back=pulled,
        d=d,
        lam=lam,
        stated_curvature=lam / (d * d),
        pullback_curvature=lam * d * d,
        residual_domain=sol.residual,
        residual_pulled_back=nonlinear_residual(pulled, pull_spec, coefficient),
        residual_stated=nonlinear_residual(pulled, stated_spec, coefficient),
    )
