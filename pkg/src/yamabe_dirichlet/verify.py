"""Built-in verification suite behind the ``verify`` subcommand.

Each check returns a :class:`CheckResult`. Checks tagged with a criterion
number reproduce one acceptance criterion end to end; the others test module
invariants (maximum principle, linearity, monotonicity of the certificate,
and so on). ``run_suite(fast=True)`` runs smaller versions of the same checks.
"""

from __future__ import annotations

import functools
import itertools
import math
import time
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import analysis
from .analysis import EVANS_CONSTANT, MajorantParams, explicit_K_bound, smallest_fixed_point
from .geometry import (
    Ball,
    Box,
    DomainError,
    Polytope,
    check_admissibility,
    diameter,
    largest_admissible_scale,
    regular_tetrahedron,
    scale_domain,
    slab_diameter,
)
from .iteration import (
    ProblemSpec,
    chain_rule_defect,
    constant_curvature_deform,
    gradient_slack,
    run_iteration,
    solve_shifted,
    standard_residual,
)
from .poisson import build_grid, solve_dirichlet

__all__ = [
    "CheckResult",
    "run_suite",
    "check_poisson_order",
    "check_certificate_arithmetic",
    "check_fixed_point",
    "contraction_runs",
    "check_contraction",
    "check_gradient_bound",
    "check_green_constants",
    "check_shifted",
    "check_deform",
    "check_poincare_positivity",
    "dense_scan_root",
    "ratio_violations",
]

ORDER_WINDOW = (3.2, 4.8)
RATIO_SLACK = 0.05
POINCARE_TOL = 1e-6
EVANS_CEILING = 16.47


@dataclass
class CheckResult:
    name: str
    criterion: int | None
    passed: bool
    detail: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict, repr=False)

    def line(self):
        tag = f"[{self.criterion}] " if self.criterion else ""
        return f"{'PASS' if self.passed else 'FAIL'} {tag}{self.name}: {self.detail} ({self.seconds:.1f} s)"


def _timed(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    return wrapper


# --------------------------------------------------------------------------
# criterion 1: Poisson order


def _order_study(domain, exact, source, mesh_sizes):
    errors, times, nodes = [], [], []
    for h in mesh_sizes:
        t0 = time.perf_counter()
        grid = build_grid(domain, h)
        u = solve_dirichlet(grid, source(grid.points), exact)
        times.append(time.perf_counter() - t0)
        errors.append(float(np.max(np.abs(u.values - exact(grid.points)))))
        nodes.append(grid.size)
    ratios = [errors[i] / errors[i + 1] for i in range(len(errors) - 1)]
    return errors, ratios, times, nodes


@_timed
def check_poisson_order(fast=False):
    """Error ratio under mesh halving for the ball and box manufactured solutions."""
    levels = 3 if fast else 4
    ball = Ball((0.0, 0.0, 0.0), 0.5)
    box = Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    studies = {
        "ball": _order_study(
            ball,
            lambda p: 0.25 - np.sum(p * p, axis=1),
            lambda p: np.full(p.shape[0], -6.0),
            [0.5 / 2 ** (3 + i) for i in range(levels)],
        ),
        "box": _order_study(
            box,
            lambda p: np.prod(np.sin(np.pi * p), axis=1),
            lambda p: -3.0 * np.pi**2 * np.prod(np.sin(np.pi * p), axis=1),
            [1.0 / 2 ** (3 + i) for i in range(levels)],
        ),
    }
    lo, hi = ORDER_WINDOW
    ok = all(lo <= r <= hi for s in studies.values() for r in s[1])
    finest_time = max(s[2][-1] for s in studies.values())
    ok = ok and finest_time <= 60.0
    detail = "; ".join(
        f"{name} ratios " + ", ".join(f"{r:.3f}" for r in s[1]) + f" (finest {s[3][-1]} nodes, {s[2][-1]:.2f} s)"
        for name, s in studies.items()
    )
    return CheckResult("poisson_order", 1, ok, detail, data={"studies": studies})


# --------------------------------------------------------------------------
# criterion 2: certificate constants


def _mp_required(name, geom, Lam, gamma, n, Cn):
    """Independent 50-digit evaluation of a named bound."""
    mp = mpmath.mp
    C = mpmath.mpf("4.76") * mp.pi ** (mpmath.mpf(2) / 3)
    L, g = mpmath.mpf(Lam), mpmath.mpf(gamma)
    n = mpmath.mpf(n)

    def safe(num, den):
        return mpmath.inf if den == 0 else num / den

    table = {
        "volume<=1": lambda: mpmath.mpf(1),
        "volume<=(8/(C(4L+g)))^3": lambda: safe(8, C * (4 * L + g)) ** 3,
        "slab<=1": lambda: mpmath.mpf(1),
        "slab<=1.25*Vol^(1/3)": lambda: mpmath.mpf("1.25") * mpmath.mpf(geom.volume) ** (mpmath.mpf(1) / 3),
        "slab<=2/(0.75L+1)": lambda: 2 / (mpmath.mpf("0.75") * L + 1),
        "diam<=1": lambda: mpmath.mpf(1),
        "diam<=4/(C(2.5L+g))": lambda: safe(4, C * (mpmath.mpf("2.5") * L + g)),
        "diam<=4/(1.5L+sqrt2)": lambda: 4 / (mpmath.mpf("1.5") * L + mpmath.sqrt(2)),
        "radius<=1/2": lambda: mpmath.mpf("0.5"),
        "radius<=(n-1)/(Cn(2.5L+g))": lambda: safe(n - 1, mpmath.mpf(Cn) * (mpmath.mpf("2.5") * L + g)),
        "radius<=(n-1)/(1.5L+sqrt2)": lambda: (n - 1) / (mpmath.mpf("1.5") * L + mpmath.sqrt(2)),
        "volume<=(8/(C(1+g)))^3": lambda: (8 / (C * (1 + g))) ** 3,
        "diam<=4/(C(0.625+g))": lambda: 4 / (C * (mpmath.mpf("0.625") + g)),
        "radius<=(n-1)/(Cn(0.625+g))": lambda: (n - 1) / (mpmath.mpf(Cn) * (mpmath.mpf("0.625") + g)),
    }
    return table[name]()


def _rel_close(a, b, rtol):
    if math.isinf(a) or mpmath.isinf(b):
        return math.isinf(a) and mpmath.isinf(b)
    b = float(b)
    return abs(a - b) <= rtol * max(abs(b), 1e-300)


def certificate_cases():
    return [
        (Ball((0, 0, 0), 0.001), 1.0, 1.0, "T1"),
        (Box((0, 0, 0), (3, 3, 0.01)), 1.0, 0.0, "T1"),
        (Box((0, 0, 0), (0.1, 0.12, 0.08)), 0.0, 0.0, "T1"),
        (scale_domain(regular_tetrahedron(), 0.3), 0.5, 2.0, "T1"),
        (Ball((0, 0, 0, 0), 0.1), 1.0, 0.5, "T1"),
        (Ball((0.2, 0.1, 0.0), 0.2), 7.0, 0.3, "T2"),
        (Box((0, 0, 0), (0.3, 0.2, 0.25)), 0.0, 1.0, "T2"),
        (Ball((0, 0, 0, 0, 0), 0.3), 0.0, 0.0, "T2"),
        (Ball((0, 0, 0), 0.4), 2.0, 0.0, "T1"),
    ]


@_timed
def check_certificate_arithmetic(rtol=1e-12):
    with mpmath.workdps(50):
        return _certificate_arithmetic(rtol)


def _certificate_arithmetic(rtol):
    mismatches, evaluated = [], 0
    for domain, Lam, gamma, theorem in certificate_cases():
        rep = check_admissibility(domain, Lam, gamma, theorem)
        L = rep.Lam
        n = rep.dimension
        Cn = rep.majorant.C if rep.majorant.mode == "radius" else (
            analysis.ball_green_constant(n).value if n >= 4 else None
        )
        for ev in rep.clauses:
            for name, (required, actual) in ev.bounds.items():
                evaluated += 1
                ref = _mp_required(name, rep.geometry, L, gamma, n, Cn)
                if not _rel_close(required, ref, rtol):
                    mismatches.append((ev.clause, name, required, float(ref)))
            if ev.passed != all(a <= r for r, a in ev.bounds.values()):
                mismatches.append((ev.clause, "passed flag", ev.passed, None))
        # scalar constants of the reported clause
        p = rep.majorant
        s = mpmath.mpf(p.size)
        C = mpmath.mpf(p.C) if p.mode == "radius" else mpmath.mpf("4.76") * mpmath.pi ** (mpmath.mpf(2) / 3)
        if p.mode == "volume":
            kb = C * s * (4 * mpmath.mpf(L) + mpmath.mpf(gamma)) / 8
        elif p.mode == "diameter":
            kb = C * s / 4 * (mpmath.mpf("2.5") * L + mpmath.mpf(gamma))
        else:
            kb = C * s * (mpmath.mpf("2.5") * L + mpmath.mpf(gamma)) / (n - 1)
        evaluated += 2
        if not _rel_close(rep.K_bound, kb, rtol):
            mismatches.append((rep.clause, "K_bound", rep.K_bound, float(kb)))
        d = mpmath.mpf(rep.geometry.slab_diameter)
        q1 = (d * d * L * mpmath.exp(d) / 2 + mpmath.sqrt(2) * d) / (2 * (n - 1))
        if not _rel_close(rep.contraction_q, q1, rtol):
            mismatches.append((rep.clause, "contraction_q", rep.contraction_q, float(q1)))
    c_ok = _rel_close(EVANS_CONSTANT, mpmath.mpf("4.76") * mpmath.pi ** (mpmath.mpf(2) / 3), rtol)
    ok = not mismatches and c_ok
    detail = f"{evaluated} constants compared at 50 digits, {len(mismatches)} mismatches; C = {EVANS_CONSTANT:.12g}"
    return CheckResult("certificate_arithmetic", 2, ok, detail, data={"mismatches": mismatches})


# --------------------------------------------------------------------------
# criterion 3: fixed point


def dense_scan_root(p, step=1e-7, t_max=analysis.T_MAX):
    """First grid point ``t = i * step`` with ``f(t) <= t``, as a bracket.

    Equivalent to evaluating ``g = f - t`` at every grid point in order, but
    skips points that cannot be roots: ``g' >= -1`` because ``f`` is
    nondecreasing, so ``g > 0`` on ``[t, t + g(t))``. Returns ``None`` when no
    grid point up to ``t_max`` qualifies.
    """
    i = 0
    last = int(math.floor(t_max / step + 1e-9))
    prev = None
    while i <= last:
        t = i * step
        g = analysis.majorant(t, p) - t
        if g <= 0.0:
            return (prev * step if prev is not None else t, t)
        prev = i
        i = max(i + 1, int(math.floor((t + g) / step)))
        if i > last:
            break
        prev = i - 1
    return None


def fixed_point_tuples(count, seed=0, max_value=4.0):
    """Random ``(Lambda, gamma, A)`` with A inside the volume-clause size limit."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        Lam, gamma = rng.uniform(0.0, max_value, 2)
        a_max = min(1.0, 8.0 / (EVANS_CONSTANT * (4 * Lam + gamma)))
        A = a_max * (1.0 - rng.uniform(0.0, 1.0))  # in (0, a_max]
        out.append((float(Lam), float(gamma), float(A)))
    return out


@_timed
def check_fixed_point(count=1000, seed=0, tol=1e-6):
    disagreements, violations, no_root = [], [], 0
    for Lam, gamma, A in fixed_point_tuples(count, seed):
        p = MajorantParams(3, Lam, gamma, A)
        fp = smallest_fixed_point(p)
        oracle = dense_scan_root(p)
        if (oracle is None) != (not fp.exists):
            disagreements.append((Lam, gamma, A, fp.K, oracle))
        elif oracle is not None and not (oracle[0] - tol <= fp.K <= oracle[1] + tol):
            disagreements.append((Lam, gamma, A, fp.K, oracle))
        bound = explicit_K_bound(p)
        if not fp.exists:
            no_root += 1
            violations.append((Lam, gamma, A, None, bound))
        elif fp.K > bound:
            violations.append((Lam, gamma, A, fp.K, bound))
    ok = not disagreements and not violations
    detail = (
        f"{count} tuples: {len(disagreements)} disagreements with the step-1e-7 scan; "
        f"{len(violations)} violations of K <= CA(4L+g)/8 ({no_root} without any root on [0, 10])"
    )
    return CheckResult("fixed_point", 3, ok, detail,
                       data={"disagreements": disagreements, "violations": violations})


# --------------------------------------------------------------------------
# criteria 4, 5: the certified suite


def _pattern_fields(pattern, Lam, gamma, k):
    k2 = 0.5 * k
    f = lambda v: format(v, ".17g")  # noqa: E731
    L, g, k, k2 = f(Lam), f(gamma), f(k), f(k2)
    if pattern == "R>=0,S<=0":
        return f"{L}*(0.6+0.4*sin({k}*x+{k2}*y))", f"-{g}*(0.5+0.5*cos({k}*z-{k2}*x))"
    if pattern == "R<=0,S>=0":
        return f"-{L}*(0.6+0.4*cos({k}*y-{k2}*z))", f"{g}*(0.5+0.5*sin({k}*x+{k2}*z))"
    if pattern == "mixed":
        return f"{L}*sin({k}*x)*cos({k2}*y)", f"{g}*cos({k}*z+{k2}*x)"
    return f"-{L}", f"-{g}"


def contraction_configs(fast=False):
    """Certified configurations: ``(name, spec, mesh_size)``.

    Balls and boxes at 60% of the largest scale that is certified and has a
    fixed point ``K``, for several ``(Lambda, gamma)`` and sign patterns of R
    and S.
    """
    pairs = [(1.0, 0.5), (2.0, 1.0), (0.5, 0.25), (3.0, 0.5), (1.0, 1.0)]
    patterns = ["R>=0,S<=0", "R<=0,S>=0", "mixed", "constant"]
    combos = list(itertools.product(pairs, patterns))
    if fast:
        combos = combos[::4] + combos[1::9]
    out = []
    for i, ((Lam, gamma), pattern) in enumerate(combos):
        if i % 2 == 0:
            base = Ball((0.0, 0.0, 0.0), 1.0)
            s = 0.6 * largest_admissible_scale(base, Lam, gamma, require_fixed_point=True)
            shift = 0.3 * s * np.array([(i % 3) - 1, ((i // 3) % 3) - 1, 0.5])
            domain = Ball(tuple(shift), s)
            h = 2.0 * s / 20.0
        else:
            base = Box((-0.5, -0.4, -0.3), (0.5, 0.4, 0.3))
            s = 0.6 * largest_admissible_scale(base, Lam, gamma, require_fixed_point=True)
            domain = scale_domain(base, s)
            h = 0.6 * s / 16.0
        k = 2.0 * math.pi / diameter(domain)
        R, S = _pattern_fields(pattern, Lam, gamma, k)
        name = f"{domain.kind}-L{Lam:g}-g{gamma:g}-{pattern}"
        out.append((name, ProblemSpec(domain, R, S, Lam, gamma), h))
    return out


@functools.lru_cache(maxsize=2)
def contraction_runs(fast=False, tol=1e-9):
    return tuple((name, run_iteration(spec, h, tol=tol)) for name, spec, h in contraction_configs(fast))


def ratio_violations(trace, q, slack=RATIO_SLACK, k_min=3):
    """Steps ``k >= k_min`` whose ratio exceeds ``q + slack`` or is not below 1."""
    return [(k, r) for k, r in trace.ratios if k >= k_min and (r > q + slack or r >= 1.0)]


@_timed
def check_contraction(fast=False, slack=RATIO_SLACK):
    runs = contraction_runs(fast)
    bad = []
    worst = 0.0
    checked = 0
    for name, sol in runs:
        checked += sum(1 for k, _ in sol.trace.ratios if k >= 3)
        problems = []
        if not sol.certified:
            problems.append("not certified")
        if not sol.converged:
            problems.append(f"not converged ({sol.trace.stop_reason})")
        if sol.residual > 10 * sol.tol:
            problems.append(f"residual {sol.residual:.3e}")
        if sol.q is None:
            problems.append("no fixed point K")
        else:
            v = ratio_violations(sol.trace, sol.q, slack)
            if v:
                problems.append(f"ratios {v} vs q {sol.q:.4g}")
        r = sol.trace.max_ratio(2)
        if r is not None:
            worst = max(worst, r)
        if problems:
            bad.append((name, problems))
    ok = len(runs) >= (4 if fast else 20) and not bad
    detail = (
        f"{len(runs)} certified runs, {len(bad)} failing; {checked} ratios at k >= 3, largest ratio {worst:.3g}; "
        f"largest residual {max(s.residual for _, s in runs):.3g}"
    )
    return CheckResult("contraction", 4, ok, detail, data={"failures": bad})


@_timed
def check_gradient_bound(fast=False):
    runs = contraction_runs(fast)
    bad = []
    margin = math.inf
    for name, sol in runs:
        if sol.K is None:
            bad.append((name, "K missing"))
            continue
        limit = sol.K + gradient_slack(sol.mesh_size)
        peak = sol.trace.max_sup_grad
        margin = min(margin, limit - peak)
        if peak > limit or sol.gradient_violations:
            bad.append((name, peak, limit))
    ok = not bad
    detail = f"{len(runs)} runs, {len(bad)} violations of max_k sup|grad f_k| <= K + 0.05 + 10h; smallest margin {margin:.3g}"
    return CheckResult("gradient_bound", 5, ok, detail, data={"violations": bad})


# --------------------------------------------------------------------------
# criterion 6: Green constants


@_timed
def check_green_constants(rtol=1e-4):
    est = analysis.ball_green_constant(3, rtol=rtol)
    hist = est.history
    refinement = abs(hist[-1] - hist[-2]) / abs(hist[-1])
    scaling = []
    for r in (0.3, 2.5):
        for s in (0.0, 0.4, 0.8):
            direct = analysis.green_gradient_integral(3, r * s, radius=r, rtol=rtol)
            unit = analysis.green_gradient_integral(3, s, rtol=rtol)
            scaling.append(abs(direct - r * unit) / (r * unit))
    evans = analysis.evans_bound(4.0 * math.pi / 3.0)
    ok = refinement <= 1e-3 and est.value <= EVANS_CEILING and max(scaling) <= 1e-3
    detail = (
        f"C3 = {est.value:.6f} at |x| = {est.argmax_radius:.3g}, last refinement change {refinement:.2e}, "
        f"Evans bound {evans:.4f}; scaling identity max rel. error {max(scaling):.2e}"
    )
    return CheckResult("green_constants", 6, ok, detail, data={"estimate": est})


# --------------------------------------------------------------------------
# criterion 7: boundary constant


SHIFT_DOMAIN = Ball((0.0, 0.0, 0.0), 0.25)


@functools.lru_cache(maxsize=2)
def shifted_runs(fast=False):
    h = 0.5 / (16 if fast else 24)
    out = []
    for c in (-5.0, 0.0, 5.0):
        spec = ProblemSpec(SHIFT_DOMAIN, 0.0, 0.0, 0.0, 0.0, boundary_c=c, curvature=0.25 * math.exp(-2.0 * c))
        out.append((c, solve_shifted(spec, h)))
    return tuple(out)


@_timed
def check_shifted(fast=False):
    runs = shifted_runs(fast)
    certs = [sol.certificate.to_dict() for _, sol in runs]
    same_cert = all(c == certs[0] for c in certs[1:])
    trace_err = max(float(np.max(np.abs(sol.f.boundary_values() - c))) for c, sol in runs)
    converged = all(sol.converged for _, sol in runs)
    min_u = min(float(sol.u.values.min()) for _, sol in runs)
    # the substitution identity: shifting c is a constant offset of the solution
    c = 5.0
    h = runs[0][1].mesh_size
    lam = 0.25 * math.exp(-2.0 * c)
    a = solve_shifted(ProblemSpec(SHIFT_DOMAIN, 0, 0, 0, 0, boundary_c=c, curvature=lam), h)
    b = solve_shifted(ProblemSpec(SHIFT_DOMAIN, 0, 0, 0, 0, boundary_c=0.0, curvature=lam * math.exp(2 * c)), h)
    offset_err = float(np.max(np.abs(a.f.values - b.f.values - c)))
    ok = same_cert and converged and trace_err <= 1e-8 and min_u > 0 and offset_err <= 1e-9
    detail = (
        f"c in (-5, 0, 5): converged {converged}, identical certificates {same_cert} ({runs[0][1].certificate.clause}), "
        f"boundary trace error {trace_err:.1e}, min u {min_u:.3g}, shift-equivariance error {offset_err:.1e}"
    )
    return CheckResult("shifted", 7, ok, detail)


# --------------------------------------------------------------------------
# criterion 8: constant curvature by scaling


DEFORM_BASE = Ball((0.0, 0.0, 0.0), 1.0)
DEFORM_MESH = 1.0 / 16.0


@functools.lru_cache(maxsize=1)
def deform_runs():
    out = {}
    for d, lam in ((0.05, 0.01), (0.05, -0.01), (0.025, 0.0025), (0.025, 0.04)):
        out[(d, lam)] = constant_curvature_deform(DEFORM_BASE, d, lam, DEFORM_MESH)
    return out


@_timed
def check_deform():
    runs = deform_runs()
    d = 0.05
    tol = runs[(d, 0.01)].solution.tol
    lines, ok = [], True
    for lam in (0.01, -0.01):
        r = runs[(d, lam)]
        target = lam / d**2
        curv_ok = abs(r.stated_curvature - target) <= 1e-12 * abs(target)
        estimate = 10.0 * tol / d**2
        resid_ok = r.solution.converged and r.residual_stated <= estimate
        ok = ok and curv_ok and resid_ok
        lines.append(
            f"lambda={lam:+g}: curvature {r.stated_curvature:+.6g}; residual of f(dx) in the curvature-{target:+g} "
            f"equation {r.residual_stated:.3e} vs amplified bound {estimate:.1e} "
            f"({'ok' if resid_ok else 'exceeds'}); same field in the curvature-{r.pullback_curvature:+.3g} "
            f"equation {r.residual_pulled_back:.1e}"
        )
    a, b = runs[(0.05, 0.01)], runs[(0.025, 0.0025)]
    cov_curv = abs(a.stated_curvature - b.stated_curvature) <= 1e-12 * abs(a.stated_curvature)
    cov_res = abs(a.residual_stated - b.residual_stated) <= DEFORM_MESH**2
    field_gap = float(np.max(np.abs(a.pulled_back.values - b.pulled_back.values)) / np.max(np.abs(a.pulled_back.values)))
    c = runs[(0.025, 0.04)]
    twin_gap = float(np.max(np.abs(a.pulled_back.values - c.pulled_back.values)) / np.max(np.abs(a.pulled_back.values)))
    ok = ok and cov_curv and cov_res
    lines.append(
        f"(d, lambda) vs (d/2, lambda/4): curvatures equal {cov_curv}, stated residuals differ by "
        f"{abs(a.residual_stated - b.residual_stated):.1e}, pulled-back fields differ by {field_gap:.2f} (relative); "
        f"vs (d/2, 4 lambda) they differ by {twin_gap:.1e}"
    )
    return CheckResult("deform", 8, ok, "; ".join(lines), data={"runs": runs})


# --------------------------------------------------------------------------
# criterion 9: Poincare and positivity over every run of the suite


def _poincare_violations(sol):
    delta = sol.certificate.geometry.slab_diameter
    out = []
    for s in sol.trace.steps:
        if s.diff_h10 is None:
            continue
        if s.diff_l2 > delta / math.sqrt(2.0) * s.diff_h10 + POINCARE_TOL:
            out.append((s.k, s.diff_l2, s.diff_h10, delta))
    return out


@_timed
def check_poincare_positivity(fast=False):
    sols = [s for _, s in contraction_runs(fast)]
    sols += [s for _, s in shifted_runs(fast)]
    sols += [r.solution for r in deform_runs().values()]
    bad, worst, min_u, steps = [], 0.0, math.inf, 0
    for sol in sols:
        delta = sol.certificate.geometry.slab_diameter
        for s in sol.trace.steps:
            if s.poincare_ratio is not None:
                steps += 1
                worst = max(worst, s.poincare_ratio / (delta / math.sqrt(2.0)))
        bad += _poincare_violations(sol)
        min_u = min(min_u, float(sol.u.values.min()))
    ok = not bad and min_u > 0
    detail = (
        f"{len(sols)} runs, {steps} difference fields: {len(bad)} Poincare violations, "
        f"largest l2/(delta/sqrt2 * h10) {worst:.3f}; min u {min_u:.3g}"
    )
    return CheckResult("poincare_positivity", 9, ok, detail)


# --------------------------------------------------------------------------
# module invariants


@_timed
def check_maximum_principle():
    grid = build_grid(Box((0, 0, 0), (1, 0.7, 0.5)), 1 / 24)
    rng = np.random.default_rng(1)
    u = solve_dirichlet(grid, rng.uniform(0, 1, grid.size), 0.0)
    ok = float(u.values.max()) <= 0.0
    return CheckResult("maximum_principle", None, ok, f"max u = {u.values.max():.3e} for a nonnegative source")


@_timed
def check_linearity():
    grid = build_grid(Ball((0, 0, 0), 0.5), 1 / 24)
    rng = np.random.default_rng(2)
    h1, h2 = rng.normal(size=grid.size), rng.normal(size=grid.size)
    a, b = 1.7, -0.4
    lhs = solve_dirichlet(grid, a * h1 + b * h2).values
    rhs = a * solve_dirichlet(grid, h1).values + b * solve_dirichlet(grid, h2).values
    err = float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(lhs)))
    return CheckResult("linearity", None, err <= 1e-8, f"relative superposition error {err:.1e}")


def random_polytope(rng, max_faces=12):
    """Random bounded polytope around the origin, or ``None`` if rejected."""
    m = int(rng.integers(4, max_faces + 1))
    N = rng.normal(size=(m, 3))
    rows = np.column_stack([N / np.linalg.norm(N, axis=1, keepdims=True), rng.uniform(0.2, 1.0, m)])
    try:
        return Polytope.from_halfspaces(rows)
    except DomainError:
        return None


@_timed
def check_slab_vs_diameter(count=10_000, seed=3):
    rng = np.random.default_rng(seed)
    done, bad = 0, 0
    while done < count:
        P = random_polytope(rng)
        if P is None:
            continue
        done += 1
        bad += slab_diameter(P) > diameter(P)
    tet = regular_tetrahedron()
    cov = abs(slab_diameter(scale_domain(tet, 0.1)) / slab_diameter(tet) - 0.1) / 0.1
    ok = bad == 0 and cov <= 1e-6
    return CheckResult("slab_vs_diameter", None, ok,
                       f"{count} random polytopes, {bad} with slab > diameter; scaling covariance error {cov:.1e}")


@_timed
def check_certificate_monotone():
    bad = []
    for domain, Lam, gamma, theorem in certificate_cases():
        if domain.dimension > 3 and not isinstance(domain, Ball):
            continue
        base = domain if isinstance(domain, Box) is False else domain
        lo, hi = base.bounding_box()
        centre = 0.5 * (np.asarray(lo) + np.asarray(hi))
        if isinstance(base, Ball):
            shapes = [Ball(base.center, base.radius * f) for f in (1.0, 0.7, 0.3, 0.05)]
        elif isinstance(base, Box):
            half = 0.5 * (np.asarray(hi) - np.asarray(lo))
            shapes = [Box(centre - f * half, centre + f * half) for f in (1.0, 0.7, 0.3, 0.05)]
        else:
            shapes = [scale_domain(base, f) for f in (1.0, 0.7, 0.3, 0.05)]
        verdicts = [check_admissibility(s, Lam, gamma, theorem).passed for s in shapes]
        if any(verdicts[i] and not verdicts[i + 1] for i in range(len(verdicts) - 1)):
            bad.append((domain, verdicts))
    return CheckResult("certificate_monotone", None, not bad, f"{len(bad)} pass-to-fail flips under shrinking")


@_timed
def check_residual_consistency(fast=False):
    lines, ok = [], True
    name, spec, _ = contraction_configs(fast)[0]
    defects = []
    for div in (12, 24):
        h = slab_diameter(spec.domain) / div
        sol = run_iteration(spec, h)
        a = (spec.dimension - 2) / 2.0
        bound = a * float(sol.u.values.max()) * sol.residual
        std_all = standard_residual(sol.u, spec)
        std_reg = standard_residual(sol.u, spec, region="regular")
        d_all, d_reg = chain_rule_defect(sol.f), chain_rule_defect(sol.f, "regular")
        ok = ok and std_all <= bound + d_all + 1e-12 and std_reg <= bound + d_reg + 1e-12
        defects.append(d_reg)
        lines.append(f"h={h:.3g}: residual {sol.residual:.1e}, standard {std_all:.1e} (regular nodes {std_reg:.1e}), "
                     f"chain-rule defect {d_all:.1e} (regular {d_reg:.1e})")
    ratio = defects[0] / defects[1]
    ok = ok and ratio >= 3.0
    lines.append(f"regular-node defect ratio under halving {ratio:.2f}")
    return CheckResult("residual_consistency", None, ok, "; ".join(lines))


@_timed
def check_canary(fast=False):
    """The contraction check must flag ratios inside the slack when the slack is removed."""
    runs = contraction_runs(fast)
    name, sol = max(runs, key=lambda item: item[1].trace.max_ratio(2) or 0.0)
    r = sol.trace.max_ratio(2)
    corrupted_q = r - 1e-3 * max(r, 1e-12)
    with_slack = ratio_violations(sol.trace, corrupted_q, RATIO_SLACK, k_min=2)
    without = ratio_violations(sol.trace, corrupted_q, 0.0, k_min=2)

    class _Trace:
        ratios = [(3, 0.32), (4, 0.33), (5, 0.31)]

    syn_with = ratio_violations(_Trace, 0.30, RATIO_SLACK)
    syn_without = ratio_violations(_Trace, 0.30, 0.0)
    ok = not with_slack and bool(without) and not syn_with and len(syn_without) == 3
    detail = (f"run {name} with ceiling just below its largest ratio {r:.3g}: flagged {len(without)} step(s) "
              f"with slack 0, {len(with_slack)} with slack 0.05; synthetic trace: {len(syn_without)} vs {len(syn_with)}")
    return CheckResult("slack_canary", None, ok, detail)


# --------------------------------------------------------------------------


def suite(fast=False):
    """Ordered list of ``(label, callable)`` making up the suite."""
    checks = [
        ("poisson_order", lambda: check_poisson_order(fast)),
        ("certificate_arithmetic", check_certificate_arithmetic),
        ("fixed_point", lambda: check_fixed_point(100 if fast else 1000)),
        ("contraction", lambda: check_contraction(fast)),
        ("gradient_bound", lambda: check_gradient_bound(fast)),
        ("green_constants", lambda: check_green_constants()),
        ("shifted", lambda: check_shifted(fast)),
        ("deform", check_deform),
        ("poincare_positivity", lambda: check_poincare_positivity(fast)),
        ("maximum_principle", check_maximum_principle),
        ("linearity", check_linearity),
        ("slab_vs_diameter", lambda: check_slab_vs_diameter(200 if fast else 10_000)),
        ("certificate_monotone", check_certificate_monotone),
        ("residual_consistency", lambda: check_residual_consistency(fast)),
        ("slack_canary", lambda: check_canary(fast)),
    ]
    return checks


def run_suite(fast=False, report=None):
    """Run every check; ``report`` is called with each result as it finishes."""
    results = []
    for label, fn in suite(fast):
        try:
            res = fn()
        except Exception as exc:  # a crashing check is a failing check
            res = CheckResult(label, None, False, f"raised {type(exc).__name__}: {exc}")
        results.append(res)
        if report is not None:
            report(res)
    return results
