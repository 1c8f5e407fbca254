import math

import numpy as np
import pytest
import sympy as sp

from yamabe_dirichlet.analysis import contraction_constant
from yamabe_dirichlet.geometry import Ball, Box
from yamabe_dirichlet.iteration import (
    CertificateError,
    ProblemSpec,
    ProblemSpecError,
    chain_rule_defect,
    constant_curvature_deform,
    nonlinear_residual,
    picard_step,
    run_iteration,
    solve_shifted,
    standard_residual,
    to_standard_form,
)
from yamabe_dirichlet.poisson import ScalarField, build_grid

SMALL_BALL = Ball((0, 0, 0), 0.06)


def zero_field(grid, boundary=0.0):
    return ScalarField(grid, np.zeros(grid.size), boundary)


def test_standard_form_coefficients_symbolic():
    """Substituting u = exp((n-2) f / 2) into the gradient form gives the substituted coefficients."""
    x, y, z = sp.symbols("x y z")
    R, S = sp.symbols("R S")
    n = 3
    f = sp.Function("f")(x, y, z)
    a = sp.Rational(n - 2, 2)
    u = sp.exp(a * f)
    lap = lambda w: sum(sp.diff(w, v, 2) for v in (x, y, z))  # noqa: E731
    grad2 = sum(sp.diff(f, v) ** 2 for v in (x, y, z))
    lap_f = -(R * sp.exp(2 * f) + (n - 1) * (n - 2) * grad2) / (2 * (n - 1)) + S
    # impose the equation by replacing f_xx with what it must be
    fxx = sp.solve(sp.Eq(lap(f), lap_f), sp.diff(f, x, 2))[0]
    p = sp.Rational(n + 2, n - 2)
    expr = lap(u) - a * S * u + sp.Rational(n - 2, 4 * (n - 1)) * R * u**p
    assert sp.simplify(expr.subs(sp.diff(f, x, 2), fxx)) == 0
    printed = lap(u) - S * u + sp.Rational(n - 2, 2 * (n - 1)) * R * u**p
    assert sp.simplify(printed.subs(sp.diff(f, x, 2), fxx)) != 0


def test_first_step_zero_data():
    grid = build_grid(SMALL_BALL, 0.01)
    spec = ProblemSpec(SMALL_BALL, 0, 0, 0, 0)
    assert np.all(picard_step(zero_field(grid), spec).values == 0)


@pytest.mark.parametrize("R, S", [(0.0, 0.7), (0.9, 0.0)])
def test_first_step_closed_form(R, S):
    d = SMALL_BALL.radius
    errs = []
    for h in (d / 8, d / 16):
        grid = build_grid(SMALL_BALL, h)
        f1 = picard_step(zero_field(grid), ProblemSpec(SMALL_BALL, R, S, abs(R), abs(S)))
        r2 = np.sum(grid.points**2, axis=1)
        # constant right-hand side -R/4 + S on a ball of radius d
        exact = (-R / 4 + S) * (r2 - d * d) / 6
        errs.append(np.max(np.abs(f1.values - exact)))
    assert errs[1] <= 2 * (d / 16) ** 2 * max(abs(R), abs(S))


def test_residual_of_exact_constant_solution():
    grid = build_grid(SMALL_BALL, 0.01)
    assert nonlinear_residual(zero_field(grid), ProblemSpec(SMALL_BALL, 0, 0, 0, 0)) == 0.0
    r0 = 0.8
    spec = ProblemSpec(SMALL_BALL, r0, r0 / 4, r0, r0 / 4)
    assert nonlinear_residual(zero_field(grid), spec) == pytest.approx(0.0, abs=1e-15)


def test_standard_form_of_zero():
    grid = build_grid(SMALL_BALL, 0.01)
    u = to_standard_form(zero_field(grid))
    assert np.all(u.values == 1.0) and u.boundary == 1.0


def test_zero_problem_converges_immediately():
    sol = run_iteration(ProblemSpec(SMALL_BALL, 0, 0, 0, 0), 0.01)
    assert sol.converged and sol.iterations == 1
    assert np.all(sol.f.values == 0) and sol.residual == 0.0


def test_certified_run_contracts():
    sol = run_iteration(ProblemSpec(SMALL_BALL, 1, 0, 1, 0), 0.004, tol=1e-10)
    assert sol.certified and sol.converged
    q = contraction_constant(sol.certificate.geometry.slab_diameter, 1.0, sol.K, 3)
    assert q == pytest.approx(sol.q)
    assert all(r <= q + 0.05 for k, r in sol.trace.ratios if k >= 2)
    assert sol.residual <= 1e-9
    assert sol.trace.max_sup_grad <= sol.K + 0.05 + 10 * 0.004
    assert np.all(sol.u.values > 0)


def test_mesh_refinement_agreement():
    spec = ProblemSpec(SMALL_BALL, "cos(20*x)", -0.5, 1, 0.5)
    h = 0.006
    coarse = run_iteration(spec, h)
    fine = run_iteration(spec, h / 2)
    fine_idx = {tuple(p): i for i, p in enumerate(np.round(fine.grid.points / (h / 2)).astype(int))}
    shared = [(i, fine_idx[tuple(2 * p)]) for i, p in enumerate(np.round(coarse.grid.points / h).astype(int))
              if tuple(2 * p) in fine_idx]
    ci, fi = np.array(shared).T
    diff = np.max(np.abs(coarse.f.values[ci] - fine.f.values[fi]))
    scale = np.max(np.abs(fine.f.values))
    assert diff <= 0.05 * scale
    assert diff <= 10 * h * h


def test_standard_residual_consistency():
    spec = ProblemSpec(SMALL_BALL, 1, 0, 1, 0)
    sol = run_iteration(spec, 0.004, tol=1e-10)
    res = standard_residual(sol.u, spec, region="regular")
    a = 0.5
    bound = a * sol.u.values.max() * sol.residual + chain_rule_defect(sol.f, "regular")
    assert res <= bound * (1 + 1e-6) + 1e-12
    # the printed coefficients are not the ones the substitution yields
    assert standard_residual(sol.u, spec, form="printed") > 100 * res


def test_uncertified_requires_override():
    big = Ball((0, 0, 0), 1.0)
    spec = ProblemSpec(big, 1, 0.5, 1, 0.5)
    with pytest.raises(CertificateError):
        run_iteration(spec, 0.2)
    sol = run_iteration(spec, 0.2, override_certificate=True, max_iter=5)
    assert sol.label == "uncertified" and sol.override


def test_max_iter_returns_trace():
    spec = ProblemSpec(SMALL_BALL, "cos(20*x)", -0.5, 1, 0.5)
    sol = run_iteration(spec, 0.01, tol=1e-14, max_iter=2)
    assert not sol.converged and sol.trace.stop_reason == "max_iter"
    assert len(sol.trace) == 3  # f_0, f_1, f_2


def test_bounds_checked_against_coefficients():
    spec = ProblemSpec(SMALL_BALL, "2 + x", 0, 1, 0)
    with pytest.raises(ProblemSpecError):
        run_iteration(spec, 0.01)


def test_mixed_sign_box_run():
    box = Box((-0.02, -0.02, -0.02), (0.02, 0.02, 0.02))
    sol = run_iteration(ProblemSpec(box, "-1 + 0*x", "0.4*sin(50*y)", 1, 0.4), 0.0025)
    assert sol.certified and sol.converged
    assert all(r < 1 for _, r in sol.trace.ratios)


def test_shifted_zero_curvature():
    spec = ProblemSpec(Ball((0, 0, 0), 0.2), 0, 0, 0, 0, boundary_c=1.5, curvature=0.0)
    sol = solve_shifted(spec, 0.025)
    assert np.all(sol.f.values == 1.5) and sol.f.boundary == 1.5


def test_shifted_large_boundary_constant():
    c = 5.0
    ball = Ball((0, 0, 0), 0.2)
    ref = solve_shifted(ProblemSpec(ball, 0, 0, 0, 0, boundary_c=0.0, curvature=0.25), 0.025)
    sol = solve_shifted(ProblemSpec(ball, 0, 0, 0, 0, boundary_c=c, curvature=0.25 * math.exp(-2 * c)), 0.025)
    assert sol.converged and sol.f.boundary == c
    assert np.allclose(sol.f.boundary_values(), c, atol=1e-8)
    assert sol.certificate.to_dict() == ref.certificate.to_dict()
    assert np.allclose(sol.f.values - c, ref.f.values, atol=1e-12)
    assert np.all(sol.u.values > 0)


def test_shifted_rejects_large_curvature():
    spec = ProblemSpec(Ball((0, 0, 0), 0.2), 0, 0, 0, 0, boundary_c=1.0, curvature=0.1)
    with pytest.raises(ProblemSpecError, match="1/4"):
        solve_shifted(spec, 0.025)


def test_deform_zero_curvature():
    res = constant_curvature_deform(Ball((0, 0, 0), 1.0), 0.05, 0.0, 0.125)
    assert np.all(res.solution.f.values == 0)
    assert res.stated_curvature == 0.0


@pytest.mark.parametrize("lam", [0.01, -0.01])
def test_deform_curvature_sign(lam):
    res = constant_curvature_deform(Ball((0, 0, 0), 1.0), 0.05, lam, 0.125)
    assert res.stated_curvature == pytest.approx(4.0 * np.sign(lam), rel=1e-14)
    assert res.solution.converged
    assert res.residual_domain <= 1e-8
    # the pulled-back field satisfies the equation with curvature lambda d^2
    assert res.residual_pulled_back <= 1e-12


def test_deform_rejects_large_scale():
    with pytest.raises(CertificateError) as info:
        constant_curvature_deform(Ball((0, 0, 0), 1.0), 0.9, 1.0, 0.125)
    assert 0 < info.value.smallest_admissible < 0.9
