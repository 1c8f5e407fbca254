import math

import mpmath
import numpy as np
import pytest

from yamabe_dirichlet.analysis import (
    EVANS_CONSTANT,
    MajorantParams,
    ball_green_constant,
    ball_green_function,
    ball_green_gradient,
    contraction_constant,
    evans_bound,
    explicit_K_bound,
    green_gradient_integral,
    majorant,
    smallest_fixed_point,
)

C_ROUNDED = 10.2102  # rounded value quoted in the worked examples


def test_evans_constant():
    assert EVANS_CONSTANT == pytest.approx(10.2102, abs=2e-4)
    assert evans_bound(1.0) == pytest.approx(EVANS_CONSTANT, rel=1e-15)
    assert evans_bound(4 * math.pi / 3) == pytest.approx(16.46, abs=5e-3)
    assert evans_bound(1e-6) == pytest.approx(0.102102, abs=2e-6)


def test_majorant_values():
    p0 = MajorantParams(3, 0.0, 0.0, 0.5)
    assert majorant(0.0, p0) == 0.0
    p = MajorantParams(3, 1.3, 0.7, 0.2)
    assert majorant(0.0, p) == pytest.approx(p.C * 0.2 * 2.0 / 4.0)


def test_majorant_example_high_precision():
    p = MajorantParams(3, 1.0, 1.0, 0.05, C=C_ROUNDED)
    with mpmath.workdps(50):
        ref = mpmath.mpf(C_ROUNDED) * mpmath.mpf("0.05") / 4 * (mpmath.exp(mpmath.mpf("0.0625")) + 2)
        assert majorant(1.0, p) == pytest.approx(float(ref), rel=1e-14)
    assert majorant(1.0, p) == pytest.approx(0.3911, abs=1e-4)


def test_fixed_point_trivial_and_example():
    assert smallest_fixed_point(MajorantParams(3, 0.0, 0.0, 0.3)).K == 0.0
    p = MajorantParams(3, 1.0, 1.0, 0.05, C=C_ROUNDED)
    K = smallest_fixed_point(p).K
    with mpmath.workdps(40):
        a = mpmath.mpf(C_ROUNDED) * mpmath.mpf("0.05") / 4
        ref = mpmath.findroot(lambda t: a * (mpmath.exp(mpmath.mpf("0.0625") * t) + t * t + 1) - t, 0.13)
    assert K == pytest.approx(float(ref), abs=1e-10)
    assert K <= explicit_K_bound(p)


def test_fixed_point_matches_dense_scan():
    from yamabe_dirichlet.verify import dense_scan_root

    for Lam, gamma, A in [(1.0, 1.0, 0.05), (3.0, 0.2, 0.04), (0.1, 3.9, 0.02)]:
        p = MajorantParams(3, Lam, gamma, A)
        lo, hi = dense_scan_root(p)
        assert abs(smallest_fixed_point(p).K - 0.5 * (lo + hi)) <= 1e-6


def test_fixed_point_tends_to_zero_with_size():
    Ks = [smallest_fixed_point(MajorantParams(3, 1.0, 1.0, a)).K for a in (0.04, 0.02, 0.01, 0.005)]
    assert all(b < a for a, b in zip(Ks, Ks[1:]))
    assert Ks[-1] / 0.005 == pytest.approx(Ks[-2] / 0.01, rel=0.05)


def test_explicit_bound_examples():
    assert explicit_K_bound(MajorantParams(3, 0.0, 0.0, 0.4)) == 0.0
    assert explicit_K_bound(MajorantParams(3, 1.0, 1.0, 0.05, C=C_ROUNDED)) == pytest.approx(0.3191, abs=1e-4)
    A = 8 / (EVANS_CONSTANT * 4.5)
    assert explicit_K_bound(MajorantParams(3, 1.0, 0.5, A)) == pytest.approx(1.0, rel=1e-14)


def test_contraction_constant():
    assert contraction_constant(0.0, 1.0, 0.5, 3) == 0.0
    assert contraction_constant(0.3, 0.0, 0.0, 3) == 0.0
    with mpmath.workdps(50):
        d, K = mpmath.mpf("0.0625"), mpmath.mpf("0.32")
        ref = (d * d * mpmath.exp(K * d) / 2 + mpmath.sqrt(2) * d * K) / 4
    q = contraction_constant(0.0625, 1.0, 0.32, 3)
    assert q == pytest.approx(float(ref), rel=1e-14)
    assert q == pytest.approx(0.00757, abs=1e-5)


def test_green_function_symmetric_and_vanishing_on_sphere(rng):
    x = rng.uniform(-0.4, 0.4, 3)
    y = rng.uniform(-0.4, 0.4, 3)
    assert ball_green_function(3, x, y) == pytest.approx(ball_green_function(3, y, x), rel=1e-12)
    s = rng.standard_normal(3)
    s /= np.linalg.norm(s)
    assert abs(ball_green_function(3, x, s)) < 1e-12


def test_green_gradient_matches_finite_differences(rng):
    x, y = np.array([0.2, -0.1, 0.3]), np.array([-0.3, 0.4, 0.1])
    eps = 1e-6
    fd = [(ball_green_function(3, x + eps * e, y) - ball_green_function(3, x - eps * e, y)) / (2 * eps) for e in np.eye(3)]
    assert np.allclose(ball_green_gradient(3, x, y), fd, rtol=1e-6)


def test_green_integral_at_centre():
    # |grad G(0, y)| = (1/|y|^2 - |y|) / (4 pi): the integral is 1 - 1/4 in closed form
    assert green_gradient_integral(3, 0.0, rtol=1e-8) == pytest.approx(0.75, rel=1e-7)


def test_green_integral_monte_carlo(rng):
    x = np.array([0.4, 0.0, 0.0])
    pts = rng.uniform(-1, 1, (400_000, 3))
    pts = pts[np.linalg.norm(pts, axis=1) < 1]
    vals = np.linalg.norm(ball_green_gradient(3, x[None, :], pts), axis=-1)
    mc = vals.mean() * 4 * math.pi / 3
    stderr = vals.std() / math.sqrt(vals.size) * 4 * math.pi / 3
    quad = green_gradient_integral(3, x, rtol=1e-6)
    assert abs(mc - quad) < 5 * stderr + 5e-3
    assert green_gradient_integral(3, x, rtol=1e-6, method="full") == pytest.approx(quad, rel=1e-4)


def test_green_scaling_identity():
    for r in (0.5, 2.0):
        scaled = green_gradient_integral(3, 0.3 * r, radius=r, rtol=1e-7)
        assert scaled == pytest.approx(r * green_gradient_integral(3, 0.3, rtol=1e-7), rel=1e-6)


def test_ball_green_constant_three_dimensions():
    est = ball_green_constant(3)
    assert est.value <= 16.47
    assert est.value == pytest.approx(0.75, rel=1e-3)
    h = est.history
    assert abs(h[-1] - h[-2]) <= 1e-3 * abs(h[-1])
