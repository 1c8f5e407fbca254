import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yamabe_dirichlet.geometry import Ball, Box
from yamabe_dirichlet.poisson import (
    GridError,
    ScalarField,
    build_grid,
    conjugate_gradient,
    gradient,
    laplacian,
    laplacian_residual,
    norms,
    read_field_binary,
    solve_dirichlet,
    write_field_binary,
    write_field_csv,
)

UNIT_BOX = Box((0, 0, 0), (1, 1, 1))


def sine3(p):
    return np.prod(np.sin(np.pi * p), axis=1)


def test_ball_lattice_count_matches_enumeration():
    grid = build_grid(Ball((0, 0, 0), 1.0), 0.25)
    brute = sum(1 for i, j, k in itertools.product(range(-4, 5), repeat=3) if (i * i + j * j + k * k) * 0.0625 < 1)
    assert brute == 251
    assert grid.size == 251


def test_box_coarse_grid_has_only_centre():
    grid = build_grid(UNIT_BOX, 0.5, check_resolution=False)
    assert grid.size == 1
    assert np.allclose(grid.points[0], 0.5)


def test_mesh_as_large_as_width_rejected():
    with pytest.raises(GridError):
        build_grid(UNIT_BOX, 1.0)


def test_matrix_symmetric_negative_definite():
    A = build_grid(Ball((0.1, 0, 0), 0.7), 0.15).matrix
    assert abs(A - A.T).max() == 0
    assert np.all(np.linalg.eigvalsh(A.toarray()) < 0)


def test_cg_matches_direct_solve(rng):
    A = -build_grid(Ball((0, 0, 0), 1.0), 0.2).matrix
    b = rng.standard_normal(A.shape[0])
    x, info = conjugate_gradient(A, b, rtol=1e-12)
    assert np.allclose(x, np.linalg.solve(A.toarray(), b), rtol=1e-9, atol=1e-12)


def test_ball_quadratic_second_order():
    d = 0.5
    errs = []
    for h in (d / 8, d / 16):
        grid = build_grid(Ball((0, 0, 0), d), h)
        u = solve_dirichlet(grid, -6.0, 0.0)
        exact = d * d - np.sum(grid.points**2, axis=1)
        errs.append(np.max(np.abs(u.values - exact)))
        assert errs[-1] <= 2.0 * h * h
    assert errs[0] / errs[1] > 3.2


def test_box_sine_second_order():
    errs = []
    for h in (1 / 8, 1 / 16):
        grid = build_grid(UNIT_BOX, h)
        u = solve_dirichlet(grid, lambda p: -3 * np.pi**2 * sine3(p), 0.0)
        errs.append(np.max(np.abs(u.values - sine3(grid.points))))
    assert 3.2 <= errs[0] / errs[1] <= 4.8


def test_zero_data_gives_zero():
    grid = build_grid(Ball((0, 0, 0), 1.0), 0.2)
    u = solve_dirichlet(grid, 0.0, 0.0)
    assert np.all(u.values == 0)
    assert laplacian_residual(u, 0.0) == 0.0


def test_solution_residual_postcondition():
    grid = build_grid(Ball((0, 0, 0), 1.0), 0.1)
    src = lambda p: np.cos(3 * p[:, 0]) - p[:, 2]  # noqa: E731
    u = solve_dirichlet(grid, src, 0.25)
    assert laplacian_residual(u, src) <= 1e-8 * np.max(np.abs(src(grid.points)))


def test_quadratic_residual_first_order_on_average():
    # cut legs carry an O(1) local truncation error; the share of such nodes is O(h)
    means = []
    for h in (0.125, 0.0625, 0.03125):
        grid = build_grid(Ball((0, 0, 0), 1.0), h)
        u = ScalarField.from_function(grid, lambda p: 1.0 - np.sum(p * p, axis=1), 0.0)
        r = laplacian(u) + 6.0
        assert np.max(np.abs(r[grid.regular_mask])) < 1e-9
        assert np.max(np.abs(r)) < 4.0
        means.append(np.mean(np.abs(r)))
    assert means[0] / means[1] == pytest.approx(2.0, rel=0.15)
    assert means[1] / means[2] == pytest.approx(2.0, rel=0.15)


def test_gradient_of_affine_field_exact():
    grid = build_grid(Ball((0, 0, 0), 1.0), 0.1)
    f = ScalarField.from_function(grid, lambda p: p[:, 0], lambda p: p[:, 0])
    assert np.allclose(gradient(f).values, [1.0, 0.0, 0.0], atol=1e-10)


def test_gradient_of_quadratic_on_ball():
    d = 0.5
    grid = build_grid(Ball((0, 0, 0), d), d / 16)
    f = ScalarField.from_function(grid, lambda p: d * d - np.sum(p * p, axis=1), 0.0)
    g = gradient(f).values
    # three-point differences are exact for quadratics
    assert np.allclose(g, -2 * grid.points, atol=1e-11)
    assert norms(gradient(f)).sup_norm == pytest.approx(2 * d, abs=2 * grid.mesh_size)


def test_gradient_of_polynomial_second_order():
    coeffs = np.array([0.3, -1.1, 0.7, 0.5])
    u = lambda p: coeffs[0] * p[:, 0] ** 3 + coeffs[1] * p[:, 1] ** 2 * p[:, 2] + coeffs[2] * p[:, 0] * p[:, 2] ** 2 + coeffs[3]  # noqa: E731

    def du(p):
        x, y, z = p.T
        return np.stack([3 * coeffs[0] * x**2 + coeffs[2] * z**2, 2 * coeffs[1] * y * z,
                         coeffs[1] * y**2 + 2 * coeffs[2] * x * z], axis=1)

    errs = []
    for h in (1 / 8, 1 / 16):
        grid = build_grid(UNIT_BOX, h)
        f = ScalarField.from_function(grid, u, u)
        errs.append(np.max(np.abs(gradient(f).values - du(grid.points))))
    assert errs[0] / errs[1] > 3.5


def test_norms():
    grid = build_grid(UNIT_BOX, 1 / 32)
    one = ScalarField(grid, np.ones(grid.size), 1.0)
    assert norms(one).l2_norm == pytest.approx(1.0, abs=0.1)
    zero = norms(ScalarField(grid, np.zeros(grid.size)))
    assert zero.sup_norm == zero.l2_norm == zero.h10_seminorm == 0.0
    s = ScalarField.from_function(grid, sine3)
    assert norms(s).l2_norm == pytest.approx(0.5**1.5, rel=1e-3)

    # |grad|^2 integrates to 3 pi^2 / 8; node sums miss a half-cell layer at
    # each face, where the gradient is largest, so the gap is first order
    exact = math.sqrt(3 * np.pi**2 / 8)
    coarse = build_grid(UNIT_BOX, 1 / 16)
    gap_coarse = exact - norms(ScalarField.from_function(coarse, sine3)).h10_seminorm
    gap_fine = exact - norms(s).h10_seminorm
    assert 0 < gap_fine < gap_coarse
    assert gap_coarse / gap_fine == pytest.approx(2.0, rel=0.15)


def test_maximum_principle():
    grid = build_grid(Ball((0, 0, 0), 0.8), 0.1)
    u = solve_dirichlet(grid, lambda p: 1.0 + p[:, 0] ** 2, 0.0)
    assert np.all(u.values <= 0)


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2))
def test_linearity(a, b, g):
    grid = build_grid(Ball((0, 0, 0), 0.5), 0.1)
    s1 = lambda p: np.sin(4 * p[:, 0])  # noqa: E731
    s2 = lambda p: p[:, 1] * p[:, 2]  # noqa: E731
    u1 = solve_dirichlet(grid, s1, g, rtol=1e-13)
    u2 = solve_dirichlet(grid, s2, 0.0, rtol=1e-13)
    both = solve_dirichlet(grid, lambda p: a * s1(p) + b * s2(p), a * g, rtol=1e-13)
    scale = 1 + abs(a) + abs(b) + abs(g)
    assert np.max(np.abs(both.values - a * u1.values - b * u2.values)) <= 1e-9 * scale


def test_mollified_point_source_scaling():
    """A narrow source of unit mass looks like -1/(4 pi r) away from the centre."""
    grid = build_grid(Ball((0, 0, 0), 1.0), 1 / 24)
    eps = 0.12
    r = np.linalg.norm(grid.points, axis=1)
    bump = np.where(r < eps, 1.0, 0.0)
    bump /= bump.sum() * grid.cell_volume
    u = solve_dirichlet(grid, bump, 0.0)
    # Green's function of the unit ball with the pole at the centre: -(1/r - 1)/(4 pi)
    far = (r > 0.35) & (r < 0.8)
    exact = -(1 / r[far] - 1) / (4 * math.pi)
    assert np.max(np.abs(u.values[far] - exact)) <= 0.05 * np.max(np.abs(exact))


def test_field_export(tmp_path):
    grid = build_grid(Ball((0, 0, 0), 1.0), 0.25)
    f = ScalarField.from_function(grid, lambda p: p[:, 0] + 2 * p[:, 1])
    path = write_field_csv(f, tmp_path / "f.csv")
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (251, 4) and np.array_equal(data[:, 3], f.values)
    binpath, sidecar = write_field_binary(f, tmp_path / "f.bin")
    meta, cols = read_field_binary(binpath)
    assert meta["node_count"] == 251 and np.array_equal(cols["value"], f.values)
    assert np.array_equal(cols["z"], grid.points[:, 2])
