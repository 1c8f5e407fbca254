import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from yamabe_dirichlet.analysis import EVANS_CONSTANT
from yamabe_dirichlet.geometry import (
    Ball,
    Box,
    DomainError,
    Polytope,
    check_admissibility,
    contains,
    diameter,
    domain_literal,
    largest_admissible_scale,
    parse_domain_literal,
    regular_tetrahedron,
    scale_domain,
    signed_distance,
    slab_diameter,
    sphere_directions,
    unit_cube,
    volume,
    volume_estimate,
    width,
)


def test_volume_closed_forms():
    assert volume(Ball((0, 0, 0), 1.0)) == pytest.approx(4 * math.pi / 3, rel=1e-14)
    assert volume(Box((0, 0, 0), (1, 2, 3))) == pytest.approx(6.0, rel=1e-14)


def test_polytope_volume_monte_carlo():
    est = volume_estimate(unit_cube(), seed=1)
    assert abs(est.value - 1.0) <= 0.005
    assert est.samples >= 1_000_000
    # tetrahedron: edge^3 / (6 sqrt 2)
    tet = volume_estimate(regular_tetrahedron(1.0), seed=2)
    assert tet.value == pytest.approx(1 / (6 * math.sqrt(2)), rel=0.02)


def test_volume_is_reproducible_with_seed():
    assert volume(unit_cube(), seed=5) == volume(unit_cube(), seed=5)


def test_unbounded_polytope_rejected():
    with pytest.raises(DomainError):
        Polytope.from_halfspaces([[1, 0, 0, 1], [0, 1, 0, 1], [0, 0, 1, 1]])


def test_slab_diameter_simple_shapes():
    assert slab_diameter(Ball((0, 0, 0), 0.5)) == 1.0
    assert slab_diameter(Box((0, 0, 0), (0.1, 5, 5))) == pytest.approx(0.1)


def test_tetrahedron_width_against_direction_scan():
    tet = regular_tetrahedron(1.0)
    # brute-force oracle over 10^6 directions
    dirs = sphere_directions(3, 1_000_000)
    brute = float(width(tet, dirs).min())
    got = slab_diameter(tet)
    assert got == pytest.approx(1 / math.sqrt(2), rel=1e-6)
    assert got <= brute + 1e-12
    # the scan spacing is about 3.5e-3 rad and the width has a kink at its minimum
    assert brute - got < 5e-4


def test_diameters():
    assert diameter(Ball((0, 0, 0), 0.5)) == 1.0
    assert diameter(Box((0, 0, 0), (1, 1, 1))) == pytest.approx(math.sqrt(3))
    cube = unit_cube()
    v = cube.vertices
    brute = max(np.linalg.norm(a - b) for a in v for b in v)
    assert diameter(cube) == pytest.approx(math.sqrt(3), abs=1e-9)
    assert diameter(cube) == pytest.approx(brute, abs=1e-12)


def test_contains_and_signed_distance():
    ball = Ball((0, 0, 0), 1.0)
    assert contains(ball, (0, 0, 0)) and signed_distance(ball, (0, 0, 0)) == -1.0
    assert not contains(ball, (2, 0, 0)) and signed_distance(ball, (2, 0, 0)) == 1.0
    cube = unit_cube(center=(0, 0, 0))
    assert signed_distance(cube, (0, 0, 0)) == pytest.approx(-0.5)


def test_scale_domain():
    assert scale_domain(Ball((0, 0, 0), 1.0), 0.5) == Ball((0, 0, 0), 0.5)
    assert volume(scale_domain(Box((-0.5,) * 3, (0.5,) * 3), 2.0)) == pytest.approx(8.0)
    tet = regular_tetrahedron(1.0)
    assert slab_diameter(scale_domain(tet, 0.1)) / slab_diameter(tet) == pytest.approx(0.1, abs=1e-6)
    with pytest.raises(DomainError):
        scale_domain(Ball((2, 0, 0), 1.0), 0.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 3.0), st.floats(0.05, 3.0), st.floats(0.05, 3.0))
def test_box_width_never_exceeds_diameter(a, b, c):
    box = Box((0, 0, 0), (a, b, c))
    assert slab_diameter(box) <= diameter(box)
    assert slab_diameter(box) == pytest.approx(min(a, b, c))


def test_small_ball_certified():
    rep = check_admissibility(Ball((0, 0, 0), 0.001), 1.0, 1.0, "T1")
    assert rep.passed
    # the volume clause is tried first and already holds for such a small ball
    assert rep.clause == "T1_1a"
    b1b = dict(next(c for c in rep.clauses if c.clause == "T1_1b").bounds)
    assert b1b["diam<=4/(C(2.5L+g))"][0] == pytest.approx(4 / (EVANS_CONSTANT * 3.5), rel=1e-14)
    assert b1b["diam<=4/(1.5L+sqrt2)"][0] == pytest.approx(4 / (1.5 + math.sqrt(2)), rel=1e-14)
    assert b1b["diam<=4/(1.5L+sqrt2)"][0] == pytest.approx(1.3726, abs=1e-4)
    assert next(c for c in rep.clauses if c.clause == "T1_1b").passed


def test_zero_curvature_volume_clause():
    rep = check_admissibility(Ball((0, 0, 0), 0.5), 0.0, 0.0, "T1")
    assert rep.clause == "T1_1a" and rep.passed
    assert rep.bounds_evaluated["slab<=2/(0.75L+1)"][0] == 2.0


def test_flat_box_fails_volume_bound():
    rep = check_admissibility(Box((0, 0, 0), (3, 3, 0.01)), 1.0, 0.0, "T1")
    assert not rep.passed
    c1a = next(c for c in rep.clauses if c.clause == "T1_1a")
    required, actual = c1a.bounds["volume<=(8/(C(4L+g)))^3"]
    assert required == pytest.approx((8 / (EVANS_CONSTANT * 4)) ** 3, rel=1e-14)
    assert required == pytest.approx(7.52e-3, rel=2e-3)
    assert actual == pytest.approx(0.09)
    assert rep.violated_bound is not None


def test_non_ball_in_four_dimensions_unsupported():
    with pytest.raises(DomainError):
        check_admissibility(Box((0,) * 4, (0.1,) * 4), 1.0, 1.0)


def test_certificate_monotone_under_shrinking():
    d = largest_admissible_scale(Ball((0, 0, 0), 1.0), 1.0, 0.5)
    for s in (0.2, 0.5, 0.9, 0.999):
        assert check_admissibility(Ball((0, 0, 0), s * d), 1.0, 0.5).passed
    assert not check_admissibility(Ball((0, 0, 0), 1.01 * d), 1.0, 0.5).passed


def test_domain_literal_round_trip():
    for dom in (Ball((0, 0, 0), 0.3), Box((0, 0, 0), (1, 2, 3)), regular_tetrahedron(0.5)):
        back = parse_domain_literal(domain_literal(dom))
        assert domain_literal(back) == domain_literal(dom)


def test_domain_literal_errors():
    with pytest.raises(DomainError):
        parse_domain_literal("sphere 0 0 0 1")
    with pytest.raises(DomainError):
        parse_domain_literal("box 0 0 0 1 1")
