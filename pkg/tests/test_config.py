import math

import pytest

from yamabe_dirichlet.config import ConfigError, parse_config
from yamabe_dirichlet.geometry import Ball, Box

MINIMAL = """
[domain]
ball 0 0 0 0.05

[problem]
R = 1
S = 0

[run]
mode = solve
mesh_size = 0.005
"""


def test_minimal_solve_config():
    cfg = parse_config(MINIMAL)
    assert cfg.mode == "solve" and cfg.domain == Ball((0, 0, 0), 0.05)
    assert cfg.R == "1" and cfg.S == "0"
    assert cfg.Lam == pytest.approx(1.05) and cfg.bounds_estimated


def test_missing_mesh_size_named():
    with pytest.raises(ConfigError, match="mesh_size"):
        parse_config(MINIMAL.replace("mesh_size = 0.005", ""))


def test_all_errors_reported_with_lines():
    text = MINIMAL.replace("R = 1", "R = 1 +").replace("mode = solve", "mode = solve\ntol = abc\nbogus = 3")
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    errors = info.value.errors
    assert [line for line, _ in errors] == [6, 11, 12]
    assert "bogus" in errors[2][1]


def test_bounds_estimated_from_expression():
    text = """
[domain]
box 0 0 0 1 1 1
[problem]
R = exp(2*x)
S = 0
[run]
mode = solve
mesh_size = 0.1
"""
    cfg = parse_config(text)
    assert cfg.domain == Box((0, 0, 0), (1, 1, 1))
    assert cfg.bounds_estimated
    assert cfg.Lam == pytest.approx(1.05 * math.e**2, rel=1e-3)


def test_round_trip():
    text = MINIMAL + """
[sweep]
base = solve
mesh_size = 0.005, 0.0025
gamma = 0:1:3
"""
    cfg = parse_config(text.replace("mode = solve", "mode = sweep"))
    assert dict(cfg.sweep)["gamma"] == pytest.approx((0.0, 0.5, 1.0))
    assert parse_config(cfg.to_text()) == cfg


def test_polytope_literal():
    text = MINIMAL.replace(
        "ball 0 0 0 0.05",
        "polytope\n1 0 0 0.05\n-1 0 0 0.05\n0 1 0 0.05\n0 -1 0 0.05\n0 0 1 0.05\n0 0 -1 0.05",
    )
    cfg = parse_config(text)
    assert cfg.domain.kind == "polytope"
    assert parse_config(cfg.to_text()) == cfg
