"""Scalar machinery behind the convergence certificate.

Contents: the gradient-bound majorant and its smallest fixed point K, the
explicit upper bound for K, the contraction constant of successive Picard
differences, and gradient integrals of the Dirichlet Green's function of a
ball (which give the dimensional constant C_n used for balls).

Green's function convention: ``-Delta_x G(x, x') = delta(x - x')`` with
``G = 0`` on the boundary, so the solution of ``Delta u = h, u = 0`` is
``u = -int G h`` and ``|grad u(x)| <= int |grad_x G(x, x')| dx' * sup|h|``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gamma as gamma_fn

__all__ = [
    "EVANS_CONSTANT",
    "UNIT_BALL_VOLUME_3D",
    "MajorantParams",
    "FixedPointResult",
    "GreenEstimate",
    "QuadratureError",
    "majorant",
    "smallest_fixed_point",
    "explicit_K_bound",
    "contraction_constant",
    "evans_bound",
    "sphere_area",
    "ball_green_function",
    "ball_green_gradient",
    "green_gradient_integral",
    "ball_green_constant",
]

#: Gradient-estimate constant for convex 3-D domains, 4.76 * pi^(2/3).
EVANS_CONSTANT = 4.76 * math.pi ** (2.0 / 3.0)
UNIT_BALL_VOLUME_3D = 4.0 * math.pi / 3.0

T_MAX = 10.0
SLAB_FACTOR = 1.25


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, achieved):
        super().__init__(f"{message} (achieved relative change {achieved:.3e})")
        self.achieved = achieved


# --------------------------------------------------------------------------
# majorant and fixed point


@dataclass(frozen=True)
class MajorantParams:
    """Parameters of the scalar majorant f(t).

    ``mode`` selects the size parameter and the rate of the exponential term:

    * ``"volume"``: size = Vol^(1/3), exponential ``Lambda * exp(1.25 * size * t)``
    * ``"diameter"``: size = diam, exponential ``Lambda * exp(size * t)``
    * ``"radius"``: size = ball radius, exponential ``Lambda * exp(2 * size * t)``
      (the slab width of a ball is twice its radius)
    """

    n: int
    Lam: float
    gamma: float
    size: float
    C: float = EVANS_CONSTANT
    mode: str = "volume"

    def __post_init__(self):
        if self.mode not in ("volume", "diameter", "radius"):
            raise ValueError(f"unknown majorant mode {self.mode!r}")
        if self.n < 3:
            raise ValueError("dimension must be >= 3")
        if self.Lam < 0 or self.gamma < 0:
            raise ValueError("Lambda and gamma must be nonnegative")
        if not self.size > 0 or not self.C > 0:
            raise ValueError("size parameter and C must be positive")

    @property
    def prefactor(self):
        return self.C * self.size / (2.0 * (self.n - 1))

    @property
    def rate(self):
        if self.mode == "volume":
            return SLAB_FACTOR * self.size
        if self.mode == "diameter":
            return self.size
        return 2.0 * self.size


def majorant(t, p: MajorantParams):
    """Evaluate ``f(t) = C s / (2(n-1)) * (Lambda e^{rate t} + t^2 + gamma)``."""
    t = np.asarray(t, dtype=float)
    out = p.prefactor * (p.Lam * np.exp(p.rate * t) + t * t + p.gamma)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FixedPointResult:
    K: float | None
    bracket: tuple[float, float] | None
    explicit_bound: float
    exists: bool
    root_beyond_cap: bool = False


def _bisect(g, lo, hi, xtol):
    glo = g(lo)
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0:
            return mid, mid
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
    return lo, hi


def smallest_fixed_point(p: MajorantParams, t_max=T_MAX, scan_points=10_000, xtol=1e-12):
    """Smallest root K of ``t = f(t)`` on ``[0, t_max]``.

    The scan looks for the first sample with ``f(t) <= t``; the bracket is then
    bisected to ``xtol``. Since ``g(t) = f(t) - t`` is convex, a pair of roots
    closer together than the scan spacing is caught by minimising ``g`` on the
    cells around the smallest sampled value.
    """
    bound = explicit_K_bound(p)

    def g(t):
        return majorant(t, p) - t

    if g(0.0) <= 0.0:
        return FixedPointResult(0.0, (0.0, 0.0), bound, True)

    ts = np.linspace(0.0, t_max, scan_points)
    gs = majorant(ts, p) - ts
    hit = np.flatnonzero(gs <= 0.0)
    if hit.size:
        j = hit[0]
        lo, hi = _bisect(g, ts[j - 1], ts[j], xtol)
        return FixedPointResult(0.5 * (lo + hi), (lo, hi), bound, True)

    j = int(np.argmin(gs))
    a, b = ts[max(j - 1, 0)], ts[min(j + 1, scan_points - 1)]
    res = minimize_scalar(g, bounds=(a, b), method="bounded", options={"xatol": 1e-14})
    if res.fun <= 0.0:
        lo, hi = _bisect(g, a, float(res.x), xtol)
        return FixedPointResult(0.5 * (lo + hi), (lo, hi), bound, True)

    # g still decreasing at the cap: a root may exist beyond t_max
    slope = (gs[-1] - gs[-2]) / (ts[-1] - ts[-2])
    return FixedPointResult(None, None, bound, False, root_beyond_cap=bool(slope < 0))


def explicit_K_bound(p: MajorantParams):
    """Closed-form upper estimate for the smallest fixed point.

    volume mode ``C A (4 Lambda + gamma) / 8``; diameter mode
    ``(C d / 4)(2.5 Lambda + gamma)``; radius mode ``C_n r (2.5 Lambda + gamma) / (n - 1)``.
    The first two are the n = 3 formulas and are used as such for any n.
    """
    if p.mode == "volume":
        return p.C * p.size * (4.0 * p.Lam + p.gamma) / 8.0
    if p.mode == "diameter":
        return p.C * p.size / 4.0 * (2.5 * p.Lam + p.gamma)
    return p.C * p.size * (2.5 * p.Lam + p.gamma) / (p.n - 1)


def contraction_constant(delta, Lam, K, n):
    """``(1/(2(n-1))) * (delta^2 Lambda e^{K delta} / 2 + sqrt(2) delta K)``."""
    return (delta * delta * Lam * math.exp(K * delta) / 2.0 + math.sqrt(2.0) * delta * K) / (
        2.0 * (n - 1)
    )


def evans_bound(V):
    """``4.76 (pi^2 V)^(1/3)``, the 3-D Green gradient-integral bound."""
    if not V > 0:
        raise ValueError("volume must be positive")
    return 4.76 * (math.pi**2 * V) ** (1.0 / 3.0)


# --------------------------------------------------------------------------
# Green's function of a ball


def sphere_area(n):
    """Surface area of the unit sphere S^(n-1) in R^n."""
    return 2.0 * math.pi ** (n / 2.0) / float(gamma_fn(n / 2.0))


def _image(x, xp, radius):
    """Return ``y = |x'| x / r - r x' / |x'|`` (image-point vector) and ``|x'|/r``.

    ``|y| = (|x'|/r) |x - x*|`` with ``x* = r^2 x'/|x'|^2``; the expression is
    regular at ``x' = 0`` where it reduces to ``-r x'/|x'|`` of length r.
    """
    nxp = np.linalg.norm(xp, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(nxp > 0, xp / np.where(nxp > 0, nxp, 1.0), 0.0)
    y = nxp * x / radius - radius * unit
    # direction is irrelevant at x' = 0 as long as |y| = r
    at_origin = nxp[..., 0] == 0
    if np.any(at_origin):
        y = np.array(y, copy=True)
        y[at_origin] = 0.0
        y[at_origin, 0] = radius
    return y, nxp / radius


def _check_pair(x, xp, radius):
    diff = np.linalg.norm(x - xp, axis=-1)
    if np.any(diff == 0):
        raise ValueError("Green's function is singular at coincident points")
    if np.any(np.linalg.norm(x, axis=-1) >= radius) or np.any(np.linalg.norm(xp, axis=-1) > radius):
        raise ValueError("points must lie in the ball")


def ball_green_function(n, x, xp, radius=1.0):
    """Dirichlet Green's function of the ball ``|x| < radius`` in R^n (n >= 3)."""
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    x, xp = np.broadcast_arrays(x, xp)
    _check_pair(x, xp, radius)
    y, _ = _image(x, xp, radius)
    c = 1.0 / ((n - 2) * sphere_area(n))
    out = c * (np.linalg.norm(x - xp, axis=-1) ** (2 - n) - np.linalg.norm(y, axis=-1) ** (2 - n))
    return float(out) if out.ndim == 0 else out


def ball_green_gradient(n, x, xp, radius=1.0):
    """Gradient in ``x`` of :func:`ball_green_function`, in closed form."""
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    x, xp = np.broadcast_arrays(x, xp)
    _check_pair(x, xp, radius)
    return _green_gradient_unchecked(n, x, xp, radius)


def _green_gradient_unchecked(n, x, xp, radius):
    d = x - xp
    nd = np.linalg.norm(d, axis=-1, keepdims=True)
    y, scale = _image(x, xp, radius)
    ny = np.linalg.norm(y, axis=-1, keepdims=True)
    return (-d / nd**n + scale * y / ny**n) / sphere_area(n)


def _radial_integrand(n, x, omega, rho, radius):
    """``rho^(n-1) |grad_x G(x, x + rho omega)|`` with the singular power removed.

    ``x - x' = -rho omega``, so the free-space part ``rho^(n-1) * rho omega / rho^n``
    is just ``omega``; only the image part carries a ``rho`` dependence.
    """
    xp = x + rho[..., None] * omega
    y, scale = _image(x, xp, radius)
    ny = np.linalg.norm(y, axis=-1, keepdims=True)
    free = np.broadcast_to(omega, xp.shape)
    image = scale * y * (rho[..., None] ** (n - 1) / ny**n)
    return np.linalg.norm(free + image, axis=-1) / sphere_area(n)


def _ray_length(x, omega, radius):
    """Distance from ``x`` to the sphere of given radius along unit ``omega``."""
    b = omega @ x
    return -b + np.sqrt(b * b + radius * radius - x @ x)


def _gauss_rule(a, b, panels, order):
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def _graded_rule(panels, order):
    """Rule on [0, 1] with panels geometrically refined towards 1 (the sphere)."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.concatenate([[0.0], 1.0 - 0.5 ** np.arange(panels, 0, -1), [1.0]])
    edges = np.unique(np.concatenate([edges, np.linspace(0.0, 1.0, panels + 1)]))
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def _integral_axisymmetric(n, s, radius, level):
    # x = s e_1; direction omega = cos(th) e_1 + sin(th) e_2; the remaining
    # angular variables contribute |S^(n-2)| sin^(n-2)(th).
    panels = 4 * 2**level
    th, wth = _gauss_rule(0.0, math.pi, panels, 16)
    u, wu = _graded_rule(panels, 16)
    x = np.zeros(n)
    x[0] = s
    omega = np.zeros((th.size, n))
    omega[:, 0] = np.cos(th)
    omega[:, 1] = np.sin(th)
    lengths = _ray_length(x, omega, radius)
    rho = lengths[:, None] * u[None, :]
    vals = _radial_integrand(n, x, omega[:, None, :], rho, radius)
    radial = (vals * wu[None, :]).sum(axis=1) * lengths
    return sphere_area(n - 1) * float(np.sum(radial * wth * np.sin(th) ** (n - 2)))


def _integral_full3d(x, radius, level):
    # lab-frame spherical coordinates for the direction; no symmetry used
    panels = 4 * 2**level
    th, wth = _gauss_rule(0.0, math.pi, panels, 12)
    ph, wph = _gauss_rule(0.0, 2.0 * math.pi, 2 * panels, 12)
    u, wu = _graded_rule(panels, 12)
    T, P = np.meshgrid(th, ph, indexing="ij")
    omega = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1).reshape(-1, 3)
    wang = (wth[:, None] * np.sin(th)[:, None] * wph[None, :]).ravel()
    lengths = _ray_length(x, omega, radius)
    total = 0.0
    for start in range(0, omega.shape[0], 2048):
        sl = slice(start, start + 2048)
        rho = lengths[sl, None] * u[None, :]
        vals = _radial_integrand(3, x, omega[sl, None, :], rho, radius)
        total += float(np.sum((vals * wu[None, :]).sum(axis=1) * lengths[sl] * wang[sl]))
    return total


def green_gradient_integral(n, x, radius=1.0, rtol=1e-4, method="axisymmetric", max_level=6,
                            return_history=False):
    """``int_{B_r} |grad_x G_r(x, x')| dx'`` by desingularised polar quadrature.

    The integral is written in polar coordinates centred at ``x`` so that the
    ``|x - x'|^(1-n)`` singularity cancels against the Jacobian ``rho^(n-1)``.
    Composite Gauss-Legendre panels are doubled until two successive levels
    agree to ``rtol``.

    ``method="axisymmetric"`` reduces to a 2-D integral using rotation
    invariance about the axis through ``x``; ``method="full"`` (n = 3 only)
    integrates over all directions in the fixed coordinate frame.
    """
    if not 3 <= n <= 8:
        raise ValueError("supported dimensions are 3 <= n <= 8")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size == 1:
        x = np.concatenate([x, np.zeros(n - 1)])
    if x.size != n:
        raise ValueError(f"point has dimension {x.size}, expected {n}")
    s = float(np.linalg.norm(x))
    if s >= radius:
        raise ValueError("x must lie in the open ball")
    if method == "full" and n != 3:
        raise ValueError("method='full' is implemented for n = 3 only")

    history = []
    prev = None
    for level in range(max_level + 1):
        if method == "full":
            val = _integral_full3d(x, radius, level)
        else:
            val = _integral_axisymmetric(n, s, radius, level)
        history.append(val)
        if prev is not None and abs(val - prev) <= rtol * abs(val):
            return (val, history) if return_history else val
        prev = val
    change = abs(history[-1] - history[-2]) / abs(history[-1])
    raise QuadratureError(f"green_gradient_integral(n={n}, |x|={s:.6g}) did not converge", change)


@dataclass(frozen=True)
class GreenEstimate:
    n: int
    value: float
    argmax_radius: float
    evans_bound: float | None
    tolerance: float
    samples: tuple = field(default=(), repr=False)
    history: tuple = field(default=(), repr=False)


@functools.lru_cache(maxsize=None)
def ball_green_constant(n, rtol=1e-4, scan_points=21, s_max=0.95):
    """``C_n = sup_{|x|<1} int_{B_1} |grad_x G_1(x, x')| dx'``.

    By symmetry the integral depends on ``|x|`` only; it is sampled on
    ``[0, s_max]`` and the best sample is refined with a bounded scalar search
    on its neighbouring cells.
    """
    radii = np.linspace(0.0, s_max, scan_points)
    vals = np.array([green_gradient_integral(n, r, rtol=rtol) for r in radii])
    j = int(np.argmax(vals))
    a, b = radii[max(j - 1, 0)], radii[min(j + 1, scan_points - 1)]
    res = minimize_scalar(lambda r: -green_gradient_integral(n, r, rtol=rtol), bounds=(a, b),
                          method="bounded", options={"xatol": 1e-4})
    best_r, best = (float(res.x), -float(res.fun)) if -res.fun > vals[j] else (float(radii[j]), float(vals[j]))
    _, history = green_gradient_integral(n, best_r, rtol=rtol, return_history=True)
    return GreenEstimate(
        n=n,
        value=best,
        argmax_radius=best_r,
        evans_bound=evans_bound(UNIT_BALL_VOLUME_3D) if n == 3 else None,
        tolerance=rtol,
        samples=tuple(zip(radii.tolist(), vals.tolist())),
        history=tuple(history),
    )
