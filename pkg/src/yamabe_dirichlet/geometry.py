"""Convex domains, their size quantities, and the admissibility certificate.

Three kinds of domain are supported: :class:`Ball`, axis-aligned :class:`Box`
and :class:`Polytope` (an intersection of half-spaces ``n . x <= b`` with unit
normals). Every domain answers signed-distance and support-function queries;
volume, slab diameter (minimal width) and diameter are derived from those.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.spatial.distance import pdist
from scipy.special import gamma as gamma_fn

from . import analysis
from .analysis import EVANS_CONSTANT, MajorantParams

__all__ = [
    "DomainError",
    "Ball",
    "Box",
    "Polytope",
    "GeometrySummary",
    "CertificateReport",
    "ClauseEvaluation",
    "volume",
    "volume_estimate",
    "slab_diameter",
    "diameter",
    "summarize",
    "largest_admissible_scale",
    "check_admissibility",
    "scale_domain",
    "contains",
    "signed_distance",
    "unit_cube",
    "regular_tetrahedron",
    "box_as_polytope",
    "parse_domain_literal",
    "domain_literal",
]

OMEGA3 = 4.0 * math.pi / 3.0
MAX_HALFSPACES = 64


class DomainError(ValueError):
    pass


def unit_ball_volume(n):
    return math.pi ** (n / 2.0) / float(gamma_fn(n / 2.0 + 1.0))


# --------------------------------------------------------------------------
# domain kinds


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float
    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "radius", float(self.radius))
        if len(self.center) < 3:
            raise DomainError("dimension must be at least 3")
        if not self.radius > 0:
            raise DomainError(f"ball radius must be positive, got {self.radius}")

    @property
    def dimension(self):
        return len(self.center)

    def signed_distance(self, points):
        p = np.asarray(points, dtype=float)
        return np.linalg.norm(p - np.asarray(self.center), axis=-1) - self.radius

    def support(self, directions):
        u = np.atleast_2d(np.asarray(directions, dtype=float))
        return u @ np.asarray(self.center) + self.radius * np.linalg.norm(u, axis=-1)

    def bounding_box(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple
    kind = "box"

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(c) for c in self.lo))
        object.__setattr__(self, "hi", tuple(float(c) for c in self.hi))
        if len(self.lo) != len(self.hi):
            raise DomainError("box corners have different dimensions")
        if len(self.lo) < 3:
            raise DomainError("dimension must be at least 3")
        if not all(a < b for a, b in zip(self.lo, self.hi)):
            raise DomainError(f"box needs lo < hi componentwise, got {self.lo}, {self.hi}")

    @property
    def dimension(self):
        return len(self.lo)

    def signed_distance(self, points):
        p = np.asarray(points, dtype=float)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        c, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        q = np.abs(p - c) - half
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(np.max(q, axis=-1), 0.0)
        return outside + inside

    def support(self, directions):
        u = np.atleast_2d(np.asarray(directions, dtype=float))
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.sum(np.where(u > 0, u * hi, u * lo), axis=-1)

    def bounding_box(self):
        return np.asarray(self.lo), np.asarray(self.hi)


@dataclass(frozen=True)
class Polytope:
    """Bounded intersection of half-spaces ``normals[i] . x <= offsets[i]``.

    ``signed_distance`` is ``max_i (n_i . x - b_i)``: exact inside the body and
    on faces, a lower bound near edges and corners. Its zero set is exactly the
    boundary, which is all the grid builder needs.
    """

    normals: tuple
    offsets: tuple
    kind = "polytope"

    def __post_init__(self):
        N = np.atleast_2d(np.asarray(self.normals, dtype=float))
        b = np.asarray(self.offsets, dtype=float).reshape(-1)
        if N.shape[0] != b.size:
            raise DomainError("need one offset per normal")
        if N.shape[1] < 3:
            raise DomainError("dimension must be at least 3")
        if N.shape[0] > MAX_HALFSPACES:
            raise DomainError(f"at most {MAX_HALFSPACES} half-spaces are supported")
        lengths = np.linalg.norm(N, axis=1)
        if np.any(np.abs(lengths - 1.0) > 1e-12):
            raise DomainError("polytope normals must have unit length (tolerance 1e-12)")
        object.__setattr__(self, "normals", tuple(tuple(r) for r in N.tolist()))
        object.__setattr__(self, "offsets", tuple(b.tolist()))
        self._check_bounded()

    @classmethod
    def from_halfspaces(cls, rows):
        """Build from rows ``(n_1, ..., n_d, b)``; rows are rescaled to unit normals."""
        A = np.atleast_2d(np.asarray(rows, dtype=float))
        lengths = np.linalg.norm(A[:, :-1], axis=1)
        if np.any(lengths == 0):
            raise DomainError("zero normal in half-space list")
        A = A / lengths[:, None]
        return cls(A[:, :-1], A[:, -1])

    @property
    def dimension(self):
        return len(self.normals[0])

    @property
    def _N(self):
        return np.asarray(self.normals)

    @property
    def _b(self):
        return np.asarray(self.offsets)

    def _check_bounded(self):
        N, b = self._N, self._b
        d = N.shape[1]
        for axis in range(d):
            for sign in (1.0, -1.0):
                c = np.zeros(d)
                c[axis] = -sign
                res = linprog(c, A_ub=N, b_ub=b, bounds=[(None, None)] * d, method="highs")
                if res.status == 3:
                    raise DomainError("polytope is unbounded")
                if res.status != 0:
                    raise DomainError(f"polytope is empty or infeasible ({res.message})")
        # Chebyshev centre: max r s.t. n_i . x + r <= b_i
        c = np.zeros(d + 1)
        c[-1] = -1.0
        A = np.hstack([N, np.ones((N.shape[0], 1))])
        res = linprog(c, A_ub=A, b_ub=b, bounds=[(None, None)] * d + [(0, None)], method="highs")
        if res.status != 0 or res.x[-1] <= 1e-12:
            raise DomainError("polytope has empty interior")

    @functools.cached_property
    def vertices(self):
        N, b = self._N, self._b
        d = N.shape[1]
        found = []
        for combo in itertools.combinations(range(N.shape[0]), d):
            sub = N[list(combo)]
            if abs(np.linalg.det(sub)) < 1e-12:
                continue
            v = np.linalg.solve(sub, b[list(combo)])
            if np.all(N @ v <= b + 1e-9 * (1.0 + np.abs(b))):
                found.append(v)
        if len(found) < d + 1:
            raise DomainError("vertex enumeration failed (degenerate half-spaces)")
        V = np.unique(np.round(np.array(found), 12), axis=0)
        return V

    def signed_distance(self, points):
        p = np.asarray(points, dtype=float)
        return np.max(p @ self._N.T - self._b, axis=-1)

    def support(self, directions):
        u = np.atleast_2d(np.asarray(directions, dtype=float))
        return np.max(u @ self.vertices.T, axis=-1)

    def bounding_box(self):
        V = self.vertices
        return V.min(axis=0), V.max(axis=0)


def unit_cube(center=(0.5, 0.5, 0.5), side=1.0):
    """Cube as a polytope (6 half-spaces)."""
    return box_as_polytope(Box(np.asarray(center) - side / 2, np.asarray(center) + side / 2))


def box_as_polytope(box: Box):
    d = box.dimension
    rows = []
    for a in range(d):
        e = np.zeros(d)
        e[a] = 1.0
        rows.append(np.append(e, box.hi[a]))
        rows.append(np.append(-e, -box.lo[a]))
    return Polytope.from_halfspaces(rows)


def regular_tetrahedron(edge=1.0):
    """Regular tetrahedron with the given edge length, centroid at the origin."""
    V = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    V *= edge / (2.0 * math.sqrt(2.0))
    rows = []
    for i in range(4):
        others = np.delete(V, i, axis=0)
        nrm = np.cross(others[1] - others[0], others[2] - others[0])
        nrm /= np.linalg.norm(nrm)
        if nrm @ (V[i] - others[0]) > 0:
            nrm = -nrm
        rows.append(np.append(nrm, nrm @ others[0]))
    return Polytope.from_halfspaces(rows)


# --------------------------------------------------------------------------
# geometric quantities


def contains(domain, point):
    return bool(domain.signed_distance(np.asarray(point, dtype=float)) < 0)


def signed_distance(domain, point):
    out = domain.signed_distance(np.asarray(point, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    stderr: float
    samples: int
    seed: int | None


def volume_estimate(domain, samples=1_000_000, seed=0, rel_stderr=0.005, max_samples=64_000_000):
    """Volume with its standard error; Monte Carlo for polytopes.

    Rejection sampling in the bounding box; the sample count is quadrupled
    until the standard error is at most ``rel_stderr`` of the estimate.
    """
    if isinstance(domain, Ball):
        return VolumeEstimate(unit_ball_volume(domain.dimension) * domain.radius**domain.dimension, 0.0, 0, None)
    if isinstance(domain, Box):
        return VolumeEstimate(float(np.prod(np.subtract(domain.hi, domain.lo))), 0.0, 0, None)
    if samples < 1_000_000:
        raise ValueError("at least 10^6 samples are required")
    lo, hi = domain.bounding_box()
    box_vol = float(np.prod(hi - lo))
    rng = np.random.default_rng(seed)
    n = samples
    hits = 0
    drawn = 0
    chunk = 250_000
    while True:
        while drawn < n:
            m = min(chunk, n - drawn)
            pts = lo + (hi - lo) * rng.random((m, domain.dimension))
            hits += int(np.count_nonzero(domain.signed_distance(pts) <= 0))
            drawn += m
        p = hits / drawn
        est = p * box_vol
        err = box_vol * math.sqrt(p * (1 - p) / drawn)
        if est > 0 and err <= rel_stderr * est:
            return VolumeEstimate(est, err, drawn, seed)
        if n >= max_samples:
            raise DomainError(f"Monte-Carlo volume did not reach {rel_stderr:.1%} standard error")
        n *= 4


def volume(domain, samples=1_000_000, seed=0):
    return volume_estimate(domain, samples=samples, seed=seed).value


def sphere_directions(n, count, seed=0):
    """Roughly uniform unit vectors; Fibonacci lattice for n = 3."""
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1.0 - 2.0 * i / count
        r = np.sqrt(1.0 - z * z)
        phi = math.pi * (3.0 - math.sqrt(5.0)) * i
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    u = np.random.default_rng(seed).standard_normal((count, n))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def width(domain, directions):
    u = np.atleast_2d(np.asarray(directions, dtype=float))
    u = u / np.linalg.norm(u, axis=-1, keepdims=True)
    return domain.support(u) + domain.support(-u)


def _tangent_basis(u):
    basis = []
    for k in range(u.size):
        e = np.zeros_like(u)
        e[k] = 1.0
        v = e - (e @ u) * u
        for w in basis:
            v -= (v @ w) * w
        if np.linalg.norm(v) > 1e-8:
            basis.append(v / np.linalg.norm(v))
        if len(basis) == u.size - 1:
            break
    return np.array(basis)


def _edge_directions(domain, tol=1e-9):
    """Unit vectors orthogonal to pairs of edges of a 3-D polytope.

    Together with the facet normals these contain a direction of minimal
    width: the two supporting planes of a thinnest slab touch the body along
    a facet and a vertex, or along two edges.
    """
    V = domain.vertices
    N, b = domain._N, domain._b
    active = np.abs(V @ N.T - b) <= tol * (1.0 + np.abs(b))
    shared = active.astype(int) @ active.T.astype(int)
    i, j = np.nonzero(np.triu(shared >= 2, k=1))
    if i.size < 2:
        return np.empty((0, 3))
    E = V[j] - V[i]
    E /= np.linalg.norm(E, axis=1, keepdims=True)
    a, c = np.triu_indices(E.shape[0], k=1)
    X = np.cross(E[a], E[c])
    norm = np.linalg.norm(X, axis=1)
    keep = norm > 1e-9
    return X[keep] / norm[keep, None]


def _minimal_width_polytope(domain, n_directions=4096, n_seeds=1, rtol=1e-6):
    d = domain.dimension
    candidates = [sphere_directions(d, n_directions), domain._N]
    if d == 3:
        candidates.append(_edge_directions(domain))
    dirs = np.vstack(candidates)
    w = width(domain, dirs)
    best = float(w.min())
    for s in dirs[np.argsort(w)[:n_seeds]]:
        T = _tangent_basis(s)

        def obj(a, s=s, T=T):
            return float(width(domain, s + a @ T)[0])

        res = minimize(obj, np.zeros(d - 1), method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": rtol * 1e-3 * best, "maxiter": 4000})
        best = min(best, float(res.fun))
    return best


def slab_diameter(domain):
    """Smallest distance between two parallel hyperplanes enclosing the domain."""
    if isinstance(domain, Ball):
        return 2.0 * domain.radius
    if isinstance(domain, Box):
        return float(np.min(np.subtract(domain.hi, domain.lo)))
    return _minimal_width_polytope(domain)


def diameter(domain):
    if isinstance(domain, Ball):
        return 2.0 * domain.radius
    if isinstance(domain, Box):
        return float(np.linalg.norm(np.subtract(domain.hi, domain.lo)))
    return float(pdist(domain.vertices).max())


@dataclass(frozen=True)
class GeometrySummary:
    volume: float
    A: float | None
    slab_diameter: float
    diameter: float
    omega3: float = OMEGA3
    volume_stderr: float = 0.0
    volume_seed: int | None = None


def summarize(domain, seed=0):
    est = volume_estimate(domain, seed=seed)
    return GeometrySummary(
        volume=est.value,
        A=est.value ** (1.0 / 3.0) if domain.dimension == 3 else None,
        slab_diameter=slab_diameter(domain),
        diameter=diameter(domain),
        volume_stderr=est.stderr,
        volume_seed=est.seed,
    )


def scale_domain(domain, d):
    """The dilation ``d * domain``; the origin must be interior."""
    if not d > 0:
        raise DomainError("scale factor must be positive")
    origin = np.zeros(domain.dimension)
    if not domain.signed_distance(origin) < 0:
        raise DomainError("scaling requires the origin in the interior of the domain")
    if isinstance(domain, Ball):
        return Ball(np.asarray(domain.center) * d, domain.radius * d)
    if isinstance(domain, Box):
        return Box(np.asarray(domain.lo) * d, np.asarray(domain.hi) * d)
    return Polytope(domain.normals, np.asarray(domain.offsets) * d)


# --------------------------------------------------------------------------
# admissibility certificate


def _ratio_bound(num, den):
    return math.inf if den == 0 else num / den


@dataclass(frozen=True)
class ClauseEvaluation:
    clause: str
    passed: bool
    bounds: dict
    worst_bound: str
    worst_ratio: float


@dataclass(frozen=True)
class CertificateReport:
    """Verdict of the size conditions plus the scalar constants of the chosen clause.

    ``bounds_evaluated`` maps a bound name to ``(required, actual)``; the clause
    passes iff ``actual <= required`` for every entry. ``K`` is the smallest
    fixed point of the clause's majorant (``None`` when it has no root below
    the search cap), ``q`` the contraction constant evaluated at ``K`` and
    ``contraction_q`` the same constant with ``K = 1`` substituted.
    """

    clause: str
    passed: bool
    bounds_evaluated: dict
    K_bound: float
    contraction_q: float
    K: float | None
    q: float | None
    theorem: str
    Lam: float
    gamma: float
    dimension: int
    geometry: GeometrySummary
    majorant: MajorantParams
    violated_bound: str | None = None
    smoothness_relaxed: bool = False
    clauses: tuple = field(default=(), repr=False)

    @property
    def K_exists(self):
        return self.K is not None

    def to_dict(self):
        return {
            "clause": self.clause,
            "passed": self.passed,
            "theorem": self.theorem,
            "Lambda": self.Lam,
            "gamma": self.gamma,
            "dimension": self.dimension,
            "bounds_evaluated": {k: {"required": r, "actual": a} for k, (r, a) in self.bounds_evaluated.items()},
            "violated_bound": self.violated_bound,
            "K": self.K,
            "K_bound": self.K_bound,
            "q": self.q,
            "contraction_q": self.contraction_q,
            "smoothness_relaxed": self.smoothness_relaxed,
            "geometry": {
                "volume": self.geometry.volume,
                "A": self.geometry.A,
                "slab_diameter": self.geometry.slab_diameter,
                "diameter": self.geometry.diameter,
                "omega3": self.geometry.omega3,
                "volume_stderr": self.geometry.volume_stderr,
                "volume_seed": self.geometry.volume_seed,
            },
            "majorant": {
                "mode": self.majorant.mode,
                "size": self.majorant.size,
                "C": self.majorant.C,
            },
            "clauses": [
                {"clause": c.clause, "passed": c.passed, "worst_bound": c.worst_bound, "worst_ratio": c.worst_ratio}
                for c in self.clauses
            ],
        }


def _evaluate(clause, bounds):
    ratios = {k: (a / r if r > 0 else math.inf) if r != math.inf else 0.0 for k, (r, a) in bounds.items()}
    worst = max(ratios, key=ratios.get)
    passed = all(a <= r for r, a in bounds.values())
    return ClauseEvaluation(clause, passed, bounds, worst, ratios[worst])


def clause_bounds(clause, geom: GeometrySummary, Lam, gamma, n, Cn=None, radius=None):
    """Named ``(required, actual)`` pairs of one size clause, constants as printed."""
    C = EVANS_CONSTANT
    V, A, delta, d = geom.volume, geom.A, geom.slab_diameter, geom.diameter
    if clause == "T1_1a":
        return {
            "volume<=1": (1.0, V),
            "volume<=(8/(C(4L+g)))^3": (_ratio_bound(8.0, C * (4 * Lam + gamma)) ** 3, V),
            "slab<=1": (1.0, delta),
            "slab<=1.25*Vol^(1/3)": (1.25 * A, delta),
            "slab<=2/(0.75L+1)": (2.0 / (0.75 * Lam + 1.0), delta),
        }
    if clause == "T1_1b":
        return {
            "diam<=1": (1.0, d),
            "diam<=4/(C(2.5L+g))": (_ratio_bound(4.0, C * (2.5 * Lam + gamma)), d),
            "diam<=4/(1.5L+sqrt2)": (4.0 / (1.5 * Lam + math.sqrt(2.0)), d),
        }
    if clause == "T1_2":
        return {
            "radius<=1/2": (0.5, radius),
            "radius<=(n-1)/(Cn(2.5L+g))": (_ratio_bound(n - 1.0, Cn * (2.5 * Lam + gamma)), radius),
            "radius<=(n-1)/(1.5L+sqrt2)": ((n - 1.0) / (1.5 * Lam + math.sqrt(2.0)), radius),
        }
    if clause == "T2_1a":
        return {
            "volume<=(8/(C(1+g)))^3": ((8.0 / (C * (1.0 + gamma))) ** 3, V),
            "slab<=1": (1.0, delta),
            "slab<=1.25*Vol^(1/3)": (1.25 * A, delta),
        }
    if clause == "T2_1b":
        return {
            "diam<=1": (1.0, d),
            "diam<=4/(C(0.625+g))": (4.0 / (C * (0.625 + gamma)), d),
        }
    if clause == "T2_2":
        return {
            "radius<=1/2": (0.5, radius),
            "radius<=(n-1)/(Cn(0.625+g))": ((n - 1.0) / (Cn * (0.625 + gamma)), radius),
        }
    raise ValueError(f"unknown clause {clause!r}")


def _majorant_for(clause, geom, Lam, gamma, n, Cn, radius):
    if clause.endswith("_1a"):
        return MajorantParams(n, Lam, gamma, geom.A, EVANS_CONSTANT, "volume")
    if clause.endswith("_1b"):
        return MajorantParams(n, Lam, gamma, geom.diameter, EVANS_CONSTANT, "diameter")
    return MajorantParams(n, Lam, gamma, radius, Cn, "radius")


def check_admissibility(domain, Lam, gamma, theorem="T1", seed=0):
    """Evaluate the size clauses of the existence theorems for ``domain``.

    ``theorem="T1"`` uses the given ``Lam``; ``"T2"`` ignores it and works with
    ``Lambda = 1/4`` (the curvature is rescaled to that bound). For n = 3 the
    volume clause (``_1a``) and diameter clause (``_1b``) are tried in that
    order; for n >= 4 only balls are accepted (clause ``_2``). The first
    passing clause is reported; if none passes, the clause closest to passing
    (smallest worst actual/required ratio) is reported with its violated bound.
    """
    if theorem not in ("T1", "T2"):
        raise ValueError("theorem must be 'T1' or 'T2'")
    if Lam < 0 or gamma < 0:
        raise ValueError("Lambda and gamma must be nonnegative")
    n = domain.dimension
    if theorem == "T2":
        Lam = 0.25
    if n == 3:
        clauses = [f"{theorem}_1a", f"{theorem}_1b"]
    elif isinstance(domain, Ball):
        clauses = [f"{theorem}_2"]
    else:
        raise DomainError("for n >= 4 only balls are supported")

    geom = summarize(domain, seed=seed)
    radius = domain.radius if isinstance(domain, Ball) else None
    Cn = analysis.ball_green_constant(n).value if n >= 4 else None

    evals = [_evaluate(c, clause_bounds(c, geom, Lam, gamma, n, Cn, radius)) for c in clauses]
    passing = [e for e in evals if e.passed]
    chosen = passing[0] if passing else min(evals, key=lambda e: e.worst_ratio)

    maj = _majorant_for(chosen.clause, geom, Lam, gamma, n, Cn, radius)
    fp = analysis.smallest_fixed_point(maj)
    delta = geom.slab_diameter
    q = analysis.contraction_constant(delta, Lam, fp.K, n) if fp.exists else None
    return CertificateReport(
        clause=chosen.clause,
        passed=chosen.passed,
        bounds_evaluated=dict(chosen.bounds),
        K_bound=analysis.explicit_K_bound(maj),
        contraction_q=analysis.contraction_constant(delta, Lam, 1.0, n),
        K=fp.K,
        q=q,
        theorem=theorem,
        Lam=Lam,
        gamma=gamma,
        dimension=n,
        geometry=geom,
        majorant=maj,
        violated_bound=None if chosen.passed else chosen.worst_bound,
        smoothness_relaxed=not isinstance(domain, Ball),
        clauses=tuple(evals),
    )


def largest_admissible_scale(domain, Lam, gamma, d_max=1.0, theorem="T1", seed=0, rtol=1e-6,
                             require_fixed_point=False):
    """Largest ``d <= d_max`` (to ``rtol``) with ``d * domain`` certified, by bisection.

    Relies on the monotonicity of the size clauses under shrinking. With
    ``require_fixed_point`` the majorant of the reported clause must also have
    a fixed point ``K``; the size clauses alone do not guarantee one.
    """

    def ok(d):
        rep = check_admissibility(scale_domain(domain, d), Lam, gamma, theorem, seed)
        return rep.passed and (rep.K_exists or not require_fixed_point)

    if ok(d_max):
        return float(d_max)
    lo, hi = 0.0, float(d_max)
    while hi - lo > rtol * d_max:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


# --------------------------------------------------------------------------
# config literal


def parse_domain_literal(lines):
    """Parse ``ball c.. r`` / ``box lo.. hi..`` / ``polytope`` + rows ``n.. b``."""
    if isinstance(lines, str):
        lines = lines.splitlines()
    lines = [ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith("#")]
    if not lines:
        raise DomainError("empty domain literal")
    head = lines[0].split()
    kind = head[0].lower()
    try:
        nums = [float(t) for t in head[1:]]
        if kind == "ball":
            if len(lines) > 1:
                raise DomainError("ball literal takes a single line")
            return Ball(nums[:-1], nums[-1])
        if kind == "box":
            if len(lines) > 1 or len(nums) % 2:
                raise DomainError("box literal needs lo and hi corners on one line")
            k = len(nums) // 2
            return Box(nums[:k], nums[k:])
        if kind == "polytope":
            if nums:
                raise DomainError("polytope rows go on the following lines")
            rows = [[float(t) for t in ln.split()] for ln in lines[1:]]
            if not rows or len({len(r) for r in rows}) != 1:
                raise DomainError("polytope rows must all have the same length")
            return Polytope.from_halfspaces(rows)
    except (ValueError, IndexError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"malformed {kind} literal: {exc}") from exc
    raise DomainError(f"unknown domain kind {kind!r}")


def domain_literal(domain):
    fmt = lambda v: format(float(v), ".17g")  # noqa: E731
    if isinstance(domain, Ball):
        return "ball " + " ".join(map(fmt, (*domain.center, domain.radius)))
    if isinstance(domain, Box):
        return "box " + " ".join(map(fmt, (*domain.lo, *domain.hi)))
    rows = ["polytope"]
    for nrm, b in zip(domain.normals, domain.offsets):
        rows.append(" ".join(map(fmt, (*nrm, b))))
    return "\n".join(rows)
