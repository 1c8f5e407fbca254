"""Finite differences for the Dirichlet Poisson problem on an embedded domain.

The domain is cut out of a uniform Cartesian lattice. Lattice points with
negative signed distance are unknowns; where a stencil leg leaves the domain
it is shortened to the boundary crossing at fraction ``theta`` of the mesh
size, and the boundary value is used there. Along each axis the Laplacian is

    [(u_+ - u_0) / theta_+ + (u_- - u_0) / theta_-] / h^2

which couples interior neighbours with the symmetric weight ``1/h^2``. The
resulting matrix is a symmetric M-matrix (negative definite), so the system is
solved with Jacobi-preconditioned conjugate gradients. The solution error is
second order in ``h`` even though the local truncation error at nodes next to
the boundary is not.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .geometry import domain_literal, slab_diameter

__all__ = [
    "GridError",
    "SolverError",
    "Grid",
    "ScalarField",
    "VectorField",
    "build_grid",
    "solve_dirichlet",
    "gradient",
    "norms",
    "laplacian",
    "laplacian_residual",
    "conjugate_gradient",
    "write_field_csv",
    "write_field_binary",
    "read_field_binary",
]

BISECTION_TOL = 1e-12
CG_RTOL = 1e-10
RESIDUAL_FLOOR = 1e-8


class GridError(ValueError):
    pass


class SolverError(RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class Grid:
    """Interior lattice nodes of a domain with their stencil arms.

    ``neighbors[i, a, s]`` is the index of the neighbour of node ``i`` along
    axis ``a`` on side ``s`` (0 = minus, 1 = plus), or -1 if that leg reaches
    the boundary; ``theta[i, a, s]`` is the leg length in units of
    ``mesh_size`` (1 for interior neighbours). Node order is lexicographic in
    the lattice index.
    """

    domain: object
    mesh_size: float
    origin: np.ndarray
    shape: tuple
    lattice_index: np.ndarray
    points: np.ndarray
    neighbors: np.ndarray
    theta: np.ndarray

    @property
    def dimension(self):
        return self.points.shape[1]

    @property
    def size(self):
        return self.points.shape[0]

    @property
    def cell_volume(self):
        return self.mesh_size**self.dimension

    @functools.cached_property
    def boundary_arms(self):
        """Flat arrays ``(node, axis, side, theta, crossing_point)`` of boundary legs."""
        node, axis, side = np.nonzero(self.neighbors < 0)
        th = self.theta[node, axis, side]
        sign = np.where(side == 1, 1.0, -1.0)
        pts = self.points[node].copy()
        pts[np.arange(node.size), axis] += sign * th * self.mesh_size
        return node, axis, side, th, pts

    @functools.cached_property
    def regular_mask(self):
        """Nodes whose 2n neighbours are all interior nodes (no cut leg)."""
        return np.all(self.neighbors >= 0, axis=(1, 2))

    @functools.cached_property
    def weights(self):
        return 1.0 / (self.theta * self.mesh_size**2)

    @functools.cached_property
    def matrix(self):
        """Discrete Laplacian restricted to interior unknowns (CSR)."""
        N = self.size
        w = self.weights
        inner = self.neighbors >= 0
        rows = np.broadcast_to(np.arange(N)[:, None, None], self.neighbors.shape)[inner]
        cols = self.neighbors[inner]
        vals = w[inner]
        diag = -w.sum(axis=(1, 2))
        A = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
        return (A + sp.diags(diag)).tocsr()

    def boundary_term(self, boundary):
        """Contribution of boundary values to the discrete Laplacian."""
        node, axis, side, th, pts = self.boundary_arms
        g = _boundary_values(boundary, pts)
        out = np.zeros(self.size)
        np.add.at(out, node, self.weights[node, axis, side] * g)
        return out

    def scaled(self, factor, domain):
        """The same lattice topology dilated by ``factor`` onto ``domain``."""
        return Grid(
            domain=domain,
            mesh_size=self.mesh_size * factor,
            origin=self.origin * factor,
            shape=self.shape,
            lattice_index=self.lattice_index,
            points=self.points * factor,
            neighbors=self.neighbors,
            theta=self.theta,
        )

    def metadata(self):
        lo, hi = self.domain.bounding_box()
        return {
            "dimension": self.dimension,
            "mesh_size": self.mesh_size,
            "origin": [float(v) for v in self.origin],
            "lattice_shape": list(self.shape),
            "bounding_box": {"lo": [float(v) for v in lo], "hi": [float(v) for v in hi]},
            "node_count": self.size,
            "node_order": "lexicographic by lattice coordinate",
            "domain": domain_literal(self.domain),
        }


def _boundary_values(boundary, pts):
    if boundary is None:
        return np.zeros(pts.shape[0])
    if callable(boundary):
        return np.broadcast_to(np.asarray(boundary(pts), dtype=float), (pts.shape[0],)).copy()
    return np.full(pts.shape[0], float(boundary))


def build_grid(domain, mesh_size, check_resolution=True):
    """Lattice discretisation of ``domain`` with spacing ``mesh_size``.

    The lattice is anchored at the lower corner of the bounding box and padded
    by one cell. With ``check_resolution`` the mesh must resolve the thinnest
    direction with at least 8 cells.
    """
    h = float(mesh_size)
    if not h > 0:
        raise GridError("mesh_size must be positive")
    if check_resolution:
        delta = slab_diameter(domain)
        if h > delta / 8.0 * (1 + 1e-12):
            raise GridError(
                f"mesh_size {h:.6g} is too coarse: need mesh_size <= slab_diameter/8 = {delta / 8.0:.6g}"
            )
    lo, hi = domain.bounding_box()
    n = domain.dimension
    origin = np.asarray(lo, dtype=float) - h
    shape = tuple(int(math.ceil((hi[a] - lo[a]) / h - 1e-9)) + 3 for a in range(n))
    if np.prod(shape, dtype=float) > 5e7:
        raise GridError(f"lattice {shape} is too large")

    axes = [origin[a] + h * np.arange(shape[a]) for a in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=1)
    eps = 1e-10 * h
    sd = domain.signed_distance(X)
    inside = sd < -eps
    if not np.any(inside):
        raise GridError("no lattice point lies inside the domain; refine the mesh")

    flat_index = -np.ones(X.shape[0], dtype=np.int64)
    flat_index[inside] = np.arange(np.count_nonzero(inside))
    index_grid = flat_index.reshape(shape)
    lattice = np.stack(np.nonzero(inside.reshape(shape)), axis=1)
    points = X[inside]
    N = points.shape[0]

    neighbors = np.empty((N, n, 2), dtype=np.int64)
    theta = np.ones((N, n, 2))
    for a in range(n):
        for s, step in enumerate((-1, 1)):
            nb_lat = lattice.copy()
            nb_lat[:, a] += step
            nb = index_grid[tuple(nb_lat.T)]
            neighbors[:, a, s] = nb
            out = nb < 0
            if not np.any(out):
                continue
            p0 = points[out]
            e = np.zeros(n)
            e[a] = step * h
            sd_end = domain.signed_distance(p0 + e)
            on_boundary = sd_end <= eps
            t = np.ones(p0.shape[0])
            todo = ~on_boundary
            if np.any(todo):
                t[todo] = _bisect_crossing(domain, p0[todo], e)
            theta[out, a, s] = t
    return Grid(domain, h, origin, shape, lattice, points, neighbors, theta)


def _bisect_crossing(domain, p0, e):
    lo = np.zeros(p0.shape[0])
    hi = np.ones(p0.shape[0])
    while np.max(hi - lo) > BISECTION_TOL:
        mid = 0.5 * (lo + hi)
        inside = domain.signed_distance(p0 + mid[:, None] * e) < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return hi


# --------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Values at interior nodes plus the Dirichlet data on the boundary.

    ``boundary`` is ``None`` (zero), a constant, or a callable on point arrays.
    """

    grid: Grid
    values: np.ndarray
    boundary: object = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ValueError(f"field has {v.shape} values, grid has {self.grid.size} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    def boundary_values(self):
        return _boundary_values(self.boundary, self.grid.boundary_arms[4])

    @classmethod
    def from_function(cls, grid, func, boundary=None):
        return cls(grid, np.asarray(func(grid.points), dtype=float), boundary)


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size, self.grid.dimension):
            raise ValueError("vector field must have one n-vector per node")
        object.__setattr__(self, "values", v)


def _source_values(grid, source):
    if isinstance(source, ScalarField):
        if source.grid is not grid:
            raise GridError("source lives on a different grid")
        return source.values
    if callable(source):
        return np.asarray(source(grid.points), dtype=float)
    arr = np.asarray(source, dtype=float)
    if arr.ndim == 0:
        return np.full(grid.size, float(arr))
    if arr.shape != (grid.size,):
        raise GridError("source does not match grid")
    return arr


# --------------------------------------------------------------------------
# operators


def conjugate_gradient(A, b, x0=None, rtol=CG_RTOL, maxiter=None):
    """Jacobi-preconditioned CG for a symmetric positive definite ``A``.

    Stops when ``||b - A x|| <= rtol * ||b||``. Raises :class:`SolverError`
    after ``maxiter`` iterations (default ``20 * len(b)``).
    """
    n = b.size
    maxiter = 20 * n if maxiter is None else maxiter
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    target = rtol * bnorm
    rnorm = np.linalg.norm(r)
    if rnorm <= target:
        return x, 0
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            # guard against drift of the recursive residual
            true_r = np.linalg.norm(b - A @ x)
            if true_r <= target:
                return x, it
            r = b - A @ x
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"CG did not converge in {maxiter} iterations (relative residual {rnorm / bnorm:.3e})",
        residual=rnorm / bnorm,
        iterations=maxiter,
    )


def solve_dirichlet(grid, source, boundary=None, x0=None, rtol=CG_RTOL):
    """Solve ``Delta u = source`` in the domain, ``u = boundary`` on its boundary.

    On return ``sup |Delta_h u - source| <= 1e-8 sup |source|`` (relative to the
    boundary contribution when the source vanishes), up to rounding.
    """
    f = _source_values(grid, source)
    rhs = grid.boundary_term(boundary) - f
    guess = None if x0 is None else np.asarray(x0.values if isinstance(x0, ScalarField) else x0)
    A = -grid.matrix
    u, _ = conjugate_gradient(A, rhs, x0=guess, rtol=rtol)
    # Large weights on short boundary legs make ||rhs|| much bigger than the
    # source, so the relative CG criterion alone does not bound the nodewise
    # residual. Tighten until sup|Delta_h u - source| <= 1e-8 sup|source|.
    scale = float(np.max(np.abs(f), initial=0.0)) or float(np.max(np.abs(rhs), initial=0.0))
    while rtol > 1e-15 and np.max(np.abs(rhs - A @ u), initial=0.0) > RESIDUAL_FLOOR * scale:
        rtol *= 1e-2
        u, _ = conjugate_gradient(A, rhs, x0=u, rtol=rtol)
    return ScalarField(grid, u, boundary)


def laplacian(field):
    """Discrete Laplacian of a field, using its boundary data on cut legs."""
    g = field.grid
    return g.matrix @ field.values + g.boundary_term(field.boundary)


def laplacian_residual(field, source):
    """``sup |Delta_h field - source|`` over interior nodes."""
    f = _source_values(field.grid, source)
    return float(np.max(np.abs(laplacian(field) - f)))


def gradient(field):
    """Node gradient from three-point differences along each axis.

    Each axis uses the quadratic through the node and the ends of its two
    legs (neighbour values or boundary data at the crossing), which is the
    centred difference when both legs are full and second order otherwise.
    """
    g = field.grid
    h = g.mesh_size
    N, n = g.size, g.dimension
    ends = np.empty((N, n, 2))
    inner = g.neighbors >= 0
    ends[inner] = field.values[g.neighbors[inner]]
    node, axis, side, _, _ = g.boundary_arms
    ends[node, axis, side] = field.boundary_values()
    a = g.theta[:, :, 0] * h
    b = g.theta[:, :, 1] * h
    u0 = field.values[:, None]
    grad = (-b / (a * (a + b))) * ends[:, :, 0] + ((b - a) / (a * b)) * u0 + (a / (b * (a + b))) * ends[:, :, 1]
    return VectorField(g, grad)


@dataclass(frozen=True)
class Norms:
    sup_norm: float
    l2_norm: float
    h10_seminorm: float | None


def norms(field):
    """Sup, discrete L2 (``sqrt(sum v^2 h^n)``) and H^1_0 seminorm of a field.

    For a :class:`VectorField` the pointwise Euclidean length is used and the
    seminorm is ``None``.
    """
    g = field.grid
    if isinstance(field, VectorField):
        mag = np.linalg.norm(field.values, axis=1)
        return Norms(float(mag.max(initial=0.0)), float(math.sqrt(np.sum(mag**2) * g.cell_volume)), None)
    v = field.values
    grad = norms(gradient(field)).l2_norm
    return Norms(float(np.abs(v).max(initial=0.0)), float(math.sqrt(np.sum(v * v) * g.cell_volume)), grad)


# --------------------------------------------------------------------------
# export


def _coord_names(n):
    return ["x", "y", "z"] if n == 3 else [f"x{i + 1}" for i in range(n)]


def write_field_csv(field, path):
    """Write ``x,y,z,value`` rows (``x1..xn`` for n != 3) with 17 significant digits."""
    g = field.grid
    path = Path(path)
    with path.open("w") as fh:
        fh.write(",".join(_coord_names(g.dimension) + ["value"]) + "\n")
        data = np.column_stack([g.points, field.values])
        for row in data:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")
    return path


def write_field_binary(field, path):
    """Column dump (coordinates then values, little-endian float64) plus JSON sidecar."""
    g = field.grid
    path = Path(path)
    cols = np.column_stack([g.points, field.values]).astype("<f8")
    path.write_bytes(np.asfortranarray(cols).tobytes(order="F"))
    meta = g.metadata()
    meta.update({"columns": _coord_names(g.dimension) + ["value"], "dtype": "<f8", "layout": "column-major"})
    sidecar = path.with_suffix(path.suffix + ".json")
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path, sidecar


def read_field_binary(path):
    """Inverse of :func:`write_field_binary`: returns ``(metadata, columns dict)``."""
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    raw = np.frombuffer(path.read_bytes(), dtype=meta["dtype"])
    data = raw.reshape((meta["node_count"], len(meta["columns"])), order="F")
    return meta, {name: data[:, i].copy() for i, name in enumerate(meta["columns"])}
