"""P1 finite elements on a uniform triangulation of the unit square for
-div(a grad u) = f, u = 0 on the boundary, with a parametric coefficient."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp

UNIVERSE = tuple((a, b) for a in (0.25, 0.5, 0.75) for b in (0.25, 0.5, 0.75))

SOURCES = {
    "10*x1": lambda x: 10.0 * x[..., 0],
    "manufactured": lambda x: 2.0 * math.pi ** 2 * np.sin(math.pi * x[..., 0]) * np.sin(math.pi * x[..., 1]),
    "zero": lambda x: np.zeros(x.shape[:-1]),
}


class UnitSquareMesh:
    """(M+1)^2 vertices, M = 2^q, each cell cut along its rising diagonal."""

    def __init__(self, q: int):
        if q < 1:
            raise ValueError("mesh exponent q must be >= 1")
        self.q = int(q)
        self.M = M = 2 ** self.q
        self.h = 1.0 / M
        g = np.arange(M + 1)
        jj, ii = np.meshgrid(g, g, indexing="ij")
        self.nodes = np.column_stack([ii.ravel(), jj.ravel()]) * self.h  # node id = i + j (M+1)
        ci, cj = np.meshgrid(np.arange(M), np.arange(M), indexing="ij")
        ci, cj = ci.ravel(), cj.ravel()
        v00 = ci + cj * (M + 1)
        v10, v01, v11 = v00 + 1, v00 + M + 1, v00 + M + 2
        self.triangles = np.concatenate([np.column_stack([v00, v10, v11]),
                                         np.column_stack([v00, v11, v01])])
        interior = (ii.ravel() > 0) & (ii.ravel() < M) & (jj.ravel() > 0) & (jj.ravel() < M)
        self.interior_index = np.full(len(self.nodes), -1)
        self.interior_index[interior] = np.arange(interior.sum())
        self.n_interior = int(interior.sum())

    @cached_property
    def areas(self):
        p = self.nodes[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    def node_of(self, point) -> int:
        """Index of the vertex at ``point``; raises if the point is off-node."""
        x = np.asarray(point, dtype=np.float64) / self.h
        r = np.rint(x)
        if np.any(np.abs(x - r) > 1e-9) or np.any(r < 0) or np.any(r > self.M):
            raise ValueError(f"point {tuple(point)} is not a mesh node for h=2^-{self.q}")
        return int(r[0] + r[1] * (self.M + 1))


@dataclass(frozen=True)
class DiffusionField:
    """a(x, theta) = base + amplitude * sum_j j^-2 t_j sin(pi j x1) sin(pi j x2),
    with t = theta (affine) or t = sin(2 pi theta) (periodic)."""

    kind: str = "affine"
    s: int = 10
    amplitude: float | None = None
    base: float = 1.0

    def __post_init__(self):
        if self.kind not in ("affine", "periodic"):
            raise ValueError("field kind must be 'affine' or 'periodic'")
        if self.s < 1:
            raise ValueError("s must be >= 1")
        if self.amplitude is None:
            amp = 0.1 if self.kind == "affine" else 0.1 / math.sqrt(6.0)
            object.__setattr__(self, "amplitude", amp)

    def check_theta(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape[-1] != self.s:
            raise ValueError(f"theta has dimension {theta.shape[-1]}, expected {self.s}")
        if np.any(np.abs(theta) > 0.5) or not np.all(np.isfinite(theta)):
            raise ValueError("theta must lie in [-1/2, 1/2]^s")
        return theta

    def basis(self, x) -> np.ndarray:
        """psi_j(x) scaled by amplitude * j^-2, shape (..., s)."""
        x = np.asarray(x, dtype=np.float64)
        j = np.arange(1, self.s + 1)
        return (self.amplitude / j ** 2) * np.sin(math.pi * j * x[..., :1]) * np.sin(math.pi * j * x[..., 1:2])

    def transform(self, theta):
        theta = self.check_theta(theta)
        return np.sin(2.0 * math.pi * theta) if self.kind == "periodic" else theta

    def values(self, x, theta) -> np.ndarray:
        """a at points x (P, 2) for parameters theta (n, s) -> (n, P)."""
        t = np.atleast_2d(self.transform(theta))
        return self.base + t @ self.basis(np.atleast_2d(x)).T


def coefficient_eval(field: DiffusionField, x, theta) -> float:
    return float(field.values(np.asarray(x, dtype=np.float64)[None, :], np.asarray(theta)[None, :])[0, 0])


@dataclass(frozen=True)
class Design:
    sensors: tuple

    def __post_init__(self):
        pts = tuple((float(a), float(b)) for a, b in self.sensors)
        if not pts:
            raise ValueError("a design needs at least one sensor")
        if len(set(pts)) != len(pts):
            raise ValueError("design sensors must be distinct")
        if any(not (0 < a < 1 and 0 < b < 1) for a, b in pts):
            raise ValueError("sensors must lie in the open unit square")
        object.__setattr__(self, "sensors", pts)

    @property
    def k(self):
        return len(self.sensors)

    def label(self):
        return ";".join(f"({a:g},{b:g})" for a, b in self.sensors)


# Strang-Fix 6-point rule, exact for degree 4 (barycentric coords, weights sum to 1)
_Q6_A, _Q6_B = 0.445948490915965, 0.091576213509771
_Q6_BARY = np.array([[_Q6_A, _Q6_A, 1 - 2 * _Q6_A], [_Q6_A, 1 - 2 * _Q6_A, _Q6_A], [1 - 2 * _Q6_A, _Q6_A, _Q6_A],
                     [_Q6_B, _Q6_B, 1 - 2 * _Q6_B], [_Q6_B, 1 - 2 * _Q6_B, _Q6_B], [1 - 2 * _Q6_B, _Q6_B, _Q6_B]])
_Q6_W = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)


class ForwardModel:
    """Parametric solver plus point observations.

    ``cache_points`` are the nodes whose values are memoised per theta (the
    sensor universe by default); designs inside that set never trigger a
    second solve for the same theta.
    """

    def __init__(self, mesh: UnitSquareMesh | int, field: DiffusionField, source: str = "10*x1",
                 cache_points=UNIVERSE, use_cache: bool = True):
        self.mesh = mesh if isinstance(mesh, UnitSquareMesh) else UnitSquareMesh(mesh)
        self.field = field
        if source not in SOURCES:
            raise ValueError(f"unknown source {source!r}; choose from {sorted(SOURCES)}")
        self.source = source
        self.cache_points = tuple(tuple(map(float, p)) for p in cache_points)
        self._cache_nodes = np.array([self.mesh.node_of(p) for p in self.cache_points], dtype=np.int64)
        self.use_cache = use_cache
        self._cache: dict[bytes, np.ndarray] = {}
        self._lock = threading.Lock()
        self.solves = 0
        self._setup()

    # -- assembly --------------------------------------------------------
    def _setup(self):
        m = self.mesh
        tri, p = m.triangles, m.nodes[m.triangles]
        area = m.areas
        # barycentric gradients: grad(lambda_i) = rot(p_{i+2} - p_{i+1}) / (2|T|)
        grads = np.empty((len(tri), 3, 2))
        for a in range(3):
            e = p[:, (a + 2) % 3] - p[:, (a + 1) % 3]
            grads[:, a, 0] = -e[:, 1] / (2 * area)
            grads[:, a, 1] = e[:, 0] / (2 * area)
        local = area[:, None, None] * np.einsum("tad,tbd->tab", grads, grads)
        idx = m.interior_index[tri]
        n, band = m.n_interior, m.M  # interior ordering (i-1) + (j-1)(M-1): bandwidth M
        self._band = band
        rows, cols, vals, tids = [], [], [], []
        for a in range(3):
            for b in range(3):
                r, c = idx[:, a], idx[:, b]
                keep = (r >= 0) & (c >= 0) & (r <= c)
                rows.append(r[keep]); cols.append(c[keep])
                vals.append(local[keep, a, b]); tids.append(np.flatnonzero(keep))
        rows, cols = np.concatenate(rows), np.concatenate(cols)
        # upper banded storage: ab[band + r - c, c] = A[r, c]
        flat = (band + rows - cols) * n + cols
        self._band_map = sp.csr_matrix((np.concatenate(vals), (flat, np.concatenate(tids))),
                                       shape=((band + 1) * n, len(tri)))
        # load vector with the edge-midpoint rule (exact for the affine source)
        f = SOURCES[self.source]
        load = np.zeros(len(m.nodes))
        for a in range(3):
            mid = 0.5 * (p[:, a] + p[:, (a + 1) % 3])
            fm = f(mid) * area / 3.0 * 0.5  # each hat is 1/2 at its two incident midpoints
            np.add.at(load, tri[:, a], fm)
            np.add.at(load, tri[:, (a + 1) % 3], fm)
        self._load = load[m.interior_index >= 0]
        self._basis_c = self.field.basis(m.centroids)

    def element_coefficients(self, theta) -> np.ndarray:
        t = self.field.transform(theta)
        return self.field.base + self._basis_c @ t

    def assemble_and_solve(self, theta) -> np.ndarray:
        """Nodal solution on all (M+1)^2 vertices (zeros on the boundary)."""
        aT = self.element_coefficients(np.asarray(theta, dtype=np.float64))
        if np.any(aT <= 0):
            raise ValueError("coefficient is not positive; assembly is not SPD")
        n = self.mesh.n_interior
        ab = (self._band_map @ aT).reshape(self._band + 1, n)
        try:
            u_int = scipy.linalg.solveh_banded(ab, self._load, lower=False, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise ValueError("stiffness matrix is not SPD") from exc
        u = np.zeros(len(self.mesh.nodes))
        u[self.mesh.interior_index >= 0] = u_int
        self.solves += 1
        return u

    # -- observation -----------------------------------------------------
    def observe(self, solution, design: Design) -> np.ndarray:
        return np.asarray(solution)[[self.mesh.node_of(x) for x in design.sensors]]

    def forward(self, theta, design: Design) -> np.ndarray:
        return self.forward_batch(np.atleast_2d(theta), design)[0]

    def _cached_values(self, theta) -> np.ndarray:
        key = np.ascontiguousarray(theta, dtype=np.float64).tobytes()
        if self.use_cache:
            hit = self._cache.get(key)
            if hit is not None:
                return hit
        vals = self.assemble_and_solve(theta)[self._cache_nodes]
        if self.use_cache:
            with self._lock:
                self._cache[key] = vals
        return vals

    def universe_batch(self, thetas) -> np.ndarray:
        """Values at ``cache_points`` for each row of thetas -> (n, len(cache_points))."""
        thetas = self.field.check_theta(np.atleast_2d(thetas))
        return np.array([self._cached_values(t) for t in thetas]).reshape(len(thetas), len(self.cache_points))

    def forward_batch(self, thetas, design: Design) -> np.ndarray:
        """Observations G(theta) for each row of thetas -> (n, k)."""
        try:
            cols = [self.cache_points.index(x) for x in design.sensors]
        except ValueError:
            thetas = self.field.check_theta(np.atleast_2d(thetas))
            return np.array([self.observe(self.assemble_and_solve(t), design) for t in thetas])
        return self.universe_batch(thetas)[:, cols]

    def clear_cache(self):
        with self._lock:
            self._cache.clear()

    # -- diagnostics -----------------------------------------------------
    def l2_error(self, solution, exact) -> float:
        """||u_h - u||_L2 with a degree-4 rule per triangle."""
        m = self.mesh
        p = m.nodes[m.triangles]
        xq = np.einsum("qa,tad->tqd", _Q6_BARY, p)
        uh = np.einsum("qa,ta->tq", _Q6_BARY, np.asarray(solution)[m.triangles])
        err = (uh - exact(xq)) ** 2
        return float(np.sqrt(np.sum(m.areas[:, None] * _Q6_W[None, :] * err)))


def assemble_and_solve(model: ForwardModel, theta) -> np.ndarray:
    return model.assemble_and_solve(theta)


def observe(model: ForwardModel, solution, design: Design) -> np.ndarray:
    return model.observe(solution, design)


def forward(model: ForwardModel, theta, design: Design) -> np.ndarray:
    return model.forward(theta, design)
