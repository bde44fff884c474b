"""Finite-volume solver for ``rho u_t = 1/2 (rho A u_x)_x``.

Cells are aligned so that both interfaces are cell faces. Face
conductances are harmonic averages of ``rho*A`` over the two half cells,
which makes the flux exact for piecewise-linear profiles across an
interface. Time stepping is implicit Euler, optionally Richardson
extrapolated over successively halved steps.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ConvergenceError, ParameterError
from .expansion import PiecewiseInitialData, PolynomialPiece
from .medium import PhysicalMedium, region_index

__all__ = [
    "Grid",
    "Field",
    "OracleValues",
    "make_grid",
    "grid_for_problem",
    "solve",
    "far_field",
    "oracle_values",
    "representation_check",
    "boundary_influence",
    "BoundaryInfluenceWarning",
]

MARGIN_SIGMAS = 12.0
_ROUNDOFF = 1e-11


class BoundaryInfluenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class Grid:
    faces: np.ndarray

    def __post_init__(self):
        faces = np.asarray(self.faces, dtype=float)
        if faces.ndim != 1 or faces.size < 3 or np.any(np.diff(faces) <= 0):
            raise ParameterError("grid faces must be strictly increasing with at least 2 cells")
        object.__setattr__(self, "faces", faces)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.faces[1:] + self.faces[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.faces)

    @property
    def n_cells(self) -> int:
        return self.faces.size - 1

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.faces[0]), float(self.faces[-1])

    def has_face(self, x: float, tol: float = 1e-12) -> bool:
        return bool(np.any(np.abs(self.faces - x) <= tol * max(1.0, abs(x))))


def make_grid(a: float, x_lo: float, x_hi: float, dx: float) -> Grid:
    """Piecewise-uniform grid on ``[x_lo, x_hi]`` with faces at 0 and ``a``."""
    if not (dx > 0 and x_lo < x_hi):
        raise ParameterError("need dx > 0 and x_lo < x_hi")
    breaks = sorted({x_lo, x_hi} | {b for b in (0.0, a) if x_lo < b < x_hi})
    faces = [breaks[0]]
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        n = max(1, math.ceil((hi - lo) / dx - 1e-9))
        faces.extend(np.linspace(lo, hi, n + 1)[1:])
    return Grid(np.array(faces))


def grid_for_problem(m: PhysicalMedium, T: float, x_points, dx: float = 1e-3,
                     margin: float = MARGIN_SIGMAS) -> Grid:
    """Grid with a ``margin * sqrt(max a_i * T)`` buffer around the points and both interfaces.

    The ends are snapped to multiples of ``dx`` so that every cell has width
    ``dx`` whenever ``a`` is itself a multiple of ``dx``.
    """
    pts = np.atleast_1d(np.asarray(x_points, dtype=float))
    buf = margin * math.sqrt(max(m.diffusivities) * T)
    lo = min(pts.min(), 0.0) - buf
    hi = max(pts.max(), m.a) + buf
    lo = math.floor(lo / dx) * dx
    hi = m.a + math.ceil((hi - m.a) / dx) * dx
    return make_grid(m.a, lo, hi, dx)


@dataclass(frozen=True)
class Field:
    """Cell values of ``u`` at ``time`` plus what is needed to interpolate them."""

    grid: Grid
    values: np.ndarray
    time: float
    conductance: np.ndarray
    boundary: tuple[float, float]

    def _layer_cells(self, face: int, side: int, count: int) -> list[int]:
        """Up to ``count`` cells next to ``face`` on one side, all in one layer."""
        first = face - 1 if side < 0 else face
        if not 0 <= first < self.values.size:
            return []
        cells = [first]
        while len(cells) < count:
            nxt = cells[-1] + side
            if not 0 <= nxt < self.values.size or self.conductance[nxt] != self.conductance[first]:
                break
            cells.append(nxt)
        return cells

    def face_value(self, face: int) -> float:
        """Value of ``u`` on face ``face``.

        Each side is fitted by a one-sided polynomial through the face and
        up to three cell centers of the same layer; the face value is the one
        for which both fits carry the same flux ``rho*A*u_x``. Away from
        interfaces this reduces to matching the one-sided derivatives.
        """
        n = self.values.size
        if face == 0:
            return self.boundary[0]
        if face == n:
            return self.boundary[1]
        xf = self.grid.faces[face]
        xc = self.grid.centers
        num = 0.0
        den = 0.0
        for side, sgn in ((-1, -1.0), (1, 1.0)):
            cells = self._layer_cells(face, side, 3)
            offsets = np.concatenate([[0.0], xc[cells] - xf])
            wts = _derivative_weights(offsets)
            k = self.conductance[cells[0]]
            # flux balance: k_L u'_L = k_R u'_R
            num += -sgn * k * np.dot(wts[1:], self.values[cells])
            den += sgn * k * wts[0]
        return float(num / den)

    def face_values(self) -> np.ndarray:
        """Values on all faces (Dirichlet data at the two ends)."""
        return np.array([self.face_value(j) for j in range(self.values.size + 1)])

    def at(self, x):
        """Evaluate ``u`` at ``x``.

        Face points return :meth:`face_value`; other points use the cubic
        through the four nearest nodes of the same layer, where nodes are
        cell centers and the layer's bounding faces.
        """
        x = np.asarray(x, dtype=float)
        lo, hi = self.grid.domain
        if np.any((x < lo) | (x > hi)):
            raise ParameterError("evaluation point outside the grid")
        faces = self.grid.faces
        xc = self.grid.centers
        flat = np.atleast_1d(x).ravel()
        res = np.empty(flat.size)
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        for n, xv in enumerate(flat):
            j = int(np.searchsorted(faces, xv))
            hit = [f for f in (j - 1, j) if 0 <= f < faces.size and abs(faces[f] - xv) <= tol]
            if hit:
                res[n] = self.face_value(hit[0])
                continue
            c = j - 1
            left = self._layer_cells(c + 1, -1, 3)
            right = self._layer_cells(c, 1, 3)
            nodes = {xc[i]: (lambda i=i: self.values[i]) for i in set(left) | set(right)}
            if len(left) < 3:
                f = left[-1]
                nodes[faces[f]] = lambda f=f: self.face_value(f)
            if len(right) < 3:
                f = right[-1] + 1
                nodes[faces[f]] = lambda f=f: self.face_value(f)
            pts = sorted(nodes, key=lambda p: abs(p - xv))[:4]
            res[n] = _lagrange(np.array(pts), np.array([nodes[p]() for p in pts]), xv)
        return float(res[0]) if x.ndim == 0 else res.reshape(x.shape)

    def to_csv_rows(self):
        for xc, u in zip(self.grid.centers, self.values):
            yield xc, u


def _derivative_weights(offsets: np.ndarray) -> np.ndarray:
    """Weights ``w`` with ``f'(0) ~ sum w_i f(offsets_i)``, exact for degree < len(offsets)."""
    m = offsets.size
    vander = np.vander(offsets, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[1] = 1.0
    return np.linalg.solve(vander, rhs)


def _lagrange(nodes, vals, x):
    total = 0.0
    for i in range(nodes.size):
        li = 1.0
        for j in range(nodes.size):
            if j != i:
                li *= (x - nodes[j]) / (nodes[i] - nodes[j])
        total += vals[i] * li
    return total


def far_field(h: PiecewiseInitialData, m: PhysicalMedium, x: float, t: float) -> float:
    """Free-space heat evolution of the layer's piece at ``x``.

    Exact (far from the interfaces) for polynomial pieces:
    ``sum_j h^(2j)(x) (A t / 2)^j / j!``. Other pieces are held at ``h(x)``.
    """
    i = int(region_index(x, m.a))
    pc = h.pieces[i]
    A = m.diffusivities[i]
    if not isinstance(pc, PolynomialPiece):
        val = float(pc.value(x))
    else:
        val = 0.0
        for j in range(pc.degree // 2 + 1):
            val += float(pc.derivative(2 * j, x)) * (A * t / 2) ** j / math.factorial(j)
    if h.clamp is not None:
        val = min(max(val, h.clamp[0]), h.clamp[1])
    return val


def boundary_influence(m: PhysicalMedium, h: PiecewiseInitialData, T: float, grid: Grid) -> float:
    """Gaussian-tail bound on how far the edge values depart from the far field.

    Away from the interfaces the solution is the free evolution of the outer
    pieces; the interfaces perturb it by at most ``scale * exp(-d^2 / (2 A T))``
    at distance ``d``, with ``scale`` the size of ``h`` at the interfaces.
    """
    lo, hi = grid.domain
    scale = 1.0 + sum(abs(float(h.piece_derivative(i, 0, c)))
                      for i, c in ((0, 0.0), (1, 0.0), (1, m.a), (2, m.a)))
    worst = 0.0
    for dist, A in ((0.0 - lo, m.a1), (hi - m.a, m.a3)):
        if dist <= 0:
            return scale
        worst = max(worst, math.exp(-dist * dist / (2.0 * A * T)))
    return scale * worst


def _assemble(m: PhysicalMedium, grid: Grid):
    xc = grid.centers
    w = grid.widths
    k = m.density(xc) * m.diffusivity(xc)
    mass = m.density(xc) * w
    half = 0.5 * w / k
    kappa_in = 1.0 / (half[:-1] + half[1:])
    kappa_lo = 1.0 / half[0]
    kappa_hi = 1.0 / half[-1]
    diag = np.zeros(grid.n_cells)
    diag[:-1] += kappa_in
    diag[1:] += kappa_in
    diag[0] += kappa_lo
    diag[-1] += kappa_hi
    # stiffness of 1/2 d/dx(rho A d/dx): K = 0.5 * (diag, -kappa_in)
    return mass, 0.5 * diag, -0.5 * kappa_in, 0.5 * kappa_lo, 0.5 * kappa_hi, k


def _implicit_euler(mass, kd, ko, klo, khi, u0, T, n, g_lo, g_hi):
    dt = T / n
    ab = np.zeros((2, mass.size))
    ab[0, 1:] = dt * ko
    ab[1] = mass + dt * kd
    try:
        cb = linalg.cholesky_banded(ab)
    except linalg.LinAlgError as exc:
        raise ConvergenceError("implicit Euler system is not positive definite") from exc
    u = u0.copy()
    for step in range(1, n + 1):
        t = step * dt
        rhs = mass * u
        rhs[0] += dt * klo * g_lo(t)
        rhs[-1] += dt * khi * g_hi(t)
        u = linalg.cho_solve_banded((cb, False), rhs)
    if not np.all(np.isfinite(u)):
        raise ConvergenceError("finite-volume solve produced non-finite values")
    return u


def solve(m: PhysicalMedium, h: PiecewiseInitialData, T: float, grid: Grid, dt: float,
          *, richardson: int = 0, boundary_tol: float = 1e-10) -> Field:
    """Advance ``u(0, .) = h`` to time ``T``.

    Parameters
    ----------
    dt : float
        Requested step; the actual step is ``T / ceil(T / dt)``.
    richardson : int
        Number of extrapolation levels. Level ``j`` reruns with the step
        halved ``j`` times and eliminates the ``dt^j`` error term.
    boundary_tol : float
        A :class:`BoundaryInfluenceWarning` is issued when
        :func:`boundary_influence` exceeds this.
    """
    if not (T > 0 and math.isfinite(T)):
        raise ParameterError("T must be finite and > 0")
    if not dt > 0:
        raise ParameterError("dt must be > 0")
    if richardson < 0:
        raise ParameterError("richardson must be >= 0")
    mass, kd, ko, klo, khi, cond = _assemble(m, grid)
    lo, hi = grid.domain
    u0 = np.asarray(h(grid.centers, m.a), dtype=float)
    n = max(1, math.ceil(T / dt - 1e-9))

    def g_lo(t):
        return far_field(h, m, lo, t)

    def g_hi(t):
        return far_field(h, m, hi, t)

    runs = [_implicit_euler(mass, kd, ko, klo, khi, u0, T, n * 2**j, g_lo, g_hi)
            for j in range(richardson + 1)]
    # Neville table for an error expansion in powers of dt
    for level in range(1, richardson + 1):
        fac = 2.0**level
        runs = [(fac * runs[i + 1] - runs[i]) / (fac - 1.0) for i in range(len(runs) - 1)]
    u = runs[0]

    leak = boundary_influence(m, h, T, grid)
    if leak > boundary_tol:
        warnings.warn(
            f"interface influence at the domain edge is about {leak:.3g}; enlarge the domain",
            BoundaryInfluenceWarning,
            stacklevel=2,
        )
    return Field(grid, u, float(T), cond, (g_lo(T), g_hi(T)))


@dataclass(frozen=True)
class OracleValues:
    """Point values of ``u(T, .)`` with an a-posteriori error bound."""

    x: np.ndarray
    values: np.ndarray
    bound: np.ndarray
    dx: float
    n_steps: int


def oracle_values(m: PhysicalMedium, h: PiecewiseInitialData, T: float, x_points,
                  *, dx: float = 1e-3, n_steps: int = 200, richardson: int = 2,
                  refine: bool = True) -> OracleValues:
    """Reference values of ``u(T, x)`` for testing.

    Solves on ``dx`` and, with ``refine``, on ``dx/2`` and extrapolates
    ``(4 u_{dx/2} - u_dx) / 3``. The cell-value error next to an interface
    is ``O(dx^2)`` wherever ``u_xx`` jumps, so this removes the leading
    term. ``bound`` is the size of the removed correction plus the time
    extrapolation change, which over-estimates the remaining error, plus a
    round-off floor of ``1e-11 * max(1, |u|)`` for the repeated banded
    solves and the two extrapolations.
    """
    xs = np.atleast_1d(np.asarray(x_points, dtype=float))

    def run(step, rich):
        grid = grid_for_problem(m, T, xs, step)
        return solve(m, h, T, grid, T / n_steps, richardson=rich).at(xs)

    coarse = run(dx, richardson)
    # time error estimate from one extrapolation level less
    t_err = np.abs(coarse - run(dx, max(0, richardson - 1))) if richardson else np.abs(coarse) * 0.0
    if not refine:
        return OracleValues(xs, coarse, t_err + _ROUNDOFF * np.maximum(1.0, np.abs(coarse)), dx, n_steps)
    fine = run(dx / 2, richardson)
    vals = (4.0 * fine - coarse) / 3.0
    bound = np.abs(fine - coarse) / 3.0 + t_err + _ROUNDOFF * np.maximum(1.0, np.abs(vals))
    return OracleValues(xs, vals, bound, dx, n_steps)


def representation_check(m: PhysicalMedium, h: PiecewiseInitialData, T: float, x_list,
                         *, mc_paths: int = 0, seed: int = 0, dx: float = 1e-3) -> dict:
    """Residuals of the oracle against the expansion and, optionally, Monte Carlo.

    Returns per point: oracle value and bound, expansion partial sum and its
    residual, and (when ``mc_paths > 0``) the MC estimate, stderr and residual.
    """
    from .expansion import expand_u
    from .medium import to_sde_params
    from .montecarlo import SamplerConfig, estimate_expectation

    params = to_sde_params(m)
    orc = oracle_values(m, h, T, x_list, dx=dx)
    rows = []
    for xv, uo, ub in zip(orc.x, orc.values, orc.bound):
        row = {"x": float(xv), "oracle": float(uo), "oracle_bound": float(ub)}
        exp = float(expand_u(params, h, float(xv), T).value)
        row["expansion"] = exp
        row["residual_expansion"] = exp - float(uo)
        if mc_paths:
            est = estimate_expectation(params, h, float(xv), T, SamplerConfig(n_paths=mc_paths, seed=seed))
            row["mc"] = est.estimate
            row["mc_stderr"] = est.stderr
            row["residual_mc"] = est.estimate - float(uo)
        rows.append(row)
    return {"T": float(T), "points": rows}
