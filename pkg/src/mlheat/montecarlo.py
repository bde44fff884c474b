"""Exact-in-law simulation of the two-interface diffusion.

A step started at ``x <= a/2`` is drawn from the diffusion with a single
interface at 0, a step started above ``a/2`` from the one with a single
interface at ``a``. Both draws are exact: skew Brownian motion in scale
coordinates, mapped back through the piecewise-linear inverse scale. The
step size keeps the chance of touching the far interface within one step
below ``coupling_eps``.

Randomness comes from ``numpy.random.SeedSequence(seed)``: paths are cut
into fixed blocks and block ``b`` uses the child stream with spawn key
``(b,)``, so results do not depend on how many workers run.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, ParameterError
from .expansion import PiecewiseInitialData
from .kernels import cdf_single_0, cdf_single_a
from .medium import SdeParams

__all__ = [
    "SCHEMES",
    "SamplerConfig",
    "PathSample",
    "MCEstimate",
    "skew_bm_step",
    "sample_single_interface_step",
    "sample_single_interface_inverse_cdf",
    "step_size",
    "simulate_path",
    "simulate_terminal",
    "estimate_expectation",
    "coupling_failure_rate",
    "max_workers",
]

SCHEMES = ("exact_single_0", "exact_single_a", "two_interface_closed_form")
_EXACT_0, _EXACT_A, _CLOSED = range(3)


def max_workers() -> int:
    """Worker cap from ``MLH_THREADS`` (default: CPU count)."""
    env = os.environ.get("MLH_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ParameterError(f"MLH_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ParameterError("MLH_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SamplerConfig:
    dt_max: float = 1e-2
    coupling_eps: float = 1e-9
    n_paths: int = 10_000
    seed: int = 0
    block_size: int = 8192

    def __post_init__(self):
        if not (self.dt_max > 0 and math.isfinite(self.dt_max)):
            raise ParameterError("dt_max must be finite and > 0")
        if not 0 < self.coupling_eps < 1:
            raise ParameterError("coupling_eps must lie in (0, 1)")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ParameterError("n_paths must be an integer >= 1")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ParameterError("seed must be a non-negative integer")
        if int(self.block_size) != self.block_size or self.block_size < 1:
            raise ParameterError("block_size must be an integer >= 1")


@dataclass(frozen=True)
class PathSample:
    """Simulated paths on a common time grid.

    ``states`` has shape ``(n_paths, len(times))`` and ``scheme`` holds, per
    path and step, an index into :data:`SCHEMES`.
    """

    times: np.ndarray
    states: np.ndarray
    scheme: np.ndarray
    seed: int

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    def scheme_names(self) -> np.ndarray:
        return np.asarray(SCHEMES)[self.scheme]

    def iter_rows(self):
        """``(path_id, t, x, scheme)`` rows; the scheme is the one used to reach ``x``."""
        names = SCHEMES
        for pid in range(self.n_paths):
            for j, t in enumerate(self.times):
                tag = "initial" if j == 0 else names[self.scheme[pid, j - 1]]
                yield pid, float(t), float(self.states[pid, j]), tag


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    stderr: float
    n_paths: int
    seed: int
    scheme: str

    def to_dict(self) -> dict:
        return {
            "estimator": "sample_mean",
            "estimate": self.estimate,
            "stderr": self.stderr,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "scheme": self.scheme,
        }


# ------------------------------------------------------------------ steps


def skew_bm_step(gamma: float, z0, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Exact draw of skew Brownian motion after ``dt``.

    The free Brownian endpoint ``w`` is drawn first. If the path has touched
    0 (certain when ``w`` changed sign, probability ``exp(-2 z0 w / dt)``
    otherwise) the sign of ``|w|`` is redrawn: positive with probability
    ``(1 + gamma) / 2``.
    """
    z0 = np.asarray(z0, dtype=float)
    w = z0 + math.sqrt(dt) * rng.standard_normal(z0.shape)
    u_hit = rng.random(z0.shape)
    u_sign = rng.random(z0.shape)
    same_side = z0 * w > 0
    with np.errstate(over="ignore"):
        p_hit = np.where(same_side, np.exp(-2.0 * z0 * w / dt), 1.0)
    hit = u_hit < p_hit
    sign = np.where(u_sign < 0.5 * (1.0 + gamma), 1.0, -1.0)
    return np.where(hit, sign * np.abs(w), w)


def _check_interface(interface):
    if interface in (0, "0"):
        return "0"
    if interface in ("a",):
        return "a"
    raise ParameterError(f"interface must be 0 or 'a', got {interface!r}")


def sample_single_interface_step(params: SdeParams, interface, x, dt: float,
                                 rng: np.random.Generator) -> np.ndarray:
    """Exact draw from the single-interface density at ``0`` or ``'a'``."""
    if not dt > 0:
        raise ParameterError("dt must be > 0")
    which = _check_interface(interface)
    sc = params.scale()
    x = np.asarray(x, dtype=float)
    if which == "0":
        return sc.f_inv(skew_bm_step(params.skew0, sc.f(x), dt, rng))
    return sc.g_inv(skew_bm_step(params.skew_a, sc.g(x), dt, rng))


def sample_single_interface_inverse_cdf(params: SdeParams, interface, x, dt: float,
                                        rng: np.random.Generator, *, tol: float = 1e-12,
                                        max_iter: int = 200) -> np.ndarray:
    """Draw by bisection on the closed-form CDF (independent of the scale route)."""
    if not dt > 0:
        raise ParameterError("dt must be > 0")
    which = _check_interface(interface)
    cdf = cdf_single_0 if which == "0" else cdf_single_a
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = rng.random(x.shape)
    spread = 40.0 * params.max_diffusion * math.sqrt(dt)
    lo = x - spread
    hi = x + spread
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        below = cdf(params, dt, x, mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= tol * np.maximum(1.0, np.abs(mid))):
            return 0.5 * (lo + hi)
    raise ConvergenceError(f"CDF inversion did not reach tol {tol} in {max_iter} bisection steps")


def step_size(params: SdeParams, cfg: SamplerConfig, T: float) -> tuple[float, int]:
    """Uniform step ``T/n`` with ``exp(-c2 (a/2)^2 / dt) <= coupling_eps``.

    ``c2 = 1 / (2 max(p, q, r)^2)`` is a Gaussian-tail constant for moving
    a distance ``a/2`` within one step.
    """
    c2 = 1.0 / (2.0 * params.max_diffusion**2)
    dt_leak = c2 * (params.a / 2) ** 2 / math.log(1.0 / cfg.coupling_eps)
    dt = min(cfg.dt_max, dt_leak)
    n = max(1, math.ceil(T / dt - 1e-12))
    return T / n, n


def _blocks(cfg: SamplerConfig):
    n_blocks = -(-cfg.n_paths // cfg.block_size)
    root = np.random.SeedSequence(cfg.seed)
    for b in range(n_blocks):
        start = b * cfg.block_size
        stop = min(cfg.n_paths, start + cfg.block_size)
        ss = np.random.SeedSequence(root.entropy, spawn_key=(b,))
        yield start, stop, np.random.Generator(np.random.PCG64(ss))


def _map_blocks(fn, cfg: SamplerConfig):
    blocks = list(_blocks(cfg))
    workers = min(max_workers(), len(blocks))
    if workers <= 1:
        return [fn(*blk) for blk in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda blk: fn(*blk), blocks))


def _mixed_step(params: SdeParams, x: np.ndarray, dt: float, rng) -> tuple[np.ndarray, np.ndarray]:
    use0 = x <= params.a / 2
    sc = params.scale()
    # both branches consume the same random numbers so streams stay aligned
    z = np.where(use0, sc.f(x), sc.g(x))
    gamma = np.where(use0, params.skew0, params.skew_a)
    w = z + math.sqrt(dt) * rng.standard_normal(x.shape)
    u_hit = rng.random(x.shape)
    u_sign = rng.random(x.shape)
    same_side = z * w > 0
    with np.errstate(over="ignore"):
        p_hit = np.where(same_side, np.exp(-2.0 * z * w / dt), 1.0)
    sign = np.where(u_sign < 0.5 * (1.0 + gamma), 1.0, -1.0)
    z1 = np.where(u_hit < p_hit, sign * np.abs(w), w)
    x1 = np.where(use0, sc.f_inv(z1), sc.g_inv(z1))
    return x1, np.where(use0, _EXACT_0, _EXACT_A).astype(np.uint8)


def _closed_form_draw(params: SdeParams, x0: float, T: float, rng, n: int) -> np.ndarray:
    z0 = np.full(n, params.scale().s(x0))
    return params.scale().sigma(skew_bm_step(params.skew0, z0, T, rng))


def _validate(params: SdeParams, x0: float, T: float, closed_form: bool):
    if not (T > 0 and math.isfinite(T)):
        raise ParameterError("T must be finite and > 0")
    if not math.isfinite(x0):
        raise ParameterError("x0 must be finite")
    if closed_form and not params.is_matched():
        raise ParameterError("closed-form sampling needs beta = 1 - q/r")


def simulate_path(params: SdeParams, x0: float, T: float, cfg: SamplerConfig,
                  *, closed_form: bool = False) -> PathSample:
    """Simulate ``cfg.n_paths`` full trajectories on ``[0, T]``.

    With ``closed_form=True`` (matched media only) every path is a single
    exact draw at ``T`` from the two-interface density.
    """
    _validate(params, x0, T, closed_form)
    if closed_form:
        times = np.array([0.0, T])

        def run(start, stop, rng):
            xt = _closed_form_draw(params, x0, T, rng, stop - start)
            states = np.column_stack([np.full(stop - start, x0), xt])
            return states, np.full((stop - start, 1), _CLOSED, dtype=np.uint8)
    else:
        dt, n = step_size(params, cfg, T)
        times = np.linspace(0.0, T, n + 1)

        def run(start, stop, rng):
            m = stop - start
            states = np.empty((m, n + 1))
            tags = np.empty((m, n), dtype=np.uint8)
            states[:, 0] = x0
            for j in range(n):
                states[:, j + 1], tags[:, j] = _mixed_step(params, states[:, j], dt, rng)
            return states, tags

    parts = _map_blocks(run, cfg)
    states = np.concatenate([p[0] for p in parts])
    tags = np.concatenate([p[1] for p in parts])
    if not np.all(np.isfinite(states)):
        raise ConvergenceError("non-finite state in simulated paths")
    return PathSample(times, states, tags, cfg.seed)


def simulate_terminal(params: SdeParams, x0: float, T: float, cfg: SamplerConfig,
                      *, closed_form: bool = False) -> np.ndarray:
    """Terminal states ``Y_T`` of ``cfg.n_paths`` paths (same streams as :func:`simulate_path`)."""
    _validate(params, x0, T, closed_form)
    if closed_form:
        def run(start, stop, rng):
            return _closed_form_draw(params, x0, T, rng, stop - start)
    else:
        dt, n = step_size(params, cfg, T)

        def run(start, stop, rng):
            x = np.full(stop - start, float(x0))
            for _ in range(n):
                x, _tags = _mixed_step(params, x, dt, rng)
            return x

    out = np.concatenate(_map_blocks(run, cfg))
    if not np.all(np.isfinite(out)):
        raise ConvergenceError("non-finite terminal state")
    return out


def estimate_expectation(params: SdeParams, h: PiecewiseInitialData, x0: float, T: float,
                         cfg: SamplerConfig, *, closed_form: bool = False) -> MCEstimate:
    """Sample-mean estimate of ``E[h(Y_T^x0)]`` with its standard error."""
    y = simulate_terminal(params, x0, T, cfg, closed_form=closed_form)
    vals = np.asarray(h(y, params.a), dtype=float)
    n = vals.size
    mean = math.fsum(vals) / n
    if n > 1:
        var = math.fsum((vals - mean) ** 2) / (n - 1)
        stderr = math.sqrt(var / n)
    else:
        stderr = float("nan")
    scheme = SCHEMES[_CLOSED] if closed_form else "nearest_interface"
    return MCEstimate(mean, stderr, n, cfg.seed, scheme)


def coupling_failure_rate(params: SdeParams, x0: float, t_list, n_paths: int, seed: int,
                          *, n_steps: int = 2000) -> np.ndarray:
    """Frequency of reaching ``a`` before each ``t`` from ``x0 <= a/2``.

    Paths of the interface-at-0 diffusion are stepped exactly on a grid of
    ``n_steps`` over ``[0, max(t_list)]``; crossings of ``a`` between grid
    points are detected with the Brownian-bridge maximum law (diffusion
    ``q`` above 0). All times share the same paths, so the frequencies are
    non-decreasing in ``t``.
    """
    if x0 > params.a / 2:
        raise ParameterError("coupling diagnostic needs x0 <= a/2")
    t_arr = np.asarray(t_list, dtype=float)
    if t_arr.ndim != 1 or t_arr.size == 0 or np.any(t_arr <= 0):
        raise ParameterError("t_list must be a non-empty list of positive times")
    t_max = float(t_arr.max())
    dt = t_max / n_steps
    cfg = SamplerConfig(n_paths=n_paths, seed=seed)
    a, q = params.a, params.q
    sc = params.scale()

    def run(start, stop, rng):
        m = stop - start
        x = np.full(m, float(x0))
        hit_time = np.full(m, np.inf)
        for j in range(n_steps):
            alive = ~np.isfinite(hit_time)
            z = skew_bm_step(params.skew0, sc.f(x), dt, rng)
            x1 = sc.f_inv(z)
            d0 = a - np.clip(x, 0.0, a)
            d1 = a - np.clip(x1, 0.0, a)
            with np.errstate(over="ignore"):
                p_cross = np.exp(-2.0 * d0 * d1 / (q * q * dt))
            crossed = (x1 >= a) | (rng.random(m) < p_cross)
            hit_time = np.where(alive & crossed, (j + 1) * dt, hit_time)
            x = x1
        return hit_time

    hits = np.concatenate(_map_blocks(run, cfg))
    return np.array([np.count_nonzero(hits <= t * (1 + 1e-12)) / hits.size for t in t_arr])
