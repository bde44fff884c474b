"""Closed-form transition densities.

Every kernel is a skew Brownian motion density read through a piecewise
linear scale map. ``sign(y)`` at an interface point is taken as ``-1`` so
each density is the left-continuous representative, consistent with the
closed-left layer indicators.

All functions broadcast over ``t``, ``x`` and ``y``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

from .errors import MatchingConditionError, ParameterError
from .medium import PhysicalMedium, SdeParams, scale_s, to_sde_params

__all__ = [
    "KernelEval",
    "FORMS",
    "CONVENTION",
    "skew_bm_density",
    "skew_bm_cdf",
    "kernel_single_0",
    "kernel_single_a",
    "kernel_two_interface",
    "kernel_m_symmetric",
    "cdf_single_0",
    "cdf_single_a",
    "evaluate",
]

FORMS = ("skew_bm", "single_at_0", "single_at_a", "two_interface_special", "m_symmetric")
CONVENTION = "left-continuous: sign(interface) = -1"

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class KernelEval:
    value: float
    form: str
    convention: str = CONVENTION


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)) or not np.all(np.isfinite(t)):
        raise ParameterError("t must be finite and > 0")
    return t


def _check_gamma(gamma):
    if not abs(gamma) < 1:
        raise ParameterError(f"skew coefficient must satisfy |gamma| < 1, got {gamma!r}")


def _sign_left(y):
    return np.where(y > 0, 1.0, -1.0)


def _skew(gamma, t, zx, zy):
    # gaussian + gamma*sign(zy)*reflected gaussian, both in scale coordinates
    direct = np.exp(-((zx - zy) ** 2) / (2 * t))
    refl = np.exp(-((np.abs(zx) + np.abs(zy)) ** 2) / (2 * t))
    return _INV_SQRT_2PI / np.sqrt(t) * (direct + gamma * _sign_left(zy) * refl)


def skew_bm_density(gamma: float, t, x, y):
    """Transition density of skew Brownian motion with skew at 0.

    The process enters ``(0, inf)`` from the origin with probability
    ``(1 + gamma) / 2``.
    """
    _check_gamma(gamma)
    t = _check_t(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return _out(_skew(gamma, t, x, y))


def skew_bm_cdf(gamma: float, t, x, y):
    """``P(Z_t <= y | Z_0 = x)`` for skew Brownian motion."""
    _check_gamma(gamma)
    t = _check_t(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    st = np.sqrt(2 * t)
    ax = np.abs(x)

    def big_phi(u):
        return 0.5 * _sp.erfc(-u / st)

    below = big_phi(y - x) - gamma * big_phi(y - ax)
    at0 = big_phi(-x) - gamma * big_phi(-ax)
    above = at0 + (big_phi(y - x) - big_phi(-x)) + gamma * (big_phi(y + ax) - big_phi(ax))
    return _out(np.where(y <= 0, below, above))


def kernel_single_0(params: SdeParams, t, x, y):
    """Density of the diffusion with a single interface at 0.

    Uses ``p`` below 0, ``q`` everywhere above and the local-time weight
    ``alpha``; ``r``, ``beta`` play no role. This is the two-interface
    density whenever ``q == r`` and ``beta == 0``.
    """
    t = _check_t(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p, q = params.p, params.q
    fx = np.where(x <= 0, x / p, x / q)
    fy = np.where(y <= 0, y / p, y / q)
    weight = np.where(y <= 0, 1.0 / p, 1.0 / q)
    return _out(weight * _skew(params.skew0, t, fx, fy))


def kernel_single_a(params: SdeParams, t, x, y):
    """Density of the diffusion with a single interface at ``a``.

    Uses ``q`` up to ``a``, ``r`` above, weight ``beta``. The scale is
    measured from ``a`` so that ``a = 0`` reduces to :func:`kernel_single_0`
    with ``(p, q, alpha)`` replaced by ``(q, r, beta)``.
    """
    t = _check_t(t)
    x = np.asarray(x, dtype=float) - params.a
    y = np.asarray(y, dtype=float) - params.a
    q, r = params.q, params.r
    gx = np.where(x <= 0, x / q, x / r)
    gy = np.where(y <= 0, y / q, y / r)
    weight = np.where(y <= 0, 1.0 / q, 1.0 / r)
    return _out(weight * _skew(params.skew_a, t, gx, gy))


def _require_matched(params: SdeParams):
    if not params.is_matched():
        raise MatchingConditionError(
            "closed-form two-interface kernel needs rho2*sqrt(a2) = rho3*sqrt(a3) "
            f"(beta = 1 - q/r = {params.matched_beta!r}, got beta = {params.beta!r}); "
            "use the small-time expansion or Monte Carlo instead"
        )


def kernel_two_interface(params: SdeParams, t, x, y):
    """Lebesgue density of the two-interface diffusion when ``beta = 1 - q/r``."""
    _require_matched(params)
    t = _check_t(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sx = scale_s(params, x)
    sy = scale_s(params, y)
    weight = np.choose(
        np.where(y <= 0, 0, np.where(y <= params.a, 1, 2)),
        (1.0 / params.p, 1.0 / params.q, 1.0 / params.r),
    )
    return _out(weight * _skew(params.skew0, t, sx, sy))


def kernel_m_symmetric(m: PhysicalMedium, t, x, y):
    """Heat kernel with respect to ``rho(y) dy``; symmetric in ``x`` and ``y``."""
    if not m.is_matched():
        raise MatchingConditionError(
            "m-symmetric closed form needs rho2*sqrt(a2) = rho3*sqrt(a3), got "
            f"{m.rho2 * np.sqrt(m.a2)!r} vs {m.rho3 * np.sqrt(m.a3)!r}"
        )
    params = to_sde_params(m)
    # the gauge-invariant tolerance above already certifies the match
    params = SdeParams(params.p, params.q, params.r, params.alpha, params.matched_beta, params.a)
    return _out(kernel_two_interface(params, t, x, y) / m.density(y))


def cdf_single_0(params: SdeParams, t, x, y):
    """CDF in ``y`` of :func:`kernel_single_0`."""
    sc = params.scale()
    return skew_bm_cdf(params.skew0, t, sc.f(x), sc.f(y))


def cdf_single_a(params: SdeParams, t, x, y):
    """CDF in ``y`` of :func:`kernel_single_a`."""
    sc = params.scale()
    return skew_bm_cdf(params.skew_a, t, sc.g(x), sc.g(y))


def evaluate(form: str, params: SdeParams, t: float, x: float, y: float,
             *, medium: PhysicalMedium | None = None, gamma: float | None = None) -> KernelEval:
    """Evaluate one kernel by tag and return it with its metadata."""
    if form == "skew_bm":
        value = skew_bm_density(params.skew0 if gamma is None else gamma, t, x, y)
    elif form == "single_at_0":
        value = kernel_single_0(params, t, x, y)
    elif form == "single_at_a":
        value = kernel_single_a(params, t, x, y)
    elif form == "two_interface_special":
        value = kernel_two_interface(params, t, x, y)
    elif form == "m_symmetric":
        if medium is None:
            raise ParameterError("m_symmetric kernel needs the physical medium")
        value = kernel_m_symmetric(medium, t, x, y)
    else:
        raise ParameterError(f"unknown kernel form {form!r}; expected one of {FORMS}")
    return KernelEval(float(value), form)
