"""Three-layer medium, its SDE parametrization and the scale transforms.

Layers are ``x <= 0``, ``0 < x <= a`` and ``x > a`` (closed on the left
interface side, as in the coefficient definitions). All maps here are
vectorized over ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from .errors import ParameterError

__all__ = [
    "PhysicalMedium",
    "SdeParams",
    "ScaleFunctions",
    "to_sde_params",
    "from_sde_params",
    "scale_s",
    "scale_sigma",
    "phi_transform",
    "region_index",
    "MATCH_TOL",
]

MATCH_TOL = 1e-12


def _positive(name, value):
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ParameterError(f"{name} must be a real number, got {value!r}") from None
    if not math.isfinite(v) or v <= 0:
        raise ParameterError(f"{name} must be finite and > 0, got {value!r}")
    return v


def region_index(x, a):
    """0 for ``x <= 0``, 1 for ``0 < x <= a``, 2 for ``x > a``."""
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0, 0, np.where(x <= a, 1, 2))


@dataclass(frozen=True)
class PhysicalMedium:
    """Interface position ``a`` plus diffusivity and density per layer."""

    a: float
    a1: float
    a2: float
    a3: float
    rho1: float
    rho2: float
    rho3: float

    def __post_init__(self):
        for name in ("a", "a1", "a2", "a3", "rho1", "rho2", "rho3"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))

    @property
    def diffusivities(self) -> tuple[float, float, float]:
        return (self.a1, self.a2, self.a3)

    @property
    def densities(self) -> tuple[float, float, float]:
        return (self.rho1, self.rho2, self.rho3)

    def diffusivity(self, x):
        return np.choose(region_index(x, self.a), self.diffusivities)

    def density(self, x):
        return np.choose(region_index(x, self.a), self.densities)

    def is_matched(self, tol: float = MATCH_TOL) -> bool:
        """True when ``rho2*sqrt(a2) == rho3*sqrt(a3)`` (relative ``tol``)."""
        lhs = self.rho2 * math.sqrt(self.a2)
        rhs = self.rho3 * math.sqrt(self.a3)
        return abs(lhs - rhs) <= tol * max(lhs, rhs)

    def to_sde_params(self) -> "SdeParams":
        return to_sde_params(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PhysicalMedium":
        """Parse ``{"a": .., "layers": [{"diffusivity": .., "density": ..}] * 3}``."""
        if not isinstance(data, Mapping):
            raise ParameterError("medium descriptor must be a JSON object")
        extra = set(data) - {"a", "layers"}
        if extra:
            raise ParameterError(f"unknown medium keys: {sorted(extra)}")
        if "a" not in data or "layers" not in data:
            raise ParameterError("medium descriptor needs 'a' and 'layers'")
        layers = data["layers"]
        if not isinstance(layers, (list, tuple)) or len(layers) != 3:
            raise ParameterError("medium 'layers' must be a list of exactly 3 entries")
        diff, dens = [], []
        for i, layer in enumerate(layers):
            if not isinstance(layer, Mapping):
                raise ParameterError(f"layer {i} must be an object")
            extra = set(layer) - {"diffusivity", "density"}
            if extra:
                raise ParameterError(f"unknown keys in layer {i}: {sorted(extra)}")
            try:
                diff.append(layer["diffusivity"])
                dens.append(layer["density"])
            except KeyError as exc:
                raise ParameterError(f"layer {i} missing {exc.args[0]!r}") from None
        return cls(data["a"], *diff, *dens)

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "layers": [
                {"diffusivity": d, "density": r}
                for d, r in zip(self.diffusivities, self.densities)
            ],
        }


@dataclass(frozen=True)
class SdeParams:
    """Coefficients of the interface SDE.

    ``p, q, r`` are the diffusion coefficients on the three layers and
    ``alpha, beta`` (both < 1) weight the right local times at ``0`` and ``a``.
    """

    p: float
    q: float
    r: float
    alpha: float
    beta: float
    a: float

    def __post_init__(self):
        for name in ("p", "q", "r", "a"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))
        for name in ("alpha", "beta"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v >= 1:
                raise ParameterError(f"{name} must be finite and < 1, got {v!r}")
            object.__setattr__(self, name, v)
        # automatically true for alpha, beta < 1; kept as a guard
        assert self.p - self.q * (self.alpha - 1) > 0
        assert self.q - self.r * (self.beta - 1) > 0

    @property
    def skew0(self) -> float:
        """Skew coefficient at 0 in scale coordinates, in (-1, 1)."""
        d = self.q * (self.alpha - 1)
        return (self.p + d) / (self.p - d)

    @property
    def skew_a(self) -> float:
        """Skew coefficient at ``a`` of the interface-at-``a`` diffusion."""
        d = self.r * (self.beta - 1)
        return (self.q + d) / (self.q - d)

    @property
    def matched_beta(self) -> float:
        return 1.0 - self.q / self.r

    def is_matched(self, tol: float = MATCH_TOL) -> bool:
        """Whether ``beta == 1 - q/r``, the closed-form two-interface case."""
        return abs(self.beta - self.matched_beta) < tol

    @property
    def max_diffusion(self) -> float:
        return max(self.p, self.q, self.r)

    def diffusion(self, x):
        return np.choose(region_index(x, self.a), (self.p, self.q, self.r))

    def scale(self) -> "ScaleFunctions":
        return ScaleFunctions(self)


def to_sde_params(m: PhysicalMedium) -> SdeParams:
    """Map a physical medium to ``(p, q, r, alpha, beta, a)``."""
    k1, k2, k3 = m.rho1 * m.a1, m.rho2 * m.a2, m.rho3 * m.a3
    return SdeParams(
        p=math.sqrt(m.a1),
        q=math.sqrt(m.a2),
        r=math.sqrt(m.a3),
        alpha=1.0 - k1 / k2,
        beta=1.0 - k2 / k3,
        a=m.a,
    )


def from_sde_params(params: SdeParams) -> PhysicalMedium:
    """Inverse of :func:`to_sde_params` with the density gauge ``rho2 = 1``."""
    a1, a2, a3 = params.p**2, params.q**2, params.r**2
    rho2 = 1.0
    rho1 = (1.0 - params.alpha) * rho2 * a2 / a1
    rho3 = rho2 * a2 / ((1.0 - params.beta) * a3)
    return PhysicalMedium(params.a, a1, a2, a3, rho1, rho2, rho3)


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def scale_s(params: SdeParams, x):
    """Piecewise-linear scale map removing the diffusion discontinuities."""
    x = np.asarray(x, dtype=float)
    p, q, r, a = params.p, params.q, params.r, params.a
    y = np.where(x < 0, x / p, np.where(x <= a, x / q, (x - a) / r + a / q))
    return _out(y)


def scale_sigma(params: SdeParams, y):
    """Inverse of :func:`scale_s`."""
    y = np.asarray(y, dtype=float)
    p, q, r, a = params.p, params.q, params.r, params.a
    sa = a / q
    x = np.where(y < 0, p * y, np.where(y <= sa, q * y, r * (y - sa) + sa * q))
    return _out(x)


def phi_transform(params: SdeParams, x):
    """``a + (r/q)(x-a)^+ - (x-a)^-``: identity below ``a``, slope ``r/q`` above."""
    x = np.asarray(x, dtype=float)
    a = params.a
    return _out(np.where(x > a, a + params.r / params.q * (x - a), x))


def phi_inverse(params: SdeParams, y):
    y = np.asarray(y, dtype=float)
    a = params.a
    return _out(np.where(y > a, a + params.q / params.r * (y - a), y))


class ScaleFunctions:
    """Bundle of the scale maps attached to one parameter set.

    ``f`` and ``g`` are the single-interface scales of the diffusions with a
    lone interface at 0 (slopes ``1/p``, ``1/q``) and at ``a`` (slopes
    ``1/q``, ``1/r``, measured from ``a``).
    """

    def __init__(self, params: SdeParams):
        self.params = params

    def s(self, x):
        return scale_s(self.params, x)

    def sigma(self, y):
        return scale_sigma(self.params, y)

    def s_left_deriv(self, x):
        prm = self.params
        return _out(np.choose(region_index(x, prm.a), (1 / prm.p, 1 / prm.q, 1 / prm.r)))

    def sigma_left_deriv(self, y):
        prm = self.params
        y = np.asarray(y, dtype=float)
        sa = prm.a / prm.q
        return _out(np.where(y <= 0, prm.p, np.where(y <= sa, prm.q, prm.r)))

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return _out(np.where(x <= 0, x / self.params.p, x / self.params.q))

    def f_inv(self, z):
        z = np.asarray(z, dtype=float)
        return _out(np.where(z <= 0, z * self.params.p, z * self.params.q))

    def g(self, x):
        x = np.asarray(x, dtype=float)
        a = self.params.a
        return _out(np.where(x <= a, (x - a) / self.params.q, (x - a) / self.params.r))

    def g_inv(self, z):
        z = np.asarray(z, dtype=float)
        a = self.params.a
        return _out(np.where(z <= 0, a + z * self.params.q, a + z * self.params.r))

    def phi(self, x):
        return phi_transform(self.params, x)

    def phi_inv(self, y):
        return phi_inverse(self.params, y)
