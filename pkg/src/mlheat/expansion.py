"""Small-time expansion of ``u(t, x) = E[h(Y_t^x)]``.

Near a starting point the two-interface diffusion is replaced by the
single-interface diffusion attached to the nearest interface (interface at
0 when ``x <= a/2``, at ``a`` otherwise); the error of that substitution is
exponentially small in ``a^2/t``. Moments of the single-interface
diffusions have exact expressions in terms of ``erfc_k``, and their
``t -> 0`` limits give the coefficients ``b_k`` of

    u(t, x) = sum_{k=0}^{N} b_k(x) t^{k/2} + O(t^{(N+1)/2}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .errors import DerivativeOrderError, InterfacePointError, ParameterError
from .medium import SdeParams, region_index
from .special import ORDER_CAP, erfc_k, erfc_k_at_zero, erfc_k_limit_neg

__all__ = [
    "PolynomialPiece",
    "AnalyticPiece",
    "PiecewiseInitialData",
    "ExpansionResult",
    "moment_exact",
    "moment_interface",
    "D_k",
    "b_k",
    "branch_tag",
    "expand_u",
    "taylor_moment_sum",
    "compatible_initial_data",
    "REGIONS",
]

REGIONS = ("left", "middle", "right")
_INTERFACE_RTOL = 1e-12


class PolynomialPiece:
    """Polynomial piece given by ascending coefficients ``c0 + c1 x + ...``."""

    def __init__(self, coefficients: Sequence[float]):
        coeffs = np.atleast_1d(np.asarray(coefficients, dtype=float))
        if coeffs.ndim != 1 or coeffs.size == 0 or not np.all(np.isfinite(coeffs)):
            raise ParameterError("polynomial piece needs a non-empty list of finite coefficients")
        self.poly = Polynomial(coeffs)
        self._derivs = [self.poly]

    @property
    def coefficients(self) -> list[float]:
        return [float(c) for c in self.poly.coef]

    @property
    def degree(self) -> int:
        return len(self.poly.coef) - 1

    @property
    def max_order(self) -> int | None:
        return None

    def deriv_poly(self, k: int) -> Polynomial:
        while len(self._derivs) <= k:
            self._derivs.append(self._derivs[-1].deriv())
        return self._derivs[k]

    def value(self, x):
        return self.poly(x)

    def derivative(self, k: int, x):
        return self.deriv_poly(k)(x)


class AnalyticPiece:
    """User-supplied piece with exact derivative callbacks.

    ``derivatives[j]`` must return the ``(j+1)``-th derivative.
    """

    def __init__(self, fn: Callable, derivatives: Sequence[Callable] = ()):
        self.fn = fn
        self.derivatives = list(derivatives)

    @property
    def max_order(self) -> int:
        return len(self.derivatives)

    def value(self, x):
        return self.fn(x)

    def derivative(self, k: int, x):
        if k == 0:
            return self.fn(x)
        if k > len(self.derivatives):
            raise DerivativeOrderError(
                f"piece supplies derivatives up to order {len(self.derivatives)}, asked for {k}"
            )
        return self.derivatives[k - 1](x)


class PiecewiseInitialData:
    """Initial datum ``h = h1 on x <= 0, h2 on (0, a], h3 on x > a``.

    Parameters
    ----------
    pieces : sequence of three pieces
        Each either a coefficient list (ascending powers), a
        :class:`PolynomialPiece` or an :class:`AnalyticPiece`.
    order : int
        Expansion order ``N >= 1``. Polynomial pieces may have degree at most
        ``N + 1``; analytic pieces must supply ``N + 1`` derivatives.
    clamp : (lo, hi), optional
        Values of ``h`` are clipped to this window when ``h`` itself is
        evaluated (Monte Carlo, PDE initial data). Derivatives are reported
        unclipped, so the clamp should only bite far from the points where
        the expansion is used.
    """

    def __init__(self, pieces, order: int, clamp: tuple[float, float] | None = None):
        if isinstance(order, bool) or int(order) != order or order < 1:
            raise ParameterError(f"expansion order N must be an integer >= 1, got {order!r}")
        self.order = int(order)
        if len(pieces) != 3:
            raise ParameterError("initial data needs exactly three pieces")
        built = []
        for i, pc in enumerate(pieces):
            if not isinstance(pc, (PolynomialPiece, AnalyticPiece)):
                pc = PolynomialPiece(pc)
            if isinstance(pc, PolynomialPiece) and pc.degree > self.order + 1:
                raise ParameterError(
                    f"piece h{i + 1} has degree {pc.degree} > N + 1 = {self.order + 1}"
                )
            if isinstance(pc, AnalyticPiece) and pc.max_order < self.order + 1:
                raise DerivativeOrderError(
                    f"piece h{i + 1} supplies {pc.max_order} derivatives, needs N + 1 = {self.order + 1}"
                )
            built.append(pc)
        self.pieces = tuple(built)
        if clamp is not None:
            lo, hi = float(clamp[0]), float(clamp[1])
            if not lo < hi:
                raise ParameterError("clamp window must satisfy lo < hi")
            clamp = (lo, hi)
        self.clamp = clamp

    @classmethod
    def constant(cls, c: float, order: int = 1) -> "PiecewiseInitialData":
        return cls([[c], [c], [c]], order)

    @classmethod
    def from_dict(cls, data) -> "PiecewiseInitialData":
        """Parse ``{"pieces": [[...], [...], [...]], "N": int, "clamp": [lo, hi]?}``."""
        if not isinstance(data, dict):
            raise ParameterError("initial-data descriptor must be a JSON object")
        extra = set(data) - {"pieces", "N", "clamp"}
        if extra:
            raise ParameterError(f"unknown initial-data keys: {sorted(extra)}")
        try:
            return cls(data["pieces"], data["N"], data.get("clamp"))
        except KeyError as exc:
            raise ParameterError(f"initial-data descriptor missing {exc.args[0]!r}") from None

    def to_dict(self) -> dict:
        out = {"pieces": [], "N": self.order}
        for pc in self.pieces:
            if not isinstance(pc, PolynomialPiece):
                raise ParameterError("only polynomial initial data can be serialized")
            out["pieces"].append(pc.coefficients)
        if self.clamp is not None:
            out["clamp"] = list(self.clamp)
        return out

    @property
    def is_polynomial(self) -> bool:
        return all(isinstance(pc, PolynomialPiece) for pc in self.pieces)

    def __call__(self, x, a: float):
        x = np.asarray(x, dtype=float)
        idx = region_index(x, a)
        vals = np.empty_like(x)
        for i, pc in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                vals[mask] = pc.value(x[mask])
        if self.clamp is not None:
            vals = np.clip(vals, *self.clamp)
        return float(vals) if vals.ndim == 0 else vals

    def piece_derivative(self, piece: int, k: int, x: float) -> float:
        """``k``-th derivative of piece ``piece`` (0, 1, 2) at ``x``."""
        return float(self.pieces[piece].derivative(k, x))


def _transfer(poly: Polynomial, x0: float, ratio: float, flux: float) -> Polynomial:
    # order 2m derivatives scale by ratio^(2m); odd orders also carry the flux factor
    out = Polynomial([0.0])
    shift = Polynomial([-x0, 1.0])
    for j in range(poly.degree() + 1):
        dj = poly.deriv(j)(x0) if j else poly(x0)
        fac = ratio ** (2 * (j // 2)) * (flux if j % 2 else 1.0)
        out = out + dj * fac / math.factorial(j) * shift**j
    return out


def compatible_initial_data(params: SdeParams, left_coefficients: Sequence[float], order: int,
                            clamp: tuple[float, float] | None = None) -> PiecewiseInitialData:
    """Polynomial data in the domain of every power of the generator.

    ``h1`` is given; ``h2`` and ``h3`` are the polynomials whose Taylor
    coefficients at the interface reproduce the continuity of ``L^m h``
    and of its flux for all ``m``. For such data ``u(t) = sum_m t^m L^m h / m!``
    is a polynomial in ``t`` with no interface layer.
    """
    h1 = Polynomial(np.asarray(left_coefficients, dtype=float))
    h2 = _transfer(h1, 0.0, params.p / params.q, 1.0 - params.alpha)
    h3 = _transfer(h2, params.a, params.q / params.r, 1.0 - params.beta)
    pieces = [list(h1.coef), list(h2.coef), list(h3.coef)]
    return PiecewiseInitialData(pieces, order, clamp)


# ---------------------------------------------------------------- moments


def _interface_of(x: float, a: float):
    if x == 0.0:
        return "0"
    if abs(x - a) <= _INTERFACE_RTOL * a:
        return "a"
    return None


def _check_k(k):
    if isinstance(k, bool) or int(k) != k or k < 0 or k > ORDER_CAP:
        raise ParameterError(f"moment order must be an integer in [0, {ORDER_CAP}], got {k!r}")
    return int(k)


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)) or not np.all(np.isfinite(t)):
        raise ParameterError("t must be finite and > 0")
    return t


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def moment_exact(params: SdeParams, k: int, x: float, t):
    """``E[(Xi_t^x - x)^k]`` for ``x`` off the interfaces.

    For ``x < a`` the moment is that of the interface-at-0 diffusion
    (``p``, ``q``, ``alpha``); for ``x > a`` that of the interface-at-``a``
    diffusion (``q``, ``r``, ``beta``).
    """
    k = _check_k(k)
    t = _check_t(t)
    x = float(x)
    p, q, r, al, be, a = params.p, params.q, params.r, params.alpha, params.beta, params.a
    if _interface_of(x, a) is not None:
        raise InterfacePointError(f"x = {x!r} is an interface; use moment_interface")
    st = np.sqrt(2 * t)
    total = np.zeros_like(t)
    if x < 0:
        den = p - q * (al - 1)
        lead = (-1) ** k * p**k * 2 ** (k / 2 - 1) * t ** (k / 2) * erfc_k(k, x / (p * st))
        z = -x / (p * st)
        for j in range(k + 1):
            coef = x ** (k - j) / den * (
                (p + q * (al - 1)) * p**j * (-1) ** (k + 1) * 2 ** (k - j)
                + 2 * p * q**j * (q / p - 1) ** (k - j)
            )
            total = total + math.comb(k, j) * 2 ** (j / 2 - 1) * t ** (j / 2) * coef * erfc_k(j, z)
    elif x < a:
        den = p - q * (al - 1)
        lead = 2 ** (k / 2 - 1) * q**k * t ** (k / 2) * erfc_k(k, -x / (q * st))
        z = x / (q * st)
        for j in range(k + 1):
            coef = x ** (k - j) / den * (
                -2 * q * (al - 1) * (-p) ** j * (p / q - 1) ** (k - j)
                + (p + q * (al - 1)) * q**j * (-2) ** (k - j)
            )
            total = total + math.comb(k, j) * 2 ** (j / 2 - 1) * t ** (j / 2) * coef * erfc_k(j, z)
    else:
        den = q - r * (be - 1)
        d = x - a
        lead = 2 ** (k / 2 - 1) * r**k * t ** (k / 2) * erfc_k(k, -d / (r * st))
        z = d / (r * st)
        for j in range(k + 1):
            coef = d ** (k - j) / den * (
                -2 * r * (be - 1) * (-1) ** j * q**j * (q / r - 1) ** (k - j)
                + (q + r * (be - 1)) * r**j * 2 ** (k - j) * (-1) ** (k - j)
            )
            total = total + math.comb(k, j) * 2 ** (j / 2 - 1) * t ** (j / 2) * coef * erfc_k(j, z)
    return _out(lead + total)


def moment_interface(params: SdeParams, k: int, x: float, t, region: str):
    """Region-restricted moment ``E[(Xi_t^x - x)^k ; Xi_t^x in region]`` at ``x in {0, a}``.

    ``region`` is ``"left"`` (``<= 0``), ``"middle"`` (``(0, a]``) or
    ``"right"`` (``> a``). At ``x = 0`` the interface-at-0 diffusion is
    used, at ``x = a`` the interface-at-``a`` one. ``k = 0`` gives the
    region probabilities.
    """
    k = _check_k(k)
    t = _check_t(t)
    if region not in REGIONS:
        raise ParameterError(f"region must be one of {REGIONS}, got {region!r}")
    p, q, r, al, be, a = params.p, params.q, params.r, params.alpha, params.beta, params.a
    which = _interface_of(float(x), a)
    if which is None:
        raise InterfacePointError(f"x = {x!r} is not an interface point (0 or {a!r})")
    g0 = erfc_k_at_zero(k)
    scale = (2 * t) ** (k / 2)
    far = erfc_k(k, a / (q * np.sqrt(2 * t)))
    sgn = (-1) ** k
    if which == "0":
        den = p - q * (al - 1)
        if region == "left":
            val = q * (1 - al) / den * sgn * p**k * scale * g0
        elif region == "middle":
            val = p / den * q**k * scale * (g0 - far)
        else:
            val = p / den * q**k * scale * far
    else:
        den = q - r * (be - 1)
        if region == "left":
            val = r * (1 - be) / den * sgn * q**k * scale * far
        elif region == "middle":
            val = r * (1 - be) * sgn / den * q**k * scale * (g0 - far)
        else:
            val = q / den * r**k * scale * g0
    return _out(val)


def D_k(params: SdeParams, k: int, x: float) -> float:
    """Small-time limit constant of ``E[(Xi_t^x - x)^k] / (2^(k/2-1) t^(k/2))``."""
    k = _check_k(k)
    x = float(x)
    if _interface_of(x, params.a) is not None:
        raise InterfacePointError(f"D_k is defined off the interfaces, got x = {x!r}")
    c = (params.p, params.q, params.r)[int(region_index(x, params.a))]
    return erfc_k_limit_neg(k) * c**k


# ------------------------------------------------------------ coefficients


def branch_tag(params: SdeParams, x: float) -> str:
    """``interior-left|mid|right`` away from the interfaces, ``x0`` / ``xa`` on them."""
    which = _interface_of(float(x), params.a)
    if which == "0":
        return "x0"
    if which == "a":
        return "xa"
    return ("interior-left", "interior-mid", "interior-right")[int(region_index(x, params.a))]


def _need_order(h: PiecewiseInitialData, piece: int, k: int):
    pc = h.pieces[piece]
    if pc.max_order is not None and k > pc.max_order:
        raise DerivativeOrderError(
            f"piece h{piece + 1} has derivatives up to order {pc.max_order}, b_{k} needs order {k}"
        )


def b_k(params: SdeParams, h: PiecewiseInitialData, k: int, x: float) -> float:
    """Coefficient of ``t^(k/2)`` in the small-time expansion of ``u(t, x)``."""
    k = _check_k(k)
    x = float(x)
    p, q, r, al, be = params.p, params.q, params.r, params.alpha, params.beta
    tag = branch_tag(params, x)
    if tag.startswith("interior"):
        if k % 2:
            return 0.0
        piece = int(region_index(x, params.a))
        _need_order(h, piece, k)
        dk = h.piece_derivative(piece, k, x)
        return 2 ** (k / 2 - 1) * D_k(params, k, x) * dk / math.factorial(k)
    g0 = erfc_k_at_zero(k)
    pref = 2 ** (k / 2) * g0 / math.factorial(k)
    sgn = (-1) ** k
    if tag == "x0":
        _need_order(h, 0, k)
        _need_order(h, 1, k)
        d1 = h.piece_derivative(0, k, 0.0)
        d2 = h.piece_derivative(1, k, 0.0)
        return pref / (p - q * (al - 1)) * (d1 * q * (1 - al) * sgn * p**k + d2 * p * q**k)
    _need_order(h, 1, k)
    _need_order(h, 2, k)
    d2 = h.piece_derivative(1, k, params.a)
    d3 = h.piece_derivative(2, k, params.a)
    return pref / (q - r * (be - 1)) * (d2 * r * (1 - be) * sgn * q**k + d3 * q * r**k)


@dataclass(frozen=True)
class ExpansionResult:
    """Coefficients ``b_0..b_N`` at ``x`` and the partial sum at ``t``."""

    x: float
    coefficients: tuple[float, ...]
    order_tag: str
    t: float | None = None
    value: float | None = field(default=None)

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    def partial_sum(self, t, order: int | None = None):
        """``sum_{k <= order} b_k t^(k/2)``; ``order`` defaults to ``N``."""
        t = np.asarray(t, dtype=float)
        n = self.order if order is None else min(order, self.order)
        total = np.zeros_like(t)
        for k in range(n + 1):
            total = total + self.coefficients[k] * t ** (k / 2)
        return _out(total)


def expand_u(params: SdeParams, h: PiecewiseInitialData, x: float, t: float | None = None) -> ExpansionResult:
    """Small-time expansion of ``E[h(Y_t^x)]`` to order ``h.order``."""
    if t is not None:
        _check_t(t)
    coeffs = tuple(b_k(params, h, k, x) for k in range(h.order + 1))
    res = ExpansionResult(float(x), coeffs, branch_tag(params, x))
    if t is None:
        return res
    return ExpansionResult(res.x, coeffs, res.order_tag, float(t), float(res.partial_sum(t)))


def taylor_moment_sum(params: SdeParams, h: PiecewiseInitialData, x: float, t):
    """Taylor split of ``E[h(Xi_t^x)]`` with exact (pre-limit) moments.

    Interior points use ``sum_j h^(j)(x)/j! E[(Xi - x)^j]`` with the piece
    containing ``x``; interface points expand each piece around ``x`` and
    weight it by its region-restricted moments. For polynomial pieces of
    degree ``<= N`` only erfc-remainder terms separate this from
    ``E[h(Xi_t^x)]``.
    """
    x = float(x)
    t = _check_t(t)
    tag = branch_tag(params, x)
    total = np.zeros_like(t)
    for j in range(h.order + 1):
        if tag.startswith("interior"):
            piece = int(region_index(x, params.a))
            total = total + h.piece_derivative(piece, j, x) / math.factorial(j) * moment_exact(params, j, x, t)
        else:
            for piece, region in enumerate(REGIONS):
                dj = h.piece_derivative(piece, j, x)
                if dj != 0.0:
                    total = total + dj / math.factorial(j) * moment_interface(params, j, x, t, region)
    return _out(total)
