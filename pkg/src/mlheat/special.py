"""Gaussian tail moments ``erfc_k(z) = 2/sqrt(pi) * int_z^inf u^k exp(-u^2) du``.

``erfc_0`` is the ordinary complementary error function and ``erfc_1(z)`` is
``exp(-z^2)/sqrt(pi)``; higher orders follow from integration by parts::

    erfc_k(z) = z^(k-1) exp(-z^2) / sqrt(pi) + (k-1)/2 * erfc_{k-2}(z)

which is evaluated upward. Far on the negative axis the reflection identity
``erfc_k(z) + (-1)^k erfc_k(-z) = erfc_k(-inf)`` is used instead, so no
cancellation between large terms ever happens.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy import special as _sp

from .errors import OrderCapError, ParameterError

__all__ = [
    "ORDER_CAP",
    "erfc_k",
    "erfc_k_limit_neg",
    "gamma_half",
    "erfc_k_at_zero",
]

ORDER_CAP = 64

SQRT_PI = math.sqrt(math.pi)
_NEG_SWITCH = -8.0


def _check_order(k, cap=ORDER_CAP):
    if isinstance(k, bool) or int(k) != k or k < 0:
        raise ParameterError(f"erfc_k order must be a non-negative integer, got {k!r}")
    k = int(k)
    if k > cap:
        raise OrderCapError(f"erfc_k order {k} exceeds cap {cap}")
    return k


def _gamma_half_exact(k: int) -> tuple[Fraction, bool]:
    """Gamma((k+1)/2) as ``(c, has_sqrt_pi)`` meaning ``c`` or ``c*sqrt(pi)``."""
    if k % 2 == 1:
        return Fraction(math.factorial((k + 1) // 2 - 1)), False
    n = k // 2
    # Gamma(n + 1/2) = (2n)! / (4^n n!) * sqrt(pi)
    return Fraction(math.factorial(2 * n), 4**n * math.factorial(n)), True


def gamma_half(k: int) -> float:
    """Return ``Gamma((k + 1) / 2)`` from the half-integer closed forms."""
    k = _check_order(k)
    c, has_sqrt_pi = _gamma_half_exact(k)
    return float(c) * SQRT_PI if has_sqrt_pi else float(c)


def erfc_k_at_zero(k: int) -> float:
    """``erfc_k(0) = Gamma((k+1)/2) / sqrt(pi)``."""
    k = _check_order(k)
    c, has_sqrt_pi = _gamma_half_exact(k)
    return float(c) if has_sqrt_pi else float(c) / SQRT_PI


def erfc_k_limit_neg(k: int) -> float:
    """Limit of ``erfc_k(z)`` as ``z -> -inf``.

    Equal to ``(1 + (-1)^k) Gamma((k+1)/2) / sqrt(pi)``: zero for odd ``k``
    and the rational ``2 (2n)! / (4^n n!)`` for ``k = 2n``.
    """
    k = _check_order(k)
    if k % 2:
        return 0.0
    c, _ = _gamma_half_exact(k)
    return float(2 * c)


def _power_gauss(j: int, z: np.ndarray) -> np.ndarray:
    # z^j * exp(-z^2) without overflowing z^j for large |z|
    if j == 0:
        return np.exp(-z * z)
    with np.errstate(divide="ignore"):
        mag = np.exp(j * np.log(np.abs(z)) - z * z)
    sign = np.where(z < 0, (-1.0) ** j, 1.0)
    return np.where(z == 0.0, 0.0, sign * mag)


def _upward(k: int, z: np.ndarray) -> np.ndarray:
    if k % 2 == 0:
        val = _sp.erfc(z)
        start = 2
    else:
        val = np.exp(-z * z) / SQRT_PI
        start = 3
    for j in range(start, k + 1, 2):
        val = _power_gauss(j - 1, z) / SQRT_PI + 0.5 * (j - 1) * val
    return val


def erfc_k(k: int, z, *, cap: int = ORDER_CAP):
    """Evaluate ``erfc_k`` at ``z`` (scalar or array).

    Parameters
    ----------
    k : int
        Non-negative moment order, at most ``cap``.
    z : float or array_like
        Finite real argument(s).

    Returns
    -------
    float or ndarray
        Same shape as ``z``.
    """
    k = _check_order(k, cap)
    z_arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z_arr)):
        raise ParameterError("erfc_k argument must be finite")
    far_neg = z_arr < _NEG_SWITCH
    out = np.array(_upward(k, np.where(far_neg, 0.0, z_arr)), dtype=float)
    if np.any(far_neg):
        refl = _upward(k, -z_arr[far_neg])
        sign = -1.0 if k % 2 else 1.0
        out[far_neg] = erfc_k_limit_neg(k) - sign * refl
    if out.ndim == 0:
        return float(out)
    return out
