import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GENERIC, quad_pieces, window
from mlheat.errors import DerivativeOrderError, InterfacePointError, ParameterError
from mlheat.expansion import (
    AnalyticPiece,
    PiecewiseInitialData,
    D_k,
    b_k,
    branch_tag,
    compatible_initial_data,
    expand_u,
    moment_exact,
    moment_interface,
    taylor_moment_sum,
)
from mlheat.kernels import kernel_single_0, kernel_single_a
from mlheat.medium import SdeParams, from_sde_params

BM = SdeParams(1.0, 1.0, 1.0, 0.0, 0.0, 1.0)


def kernel_for(prm, x):
    # nearest-interface single-interface diffusion
    if x <= prm.a / 2:
        return lambda t, y: kernel_single_0(prm, t, x, y)
    return lambda t, y: kernel_single_a(prm, t, x, y)


def quad_moment(prm, k, x, t, lo=None, hi=None, single_0=None):
    use0 = x < prm.a if single_0 is None else single_0
    ker = (lambda y: kernel_single_0(prm, t, x, y)) if use0 else (lambda y: kernel_single_a(prm, t, x, y))
    wlo, whi = window(prm, t, x, 14.0)
    lo = wlo if lo is None else max(lo, wlo)
    hi = whi if hi is None else min(hi, whi)
    if lo >= hi:
        return 0.0
    return quad_pieces(lambda y: (y - x) ** k * ker(y), lo, hi, (0.0, prm.a), epsabs=1e-15)


def test_moment_trivial_cases():
    prm = SdeParams(1.3, 1.3, 2.0, 0.0, 0.0, 1.0)
    for k in (1, 3, 5):
        assert moment_exact(prm, k, -0.3, 0.05) == pytest.approx(0.0, abs=1e-14)
    for x in (-2.0, -0.5, -0.01):
        assert moment_exact(BM, 2, x, 0.3) == pytest.approx(0.3, abs=1e-14)


def test_moment_frozen_values():
    # quadrature of (y - x)^k against the interface-at-0 density
    prm = SdeParams(1.0, 2.0, 1.0, 0.3, 0.0, 5.0)
    expected = {1: 3.572629216143153e-07, 2: 0.010000363065539884,
                3: 2.7480570996222367e-07, 4: 0.00030018454538371995}
    for k, v in expected.items():
        assert moment_exact(prm, k, -0.4, 0.01) == pytest.approx(v, rel=1e-7)


@pytest.mark.parametrize("x", [-0.7, -0.05, 0.2, 0.6, 0.95, 1.1, 2.0])
def test_moment_against_quadrature(x):
    for k in range(5):
        for t in (0.01, 0.2):
            ref = quad_moment(GENERIC, k, x, t)
            assert moment_exact(GENERIC, k, x, t) == pytest.approx(ref, rel=1e-7, abs=1e-14)


def test_small_time_limit_of_moments():
    for x in (-0.3, 0.4, 1.5):
        for k in (2, 3, 4):
            ratios = []
            for t in (1e-2, 1e-4, 1e-6):
                lim = 2 ** (k / 2 - 1) * D_k(GENERIC, k, x) * t ** (k / 2)
                ratios.append(abs(moment_exact(GENERIC, k, x, t) - lim) / t ** (k / 2))
            assert ratios[2] <= ratios[1] <= ratios[0] + 1e-15
            assert ratios[2] < 1e-12


def test_interface_left_moment_formula():
    prm = GENERIC
    for k in range(1, 5):
        t = 0.03
        expected = (prm.q * (1 - prm.alpha) / (prm.p - prm.q * (prm.alpha - 1)) * (-1) ** k
                    * prm.p**k * (2 * t) ** (k / 2) * math.gamma((k + 1) / 2) / math.sqrt(math.pi))
        assert moment_interface(prm, k, 0.0, t, "left") == pytest.approx(expected, rel=1e-14)


def test_interface_far_region_vanishes():
    prm = GENERIC
    t = 1e-2 * (prm.a / prm.q) ** 2
    for k in range(1, 5):
        assert abs(moment_interface(prm, k, prm.a, t, "left")) < t**4
        assert abs(moment_interface(prm, k, 0.0, t, "right")) < t**4


def test_interface_brownian_second_moment():
    total = sum(moment_interface(BM, 2, 0.0, 0.2, reg) for reg in ("left", "middle", "right"))
    assert total == pytest.approx(0.2, abs=1e-14)


@pytest.mark.parametrize("x", [0.0, 1.0])
def test_interface_regions_against_quadrature(x):
    prm = GENERIC
    use0 = x == 0.0
    for k in range(5):
        t = 0.3
        parts = {
            "left": quad_moment(prm, k, x, t, hi=0.0, single_0=use0),
            "middle": quad_moment(prm, k, x, t, lo=0.0, hi=prm.a, single_0=use0),
            "right": quad_moment(prm, k, x, t, lo=prm.a, single_0=use0),
        }
        for reg, ref in parts.items():
            assert moment_interface(prm, k, x, t, reg) == pytest.approx(ref, rel=1e-7, abs=1e-12)
        full = quad_moment(prm, k, x, t, single_0=use0)
        total = sum(moment_interface(prm, k, x, t, reg) for reg in parts)
        assert total == pytest.approx(full, abs=1e-8)


def test_D_k_values():
    for x in (-1.0, 0.5, 2.0):
        assert D_k(GENERIC, 1, x) == 0.0
    assert D_k(GENERIC, 2, 0.5) == pytest.approx(GENERIC.q**2, rel=1e-15)
    assert D_k(GENERIC, 4, 2.0) == pytest.approx(1.5 * GENERIC.r**4, rel=1e-15)
    with pytest.raises(InterfacePointError):
        D_k(GENERIC, 2, 0.0)


@settings(max_examples=60, deadline=None)
@given(c=st.floats(-10, 10), p=st.floats(0.1, 5), q=st.floats(0.1, 5), r=st.floats(0.1, 5),
       al=st.floats(-5, 0.95), be=st.floats(-5, 0.95), x=st.sampled_from([-0.5, 0.0, 0.3, 1.0, 1.7]))
def test_constant_data(c, p, q, r, al, be, x):
    prm = SdeParams(p, q, r, al, be, 1.0)
    res = expand_u(prm, PiecewiseInitialData.constant(c, order=4), x)
    assert res.coefficients[0] == pytest.approx(c, rel=1e-13, abs=1e-13)
    assert all(b == 0.0 for b in res.coefficients[1:])


def test_symmetric_vertex_average():
    h = PiecewiseInitialData([[0.3, 1.0], [1.7, -2.0], [0.0]], 2)
    assert b_k(BM, h, 0, 0.0) == pytest.approx((0.3 + 1.7) / 2, abs=1e-15)


def test_coefficients_frozen():
    # checked against quadrature of h against the nearest single-interface density
    prm = SdeParams(1.0, 2.0, 1.0, 0.5, -1.0, 1.0)
    h = PiecewiseInitialData([[1.0], [0.0, 1.0], [0.0, 0.0, 1.0]], 3)
    expected = {
        -1.0: ("interior-left", [1.0, 0.0, 0.0, 0.0]),
        0.0: ("x0", [0.5, 0.7978845608028654, 0.0, 0.0]),
        0.5: ("interior-mid", [0.5, 0.0, 0.0, 0.0]),
        1.0: ("xa", [1.0, 0.0, 0.5, 0.0]),
        2.0: ("interior-right", [4.0, 0.0, 1.0, 0.0]),
    }
    for x, (tag, coeffs) in expected.items():
        res = expand_u(prm, h, x)
        assert res.order_tag == tag
        np.testing.assert_allclose(res.coefficients, coeffs, rtol=1e-14, atol=1e-15)
        ker = kernel_for(prm, x)
        for t in (1e-3, 1e-4):
            lo, hi = window(prm, t, x, 14.0)
            ref = quad_pieces(lambda y: ker(t, y) * h(y, prm.a), lo, hi, (0.0, prm.a), epsabs=1e-15)
            assert res.partial_sum(t) == pytest.approx(ref, abs=1e-12)


def test_odd_interior_coefficients_exactly_zero():
    h = PiecewiseInitialData([[0.1, 0.2, 0.3, 0.4, 0.5]] * 3, 4)
    for x in (-0.3, 0.4, 1.5):
        cs = expand_u(GENERIC, h, x).coefficients
        assert cs[1] == 0.0 and cs[3] == 0.0


def test_brownian_martingale_data():
    h = PiecewiseInitialData([[0.0, 1.0]] * 3, 3)
    for x in (-0.8, 0.4, 2.5):
        assert expand_u(BM, h, x, 0.01).value == x
    assert expand_u(GENERIC, PiecewiseInitialData.constant(1.0, 3), 0.0, 0.01).value == 1.0


@pytest.mark.parametrize("x", [-0.4, 0.0, 0.3, 1.0, 1.4])
def test_taylor_split_matches_quadrature(x):
    h = PiecewiseInitialData([[0.2, -0.5, 0.3], [0.1, 0.4, -0.2, 0.6], [1.0, 0.0, 0.5]], 3)
    ker = kernel_for(GENERIC, x)
    # small enough that crossing into another piece is below 1e-15
    for t in (1e-4, 3e-4):
        lo, hi = window(GENERIC, t, x, 14.0)
        ref = quad_pieces(lambda y: ker(t, y) * h(y, GENERIC.a), lo, hi, (0.0, GENERIC.a), epsabs=1e-15)
        assert taylor_moment_sum(GENERIC, h, x, t) == pytest.approx(ref, abs=1e-8)


def test_compatible_data_transfer():
    prm = GENERIC
    m = from_sde_params(prm)
    h = compatible_initial_data(prm, [0.5, 0.3, -0.4, 0.2, 0.15], 3)
    for iface, (i, j) in ((0.0, (0, 1)), (prm.a, (1, 2))):
        # continuity of h and of the flux rho A h'
        assert h.piece_derivative(i, 0, iface) == pytest.approx(h.piece_derivative(j, 0, iface), abs=1e-13)
        ki, kj = m.densities[i] * m.diffusivities[i], m.densities[j] * m.diffusivities[j]
        assert ki * h.piece_derivative(i, 1, iface) == pytest.approx(kj * h.piece_derivative(j, 1, iface), abs=1e-12)
        # continuity of L h = A h'' / 2
        Ai, Aj = m.diffusivities[i], m.diffusivities[j]
        assert Ai * h.piece_derivative(i, 2, iface) == pytest.approx(Aj * h.piece_derivative(j, 2, iface), abs=1e-12)


def test_branch_tags():
    assert branch_tag(GENERIC, 0.0) == "x0"
    assert branch_tag(GENERIC, 1.0) == "xa"
    assert branch_tag(GENERIC, -2.0) == "interior-left"
    assert branch_tag(GENERIC, 0.9) == "interior-mid"
    assert branch_tag(GENERIC, 3.0) == "interior-right"


def test_initial_data_validation():
    with pytest.raises(ParameterError):
        PiecewiseInitialData([[1], [1], [1]], 0)
    with pytest.raises(ParameterError, match="degree"):
        PiecewiseInitialData([[1, 1, 1, 1], [1], [1]], 1)
    with pytest.raises(ParameterError):
        PiecewiseInitialData([[1], [1]], 2)
    with pytest.raises(ParameterError, match="unknown"):
        PiecewiseInitialData.from_dict({"pieces": [[1], [1], [1]], "N": 2, "extra": 1})
    with pytest.raises(ParameterError):
        PiecewiseInitialData.from_dict({"pieces": [[1], [1], [1]]})
    h = PiecewiseInitialData.from_dict({"pieces": [[1], [0, 1], [2]], "N": 2, "clamp": [-5, 5]})
    assert PiecewiseInitialData.from_dict(h.to_dict()).to_dict() == h.to_dict()
    assert h(np.array([-1.0, 0.5, 10.0]), 1.0).tolist() == [1.0, 0.5, 2.0]


def test_analytic_pieces():
    sin = AnalyticPiece(np.sin, [np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x)])
    h = PiecewiseInitialData([sin, sin, sin], 2)
    assert b_k(BM, h, 2, 0.5) == pytest.approx(-np.sin(0.5) / 2, rel=1e-14)
    with pytest.raises(DerivativeOrderError):
        PiecewiseInitialData([AnalyticPiece(np.sin, [np.cos]), sin, sin], 2)


def test_interface_errors():
    with pytest.raises(InterfacePointError):
        moment_exact(GENERIC, 2, 0.0, 0.1)
    with pytest.raises(InterfacePointError):
        moment_exact(GENERIC, 2, GENERIC.a, 0.1)
    with pytest.raises(InterfacePointError):
        moment_interface(GENERIC, 2, 0.5, 0.1, "left")
    with pytest.raises(ParameterError):
        moment_interface(GENERIC, 2, 0.0, 0.1, "top")
    with pytest.raises(ParameterError):
        moment_exact(GENERIC, 2, 0.3, 0.0)
    with pytest.raises(ParameterError):
        expand_u(GENERIC, PiecewiseInitialData.constant(1.0), 0.3, -1.0)
