import numpy as np
import pytest
from scipy import stats

from conftest import GENERIC, MATCHED
from mlheat.errors import ConvergenceError, ParameterError
from mlheat.expansion import PiecewiseInitialData, compatible_initial_data, expand_u
from mlheat.kernels import cdf_single_0, cdf_single_a
from mlheat.medium import SdeParams
from mlheat.montecarlo import (
    SCHEMES,
    SamplerConfig,
    coupling_failure_rate,
    estimate_expectation,
    max_workers,
    sample_single_interface_inverse_cdf,
    sample_single_interface_step,
    simulate_path,
    simulate_terminal,
    skew_bm_step,
    step_size,
)

N = 100_000
KS_CRIT = 1.36 / np.sqrt(N)


def test_gaussian_when_unskewed():
    prm = SdeParams(1.5, 1.5, 1.5, 0.0, 0.0, 1.0)
    rng = np.random.default_rng(11)
    x, dt = 0.05, 0.2
    d = sample_single_interface_step(prm, 0, np.full(N, x), dt, rng)
    sd = 1.5 * np.sqrt(dt)
    assert abs(d.mean() - x) < 4 * sd / np.sqrt(N)
    assert stats.kstest(d, stats.norm(x, sd).cdf).statistic < KS_CRIT


@pytest.mark.parametrize("iface,x", [(0, 0.1), (0, -0.05), (0, 0.0), ("a", 1.0), ("a", 0.93), ("a", 1.2)])
def test_single_step_ks(iface, x):
    rng = np.random.default_rng(2024)
    dt = 0.01
    d = sample_single_interface_step(GENERIC, iface, np.full(N, x), dt, rng)
    cdf = cdf_single_0 if iface == 0 else cdf_single_a
    assert stats.kstest(d, lambda y: cdf(GENERIC, dt, x, y)).statistic < KS_CRIT


@pytest.mark.parametrize("dt", [1e-4, 0.5])
def test_vertex_split_probability(dt):
    prm = SdeParams(1.0, 2.0, 1.0, -0.5, 0.0, 1.0)
    rng = np.random.default_rng(5)
    d = sample_single_interface_step(prm, 0, np.zeros(N), dt, rng)
    theta = 0.5 * (1 + prm.skew0)
    assert abs(np.mean(d > 0) - theta) < 4 * np.sqrt(theta * (1 - theta) / N)


def test_scale_route_matches_inverse_cdf():
    rng = np.random.default_rng(99)
    n = 10_000
    for iface, x in ((0, 0.05), ("a", 0.97)):
        a = sample_single_interface_step(GENERIC, iface, np.full(n, x), 0.02, rng)
        b = sample_single_interface_inverse_cdf(GENERIC, iface, np.full(n, x), 0.02, rng)
        assert stats.ks_2samp(a, b).pvalue > 0.05


def test_inverse_cdf_non_convergence():
    rng = np.random.default_rng(0)
    with pytest.raises(ConvergenceError):
        sample_single_interface_inverse_cdf(GENERIC, 0, np.zeros(10), 0.1, rng, max_iter=3)


def test_skew_step_is_finite_far_away():
    rng = np.random.default_rng(1)
    z = skew_bm_step(0.3, np.array([-1e6, 0.0, 1e6]), 1.0, rng)
    assert np.all(np.isfinite(z))


def test_brownian_quadratic_variation():
    c = 1.5
    prm = SdeParams(c, c, c, 0.0, 0.0, 1.0)
    cfg = SamplerConfig(dt_max=1e-3, n_paths=200, seed=3)
    ps = simulate_path(prm, 0.2, 1.0, cfg)
    assert ps.times.size == 1001
    qv = np.sum(np.diff(ps.states, axis=1) ** 2, axis=1)
    assert abs(qv.mean() - c * c) < 0.05 * c * c


@pytest.mark.parametrize("dt_max", [0.5, 0.01])
def test_single_interface_medium_exact_for_any_step(dt_max):
    prm = SdeParams(1.0, 2.0, 2.0, 0.4, 0.0, 1.0)
    cfg = SamplerConfig(dt_max=dt_max, coupling_eps=1e-6, n_paths=N, seed=17)
    y = simulate_terminal(prm, 0.2, 0.3, cfg)
    assert stats.kstest(y, lambda u: cdf_single_0(prm, 0.3, 0.2, u)).statistic < KS_CRIT


def test_path_sample_invariants():
    cfg = SamplerConfig(n_paths=50, seed=8, block_size=16)
    ps = simulate_path(GENERIC, 0.3, 0.05, cfg)
    assert ps.times[0] == 0 and np.all(np.diff(ps.times) > 0)
    assert ps.times[-1] == pytest.approx(0.05, rel=1e-15)
    assert np.all(ps.states[:, 0] == 0.3)
    assert np.all(np.isfinite(ps.states))
    assert ps.scheme.shape == (50, ps.times.size - 1)
    assert set(ps.scheme_names().ravel()) <= set(SCHEMES)
    assert ps.scheme_names()[0, 0] == "exact_single_0"
    rows = list(ps.iter_rows())
    assert len(rows) == 50 * ps.times.size
    assert rows[0] == (0, 0.0, 0.3, "initial")
    # terminal draws use the same streams as full paths
    np.testing.assert_array_equal(simulate_terminal(GENERIC, 0.3, 0.05, cfg), ps.states[:, -1])


def test_step_size_respects_leak_bound():
    cfg = SamplerConfig(dt_max=1.0, coupling_eps=1e-8)
    dt, n = step_size(GENERIC, cfg, 0.3)
    c2 = 1 / (2 * GENERIC.max_diffusion**2)
    assert np.exp(-c2 * (GENERIC.a / 2) ** 2 / dt) <= 1e-8 * (1 + 1e-12)
    assert dt * n == pytest.approx(0.3)


def test_determinism(monkeypatch):
    cfg = SamplerConfig(n_paths=3000, seed=42, block_size=500)
    monkeypatch.setenv("MLH_THREADS", "1")
    a = simulate_path(GENERIC, 0.6, 0.02, cfg)
    monkeypatch.setenv("MLH_THREADS", "4")
    b = simulate_path(GENERIC, 0.6, 0.02, cfg)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.scheme, b.scheme)
    c = simulate_path(GENERIC, 0.6, 0.02, SamplerConfig(n_paths=3000, seed=43, block_size=500))
    assert not np.array_equal(a.states, c.states)


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("MLH_THREADS", "3")
    assert max_workers() == 3
    monkeypatch.setenv("MLH_THREADS", "zero")
    with pytest.raises(ParameterError):
        max_workers()
    monkeypatch.setenv("MLH_THREADS", "0")
    with pytest.raises(ParameterError):
        max_workers()


def test_closed_form_histogram():
    cfg = SamplerConfig(n_paths=N, seed=3)
    y = simulate_terminal(MATCHED, 0.3, 0.5, cfg, closed_form=True)
    from mlheat.kernels import kernel_two_interface
    from conftest import quad_pieces
    edges = np.quantile(y, np.linspace(0, 1, 21))
    edges[0], edges[-1] = -30.0, 30.0
    probs = np.array([quad_pieces(lambda u: kernel_two_interface(MATCHED, 0.5, 0.3, u), lo, hi, (0.0, 1.0))
                      for lo, hi in zip(edges[:-1], edges[1:])])
    counts, _ = np.histogram(y, edges)
    assert stats.chisquare(counts, probs * N / probs.sum()).pvalue > 0.01
    with pytest.raises(ParameterError):
        simulate_terminal(GENERIC, 0.3, 0.5, cfg, closed_form=True)


def test_constant_data_estimate_exact():
    est = estimate_expectation(GENERIC, PiecewiseInitialData.constant(1.0), 0.4, 0.1,
                               SamplerConfig(n_paths=1000, seed=1))
    assert est.estimate == 1.0 and est.stderr == 0.0
    d = est.to_dict()
    assert d["n_paths"] == 1000 and d["seed"] == 1


def test_estimate_against_expansion():
    h = compatible_initial_data(GENERIC, [0.5, 0.3, -0.4, 0.2, 0.15], 3)
    est = estimate_expectation(GENERIC, h, 0.5, 1e-2, SamplerConfig(n_paths=20_000, seed=9))
    ref = expand_u(GENERIC, h, 0.5, 1e-2).value
    assert abs(est.estimate - ref) < 3 * est.stderr


def test_coupling_diagnostic():
    rates = coupling_failure_rate(GENERIC, 0.5, [0.02, 0.01, 0.005, 1e-4], 20_000, 1)
    assert np.all(np.diff(rates) <= 0)
    assert rates[-1] == 0.0
    by_start = [coupling_failure_rate(GENERIC, x0, [0.02], 20_000, 2)[0] for x0 in (0.0, 0.25, 0.5)]
    assert by_start[2] == max(by_start)
    assert by_start[0] <= by_start[1] <= by_start[2]
    with pytest.raises(ParameterError):
        coupling_failure_rate(GENERIC, 0.6, [0.01], 10, 0)
    with pytest.raises(ParameterError):
        coupling_failure_rate(GENERIC, 0.1, [], 10, 0)


def test_config_validation():
    for kwargs in ({"dt_max": 0}, {"dt_max": float("inf")}, {"coupling_eps": 0}, {"coupling_eps": 1},
                   {"n_paths": 0}, {"n_paths": 2.5}, {"seed": -1}, {"block_size": 0}):
        with pytest.raises(ParameterError):
            SamplerConfig(**kwargs)
    cfg = SamplerConfig(n_paths=10)
    with pytest.raises(ParameterError):
        simulate_path(GENERIC, 0.0, 0.0, cfg)
    with pytest.raises(ParameterError):
        sample_single_interface_step(GENERIC, 2, 0.0, 0.1, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        sample_single_interface_step(GENERIC, 0, 0.0, 0.0, np.random.default_rng(0))
