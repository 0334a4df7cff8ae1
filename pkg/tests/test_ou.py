import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from wongzakai import noise, ou
from wongzakai.spectral import eigenvalues

# Values from an independent mpmath evaluation (30 digits) of
# sum_j int_0^T (g_j(r) - mean over the WZ interval of g_j)^2 dr, g_j(r) = 1{r<t} exp(-lambda_j (t - r)),
# plus the tail written with the Hurwitz zeta function.
ORACLE_TEMPORAL_16_32 = 0.0207619718335555305562447682713
ORACLE_MSE_16_32_CUT = 0.0223205856731034617337508544942  # tail summed to j = 10^6
ORACLE_MSE_16_32_INF = 0.0223206363336699526151694239613
ORACLE_TEMPORAL_T03_M5_N4 = 0.0425794387726737294293218024283

GL_X, GL_W = np.polynomial.legendre.leggauss(64)


def _gl(f, a, b):
    x = 0.5 * (b - a) * GL_X + 0.5 * (a + b)
    return 0.5 * (b - a) * np.sum(GL_W * f(x))


def psi_quadrature(lam, lo, hi, t):
    """2-D 64x64 Gauss-Legendre of the defining double integral, both axes split at t."""
    g = lambda r: np.where(r < t, np.exp(-lam * np.clip(t - r, 0, None)), 0.0)
    cuts = [lo, min(max(t, lo), hi), hi]
    segs = [(a, b) for a, b in zip(cuts, cuts[1:]) if b > a]
    h = hi - lo
    def inner(r):
        # int_I (g(r) - g(u)) du for each r
        return np.array([sum(_gl(lambda u: g(rr) - g(u), a, b) for a, b in segs) for rr in np.atleast_1d(r)])
    return sum(_gl(lambda r: inner(r) ** 2, a, b) for a, b in segs)


def test_wz_step_examples():
    assert ou.ou_wz_step(1.0, 0.0, 0.3, 2.0) == pytest.approx(np.exp(-0.6), rel=1e-15)
    assert ou.ou_wz_step(0.7, 0.2, 1e-14, 1.0) == pytest.approx(0.9, rel=1e-12)
    val = ou.ou_wz_step(0.0, 1.0, 0.25, np.pi**2)
    assert val == pytest.approx(4 * (1 - np.exp(-np.pi**2 / 4)) / np.pi**2, rel=1e-14)
    assert val == pytest.approx(0.370914573811, abs=1e-12)
    with pytest.raises(ValueError):
        ou.ou_wz_step(0.0, 1.0, 0.0, 1.0)


def test_wz_step_against_ode_integrator():
    lam, tau, db, c0 = np.pi**2, 0.25, 1.0, 0.0
    sol = solve_ivp(lambda s, c: -lam * c + db / tau, (0, tau), [c0], method="DOP853", rtol=1e-13, atol=1e-15)
    assert ou.ou_wz_step(c0, db, tau, lam) == pytest.approx(sol.y[0, -1], rel=1e-11)


def test_phi_series_and_direct_agree_near_switch():
    x = np.array([0.49, 0.4999999, 0.5, 0.5000001, 0.51])
    direct = -np.expm1(-2 * x) / (2 * x) - ((-np.expm1(-x)) / x) ** 2
    np.testing.assert_allclose(ou.phi(x), direct, rtol=1e-9)
    assert ou.phi(0.0) == 0.0
    assert ou.phi(1e-8) == pytest.approx(1e-16 / 12, rel=1e-6)  # x^2/12 leading term


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 50))
def test_phi_non_negative(x):
    assert ou.phi(x) >= 0


def test_exact_step_limits():
    mean, var = ou.exact_step_moments(0.3, 1e-12, 1.0)
    assert float(mean) == pytest.approx(0.3, rel=1e-11)
    assert 0 <= float(var) < 1e-24
    mean, var = ou.exact_step_moments(np.array([1.0]), np.array([2.0]), 3.0)
    V = (1 - np.exp(-12)) / 6
    cov = (1 - np.exp(-6)) / 3
    assert var[0] == pytest.approx(V - cov**2 / 2, rel=1e-13)
    assert mean[0] == pytest.approx(cov / 2, rel=1e-13)


def test_exact_step_marginals_mc():
    N, lam, tau = 200000, 3.0, 0.4
    rng = np.random.default_rng(1)
    db = rng.standard_normal(N) * np.sqrt(tau)
    x = ou.ou_exact_step(np.zeros(N), db, tau, lam, rng.standard_normal(N))
    V = (1 - np.exp(-2 * lam * tau)) / (2 * lam)
    se_v = V * np.sqrt(2 / N)
    assert abs(np.var(x) - V) < 4 * se_v
    cov = (1 - np.exp(-lam * tau)) / lam
    prod = x * db
    assert abs(prod.mean() - cov) < 4 * prod.std() / np.sqrt(N)


def test_exact_ou_marginal_variance_over_many_steps():
    N, L, T = 4000, 6, 1.0
    sids = np.arange(N)
    inc = noise.increment_block(5, sids, 2, L, T)
    c = ou.exact_ou_block(5, sids, inc, T, 2**L)
    lam = eigenvalues(2)
    V = (1 - np.exp(-2 * lam * T)) / (2 * lam)
    assert np.all(np.abs(c.var(axis=0) - V) < 4 * V * np.sqrt(2 / N))


def test_psi_examples():
    assert ou.psi_integral(np.pi**2, 0.5, 0.75, 0.5) == 0.0
    assert ou.psi_integral(np.pi**2, 0.5, 0.75, 0.2) == 0.0
    assert ou.psi_integral(1e-9, 0.0, 0.25, 0.5) < 1e-20
    q = psi_quadrature(np.pi**2, 0.0, 0.25, 0.5)
    assert ou.psi_integral(np.pi**2, 0.0, 0.25, 0.5) == pytest.approx(q, rel=1e-10)
    with pytest.raises(ValueError):
        ou.psi_integral(1.0, 0.3, 0.3, 1.0)


def test_psi_against_quadrature_random_triples():
    rng = np.random.default_rng(20)
    worst = 0.0
    for _ in range(40):
        lam = (rng.integers(1, 7) * np.pi) ** 2
        m = int(rng.choice([2, 4, 8, 16, 32]))
        i = int(rng.integers(0, m))
        lo, hi = i / m, (i + 1) / m
        t = float(rng.uniform(lo, 1.0))  # includes straddling intervals
        q = psi_quadrature(lam, lo, hi, t)
        v = ou.psi_integral(lam, lo, hi, t)
        worst = max(worst, abs(v - q) / q)
    assert worst < 1e-10


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e4), st.floats(0, 1), st.floats(1e-4, 1), st.floats(0, 2))
def test_psi_non_negative(lam, lo, h, dt):
    assert ou.psi_integral(lam, lo, lo + h, lo + dt) >= 0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(1, 12), st.floats(0.01, 1.0))
def test_temporal_modes_equal_interval_sums(m, n, t):
    direct = np.zeros(n)
    lam = eigenvalues(n)
    for i in range(m):
        lo, hi = i / m, (i + 1) / m
        direct += np.array([ou.psi_integral(l, lo, hi, t) for l in lam])
    np.testing.assert_allclose(ou.temporal_error_modes(t, m, n, 1.0), m**2 * direct, rtol=1e-11, atol=1e-300)


def test_frozen_oracle_values():
    b = ou.ou_error_breakdown(1.0, 16, 32, 1.0)
    assert b.temporal == pytest.approx(ORACLE_TEMPORAL_16_32, rel=1e-13)
    assert b.mse == pytest.approx(ORACLE_MSE_16_32_CUT, rel=1e-13)
    # the reported remainder bound covers the truncated tail
    assert ORACLE_MSE_16_32_INF - b.mse <= b.tail_remainder_bound
    assert ORACLE_MSE_16_32_INF - b.mse >= 0
    straddle = np.sum(ou.temporal_error_modes(0.3, 5, 4, 1.0))
    assert straddle == pytest.approx(ORACLE_TEMPORAL_T03_M5_N4, rel=1e-13)


def test_temporal_bound_corrected_sign():
    for m in range(2, 257):
        lam = eigenvalues(64)
        bound = 8 * (1 - np.exp(-lam / m)) / lam
        assert np.all(ou.temporal_error_modes(1.0, m, 64, 1.0) <= bound)


def test_mse_analytic_examples():
    assert ou.ou_mse_analytic(0.0, 8, 8) == 0.0
    vals = [ou.ou_mse_analytic(1.0, 2**k, 2**k) for k in range(2, 12)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        ou.ou_mse_analytic(1.0, 4, 100, j_tail_cutoff=50)


def test_mse_between_tail_and_tail_plus_rate():
    # the m^(-1/2) regime needs lambda_n well above m
    n = 4096
    tail, _ = ou.tail_variance(1.0, n)
    ms = 2 ** np.arange(2, 11)
    temporal = np.array([ou.ou_mse_analytic(1.0, m, n) - tail for m in ms])
    assert np.all(temporal >= 0)
    C = np.max(temporal * np.sqrt(ms))
    assert np.all(temporal <= C / np.sqrt(ms))
    slope = np.polyfit(np.log(ms[-5:]), np.log(temporal[-5:]), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.05)


def test_tail_variance_examples():
    assert ou.tail_variance(0.0, 5)[0] == 0.0
    vals = [ou.tail_variance(1.0, n)[0] for n in (1, 2, 4, 8, 16, 32)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    v, rem = ou.tail_variance(1.0, 10)
    assert v >= 1 / (2 * (1 + 2 * np.pi**2) * 10)
    assert 1 / (2 * (1 + 2 * np.pi**2) * 10) == pytest.approx(2.41089e-3, rel=1e-5)
    assert rem == pytest.approx(1 / (2 * np.pi**2 * 10**6))


def test_tail_variances_matches_scalar():
    ns = np.array([1, 7, 64, 256])
    v = ou.tail_variances(0.1, ns)
    for n, x in zip(ns, v):
        assert x == pytest.approx(ou.tail_variance(0.1, int(n))[0], rel=1e-12)


def test_tail_lower_bound_grid():
    ns = np.arange(1, 257)
    for t in (0.01, 0.1, 1.0):
        assert np.all(ou.tail_variances(t, ns) >= ou.tail_lower_bound(t, ns))


def test_tail_remainder_is_an_upper_bound():
    exact = ou.tail_variance(1.0, 10, 10**6)[0]
    short, rem = ou.tail_variance(1.0, 10, 1000)
    assert 0 <= exact - short <= rem


def test_mc_against_analytic_small():
    t, m, n, L, n_modes = 1.0, 16, 32, 4, 256
    est = ou.ou_mse_mc(t, [(m, n)], 1.0, 400, 99, L, n_modes)[(m, n)]
    target = ou.ou_mse_analytic(t, m, n, 1.0, j_tail_cutoff=n_modes)
    assert abs(est.mse - target) <= 4 * est.stderr


def test_mc_rejects_bad_inputs():
    with pytest.raises(ValueError):
        ou.ou_mse_mc(0.3, [(4, 2)], 1.0, 10, 1, 3, 4)
    with pytest.raises(ValueError):
        ou.ou_mse_mc(1.0, [(3, 2)], 1.0, 10, 1, 3, 4)
    with pytest.raises(ValueError):
        ou.ou_mse_mc(1.0, [(4, 8)], 1.0, 10, 1, 3, 4)


def test_wz_block_matches_stepped_modes():
    inc = noise.increment_block(3, [0, 1], 4, 5, 1.0)
    got = ou.wz_ou_block(inc, 8, 3, 1.0, 1.0)
    coarse = noise.coarsen_array(inc[:, :3], 8)
    lam = eigenvalues(3)
    c = np.zeros((2, 3))
    for i in range(8):
        c = ou.ou_wz_step(c, coarse[:, :, i], 1 / 8, lam)
    np.testing.assert_array_equal(got, c)


def test_sup_bound_examples():
    est, se = ou.ou_sup_bound_check(np.zeros((5, 3, 7)), 2.0)
    assert est == 0.0 and se == 0.0
    a2, se2 = ou.ou_sup_moment(4, 300, 64, 64, 2.0)
    a4, se4 = ou.ou_sup_moment(4, 300, 64, 64, 4.0)
    assert a2**0.5 <= a4**0.25


def test_sup_moment_stable_under_doubling():
    a, _ = ou.ou_sup_moment(8, 500, 64, 64, 2.0)
    b, _ = ou.ou_sup_moment(8, 500, 128, 128, 2.0)
    assert abs(a - b) / max(a, b) < 0.15
