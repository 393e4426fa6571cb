import numpy as np
import pytest

from taylorlab.cross_section import decompose_shear, profile_cosine
from taylorlab.manifold import (LinearFlow, ManifoldCoefficients, ReducedState, attraction_test,
                                compute_coefficients, diag_change, diag_change_inverse, full_flow,
                                integrate_full, invariance_residual, on_manifold, random_full_state,
                                reduced_decay_test)


def zero_state(N, M):
    return ReducedState(np.zeros(N + 1), 1.0, np.zeros((N + 1, M)), np.zeros(M))


def test_diag_change(cos1, rng):
    N, M = 4, 16
    beta = rng.standard_normal((N + 1, M))
    a, b = diag_change(np.zeros(N + 1), beta, cos1)
    np.testing.assert_array_equal(b, beta)
    al = np.zeros(N + 1)
    al[0] = 1
    _, b = diag_change(al, np.zeros((N + 1, M)), cos1)
    np.testing.assert_allclose(b[0], cos1.A * cos1.chi / cos1.mu, rtol=1e-15)
    al = rng.standard_normal(N + 1)
    x, y = diag_change_inverse(*diag_change(al, beta, cos1), cos1)
    assert np.max(np.abs(x - al)) < 1e-12 and np.max(np.abs(y - beta)) < 1e-12


def test_full_flow_zero_state(cos2):
    d = full_flow(zero_state(4, 16), cos2)
    assert not np.any(d.a) and not np.any(d.b) and not np.any(d.gamma)


def test_full_flow_gamma_unit(cos2):
    n = 2
    st = zero_state(4, 16)
    g = np.zeros(16)
    g[n] = 1.0
    st = ReducedState(st.a, 0.6, st.b, g)
    d = full_flow(st, cos2)
    np.testing.assert_allclose(d.gamma, -cos2.mu * g)
    np.testing.assert_allclose(d.b[0], -cos2.A * cos2.coupling[:, n])
    assert d.a[1] == pytest.approx(-cos2.A * 0.6 * cos2.chi[n])


def test_full_flow_mean_unit(cos2):
    # a_0 = 1: b_1' = sigma A^2 chi~ q plus b_2' = sigma^2 D A q (a_{k-2} term), sigma' = -sigma^3/2
    s = 0.8
    st = zero_state(4, 16)
    a = np.zeros(5)
    a[0] = 1.0
    d = full_flow(ReducedState(a, s, st.b, st.gamma), cos2)
    q = cos2.chi / cos2.mu
    A = cos2.A
    np.testing.assert_allclose(d.b[1], s * A ** 2 * cos2.coupling @ q, atol=1e-16)
    np.testing.assert_allclose(d.b[2], s * s * cos2.D_td * A * q, atol=1e-16)
    assert not np.any(d.a) and not np.any(d.b[[0, 3, 4]]) and not np.any(d.gamma)
    assert d.sigma == pytest.approx(-0.5 * s ** 3)


def test_trivial_coefficients(plug16):
    assert not np.any(compute_coefficients(plug16, 5).C)
    c = compute_coefficients(plug16, 5)
    assert invariance_residual(c, plug16, np.ones(6), 0.5) == 0.0


def test_first_coefficient_oracle(interval8):
    f = decompose_shear(profile_cosine((1.0,)), interval8)
    C10 = compute_coefficients(f, 3).C[1, 0]
    expect = np.zeros(8)
    expect[1] = 1 / (8 * np.sqrt(2) * np.pi ** 4)
    np.testing.assert_allclose(C10, expect, atol=1e-17)


def test_invariance(cos1, cos2, rng):
    for f in (cos1, cos2):
        c = compute_coefficients(f, 5)
        for _ in range(100):
            a = rng.standard_normal(6)
            a /= np.linalg.norm(a)
            assert invariance_residual(c, f, a, float(rng.uniform(0, 1))) <= 1e-9
    c = compute_coefficients(cos2, 8)
    a = rng.standard_normal(9)
    assert invariance_residual(c, cos2, a, 0.7) <= 1e-9


def test_perturbed_table_detected(cos1, rng):
    c = compute_coefficients(cos1, 5)
    C = c.C.copy()
    C[1, 0] += 1e-3 * np.ones(16) / 4
    bad = ManifoldCoefficients(5, C)
    a = rng.standard_normal(6)
    a /= np.linalg.norm(a)
    assert invariance_residual(bad, cos1, a, 0.7) > 1e-4


def test_table_serialization_stable(cos2):
    t1 = compute_coefficients(cos2, 5).to_json()
    t2 = compute_coefficients(cos2, 5).to_json()
    assert t1 == t2 and '"N": 5' in t1


def test_linear_flow_matches_full_flow(cos2, rng):
    N, M = 4, 16
    lf = LinearFlow(cos2, N)
    st = random_full_state(N, M, rng)
    st = ReducedState(st.a, 0.37, st.b, st.gamma)
    y = st.pack()
    d = full_flow(st, cos2).pack()
    assert np.max(np.abs(lf(0.0, y) - d)) < 1e-13 * np.max(np.abs(d))


def test_on_manifold_start_stays(cos2, rng):
    c = compute_coefficients(cos2, 5)
    st = on_manifold(c, rng.standard_normal(6), 1.0)
    rep = attraction_test(cos2, c, st)
    assert np.max(rep.norms) < 1e-12


def test_trivial_envelope(plug16, rng):
    # chi = 0: b_k(T) = b_k(0) exp(-mu T) (1+T)^(-k/2), inside the (1+T)^(k/2) envelope
    st = random_full_state(3, 16, rng)
    mu1 = float(plug16.mu[0])
    t = np.linspace(0, 40 / mu1, 41)
    traj = integrate_full(plug16, st, t)
    for k in range(4):
        b0 = np.linalg.norm(st.b[k])
        for T, s in zip(t, traj):
            exact = st.b[k] * np.exp(-plug16.mu * T) * (1 + T) ** (-k / 2)
            assert np.max(np.abs(s.b[k] - exact)) < 1e-10
            assert np.linalg.norm(exact) <= b0 * np.exp(-mu1 * T) * (1 + T) ** (k / 2) * (1 + 1e-12)


def test_attraction(cos2, rng):
    c = compute_coefficients(cos2, 5)
    st = random_full_state(5, 16, rng)
    rep = attraction_test(cos2, c, st)
    assert rep.passed
    assert rep.gamma_error < 1e-8 and rep.sigma_error < 1e-8
    assert np.all(rep.exponents == 1 + 0.5 * np.arange(6))
    with pytest.raises(ValueError):
        attraction_test(cos2, c, st, T_max=1.0)


def test_attraction_independent_of_nu(cos1, rng):
    # the flow never sees nu: two runs from the same data are identical
    c = compute_coefficients(cos1, 3)
    st = random_full_state(3, 16, rng)
    r1 = attraction_test(cos1, c, st, samples=41)
    r2 = attraction_test(cos1, c, st, samples=41)
    np.testing.assert_array_equal(r1.norms, r2.norms)


def test_reduced_decay_closed_forms(cos1):
    c = compute_coefficients(cos1, 5)
    a0 = np.zeros(6)
    a0[0] = 1.0
    rep = reduced_decay_test(c, cos1, a0)
    assert np.max(np.abs(rep.a[:, 0] - 1)) < 1e-10
    assert rep.passed, rep.failures
    # r = 0 for this profile, so a_3 is never forced and is excluded from the fit
    assert 3 in rep.excluded and not np.any(rep.a[:, 3])
    a1 = np.zeros(6)
    a1[1] = 1.0
    rep = reduced_decay_test(c, cos1, a1)
    np.testing.assert_allclose(rep.a[:, 1], np.exp(-0.5 * rep.tau), atol=1e-10)
    assert 0 in rep.excluded


def test_reduced_decay_a3_forced(cos2):
    c = compute_coefficients(cos2, 5)
    a0 = np.zeros(6)
    a0[0] = 1.0
    rep = reduced_decay_test(c, cos2, a0)
    assert rep.passed, rep.failures
    assert np.isfinite(rep.slopes[3]) and rep.slopes[3] <= -0.5 + 0.05


def test_reduced_decay_rate_law(cos2, rng):
    c = compute_coefficients(cos2, 5)
    rep = reduced_decay_test(c, cos2, rng.standard_normal(6))
    assert rep.passed, rep.failures
