import numpy as np
import pytest
from scipy.linalg import expm

from taylorlab.hypocoercivity import (band_samples, build_certificate, certify_band, dphi, metric,
                                      norm_decay_conclusion, phi, phi_decay_check)
from taylorlab.modal_operator import assemble, evaluate
from taylorlab.spectral import abscissa


def test_certificate_bounds(cos1):
    cert = build_certificate(cos1, 0.1)
    assert all(v > 0 for v in cert.c_bounds.values())
    assert cert.c > 0 and len(cert.c_bounds) == 6
    assert cert.c == pytest.approx(0.9 * min(cert.c_bounds.values()))
    assert isinstance(cert.second_display_binding, bool)
    assert build_certificate(cos1, 0.05).M_tilde == cert.M_tilde
    assert build_certificate(cos1, 0.02).M_tilde_corrected == cert.M_tilde_corrected


def test_certificate_guards(cos1, plug16):
    with pytest.raises(ValueError, match="delta"):
        build_certificate(cos1, 0.1, delta=0.3)
    with pytest.raises(ValueError, match="μ-norm zero"):
        build_certificate(plug16, 0.1)
    with pytest.raises(ValueError):
        build_certificate(cos1, 0.1, kappa0=100.0)


def test_phi_values(cos1, rng):
    cert = build_certificate(cos1, 0.1)
    k = cert.kappa0
    e0 = np.zeros(17, complex)
    e0[0] = 1
    assert phi(cert, k, e0) == pytest.approx(1.0)
    v = np.concatenate([[0], rng.standard_normal(16) + 1j * rng.standard_normal(16)])
    assert phi(cert, k, v) == pytest.approx(np.vdot(v, v).real)
    W = rng.standard_normal(17) + 1j * rng.standard_normal(17)
    assert phi(cert, k, W) == pytest.approx(np.vdot(W, metric(cert, k) @ W).real)


def test_norm_equivalence(cos1, rng):
    cert = build_certificate(cos1, 0.05)
    for _ in range(1000):
        k = rng.uniform(*cert.band)
        W = rng.standard_normal(17) + 1j * rng.standard_normal(17)
        W /= np.linalg.norm(W)
        p = phi(cert, k, W)
        assert 0.5 <= p <= cert.M_check


def test_dphi_matches_finite_difference(cos2, rng):
    cert = build_certificate(cos2, 0.1)
    op = assemble(cos2, 0.1)
    k = 2.0
    W = rng.standard_normal(17) + 1j * rng.standard_normal(17)
    h = 1e-7
    B = evaluate(op, k)
    fd = (phi(cert, k, expm(B * h) @ W) - phi(cert, k, expm(-B * h) @ W)) / (2 * h)
    assert dphi(cert, op, k, W) == pytest.approx(fd, rel=1e-6)


def test_zero_initial_vacuous(cos1):
    cert = build_certificate(cos1, 0.1)
    tr = phi_decay_check(assemble(cos1, 0.1), cert, cert.band[0], np.zeros(17))
    assert tr.passed and not np.any(tr.Phi)


def test_out_of_band_rejected(cos1):
    cert = build_certificate(cos1, 0.1)
    with pytest.raises(ValueError, match="outside"):
        phi_decay_check(assemble(cos1, 0.1), cert, 0.5 * cert.band[0], np.ones(17))


@pytest.mark.parametrize("nu", [0.02, 0.05, 0.1])
def test_corrected_rate_certified(cos1, nu, rng):
    cert = build_certificate(cos1, nu)
    op = assemble(cos1, nu)
    for k in (cert.band[0], cert.band[1]):
        W0 = rng.standard_normal(17) + 1j * rng.standard_normal(17)
        tr = phi_decay_check(op, cert, k, W0, rate="corrected")
        assert tr.passed, tr.offending
        assert norm_decay_conclusion(cert, tr).passed
    bc = certify_band(cert, op)
    assert np.all(bc.decay_rate >= cert.M_tilde_corrected)
    assert np.all(bc.metric_min >= 0.5) and np.all(bc.metric_max <= cert.M_check)


def test_upper_edge_improvement(cos1, rng):
    cert = build_certificate(cos1, 0.1)
    tr = phi_decay_check(assemble(cos1, 0.1), cert, cert.band[1], rng.standard_normal(17) + 0j, rate="corrected")
    assert tr.improvement > 0 and np.isfinite(tr.improvement)


def test_naive_bound_comparison(cos1):
    # nu = 0.02, kappa = kappa0, T = 50: the energy bound exp(-nu^2 k^2 T) barely decays,
    # while Phi decays at the exact band rate (and nominally at M_tilde)
    nu, T = 0.02, 50.0
    cert = build_certificate(cos1, nu)
    naive = np.exp(-(nu * cert.kappa0) ** 2 * T)
    assert naive > 0.6
    assert np.exp(-cert.M_tilde * T) < 1e-60
    bc = certify_band(cert, assemble(cos1, nu))
    assert np.exp(-bc.decay_rate.min() * T) < 1e-3 * naive


def test_uncorrected_rate_eigenvector_counterexample(cos1):
    # along an eigenvector Phi(T) = exp(2 Re(lambda) T) Phi(0) exactly, so no quadratic
    # functional can certify a rate above -2 Re(lambda); the nominal M_tilde exceeds it at kappa0(1-delta)
    for nu in (0.02, 0.05, 0.1):
        cert = build_certificate(cos1, nu)
        op = assemble(cos1, nu)
        k = cert.band[0]
        w, V = np.linalg.eig(evaluate(op, k))
        j = int(np.argmax(w.real))
        assert cert.M_tilde > -2 * w[j].real
        assert cert.M_tilde > -abscissa(op, band_samples(cert)).max()
        tr = phi_decay_check(op, cert, k, V[:, j], T_max=5.0, rate="uncorrected")
        np.testing.assert_allclose(tr.Phi, tr.Phi[0] * np.exp(2 * w[j].real * tr.T), rtol=1e-9)
        assert not tr.passed
        assert certify_band(cert, op).decay_rate.min() < cert.M_tilde


def test_sharpened_dissipation_counterexample(cos1):
    # dPhi/dT <= -(mu1 + nu^2 k^2)||W||^2 cannot hold: the dissipation margin is far below mu1
    cert = build_certificate(cos1, 0.1)
    bc = certify_band(cert, assemble(cos1, 0.1))
    assert bc.dissipation.min() < cert.mu1
    assert bc.dissipation.min() >= cert.M_tilde_corrected
