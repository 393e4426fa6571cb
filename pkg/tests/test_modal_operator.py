import numpy as np
import pytest
from scipy.linalg import expm

from taylorlab.cross_section import CrossSectionSpec, build_spectrum, decompose_shear, profile_cosine
from taylorlab.modal_operator import (assemble, evaluate, nu_factorization_check, propagator,
                                      split_symmetric, top_mode_fraction)


def test_structure(cos1):
    op = assemble(cos1, 0.1)
    d = np.diag(op.B0)
    assert d[0] == 0 and np.all(d[1:] < 0)
    assert np.array_equal(op.B1, -op.B1.conj().T)
    assert np.array_equal(op.B2, -(0.1 ** 2) * np.eye(17))


def test_trivial_field(plug16):
    op = assemble(plug16, 0.1)
    assert not np.any(op.B1)
    k = 0.7
    np.testing.assert_allclose(np.diag(evaluate(op, k)), np.concatenate([[0], -plug16.mu]) - 0.01 * k * k)


def test_small_B1_oracle():
    sp = build_spectrum(CrossSectionSpec("interval", modes=2))
    op = assemble(decompose_shear(profile_cosine((1.0,)), sp), 0.1)
    s = 1 / np.sqrt(2)
    np.testing.assert_allclose(op.B1, 1j * np.array([[0, s, 0], [s, 0, 0.5], [0, 0.5, 0]]), atol=1e-13)


def test_single_mode_evaluation():
    sp = build_spectrum(CrossSectionSpec("interval", modes=1))
    op = assemble(decompose_shear(lambda p: np.ones(len(p)), sp), 0.1)
    np.testing.assert_allclose(evaluate(op, 1.0), np.diag([-0.01, -0.01 - np.pi ** 2]), atol=1e-15)


def test_evaluate_symmetries(cos2):
    op = assemble(cos2, 0.1)
    assert np.array_equal(evaluate(op, 0.0), op.B0)
    np.testing.assert_array_equal(evaluate(op, -0.8), np.conj(evaluate(op, 0.8)))
    ks = np.array([0.1, 0.5, 2.0])
    stack = evaluate(op, ks)
    for j, k in enumerate(ks):
        np.testing.assert_array_equal(stack[j], evaluate(op, k))


def test_dimension_mismatch(cos1, interval8):
    with pytest.raises(ValueError):
        assemble(cos1, 0.1, interval8)


def test_split_symmetric(cos2, rng):
    op = assemble(cos2, 0.1)
    S, Ap = split_symmetric(op, 1.3)
    assert np.array_equal(S, S.conj().T) and np.array_equal(S, np.diag(np.diag(S)))
    assert np.array_equal(Ap, -Ap.conj().T)
    assert not np.any(split_symmetric(op, 0.0)[1])
    W = rng.standard_normal((100, 17)) + 1j * rng.standard_normal((100, 17))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    vals = np.real(np.einsum("ki,ij,kj->k", W.conj(), Ap, W))
    assert np.max(np.abs(vals)) < 1e-12


def test_propagator(cos2, plug16, rng):
    op = assemble(cos2, 0.1)
    assert np.array_equal(propagator(op, 0.4, 0.0), np.eye(17))
    for _ in range(5):
        k, t1, t2 = rng.uniform(-5, 5), rng.uniform(0, 2), rng.uniform(0, 2)
        lhs = propagator(op, k, t1 + t2)
        rhs = propagator(op, k, t1) @ propagator(op, k, t2)
        assert np.max(np.abs(lhs - rhs)) < 1e-10
        assert np.linalg.norm(propagator(op, k, t1), 2) <= 1 + 1e-12
    opt = assemble(plug16, 0.1)
    k, T = 2.0, 0.3
    d = np.exp((np.concatenate([[0], -plug16.mu]) - 0.01 * k * k) * T)
    np.testing.assert_allclose(propagator(opt, k, T), np.diag(d), atol=1e-14)
    with pytest.raises(ValueError):
        propagator(op, 1.0, -1.0)


def test_nu_factorization(cos1, plug16, rng):
    op = assemble(cos1, 0.1)
    assert nu_factorization_check(op, 0.0, 3.0) == 0.0
    assert nu_factorization_check(assemble(plug16, 0.1), 2.0, 4.0) <= 1e-12
    assert nu_factorization_check(op, 0.3, 5.0) <= 1e-10


def test_numerical_abscissa(cos2, rng):
    op = assemble(cos2, 0.07)
    for k in rng.uniform(-20, 20, 20):
        B = evaluate(op, k)
        W = rng.standard_normal((50, 17)) + 1j * rng.standard_normal((50, 17))
        W /= np.linalg.norm(W, axis=1, keepdims=True)
        q = np.real(np.einsum("ki,ij,kj->k", W.conj(), B, W))
        assert np.all(q <= -0.07 ** 2 * k * k + 1e-12)


def test_pure_advection_conserves_norm(cos2, rng):
    op = assemble(cos2, 0.1)
    W = rng.standard_normal(17) + 1j * rng.standard_normal(17)
    out = expm(2.5 * op.B1 * 3.0) @ W
    assert abs(np.linalg.norm(out) - np.linalg.norm(W)) < 1e-12


def test_top_mode_fraction():
    assert top_mode_fraction(np.array([1.0, 0.0, 0.0])) == 0.0
    assert top_mode_fraction(np.array([0.0, 0.0, 2.0])) == 1.0
    assert top_mode_fraction(np.zeros(3)) == 0.0
