"""Gamma-matrix relations, Clifford multiplication, and the (1 - x) norm identity."""

import numpy as np
import pytest

from diractorus.clifford import (
    CliffordError,
    CliffordRep,
    build_rep,
    clifford_mul,
    one_minus_x_mul,
)

# Witness pair from the m = 2 examples; not necessarily the built rep.
W1 = np.array([[0, 1], [-1, 0]], dtype=complex)
W2 = np.array([[0, 1j], [1j, 0]], dtype=complex)
WITNESS2 = CliffordRep(m=2, N=2, gamma=(W1, W2))


@pytest.mark.parametrize("m", range(2, 9))
def test_build_rep_relations(m):
    rep = build_rep(m)
    assert rep.N == 2 ** (m // 2)
    res = rep.relation_residuals()
    assert res["anticommutation"] < 1e-12
    assert res["skew_adjoint"] < 1e-12
    assert res["unitary"] < 1e-12


def test_witness_m2_relations():
    assert np.abs(W1 @ W2 + W2 @ W1).max() == 0
    assert np.abs(W1 @ W1 + np.eye(2)).max() == 0
    assert np.abs(W2 @ W2 + np.eye(2)).max() == 0


def test_witness_m3_pauli():
    sig = [
        np.array([[0, 1], [1, 0]], dtype=complex),
        np.array([[0, -1j], [1j, 0]], dtype=complex),
        np.array([[1, 0], [0, -1]], dtype=complex),
    ]
    witness = CliffordRep(m=3, N=2, gamma=tuple(1j * s for s in sig))
    res = witness.relation_residuals()
    assert max(res.values()) < 1e-15
    # The built rep reproduces exactly this witness.
    rep = build_rep(3)
    for g, w in zip(rep.gamma, witness.gamma):
        assert np.abs(g - w).max() < 1e-15


def test_invalid_dimension():
    with pytest.raises(CliffordError):
        build_rep(1)
    with pytest.raises(CliffordError):
        build_rep(0)


def test_clifford_mul_examples():
    s = np.array([1.0, 0.0], dtype=complex)
    assert np.abs(clifford_mul(WITNESS2, [0.0, 0.0], s)).max() == 0
    out = clifford_mul(WITNESS2, [1.0, 0.0], s)
    assert np.allclose(out, [0.0, -1.0])


def test_clifford_mul_shape_errors():
    rep = build_rep(2)
    with pytest.raises(CliffordError):
        clifford_mul(rep, [1.0, 0.0, 0.0], np.zeros(2, dtype=complex))
    with pytest.raises(CliffordError):
        clifford_mul(rep, [1.0, 0.0], np.zeros(3, dtype=complex))


def test_one_minus_x_example():
    s = np.array([1.0, 0.0], dtype=complex)
    out = one_minus_x_mul(WITNESS2, [1.0, 0.0], s)
    assert np.allclose(out, [1.0, 1.0])
    assert np.isclose(np.linalg.norm(out) ** 2, 2.0)
    assert np.allclose(one_minus_x_mul(WITNESS2, [0.0, 0.0], s), s)


@pytest.mark.parametrize("m", [2, 3, 4, 5, 6])
def test_isometry_properties(m):
    rng = np.random.default_rng(7 + m)
    rep = build_rep(m)
    worst_norm = 0.0
    worst_iso = 0.0
    for _ in range(1000 // m):
        x = rng.standard_normal(m)
        s = rng.standard_normal(rep.N) + 1j * rng.standard_normal(rep.N)
        xs = clifford_mul(rep, x, s)
        # |x.s|^2 = |x|^2 |s|^2
        lhs = np.linalg.norm(xs) ** 2
        rhs = np.dot(x, x) * np.linalg.norm(s) ** 2
        worst_iso = max(worst_iso, abs(lhs - rhs) / rhs)
        # |(1-x).s|^2 = (1+|x|^2)|s|^2
        ys = one_minus_x_mul(rep, x, s)
        lhs = np.linalg.norm(ys) ** 2
        rhs = (1.0 + np.dot(x, x)) * np.linalg.norm(s) ** 2
        worst_norm = max(worst_norm, abs(lhs - rhs) / rhs)
    assert worst_iso < 1e-12
    assert worst_norm < 1e-12


@pytest.mark.parametrize("m", [2, 3, 4, 5])
def test_anticommutation_and_skew_pairing_on_vectors(m):
    rng = np.random.default_rng(40 + m)
    rep = build_rep(m)
    for _ in range(50):
        v = rng.standard_normal(rep.N) + 1j * rng.standard_normal(rep.N)
        w = rng.standard_normal(rep.N) + 1j * rng.standard_normal(rep.N)
        for i in range(m):
            gi = rep.gamma[i]
            # hermitian pairing <e_i v, w> = -<v, e_i w>
            lhs = np.vdot(w, gi @ v)
            rhs = -np.vdot(gi @ w, v)
            assert abs(lhs - rhs) < 1e-12 * (1 + abs(lhs))
            for j in range(m):
                if i == j:
                    continue
                gj = rep.gamma[j]
                r = gi @ (gj @ v) + gj @ (gi @ v)
                assert np.abs(r).max() < 1e-12
