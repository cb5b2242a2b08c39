"""Euclidean solution family, cutoff transplant, and measured asymptotics."""

import numpy as np
import pytest

from diractorus.clifford import build_rep
from diractorus.nonlinearity import make_nonlinearity
from diractorus.spectral import assemble, split
from diractorus.testspinor import (
    TestSpinorError,
    TestSpinorParams,
    asymptotic_fit,
    build_test_spinor,
    cutoff_eta,
    dirac_identity_fd_residual,
    energy_report,
    euclidean_dirac,
    euclidean_solution,
    l2star_mass_limit,
    omega_identity_residual,
    radial_mass_ratio,
)
from diractorus.torus import pointwise_modulus


def test_params_validation():
    with pytest.raises(TestSpinorError):
        TestSpinorParams(eps=-0.1)
    with pytest.raises(TestSpinorError):
        TestSpinorParams(eps=0.1, delta=2.0)  # 2 delta >= pi
    with pytest.raises(TestSpinorError):
        TestSpinorParams(eps=1.0, delta=0.5)  # eps > delta


def test_cutoff_profile():
    delta = np.pi / 4
    r = np.array([0.0, delta, 1.5 * delta, 2 * delta, 3.0])
    eta = cutoff_eta(r, delta)
    assert eta[0] == 1.0 and eta[1] == 1.0
    assert 0.0 < eta[2] < 1.0
    assert eta[3] == 0.0 and eta[4] == 0.0


def test_modulus_formula_m2():
    # |psi| = m^((m-1)/2) mu^((m-1)/2): sqrt(2) at 0, exactly 1 at |x| = 1
    rep = build_rep(2)
    params = TestSpinorParams(eps=0.1)
    v0 = euclidean_solution(rep, np.zeros(2), params)
    assert np.isclose(np.linalg.norm(v0), np.sqrt(2.0), rtol=1e-14)
    v1 = euclidean_solution(rep, np.array([0.6, 0.8]), params)
    assert np.isclose(np.linalg.norm(v1), 1.0, rtol=1e-14)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_closed_form_dirac_matches_pointwise_identity(m):
    rep = build_rep(m)
    params = TestSpinorParams(eps=0.1)
    rng = np.random.default_rng(m)
    for _ in range(10):
        x = rng.standard_normal(m) * 0.8
        mu = 1.0 / (1.0 + np.dot(x, x))
        lhs = euclidean_dirac(rep, x, params)
        rhs = m * mu * euclidean_solution(rep, x, params)
        assert np.abs(lhs - rhs).max() < 1e-13
        # and the solution property D psi = |psi|^(2*-2) psi
        psi = euclidean_solution(rep, x, params)
        power = np.linalg.norm(psi) ** (2.0 / (m - 1.0))
        assert np.abs(lhs - power * psi).max() < 1e-12


@pytest.mark.parametrize("m", [2, 3])
def test_fd_dirac_identity_second_order(m):
    rep = build_rep(m)
    params = TestSpinorParams(eps=0.1)
    x = np.array([0.3, -0.45, 0.2][:m])
    res = [dirac_identity_fd_residual(rep, params, x, h) for h in (0.02, 0.01, 0.005)]
    orders = [np.log2(res[i] / res[i + 1]) for i in range(2)]
    assert min(orders) >= 1.9


@pytest.fixture(scope="module")
def sweep_table():
    return assemble(2, 24, n_grid=256)


def test_build_sup_norm_and_support(sweep_table):
    rep = sweep_table.rep
    params = TestSpinorParams(eps=0.1)
    psi = build_test_spinor(sweep_table.grid, rep, params)
    s = pointwise_modulus(psi.samples)
    # peak value eps^(-1/2) m^((m-1)/2) at the center (a grid point)
    assert np.isclose(s.max(), np.sqrt(2.0) / np.sqrt(0.1), rtol=1e-12)
    # support inside |x| < 2 delta
    from diractorus.testspinor import _chart_coordinates

    y = _chart_coordinates(sweep_table.grid, None)
    r = np.sqrt((y**2).sum(axis=-1))
    assert np.abs(s[r >= 2 * params.delta]).max() == 0.0
    # pointwise modulus matches the closed form inside the support
    eta = cutoff_eta(r, params.delta)
    formula = eta * np.sqrt(2.0) / np.sqrt(0.1) * (1.0 + (r / 0.1) ** 2) ** (-0.5)
    mask = eta > 1e-12
    rel = np.abs(s[mask] - formula[mask]) / formula[mask].max()
    assert rel.max() < 1e-10


def test_resolution_warning_flag(sweep_table):
    rep = sweep_table.rep
    fine = build_test_spinor(sweep_table.grid, rep, TestSpinorParams(eps=0.25))
    coarse = build_test_spinor(sweep_table.grid, rep, TestSpinorParams(eps=0.05))
    assert not fine.resolution_warning
    assert coarse.resolution_warning


def test_l2_mass_ratio_near_4pi(sweep_table):
    # the small-eps limit of |phi_eps|_2^2/(eps |ln eps|) is m^(m-1) omega_(m-1) = 4 pi
    rep = sweep_table.rep
    sp = split(sweep_table, 0.5)
    params = TestSpinorParams(eps=0.05)
    psi = build_test_spinor(sweep_table.grid, rep, params)
    rec = energy_report(sweep_table, sp, psi, params=params)
    ratio = rec["l2_sq"] / (0.05 * abs(np.log(0.05)))
    assert abs(ratio - 4.0 * np.pi) / (4.0 * np.pi) < 0.1


def test_l2star_mass_invariance(sweep_table):
    # |phi_eps|_{2*}^{2*} approaches m^m omega_(m-1) int r/(1+r^2)^2 dr = 4 pi
    rep = sweep_table.rep
    sp = split(sweep_table, 0.5)
    limit = l2star_mass_limit(2)
    assert np.isclose(limit, 4.0 * np.pi, rtol=1e-10)
    vals = []
    for eps in (0.2, 0.1, 0.05):
        params = TestSpinorParams(eps=eps)
        psi = build_test_spinor(sweep_table.grid, rep, params)
        rec = energy_report(sweep_table, sp, psi, params=params)
        vals.append(rec["l2star_pow"])
    errs = [abs(v - limit) for v in vals]
    assert errs[0] > errs[-1]
    assert errs[-1] / limit < 0.01


def test_free_energy_monotone_chain(sweep_table):
    rep = sweep_table.rep
    sp = split(sweep_table, 0.5)
    gaps = []
    for eps in (0.2, 0.1, 0.05):
        params = TestSpinorParams(eps=eps)
        psi = build_test_spinor(sweep_table.grid, rep, params)
        rec = energy_report(sweep_table, sp, psi, params=params)
        gaps.append(abs(rec["free_energy"] - np.pi))
        if eps <= 0.1:
            assert rec["free_energy"] < np.pi + 0.01
    assert gaps[0] > gaps[1] > gaps[2]


def test_spectral_vs_exact_dirac_energy():
    # two-route check: spectral application of D against the closed-form
    # derivative, on a grid whose cutoff fully resolves the concentration
    table = assemble(2, 48, n_grid=512)
    sp = split(table, 0.5)
    params = TestSpinorParams(eps=0.25)
    psi = build_test_spinor(table.grid, table.rep, params)
    rec = energy_report(table, sp, psi, params=params)
    rel = abs(rec["dirac_energy"] - rec["dirac_energy_spectral"]) / abs(rec["dirac_energy"])
    assert rel < 1e-6


def test_omega_identity():
    for m in (2, 3, 4):
        assert omega_identity_residual(m) < 1e-8


def test_asymptotic_fit_synthetic():
    eps = np.geomspace(0.2, 0.01, 8)
    fit = asymptotic_fit(list(zip(eps, eps)))
    assert fit.log_power == 0
    assert abs(fit.exponent - 1.0) < 1e-6
    vals = eps * np.abs(np.log(eps))
    fit2 = asymptotic_fit(list(zip(eps, vals)))
    assert fit2.log_power == 1
    assert abs(fit2.exponent - 1.0) < 1e-6


def test_asymptotic_fit_validation():
    eps = np.geomspace(0.2, 0.01, 8)
    with pytest.raises(TestSpinorError):
        asymptotic_fit(list(zip(eps, eps))[:4])
    with pytest.raises(TestSpinorError):
        asymptotic_fit(list(zip(eps[::-1], eps)))
    bad = list(zip(eps, eps))
    bad[3] = (bad[3][0], -1.0)
    with pytest.raises(TestSpinorError):
        asymptotic_fit(bad)


def test_radial_mass_ratio_divergence_trend():
    # feasibility probe for lambda <= 0 runs: the F-to-mass ratio grows as eps shrinks
    nl = make_nonlinearity("power", 2, alpha=1.0, p=3.0)
    vals = [radial_mass_ratio(nl, np.pi / 4, eps) for eps in (0.1, 0.05, 0.02)]
    assert vals[0] < vals[1] < vals[2]
    nl0 = make_nonlinearity("zero", 2)
    assert radial_mass_ratio(nl0, np.pi / 4, 0.05) == 0.0
