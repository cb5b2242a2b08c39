"""Branch-engine units: thresholds, counts, residuals, small solves."""

import numpy as np
import pytest

from diractorus.branch import (
    GuardViolationError,
    branch_sweep,
    gamma_crit,
    minimize_M,
    multiplicity_count,
    nu_window,
    polish_residual,
    residual_check,
    second_solution,
)
from diractorus.nonlinearity import make_nonlinearity
from diractorus.spectral import assemble, omega_sphere, split
from diractorus.torus import SpinorField, random_field, zero_field
from diractorus.variational import SolverFailure

NL = make_nonlinearity("bnd", 2)


def plane_wave_solution(table, lam, k=(1, 0)):
    """Exact solution e^{ik.x}s with D psi = |k| psi and |s|^2 = |k| - lam."""
    grid = table.grid
    idx = grid.mode_index()[k]
    u = table.basis[idx][:, -1]
    amp = np.sqrt(np.linalg.norm(np.array(k)) - lam)
    coeffs = np.zeros((grid.n_modes, table.N), dtype=complex)
    coeffs[idx] = amp * u
    return SpinorField(grid, coeffs)


def test_gamma_crit_values():
    assert np.isclose(gamma_crit(2), np.pi, rtol=1e-14)
    assert np.isclose(gamma_crit(3), (1.0 / 6.0) * 1.5**3 * 2.0 * np.pi**2, rtol=1e-14)
    assert np.isclose(gamma_crit(3), 11.1033, atol=1e-4)
    # cross-check against the sphere invariant (m/2) omega_m^(1/m)
    for m in (2, 3, 4):
        lam_min = 0.5 * m * omega_sphere(m) ** (1.0 / m)
        assert np.isclose(gamma_crit(m), lam_min**m / (2.0 * m), rtol=1e-12)
    with pytest.raises(ValueError):
        gamma_crit(1)


def test_nu_window_values():
    assert np.isclose(nu_window(2, 4 * np.pi**2), 1.0 / np.sqrt(np.pi), rtol=1e-14)
    assert np.isclose(nu_window(2, omega_sphere(2)), 1.0, rtol=1e-14)
    assert np.isclose(nu_window(3, omega_sphere(3)), 1.5, rtol=1e-14)
    # (3/2) (2 pi^2 / 8 pi^3)^(1/3) = (3/2) (4 pi)^(-1/3)
    assert np.isclose(nu_window(3, (2 * np.pi) ** 3), 1.5 * (4 * np.pi) ** (-1.0 / 3.0), rtol=1e-14)
    with pytest.raises(ValueError):
        nu_window(2, -1.0)


def test_multiplicity_counts():
    table = assemble(2, 8)
    nu = 1.0 / np.sqrt(np.pi)
    assert multiplicity_count(table, 0.5, nu) == 4
    assert multiplicity_count(table, 0.0, nu) == 0
    assert multiplicity_count(table, 0.99, nu) == 8
    # brute-force consistency against the aggregated spectrum
    for lam in (0.3, 1.2, 2.0):
        brute = sum(
            int(mult)
            for ev, mult in zip(table.distinct, table.multiplicity)
            if lam < ev < lam + nu
        )
        assert multiplicity_count(table, lam, nu) == brute
    with pytest.raises(SolverFailure):
        multiplicity_count(table, 7.9, nu)


def test_residual_check_plane_wave():
    table = assemble(2, 6)
    for lam in (0.5, 0.3):
        psi = plane_wave_solution(table, lam)
        assert residual_check(table, NL, psi, lam) < 1e-12
    assert residual_check(table, NL, zero_field(table.grid, 2), 0.5) == 0.0
    rng = np.random.default_rng(3)
    r = residual_check(table, NL, random_field(table.grid, 2, rng), 0.5)
    assert r > 0.1


def test_polish_reduces_residual():
    table = assemble(2, 6)
    rng = np.random.default_rng(4)
    psi = plane_wave_solution(table, 0.5) + 1e-3 * random_field(table.grid, 2, rng)
    before = residual_check(table, NL, psi, 0.5)
    polished, after = polish_residual(table, NL, psi, 0.5)
    assert before > 1e-4
    assert after < 1e-8
    assert np.isclose(residual_check(table, NL, polished, 0.5), after, rtol=1e-6)


def test_minimize_M_closed_form_bound():
    table = assemble(2, 8)
    sp = split(table, 0.9)
    pt = minimize_M(sp, NL)
    assert pt.energy <= np.pi**2 * 0.01 + 1e-6
    assert pt.energy > 0
    assert pt.below_gamma_crit
    assert pt.residual_l2 < 1e-6
    assert pt.accepted


def test_minimize_M_guard_violation():
    # at lambda = 0.05 every desk-scale candidate sits above gamma_crit
    table = assemble(2, 4)
    sp = split(table, 0.05)
    with pytest.raises(GuardViolationError) as err:
        minimize_M(sp, NL, maxiter=10)
    assert err.value.point.energy >= gamma_crit(2)


def test_minimize_M_rejects_nonpositive_lambda_without_f5():
    table = assemble(2, 4)
    sp = split(table, -0.5)
    with pytest.raises(SolverFailure):
        minimize_M(sp, NL, maxiter=5)


def test_minimize_M_power_nonlinearity_positive_lambda():
    nl = make_nonlinearity("power", 2, alpha=1.0, p=3.0)
    table = assemble(2, 6)
    sp = split(table, 0.9)
    pt = minimize_M(sp, nl, maxiter=40)
    # F >= 0 lowers the level below the pure-critical branch
    assert 0 < pt.energy <= np.pi**2 * 0.01 + 1e-6
    assert pt.below_gamma_crit
    # non-polynomial nonlinearity: residual limited by quadrature at K = 6
    assert pt.residual_l2 < 1e-3


def test_minimize_M_power_nonlinearity_negative_lambda():
    # (f5) holds for the power nonlinearity, so lambda <= 0 runs are allowed;
    # the constant-spinor family solves the zero-mode shell there.
    nl = make_nonlinearity("power", 2, alpha=1.0, p=3.0)
    table = assemble(2, 4)
    sp = split(table, -0.2)
    pt = minimize_M(sp, nl, maxiter=30)
    assert pt.below_gamma_crit
    assert pt.energy > 0
    assert "mass_ratio" not in pt.flags


def test_second_solution_levels():
    table = assemble(2, 8)
    sp1 = split(table, 1.0)
    pt2 = second_solution(sp1, NL, 0.98, k=1)
    sp = split(table, 0.98)
    least = minimize_M(sp, NL, maxiter=40)
    assert pt2.energy > least.energy
    assert pt2.energy < gamma_crit(2)
    assert pt2.level == "second"
    with pytest.raises(SolverFailure):
        second_solution(sp1, NL, 1.2, k=1)


def test_branch_sweep_structure():
    table = assemble(2, 6)
    sweep = branch_sweep(table, NL, [0.7, 0.8, 0.9])
    assert len(sweep.points) == 3
    energies = [p.energy for p in sweep.points]
    assert all(e is not None and e > 0 for e in energies)
    assert energies[0] >= energies[1] >= energies[2] - 1e-9
    assert not sweep.monotone_violations(1e-6)
    assert sweep.interval_index(0.7) == 0
    assert sweep.interval_index(1.2) == 1


def test_branch_sweep_records_guard_violations_and_continues():
    table = assemble(2, 4)
    sweep = branch_sweep(table, NL, [0.05, 0.9], maxiter=10)
    flagged = [p for p in sweep.points if "guard-violation" in p.flags]
    clean = [p for p in sweep.points if p.lam == 0.9]
    assert len(flagged) == 1 and flagged[0].lam == 0.05
    assert clean[0].below_gamma_crit
    assert clean[0].energy <= np.pi**2 * 0.01 + 1e-6
