"""Branch engine: least-energy and second-solution sweeps with guards.

A branch point is accepted when its energy sits strictly below the
compactness threshold gamma_crit = (1/2m)(m/2)^m omega_m and its strong-form
residual ||D psi - lam psi - f(|psi|)psi - |psi|^(2*-2)psi||_2 is below the
configured tolerance.  Energies above the threshold are reported as guard
violations: the minimization certificate is meaningless there.

The least-energy solve minimizes the reduced functional M over the unit
sphere of E^+ starting from the best of three candidate families: exact
plane-wave directions on the lowest positive shells (closed-form critical
points of the pure-power problem on the torus), a cheap ray-quotient
optimized direction, and the normalized positive part of a concentrated test
spinor.  Candidates are shortlisted by their ray value before the expensive
fiber solves.  At spectral parameters the kernel projector T is switched in
and the minimization runs on the kernel-reduced functional.

Second solutions near an eigenvalue lambda_k minimize the frozen-fiber
functional N over the sphere of E^+ at lambda_k with the L^2 mass constraint
|phi|_2^2 >= sigma.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nonlinearity import check_hypotheses, critical_exponent
from .spectral import norm_lambda, omega_sphere, project, split as make_split
from .torus import SpinorField, l2_norm, pointwise_modulus
from .variational import (
    L_lambda,
    ReducedProblem,
    SolverFailure,
    default_sigma,
    fiber_maximize,
    nu_lambda_k,
    sphere_minimize,
    t_lambda,
)


class GuardViolationError(SolverFailure):
    """Converged energy at or above the compactness threshold."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


def gamma_crit(m):
    """Compactness threshold (1/2m) (m/2)^m omega_m; pi for m = 2."""
    if m < 2:
        raise ValueError(f"dimension must be >= 2, got {m}")
    return (0.5 / m) * (0.5 * m) ** m * omega_sphere(m)


def nu_window(m, volume=None):
    """Continuation window nu = (m/2) (omega_m / Vol)^(1/m)."""
    if volume is None:
        volume = (2.0 * np.pi) ** m
    if volume <= 0:
        raise ValueError(f"volume must be positive, got {volume}")
    return 0.5 * m * (omega_sphere(m) / volume) ** (1.0 / m)


def multiplicity_count(table, lam, nu=None):
    """l(lam): total complex kernel dimension of eigenvalues in (lam, lam + nu)."""
    if nu is None:
        nu = nu_window(table.m, table.grid.volume)
    if lam + nu > table.grid.K:
        raise SolverFailure(
            f"window (lam, lam+nu) = ({lam}, {lam + nu}) exceeds cutoff K={table.grid.K}"
        )
    eigs = table.distinct
    mask = (eigs > lam) & (eigs < lam + nu)
    return int(table.multiplicity[mask].sum())


def residual_check(table, nl, psi, lam):
    """L^2 norm of the strong-form residual with dealiased nonlinearity.

    The linear part lives on the cutoff band; the pointwise nonlinearity is
    transformed on the full collocation cube, so out-of-band spill counts
    toward the residual (polynomial nonlinearities are exact for
    n_grid > (2* - 1) K + K).
    """
    grid = psi.grid
    n = grid.n_grid
    ts = critical_exponent(grid.m)
    v = psi.values()
    s = pointwise_modulus(v)
    coef = s ** (ts - 2.0)
    if not nl.is_zero():
        coef = coef + nl.f(s)
    axes = tuple(range(grid.m))
    w_cube = np.fft.fftn(coef[..., None] * v, axes=axes) / (n**grid.m)
    a = table.to_eigen(psi.coeffs)
    lin = table.from_eigen((table.eigenvalues - lam) * a)
    idx = tuple((grid.modes[:, j] % n) for j in range(grid.m))
    r_cube = -w_cube
    r_cube[idx] += lin
    return float(np.sqrt(grid.volume * (np.abs(r_cube) ** 2).sum()))


def polish_residual(table, nl, psi, lam, gtol=1e-12, maxiter=300):
    """Least-squares polish of a near-solution: minimize ||strong residual||_2^2.

    Quasi-Newton on the band coefficients with the exact adjoint gradient;
    the dealiased residual lives on the full collocation cube, so truncation
    spill is part of the objective and cannot be gamed away.
    """
    from scipy.optimize import minimize as _scipy_minimize

    from .torus import analyze

    grid = psi.grid
    n = grid.n_grid
    ts = critical_exponent(grid.m)
    axes = tuple(range(grid.m))
    idx = tuple((grid.modes[:, j] % n) for j in range(grid.m))
    shape = psi.coeffs.shape
    vol = grid.volume
    floor = 1e-30

    def g_and_gprime(s):
        ss = np.maximum(s, floor)
        g = ss ** (ts - 2.0)
        gp = (ts - 2.0) * ss ** (ts - 3.0)
        if not nl.is_zero():
            h = 1e-7 * np.maximum(ss, 1e-3)
            g = g + nl.f(ss)
            gp = gp + (nl.f(ss + h) - nl.f(np.maximum(ss - h, 0.0))) / (2.0 * h)
        return g, gp

    def fun(x):
        c = x[: x.size // 2].reshape(shape) + 1j * x[x.size // 2 :].reshape(shape)
        field = SpinorField(grid, c)
        v = field.values()
        s = pointwise_modulus(v)
        g, gp = g_and_gprime(s)
        w_cube = np.fft.fftn(g[..., None] * v, axes=axes) / (n**grid.m)
        a = table.to_eigen(c)
        lin = table.from_eigen((table.eigenvalues - lam) * a)
        r_cube = -w_cube
        r_cube[idx] += lin
        val = 0.5 * vol * float((np.abs(r_cube) ** 2).sum())
        r_vals = np.fft.ifftn(r_cube, axes=axes) * (n**grid.m)
        r_band = r_cube[idx]
        g1 = table.from_eigen((table.eigenvalues - lam) * table.to_eigen(r_band))
        beta = (v * r_vals.conj()).sum(axis=-1).real
        adj = g[..., None] * r_vals + ((gp * beta) / np.maximum(s, floor))[..., None] * v
        grad_c = vol * (g1 - analyze(grid, adj))
        return val, np.concatenate([grad_c.real.ravel(), grad_c.imag.ravel()])

    x0 = np.concatenate([psi.coeffs.real.ravel(), psi.coeffs.imag.ravel()])
    res = _scipy_minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        options={"gtol": gtol, "ftol": 1e-18, "maxiter": maxiter},
    )
    c = res.x[: res.x.size // 2].reshape(shape) + 1j * res.x[res.x.size // 2 :].reshape(shape)
    out = SpinorField(grid, c)
    return out, float(np.sqrt(2.0 * res.fun))


@dataclass
class BranchPoint:
    """One solved point on an energy branch."""

    lam: float
    level: str  # "least" | "second"
    k: int | None
    energy: float
    residual_l2: float
    below_gamma_crit: bool
    accepted: bool
    psi: SpinorField | None
    diagnostics: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)


@dataclass
class SweepTable:
    """Ordered branch points with spectral-interval annotations."""

    points: list
    eigenvalues: np.ndarray
    config: dict = field(default_factory=dict)

    def interval_index(self, lam):
        """Index k of the interval [lambda_k, lambda_{k+1}) containing lam."""
        pos = self.eigenvalues[self.eigenvalues > 0]
        return int(np.searchsorted(pos, lam, side="right"))

    def monotone_violations(self, tol=1e-6):
        """Pairs of successive accepted least-energy points violating monotonicity."""
        bad = []
        least = [p for p in self.points if p.level == "least" and p.energy is not None]
        least.sort(key=lambda p: p.lam)
        for a, b in zip(least, least[1:]):
            if self.interval_index(a.lam) == self.interval_index(b.lam):
                if b.energy > a.energy + tol:
                    bad.append((a.lam, b.lam, a.energy, b.energy))
        return bad


def plane_wave_direction(table, sp, shell=0):
    """Unit E^+ direction of the first mode on the given positive shell."""
    eigs = table.eigenvalues
    shells = np.unique(np.round(eigs[sp.plus] ** 2, 9))
    if shell >= shells.size:
        raise SolverFailure(f"no positive shell index {shell} inside the cutoff")
    target = shells[shell]
    for mode_i in range(table.grid.n_modes):
        for branch in range(table.N):
            if sp.plus[mode_i, branch] and abs(eigs[mode_i, branch] ** 2 - target) < 1e-9:
                a = np.zeros((table.grid.n_modes, table.N), dtype=complex)
                a[mode_i, branch] = 1.0
                phi = SpinorField(table.grid, table.from_eigen(a))
                return (1.0 / norm_lambda(sp, phi)) * phi
    raise SolverFailure("no plane-wave direction found")


def test_spinor_direction(table, sp, eps=0.2):
    """Normalized positive part of a concentrated cutoff spinor."""
    from .testspinor import TestSpinorParams, build_test_spinor

    params = TestSpinorParams(eps=eps)
    psi = build_test_spinor(table.grid, table.rep, params)
    plus = project(sp, psi, "plus")
    nrm = norm_lambda(sp, plus)
    if nrm <= 0:
        raise SolverFailure("test spinor has no positive component")
    return (1.0 / nrm) * plus


def ray_opt_direction(table, sp, seed=1, maxiter=600):
    """Direction minimizing the quotient [<(D-lam)phi,phi>]^2 / (4 |phi|_{2*}^{2*}).

    For the quartic critical term (m = 2, pure power) this is the exact
    maximum of the energy along the ray t phi, hence a pointwise lower bound
    for the fiber value M(phi); its minimizer is a cheap, strong initial
    direction for the sphere descent (no inner solves needed).
    """
    from scipy.optimize import minimize as _scipy_minimize

    from .spectral import riesz_lambda
    from .torus import analyze
    from .variational import SubspaceCoords, _pack, _unpack

    grid = table.grid
    sig = table.eigenvalues
    ts = critical_exponent(grid.m)
    coords = SubspaceCoords(sp, sp.plus)
    rng = np.random.default_rng(seed)
    z0 = rng.standard_normal(coords.dim) + 1j * rng.standard_normal(coords.dim)
    z0 = z0 / (1.0 + sp.w2[coords.idx] ** 2)
    lam = sp.lam

    def fun(x):
        z = _unpack(x)
        psi = coords.to_field(z)
        a = table.to_eigen(psi.coeffs)
        alpha = grid.volume * float(((sig - lam) * (a.real**2 + a.imag**2)).sum())
        v = psi.values()
        s = pointwise_modulus(v)
        beta = grid.cell * float((s**ts).sum())
        lin = table.from_eigen((sig - lam) * a)
        nlrep = analyze(grid, (s ** (ts - 2.0))[..., None] * v)
        rep = (alpha / beta) * lin - (alpha**2 / beta**2) * nlrep
        gz = coords.from_coeffs(riesz_lambda(sp, rep))
        return alpha**2 / (4.0 * beta), _pack(gz)

    res = _scipy_minimize(
        fun,
        _pack(z0),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": maxiter, "gtol": 1e-10, "ftol": 1e-16},
    )
    z = _unpack(res.x)
    nrm = float(np.linalg.norm(z))
    if nrm <= 0:
        raise SolverFailure("ray optimization collapsed to zero")
    return coords.to_field(z / nrm)


def _lambda_nonpositive_gate(nl):
    report = check_hypotheses(nl)
    if not report["f5"]:
        raise SolverFailure(
            "lambda <= 0 requires the concentration-divergence hypothesis (f5); "
            f"verdicts: { {k: report[k] for k in ('f1','f2','f3','f4','f5')} }"
        )
    # Feasibility probe: the subcritical-mass to L^2-mass ratio of the
    # concentration family must grow along the sweep.
    from .testspinor import radial_mass_ratio

    ratios = [radial_mass_ratio(nl, np.pi / 4.0, eps) for eps in (0.1, 0.05, 0.02)]
    if not all(b > a for a, b in zip(ratios, ratios[1:])):
        raise SolverFailure(
            f"concentration mass-ratio probe is not increasing: {ratios}"
        )
    report["mass_ratio_probe"] = ratios
    return report


def minimize_M(
    split,
    nl,
    init="auto",
    outer_gtol=1e-7,
    fiber_gtol=1e-9,
    residual_tol=1e-6,
    maxiter=120,
    test_eps=0.2,
):
    """Least-energy solve at the split's lambda; returns an accepted BranchPoint.

    Raises GuardViolationError when the converged energy reaches gamma_crit.
    """
    table = split.table
    lam = split.lam
    if lam <= 0:
        _lambda_nonpositive_gate(nl)
    reduced = ReducedProblem(split, nl) if (split.kernel_dim > 0 and nl.is_zero()) else None

    candidates = []
    if isinstance(init, SpinorField):
        candidates.append(("warm", init))
    if init == "auto" or not candidates:
        for shell in (0, 1):
            try:
                candidates.append((f"plane-wave-{shell}", plane_wave_direction(table, split, shell)))
            except SolverFailure:
                pass
        try:
            candidates.append(("ray-opt", ray_opt_direction(table, split)))
        except SolverFailure:
            pass
        try:
            candidates.append(("test-spinor", test_spinor_direction(table, split, eps=test_eps)))
        except (SolverFailure, ValueError):
            pass
    if not candidates:
        raise SolverFailure("no usable initial direction")

    # Cheap shortlist by the ray value (a lower proxy for the fiber value),
    # then full fiber solves on the remaining few.
    def ray_score(phi):
        from .variational import _expand_bracket, _golden_max

        def on_ray(t):
            return L_lambda(split, nl, t * phi, lam)

        t_hi = _expand_bracket(on_ray)
        t_best = _golden_max(on_ray, 0.0, t_hi, tol=1e-5)
        return on_ray(t_best)

    ranked = sorted(candidates, key=lambda item: ray_score(item[1]))
    shortlist = ranked[:2]
    if candidates and candidates[0][0] == "warm" and all(n != "warm" for n, _ in shortlist):
        shortlist.append(candidates[0])

    scored = []
    for name, phi in shortlist:
        try:
            fib = fiber_maximize(
                split,
                nl,
                phi,
                gtol=max(fiber_gtol, 1e-6),
                reduced=reduced,
                t_scan_points=0,
                t_tol=1e-4,
            )
            scored.append((fib.value, name, phi))
        except SolverFailure:
            continue
    if not scored:
        raise SolverFailure("all fiber solves failed on the candidate directions")
    scored.sort(key=lambda t: t[0])
    start_value, start_name, phi0 = scored[0]

    value, fiber, info = sphere_minimize(
        split,
        nl,
        phi0,
        reduced=reduced,
        gtol=outer_gtol,
        maxiter=maxiter,
        fiber_gtol=fiber_gtol,
    )
    if value > start_value:
        # Descent never goes above its start; fall back to the candidate point.
        info = dict(info, fell_back=True)
        value, fiber, _ = sphere_minimize(
            split, nl, phi0, reduced=reduced, gtol=outer_gtol, maxiter=0, fiber_gtol=fiber_gtol
        )

    psi_sol = fiber.psi
    if reduced is not None:
        psi_sol = psi_sol - t_lambda(split, psi_sol, basis=reduced.basis)
    resid = residual_check(table, nl, psi_sol, lam)
    value_pre_polish = value
    if resid < 1e-2:
        psi_sol, resid = polish_residual(table, nl, psi_sol, lam)
        value = L_lambda(split, nl, psi_sol, lam)
    below = bool(value < gamma_crit(table.m))
    diagnostics = {
        "init": start_name,
        "init_value": float(start_value),
        "candidate_values": {name: float(v) for v, name, _ in scored},
        "outer": info,
        "fiber_grad_norm": fiber.grad_norm,
        "t": fiber.t,
        "kernel_dim": split.kernel_dim,
        "value_pre_polish": float(value_pre_polish),
    }
    point = BranchPoint(
        lam=float(lam),
        level="least",
        k=None,
        energy=float(value),
        residual_l2=float(resid),
        below_gamma_crit=below,
        accepted=bool(below and resid <= residual_tol),
        psi=psi_sol,
        diagnostics=diagnostics,
        flags=[] if resid <= residual_tol else ["resolution-limited-residual"],
    )
    if not below:
        raise GuardViolationError(
            f"energy {value:.6f} >= gamma_crit {gamma_crit(table.m):.6f}", point=point
        )
    return point


def second_solution(
    split_k,
    nl,
    lam,
    k,
    sigma=None,
    init=None,
    outer_gtol=1e-6,
    fiber_gtol=1e-9,
    residual_tol=1e-6,
    maxiter=80,
    confirm_starts=8,
    seed=0,
):
    """Second-solution solve: minimize the frozen-fiber value N over E^+ at lambda_k.

    lam must sit in the guard window just below lambda_k.  The returned point
    carries a uniqueness-confidence flag from the multi-start certification of
    the final fiber.
    """
    table = split_k.table
    lam = float(lam)
    lam_k = split_k.lam
    if not (lam <= lam_k + split_k.tol):
        raise SolverFailure(f"second solution needs lam <= lambda_k = {lam_k}, got {lam}")
    if sigma is None:
        sigma = default_sigma(split_k)

    phi0 = init if isinstance(init, SpinorField) else plane_wave_direction(table, split_k, 0)

    value, fiber, info = sphere_minimize(
        split_k,
        nl,
        phi0,
        lam=lam,
        gtol=outer_gtol,
        maxiter=maxiter,
        fiber_gtol=fiber_gtol,
    )
    flags = []
    mass = l2_norm(fiber.phi) ** 2
    if mass < sigma:
        flags.append("sigma-constraint-violated")
    confirmed = nu_lambda_k(
        split_k, nl, fiber.phi, lam, sigma=None, n_starts=confirm_starts, seed=seed, gtol=fiber_gtol
    )
    if not confirmed.unique_confident:
        flags.append("non-unique-fiber-maximizer")
    value = confirmed.value
    psi_sol = confirmed.psi
    resid = residual_check(table, nl, psi_sol, lam)
    if resid < 1e-2:
        psi_sol, resid = polish_residual(table, nl, psi_sol, lam)
        value = L_lambda(split_k, nl, psi_sol, lam)
    below = bool(value < gamma_crit(table.m))
    point = BranchPoint(
        lam=lam,
        level="second",
        k=int(k),
        energy=float(value),
        residual_l2=float(resid),
        below_gamma_crit=below,
        accepted=bool(below and resid <= residual_tol and not flags),
        psi=psi_sol,
        diagnostics={
            "outer": info,
            "phi_mass": float(mass),
            "sigma": float(sigma),
            "lambda_k": float(lam_k),
        },
        flags=flags if resid <= residual_tol else flags + ["resolution-limited-residual"],
    )
    if not below:
        raise GuardViolationError(
            f"second-solution energy {value:.6f} >= gamma_crit", point=point
        )
    return point


def _nearest_eigenvalue(table, lam, tol=1e-9):
    eigs = table.distinct
    idx = int(np.argmin(np.abs(eigs - lam)))
    if abs(eigs[idx] - lam) <= tol:
        return float(eigs[idx])
    return None


def _solve_sweep_point(table, nl, lam, opts, warm_field=None):
    """One least-branch solve; failures come back as flagged points."""
    eig = _nearest_eigenvalue(table, lam, tol=opts.get("eig_tol", 1e-9))
    sp = make_split(table, eig if eig is not None else lam)
    init = "auto"
    if warm_field is not None:
        plus = project(sp, warm_field, "plus")
        nrm = norm_lambda(sp, plus)
        if nrm > 0:
            init = (1.0 / nrm) * plus
    try:
        pt = minimize_M(
            sp,
            nl,
            init=init,
            outer_gtol=opts.get("outer_gtol", 1e-7),
            fiber_gtol=opts.get("fiber_gtol", 1e-9),
            residual_tol=opts.get("residual_tol", 1e-6),
            maxiter=opts.get("maxiter", 60),
        )
        pt.diagnostics["kernel_point"] = eig is not None
        return pt
    except GuardViolationError as exc:
        pt = exc.point
        pt.flags.append("guard-violation")
        pt.diagnostics["kernel_point"] = eig is not None
        return pt
    except SolverFailure as exc:
        return BranchPoint(
            lam=lam,
            level="least",
            k=None,
            energy=None,
            residual_l2=None,
            below_gamma_crit=False,
            accepted=False,
            psi=None,
            flags=[f"solver-failure: {exc}"],
        )


def _sweep_task(args):
    table, nl, lam, opts = args
    return _solve_sweep_point(table, nl, lam, opts)


def branch_sweep(
    table,
    nl,
    lam_grid,
    second_near=None,
    second_offsets=(0.05, 0.02, 0.01),
    outer_gtol=1e-7,
    fiber_gtol=1e-9,
    residual_tol=1e-6,
    eig_tol=1e-9,
    maxiter=60,
    workers=1,
):
    """Solve the least branch over a lambda grid plus optional second branches.

    Two deterministic phases: (1) every grid point solved independently from
    the standard candidate pool (parallelizable, same results for any worker
    count); (2) serial ascending monotone repair inside each spectral
    interval, re-solving a violating point from its left neighbor's minimizer
    direction, which enforces the non-increasing property of the recorded
    energies up to solver tolerance.  Per-point failures are recorded as
    flagged points and the sweep continues.
    """
    lam_grid = sorted({float(x) for x in lam_grid})
    opts = {
        "outer_gtol": outer_gtol,
        "fiber_gtol": fiber_gtol,
        "residual_tol": residual_tol,
        "eig_tol": eig_tol,
        "maxiter": maxiter,
    }

    tasks = [(table, nl, lam, opts) for lam in lam_grid]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_sweep_task, tasks))
    else:
        points = [_sweep_task(t) for t in tasks]

    # Phase 2: ascending monotone repair within spectral intervals.
    sweep = SweepTable(points=list(points), eigenvalues=table.distinct.copy())
    for i in range(1, len(points)):
        prev, cur = points[i - 1], points[i]
        if prev.psi is None or cur.energy is None:
            continue
        if sweep.interval_index(prev.lam) != sweep.interval_index(cur.lam):
            continue
        if cur.energy <= prev.energy + 1e-12:
            continue
        repaired = _solve_sweep_point(table, nl, cur.lam, opts, warm_field=prev.psi)
        if repaired.energy is not None and repaired.energy < cur.energy:
            repaired.flags.append("monotone-repair")
            points[i] = repaired

    if second_near is not None:
        k = int(second_near)
        pos = table.distinct[table.distinct > 0]
        if k < 1 or k > pos.size:
            raise SolverFailure(f"no eigenvalue index k={k} inside the cutoff")
        lam_k = float(pos[k - 1])
        sp_k = make_split(table, lam_k)
        warm = None
        for off in sorted(second_offsets, reverse=True):
            lam2 = lam_k - off
            try:
                pt = second_solution(
                    sp_k,
                    nl,
                    lam2,
                    k,
                    init=warm,
                    outer_gtol=max(outer_gtol, 1e-6),
                    fiber_gtol=fiber_gtol,
                    residual_tol=residual_tol,
                )
                plus = project(sp_k, pt.psi, "plus")
                nrm = norm_lambda(sp_k, plus)
                warm = (1.0 / nrm) * plus if nrm > 0 else None
                points.append(pt)
            except SolverFailure as exc:
                points.append(
                    BranchPoint(
                        lam=lam2,
                        level="second",
                        k=k,
                        energy=None,
                        residual_l2=None,
                        below_gamma_crit=False,
                        accepted=False,
                        psi=None,
                        flags=[f"solver-failure: {exc}"],
                    )
                )

    points.sort(key=lambda p: (p.lam, p.level))
    return SweepTable(points=points, eigenvalues=table.distinct.copy())
