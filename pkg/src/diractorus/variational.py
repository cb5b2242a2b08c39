"""Strongly indefinite functional layer and the fiber/Nehari solvers.

The working functional on the cutoff space is

    L_lam(psi) = 1/2 <(D - lam) psi, psi>_2 - int F(|psi|) - (1/2*) |psi|_{2*}^{2*}

whose Euler-Lagrange equation is D psi = lam psi + f(|psi|) psi + |psi|^(2*-2) psi.
Gradients are lambda-metric Riesz representatives: in eigen coordinates the
L^2 representative (D - lam) psi - g(|psi|) psi is divided by the split
weights |sigma - lambda| (weight one on the kernel block).

Solvers use lambda-orthonormal coordinates on masked eigen entries, so the
Euclidean geometry handed to the quasi-Newton inner loops coincides with the
||.||_lambda geometry.  Fiber maximization is nested as a 1-D outer search in
t over a concave (for lam >= split.lam) inner maximization in chi, matching
the uniqueness structure of the constrained problem.

At spectral parameters the kernel is handled by the nonlinear best
approximation T onto ker(D - lam) in the L^{2*} norm; the reduced functional
uses |psi - T(psi)| in the critical term and is invariant under kernel shifts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .nonlinearity import critical_exponent
from .spectral import riesz_lambda
from .torus import SpinorField, pointwise_modulus


class SolverFailure(RuntimeError):
    """Inner or outer solver failed to converge; diagnostics attached."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class DegenerateFiberError(SolverFailure):
    """Fiber maximizer collapsed to t = 0."""


class BracketFailureError(SolverFailure):
    """No sign change found for the Nehari ray projection."""


def _pack(z):
    return np.concatenate([z.real, z.imag])


def _unpack(x):
    n = x.size // 2
    return x[:n] + 1j * x[n:]


# ---------------------------------------------------------------------------
# Energy, gradient, residual


def k_value(nl, psi):
    """K(psi) = int F(|psi|) + (1/2*)|psi|_{2*}^{2*} by collocation quadrature."""
    s = pointwise_modulus(psi.values())
    ts = critical_exponent(psi.grid.m)
    dens = s**ts / ts
    if not nl.is_zero():
        dens = dens + nl.F(s)
    return float(psi.grid.cell * dens.sum())


def k_l2_coeffs(nl, grid, values):
    """Band-projected Fourier coefficients of g(|psi|) psi (the L^2 rep of K')."""
    from .torus import analyze

    s = pointwise_modulus(values)
    ts = critical_exponent(grid.m)
    coef = s ** (ts - 2.0)
    if not nl.is_zero():
        coef = coef + nl.f(s)
    return analyze(grid, coef[..., None] * values)


def quadratic_part(split, psi, lam=None):
    """1/2 (||psi^+||_lam^2 - ||psi^-||_lam^2) evaluated spectrally.

    For lam different from split.lam this is 1/2 <(D - lam) psi, psi>_2, the
    same expression with shifted weights (the fiber solvers freeze the split
    at an eigenvalue while moving the functional parameter).
    """
    lam = split.lam if lam is None else lam
    a = split.table.to_eigen(psi.coeffs)
    w = split.table.eigenvalues - lam
    return 0.5 * split.grid.volume * float((w * (a.real**2 + a.imag**2)).sum())


def L_lambda(split, nl, psi, lam=None):
    """Energy L_lam(psi); defaults to the split's own lambda."""
    return quadratic_part(split, psi, lam) - k_value(nl, psi)


def l2_rep_coeffs(split, nl, psi, lam=None):
    """Band coefficients of the L^2 representative (D - lam) psi - g(|psi|) psi."""
    lam = split.lam if lam is None else lam
    a = split.table.to_eigen(psi.coeffs)
    lin = split.table.from_eigen((split.table.eigenvalues - lam) * a)
    return lin - k_l2_coeffs(nl, psi.grid, psi.values())


def grad_L(split, nl, psi, lam=None):
    """lambda-metric Riesz representative of L_lam'(psi)."""
    return SpinorField(psi.grid, riesz_lambda(split, l2_rep_coeffs(split, nl, psi, lam)))


def directional_derivative(split, nl, psi, direction, lam=None):
    """L_lam'(psi)[direction] via the L^2 representative."""
    r = l2_rep_coeffs(split, nl, psi, lam)
    return float(split.grid.volume * (r * direction.coeffs.conj()).real.sum())


# ---------------------------------------------------------------------------
# Kernel best-approximation projector T


@dataclass
class KernelBasis:
    """L^2-orthonormal basis fields of ker(D - lambda) with cached values."""

    split: object
    fields: list
    values: np.ndarray = field(repr=False)  # (d, grid..., N)
    flat: np.ndarray = field(repr=False, default=None)  # (d, npts, N)
    pair: np.ndarray = field(repr=False, default=None)  # (d, d, npts), sum_c conj(e_a) e_b

    @property
    def dim(self):
        return len(self.fields)


def kernel_basis(split):
    table = split.table
    grid = split.grid
    idx = np.nonzero(split.zero)
    fields = []
    vals = []
    scale = 1.0 / np.sqrt(grid.volume)
    for mode_i, branch in zip(*idx):
        a = np.zeros((grid.n_modes, table.N), dtype=complex)
        a[mode_i, branch] = scale
        psi = SpinorField(grid, table.from_eigen(a))
        fields.append(psi)
        vals.append(psi.values())
    values = np.stack(vals) if fields else np.zeros((0,) + (grid.n_grid,) * grid.m + (table.N,))
    flat = values.reshape(len(fields), -1, table.N) if fields else values.reshape(0, 0, table.N)
    pair = np.einsum("apc,bpc->abp", flat.conj(), flat) if fields else None
    return KernelBasis(split=split, fields=fields, values=values, flat=flat, pair=pair)


def _kernel_hessian(basis, u_flat, ts, cell, floor=1e-14):
    """Gradient core and real 2d x 2d Hessian of c -> int |psi - sum c e|^{2*}."""
    d = basis.dim
    s = np.maximum(np.sqrt((u_flat.real**2 + u_flat.imag**2).sum(axis=-1)), floor)
    w1 = s ** (ts - 2.0)
    w2 = (ts - 2.0) * s ** (ts - 4.0)
    R = np.einsum("apc,pc->ap", basis.flat.conj(), u_flat)
    ub = (w1[None, :] * R).sum(axis=1)
    hw1 = np.einsum("abp,p->ab", basis.pair, w1)
    sq = np.sqrt(w2)
    ar = R.real * sq[None, :]
    ai = R.imag * sq[None, :]
    H = np.empty((2 * d, 2 * d))
    H[:d, :d] = hw1.real + ar @ ar.T
    H[:d, d:] = -hw1.imag + ar @ ai.T
    H[d:, :d] = hw1.imag + ai @ ar.T
    H[d:, d:] = hw1.real + ai @ ai.T
    H *= ts * cell
    g = np.concatenate([ub.real, ub.imag]) * (-ts * cell)
    return g, H, (s, w1, w2)


def _tstar_objective(basis, psi_values, c, ts):
    u = psi_values - np.tensordot(c, basis.values, axes=(0, 0))
    s = pointwise_modulus(u)
    return u, s, float((s**ts).sum())


def t_lambda(split, psi, basis=None, tol=1e-12, max_iter=200, init=None):
    """Best approximation of psi in ker(D - lambda) w.r.t. the L^{2*} norm.

    Damped Newton on the strictly convex finite-dimensional objective
    c -> int |psi - sum c_a e_a|^{2*}; returns the kernel field.  The zero
    field is returned immediately when the kernel is trivial.
    """
    from .torus import zero_field

    grid = psi.grid
    if basis is None:
        basis = kernel_basis(split)
    d = basis.dim
    if d == 0:
        return zero_field(grid, psi.N)
    ts = critical_exponent(grid.m)
    pv = psi.values()
    if init is not None:
        c = np.asarray(init, dtype=complex).copy()
    else:
        # L^2 projection: exact minimizer for p = 2, warm start for p = 2*.
        c = np.array(
            [grid.cell * (pv * bv.conj()).sum() for bv in basis.values], dtype=complex
        )
    floor = 1e-14

    cell = grid.cell
    u0 = pv.reshape(-1, psi.N)

    scale = max(1.0, cell * float((pointwise_modulus(pv) ** ts).sum()))
    for it in range(max_iter):
        u = u0 - np.tensordot(c, basis.flat, axes=(0, 0))
        g, H, _ = _kernel_hessian(basis, u, ts, cell, floor=floor)
        gnorm = np.linalg.norm(g)
        if gnorm < tol * scale:
            break
        try:
            step = np.linalg.solve(H + 1e-14 * np.eye(2 * d) * H.diagonal().max(), -g)
        except np.linalg.LinAlgError:
            step = -g / max(H.diagonal().max(), 1.0)
        # damped: backtrack on the objective
        _, _, f0 = _tstar_objective(basis, pv, c, ts)
        alpha = 1.0
        for _ in range(40):
            trial = c + alpha * (step[:d] + 1j * step[d:])
            _, _, f1 = _tstar_objective(basis, pv, trial, ts)
            if f1 <= f0 + 1e-12 * abs(f0):
                break
            alpha *= 0.5
        c = c + alpha * (step[:d] + 1j * step[d:])
    else:
        raise SolverFailure(
            "kernel projector Newton did not converge",
            {"grad_norm": gnorm, "dim": d, "iterations": max_iter},
        )
    out = basis.fields[0].coeffs * 0.0
    for a in range(d):
        out = out + c[a] * basis.fields[a].coeffs
    proj = SpinorField(grid, out)
    proj.kernel_coords = c
    return proj


def t_prime(split, psi, chi, basis=None):
    """Derivative T'(psi)[chi], solving the linearized optimality system."""
    from .torus import zero_field

    grid = psi.grid
    if basis is None:
        basis = kernel_basis(split)
    d = basis.dim
    if d == 0:
        return zero_field(grid, psi.N)
    ts = critical_exponent(grid.m)
    tpsi = t_lambda(split, psi, basis=basis)
    u = (psi.values() - tpsi.values()).reshape(-1, psi.N)
    _, H, (s, w1, w2) = _kernel_hessian(basis, u, ts, grid.cell)
    cv = chi.values().reshape(-1, psi.N)
    # rhs_a = bilinear(e_a, chi) in the same real block convention
    pch = np.einsum("apc,pc->ap", basis.flat.conj(), cv)
    ru = np.einsum("apc,pc->ap", basis.flat.conj(), u)
    rchi = (cv.conj() * u).sum(axis=-1)
    rhs = np.zeros(2 * d)
    rhs[:d] = ts * grid.cell * ((w1 * pch.real).sum(axis=1) + (w2 * ru.real * rchi.real).sum(axis=1))
    rhs[d:] = ts * grid.cell * ((w1 * pch.imag).sum(axis=1) + (w2 * ru.imag * rchi.real).sum(axis=1))
    sol = np.linalg.solve(H + 1e-13 * np.eye(2 * d) * max(H.diagonal().max(), 1.0), rhs)
    out = basis.fields[0].coeffs * 0.0
    for a in range(d):
        out = out + (sol[a] + 1j * sol[d + a]) * basis.fields[a].coeffs
    return SpinorField(grid, out)


def f_lambda_value(split, psi, basis=None):
    """F_lam(psi) = (1/2*) |psi - T(psi)|_{2*}^{2*}."""
    ts = critical_exponent(psi.grid.m)
    u = psi - t_lambda(split, psi, basis=basis)
    s = pointwise_modulus(u.values())
    return float(psi.grid.cell * (s**ts).sum() / ts)


def f_lambda_l2_coeffs(split, psi, basis=None):
    """Band coefficients of |u|^(2*-2) u with u = psi - T(psi) (the L^2 rep of F')."""
    from .torus import analyze

    ts = critical_exponent(psi.grid.m)
    u = psi - t_lambda(split, psi, basis=basis)
    uv = u.values()
    s = pointwise_modulus(uv)
    return analyze(psi.grid, (s ** (ts - 2.0))[..., None] * uv)


def f_second_form(split, psi, phi, chi, basis=None):
    """F''(psi)[phi, chi] including the T' correction."""
    ts = critical_exponent(psi.grid.m)
    if basis is None:
        basis = kernel_basis(split)
    u = (psi - t_lambda(split, psi, basis=basis)).values()
    s = np.maximum(pointwise_modulus(u), 1e-14)
    du = chi.values() - t_prime(split, psi, chi, basis=basis).values()
    pv = phi.values()
    w1 = s ** (ts - 2.0)
    w2 = (ts - 2.0) * s ** (ts - 4.0)
    term1 = (w1 * (du * pv.conj()).sum(axis=-1).real).sum()
    term2 = (w2 * (u * du.conj()).sum(axis=-1).real * (u * pv.conj()).sum(axis=-1).real).sum()
    return float(psi.grid.cell * (term1 + term2))


def f_first(split, psi, phi, basis=None):
    """F'(psi)[phi]."""
    r = f_lambda_l2_coeffs(split, psi, basis=basis)
    return float(psi.grid.volume * (r * phi.coeffs.conj()).real.sum())


def tmfm_gap(split, psi, phi, basis=None):
    """LHS - RHS of the quadratic-form lower bound

    (F''[psi,psi] - F'[psi]) + 2 (F''[psi,phi] - F'[phi]) + F''[phi,phi]
        >= 2/(m+1) |psi - T(psi)|_{2*}^{2*}.
    """
    if basis is None:
        basis = kernel_basis(split)
    m = psi.grid.m
    ts = critical_exponent(m)
    lhs = (
        f_second_form(split, psi, psi, psi, basis=basis)
        - f_first(split, psi, psi, basis=basis)
        + 2.0 * (f_second_form(split, psi, phi, psi, basis=basis) - f_first(split, psi, phi, basis=basis))
        + f_second_form(split, psi, phi, phi, basis=basis)
    )
    u = psi - t_lambda(split, psi, basis=basis)
    s = pointwise_modulus(u.values())
    rhs = 2.0 / (m + 1.0) * float(psi.grid.cell * (s**ts).sum())
    return lhs - rhs


# ---------------------------------------------------------------------------
# lambda-orthonormal subspace coordinates


class SubspaceCoords:
    """Masked eigen entries with Euclidean coordinates matching ||.||_lambda."""

    def __init__(self, split, mask):
        self.split = split
        self.table = split.table
        self.grid = split.grid
        self.mask = mask
        self.idx = np.nonzero(mask)
        self.scale = np.sqrt(split.grid.volume * split.w2[self.idx])
        self.dim = int(self.idx[0].size)

    def to_coeffs(self, z):
        a = np.zeros((self.grid.n_modes, self.table.N), dtype=complex)
        a[self.idx] = z / self.scale
        return self.table.from_eigen(a)

    def to_field(self, z):
        return SpinorField(self.grid, self.to_coeffs(z))

    def from_coeffs(self, coeffs):
        return self.table.to_eigen(coeffs)[self.idx] * self.scale

    def from_field(self, psi):
        return self.from_coeffs(psi.coeffs)


# ---------------------------------------------------------------------------
# Inner concave maximization over a masked subspace


def _inner_maximize(objective, coords, z0, gtol, maxiter):
    """Maximize a concave-along-the-mask objective with L-BFGS.

    ``objective(coeffs)`` returns (value, l2_rep_coeffs_of_derivative); the
    z-space gradient is the lambda-Riesz restriction, which in these
    coordinates is just ``from_coeffs`` of the Riesz representative.
    """
    split = coords.split
    evals = [0]

    def fun(x):
        z = _unpack(x)
        coeffs = coords.to_coeffs(z)
        val, rep = objective(coeffs)
        evals[0] += 1
        gz = coords.from_coeffs(riesz_lambda(split, rep))
        return -val, -_pack(gz)

    if coords.dim == 0:
        val, _ = objective(coords.to_coeffs(np.zeros(0, dtype=complex)))
        return np.zeros(0, dtype=complex), val, 0.0, 0
    res = _scipy_minimize(
        fun,
        _pack(z0),
        jac=True,
        method="L-BFGS-B",
        options={"gtol": gtol, "ftol": 1e-18, "maxiter": maxiter, "maxcor": 20},
    )
    z = _unpack(res.x)
    gnorm = float(np.linalg.norm(res.jac))
    return z, float(-res.fun), gnorm, evals[0]


@dataclass
class FiberPoint:
    """Constrained maximizer over a fiber {t phi + chi}."""

    phi: SpinorField
    t: float
    chi0: SpinorField
    chim: SpinorField
    psi: SpinorField
    value: float
    grad_norm: float
    inner_evals: int
    t_scan: list
    converged: bool
    unique_confident: bool = True


def _golden_max(f, a, b, tol=1e-9, maxiter=80):
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if b - a < tol * max(1.0, abs(a) + abs(b)):
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = f(d)
    return (a + b) / 2.0


class _FiberProblem:
    """Shared state for the nested fiber maximization over t and chi.

    ``reduced`` switches the energy to the kernel-reduced functional (critical
    term at psi - T(psi)) with the chi space restricted to E^- only; kernel
    directions are then redundant by shift invariance.
    """

    def __init__(self, split, nl, phi, lam, gtol, maxiter, reduced=None):
        from .spectral import norm_lambda

        self.split = split
        self.nl = nl
        self.lam = split.lam if lam is None else float(lam)
        nrm = norm_lambda(split, phi)
        if nrm <= 0:
            raise SolverFailure("fiber direction is zero")
        self.phi = (1.0 / nrm) * phi
        self.reduced = reduced
        if reduced is not None:
            self.coords = reduced.coords
        else:
            self.coords = SubspaceCoords(split, split.zero | split.minus)
        self.gtol = gtol
        self.maxiter = maxiter
        self.z = np.zeros(self.coords.dim, dtype=complex)
        self.inner_evals = 0

    def objective(self, coeffs):
        if self.reduced is not None:
            return self.reduced.value_and_rep(coeffs)
        psi = SpinorField(self.split.grid, coeffs)
        val = L_lambda(self.split, self.nl, psi, self.lam)
        rep = l2_rep_coeffs(self.split, self.nl, psi, self.lam)
        return val, rep

    def value_at(self, t, gtol=None):
        base = t * self.phi.coeffs

        def obj(chis):
            return self.objective(base + chis)

        z, val, gnorm, ev = _inner_maximize(
            obj, self.coords, self.z, self.gtol if gtol is None else gtol, self.maxiter
        )
        self.z = z
        self.inner_evals += ev
        return val, gnorm

    def ray_value(self, t):
        val, _ = self.objective(t * self.phi.coeffs)
        return val

    def envelope_slope(self, t):
        """d/dt of the inner-maximized value (envelope theorem)."""
        coeffs = t * self.phi.coeffs + self.coords.to_coeffs(self.z)
        _, rep = self.objective(coeffs)
        return float(self.split.grid.volume * (rep * self.phi.coeffs.conj()).real.sum())

    def assemble(self, t):
        chi_coeffs = self.coords.to_coeffs(self.z)
        psi = SpinorField(self.split.grid, t * self.phi.coeffs + chi_coeffs)
        chi = SpinorField(self.split.grid, chi_coeffs)
        return psi, chi


def fiber_maximize(
    split,
    nl,
    phi,
    lam=None,
    gtol=1e-9,
    inner_maxiter=500,
    t_scan_points=8,
    t_tol=1e-7,
    reduced=None,
    warm=None,
):
    """Global maximizer of L_lam over the fiber {t phi + chi : t >= 0, chi in E0 + E-}.

    Nested scheme: golden-section search in t over the concave inner problem,
    then a secant polish on the envelope slope.  The coarse t-scan is kept in
    the diagnostics as a multimodality check of the outer 1-D problem.  A
    ``warm`` dict with keys ``t`` and ``z`` (from a nearby fiber) tries the
    secant directly from the warm scale, falling back to the bracketed search
    if the slope root is not the maximum; inner solves run at a loosened
    tolerance during the search and tight at the final point.
    """
    prob = _FiberProblem(split, nl, phi, lam, gtol, inner_maxiter, reduced=reduced)
    search_gtol = max(gtol, 1e-6)

    def _secant_on_slope(t_start, max_steps=25):
        t0 = t_start
        prob.value_at(t0, gtol=search_gtol)
        s0 = prob.envelope_slope(t0)
        t1 = t0 * (1.0 + 1e-3) + 1e-12
        for _ in range(max_steps):
            prob.value_at(t1, gtol=search_gtol)
            s1 = prob.envelope_slope(t1)
            if abs(s1) < 1e-11 * max(1.0, abs(t1)) or s1 == s0:
                return t1, True
            t2 = t1 - s1 * (t1 - t0) / (s1 - s0)
            if not np.isfinite(t2) or t2 <= 0 or t2 > 10.0 * max(t_start, t1):
                return t1, False
            t0, s0, t1 = t1, s1, t2
        return t1, abs(s1) < 1e-8 * max(1.0, abs(t1))

    scan = []
    t_star = None
    if warm is not None and warm.get("t"):
        t_ray = float(warm["t"])
        if warm.get("z") is not None and warm["z"].size == prob.coords.dim:
            prob.z = warm["z"].copy()
        v_warm = prob.value_at(t_ray, gtol=search_gtol)[0]
        t_star, ok = _secant_on_slope(t_ray)
        if ok:
            v_new = prob.value_at(t_star, gtol=search_gtol)[0]
            if v_new < v_warm - 1e-9 * max(1.0, abs(v_warm)):
                ok = False  # slope root was not the fiber maximum
        if not ok:
            t_star = None
    if t_star is None:
        # Scale from the pure ray problem (cheap evaluations, no inner solve).
        t_ray = _golden_max(prob.ray_value, 0.0, _expand_bracket(prob.ray_value), tol=1e-6)
        if t_ray <= 0:
            t_ray = 1.0
        t_hi = _expand_bracket(lambda t: prob.value_at(t, gtol=search_gtol)[0], start=2.0 * t_ray)
        if t_scan_points > 0:
            scan_ts = np.linspace(0.0, t_hi, t_scan_points + 1)[1:]
            scan = [(float(t), float(prob.value_at(t, gtol=search_gtol)[0])) for t in scan_ts]
        t_star = _golden_max(
            lambda t: prob.value_at(t, gtol=search_gtol)[0], 0.0, t_hi, tol=max(t_tol, 1e-5)
        )
        t_star, _ = _secant_on_slope(t_star)

    val, inner_g = prob.value_at(t_star)
    slope = prob.envelope_slope(t_star)
    if t_star < 1e-8 * max(t_ray, 1.0):
        raise DegenerateFiberError(
            "fiber maximizer collapsed to t = 0", {"t_ray": t_ray, "value": val}
        )
    psi, chi = prob.assemble(t_star)
    from .spectral import project

    chi0 = project(split, chi, "zero")
    chim = project(split, chi, "minus")
    gnorm = float(np.hypot(inner_g, slope))
    if warm is not None:
        warm["t"] = float(t_star)
        warm["z"] = prob.z.copy()
    return FiberPoint(
        phi=prob.phi,
        t=float(t_star),
        chi0=chi0,
        chim=chim,
        psi=psi,
        value=float(val),
        grad_norm=gnorm,
        inner_evals=prob.inner_evals,
        t_scan=scan,
        converged=bool(abs(slope) < 1e-6 * max(1.0, abs(val))),
    )


def _expand_bracket(f, start=1.0, growth=2.0, maxiter=60):
    """Smallest T (by doubling) such that f stops improving toward T."""
    t = start
    best = f(t)
    for _ in range(maxiter):
        t2 = t * growth
        v = f(t2)
        if v < best:
            return t2
        best = v
        t = t2
    raise SolverFailure("could not bracket the fiber maximum", {"t": t})


def mu_lambda(split, nl, phi, lam=None, gtol=1e-9, inner_maxiter=500):
    """Unique fiber maximizer mu_lambda(phi) (the Nehari-Pankov point over phi)."""
    return fiber_maximize(split, nl, phi, lam=lam, gtol=gtol, inner_maxiter=inner_maxiter)


def m_lambda(split, nl, phi, lam=None, fiber=None, gtol=1e-9, reduced=None):
    """Reduced functional M(phi) = L(mu(phi)) and its sphere-tangent gradient.

    The gradient is ||mu(phi)^+||_lam times the E^+ restriction of grad L at
    the fiber maximizer, projected onto the tangent space at phi.
    """
    from .spectral import inner_lambda, project

    if fiber is None:
        fiber = fiber_maximize(split, nl, phi, lam=lam, gtol=gtol, reduced=reduced)
    if reduced is not None:
        _, rep = reduced.value_and_rep(fiber.psi.coeffs)
        g_full = SpinorField(fiber.psi.grid, riesz_lambda(split, rep))
    else:
        g_full = grad_L(split, nl, fiber.psi, lam)
    gp = project(split, g_full, "plus")
    tangent = gp - inner_lambda(split, gp, fiber.phi) * fiber.phi
    grad = fiber.t * tangent
    return fiber.value, grad, fiber


def sphere_minimize(
    split,
    nl,
    phi0,
    lam=None,
    reduced=None,
    gtol=1e-7,
    maxiter=120,
    fiber_gtol=1e-9,
):
    """Minimize the reduced functional over the unit sphere of E^+.

    Quasi-Newton descent on the scale-invariant extension phi -> M(phi/||phi||)
    in lambda-orthonormal E^+ coordinates; fiber solves are warm-started from
    the previous iterate.  Returns (value, fiber_point, info).
    """
    from .spectral import norm_lambda, project

    coords = SubspaceCoords(split, split.plus)
    phi0 = project(split, phi0, "plus")
    nrm0 = norm_lambda(split, phi0)
    if nrm0 <= 0:
        raise SolverFailure("initial direction has no E^+ component")
    z0 = coords.from_field((1.0 / nrm0) * phi0)
    warm = {"t": None, "z": None}
    last = {}

    def fun(x):
        z = _unpack(x)
        nrm = float(np.linalg.norm(z))
        phi = coords.to_field(z / nrm)
        fiber = fiber_maximize(
            split, nl, phi, lam=lam, gtol=fiber_gtol, reduced=reduced, warm=warm, t_scan_points=0
        )
        if reduced is not None:
            _, rep = reduced.value_and_rep(fiber.psi.coeffs)
        else:
            rep = l2_rep_coeffs(split, nl, fiber.psi, lam)
        gz = coords.from_coeffs(riesz_lambda(split, rep))
        zhat = z / nrm
        gz = gz - np.vdot(zhat, gz).real * zhat
        gz = gz * (fiber.t / nrm)
        last["fiber"] = fiber
        last["gnorm"] = float(np.linalg.norm(gz))
        return fiber.value, _pack(gz)

    res = _scipy_minimize(
        fun,
        _pack(z0),
        jac=True,
        method="L-BFGS-B",
        options={"gtol": gtol, "ftol": 1e-16, "maxiter": maxiter, "maxcor": 25},
    )
    # Re-evaluate at the optimizer so the reported fiber matches res.x.
    value, _ = fun(res.x)
    info = {
        "outer_iterations": int(res.nit),
        "outer_evals": int(res.nfev),
        "tangent_grad_norm": last["gnorm"],
        "converged": bool(last["gnorm"] <= 10.0 * gtol or res.success),
    }
    return float(value), last["fiber"], info


# ---------------------------------------------------------------------------
# Reduced functionals on E+ at spectral parameters (T-composed path)


class ReducedProblem:
    """J(phi) = max over E- of the kernel-reduced energy at phi + chi.

    For a trivial kernel this is the plain L_lambda; at an eigenvalue the
    critical term is evaluated at psi - T(psi) and is kernel-shift invariant.
    """

    def __init__(self, split, nl):
        self.split = split
        self.nl = nl
        self.basis = kernel_basis(split)
        self.coords = SubspaceCoords(split, split.minus)
        self._t_warm = None

    def has_kernel(self):
        return self.basis.dim > 0

    def value_and_rep(self, coeffs):
        from .torus import analyze

        psi = SpinorField(self.split.grid, coeffs)
        if not self.has_kernel() or not self.nl.is_zero():
            # Trivial kernel, or a general subcritical term (there the kernel
            # directions stay inside the fiber machinery; the T-reduced path
            # is specific to the pure critical problem).
            val = L_lambda(self.split, self.nl, psi)
            rep = l2_rep_coeffs(self.split, self.nl, psi)
            return val, rep
        grid = self.split.grid
        ts = critical_exponent(grid.m)
        q = quadratic_part(self.split, psi)
        tpsi = t_lambda(self.split, psi, basis=self.basis, init=self._t_warm)
        self._t_warm = tpsi.kernel_coords
        uv = (psi - tpsi).values()
        s = pointwise_modulus(uv)
        fval = float(grid.cell * (s**ts).sum() / ts)
        a = self.split.table.to_eigen(psi.coeffs)
        lin = self.split.table.from_eigen((self.split.table.eigenvalues - self.split.lam) * a)
        rep = lin - analyze(grid, (s ** (ts - 2.0))[..., None] * uv)
        return q - fval, rep

    def eta(self, phi_plus, z0=None, gtol=1e-10, maxiter=900):
        """Maximizer over E- of the reduced energy at phi_plus + chi."""
        from .spectral import norm_lambda

        base = phi_plus.coeffs

        def obj(chis):
            return self.value_and_rep(base + chis)

        z0 = np.zeros(self.coords.dim, dtype=complex) if z0 is None else z0
        z, val, gnorm, evals = _inner_maximize(obj, self.coords, z0, gtol, maxiter)
        scale = max(1.0, norm_lambda(self.split, phi_plus) ** 3)
        if gnorm > 1e-5 * scale:
            raise SolverFailure("eta maximization stalled", {"grad_norm": gnorm})
        return z, val, gnorm, evals

    def j_value(self, phi_plus, z0=None):
        z, val, _, _ = self.eta(phi_plus, z0=z0)
        return val, z

    def j_slope(self, phi_plus, z, direction):
        """d/ds of J(phi + s d) at s = 0 via the envelope theorem."""
        psi = SpinorField(self.split.grid, phi_plus.coeffs + self.coords.to_coeffs(z))
        _, rep = self.value_and_rep(psi.coeffs)
        return float(self.split.grid.volume * (rep * direction.coeffs.conj()).real.sum())


def eta_lambda(split, nl, phi_plus, gtol=1e-10):
    """The E^- maximizer eta(phi^+) and the value J(phi^+)."""
    prob = ReducedProblem(split, nl)
    z, val, gnorm, evals = prob.eta(phi_plus, gtol=gtol)
    eta_field = prob.coords.to_field(z)
    return eta_field, float(val), {"grad_norm": gnorm, "inner_evals": evals}


def j_lambda(split, nl, phi_plus):
    _, val, _ = eta_lambda(split, nl, phi_plus)
    return val


def h_lambda(split, nl, phi_plus, prob=None, z0=None):
    """H(phi) = J'(phi)[phi], the Nehari defect of phi in E^+."""
    if prob is None:
        prob = ReducedProblem(split, nl)
    val, z = prob.j_value(phi_plus, z0=z0)
    slope = prob.j_slope(phi_plus, z, phi_plus)
    return slope, z, val


def nehari_project(split, nl, phi, t_max=1e6, tol=1e-11):
    """Scale phi in E^+ onto the Nehari-Pankov set: the unique t > 0 with H(t phi) = 0.

    The ray function j(t) = J(t phi) increases from 0, has a single interior
    maximum and decreases afterwards; t*j'(t) = H(t phi), so the root is
    isolated by a sign change of j'.
    """
    from .spectral import norm_lambda, project

    phi = project(split, phi, "plus")
    nrm = norm_lambda(split, phi)
    if nrm <= 0:
        raise SolverFailure("nehari_project needs a nonzero E^+ direction")
    phi = (1.0 / nrm) * phi
    prob = ReducedProblem(split, nl)

    z = np.zeros(prob.coords.dim, dtype=complex)

    def jprime(t):
        nonlocal z
        slope, z, _ = h_lambda(split, nl, t * phi, prob=prob, z0=z)
        return slope

    t_lo, t_hi = None, None
    t = 1.0
    for _ in range(80):
        s = jprime(t)
        if s > 0:
            t_lo = t
            break
        t *= 0.5
        if t < 1e-12:
            raise BracketFailureError("no positive slope near t = 0", {"t": t})
    t = max(2.0 * t_lo, 1.0)
    for _ in range(80):
        s = jprime(t)
        if s < 0:
            t_hi = t
            break
        t_lo = t
        t *= 2.0
        if t > t_max:
            raise BracketFailureError("no sign change up to t_max", {"t_max": t_max})
    # bisection + secant on j'
    s_lo, s_hi = jprime(t_lo), jprime(t_hi)
    for _ in range(200):
        t_mid = t_hi - s_hi * (t_hi - t_lo) / (s_hi - s_lo) if s_hi != s_lo else 0.5 * (t_lo + t_hi)
        if not (t_lo < t_mid < t_hi):
            t_mid = 0.5 * (t_lo + t_hi)
        s_mid = jprime(t_mid)
        if abs(s_mid) < tol or (t_hi - t_lo) < 1e-14 * t_hi:
            t_lo = t_hi = t_mid
            break
        if s_mid > 0:
            t_lo, s_lo = t_mid, s_mid
        else:
            t_hi, s_hi = t_mid, s_mid
    t_bar = 0.5 * (t_lo + t_hi)
    out = t_bar * phi
    out.nehari_t = float(t_bar)
    return out


def nehari_second_order(split, nl, phi_bar, rel_step=1e-4):
    """t^2 j''(t) at the Nehari root (equals H'(phi)[phi] there), by central FD."""
    from .spectral import norm_lambda

    t_bar = norm_lambda(split, phi_bar)
    direction = (1.0 / t_bar) * phi_bar
    prob = ReducedProblem(split, nl)
    h = rel_step * t_bar
    z = np.zeros(prob.coords.dim, dtype=complex)
    sp, z, _ = h_lambda(split, nl, (t_bar + h) * direction, prob=prob, z0=z)
    sm, z, _ = h_lambda(split, nl, (t_bar - h) * direction, prob=prob, z0=z)
    return t_bar**2 * (sp - sm) / (2.0 * h)


# ---------------------------------------------------------------------------
# Rayleigh functional R and S


def _r_value_and_rep(split, psi, basis, t_init=None):
    """Rayleigh quotient R(psi) and the L^2 representative of R'(psi)."""
    from .torus import analyze

    grid = psi.grid
    ts = critical_exponent(grid.m)
    tpsi = t_lambda(split, psi, basis=basis, init=t_init)
    uv = (psi - tpsi).values()
    s = pointwise_modulus(uv)
    a_int = float(grid.cell * (s**ts).sum())
    q = 2.0 * quadratic_part(split, psi)
    r_val = q / a_int ** (2.0 / ts)
    fcoef = analyze(grid, (s ** (ts - 2.0))[..., None] * uv)
    ae = split.table.to_eigen(psi.coeffs)
    lin = split.table.from_eigen((split.table.eigenvalues - split.lam) * ae)
    rep = (2.0 / a_int ** (2.0 / ts)) * (lin - r_val * a_int ** ((2.0 - ts) / ts) * fcoef)
    return r_val, rep, getattr(tpsi, "kernel_coords", None)


def r_lambda(split, psi, basis=None):
    """R(psi) = (||psi^+||^2 - ||psi^-||^2) / |psi - T(psi)|_{2*}^2."""
    if basis is None:
        basis = kernel_basis(split)
    r_val, _, _ = _r_value_and_rep(split, psi, basis)
    return r_val


def r_lambda_rep(split, psi, basis=None):
    """L^2 representative of the Rayleigh derivative R'(psi)."""
    if basis is None:
        basis = kernel_basis(split)
    _, rep, _ = _r_value_and_rep(split, psi, basis)
    return rep


def s_lambda(split, nl, phi_nehari, gtol=1e-10, maxiter=400):
    """S(phi) = max over chi in E^- of R(phi + chi), by concave-superlevel ascent.

    Computed independently of J so the identity S^m = 2m J can be used as a
    two-route consistency check.
    """
    basis = kernel_basis(split)
    coords = SubspaceCoords(split, split.minus)
    grid = split.grid
    warm = [None]

    def fun(x):
        z = _unpack(x)
        psi = SpinorField(grid, phi_nehari.coeffs + coords.to_coeffs(z))
        r_val, rep, tw = _r_value_and_rep(split, psi, basis, t_init=warm[0])
        warm[0] = tw
        gz = coords.from_coeffs(riesz_lambda(split, rep))
        return -r_val, -_pack(gz)

    if coords.dim == 0:
        val, _ = fun(np.zeros(0))
        return -val, None, {"inner_evals": 0}
    res = _scipy_minimize(
        fun,
        np.zeros(2 * coords.dim),
        jac=True,
        method="L-BFGS-B",
        options={"gtol": gtol, "ftol": 1e-18, "maxiter": maxiter},
    )
    chi = coords.to_field(_unpack(res.x))
    return float(-res.fun), chi, {"grad_norm": float(np.linalg.norm(res.jac)), "inner_evals": res.nfev}


# ---------------------------------------------------------------------------
# Frozen-fiber maximizers near an eigenvalue


def nu_lambda_k(
    split_k,
    nl,
    phi,
    lam,
    sigma=None,
    n_starts=8,
    seed=0,
    gtol=1e-9,
    agreement_tol=1e-8,
):
    """Maximize L_lam over the fiber of the split frozen at lambda_k, lam <= lambda_k.

    Multi-start gradient ascent; all starts must agree for the uniqueness
    confidence flag (the positive kernel-direction quadratic makes the inner
    problem only locally well-posed for lam < lambda_k).
    """
    from .spectral import norm_lambda
    from .torus import l2_norm

    lam = float(lam)
    if lam > split_k.lam + split_k.tol:
        raise SolverFailure(f"nu requires lam <= lambda_k = {split_k.lam}, got {lam}")
    nrm = norm_lambda(split_k, phi)
    phi = (1.0 / nrm) * phi
    if sigma is not None and l2_norm(phi) ** 2 < sigma:
        raise SolverFailure(
            f"direction has |phi|_2^2 = {l2_norm(phi)**2:.3g} below sigma = {sigma}"
        )

    best = fiber_maximize(split_k, nl, phi, lam=lam, gtol=gtol)
    values = [best.value]
    rng = np.random.default_rng(seed)
    coords = SubspaceCoords(split_k, split_k.zero | split_k.minus)
    for _ in range(max(0, n_starts - 1)):
        prob = _FiberProblem(split_k, nl, phi, lam, gtol, 500)
        prob.z = 0.3 * best.t * (
            rng.standard_normal(coords.dim) + 1j * rng.standard_normal(coords.dim)
        ) / max(np.sqrt(coords.dim), 1.0)
        t_hi = 2.5 * best.t
        t_star = _golden_max(lambda t: prob.value_at(t)[0], 0.0, t_hi, tol=1e-7)
        val, _ = prob.value_at(t_star)
        values.append(val)
        if val > best.value + agreement_tol:
            psi, chi = prob.assemble(t_star)
            from .spectral import project

            best = FiberPoint(
                phi=prob.phi,
                t=float(t_star),
                chi0=project(split_k, chi, "zero"),
                chim=project(split_k, chi, "minus"),
                psi=psi,
                value=float(val),
                grad_norm=best.grad_norm,
                inner_evals=prob.inner_evals,
                t_scan=best.t_scan,
                converged=True,
            )
    spread = max(values) - min(values)
    best.unique_confident = bool(spread <= agreement_tol * max(1.0, abs(best.value)))
    return best


def default_sigma(split_k):
    """0.5 * max |phi|_2^2 over unit-norm directions on the lowest E^+ shell."""
    sig = split_k.table.eigenvalues[split_k.plus]
    gap = float(sig.min()) - split_k.lam
    return 0.5 / gap
