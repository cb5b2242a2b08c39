"""Command-line workbench: subcommands, config runs, CSV/JSON artifacts.

Every run writes ``results.csv`` plus a ``manifest.json`` with the exact
configuration next to it; branch runs also emit a plot-ready
``plotdata/branch.csv`` (lambda, branch_id, energy).  Exit codes: 0 full
success, 1 solver failures, 2 guard violations (converged energy at or above
the compactness threshold), 64 malformed configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .acceptance import SUITES, run_suite
from .branch import (
    GuardViolationError,
    branch_sweep,
    gamma_crit,
    minimize_M,
    multiplicity_count,
    nu_window,
)
from .clifford import build_rep
from .config import ConfigError, RunConfig, load_config, parse_lambda_grid, validate_config
from .spectral import assemble, split, weyl_cm_vol, weyl_counts
from .testspinor import TestSpinorParams, asymptotic_fit, build_test_spinor, energy_report
from .torus import lp_norm, make_grid, random_field
from .variational import SolverFailure

_FMT = "%.11e"


def _fmt(x):
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return "nan"
    return _FMT % float(x)


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) if not isinstance(x, str) else x for x in row))
    path.write_text("\n".join(lines) + "\n")


def _write_manifest(out_dir, cfg, command, extra=None, t0=None):
    manifest = {
        "tool": "diractorus",
        "version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "wall_clock_s": None if t0 is None else time.time() - t0,
    }
    if extra:
        manifest.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")


def cmd_clifford(cfg, out_dir, t0):
    rep = build_rep(cfg.dim)
    res = rep.relation_residuals()
    print(f"clifford dim={cfg.dim} rank N={rep.N}")
    for key, val in res.items():
        print(f"  {key:16s} residual = {val:.3e}")
    _write_manifest(out_dir, cfg, "clifford", {"residuals": res}, t0)
    return 0


def cmd_spectrum(cfg, out_dir, t0, emit_json=False):
    table = assemble(cfg.dim, cfg.cutoff, cfg.n_grid)
    rows = list(zip(table.distinct, table.multiplicity))
    _write_csv(out_dir / "results.csv", ["eigenvalue", "multiplicity"], rows)
    if emit_json:
        print(json.dumps([{"eigenvalue": float(e), "multiplicity": int(mult)} for e, mult in rows]))
    else:
        print(f"spectrum: {len(rows)} distinct eigenvalues -> {out_dir / 'results.csv'}")
    _write_manifest(out_dir, cfg, "spectrum", {"n_distinct": len(rows)}, t0)
    return 0


def cmd_weyl(cfg, out_dir, t0):
    if cfg.Lambda is None:
        raise ConfigError("weyl needs Lambda")
    table = assemble(cfg.dim, cfg.cutoff, cfg.n_grid)
    dp, dm, total = weyl_counts(table, cfg.Lambda)
    record = {
        "Lambda": cfg.Lambda,
        "d_plus": dp,
        "d_minus": dm,
        "N_count": total,
        "ratio": dp / cfg.Lambda**cfg.dim,
        "C_m_vol": weyl_cm_vol(cfg.dim),
    }
    print(json.dumps(record))
    _write_csv(
        out_dir / "results.csv",
        ["Lambda", "d_plus", "d_minus", "ratio", "C_m_vol"],
        [[cfg.Lambda, dp, dm, record["ratio"], record["C_m_vol"]]],
    )
    _write_manifest(out_dir, cfg, "weyl", {"record": record}, t0)
    return 0


def cmd_testspinor(cfg, out_dir, t0):
    table = assemble(cfg.dim, cfg.cutoff, cfg.n_grid)
    sp = split(table, cfg.dual_lambda)
    rows = []
    for eps in cfg.eps_sweep:
        params = TestSpinorParams(eps=eps, delta=cfg.delta)
        psi = build_test_spinor(table.grid, table.rep, params)
        rows.append(energy_report(table, sp, psi, params=params))
    header = [
        "eps",
        "l2",
        "l2star",
        "dirac_energy",
        "free_energy",
        "dual_phi",
        "dual_residual",
        "resolution_flag",
    ]
    _write_csv(
        out_dir / "results.csv",
        header,
        [
            [
                r["eps"],
                r["l2"],
                r["l2star"],
                r["dirac_energy"],
                r["free_energy"],
                r["dual_norm_phi"],
                r["dual_norm_residual"],
                r["resolution_flag"],
            ]
            for r in rows
        ],
    )
    fits = {}
    if len(rows) >= 6:
        for key, src in [
            ("l2_sq", lambda r: r["l2_sq"]),
            ("dual_phi", lambda r: r["dual_norm_phi"]),
            ("dual_residual", lambda r: r["dual_norm_residual"]),
            ("free_energy_gap", lambda r: abs(r["free_energy"] - gamma_crit(cfg.dim))),
        ]:
            try:
                fit = asymptotic_fit([(r["eps"], src(r)) for r in rows])
                fits[key] = {
                    "exponent": fit.exponent,
                    "log_power": fit.log_power,
                    "prefactor": fit.prefactor,
                    "residual": fit.residual,
                    "fits": fit.fits,
                }
            except Exception as exc:  # noqa: BLE001 - fit failures are reported, not fatal
                fits[key] = {"error": str(exc)}
    (out_dir / "fits.json").write_text(json.dumps(fits, indent=2) + "\n")
    print(f"testspinor sweep ({len(rows)} points) -> {out_dir / 'results.csv'}")
    _write_manifest(out_dir, cfg, "testspinor", {"fits": fits}, t0)
    return 0


def _point_row(p):
    return [
        p.lam,
        p.level,
        p.energy,
        p.residual_l2,
        p.below_gamma_crit,
        ";".join(p.flags) if p.flags else "",
    ]


def cmd_solve(cfg, out_dir, t0):
    if cfg.lam is None:
        raise ConfigError("solve needs lambda")
    nl = cfg.nonlinearity()
    table = assemble(cfg.dim, cfg.cutoff, cfg.n_grid)
    eig = table.distinct[np.argmin(np.abs(table.distinct - cfg.lam))]
    sp = split(table, float(eig) if abs(eig - cfg.lam) <= 1e-9 else cfg.lam)
    code = 0
    try:
        pt = minimize_M(
            sp,
            nl,
            outer_gtol=cfg.outer_gtol,
            fiber_gtol=cfg.fiber_gtol,
            residual_tol=cfg.residual_tol,
        )
    except GuardViolationError as exc:
        pt = exc.point
        pt.flags.append("guard-violation")
        code = 2
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        _write_manifest(out_dir, cfg, "solve", {"error": str(exc)}, t0)
        return 1
    header = ["lambda", "level", "energy", "residual", "below_gamma_crit", "flags"]
    _write_csv(out_dir / "results.csv", header, [_point_row(pt)])
    print(
        f"solve lambda={pt.lam}: energy={pt.energy:.9f} residual={pt.residual_l2:.2e} "
        f"below_gamma_crit={pt.below_gamma_crit}"
    )
    _write_manifest(out_dir, cfg, "solve", {"diagnostics": pt.diagnostics}, t0)
    return code


def cmd_branch(cfg, out_dir, t0):
    if not cfg.lambda_grid:
        raise ConfigError("branch needs lambda_grid")
    nl = cfg.nonlinearity()
    table = assemble(cfg.dim, cfg.cutoff, cfg.n_grid)
    sweep = branch_sweep(
        table,
        nl,
        cfg.lambda_grid,
        second_near=cfg.second_near,
        second_offsets=cfg.second_offsets,
        outer_gtol=cfg.outer_gtol,
        fiber_gtol=cfg.fiber_gtol,
        residual_tol=cfg.residual_tol,
        workers=cfg.workers,
    )
    header = ["lambda", "level", "energy", "residual", "below_gamma_crit", "flags"]
    _write_csv(out_dir / "results.csv", header, [_point_row(p) for p in sweep.points])
    plot_rows = [
        [p.lam, f"{p.level}{'' if p.k is None else p.k}", p.energy]
        for p in sweep.points
        if p.energy is not None
    ]
    _write_csv(out_dir / "plotdata" / "branch.csv", ["lambda", "branch_id", "energy"], plot_rows)
    failures = [p for p in sweep.points if any("solver-failure" in f for f in p.flags)]
    guards = [p for p in sweep.points if "guard-violation" in p.flags]
    print(
        f"branch sweep: {len(sweep.points)} points, {len(guards)} guard violations, "
        f"{len(failures)} failures -> {out_dir / 'results.csv'}"
    )
    _write_manifest(
        out_dir,
        cfg,
        "branch",
        {
            "monotone_violations": sweep.monotone_violations(),
            "guard_violations": len(guards),
            "failures": len(failures),
        },
        t0,
    )
    if guards:
        return 2
    if failures:
        return 1
    return 0


def cmd_multiplicity(cfg, out_dir, t0):
    if cfg.lam is None:
        raise ConfigError("multiplicity needs lambda")
    table = assemble(cfg.dim, cfg.cutoff, cfg.n_grid)
    nu = nu_window(cfg.dim, table.grid.volume)
    count = multiplicity_count(table, cfg.lam, nu)
    record = {"lambda": cfg.lam, "nu": nu, "count": count}
    print(json.dumps(record))
    _write_csv(out_dir / "results.csv", ["lambda", "nu", "count"], [[cfg.lam, nu, count]])
    _write_manifest(out_dir, cfg, "multiplicity", {"record": record}, t0)
    return 0


def cmd_accept(cfg, out_dir, t0):
    records = run_suite(cfg.suite, progress=print)
    (out_dir / "acceptance.json").parent.mkdir(parents=True, exist_ok=True)
    (out_dir / "acceptance.json").write_text(json.dumps(records, indent=2, default=str) + "\n")
    n_fail = sum(1 for r in records if not r["passed"])
    print(f"suite {cfg.suite!r}: {len(records) - n_fail}/{len(records)} checks passed")
    _write_manifest(out_dir, cfg, "accept", {"acceptance": records}, t0)
    return 0 if n_fail == 0 else 1


def cmd_quadcheck(cfg, out_dir, t0):
    """Quadrature self-test: L^p norms under collocation refinement."""
    p = cfg.p if cfg.p is not None else 3.0
    grid1 = make_grid(cfg.dim, cfg.cutoff)
    grid2 = make_grid(cfg.dim, cfg.cutoff, 2 * grid1.n_grid)
    rng = np.random.default_rng(cfg.seed)
    psi1 = random_field(grid1, 2 ** (cfg.dim // 2), rng)
    from .torus import resample_field

    psi2 = resample_field(psi1, grid2)
    v1 = lp_norm(psi1, p)
    v2 = lp_norm(psi2, p)
    rel = abs(v1 - v2) / max(v2, 1e-300)
    print(f"quadcheck p={p}: n={grid1.n_grid} -> {v1:.12e}, n={grid2.n_grid} -> {v2:.12e}, rel diff {rel:.3e}")
    _write_manifest(out_dir, cfg, "quadcheck", {"p": p, "coarse": v1, "fine": v2, "rel": rel}, t0)
    return 0


_DISPATCH = {
    "clifford": cmd_clifford,
    "spectrum": cmd_spectrum,
    "weyl": cmd_weyl,
    "testspinor": cmd_testspinor,
    "solve": cmd_solve,
    "branch": cmd_branch,
    "multiplicity": cmd_multiplicity,
    "accept": cmd_accept,
    "quadcheck": cmd_quadcheck,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="diractorus",
        description="Spectral workbench for critical nonlinear Dirac equations on flat tori",
    )
    sub = parser.add_subparsers(dest="command")

    def common(p):
        p.add_argument("--dim", type=int, default=None)
        p.add_argument("--cutoff", type=int, default=None)
        p.add_argument("--n-grid", type=int, default=None)
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("run", help="execute a config file")
    p.add_argument("config", type=str)
    p.add_argument("--out", type=str, default=None)

    p = sub.add_parser("clifford", help="gamma-matrix relation residuals")
    common(p)
    p.add_argument("--check", action="store_true")

    p = sub.add_parser("spectrum", help="exact torus Dirac spectrum")
    common(p)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("weyl", help="eigenvalue counting")
    common(p)
    p.add_argument("--Lambda", type=float, required=True)

    p = sub.add_parser("testspinor", help="concentration sweep measurements")
    common(p)
    p.add_argument("--eps-sweep", type=str, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--dual-lambda", type=float, default=None)

    p = sub.add_parser("solve", help="least-energy solve at one lambda")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--nl", type=str, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--q", type=float, default=None)

    p = sub.add_parser("branch", help="branch sweep over a lambda grid")
    common(p)
    p.add_argument("--lambda-grid", type=str, required=True)
    p.add_argument("--second-near", type=int, default=None)
    p.add_argument("--nl", type=str, default=None)
    p.add_argument("--workers", type=int, default=None)

    p = sub.add_parser("multiplicity", help="continuation-window solution count")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)

    p = sub.add_parser("accept", help="run acceptance criteria")
    p.add_argument("suite", nargs="?", default="all", choices=sorted(SUITES))
    p.add_argument("--out", type=str, default=None)

    p = sub.add_parser("quadcheck", help="quadrature refinement self-test")
    common(p)
    p.add_argument("--p", type=float, default=None)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 0
    t0 = time.time()
    try:
        if args.command == "run":
            cfg = load_config(args.config, overrides={"out_dir": args.out})
        else:
            cfg = RunConfig(command=args.command)
            for attr, key in [
                ("dim", "dim"),
                ("cutoff", "cutoff"),
                ("n_grid", "n_grid"),
                ("seed", "seed"),
                ("lam", "lam"),
                ("Lambda", "Lambda"),
                ("nl_kind", "nl"),
                ("alpha", "alpha"),
                ("p", "p"),
                ("q", "q"),
                ("delta", "delta"),
                ("dual_lambda", "dual_lambda"),
                ("second_near", "second_near"),
                ("workers", "workers"),
                ("suite", "suite"),
                ("out_dir", "out"),
            ]:
                if hasattr(args, key) and getattr(args, key) is not None:
                    setattr(cfg, attr, getattr(args, key))
            if getattr(args, "eps_sweep", None):
                cfg.eps_sweep = tuple(float(x) for x in args.eps_sweep.split(","))
            if getattr(args, "lambda_grid", None):
                cfg.lambda_grid = parse_lambda_grid(args.lambda_grid)
            validate_config(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 64
    out_dir = Path(cfg.out_dir)
    root = os.environ.get("DIRACTORUS_OUT_ROOT")
    if root and not out_dir.is_absolute():
        out_dir = Path(root) / out_dir
    try:
        if cfg.command == "spectrum":
            return cmd_spectrum(cfg, out_dir, t0, emit_json=getattr(args, "json", False))
        return _DISPATCH[cfg.command](cfg, out_dir, t0)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 64
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
