"""Run configuration: flat key-value sections, validated at load time.

The canonical interface is an INI-style file; command-line flags override
individual keys.  Unknown sections or keys are rejected with the offending
line number, as are values violating the module preconditions (dimension,
cutoff, grid parity, nonlinearity exponent ranges, sweep shapes).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, asdict

import numpy as np

from .nonlinearity import NonlinearityError, critical_exponent, make_nonlinearity


class ConfigError(ValueError):
    """Malformed configuration; carries a line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


_SCHEMA = {
    "run": {"command", "out_dir", "seed"},
    "problem": {"dim", "cutoff", "n_grid", "lambda", "lambda_grid", "Lambda"},
    "nonlinearity": {"kind", "alpha", "p", "q"},
    "testspinor": {"eps_sweep", "delta", "dual_lambda"},
    "branch": {"second_near", "second_offsets", "workers"},
    "tolerances": {"outer_gtol", "fiber_gtol", "residual_tol"},
    "accept": {"suite"},
}

_COMMANDS = {
    "clifford",
    "spectrum",
    "weyl",
    "testspinor",
    "solve",
    "branch",
    "multiplicity",
    "accept",
    "quadcheck",
}


@dataclass
class RunConfig:
    command: str = "solve"
    out_dir: str = "runs"
    seed: int = 0
    dim: int = 2
    cutoff: int = 16
    n_grid: int | None = None
    lam: float | None = None
    lambda_grid: list = field(default_factory=list)
    Lambda: float | None = None
    nl_kind: str = "bnd"
    alpha: float | None = None
    p: float | None = None
    q: float | None = None
    eps_sweep: tuple = (0.2, 0.14, 0.1, 0.07, 0.05, 0.035, 0.025)
    delta: float = float(np.pi / 4.0)
    dual_lambda: float = 0.5
    second_near: int | None = None
    second_offsets: tuple = (0.05, 0.02, 0.01)
    workers: int = 1
    outer_gtol: float = 1e-7
    fiber_gtol: float = 1e-9
    residual_tol: float = 1e-6
    suite: str = "all"

    def nonlinearity(self):
        try:
            return make_nonlinearity(self.nl_kind, self.dim, alpha=self.alpha, p=self.p, q=self.q)
        except NonlinearityError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        return asdict(self)


def _line_of(path, section, key=None):
    """Best-effort line number of a section or key within a section."""
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError:
        return None
    in_section = False
    for i, raw in enumerate(lines, start=1):
        text = raw.strip()
        if text.startswith("[") and text.endswith("]"):
            name = text[1:-1].strip()
            if name == section:
                if key is None:
                    return i
                in_section = True
            else:
                in_section = False
        elif in_section and key is not None:
            head = text.split("=")[0].split(":")[0].strip()
            if head == key:
                return i
    return None


def parse_lambda_grid(spec):
    """Parse "a:b:step" or a comma list into a float grid."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ConfigError(f"lambda_grid must be start:stop:step, got {spec!r}")
        a, b, step = (float(p) for p in parts)
        if step <= 0 or b < a:
            raise ConfigError(f"bad lambda_grid range {spec!r}")
        n = int(np.floor((b - a) / step + 1e-9)) + 1
        return [round(a + i * step, 12) for i in range(n)]
    return [float(p) for p in spec.split(",") if p.strip()]


def load_config(path, overrides=None):
    """Load and validate a RunConfig from an INI file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(f"unparseable config: {exc}", line=line) from exc
    if not read:
        raise ConfigError(f"config file {path!r} not found or empty")

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(
                f"unknown section [{section}]", line=_line_of(path, section)
            )
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"unknown key {key!r} in [{section}]", line=_line_of(path, section, key)
                )

    cfg = RunConfig()

    def get(section, key, cast, attr, line_key=None):
        if parser.has_option(section, key):
            raw = parser.get(section, key)
            try:
                setattr(cfg, attr, cast(raw))
            except (ValueError, ConfigError) as exc:
                raise ConfigError(
                    f"bad value for {key!r}: {exc}", line=_line_of(path, section, key)
                ) from exc

    get("run", "command", str, "command")
    get("run", "out_dir", str, "out_dir")
    get("run", "seed", int, "seed")
    get("problem", "dim", int, "dim")
    get("problem", "cutoff", int, "cutoff")
    get("problem", "n_grid", int, "n_grid")
    get("problem", "lambda", float, "lam")
    get("problem", "lambda_grid", parse_lambda_grid, "lambda_grid")
    get("problem", "Lambda", float, "Lambda")
    get("nonlinearity", "kind", str, "nl_kind")
    get("nonlinearity", "alpha", float, "alpha")
    get("nonlinearity", "p", float, "p")
    get("nonlinearity", "q", float, "q")
    get("testspinor", "eps_sweep", lambda s: tuple(float(x) for x in s.split(",")), "eps_sweep")
    get("testspinor", "delta", float, "delta")
    get("testspinor", "dual_lambda", float, "dual_lambda")
    get("branch", "second_near", int, "second_near")
    get(
        "branch",
        "second_offsets",
        lambda s: tuple(float(x) for x in s.split(",")),
        "second_offsets",
    )
    get("branch", "workers", int, "workers")
    get("tolerances", "outer_gtol", float, "outer_gtol")
    get("tolerances", "fiber_gtol", float, "fiber_gtol")
    get("tolerances", "residual_tol", float, "residual_tol")
    get("accept", "suite", str, "suite")

    for attr, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, attr, value)

    validate_config(cfg, path)
    return cfg


def validate_config(cfg, path=None):
    def bad(msg, section=None, key=None):
        line = _line_of(path, section, key) if path and section else None
        raise ConfigError(msg, line=line)

    if cfg.command not in _COMMANDS:
        bad(f"unknown command {cfg.command!r}; choose from {sorted(_COMMANDS)}", "run", "command")
    if cfg.dim < 2:
        bad(f"dim must be >= 2, got {cfg.dim}", "problem", "dim")
    if cfg.cutoff < 1:
        bad(f"cutoff must be >= 1, got {cfg.cutoff}", "problem", "cutoff")
    if cfg.n_grid is not None and (cfg.n_grid % 2 or cfg.n_grid < 2 * cfg.cutoff + 2):
        bad(
            f"n_grid must be even and >= 2*cutoff+2 = {2*cfg.cutoff+2}, got {cfg.n_grid}",
            "problem",
            "n_grid",
        )
    if cfg.p is not None:
        two_star = critical_exponent(cfg.dim)
        if not (2.0 < cfg.p < two_star):
            bad(
                f"power exponent must satisfy 2 < p < 2* = {two_star}, got p={cfg.p}",
                "nonlinearity",
                "p",
            )
    try:
        cfg.nonlinearity()
    except ConfigError as exc:
        bad(str(exc), "nonlinearity", "kind")
    if any(e <= 0 for e in cfg.eps_sweep):
        bad("eps_sweep entries must be positive", "testspinor", "eps_sweep")
    if any(b >= a for a, b in zip(cfg.eps_sweep, cfg.eps_sweep[1:])):
        bad("eps_sweep must be strictly decreasing", "testspinor", "eps_sweep")
    if not (0.0 < 2.0 * cfg.delta < np.pi):
        bad(f"delta must satisfy 0 < 2*delta < pi, got {cfg.delta}", "testspinor", "delta")
    if cfg.workers < 1:
        bad(f"workers must be >= 1, got {cfg.workers}", "branch", "workers")
    return cfg
