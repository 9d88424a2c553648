"""Experiment configuration and the flat ``key = value`` sweep file format.

A sweep file holds one experiment. Blank lines and ``#`` comments are
ignored. List-valued keys take comma-separated values, and integer lists
also accept inclusive ranges ``a..b``::

    problem  = rosenbr, arwhead
    n_factor = 100
    tau      = 1, 0.1, 0.05
    solver   = skoffar2, adagrad_norm
    seeds    = 0..9
    eps      = 1e-3

Keys: problem, n_hat, n, n_factor, tau, solver, seeds, eps, max_iter,
workers, diagnostics, out, and solver options nu0, mu_init, vartheta, xi,
xi_rule, kappa_mode, sigma_rule, subproblem_mode, b_mode. ``n_hat`` and
``n`` may be single values or lists aligned with ``problem``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..baselines import METHODS as BASELINE_METHODS
from ..problems import DEFAULT_NHAT, REGISTRY

SOLVER_NAMES = ("skoffar1", "skoffar2", "skoffar2b") + BASELINE_METHODS

_FLOAT_OPTIONS = ("nu0", "mu_init", "vartheta", "xi")
_STR_OPTIONS = ("xi_rule", "kappa_mode", "sigma_rule", "subproblem_mode", "b_mode")
KNOWN_KEYS = frozenset(
    ("problem", "n_hat", "n", "n_factor", "tau", "solver", "seeds", "eps", "max_iter",
     "workers", "diagnostics", "out") + _FLOAT_OPTIONS + _STR_OPTIONS
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    n_hat: int
    n: int


@dataclass
class ExperimentConfig:
    problems: list[ProblemSpec]
    taus: list[float]
    solvers: list[str]
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    eps: float = 1e-3
    max_iter: int | None = None
    workers: int = 1
    diagnostics: bool = False
    out: str | None = None
    # extra SolverConfig fields applied to every skoffar cell
    solver_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.problems and self.taus and self.solvers and self.seeds):
            raise ConfigError("problems, taus, solvers and seeds must be nonempty")
        for t in self.taus:
            if not 0.0 < t <= 1.0:
                raise ConfigError(f"tau must lie in (0, 1], got {t}")
        for s in self.solvers:
            if s not in SOLVER_NAMES:
                raise ConfigError(f"unknown solver {s!r}; known: {SOLVER_NAMES}")
        for p in self.problems:
            if p.name not in REGISTRY:
                raise ConfigError(f"unknown problem {p.name!r}")
            if p.n < p.n_hat:
                raise ConfigError(f"{p.name}: n = {p.n} is below n_hat = {p.n_hat}")
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _ints(value: str) -> list[int]:
    out = []
    for item in _split(value):
        if ".." in item:
            a, b = item.split("..", 1)
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(item))
    return out


def _bool(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def parse_text(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def _aligned(name: str, values: list[int], count: int) -> list[int]:
    if len(values) == 1:
        return values * count
    if len(values) != count:
        raise ConfigError(f"{name} needs 1 or {count} values, got {len(values)}")
    return values


def config_from_entries(entries: dict[str, str]) -> ExperimentConfig:
    try:
        names = _split(entries["problem"])
        taus = [float(t) for t in _split(entries["tau"])]
        solvers = _split(entries["solver"])
    except KeyError as exc:
        raise ConfigError(f"missing required key {exc.args[0]!r}") from None
    n_hats = (_aligned("n_hat", _ints(entries["n_hat"]), len(names)) if "n_hat" in entries
              else [DEFAULT_NHAT.get(nm, 0) for nm in names])
    if "n" in entries:
        ns = _aligned("n", _ints(entries["n"]), len(names))
    else:
        factor = int(entries.get("n_factor", "100"))
        ns = [factor * nh for nh in n_hats]
    options = {k: float(entries[k]) for k in _FLOAT_OPTIONS if k in entries}
    options.update({k: entries[k] for k in _STR_OPTIONS if k in entries})
    return ExperimentConfig(
        problems=[ProblemSpec(a, b, c) for a, b, c in zip(names, n_hats, ns)],
        taus=taus,
        solvers=solvers,
        seeds=_ints(entries["seeds"]) if "seeds" in entries else list(range(10)),
        eps=float(entries.get("eps", "1e-3")),
        max_iter=int(float(entries["max_iter"])) if "max_iter" in entries else None,
        workers=int(entries.get("workers", "1")),
        diagnostics=_bool(entries.get("diagnostics", "false")),
        out=entries.get("out"),
        solver_options=options,
    )


def parse_config(text: str) -> ExperimentConfig:
    return config_from_entries(parse_text(text))


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def default_sweep(seeds: int = 10) -> ExperimentConfig:
    """Desk-scale sweep over the core problems at n = 100 n_hat."""
    names = ("rosenbr", "arwhead", "broyden3d", "tridia", "dixmaana")
    return ExperimentConfig(
        problems=[ProblemSpec(nm, DEFAULT_NHAT[nm], 100 * DEFAULT_NHAT[nm]) for nm in names],
        taus=[0.1, 0.05],
        solvers=["skoffar2", "adagrad_norm", "adam_norm"],
        seeds=list(range(seeds)),
    )
