"""Run configuration: a TOML file mapped onto frozen dataclasses.

Unknown keys and out-of-range values are rejected with the dotted path of
the offending field before any computation starts.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class GridConfig:
    n: int = 32
    L: float = 16.0


@dataclass(frozen=True)
class PhysicsConfig:
    model: str = "hartree"
    m: float = 1.0
    N: int = 1
    # exactly one of kappa, kappa_scaled (= kappa * N**(2/3)) or
    # negative_energy_margin fixes the coupling
    kappa: float | None = None
    kappa_scaled: float | None = None
    negative_energy_margin: float | None = None


@dataclass(frozen=True)
class InitialDataConfig:
    kind: str = "ball_shells"
    R_ball: float | None = None
    epsilon: float | None = None
    centers: list | None = None
    widths: list | float | None = None
    path: str | None = None
    seed: int | None = None


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "strang"
    dt: float = 0.01
    T_end: float = 1.0
    kernel: str = "spectral"


@dataclass(frozen=True)
class DiagnosticsConfig:
    interval: float | None = None
    radii: list | None = None


@dataclass(frozen=True)
class PolicyConfig:
    sigma_factor: float = 10.0
    tail_max: float = 0.1
    boundary_max: float = 1e-3


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "run"
    # snapshot every this many diagnostic ticks; 0 writes only the final one
    snapshot_every: int = 0


@dataclass(frozen=True)
class RestartConfig:
    # accept a snapshot whose grid or model differs from this config
    allow_mismatch: bool = False


@dataclass(frozen=True)
class FlowConfig:
    tau: float = 0.5
    grad_tol: float = 1e-4
    max_steps: int = 4000


@dataclass(frozen=True)
class CriticalConfig:
    N_values: list = field(default_factory=lambda: [1])
    lo: float = 1.5
    hi: float = 4.0
    rel_width: float = 0.1
    max_bisections: int = 12


@dataclass(frozen=True)
class ChecksConfig:
    families: int = 100
    family_size: list = field(default_factory=lambda: [1, 2, 3, 4])
    hls_corpus: int = 20
    heuristic_kappas: list = field(default_factory=lambda: [2.0, 0.02])
    seed: int | None = 0


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = GridConfig()
    physics: PhysicsConfig = PhysicsConfig()
    initial_data: InitialDataConfig = InitialDataConfig()
    integrator: IntegratorConfig = IntegratorConfig()
    diagnostics: DiagnosticsConfig = DiagnosticsConfig()
    policy: PolicyConfig = PolicyConfig()
    output: OutputConfig = OutputConfig()
    restart: RestartConfig = RestartConfig()
    flow: FlowConfig = FlowConfig()
    critical: CriticalConfig = CriticalConfig()
    checks: ChecksConfig = ChecksConfig()

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, section: str, **changes) -> "RunConfig":
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **changes)})


def _build(cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(path, "expected a table")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}" if path else key
        f = names[key]
        if dataclasses.is_dataclass(f.default):
            kwargs[key] = _build(type(f.default), value, sub)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


def _number(value, path: str, positive: bool = False, nonnegative: bool = False):
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), path, f"expected a number, got {value!r}")
    if positive:
        _require(value > 0, path, f"must be positive, got {value}")
    if nonnegative:
        _require(value >= 0, path, f"must be nonnegative, got {value}")
    return value


def validate(cfg: RunConfig) -> RunConfig:
    """Range checks that need no computation."""
    g = cfg.grid
    _require(isinstance(g.n, int) and not isinstance(g.n, bool), "grid.n", f"expected an integer, got {g.n!r}")
    _require(g.n % 2 == 0, "grid.n", f"must be even, got {g.n}")
    _require(8 <= g.n <= 256, "grid.n", f"must lie in [8, 256], got {g.n}")
    _number(g.L, "grid.L", positive=True)

    p = cfg.physics
    _require(p.model in ("hartree", "hartree_fock"), "physics.model", f"unknown model {p.model!r}")
    _number(p.m, "physics.m", nonnegative=True)
    _require(isinstance(p.N, int) and p.N >= 1, "physics.N", f"must be a positive integer, got {p.N!r}")
    given = [k for k in ("kappa", "kappa_scaled", "negative_energy_margin") if getattr(p, k) is not None]
    _require(len(given) <= 1, "physics", f"set at most one of kappa, kappa_scaled, negative_energy_margin (got {given})")
    for k in given:
        _number(getattr(p, k), f"physics.{k}", nonnegative=True)
    if p.negative_energy_margin is not None:
        _require(p.negative_energy_margin < 1, "physics.negative_energy_margin", "must lie in [0, 1)")

    d = cfg.initial_data
    _require(d.kind in ("ball_shells", "gaussians", "snapshot_file"), "initial_data.kind", f"unknown kind {d.kind!r}")
    if d.kind == "ball_shells" and d.R_ball is not None:
        _number(d.R_ball, "initial_data.R_ball", positive=True)
    if d.kind == "gaussians":
        _require(d.widths is not None, "initial_data.widths", "required for gaussians")
        if d.centers is None:
            _require(d.seed is not None, "initial_data.seed", "random Gaussian centres need a seed")
    if d.kind == "snapshot_file":
        _require(bool(d.path), "initial_data.path", "required for snapshot_file")

    i = cfg.integrator
    _require(i.scheme in ("strang", "rk4"), "integrator.scheme", f"unknown scheme {i.scheme!r}")
    _require(i.kernel in ("spectral", "hockney"), "integrator.kernel", f"unknown kernel {i.kernel!r}")
    _number(i.dt, "integrator.dt", positive=True)
    _number(i.T_end, "integrator.T_end", nonnegative=True)

    diag = cfg.diagnostics
    if diag.interval is not None:
        _number(diag.interval, "diagnostics.interval", positive=True)
    if diag.radii is not None:
        _require(isinstance(diag.radii, list) and len(diag.radii) >= 1, "diagnostics.radii", "expected a nonempty list")
        for j, r in enumerate(diag.radii):
            _number(r, f"diagnostics.radii[{j}]", positive=True)
            _require(r < 0.5 * g.L, f"diagnostics.radii[{j}]", f"must be below L/2={0.5 * g.L}")

    pol = cfg.policy
    _number(pol.sigma_factor, "policy.sigma_factor", positive=True)
    _number(pol.tail_max, "policy.tail_max", positive=True)
    _number(pol.boundary_max, "policy.boundary_max", positive=True)

    o = cfg.output
    _require(isinstance(o.snapshot_every, int) and o.snapshot_every >= 0, "output.snapshot_every", "must be a nonnegative integer")

    fl = cfg.flow
    _number(fl.tau, "flow.tau", positive=True)
    _number(fl.grad_tol, "flow.grad_tol", positive=True)

    c = cfg.critical
    _require(isinstance(c.N_values, list) and len(c.N_values) >= 1, "critical.N_values", "expected a nonempty list")
    _require(0 < c.lo < c.hi, "critical", f"need 0 < lo < hi, got lo={c.lo}, hi={c.hi}")

    ch = cfg.checks
    _require(isinstance(ch.families, int) and ch.families >= 0, "checks.families", "must be a nonnegative integer")
    _require(isinstance(ch.hls_corpus, int) and ch.hls_corpus >= 0, "checks.hls_corpus", "must be a nonnegative integer")
    return cfg


def from_dict(data: dict, check: bool = True) -> RunConfig:
    cfg = _build(RunConfig, data, "")
    return validate(cfg) if check else cfg


def load_config(path, check: bool = True) -> RunConfig:
    """Parse a TOML file; ``check=False`` defers range checks to the caller."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"invalid TOML: {exc}") from exc
    return from_dict(data, check)


def default_config() -> RunConfig:
    return RunConfig()


def example_toml() -> str:
    return (Path(__file__).with_name("example.toml")).read_text(encoding="utf-8")
