"""Command-line runner: ``prhf {evolve,groundstate,critical,checks,initdata}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, _kernels
from .checks import checks_suite
from .config import ConfigError, RunConfig, default_config, load_config, validate
from .diagnostics import default_radii, sigma
from .dynamics import BlowUpPolicy, SimState, evolve
from .grid import Grid
from .initdata import (
    BallShellSpec,
    ball_shell_eigenstates,
    choose_kappa_negative_energy,
    gaussian_family,
)
from .io import CsvWriter, SnapshotError, load_snapshot, save_snapshot, write_manifest
from .operators import OrbitalSet
from .variational import (
    BisectionParams,
    FlowParams,
    critical_coupling,
    gradient_flow_ground_state,
)

EXIT_ERROR = 1


def _grid(cfg: RunConfig) -> Grid:
    return Grid(cfg.grid.n, cfg.grid.L)


def resolve_kappa(cfg: RunConfig, psi: OrbitalSet) -> float:
    p = cfg.physics
    if p.kappa is not None:
        return float(p.kappa)
    if p.kappa_scaled is not None:
        return float(p.kappa_scaled) / psi.N ** (2.0 / 3.0)
    if p.negative_energy_margin is not None:
        return choose_kappa_negative_energy(psi, p.negative_energy_margin)
    return 1.0


def build_initial_orbitals(cfg: RunConfig) -> OrbitalSet:
    g = _grid(cfg)
    d = cfg.initial_data
    N, m = cfg.physics.N, cfg.physics.m
    if d.kind == "ball_shells":
        R = d.R_ball if d.R_ball is not None else g.L / 6.0
        psi = ball_shell_eigenstates(BallShellSpec(N, R, d.epsilon), g, m=m)
    elif d.kind == "gaussians":
        if d.centers is None:
            rng = np.random.default_rng(d.seed)
            centers = rng.uniform(-g.L / 8.0, g.L / 8.0, size=(N, 3))
        else:
            centers = d.centers
        psi = gaussian_family(N, centers, d.widths, g, m=m)
    else:
        snap = load_snapshot(d.path)
        psi = snap.state.psi
        if psi.grid != g:
            raise ConfigError("initial_data.path", f"snapshot grid {psi.grid} differs from config grid {g}")
        psi = OrbitalSet(psi.psi, g, m, psi.kappa)
        if cfg.physics.kappa is None and cfg.physics.kappa_scaled is None and cfg.physics.negative_energy_margin is None:
            return psi
    return psi.with_kappa(resolve_kappa(cfg, psi))


def _policy(cfg: RunConfig, sigma_ref=None) -> BlowUpPolicy:
    p = cfg.policy
    return BlowUpPolicy(p.sigma_factor, p.tail_max, p.boundary_max, sigma_ref)


def _prepare_output(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise ConfigError("output.directory", f"{out} is not writable")
    return out


def _base_manifest(cfg: RunConfig, command: str) -> dict:
    return {
        "command": command,
        "code_version": __version__,
        "numba": _kernels.USING_NUMBA,
        "config": cfg.to_dict(),
    }


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def run_evolve(cfg: RunConfig, out: Path, resume: str | None = None) -> int:
    integ = cfg.integrator
    resume_info = None
    if resume is not None:
        snap = load_snapshot(resume)
        st = snap.state
        g = _grid(cfg)
        if st.psi.grid != g:
            raise SnapshotError(f"snapshot grid (n={st.psi.grid.n}, L={st.psi.grid.L}) differs from config (n={g.n}, L={g.L})")
        mismatch = []
        if st.model != cfg.physics.model:
            mismatch.append(f"model {st.model} vs {cfg.physics.model}")
        if st.psi.m != cfg.physics.m:
            mismatch.append(f"m {st.psi.m} vs {cfg.physics.m}")
        if cfg.physics.kappa is not None and st.psi.kappa != cfg.physics.kappa:
            mismatch.append(f"kappa {st.psi.kappa} vs {cfg.physics.kappa}")
        if mismatch and not cfg.restart.allow_mismatch:
            raise SnapshotError("snapshot header mismatch: " + "; ".join(mismatch))
        if mismatch:
            psi = OrbitalSet(st.psi.psi, g, cfg.physics.m, cfg.physics.kappa if cfg.physics.kappa is not None else st.psi.kappa)
            st = dataclasses.replace(st, psi=psi, model=cfg.physics.model)
        state, sigma_ref = st, snap.sigma_ref
        resume_info = {
            "snapshot": str(resume),
            "t": st.t,
            "step_index": st.step_index,
            "overridden": mismatch,
            "dt_previous": snap.dt,
            "dt_changed": snap.dt is not None and snap.dt != integ.dt,
        }
    else:
        psi = build_initial_orbitals(cfg)
        state, sigma_ref = SimState(psi, model=cfg.physics.model), None

    g = state.psi.grid
    interval = cfg.diagnostics.interval if cfg.diagnostics.interval is not None else integ.dt
    radii = cfg.diagnostics.radii if cfg.diagnostics.radii is not None else default_radii(g.L)
    if sigma_ref is None:
        sigma_ref = sigma(state.psi)
    policy = _policy(cfg, sigma_ref)
    snaps = out / "snapshots"
    snaps.mkdir(exist_ok=True)
    written: list[Path] = []
    ticks = {"count": 0}

    csv_path = out / "timeseries.csv"
    with CsvWriter(csv_path) as csv:

        def on_record(s, rec):
            csv.write(rec)
            every = cfg.output.snapshot_every
            if every and ticks["count"] % every == 0:
                p = snaps / f"snap_{s.step_index:08d}.prhf"
                save_snapshot(p, s, sigma_ref, integ.dt)
                written.append(p)
            ticks["count"] += 1

        t0 = time.perf_counter()
        res = evolve(
            state,
            integ.T_end,
            integ.dt,
            interval=interval,
            policy=policy,
            scheme=integ.scheme,
            radii=radii,
            kernel=integ.kernel,
            on_record=on_record,
        )
        wall = time.perf_counter() - t0

    final = out / "final.prhf"
    save_snapshot(final, res.state, sigma_ref, integ.dt)
    manifest = _base_manifest(cfg, "evolve")
    manifest.update(
        {
            "kappa": res.state.psi.kappa,
            "N": res.state.psi.N,
            "sigma_ref": sigma_ref,
            "detectors": policy.describe(),
            "termination": {
                "outcome": res.reason.outcome.label,
                "t": res.reason.t,
                "value": res.reason.value,
                "exit_code": res.reason.outcome.exit_code,
            },
            "records": len(res.records),
            "resume": resume_info,
            "wall_seconds": wall,
        }
    )
    write_manifest(out / "manifest.json", manifest, [csv_path, final, *written])
    print(res.reason.describe())
    return res.reason.outcome.exit_code


def run_groundstate(cfg: RunConfig, out: Path) -> int:
    g = _grid(cfg)
    psi0 = build_initial_orbitals(cfg)
    fl = cfg.flow
    params = FlowParams(tau=fl.tau, grad_tol=fl.grad_tol, max_steps=fl.max_steps, R_ball=cfg.initial_data.R_ball)
    res = gradient_flow_ground_state(
        psi0.N, psi0.kappa, psi0.m, g, params, cfg.physics.model, init=psi0
    )
    save_snapshot(out / "groundstate.prhf", SimState(res.psi, model=cfg.physics.model))
    report = {
        "verdict": res.verdict,
        "converged": res.converged,
        "energy": res.energy,
        "steps": res.steps,
        "grad_norm": res.grad_norm,
        "kappa": psi0.kappa,
        "kappa_scaled": psi0.kappa * psi0.N ** (2.0 / 3.0),
    }
    (out / "groundstate.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    manifest = _base_manifest(cfg, "groundstate")
    manifest["result"] = report
    write_manifest(out / "manifest.json", manifest, [out / "groundstate.prhf", out / "groundstate.json"])
    print(f"{res.verdict}: E={res.energy:.12g} after {res.steps} steps")
    return {"converged": 0, "collapse": 2}.get(res.verdict, 3)


def run_critical(cfg: RunConfig, out: Path) -> int:
    g = _grid(cfg)
    c, fl = cfg.critical, cfg.flow
    bis = BisectionParams(c.lo, c.hi, c.rel_width, c.max_bisections)
    flow = FlowParams(tau=fl.tau, grad_tol=fl.grad_tol, max_steps=fl.max_steps, R_ball=cfg.initial_data.R_ball)
    results = []
    for N in c.N_values:
        r = critical_coupling(int(N), cfg.physics.m, g, bis, flow, cfg.physics.model)
        results.append(
            {
                "N": r.N,
                "kappa_cr_measured": r.kappa_cr_measured,
                "bracket": list(r.bracket),
                "grid": list(r.grid),
                "m": r.m,
                "history": r.history,
            }
        )
        print(f"N={r.N}: kappa_cr,measured={r.kappa_cr_measured:.6g} bracket={r.bracket}")
    (out / "critical.json").write_text(json.dumps(results, indent=2) + "\n", encoding="utf-8")
    manifest = _base_manifest(cfg, "critical")
    manifest["results"] = results
    write_manifest(out / "manifest.json", manifest, [out / "critical.json"])
    return 0


def run_checks(cfg: RunConfig, out: Path) -> int:
    rep = checks_suite(cfg)
    table = rep.table()
    (out / "checks.txt").write_text(table, encoding="utf-8")
    (out / "checks.json").write_text(
        json.dumps({"passed": rep.passed, "rows": [dataclasses.asdict(r) for r in rep.rows], "measured": rep.measured}, indent=2)
        + "\n",
        encoding="utf-8",
    )
    manifest = _base_manifest(cfg, "checks")
    write_manifest(out / "manifest.json", manifest, [out / "checks.txt", out / "checks.json"])
    sys.stdout.write(table)
    return 0 if rep.passed else EXIT_ERROR


def run_initdata(cfg: RunConfig, out: Path) -> int:
    psi = build_initial_orbitals(cfg)
    path = out / "initdata.prhf"
    save_snapshot(path, SimState(psi, model=cfg.physics.model))
    manifest = _base_manifest(cfg, "initdata")
    manifest["kappa"] = psi.kappa
    write_manifest(out / "manifest.json", manifest, [path])
    print(f"wrote {path} (N={psi.N}, kappa={psi.kappa:.12g})")
    return 0


COMMANDS = {
    "evolve": run_evolve,
    "groundstate": run_groundstate,
    "critical": run_critical,
    "checks": run_checks,
    "initdata": run_initdata,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="prhf", description=__doc__)
    ap.add_argument("--version", action="version", version=f"prhf {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="TOML run configuration")
        sp.add_argument("--output", type=Path, help="output directory (overrides output.directory)")
        sp.add_argument("--seed", type=int, help="seed for randomised initial data and check corpora")
        if name == "evolve":
            sp.add_argument("--resume", type=Path, metavar="SNAPSHOT", help="continue from a snapshot")
    return ap


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        cfg = cfg.replace("initial_data", seed=args.seed).replace("checks", seed=args.seed)
    if args.output is not None:
        cfg = cfg.replace("output", directory=str(args.output))
    return validate(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        # command-line overrides (e.g. --seed) may complete the file, so validate after them
        cfg = load_config(args.config, check=False) if args.config else default_config()
        cfg = apply_overrides(cfg, args)
        out = _prepare_output(cfg.output.directory)
        if args.command == "evolve":
            return run_evolve(cfg, out, getattr(args, "resume", None))
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, SnapshotError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
