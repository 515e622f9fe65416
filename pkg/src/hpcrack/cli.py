"""Benchmark drivers and command-line entry point.

Three modes:

* ``crack``        adaptive solve of the edge-crack problem, one VTU
                   snapshot per cycle, a line-profile CSV over the
                   ligament ahead of the tip and a JSON run log;
* ``manufactured`` uniform-refinement verification against the exact
                   solution sin(pi x) sin(pi y) for degrees 1..3;
* ``sweep``        crack runs over the parameter grid (alpha varying at
                   beta = 1 and vice versa) plus a near-tip summary CSV.

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence,
4 I/O failure.  HPCRACK_OUTPUT_DIR overrides the output directory.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import adaptivity, assembly, postproc, solver
from . import hp_space as hps
from . import mesh as meshmod
from .constitutive import ModelParams
from .hp_space import BoundaryValues, HpSpace, build_space, crack_boundary_values
from .solver import LinearSolveError, NewtonConfig, NewtonError

ENV_OUTPUT_DIR = "HPCRACK_OUTPUT_DIR"

DEFAULT_SWEEP = (0.5, 1.0, 2.0, 5.0, 10.0)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mode: str = "crack"
    alpha: float = 1.0
    beta: float = 1.0
    mu: float = 1.0
    max_cycles: int = 10
    p_max: int = 7
    initial_degree: int = 2
    theta_h: float = 0.2
    theta_p: float = 0.1
    tau_smooth: float = 0.15
    tol_newton: float = 1e-10
    tol_adapt: float = 0.0
    max_level_increment: int = 8
    n_samples: int = 200
    output_dir: str = "out"
    sweep_values: tuple[float, ...] = DEFAULT_SWEEP


def validate_config(cfg: RunConfig) -> None:
    if cfg.mode not in ("crack", "manufactured", "sweep"):
        raise ConfigError(f"unknown mode {cfg.mode!r}")
    if not (0.0 < cfg.theta_h < 1.0 and 0.0 < cfg.theta_p < 1.0):
        raise ConfigError("theta_h and theta_p must lie in (0, 1)")
    if cfg.theta_h + cfg.theta_p >= 1.0:
        raise ConfigError(
            f"marking fractions must satisfy theta_h + theta_p < 1 "
            f"(got {cfg.theta_h} + {cfg.theta_p})")
    if cfg.tol_newton <= 0.0:
        raise ConfigError("tol_newton must be positive")
    if cfg.tol_adapt < 0.0:
        raise ConfigError("tol_adapt must be non-negative")
    if not (1 <= cfg.p_max <= hps.P_MAX):
        raise ConfigError(f"p_max must lie in [1, {hps.P_MAX}]")
    if not (1 <= cfg.initial_degree <= cfg.p_max):
        raise ConfigError("initial_degree must lie in [1, p_max]")
    if cfg.max_cycles < 1:
        raise ConfigError("max_cycles must be at least 1")
    if cfg.alpha <= 0.0 or cfg.mu <= 0.0 or cfg.beta < 0.0:
        raise ConfigError("require alpha > 0, mu > 0, beta >= 0")
    if cfg.n_samples < 2:
        raise ConfigError("n_samples must be at least 2")


@dataclass
class CycleRecord:
    cycle: int
    n_cells: int
    n_dofs: int
    eta_total: float
    newton_residuals: list[float]
    n_h: int
    n_p: int
    wall_time: float
    max_strain: float


@dataclass
class RunResult:
    config: RunConfig
    params: ModelParams
    records: list[CycleRecord]
    cycle_cells: list[list[tuple[int, float, float, float]]]  # (level, x0, y0, h)
    space: HpSpace
    phi: np.ndarray
    samples: list[postproc.LineSample]
    artifacts: dict[str, Path] = field(default_factory=dict)


def _out_dir(cfg: RunConfig) -> Path:
    base = os.environ.get(ENV_OUTPUT_DIR) or cfg.output_dir
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def run_crack(cfg: RunConfig, bc: BoundaryValues | None = None,
              subdir: str | None = None, quiet: bool = False) -> RunResult:
    """Adaptive loop: solve, estimate, mark, refine, transfer."""
    validate_config(cfg)
    out = _out_dir(cfg)
    if subdir is not None:
        out = out / subdir
        out.mkdir(parents=True, exist_ok=True)
    params = ModelParams(mu=cfg.mu, alpha=cfg.alpha, beta=cfg.beta)
    newton_cfg = NewtonConfig(tol_newton=cfg.tol_newton)
    if bc is None:
        bc = crack_boundary_values()

    mesh = meshmod.create_initial()
    degrees = {cid: cfg.initial_degree for cid in mesh.active_ids}
    space = build_space(mesh, degrees, bc)
    max_level = cfg.max_level_increment  # initial cells sit at level 0
    transferred: np.ndarray | None = None

    records: list[CycleRecord] = []
    cycle_cells: list[list[tuple[int, float, float, float]]] = []
    artifacts: dict[str, Path] = {}
    phi = np.zeros(space.n_dofs)
    try:
        for cycle in range(cfg.max_cycles):
            t0 = time.perf_counter()
            if cycle == 0:
                if params.beta > 0.0:
                    # linear pre-solve as the first Newton guess
                    A, b = assembly.assemble_linear_initial(space, params)
                    phi0 = space.constraints.distribute(solver.solve_linear(A, b))
                else:
                    phi0 = space.constraints.distribute(np.zeros(space.n_dofs))
            else:
                phi0 = transferred
            phi, nlog = solver.newton_solve(space, params, phi0, newton_cfg)

            eta = adaptivity.kelly_indicators(space, params, phi)
            sigma = adaptivity.smoothness_indicators(space, phi, mesh.active_ids)
            levels = {cid: mesh.cells[cid].level for cid in mesh.active_ids}
            plan = adaptivity.mark(eta, sigma, degrees, cfg.theta_h, cfg.theta_p,
                                   cfg.tau_smooth, p_max=cfg.p_max,
                                   levels=levels, max_level=max_level)

            vtu = out / f"crack_cycle_{cycle:02d}.vtu"
            postproc.write_vtu(postproc.snapshot(space, phi, eta.eta), vtu)
            artifacts[f"vtu_{cycle}"] = vtu

            rec = CycleRecord(
                cycle=cycle, n_cells=mesh.n_active, n_dofs=space.n_dofs,
                eta_total=eta.eta_total,
                newton_residuals=nlog.residual_history,
                n_h=len(plan.h_set), n_p=len(plan.p_set),
                wall_time=time.perf_counter() - t0,
                max_strain=postproc.max_strain_norm(space, params, phi))
            records.append(rec)
            cycle_cells.append([
                (c.level, c.origin[0], c.origin[1], c.size)
                for c in (mesh.cells[cid] for cid in mesh.active_ids)])
            if not quiet:
                print(f"cycle {cycle:2d}: cells={rec.n_cells:5d} dofs={rec.n_dofs:6d} "
                      f"eta={rec.eta_total:.3e} newton={nlog.n_iterations} "
                      f"plan=({rec.n_h} h, {rec.n_p} p)")

            if cycle == cfg.max_cycles - 1:
                break
            if cfg.tol_adapt > 0.0 and eta.eta_total < cfg.tol_adapt:
                break

            mesh, degrees = adaptivity.execute(mesh, degrees, plan)
            new_space = build_space(mesh, degrees, bc)
            transferred = adaptivity.transfer(space, phi, new_space)
            space = new_space
    finally:
        # partial artifacts are kept on solver aborts
        if records:
            log_path = out / "run_log.json"
            postproc.write_log(records, log_path)
            artifacts["log"] = log_path

    samples = postproc.sample_line(space, params, phi, n_points=cfg.n_samples)
    csv_path = out / "profile.csv"
    postproc.write_csv(samples, csv_path)
    artifacts["profile"] = csv_path
    return RunResult(cfg, params, records, cycle_cells, space, phi, samples,
                     artifacts)


# ---------------------------------------------------------------------------
# manufactured verification

@dataclass
class ManufacturedRow:
    p: int
    h: float
    n_dofs: int
    l2: float
    h1: float
    eta_total: float
    l2_rate: float | None = None
    h1_rate: float | None = None

    @property
    def effectivity(self) -> float:
        return self.eta_total / self.h1


def _mms_exact(xs, ys):
    v = np.sin(np.pi * xs) * np.sin(np.pi * ys)
    gx = np.pi * np.cos(np.pi * xs) * np.sin(np.pi * ys)
    gy = np.pi * np.sin(np.pi * xs) * np.cos(np.pi * ys)
    return v, gx, gy


def _assemble_mms_load(space: HpSpace, scale: float) -> np.ndarray:
    """Raw load vector for f(x, y) = scale * 2 pi^2 sin(pi x) sin(pi y)."""
    raw = np.zeros(space.n_dofs)
    for g in assembly.degree_groups(space):
        n = g.p + 2
        rule = hps.gauss_rule(n)
        N, _ = hps.shape_table(g.p, rule.points, key=("gauss", n))
        for cid, h in zip(g.cell_ids, g.h):
            cell = space.mesh.cells[cid]
            x0, y0 = cell.origin
            xs = x0 + rule.points[:, 0] * h
            ys = y0 + rule.points[:, 1] * h
            f = scale * 2.0 * np.pi ** 2 * np.sin(np.pi * xs) * np.sin(np.pi * ys)
            raw[space.dofs.cell_dofs[cid]] += (rule.weights * h * h * f) @ N
    return raw


def run_manufactured(cfg: RunConfig, quiet: bool = False) -> list[ManufacturedRow]:
    """Uniform h-refinement study of the linear limit on the unslit square.

    mu = 0.5 makes the diffusion coefficient exactly one, so the solved
    problem is -laplace(Phi) = 2 pi^2 sin(pi x) sin(pi y) with zero
    boundary values and exact solution sin(pi x) sin(pi y).
    """
    validate_config(replace(cfg, mode="manufactured", beta=0.0))
    out = _out_dir(cfg)
    params = ModelParams(mu=0.5, alpha=1.0, beta=0.0)
    bc = BoundaryValues(value=lambda x, y: 0.0, slit_value=None)
    rows: list[ManufacturedRow] = []
    for p in (1, 2, 3):
        prev: ManufacturedRow | None = None
        mesh = meshmod.create_initial()
        for k in range(4):
            if k > 0:
                mesh = meshmod.refine(mesh, list(mesh.active_ids))
            degrees = {cid: p for cid in mesh.active_ids}
            space = build_space(mesh, degrees, bc)
            A = assembly.assemble_jacobian(
                space, params, np.zeros(space.n_dofs))
            b = space.constraints.projector.T @ _assemble_mms_load(space, 1.0)
            phi = space.constraints.distribute(solver.solve_linear(A, b))
            l2, h1 = postproc.error_norms(space, phi, _mms_exact)
            eta = adaptivity.kelly_indicators(space, params, phi)
            row = ManufacturedRow(p, 1.0 / (8 * 2 ** k), space.n_dofs, l2, h1,
                                  eta.eta_total)
            if prev is not None:
                row.l2_rate = math.log2(prev.l2 / l2)
                row.h1_rate = math.log2(prev.h1 / h1)
            rows.append(row)
            prev = row
            if not quiet:
                r2 = f"{row.l2_rate:.2f}" if row.l2_rate is not None else "  - "
                r1 = f"{row.h1_rate:.2f}" if row.h1_rate is not None else "  - "
                print(f"p={p} h=1/{8 * 2 ** k:<3d} dofs={row.n_dofs:6d} "
                      f"L2={l2:.3e} rate={r2} H1={h1:.3e} rate={r1} "
                      f"eta={row.eta_total:.3e} eff={row.effectivity:.2f}")

    table = out / "manufactured.csv"
    with open(table, "w", newline="\n") as f:
        f.write("p,h,n_dofs,L2,L2_rate,H1,H1_rate,eta_total,effectivity\n")
        for r in rows:
            f.write(",".join([
                str(r.p), "%.17g" % r.h, str(r.n_dofs), "%.17g" % r.l2,
                "" if r.l2_rate is None else "%.17g" % r.l2_rate,
                "%.17g" % r.h1, "" if r.h1_rate is None else "%.17g" % r.h1_rate,
                "%.17g" % r.eta_total, "%.17g" % r.effectivity]) + "\n")
    return rows


# ---------------------------------------------------------------------------
# parameter sweep

def nearest_tip_sample(samples: list[postproc.LineSample]) -> postproc.LineSample:
    """Sample nearest the crack tip, excluding the tip itself.

    The profile endpoint sits exactly at the singular point, where the
    discrete trace degenerates to the slit-face values; the nearest point
    strictly ahead of the tip carries the meaningful near-field data.
    """
    ahead = [s for s in samples if 0.5 - s.x > 1e-9]
    return max(ahead, key=lambda s: s.x) if ahead else samples[-1]


@dataclass
class SweepEntry:
    alpha: float
    beta: float
    axis: str                 # which parameter this run varies
    result: RunResult | None
    error: str | None = None


def run_sweep(cfg: RunConfig, quiet: bool = False) -> list[SweepEntry]:
    """Crack runs over (alpha in sweep, beta = 1) and (beta in sweep,
    alpha = 1) at mu = 1; failures are recorded and the sweep continues."""
    validate_config(replace(cfg, mode="crack"))
    out = _out_dir(cfg)
    points = ([(a, 1.0, "alpha") for a in cfg.sweep_values]
              + [(1.0, b, "beta") for b in cfg.sweep_values])
    entries: list[SweepEntry] = []
    for alpha, beta, axis in points:
        sub = f"sweep_{axis}_{alpha:g}_{beta:g}"
        run_cfg = replace(cfg, mode="crack", alpha=alpha, beta=beta, mu=1.0)
        if not quiet:
            print(f"--- sweep point {axis}: alpha={alpha:g} beta={beta:g}")
        try:
            res = run_crack(run_cfg, subdir=sub, quiet=quiet)
            entries.append(SweepEntry(alpha, beta, axis, res))
        except (NewtonError, LinearSolveError) as err:
            entries.append(SweepEntry(alpha, beta, axis, None, error=str(err)))
            if not quiet:
                print(f"    failed: {err}")

    summary = out / "sweep_summary.csv"
    with open(summary, "w", newline="\n") as f:
        f.write("alpha,beta,axis,x,T23,eps23,W\n")
        for e in sorted(entries, key=lambda e: (e.alpha, e.beta, e.axis)):
            if e.result is None:
                f.write(f"{e.alpha:g},{e.beta:g},{e.axis},,,,\n")
                continue
            tip = nearest_tip_sample(e.result.samples)
            f.write(",".join([
                "%.17g" % e.alpha, "%.17g" % e.beta, e.axis, "%.17g" % tip.x,
                "%.17g" % tip.t23, "%.17g" % tip.eps23, "%.17g" % tip.energy])
                + "\n")
    return entries


# ---------------------------------------------------------------------------
# command line

def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hpcrack",
        description="hp-adaptive solver for the strain-limiting edge-crack "
                    "benchmark on the unit square")
    ap.add_argument("--mode", choices=("crack", "manufactured", "sweep"))
    ap.add_argument("--alpha", type=float)
    ap.add_argument("--beta", type=float)
    ap.add_argument("--mu", type=float)
    ap.add_argument("--max-cycles", type=int, dest="max_cycles")
    ap.add_argument("--p-max", type=int, dest="p_max")
    ap.add_argument("--initial-degree", type=int, dest="initial_degree")
    ap.add_argument("--theta-h", type=float, dest="theta_h")
    ap.add_argument("--theta-p", type=float, dest="theta_p")
    ap.add_argument("--tau-smooth", type=float, dest="tau_smooth")
    ap.add_argument("--tol-newton", type=float, dest="tol_newton")
    ap.add_argument("--tol-adapt", type=float, dest="tol_adapt")
    ap.add_argument("--n-samples", type=int, dest="n_samples")
    ap.add_argument("--output-dir", dest="output_dir",
                    help=f"output directory (overridden by ${ENV_OUTPUT_DIR})")
    ap.add_argument("--sweep-values", dest="sweep_values",
                    help="comma-separated parameter values for sweep mode")
    ap.add_argument("--config", help="key=value config file; flags win")
    return ap


def _parse_value(key: str, raw: str):
    if key == "mode" or key == "output_dir":
        return raw
    if key == "sweep_values":
        return tuple(float(v) for v in raw.split(","))
    if key in ("max_cycles", "p_max", "initial_degree", "n_samples",
               "max_level_increment"):
        return int(raw)
    return float(raw)


def _load_config_file(path: str) -> dict:
    values = {}
    with open(path) as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"bad config line: {line!r}")
            key, raw = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in RunConfig.__dataclass_fields__:
                raise ConfigError(f"unknown config key: {key!r}")
            values[key] = _parse_value(key, raw)
    return values


def make_config(argv: list[str] | None = None) -> RunConfig:
    args = _build_parser().parse_args(argv)
    values: dict = {}
    if args.config:
        values.update(_load_config_file(args.config))
    for key in RunConfig.__dataclass_fields__:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = (tuple(float(v) for v in flag.split(","))
                           if key == "sweep_values" and isinstance(flag, str)
                           else flag)
    cfg = RunConfig(**values)
    validate_config(cfg)
    return cfg


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = make_config(argv)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    try:
        if cfg.mode == "crack":
            run_crack(cfg)
        elif cfg.mode == "manufactured":
            run_manufactured(cfg)
        else:
            run_sweep(cfg)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except (NewtonError, LinearSolveError) as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"i/o failure: {err}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
