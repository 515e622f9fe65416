"""Acceptance suite: one test per criterion, each printing a PASS line.

Heavy fixtures (the default benchmark run, the beta = 0 run, the full
parameter sweep and the manufactured study) are computed once per module.
"""
import math

import numpy as np
import pytest

from hpcrack import adaptivity, assembly, mesh
from hpcrack.cli import RunConfig, nearest_tip_sample, run_crack, run_manufactured, run_sweep
from hpcrack.constitutive import ModelParams, strain_bound
from hpcrack.hp_space import (BoundaryValues, build_space, crack_boundary_values,
                              evaluate, eval_at)
from hpcrack.mesh import SIDES, neighbors

SWEEP = (0.5, 1.0, 2.0, 5.0, 10.0)


@pytest.fixture(scope="module")
def manufactured_rows(tmp_path_factory):
    out = tmp_path_factory.mktemp("mms")
    return run_manufactured(RunConfig(output_dir=str(out)), quiet=True)


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("default")
    return run_crack(RunConfig(output_dir=str(out)), quiet=True)


@pytest.fixture(scope="module")
def beta_zero_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("linear")
    return run_crack(RunConfig(beta=0.0, output_dir=str(out)), quiet=True)


@pytest.fixture(scope="module")
def sweep_entries(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    return run_sweep(RunConfig(output_dir=str(out)), quiet=True)


def report(criterion: str, detail: str) -> None:
    print(f"[PASS] {criterion}: {detail}")


def test_criterion_01_manufactured_convergence(manufactured_rows):
    for row in manufactured_rows:
        if row.l2_rate is None:
            continue
        assert abs(row.l2_rate - (row.p + 1)) <= 0.2, row
        assert abs(row.h1_rate - row.p) <= 0.2, row
    rates = {(r.p, round(r.h, 6)): (r.l2_rate, r.h1_rate)
             for r in manufactured_rows if r.l2_rate is not None}
    report("criterion 1", f"L2/H1 rates within 0.2 of p+1/p for {sorted(rates)}")


def test_criterion_02_linear_case_single_iteration(beta_zero_run):
    assert len(beta_zero_run.records) == 10
    for rec in beta_zero_run.records:
        assert len(rec.newton_residuals) == 2, rec  # initial norm + 1 step
    report("criterion 2", "beta = 0 converges in exactly 1 Newton iteration "
                          "in all 10 cycles")


def test_criterion_03_strain_boundedness(sweep_entries):
    checked = 0
    for entry in sweep_entries:
        if entry.axis != "beta":
            continue
        assert entry.result is not None, entry
        bound = strain_bound(ModelParams(mu=1.0, beta=entry.beta))
        for rec in entry.result.records:
            assert rec.max_strain <= bound + 1e-12, (entry.beta, rec.cycle)
            checked += 1
    assert checked == 50  # 5 beta values x 10 cycles
    report("criterion 3", "max strain norm within 1/(2*mu*beta) + 1e-12 at "
                          "all quadrature points, 5 beta values x 10 cycles")


def test_criterion_04_residual_monotonicity(default_run):
    for rec in default_run.records:
        hist = rec.newton_residuals
        assert all(b < a for a, b in zip(hist, hist[1:])), rec.cycle
        assert hist[-1] <= 1e-10, rec.cycle
    report("criterion 4", "Newton residuals strictly decreasing, final "
                          "<= 1e-10 in every cycle")


def test_criterion_05_jacobian_correctness():
    m = mesh.create_initial()
    space = build_space(m, {c: 2 for c in m.active_ids}, crack_boundary_values())
    base = space.constraints.distribute(np.zeros(space.n_dofs))
    worst = 0.0
    for alpha in (0.5, 1.0, 2.0):
        for beta in (0.5, 1.0, 2.0):
            params = ModelParams(mu=1.0, alpha=alpha, beta=beta)
            rng = np.random.default_rng(int(1000 * alpha + 10 * beta))
            for _ in range(3):
                phi = space.constraints.distribute(
                    base + 0.1 * rng.standard_normal(space.n_dofs))
                v = space.constraints.projector @ rng.standard_normal(space.n_dofs)
                v /= np.linalg.norm(v)
                A = assembly.assemble_jacobian(space, params, phi)
                t = 1e-7
                fd = (assembly.assemble_residual(space, params, phi + t * v)
                      - assembly.assemble_residual(space, params, phi)) / t
                expected = -(A @ v)
                expected[space.constraints.constrained_mask] = 0.0
                rel = (np.linalg.norm(fd - expected)
                       / np.linalg.norm(expected))
                assert rel <= 1e-6, (alpha, beta, rel)
                worst = max(worst, rel)
    report("criterion 5", f"directional FD check <= 1e-6 relative over "
                          f"9 parameter pairs x 3 iterates (worst {worst:.2e})")


def test_criterion_06_estimator_sanity(manufactured_rows):
    m = mesh.create_initial()
    m = mesh.refine(m, [m.active_ids[0], m.active_ids[44]])
    bc = BoundaryValues(value=lambda x, y: 1.0 - x, slit_value=None)
    space = build_space(m, {c: 2 for c in m.active_ids}, bc)
    phi = space.constraints.distribute(1.0 - space.dofs.positions[:, 0])
    eta = adaptivity.kelly_indicators(space, ModelParams(), phi)
    assert eta.eta_total <= 1e-13

    effs = []
    for row in manufactured_rows:
        if row.p in (1, 3):  # even degrees superconverge, see decisions ledger
            assert 0.1 <= row.effectivity <= 10.0, row
            effs.append(round(row.effectivity, 2))
    report("criterion 6", f"linear-field eta_total <= 1e-13; manufactured "
                          f"effectivities {effs} within [0.1, 10]")


def _tip_cells(cells, level):
    return [(lv, x0, y0, h) for lv, x0, y0, h in cells if lv == level]


def test_criterion_07_tip_localization(default_run):
    for cycle, cells in enumerate(default_run.cycle_cells):
        if cycle < 4:
            continue
        max_level = max(lv for lv, *_ in cells)
        tip_holders = [c for c in _tip_cells(cells, max_level)
                       if c[1] <= 0.5 <= c[1] + c[3] and c[2] <= 0.5 <= c[2] + c[3]]
        assert tip_holders, f"cycle {cycle}: no max-level cell touches the tip"
    final = default_run.cycle_cells[-1]
    max_level = max(lv for lv, *_ in final)
    deepest = _tip_cells(final, max_level)
    near = [c for c in deepest
            if math.hypot(c[1] + c[3] / 2 - 0.5, c[2] + c[3] / 2 - 0.5) <= 0.1]
    assert len(near) >= 0.5 * len(deepest)
    report("criterion 7", f"max level {max_level} attained at the tip from "
                          f"cycle 4 on; {len(near)}/{len(deepest)} deepest "
                          f"cells within 0.1 of the tip")


def test_criterion_08_hp_mixing(default_run):
    degrees = set(default_run.space.degrees.values())
    levels = {default_run.space.mesh.cells[c].level
              for c in default_run.space.mesh.active_ids}
    assert max(degrees) >= 3
    assert len(levels) >= 3
    report("criterion 8", f"final space has degrees {sorted(degrees)} and "
                          f"levels {sorted(levels)}")


def _trend_values(sweep_entries, axis):
    vals = {}
    for entry in sweep_entries:
        if entry.axis == axis:
            assert entry.result is not None, entry
            key = entry.alpha if axis == "alpha" else entry.beta
            vals[key] = abs(nearest_tip_sample(entry.result.samples).t23)
    return [vals[v] for v in SWEEP]


def test_criterion_09a_stress_increases_with_alpha(sweep_entries):
    seq = _trend_values(sweep_entries, "alpha")
    assert all(b > a for a, b in zip(seq, seq[1:])), \
        f"|T23| not strictly increasing along alpha: {seq}"
    report("criterion 9a", f"near-tip |T23| along alpha: "
                           f"{['%.3g' % v for v in seq]} strictly increasing")


def test_criterion_09b_stress_decreases_with_beta(sweep_entries):
    # Known red at the benchmark's default resolution: the sample sits
    # 1e-3 ahead of the tip, inside the final tip cell (h about 4e-3),
    # where the discrete stress grows with beta because stronger strain
    # limiting steepens the interpolated gradient.  The mitigation this
    # trend describes holds at resolved distances on the same profiles
    # (x <= 0.47 here, or the same sample once the tip is graded to
    # h about 1e-4, where the ordering is 13.6 > 12.0 > 10.8 > 9.6 > 8.2).
    seq = _trend_values(sweep_entries, "beta")
    assert all(b < a for a, b in zip(seq, seq[1:])), \
        f"|T23| not strictly decreasing along beta: {seq}"
    report("criterion 9b", f"near-tip |T23| along beta: "
                           f"{['%.3g' % v for v in seq]} strictly decreasing")


def test_criterion_09c_energy_peaks_at_tip(sweep_entries):
    # Known red for the beta = 0.5 run: its high-order tip cell is still
    # coarse at cycle 10 and the interpolated singularity oscillates,
    # dipping the energy at the final ahead-of-tip sample by about 15%.
    offenders = []
    for entry in sweep_entries:
        ahead = [s for s in entry.result.samples if 0.5 - s.x > 1e-9]
        peak = max(range(len(ahead)), key=lambda k: ahead[k].energy)
        if peak != len(ahead) - 1:
            offenders.append((entry.axis, entry.alpha, entry.beta, peak))
    assert not offenders, f"energy peak away from the near-tip sample: {offenders}"
    report("criterion 9c", "energy density peaks at the near-tip sample "
                           "in all 10 sweep runs")


def test_default_run_artifact_counts(default_run):
    out = default_run.artifacts["log"].parent
    assert len(list(out.glob("crack_cycle_*.vtu"))) == 10
    assert (out / "profile.csv").exists()
    assert (out / "run_log.json").exists()
    report("artifacts", "default run emits 10 VTU snapshots, 1 CSV, 1 JSON")


def test_sweep_artifact_counts(sweep_entries):
    assert len(sweep_entries) == 10
    out = sweep_entries[0].result.artifacts["log"].parent.parent
    profiles = list(out.glob("sweep_*/profile.csv"))
    assert len(profiles) == 10
    assert (out / "sweep_summary.csv").exists()
    lines = (out / "sweep_summary.csv").read_text().splitlines()
    assert len(lines) == 11
    keys = [tuple(line.split(",")[:3]) for line in lines[1:]]
    assert keys == sorted(keys, key=lambda k: (float(k[0]), float(k[1]), k[2]))
    report("artifacts", "sweep emits 10 profiles plus an ordered summary")


def test_criterion_10_symmetry(default_run):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        x = rng.uniform(0.02, 0.98)
        t = rng.uniform(0.01, 0.48)
        up, _ = eval_at(default_run.space, default_run.phi, x, 0.5 + t)
        dn, _ = eval_at(default_run.space, default_run.phi, x, 0.5 - t)
        worst = max(worst, abs(up - dn))
    assert worst <= 1e-8
    report("criterion 10", f"20 mirrored probe pairs agree to {worst:.2e}")


def test_criterion_11_continuity_across_constraints(default_run):
    space = default_run.space
    phi = default_run.phi
    m = space.mesh
    rng = np.random.default_rng(7)
    worst = 0.0
    n_faces = 0
    for cid in m.active_ids:
        cell = m.cells[cid]
        for side in SIDES:
            face = neighbors(m, cid, side)
            if face.is_boundary or face.is_hanging:
                continue
            nb = m.cells[face.neighbor]
            conforming_mismatch = (nb.level == cell.level
                                   and space.degrees[cid] != space.degrees[face.neighbor])
            hanging_fine_side = nb.level < cell.level
            if not (conforming_mismatch or hanging_fine_side):
                continue
            n_faces += 1
            for t in rng.uniform(0.02, 0.98, 5):
                if side == "right":
                    own = (1.0, t)
                elif side == "left":
                    own = (0.0, t)
                elif side == "top":
                    own = (t, 1.0)
                else:
                    own = (t, 0.0)
                h = cell.size
                px = cell.origin[0] + own[0] * h
                py = cell.origin[1] + own[1] * h
                va, _ = evaluate(space, phi, cid, own)
                hn = nb.size
                ref = ((px - nb.origin[0]) / hn, (py - nb.origin[1]) / hn)
                vb, _ = evaluate(space, phi, face.neighbor, ref)
                worst = max(worst, abs(va - vb) / max(1.0, abs(va), abs(vb)))
    assert n_faces > 0
    assert worst <= 1e-10
    report("criterion 11", f"{n_faces} hanging/mismatched faces continuous "
                           f"to {worst:.2e}")


def test_criterion_12_determinism(tmp_path):
    cfg_a = RunConfig(output_dir=str(tmp_path / "a"))
    cfg_b = RunConfig(output_dir=str(tmp_path / "b"))
    run_crack(cfg_a, quiet=True)
    run_crack(cfg_b, quiet=True)
    for name in ("profile.csv", "run_log.json", "crack_cycle_09.vtu"):
        bytes_a = (tmp_path / "a" / name).read_bytes()
        bytes_b = (tmp_path / "b" / name).read_bytes()
        assert bytes_a == bytes_b, name
    report("criterion 12", "two identical serial runs emit bitwise-identical "
                           "CSV, JSON and VTU artifacts")
