import json
import math

import numpy as np
import pytest

from hpcrack import assembly, mesh, postproc, solver
from hpcrack.cli import CycleRecord
from hpcrack.constitutive import ModelParams, psi1, strain_bound
from hpcrack.hp_space import BoundaryValues, build_space, crack_boundary_values
from hpcrack.postproc import (CSV_HEADER, error_norms, max_strain_norm,
                              sample_line, snapshot, write_csv, write_log,
                              write_vtu)


def solved_crack(p=2, params=None):
    params = params or ModelParams(mu=1.0, alpha=1.0, beta=1.0)
    m = mesh.create_initial()
    space = build_space(m, {c: p for c in m.active_ids}, crack_boundary_values())
    A, b = assembly.assemble_linear_initial(space, params)
    phi0 = space.constraints.distribute(solver.solve_linear(A, b))
    phi, _ = solver.newton_solve(space, params, phi0)
    return space, params, phi


def test_error_norms_reproduction():
    m = mesh.create_initial()

    def f(x, y):
        return 0.5 + x - 2 * y + x * y

    space = build_space(m, {c: 2 for c in m.active_ids},
                        BoundaryValues(value=f, slit_value=None))
    phi = space.constraints.distribute(
        np.array([f(x, y) for x, y in space.dofs.positions]))

    def exact(xs, ys):
        return f(xs, ys), 1.0 + ys, -2.0 + xs

    l2, h1 = error_norms(space, phi, exact)
    assert l2 <= 1e-11 and h1 <= 1e-11


def test_error_norms_linear_exact():
    m = mesh.create_initial()
    space = build_space(m, {c: 1 for c in m.active_ids}, None)
    phi = 1.0 - space.dofs.positions[:, 0]

    def exact(xs, ys):
        return 1.0 - xs, np.full_like(xs, -1.0), np.zeros_like(xs)

    l2, h1 = error_norms(space, phi, exact)
    assert l2 <= 1e-13 and h1 <= 1e-12


def test_sample_line_linear_law_for_beta_zero():
    space, params, phi = solved_crack(params=ModelParams(mu=2.0, alpha=1.0, beta=0.0))
    for s in sample_line(space, params, phi, n_points=20):
        assert s.eps23 == pytest.approx(s.t23 / (2.0 * params.mu), abs=1e-14)
        assert s.eps13 == pytest.approx(s.t13 / (2.0 * params.mu), abs=1e-14)


def test_sample_line_ligament_shear_symmetry():
    space, params, phi = solved_crack()
    samples = sample_line(space, params, phi)
    t23_scale = max(abs(s.t23) for s in samples)
    assert max(abs(s.t13) for s in samples) <= 1e-6 * t23_scale


def test_sample_line_strain_bound():
    space, params, phi = solved_crack(params=ModelParams(mu=1.0, alpha=1.0, beta=2.0))
    bound = strain_bound(params)
    for s in samples_with_sides(space, params, phi):
        assert math.hypot(s.eps13, s.eps23) <= bound + 1e-12
        assert math.hypot(s.lo.eps13, s.lo.eps23) <= bound + 1e-12
        assert math.hypot(s.hi.eps13, s.hi.eps23) <= bound + 1e-12


def samples_with_sides(space, params, phi):
    return sample_line(space, params, phi, n_points=50)


def test_sample_line_energy_identity():
    space, params, phi = solved_crack()
    for s in sample_line(space, params, phi, n_points=25):
        for side in (s.lo, s.hi):
            r = math.hypot(side.t13, side.t23)
            assert side.energy == pytest.approx(2.0 * psi1(r, params) * r * r,
                                                rel=1e-12, abs=1e-14)
            assert side.energy >= 0.0


def test_max_strain_norm_below_bound():
    space, params, phi = solved_crack(params=ModelParams(mu=1.0, alpha=2.0, beta=5.0))
    assert max_strain_norm(space, params, phi) <= strain_bound(params) + 1e-12


def test_csv_header_only_for_empty_samples(tmp_path):
    path = tmp_path / "empty.csv"
    write_csv([], path)
    assert path.read_text() == CSV_HEADER + "\n"


def test_csv_round_trip(tmp_path):
    space, params, phi = solved_crack()
    samples = sample_line(space, params, phi, n_points=7)
    path = tmp_path / "profile.csv"
    write_csv(samples, path)
    lines = path.read_text().splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 8
    for line, s in zip(lines[1:], samples):
        vals = [float(tok) for tok in line.split(",")]
        assert vals[0] == s.x
        assert vals[1] == s.t13
        assert vals[2] == s.t23
        assert vals[5] == s.energy
        assert vals[6] == s.lo.t13
        assert vals[15] == s.hi.energy


def test_vtu_counts_initial_mesh(tmp_path):
    m = mesh.create_initial()
    space = build_space(m, {c: 1 for c in m.active_ids}, None)
    snap = snapshot(space, np.zeros(space.n_dofs))
    assert snap.points.shape == (81, 2)
    assert snap.quads.shape == (64, 4)
    path = tmp_path / "mesh.vtu"
    write_vtu(snap, path)
    text = path.read_text()
    assert 'NumberOfPoints="81"' in text
    assert 'NumberOfCells="64"' in text
    # points, connectivity, offsets, types, phi, degree, level, eta
    assert text.count("</DataArray>") == 8


def test_vtu_vertex_values_match_field(tmp_path):
    space, params, phi = solved_crack(p=3)
    snap = snapshot(space, phi)
    k = 40
    x, y = snap.points[k]
    from hpcrack.hp_space import eval_at
    v, _ = eval_at(space, phi, float(x), float(y))
    assert snap.values[k] == pytest.approx(v, abs=1e-11)


def test_log_record_count(tmp_path):
    recs = [CycleRecord(cycle=k, n_cells=64, n_dofs=81, eta_total=0.1,
                        newton_residuals=[1.0, 0.1], n_h=1, n_p=0,
                        wall_time=0.5, max_strain=0.2) for k in range(2)]
    path = tmp_path / "log.json"
    write_log(recs, path)
    payload = json.loads(path.read_text())
    assert len(payload) == 2
    assert payload[0] == {"cycle": 0, "n_cells": 64, "n_dofs": 81,
                          "eta_total": 0.1, "newton": [1.0, 0.1],
                          "plan": {"n_h": 1, "n_p": 0}}
