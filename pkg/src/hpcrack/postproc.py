"""Derived fields, the crack-tip line sampler and file emitters."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import mesh as meshmod
from .constitutive import ModelParams, StressStrain, psi1, stress_strain
from .hp_space import HpSpace, evaluate, evaluate_many, gauss_rule
from .assembly import cell_gradients, degree_groups


@dataclass(frozen=True)
class LineSample:
    """Stress, strain and energy density at one point of the reference
    line, averaged over the two sides of y = 0.5; the one-sided values
    are kept for transparency."""

    x: float
    t13: float
    t23: float
    eps13: float
    eps23: float
    energy: float
    lo: StressStrain
    hi: StressStrain


def sample_line(space: HpSpace, params: ModelParams, phi: np.ndarray,
                x_range: tuple[float, float] = (0.3, 0.5), n_points: int = 200,
                y: float = 0.5, offset: float = 1e-8) -> list[LineSample]:
    """Sample the mechanical fields along a horizontal line.

    The gradient is double-valued on the mesh line, so both one-sided
    limits (y -/+ offset) are evaluated and averaged component-wise.
    """
    if n_points < 2:
        raise ValueError("need at least 2 sample points")
    xs = np.linspace(x_range[0], x_range[1], n_points)
    out = []
    for x in xs:
        lo = _probe(space, params, phi, float(x), y - offset)
        hi = _probe(space, params, phi, float(x), y + offset)
        out.append(LineSample(
            x=float(x),
            t13=0.5 * (lo.t13 + hi.t13),
            t23=0.5 * (lo.t23 + hi.t23),
            eps13=0.5 * (lo.eps13 + hi.eps13),
            eps23=0.5 * (lo.eps23 + hi.eps23),
            energy=0.5 * (lo.energy + hi.energy),
            lo=lo, hi=hi))
    return out


def _probe(space: HpSpace, params: ModelParams, phi: np.ndarray,
           x: float, y: float) -> StressStrain:
    cid, ref = meshmod.locate(space.mesh, (x, y))
    _, grad = evaluate(space, phi, cid, ref)
    return stress_strain(grad, params)


def error_norms(space: HpSpace, phi: np.ndarray, exact) -> tuple[float, float]:
    """Global L2 and H1-seminorm errors against a manufactured solution.

    ``exact(xs, ys)`` must return (values, grad_x, grad_y) arrays.  Uses
    p+3 quadrature points per axis.
    """
    l2 = 0.0
    h1 = 0.0
    for cid in space.mesh.active_ids:
        p = space.degrees[cid]
        n = p + 3
        rule = gauss_rule(n)
        vals, grads = evaluate_many(space, phi, cid, rule.points, key=("gauss", n))
        cell = space.mesh.cells[cid]
        h = cell.size
        x0, y0 = cell.origin
        xs = x0 + rule.points[:, 0] * h
        ys = y0 + rule.points[:, 1] * h
        ev, egx, egy = exact(xs, ys)
        w = rule.weights * h * h
        l2 += float(w @ (vals - ev) ** 2)
        h1 += float(w @ ((grads[:, 0] - egx) ** 2 + (grads[:, 1] - egy) ** 2))
    return float(np.sqrt(l2)), float(np.sqrt(h1))


def max_strain_norm(space: HpSpace, params: ModelParams, phi: np.ndarray) -> float:
    """Largest strain norm over all cell quadrature points."""
    worst = 0.0
    for g in degree_groups(space):
        grads = cell_gradients(space, phi, g).reshape(-1, 2)
        r = np.hypot(grads[:, 0], grads[:, 1])
        worst = max(worst, float(np.max(r * psi1(r, params), initial=0.0)))
    return worst


# ---------------------------------------------------------------------------
# file emitters

_CSV_FIELDS = ("T13", "T23", "eps13", "eps23", "W")
CSV_HEADER = ("x," + ",".join(_CSV_FIELDS)
              + "," + ",".join("side_lo_" + f for f in _CSV_FIELDS)
              + "," + ",".join("side_hi_" + f for f in _CSV_FIELDS))


def _fmt(v: float) -> str:
    return "%.17g" % v


def write_csv(samples: list[LineSample], path) -> None:
    """Line-profile CSV with 17 significant digits (round-trip exact)."""
    with open(path, "w", newline="\n") as f:
        f.write(CSV_HEADER + "\n")
        for s in samples:
            row = [s.x, s.t13, s.t23, s.eps13, s.eps23, s.energy,
                   s.lo.t13, s.lo.t23, s.lo.eps13, s.lo.eps23, s.lo.energy,
                   s.hi.t13, s.hi.t23, s.hi.eps13, s.hi.eps23, s.hi.energy]
            f.write(",".join(_fmt(v) for v in row) + "\n")


@dataclass
class FieldSnapshot:
    points: np.ndarray        # (n_points, 2) active mesh vertices
    values: np.ndarray        # potential at the vertices
    quads: np.ndarray         # (n_cells, 4) corner indices, counter-clockwise
    degree: np.ndarray
    level: np.ndarray
    eta: np.ndarray


def snapshot(space: HpSpace, phi: np.ndarray,
             eta: dict[int, float] | None = None) -> FieldSnapshot:
    """Bilinear corner view of the current space and field."""
    mesh = space.mesh
    index: dict[tuple, int] = {}
    points: list[tuple[float, float]] = []
    values: list[float] = []
    quads = np.empty((mesh.n_active, 4), dtype=np.int64)
    degree = np.empty(mesh.n_active, dtype=np.int64)
    level = np.empty(mesh.n_active, dtype=np.int64)
    eta_arr = np.zeros(mesh.n_active)
    coeffs = np.asarray(phi, dtype=float)
    for k, cid in enumerate(mesh.active_ids):
        cell = mesh.cells[cid]
        h = cell.size
        x0, y0 = cell.origin
        corner_ids = []
        for a, b in ((0, 0), (1, 0), (1, 1), (0, 1)):
            vk = meshmod.vertex_key(cell, (a, b))
            idx = index.get(vk)
            if idx is None:
                idx = len(points)
                index[vk] = idx
                points.append((x0 + a * h, y0 + b * h))
                values.append(float(coeffs[space.dofs.vertex_dof[vk]]))
            corner_ids.append(idx)
        quads[k] = corner_ids
        degree[k] = space.degrees[cid]
        level[k] = cell.level
        if eta is not None:
            eta_arr[k] = eta.get(cid, 0.0)
    return FieldSnapshot(np.asarray(points), np.asarray(values), quads,
                         degree, level, eta_arr)


def write_vtu(snap: FieldSnapshot, path) -> None:
    """ASCII XML unstructured-grid file; cells are bilinear quads."""
    n_pts = snap.points.shape[0]
    n_cells = snap.quads.shape[0]
    lines = []
    lines.append('<?xml version="1.0"?>')
    lines.append('<VTKFile type="UnstructuredGrid" version="0.1" '
                 'byte_order="LittleEndian">')
    lines.append("  <UnstructuredGrid>")
    lines.append(f'    <Piece NumberOfPoints="{n_pts}" NumberOfCells="{n_cells}">')
    lines.append("      <Points>")
    lines.append('        <DataArray type="Float64" NumberOfComponents="3" '
                 'format="ascii">')
    for x, y in snap.points:
        lines.append(f"          {_fmt(x)} {_fmt(y)} 0")
    lines.append("        </DataArray>")
    lines.append("      </Points>")
    lines.append("      <Cells>")
    lines.append('        <DataArray type="Int32" Name="connectivity" format="ascii">')
    for quad in snap.quads:
        lines.append("          " + " ".join(str(int(v)) for v in quad))
    lines.append("        </DataArray>")
    lines.append('        <DataArray type="Int32" Name="offsets" format="ascii">')
    lines.append("          " + " ".join(str(4 * (k + 1)) for k in range(n_cells)))
    lines.append("        </DataArray>")
    lines.append('        <DataArray type="UInt8" Name="types" format="ascii">')
    lines.append("          " + " ".join("9" for _ in range(n_cells)))
    lines.append("        </DataArray>")
    lines.append("      </Cells>")
    lines.append('      <PointData Scalars="phi">')
    lines.append('        <DataArray type="Float64" Name="phi" format="ascii">')
    for v in snap.values:
        lines.append(f"          {_fmt(v)}")
    lines.append("        </DataArray>")
    lines.append("      </PointData>")
    lines.append("      <CellData>")
    for name, arr in (("degree", snap.degree), ("level", snap.level)):
        lines.append(f'        <DataArray type="Int32" Name="{name}" format="ascii">')
        lines.append("          " + " ".join(str(int(v)) for v in arr))
        lines.append("        </DataArray>")
    lines.append('        <DataArray type="Float64" Name="eta" format="ascii">')
    lines.append("          " + " ".join(_fmt(v) for v in snap.eta))
    lines.append("        </DataArray>")
    lines.append("      </CellData>")
    lines.append("    </Piece>")
    lines.append("  </UnstructuredGrid>")
    lines.append("</VTKFile>")
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def write_log(records, path) -> None:
    """Per-cycle JSON run log."""
    payload = [
        {
            "cycle": r.cycle,
            "n_cells": r.n_cells,
            "n_dofs": r.n_dofs,
            "eta_total": r.eta_total,
            "newton": list(r.newton_residuals),
            "plan": {"n_h": r.n_h, "n_p": r.n_p},
        }
        for r in records
    ]
    with open(path, "w", newline="\n") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
