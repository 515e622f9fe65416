"""Error estimation, hp marking and refinement execution.

The cell indicator integrates the jump of the nonlinear flux
q = psi1(||grad Phi||) grad Phi across interior faces:

    eta_K^2 = sum_F  h_F / (2 p_F)  int_F [[q . n]]^2 ds

with p_F the larger adjacent degree and h_F the face length.  Hanging
faces are integrated per fine subface; Dirichlet boundary faces and
slit-coincident faces contribute nothing (the exact flux genuinely jumps
across the slit).

The smoothness ratio sigma_K measures the fraction of a cell solution's
non-constant content carried by its top-degree modes, computed from the
orthonormal shifted-Legendre expansion of the local polynomial.  Flagged
cells with sigma above the threshold are enriched in p, the rest are
subdivided.

Marking takes the smallest prefix of cells, ordered by decreasing
indicator, whose cumulative eta^2 reaches (theta_h + theta_p)^2 of the
total.  Cells with indicators equal up to relative noise move as one
group, which keeps mirror-symmetric inputs producing mirror-symmetric
plans.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg

from . import mesh as meshmod
from .constitutive import ModelParams, psi1
from .hp_space import (HpSpace, P_MAX, evaluate_many, gauss_points_1d, gauss_rule)
from .mesh import OPPOSITE, QuadMesh, SIDES, face_on_slit


@dataclass
class ErrorIndicators:
    eta: dict[int, float]
    eta_total: float


@dataclass
class SmoothnessIndicators:
    sigma: dict[int, float]


@dataclass
class RefinementPlan:
    h_set: set[int]
    p_set: set[int]


def _face_ref_points(side: str, t: np.ndarray, half: int | None = None) -> np.ndarray:
    """Reference points of a face trace; ``half`` selects a subface."""
    if half is not None:
        t = (half + t) / 2.0
    pts = np.empty((t.size, 2))
    if side == "left":
        pts[:, 0], pts[:, 1] = 0.0, t
    elif side == "right":
        pts[:, 0], pts[:, 1] = 1.0, t
    elif side == "bottom":
        pts[:, 0], pts[:, 1] = t, 0.0
    else:
        pts[:, 0], pts[:, 1] = t, 1.0
    return pts


_NORMALS = {"left": (-1.0, 0.0), "right": (1.0, 0.0),
            "bottom": (0.0, -1.0), "top": (0.0, 1.0)}


def kelly_indicators(space: HpSpace, params: ModelParams,
                     phi: np.ndarray) -> ErrorIndicators:
    """Flux-jump indicators for every active cell."""
    mesh = space.mesh
    slit_active = space.bc is not None and space.bc.slit_value is not None
    eta2 = {cid: 0.0 for cid in mesh.active_ids}

    for cid in mesh.active_ids:
        cell = mesh.cells[cid]
        for side in SIDES:
            face = meshmod.neighbors(mesh, cid, side)
            if face.is_boundary or face.is_hanging:
                continue  # Dirichlet faces are silent; hanging handled fine-side
            nb = mesh.cells[face.neighbor]
            if nb.level == cell.level and nb.sort_key < cell.sort_key:
                continue  # conforming face visited from the other side
            if slit_active and face_on_slit(cell, side):
                continue
            p_own = space.degrees[cid]
            p_nb = space.degrees[face.neighbor]
            p_face = max(p_own, p_nb)
            n1d = p_face + 2
            t, w = gauss_points_1d(n1d)

            own_pts = _face_ref_points(side, t)
            _, g_own = evaluate_many(space, phi, cid, own_pts,
                                     key=("face", side, n1d))
            opp = OPPOSITE[side]
            if nb.level == cell.level:
                nb_pts = _face_ref_points(opp, t)
                nb_key = ("face", opp, n1d)
            else:
                # this cell is the fine side of a hanging face
                if side in ("left", "right"):
                    half = cell.j - 2 * nb.j
                else:
                    half = cell.i - 2 * nb.i
                nb_pts = _face_ref_points(opp, t, half=half)
                nb_key = ("face", opp, n1d, half)
            _, g_nb = evaluate_many(space, phi, face.neighbor, nb_pts, key=nb_key)

            q_own = psi1(np.hypot(g_own[:, 0], g_own[:, 1]), params)[:, None] * g_own
            q_nb = psi1(np.hypot(g_nb[:, 0], g_nb[:, 1]), params)[:, None] * g_nb
            nx, ny = _NORMALS[side]
            jump = (q_own[:, 0] - q_nb[:, 0]) * nx + (q_own[:, 1] - q_nb[:, 1]) * ny
            h_face = cell.size
            integral = h_face * float(w @ (jump * jump))
            contrib = h_face / (2.0 * p_face) * integral
            eta2[cid] += contrib
            eta2[face.neighbor] += contrib

    eta = {cid: float(np.sqrt(v)) for cid, v in eta2.items()}
    return ErrorIndicators(eta, float(np.sqrt(sum(eta2.values()))))


def _legendre_table(p: int, s: np.ndarray) -> np.ndarray:
    """Orthonormal shifted Legendre values P~_a(s), a = 0..p, shape (m, p+1)."""
    V = npleg.legvander(2.0 * s - 1.0, p)
    return V * np.sqrt(2.0 * np.arange(p + 1) + 1.0)


def smoothness_indicators(space: HpSpace, phi: np.ndarray,
                          cells) -> SmoothnessIndicators:
    """Top-degree content ratio sigma_K = |Phi - P_{p-1} Phi| / |Phi - P_0 Phi|.

    Projections are local L2 projections onto tensor Legendre modes; the
    quadrature is exact for the local polynomial, so sigma is the exact
    modal energy fraction.  Degree-1 cells get sigma = 0 (no lower space
    to compare against, hence forced h-refinement).
    """
    sigma: dict[int, float] = {}
    for cid in cells:
        p = space.degrees[cid]
        if p == 1:
            sigma[cid] = 0.0
            continue
        n = p + 2
        rule = gauss_rule(n)
        vals, _ = evaluate_many(space, phi, cid, rule.points, key=("gauss", n))
        x, w = gauss_points_1d(n)
        P = _legendre_table(p, x)
        V = vals.reshape(n, n)  # V[j, i] at (x[i], x[j])
        coeff = (P * w[:, None]).T @ V @ (P * w[:, None])  # coeff[b, a]
        total = float(np.sum(coeff ** 2))
        den2 = total - float(coeff[0, 0] ** 2)
        if np.sqrt(max(den2, 0.0)) < 1e-14:
            sigma[cid] = 0.0
            continue
        num2 = float(np.sum(coeff[p, :] ** 2) + np.sum(coeff[:, p] ** 2)
                     - coeff[p, p] ** 2)
        sigma[cid] = float(np.sqrt(max(num2, 0.0) / den2))
    return SmoothnessIndicators(sigma)


def mark(eta: ErrorIndicators, sigma: SmoothnessIndicators,
         degrees: dict[int, int], theta_h: float, theta_p: float,
         tau_smooth: float, p_max: int = P_MAX,
         levels: dict[int, int] | None = None,
         max_level: int | None = None) -> RefinementPlan:
    """Bulk marking with a combined fraction and smoothness routing.

    Cells are sorted by indicator (ties by id) and flagged as the
    smallest prefix whose cumulative eta^2 reaches
    (theta_h + theta_p)^2 * eta_total^2; indicator values equal up to
    1e-9 relative form atomic groups so mirror twins are flagged
    together.  Flagged cells route to the p set when sigma exceeds
    tau_smooth and the degree allows it, otherwise to the h set; cells
    at the level cap fall back to p enrichment, fully saturated cells
    are dropped.
    """
    if not (0.0 < theta_h < 1.0 and 0.0 < theta_p < 1.0 and theta_h + theta_p < 1.0):
        raise ValueError("marking fractions must satisfy 0 < theta_h, theta_p "
                         "and theta_h + theta_p < 1")
    order = sorted(eta.eta.items(), key=lambda kv: (-kv[1], kv[0]))
    threshold = (theta_h + theta_p) ** 2 * eta.eta_total ** 2

    flagged: list[int] = []
    cum = 0.0
    idx = 0
    while idx < len(order) and cum < threshold * (1.0 - 1e-12):
        head = order[idx][1] ** 2
        group = []
        while idx < len(order) and order[idx][1] ** 2 >= head * (1.0 - 1e-9):
            group.append(order[idx][0])
            cum += order[idx][1] ** 2
            idx += 1
        flagged.extend(group)

    h_set: set[int] = set()
    p_set: set[int] = set()
    for cid in flagged:
        p = degrees[cid]
        capped = (max_level is not None and levels is not None
                  and levels[cid] >= max_level)
        if sigma.sigma.get(cid, 0.0) > tau_smooth and p < p_max:
            p_set.add(cid)
        elif not capped:
            h_set.add(cid)
        elif p < p_max:
            p_set.add(cid)
    return RefinementPlan(h_set, p_set)


def execute(mesh: QuadMesh, degrees: dict[int, int],
            plan: RefinementPlan) -> tuple[QuadMesh, dict[int, int]]:
    """Apply a plan: p increments first, then subdivision with closure.

    Children inherit their parent's current degree, so a p-marked cell
    swept up by closure refinement passes the incremented degree on.
    """
    overlap = plan.h_set & plan.p_set
    if overlap:
        raise ValueError(f"cells marked for both h and p refinement: {sorted(overlap)}")
    bumped = dict(degrees)
    for cid in plan.p_set:
        if bumped[cid] >= P_MAX:
            raise ValueError(f"cell {cid} already at the degree cap {P_MAX}")
        bumped[cid] = bumped[cid] + 1
    new_mesh = meshmod.refine(mesh, plan.h_set)
    new_degrees: dict[int, int] = {}
    for cid in new_mesh.active_ids:
        if cid in bumped:
            new_degrees[cid] = bumped[cid]
        else:
            new_degrees[cid] = bumped[new_mesh.cells[cid].parent]
    return new_mesh, new_degrees


def transfer(old_space: HpSpace, phi: np.ndarray, new_space: HpSpace) -> np.ndarray:
    """Interpolate a field onto a refined space as the next initial guess.

    Each new DOF takes the old field's value at its node location, then
    constraints are distributed.  Exact whenever the old field lies in
    the new space (pure h or pure p refinement gives nested spaces).
    """
    out = np.zeros(new_space.n_dofs)
    filled = np.zeros(new_space.n_dofs, dtype=bool)
    pos = new_space.dofs.positions
    for cid in new_space.mesh.active_ids:
        dofs = new_space.dofs.cell_dofs[cid]
        todo = ~filled[dofs]
        if not todo.any():
            continue
        # the containing old cell is the cell itself or its parent
        if cid in old_space.dofs.cell_dofs:
            old_cid = cid
        else:
            old_cid = new_space.mesh.cells[cid].parent
        old_cell = old_space.mesh.cells[old_cid]
        x0, y0 = old_cell.origin
        h = old_cell.size
        pts = (pos[dofs[todo]] - (x0, y0)) / h
        np.clip(pts, 0.0, 1.0, out=pts)
        vals, _ = evaluate_many(old_space, phi, old_cid, pts)
        out[dofs[todo]] = vals
        filled[dofs[todo]] = True
    return new_space.constraints.distribute(out)
