"""Residual and Jacobian assembly over the hp space.

The weak residual of the quasilinear operator is

    residual_i = - sum_K  int_K psi1(||grad Phi||) grad Phi . grad phi_i

and its linearization pairs the secant coefficient c0 = psi1(r) with the
rank-one softening term c1 (grad Phi . grad w)(grad Phi . grad phi),
c1 = psi1'(r)/r.  Cells are integrated with p+2 Gauss points per axis
(over-integration margin for the non-polynomial coefficient).

Constraint condensation uses the projector C of the constraint set:
condensed residual = C^T r, condensed matrix = C^T A C plus identity
rows for constrained DOFs, so vectors keep their full length,
constrained residual entries are exactly zero and a solve returns zero
updates at Dirichlet DOFs.  Assembly runs serially in active-cell order
and is bitwise reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .constitutive import ModelParams, flux_coeff_arrays
from .hp_space import HpSpace, gauss_rule, shape_table


@dataclass
class _DegreeGroup:
    """Cells of equal degree batched for vectorized integration."""

    p: int
    cell_ids: list[int]
    dofmat: np.ndarray      # (nc, nloc)
    h: np.ndarray           # (nc,)
    wq: np.ndarray          # (nq,)
    dN: np.ndarray          # (nq, nloc, 2)
    K0: np.ndarray          # (nq, nloc, nloc) grad-grad products
    rows: np.ndarray        # COO scatter indices for local matrices
    cols: np.ndarray


def degree_groups(space: HpSpace) -> list[_DegreeGroup]:
    groups = space.caches.get("asm_groups")
    if groups is not None:
        return groups
    by_p: dict[int, list[int]] = {}
    for cid in space.mesh.active_ids:
        by_p.setdefault(space.degrees[cid], []).append(cid)
    groups = []
    for p in sorted(by_p):
        ids = by_p[p]
        n = p + 2
        rule = gauss_rule(n)
        _, dN = shape_table(p, rule.points, key=("gauss", n))
        dofmat = np.vstack([space.dofs.cell_dofs[cid] for cid in ids])
        h = np.array([space.mesh.cells[cid].size for cid in ids])
        K0 = np.einsum("qld,qmd->qlm", dN, dN)
        nloc = (p + 1) ** 2
        rows = np.repeat(dofmat, nloc, axis=1).ravel()
        cols = np.tile(dofmat, (1, nloc)).ravel()
        groups.append(_DegreeGroup(p, ids, dofmat, h, rule.weights, dN, K0, rows, cols))
    space.caches["asm_groups"] = groups
    return groups


def cell_gradients(space: HpSpace, phi: np.ndarray, group: _DegreeGroup) -> np.ndarray:
    """Physical gradients of the field at the group's quadrature points."""
    coef = np.asarray(phi, dtype=float)[group.dofmat]
    grads_ref = np.einsum("cl,qld->cqd", coef, group.dN)
    return grads_ref / group.h[:, None, None]


def assemble_residual(space: HpSpace, params: ModelParams, phi: np.ndarray) -> np.ndarray:
    """Condensed residual vector; constrained entries are zero."""
    raw = np.zeros(space.n_dofs)
    for g in degree_groups(space):
        nc, nq = len(g.cell_ids), g.wq.size
        grads = cell_gradients(space, phi, g)
        c0, _, _ = flux_coeff_arrays(grads.reshape(-1, 2), params)
        c0w = c0.reshape(nc, nq) * g.wq[None, :] * (g.h ** 2)[:, None]
        gdot = np.einsum("cqd,qld->cql", grads, g.dN) / g.h[:, None, None]
        local = -np.einsum("cq,cql->cl", c0w, gdot)
        raw += np.bincount(g.dofmat.ravel(), weights=local.ravel(),
                           minlength=space.n_dofs)
    return space.constraints.projector.T @ raw


def assemble_jacobian(space: HpSpace, params: ModelParams, phi: np.ndarray) -> sp.csr_matrix:
    """Condensed, symmetric Jacobian with identity rows at constrained DOFs."""
    rows_all, cols_all, vals_all = [], [], []
    for g in degree_groups(space):
        nc, nq = len(g.cell_ids), g.wq.size
        grads = cell_gradients(space, phi, g)
        c0, c1, _ = flux_coeff_arrays(grads.reshape(-1, 2), params)
        # reference-gradient products cancel one h^2 against the Jacobian
        c0w = c0.reshape(nc, nq) * g.wq[None, :]
        c1w = c1.reshape(nc, nq) * g.wq[None, :] * (g.h ** 2)[:, None]
        gdot = np.einsum("cqd,qld->cql", grads, g.dN) / g.h[:, None, None]
        local = np.einsum("cq,qlm->clm", c0w, g.K0)
        local += np.einsum("cq,cql,cqm->clm", c1w, gdot, gdot)
        rows_all.append(g.rows)
        cols_all.append(g.cols)
        vals_all.append(local.ravel())
    n = space.n_dofs
    raw = sp.coo_matrix(
        (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(n, n)).tocsr()
    C = space.constraints.projector
    cond = (C.T @ raw @ C).tocsr()
    mask = space.constraints.constrained_mask
    ident = sp.diags(mask.astype(float), format="csr")
    return (cond + ident).tocsr()


def assemble_linear_initial(space: HpSpace, params: ModelParams):
    """Linear system whose solution is the beta = 0 field with the
    inhomogeneous Dirichlet data folded into the right-hand side.

    The returned solution vector carries the Dirichlet values at
    constrained DOFs directly; callers distribute constraints afterwards
    to fill hanging-node entries.
    """
    p0 = replace(params, beta=0.0)
    phi_c = space.constraints.distribute(np.zeros(space.n_dofs))
    A = assemble_jacobian(space, p0, phi_c)
    b = assemble_residual(space, p0, phi_c) + A @ phi_c
    return A, b
