"""Continuous hp finite element space on the quadtree mesh.

Each active cell carries a tensor-product Lagrange basis of degree
``p`` on Gauss-Lobatto points (equispaced nodes are badly conditioned at
p = 7).  Vertex nodes are always shared between neighboring cells; edge
nodes are shared only across conforming faces of equal degree.  All other
inter-cell continuity is enforced through an affine constraint set:

* on a face, the trace space is the polynomial space of degree
  ``q = min`` over the adjacent cell degrees (minimum-degree rule);
* the q+1 "master" nodes that parameterize that trace are taken from the
  coarse side when its degree is minimal, otherwise from the face
  endpoints plus the interior nodes of the minimal-degree fine subcell
  (a polynomial of degree q is determined by its values on half a face);
* every other node on the face is constrained to interpolate the master
  trace, which makes the glued traces agree exactly on both sides;
* Dirichlet values on the outer boundary and on the slit override any
  continuity constraint at the same node.

Constraints are resolved to transitive closure at build time, so master
DOFs are never themselves constrained.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre as npleg

from . import mesh as meshmod
from .mesh import QuadMesh, SIDES, edge_key, vertex_key

P_MAX = 7


class ConstraintCycleError(RuntimeError):
    """A cycle in the constraint graph; impossible for well-formed meshes."""


# ---------------------------------------------------------------------------
# 1D nodes, Lagrange bases and quadrature

_lobatto_cache: dict[int, np.ndarray] = {}


def gauss_lobatto_nodes(p: int) -> np.ndarray:
    """p+1 Gauss-Lobatto points on [0, 1], endpoints included."""
    nodes = _lobatto_cache.get(p)
    if nodes is None:
        if p == 1:
            nodes = np.array([0.0, 1.0])
        else:
            coeff = np.zeros(p + 1)
            coeff[p] = 1.0
            interior = np.sort(npleg.legroots(npleg.legder(coeff)))
            nodes = np.concatenate(([-1.0], interior, [1.0]))
            nodes = (nodes + 1.0) / 2.0
            # enforce exact symmetry about 0.5 so mirrored meshes match
            nodes = 0.5 * (nodes + (1.0 - nodes[::-1]))
            nodes[0], nodes[-1] = 0.0, 1.0
        _lobatto_cache[p] = nodes
    return nodes


def lagrange_1d(nodes: np.ndarray, t) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of all Lagrange basis polynomials at ``t``.

    Returns arrays of shape (len(t), len(nodes)).  The derivative is
    accumulated with the product rule, which stays stable at the nodes.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    n = len(nodes)
    vals = np.empty((t.size, n))
    ders = np.empty((t.size, n))
    for k in range(n):
        v = np.ones(t.size)
        d = np.zeros(t.size)
        for m in range(n):
            if m == k:
                continue
            w = 1.0 / (nodes[k] - nodes[m])
            d = d * (t - nodes[m]) * w + v * w
            v = v * (t - nodes[m]) * w
        vals[:, k] = v
        ders[:, k] = d
    return vals, ders


_table_cache: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def shape_table(p: int, pts: np.ndarray, key: Optional[tuple] = None):
    """Tensor-product shape values N (m, nloc) and gradients dN (m, nloc, 2).

    Node ordering is lexicographic in reference coordinates: index
    ``b*(p+1) + a`` holds the node at (gl[a], gl[b]).  ``key`` enables
    caching for point sets that recur (quadrature, face traces).
    """
    if key is not None:
        hit = _table_cache.get((p, key))
        if hit is not None:
            return hit
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    gl = gauss_lobatto_nodes(p)
    vs, ds = lagrange_1d(gl, pts[:, 0])
    vt, dt = lagrange_1d(gl, pts[:, 1])
    m = pts.shape[0]
    nloc = (p + 1) ** 2
    N = np.empty((m, nloc))
    dN = np.empty((m, nloc, 2))
    for b in range(p + 1):
        sl = slice(b * (p + 1), (b + 1) * (p + 1))
        N[:, sl] = vs * vt[:, b:b + 1]
        dN[:, sl, 0] = ds * vt[:, b:b + 1]
        dN[:, sl, 1] = vs * dt[:, b:b + 1]
    if key is not None:
        _table_cache[(p, key)] = (N, dN)
    return N, dN


def shape_eval(p: int, node: int, ref_point: tuple[float, float]):
    """Value and reference gradient of one shape function at one point."""
    if not (0 <= node < (p + 1) ** 2):
        raise ValueError(f"node {node} out of range for degree {p}")
    N, dN = shape_table(p, np.array([ref_point]))
    return float(N[0, node]), (float(dN[0, node, 0]), float(dN[0, node, 1]))


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (m, 2) on the reference cell [0,1]^2
    weights: np.ndarray  # (m,), summing to 1


_gauss1d_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
_gauss_cache: dict[int, QuadratureRule] = {}


def gauss_points_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    """n-point Gauss-Legendre rule on [0, 1]."""
    hit = _gauss1d_cache.get(n)
    if hit is None:
        x, w = np.polynomial.legendre.leggauss(n)
        hit = ((x + 1.0) / 2.0, w / 2.0)
        _gauss1d_cache[n] = hit
    return hit


def gauss_rule(n: int) -> QuadratureRule:
    """Tensor-product Gauss-Legendre rule with n points per axis."""
    if not (1 <= n <= 16):
        raise ValueError("points per axis must be in [1, 16]")
    rule = _gauss_cache.get(n)
    if rule is None:
        x, w = gauss_points_1d(n)
        # index q = j*n + i places the point (x[i], x[j])
        pts = np.empty((n * n, 2))
        wts = np.empty(n * n)
        for j in range(n):
            pts[j * n:(j + 1) * n, 0] = x
            pts[j * n:(j + 1) * n, 1] = x[j]
            wts[j * n:(j + 1) * n] = w * w[j]
        rule = QuadratureRule(pts, wts)
        _gauss_cache[n] = rule
    return rule


# ---------------------------------------------------------------------------
# boundary data

@dataclass(frozen=True)
class BoundaryValues:
    """Dirichlet data: ``value(x, y)`` on the outer boundary, plus an
    optional constant on the slit segment {y = 0.5, 0.5 <= x <= 1}."""

    value: Callable[[float, float], float]
    slit_value: Optional[float] = None


def crack_boundary_values() -> BoundaryValues:
    """Edge-crack benchmark data: 1 on the left edge, 0 on the right,
    1 - x on top and bottom, 0 on the slit."""

    def g(x: float, y: float) -> float:
        if x <= 1e-12:
            return 1.0
        if x >= 1.0 - 1e-12:
            return 0.0
        return 1.0 - x

    return BoundaryValues(value=g, slit_value=0.0)


# ---------------------------------------------------------------------------
# degree-of-freedom numbering

@dataclass
class DofHandler:
    cell_dofs: dict[int, np.ndarray]
    n_dofs: int
    positions: np.ndarray                 # (n_dofs, 2) node locations
    vertex_dof: dict[tuple, int]          # lattice vertex key -> dof
    edge_dofs: dict[tuple, list[int]]     # (edge key, degree) -> interior dofs


def distribute_dofs(mesh: QuadMesh, degrees: dict[int, int]) -> DofHandler:
    """Global numbering over the active cells.

    Vertex DOFs are identified across all incident cells.  Edge DOFs are
    identified only between conforming faces of equal degree (the key
    includes the degree); mismatched and hanging faces keep separate DOFs
    that the constraint set later glues together.  Interior DOFs are
    private to their cell.  Numbering is a pure function of
    (mesh, degrees): cells are visited in active order and nodes
    lexicographically.
    """
    key_to_dof: dict = {}
    positions: list[tuple[float, float]] = []
    cell_dofs: dict[int, np.ndarray] = {}
    vertex_dof: dict[tuple, int] = {}
    edge_dofs: dict[tuple, list[int]] = {}

    for cid in mesh.active_ids:
        cell = mesh.cells[cid]
        p = degrees[cid]
        if not (1 <= p <= P_MAX):
            raise ValueError(f"degree {p} on cell {cid} outside [1, {P_MAX}]")
        gl = gauss_lobatto_nodes(p)
        x0, y0 = cell.origin
        h = cell.size
        ek = {side: edge_key(cell, side) for side in SIDES}
        dofs = np.empty((p + 1) ** 2, dtype=np.int64)
        for b in range(p + 1):
            for a in range(p + 1):
                on_x = a == 0 or a == p
                on_y = b == 0 or b == p
                if on_x and on_y:
                    key = ("v", vertex_key(cell, (a // p, b // p)))
                elif on_x:
                    side = "left" if a == 0 else "right"
                    key = ("e", ek[side], p, b)
                elif on_y:
                    side = "bottom" if b == 0 else "top"
                    key = ("e", ek[side], p, a)
                else:
                    key = ("i", cid, b * (p + 1) + a)
                dof = key_to_dof.get(key)
                if dof is None:
                    dof = len(positions)
                    key_to_dof[key] = dof
                    positions.append((x0 + gl[a] * h, y0 + gl[b] * h))
                    if key[0] == "v":
                        vertex_dof[key[1]] = dof
                    elif key[0] == "e":
                        edge_dofs.setdefault((key[1], p), []).append(dof)
                dofs[b * (p + 1) + a] = dof
        cell_dofs[cid] = dofs

    return DofHandler(cell_dofs, len(positions),
                      np.asarray(positions, dtype=float), vertex_dof, edge_dofs)


# ---------------------------------------------------------------------------
# constraints

class ConstraintSet:
    """Affine constraints: dof -> (masters with weights, inhomogeneity).

    Dirichlet entries have no masters and carry the boundary value.  The
    set is resolved to transitive closure, so masters are always free.
    """

    def __init__(self, entries: dict[int, tuple[list[tuple[int, float]], float]],
                 n_dofs: int):
        self.entries = entries
        self.n_dofs = n_dofs
        self._projector: Optional[sp.csr_matrix] = None
        self._inhomogeneity: Optional[np.ndarray] = None

    def is_constrained(self, dof: int) -> bool:
        return dof in self.entries

    @property
    def n_constrained(self) -> int:
        return len(self.entries)

    @property
    def projector(self) -> sp.csr_matrix:
        """Square matrix C with x_consistent = C @ x + inhomogeneity."""
        if self._projector is None:
            rows, cols, vals = [], [], []
            for d in range(self.n_dofs):
                entry = self.entries.get(d)
                if entry is None:
                    rows.append(d)
                    cols.append(d)
                    vals.append(1.0)
                else:
                    for m, w in entry[0]:
                        rows.append(d)
                        cols.append(m)
                        vals.append(w)
            self._projector = sp.coo_matrix(
                (vals, (rows, cols)), shape=(self.n_dofs, self.n_dofs)).tocsr()
        return self._projector

    @property
    def inhomogeneity(self) -> np.ndarray:
        if self._inhomogeneity is None:
            g = np.zeros(self.n_dofs)
            for d, (_, b) in self.entries.items():
                g[d] = b
            self._inhomogeneity = g
        return self._inhomogeneity

    @property
    def constrained_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_dofs, dtype=bool)
        mask[list(self.entries.keys())] = True
        return mask

    def distribute(self, x: np.ndarray) -> np.ndarray:
        """Fill constrained entries from their masters; idempotent."""
        return self.projector @ np.asarray(x, dtype=float) + self.inhomogeneity


def _face_nodes(dofs: DofHandler, degrees: dict[int, int], mesh: QuadMesh,
                cid: int, side: str, sub: Optional[int] = None):
    """Face DOFs of one cell with their positions in the mother-face
    parameter tau in [0,1]; ``sub`` maps a fine subface into its half."""
    cell = mesh.cells[cid]
    p = degrees[cid]
    cdofs = dofs.cell_dofs[cid]
    gl = gauss_lobatto_nodes(p)
    if side == "left":
        idx = [b * (p + 1) for b in range(p + 1)]
    elif side == "right":
        idx = [b * (p + 1) + p for b in range(p + 1)]
    elif side == "bottom":
        idx = list(range(p + 1))
    else:
        idx = [p * (p + 1) + a for a in range(p + 1)]
    if sub is None:
        taus = gl
    else:
        taus = (sub + gl) / 2.0
    return [(int(cdofs[k]), float(t)) for k, t in zip(idx, taus)]


def _trace_rows(entries: dict, masters: list[tuple[int, float]],
                slaves: list[tuple[int, float]]) -> None:
    """Constrain each slave node to interpolate the master trace."""
    master_dofs = [d for d, _ in masters]
    taus = np.array([t for _, t in masters])
    for d, t in slaves:
        if d in master_dofs:
            continue
        w, _ = lagrange_1d(taus, [t])
        entries[d] = ([(m, float(wk)) for m, wk in zip(master_dofs, w[0])], 0.0)


def build_constraints(mesh: QuadMesh, degrees: dict[int, int], dofs: DofHandler,
                      bc: Optional[BoundaryValues]) -> ConstraintSet:
    """Continuity constraints for hanging and degree-mismatched faces plus
    Dirichlet values; resolved to transitive closure.

    Passing ``bc=None`` builds the pure continuity set, where every
    homogeneous row's weights sum to 1 (Lagrange partition of unity).
    With Dirichlet data the closure absorbs fixed masters into the
    inhomogeneity, so absorbed rows may sum to less than 1.
    """
    entries: dict[int, tuple[list[tuple[int, float]], float]] = {}

    for cid in mesh.active_ids:
        cell = mesh.cells[cid]
        p_own = degrees[cid]
        for side in SIDES:
            face = meshmod.neighbors(mesh, cid, side)
            if face.is_boundary:
                continue
            if face.is_hanging:
                f1, f2 = face.neighbor
                p1, p2 = degrees[f1], degrees[f2]
                opp = meshmod.OPPOSITE[side]
                mother = _face_nodes(dofs, degrees, mesh, cid, side)
                fine1 = _face_nodes(dofs, degrees, mesh, f1, opp, sub=0)
                fine2 = _face_nodes(dofs, degrees, mesh, f2, opp, sub=1)
                mid = fine1[-1]  # hanging vertex at tau = 0.5
                if p_own <= min(p1, p2):
                    masters = mother
                    slaves = fine1[1:] + fine2[1:-1]
                else:
                    # a fine subcell has the minimal degree; its interior
                    # nodes plus the face endpoints determine the trace
                    if p1 <= p2:
                        fmin, fother = fine1, fine2
                    else:
                        fmin, fother = fine2, fine1
                    masters = [mother[0], mother[-1]] + fmin[1:-1]
                    slaves = mother[1:-1] + [mid] + fother[1:-1]
                _trace_rows(entries, masters, slaves)
            else:
                nb = mesh.cells[face.neighbor]
                if nb.level < cell.level:
                    continue  # handled from the mother side
                p_nb = degrees[face.neighbor]
                if p_own >= p_nb:
                    continue  # equal: identified; higher: handled from nb
                masters = _face_nodes(dofs, degrees, mesh, cid, side)
                slave_nodes = _face_nodes(dofs, degrees, mesh, face.neighbor,
                                          meshmod.OPPOSITE[side])
                _trace_rows(entries, masters, slave_nodes[1:-1])

    # Dirichlet wins over continuity at conflicting DOFs
    if bc is not None:
        pos = dofs.positions
        for d in range(dofs.n_dofs):
            x, y = pos[d]
            if x < 1e-12 or x > 1.0 - 1e-12 or y < 1e-12 or y > 1.0 - 1e-12:
                entries[d] = ([], float(bc.value(x, y)))
            elif bc.slit_value is not None and abs(y - 0.5) < 1e-12 and x >= 0.5 - 1e-12:
                entries[d] = ([], float(bc.slit_value))

    # transitive closure; masters of resolved rows are always unconstrained
    resolved: dict[int, tuple[list[tuple[int, float]], float]] = {}

    def resolve(d: int, stack: frozenset) -> tuple[list[tuple[int, float]], float]:
        done = resolved.get(d)
        if done is not None:
            return done
        if d in stack:
            raise ConstraintCycleError(f"constraint cycle through dof {d}")
        masters, inhom = entries[d]
        acc: dict[int, float] = {}
        b = inhom
        for m, w in masters:
            if m in entries:
                mm, mb = resolve(m, stack | {d})
                b += w * mb
                for m2, w2 in mm:
                    acc[m2] = acc.get(m2, 0.0) + w * w2
            else:
                acc[m] = acc.get(m, 0.0) + w
        out = (sorted(acc.items()), b)
        resolved[d] = out
        return out

    for d in list(entries.keys()):
        resolve(d, frozenset())

    return ConstraintSet(resolved, dofs.n_dofs)


# ---------------------------------------------------------------------------
# assembled space and field evaluation

@dataclass
class HpSpace:
    """Mesh + degrees + numbering + constraints, ready for assembly."""

    mesh: QuadMesh
    degrees: dict[int, int]
    dofs: DofHandler
    constraints: ConstraintSet
    bc: Optional[BoundaryValues]
    caches: dict = field(default_factory=dict, repr=False)

    @property
    def n_dofs(self) -> int:
        return self.dofs.n_dofs


def build_space(mesh: QuadMesh, degrees: dict[int, int],
                bc: Optional[BoundaryValues]) -> HpSpace:
    dofs = distribute_dofs(mesh, degrees)
    constraints = build_constraints(mesh, degrees, dofs, bc)
    return HpSpace(mesh, degrees, dofs, constraints, bc)


def evaluate_many(space: HpSpace, coeffs: np.ndarray, cid: int,
                  ref_points: np.ndarray, key: Optional[tuple] = None):
    """Field values and physical gradients at reference points of one cell."""
    p = space.degrees[cid]
    N, dN = shape_table(p, ref_points, key)
    c = np.asarray(coeffs, dtype=float)[space.dofs.cell_dofs[cid]]
    h = space.mesh.cells[cid].size
    vals = N @ c
    grads = np.einsum("mld,l->md", dN, c) / h
    return vals, grads


def evaluate(space: HpSpace, coeffs: np.ndarray, cid: int,
             ref_point: tuple[float, float]):
    """Value and physical gradient at one reference point of one cell."""
    vals, grads = evaluate_many(space, coeffs, cid, np.array([ref_point]))
    return float(vals[0]), (float(grads[0, 0]), float(grads[0, 1]))


def eval_at(space: HpSpace, coeffs: np.ndarray, x: float, y: float):
    """Evaluate the field at a physical point (locate + evaluate)."""
    cid, ref = meshmod.locate(space.mesh, (x, y))
    return evaluate(space, coeffs, cid, ref)
