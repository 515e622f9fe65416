"""Quadtree mesh of the unit square with 1-irregular local refinement.

Cells are axis-aligned squares kept on an integer lattice: a cell at
refinement level ``L`` with anchor ``(i, j)`` spans
``[i*h, (i+1)*h] x [j*h, (j+1)*h]`` with ``h = 1 / (8 * 2**L)``.  All cell
edges therefore lie on dyadic lattice lines, the line ``y = 0.5`` is a
mesh line at every refinement state, and areas are exact in integer
arithmetic.  Refinement keeps the mesh 1-irregular (at most one hanging
node per face) by transitively splitting coarser face neighbors.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Union

INITIAL_DIVISIONS = 8

SIDES = ("left", "right", "bottom", "top")
OPPOSITE = {"left": "right", "right": "left", "bottom": "top", "top": "bottom"}
_SIDE_STEP = {"left": (-1, 0), "right": (1, 0), "bottom": (0, -1), "top": (0, 1)}

# children are created in this anchor-offset order and indexed by 2*dj + di
_CHILD_OFFSETS = ((0, 0), (1, 0), (0, 1), (1, 1))


@dataclass(frozen=True)
class Cell:
    """One square cell of the quadtree.  Leaves are the active cells."""

    id: int
    level: int
    i: int
    j: int
    parent: Optional[int] = None
    children: Optional[tuple[int, int, int, int]] = None

    @property
    def active(self) -> bool:
        return self.children is None

    @property
    def size(self) -> float:
        # exact float: the denominator is a power of two
        return 1.0 / (INITIAL_DIVISIONS << self.level)

    @property
    def origin(self) -> tuple[float, float]:
        h = self.size
        return (self.i * h, self.j * h)

    @property
    def center(self) -> tuple[float, float]:
        h = self.size
        return ((self.i + 0.5) * h, (self.j + 0.5) * h)

    @property
    def sort_key(self) -> tuple[int, int, int]:
        return (self.level, self.i, self.j)


@dataclass(frozen=True)
class BoundaryTag:
    """Marks a cell face lying on the domain boundary."""

    side: str


FaceNeighbor = Union[BoundaryTag, int, tuple[int, int]]


@dataclass(frozen=True)
class FaceRef:
    """What a cell sees across one of its faces.

    ``neighbor`` is a :class:`BoundaryTag`, the id of the single
    same-or-coarser active neighbor, or the ordered pair of finer active
    sub-neighbors when the face carries a hanging node.
    """

    owner: int
    side: str
    neighbor: FaceNeighbor

    @property
    def is_boundary(self) -> bool:
        return isinstance(self.neighbor, BoundaryTag)

    @property
    def is_hanging(self) -> bool:
        return isinstance(self.neighbor, tuple)


class QuadMesh:
    """1-irregular quadtree over [0,1]^2 starting from a uniform 8x8 grid."""

    def __init__(self, cells: dict[int, Cell], anchors: dict[tuple[int, int, int], int],
                 next_id: int):
        self.cells = cells
        self._anchors = anchors  # (level, i, j) -> id for every cell ever created
        self._next_id = next_id
        self.active_ids = sorted(
            (cid for cid, c in cells.items() if c.active),
            key=lambda cid: cells[cid].sort_key,
        )

    @property
    def n_active(self) -> int:
        return len(self.active_ids)

    def cell(self, cid: int) -> Cell:
        return self.cells[cid]

    def active_cells(self) -> Iterable[Cell]:
        for cid in self.active_ids:
            yield self.cells[cid]

    def max_level(self) -> int:
        return max(self.cells[cid].level for cid in self.active_ids)


def create_initial() -> QuadMesh:
    """Uniform 8x8 mesh of level-0 cells (h = 1/8)."""
    cells: dict[int, Cell] = {}
    anchors: dict[tuple[int, int, int], int] = {}
    cid = 0
    for i in range(INITIAL_DIVISIONS):
        for j in range(INITIAL_DIVISIONS):
            cells[cid] = Cell(id=cid, level=0, i=i, j=j)
            anchors[(0, i, j)] = cid
            cid += 1
    return QuadMesh(cells, anchors, cid)


def _active_coarser_neighbor(mesh: QuadMesh, cell: Cell, side: str) -> Optional[int]:
    """Id of the active neighbor one level coarser than ``cell``, if any."""
    di, dj = _SIDE_STEP[side]
    n = INITIAL_DIVISIONS << cell.level
    ii, jj = cell.i + di, cell.j + dj
    if ii < 0 or ii >= n or jj < 0 or jj >= n:
        return None
    if (cell.level, ii, jj) in mesh._anchors:
        return None
    if cell.level == 0:
        return None
    pid = mesh._anchors.get((cell.level - 1, ii >> 1, jj >> 1))
    if pid is not None and mesh.cells[pid].active:
        return pid
    return None


def refine(mesh: QuadMesh, marked: Iterable[int]) -> QuadMesh:
    """Replace each marked active cell by its 4 children.

    Additional cells are refined transitively (closure) until the
    1-irregularity invariant holds again.  Returns a new mesh; cell ids of
    surviving cells are preserved and never reused.
    """
    to_split = set(marked)
    for cid in to_split:
        if not mesh.cells[cid].active:
            raise ValueError(f"cell {cid} is not active and cannot be refined")

    # closure: any active face neighbor one level coarser must split too
    queue = deque(sorted(to_split, key=lambda c: mesh.cells[c].sort_key))
    while queue:
        cid = queue.popleft()
        cell = mesh.cells[cid]
        for side in SIDES:
            nb = _active_coarser_neighbor(mesh, cell, side)
            if nb is not None and nb not in to_split:
                to_split.add(nb)
                queue.append(nb)

    cells = dict(mesh.cells)
    anchors = dict(mesh._anchors)
    next_id = mesh._next_id
    for cid in sorted(to_split, key=lambda c: mesh.cells[c].sort_key):
        parent = cells[cid]
        kid_ids = []
        for di, dj in _CHILD_OFFSETS:
            kid = Cell(id=next_id, level=parent.level + 1,
                       i=2 * parent.i + di, j=2 * parent.j + dj, parent=cid)
            cells[next_id] = kid
            anchors[(kid.level, kid.i, kid.j)] = next_id
            kid_ids.append(next_id)
            next_id += 1
        cells[cid] = replace(parent, children=tuple(kid_ids))
    return QuadMesh(cells, anchors, next_id)


def neighbors(mesh: QuadMesh, cid: int, side: str) -> FaceRef:
    """Face view from an active cell: boundary, conforming/coarser id, or hanging pair."""
    cell = mesh.cells[cid]
    if not cell.active:
        raise ValueError(f"cell {cid} is not active")
    di, dj = _SIDE_STEP[side]
    n = INITIAL_DIVISIONS << cell.level
    ii, jj = cell.i + di, cell.j + dj
    if ii < 0 or ii >= n or jj < 0 or jj >= n:
        return FaceRef(cid, side, BoundaryTag(side))
    nid = mesh._anchors.get((cell.level, ii, jj))
    if nid is None:
        # coarser neighbor; 1-irregularity bounds the level gap to one
        pid = mesh._anchors[(cell.level - 1, ii >> 1, jj >> 1)]
        return FaceRef(cid, side, pid)
    nb = mesh.cells[nid]
    if nb.active:
        return FaceRef(cid, side, nid)
    # neighbor is refined: report its two children adjacent to this face
    kids = nb.children
    if side == "right":      # neighbor's left children
        pair = (kids[0], kids[2])
    elif side == "left":
        pair = (kids[1], kids[3])
    elif side == "top":      # neighbor's bottom children
        pair = (kids[0], kids[1])
    else:
        pair = (kids[2], kids[3])
    return FaceRef(cid, side, pair)


def locate(mesh: QuadMesh, point: tuple[float, float]) -> tuple[int, tuple[float, float]]:
    """Active cell whose closure contains ``point``, plus reference coordinates.

    Points on shared edges resolve to the candidate with the smallest
    (level, i, j), which makes repeated line sampling reproducible.
    """
    x, y = point
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise ValueError(f"point {point} lies outside the unit square")

    def axis_candidates(v: float, n: int) -> list[int]:
        i0 = min(int(v * n), n - 1)
        return [i for i in (i0 - 1, i0, i0 + 1)
                if 0 <= i < n and i <= v * n <= i + 1]

    hits: list[Cell] = []

    def visit(cell: Cell) -> None:
        if cell.active:
            hits.append(cell)
            return
        for kid_id in cell.children:
            kid = mesh.cells[kid_id]
            n = INITIAL_DIVISIONS << kid.level
            if kid.i <= x * n <= kid.i + 1 and kid.j <= y * n <= kid.j + 1:
                visit(kid)

    for i in axis_candidates(x, INITIAL_DIVISIONS):
        for j in axis_candidates(y, INITIAL_DIVISIONS):
            visit(mesh.cells[mesh._anchors[(0, i, j)]])

    best = min(hits, key=lambda c: c.sort_key)
    h = best.size
    s = min(max((x - best.i * h) / h, 0.0), 1.0)
    t = min(max((y - best.j * h) / h, 0.0), 1.0)
    return best.id, (s, t)


# ---------------------------------------------------------------------------
# exact lattice keys used to identify shared vertices and edges

def normalized_coord(num: int, level: int) -> tuple[int, int]:
    """Reduce the lattice coordinate num / (8 * 2**level) to lowest terms."""
    while level > 0 and (num & 1) == 0:
        num >>= 1
        level -= 1
    return (level, num)


def vertex_key(cell: Cell, corner: tuple[int, int]) -> tuple:
    """Exact identity of a cell corner; corner offsets are in {0, 1}^2."""
    a, b = corner
    return (normalized_coord(cell.i + a, cell.level),
            normalized_coord(cell.j + b, cell.level))


_SIDE_CORNERS = {
    "left": ((0, 0), (0, 1)),
    "right": ((1, 0), (1, 1)),
    "bottom": ((0, 0), (1, 0)),
    "top": ((0, 1), (1, 1)),
}


def edge_key(cell: Cell, side: str) -> tuple:
    """Exact identity of a cell face, as the ordered pair of its endpoints."""
    c0, c1 = _SIDE_CORNERS[side]
    return (vertex_key(cell, c0), vertex_key(cell, c1))


def face_on_slit(cell: Cell, side: str) -> bool:
    """True if the face lies on the slit segment y = 0.5, 0.5 <= x <= 1."""
    if side not in ("bottom", "top"):
        return False
    n = INITIAL_DIVISIONS << cell.level
    jj = cell.j if side == "bottom" else cell.j + 1
    return 2 * jj == n and 2 * cell.i >= n


def total_area_units(mesh: QuadMesh) -> tuple[int, int]:
    """Sum of active cell areas in exact integer units of the finest lattice.

    Returns (sum, full) where full is the unit count of the whole square.
    """
    lmax = mesh.max_level()
    total = sum(4 ** (lmax - mesh.cells[cid].level) for cid in mesh.active_ids)
    full = (INITIAL_DIVISIONS << lmax) ** 2
    return total, full
