"""Structured rectangular meshes of a 2D box.

Cells are numbered row-major (``cell = j * nx + i`` with ``i`` along x).
Edges are numbered vertical edges first (row by row, left to right), then
horizontal edges (bottom to top, left to right).

Every edge stores two cell slots.  For interior edges ``cells[e, 0]`` is the
left/bottom cell and ``normals[e]`` points from it into ``cells[e, 1]``.  For
boundary edges ``cells[e, 1] == -1`` and ``normals[e]`` is the outward unit
normal of the box.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError

# local face numbering inside a cell
LEFT, RIGHT, BOTTOM, TOP = 0, 1, 2, 3
FACE_NORMALS = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])

DEFAULT_UPWIND = (1.0, 1.0)


@dataclass(frozen=True)
class Box:
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise InvalidArgumentError(f"degenerate box {self}")

    @property
    def area(self):
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    @classmethod
    def coerce(cls, box):
        if isinstance(box, Box):
            return box
        return cls(*(float(c) for c in box))


class Mesh:
    """Uniform ``nx`` by ``ny`` partition of a :class:`Box`.

    Use :func:`build_mesh` to construct one.  All arrays are read-only.

    Attributes
    ----------
    centers : ndarray, shape (n_cells, 2)
    cell_edges : ndarray, shape (n_cells, 4)
        Edge index of the left, right, bottom and top face of each cell.
    cells : ndarray, shape (n_edges, 2)
        Adjacent cells, ``-1`` in the second slot on the boundary.
    faces : ndarray, shape (n_edges, 2)
        Local face id of the edge inside each adjacent cell.
    normals : ndarray, shape (n_edges, 2)
    lengths, midpoints : ndarray
    vertical : ndarray of bool
    interior_edges, boundary_edges : ndarray of int
    """

    def __init__(self, box, nx, ny):
        self.box = box
        self.nx = nx
        self.ny = ny
        self.hx = (box.xmax - box.xmin) / nx
        self.hy = (box.ymax - box.ymin) / ny

        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
        ii, jj = ii.ravel(), jj.ravel()
        self.centers = np.column_stack([
            box.xmin + (ii + 0.5) * self.hx,
            box.ymin + (jj + 0.5) * self.hy,
        ])

        # vertical edges: x = xmin + i*hx, i = 0..nx, row j
        vi, vj = np.meshgrid(np.arange(nx + 1), np.arange(ny))
        vi, vj = vi.ravel(), vj.ravel()
        n_vert = vi.size
        v_left = np.where(vi > 0, vj * nx + vi - 1, -1)
        v_right = np.where(vi < nx, vj * nx + vi, -1)

        # horizontal edges: y = ymin + j*hy, j = 0..ny, column i
        hi, hj = np.meshgrid(np.arange(nx), np.arange(ny + 1))
        hi, hj = hi.ravel(), hj.ravel()
        h_below = np.where(hj > 0, (hj - 1) * nx + hi, -1)
        h_above = np.where(hj < ny, hj * nx + hi, -1)

        n_edges = n_vert + hi.size
        cells = np.empty((n_edges, 2), dtype=np.int64)
        faces = np.empty((n_edges, 2), dtype=np.int64)
        normals = np.zeros((n_edges, 2))

        # first slot is the left/bottom cell when it exists
        first = np.where(v_left >= 0, v_left, v_right)
        second = np.where(v_left >= 0, v_right, -1)
        cells[:n_vert, 0], cells[:n_vert, 1] = first, second
        faces[:n_vert, 0] = np.where(v_left >= 0, RIGHT, LEFT)
        faces[:n_vert, 1] = np.where(second >= 0, LEFT, -1)
        normals[:n_vert, 0] = np.where(v_left >= 0, 1.0, -1.0)

        first = np.where(h_below >= 0, h_below, h_above)
        second = np.where(h_below >= 0, h_above, -1)
        cells[n_vert:, 0], cells[n_vert:, 1] = first, second
        faces[n_vert:, 0] = np.where(h_below >= 0, TOP, BOTTOM)
        faces[n_vert:, 1] = np.where(second >= 0, BOTTOM, -1)
        normals[n_vert:, 1] = np.where(h_below >= 0, 1.0, -1.0)

        self.cells = cells
        self.faces = faces
        self.normals = normals
        self.vertical = np.arange(n_edges) < n_vert
        self.lengths = np.where(self.vertical, self.hy, self.hx)
        self.midpoints = np.concatenate([
            np.column_stack([box.xmin + vi * self.hx, box.ymin + (vj + 0.5) * self.hy]),
            np.column_stack([box.xmin + (hi + 0.5) * self.hx, box.ymin + hj * self.hy]),
        ])
        self.interior_edges = np.flatnonzero(cells[:, 1] >= 0)
        self.boundary_edges = np.flatnonzero(cells[:, 1] < 0)

        cell_edges = np.empty((self.n_cells, 4), dtype=np.int64)
        for slot in (0, 1):
            mask = cells[:, slot] >= 0
            cell_edges[cells[mask, slot], faces[mask, slot]] = np.flatnonzero(mask)
        self.cell_edges = cell_edges

        for arr in (self.centers, cells, faces, normals, self.vertical, self.lengths,
                    self.midpoints, self.interior_edges, self.boundary_edges, cell_edges):
            arr.setflags(write=False)

    @property
    def n_cells(self):
        return self.nx * self.ny

    @property
    def n_edges(self):
        return self.cells.shape[0]

    @property
    def h(self):
        return min(self.hx, self.hy)

    def cell_normals(self, edge, slot):
        """Outward normal of ``edge`` as seen from adjacent cell ``slot``."""
        return self.normals[edge] if slot == 0 else -self.normals[edge]

    def locate(self, x, y):
        """Cell index and reference coordinates for points inside the box.

        Points on a shared edge are assigned to the cell with the larger index
        unless they sit on the right/top boundary.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        box = self.box
        i = np.clip(np.floor((x - box.xmin) / self.hx).astype(np.int64), 0, self.nx - 1)
        j = np.clip(np.floor((y - box.ymin) / self.hy).astype(np.int64), 0, self.ny - 1)
        cell = j * self.nx + i
        xi = 2.0 * (x - self.centers[cell, 0]) / self.hx
        eta = 2.0 * (y - self.centers[cell, 1]) / self.hy
        return cell, xi, eta

    def __repr__(self):
        b = self.box
        return (f"Mesh([{b.xmin}, {b.xmax}]x[{b.ymin}, {b.ymax}], "
                f"nx={self.nx}, ny={self.ny})")


def build_mesh(box, nx, ny):
    """Uniform rectangular mesh with ``nx * ny`` cells."""
    box = Box.coerce(box)
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InvalidArgumentError(f"cell counts must be positive integers, got {nx}, {ny}")
    return Mesh(box, int(nx), int(ny))


@dataclass(frozen=True)
class EdgeClassification:
    """Upwind labels of a mesh for a fixed vector ``v``.

    ``sign[e]`` is ``sign(v . normals[e])``; the sign seen from the second
    cell of an interior edge is the negative.
    """
    v: tuple
    sign: np.ndarray
    inflow: np.ndarray
    outflow: np.ndarray


def classify_edges(mesh, v=DEFAULT_UPWIND):
    """Label edges by ``sign(v . n)`` and split the boundary into in/outflow.

    Raises
    ------
    InvalidArgumentError
        If ``v`` is orthogonal to some edge normal.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (2,):
        raise InvalidArgumentError("upwind vector must have two components")
    dots = mesh.normals @ v
    zero = np.flatnonzero(dots == 0.0)
    if zero.size:
        e = int(zero[0])
        raise InvalidArgumentError(
            f"upwind vector {tuple(v)} is orthogonal to edge {e} "
            f"(normal {tuple(mesh.normals[e])}, midpoint {tuple(mesh.midpoints[e])})")
    sign = np.sign(dots)
    bnd = mesh.boundary_edges
    return EdgeClassification(
        v=tuple(float(c) for c in v),
        sign=sign,
        inflow=bnd[sign[bnd] < 0],
        outflow=bnd[sign[bnd] > 0],
    )
