"""Structured conforming triangulations of axis-aligned rectangles."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TextIO

import numpy as np
from numpy.typing import NDArray


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh of a rectangle, immutable after construction.

    Vertices are numbered row-major (x fastest), every grid cell is split
    along its lower-left to upper-right diagonal, and all triangles are
    oriented counterclockwise.  Edges store sorted vertex pairs in
    lexicographic order; ``tri_edges[k, i]`` is the edge opposite local
    vertex ``i`` of triangle ``k``.
    """

    vertices: NDArray[np.float64]
    triangles: NDArray[np.int64]
    edges: NDArray[np.int64]
    tri_edges: NDArray[np.int64]
    boundary_edges: NDArray[np.int64]
    boundary_vertices: NDArray[np.int64]
    h: float

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]


def build_rect_mesh(
    x_range: tuple[float, float],
    y_range: tuple[float, float],
    nx: int,
    ny: int,
) -> Mesh:
    """Triangulate ``x_range x y_range`` with an nx-by-ny grid of split cells.

    Parameters
    ----------
    x_range, y_range : (lo, hi) interval endpoints, lo < hi.
    nx, ny : number of cells per direction, at least 1.

    Raises
    ------
    ValueError for empty or reversed intervals and nonpositive divisions.
    """
    x0, x1 = map(float, x_range)
    y0, y1 = map(float, y_range)
    if not (x1 > x0) or not (y1 > y0):
        raise ValueError(f"empty or reversed interval: x={x_range}, y={y_range}")
    if nx < 1 or ny < 1:
        raise ValueError(f"divisions must be >= 1, got nx={nx}, ny={ny}")

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    vertices = np.column_stack([gx.ravel(), gy.ravel()])

    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny))
    ix, iy = ix.ravel(), iy.ravel()
    v00 = iy * (nx + 1) + ix
    v10 = v00 + 1
    v01 = v00 + (nx + 1)
    v11 = v01 + 1

    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([v00, v10, v11])
    triangles[1::2] = np.column_stack([v00, v11, v01])

    # Edge opposite local vertex i, sorted endpoints; unique() orders the
    # global edge list lexicographically, which fixes the numbering.
    raw = triangles[:, [[1, 2], [0, 2], [0, 1]]].reshape(-1, 2)
    raw.sort(axis=1)
    edges, inverse, counts = np.unique(
        raw, axis=0, return_inverse=True, return_counts=True
    )
    tri_edges = inverse.reshape(-1, 3).astype(np.int64)

    boundary_edges = np.flatnonzero(counts == 1).astype(np.int64)
    boundary_vertices = np.unique(edges[boundary_edges])

    # Longest edge of every cell is its diagonal; this closed form agrees
    # with the enumerated maximum to rounding and halves exactly under
    # uniform refinement.
    h = float(np.sqrt(((x1 - x0) / nx) ** 2 + ((y1 - y0) / ny) ** 2))

    return Mesh(
        vertices=vertices,
        triangles=triangles,
        edges=edges,
        tri_edges=tri_edges,
        boundary_edges=boundary_edges,
        boundary_vertices=boundary_vertices,
        h=h,
    )


def mesh_size(mesh: Mesh) -> float:
    """Maximum element diameter."""
    return mesh.h


def affine_maps(mesh: Mesh):
    """Per-triangle affine reference maps x = v0 + J @ (xi, eta).

    Returns
    -------
    origin : (nt, 2) first vertex of each triangle.
    jac : (nt, 2, 2) Jacobians, columns are the edge vectors from v0.
    inv_jac : (nt, 2, 2) inverses of ``jac``.
    area : (nt,) signed triangle areas (positive for CCW orientation).
    """
    pts = mesh.vertices[mesh.triangles]
    origin = pts[:, 0, :]
    jac = np.stack([pts[:, 1, :] - origin, pts[:, 2, :] - origin], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    inv_jac = np.empty_like(jac)
    inv_jac[:, 0, 0] = jac[:, 1, 1] / det
    inv_jac[:, 0, 1] = -jac[:, 0, 1] / det
    inv_jac[:, 1, 0] = -jac[:, 1, 0] / det
    inv_jac[:, 1, 1] = jac[:, 0, 0] / det
    return origin, jac, inv_jac, 0.5 * det


def triangle_areas(mesh: Mesh) -> NDArray[np.float64]:
    """Signed areas of all triangles."""
    return affine_maps(mesh)[3]


def edge_lengths(mesh: Mesh) -> NDArray[np.float64]:
    d = mesh.vertices[mesh.edges[:, 1]] - mesh.vertices[mesh.edges[:, 0]]
    return np.sqrt(np.sum(d * d, axis=1))


def dump_mesh(mesh: Mesh, stream: TextIO) -> None:
    """Plain-text dump: one ``v x y`` line per vertex, one ``t i j k`` per triangle."""
    for x, y in mesh.vertices:
        stream.write(f"v {x!r} {y!r}\n")
    for a, b, c in mesh.triangles:
        stream.write(f"t {a} {b} {c}\n")
