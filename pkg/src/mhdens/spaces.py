"""Continuous Lagrange finite-element spaces (P1/P2, scalar or 2-vector)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .mesh import Mesh, affine_maps

# Local P2 ordering: vertices v0,v1,v2 then midpoints m12, m02, m01,
# i.e. midpoint i sits on the edge opposite vertex i.


@dataclass(frozen=True)
class FESpace:
    """Scalar or component-blocked vector Lagrange space on a triangle mesh.

    For vector spaces all x-component DOFs come first, then all
    y-component DOFs; ``cell_dofs`` follows the same blocking.
    """

    mesh: Mesh
    degree: int
    components: int
    ndofs: int
    cell_dofs: NDArray[np.int64]
    dof_coords: NDArray[np.float64]
    boundary_dofs: NDArray[np.int64]

    @property
    def scalar_ndofs(self) -> int:
        return self.ndofs // self.components

    @property
    def local_size(self) -> int:
        """Scalar basis functions per triangle (3 for P1, 6 for P2)."""
        return 3 if self.degree == 1 else 6


@dataclass
class FeFunction:
    """Finite-element function: a coefficient vector over a space."""

    space: FESpace
    coeffs: NDArray[np.float64]

    def __post_init__(self) -> None:
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (self.space.ndofs,):
            raise ValueError(
                f"coefficient length {self.coeffs.shape} does not match "
                f"space with {self.space.ndofs} dofs"
            )

    def copy(self) -> "FeFunction":
        return FeFunction(self.space, self.coeffs.copy())


def build_space(mesh: Mesh, degree: int, components: int = 1) -> FESpace:
    """Construct a P1 or P2 space with shared DOFs across element boundaries."""
    if degree not in (1, 2):
        raise ValueError(f"unsupported polynomial degree {degree}")
    if components not in (1, 2):
        raise ValueError(f"unsupported component count {components}")

    nv = mesh.num_vertices
    if degree == 1:
        scalar_ndofs = nv
        cell_scalar = mesh.triangles.copy()
        coords = mesh.vertices.copy()
        bdofs_scalar = mesh.boundary_vertices.copy()
    else:
        scalar_ndofs = nv + mesh.num_edges
        cell_scalar = np.hstack([mesh.triangles, nv + mesh.tri_edges])
        midpoints = 0.5 * (
            mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]]
        )
        coords = np.vstack([mesh.vertices, midpoints])
        bdofs_scalar = np.concatenate(
            [mesh.boundary_vertices, nv + mesh.boundary_edges]
        )

    if components == 1:
        cell_dofs = cell_scalar
        boundary_dofs = np.sort(bdofs_scalar)
    else:
        cell_dofs = np.hstack([cell_scalar, cell_scalar + scalar_ndofs])
        boundary_dofs = np.concatenate(
            [np.sort(bdofs_scalar), np.sort(bdofs_scalar) + scalar_ndofs]
        )
        coords = np.vstack([coords, coords])

    return FESpace(
        mesh=mesh,
        degree=degree,
        components=components,
        ndofs=components * scalar_ndofs,
        cell_dofs=cell_dofs.astype(np.int64),
        dof_coords=coords,
        boundary_dofs=boundary_dofs.astype(np.int64),
    )


def tabulate_basis(degree: int, bary: NDArray[np.float64]):
    """Reference basis values and (xi, eta)-gradients at barycentric points.

    Returns ``N`` of shape (npts, nloc) and ``dN`` of shape (npts, nloc, 2).
    """
    bary = np.atleast_2d(np.asarray(bary, dtype=np.float64))
    l0, l1, l2 = bary[:, 0], bary[:, 1], bary[:, 2]
    npts = bary.shape[0]
    # gradients of barycentric coordinates w.r.t. (xi, eta)
    gl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])

    if degree == 1:
        N = bary.copy()
        dN = np.broadcast_to(gl, (npts, 3, 2)).copy()
        return N, dN
    if degree != 2:
        raise ValueError(f"unsupported polynomial degree {degree}")

    N = np.empty((npts, 6))
    dN = np.empty((npts, 6, 2))
    lam = (l0, l1, l2)
    for i in range(3):
        N[:, i] = lam[i] * (2.0 * lam[i] - 1.0)
        dN[:, i, :] = (4.0 * lam[i] - 1.0)[:, None] * gl[i]
    # midpoint basis 4*li*lj on the edge opposite vertex k
    for k, (i, j) in enumerate(((1, 2), (0, 2), (0, 1))):
        N[:, 3 + k] = 4.0 * lam[i] * lam[j]
        dN[:, 3 + k, :] = 4.0 * (lam[j][:, None] * gl[i] + lam[i][:, None] * gl[j])
    return N, dN


def interpolate(space: FESpace, f: Callable) -> FeFunction:
    """Nodal interpolant: evaluate ``f`` at the DOF coordinates.

    For scalar spaces ``f(x, y)`` must return an array of values; for
    vector spaces it must return a pair (stacked along axis 0) of
    component arrays.
    """
    n = space.scalar_ndofs
    x, y = space.dof_coords[:n, 0], space.dof_coords[:n, 1]
    vals = np.asarray(f(x, y), dtype=np.float64)
    if space.components == 1:
        coeffs = np.broadcast_to(vals, (n,)).copy()
    else:
        if vals.shape != (2, n):
            raise ValueError(
                f"vector interpolation needs shape (2, {n}) values, got {vals.shape}"
            )
        coeffs = np.concatenate([vals[0], vals[1]])
    return FeFunction(space, coeffs)


def eval_function(
    space: FESpace,
    coeffs: NDArray[np.float64],
    triangle: int,
    bary: tuple[float, float, float],
):
    """Evaluate value and physical gradient at one barycentric point.

    Returns ``(values, grads)`` with shapes (components,) and
    (components, 2).
    """
    if not 0 <= triangle < space.mesh.num_triangles:
        raise IndexError(f"triangle index {triangle} out of range")
    b = np.asarray(bary, dtype=np.float64)
    if b.min() < -1e-12 or abs(b.sum() - 1.0) > 1e-12:
        raise ValueError(f"invalid barycentric point {bary}")

    N, dN = tabulate_basis(space.degree, b[None, :])
    _, _, inv_jac, _ = affine_maps(space.mesh)
    # d/dx_d = sum_k inv_jac[k, d] * d/dxi_k
    gphys = np.einsum("ik,kd->id", dN[0], inv_jac[triangle])

    nloc = space.local_size
    values = np.empty(space.components)
    grads = np.empty((space.components, 2))
    for c in range(space.components):
        dofs = space.cell_dofs[triangle, c * nloc : (c + 1) * nloc]
        local = coeffs[dofs]
        values[c] = N[0] @ local
        grads[c] = local @ gphys
    return values, grads
