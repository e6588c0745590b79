"""Gauss quadrature on triangles and assembly of the weak-form operators.

All bilinear operators are assembled element-major into COO triplets and
compressed, so serial results are bit-reproducible.  The 2D reduction of
the out-of-plane field B = (0, 0, b) is used throughout:

    u x B        = b (u2, -u1)
    B x (B x u)  = -b^2 u
    B x grad(phi) = b (-d(phi)/dy, d(phi)/dx)
    (u x B, v x B) = b^2 (u, v)
    (grad(phi), v x B) = b * integral(phi_x v2 - phi_y v1)
    (u x B, grad(psi)) = b * integral(u2 psi_x - u1 psi_y)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.special import roots_jacobi, roots_legendre

from .mesh import affine_maps
from .spaces import FESpace, tabulate_basis

DEFAULT_ASSEMBLY_DEGREE = 5
MAX_QUAD_DEGREE = 12


@dataclass(frozen=True)
class FieldB:
    """Imposed static out-of-plane magnetic field B = (0, 0, b)."""

    b: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.b):
            raise ValueError(f"field magnitude must be finite, got {self.b}")


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points with positive weights summing to one."""

    degree: int
    points: NDArray[np.float64]
    weights: NDArray[np.float64]


def _orbit3(a: float) -> np.ndarray:
    c = 1.0 - 2.0 * a
    return np.array([[c, a, a], [a, c, a], [a, a, c]])


def _orbit6(a: float, b: float) -> np.ndarray:
    c = 1.0 - a - b
    return np.array(
        [[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]]
    )


def _collapsed_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor Gauss-Legendre x Gauss-Jacobi rule collapsed onto the triangle.

    Exact to machine precision for total degree <= degree, all weights
    positive; n^2 points with n = ceil((degree + 1) / 2).
    """
    n = (degree + 2) // 2
    xu, wu = roots_legendre(n)
    xv, wv = roots_jacobi(n, 1.0, 0.0)
    u, wu = (xu + 1.0) / 2.0, wu / 2.0
    v, wv = (xv + 1.0) / 2.0, wv / 4.0
    U, V = np.meshgrid(u, v)
    WU, WV = np.meshgrid(wu, wv)
    xi = (U * (1.0 - V)).ravel()
    eta = V.ravel()
    pts = np.column_stack([1.0 - xi - eta, xi, eta])
    # normalize so weights sum to 1 (reference area 1/2 carried by caller)
    return pts, (WU * WV).ravel() * 2.0


def quad_rule(degree: int) -> QuadratureRule:
    """Symmetric rule for low degrees, collapsed tensor rule above five."""
    if degree < 1 or degree > MAX_QUAD_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree}")
    if degree == 1:
        pts = np.array([[1.0, 1.0, 1.0]]) / 3.0
        w = np.array([1.0])
    elif degree == 2:
        pts = _orbit3(1.0 / 6.0)
        w = np.full(3, 1.0 / 3.0)
    elif degree in (3, 4):
        pts = np.vstack([_orbit3(0.445948490915965), _orbit3(0.091576213509771)])
        w = np.concatenate(
            [np.full(3, 0.223381589678011), np.full(3, 0.109951743655322)]
        )
    elif degree == 5:
        s15 = np.sqrt(15.0)
        pts = np.vstack(
            [
                np.array([[1.0, 1.0, 1.0]]) / 3.0,
                _orbit3((6.0 + s15) / 21.0),
                _orbit3((6.0 - s15) / 21.0),
            ]
        )
        w = np.concatenate(
            [
                [9.0 / 40.0],
                np.full(3, (155.0 + s15) / 1200.0),
                np.full(3, (155.0 - s15) / 1200.0),
            ]
        )
    else:
        pts, w = _collapsed_rule(degree)
    return QuadratureRule(degree=degree, points=pts, weights=w)


def _physical_gradients(space: FESpace, dN: np.ndarray) -> np.ndarray:
    """Map reference gradients to physical ones: (ne, nq, nloc, 2)."""
    _, _, inv_jac, _ = affine_maps(space.mesh)
    return np.einsum("qik,ekd->eqid", dN, inv_jac)


def _scalar_cell_dofs(space: FESpace) -> np.ndarray:
    return space.cell_dofs[:, : space.local_size]


def _to_csr(
    local: np.ndarray,
    rows_map: np.ndarray,
    cols_map: np.ndarray,
    shape: tuple[int, int],
) -> sp.csr_matrix:
    """Scatter (ne, ni, nj) local blocks into CSR, element-major order."""
    ne, ni, nj = local.shape
    rows = np.repeat(rows_map, nj, axis=1).ravel()
    cols = np.tile(cols_map, (1, ni)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=shape).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def assemble_mass(space: FESpace, rule: QuadratureRule | None = None) -> sp.csr_matrix:
    """L2 inner product matrix; block diagonal over components."""
    rule = rule or quad_rule(DEFAULT_ASSEMBLY_DEGREE)
    N, _ = tabulate_basis(space.degree, rule.points)
    _, _, _, area = affine_maps(space.mesh)
    ref = np.einsum("q,qi,qj->ij", rule.weights, N, N)
    local = area[:, None, None] * ref[None, :, :]
    dofs = _scalar_cell_dofs(space)
    n = space.scalar_ndofs
    scalar = _to_csr(local, dofs, dofs, (n, n))
    if space.components == 1:
        return scalar
    return sp.block_diag([scalar, scalar], format="csr")


def assemble_stiffness(
    space: FESpace, rule: QuadratureRule | None = None
) -> sp.csr_matrix:
    """Dirichlet energy matrix (grad u, grad v); block diagonal over components."""
    rule = rule or quad_rule(DEFAULT_ASSEMBLY_DEGREE)
    _, dN = tabulate_basis(space.degree, rule.points)
    _, _, _, area = affine_maps(space.mesh)
    g = _physical_gradients(space, dN)
    local = np.einsum("q,eqid,eqjd,e->eij", rule.weights, g, g, area)
    dofs = _scalar_cell_dofs(space)
    n = space.scalar_ndofs
    scalar = _to_csr(local, dofs, dofs, (n, n))
    if space.components == 1:
        return scalar
    return sp.block_diag([scalar, scalar], format="csr")


class ConvectionKernel:
    """Quadrature tables for the skew-symmetric convection form on one space.

    Reused every time step: the implicit matrix C(w) with
    v' C(w) u = 0.5 (w . grad u, v) - 0.5 (w . grad v, u), and its action
    on a known field without forming the matrix.
    """

    def __init__(self, space: FESpace, rule: QuadratureRule | None = None):
        if space.components != 2:
            raise ValueError("convection is defined on the vector velocity space")
        self.space = space
        self.rule = rule or quad_rule(DEFAULT_ASSEMBLY_DEGREE)
        self.N, dN = tabulate_basis(space.degree, self.rule.points)
        _, _, _, self.area = affine_maps(space.mesh)
        self.g = _physical_gradients(space, dN)
        self.dofs = _scalar_cell_dofs(space)
        self.n_scalar = space.scalar_ndofs

    def _at_quad(self, coeffs: np.ndarray):
        """Component values of a vector field at all quadrature points."""
        cx = coeffs[self.dofs]
        cy = coeffs[self.dofs + self.n_scalar]
        return np.einsum("ei,qi->eq", cx, self.N), np.einsum("ei,qi->eq", cy, self.N)

    def matrix(self, w_coeffs: np.ndarray) -> sp.csr_matrix:
        """Assemble C(w); exactly skew-symmetric by construction."""
        wx, wy = self._at_quad(w_coeffs)
        # (w . grad) of trial basis j at each quad point
        wdg = wx[:, :, None] * self.g[..., 0] + wy[:, :, None] * self.g[..., 1]
        adv = np.einsum("q,qi,eqj,e->eij", self.rule.weights, self.N, wdg, self.area)
        local = 0.5 * (adv - np.swapaxes(adv, 1, 2))
        n = self.n_scalar
        scalar = _to_csr(local, self.dofs, self.dofs, (n, n))
        return sp.block_diag([scalar, scalar], format="csr")

    def apply(self, w_coeffs: np.ndarray, u_coeffs: np.ndarray) -> np.ndarray:
        """Compute C(w) @ u componentwise without forming the matrix."""
        wx, wy = self._at_quad(w_coeffs)
        out = np.zeros(self.space.ndofs)
        for c, offset in ((0, 0), (1, self.n_scalar)):
            cu = u_coeffs[self.dofs + offset]
            uq = np.einsum("ei,qi->eq", cu, self.N)
            gu = np.einsum("ei,eqid->eqd", cu, self.g)
            # 0.5 * ((w . grad u_c) , N_i) - 0.5 * ((w . grad N_i), u_c)
            wdu = wx * gu[..., 0] + wy * gu[..., 1]
            t1 = np.einsum("q,eq,qi,e->ei", self.rule.weights, wdu, self.N, self.area)
            wdN = wx[:, :, None] * self.g[..., 0] + wy[:, :, None] * self.g[..., 1]
            t2 = np.einsum("q,eqi,eq,e->ei", self.rule.weights, wdN, uq, self.area)
            np.add.at(out, self.dofs + offset, 0.5 * (t1 - t2))
        return out


def assemble_convection(
    space: FESpace, w, rule: QuadratureRule | None = None
) -> sp.csr_matrix:
    """One-shot skew-symmetric convection matrix for wind field ``w``."""
    coeffs = w.coeffs if hasattr(w, "coeffs") else np.asarray(w)
    if coeffs.shape != (space.ndofs,):
        raise ValueError("wind field does not match the velocity space")
    return ConvectionKernel(space, rule).matrix(coeffs)


def assemble_lorentz(
    space: FESpace, field: FieldB, rule: QuadratureRule | None = None
) -> sp.csr_matrix:
    """Damping matrix (u x B, v x B), assembled from the cross products.

    Equals b^2 times the vector mass matrix; kept as an independent
    assembly so that identity can be checked rather than assumed.
    """
    if space.components != 2:
        raise ValueError("Lorentz coupling is defined on the vector velocity space")
    rule = rule or quad_rule(DEFAULT_ASSEMBLY_DEGREE)
    N, _ = tabulate_basis(space.degree, rule.points)
    _, _, _, area = affine_maps(space.mesh)
    b = field.b
    ref = np.einsum("q,qi,qj->ij", rule.weights, N, N)
    nloc = space.local_size
    # basis (N_j, 0) x B = b (0, -N_j);  (0, N_j) x B = b (N_j, 0):
    # cross-component products vanish, diagonal blocks carry b^2 N_i N_j.
    local = np.zeros((space.mesh.num_triangles, 2 * nloc, 2 * nloc))
    blk = (b * b) * ref
    local[:, :nloc, :nloc] = area[:, None, None] * blk[None]
    local[:, nloc:, nloc:] = area[:, None, None] * blk[None]
    n = space.ndofs
    return _to_csr(local, space.cell_dofs, space.cell_dofs, (n, n))


def assemble_grad_cross(
    phi_space: FESpace,
    vel_space: FESpace,
    field: FieldB,
    rule: QuadratureRule | None = None,
) -> sp.csr_matrix:
    """Coupling G with (G phi)_i = b * integral(phi_x (v_i)_2 - phi_y (v_i)_1).

    Rows are velocity test functions, columns potential trial functions;
    G' u gives the potential-test functionals (u x B, grad psi).
    """
    if phi_space.mesh is not vel_space.mesh:
        raise ValueError("potential and velocity spaces must share one mesh")
    if vel_space.components != 2 or phi_space.components != 1:
        raise ValueError("expected scalar potential and 2-vector velocity spaces")
    rule = rule or quad_rule(DEFAULT_ASSEMBLY_DEGREE)
    Nv, _ = tabulate_basis(vel_space.degree, rule.points)
    _, dNp = tabulate_basis(phi_space.degree, rule.points)
    _, _, _, area = affine_maps(vel_space.mesh)
    gp = _physical_gradients(phi_space, dNp)
    b = field.b

    vdofs = _scalar_cell_dofs(vel_space)
    pdofs = phi_space.cell_dofs
    n_s = vel_space.scalar_ndofs
    shape = (vel_space.ndofs, phi_space.ndofs)

    # x-component tests pick -b phi_y, y-component tests pick +b phi_x
    loc_x = -b * np.einsum("q,qi,eqj,e->eij", rule.weights, Nv, gp[..., 1], area)
    loc_y = b * np.einsum("q,qi,eqj,e->eij", rule.weights, Nv, gp[..., 0], area)
    gx = _to_csr(loc_x, vdofs, pdofs, shape)
    gy = _to_csr(loc_y, vdofs + n_s, pdofs, shape)
    return (gx + gy).tocsr()


def assemble_divergence(
    vel_space: FESpace,
    p_space: FESpace,
    rule: QuadratureRule | None = None,
) -> sp.csr_matrix:
    """Mixed divergence matrix D with D[q, v] = integral(q * div v)."""
    if vel_space.mesh is not p_space.mesh:
        raise ValueError("velocity and pressure spaces must share one mesh")
    rule = rule or quad_rule(DEFAULT_ASSEMBLY_DEGREE)
    Np, _ = tabulate_basis(p_space.degree, rule.points)
    _, dNv = tabulate_basis(vel_space.degree, rule.points)
    _, _, _, area = affine_maps(vel_space.mesh)
    gv = _physical_gradients(vel_space, dNv)

    pdofs = p_space.cell_dofs
    vdofs = _scalar_cell_dofs(vel_space)
    n_s = vel_space.scalar_ndofs
    shape = (p_space.ndofs, vel_space.ndofs)

    loc_x = np.einsum("q,qi,eqj,e->eij", rule.weights, Np, gv[..., 0], area)
    loc_y = np.einsum("q,qi,eqj,e->eij", rule.weights, Np, gv[..., 1], area)
    dx = _to_csr(loc_x, pdofs, vdofs, shape)
    dy = _to_csr(loc_y, pdofs, vdofs + n_s, shape)
    return (dx + dy).tocsr()


def assemble_load(
    space: FESpace, f, quad_degree: int = DEFAULT_ASSEMBLY_DEGREE
) -> NDArray[np.float64]:
    """Load vector F[i] = integral(f . basis_i) by quadrature of degree ``quad_degree``.

    ``f(x, y)`` must be vectorized; for vector spaces it returns a pair of
    component arrays stacked along axis 0.
    """
    rule = quad_rule(quad_degree)
    N, _ = tabulate_basis(space.degree, rule.points)
    origin, jac, _, area = affine_maps(space.mesh)
    # physical quadrature points: x = v0 + J @ (xi, eta)
    ref = rule.points[:, 1:]
    xq = origin[:, None, :] + np.einsum("edk,qk->eqd", jac, ref)
    fvals = np.asarray(f(xq[..., 0], xq[..., 1]), dtype=np.float64)

    out = np.zeros(space.ndofs)
    dofs = _scalar_cell_dofs(space)
    if space.components == 1:
        vals = np.broadcast_to(fvals, xq.shape[:2])
        contrib = np.einsum("q,eq,qi,e->ei", rule.weights, vals, N, area)
        np.add.at(out, dofs, contrib)
    else:
        for c, offset in ((0, 0), (1, space.scalar_ndofs)):
            contrib = np.einsum("q,eq,qi,e->ei", rule.weights, fvals[c], N, area)
            np.add.at(out, dofs + offset, contrib)
    return out


class DirichletSystem:
    """Row/column elimination of Dirichlet DOFs with reusable lift data.

    The eliminated matrix is shared by every right-hand side while the
    boundary values may differ per solve, which is what lets one
    factorization serve a whole ensemble.
    """

    def __init__(self, matrix: sp.spmatrix, boundary_dofs: NDArray[np.int64]):
        n = matrix.shape[0]
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError("Dirichlet elimination needs a square system")
        bdofs = np.asarray(boundary_dofs, dtype=np.int64)
        if bdofs.size and (bdofs.min() < 0 or bdofs.max() >= n):
            raise ValueError("boundary DOF index out of range")
        self.n = n
        self.boundary_dofs = bdofs
        self._original = matrix.tocsr()

        keep = np.ones(n)
        keep[bdofs] = 0.0
        mask = sp.diags(keep)
        ident = np.zeros(n)
        ident[bdofs] = 1.0
        self.matrix = (mask @ self._original @ mask + sp.diags(ident)).tocsr()
        self.matrix.sort_indices()

    def constrained_rhs(
        self, rhs: NDArray[np.float64], values: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        """Fold boundary values into the right-hand side."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.boundary_dofs.shape:
            raise ValueError("one boundary value per boundary DOF is required")
        lift = np.zeros(self.n)
        lift[self.boundary_dofs] = values
        out = rhs - self._original @ lift
        out[self.boundary_dofs] = values
        return out


def apply_dirichlet(
    matrix: sp.spmatrix,
    rhs: NDArray[np.float64],
    boundary_dofs: NDArray[np.int64],
    boundary_values: NDArray[np.float64],
):
    """One-shot Dirichlet enforcement; returns the modified (matrix, rhs)."""
    system = DirichletSystem(matrix, boundary_dofs)
    return system.matrix, system.constrained_rhs(np.asarray(rhs, float), boundary_values)
