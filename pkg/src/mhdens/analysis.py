"""Norms, errors against closed-form solutions, and convergence rates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from .assembly import quad_rule
from .mesh import affine_maps
from .spaces import FESpace, tabulate_basis

ERROR_QUAD_DEGREE = 8


@dataclass
class ErrorSeries:
    """Errors per refinement level, ordered from coarse to fine."""

    h_labels: list[str] = field(default_factory=list)
    dts: list[float] = field(default_factory=list)
    errors: dict[str, list[float]] = field(default_factory=dict)

    def add_row(self, h_label: str, dt: float, values: dict[str, float]) -> None:
        self.h_labels.append(h_label)
        self.dts.append(dt)
        for name, value in values.items():
            self.errors.setdefault(name, []).append(value)


class FieldSampler:
    """Cached quadrature tables for one space; evaluates fields and errors.

    Caching the geometry and basis tables pays off when errors are
    measured every time step of a long run.
    """

    def __init__(self, space: FESpace, quad_degree: int = ERROR_QUAD_DEGREE):
        self.space = space
        self.rule = quad_rule(quad_degree)
        self.N, dN = tabulate_basis(space.degree, self.rule.points)
        origin, jac, inv_jac, area = affine_maps(space.mesh)
        self.area = area
        self.g = np.einsum("qik,ekd->eqid", dN, inv_jac)
        ref = self.rule.points[:, 1:]
        xq = origin[:, None, :] + np.einsum("edk,qk->eqd", jac, ref)
        self.xq, self.yq = xq[..., 0], xq[..., 1]
        self.dofs = space.cell_dofs[:, : space.local_size]

    def _components(self, coeffs: np.ndarray):
        n = self.space.scalar_ndofs
        return [
            coeffs[self.dofs + c * n] for c in range(self.space.components)
        ]

    def values(self, coeffs: np.ndarray) -> list[np.ndarray]:
        """Per-component field values at the quadrature points, (ne, nq)."""
        return [np.einsum("ei,qi->eq", c, self.N) for c in self._components(coeffs)]

    def gradients(self, coeffs: np.ndarray) -> list[np.ndarray]:
        """Per-component gradients at the quadrature points, (ne, nq, 2)."""
        return [np.einsum("ei,eqid->eqd", c, self.g) for c in self._components(coeffs)]

    def integrate(self, density: np.ndarray) -> float:
        """Integrate a (ne, nq) density over the mesh."""
        return float(np.einsum("q,eq,e->", self.rule.weights, density, self.area))

    def l2_norm_sq(self, coeffs: np.ndarray) -> float:
        return self.integrate(sum(v * v for v in self.values(coeffs)))

    def h1_seminorm_sq(self, coeffs: np.ndarray) -> float:
        return self.integrate(
            sum(np.sum(gc * gc, axis=-1) for gc in self.gradients(coeffs))
        )

    def l2_error_sq(self, coeffs: np.ndarray, exact: Callable) -> float:
        """exact(x, y) gives the component values at the quadrature points."""
        vals = self.values(coeffs)
        ex = np.asarray(exact(self.xq, self.yq), dtype=np.float64)
        if self.space.components == 1:
            diff = (vals[0] - ex) ** 2
        else:
            diff = (vals[0] - ex[0]) ** 2 + (vals[1] - ex[1]) ** 2
        return self.integrate(diff)

    def h1_error_sq(self, coeffs: np.ndarray, exact_grad: Callable) -> float:
        """exact_grad(x, y) gives the gradient, shape (components, 2, ...)."""
        grads = self.gradients(coeffs)
        ex = np.asarray(exact_grad(self.xq, self.yq), dtype=np.float64)
        if self.space.components == 1:
            ex = ex[None]
        density = 0.0
        for c, gc in enumerate(grads):
            density = density + (gc[..., 0] - ex[c, 0]) ** 2 + (gc[..., 1] - ex[c, 1]) ** 2
        return self.integrate(density)


def l2_norm(space: FESpace, coeffs: np.ndarray, quad_degree: int | None = None) -> float:
    """L2 norm of a finite-element function."""
    deg = quad_degree or 2 * space.degree
    return float(np.sqrt(max(FieldSampler(space, deg).l2_norm_sq(coeffs), 0.0)))


def h1_seminorm(space: FESpace, coeffs: np.ndarray, quad_degree: int | None = None) -> float:
    """H1 seminorm (L2 norm of the gradient)."""
    deg = quad_degree or max(2 * (space.degree - 1), 1)
    return float(np.sqrt(max(FieldSampler(space, deg).h1_seminorm_sq(coeffs), 0.0)))


def l2_error_vs_exact(
    space: FESpace,
    coeffs: np.ndarray,
    exact: Callable,
    quad_degree: int = ERROR_QUAD_DEGREE,
) -> float:
    """Quadrature error against the closed form, never its interpolant."""
    return float(np.sqrt(max(FieldSampler(space, quad_degree).l2_error_sq(coeffs, exact), 0.0)))


def h1_error_vs_exact(
    space: FESpace,
    coeffs: np.ndarray,
    exact_grad: Callable,
    quad_degree: int = ERROR_QUAD_DEGREE,
) -> float:
    return float(
        np.sqrt(max(FieldSampler(space, quad_degree).h1_error_sq(coeffs, exact_grad), 0.0))
    )


def discrete_norms(step_values: Sequence[float], dt: float) -> tuple[float, float]:
    """Max-over-steps and dt-weighted l2-over-steps, both including step 0."""
    values = np.asarray(step_values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("discrete norms need at least the initial step")
    sup = float(np.max(values))
    l2_time = float(np.sqrt(np.sum(values * values) * dt))
    return sup, l2_time


def convergence_rate(
    errors: Sequence[float], h_values: Sequence[float]
) -> list[float]:
    """Observed order between consecutive refinement rows."""
    errors = np.asarray(errors, dtype=np.float64)
    h_values = np.asarray(h_values, dtype=np.float64)
    if errors.size < 2 or errors.size != h_values.size:
        raise ValueError("need at least two rows with matching mesh sizes")
    if np.any(errors <= 0.0):
        raise ValueError("convergence rates need strictly positive errors")
    if np.any(h_values <= 0.0) or len(set(h_values.tolist())) != h_values.size:
        raise ValueError("mesh sizes must be positive and distinct")
    return [
        float(np.log(errors[i - 1] / errors[i]) / np.log(h_values[i - 1] / h_values[i]))
        for i in range(1, errors.size)
    ]


def ensemble_energy(
    vel_space: FESpace,
    mean_velocity: np.ndarray,
    phi_space: FESpace,
    mean_potential: np.ndarray,
) -> float:
    """System energy of the averaged fields, 0.5 ||mean u||^2 + 0.5 ||mean phi||^2."""
    ku = FieldSampler(vel_space, 2 * vel_space.degree).l2_norm_sq(mean_velocity)
    kp = FieldSampler(phi_space, 2 * phi_space.degree).l2_norm_sq(mean_potential)
    return 0.5 * ku + 0.5 * kp
