"""Partitioned ensemble time stepping with one shared matrix per step.

Every step solves two uncoupled sub-problems from time-level-n data:
a velocity/pressure saddle system whose implicit convection uses the
ensemble mean (so all members share one factorization), and a potential
Poisson solve driven by the lagged velocity.  A per-member serial
baseline with member-own implicit convection is provided for cost and
accuracy comparisons.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray

from .assembly import (
    ConvectionKernel,
    DirichletSystem,
    FieldB,
    assemble_divergence,
    assemble_grad_cross,
    assemble_load,
    assemble_lorentz,
    assemble_mass,
    assemble_stiffness,
    quad_rule,
    tabulate_basis,
)
from .linalg import Factorization, SingularMatrixError, factorize, solve_multi
from .mesh import Mesh, affine_maps
from .spaces import FESpace, FeFunction, build_space, interpolate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelParams:
    """Physical and discretization parameters of one ensemble run."""

    hartmann: float
    interaction: float
    field: FieldB
    dt: float
    t_final: float
    ensemble_size: int

    def __post_init__(self) -> None:
        if self.hartmann <= 0 or self.interaction <= 0:
            raise ValueError("Hartmann and interaction numbers must be positive")
        if self.dt <= 0 or self.t_final < self.dt:
            raise ValueError("need dt > 0 and t_final >= dt")
        if self.ensemble_size < 1:
            raise ValueError("ensemble needs at least one member")

    @property
    def num_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass(frozen=True)
class BCProvider:
    """Time-dependent Dirichlet data; ``None`` fields mean homogeneous."""

    velocity: Callable | None = None
    potential: Callable | None = None

    @classmethod
    def zero(cls) -> "BCProvider":
        return cls()


@dataclass
class EnsembleState:
    """All member fields at one time level, with cached means."""

    step: int
    time: float
    velocities: list[FeFunction]
    pressures: list[FeFunction]
    potentials: list[FeFunction]
    mean_velocity: FeFunction
    mean_potential: FeFunction


@dataclass(frozen=True)
class StepRecord:
    """Per-level monitor data delivered to the observer hook."""

    step: int
    time: float
    velocity_l2: tuple[float, ...]
    potential_l2: tuple[float, ...]
    kappa: tuple[float, ...]
    cfl_exceeded: bool
    energy: float
    stability_fn: tuple[float, ...]


@dataclass
class StepperStats:
    velocity_factorizations: int = 0
    velocity_solves: int = 0
    potential_solves: int = 0
    steps: int = 0
    max_divergence_residual: float = 0.0
    max_pressure_integral: float = 0.0
    max_multiplier: float = 0.0
    cfl_warnings: int = 0


@dataclass(frozen=True)
class ProblemSpaces:
    velocity: FESpace
    pressure: FESpace
    potential: FESpace


def compute_mean(functions: Sequence[FeFunction]) -> FeFunction:
    """Arithmetic mean of the coefficient vectors."""
    if len(functions) == 0:
        raise ValueError("cannot average an empty ensemble")
    stack = np.stack([f.coeffs for f in functions])
    return FeFunction(functions[0].space, stack.mean(axis=0))


def cfl_monitor(
    kernel_stiffness: sp.spmatrix,
    velocities: Sequence[NDArray[np.float64]],
    mean: NDArray[np.float64],
    params: ModelParams,
    h: float,
) -> NDArray[np.float64]:
    """Raw per-member numbers (M^2/N)(dt/h) ||grad(u_j - mean)||^2."""
    m2 = params.hartmann**2
    scale = (m2 / params.interaction) * (params.dt / h)
    out = np.empty(len(velocities))
    for j, u in enumerate(velocities):
        w = u - mean
        out[j] = scale * float(w @ (kernel_stiffness @ w))
    return out


class LoadKernel:
    """Cached quadrature tables for per-step forcing vectors."""

    def __init__(self, space: FESpace, quad_degree: int):
        self.space = space
        self.rule = quad_rule(quad_degree)
        self.N, _ = tabulate_basis(space.degree, self.rule.points)
        origin, jac, _, self.area = affine_maps(space.mesh)
        ref = self.rule.points[:, 1:]
        xq = origin[:, None, :] + np.einsum("edk,qk->eqd", jac, ref)
        self.xq, self.yq = xq[..., 0], xq[..., 1]
        self.dofs = space.cell_dofs[:, : space.local_size]

    def vector(self, f: Callable) -> np.ndarray:
        vals = np.asarray(f(self.xq, self.yq), dtype=np.float64)
        out = np.zeros(self.space.ndofs)
        for c in range(self.space.components):
            contrib = np.einsum(
                "q,eq,qi,e->ei", self.rule.weights, vals[c], self.N, self.area
            )
            np.add.at(out, self.dofs + c * self.space.scalar_ndofs, contrib)
        return out


class EnsembleStepper:
    """Shared-matrix ensemble integrator on Taylor-Hood + P2 spaces.

    Parameters
    ----------
    mesh : triangulation of the flow domain.
    params : physical/time-stepping parameters; ``ensemble_size`` must
        match the number of boundary/forcing providers.
    bcs : one BCProvider per member.
    forcings : one vectorized body force ``f(x, y, t) -> (2, ...)`` per
        member, or None for force-free runs.
    threads : >1 parallelizes per-member right-hand-side assembly; the
        default is strictly serial and bitwise reproducible.
    """

    def __init__(
        self,
        mesh: Mesh,
        params: ModelParams,
        bcs: Sequence[BCProvider],
        forcings: Sequence[Callable] | None = None,
        *,
        threads: int = 1,
        cfl_threshold: float = 1.0,
        observer: Callable[[StepRecord], None] | None = None,
    ):
        if len(bcs) != params.ensemble_size:
            raise ValueError("one BCProvider per ensemble member is required")
        if forcings is not None and len(forcings) != params.ensemble_size:
            raise ValueError("one forcing per ensemble member is required")
        if threads < 1:
            raise ValueError("threads must be >= 1")

        self.mesh = mesh
        self.params = params
        self.bcs = list(bcs)
        self.forcings = list(forcings) if forcings is not None else [None] * params.ensemble_size
        self.threads = threads
        self.cfl_threshold = cfl_threshold
        self.observer = observer
        self.stats = StepperStats()

        self.spaces = ProblemSpaces(
            velocity=build_space(mesh, 2, 2),
            pressure=build_space(mesh, 1, 1),
            potential=build_space(mesh, 2, 1),
        )
        vel, prs, pot = self.spaces.velocity, self.spaces.pressure, self.spaces.potential
        self.n_u, self.n_p = vel.ndofs, prs.ndofs
        self.n_total = self.n_u + self.n_p + 1

        self.mass_v = assemble_mass(vel)
        self.stiff_v = assemble_stiffness(vel)
        self.lorentz = assemble_lorentz(vel, params.field)
        self.mass_s = assemble_mass(pot)
        self.stiff_s = assemble_stiffness(pot)
        self.div = assemble_divergence(vel, prs)
        self.grad_cross = assemble_grad_cross(pot, vel, params.field)
        self.grad_cross_t = self.grad_cross.T.tocsr()
        self.pressure_integral = assemble_load(prs, lambda x, y: np.ones_like(x))

        n_inv = 1.0 / params.interaction
        m2 = params.hartmann**2
        static = (
            (n_inv / params.dt) * self.mass_v + (1.0 / m2) * self.stiff_v + self.lorentz
        ).tocsr()
        mp_col = sp.csr_matrix(self.pressure_integral.reshape(-1, 1))
        self._template = sp.bmat(
            [
                [static, -self.div.T, None],
                [-self.div, None, mp_col],
                [None, mp_col.T, None],
            ],
            format="csr",
        )
        self._n_inv = n_inv

        self.convection = ConvectionKernel(vel)
        self._load = LoadKernel(vel, quad_degree=5)

        # boundary bookkeeping: scalar coordinates once, component-blocked values per solve
        nb = vel.boundary_dofs.size // 2
        self._vel_bdofs = vel.boundary_dofs
        self._vel_bxy = vel.dof_coords[vel.boundary_dofs[:nb]]
        self._pot_bdofs = pot.boundary_dofs
        self._pot_bxy = pot.dof_coords[pot.boundary_dofs]

        self._pot_system = DirichletSystem(self.stiff_s, self._pot_bdofs)
        self._pot_fact = self._factorize(self._pot_system.matrix, "potential Poisson system")

    # -- setup -----------------------------------------------------------

    def _factorize(self, matrix: sp.spmatrix, what: str) -> Factorization:
        try:
            return factorize(matrix)
        except SingularMatrixError as err:
            raise SingularMatrixError(
                err.pivot, f" while factorizing the {what}; check mesh and boundary data"
            ) from err

    def initial_state(
        self,
        velocity_ics: Sequence[Callable],
        potential_ics: Sequence[Callable] | None = None,
    ) -> EnsembleState:
        """Interpolate initial data; a missing potential is recovered by
        one lagged potential solve from the initial velocity."""
        J = self.params.ensemble_size
        if len(velocity_ics) != J:
            raise ValueError("one velocity initial condition per member is required")
        vel = [interpolate(self.spaces.velocity, f) for f in velocity_ics]
        prs = [
            FeFunction(self.spaces.pressure, np.zeros(self.n_p)) for _ in range(J)
        ]
        if potential_ics is not None:
            if len(potential_ics) != J:
                raise ValueError("one potential initial condition per member is required")
            pot = [interpolate(self.spaces.potential, f) for f in potential_ics]
        else:
            pot = [
                FeFunction(
                    self.spaces.potential, self.solve_potential(vel[j].coeffs, 0.0, j)
                )
                for j in range(J)
            ]
        return EnsembleState(
            step=0,
            time=0.0,
            velocities=vel,
            pressures=prs,
            potentials=pot,
            mean_velocity=compute_mean(vel),
            mean_potential=compute_mean(pot),
        )

    # -- boundary data ---------------------------------------------------

    def _velocity_bvals(self, j: int, t: float) -> np.ndarray:
        bc = self.bcs[j].velocity
        if bc is None:
            return np.zeros(self._vel_bdofs.size)
        vals = np.asarray(bc(self._vel_bxy[:, 0], self._vel_bxy[:, 1], t), dtype=np.float64)
        return np.concatenate([vals[0], vals[1]])

    def _potential_bvals(self, j: int, t: float) -> np.ndarray:
        bc = self.bcs[j].potential
        if bc is None:
            return np.zeros(self._pot_bdofs.size)
        return np.asarray(
            bc(self._pot_bxy[:, 0], self._pot_bxy[:, 1], t), dtype=np.float64
        )

    # -- sub-problem 1: velocity and pressure ----------------------------

    def _embed_velocity_block(self, block: sp.csr_matrix, scale: float) -> sp.csr_matrix:
        pad = np.full(self.n_total - self.n_u, block.indptr[-1], dtype=block.indptr.dtype)
        indptr = np.concatenate([block.indptr, pad])
        return sp.csr_matrix(
            (scale * block.data, block.indices, indptr),
            shape=(self.n_total, self.n_total),
        )

    def build_shared_velocity_system(self, mean_velocity: NDArray[np.float64]) -> sp.csr_matrix:
        """Saddle matrix shared by every member at this step (before BC rows)."""
        conv = self.convection.matrix(mean_velocity)
        return self._template + self._embed_velocity_block(conv, self._n_inv)

    def build_member_rhs(self, j: int, state: EnsembleState) -> np.ndarray:
        """Right-hand side of sub-problem 1 for member ``j`` (before BC rows)."""
        u = state.velocities[j].coeffs
        phi = state.potentials[j].coeffs
        mean = state.mean_velocity.coeffs
        t_new = state.time + self.params.dt

        r_u = (self._n_inv / self.params.dt) * (self.mass_v @ u)
        r_u -= self._n_inv * self.convection.apply(u - mean, u)
        if self.forcings[j] is not None:
            f = self.forcings[j]
            r_u += self._load.vector(lambda x, y: f(x, y, t_new))
        r_u += self.grad_cross @ phi

        out = np.zeros(self.n_total)
        out[: self.n_u] = r_u
        return out

    def _member_rhs_bc(self, dirichlet: DirichletSystem, j: int, state: EnsembleState):
        t_new = state.time + self.params.dt
        raw = self.build_member_rhs(j, state)
        return dirichlet.constrained_rhs(raw, self._velocity_bvals(j, t_new))

    def velocity_step(self, state: EnsembleState):
        """Factorize the shared system once and solve every member's RHS."""
        J = self.params.ensemble_size
        matrix = self.build_shared_velocity_system(state.mean_velocity.coeffs)
        dirichlet = DirichletSystem(matrix, self._vel_bdofs)
        fact = self._factorize(dirichlet.matrix, "shared velocity system")
        self.stats.velocity_factorizations += 1

        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                rhs = list(
                    pool.map(lambda j: self._member_rhs_bc(dirichlet, j, state), range(J))
                )
        else:
            rhs = [self._member_rhs_bc(dirichlet, j, state) for j in range(J)]

        solutions = solve_multi(fact, rhs)
        self.stats.velocity_solves += J

        new_u, new_p, multipliers = [], [], []
        for x in solutions:
            u = x[: self.n_u]
            p = x[self.n_u : self.n_u + self.n_p]
            lam = float(x[-1])
            new_u.append(FeFunction(self.spaces.velocity, u))
            new_p.append(FeFunction(self.spaces.pressure, p))
            multipliers.append(lam)
            scale = max(float(np.max(np.abs(u))), 1.0)
            self.stats.max_divergence_residual = max(
                self.stats.max_divergence_residual,
                float(np.max(np.abs(self.div @ u))) / scale,
            )
            self.stats.max_pressure_integral = max(
                self.stats.max_pressure_integral,
                abs(float(self.pressure_integral @ p)),
            )
            self.stats.max_multiplier = max(self.stats.max_multiplier, abs(lam))
        return new_u, new_p, multipliers

    # -- sub-problem 2: electric potential -------------------------------

    def solve_potential(self, u_coeffs: NDArray[np.float64], t_bc: float, j: int) -> np.ndarray:
        """Poisson solve with lagged-velocity data and boundary values at ``t_bc``."""
        raw = self.grad_cross_t @ u_coeffs
        rhs = self._pot_system.constrained_rhs(raw, self._potential_bvals(j, t_bc))
        self.stats.potential_solves += 1
        return self._pot_fact.solve(rhs)

    def potential_step(self, state: EnsembleState) -> list[FeFunction]:
        """All member potentials at the next level from level-n velocities."""
        t_new = state.time + self.params.dt
        J = self.params.ensemble_size
        rhs = []
        for j in range(J):
            raw = self.grad_cross_t @ state.velocities[j].coeffs
            rhs.append(
                self._pot_system.constrained_rhs(raw, self._potential_bvals(j, t_new))
            )
        sols = solve_multi(self._pot_fact, rhs)
        self.stats.potential_solves += J
        return [FeFunction(self.spaces.potential, s) for s in sols]

    # -- full step and monitors ------------------------------------------

    def advance(self, state: EnsembleState) -> EnsembleState:
        """One step of the partitioned scheme; both sub-problems read level n."""
        kappa = self.cfl_numbers(state)
        if kappa.size and float(np.max(kappa)) > self.cfl_threshold:
            self.stats.cfl_warnings += 1
            if self.stats.cfl_warnings == 1:
                log.warning(
                    "step %d: CFL monitor %.3e exceeds threshold %.3e",
                    state.step,
                    float(np.max(kappa)),
                    self.cfl_threshold,
                )

        new_phi = self.potential_step(state)
        new_u, new_p, _ = self.velocity_step(state)

        new_state = EnsembleState(
            step=state.step + 1,
            time=state.time + self.params.dt,
            velocities=new_u,
            pressures=new_p,
            potentials=new_phi,
            mean_velocity=compute_mean(new_u),
            mean_potential=compute_mean(new_phi),
        )
        self.stats.steps += 1
        if self.observer is not None:
            self.observer(self.record(new_state))
        return new_state

    def serial_baseline_step(self, j: int, state: EnsembleState):
        """Non-ensemble IMEX step for member ``j``: implicit convection uses
        the member's own velocity, no fluctuation term, its own factorization."""
        u = state.velocities[j].coeffs
        phi = state.potentials[j].coeffs
        t_new = state.time + self.params.dt

        matrix = self.build_shared_velocity_system(u)
        dirichlet = DirichletSystem(matrix, self._vel_bdofs)
        fact = self._factorize(dirichlet.matrix, "serial velocity system")
        self.stats.velocity_factorizations += 1

        r_u = (self._n_inv / self.params.dt) * (self.mass_v @ u)
        if self.forcings[j] is not None:
            f = self.forcings[j]
            r_u += self._load.vector(lambda x, y: f(x, y, t_new))
        r_u += self.grad_cross @ phi
        raw = np.zeros(self.n_total)
        raw[: self.n_u] = r_u
        rhs = dirichlet.constrained_rhs(raw, self._velocity_bvals(j, t_new))

        x = solve_multi(fact, [rhs])[0]
        self.stats.velocity_solves += 1
        new_u = FeFunction(self.spaces.velocity, x[: self.n_u])
        new_p = FeFunction(self.spaces.pressure, x[self.n_u : self.n_u + self.n_p])
        new_phi = FeFunction(self.spaces.potential, self.solve_potential(u, t_new, j))
        return new_u, new_p, new_phi

    def cfl_numbers(self, state: EnsembleState) -> NDArray[np.float64]:
        return cfl_monitor(
            self.stiff_v,
            [f.coeffs for f in state.velocities],
            state.mean_velocity.coeffs,
            self.params,
            self.mesh.h,
        )

    def energy(self, state: EnsembleState) -> float:
        """System energy of the means, 0.5 ||mean u||^2 + 0.5 ||mean phi||^2."""
        mu = state.mean_velocity.coeffs
        mp = state.mean_potential.coeffs
        return 0.5 * float(mu @ (self.mass_v @ mu)) + 0.5 * float(mp @ (self.mass_s @ mp))

    def stability_functional(self, state: EnsembleState) -> NDArray[np.float64]:
        """Per-member decay functional
        (1/N)||u||^2 + (dt/2M^2)||grad u||^2 + dt ||B x u||^2 + dt ||grad phi||^2."""
        p = self.params
        m2 = p.hartmann**2
        out = np.empty(p.ensemble_size)
        for j in range(p.ensemble_size):
            u = state.velocities[j].coeffs
            phi = state.potentials[j].coeffs
            out[j] = (
                (u @ (self.mass_v @ u)) / p.interaction
                + (p.dt / (2.0 * m2)) * (u @ (self.stiff_v @ u))
                + p.dt * (u @ (self.lorentz @ u))
                + p.dt * (phi @ (self.stiff_s @ phi))
            )
        return out

    def record(self, state: EnsembleState) -> StepRecord:
        kappa = self.cfl_numbers(state)
        vel_l2 = tuple(
            float(np.sqrt(max(f.coeffs @ (self.mass_v @ f.coeffs), 0.0)))
            for f in state.velocities
        )
        pot_l2 = tuple(
            float(np.sqrt(max(f.coeffs @ (self.mass_s @ f.coeffs), 0.0)))
            for f in state.potentials
        )
        return StepRecord(
            step=state.step,
            time=state.time,
            velocity_l2=vel_l2,
            potential_l2=pot_l2,
            kappa=tuple(float(k) for k in kappa),
            cfl_exceeded=bool(kappa.size and float(np.max(kappa)) > self.cfl_threshold),
            energy=self.energy(state),
            stability_fn=tuple(float(s) for s in self.stability_functional(state)),
        )
