"""Pressure-stabilized Lagrange-Galerkin time stepping on P1/P1 tets.

Each step solves one linear system for (v^k, p^k): the material derivative is
approximated along characteristics, (v^k(x) - v^{k-1}(x - v^{k-1}(x) tau)) / tau,
so the matrix carries only mass, viscous, pressure-coupling and stabilization
blocks and is constant over the run; the upstream composition enters the
right-hand side through point location and P1 interpolation at quadrature
points.  Equal-order velocity/pressure is made stable by the grad-grad
pressure term scaled with delta_s0 * h^2.

Time stepping is strictly sequential; states are immutable snapshots safe to
hand to concurrent diagnostics.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .geometry import Mesh
from .pointlocate import TetLocator, get_locator


class ConvergenceError(RuntimeError):
    """Linear solve failed to reach the requested residual."""


@dataclass(eq=False)
class FieldState:
    """Nodal velocity and pressure at one time level t = step_index * tau."""

    step_index: int
    time: float
    velocity: np.ndarray   # (n_nodes, 3)
    pressure: np.ndarray   # (n_nodes,)

    def copy(self) -> "FieldState":
        return FieldState(self.step_index, self.time,
                          self.velocity.copy(), self.pressure.copy())

    def validate(self, mesh: Mesh, gauge_tol: float = 1e-10):
        if self.velocity.shape != (mesh.n_nodes, 3):
            raise ValueError("velocity array does not match mesh node count")
        if self.pressure.shape != (mesh.n_nodes,):
            raise ValueError("pressure array does not match mesh node count")
        if self.step_index >= 1:
            vb = np.abs(self.velocity[mesh.boundary_nodes]).max(initial=0.0)
            if vb != 0.0:
                raise ValueError(f"boundary velocity not zero (max {vb:.3e})")
            pm = abs(float(self.pressure.mean()))
            if pm > gauge_tol:
                raise ValueError(f"pressure mean {pm:.3e} exceeds gauge tol")


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping parameters; nu = 1/Re with the unit-radius scaling."""

    nu: float
    tau: float
    t_end: float
    delta_s0: float = 1.0
    linear_tol: float = 1e-8
    linear_max_iter: int = 0          # 0: 10x system size
    forcing: object = None            # f(points, t) -> (n, 3); verification only
    stab_h: str = "global"            # "global" or "element" h in the stab term
    direct_threshold: int = 25_000    # sparse LU below; block-preconditioned
                                      # GMRES above (LU fill grows too fast)

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError(f"nu must be positive, got {self.nu}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.delta_s0 <= 0:
            raise ValueError(f"delta_s0 must be positive, got {self.delta_s0}")
        if self.stab_h not in ("global", "element"):
            raise ValueError(f"stab_h must be 'global' or 'element', got {self.stab_h!r}")

    @property
    def n_steps(self) -> int:
        # floor(t_end / tau) with a relative guard so an exactly representable
        # ratio like 3 / 1.25e-2 lands on 240, not 239
        return int(math.floor(self.t_end / self.tau * (1.0 + 1e-12) + 1e-12))


def upstream_point(mesh: Mesh, state: FieldState, x, tau: float,
                   locator: TetLocator | None = None) -> np.ndarray:
    """Foot of the characteristic through x: x - v(x) tau, clamped to stay
    inside the mesh (pulled back along the segment and nudged inward)."""
    loc = locator if locator is not None else get_locator(mesh)
    p = np.asarray(x, dtype=float)
    tet = loc.locate(p)
    if tet < 0:
        raise ValueError(f"upstream_point: x={p} is not inside the mesh")
    v = loc.interpolate_at(np.array([tet]), p[None], state.velocity)[0]
    target = p - tau * v
    pts, _ = loc.clamp_inside(p[None], target[None], seeds=[tet])
    return pts[0]


def locate_and_interpolate(mesh: Mesh, p, field_values: np.ndarray):
    """P1 interpolation of a nodal field at an arbitrary interior point."""
    from .pointlocate import locate_and_interpolate as _impl
    return _impl(mesh, p, field_values)


class StepOperator:
    """Assembled constant system plus per-step right-hand side machinery.

    Building the operator factorizes nothing; the factorization happens on
    first solve and is reused for every subsequent step.
    """

    def __init__(self, mesh: Mesh, cfg: SolverConfig):
        self.mesh = mesh
        self.cfg = cfg
        self.locator = get_locator(mesh)
        self.basis = fem.element_basis(mesh)

        interior = ~mesh.boundary_mask()
        self.interior_nodes = np.nonzero(interior)[0]
        self.n_int = len(self.interior_nodes)
        self.n_nodes = mesh.n_nodes

        mass = fem.assemble_mass(mesh)
        stiff = fem.assemble_stiffness(mesh)
        gx, gy, gz = fem.assemble_divergence(mesh)
        self.mass = mass
        self.lumped = fem.lumped_mass(mesh)

        ii = self.interior_nodes
        s_vel = (mass / cfg.tau + cfg.nu * stiff)[ii][:, ii].tocsr()
        g_blocks = [g[ii] for g in (gx, gy, gz)]
        if cfg.stab_h == "global":
            stab = cfg.delta_s0 * mesh.h ** 2 * stiff
        else:
            stab = cfg.delta_s0 * _element_h2_stiffness(mesh)

        # The pressure is defined up to a constant (the stabilized continuity
        # rows annihilate constants, interior momentum rows likewise).  Pin
        # one pressure dof to keep the factorization sparse; the returned
        # pressure is re-gauged to zero mean afterwards, so the pin leaves no
        # trace in the results.
        pin = 0
        keep = np.ones(mesh.n_nodes)
        keep[pin] = 0.0
        z_row = sp.diags(keep)
        div_blocks = [(z_row @ g.T).tocsr() for g in g_blocks]
        stab = (z_row @ stab).tolil()
        stab[pin, pin] = 1.0
        stab = stab.tocsr()

        rows = [
            [s_vel, None, None, -g_blocks[0]],
            [None, s_vel, None, -g_blocks[1]],
            [None, None, s_vel, -g_blocks[2]],
            [div_blocks[0], div_blocks[1], div_blocks[2], stab],
        ]
        self.matrix = sp.bmat(rows, format="csr")
        self.n_unknowns = self.matrix.shape[0]
        self._s_vel = s_vel
        self._g_blocks = g_blocks
        self._schur = stab + cfg.tau * (z_row @ stiff).tocsr()
        self._lu = None
        self._block_prec = None

        self._quad_pts = fem.quadrature_points(mesh).reshape(-1, 3)
        self._quad_seeds = np.repeat(np.arange(mesh.n_tets), 4)

    # -- right-hand side -------------------------------------------------

    def composed_velocity(self, state: FieldState) -> np.ndarray:
        """v^{k-1}(x - v^{k-1}(x) tau) at every quadrature point, (n_tets, 4, 3)."""
        vq = fem.field_at_quadrature(self.mesh, state.velocity)
        targets = self._quad_pts - self.cfg.tau * vq.reshape(-1, 3)
        pts, tets = self.locator.clamp_inside(self._quad_pts, targets,
                                              seeds=self._quad_seeds)
        vals = self.locator.interpolate_at(tets, pts, state.velocity)
        return vals.reshape(self.mesh.n_tets, 4, 3)

    def assemble_rhs(self, prev: FieldState) -> np.ndarray:
        composed = self.composed_velocity(prev)
        load = fem.scatter_quadrature_load(self.mesh, composed) / self.cfg.tau
        if self.cfg.forcing is not None:
            t_new = (prev.step_index + 1) * self.cfg.tau
            f = np.asarray(self.cfg.forcing(self._quad_pts, t_new))
            load += fem.scatter_quadrature_load(
                self.mesh, f.reshape(self.mesh.n_tets, 4, 3))
        rhs = np.zeros(self.n_unknowns)
        ii = self.interior_nodes
        n = self.n_int
        for d in range(3):
            rhs[d * n:(d + 1) * n] = load[ii, d]
        return rhs

    # -- linear solve -----------------------------------------------------

    def solve(self, rhs: np.ndarray):
        """Solve the step system; returns full-mesh (velocity, pressure).

        The relative residual is checked on the raw solution, then boundary
        velocities are set exactly to zero and the pressure is shifted to
        zero mean (pure gauge).
        """
        cfg = self.cfg
        if self.n_unknowns <= cfg.direct_threshold:
            if self._lu is None:
                self._lu = spla.splu(self.matrix.tocsc())
            x = self._lu.solve(rhs)
        else:
            x = self._solve_krylov(rhs)

        bnorm = float(np.linalg.norm(rhs))
        res = float(np.linalg.norm(self.matrix @ x - rhs))
        if res > cfg.linear_tol * max(bnorm, 1.0):
            raise ConvergenceError(
                f"linear solve residual {res:.3e} exceeds "
                f"{cfg.linear_tol:.1e} * max(|b|, 1) = "
                f"{cfg.linear_tol * max(bnorm, 1.0):.3e}"
            )

        n = self.n_int
        velocity = np.zeros((self.n_nodes, 3))
        for d in range(3):
            velocity[self.interior_nodes, d] = x[d * n:(d + 1) * n]
        pressure = x[3 * n:].copy()
        pressure -= pressure.mean()
        return velocity, pressure

    def _solve_krylov(self, rhs: np.ndarray) -> np.ndarray:
        """GMRES with a block upper-triangular preconditioner.

        The velocity block is one scalar SPD matrix shared by all three
        components; the pressure Schur complement is approximated by the
        pressure Laplacian scaled with (delta_s0 h^2 + tau) - both cheap to
        factorize even when the coupled LU is not.
        """
        cfg = self.cfg
        if self._block_prec is None:
            s_lu = spla.splu(self._s_vel.tocsc())
            t_lu = spla.splu(self._schur.tocsc())
            n, m = self.n_int, self.mesh.n_nodes
            g = self._g_blocks

            def apply(r):
                out = np.empty_like(r)
                p = t_lu.solve(r[3 * n:])
                for d in range(3):
                    out[d * n:(d + 1) * n] = s_lu.solve(
                        r[d * n:(d + 1) * n] + g[d] @ p)
                out[3 * n:] = p
                return out

            self._block_prec = spla.LinearOperator(
                (3 * n + m, 3 * n + m), apply)

        maxiter = cfg.linear_max_iter or 10 * self.n_unknowns
        rtol = 0.02 * cfg.linear_tol
        bnorm = float(np.linalg.norm(rhs))
        for _ in range(3):
            x, info = spla.gmres(self.matrix, rhs, rtol=rtol, atol=0.0,
                                 restart=120, maxiter=maxiter,
                                 M=self._block_prec)
            if info != 0:
                raise ConvergenceError(
                    f"GMRES did not converge within {maxiter} iterations")
            res = float(np.linalg.norm(self.matrix @ x - rhs))
            if res <= cfg.linear_tol * max(bnorm, 1.0):
                return x
            rtol *= 0.01  # left preconditioning can under-estimate the residual
        return x


@dataclass(eq=False)
class StepSystem:
    """One assembled step: constant matrix plus state-dependent rhs."""

    operator: StepOperator
    rhs: np.ndarray

    @property
    def matrix(self) -> sp.csr_matrix:
        return self.operator.matrix


def _element_h2_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """Stabilization variant with per-element h_K^2 instead of global h^2."""
    basis = fem.element_basis(mesh)
    p = mesh.nodes[mesh.tets]
    h2 = np.zeros(mesh.n_tets)
    for i in range(4):
        for j in range(i + 1, 4):
            d = p[:, i] - p[:, j]
            h2 = np.maximum(h2, (d * d).sum(axis=1))
    local = np.einsum("e,eik,ejk->eij", h2 * basis.volumes,
                      basis.grads, basis.grads)
    return fem._assemble(mesh, local)


def assemble_step_system(mesh: Mesh, prev: FieldState, cfg: SolverConfig,
                         operator: StepOperator | None = None) -> StepSystem:
    """Weak form of one scheme step given the previous state."""
    op = operator if operator is not None else StepOperator(mesh, cfg)
    return StepSystem(operator=op, rhs=op.assemble_rhs(prev))


def solve_linear_system(system: StepSystem):
    """Solve an assembled step; velocity has exact zeros on the boundary and
    the pressure comes back mean-zero."""
    return system.operator.solve(system.rhs)


def time_step(mesh: Mesh, prev: FieldState, cfg: SolverConfig,
              operator: StepOperator | None = None) -> FieldState:
    """Advance one step k-1 -> k."""
    op = operator if operator is not None else StepOperator(mesh, cfg)
    velocity, pressure = op.solve(op.assemble_rhs(prev))
    k = prev.step_index + 1
    return FieldState(step_index=k, time=k * cfg.tau,
                      velocity=velocity, pressure=pressure)


def run_simulation(mesh: Mesh, initial: FieldState, cfg: SolverConfig,
                   sink=None, sink_every: int = 1,
                   checkpoint=None, checkpoint_every: int = 0,
                   operator: StepOperator | None = None) -> FieldState:
    """Advance from the given state to n_steps = floor(t_end / tau).

    sink(state) is invoked every sink_every steps (including step 0 when
    starting from scratch); checkpoint(state) likewise when enabled.  The
    initial state may be a checkpoint with step_index > 0, in which case
    stepping resumes from there.
    """
    op = operator if operator is not None else StepOperator(mesh, cfg)
    state = initial
    if sink is not None and state.step_index == 0:
        sink(state)
    for k in range(state.step_index + 1, cfg.n_steps + 1):
        state = time_step(mesh, state, cfg, operator=op)
        if sink is not None and k % sink_every == 0:
            sink(state)
        if checkpoint is not None and checkpoint_every > 0 \
                and k % checkpoint_every == 0:
            checkpoint(state)
    return state
