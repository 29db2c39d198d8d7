"""Time integration: leapfrog, Newmark, generalized-alpha, coupled driver.

The coupled march is partitioned by default: the elastic field advances
with an explicit leapfrog step driven by the acoustic interface traction at
time t_n, then the acoustic field advances implicitly (Newmark or
generalized-alpha, with Picard sweeps on the quadratic nonlinearity) driven
by the new elastic interface velocity at t_{n+1}.  A block-iterative
monolithic variant (both fields Newmark, Gauss-Seidel until the exchanged
interface data settles) serves as a splitting-error cross-check.

Implicit acoustic solves exploit that the effective operator
M/D + A (D the diagonal Newmark factor beta*dt^2 + gamma*dt*b/c^2) is
symmetric positive definite; it is factorized once per run by default.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SystemOperators
from .dofs import DirichletSet, FieldSpace
from .errors import ConfigError, InstabilityError, SolverError, StepFailureError

NEWMARK_DEFAULT = (0.25, 0.5)
GENALPHA_DEFAULT = (4.0 / 9.0, 5.0 / 6.0, 0.0, 1.0 / 3.0)


@dataclass(frozen=True)
class TimeConfig:
    t_final: float
    dt: float
    scheme: str = "partitioned"              # or "monolithic"
    integrator: str = "newmark"              # or "genalpha"
    newmark_beta: float = NEWMARK_DEFAULT[0]
    newmark_gamma: float = NEWMARK_DEFAULT[1]
    alpha_m: float = 0.0
    alpha_f: float = 0.0
    picard_tol: float = 1e-10
    picard_maxiter: int = 50
    solver: str = "direct"                   # or "cg"
    solver_tol: float = 1e-12
    solver_maxiter: int | None = None
    store_stride: int = 0                    # 0: store first/last only
    gs_maxiter: int = 30

    def __post_init__(self):
        if not (0 < self.dt <= self.t_final):
            raise ConfigError("need 0 < dt <= T")
        if self.scheme not in ("partitioned", "monolithic"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.integrator not in ("newmark", "genalpha"):
            raise ConfigError(f"unknown integrator {self.integrator!r}")

    @property
    def n_steps(self) -> int:
        return int(np.ceil(self.t_final / self.dt - 1e-9))

    def acoustic_params(self) -> tuple[float, float, float, float]:
        """(beta, gamma, alpha_m, alpha_f) for the acoustic integrator."""
        if self.integrator == "genalpha":
            am, af = self.alpha_m, self.alpha_f
            if (am, af) == (0.0, 0.0) and (self.newmark_beta, self.newmark_gamma) == NEWMARK_DEFAULT:
                return GENALPHA_DEFAULT
            return self.newmark_beta, self.newmark_gamma, am, af
        return self.newmark_beta, self.newmark_gamma, 0.0, 0.0


def genalpha_parameter_identities(beta, gamma, alpha_m, alpha_f) -> tuple[float, float]:
    """Residuals of the second-order accuracy conditions
    gamma = 1/2 - alpha_m + alpha_f and beta = (1 + alpha_f - alpha_m)^2 / 4."""
    return (
        gamma - (0.5 - alpha_m + alpha_f),
        beta - 0.25 * (1.0 + alpha_f - alpha_m) ** 2,
    )


# ---------------------------------------------------------------------------
# generic small-system integrators (dense or 1-dof oracles)
# ---------------------------------------------------------------------------


@dataclass
class SecondOrderState:
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray


def _as_matrix(op, n):
    if op is None:
        return np.zeros((n, n))
    op = np.asarray(op, dtype=float)
    if op.ndim == 0:
        return op.reshape(1, 1)
    if op.ndim == 1:
        return np.diag(op)
    return op


class NewmarkIntegrator:
    """Predictor-corrector Newmark for M a + C v + K u = f (dense systems)."""

    def __init__(self, m, c, k, beta: float = 0.25, gamma: float = 0.5):
        m = np.atleast_1d(np.asarray(m, dtype=float))
        n = m.shape[0] if m.ndim == 1 else m.shape[0]
        self.m = _as_matrix(m, n)
        self.c = _as_matrix(c, n)
        self.k = _as_matrix(k, n)
        self.beta, self.gamma = beta, gamma
        self.n = n

    def initial_accel(self, u, v, f0):
        return np.linalg.solve(self.m, np.atleast_1d(f0) - self.c @ v - self.k @ u)

    def step(self, state: SecondOrderState, f_next, dt: float) -> SecondOrderState:
        b, g = self.beta, self.gamma
        u_pred = state.u + dt * state.v + dt * dt * (0.5 - b) * state.a
        v_pred = state.v + dt * (1.0 - g) * state.a
        lhs = self.m + g * dt * self.c + b * dt * dt * self.k
        rhs = np.atleast_1d(f_next) - self.c @ v_pred - self.k @ u_pred
        a_new = np.linalg.solve(lhs, rhs)
        return SecondOrderState(
            u=u_pred + b * dt * dt * a_new,
            v=v_pred + g * dt * a_new,
            a=a_new,
        )


class GenAlphaIntegrator:
    """Generalized-alpha for second-order systems (dense).

    Momentum balance is enforced at the shifted instants
    t_{n+1-alpha_m} (inertia) and t_{n+1-alpha_f} (damping, stiffness,
    load); alpha_m = alpha_f = 0 reduces exactly to Newmark.
    """

    def __init__(self, m, c, k, beta, gamma, alpha_m, alpha_f):
        m = np.atleast_1d(np.asarray(m, dtype=float))
        n = m.shape[0]
        self.m = _as_matrix(m, n)
        self.c = _as_matrix(c, n)
        self.k = _as_matrix(k, n)
        self.beta, self.gamma = beta, gamma
        self.am, self.af = alpha_m, alpha_f

    def initial_accel(self, u, v, f0):
        return np.linalg.solve(self.m, np.atleast_1d(f0) - self.c @ v - self.k @ u)

    def step(self, state: SecondOrderState, t: float, dt: float, f) -> SecondOrderState:
        b, g, am, af = self.beta, self.gamma, self.am, self.af
        u_pred = state.u + dt * state.v + dt * dt * (0.5 - b) * state.a
        v_pred = state.v + dt * (1.0 - g) * state.a
        f_mid = np.atleast_1d(f(t + (1.0 - af) * dt))
        lhs = (1.0 - am) * self.m + (1.0 - af) * (g * dt * self.c + b * dt * dt * self.k)
        rhs = (
            f_mid
            - am * (self.m @ state.a)
            - self.c @ ((1.0 - af) * v_pred + af * state.v)
            - self.k @ ((1.0 - af) * u_pred + af * state.u)
        )
        a_new = np.linalg.solve(lhs, rhs)
        return SecondOrderState(
            u=u_pred + b * dt * dt * a_new,
            v=v_pred + g * dt * a_new,
            a=a_new,
        )


class LeapfrogIntegrator:
    """Explicit central-difference scheme with diagonal mass and damping.

    M (u+ - 2u + u-)/dt^2 + C (u+ - u-)/(2 dt) + (K + Z) u = f(t_n),
    solved for u+ entrywise (M, C, Z diagonal).
    """

    def __init__(self, m_diag, c_diag, z_diag, k):
        self.m = np.atleast_1d(np.asarray(m_diag, dtype=float))
        self.c = np.atleast_1d(np.asarray(c_diag, dtype=float))
        self.z = np.atleast_1d(np.asarray(z_diag, dtype=float))
        self.k = k

    def _k_mul(self, u):
        if sp.issparse(self.k):
            return self.k @ u
        k = np.asarray(self.k, dtype=float)
        if k.ndim <= 1:
            return k * u
        return k @ u

    def initial_accel(self, u0, v0, f0):
        return (f0 - self.c * v0 - self.z * u0 - self._k_mul(u0)) / self.m

    def start(self, u0, v0, a0, dt):
        """Second-order Taylor start-up step producing u_1."""
        return u0 + dt * v0 + 0.5 * dt * dt * a0

    def step(self, u_n, u_nm1, f_n, dt):
        rhs = (
            dt * dt * (f_n - self.z * u_n - self._k_mul(u_n))
            + 2.0 * self.m * u_n
            - self.m * u_nm1
            + 0.5 * dt * self.c * u_nm1
        )
        return rhs / (self.m + 0.5 * dt * self.c)


# ---------------------------------------------------------------------------
# coupled driver
# ---------------------------------------------------------------------------


@dataclass
class CoupledState:
    t: float
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    psi: np.ndarray
    phi: np.ndarray   # psi-dot
    xi: np.ndarray    # psi-double-dot

    def copy(self) -> "CoupledState":
        return CoupledState(
            self.t, self.u.copy(), self.v.copy(), self.a.copy(),
            self.psi.copy(), self.phi.copy(), self.xi.copy(),
        )


@dataclass
class Trajectory:
    times: np.ndarray
    stored_steps: list[int]
    states: list[CoupledState]
    int_xi_sq: np.ndarray      # trapezoidal running integral of |psi-ddot|_M^2
    int_v_sq: np.ndarray       # trapezoidal running integral of |u-dot|_M^2
    picard_iters: list[int]
    final: CoupledState

    def __len__(self) -> int:
        return self.times.size


class ZeroBoundary:
    """Homogeneous Dirichlet data provider."""

    def __init__(self, n_elastic: int, n_acoustic: int):
        self._e = (np.zeros(n_elastic),) * 3
        self._a = (np.zeros(n_acoustic),) * 3

    def elastic(self, t):
        return self._e

    def acoustic(self, t):
        return self._a


class ZeroForcing:
    def __init__(self, n_elastic: int, n_acoustic: int):
        self._e = np.zeros(n_elastic)
        self._a = np.zeros(n_acoustic)

    def elastic(self, t):
        return self._e

    def acoustic(self, t):
        return self._a


class _LinearSolver:
    """Direct (cached LU) or Jacobi-preconditioned CG solve of an SPD matrix."""

    def __init__(self, a_csr: sp.csr_matrix, config: TimeConfig):
        self.method = config.solver
        self.tol = config.solver_tol
        self.maxiter = config.solver_maxiter or 10 * a_csr.shape[0]
        if self.method == "direct":
            # the effective operators here are SPD: symmetric-mode minimum
            # degree ordering halves the fill of the default COLAMD
            self._lu = spla.splu(
                a_csr.tocsc(), permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0, options={"SymmetricMode": True},
            )
        elif self.method == "cg":
            self._a = a_csr
            d = a_csr.diagonal()
            d[d == 0.0] = 1.0
            self._precond = spla.LinearOperator(a_csr.shape, matvec=lambda x: x / d)
        else:
            raise ConfigError(f"unknown linear solver {self.method!r}")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.method == "direct":
            return self._lu.solve(rhs)
        x, info = spla.cg(
            self._a, rhs, rtol=self.tol, atol=0.0, maxiter=self.maxiter,
            M=self._precond,
        )
        if info != 0:
            raise SolverError(f"CG failed to converge (info={info})")
        return x


class AcousticStepper:
    """Implicit Newmark / generalized-alpha update of the acoustic field."""

    def __init__(
        self,
        ops: SystemOperators,
        dirichlet: DirichletSet,
        config: TimeConfig,
        nonlinearity=None,   # callable (psi, phi, xi) -> load vector, or None
        forcing=None,        # callable t -> load vector
    ):
        self.ops = ops
        self.a_mat = ops.a_acoustic
        self.free = dirichlet.free
        self.constrained = dirichlet.dofs
        self.config = config
        self.nonlinearity = nonlinearity
        self.forcing = forcing
        beta, gamma, am, af = config.acoustic_params()
        self.beta, self.gamma, self.am, self.af = beta, gamma, am, af
        dt = config.dt
        self.d_diag = beta * dt * dt + gamma * dt * ops.b_over_c2
        eff_diag = (1.0 - am) * ops.m_a.copy()
        if ops.b_abs is not None:
            eff_diag = eff_diag + (1.0 - af) * gamma * dt * ops.b_abs
        free = self.free
        eff = (
            sp.diags(eff_diag[free] / self.d_diag[free])
            + (1.0 - af) * self.a_mat[free][:, free]
        ).tocsr()
        self.solver = _LinearSolver(eff, config)

    def _stiff_term(self, psi, phi):
        """A (psi + b/c^2 phi) + B_abs phi."""
        out = self.a_mat @ (psi + self.ops.b_over_c2 * phi)
        if self.ops.b_abs is not None:
            out = out + self.ops.b_abs * phi
        return out

    def residual_rhs(self, t_mid, psi_n, phi_n, xi_n, coupling_term):
        """Known part of the alpha-shifted balance, before Picard terms."""
        rhs = self.forcing(t_mid) if self.forcing is not None else 0.0
        rhs = rhs + coupling_term
        rhs = rhs - self.af * self._stiff_term(psi_n, phi_n)
        rhs = rhs - self.am * self.ops.m_a * xi_n
        return rhs

    def solve_initial_accel(self, t0, psi0, phi0, coupling_term, bc_acc):
        """Consistent psi-ddot at t=0 (Picard on the nonlinearity)."""
        xi = np.zeros_like(psi0)
        xi[self.constrained] = bc_acc
        base = self.forcing(t0) + coupling_term - self._stiff_term(psi0, phi0)
        for _ in range(max(1, self.config.picard_maxiter)):
            rhs = base.copy()
            if self.nonlinearity is not None:
                rhs = rhs + self.nonlinearity(psi0, phi0, xi)
            xi_new = xi.copy()
            xi_new[self.free] = rhs[self.free] / self.ops.m_a[self.free]
            delta = np.linalg.norm(xi_new - xi)
            xi = xi_new
            if self.nonlinearity is None or delta <= self.config.picard_tol * max(
                np.linalg.norm(xi), 1e-300
            ):
                break
        return xi

    def step(self, state_psi, state_phi, state_xi, t_n, elastic_velocity, boundary,
             xi_guess=None):
        """Advance (psi, phi, xi) from t_n to t_n + dt.

        ``elastic_velocity`` is the coupled interface velocity at the
        alpha-shifted instant; ``boundary(t)`` yields constrained values.
        ``xi_guess`` seeds the Picard iteration (defaults to the previous
        acceleration).  Returns (psi, phi, xi, picard_iterations).
        """
        cfg = self.config
        dt = cfg.dt
        beta, gamma, am, af = self.beta, self.gamma, self.am, self.af
        t_next = t_n + dt
        t_mid = t_n + (1.0 - af) * dt

        psi_pred = state_psi + dt * state_phi + dt * dt * (0.5 - beta) * state_xi
        phi_pred = state_phi + dt * (1.0 - gamma) * state_xi

        g_val, g_vel, g_acc = boundary(t_next)
        psi_base = psi_pred.copy()
        phi_base = phi_pred.copy()
        xi_base = np.zeros_like(state_xi)
        psi_base[self.constrained] = g_val
        phi_base[self.constrained] = g_vel
        xi_base[self.constrained] = g_acc

        coupling = self.ops.c_ea.T @ elastic_velocity
        rhs_known = self.residual_rhs(t_mid, state_psi, state_phi, state_xi, coupling)
        rhs_known = rhs_known - (1.0 - af) * self._stiff_term(psi_base, phi_base)
        free = self.free

        # extrapolated initial guess for the free accelerations
        xi_hat = np.zeros_like(state_xi)
        xi_hat[free] = state_xi[free] if xi_guess is None else xi_guess[free]

        linear = self.nonlinearity is None
        iters = 0
        for sweep in range(1, cfg.picard_maxiter + 1):
            iters = sweep
            rhs = rhs_known.copy()
            if not linear:
                psi_k = psi_base + beta * dt * dt * xi_hat
                phi_k = phi_base + gamma * dt * xi_hat
                xi_k = xi_base + xi_hat
                if af != 0.0 or am != 0.0:
                    psi_k = (1.0 - af) * psi_k + af * state_psi
                    phi_k = (1.0 - af) * phi_k + af * state_phi
                    xi_k = (1.0 - am) * xi_k + am * state_xi
                rhs = rhs + self.nonlinearity(psi_k, phi_k, xi_k)
            z = self.solver.solve(rhs[free])
            xi_new = z / self.d_diag[free]
            if linear:
                xi_hat[free] = xi_new
                break
            delta = np.linalg.norm(xi_new - xi_hat[free])
            norm_new = np.linalg.norm(xi_new)
            if not np.isfinite(norm_new):
                raise StepFailureError(
                    f"Picard iteration diverged (non-finite update) at "
                    f"t={t_next:.6g}, sweep {sweep}"
                )
            xi_hat[free] = xi_new
            if delta <= cfg.picard_tol * max(norm_new, 1e-300):
                break
        else:
            raise StepFailureError(
                f"Picard iteration stalled at t={t_next:.6g} "
                f"after {cfg.picard_maxiter} sweeps"
            )

        psi_new = psi_base + beta * dt * dt * xi_hat
        phi_new = phi_base + gamma * dt * xi_hat
        xi_full = xi_base + xi_hat
        psi_new[self.constrained] = g_val
        phi_new[self.constrained] = g_vel
        return psi_new, phi_new, xi_full, iters


class ElasticNewmarkStepper:
    """Implicit Newmark update of the elastic field (monolithic scheme)."""

    def __init__(self, ops: SystemOperators, dirichlet: DirichletSet,
                 config: TimeConfig, forcing=None):
        self.ops = ops
        self.free = dirichlet.free
        self.constrained = dirichlet.dofs
        self.config = config
        self.forcing = forcing
        self.beta, self.gamma = config.newmark_beta, config.newmark_gamma
        dt = config.dt
        free = self.free
        diag = ops.m_e + self.gamma * dt * ops.c_e + self.beta * dt * dt * ops.z_e
        eff = (
            sp.diags(diag[free]) + self.beta * dt * dt * ops.k_e[free][:, free]
        ).tocsr()
        self.solver = _LinearSolver(eff, config)

    def step(self, u, v, a, t_n, traction, boundary):
        dt = self.config.dt
        beta, gamma = self.beta, self.gamma
        t_next = t_n + dt
        u_pred = u + dt * v + dt * dt * (0.5 - beta) * a
        v_pred = v + dt * (1.0 - gamma) * a
        g_val, g_vel, g_acc = boundary(t_next)
        u_base, v_base = u_pred.copy(), v_pred.copy()
        a_base = np.zeros_like(a)
        u_base[self.constrained] = g_val
        v_base[self.constrained] = g_vel
        a_base[self.constrained] = g_acc

        load = self.forcing(t_next) if self.forcing is not None else 0.0
        load = load - self.ops.rho_f * traction
        rhs = (
            load
            - self.ops.c_e * v_base
            - self.ops.z_e * u_base
            - self.ops.k_e @ u_base
            - self.ops.m_e * a_base
        )
        a_hat = np.zeros_like(a)
        a_hat[self.free] = self.solver.solve(rhs[self.free])
        u_new = u_base + beta * dt * dt * a_hat
        v_new = v_base + gamma * dt * a_hat
        a_new = a_base + a_hat
        u_new[self.constrained] = g_val
        v_new[self.constrained] = g_vel
        return u_new, v_new, a_new


def run_coupled(
    ops: SystemOperators,
    elastic_space: FieldSpace,
    acoustic_space: FieldSpace,
    config: TimeConfig,
    *,
    dir_elastic: DirichletSet,
    dir_acoustic: DirichletSet,
    initial,                    # (u0, v0, psi0, phi0) full vectors
    forcing=None,               # object with .elastic(t), .acoustic(t)
    boundary=None,              # object with .elastic(t), .acoustic(t)
    nonlinearity=None,          # callable (psi, phi, xi) -> vector, or None
    observers: tuple = (),
) -> Trajectory:
    """March the coupled system from interpolated initial data to T.

    Partitioned scheme per step: (1) explicit leapfrog elastic update with
    the acoustic interface traction at t_n; (2) implicit acoustic update
    with the elastic interface velocity at t_{n+1} (second-order one-sided
    difference).  Monolithic scheme: both fields Newmark, Gauss-Seidel
    between the sub-steps until the exchanged interface data settles.
    """
    if boundary is None:
        boundary = ZeroBoundary(dir_elastic.n_constrained, dir_acoustic.n_constrained)
    if forcing is None:
        forcing = ZeroForcing(elastic_space.n_dofs, acoustic_space.n_dofs)

    u0, v0, psi0, phi0 = (np.array(x, dtype=float) for x in initial)
    ev, evv, eva = boundary.elastic(0.0)
    u0[dir_elastic.dofs], v0[dir_elastic.dofs] = ev, evv
    av, avv, ava = boundary.acoustic(0.0)
    psi0[dir_acoustic.dofs], phi0[dir_acoustic.dofs] = av, avv

    acoustic = AcousticStepper(ops, dir_acoustic, config,
                               nonlinearity=nonlinearity, forcing=forcing.acoustic)
    dt = config.dt
    n_steps = config.n_steps

    # consistent initial accelerations: acoustic first (needs v0 only),
    # then elastic (needs the acoustic traction at t=0)
    xi0 = acoustic.solve_initial_accel(0.0, psi0, phi0, ops.c_ea.T @ v0, ava)
    leap = LeapfrogIntegrator(ops.m_e, ops.c_e, ops.z_e, ops.k_e)
    traction0 = ops.c_ea @ (phi0 + ops.bc_fluid * xi0)
    load0 = forcing.elastic(0.0) - ops.rho_f * traction0
    a0 = leap.initial_accel(u0, v0, load0)
    a0[dir_elastic.dofs] = eva

    state = CoupledState(t=0.0, u=u0, v=v0, a=a0, psi=psi0, phi=phi0, xi=xi0)

    times = dt * np.arange(n_steps + 1)
    int_xi_sq = np.zeros(n_steps + 1)
    int_v_sq = np.zeros(n_steps + 1)
    lump_a = _lumped_weights(acoustic_space)
    lump_e = _lumped_weights(elastic_space)
    xi_norm_prev = float(state.xi @ (lump_a * state.xi))
    v_norm_prev = float(state.v @ (lump_e * state.v))

    stride = config.store_stride
    stored_steps, states = [0], [state.copy()]
    picard_counts: list[int] = []
    for obs in observers:
        obs(0, 0.0, state)

    if config.scheme == "monolithic":
        elastic_stepper = ElasticNewmarkStepper(ops, dir_elastic, config,
                                                forcing=forcing.elastic)
    else:
        elastic_stepper = None

    u_prev = None  # u_{n-1} for leapfrog
    xi_hist: list[np.ndarray] = [state.xi]
    # reference scale for the explicit-step blow-up guard: initial energy
    # plus running measures of the body force and boundary-data sources
    ref_initial = max(
        float(v0 @ (ops.m_e * v0) + u0 @ (ops.k_e @ u0) + u0 @ (ops.z_e * u0)),
        1e-12,
    )
    src_integral = 0.0
    bc_peak = 0.0
    k_scale = float(np.abs(ops.k_e.diagonal()).max() + np.abs(ops.z_e).max())
    m_scale = float(np.abs(ops.m_e).max())
    for n in range(n_steps):
        t_n = n * dt
        t_next = t_n + dt
        if config.scheme == "partitioned":
            traction = ops.c_ea @ (state.phi + ops.bc_fluid * state.xi)
            f_ext = forcing.elastic(t_n)
            load_n = f_ext - ops.rho_f * traction
            src_integral += dt * float(f_ext @ f_ext)
            if n == 0:
                u_new = leap.start(state.u, state.v, state.a, dt)
            else:
                u_new = leap.step(state.u, u_prev, load_n, dt)
            g_val, g_vel, g_acc = boundary.elastic(t_next)
            u_new[dir_elastic.dofs] = g_val
            if n == 0:
                v_new = state.v + dt * state.a
                a_new = state.a.copy()
            else:
                v_new = (3.0 * u_new - 4.0 * state.u + u_prev) / (2.0 * dt)
                a_new = (u_new - 2.0 * state.u + u_prev) / (dt * dt)
            v_new[dir_elastic.dofs] = g_vel
            a_new[dir_elastic.dofs] = g_acc
            u_prev = state.u

            # blow-up guard for the conditionally stable explicit sub-step,
            # before its state feeds the acoustic solve
            el_energy = float(
                v_new @ (ops.m_e * v_new)
                + u_new @ (ops.k_e @ u_new)
                + u_new @ (ops.z_e * u_new)
            )
            bc_peak = max(
                bc_peak,
                k_scale * float(g_val @ g_val) + m_scale * float(g_vel @ g_vel),
            )
            energy_ref = ref_initial + src_integral + bc_peak
            if not np.isfinite(el_energy) or el_energy > 1e6 * energy_ref:
                raise InstabilityError(
                    f"elastic energy grew past 1e6 x the initial/source bound "
                    f"at step {n + 1}; reduce the time step"
                )

            v_coupled = (1.0 - acoustic.af) * v_new + acoustic.af * state.v
            if len(xi_hist) >= 3:
                xi_guess = 3.0 * xi_hist[-1] - 3.0 * xi_hist[-2] + xi_hist[-3]
            elif len(xi_hist) == 2:
                xi_guess = 2.0 * xi_hist[-1] - xi_hist[-2]
            else:
                xi_guess = None
            psi_new, phi_new, xi_new, iters = acoustic.step(
                state.psi, state.phi, state.xi, t_n, v_coupled, boundary.acoustic,
                xi_guess=xi_guess,
            )
            xi_hist.append(xi_new)
            if len(xi_hist) > 3:
                xi_hist.pop(0)
        else:
            # block Gauss-Seidel between the two implicit sub-steps
            u_new, v_new, a_new = state.u, state.v, state.a
            psi_new, phi_new, xi_new = state.psi, state.phi, state.xi
            iters = 0
            prev_q = None
            for _ in range(config.gs_maxiter):
                q = phi_new + ops.bc_fluid * xi_new
                u_new, v_new, a_new = elastic_stepper.step(
                    state.u, state.v, state.a, t_n, ops.c_ea @ q, boundary.elastic
                )
                v_mid = (1.0 - acoustic.af) * v_new + acoustic.af * state.v
                psi_new, phi_new, xi_new, it = acoustic.step(
                    state.psi, state.phi, state.xi, t_n, v_mid, boundary.acoustic
                )
                iters += it
                if prev_q is not None:
                    dq = np.linalg.norm(q - prev_q)
                    if dq <= config.picard_tol * max(np.linalg.norm(q), 1e-300):
                        break
                prev_q = q
            else:
                raise StepFailureError(
                    f"interface Gauss-Seidel stalled at t={t_next:.6g}"
                )

        state = CoupledState(t=t_next, u=u_new, v=v_new, a=a_new,
                             psi=psi_new, phi=phi_new, xi=xi_new)
        picard_counts.append(iters)

        if not (
            np.isfinite(np.abs(state.u).max()) and np.isfinite(np.abs(state.psi).max())
        ):
            raise StepFailureError(f"non-finite state at step {n + 1}")

        xi_norm = float(state.xi @ (lump_a * state.xi))
        v_norm = float(state.v @ (lump_e * state.v))
        int_xi_sq[n + 1] = int_xi_sq[n] + 0.5 * dt * (xi_norm_prev + xi_norm)
        int_v_sq[n + 1] = int_v_sq[n] + 0.5 * dt * (v_norm_prev + v_norm)
        xi_norm_prev, v_norm_prev = xi_norm, v_norm

        keep = (stride > 0 and (n + 1) % stride == 0) or (n + 1) == n_steps
        if keep:
            stored_steps.append(n + 1)
            states.append(state.copy())
        for obs in observers:
            obs(n + 1, t_next, state)

    return Trajectory(
        times=times, stored_steps=stored_steps, states=states,
        int_xi_sq=int_xi_sq, int_v_sq=int_v_sq,
        picard_iters=picard_counts, final=state,
    )


def _lumped_weights(space: FieldSpace) -> np.ndarray:
    out = np.empty(space.n_dofs)
    for bd in space.blocks:
        out[space.dof_slice(bd.tag)] = np.repeat(bd.lumped, bd.ncomp)
    return out
