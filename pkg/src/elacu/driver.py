"""Problem construction and run orchestration shared by the CLI and tests."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import assembly, norms
from .dofs import DirichletSet, FieldSpace, build_dof_map, dirichlet_dofs, interpolate
from .errors import ConfigError
from .io_formats import ErrorRow, RunConfig
from .manufactured import (
    ManufacturedCase,
    make_case,
    psi_shape,
    psi_shape_grad,
    u_shape,
)
from .materials import (
    AcousticMaterial,
    ElasticMaterial,
    MaterialParams,
    TISSUE_ACOUSTIC,
    TISSUE_ELASTIC,
    apply_model,
    material_set,
    nonlinearity_coeffs,
    physical_materials,
)
from .mesh import CoupledMesh, build_three_cubes
from .timeint import TimeConfig, Trajectory, run_coupled

DEMO_ABSORBING = {"t": {"x-", "x+", "y-", "y+", "z+"}}


def resolve_materials(cfg: RunConfig) -> MaterialParams:
    """Materials from the named set, with overrides and the model applied."""
    if cfg.material_set == "physical":
        params = physical_materials(zeta_e=cfg.demo_zeta, zeta_t=cfg.demo_zeta)
    else:
        params = material_set(cfg.material_set, cfg.option)
    if cfg.material_override:
        elastic = dict(params.elastic)
        acoustic = dict(params.acoustic)
        for tag, fields in cfg.material_override.items():
            if tag not in ("e", "f", "t"):
                raise ConfigError(f"materials.override: unknown block {tag!r}")
            for name, value in fields.items():
                value = float(value)
                applied = False
                if tag in acoustic and name in ("rho", "c", "b", "k1", "k2"):
                    acoustic[tag] = replace(acoustic[tag], **{name: value})
                    applied = True
                if tag in elastic and name in ("rho", "lam", "mu", "zeta"):
                    elastic[tag] = replace(elastic[tag], **{name: value})
                    applied = True
                if not applied:
                    raise ConfigError(
                        f"materials.override.{tag}.{name}: field not applicable"
                    )
        params = MaterialParams(
            elastic=elastic, acoustic=acoustic,
            amplitudes=params.amplitudes, ba=params.ba,
        )
    model = cfg.model
    if model.kind == "named":
        if model.ba:
            params = MaterialParams(
                elastic=params.elastic, acoustic=params.acoustic,
                amplitudes=params.amplitudes,
                ba={**params.ba, **{k: float(v) for k, v in model.ba.items()}},
            )
        params = apply_model(params, model.name)
    elif model.kind == "explicit":
        acoustic = dict(params.acoustic)
        for tag in acoustic:
            k1 = float((model.k1 or {}).get(tag, acoustic[tag].k1))
            k2 = float((model.k2 or {}).get(tag, acoustic[tag].k2))
            acoustic[tag] = replace(acoustic[tag], k1=k1, k2=k2)
        params = MaterialParams(
            elastic=params.elastic, acoustic=acoustic,
            amplitudes=params.amplitudes, ba=params.ba,
        )
    return params


@dataclass
class Problem:
    cfg: RunConfig
    level: int
    mesh: CoupledMesh
    elastic_space: FieldSpace
    acoustic_space: FieldSpace
    params: MaterialParams
    case: ManufacturedCase | None
    ops: assembly.SystemOperators
    dir_elastic: DirichletSet
    dir_acoustic: DirichletSet
    penalty: assembly.PenaltySpec

    @property
    def n_dofs(self) -> int:
        return self.elastic_space.n_dofs + self.acoustic_space.n_dofs

    @property
    def h_max(self) -> float:
        return max(float(np.max(b.edge)) for b in self.mesh.blocks.values())

    def time_config(self, **overrides) -> TimeConfig:
        cfg = self.cfg
        base = dict(
            t_final=cfg.t_final, dt=cfg.dt, scheme=cfg.scheme,
            integrator=cfg.integrator,
            newmark_beta=cfg.newmark[0], newmark_gamma=cfg.newmark[1],
            picard_tol=cfg.picard_tol, picard_maxiter=cfg.picard_maxiter,
            solver=cfg.solver, solver_tol=cfg.solver_tol,
            solver_maxiter=cfg.solver_maxiter or None,
        )
        if cfg.integrator == "genalpha":
            gb, gg, am, af = cfg.genalpha
            base.update(newmark_beta=gb, newmark_gamma=gg, alpha_m=am, alpha_f=af)
        base.update(overrides)
        return TimeConfig(**base)


def build_problem(
    cfg: RunConfig,
    level: int | None = None,
    absorbing: dict | None = None,
) -> Problem:
    level = cfg.level if level is None else level
    mesh = build_three_cubes(level, ratio_nonconforming=not cfg.conforming)
    params = resolve_materials(cfg)
    option = cfg.option
    elastic_tags = ["e", "t"] if option == TISSUE_ELASTIC else ["e"]
    acoustic_tags = ["f", "t"] if option == TISSUE_ACOUSTIC else ["f"]
    elastic_space = FieldSpace([build_dof_map(mesh.blocks[t], cfg.p, 3) for t in elastic_tags])
    acoustic_space = FieldSpace([build_dof_map(mesh.blocks[t], cfg.p, 1) for t in acoustic_tags])
    penalty = assembly.PenaltySpec(beta=cfg.beta)
    ops = assembly.build_operators(
        mesh, elastic_space, acoustic_space, params, option, penalty,
        absorbing=absorbing,
    )
    dir_e = dirichlet_dofs(elastic_space, mesh, absorbing)
    dir_a = dirichlet_dofs(acoustic_space, mesh, absorbing)
    case = None
    if cfg.material_set != "physical":
        case = make_case(option, params)
    return Problem(
        cfg=cfg, level=level, mesh=mesh,
        elastic_space=elastic_space, acoustic_space=acoustic_space,
        params=params, case=case, ops=ops,
        dir_elastic=dir_e, dir_acoustic=dir_a, penalty=penalty,
    )


# ---------------------------------------------------------------------------
# manufactured forcing / boundary / initial data
# ---------------------------------------------------------------------------


class ManufacturedForcing:
    """Load vectors of the analytic forcing, factorized in time.

    The forcing is a linear combination of fixed spatial moment vectors
    with closed-form time coefficients, so per-step assembly is a couple
    of scaled vector additions.
    """

    def __init__(self, case: ManufacturedCase, elastic_space: FieldSpace,
                 acoustic_space: FieldSpace):
        self.case = case
        self.elastic_space = elastic_space
        self.acoustic_space = acoustic_space
        self._e_segments = []
        for bd in elastic_space.blocks:
            m = case.params.elastic[bd.tag]
            s_mom = (bd.lumped[:, None] * u_shape(bd.nodes)).ravel()
            dvec = np.array([m.lam + 4 * m.mu, m.lam + 4 * m.mu, 2 * m.mu - m.lam])
            d_mom = (bd.lumped[:, None] * (u_shape(bd.nodes) * dvec[None, :])).ravel()
            self._e_segments.append(
                (elastic_space.dof_slice(bd.tag), m, s_mom, d_mom)
            )
        self._a_segments = []
        for bd in acoustic_space.blocks:
            m = case.params.acoustic[bd.tag]
            s = psi_shape(bd.nodes)
            g2 = np.sum(psi_shape_grad(bd.nodes) ** 2, axis=1)
            q1 = bd.lumped * s
            q2 = bd.lumped * (m.k1 * s * s - m.k2 * g2)
            self._a_segments.append(
                (acoustic_space.dof_slice(bd.tag), m,
                 case.amplitudes.acoustic[bd.tag], q1, q2)
            )

    def elastic(self, t: float) -> np.ndarray:
        amp = self.case.amplitudes.elastic
        a, adot = amp.value(t), amp.deriv(t)
        out = np.empty(self.elastic_space.n_dofs)
        for sl, m, s_mom, d_mom in self._e_segments:
            scal = 2.0 * m.rho * m.zeta * adot + m.rho * (m.zeta**2 - 1.0) * a
            out[sl] = scal * s_mom + a * d_mom
        return out

    def acoustic(self, t: float) -> np.ndarray:
        out = np.empty(self.acoustic_space.n_dofs)
        for sl, m, amp, q1, q2 in self._a_segments:
            a, adot = amp.value(t), amp.deriv(t)
            c2 = m.c * m.c
            out[sl] = (((3.0 * c2 - 1.0) * a + 3.0 * m.b * adot) * q1
                       + 2.0 * a * adot * q2) / c2
        return out


class ManufacturedBoundary:
    """Exact Dirichlet traces (value, velocity, acceleration) per dof."""

    def __init__(self, case: ManufacturedCase, dir_e: DirichletSet, dir_a: DirichletSet):
        self.case = case
        shp = u_shape(dir_e.node_coords) if dir_e.n_constrained else np.zeros((0, 3))
        self._su = shp[np.arange(dir_e.n_constrained), dir_e.comp]
        self._sa = psi_shape(dir_a.node_coords) if dir_a.n_constrained else np.zeros(0)
        e_arr = np.empty(dir_a.n_constrained)
        d_arr = np.empty(dir_a.n_constrained)
        for i, tag in enumerate(dir_a.node_block):
            pair = case.amplitudes.acoustic[tag]
            e_arr[i], d_arr[i] = pair.E, pair.D
        self._ea, self._da = e_arr, d_arr

    def elastic(self, t: float):
        amp = self.case.amplitudes.elastic
        a, adot = amp.value(t), amp.deriv(t)
        return a * self._su, adot * self._su, -a * self._su

    def acoustic(self, t: float):
        a = self._ea * math.sin(t) + self._da * math.cos(t)
        adot = self._ea * math.cos(t) - self._da * math.sin(t)
        return self._sa * a, self._sa * adot, -self._sa * a


def manufactured_initial(problem: Problem):
    case = problem.case
    u0 = interpolate(problem.elastic_space, lambda pts, t, tag: case.u(pts, t, tag), 0.0)
    v0 = interpolate(problem.elastic_space, lambda pts, t, tag: case.udot(pts, t, tag), 0.0)
    psi0 = interpolate(problem.acoustic_space, lambda pts, t, tag: case.psi(pts, t, tag), 0.0)
    phi0 = interpolate(problem.acoustic_space, lambda pts, t, tag: case.psidot(pts, t, tag), 0.0)
    return u0, v0, psi0, phi0


def make_nonlinearity(problem: Problem):
    """Callable assembling the quadratic acoustic load, or None if linear."""
    if all(m.k1 == 0.0 and m.k2 == 0.0 for m in problem.params.acoustic.values()):
        return None
    space, params = problem.acoustic_space, problem.params

    def nonlinearity(psi, phi, xi):
        return assembly.assemble_nonlinear_rhs(space, params, psi, phi, xi)

    return nonlinearity


@dataclass
class RunResult:
    problem: Problem
    trajectory: Trajectory
    error: dict | None
    energy: list | None

    @property
    def error_row(self) -> ErrorRow | None:
        if self.error is None:
            return None
        return ErrorRow(
            level=self.problem.level,
            h_max=self.problem.h_max,
            n_dofs=self.problem.n_dofs,
            err_abs=self.error["abs"],
            err_rel=self.error["rel"],
        )


def run_problem(
    problem: Problem,
    time_config: TimeConfig | None = None,
    track_error: bool = True,
    track_energy: bool = False,
    extra_observers: tuple = (),
) -> RunResult:
    cfg = problem.cfg
    tc = time_config or problem.time_config()
    case = problem.case

    if cfg.initial == "manufactured" and case is not None:
        initial = manufactured_initial(problem)
    else:
        z_e = np.zeros(problem.elastic_space.n_dofs)
        z_a = np.zeros(problem.acoustic_space.n_dofs)
        initial = (z_e, z_e.copy(), z_a, z_a.copy())

    forcing = None
    if cfg.forcing == "manufactured" and case is not None:
        forcing = ManufacturedForcing(case, problem.elastic_space, problem.acoustic_space)
    boundary = None
    if cfg.dirichlet == "manufactured" and case is not None:
        boundary = ManufacturedBoundary(case, problem.dir_elastic, problem.dir_acoustic)

    observers = list(extra_observers)
    tracker = None
    if track_error and case is not None:
        dg_itf = problem.mesh.interfaces["ft"] if cfg.option == TISSUE_ACOUSTIC else None
        tracker = norms.ErrorTracker(
            case, problem.elastic_space, problem.acoustic_space, problem.params,
            problem.mesh, dg_itf, problem.penalty, tc.dt,
        )
        observers.append(tracker)
    energy_tracker = None
    if track_energy:
        dg_itf = problem.mesh.interfaces["ft"] if cfg.option == TISSUE_ACOUSTIC else None
        ev = norms.EnergyEvaluator(
            problem.elastic_space, problem.acoustic_space, problem.params,
            problem.mesh, dg_itf, problem.penalty,
        )
        energy_tracker = norms.EnergyTracker(ev, tc.dt)
        observers.append(energy_tracker)

    trajectory = run_coupled(
        problem.ops, problem.elastic_space, problem.acoustic_space, tc,
        dir_elastic=problem.dir_elastic, dir_acoustic=problem.dir_acoustic,
        initial=initial, forcing=forcing, boundary=boundary,
        nonlinearity=make_nonlinearity(problem),
        observers=tuple(observers),
    )

    error = None
    if tracker is not None:
        error = {
            "abs": tracker.abs_error,
            "rel": tracker.rel_error,
            "abs_no_accum": tracker.abs_error_no_accum,
            "rel_no_accum": tracker.rel_error_no_accum,
        }
    return RunResult(
        problem=problem, trajectory=trajectory, error=error,
        energy=energy_tracker.snapshots if energy_tracker else None,
    )


def run_convergence(
    cfg: RunConfig, levels: int, partial_sink=None
) -> tuple[list[ErrorRow], list[float]]:
    """Refinement study over levels 0..levels-1 at fixed time step.

    ``partial_sink(rows)`` is invoked after every completed level so a
    partial table survives a failure on a finer level.
    """
    if levels < 2:
        raise ConfigError("a convergence study needs at least 2 levels")
    rows: list[ErrorRow] = []
    for level in range(levels):
        problem = build_problem(cfg, level=level)
        result = run_problem(problem)
        rows.append(result.error_row)
        if len(rows) >= 2:
            rows[-1].rate = norms.convergence_rates(
                [r.err_rel for r in rows[-2:]], [r.h_max for r in rows[-2:]]
            )[0]
        if partial_sink is not None:
            partial_sink(rows)
    rates = [r.rate for r in rows[1:]]
    return rows, rates


# ---------------------------------------------------------------------------
# application demo (physical materials, pulse excitation, absorbing outlet)
# ---------------------------------------------------------------------------


class PulseEnvelope:
    """Sine pulse with a quadratic ramp up over 2/f and down over the next 2/f."""

    def __init__(self, frequency: float, amplitude: float):
        self.f = frequency
        self.a = amplitude
        self.omega = 2.0 * math.pi * frequency

    def _envelope(self, t: float):
        f = self.f
        if t <= 2.0 / f:
            e = (f * t / 2.0) ** 2
            return e, f * f * t / 2.0, f * f / 2.0
        if t <= 4.0 / f:
            s = t - 2.0 / f
            return 1.0 - (f * s / 2.0) ** 2, -f * f * s / 2.0, -f * f / 2.0
        return 0.0, 0.0, 0.0

    def value(self, t: float) -> float:
        e, _, _ = self._envelope(t)
        return e * self.a * math.sin(self.omega * t)

    def derivatives(self, t: float) -> tuple[float, float, float]:
        e, ed, edd = self._envelope(t)
        w = self.omega
        s, c = math.sin(w * t), math.cos(w * t)
        val = self.a * e * s
        vel = self.a * (ed * s + e * w * c)
        acc = self.a * (edd * s + 2.0 * ed * w * c - e * w * w * s)
        return val, vel, acc


def hill_profile(xy: np.ndarray, radius: float) -> np.ndarray:
    """Quartic bump: 1 at the origin, 0 on and outside the given radius."""
    r2 = xy[:, 0] ** 2 + xy[:, 1] ** 2
    out = np.zeros(len(xy))
    mask = r2 < radius * radius
    out[mask] = ((r2[mask] - radius**2) ** 2) / radius**4
    return out


class DemoBoundary:
    """Pulse excitation on the excitator bottom face, zero elsewhere."""

    def __init__(self, dir_e: DirichletSet, dir_a: DirichletSet,
                 pulse: PulseEnvelope, radius: float):
        self.pulse = pulse
        coords = dir_e.node_coords
        on_bottom = (np.abs(coords[:, 2]) < 1e-12) & (dir_e.comp == 2)
        self._profile = np.where(
            on_bottom, hill_profile(coords[:, :2], radius), 0.0
        )
        self._n_a = dir_a.n_constrained
        self._zero_a = (np.zeros(self._n_a),) * 3

    def elastic(self, t: float):
        val, vel, acc = self.pulse.derivatives(t)
        return val * self._profile, vel * self._profile, acc * self._profile

    def acoustic(self, t: float):
        return self._zero_a


def run_demo(cfg: RunConfig, observers: tuple = ()) -> RunResult:
    """Reduced-scale pulse-propagation run with physical materials.

    Uses absorbing outer tissue faces and a displacement pulse on the
    excitator bottom; returns the result with a probe/energy-free error
    of None (no analytic solution exists here).
    """
    demo_cfg = cfg
    if cfg.material_set != "physical":
        demo_cfg = replace(cfg, material_set="physical")
    problem = build_problem(demo_cfg, absorbing=DEMO_ABSORBING)
    pulse = PulseEnvelope(demo_cfg.demo_frequency, demo_cfg.demo_amplitude)
    boundary = DemoBoundary(
        problem.dir_elastic, problem.dir_acoustic, pulse, radius=0.4 * math.pi
    )
    z_e = np.zeros(problem.elastic_space.n_dofs)
    z_a = np.zeros(problem.acoustic_space.n_dofs)
    tc = problem.time_config()
    trajectory = run_coupled(
        problem.ops, problem.elastic_space, problem.acoustic_space, tc,
        dir_elastic=problem.dir_elastic, dir_acoustic=problem.dir_acoustic,
        initial=(z_e, z_e.copy(), z_a, z_a.copy()),
        forcing=None, boundary=boundary,
        nonlinearity=make_nonlinearity(problem),
        observers=observers,
    )
    return RunResult(problem=problem, trajectory=trajectory, error=None, energy=None)


def run_demo_with_probe(cfg: RunConfig, probe_point) -> tuple["RunResult", "ProbeRecorder"]:
    """Demo run with a pressure probe attached at the node nearest a point."""
    demo_cfg = cfg
    if cfg.material_set != "physical":
        demo_cfg = replace(cfg, material_set="physical")
    problem = build_problem(demo_cfg, absorbing=DEMO_ABSORBING)
    probe = ProbeRecorder(problem, probe_point)
    pulse = PulseEnvelope(demo_cfg.demo_frequency, demo_cfg.demo_amplitude)
    boundary = DemoBoundary(
        problem.dir_elastic, problem.dir_acoustic, pulse, radius=0.4 * math.pi
    )
    z_e = np.zeros(problem.elastic_space.n_dofs)
    z_a = np.zeros(problem.acoustic_space.n_dofs)
    trajectory = run_coupled(
        problem.ops, problem.elastic_space, problem.acoustic_space,
        problem.time_config(),
        dir_elastic=problem.dir_elastic, dir_acoustic=problem.dir_acoustic,
        initial=(z_e, z_e.copy(), z_a, z_a.copy()),
        forcing=None, boundary=boundary,
        nonlinearity=make_nonlinearity(problem),
        observers=(probe,),
    )
    result = RunResult(problem=problem, trajectory=trajectory, error=None, energy=None)
    return result, probe


class ProbeRecorder:
    """Observer sampling the acoustic pressure at the node nearest a point."""

    def __init__(self, problem: Problem, point) -> None:
        pt = np.asarray(point, dtype=float)
        best = None
        for bd in problem.acoustic_space.blocks:
            d = np.linalg.norm(bd.nodes - pt[None, :], axis=1)
            i = int(np.argmin(d))
            if best is None or d[i] < best[0]:
                best = (d[i], bd.tag, i)
        _, self.tag, self.node = best
        self.rho = problem.params.acoustic[self.tag].rho
        self.space = problem.acoustic_space
        self.location = self.space.block(self.tag).nodes[self.node]
        self.times: list[float] = []
        self.values: list[float] = []

    def __call__(self, step, t, state):
        phi = self.space.block_values(state.phi, self.tag)[:, 0]
        self.times.append(t)
        self.values.append(self.rho * float(phi[self.node]))
