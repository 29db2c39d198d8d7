"""Discrete energies, energy-norm errors, convergence rates, pressure output.

Energy and error integrals use a GLL rule with p+2 points per axis (finer
than the collocated p+1 rule) to avoid the superconvergence bias of
evaluating errors only at interpolation nodes.  The combined norm tracked
over a run is

    E^2(t) = |u-dot|^2 + |u|^2 + |eps(u)|^2                (elastic blocks)
           + |psi-dot|^2 + int_0^t |psi-ddot|^2 dtau
           + |grad(psi + b/c^2 psi-dot)|^2 (broken)
           + chi-weighted interface jump of psi + b/c^2 psi-dot,

with the time integral accumulated by the trapezoidal rule; its supremum
over the time grid is the reported L-infinity energy error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import PenaltySpec, _trace_eval, face_penalties
from .dofs import BlockDofs, FieldSpace
from .manufactured import ManufacturedCase, psi_shape, psi_shape_grad, u_shape
from .materials import MaterialParams
from .mesh import CoupledMesh, Interface, face_quadrature
from .quadrature import diff_matrix, gll_rule, lagrange_basis


@dataclass
class EnergySnapshot:
    """Squared-norm summands of the combined energy at one instant."""

    t: float
    el_vel: float = 0.0     # |u-dot|^2
    el_disp: float = 0.0    # |u|^2
    el_strain: float = 0.0  # |eps(u)|^2
    ac_vel: float = 0.0     # |psi-dot|^2
    ac_accum: float = 0.0   # int_0^t |psi-ddot|^2
    ac_grad: float = 0.0    # broken |grad psi~|^2
    ac_jump: float = 0.0    # chi-weighted squared jump of psi~

    def total(self, include_accum: bool = True) -> float:
        parts = (
            self.el_vel + self.el_disp + self.el_strain
            + self.ac_vel + self.ac_grad + self.ac_jump
        )
        return parts + (self.ac_accum if include_accum else 0.0)


class _BlockPack:
    """Evaluation tables of one block's basis at a finer GLL grid."""

    def __init__(self, bd: BlockDofs, n_extra: int = 1):
        self.bd = bd
        nq = bd.p + 1 + n_extra
        qrule = gll_rule(nq - 1)
        self.qw = qrule.weights
        bv, bder = lagrange_basis(bd.rule, qrule.nodes)
        self.bv = bv       # (nq, p+1)
        self.bder = bder
        self.nq = nq
        w3 = (
            self.qw[:, None, None] * self.qw[None, :, None] * self.qw[None, None, :]
        ) * bd.det_j
        self.w3 = w3.ravel()
        # physical quadrature points per element, (nel, nq^3, 3)
        nel = bd.block.n_elements
        origins = bd.block.element_origin(np.arange(nel))
        loc = 0.5 * (qrule.nodes + 1.0)
        lz, ly, lx = np.meshgrid(loc, loc, loc, indexing="ij")
        ref = np.stack([lx.ravel(), ly.ravel(), lz.ravel()], axis=-1)  # (nq^3, 3)
        self.points = origins[:, None, :] + ref[None, :, :] * bd.edge[None, None, :]

    def elem_coefs(self, vec_block: np.ndarray) -> np.ndarray:
        """(n_nodes,) -> (nel, p+1, p+1, p+1) local coefficients."""
        n = self.bd.p + 1
        return vec_block[self.bd.elem_nodes].reshape(-1, n, n, n)

    def _apply(self, c: np.ndarray, mz, my, mx) -> np.ndarray:
        # successive contractions keep the output ordered (el, qz, qy, qx)
        t = np.tensordot(c, mz, axes=([1], [1]))   # (e, ly, lx, qz)
        t = np.tensordot(t, my, axes=([1], [1]))   # (e, lx, qz, qy)
        t = np.tensordot(t, mx, axes=([1], [1]))   # (e, qz, qy, qx)
        return t.reshape(c.shape[0], -1)

    def values(self, c: np.ndarray) -> np.ndarray:
        return self._apply(c, self.bv, self.bv, self.bv)

    def gradient(self, c: np.ndarray, axis: int) -> np.ndarray:
        mats = [self.bv, self.bv, self.bv]
        mats[2 - axis] = self.bder  # slots ordered (z, y, x)
        return self._apply(c, *mats) * (2.0 / self.bd.edge[axis])

    def integrate(self, vals_sq: np.ndarray) -> float:
        return float(np.sum(vals_sq @ self.w3))


class EnergyEvaluator:
    """Evaluates the squared energy summands of a coupled state."""

    def __init__(
        self,
        elastic_space: FieldSpace,
        acoustic_space: FieldSpace,
        params: MaterialParams,
        mesh: CoupledMesh,
        dg_interface: Interface | None,
        penalty: PenaltySpec | None,
        n_extra: int = 1,
    ):
        self.elastic_space = elastic_space
        self.acoustic_space = acoustic_space
        self.params = params
        self.packs_e = {bd.tag: _BlockPack(bd, n_extra) for bd in elastic_space.blocks}
        self.packs_a = {bd.tag: _BlockPack(bd, n_extra) for bd in acoustic_space.blocks}
        self.jump = None
        if dg_interface is not None:
            p = acoustic_space.blocks[0].p
            batch = face_quadrature(mesh, dg_interface, p + 2)
            chi_face, _ = face_penalties(mesh, dg_interface, p, penalty)
            mbd = acoustic_space.block(dg_interface.master)
            sbd = acoustic_space.block(dg_interface.slave)
            v_m, _ = _trace_eval(mbd, batch.master_ref, dg_interface.normal_master)
            v_s, _ = _trace_eval(sbd, batch.slave_ref, dg_interface.normal_master)
            self.jump = {
                "itf": dg_interface,
                "w_chi": batch.weight * chi_face[batch.face_index],
                "v_m": v_m,
                "v_s": v_s,
                "m_el": batch.master_elem,
                "s_el": batch.slave_elem,
            }

    # -- helpers --------------------------------------------------------

    def elastic_terms(self, u: np.ndarray, v: np.ndarray):
        vel = disp = strain = 0.0
        for bd in self.elastic_space.blocks:
            pack = self.packs_e[bd.tag]
            uh = self.elastic_space.block_values(u, bd.tag)
            vh = self.elastic_space.block_values(v, bd.tag)
            grads = {}
            for comp in range(3):
                cu = pack.elem_coefs(uh[:, comp])
                cv = pack.elem_coefs(vh[:, comp])
                disp += pack.integrate(pack.values(cu) ** 2)
                vel += pack.integrate(pack.values(cv) ** 2)
                for ax in range(3):
                    grads[(comp, ax)] = pack.gradient(cu, ax)
            for i in range(3):
                for j in range(3):
                    eps = 0.5 * (grads[(i, j)] + grads[(j, i)])
                    strain += pack.integrate(eps**2)
        return vel, disp, strain

    def acoustic_terms(self, psi: np.ndarray, phi: np.ndarray, xi: np.ndarray):
        """(|psi-dot|^2, broken |grad psi~|^2, jump term, |psi-ddot|^2)."""
        vel = grad = accum_rate = 0.0
        for bd in self.acoustic_space.blocks:
            pack = self.packs_a[bd.tag]
            mat = self.params.acoustic[bd.tag]
            r = mat.b / mat.c**2
            sl = self.acoustic_space.dof_slice(bd.tag)
            tilde = pack.elem_coefs(psi[sl] + r * phi[sl])
            cphi = pack.elem_coefs(phi[sl])
            cxi = pack.elem_coefs(xi[sl])
            vel += pack.integrate(pack.values(cphi) ** 2)
            accum_rate += pack.integrate(pack.values(cxi) ** 2)
            for ax in range(3):
                grad += pack.integrate(pack.gradient(tilde, ax) ** 2)
        jump = 0.0
        if self.jump is not None:
            j = self.jump
            itf = j["itf"]
            mbd = self.acoustic_space.block(itf.master)
            sbd = self.acoustic_space.block(itf.slave)
            rm = self.params.acoustic[itf.master].b / self.params.acoustic[itf.master].c ** 2
            rs = self.params.acoustic[itf.slave].b / self.params.acoustic[itf.slave].c ** 2
            off_m = self.acoustic_space.offsets[itf.master]
            off_s = self.acoustic_space.offsets[itf.slave]
            tilde_m = (psi + rm * phi)[off_m + mbd.elem_nodes[j["m_el"]]]
            tilde_s = (psi + rs * phi)[off_s + sbd.elem_nodes[j["s_el"]]]
            tr_m = np.einsum("qi,qi->q", j["v_m"], tilde_m)
            tr_s = np.einsum("qi,qi->q", j["v_s"], tilde_s)
            jump = float(np.sum(j["w_chi"] * (tr_m - tr_s) ** 2))
        return vel, grad, jump, accum_rate

    def snapshot(self, state, accum: float = 0.0) -> EnergySnapshot:
        vel_e, disp_e, strain_e = self.elastic_terms(state.u, state.v)
        vel_a, grad_a, jump_a, _ = self.acoustic_terms(state.psi, state.phi, state.xi)
        return EnergySnapshot(
            t=state.t, el_vel=vel_e, el_disp=disp_e, el_strain=strain_e,
            ac_vel=vel_a, ac_accum=accum, ac_grad=grad_a, ac_jump=jump_a,
        )


def energy(evaluator: EnergyEvaluator, state, accum: float = 0.0) -> EnergySnapshot:
    """Energy summands of one state (history integral supplied by caller)."""
    return evaluator.snapshot(state, accum)


class EnergyTracker:
    """Observer recording the energy summands at every time step."""

    def __init__(self, evaluator: EnergyEvaluator, dt: float):
        self.ev = evaluator
        self.dt = dt
        self.snapshots: list[EnergySnapshot] = []
        self._accum = 0.0
        self._rate_prev = None

    def __call__(self, step, t, state):
        vel_e, disp_e, strain_e = self.ev.elastic_terms(state.u, state.v)
        vel_a, grad_a, jump_a, rate = self.ev.acoustic_terms(state.psi, state.phi, state.xi)
        if self._rate_prev is not None:
            self._accum += 0.5 * self.dt * (self._rate_prev + rate)
        self._rate_prev = rate
        self.snapshots.append(
            EnergySnapshot(
                t=t, el_vel=vel_e, el_disp=disp_e, el_strain=strain_e,
                ac_vel=vel_a, ac_accum=self._accum, ac_grad=grad_a, ac_jump=jump_a,
            )
        )


class ErrorTracker:
    """Observer accumulating the L-infinity-in-time energy error of a run.

    Exact fields are the separable analytic solutions; their values at the
    quadrature grid are precomputed once so that per-step work is a few
    tensor contractions.
    """

    def __init__(
        self,
        case: ManufacturedCase,
        elastic_space: FieldSpace,
        acoustic_space: FieldSpace,
        params: MaterialParams,
        mesh: CoupledMesh,
        dg_interface: Interface | None,
        penalty: PenaltySpec | None,
        dt: float,
        n_extra: int = 1,
    ):
        self.case = case
        self.ev = EnergyEvaluator(
            elastic_space, acoustic_space, params, mesh, dg_interface, penalty, n_extra
        )
        self.dt = dt
        self.params = params
        self.elastic_space = elastic_space
        self.acoustic_space = acoustic_space
        # precomputed spatial shapes at the quadrature grids
        self.shape_u = {}
        self.shape_grad_u = {}
        for bd in elastic_space.blocks:
            pts = self.ev.packs_e[bd.tag].points.reshape(-1, 3)
            self.shape_u[bd.tag] = u_shape(pts)
            self.shape_grad_u[bd.tag] = _u_shape_grad(pts)
        self.shape_psi = {}
        self.shape_grad_psi = {}
        for bd in acoustic_space.blocks:
            pts = self.ev.packs_a[bd.tag].points.reshape(-1, 3)
            self.shape_psi[bd.tag] = psi_shape(pts)
            self.shape_grad_psi[bd.tag] = psi_shape_grad(pts)
        # time-independent integrals of the separable exact shapes
        self._int_u = {}
        self._int_eps = {}
        for bd in elastic_space.blocks:
            if bd.tag not in case.elastic_tags:
                continue
            pack = self.ev.packs_e[bd.tag]
            nel = bd.block.n_elements
            shp = self.shape_u[bd.tag].reshape(nel, -1, 3)
            gshp = self.shape_grad_u[bd.tag].reshape(nel, -1, 3, 3)
            self._int_u[bd.tag] = sum(
                pack.integrate(shp[:, :, comp] ** 2) for comp in range(3)
            )
            self._int_eps[bd.tag] = sum(
                pack.integrate((0.5 * (gshp[:, :, i, j] + gshp[:, :, j, i])) ** 2)
                for i in range(3)
                for j in range(3)
            )
        self._int_psi = {}
        self._int_gpsi = {}
        for bd in acoustic_space.blocks:
            if bd.tag not in case.acoustic_tags:
                continue
            pack = self.ev.packs_a[bd.tag]
            nel = bd.block.n_elements
            shp = self.shape_psi[bd.tag].reshape(nel, -1)
            gshp = self.shape_grad_psi[bd.tag].reshape(nel, -1, 3)
            self._int_psi[bd.tag] = pack.integrate(shp**2)
            self._int_gpsi[bd.tag] = sum(
                pack.integrate(gshp[:, :, ax] ** 2) for ax in range(3)
            )
        if self.ev.jump is not None:
            j = self.ev.jump
            itf = j["itf"]
            batch = face_quadrature(
                mesh, itf, acoustic_space.blocks[0].p + 2
            )
            self.jump_pts = batch.phys
        self.err_sq_max = 0.0
        self.exact_sq_max = 0.0
        self.err_sq_max_noacc = 0.0
        self.exact_sq_max_noacc = 0.0
        self._err_accum = 0.0
        self._exact_accum = 0.0
        self._err_rate_prev = None
        self._exact_rate_prev = None
        self.history: list[tuple[float, float, float]] = []

    # -- per-step work ----------------------------------------------------

    def _elastic_error_sq(self, state):
        amp = self.case.amplitudes.elastic
        a_val, a_dot = amp.value(state.t), amp.deriv(state.t)
        vel = disp = strain = 0.0
        for bd in self.elastic_space.blocks:
            if bd.tag not in self.case.elastic_tags:
                continue
            pack = self.ev.packs_e[bd.tag]
            nel = bd.block.n_elements
            shp = self.shape_u[bd.tag].reshape(nel, -1, 3)
            gshp = self.shape_grad_u[bd.tag].reshape(nel, -1, 3, 3)
            uh = self.elastic_space.block_values(state.u, bd.tag)
            vh = self.elastic_space.block_values(state.v, bd.tag)
            grads = {}
            for comp in range(3):
                cu = pack.elem_coefs(uh[:, comp])
                cv = pack.elem_coefs(vh[:, comp])
                disp += pack.integrate((a_val * shp[:, :, comp] - pack.values(cu)) ** 2)
                vel += pack.integrate((a_dot * shp[:, :, comp] - pack.values(cv)) ** 2)
                for ax in range(3):
                    grads[(comp, ax)] = (
                        a_val * gshp[:, :, comp, ax] - pack.gradient(cu, ax)
                    )
            for i in range(3):
                for j in range(3):
                    eps = 0.5 * (grads[(i, j)] + grads[(j, i)])
                    strain += pack.integrate(eps**2)
        return vel + disp + strain

    def _acoustic_error_terms(self, state):
        vel = grad = rate = 0.0
        for bd in self.acoustic_space.blocks:
            if bd.tag not in self.case.acoustic_tags:
                continue
            pack = self.ev.packs_a[bd.tag]
            mat = self.params.acoustic[bd.tag]
            amp = self.case.amplitudes.acoustic[bd.tag]
            a_val, a_dot = amp.value(state.t), amp.deriv(state.t)
            r = mat.b / mat.c**2
            nel = bd.block.n_elements
            shp = self.shape_psi[bd.tag].reshape(nel, -1)
            gshp = self.shape_grad_psi[bd.tag].reshape(nel, -1, 3)
            sl = self.acoustic_space.dof_slice(bd.tag)
            cphi = pack.elem_coefs(state.phi[sl])
            cxi = pack.elem_coefs(state.xi[sl])
            ctilde = pack.elem_coefs(state.psi[sl] + r * state.phi[sl])
            vel += pack.integrate((a_dot * shp - pack.values(cphi)) ** 2)
            rate += pack.integrate((-a_val * shp - pack.values(cxi)) ** 2)
            a_tilde = a_val + r * a_dot
            for ax in range(3):
                grad += pack.integrate(
                    (a_tilde * gshp[:, :, ax] - pack.gradient(ctilde, ax)) ** 2
                )
        jump = 0.0
        if self.ev.jump is not None:
            j = self.ev.jump
            itf = j["itf"]
            mbd = self.acoustic_space.block(itf.master)
            sbd = self.acoustic_space.block(itf.slave)
            rm = self.params.acoustic[itf.master].b / self.params.acoustic[itf.master].c ** 2
            rs = self.params.acoustic[itf.slave].b / self.params.acoustic[itf.slave].c ** 2
            amp_m = self.case.amplitudes.acoustic[itf.master]
            amp_s = self.case.amplitudes.acoustic[itf.slave]
            off_m = self.acoustic_space.offsets[itf.master]
            off_s = self.acoustic_space.offsets[itf.slave]
            tilde_m = (state.psi + rm * state.phi)[off_m + mbd.elem_nodes[j["m_el"]]]
            tilde_s = (state.psi + rs * state.phi)[off_s + sbd.elem_nodes[j["s_el"]]]
            tr_m = np.einsum("qi,qi->q", j["v_m"], tilde_m)
            tr_s = np.einsum("qi,qi->q", j["v_s"], tilde_s)
            sp_j = psi_shape(self.jump_pts)
            ex_m = (amp_m.value(state.t) + rm * amp_m.deriv(state.t)) * sp_j
            ex_s = (amp_s.value(state.t) + rs * amp_s.deriv(state.t)) * sp_j
            jump = float(np.sum(j["w_chi"] * ((ex_m - tr_m) - (ex_s - tr_s)) ** 2))
        return vel, grad, jump, rate

    def _exact_sq(self, t):
        """Instantaneous squared energy of the exact solution alone."""
        amp = self.case.amplitudes.elastic
        a_val, a_dot = amp.value(t), amp.deriv(t)
        total = 0.0
        for tag, int_u in self._int_u.items():
            total += (a_val**2 + a_dot**2) * int_u + a_val**2 * self._int_eps[tag]
        rate = 0.0
        for tag, int_psi in self._int_psi.items():
            mat = self.params.acoustic[tag]
            amp_a = self.case.amplitudes.acoustic[tag]
            av, ad = amp_a.value(t), amp_a.deriv(t)
            a_tilde = av + (mat.b / mat.c**2) * ad
            total += ad**2 * int_psi + a_tilde**2 * self._int_gpsi[tag]
            rate += av**2 * int_psi
        # the exact interface jump vanishes (continuous traces)
        return total, rate

    def __call__(self, step, t, state):
        err_el = self._elastic_error_sq(state)
        err_vel, err_grad, err_jump, err_rate = self._acoustic_error_terms(state)
        exact_inst, exact_rate = self._exact_sq(t)
        if self._err_rate_prev is not None:
            self._err_accum += 0.5 * self.dt * (self._err_rate_prev + err_rate)
            self._exact_accum += 0.5 * self.dt * (self._exact_rate_prev + exact_rate)
        self._err_rate_prev = err_rate
        self._exact_rate_prev = exact_rate
        err_inst = err_el + err_vel + err_grad + err_jump
        err_sq = err_inst + self._err_accum
        exact_sq = exact_inst + self._exact_accum
        self.err_sq_max = max(self.err_sq_max, err_sq)
        self.exact_sq_max = max(self.exact_sq_max, exact_sq)
        self.err_sq_max_noacc = max(self.err_sq_max_noacc, err_inst)
        self.exact_sq_max_noacc = max(self.exact_sq_max_noacc, exact_inst)
        self.history.append((t, err_sq, exact_sq))

    # -- results ----------------------------------------------------------

    @property
    def abs_error(self) -> float:
        return float(np.sqrt(self.err_sq_max))

    @property
    def rel_error(self) -> float:
        if self.exact_sq_max == 0.0:
            return float("nan")
        return float(np.sqrt(self.err_sq_max / self.exact_sq_max))

    @property
    def abs_error_no_accum(self) -> float:
        return float(np.sqrt(self.err_sq_max_noacc))

    @property
    def rel_error_no_accum(self) -> float:
        if self.exact_sq_max_noacc == 0.0:
            return float("nan")
        return float(np.sqrt(self.err_sq_max_noacc / self.exact_sq_max_noacc))


def _u_shape_grad(pts: np.ndarray) -> np.ndarray:
    """Jacobian of the displacement shape, (N, comp, axis)."""
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    sx, cx = np.sin(x), np.cos(x)
    sy, cy = np.sin(y), np.cos(y)
    sz, cz = np.sin(z), np.cos(z)
    g = np.empty((pts.shape[0], 3, 3))
    g[:, 0, 0] = cx * cy * sz
    g[:, 0, 1] = -sx * sy * sz
    g[:, 0, 2] = sx * cy * cz
    g[:, 1, 0] = -sx * sy * sz
    g[:, 1, 1] = cx * cy * sz
    g[:, 1, 2] = cx * sy * cz
    g[:, 2, 0] = -sx * cy * cz
    g[:, 2, 1] = -cx * sy * cz
    g[:, 2, 2] = -cx * cy * sz
    return g


def linf_energy_error(trajectory, tracker: ErrorTracker) -> dict:
    """Replay a stored trajectory through an error tracker.

    Requires the trajectory to have stored every step (stride 1).
    Returns the same figures the observer path produces.
    """
    for step, state in zip(trajectory.stored_steps, trajectory.states):
        tracker(step, state.t, state)
    return {
        "abs": tracker.abs_error,
        "rel": tracker.rel_error,
        "abs_no_accum": tracker.abs_error_no_accum,
        "rel_no_accum": tracker.rel_error_no_accum,
    }


def convergence_rates(errors, hs) -> list[float]:
    """rate_i = log(e_i / e_{i+1}) / log(h_i / h_{i+1})."""
    errors = list(map(float, errors))
    hs = list(map(float, hs))
    if len(errors) != len(hs) or len(errors) < 2:
        raise ValueError("need equally long error/h lists with >= 2 entries")
    if any(h2 >= h1 for h1, h2 in zip(hs, hs[1:])):
        raise ValueError("mesh sizes must be strictly decreasing")
    if any(e <= 0.0 for e in errors):
        raise ValueError("errors must be positive to take logarithms")
    return [
        np.log(e1 / e2) / np.log(h1 / h2)
        for (e1, e2), (h1, h2) in zip(zip(errors, errors[1:]), zip(hs, hs[1:]))
    ]


def postprocess_pressure(
    elastic_space: FieldSpace,
    acoustic_space: FieldSpace,
    params: MaterialParams,
    state,
) -> dict[str, np.ndarray]:
    """Nodal pressures: rho * psi-dot on acoustic blocks and
    -(1/3) trace(sigma) = -(lam + 2 mu / 3) div(u) on elastic blocks."""
    out: dict[str, np.ndarray] = {}
    for bd in acoustic_space.blocks:
        mat = params.acoustic[bd.tag]
        out[bd.tag] = mat.rho * acoustic_space.block_values(state.phi, bd.tag)[:, 0]
    for bd in elastic_space.blocks:
        mat = params.elastic[bd.tag]
        uh = elastic_space.block_values(state.u, bd.tag)
        n = bd.p + 1
        nel = bd.block.n_elements
        d = diff_matrix(bd.p)
        div = np.zeros((nel, n, n, n))
        strings = ("ezyj,xj->ezyx", "ezjx,yj->ezyx", "ejyx,zj->ezyx")
        for comp in range(3):
            c = uh[:, comp][bd.elem_nodes].reshape(nel, n, n, n)
            div += np.einsum(strings[comp], c, d) * (2.0 / bd.edge[comp])
        sums = np.bincount(bd.elem_nodes.ravel(), weights=div.reshape(nel, -1).ravel(),
                           minlength=bd.n_nodes)
        counts = np.bincount(bd.elem_nodes.ravel(), minlength=bd.n_nodes)
        div_nodal = sums / counts
        out[bd.tag] = -(mat.lam + 2.0 * mat.mu / 3.0) * div_nodal
    return out
