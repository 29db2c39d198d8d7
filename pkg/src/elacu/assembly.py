"""Assembly of the discrete operators of the coupled semi-discrete system.

Volume terms use the collocated GLL rule (p+1 points per axis), which makes
every mass-like operator exactly diagonal; the resulting under-integration
of coefficient and nonlinear terms is the standard spectral-element
variational crime.  Interface terms use tensor Gauss rules with (p+2)^2
points per slave-overlap sub-rectangle, which integrates the piecewise
polynomial trace products exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .dofs import BlockDofs, FieldSpace
from .errors import MeshConsistencyError
from .materials import MaterialParams, TISSUE_ACOUSTIC, TISSUE_ELASTIC
from .mesh import CoupledMesh, FaceQuadBatch, Interface, face_quadrature
from .quadrature import diff_matrix, gll_rule, lagrange_basis


@dataclass(frozen=True)
class PenaltySpec:
    """Interior-penalty strength: per face chi = beta * p^2 / h_F."""

    beta: float

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("penalty parameter beta must be positive")


def penalty_chi(beta: float, p: int, h_f: float) -> float:
    return beta * p * p / h_f


def face_penalties(
    mesh: CoupledMesh, interface: Interface, p: int, penalty: PenaltySpec
) -> tuple[np.ndarray, np.ndarray]:
    """Per-face (chi, h_F); h_F is the smallest slave-element diameter
    among slave elements overlapping the face."""
    sblk = mesh.blocks[interface.slave]
    h_f = np.array(
        [min(sblk.diameter for _ in face.slaves) for face in interface.faces]
    )
    chi = penalty.beta * p * p / h_f
    return chi, h_f


# ---------------------------------------------------------------------------
# reference-element helpers
# ---------------------------------------------------------------------------


def _nodal_weights(bd: BlockDofs) -> np.ndarray:
    """W3[(lz,ly,lx)] = w_lz w_ly w_lx detJ, flattened local weights."""
    w = bd.rule.weights
    return (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel() * bd.det_j


def _nodal_gradients(bd: BlockDofs) -> list[np.ndarray]:
    """G[a][q, j] = d phi_j / d x_a at local node q (physical gradient)."""
    p = bd.p
    d = diff_matrix(p)
    eye = np.eye(p + 1)
    m = (p + 1) ** 3
    gx = np.einsum("Zz,Yy,Xx->ZYXzyx", eye, eye, d).reshape(m, m) * (2.0 / bd.edge[0])
    gy = np.einsum("Zz,Yy,Xx->ZYXzyx", eye, d, eye).reshape(m, m) * (2.0 / bd.edge[1])
    gz = np.einsum("Zz,Yy,Xx->ZYXzyx", d, eye, eye).reshape(m, m) * (2.0 / bd.edge[2])
    return [gx, gy, gz]


def _scatter_matrix(space: FieldSpace, bd: BlockDofs, elem_mat: np.ndarray) -> sp.coo_matrix:
    """Tile one congruent element matrix over all elements of a block."""
    off = space.offsets[bd.tag]
    if bd.ncomp == 1:
        gdofs = off + bd.elem_nodes
    else:
        gdofs = (
            off
            + bd.elem_nodes[:, :, None] * bd.ncomp
            + np.arange(bd.ncomp)[None, None, :]
        ).reshape(bd.block.n_elements, -1)
    nel, mloc = gdofs.shape
    rows = np.broadcast_to(gdofs[:, :, None], (nel, mloc, mloc)).ravel()
    cols = np.broadcast_to(gdofs[:, None, :], (nel, mloc, mloc)).ravel()
    data = np.broadcast_to(elem_mat.ravel(), (nel, mloc * mloc)).ravel()
    return sp.coo_matrix((data, (rows, cols)), shape=(space.n_dofs, space.n_dofs))


def assemble_elastic(space: FieldSpace, params: MaterialParams):
    """Elastic operators: diagonal M, C, Z and sparse stiffness K.

    K implements  integral( lam div(u) div(v) + 2 mu eps(u):eps(v) );
    M = rho * nodal mass, C = 2 rho zeta * nodal mass, Z = rho zeta^2 *
    nodal mass, all per block.
    """
    m_diag = np.empty(space.n_dofs)
    c_diag = np.empty(space.n_dofs)
    z_diag = np.empty(space.n_dofs)
    blocks_coo = []
    for bd in space.blocks:
        mat = params.elastic[bd.tag]
        sl = space.dof_slice(bd.tag)
        lump = np.repeat(bd.lumped, bd.ncomp)
        m_diag[sl] = mat.rho * lump
        c_diag[sl] = 2.0 * mat.rho * mat.zeta * lump
        z_diag[sl] = mat.rho * mat.zeta**2 * lump

        w3 = _nodal_weights(bd)
        g = _nodal_gradients(bd)
        mloc = g[0].shape[1]
        a = np.empty((3, 3, mloc, mloc))
        for al in range(3):
            for be in range(3):
                a[al, be] = g[al].T @ (w3[:, None] * g[be])
        trace_a = a[0, 0] + a[1, 1] + a[2, 2]
        k_elem = np.zeros((mloc, 3, mloc, 3))
        for al in range(3):
            for be in range(3):
                k_elem[:, al, :, be] = mat.lam * a[al, be] + mat.mu * a[be, al]
                if al == be:
                    k_elem[:, al, :, be] += mat.mu * trace_a
        blocks_coo.append(_scatter_matrix(space, bd, k_elem.reshape(3 * mloc, 3 * mloc)))
    k_e = sum(blocks_coo).tocsr()
    return m_diag, c_diag, z_diag, k_e


def assemble_acoustic_volume(space: FieldSpace, params: MaterialParams):
    """Acoustic diagonal mass (c^-2 weighted) and broken stiffness."""
    m_diag = np.empty(space.n_dofs)
    blocks_coo = []
    for bd in space.blocks:
        mat = params.acoustic[bd.tag]
        m_diag[space.dof_slice(bd.tag)] = bd.lumped / (mat.c * mat.c)
        w3 = _nodal_weights(bd)
        g = _nodal_gradients(bd)
        k_elem = sum(gi.T @ (w3[:, None] * gi) for gi in g)
        blocks_coo.append(_scatter_matrix(space, bd, k_elem))
    k_a = sum(blocks_coo).tocsr()
    return m_diag, k_a


# ---------------------------------------------------------------------------
# interface terms
# ---------------------------------------------------------------------------


def _trace_eval(bd: BlockDofs, refs: np.ndarray, normal: np.ndarray):
    """Basis values and normal derivatives at reference points of a block.

    Returns (values (Q, m), normal_grad (Q, m)) with the physical gradient
    contracted against ``normal``.
    """
    rule = bd.rule
    bx, dx = lagrange_basis(rule, refs[:, 0])
    by, dy = lagrange_basis(rule, refs[:, 1])
    bz, dz = lagrange_basis(rule, refs[:, 2])
    q = refs.shape[0]
    m = (bd.p + 1) ** 3
    vals = np.einsum("qa,qb,qc->qabc", bz, by, bx).reshape(q, m)
    gn = np.zeros((q, m))
    if normal[0] != 0.0:
        gn += normal[0] * (2.0 / bd.edge[0]) * np.einsum(
            "qa,qb,qc->qabc", bz, by, dx
        ).reshape(q, m)
    if normal[1] != 0.0:
        gn += normal[1] * (2.0 / bd.edge[1]) * np.einsum(
            "qa,qb,qc->qabc", bz, dy, bx
        ).reshape(q, m)
    if normal[2] != 0.0:
        gn += normal[2] * (2.0 / bd.edge[2]) * np.einsum(
            "qa,qb,qc->qabc", dz, by, bx
        ).reshape(q, m)
    return vals, gn


def _grouped(batch: FaceQuadBatch, nq: int):
    """Reshape batch arrays into (groups, nq) with constant elements."""
    q_total = batch.weight.size
    if q_total % nq:
        raise MeshConsistencyError("face quadrature batch has ragged groups")
    g = q_total // nq
    me = batch.master_elem.reshape(g, nq)
    se = batch.slave_elem.reshape(g, nq)
    fi = batch.face_index.reshape(g, nq)
    if np.any(me != me[:, :1]) or np.any(se != se[:, :1]):
        raise MeshConsistencyError("face quadrature groups are not element-pure")
    return g, me[:, 0], se[:, 0], fi[:, 0]


def assemble_dg_interface(
    space: FieldSpace,
    mesh: CoupledMesh,
    interface: Interface,
    penalty: PenaltySpec,
):
    """Interior-penalty coupling across the acoustic-acoustic interface.

    Implements  -< {grad psi}, [phi] > - < {grad phi}, [psi] >
                + < chi [psi], [phi] >
    over the master faces, where the jump is the scalar difference of the
    two traces against the master normal and the average carries a factor
    one half per side.  The result is symmetric.
    """
    mbd = space.block(interface.master)
    sbd = space.block(interface.slave)
    if mbd.p != sbd.p:
        raise MeshConsistencyError("both interface sides must share the degree")
    p = mbd.p
    n1d = p + 2
    batch = face_quadrature(mesh, interface, n1d)
    chi_face, _ = face_penalties(mesh, interface, p, penalty)

    v_m, gn_m = _trace_eval(mbd, batch.master_ref, batch.normal_master)
    v_s, gn_s = _trace_eval(sbd, batch.slave_ref, batch.normal_master)

    nq = n1d * n1d
    g, m_el, s_el, f_idx = _grouped(batch, nq)
    m = (p + 1) ** 3
    jump = np.concatenate([v_m.reshape(g, nq, m), -v_s.reshape(g, nq, m)], axis=2)
    avg = 0.5 * np.concatenate(
        [gn_m.reshape(g, nq, m), gn_s.reshape(g, nq, m)], axis=2
    )
    w = batch.weight.reshape(g, nq)
    chi_g = chi_face[f_idx]

    flux = np.einsum("gq,gqi,gqj->gij", w, avg, jump, optimize=True)
    pen = np.einsum("gq,g,gqi,gqj->gij", w, chi_g, jump, jump, optimize=True)
    local = -flux - np.swapaxes(flux, 1, 2) + pen

    m_dofs = space.offsets[interface.master] + mbd.elem_nodes[m_el]
    s_dofs = space.offsets[interface.slave] + sbd.elem_nodes[s_el]
    dofs = np.concatenate([m_dofs, s_dofs], axis=1)  # (g, 2m)
    rows = np.broadcast_to(dofs[:, :, None], local.shape).ravel()
    cols = np.broadcast_to(dofs[:, None, :], local.shape).ravel()
    d_dg = sp.coo_matrix(
        (local.ravel(), (rows, cols)), shape=(space.n_dofs, space.n_dofs)
    ).tocsr()
    return d_dg


def assemble_coupling(
    elastic_space: FieldSpace,
    acoustic_space: FieldSpace,
    mesh: CoupledMesh,
    interfaces: list[Interface],
):
    """Interface pairing  C[(i,comp), j] = n_elastic[comp] * < phi^a_j, phi^e_i >.

    Rows live on the elastic (slave) side, columns on the acoustic master
    side.  Used as +rho_f * C (psidot + b/c^2 psiddot) in the elastic
    equations and as -C^T udot in the acoustic equation.
    """
    rows_all, cols_all, data_all = [], [], []
    for itf in interfaces:
        mbd = acoustic_space.block(itf.master)
        sbd = elastic_space.block(itf.slave)
        p = mbd.p
        n1d = p + 2
        batch = face_quadrature(mesh, itf, n1d)
        v_m, _ = _trace_eval(mbd, batch.master_ref, itf.normal_master)
        v_s, _ = _trace_eval(sbd, batch.slave_ref, itf.normal_master)
        nq = n1d * n1d
        g, m_el, s_el, _ = _grouped(batch, nq)
        m = (p + 1) ** 3
        w = batch.weight.reshape(g, nq)
        local = np.einsum(
            "gq,gqi,gqj->gij", w, v_s.reshape(g, nq, m), v_m.reshape(g, nq, m),
            optimize=True,
        )
        n_slave = -itf.normal_master  # outward normal of the elastic block
        col_dofs = acoustic_space.offsets[itf.master] + mbd.elem_nodes[m_el]
        for comp in range(3):
            if n_slave[comp] == 0.0:
                continue
            row_dofs = (
                elastic_space.offsets[itf.slave]
                + sbd.elem_nodes[s_el] * sbd.ncomp
                + comp
            )
            rows_all.append(np.broadcast_to(row_dofs[:, :, None], local.shape).ravel())
            cols_all.append(np.broadcast_to(col_dofs[:, None, :], local.shape).ravel())
            data_all.append((n_slave[comp] * local).ravel())
    c_ea = sp.coo_matrix(
        (
            np.concatenate(data_all),
            (np.concatenate(rows_all), np.concatenate(cols_all)),
        ),
        shape=(elastic_space.n_dofs, acoustic_space.n_dofs),
    ).tocsr()
    return c_ea


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------


def assemble_load(space: FieldSpace, forcing, t: float) -> np.ndarray:
    """Collocated load moments: entry_j = lumped_weight_j * f(x_j, t).

    ``forcing(points, t, tag)`` returns (N,) or (N, ncomp) values.
    """
    out = np.empty(space.n_dofs)
    for bd in space.blocks:
        vals = np.asarray(forcing(bd.nodes, t, bd.tag), dtype=float)
        sl = space.dof_slice(bd.tag)
        if bd.ncomp == 1:
            out[sl] = bd.lumped * vals.reshape(bd.n_nodes)
        else:
            out[sl] = (bd.lumped[:, None] * vals.reshape(bd.n_nodes, bd.ncomp)).ravel()
    return out


def assemble_nonlinear_rhs(
    space: FieldSpace,
    params: MaterialParams,
    psi: np.ndarray,
    psidot: np.ndarray,
    psiddot: np.ndarray,
) -> np.ndarray:
    """Quadratic acoustic source  (2/c^2)(k1 psidot psiddot + k2 grad psi . grad psidot).

    The k1 part is purely nodal under collocated quadrature; the k2 part
    needs element-wise gradients and is skipped when k2 == 0.
    """
    out = np.zeros(space.n_dofs)
    for bd in space.blocks:
        mat = params.acoustic[bd.tag]
        sl = space.dof_slice(bd.tag)
        c2 = mat.c * mat.c
        if mat.k1 != 0.0:
            out[sl] += (2.0 * mat.k1 / c2) * bd.lumped * psidot[sl] * psiddot[sl]
        if mat.k2 != 0.0:
            n = bd.p + 1
            nel = bd.block.n_elements
            d = diff_matrix(bd.p)
            w3 = _nodal_weights(bd).reshape(n, n, n)
            cpsi = psi[sl][bd.elem_nodes].reshape(nel, n, n, n)
            cdot = psidot[sl][bd.elem_nodes].reshape(nel, n, n, n)
            dot = np.zeros((nel, n, n, n))
            for axis, letters in enumerate(("ezyj,xj->ezyx", "ezjx,yj->ezyx", "ejyx,zj->ezyx")):
                ga = np.einsum(letters, cpsi, d) * (2.0 / bd.edge[axis])
                gb = np.einsum(letters, cdot, d) * (2.0 / bd.edge[axis])
                dot += ga * gb
            contrib = (2.0 * mat.k2 / c2) * (w3[None] * dot).reshape(nel, -1)
            out[sl] += np.bincount(
                bd.elem_nodes.ravel(), weights=contrib.ravel(), minlength=bd.n_nodes
            )
    return out


def assemble_absorbing(
    space: FieldSpace,
    params: MaterialParams,
    faces: dict[str, set[str]],
) -> np.ndarray:
    """Diagonal first-order absorbing operator (1/c) face mass on tagged faces.

    Applied against psidot:  d psi / dn + (1/c) psidot = 0.
    """
    diag = np.zeros(space.n_dofs)
    for bd in space.blocks:
        tagged = faces.get(bd.tag)
        if not tagged:
            continue
        mat = params.acoustic[bd.tag]
        sl = space.dof_slice(bd.tag)
        ix, iy, iz = bd.node_multi_index()
        multi = (ix, iy, iz)
        block_diag = diag[sl]  # view
        for face in tagged:
            axis = "xyz".index(face[0])
            mask = bd.face_node_mask(face)
            w_face = np.ones(bd.n_nodes)
            for a in range(3):
                if a != axis:
                    w_face *= bd.weights1d[a][multi[a]]
            block_diag[mask] += w_face[mask] / mat.c
    return diag


# ---------------------------------------------------------------------------
# system bundle
# ---------------------------------------------------------------------------


@dataclass
class SystemOperators:
    """All assembled operators of one coupled problem."""

    m_e: np.ndarray            # diagonal elastic mass (rho-weighted)
    c_e: np.ndarray            # diagonal elastic damping (2 rho zeta)
    z_e: np.ndarray            # diagonal elastic zero-order term (rho zeta^2)
    k_e: sp.csr_matrix
    m_a: np.ndarray            # diagonal acoustic mass (c^-2 weighted)
    k_a: sp.csr_matrix         # broken acoustic stiffness
    d_dg: sp.csr_matrix | None  # interface flux/penalty terms (acoustic tissue)
    c_ea: sp.csr_matrix        # coupling, elastic rows x acoustic cols
    b_abs: np.ndarray | None   # diagonal absorbing operator (demo only)
    b_over_c2: np.ndarray      # per-acoustic-dof b/c^2
    rho_f: float               # fluid density entering the coupling load
    bc_fluid: float            # fluid-side b/c^2 entering the coupling load

    @property
    def a_acoustic(self) -> sp.csr_matrix:
        return self.k_a if self.d_dg is None else (self.k_a + self.d_dg).tocsr()


def build_operators(
    mesh: CoupledMesh,
    elastic_space: FieldSpace,
    acoustic_space: FieldSpace,
    params: MaterialParams,
    option: int,
    penalty: PenaltySpec,
    absorbing: dict[str, set[str]] | None = None,
) -> SystemOperators:
    """Assemble every operator of the coupled problem for one tissue option."""
    m_e, c_e, z_e, k_e = assemble_elastic(elastic_space, params)
    m_a, k_a = assemble_acoustic_volume(acoustic_space, params)
    if option == TISSUE_ACOUSTIC:
        d_dg = assemble_dg_interface(acoustic_space, mesh, mesh.interfaces["ft"], penalty)
        coupling_itfs = [mesh.interfaces["ef"]]
    elif option == TISSUE_ELASTIC:
        d_dg = None
        coupling_itfs = [mesh.interfaces["ef"], mesh.interfaces["ft"]]
    else:
        raise ValueError(f"unknown tissue option {option!r}")
    c_ea = assemble_coupling(elastic_space, acoustic_space, mesh, coupling_itfs)
    b_abs = assemble_absorbing(acoustic_space, params, absorbing) if absorbing else None
    bc = acoustic_space.per_block_constant(
        {bd.tag: params.acoustic[bd.tag].b / params.acoustic[bd.tag].c ** 2
         for bd in acoustic_space.blocks}
    )
    fluid = params.acoustic["f"]
    return SystemOperators(
        m_e=m_e, c_e=c_e, z_e=z_e, k_e=k_e,
        m_a=m_a, k_a=k_a, d_dg=d_dg, c_ea=c_ea, b_abs=b_abs,
        b_over_c2=bc, rho_f=fluid.rho, bc_fluid=fluid.b / fluid.c**2,
    )
