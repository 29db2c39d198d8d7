import numpy as np
import pytest
import scipy.linalg as sla

from elacu import assembly
from elacu.assembly import PenaltySpec, penalty_chi
from elacu.dofs import FieldSpace, build_dof_map, interpolate
from elacu.materials import AcousticMaterial, ElasticMaterial, MaterialParams, material_set
from elacu.mesh import BlockSpec, build_block_mesh, build_three_cubes
from elacu.quadrature import gll_rule

PI = np.pi


def _unit_params(tag="f", c=1.0, b=1.0, k1=0.0, k2=0.0, rho=1.0, lam=0.0, mu=1.0, zeta=0.0):
    elastic = {tag: ElasticMaterial(rho=rho, lam=lam, mu=max(mu, 1e-12), zeta=zeta)}
    acoustic = {tag: AcousticMaterial(rho=rho, c=c, b=b, k1=k1, k2=k2)}
    return MaterialParams(elastic=elastic, acoustic=acoustic)


def _unit_cube_space(p, ncomp=1, n=1, tag="f", hi=1.0):
    mesh = build_block_mesh(
        BlockSpec(lo=(0, 0, 0), hi=(hi, hi, hi), n=(n, n, n), tag=tag)
    )
    return FieldSpace([build_dof_map(mesh, p, ncomp)])


def test_elastic_rigid_translation_in_kernel():
    space = _unit_cube_space(2, ncomp=3, n=2, tag="e")
    params = material_set(1, 1)
    _, _, _, k_e = assembly.assemble_elastic(space, params)
    const = np.tile([0.3, -1.2, 0.7], space.n_dofs // 3)
    scale = np.abs(k_e.data).max()
    assert np.abs(k_e @ const).max() < 1e-11 * scale


def test_elastic_mass_sums_to_volume():
    space = _unit_cube_space(1, ncomp=3, n=1, tag="e")
    params = _unit_params(tag="e")
    m_e, c_e, z_e, _ = assembly.assemble_elastic(space, params)
    sums = m_e.reshape(-1, 3).sum(axis=0)
    assert np.allclose(sums, 1.0, atol=1e-13)
    assert np.allclose(c_e, 0.0)  # zeta = 0
    assert np.allclose(z_e, 0.0)


def test_elastic_shear_energy():
    # u = (x, 0, 0), lam = 0, mu = 1: a(u, u) = 2 mu |eps11|^2 * vol = 2
    space = _unit_cube_space(2, ncomp=3, n=2, tag="e")
    params = _unit_params(tag="e", lam=0.0, mu=1.0)
    _, _, _, k_e = assembly.assemble_elastic(space, params)
    u = interpolate(
        space, lambda pts, t, tag: np.column_stack([pts[:, 0], 0 * pts[:, 0], 0 * pts[:, 0]])
    )
    assert u @ (k_e @ u) == pytest.approx(2.0, rel=1e-12)


def test_acoustic_mass_and_scaling():
    space = _unit_cube_space(1)
    m_a, _ = assembly.assemble_acoustic_volume(space, _unit_params(c=1.0))
    assert m_a.sum() == pytest.approx(1.0, abs=1e-13)
    m_a2, _ = assembly.assemble_acoustic_volume(space, _unit_params(c=2.0))
    assert m_a2.sum() == pytest.approx(0.25, abs=1e-13)


def test_acoustic_stiffness_constant_kernel():
    space = _unit_cube_space(3, n=2)
    _, k_a = assembly.assemble_acoustic_volume(space, _unit_params())
    assert np.abs(k_a @ np.ones(space.n_dofs)).max() < 1e-12


def _acoustic_spaces(mesh, p):
    return FieldSpace(
        [build_dof_map(mesh.blocks["f"], p, 1), build_dof_map(mesh.blocks["t"], p, 1)]
    )


def test_penalty_chi_formula():
    assert penalty_chi(10.0, 3, PI / 3) == pytest.approx(85.9437, abs=1e-4)


def test_face_penalty_uses_slave_diameter():
    mesh = build_three_cubes(0, ratio_nonconforming=True)
    chi, h_f = assembly.face_penalties(mesh, mesh.interfaces["ft"], 2, PenaltySpec(10.0))
    assert np.allclose(h_f, (PI / 2) * np.sqrt(3.0))
    assert np.allclose(chi, 10.0 * 4 / h_f)


@pytest.mark.parametrize("conforming", [False, True])
def test_dg_zero_for_continuous_polynomial(conforming):
    mesh = build_three_cubes(0, ratio_nonconforming=not conforming)
    space = _acoustic_spaces(mesh, 2)
    d_dg = assembly.assemble_dg_interface(space, mesh, mesh.interfaces["ft"], PenaltySpec(10.0))
    # globally smooth quadratic: interpolants on both sides coincide with it
    psi = interpolate(space, lambda pts, t, tag: pts[:, 2] ** 2 + 0.5 * pts[:, 0])
    assert abs(psi @ (d_dg @ psi)) < 1e-11 * max(1.0, np.abs(d_dg.data).max())


def test_dg_unit_jump_penalty_energy():
    mesh = build_three_cubes(0, ratio_nonconforming=True)
    space = _acoustic_spaces(mesh, 2)
    pen = PenaltySpec(10.0)
    d_dg = assembly.assemble_dg_interface(space, mesh, mesh.interfaces["ft"], pen)
    chi, _ = assembly.face_penalties(mesh, mesh.interfaces["ft"], 2, pen)
    ind = space.per_block_constant({"f": 1.0, "t": 0.0})
    # gradients vanish, so only the penalty term contributes: chi * area
    assert ind @ (d_dg @ ind) == pytest.approx(chi[0] * PI**2, rel=1e-12)


def test_dg_symmetry():
    mesh = build_three_cubes(0, ratio_nonconforming=True)
    for p in (1, 2, 3):
        space = _acoustic_spaces(mesh, p)
        d_dg = assembly.assemble_dg_interface(
            space, mesh, mesh.interfaces["ft"], PenaltySpec(10.0)
        )
        gap = (d_dg - d_dg.T).tocoo()
        denom = np.sqrt((d_dg.data**2).sum())
        assert np.sqrt((gap.data**2).sum()) < 1e-12 * denom


def test_stiffness_symmetry():
    mesh = build_three_cubes(0, ratio_nonconforming=True)
    params = material_set(1, 2)
    space_e = FieldSpace([build_dof_map(mesh.blocks["e"], 2, 3)])
    _, _, _, k_e = assembly.assemble_elastic(space_e, params)
    gap = (k_e - k_e.T).tocoo()
    assert np.sqrt((gap.data**2).sum()) < 1e-12 * np.sqrt((k_e.data**2).sum())
    space_a = _acoustic_spaces(mesh, 2)
    _, k_a = assembly.assemble_acoustic_volume(space_a, params)
    gap = (k_a - k_a.T).tocoo()
    assert np.sqrt((gap.data**2).sum()) < 1e-12 * np.sqrt((k_a.data**2).sum())


def test_penalty_coercivity_and_monotonicity():
    mesh = build_three_cubes(0, ratio_nonconforming=True)
    params = material_set(1, 2)
    for p in (1, 2, 3):
        space = _acoustic_spaces(mesh, p)
        _, k_a = assembly.assemble_acoustic_volume(space, params)
        mins = []
        for beta in (1.0, 10.0, 100.0):
            d_dg = assembly.assemble_dg_interface(
                space, mesh, mesh.interfaces["ft"], PenaltySpec(beta)
            )
            ev = sla.eigvalsh((k_a + d_dg).toarray())
            mins.append(ev[0])
            if beta == 10.0:
                assert ev[0] >= -1e-10 * ev[-1]
        assert mins[0] <= mins[1] + 1e-11 and mins[1] <= mins[2] + 1e-11


def test_coupling_constant_pairing():
    mesh = build_three_cubes(0, ratio_nonconforming=True)
    space_e = FieldSpace([build_dof_map(mesh.blocks["e"], 2, 3)])
    space_a = _acoustic_spaces(mesh, 2)
    c_ea = assembly.assemble_coupling(space_e, space_a, mesh, [mesh.interfaces["ef"]])
    psi_one = space_a.per_block_constant({"f": 1.0, "t": 1.0})
    v_normal = np.tile([0.0, 0.0, 1.0], space_e.n_dofs // 3)
    # I(1, n_e) with n_e = +e_z on z = pi: integral of 1 over the interface
    assert v_normal @ (c_ea @ psi_one) == pytest.approx(PI**2, rel=1e-12)
    v_tangent = np.tile([1.0, 0.0, 0.0], space_e.n_dofs // 3)
    assert abs(v_tangent @ (c_ea @ psi_one)) < 1e-12
    # skew pairing is a transpose identity: entries are exactly shared
    assert np.array_equal(c_ea.T.toarray(), c_ea.toarray().T)
    rng = np.random.default_rng(2)
    v = rng.standard_normal(space_e.n_dofs)
    q = rng.standard_normal(space_a.n_dofs)
    pairing = v @ (c_ea @ q)
    assert (c_ea.T @ v) @ q == pytest.approx(pairing, abs=1e-13 * max(1.0, abs(pairing)))


def test_nonlinear_rhs_zero_when_linear():
    space = _unit_cube_space(2)
    params = _unit_params(k1=0.0, k2=0.0)
    rng = np.random.default_rng(3)
    out = assembly.assemble_nonlinear_rhs(
        space, params, rng.standard_normal(space.n_dofs),
        rng.standard_normal(space.n_dofs), rng.standard_normal(space.n_dofs),
    )
    assert np.all(out == 0.0)


def test_nonlinear_rhs_constant_fields():
    space = _unit_cube_space(2, n=2)
    k1 = 0.25
    params = _unit_params(c=2.0, k1=k1)
    alpha, gamma = 1.7, -0.6
    out = assembly.assemble_nonlinear_rhs(
        space, params, np.zeros(space.n_dofs),
        np.full(space.n_dofs, alpha), np.full(space.n_dofs, gamma),
    )
    assert out.sum() == pytest.approx(2 * k1 / 4.0 * alpha * gamma, rel=1e-13)


def test_nonlinear_rhs_gradient_term():
    # psi = x, psidot = x, k1 = 0, k2 = 1, c = 1: sum = 2 * volume
    space = _unit_cube_space(2, n=2)
    params = _unit_params(k2=1.0)
    x = interpolate(space, lambda pts, t, tag: pts[:, 0])
    out = assembly.assemble_nonlinear_rhs(space, params, x, x, np.zeros_like(x))
    assert out.sum() == pytest.approx(2.0, rel=1e-13)


def test_nonlinear_rhs_matches_brute_force():
    # dense nested-loop quadrature with the same collocated rule, 1 element
    p = 2
    space = _unit_cube_space(p, n=1)
    bd = space.blocks[0]
    params = _unit_params(c=1.3, k1=0.8, k2=0.6)
    rng = np.random.default_rng(9)
    psi = rng.standard_normal(space.n_dofs)
    phi = rng.standard_normal(space.n_dofs)
    xi = rng.standard_normal(space.n_dofs)
    out = assembly.assemble_nonlinear_rhs(space, params, psi, phi, xi)

    rule = gll_rule(p)
    from elacu.quadrature import diff_matrix, tensor_shape_eval

    m = (p + 1) ** 3
    expect = np.zeros(m)
    mat = params.acoustic["f"]
    for qz in range(p + 1):
        for qy in range(p + 1):
            for qx in range(p + 1):
                ref = (rule.nodes[qx], rule.nodes[qy], rule.nodes[qz])
                vals, grads = tensor_shape_eval(p, ref)
                grads = grads * 2.0  # edge length 1: d ref / d phys = 2
                w = rule.weights[qx] * rule.weights[qy] * rule.weights[qz] / 8.0
                pd = vals @ phi
                pdd = vals @ xi
                gp = grads.T @ psi
                gpd = grads.T @ phi
                integrand = (2.0 / mat.c**2) * (
                    mat.k1 * pd * pdd + mat.k2 * (gp @ gpd)
                )
                expect += w * integrand * vals
    assert np.max(np.abs(out - expect)) < 1e-13 * max(1.0, np.abs(expect).max())


def test_load_zero_and_constant():
    space = _unit_cube_space(2, n=2)
    zero = assembly.assemble_load(space, lambda pts, t, tag: np.zeros(len(pts)), 0.0)
    assert np.all(zero == 0.0)
    one = assembly.assemble_load(space, lambda pts, t, tag: np.ones(len(pts)), 0.0)
    assert one.sum() == pytest.approx(1.0, abs=1e-13)


def test_load_deterministic():
    from elacu.manufactured import forcing_acoustic, make_case

    mesh = build_three_cubes(0, ratio_nonconforming=True)
    space = _acoustic_spaces(mesh, 2)
    case = make_case(2, material_set(1, 2))
    f = lambda pts, t, tag: forcing_acoustic(case, pts, t, tag)
    v1 = assembly.assemble_load(space, f, 0.0)
    v2 = assembly.assemble_load(space, f, 0.0)
    assert np.all(np.isfinite(v1))
    assert np.array_equal(v1, v2)


def test_absorbing_operator():
    space = _unit_cube_space(1, tag="t")
    params = _unit_params(tag="t", c=1.0)

    empty = assembly.assemble_absorbing(space, params, {})
    assert np.all(empty == 0.0)

    one_face = assembly.assemble_absorbing(space, params, {"t": {"z+"}})
    assert one_face.sum() == pytest.approx(1.0, abs=1e-13)  # area of the face

    params2 = _unit_params(tag="t", c=2.0)
    halved = assembly.assemble_absorbing(space, params2, {"t": {"z+"}})
    assert halved.sum() == pytest.approx(0.5, abs=1e-13)


def test_mass_sum_matches_blocks():
    mesh = build_three_cubes(0, ratio_nonconforming=True)
    params = material_set(1, 2)
    space = _acoustic_spaces(mesh, 2)
    m_a, _ = assembly.assemble_acoustic_volume(space, params)
    expect = PI**3 * (
        1.0 / params.acoustic["f"].c ** 2 + 1.0 / params.acoustic["t"].c ** 2
    )
    assert m_a.sum() == pytest.approx(expect, rel=1e-12)
