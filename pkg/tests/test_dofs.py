import numpy as np
import pytest

from elacu.dofs import FieldSpace, build_dof_map, dirichlet_dofs, interpolate
from elacu.mesh import BlockSpec, build_block_mesh, build_three_cubes
from elacu.quadrature import gll_rule, lagrange_basis

PI = np.pi


def _block(n, p, ncomp=1, lo=(0, 0, 0), hi=(1, 1, 1)):
    mesh = build_block_mesh(BlockSpec(lo=lo, hi=hi, n=(n, n, n), tag="f"))
    return build_dof_map(mesh, p, ncomp)


def test_dof_counts():
    assert _block(2, 2).n_dofs == 125
    assert _block(1, 1, ncomp=3).n_dofs == 24
    assert _block(3, 3).n_dofs == 1000


def test_coincident_nodes_share_dofs():
    bd = _block(2, 3)
    # nodes referenced from two neighbouring elements coincide physically
    left = bd.elem_nodes[0].reshape(4, 4, 4)[:, :, -1]
    right = bd.elem_nodes[1].reshape(4, 4, 4)[:, :, 0]
    assert np.array_equal(left, right)
    coords = bd.nodes[left.ravel()]
    assert np.allclose(coords[:, 0], 0.5, atol=1e-10)


def test_fluid_dirichlet_is_mantle_only():
    mesh = build_three_cubes(0, ratio_nonconforming=True)
    space = FieldSpace(
        [build_dof_map(mesh.blocks["f"], 1, 1), build_dof_map(mesh.blocks["t"], 1, 1)]
    )
    ds = dirichlet_dofs(space, mesh)
    fluid = [i for i, tag in enumerate(ds.node_block) if tag == "f"]
    assert len(fluid) == 24  # 56 boundary nodes minus two 4x4 interface faces
    # no interior node is constrained, no duplicates
    assert len(np.unique(ds.dofs)) == ds.dofs.size
    coords = ds.node_coords[fluid]
    on_mantle = (
        (np.abs(np.abs(coords[:, 0]) - PI / 2) < 1e-12)
        | (np.abs(np.abs(coords[:, 1]) - PI / 2) < 1e-12)
    )
    assert np.all(on_mantle)


def test_interior_node_never_dirichlet():
    mesh = build_three_cubes(0)
    space = FieldSpace([build_dof_map(mesh.blocks["e"], 2, 3)])
    ds = dirichlet_dofs(space, mesh)
    bd = space.blocks[0]
    interior = ~(
        bd.face_node_mask("x-") | bd.face_node_mask("x+")
        | bd.face_node_mask("y-") | bd.face_node_mask("y+")
        | bd.face_node_mask("z-") | bd.face_node_mask("z+")
    )
    interior_dofs = {
        3 * n + c for n in np.flatnonzero(interior) for c in range(3)
    }
    assert interior_dofs.isdisjoint(set(ds.dofs.tolist()))


def test_absorbing_faces_excluded():
    mesh = build_three_cubes(0)
    space = FieldSpace([build_dof_map(mesh.blocks["t"], 1, 1)])
    all_faces = dirichlet_dofs(space, mesh)
    absorbing = dirichlet_dofs(space, mesh, absorbing={"t": {"z+"}})
    assert absorbing.n_constrained < all_faces.n_constrained


def test_interpolate_constant():
    space = FieldSpace([_block(2, 2)])
    vec = interpolate(space, lambda pts, t, tag: np.full(len(pts), 7.0))
    assert np.allclose(vec, 7.0)


def test_interpolate_reproduces_linear_field():
    space = FieldSpace([_block(2, 1)])
    bd = space.blocks[0]
    vec = interpolate(space, lambda pts, t, tag: pts[:, 0] + 2 * pts[:, 1])
    # evaluate the interpolant at random points of one element
    rng = np.random.default_rng(3)
    rule = bd.rule
    for _ in range(5):
        ref = rng.uniform(-1, 1, 3)
        eid = rng.integers(0, bd.block.n_elements)
        origin = bd.block.element_origin(eid)
        phys = origin + 0.5 * (ref + 1.0) * bd.edge
        vx, _ = lagrange_basis(rule, ref[0])
        vy, _ = lagrange_basis(rule, ref[1])
        vz, _ = lagrange_basis(rule, ref[2])
        shape = (vz[:, None, None] * vy[None, :, None] * vx[None, None, :]).ravel()
        val = shape @ vec[bd.elem_nodes[eid]]
        assert abs(val - (phys[0] + 2 * phys[1])) < 1e-12


def test_interpolation_is_projection():
    space = FieldSpace([_block(3, 2)])
    rng = np.random.default_rng(11)
    field = lambda pts, t, tag: np.sin(pts[:, 0]) * np.cos(2 * pts[:, 2])
    v1 = interpolate(space, field)

    def discrete(pts, t, tag):
        # exact nodal lookup: interpolation evaluates at the same nodes
        return v1

    v2 = interpolate(space, discrete)
    assert np.array_equal(v1, v2)


def test_within_block_conformity_at_shared_face():
    bd = _block(2, 2)
    rule = bd.rule
    vec = np.sin(bd.nodes[:, 0] + 0.5 * bd.nodes[:, 1] - bd.nodes[:, 2])
    # shared face x = 0.5 between elements (0,0,0) and (1,0,0)
    vals_left, _ = lagrange_basis(rule, 1.0)
    vals_right, _ = lagrange_basis(rule, -1.0)
    ref = (0.37, -0.81)
    vy, _ = lagrange_basis(rule, ref[0])
    vz, _ = lagrange_basis(rule, ref[1])
    left = np.einsum(
        "z,y,x,zyx->", vz, vy, vals_left, vec[bd.elem_nodes[0]].reshape(3, 3, 3)
    )
    right = np.einsum(
        "z,y,x,zyx->", vz, vy, vals_right, vec[bd.elem_nodes[1]].reshape(3, 3, 3)
    )
    assert abs(left - right) < 1e-13


@pytest.mark.parametrize("p", [1, 2])
def test_interpolation_l2_rate(p):
    # cos x cos y sin z on the fluid block: L2 error drops ~ 2^(p+1) per level
    from elacu.manufactured import psi_shape
    from elacu.norms import _BlockPack

    errs = []
    for level in (0, 1):
        n = 3 * 2**level
        mesh = build_block_mesh(
            BlockSpec(lo=(-PI / 2, -PI / 2, PI), hi=(PI / 2, PI / 2, 2 * PI),
                      n=(n, n, n), tag="f")
        )
        bd = build_dof_map(mesh, p, 1)
        space = FieldSpace([bd])
        vec = interpolate(space, lambda pts, t, tag: psi_shape(pts))
        pack = _BlockPack(bd, n_extra=2)
        exact = psi_shape(pack.points.reshape(-1, 3)).reshape(mesh.n_elements, -1)
        diff = exact - pack.values(pack.elem_coefs(vec))
        errs.append(np.sqrt(pack.integrate(diff**2)))
    ratio = errs[0] / errs[1]
    assert abs(ratio - 2 ** (p + 1)) < 0.25 * 2 ** (p + 1)
