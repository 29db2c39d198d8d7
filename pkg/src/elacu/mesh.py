"""Structured hexahedral block meshes and interface pairing.

The computational domain is a stack of axis-aligned boxes ("blocks"), each
meshed by a structured grid of congruent hexahedra.  Neighbouring blocks
share a flat interface plane but their grids need not match there; interface
integrals live on the faces of a designated master block (the fluid block on
both of its interfaces) and slave traces are obtained by closed-form point
location on the structured slave grid.

Element ids within a block are flattened with the x index running fastest:
eid = (ez*ny + ey)*nx + ex.  Vertex ids follow the same convention on the
(nx+1, ny+1, nz+1) vertex grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidGeometryError,
    MeshConsistencyError,
    PointLocationError,
    SingularJacobianError,
)
from .quadrature import gauss_legendre

_PLANE_TOL = 1e-10
_SNAP_TOL = 5e-12  # in units of one element edge

FACE_NAMES = ("x-", "x+", "y-", "y+", "z-", "z+")

# VTK hexahedron corner ordering on the reference cube.
_CORNER_SHIFTS = np.array(
    [
        [0, 0, 0],
        [1, 0, 0],
        [1, 1, 0],
        [0, 1, 0],
        [0, 0, 1],
        [1, 0, 1],
        [1, 1, 1],
        [0, 1, 1],
    ],
    dtype=int,
)


@dataclass(frozen=True)
class BlockSpec:
    """Axis-aligned box with a structured element count per axis."""

    lo: np.ndarray
    hi: np.ndarray
    n: np.ndarray
    tag: str

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        n = np.asarray(self.n, dtype=int)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", n)
        if lo.shape != (3,) or hi.shape != (3,) or n.shape != (3,):
            raise InvalidGeometryError("BlockSpec fields must be 3-vectors")
        if not np.all(hi > lo):
            raise InvalidGeometryError(
                f"block {self.tag!r} has non-positive extent: lo={lo}, hi={hi}"
            )
        if not np.all(n >= 1):
            raise InvalidGeometryError(f"block {self.tag!r} needs n >= 1 per axis")


class BlockMesh:
    """Structured hex mesh of a single block (all elements congruent)."""

    def __init__(self, spec: BlockSpec):
        self.spec = spec
        self.tag = spec.tag
        self.lo = spec.lo
        self.hi = spec.hi
        self.n = spec.n
        self.edge = (spec.hi - spec.lo) / spec.n
        nx, ny, nz = spec.n
        self.n_elements = int(nx * ny * nz)

        xs = [spec.lo[a] + self.edge[a] * np.arange(spec.n[a] + 1) for a in range(3)]
        gz, gy, gx = np.meshgrid(xs[2], xs[1], xs[0], indexing="ij")
        self.vertices = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

        eids = np.arange(self.n_elements)
        exs = eids % nx
        eys = (eids // nx) % ny
        ezs = eids // (nx * ny)
        base = np.column_stack([exs, eys, ezs])
        corners = base[:, None, :] + _CORNER_SHIFTS[None, :, :]
        self.hexes = (
            (corners[:, :, 2] * (ny + 1) + corners[:, :, 1]) * (nx + 1) + corners[:, :, 0]
        ).astype(np.int64)

    def element_origin(self, eid) -> np.ndarray:
        """Low corner of element(s) ``eid``; works on arrays."""
        eid = np.asarray(eid)
        nx, ny = self.n[0], self.n[1]
        idx = np.stack([eid % nx, (eid // nx) % ny, eid // (nx * ny)], axis=-1)
        return self.lo + idx * self.edge

    def element_id(self, ex: int, ey: int, ez: int) -> int:
        return int((ez * self.n[1] + ey) * self.n[0] + ex)

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    @property
    def diameter(self) -> float:
        """Euclidean diameter of one element (all congruent)."""
        return float(np.linalg.norm(self.edge))


def build_block_mesh(spec: BlockSpec) -> BlockMesh:
    """Mesh one block with ``n[0]*n[1]*n[2]`` axis-aligned hexahedra."""
    return BlockMesh(spec)


def element_map_eval(block: BlockMesh, eid: int, ref_point):
    """Trilinear element map: reference cube [-1,1]^3 -> physical element.

    Returns ``(phys_point, jacobian, det_jacobian)``.

    Raises
    ------
    SingularJacobianError
        If the mapped Jacobian determinant is not positive.
    """
    ref = np.asarray(ref_point, dtype=float)
    verts = block.vertices[block.hexes[eid]]  # (8, 3)
    s = 0.5 * (ref + 1.0)  # in [0,1]
    shp = np.empty(8)
    dshp = np.empty((8, 3))
    for c in range(8):
        f = [s[a] if _CORNER_SHIFTS[c, a] else 1.0 - s[a] for a in range(3)]
        g = [0.5 if _CORNER_SHIFTS[c, a] else -0.5 for a in range(3)]
        shp[c] = f[0] * f[1] * f[2]
        dshp[c, 0] = g[0] * f[1] * f[2]
        dshp[c, 1] = f[0] * g[1] * f[2]
        dshp[c, 2] = f[0] * f[1] * g[2]
    phys = shp @ verts
    jac = verts.T @ dshp  # J[i, j] = d phys_i / d ref_j
    det = float(np.linalg.det(jac))
    if det <= 0.0 or not np.isfinite(det):
        raise SingularJacobianError(
            f"element {eid} of block {block.tag!r} has detJ={det:g}"
        )
    return phys, jac, det


@dataclass
class SlaveOverlap:
    """Part of a master face covered by one slave element."""

    element: int
    rect: tuple[float, float, float, float]  # (u0, u1, v0, v1) in-plane bounds


@dataclass
class MasterFace:
    """One master-side interface face with its slave decomposition."""

    element: int
    rect: tuple[float, float, float, float]
    slaves: list[SlaveOverlap] = field(default_factory=list)

    @property
    def area(self) -> float:
        u0, u1, v0, v1 = self.rect
        return (u1 - u0) * (v1 - v0)


@dataclass
class Interface:
    """Flat interface between a master and a slave block.

    ``normal_master`` is the outward unit normal of the master block at the
    plane; the slave block's outward normal is its negative.
    """

    name: str
    master: str
    slave: str
    axis: int
    coord: float
    normal_master: np.ndarray
    faces: list[MasterFace]

    @property
    def tangent_axes(self) -> tuple[int, int]:
        return tuple(a for a in range(3) if a != self.axis)

    @property
    def area(self) -> float:
        return sum(f.area for f in self.faces)


@dataclass
class FaceQuadBatch:
    """Quadrature points on the master faces of one interface.

    All arrays share the leading dimension Q (total number of points).
    ``face_index`` maps each point to its position in ``interface.faces``.
    Weights include the in-plane area Jacobian of the sub-rectangles.
    """

    interface: Interface
    master_elem: np.ndarray
    master_ref: np.ndarray
    slave_elem: np.ndarray
    slave_ref: np.ndarray
    phys: np.ndarray
    weight: np.ndarray
    face_index: np.ndarray

    @property
    def normal_master(self) -> np.ndarray:
        return self.interface.normal_master


class CoupledMesh:
    """Per-block meshes plus classified interfaces and boundary faces."""

    def __init__(self, blocks: dict[str, BlockMesh], interfaces: dict[str, Interface]):
        self.blocks = blocks
        self.interfaces = interfaces
        # face-name sets per block that lie on an interface plane
        self.interface_faces: dict[str, set[str]] = {tag: set() for tag in blocks}
        for itf in interfaces.values():
            ax = "xyz"[itf.axis]
            mblk, sblk = blocks[itf.master], blocks[itf.slave]
            m_side = "+" if abs(mblk.hi[itf.axis] - itf.coord) < _PLANE_TOL else "-"
            s_side = "+" if abs(sblk.hi[itf.axis] - itf.coord) < _PLANE_TOL else "-"
            self.interface_faces[itf.master].add(ax + m_side)
            self.interface_faces[itf.slave].add(ax + s_side)

    def block(self, tag: str) -> BlockMesh:
        return self.blocks[tag]


def locate_on_slave(block: BlockMesh, axis: int, coord: float, phys_point):
    """Locate an interface point inside the structured slave block.

    The point must lie on the plane ``x[axis] == coord`` (within 1e-10) and
    inside the block footprint.  Points sitting exactly on slave grid lines
    are assigned to the neighbouring element with the smallest id.

    Returns ``(element_id, ref_coords)`` with ref_coords in [-1, 1]^3.
    """
    pt = np.asarray(phys_point, dtype=float)
    if abs(pt[axis] - coord) > _PLANE_TOL:
        raise PointLocationError(
            f"point {pt} is not on plane axis={axis}, coord={coord:.15g}"
        )
    if abs(block.lo[axis] - coord) < _PLANE_TOL:
        side_idx, side_ref = 0, -1.0
    elif abs(block.hi[axis] - coord) < _PLANE_TOL:
        side_idx, side_ref = block.n[axis] - 1, 1.0
    else:
        raise PointLocationError(
            f"block {block.tag!r} has no face on axis={axis}, coord={coord:.15g}"
        )

    idx = np.empty(3, dtype=int)
    ref = np.empty(3)
    idx[axis], ref[axis] = side_idx, side_ref
    for a in range(3):
        if a == axis:
            continue
        s = (pt[a] - block.lo[a]) / block.edge[a]
        if s < -_SNAP_TOL or s > block.n[a] + _SNAP_TOL:
            raise PointLocationError(
                f"point {pt} outside footprint of block {block.tag!r} on axis {a}"
            )
        k = int(np.floor(s))
        frac = s - k
        if frac < _SNAP_TOL and k > 0:
            # exactly on a grid line: take the left/lower element (smaller id)
            k, frac = k - 1, 1.0
        elif frac > 1.0 - _SNAP_TOL and k < block.n[a] - 1 and abs(s - (k + 1)) < _SNAP_TOL:
            k, frac = k, 1.0
        if k >= block.n[a]:
            k, frac = block.n[a] - 1, 1.0
        if k < 0:
            k, frac = 0, 0.0
        idx[a] = k
        ref[a] = 2.0 * frac - 1.0
    eid = block.element_id(idx[0], idx[1], idx[2])
    return eid, ref


def collect_interface_faces(
    blocks: dict[str, BlockMesh],
    plan: list[tuple[str, str, str, int, float]],
) -> dict[str, Interface]:
    """Enumerate master faces on each planned interface and pair slaves.

    ``plan`` rows are ``(name, master_tag, slave_tag, axis, coord)``.  Each
    master face is split into overlap rectangles along the slave grid lines
    so that face integrands are smooth per sub-rectangle.

    Raises
    ------
    MeshConsistencyError
        If the two blocks do not meet exactly at the plane or their
        footprints differ (gap or overlap).
    """
    out: dict[str, Interface] = {}
    for name, m_tag, s_tag, axis, coord in plan:
        mblk, sblk = blocks[m_tag], blocks[s_tag]
        m_on_hi = abs(mblk.hi[axis] - coord) < _PLANE_TOL
        m_on_lo = abs(mblk.lo[axis] - coord) < _PLANE_TOL
        s_on_hi = abs(sblk.hi[axis] - coord) < _PLANE_TOL
        s_on_lo = abs(sblk.lo[axis] - coord) < _PLANE_TOL
        if not ((m_on_hi and s_on_lo) or (m_on_lo and s_on_hi)):
            raise MeshConsistencyError(
                f"interface {name!r}: blocks {m_tag!r}/{s_tag!r} do not meet at "
                f"axis {axis} = {coord:.15g} (gap or overlap)"
            )
        t1, t2 = (a for a in range(3) if a != axis)
        for a in (t1, t2):
            if (
                abs(mblk.lo[a] - sblk.lo[a]) > _PLANE_TOL
                or abs(mblk.hi[a] - sblk.hi[a]) > _PLANE_TOL
            ):
                raise MeshConsistencyError(
                    f"interface {name!r}: footprints of {m_tag!r} and {s_tag!r} differ"
                )
        normal = np.zeros(3)
        normal[axis] = 1.0 if m_on_hi else -1.0
        m_layer = mblk.n[axis] - 1 if m_on_hi else 0

        slave_lines = [
            sblk.lo[a] + sblk.edge[a] * np.arange(sblk.n[a] + 1) for a in (t1, t2)
        ]
        faces: list[MasterFace] = []
        for e2 in range(mblk.n[t2]):
            for e1 in range(mblk.n[t1]):
                midx = [0, 0, 0]
                midx[axis] = m_layer
                midx[t1], midx[t2] = e1, e2
                eid = mblk.element_id(*midx)
                u0 = mblk.lo[t1] + e1 * mblk.edge[t1]
                v0 = mblk.lo[t2] + e2 * mblk.edge[t2]
                rect = (u0, u0 + mblk.edge[t1], v0, v0 + mblk.edge[t2])
                face = MasterFace(element=eid, rect=rect)
                ubreaks = _breakpoints(rect[0], rect[1], slave_lines[0])
                vbreaks = _breakpoints(rect[2], rect[3], slave_lines[1])
                for vi in range(len(vbreaks) - 1):
                    for ui in range(len(ubreaks) - 1):
                        sub = (ubreaks[ui], ubreaks[ui + 1], vbreaks[vi], vbreaks[vi + 1])
                        center = np.zeros(3)
                        center[axis] = coord
                        center[t1] = 0.5 * (sub[0] + sub[1])
                        center[t2] = 0.5 * (sub[2] + sub[3])
                        s_eid, _ = locate_on_slave(sblk, axis, coord, center)
                        face.slaves.append(SlaveOverlap(element=s_eid, rect=sub))
                sub_area = sum(
                    (s.rect[1] - s.rect[0]) * (s.rect[3] - s.rect[2]) for s in face.slaves
                )
                if abs(sub_area - face.area) > 1e-12 * max(1.0, face.area):
                    raise MeshConsistencyError(
                        f"interface {name!r}: slave overlap does not tile master face"
                    )
                faces.append(face)
        itf = Interface(
            name=name, master=m_tag, slave=s_tag, axis=axis, coord=coord,
            normal_master=normal, faces=faces,
        )
        footprint = np.prod([mblk.hi[a] - mblk.lo[a] for a in (t1, t2)])
        if abs(itf.area - footprint) > 1e-12 * max(1.0, footprint):
            raise MeshConsistencyError(
                f"interface {name!r}: master faces do not cover the plane"
            )
        out[name] = itf
    return out


def _breakpoints(lo: float, hi: float, lines: np.ndarray) -> np.ndarray:
    tol = 1e-12 * max(1.0, abs(hi - lo))
    inside = lines[(lines > lo + tol) & (lines < hi - tol)]
    return np.concatenate([[lo], inside, [hi]])


def build_three_cubes(level: int, ratio_nonconforming: bool = True) -> CoupledMesh:
    """Stacked pi-cubes: elastic (bottom), fluid (middle), tissue (top).

    With ``ratio_nonconforming`` the outer blocks get ``2*2**level`` elements
    per edge and the central fluid block ``3*2**level``, giving the 3:2
    mesh-size ratio used for non-matching interface studies; otherwise all
    blocks use ``2*2**level``.
    """
    if level < 0:
        raise InvalidGeometryError("refinement level must be >= 0")
    n_out = 2 * 2**level
    n_mid = 3 * 2**level if ratio_nonconforming else n_out
    half = np.pi / 2
    specs = [
        BlockSpec(lo=(-half, -half, 0.0), hi=(half, half, np.pi), n=(n_out,) * 3, tag="e"),
        BlockSpec(lo=(-half, -half, np.pi), hi=(half, half, 2 * np.pi), n=(n_mid,) * 3, tag="f"),
        BlockSpec(lo=(-half, -half, 2 * np.pi), hi=(half, half, 3 * np.pi), n=(n_out,) * 3, tag="t"),
    ]
    blocks = {s.tag: build_block_mesh(s) for s in specs}
    plan = [
        ("ef", "f", "e", 2, np.pi),
        ("ft", "f", "t", 2, 2 * np.pi),
    ]
    interfaces = collect_interface_faces(blocks, plan)
    return CoupledMesh(blocks, interfaces)


def face_quadrature(mesh: CoupledMesh, interface: Interface, n1d: int) -> FaceQuadBatch:
    """Tensor Gauss-Legendre points on every master face of an interface.

    Uses ``n1d**2`` points per slave-overlap sub-rectangle, so integrands
    that are polynomial per overlap are integrated exactly up to degree
    ``2*n1d - 1`` per axis.
    """
    mblk = mesh.blocks[interface.master]
    sblk = mesh.blocks[interface.slave]
    axis = interface.axis
    t1, t2 = interface.tangent_axes
    gx, gw = gauss_legendre(n1d)
    m_side_ref = 1.0 if interface.normal_master[axis] > 0 else -1.0

    master_elem, slave_elem, face_index = [], [], []
    master_ref, slave_ref, phys, weight = [], [], [], []
    for f_idx, face in enumerate(interface.faces):
        u0m, u1m, v0m, v1m = face.rect
        for ov in face.slaves:
            a0, a1, b0, b1 = ov.rect
            ju, jv = 0.5 * (a1 - a0), 0.5 * (b1 - b0)
            uu = 0.5 * (a0 + a1) + ju * gx
            vv = 0.5 * (b0 + b1) + jv * gx
            U, V = np.meshgrid(uu, vv, indexing="ij")
            W = ju * jv * np.outer(gw, gw)
            q = n1d * n1d
            pts = np.zeros((q, 3))
            pts[:, t1], pts[:, t2] = U.ravel(), V.ravel()
            pts[:, axis] = interface.coord

            mref = np.zeros((q, 3))
            mref[:, t1] = 2.0 * (pts[:, t1] - u0m) / (u1m - u0m) - 1.0
            mref[:, t2] = 2.0 * (pts[:, t2] - v0m) / (v1m - v0m) - 1.0
            mref[:, axis] = m_side_ref

            s_origin = sblk.element_origin(ov.element)
            sref = np.zeros((q, 3))
            for a in range(3):
                sref[:, a] = 2.0 * (pts[:, a] - s_origin[a]) / sblk.edge[a] - 1.0
            np.clip(sref, -1.0, 1.0, out=sref)

            master_elem.append(np.full(q, face.element))
            slave_elem.append(np.full(q, ov.element))
            face_index.append(np.full(q, f_idx))
            master_ref.append(mref)
            slave_ref.append(sref)
            phys.append(pts)
            weight.append(W.ravel())
    return FaceQuadBatch(
        interface=interface,
        master_elem=np.concatenate(master_elem),
        master_ref=np.vstack(master_ref),
        slave_elem=np.concatenate(slave_elem),
        slave_ref=np.vstack(slave_ref),
        phys=np.vstack(phys),
        weight=np.concatenate(weight),
        face_index=np.concatenate(face_index),
    )
