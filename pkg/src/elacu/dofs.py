"""Degree-of-freedom maps, Dirichlet sets, and nodal interpolation.

Each block carries a conforming nodal Q_p space on the images of the GLL
points; degrees of freedom are shared across element faces *within* a block
(structured numbering makes the sharing exact) and never across interfaces.
Vector fields store components node-major: dof = node*ncomp + comp.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import BlockMesh, CoupledMesh, FACE_NAMES
from .quadrature import gll_rule

COINCIDENCE_TOL = 1e-10


class BlockDofs:
    """Nodal Q_p space on one structured block."""

    def __init__(self, block: BlockMesh, p: int, ncomp: int = 1):
        self.block = block
        self.tag = block.tag
        self.p = p
        self.ncomp = ncomp
        rule = gll_rule(p)
        self.rule = rule
        n = block.n
        self.nodes_per_axis = n * p + 1
        self.edge = block.edge
        self.det_j = float(np.prod(block.edge / 2.0))

        # 1-D node coordinates and accumulated 1-D quadrature weights
        self.coords1d: list[np.ndarray] = []
        self.weights1d: list[np.ndarray] = []
        for a in range(3):
            xs = np.empty(self.nodes_per_axis[a])
            ws = np.zeros(self.nodes_per_axis[a])
            for e in range(n[a]):
                sl = slice(e * p, e * p + p + 1)
                xs[sl] = block.lo[a] + block.edge[a] * (e + 0.5 * (rule.nodes + 1.0))
                ws[sl] += rule.weights * (block.edge[a] / 2.0)
            self.coords1d.append(xs)
            self.weights1d.append(ws)

        nxn, nyn, nzn = self.nodes_per_axis
        gz, gy, gx = np.meshgrid(
            self.coords1d[2], self.coords1d[1], self.coords1d[0], indexing="ij"
        )
        self.nodes = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
        self.n_nodes = int(nxn * nyn * nzn)
        self.lumped = (
            self.weights1d[2][:, None, None]
            * self.weights1d[1][None, :, None]
            * self.weights1d[0][None, None, :]
        ).ravel()

        # element -> global node map, local ordering (lz, ly, lx) C-flat
        eids = np.arange(block.n_elements)
        ex = eids % n[0]
        ey = (eids // n[0]) % n[1]
        ez = eids // (n[0] * n[1])
        loc = np.arange(p + 1)
        gx_idx = ex[:, None] * p + loc[None, :]  # (nel, p+1)
        gy_idx = ey[:, None] * p + loc[None, :]
        gz_idx = ez[:, None] * p + loc[None, :]
        self.elem_nodes = (
            (gz_idx[:, :, None, None] * nyn + gy_idx[:, None, :, None]) * nxn
            + gx_idx[:, None, None, :]
        ).reshape(block.n_elements, -1)

    @property
    def n_dofs(self) -> int:
        return self.n_nodes * self.ncomp

    def node_multi_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        nxn, nyn, _ = self.nodes_per_axis
        ids = np.arange(self.n_nodes)
        return ids % nxn, (ids // nxn) % nyn, ids // (nxn * nyn)

    def face_node_mask(self, face: str) -> np.ndarray:
        """Boolean mask over block nodes lying on one of the 6 box faces."""
        ix, iy, iz = self.node_multi_index()
        axis = "xyz".index(face[0])
        idx = (ix, iy, iz)[axis]
        last = self.nodes_per_axis[axis] - 1
        return idx == (last if face[1] == "+" else 0)


class FieldSpace:
    """Concatenation of per-block spaces for one physical field."""

    def __init__(self, blocks: list[BlockDofs]):
        self.blocks = blocks
        self.ncomp = blocks[0].ncomp
        if any(b.ncomp != self.ncomp for b in blocks):
            raise ValueError("all blocks of a field must share the component count")
        self.offsets: dict[str, int] = {}
        off = 0
        for b in blocks:
            self.offsets[b.tag] = off
            off += b.n_dofs
        self.n_dofs = off
        self.tags = [b.tag for b in blocks]

    def block(self, tag: str) -> BlockDofs:
        for b in self.blocks:
            if b.tag == tag:
                return b
        raise KeyError(tag)

    def dof_slice(self, tag: str) -> slice:
        b = self.block(tag)
        off = self.offsets[tag]
        return slice(off, off + b.n_dofs)

    def block_values(self, vec: np.ndarray, tag: str) -> np.ndarray:
        """View of a global vector as (n_nodes, ncomp) for one block."""
        b = self.block(tag)
        return vec[self.dof_slice(tag)].reshape(b.n_nodes, b.ncomp)

    def per_block_constant(self, values: dict[str, float]) -> np.ndarray:
        """Global dof vector holding one constant per block."""
        out = np.empty(self.n_dofs)
        for b in self.blocks:
            out[self.dof_slice(b.tag)] = values[b.tag]
        return out


def build_dof_map(block: BlockMesh, p: int, ncomp: int = 1) -> BlockDofs:
    """Conforming nodal numbering of one block: (n*p+1)^3 * ncomp dofs."""
    return BlockDofs(block, p, ncomp)


def interpolate(space: FieldSpace, analytic_field, t: float = 0.0) -> np.ndarray:
    """Nodal interpolation of an analytic field onto the space.

    ``analytic_field(points, t, tag)`` must return values of shape
    ``(N,)`` (scalar spaces) or ``(N, ncomp)``.
    """
    out = np.empty(space.n_dofs)
    for b in space.blocks:
        vals = np.asarray(analytic_field(b.nodes, t, b.tag), dtype=float)
        if b.ncomp == 1:
            vals = vals.reshape(b.n_nodes)
            out[space.dof_slice(b.tag)] = vals
        else:
            out[space.dof_slice(b.tag)] = vals.reshape(b.n_nodes * b.ncomp)
    return out


@dataclass
class DirichletSet:
    """Constrained dofs of one field space with evaluation metadata."""

    space: FieldSpace
    dofs: np.ndarray          # sorted global dof ids
    free: np.ndarray          # complement
    markers: list[str]        # face marker per constrained dof
    node_coords: np.ndarray   # (K, 3) coordinates of constrained nodes
    node_block: list[str]     # block tag per constrained dof
    comp: np.ndarray          # component index per constrained dof

    @property
    def n_constrained(self) -> int:
        return self.dofs.size


def dirichlet_dofs(
    space: FieldSpace,
    mesh: CoupledMesh,
    absorbing: dict[str, set[str]] | None = None,
) -> DirichletSet:
    """All boundary dofs except those on interface planes or absorbing faces.

    ``absorbing`` maps block tags to sets of face names (e.g. {"t": {"z+"}}).
    A node lying on both a Dirichlet face and an interface/absorbing face is
    left unconstrained.
    """
    absorbing = absorbing or {}
    dof_ids: list[int] = []
    markers: list[str] = []
    coords: list[np.ndarray] = []
    node_block: list[str] = []
    comps: list[int] = []
    for b in space.blocks:
        excluded = set(mesh.interface_faces.get(b.tag, set()))
        excluded |= set(absorbing.get(b.tag, set()))
        dirichlet_mask = np.zeros(b.n_nodes, dtype=bool)
        claim = np.full(b.n_nodes, "", dtype=object)
        for face in FACE_NAMES:
            if face in excluded:
                continue
            m = b.face_node_mask(face)
            new = m & ~dirichlet_mask
            claim[new] = face
            dirichlet_mask |= m
        for face in excluded:
            dirichlet_mask &= ~b.face_node_mask(face)
        nodes = np.flatnonzero(dirichlet_mask)
        off = space.offsets[b.tag]
        for node in nodes:
            for c in range(b.ncomp):
                dof_ids.append(off + node * b.ncomp + c)
                markers.append(str(claim[node]))
                coords.append(b.nodes[node])
                node_block.append(b.tag)
                comps.append(c)
    dofs = np.asarray(dof_ids, dtype=np.int64)
    order = np.argsort(dofs)
    dofs = dofs[order]
    markers = [markers[i] for i in order]
    node_block = [node_block[i] for i in order]
    coords_arr = (
        np.asarray(coords)[order] if coords else np.zeros((0, 3))
    )
    comps_arr = np.asarray(comps, dtype=np.int64)[order] if comps else np.zeros(0, dtype=np.int64)
    free = np.setdiff1d(np.arange(space.n_dofs), dofs, assume_unique=False)
    return DirichletSet(
        space=space, dofs=dofs, free=free, markers=markers,
        node_coords=coords_arr, node_block=node_block, comp=comps_arr,
    )
