"""Locally refined triangle meshes and linear FE solves.

Meshes are built per model from a per-block quadtree: every block is seeded
uniformly at its target refinement level, the forest is 2:1 balanced across
edges, and each quad cell is split into two triangles.  Midpoints sitting on a
coarser neighbor's edge become hanging vertices constrained to the average of
the edge endpoints; the constraints are eliminated before solving.

Supported physics: scalar diffusion and plane-strain elasticity, both with
piecewise-constant coefficients and linear elements.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    MeshMismatch,
    NonNestedSizes,
    RegionUnresolved,
    SingularSystem,
    SolverDiverged,
)
from .homogenize import CoefficientField, ModelSpec, _mesh_key
from .media import BlockPartition

SCALAR = "scalar"
ELASTIC = "elastic"


@dataclass(frozen=True)
class ProblemSpec:
    """Physics and boundary data.

    `neumann` maps boundary tag -> flux (scalar) or traction pair (elastic);
    `dirichlet` lists tags with homogeneous essential conditions.  The body
    load is constant (zero in all experiments).
    """

    physics: str  # SCALAR | ELASTIC
    dirichlet: tuple
    neumann: dict
    body_load: tuple | float = 0.0

    @property
    def ncomp(self):
        return 1 if self.physics == SCALAR else 2


@dataclass(frozen=True)
class QoISpec:
    """Local quantity of interest.

    variant "block_avg_solution": mean of the solution over `region`.
    variant "block_avg_gradient": mean of gradient component `axis` over `region`.
    variant "mollified_strain_trace": strain-trace average around `point`
    weighted by a cos^2 cutoff of inner radius `radius` (support 2*radius).
    """

    variant: str
    region: tuple | None = None  # (x0, y0, x1, y1)
    axis: int = 1
    point: tuple | None = None
    radius: float = 0.0

    def __post_init__(self):
        if self.variant not in (
            "block_avg_solution",
            "block_avg_gradient",
            "mollified_strain_trace",
        ):
            raise ValueError(f"unknown QoI variant {self.variant!r}")
        if self.variant == "mollified_strain_trace" and self.radius <= 0:
            raise ValueError("mollifier radius must be positive")


class Mesh:
    """Triangle mesh with hanging-vertex constraints and tagged boundary."""

    def __init__(
        self,
        vertices,
        triangles,
        element_block,
        element_level,
        constraints,
        boundary_segments,
        model_key=None,
        coarse_cells=None,
    ):
        self.vertices = np.asarray(vertices, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.element_block = np.asarray(element_block, dtype=np.int64)
        self.element_level = np.asarray(element_level, dtype=np.int64)
        self.constraints = np.asarray(constraints, dtype=np.int64).reshape(-1, 3)
        self.boundary_segments = boundary_segments  # tag -> (E, 2) vertex pairs
        self.model_key = model_key
        self.coarse_cells = coarse_cells
        self._geom = None
        self._dof_cache = {}

    def __len__(self):
        return len(self.triangles)

    @property
    def geometry(self):
        if self._geom is None:
            p = self.vertices[self.triangles]
            v1 = p[:, 1] - p[:, 0]
            v2 = p[:, 2] - p[:, 0]
            det = v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]
            if np.any(det <= 0):
                raise ValueError("element with non-positive area")
            grads = np.empty((len(det), 3, 2))
            grads[:, 0, 0] = p[:, 1, 1] - p[:, 2, 1]
            grads[:, 0, 1] = p[:, 2, 0] - p[:, 1, 0]
            grads[:, 1, 0] = p[:, 2, 1] - p[:, 0, 1]
            grads[:, 1, 1] = p[:, 0, 0] - p[:, 2, 0]
            grads[:, 2, 0] = p[:, 0, 1] - p[:, 1, 1]
            grads[:, 2, 1] = p[:, 1, 0] - p[:, 0, 0]
            grads /= det[:, None, None]
            self._geom = (0.5 * det, grads, p.mean(axis=1))
        return self._geom

    @property
    def areas(self):
        return self.geometry[0]

    @property
    def grads(self):
        return self.geometry[1]

    @property
    def centroids(self):
        return self.geometry[2]


@dataclass
class Field:
    """Nodal values on a mesh: (nv,) for scalar, (nv, 2) for displacement."""

    mesh: Mesh
    values: np.ndarray

    @property
    def ncomp(self):
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def gradients(self):
        """Per-element gradients: (nel, 2) scalar or (nel, 2, 2) with rows = components."""
        tri = self.mesh.triangles
        g = self.mesh.grads
        if self.ncomp == 1:
            return np.einsum("ei,eid->ed", self.values[tri], g)
        return np.einsum("eic,eid->ecd", self.values[tri], g)


# ---------------------------------------------------------------------------
# mesh generation


def refinement_level(partition: BlockPartition, h: float) -> int:
    """Level l with min(edge)/2^l = h; raises NonNestedSizes otherwise."""
    base = min(partition.edge)
    ratio = base / h
    level = int(round(np.log2(ratio)))
    if level < 0 or abs(ratio - 2**level) > 1e-9 * ratio:
        raise NonNestedSizes(f"size {h} is not a power-of-two division of {base}")
    return level


def build_mesh(
    partition: BlockPartition,
    spec: ModelSpec,
    coarse_level: int,
    fine_level: int,
) -> Mesh:
    """Mesh for one model.

    Coarse-mesh models use the quadrilateral hierarchy cell as element size;
    all other models refine each block to `coarse_level` (homogenized blocks)
    or `fine_level` (resolved blocks) with a 2:1 balanced transition.
    """
    if fine_level < coarse_level:
        raise NonNestedSizes("fine level must not be coarser than coarse level")
    if spec.variant == "coarse":
        return _coarse_grid_mesh(partition, spec.coarsen, _mesh_key(spec))
    levels = {}
    for b in partition.blocks:
        levels[b.id] = fine_level if spec.resolves_block(b.id) else coarse_level
    return _quadtree_mesh(partition, levels, _mesh_key(spec))


def _coarse_grid_mesh(partition, coarsen, key):
    if not partition.is_tensor_grid():
        raise NonNestedSizes("coarse-mesh models need a tensor-grid partition")
    nx, ny = partition.grid_shape()
    f = 1 << coarsen
    if nx % f or ny % f:
        raise NonNestedSizes(f"block grid {nx}x{ny} has no coarsening by {f}")
    cx, cy = nx // f, ny // f
    x0, y0, x1, y1 = partition.bounding_box()
    gx, gy = np.meshgrid(np.linspace(x0, x1, cx + 1), np.linspace(y0, y1, cy + 1))
    verts = np.column_stack([gx.ravel(), gy.ravel()])
    vid = lambda i, j: j * (cx + 1) + i
    tris = []
    cell_of_elem = []
    for j in range(cy):
        for i in range(cx):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v11, v01 = vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
            cell_of_elem += [(i, j), (i, j)]
    tris = np.asarray(tris)
    lat = partition.lattice_map
    ex, ey = partition.edge
    bx0 = int(round(x0 / ex))
    by0 = int(round(y0 / ey))
    cells = {}
    for e, (i, j) in enumerate(cell_of_elem):
        if (i, j) not in cells:
            ids = [
                lat[(bx0 + i * f + di, by0 + j * f + dj)]
                for dj in range(f)
                for di in range(f)
            ]
            cells[(i, j)] = (np.zeros(len(tris), dtype=bool), ids)
        cells[(i, j)][0][e] = True
    elem_block = np.empty(len(tris), dtype=np.int64)
    for e in range(len(tris)):
        p = verts[tris[e]].mean(axis=0)
        bi = min(nx - 1, int((p[0] - x0) / ex))
        bj = min(ny - 1, int((p[1] - y0) / ey))
        elem_block[e] = lat[(bx0 + bi, by0 + bj)]
    boundary = _tag_boundary(verts, _grid_boundary_edges(cx, cy, vid), partition)
    return Mesh(
        verts,
        tris,
        elem_block,
        np.full(len(tris), -coarsen, dtype=np.int64),
        np.empty((0, 3), dtype=np.int64),
        boundary,
        model_key=key,
        coarse_cells=list(cells.values()),
    )


def _grid_boundary_edges(cx, cy, vid):
    edges = []
    for i in range(cx):
        edges.append((vid(i, 0), vid(i + 1, 0)))
        edges.append((vid(i, cy), vid(i + 1, cy)))
    for j in range(cy):
        edges.append((vid(0, j), vid(0, j + 1)))
        edges.append((vid(cx, j), vid(cx, j + 1)))
    return edges


def _quadtree_mesh(partition, levels, key):
    blocks = partition.blocks
    lat = partition.lattice_map
    leaves = set()
    for b in blocks:
        lvl = levels[b.id]
        n = 1 << lvl
        for j in range(n):
            for i in range(n):
                if b.kind == "fillet" and not _fillet_cell_kept(b, lvl, i, j):
                    continue
                leaves.add((b.id, lvl, i, j))

    def ancestor(bid, lvl, i, j):
        for dl in range(1, lvl + 1):
            cand = (bid, lvl - dl, i >> dl, j >> dl)
            if cand in leaves:
                return cand
        return None

    def neighbor_cell(bid, lvl, i, j, dx, dy):
        b = blocks[bid - 1]
        n = 1 << lvl
        gi = b.lattice[0] * n + i + dx
        gj = b.lattice[1] * n + j + dy
        bx, rem_i = divmod(gi, n)
        by, rem_j = divmod(gj, n)
        nb = lat.get((bx, by))
        if nb is None:
            return None
        return (nb, lvl, rem_i, rem_j)

    def split(leaf):
        bid, lvl, i, j = leaf
        leaves.discard(leaf)
        b = blocks[bid - 1]
        out = []
        for dj in (0, 1):
            for di in (0, 1):
                child = (bid, lvl + 1, 2 * i + di, 2 * j + dj)
                if b.kind == "fillet" and not _fillet_cell_kept(b, lvl + 1, child[2], child[3]):
                    continue
                leaves.add(child)
                out.append(child)
        return out

    stack = sorted(leaves)
    while stack:
        leaf = stack.pop()
        if leaf not in leaves:
            continue
        bid, lvl, i, j = leaf
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = neighbor_cell(bid, lvl, i, j, dx, dy)
            if nb is None or nb in leaves:
                continue
            anc = ancestor(*nb)
            if anc is not None and lvl - anc[1] >= 2:
                stack.extend(split(anc))
                stack.append(leaf)
                break
    return _mesh_from_leaves(partition, sorted(leaves), key)


def _fillet_cell_kept(block, lvl, i, j):
    x0, y0, x1, y1 = block.bounds
    n = 1 << lvl
    cx = x0 + (i + 0.5) * (x1 - x0) / n
    cy = y0 + (j + 0.5) * (y1 - y0) / n
    return bool(block.fillet.contains(cx, cy))


def _mesh_from_leaves(partition, leaves, key):
    blocks = partition.blocks
    lmax = max(l[1] for l in leaves)
    unit = 1 << lmax
    ex, ey = partition.edge

    vindex = {}
    coords = []

    def vget(ix, iy):
        k = (ix, iy)
        idx = vindex.get(k)
        if idx is None:
            idx = len(coords)
            vindex[k] = idx
            coords.append((ix * ex / unit, iy * ey / unit))
        return idx

    tris = []
    elem_block = []
    elem_level = []
    cell_corners = []
    for bid, lvl, i, j in leaves:
        b = blocks[bid - 1]
        s = 1 << (lmax - lvl)
        ix0 = b.lattice[0] * unit + i * s
        iy0 = b.lattice[1] * unit + j * s
        v00 = vget(ix0, iy0)
        v10 = vget(ix0 + s, iy0)
        v11 = vget(ix0 + s, iy0 + s)
        v01 = vget(ix0, iy0 + s)
        tris.append((v00, v10, v11))
        tris.append((v00, v11, v01))
        elem_block += [bid, bid]
        elem_level += [lvl, lvl]
        cell_corners.append(((ix0, iy0, s), (v00, v10, v11, v01)))

    constraints = []
    seg_count = {}
    for (ix0, iy0, s), (v00, v10, v11, v01) in cell_corners:
        for a, bb, mid in (
            (v00, v10, (ix0 + s // 2, iy0)),
            (v10, v11, (ix0 + s, iy0 + s // 2)),
            (v01, v11, (ix0 + s // 2, iy0 + s)),
            (v00, v01, (ix0, iy0 + s // 2)),
        ):
            m = vindex.get(mid) if s >= 2 else None
            if m is not None:
                constraints.append((m, a, bb))
                for seg in ((a, m), (m, bb)):
                    kk = (min(seg), max(seg))
                    seg_count[kk] = seg_count.get(kk, 0) + 1
            else:
                kk = (min(a, bb), max(a, bb))
                seg_count[kk] = seg_count.get(kk, 0) + 1

    # the same midpoint may be recorded from both cells sharing the coarse edge
    # only when both are coarse, which the 2:1 balance rules out; keep unique
    constraints = sorted(set(constraints))
    slaves = [c[0] for c in constraints]
    assert len(slaves) == len(set(slaves)), "slave vertex in two constraints"

    boundary_edges = [k for k, cnt in seg_count.items() if cnt == 1]
    verts = np.asarray(coords)
    boundary = _tag_boundary(verts, boundary_edges, partition)
    return Mesh(
        verts,
        np.asarray(tris),
        elem_block,
        elem_level,
        np.asarray(constraints, dtype=np.int64).reshape(-1, 3),
        boundary,
        model_key=key,
    )


def _tag_boundary(verts, edges, partition):
    tags = partition.domain.boundary_tags
    scale = max(1.0, np.abs(verts).max() if len(verts) else 1.0)
    tol = 1e-9 * scale
    out = {tag: [] for tag in tags}
    untagged = []
    for a, b in edges:
        pa, pb = verts[a], verts[b]
        hit = None
        for tag, (axis, value, lo, hi) in tags.items():
            t = 1 - axis
            if (
                abs(pa[axis] - value) <= tol
                and abs(pb[axis] - value) <= tol
                and min(pa[t], pb[t]) >= lo - tol
                and max(pa[t], pb[t]) <= hi + tol
            ):
                hit = tag
                break
        if hit is None:
            untagged.append((a, b))
        else:
            out[hit].append((a, b))
    result = {tag: np.asarray(v, dtype=np.int64).reshape(-1, 2) for tag, v in out.items()}
    result[None] = np.asarray(untagged, dtype=np.int64).reshape(-1, 2)
    return result


# ---------------------------------------------------------------------------
# dofs, assembly, solve


class DofMap:
    """Reduced dof numbering with hanging and Dirichlet vertices eliminated."""

    def __init__(self, mesh: Mesh, ncomp: int, dirichlet_tags: tuple):
        nv = len(mesh.vertices)
        dir_vertices = set()
        for tag in dirichlet_tags:
            for a, b in mesh.boundary_segments.get(tag, ()):
                dir_vertices.add(int(a))
                dir_vertices.add(int(b))
        slave = {int(s): (int(m1), int(m2)) for s, m1, m2 in mesh.constraints}
        resolved = {}

        def resolve(v):
            if v not in slave:
                return {v: 1.0}
            got = resolved.get(v)
            if got is None:
                got = {}
                for m in slave[v]:
                    for k, w in resolve(m).items():
                        got[k] = got.get(k, 0.0) + 0.5 * w
                resolved[v] = got
            return got

        free = [v for v in range(nv) if v not in slave and v not in dir_vertices]
        col_of = {v: c for c, v in enumerate(free)}
        rows, cols, vals = [], [], []
        for v in range(nv):
            if v in dir_vertices:
                continue
            for m, w in resolve(v).items():
                c = col_of.get(m)
                if c is None:  # master on the Dirichlet boundary: value 0
                    continue
                rows.append(v)
                cols.append(c)
                vals.append(w)
        n_red = len(free)
        base = sp.csr_matrix((vals, (rows, cols)), shape=(nv, n_red))
        if ncomp == 1:
            self.C = base
        else:
            self.C = sp.kron(base, sp.eye(ncomp, format="csr"), format="csr")
        self.ncomp = ncomp
        self.n_full = nv * ncomp
        self.n_reduced = n_red * ncomp
        self.dirichlet_vertices = np.array(sorted(dir_vertices), dtype=np.int64)


def dof_map(mesh: Mesh, prob: ProblemSpec) -> DofMap:
    key = (prob.ncomp, tuple(prob.dirichlet))
    dm = mesh._dof_cache.get(key)
    if dm is None:
        dm = DofMap(mesh, prob.ncomp, tuple(prob.dirichlet))
        mesh._dof_cache[key] = dm
    return dm


def work_units(mesh: Mesh, prob: ProblemSpec) -> int:
    """Number of unconstrained dofs, counting vector components separately."""
    return dof_map(mesh, prob).n_reduced


def assemble_stiffness(mesh: Mesh, coeff: CoefficientField, physics: str):
    if coeff.mesh is not mesh:
        raise MeshMismatch("coefficient field lives on a different mesh")
    area = mesh.areas
    g = mesh.grads
    tri = mesh.triangles
    nel = len(tri)
    if physics == SCALAR:
        ke = np.einsum("e,eid,ejd->eij", coeff.kappa * area, g, g)
        dofs = tri
    else:
        lam, mu = coeff.lam, coeff.mu
        B = np.zeros((nel, 3, 6))
        B[:, 0, 0::2] = g[:, :, 0]
        B[:, 1, 1::2] = g[:, :, 1]
        B[:, 2, 0::2] = g[:, :, 1]
        B[:, 2, 1::2] = g[:, :, 0]
        D = np.zeros((nel, 3, 3))
        D[:, 0, 0] = D[:, 1, 1] = lam + 2.0 * mu
        D[:, 0, 1] = D[:, 1, 0] = lam
        D[:, 2, 2] = mu
        ke = np.einsum("e,eki,ekl,elj->eij", area, B, D, B)
        dofs = np.empty((nel, 6), dtype=np.int64)
        dofs[:, 0::2] = 2 * tri
        dofs[:, 1::2] = 2 * tri + 1
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    nfull = len(mesh.vertices) * (1 if physics == SCALAR else 2)
    return sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(nfull, nfull))


def neumann_load(mesh: Mesh, prob: ProblemSpec):
    nv = len(mesh.vertices)
    f = np.zeros(nv * prob.ncomp)
    for tag, value in prob.neumann.items():
        segs = mesh.boundary_segments.get(tag)
        if segs is None or len(segs) == 0:
            continue
        pa = mesh.vertices[segs[:, 0]]
        pb = mesh.vertices[segs[:, 1]]
        length = np.hypot(*(pb - pa).T)
        if prob.ncomp == 1:
            contrib = 0.5 * value * length
            np.add.at(f, segs[:, 0], contrib)
            np.add.at(f, segs[:, 1], contrib)
        else:
            tx, ty = value
            for comp, t in ((0, tx), (1, ty)):
                contrib = 0.5 * t * length
                np.add.at(f, 2 * segs[:, 0] + comp, contrib)
                np.add.at(f, 2 * segs[:, 1] + comp, contrib)
    if np.any(np.asarray(prob.body_load) != 0.0):
        area3 = np.repeat(mesh.areas / 3.0, 3)
        tri = mesh.triangles.ravel()
        if prob.ncomp == 1:
            np.add.at(f, tri, float(prob.body_load) * area3)
        else:
            fx, fy = prob.body_load
            np.add.at(f, 2 * tri, fx * area3)
            np.add.at(f, 2 * tri + 1, fy * area3)
    return f


# degree-5 rule on the reference triangle (7 points)
_TRI7_BARY = np.array(
    [
        [1 / 3, 1 / 3, 1 / 3],
        [0.797426985353087, 0.101286507323456, 0.101286507323456],
        [0.101286507323456, 0.797426985353087, 0.101286507323456],
        [0.101286507323456, 0.101286507323456, 0.797426985353087],
        [0.059715871789770, 0.470142064105115, 0.470142064105115],
        [0.470142064105115, 0.059715871789770, 0.470142064105115],
        [0.470142064105115, 0.470142064105115, 0.059715871789770],
    ]
)
_TRI7_W = np.array(
    [
        0.225,
        0.125939180544827,
        0.125939180544827,
        0.125939180544827,
        0.132394152788506,
        0.132394152788506,
        0.132394152788506,
    ]
)


def load_from_function(mesh: Mesh, fn, ncomp: int):
    """Consistent load vector for a pointwise source, by 7-point quadrature."""
    p = mesh.vertices[mesh.triangles]  # (e, 3, 2)
    pts = np.einsum("qi,eid->eqd", _TRI7_BARY, p)
    vals = np.asarray(fn(pts[..., 0], pts[..., 1]))  # (..., e, q)
    f = np.zeros(len(mesh.vertices) * ncomp)
    for comp in range(ncomp):
        v = vals if ncomp == 1 else vals[comp]
        contrib = np.einsum("eq,q,qi->ei", v, _TRI7_W, _TRI7_BARY) * mesh.areas[:, None]
        np.add.at(f, ncomp * mesh.triangles.ravel() + comp, contrib.ravel())
    return f


def _clip_axis(poly, axis, value, keep_below):
    out = []
    n = len(poly)
    for i in range(n):
        a = poly[i]
        b = poly[(i + 1) % n]
        da = (a[axis] - value) * (-1 if keep_below else 1)
        db = (b[axis] - value) * (-1 if keep_below else 1)
        if da >= 0:
            out.append(a)
        if (da > 0) != (db > 0) and da != db:
            t = da / (da - db)
            out.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
    return out


def clip_triangle_rect(tri_pts, rect):
    """Intersection polygon area and centroid (Sutherland-Hodgman clipping)."""
    x0, y0, x1, y1 = rect
    poly = [tuple(p) for p in tri_pts]
    for axis, value, below in ((0, x0, False), (0, x1, True), (1, y0, False), (1, y1, True)):
        poly = _clip_axis(poly, axis, value, below)
        if not poly:
            return 0.0, (0.0, 0.0)
    a2 = 0.0
    cx = cy = 0.0
    n = len(poly)
    for i in range(n):
        xa, ya = poly[i]
        xb, yb = poly[(i + 1) % n]
        cross = xa * yb - xb * ya
        a2 += cross
        cx += (xa + xb) * cross
        cy += (ya + yb) * cross
    if abs(a2) < 1e-300:
        return 0.0, (0.0, 0.0)
    area = 0.5 * a2
    return area, (cx / (3.0 * a2), cy / (3.0 * a2))


def qoi_load_vector(mesh: Mesh, qoi: QoISpec, ncomp: int):
    """Discrete Riesz load of the QoI; evaluate_qoi pairs it with nodal values."""
    cached = getattr(mesh, "_qoi_cache", None)
    if cached is None:
        cached = mesh._qoi_cache = {}
    key = (qoi, ncomp)
    if key in cached:
        return cached[key]
    nv = len(mesh.vertices)
    f = np.zeros(nv * ncomp)
    if qoi.variant in ("block_avg_solution", "block_avg_gradient"):
        rect = qoi.region
        rx0, ry0, rx1, ry1 = rect
        pts_all = mesh.vertices[mesh.triangles]
        cand = np.nonzero(
            (pts_all[..., 0].max(axis=1) > rx0)
            & (pts_all[..., 0].min(axis=1) < rx1)
            & (pts_all[..., 1].max(axis=1) > ry0)
            & (pts_all[..., 1].min(axis=1) < ry1)
        )[0]
        total = 0.0
        for e in cand:
            pts = pts_all[e]
            area, cen = clip_triangle_rect(pts, rect)
            if area <= 0.0:
                continue
            total += area
            tri = mesh.triangles[e]
            if qoi.variant == "block_avg_gradient":
                f[tri] += area * mesh.grads[e, :, qoi.axis]
            else:
                lam = _barycentric(pts, cen)
                f[tri] += area * lam
        if total <= 0.0:
            raise RegionUnresolved(f"region {rect} not covered by the mesh")
        f /= total
    else:
        # mollified strain trace (elastic only)
        if ncomp != 2:
            raise RegionUnresolved("mollified strain trace needs a displacement field")
        p = mesh.vertices[mesh.triangles]
        pts = np.einsum("qi,eid->eqd", _TRI7_BARY, p)
        chi = _mollifier(pts[..., 0], pts[..., 1], qoi.point, qoi.radius)
        w_e = (chi * _TRI7_W[None, :]).sum(axis=1) * mesh.areas
        total = float(w_e.sum())
        if total <= 0.0:
            raise RegionUnresolved("mollifier support not covered by the mesh")
        contrib_x = w_e[:, None] * mesh.grads[:, :, 0]
        contrib_y = w_e[:, None] * mesh.grads[:, :, 1]
        np.add.at(f, 2 * mesh.triangles.ravel(), contrib_x.ravel())
        np.add.at(f, 2 * mesh.triangles.ravel() + 1, contrib_y.ravel())
        f /= total
    cached[key] = f
    return f


def _barycentric(pts, x):
    m = np.array(
        [
            [pts[0][0], pts[1][0], pts[2][0]],
            [pts[0][1], pts[1][1], pts[2][1]],
            [1.0, 1.0, 1.0],
        ]
    )
    return np.linalg.solve(m, np.array([x[0], x[1], 1.0]))


def _mollifier(x, y, point, radius):
    r = np.hypot(x - point[0], y - point[1])
    chi = np.zeros_like(r)
    chi[r <= radius] = 1.0
    ring = (r > radius) & (r <= 2.0 * radius)
    chi[ring] = np.cos(0.5 * np.pi * (r[ring] - radius) / radius) ** 2
    return chi


def evaluate_qoi(field: Field, qoi: QoISpec) -> float:
    """Exact discrete evaluation: the QoI load paired with the nodal values."""
    f = qoi_load_vector(field.mesh, qoi, field.ncomp)
    return float(f @ field.values.ravel())


@dataclass(frozen=True)
class SolverOptions:
    method: str = "direct"  # "direct" | "cg"
    cg_tol: float = 1e-10
    residual_tol: float = 1e-8


DEFAULT_SOLVER = SolverOptions()


def _solve_reduced(K_red, f_red, opts: SolverOptions):
    norm_f = np.linalg.norm(f_red)
    if norm_f == 0.0:
        return np.zeros_like(f_red)
    if opts.method == "direct":
        lu = spla.splu(K_red.tocsc())
        return lu.solve(f_red)
    # diagonally preconditioned conjugate gradients
    n = K_red.shape[0]
    dinv = 1.0 / K_red.diagonal()
    x = np.zeros(n)
    r = f_red.copy()
    z = dinv * r
    p = z.copy()
    rz = r @ z
    cap = int(50 * np.sqrt(n)) + 10
    for _ in range(cap):
        Kp = K_red @ p
        pKp = p @ Kp
        if pKp <= 0.0:
            raise SolverDiverged("cg breakdown: non-positive curvature")
        alpha = rz / pKp
        x += alpha * p
        r -= alpha * Kp
        if np.linalg.norm(r) <= opts.cg_tol * norm_f:
            return x
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverDiverged(f"cg hit the {cap}-iteration cap")


def solve_system(mesh: Mesh, K, f, prob: ProblemSpec, opts: SolverOptions = DEFAULT_SOLVER) -> Field:
    dm = dof_map(mesh, prob)
    if len(dm.dirichlet_vertices) == 0:
        raise SingularSystem("no Dirichlet dofs; system is singular")
    K_red = (dm.C.T @ K @ dm.C).tocsr()
    f_red = dm.C.T @ f
    u_red = _solve_reduced(K_red, f_red, opts)
    norm_f = np.linalg.norm(f_red)
    if norm_f > 0:
        res = np.linalg.norm(K_red @ u_red - f_red) / norm_f
        if res > opts.residual_tol:
            raise SolverDiverged(f"relative residual {res:.2e} above tolerance")
    u_full = dm.C @ u_red
    values = u_full if prob.ncomp == 1 else u_full.reshape(-1, 2)
    return Field(mesh=mesh, values=values)


def solve_primal(
    mesh: Mesh,
    coeff: CoefficientField,
    prob: ProblemSpec,
    extra_load=None,
    opts: SolverOptions = DEFAULT_SOLVER,
) -> Field:
    """Primal FE solution with the given coefficient field."""
    K = assemble_stiffness(mesh, coeff, prob.physics)
    f = neumann_load(mesh, prob)
    if extra_load is not None:
        f = f + extra_load
    return solve_system(mesh, K, f, prob, opts)


def solve_adjoint(
    mesh: Mesh,
    coeff: CoefficientField,
    qoi: QoISpec,
    prob: ProblemSpec,
    opts: SolverOptions = DEFAULT_SOLVER,
) -> Field:
    """Adjoint (generalized Green's function) for the QoI; B is symmetric."""
    K = assemble_stiffness(mesh, coeff, prob.physics)
    f = qoi_load_vector(mesh, qoi, prob.ncomp)
    return solve_system(mesh, K, f, prob, opts)


def dump_field(field: Field, path):
    """Plain-text mesh/field dump: vertex, triangle and value sections."""
    mesh = field.mesh
    lines = [f"vertices {len(mesh.vertices)}"]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in mesh.vertices]
    lines.append(f"triangles {len(mesh.triangles)}")
    lines += ["%d %d %d" % tuple(t) for t in mesh.triangles]
    vals = field.values.reshape(len(mesh.vertices), -1)
    lines.append(f"values {vals.shape[1]}")
    lines += [" ".join(repr(float(v)) for v in row) for row in vals]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
