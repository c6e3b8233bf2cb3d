"""Computational domains, block partitions and random two-phase microstructures.

A domain is a union of axis-aligned rectangles, optionally with one quarter-disc
cutout ("fillet") rounding an inner corner.  The domain is tiled into blocks on a
uniform lattice; microstructures are sets of disc inclusions sampled blockwise
from a counter-based generator so that one 64-bit seed reproduces the geometry
bit-for-bit on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import NonTilingEdge, OutsideDomain, UnknownRegion

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *path: int) -> int:
    """Keyed 64-bit seed derivation.

    Folds the integers in `path` (e.g. stream tag, level, sample index) into
    `master` with splitmix64 steps.  Distinct paths give independent streams up
    to 64-bit collisions.
    """
    x = master & _MASK64
    for p in path:
        x = _splitmix64(x ^ (p & _MASK64))
    return _splitmix64(x)


@dataclass(frozen=True)
class Fillet:
    """Quarter-disc cutout at an inner corner.

    The fillet piece is the axis square of side `radius` spanned from the arc
    center toward (sx, sy), minus the quarter disc.  For the L-shaped domain
    used in the elasticity experiments: center (0.6, 0.4), radius 0.2,
    (sx, sy) = (-1, +1).
    """

    center: tuple[float, float]
    radius: float
    sx: int = -1
    sy: int = 1

    @property
    def square(self):
        cx, cy = self.center
        r = self.radius
        x0, x1 = sorted((cx, cx + self.sx * r))
        y0, y1 = sorted((cy, cy + self.sy * r))
        return (x0, y0, x1, y1)

    def contains(self, x, y):
        """Point membership in the fillet piece (square minus closed quarter disc)."""
        x0, y0, x1, y1 = self.square
        inside_sq = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        cx, cy = self.center
        outside_disc = (x - cx) ** 2 + (y - cy) ** 2 > self.radius**2
        return inside_sq & outside_disc

    @property
    def area(self):
        return self.radius**2 * (1.0 - np.pi / 4.0)

    def corner_cell(self, n: int) -> tuple[int, int]:
        """Subgrid cell (ix, iy) at the square corner diagonally opposite the arc."""
        ix = 0 if self.sx < 0 else n - 1
        iy = n - 1 if self.sy > 0 else 0
        return ix, iy


@dataclass(frozen=True)
class Domain:
    """Union of axis-aligned rectangles plus an optional fillet piece.

    `boundary_tags` names axis-aligned boundary segments: tag -> (axis, value,
    lo, hi) meaning the segment {x_axis = value, other coordinate in [lo, hi]}.
    Tags are referenced by ProblemSpec to attach Dirichlet/Neumann data; any
    untagged part of the boundary carries the homogeneous natural condition.
    """

    rectangles: tuple[tuple[float, float, float, float], ...]
    fillet: Fillet | None = None
    boundary_tags: dict = field(default_factory=dict)

    def __post_init__(self):
        for x0, y0, x1, y1 in self.rectangles:
            if not (x1 > x0 and y1 > y0):
                raise ValueError("rectangle extents must be positive")

    @property
    def area(self):
        a = sum((x1 - x0) * (y1 - y0) for x0, y0, x1, y1 in self.rectangles)
        if self.fillet is not None:
            a += self.fillet.area
        return a

    def contains(self, x, y):
        inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        for x0, y0, x1, y1 in self.rectangles:
            inside |= (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        if self.fillet is not None:
            inside |= self.fillet.contains(x, y)
        return inside


@dataclass(frozen=True)
class Block:
    """One partition block: a lattice rectangle or the fillet piece."""

    id: int
    kind: str  # "rect" | "fillet"
    bounds: tuple[float, float, float, float]  # fillet: its bounding square
    lattice: tuple[int, int]
    fillet: Fillet | None = None

    @property
    def area(self):
        if self.kind == "fillet":
            return self.fillet.area
        x0, y0, x1, y1 = self.bounds
        return (x1 - x0) * (y1 - y0)

    @property
    def center(self):
        x0, y0, x1, y1 = self.bounds
        return (0.5 * (x0 + x1), 0.5 * (y0 + y1))

    def contains(self, x, y):
        if self.kind == "fillet":
            return self.fillet.contains(x, y)
        x0, y0, x1, y1 = self.bounds
        return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)


@dataclass(frozen=True)
class BlockPartition:
    """Tiling of a domain into blocks on a uniform (ex, ey) lattice.

    Blocks are ordered row-major within each rectangle (y rows, x fastest),
    with the fillet block appended last; ids run 1..K_b.
    """

    domain: Domain
    blocks: tuple[Block, ...]
    edge: tuple[float, float]

    def __post_init__(self):
        total = sum(b.area for b in self.blocks)
        if abs(total - self.domain.area) > 1e-12 * self.domain.area:
            raise ValueError("blocks do not tile the domain")

    def __len__(self):
        return len(self.blocks)

    def block(self, block_id: int) -> Block:
        if not 1 <= block_id <= len(self.blocks):
            raise UnknownRegion(f"no block with id {block_id}")
        return self.blocks[block_id - 1]

    @property
    def lattice_map(self):
        return {b.lattice: b.id for b in self.blocks}

    def is_tensor_grid(self):
        """True when the blocks form a full nx-by-ny grid over one rectangle."""
        if self.domain.fillet is not None or len(self.domain.rectangles) != 1:
            return False
        return True

    def grid_shape(self):
        ex, ey = self.edge
        x0, y0, x1, y1 = self.bounding_box()
        return (int(round((x1 - x0) / ex)), int(round((y1 - y0) / ey)))

    def bounding_box(self):
        xs0 = [r[0] for r in self.domain.rectangles]
        ys0 = [r[1] for r in self.domain.rectangles]
        xs1 = [r[2] for r in self.domain.rectangles]
        ys1 = [r[3] for r in self.domain.rectangles]
        if self.domain.fillet is not None:
            sq = self.domain.fillet.square
            xs0.append(sq[0]); ys0.append(sq[1]); xs1.append(sq[2]); ys1.append(sq[3])
        return (min(xs0), min(ys0), max(xs1), max(ys1))


def partition_blocks(domain: Domain, edge) -> BlockPartition:
    """Tile `domain` into blocks of size `edge` (scalar or (ex, ey) pair).

    The edge must divide every rectangle extent to 1e-9 relative accuracy;
    otherwise NonTilingEdge is raised.  The fillet piece, when present, must
    occupy exactly one lattice cell.
    """
    if np.isscalar(edge):
        ex = ey = float(edge)
    else:
        ex, ey = (float(edge[0]), float(edge[1]))

    def _divisions(length, e):
        n = length / e
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise NonTilingEdge(f"edge {e} does not divide extent {length}")
        return int(round(n))

    blocks = []
    next_id = 1
    for x0, y0, x1, y1 in domain.rectangles:
        nx = _divisions(x1 - x0, ex)
        ny = _divisions(y1 - y0, ey)
        bx0 = int(round(x0 / ex))
        by0 = int(round(y0 / ey))
        for j in range(ny):
            for i in range(nx):
                blocks.append(
                    Block(
                        id=next_id,
                        kind="rect",
                        bounds=(x0 + i * ex, y0 + j * ey, x0 + (i + 1) * ex, y0 + (j + 1) * ey),
                        lattice=(bx0 + i, by0 + j),
                    )
                )
                next_id += 1
    if domain.fillet is not None:
        sq = domain.fillet.square
        if abs((sq[2] - sq[0]) - ex) > 1e-9 * ex or abs((sq[3] - sq[1]) - ey) > 1e-9 * ey:
            raise NonTilingEdge("fillet square does not match the block edge")
        blocks.append(
            Block(
                id=next_id,
                kind="fillet",
                bounds=sq,
                lattice=(int(round(sq[0] / ex)), int(round(sq[1] / ey))),
                fillet=domain.fillet,
            )
        )
    return BlockPartition(domain=domain, blocks=tuple(blocks), edge=(ex, ey))


@dataclass(frozen=True)
class InclusionGenParams:
    """Parameters of the per-block inclusion generator.

    variant "bernoulli": each block holds one inclusion with probability p,
    centered at the block center.  variant "subgrid": each block carries an
    n-by-n subgrid of candidate positions; the inclusion count is
    discrete-uniform on [n_min, n_max] and positions are the first entries of
    a seeded permutation of the n^2 cells.  In both variants the center is
    jittered by U[-h/8, h/8] per coordinate and the radius is
    nominal_radius + U[-h/16, h/16].
    """

    variant: str  # "bernoulli" | "subgrid"
    h: float
    nominal_radius: float
    p: float = 0.5
    n: int = 4
    n_min: int = 0
    n_max: int | None = None

    def __post_init__(self):
        if self.variant not in ("bernoulli", "subgrid"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "bernoulli" and not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.variant == "subgrid":
            n_max = self.n**2 if self.n_max is None else self.n_max
            if not 0 <= self.n_min <= n_max <= self.n**2:
                raise ValueError("need 0 <= n_min <= n_max <= n^2")
        if self.nominal_radius - self.radius_jitter <= 0.0:
            raise ValueError("jittered radius can vanish")

    @property
    def center_jitter(self):
        return self.h / 8.0

    @property
    def radius_jitter(self):
        return self.h / 16.0

    @property
    def count_max(self):
        return self.n**2 if self.n_max is None else self.n_max


@dataclass(frozen=True)
class Microstructure:
    """One sampled realization: disc inclusions over a block partition."""

    partition: BlockPartition
    seed: int
    centers: np.ndarray  # (n, 2)
    radii: np.ndarray  # (n,)
    block_ids: np.ndarray  # (n,) parent block of each inclusion

    def __len__(self):
        return len(self.radii)

    def in_inclusion(self, x, y):
        """Union-of-closed-discs membership for broadcastable coordinates."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        hit = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        for (cx, cy), r in zip(self.centers, self.radii):
            hit |= (x - cx) ** 2 + (y - cy) ** 2 <= r * r
        return hit

    def to_text(self):
        """Line-oriented debug dump: one `id,cx,cy,r` row per inclusion."""
        lines = [
            f"{int(b)},{float(cx)!r},{float(cy)!r},{float(r)!r}"
            for b, (cx, cy), r in zip(self.block_ids, self.centers, self.radii)
        ]
        return "\n".join(lines) + ("\n" if lines else "")


def _block_rng(seed: int):
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))


def sample_microstructure(
    partition: BlockPartition, params: InclusionGenParams, seed: int
) -> Microstructure:
    """Draw one microstructure from a 64-bit seed.

    The random stream is consumed in a fixed order -- blocks by id, within a
    block a fixed-size record (presence/count and permutation keys first, then
    per-candidate x jitter, y jitter, radius jitter) -- so the output is a pure
    function of (partition, params, seed) on every platform.  Unused jitter
    draws are discarded to keep the record size constant.
    """
    rng = _block_rng(seed)
    nb = len(partition.blocks)
    centers = []
    radii = []
    block_ids = []
    jc = params.center_jitter
    jr = params.radius_jitter

    if params.variant == "bernoulli":
        u = rng.random((nb, 4))
        for b, row in zip(partition.blocks, u):
            if row[0] >= params.p:
                continue
            cx0, cy0 = b.center
            cx = cx0 + (2.0 * row[1] - 1.0) * jc
            cy = cy0 + (2.0 * row[2] - 1.0) * jc
            r = params.nominal_radius + (2.0 * row[3] - 1.0) * jr
            if b.kind == "fillet" and not _disc_in_fillet(b.fillet, cx, cy, r):
                continue
            centers.append((cx, cy))
            radii.append(r)
            block_ids.append(b.id)
    else:
        n = params.n
        ncells = n * n
        span = params.count_max - params.n_min + 1
        # record: count key | n^2 permutation keys | n^2 * (x, y, r) jitters
        u = rng.random((nb, 1 + ncells + 3 * ncells))
        for b, row in zip(partition.blocks, u):
            count = params.n_min + min(int(row[0] * span), span - 1)
            order = np.argsort(row[1 : 1 + ncells], kind="stable")
            x0, y0, x1, y1 = b.bounds
            dx = (x1 - x0) / n
            dy = (y1 - y0) / n
            corner = b.fillet.corner_cell(n) if b.kind == "fillet" else None
            for cell in order[:count]:
                ix, iy = int(cell) % n, int(cell) // n
                if corner is not None and (ix, iy) != corner:
                    continue
                jit = row[1 + ncells + 3 * cell : 1 + ncells + 3 * cell + 3]
                cx = x0 + (ix + 0.5) * dx + (2.0 * jit[0] - 1.0) * jc
                cy = y0 + (iy + 0.5) * dy + (2.0 * jit[1] - 1.0) * jc
                r = params.nominal_radius + (2.0 * jit[2] - 1.0) * jr
                if corner is not None and not _disc_in_fillet(b.fillet, cx, cy, r):
                    continue
                centers.append((cx, cy))
                radii.append(r)
                block_ids.append(b.id)

    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    radii = np.asarray(radii, dtype=float)
    return Microstructure(
        partition=partition,
        seed=seed & _MASK64,
        centers=centers,
        radii=radii,
        block_ids=np.asarray(block_ids, dtype=np.int64),
    )


def _disc_in_fillet(fillet: Fillet, cx, cy, r):
    x0, y0, x1, y1 = fillet.square
    if cx - r < x0 or cx + r > x1 or cy - r < y0 or cy + r > y1:
        return False
    fx, fy = fillet.center
    return np.hypot(cx - fx, cy - fy) >= fillet.radius + r


MATRIX = "matrix"
INCLUSION = "inclusion"


def phase_at(micro: Microstructure, x: float, y: float) -> str:
    """Phase at a point: INCLUSION on the closed discs, MATRIX elsewhere."""
    if not bool(micro.partition.domain.contains(x, y)):
        raise OutsideDomain(f"point ({x}, {y}) is outside the domain")
    return INCLUSION if bool(micro.in_inclusion(x, y)) else MATRIX


@lru_cache(maxsize=32)
def _unit_grid(q: int):
    t = (np.arange(q) + 0.5) / q
    gx, gy = np.meshgrid(t, t, indexing="ij")
    return gx.ravel(), gy.ravel()


def block_inclusion_fraction(micro: Microstructure, block: Block, q: int = 64) -> float:
    """Inclusion volume fraction of one block by midpoint quadrature on a q-by-q subgrid."""
    x0, y0, x1, y1 = block.bounds
    gx, gy = _unit_grid(q)
    px = x0 + gx * (x1 - x0)
    py = y0 + gy * (y1 - y0)
    if block.kind == "fillet":
        keep = block.fillet.contains(px, py)
        px, py = px[keep], py[keep]
    if len(px) == 0:
        return 0.0
    # only discs overlapping the block bounding box can contribute
    sel = (
        (micro.centers[:, 0] + micro.radii >= x0)
        & (micro.centers[:, 0] - micro.radii <= x1)
        & (micro.centers[:, 1] + micro.radii >= y0)
        & (micro.centers[:, 1] - micro.radii <= y1)
    )
    if not sel.any():
        return 0.0
    cen = micro.centers[sel]
    rad = micro.radii[sel]
    d2 = (px[:, None] - cen[None, :, 0]) ** 2 + (py[:, None] - cen[None, :, 1]) ** 2
    hit = (d2 <= rad[None, :] ** 2).any(axis=1)
    return float(hit.sum()) / float(len(px))


def block_fractions(micro: Microstructure, q: int = 64) -> np.ndarray:
    """Inclusion fraction for every block, indexed by block id - 1."""
    return np.array(
        [block_inclusion_fraction(micro, b, q) for b in micro.partition.blocks]
    )


def volume_fractions(micro: Microstructure, region=None, q: int = 64):
    """(phi_matrix, phi_inclusion) for a block id or the whole domain (region=None).

    phi_matrix is defined as 1 - phi_inclusion so the pair always sums to one.
    """
    if region is None:
        fracs = block_fractions(micro, q)
        areas = np.array([b.area for b in micro.partition.blocks])
        phi_i = float(np.dot(fracs, areas) / areas.sum())
    else:
        block = micro.partition.block(int(region))
        phi_i = block_inclusion_fraction(micro, block, q)
    return (1.0 - phi_i, phi_i)
