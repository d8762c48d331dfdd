"""Domains, tetrahedral meshes and geometric queries.

Two domain shapes are supported: a straight cylinder of radius r_max with
-a <= z <= 4a, and a curved (toroidal-segment) cylinder obtained by bending
the straight one around a circle of radius R > r_max.  Meshes are structured:
a layered disk triangulation extruded into prisms, each prism split into
three tetrahedra with face-consistent diagonals.

All queries (axis point, distance, plane binning) are pure functions; a Mesh
is safe for concurrent read-only use once built.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# Inward offset used when nudging points off the boundary.
GEOM_EPS = 1e-10

# Marker value for wall boundary faces (the only boundary kind here).
WALL = 1


class DomainKind(Enum):
    STRAIGHT = "straight"
    CURVED = "curved"


@dataclass(frozen=True)
class DomainSpec:
    """Geometry parameters for a straight or curved cylindrical domain."""

    kind: DomainKind
    r_max: float = 1.0
    a: float = 0.125
    R: float | None = None

    def __post_init__(self):
        if self.r_max <= 0:
            raise ValueError(f"r_max must be positive, got {self.r_max}")
        if self.a <= 0:
            raise ValueError(f"a must be positive, got {self.a}")
        if self.kind is DomainKind.CURVED:
            if self.R is None:
                raise ValueError("curved domain requires a torus radius R")
            if self.R <= self.r_max:
                raise ValueError(
                    f"torus radius R={self.R} must exceed r_max={self.r_max}"
                )
        elif self.R is not None:
            raise ValueError("straight domain must not set a torus radius R")

    @property
    def delta(self) -> float:
        """Toroidal curvature r_max / R (curved domains only)."""
        if self.kind is not DomainKind.CURVED:
            raise ValueError("delta is defined only for curved domains")
        return self.r_max / self.R

    @property
    def z_min(self) -> float:
        return -self.a

    @property
    def z_max(self) -> float:
        return 4.0 * self.a


def straight_domain(r_max: float = 1.0, a: float = 0.125) -> DomainSpec:
    return DomainSpec(DomainKind.STRAIGHT, r_max=r_max, a=a)


def curved_domain(R: float, r_max: float = 1.0, a: float = 0.125) -> DomainSpec:
    return DomainSpec(DomainKind.CURVED, r_max=r_max, a=a, R=R)


@dataclass(frozen=True)
class PlaneDescriptor:
    """One cross-section plane: index l, axial coordinate z_l, and its
    embedding (a point on the plane and the unit normal)."""

    index: int
    z: float
    point: tuple
    normal: tuple


@dataclass(eq=False)
class Mesh:
    """Conforming tetrahedral mesh with boundary tagging.

    tets are stored with positive signed volume.  plane_bin is filled by
    cross_section_planes(); adjacency caches are built lazily.
    """

    nodes: np.ndarray            # (n_nodes, 3) float64
    tets: np.ndarray             # (n_tets, 4) int
    boundary_faces: np.ndarray   # (n_bfaces, 3) int
    boundary_markers: np.ndarray  # (n_bfaces,) int, all WALL
    boundary_nodes: np.ndarray   # sorted unique node ids
    h: float                     # mesh size: maximum edge length
    plane_bin: np.ndarray | None = None   # (n_nodes,) int
    planes: list = field(default_factory=list)

    _volumes: np.ndarray | None = field(default=None, repr=False)
    _centroids: np.ndarray | None = field(default=None, repr=False)
    _neighbors: np.ndarray | None = field(default=None, repr=False)
    _boundary_mask: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_tets(self) -> int:
        return self.tets.shape[0]

    def tet_volumes(self) -> np.ndarray:
        if self._volumes is None:
            self._volumes = signed_tet_volumes(self.nodes, self.tets)
        return self._volumes

    def total_volume(self) -> float:
        return float(self.tet_volumes().sum())

    def tet_centroids(self) -> np.ndarray:
        if self._centroids is None:
            self._centroids = self.nodes[self.tets].mean(axis=1)
        return self._centroids

    def boundary_mask(self) -> np.ndarray:
        """Boolean per-node mask, True on wall nodes."""
        if self._boundary_mask is None:
            mask = np.zeros(self.n_nodes, dtype=bool)
            mask[self.boundary_nodes] = True
            self._boundary_mask = mask
        return self._boundary_mask

    def neighbors(self) -> np.ndarray:
        """(n_tets, 4) tet index across the face opposite each local vertex,
        -1 on boundary faces."""
        if self._neighbors is None:
            self._neighbors = _tet_neighbors(self.tets)
        return self._neighbors

    def with_nodes(self, nodes: np.ndarray) -> "Mesh":
        """Same connectivity on new coordinates; h recomputed, caches reset."""
        m = Mesh(
            nodes=np.ascontiguousarray(nodes, dtype=float),
            tets=self.tets,
            boundary_faces=self.boundary_faces,
            boundary_markers=self.boundary_markers,
            boundary_nodes=self.boundary_nodes,
            h=max_edge_length(nodes, self.tets),
        )
        m._neighbors = self._neighbors  # connectivity unchanged
        return m


def signed_tet_volumes(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    p = nodes[tets]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    d3 = p[:, 3] - p[:, 0]
    return np.einsum("ij,ij->i", np.cross(d1, d2), d3) / 6.0


def max_edge_length(nodes: np.ndarray, tets: np.ndarray) -> float:
    pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    h = 0.0
    for i, j in pairs:
        d = nodes[tets[:, i]] - nodes[tets[:, j]]
        h = max(h, float(np.sqrt((d * d).sum(axis=1)).max()))
    return h


def disk_triangulation(n_r: int, r_max: float):
    """Structured triangulation of the disk r <= r_max with n_r rings.

    Ring j carries 6j nodes, so triangles stay near-equilateral; the outer
    boundary is the regular 6*n_r-gon inscribed in the circle.  Triangles
    are counterclockwise.
    """
    pts = [(0.0, 0.0)]
    ring_start = [0]
    for j in range(1, n_r + 1):
        ring_start.append(len(pts))
        r = r_max * j / n_r
        k = np.arange(6 * j)
        theta = 2.0 * np.pi * k / (6 * j)
        pts.extend(zip(r * np.cos(theta), r * np.sin(theta)))
    points = np.asarray(pts, dtype=float)

    tris = []
    # hub: 6 triangles around the center
    first = ring_start[1]
    for k in range(6):
        tris.append((0, first + k, first + (k + 1) % 6))
    # annuli
    for j in range(1, n_r):
        inner, outer = ring_start[j], ring_start[j + 1]
        n_in, n_out = 6 * j, 6 * (j + 1)
        for s in range(6):
            I = [inner + (s * j + t) % n_in for t in range(j + 1)]
            O = [outer + (s * (j + 1) + t) % n_out for t in range(j + 2)]
            for t in range(j):
                tris.append((O[t], O[t + 1], I[t]))
                tris.append((O[t + 1], I[t + 1], I[t]))
            tris.append((O[j], O[j + 1], I[j]))
    return points, np.asarray(tris, dtype=np.int64)


def _split_prisms(bottom: np.ndarray, layer_stride: int) -> np.ndarray:
    """Split prisms (bottom triangle ids; top = bottom + layer_stride) into
    3 tets each, choosing quad-face diagonals through the smallest global id
    on the face so adjacent prisms conform.
    """
    tri = np.asarray(bottom, dtype=np.int64)
    # rotate each triangle so its smallest id comes first
    shift = np.argmin(tri, axis=1)
    idx = (np.arange(3)[None, :] + shift[:, None]) % 3
    v = np.take_along_axis(tri, idx, axis=1)
    v0, v1, v2 = v[:, 0], v[:, 1], v[:, 2]
    v3, v4, v5 = v0 + layer_stride, v1 + layer_stride, v2 + layer_stride

    diag15 = v1 < v2  # diagonal of the far quad face through min(v1, v2)
    tets = np.empty((len(tri), 3, 4), dtype=np.int64)
    tets[diag15, 0] = np.stack([v0, v1, v2, v5], axis=1)[diag15]
    tets[diag15, 1] = np.stack([v0, v1, v5, v4], axis=1)[diag15]
    tets[diag15, 2] = np.stack([v0, v4, v5, v3], axis=1)[diag15]
    tets[~diag15, 0] = np.stack([v0, v1, v2, v4], axis=1)[~diag15]
    tets[~diag15, 1] = np.stack([v0, v4, v2, v5], axis=1)[~diag15]
    tets[~diag15, 2] = np.stack([v0, v4, v5, v3], axis=1)[~diag15]
    return tets.reshape(-1, 4)


def _orient_positive(nodes: np.ndarray, tets: np.ndarray) -> np.ndarray:
    vol = signed_tet_volumes(nodes, tets)
    flip = vol < 0
    if flip.any():
        tets = tets.copy()
        tmp = tets[flip]
        tmp[:, [2, 3]] = tmp[:, [3, 2]]
        tets[flip] = tmp
    return tets


def _face_table(tets: np.ndarray):
    """All tet faces as sorted vertex triples.

    Returns (faces (4M,3) sorted rows, tet id, local face id); local face i
    is the one opposite vertex i.
    """
    m = len(tets)
    opp = [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)]
    faces = np.empty((4 * m, 3), dtype=np.int64)
    for i, (p, q, r) in enumerate(opp):
        faces[i::4, 0] = tets[:, p]
        faces[i::4, 1] = tets[:, q]
        faces[i::4, 2] = tets[:, r]
    faces.sort(axis=1)
    owner = np.repeat(np.arange(m), 4)
    local = np.tile(np.arange(4), m)
    return faces, owner, local


def _tet_neighbors(tets: np.ndarray) -> np.ndarray:
    faces, owner, local = _face_table(tets)
    order = np.lexsort(faces.T[::-1])
    f = faces[order]
    own = owner[order]
    loc = local[order]
    nbr = np.full((len(tets), 4), -1, dtype=np.int64)
    same = (f[1:] == f[:-1]).all(axis=1)
    i = np.nonzero(same)[0]
    nbr[own[i], loc[i]] = own[i + 1]
    nbr[own[i + 1], loc[i + 1]] = own[i]
    return nbr


def _boundary_faces(tets: np.ndarray) -> np.ndarray:
    faces, owner, local = _face_table(tets)
    order = np.lexsort(faces.T[::-1])
    f = faces[order]
    count = np.ones(len(f), dtype=np.int64)
    same = (f[1:] == f[:-1]).all(axis=1)
    # faces appear once or twice; single occurrences are the boundary
    keep = np.ones(len(f), dtype=bool)
    keep[:-1] &= ~same
    keep[1:] &= ~same
    return f[keep]


def build_straight_mesh(spec: DomainSpec, n_r: int, n_z: int) -> Mesh:
    """Mesh the straight cylinder {r <= r_max, -a <= z <= 4a}.

    n_z prism layers of the n_r-ring disk triangulation, each prism split
    into 3 tets with conforming diagonals.
    """
    if spec.kind is not DomainKind.STRAIGHT:
        raise ValueError("build_straight_mesh requires a straight domain spec")
    if n_r < 2 or n_z < 2:
        raise ValueError(f"n_r and n_z must both be >= 2, got {n_r}, {n_z}")

    disk, tris = disk_triangulation(n_r, spec.r_max)
    n_disk = len(disk)
    z = np.linspace(spec.z_min, spec.z_max, n_z + 1)
    nodes = np.empty((n_disk * (n_z + 1), 3), dtype=float)
    for l in range(n_z + 1):
        nodes[l * n_disk:(l + 1) * n_disk, :2] = disk
        nodes[l * n_disk:(l + 1) * n_disk, 2] = z[l]

    prisms = np.concatenate(
        [tris + l * n_disk for l in range(n_z)], axis=0
    )
    tets = _split_prisms(prisms, n_disk)
    tets = _orient_positive(nodes, tets)

    bfaces = _boundary_faces(tets)
    bnodes = np.unique(bfaces)
    return Mesh(
        nodes=nodes,
        tets=tets,
        boundary_faces=bfaces,
        boundary_markers=np.full(len(bfaces), WALL, dtype=np.int8),
        boundary_nodes=bnodes,
        h=max_edge_length(nodes, tets),
    )


def torus_map(points: np.ndarray, R: float) -> np.ndarray:
    """Bend straight-frame coordinates around the circle of radius R:
    (x, y, z) -> (R - (R - x) cos(z/R), y, (R - x) sin(z/R))."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    theta = p[:, 2] / R
    rad = R - p[:, 0]
    out = np.stack(
        [R - rad * np.cos(theta), p[:, 1], rad * np.sin(theta)], axis=1
    )
    return out[0] if np.asarray(points).ndim == 1 else out


def inverse_torus_map(points: np.ndarray, R: float) -> np.ndarray:
    """Analytic inverse of torus_map (exact for r_max < R)."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    theta = np.arctan2(p[:, 2], R - p[:, 0])
    rad = np.hypot(R - p[:, 0], p[:, 2])
    out = np.stack([R - rad, p[:, 1], R * theta], axis=1)
    return out[0] if np.asarray(points).ndim == 1 else out


def map_to_torus(mesh: Mesh, spec: DomainSpec) -> Mesh:
    """Map a straight-domain mesh onto the curved domain.

    Connectivity is unchanged; fails if bending inverts any tet (mesh too
    coarse for the curvature).
    """
    if spec.kind is not DomainKind.CURVED:
        raise ValueError("map_to_torus requires a curved domain spec")
    mapped = mesh.with_nodes(torus_map(mesh.nodes, spec.R))
    vol = mapped.tet_volumes()
    if vol.min() <= 0.0:
        bad = int(np.argmin(vol))
        raise ValueError(
            f"torus mapping produced non-positive tet volume (tet {bad}, "
            f"volume {vol[bad]:.3e}); mesh too coarse for curvature "
            f"delta={spec.delta:.3f}"
        )
    return mapped


def geometric_axis_point(spec: DomainSpec, z: float) -> np.ndarray:
    """Point of the (time-independent) geometric axis at axial coordinate z."""
    if not (spec.z_min - GEOM_EPS <= z <= spec.z_max + GEOM_EPS):
        raise ValueError(
            f"z={z} outside axial range [{spec.z_min}, {spec.z_max}]"
        )
    if spec.kind is DomainKind.STRAIGHT:
        return np.array([0.0, 0.0, z])
    return torus_map(np.array([0.0, 0.0, z]), spec.R)


def distance_to_geometric_axis(p: np.ndarray, spec: DomainSpec):
    """Distance from point(s) to the geometric axis.

    For curved domains this is the distance to the full circle containing
    the axis image; on the small arc spanned by the domain the two notions
    coincide for interior points.
    """
    q = np.atleast_2d(np.asarray(p, dtype=float))
    if spec.kind is DomainKind.STRAIGHT:
        d = np.hypot(q[:, 0], q[:, 1])
    else:
        R = spec.R
        rho = np.hypot(q[:, 0] - R, q[:, 2])
        d = np.hypot(rho - R, q[:, 1])
    return float(d[0]) if np.asarray(p).ndim == 1 else d


def axial_coordinate(points: np.ndarray, spec: DomainSpec) -> np.ndarray:
    """Straight-frame axial coordinate of points; inverts the torus map
    via atan2 for curved domains."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if spec.kind is DomainKind.STRAIGHT:
        z = p[:, 2].copy()
    else:
        z = spec.R * np.arctan2(p[:, 2], spec.R - p[:, 0])
    return float(z[0]) if np.asarray(points).ndim == 1 else z


def cross_section_planes(
    spec: DomainSpec, n_planes: int, mesh: Mesh | None = None
) -> list:
    """Planes l = 0..n_planes at z_l = -a + l * (5a / n_planes).

    If a mesh is given, every node is binned to the nearest plane by its
    axial coordinate (ties go to the lower index) and the result is stored
    on mesh.plane_bin / mesh.planes.
    """
    if n_planes < 1:
        raise ValueError(f"n_planes must be >= 1, got {n_planes}")
    dz = 5.0 * spec.a / n_planes
    planes = []
    for l in range(n_planes + 1):
        zl = spec.z_min + l * dz
        point = geometric_axis_point(spec, min(zl, spec.z_max))
        if spec.kind is DomainKind.STRAIGHT:
            normal = (0.0, 0.0, 1.0)
        else:
            th = zl / spec.R
            normal = (np.sin(th), 0.0, np.cos(th))
        planes.append(
            PlaneDescriptor(index=l, z=zl, point=tuple(point), normal=normal)
        )
    if mesh is not None:
        z = axial_coordinate(mesh.nodes, spec)
        # nearest plane, ties to the lower index
        l = np.ceil((z - spec.z_min) / dz - 0.5).astype(np.int64)
        mesh.plane_bin = np.clip(l, 0, n_planes)
        mesh.planes = planes
    return planes
