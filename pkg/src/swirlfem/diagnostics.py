"""Flow observables: velocity extrema, central curve from pressure minima,
regional energy/angular-momentum budgets, Q-criterion and connected vortex
structures.

Everything here is a pure function of (mesh, state, curve) and can run
concurrently with the next solver step.  Ties (argmin/argmax/nearest) always
resolve to the lowest index or smallest parameter so output is deterministic.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _cc

from . import fem
from .geometry import DomainSpec, Mesh, distance_to_geometric_axis
from .solver import FieldState

REGION_NAMES = ("inner", "middle", "outer", "none")
DEFAULT_REGION_THRESHOLDS = (0.15, 0.4, 0.7)
DEFAULT_Q_THRESHOLDS = (50.0, 250.0, 750.0)

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# central curve


@dataclass
class CentralCurve:
    """Cubic space curve C(xi), one cubic per coordinate (12 coefficients)."""

    coeffs: np.ndarray          # (3, 4), ascending powers
    xi_range: tuple             # (xi_min, xi_max)
    residual: float = 0.0       # J = 1/2 sum |C(xi_l) - P_l|^2 of the fit

    def evaluate(self, xi):
        s = np.asarray(xi, dtype=float)
        c = self.coeffs
        out = np.empty(s.shape + (3,))
        for d in range(3):
            out[..., d] = ((c[d, 3] * s + c[d, 2]) * s + c[d, 1]) * s + c[d, 0]
        return out

    @classmethod
    def straight_axis(cls, xi_range) -> "CentralCurve":
        coeffs = np.zeros((3, 4))
        coeffs[2, 1] = 1.0  # C(xi) = (0, 0, xi)
        return cls(coeffs=coeffs, xi_range=tuple(xi_range))


def fit_central_curve(xi, points, xi_range=None) -> CentralCurve:
    """Least-squares cubic through the per-plane minimum-pressure points.

    Three independent 1-D problems solved by normal equations on the
    parameter mapped to [-1, 1]; coefficients are mapped back to the raw
    parameter afterwards.
    """
    xi = np.asarray(xi, dtype=float)
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if np.unique(xi).size < 4:
        raise ValueError(
            f"cubic fit needs at least 4 distinct parameter values, "
            f"got {np.unique(xi).size}"
        )
    lo, hi = float(xi.min()), float(xi.max())
    alpha = 2.0 / (hi - lo)
    beta = -(hi + lo) / (hi - lo)
    s = alpha * xi + beta

    A = np.vander(s, 4, increasing=True)
    ata = A.T @ A
    coeffs = np.empty((3, 4))
    shift = np.polynomial.Polynomial([beta, alpha])
    for d in range(3):
        c_scaled = np.linalg.solve(ata, A.T @ pts[:, d])
        composed = np.polynomial.Polynomial(c_scaled)(shift)
        co = np.zeros(4)
        co[:len(composed.coef)] = composed.coef
        coeffs[d] = co

    rng = tuple(xi_range) if xi_range is not None else (lo, hi)
    curve = CentralCurve(coeffs=coeffs, xi_range=rng)
    mis = curve.evaluate(xi) - pts
    curve.residual = 0.5 * float((mis * mis).sum())
    return curve


def nearest_points_on_curve(curve: CentralCurve, points: np.ndarray,
                            n_samples: int = 257, xi_tol: float = 1e-10):
    """Closest curve point for each query: dense parameter sampling followed
    by golden-section refinement; ties go to the smaller parameter.

    Returns (curve points (Q, 3), parameters (Q,)).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = curve.xi_range
    xi_s = np.linspace(lo, hi, n_samples)
    c_s = curve.evaluate(xi_s)

    best = np.empty(len(pts), dtype=np.int64)
    chunk = 16384
    for start in range(0, len(pts), chunk):
        blk = pts[start:start + chunk]
        d2 = ((blk[:, None, :] - c_s[None, :, :]) ** 2).sum(axis=2)
        best[start:start + chunk] = np.argmin(d2, axis=1)

    a = xi_s[np.maximum(best - 1, 0)]
    b = xi_s[np.minimum(best + 1, n_samples - 1)]

    def f(x):
        d = curve.evaluate(x) - pts
        return (d * d).sum(axis=1)

    span = max(hi - lo, 1.0)
    it = 0
    while (b - a).max(initial=0.0) > xi_tol * span and it < 200:
        x1 = b - _INVPHI * (b - a)
        x2 = a + _INVPHI * (b - a)
        left = f(x1) <= f(x2)  # prefer the smaller parameter on ties
        b = np.where(left, x2, b)
        a = np.where(left, a, x1)
        it += 1
    xi_best = np.where(f(a) <= f(b), a, b)
    return curve.evaluate(xi_best), xi_best


def nearest_point_on_curve(curve: CentralCurve, x) -> np.ndarray:
    pts, _ = nearest_points_on_curve(curve, np.asarray(x, float)[None])
    return pts[0]


@dataclass
class PlaneMinimum:
    plane: int
    xi: float
    node: int
    point: np.ndarray
    pressure: float


def min_pressure_per_plane(state: FieldState, mesh: Mesh):
    """Minimum-pressure node of every nonempty plane bin.

    Returns (minima, skipped_planes); ties resolve to the lowest node id.
    """
    if mesh.plane_bin is None:
        raise ValueError("mesh has no plane bins; call cross_section_planes")
    minima, skipped = [], []
    p = state.pressure
    bins = mesh.plane_bin
    for desc in mesh.planes:
        ids = np.nonzero(bins == desc.index)[0]
        if len(ids) == 0:
            skipped.append(desc.index)
            continue
        k = ids[np.argmin(p[ids])]
        minima.append(PlaneMinimum(plane=desc.index, xi=desc.z, node=int(k),
                                   point=mesh.nodes[k].copy(),
                                   pressure=float(p[k])))
    return minima, skipped


def fit_curve_from_state(state: FieldState, mesh: Mesh, spec: DomainSpec):
    """Pressure minima -> cubic central curve, parameterized over the full
    plane range; also reports how many plane bins were empty."""
    minima, skipped = min_pressure_per_plane(state, mesh)
    xi = np.array([m.xi for m in minima])
    pts = np.array([m.point for m in minima])
    curve = fit_central_curve(xi, pts, xi_range=(spec.z_min, spec.z_max))
    return curve, len(skipped)


def central_curve_speed(samples, window) -> float:
    """Average drift speed of the mid-height curve point over a time window.

    Accumulates the xy-plane displacement magnitude of C(xi_mid) between
    consecutive samples and divides by the window length.
    """
    t0, t1 = window
    sel = [(t, c) for t, c in samples if t0 - 1e-9 <= t <= t1 + 1e-9]
    if len(sel) < 2:
        raise ValueError(f"need at least 2 curve samples in window {window}")
    lo, hi = sel[0][1].xi_range
    xi_mid = 0.5 * (lo + hi)
    ref = np.array([c.evaluate(xi_mid) for _, c in sel])
    steps = np.diff(ref[:, :2], axis=0)
    path = float(np.hypot(steps[:, 0], steps[:, 1]).sum())
    return path / (t1 - t0)


# ---------------------------------------------------------------------------
# regions, energy, angular momentum


@dataclass
class RegionDecomposition:
    """Per-element shells around the central curve by radial distance."""

    thresholds: tuple            # (inner, middle, outer) cutoffs
    labels: np.ndarray           # (n_tets,) index into REGION_NAMES
    distance: np.ndarray         # (n_tets,) |r_e|

    def mask(self, name: str) -> np.ndarray:
        return self.labels == REGION_NAMES.index(name)


def region_decomposition(mesh: Mesh, curve: CentralCurve,
                         thresholds=DEFAULT_REGION_THRESHOLDS) -> RegionDecomposition:
    c_pts, _ = nearest_points_on_curve(curve, mesh.tet_centroids())
    rel = mesh.tet_centroids() - c_pts
    dist = np.sqrt((rel * rel).sum(axis=1))
    t1, t2, t3 = thresholds
    labels = np.full(mesh.n_tets, 3, dtype=np.int8)
    labels[dist <= t3] = 2
    labels[dist <= t2] = 1
    labels[dist <= t1] = 0
    return RegionDecomposition(thresholds=tuple(thresholds),
                               labels=labels, distance=dist)


def element_velocity(state: FieldState, mesh: Mesh) -> np.ndarray:
    """Arithmetic mean of the 4 nodal velocities (midpoint quadrature)."""
    return state.velocity[mesh.tets].mean(axis=1)


def kinetic_energy(state: FieldState, mesh: Mesh,
                   regions: RegionDecomposition | None = None):
    """E = 1/2 sum |v_e|^2 V_e; optionally split by region label."""
    v_e = element_velocity(state, mesh)
    vol = mesh.tet_volumes()
    per_elem = 0.5 * (v_e * v_e).sum(axis=1) * vol
    total = float(per_elem.sum())
    if regions is None:
        return total
    split = {name: float(per_elem[regions.labels == i].sum())
             for i, name in enumerate(REGION_NAMES)}
    return total, split


def angular_momentum(state: FieldState, mesh: Mesh, curve: CentralCurve,
                     regions: RegionDecomposition | None = None):
    """L = sum (r_e x v_e) V_e with r_e measured from the nearest point on
    the central curve; per-region vectors optionally returned."""
    v_e = element_velocity(state, mesh)
    c_pts, _ = nearest_points_on_curve(curve, mesh.tet_centroids())
    r_e = mesh.tet_centroids() - c_pts
    contrib = np.cross(r_e, v_e) * mesh.tet_volumes()[:, None]
    total = contrib.sum(axis=0)
    if regions is None:
        return total
    split = {name: contrib[regions.labels == i].sum(axis=0)
             for i, name in enumerate(REGION_NAMES)}
    return total, split


def max_velocity(state: FieldState, mesh: Mesh, spec: DomainSpec):
    """(max |v|, argmax node position, distance to the geometric axis)."""
    speed = np.linalg.norm(state.velocity, axis=1)
    i = int(np.argmax(speed))  # first hit = lowest node id on ties
    loc = mesh.nodes[i].copy()
    return float(speed[i]), loc, float(distance_to_geometric_axis(loc, spec))


# ---------------------------------------------------------------------------
# Q-criterion and connected structures


def q_criterion(state: FieldState, mesh: Mesh):
    """Q = 1/2 (|W|^2 - |S|^2) from the element-constant velocity gradient.

    Returns (element Q, nodal Q); the nodal field is the volume-weighted
    average over incident elements and exists for visualization only.
    """
    g = fem.gradient_per_element(mesh, state.velocity)
    w = 0.5 * (g - np.transpose(g, (0, 2, 1)))
    s = 0.5 * (g + np.transpose(g, (0, 2, 1)))
    q_elem = 0.5 * ((w * w).sum(axis=(1, 2)) - (s * s).sum(axis=(1, 2)))

    vol = mesh.tet_volumes()
    wgt = np.repeat(vol, 4)
    num = np.bincount(mesh.tets.ravel(), weights=np.repeat(q_elem * vol, 4),
                      minlength=mesh.n_nodes)
    den = np.bincount(mesh.tets.ravel(), weights=wgt, minlength=mesh.n_nodes)
    q_node = num / np.maximum(den, 1e-300)
    return q_elem, q_node


@dataclass
class StructureComponent:
    elements: np.ndarray
    volume: float
    max_q: float
    centroid: np.ndarray


@dataclass
class VortexStructureSet:
    threshold: float
    components: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.components)


def connected_vortex_structures(mesh: Mesh, q_elem: np.ndarray,
                                threshold: float) -> VortexStructureSet:
    """Face-connected components of {elements with Q >= threshold}, sorted by
    descending volume (ties by smallest member id)."""
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    sel = np.nonzero(q_elem >= threshold)[0]
    out = VortexStructureSet(threshold=float(threshold))
    if len(sel) == 0:
        return out

    compact = np.full(mesh.n_tets, -1, dtype=np.int64)
    compact[sel] = np.arange(len(sel))
    nbr = mesh.neighbors()[sel]
    src, dst = [], []
    for f in range(4):
        n = nbr[:, f]
        ok = (n >= 0) & (compact[np.maximum(n, 0)] >= 0)
        src.append(np.arange(len(sel))[ok])
        dst.append(compact[n[ok]])
    rows = np.concatenate(src)
    cols = np.concatenate(dst)
    graph = sp.coo_matrix((np.ones(len(rows)), (rows, cols)),
                          shape=(len(sel), len(sel)))
    n_comp, labels = _cc(graph, directed=False)

    vol = mesh.tet_volumes()
    cen = mesh.tet_centroids()
    comps = []
    for c in range(n_comp):
        elems = sel[labels == c]
        v = vol[elems]
        comps.append(StructureComponent(
            elements=elems,
            volume=float(v.sum()),
            max_q=float(q_elem[elems].max()),
            centroid=(cen[elems] * v[:, None]).sum(axis=0) / v.sum(),
        ))
    comps.sort(key=lambda s: (-s.volume, int(s.elements.min())))
    out.components = comps
    return out


def delta_series(values):
    """Per-step absolute changes |x_k - x_{k-1}| (vector norm for vectors)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        return np.abs(np.diff(arr))
    d = np.diff(arr, axis=0)
    return np.linalg.norm(d, axis=1)


# ---------------------------------------------------------------------------
# one full diagnostics sample


@dataclass
class DiagnosticsRecord:
    """Every scalar/vector observable of one time sample."""

    t: float
    v_max: float
    d_v_max: float
    e_total: float
    e_regions: dict
    l_total: np.ndarray
    l_regions: dict
    delta_e: float
    delta_l: float
    curve: CentralCurve
    planes_skipped: int
    structure_counts: dict


def compute_record(state: FieldState, mesh: Mesh, spec: DomainSpec,
                   q_thresholds=DEFAULT_Q_THRESHOLDS,
                   region_thresholds=DEFAULT_REGION_THRESHOLDS,
                   prev: DiagnosticsRecord | None = None) -> DiagnosticsRecord:
    curve, skipped = fit_curve_from_state(state, mesh, spec)
    regions = region_decomposition(mesh, curve, region_thresholds)
    e_total, e_split = kinetic_energy(state, mesh, regions)
    l_total, l_split = angular_momentum(state, mesh, curve, regions)
    v_max, _, d_vmax = max_velocity(state, mesh, spec)
    q_elem, _ = q_criterion(state, mesh)
    counts = {float(q): connected_vortex_structures(mesh, q_elem, q).count
              for q in q_thresholds}
    delta_e = abs(e_total - prev.e_total) if prev is not None else 0.0
    delta_l = float(np.linalg.norm(l_total - prev.l_total)) \
        if prev is not None else 0.0
    return DiagnosticsRecord(
        t=state.time, v_max=v_max, d_v_max=d_vmax,
        e_total=e_total, e_regions=e_split,
        l_total=l_total, l_regions=l_split,
        delta_e=delta_e, delta_l=delta_l,
        curve=curve, planes_skipped=skipped,
        structure_counts=counts,
    )
