"""Generation and validation of rho-admissible node sets.

A node set is rho-admissible when the balls ``B(x_i, rho/4)`` are disjoint,
the balls ``B(x_i, rho/2)`` cover the manifold, and the balls ``B(x_i, rho)``
overlap with multiplicity at most ``R0(M)``.  On tori regular lattices are used
directly; on the sphere a greedy maximal ``rho/2``-separated subset of a
candidate stream is built and then repaired wherever a probe finds a hole.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ParameterError, PolyritzError
from .manifolds import TWO_PI, FlatTorus, RoundSphere, fibonacci_sphere, get_manifold

COVERING_SLACK = 0.01
DEFAULT_PROBES = 10_000


@dataclass(frozen=True)
class SetMetrics:
    min_pairwise_distance: float
    covering_radius: float
    multiplicity_rho: int


@dataclass(frozen=True)
class ValidationReport:
    rho: float
    node_count: int
    probe_count: int
    metrics: SetMetrics
    r0_bound: float
    packing_ok: bool
    covering_ok: bool
    multiplicity_ok: bool
    rho_ok: bool

    @property
    def passed(self):
        return self.packing_ok and self.covering_ok and self.multiplicity_ok and self.rho_ok

    def lines(self):
        m = self.metrics
        yield f"packing     {'pass' if self.packing_ok else 'FAIL'}  min distance {m.min_pairwise_distance:.6g} vs rho/2 = {self.rho / 2:.6g}"
        yield f"covering    {'pass' if self.covering_ok else 'FAIL'}  covering radius {m.covering_radius:.6g} vs rho/2 = {self.rho / 2:.6g}"
        yield f"multiplicity {'pass' if self.multiplicity_ok else 'FAIL'}  {m.multiplicity_rho} vs R0 = {self.r0_bound:g}"


@dataclass(frozen=True, eq=False)
class AdmissibleSet:
    manifold: object
    rho: float
    nodes: np.ndarray
    metrics: SetMetrics = field(default=None)

    def __len__(self):
        return len(self.nodes)

    @property
    def size(self):
        return len(self.nodes)


def check_rho(manifold, rho):
    if not (0 < rho < manifold.injectivity_radius / 6):
        raise ParameterError(
            f"rho must satisfy 0 < rho < r/6 = {manifold.injectivity_radius / 6:.6g}, got {rho!r}")


class _NeighbourIndex:
    """KD-tree over the nodes answering geodesic nearest-neighbour queries.

    Flat tori use a periodic box; on the sphere geodesic distance is a monotone
    function of chord length, so a Euclidean tree in R^3 suffices.
    """

    def __init__(self, manifold, nodes):
        self.sphere = isinstance(manifold, RoundSphere)
        self.tree = cKDTree(self._coords(nodes), boxsize=None if self.sphere else TWO_PI)

    def _coords(self, pts):
        pts = np.asarray(pts, dtype=float)
        if self.sphere:
            return pts
        pts = np.mod(pts, TWO_PI)
        pts[pts >= TWO_PI] = 0.0
        return pts

    def _geodesic(self, chord):
        if not self.sphere:
            return chord
        return 2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0))

    def _chord(self, radius):
        return 2.0 * math.sin(min(radius, math.pi) / 2.0) if self.sphere else radius

    def nearest(self, pts, k=1):
        dist, _ = self.tree.query(self._coords(pts), k=k)
        return self._geodesic(dist)

    def count_within(self, pts, radius):
        """Nodes at geodesic distance strictly below ``radius`` from each point."""
        r = np.nextafter(self._chord(radius), 0.0)
        return np.asarray(self.tree.query_ball_point(self._coords(pts), r, return_length=True))


def min_pairwise_distance(manifold, nodes):
    if len(nodes) < 2:
        return math.inf
    return float(_NeighbourIndex(manifold, nodes).nearest(nodes, k=2)[:, 1].min())


def validate(aset, probe_count=DEFAULT_PROBES):
    """Check the three covering-lemma properties of ``aset``.

    The minimum separation is exact (all pairs, via a KD-tree).  Covering
    radius and ball multiplicity are estimated from ``probe_count``
    quasi-random probes; the covering test allows 1% slack for probe
    undersampling.  Failures are reported, never raised.
    """
    if probe_count < 1000:
        raise ParameterError("probe_count must be at least 1000")
    m, rho, nodes = aset.manifold, aset.rho, aset.nodes
    probes = m.probe_points(probe_count)
    index = _NeighbourIndex(m, nodes)
    sep = float(index.nearest(nodes, k=2)[:, 1].min()) if len(nodes) > 1 else math.inf
    cover = float(index.nearest(probes).max())
    mult = int(index.count_within(probes, rho).max())
    metrics = SetMetrics(sep, cover, mult)
    return ValidationReport(
        rho=rho, node_count=len(nodes), probe_count=probe_count, metrics=metrics,
        r0_bound=m.r0_constant,
        packing_ok=sep >= rho / 2,
        covering_ok=cover <= (rho / 2) * (1 + COVERING_SLACK),
        multiplicity_ok=mult <= m.r0_constant,
        rho_ok=0 < rho < m.injectivity_radius / 6,
    )


def cardinality_estimate(manifold, rho):
    if rho <= 0:
        raise ParameterError("rho must be positive")
    return manifold.volume / rho ** manifold.dimension


# -- lattices on tori ----------------------------------------------------------

def _torus_lattice(d, n, staggered):
    h = TWO_PI / n
    idx = np.stack([g.ravel() for g in np.meshgrid(*([np.arange(n)] * d), indexing="ij")], axis=1)
    pts = idx.astype(float)
    if staggered:
        pts[:, 0] += 0.5 * idx[:, 1]
    return np.mod(pts * h, TWO_PI)


def _lattice_geometry(d, n, staggered):
    """(minimum separation, covering radius) of the regular lattice."""
    h = TWO_PI / n
    if staggered:
        return h, 0.625 * h
    return h, 0.5 * h * math.sqrt(d)


def lattice_set(manifold, n, staggered=None, probe_count=DEFAULT_PROBES):
    """Regular lattice with ``n`` nodes per axis and the smallest admissible rho.

    On the 2-torus the staggered lattice (alternate rows shifted by half a
    spacing) is the default; it needs ``n`` even.
    """
    if not isinstance(manifold, FlatTorus):
        raise ParameterError("lattice sets exist only on the circle and flat tori")
    d = manifold.dimension
    if staggered is None:
        staggered = d == 2 and n % 2 == 0
    if staggered and (d != 2 or n % 2):
        raise ParameterError("staggered lattices need d = 2 and an even n")
    sep, cover = _lattice_geometry(d, n, staggered)
    rho = 2.0 * cover
    if rho > 2.0 * sep:
        raise ParameterError("lattice cannot satisfy packing and covering simultaneously")
    check_rho(manifold, rho)
    return _finish(AdmissibleSet(manifold, rho, _torus_lattice(d, n, staggered)), probe_count)


def _pick_lattice(d, rho):
    """Nodes per axis whose spacing sits closest to the middle of the feasible band."""
    staggered = d == 2
    h_max = 0.8 * rho if staggered else rho / math.sqrt(d)
    lo, hi = math.ceil(TWO_PI / h_max - 1e-9), math.floor(TWO_PI / (rho / 2) + 1e-9)
    candidates = [n for n in range(lo, hi + 1) if not staggered or n % 2 == 0]
    if not candidates:
        return None, staggered
    target = TWO_PI / (0.5 * (rho / 2 + h_max))
    return min(candidates, key=lambda n: (abs(n - target), n)), staggered


def _greedy(candidates, nodes, sep):
    """Sphere-only greedy insertion: keep candidates at angle >= sep from all kept."""
    cos_sep = math.cos(sep)
    buf = np.empty((len(nodes) + len(candidates), 3))
    buf[:len(nodes)] = nodes
    k = len(nodes)
    for c in candidates:
        if k and float(np.max(buf[:k] @ c)) > cos_sep:
            continue
        buf[k] = c
        k += 1
    return buf[:k].copy()


def _random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def _sphere_packing(manifold, rho, seed, probe_count):
    rng = np.random.default_rng(seed)
    sep = rho / 2
    n0 = max(int(round(manifold.volume / (0.65 * rho) ** 2)), 4)
    nodes = _greedy(fibonacci_sphere(n0), np.empty((0, 3)), sep)
    nodes = _greedy(fibonacci_sphere(16 * n0, _random_rotation(rng)), nodes, sep)
    nodes = _greedy(manifold.random_points(16 * n0, rng), nodes, sep)
    # Probe-driven repair: any probe farther than rho/2 from all nodes is itself a
    # valid insertion, so the loop keeps the set separated and ends maximal.
    probes = manifold.probe_points(probe_count)
    for _ in range(10 * n0):
        gap = manifold.nearest_distances(probes, nodes)
        worst = int(np.argmax(gap))
        if gap[worst] <= sep:
            break
        nodes = np.vstack([nodes, probes[worst][None, :]])
    return nodes


def generate(manifold, rho, seed=0, probe_count=DEFAULT_PROBES):
    """Build a rho-admissible set.

    Tori use a regular lattice with spacing in ``[rho/2, h_max]`` (the covering
    bound ``h_max`` depends on the lattice); the sphere uses a greedy maximal
    packing of Fibonacci and seeded random candidates.
    """
    check_rho(manifold, rho)
    if isinstance(manifold, FlatTorus):
        n, staggered = _pick_lattice(manifold.dimension, rho)
        if n is None:
            raise PolyritzError(f"no regular lattice is rho-admissible for rho={rho}")
        nodes = _torus_lattice(manifold.dimension, n, staggered)
    elif isinstance(manifold, RoundSphere):
        nodes = _sphere_packing(manifold, rho, seed, probe_count)
    else:
        raise ParameterError(f"unsupported manifold {manifold!r}")
    return _finish(AdmissibleSet(manifold, rho, nodes), probe_count)


def _finish(aset, probe_count):
    report = validate(aset, probe_count)
    if not report.passed:
        raise AssertionError("generated node set violates admissibility:\n" + "\n".join(report.lines()))
    return AdmissibleSet(aset.manifold, aset.rho, aset.nodes, report.metrics)


def from_nodes(manifold, rho, nodes):
    """Wrap user-supplied nodes; metrics are filled but admissibility is not enforced."""
    nodes = manifold.normalize(nodes)
    aset = AdmissibleSet(manifold, float(rho), nodes)
    return AdmissibleSet(manifold, float(rho), nodes, validate(aset).metrics)


# -- CSV interchange -------------------------------------------------------------

def _columns(manifold):
    if isinstance(manifold, RoundSphere):
        return ["x", "y", "z"]
    if manifold.dimension == 1:
        return ["theta"]
    return [f"theta_{i + 1}" for i in range(manifold.dimension)]


def to_csv(aset, digits=17):
    buf = io.StringIO()
    m = aset.manifold
    buf.write(f"# manifold={m.kind} dimension={m.dimension} rho={aset.rho!r}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_columns(m))
    for row in aset.nodes:
        writer.writerow([format(float(v), f".{digits}g") for v in row])
    return buf.getvalue()


def from_csv(text):
    meta = {}
    rows = []
    header = None
    for line in text.splitlines():
        if line.startswith("#"):
            for token in line[1:].split():
                key, _, value = token.partition("=")
                meta[key] = value
            continue
        if not line.strip():
            continue
        if header is None:
            header = line.split(",")
            continue
        rows.append([float(v) for v in line.split(",")])
    manifold = get_manifold(meta.get("manifold", "circle"), meta.get("dimension"))
    nodes = np.array(rows, dtype=float).reshape(-1, len(header))
    return from_nodes(manifold, float(meta["rho"]), nodes)
