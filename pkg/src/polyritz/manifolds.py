"""Model manifolds with closed-form Laplace-Beltrami spectra.

Three families are supported: the circle, flat tori ``(R / 2 pi Z)^d`` for
``d`` in 1..3, and the unit round sphere.  Each exposes its geometry
(distance, volume, injectivity radius, the constants of the covering lemma) and
an exact real orthonormal eigenbasis that can be evaluated either in float64
or, for extended-precision runs, on mpfr object arrays.

Points are stored as 2-D arrays: ``(n, d)`` angles in ``[0, 2 pi)`` on tori and
``(n, 3)`` unit vectors on the sphere.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.stats import qmc

from . import _numeric as nm
from .errors import DescriptorError, ParameterError

TWO_PI = 2.0 * np.pi
MAX_SPHERE_DEGREE = 200


@dataclass(frozen=True)
class EigenLevel:
    level_index: int
    eigenvalue: float
    multiplicity: int
    basis_descriptors: tuple

    def __post_init__(self):
        if self.multiplicity != len(self.basis_descriptors):
            raise ValueError("multiplicity must equal the number of descriptors")


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Flat list of eigenfunctions with eigenvalue <= ``cutoff``.

    Index 0 is always the constant mode.  ``eigenvalues[i]`` belongs to
    ``descriptors[i]``; ordering is by eigenvalue, then descriptor.
    """

    manifold: "Manifold"
    cutoff: float
    eigenvalues: np.ndarray
    descriptors: tuple

    def __len__(self):
        return len(self.descriptors)

    @cached_property
    def index(self):
        return {desc: i for i, desc in enumerate(self.descriptors)}

    def values(self, points, dps=None):
        """Matrix ``Phi[i, p] = phi_i(x_p)`` of shape (modes, points)."""
        return self.manifold.basis_values(self.descriptors, points, dps=dps)

    def weights(self, power, dps=None):
        """``lambda_i ** -power`` with zero for the constant mode."""
        lam = nm.convert(self.eigenvalues, dps)
        out = np.zeros_like(lam)
        out[1:] = lam[1:] ** (-power)
        return out


class Manifold:
    """Common interface of the model manifolds."""

    kind: str
    dimension: int
    coord_dim: int
    curvature_bound = 0.0
    volume_comparability = 1.0

    @property
    def injectivity_radius(self):
        return np.pi

    @property
    def r0_constant(self):
        k, r, d = self.curvature_bound, self.injectivity_radius, self.dimension
        return 12.0 ** d * self.volume_comparability * math.exp(math.sqrt(k * r * (d - 1)))

    @property
    def label(self):
        return self.kind if self.kind != "flat_torus" else f"flat_torus{self.dimension}"

    # -- spectrum -------------------------------------------------------
    def enumerate_spectrum(self, lambda_max):
        modes = self._modes(lambda_max)
        levels = []
        for lam, group in itertools.groupby(modes, key=lambda t: t[0]):
            descs = tuple(d for _, d in group)
            levels.append(EigenLevel(len(levels), float(lam), len(descs), descs))
        return levels

    def basis(self, cutoff):
        modes = self._modes(cutoff)
        lam = np.array([m[0] for m in modes], dtype=float)
        return SpectralBasis(self, float(cutoff), lam, tuple(m[1] for m in modes))

    def sorted_eigenvalues(self, count):
        """First ``count`` eigenvalues counted with multiplicity (0 included)."""
        lam_max = 1.0
        while True:
            lam = [m[0] for m in self._modes(lam_max)]
            if len(lam) >= count:
                return np.array(lam[:count], dtype=float)
            lam_max *= 2.0

    def mode_count(self, cutoff):
        return len(self._modes(cutoff))

    def weyl_count(self, omega):
        """Weyl estimate ``c Vol omega^(d/2)``, ``c = |B^d| / (2 pi)^d``."""
        d = self.dimension
        unit_ball = np.pi ** (d / 2) / math.gamma(d / 2 + 1)
        return unit_ball / TWO_PI ** d * self.volume * omega ** (d / 2)

    def eval_eigenfunction(self, descriptor, p):
        descriptor = self.check_descriptor(descriptor)
        pts = self.normalize(p)
        return float(self.basis_values((descriptor,), pts)[0, 0])

    # -- geometry ---------------------------------------------------------
    def geodesic_distance(self, p, q):
        dist = self._distance(self.normalize(p), self.normalize(q))
        return float(dist[0]) if dist.size == 1 else dist

    def pairwise_distances(self, a, b):
        a, b = self.normalize(a), self.normalize(b)
        return self._distance(a[:, None, :], b[None, :, :])

    def nearest_distances(self, points, nodes):
        """Distance from each point to its nearest node."""
        chunk = max(1, min(2048, 4_000_000 // max(len(nodes), 1)))
        out = np.empty(len(points))
        for s in range(0, len(points), chunk):
            out[s:s + chunk] = self.pairwise_distances(points[s:s + chunk], nodes).min(axis=1)
        return out


@dataclass(frozen=True)
class FlatTorus(Manifold):
    """``(R / 2 pi Z)^d``; ``d = 1`` is the circle."""

    dimension: int = 1

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ParameterError("flat torus dimension must be 1, 2 or 3")

    @property
    def kind(self):
        return "circle" if self.dimension == 1 else "flat_torus"

    @property
    def coord_dim(self):
        return self.dimension

    @property
    def volume(self):
        return TWO_PI ** self.dimension

    def normalize(self, points):
        a = np.asarray(points, dtype=float)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        elif a.ndim == 1:
            a = a.reshape(-1, 1) if self.dimension == 1 else a.reshape(1, -1)
        if a.shape[-1] != self.dimension:
            raise ParameterError(f"expected {self.dimension} angle(s) per point")
        return np.mod(a, TWO_PI)

    def _distance(self, p, q):
        delta = np.abs(p - q) % TWO_PI
        delta = np.minimum(delta, TWO_PI - delta)
        return np.sqrt(np.sum(delta ** 2, axis=-1))

    def _modes(self, lambda_max):
        r = int(math.isqrt(int(math.floor(lambda_max + 1e-9)))) if lambda_max >= 0 else -1
        modes = [(0.0, ("const",))]
        if r < 1:
            return modes
        rng = range(-r, r + 1)
        for m in itertools.product(rng, repeat=self.dimension):
            nz = [c for c in m if c != 0]
            if not nz or nz[0] < 0:
                continue
            lam = sum(c * c for c in m)
            if lam <= lambda_max + 1e-9:
                modes.append((float(lam), ("cos", tuple(m))))
                modes.append((float(lam), ("sin", tuple(m))))
        modes[1:] = sorted(modes[1:], key=lambda t: (t[0], t[1][1], t[1][0]))
        return modes

    def check_descriptor(self, desc):
        if desc == ("const",) or desc == "const":
            return ("const",)
        try:
            kind, m = desc
            m = (int(m),) if np.ndim(m) == 0 else tuple(int(c) for c in m)
        except (TypeError, ValueError):
            raise DescriptorError(f"{desc!r} is not a {self.label} eigenfunction label") from None
        nz = [c for c in m if c != 0]
        if kind not in ("cos", "sin") or len(m) != self.dimension or not nz or nz[0] < 0:
            raise DescriptorError(f"{desc!r} is not a {self.label} eigenfunction label")
        return (kind, m)

    def eigenvalue_of(self, desc):
        desc = self.check_descriptor(desc)
        return 0.0 if desc == ("const",) else float(sum(c * c for c in desc[1]))

    def basis_values(self, descriptors, points, dps=None):
        pts = nm.convert(self.normalize(points) if not nm.is_mp(points) else points, dps)
        n_modes = len(descriptors)
        freq = np.zeros((n_modes, self.dimension), dtype=int)
        is_sin = np.zeros(n_modes, dtype=bool)
        is_const = np.zeros(n_modes, dtype=bool)
        for i, desc in enumerate(descriptors):
            desc = self.check_descriptor(desc)
            if desc == ("const",):
                is_const[i] = True
            else:
                freq[i] = desc[1]
                is_sin[i] = desc[0] == "sin"
        vol = (2 * nm.pi(pts)) ** self.dimension if dps else self.volume
        phase = freq.dot(pts.T) if dps else freq.astype(float) @ pts.T
        out = np.empty(phase.shape, dtype=phase.dtype)
        c, s = ~is_sin & ~is_const, is_sin
        scale = nm.sqrt(nm.like(2, pts) / vol)
        if c.any():
            out[c] = nm.cos(phase[c]) * scale
        if s.any():
            out[s] = nm.sin(phase[s]) * scale
        if is_const.any():
            out[is_const] = 1 / nm.sqrt(vol) if dps else 1.0 / math.sqrt(vol)
        return out

    def spectral_tail(self, power, cutoff):
        """Upper bound on ``sum_{lambda_i > cutoff} lambda_i ** -power``.

        Uses the lattice-count bound ``#{|m|^2 <= t} <= |B^d| (sqrt t + sqrt d / 2)^d``
        and Stieltjes integration by parts.
        """
        d = self.dimension
        if power <= d / 2:
            return math.inf
        cutoff = max(cutoff, 1.0)
        unit_ball = np.pi ** (d / 2) / math.gamma(d / 2 + 1)
        grow = (1 + math.sqrt(d) / (2 * math.sqrt(cutoff))) ** d
        return unit_ball * grow * power * cutoff ** (d / 2 - power) / (power - d / 2)

    def probe_points(self, n):
        sampler = qmc.Halton(d=self.dimension, scramble=False)
        return TWO_PI * sampler.random(n)

    def probe_grid(self, n):
        per_axis = int(math.ceil(n ** (1.0 / self.dimension)))
        axis = np.arange(per_axis) * (TWO_PI / per_axis)
        mesh = np.meshgrid(*([axis] * self.dimension), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def random_points(self, n, rng):
        return TWO_PI * rng.random((n, self.dimension))


@dataclass(frozen=True)
class RoundSphere(Manifold):
    """Unit sphere ``S^2`` with real spherical harmonics."""

    kind: str = field(default="sphere2", init=False)
    dimension: int = field(default=2, init=False)
    coord_dim: int = field(default=3, init=False)

    @property
    def volume(self):
        return 4.0 * np.pi

    def normalize(self, points):
        a = np.asarray(points, dtype=float)
        if a.ndim == 1:
            a = a.reshape(1, -1)
        if a.shape[-1] != 3:
            raise ParameterError("sphere points are unit 3-vectors")
        norm = np.linalg.norm(a, axis=-1, keepdims=True)
        if np.any(norm == 0):
            raise ParameterError("zero vector is not a sphere point")
        return a / norm

    def _distance(self, p, q):
        cross = np.linalg.norm(np.cross(p, q), axis=-1)
        return np.arctan2(cross, np.sum(p * q, axis=-1))

    def _modes(self, lambda_max):
        modes = [(0.0, (0, 0))]
        l = 1
        while l * (l + 1) <= lambda_max + 1e-9:
            modes.extend((float(l * (l + 1)), (l, m)) for m in range(-l, l + 1))
            l += 1
        return modes

    def check_descriptor(self, desc):
        try:
            l, m = (int(desc[0]), int(desc[1]))
        except (TypeError, ValueError, IndexError):
            raise DescriptorError(f"{desc!r} is not a sphere2 eigenfunction label") from None
        if l < 0 or abs(m) > l or len(desc) != 2:
            raise DescriptorError(f"{desc!r} is not a sphere2 eigenfunction label")
        if l > MAX_SPHERE_DEGREE:
            raise ParameterError(f"spherical harmonic degree {l} exceeds cap {MAX_SPHERE_DEGREE}")
        return (l, m)

    def eigenvalue_of(self, desc):
        l, _ = self.check_descriptor(desc)
        return float(l * (l + 1))

    def basis_values(self, descriptors, points, dps=None):
        descs = [self.check_descriptor(d) for d in descriptors]
        pts = nm.convert(self.normalize(points) if not nm.is_mp(points) else points, dps)
        lmax = max((l for l, _ in descs), default=0)
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        sin_t = nm.sqrt(x * x + y * y)
        phi = nm.atan2(y, x)
        one = nm.like(1, pts)
        four_pi = 4 * nm.pi(pts)
        rows = {d: i for i, d in enumerate(descs)}
        out = np.empty((len(descs), len(pts)), dtype=pts.dtype)
        root2 = nm.sqrt(nm.like(2, pts)) if dps else math.sqrt(2.0)
        p_mm = np.full(len(pts), one / (nm.sqrt(four_pi) if dps else math.sqrt(four_pi)),
                       dtype=pts.dtype)
        for m in range(lmax + 1):
            if m > 0:
                p_mm = p_mm * sin_t * nm.sqrt_ratio(2 * m + 1, 2 * m, pts)
            cos_m = nm.cos(phi * m) if m else None
            sin_m = nm.sin(phi * m) if m else None
            prev2, prev = None, p_mm
            for l in range(m, lmax + 1):
                if l == m + 1:
                    prev2, prev = prev, z * prev * nm.sqrt_ratio(2 * m + 3, 1, pts)
                elif l > m + 1:
                    a = nm.sqrt_ratio(4 * l * l - 1, l * l - m * m, pts)
                    b = nm.sqrt_ratio((l - 1) ** 2 - m * m, 4 * (l - 1) ** 2 - 1, pts)
                    prev2, prev = prev, a * (z * prev - b * prev2)
                if m == 0:
                    if (l, 0) in rows:
                        out[rows[(l, 0)]] = prev
                    continue
                if (l, m) in rows:
                    out[rows[(l, m)]] = root2 * prev * cos_m
                if (l, -m) in rows:
                    out[rows[(l, -m)]] = root2 * prev * sin_m
        return out

    def spectral_tail(self, power, cutoff):
        """Bound via ``sum_{l > L} (2l+1) (l(l+1))^-p <= (L(L+1))^(1-p) / (p-1)``."""
        if power <= 1:
            return math.inf
        level = max(int(math.floor((math.sqrt(1 + 4 * max(cutoff, 0)) - 1) / 2)), 1)
        lam = level * (level + 1)
        return lam ** (1 - power) / (power - 1)

    def probe_points(self, n):
        return fibonacci_sphere(n)

    def probe_grid(self, n):
        n_theta = int(math.ceil(math.sqrt(n / 2))) + 1
        n_phi = 2 * (n_theta - 1)
        theta = np.linspace(0.0, np.pi, n_theta)
        phi = np.arange(n_phi) * (TWO_PI / n_phi)
        t, p = np.meshgrid(theta, phi, indexing="ij")
        return np.stack([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)],
                        axis=-1).reshape(-1, 3)

    def random_points(self, n, rng):
        v = rng.standard_normal((n, 3))
        return v / np.linalg.norm(v, axis=1, keepdims=True)


def fibonacci_sphere(n, rotation=None):
    """Fibonacci lattice of ``n`` nearly uniform points on the unit sphere."""
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    golden = np.pi * (3.0 - math.sqrt(5.0))
    phi = golden * np.arange(n)
    pts = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    if rotation is not None:
        pts = pts @ rotation.T
    return pts


def circle():
    return FlatTorus(1)


def flat_torus(d):
    return FlatTorus(d)


def sphere2():
    return RoundSphere()


def get_manifold(kind, dimension=None):
    """Factory used by the CLI: ``circle``, ``torus``/``flat_torus``, ``sphere2``."""
    kind = kind.lower()
    if kind in ("circle", "s1"):
        return circle()
    if kind in ("torus", "flat_torus", "t"):
        return FlatTorus(2 if dimension is None else int(dimension))
    if kind in ("sphere", "sphere2", "s2"):
        return sphere2()
    raise ParameterError(f"unknown manifold kind {kind!r}")


# Module-level forms of the manifold operations.

def enumerate_spectrum(manifold, lambda_max):
    if lambda_max <= 0:
        raise ParameterError("lambda_max must be positive")
    return manifold.enumerate_spectrum(lambda_max)


def eval_eigenfunction(manifold, descriptor, p):
    return manifold.eval_eigenfunction(descriptor, p)


def geodesic_distance(manifold, p, q):
    return manifold.geodesic_distance(p, q)


def weyl_count(manifold, omega):
    if omega <= 0:
        raise ParameterError("omega must be positive")
    return manifold.weyl_count(omega)
