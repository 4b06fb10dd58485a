"""Polyharmonic splines on model manifolds.

A spline of order ``k`` with nodes ``x_1..x_N`` is

    u = c + sum_g alpha_g G_2k(., x_g),     sum_g alpha_g = 0,

where ``G_2k(x, y) = sum_{lambda_i > 0} lambda_i^(-2k) phi_i(x) phi_i(y)`` is the
zero-mean fundamental solution of the iterated Laplacian.  Splines are kept in
two forms: the kernel form ``(alpha, c)`` used for interpolation identities and
the truncated spectral form (a :class:`SpectralVector`) used for every norm and
inner product.  The kernel series is truncated at an eigenvalue cutoff chosen
from a tail bound; the cutoff and the bound are always reported.
"""
from __future__ import annotations

import itertools
import json
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _numeric as nm
from .errors import ConditioningError, ParameterError, PreconditionError
from .linalg import qr, solve_lower, solve_upper_t, symmetrize
from .manifolds import SpectralBasis

DEFAULT_TAIL_TOL = 1e-12
DEFAULT_OVERSAMPLE = 4
INTERPOLATION_TOL = 1e-8


class KernelValue(NamedTuple):
    value: float
    tail_bound: float


class Spline(NamedTuple):
    """Kernel form ``(alpha, c)``; ``coeffs`` caches the spectral form when known."""
    alpha: np.ndarray
    constant: object
    coeffs: np.ndarray | None = None


class Interpolant(NamedTuple):
    spline: Spline
    spectral: "SpectralVector"


def order_schedule(d, count=None):
    """Spline orders ``k = (2^l + 1) d`` for ``l = 0, 1, ...``."""
    levels = itertools.count() if count is None else range(count)
    for l in levels:
        yield (2 ** l + 1) * d


def check_order(k, d):
    if int(k) != k or not k > d / 2:
        raise ParameterError(f"spline order must be an integer k > d/2 = {d / 2:g}, got {k!r}")
    if k <= d - 1:
        warnings.warn(f"k = {k} <= d - 1 = {d - 1}: uniqueness of the variational "
                      "interpolant is only guaranteed for k > d - 1", stacklevel=3)


# -- spectral vectors ----------------------------------------------------------

class SpectralVector:
    """Function ``sum_i c_i phi_i`` over a truncated eigenbasis.

    Index 0 of ``coeffs`` multiplies the normalised constant ``1/sqrt(Vol)``.
    Coefficients may be float64 or mpfr objects.
    """

    def __init__(self, basis: SpectralBasis, coeffs):
        coeffs = np.asarray(coeffs)
        if coeffs.shape != (len(basis),):
            raise ParameterError("coefficient vector does not match the basis")
        if not np.all(np.isfinite(nm.to_float(coeffs))):
            raise ParameterError("spectral coefficients must be finite")
        self.basis = basis
        self.coeffs = coeffs

    @classmethod
    def zeros(cls, basis):
        return cls(basis, np.zeros(len(basis)))

    @classmethod
    def eigenfunction(cls, basis, descriptor):
        desc = basis.manifold.check_descriptor(descriptor)
        if desc not in basis.index:
            raise PreconditionError(f"{desc!r} lies above the basis cutoff {basis.cutoff:g}")
        c = np.zeros(len(basis))
        c[basis.index[desc]] = 1.0
        return cls(basis, c)

    @classmethod
    def constant(cls, basis, value=1.0):
        c = np.zeros(len(basis))
        c[0] = value * math.sqrt(basis.manifold.volume)
        return cls(basis, c)

    @classmethod
    def random(cls, basis, omega, rng, include_constant=True):
        """Gaussian coefficients on every mode with eigenvalue <= omega."""
        c = np.zeros(len(basis))
        band = basis.eigenvalues <= omega + 1e-9
        if not include_constant:
            band[0] = False
        c[band] = rng.standard_normal(int(band.sum()))
        return cls(basis, c)

    @property
    def constant_coefficient(self):
        return self.coeffs[0]

    @property
    def coefficients(self):
        return {d: c for d, c in zip(self.basis.descriptors[1:], self.coeffs[1:])}

    def _like(self, coeffs):
        return SpectralVector(self.basis, coeffs)

    def _coerce(self, other):
        """Common basis (the larger one) and both coefficient vectors on it."""
        if other.basis is self.basis:
            return self.basis, self.coeffs, other.coeffs
        if len(self.basis) >= len(other.basis):
            return self.basis, self.coeffs, other.to_basis(self.basis).coeffs
        return other.basis, self.to_basis(other.basis).coeffs, other.coeffs

    def __add__(self, other):
        basis, a, b = self._coerce(other)
        return SpectralVector(basis, a + b)

    def __sub__(self, other):
        basis, a, b = self._coerce(other)
        return SpectralVector(basis, a - b)

    def __neg__(self):
        return self._like(-self.coeffs)

    def __mul__(self, scalar):
        return self._like(self.coeffs * scalar)

    __rmul__ = __mul__

    def to_basis(self, basis, strict=True):
        """Re-express on ``basis``; modes missing from it must have zero coefficient."""
        out = nm.zeros(len(basis), self.coeffs)
        for desc, c in zip(self.basis.descriptors, self.coeffs):
            j = basis.index.get(desc)
            if j is None:
                if strict and c != 0:
                    raise PreconditionError(f"mode {desc!r} is not representable at cutoff {basis.cutoff:g}")
                continue
            out[j] = c
        return SpectralVector(basis, out)

    def norm(self, t=0.0):
        """``||Delta^t f||`` in L2 (float)."""
        return math.exp(self.log_norm(t))

    def log_norm(self, t=0.0):
        """Natural log of ``||Delta^t f||``, overflow-free for large ``t``."""
        lam = self.basis.eigenvalues
        c = self.coeffs
        mp = nm.is_mp(c)
        if mp:
            total = nm.mpf(0)
            for l, ci in zip(lam, c):
                if ci == 0 or (l == 0 and t > 0):
                    continue
                total += nm.mpf(l) ** (2 * t) * ci * ci
            return float(nm.log(total) / 2) if total > 0 else -math.inf
        mask = (c != 0) & ((lam > 0) | (t == 0))
        if not mask.any():
            return -math.inf
        lam_m, c_m = lam[mask], c[mask]
        with np.errstate(divide="ignore"):
            logs = 2 * t * np.log(np.where(lam_m > 0, lam_m, 1.0)) + 2 * np.log(np.abs(c_m))
        top = logs.max()
        return 0.5 * (top + math.log(np.exp(logs - top).sum()))

    def inner(self, other, t=0.0):
        """``<Delta^t f, Delta^t g>`` as a float."""
        basis, a, b = self._coerce(other)
        w = basis.eigenvalues ** (2 * t) if t else np.ones(len(basis))
        if t:
            w[0] = 0.0
        if nm.is_mp(a) or nm.is_mp(b):
            return float(sum(x * y * wi for x, y, wi in zip(a, b, w) if wi))
        return float(np.sum(a * b * w))

    def evaluate(self, points, chunk=1024):
        """Values at ``points`` (float64), evaluated in chunks."""
        m = self.basis.manifold
        pts = m.normalize(points)
        c = nm.to_float(self.coeffs)
        live = np.nonzero(c)[0]
        if live.size == 0:
            return np.zeros(len(pts))
        descs = [self.basis.descriptors[i] for i in live]
        out = np.empty(len(pts))
        for s in range(0, len(pts), chunk):
            out[s:s + chunk] = c[live] @ m.basis_values(descs, pts[s:s + chunk])
        return out


# -- kernel ----------------------------------------------------------------------

def kernel_tail(manifold, k, cutoff):
    """Bound on the neglected diagonal tail ``sum_{lambda > cutoff} lambda^-2k phi^2``."""
    return manifold.spectral_tail(2 * k, cutoff) / manifold.volume


def choose_cutoff(manifold, k, tail_tol=DEFAULT_TAIL_TOL, min_modes=0, min_cutoff=0.0):
    """Smallest eigenvalue cutoff meeting the tail tolerance, the mode count and ``min_cutoff``."""
    lam = 1.0
    while kernel_tail(manifold, k, lam) > tail_tol:
        lam *= 2.0
    lo, hi = lam / 2, lam
    if hi > 1.0:
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if kernel_tail(manifold, k, mid) > tail_tol:
                lo = mid
            else:
                hi = mid
    cutoff = max(hi, min_cutoff)
    while manifold.mode_count(cutoff) < min_modes:
        cutoff *= 1.25
    # Snap up to an eigenvalue level so the tail bound stays within tolerance.
    levels = manifold.enumerate_spectrum(2 * cutoff + 4)
    return next(lv.eigenvalue for lv in levels if lv.eigenvalue >= cutoff)


def green_kernel(manifold, k, x, y, cutoff):
    """Truncated ``G_2k(x, y)`` and the tail bound of the neglected modes."""
    check_order(k, manifold.dimension)
    basis = manifold.basis(cutoff)
    if len(basis) < 2:
        raise ParameterError("cutoff must include the first nonzero eigenvalue")
    phi = basis.values(np.vstack([manifold.normalize(x), manifold.normalize(y)]))
    w = basis.weights(2 * k)
    return KernelValue(float(np.sum(w * phi[:, 0] * phi[:, 1])), kernel_tail(manifold, k, cutoff))


def kernel_matrix(basis, k, points_a, points_b, dps=None):
    phi_a = basis.values(points_a, dps)
    phi_b = phi_a if points_b is None else basis.values(points_b, dps)
    return phi_a.T.dot(basis.weights(2 * k, dps)[:, None] * phi_b)


# -- spline space -------------------------------------------------------------------

def _null_space_of_ones(n, ref):
    """Orthonormal basis of ``{a : sum(a) = 0}`` from a Householder reflector."""
    v = np.array([nm.like(1, ref) for _ in range(n)], dtype=ref.dtype)
    v[0] = v[0] + nm.sqrt(nm.like(n, ref))
    h = -(2 / v.dot(v)) * np.outer(v, v)
    for i in range(n):
        h[i, i] = h[i, i] + 1
    return h[:, 1:]


@dataclass(frozen=True, eq=False)
class SplineSpace:
    aset: object
    k: int
    basis: SpectralBasis
    tail_bound: float
    dps: int | None
    phi: np.ndarray
    root_weights: np.ndarray
    kernel: np.ndarray
    null_basis: np.ndarray
    q: np.ndarray
    r: np.ndarray
    saddle_condition: float
    lagrange_alpha: np.ndarray
    lagrange_constant: np.ndarray
    lagrange_spectral: np.ndarray
    interpolation_residual: float

    @property
    def manifold(self):
        return self.aset.manifold

    @property
    def nodes(self):
        return self.aset.nodes

    @property
    def size(self):
        return len(self.aset.nodes)

    @property
    def cutoff(self):
        return self.basis.cutoff

    def lagrangian(self, nu):
        return SpectralVector(self.basis, self.lagrange_spectral[:, nu])

    def diagnostics(self):
        return {"N": self.size, "k": self.k, "cutoff": self.cutoff, "modes": len(self.basis),
                "tail_bound": self.tail_bound, "saddle_condition": self.saddle_condition,
                "interpolation_residual": self.interpolation_residual, "dps": self.dps}


def _conditioning_error(aset, k, detail, cond, residual=None):
    return ConditioningError(
        f"order k={k} too large for N={len(aset.nodes)}, rho={aset.rho:.4g} at this precision "
        f"({detail}, condition estimate {cond:.2e})", cond, residual)


def build_space(aset, k, target_tail_tol=DEFAULT_TAIL_TOL, oversample=DEFAULT_OVERSAMPLE,
                dps=None, residual_tol=INTERPOLATION_TOL, min_cutoff=0.0):
    """Assemble and factorise the spline space ``S^k`` on the nodes of ``aset``.

    The bordered system ``[[K, 1], [1^T, 0]]`` is reduced to the constraint
    subspace ``sum(alpha) = 0`` (orthonormal basis ``Z``), where
    ``Z^T K Z = (W^1/2 Phi Z)^T (W^1/2 Phi Z)``.  Factorising ``W^1/2 Phi Z = QR``
    instead of forming the Gram matrix halves the condition exponent and gives
    the spectral coefficients of every spline without cancellation.  A rank
    collapse of ``R`` or a Lagrange residual above ``residual_tol`` raises
    ConditioningError.  ``dps`` runs the construction in mpfr arithmetic;
    ``min_cutoff`` widens the basis so that given functions stay representable.
    """
    manifold = aset.manifold
    check_order(k, manifold.dimension)
    n = len(aset.nodes)
    cutoff = choose_cutoff(manifold, k, target_tail_tol, oversample * n, min_cutoff)
    basis = manifold.basis(cutoff)
    if len(basis) > 250_000:
        raise ParameterError(f"cutoff {cutoff:g} needs {len(basis)} modes; loosen target_tail_tol")
    with nm.working_precision(dps):
        phi = basis.values(aset.nodes, dps)
        w = basis.weights(2 * k, dps)
        root_w = nm.sqrt(w)
        K, _ = symmetrize(phi.T.dot(w[:, None] * phi))
        Z = _null_space_of_ones(n, K)
        q, r = qr((root_w[:, None] * phi).dot(Z))
        rdiag = np.abs(nm.to_float(np.diag(r)))
        cond = float((rdiag.max() / rdiag.min()) ** 2) if rdiag.min() > 0 else math.inf
        if not rdiag.min() > 100 * nm.unit_roundoff(phi) * rdiag.max():
            raise _conditioning_error(aset, k, "saddle system numerically singular", cond)
        eye = nm.convert(np.eye(n), dps)
        alpha, const, spectral = _solve(phi, root_w, Z, q, r, eye, manifold)
        residual = nm.abs_max(phi.T.dot(spectral) - eye)
        if not residual <= residual_tol:
            raise _conditioning_error(aset, k, f"Lagrange residual {residual:.2e}", cond, residual)
    return SplineSpace(aset, int(k), basis, kernel_tail(manifold, k, cutoff), dps, phi, root_w,
                       K, Z, q, r, cond, alpha, const, spectral, residual)


def _root_volume(manifold, ref):
    if not nm.is_mp(ref):
        return math.sqrt(manifold.volume)
    if manifold.kind == "sphere2":
        return nm.sqrt(4 * nm.pi(ref))
    return nm.sqrt(2 * nm.pi(ref)) ** manifold.dimension


def _solve(phi, root_w, Z, q, r, values, manifold):
    """Kernel coefficients, constants and spectral coefficients for each column of ``values``."""
    n = values.shape[0]
    mean = values.sum(axis=0) / n
    centred = values - mean[None, :]
    g = solve_lower(r.T, Z.T.dot(centred))
    coeffs = root_w[:, None] * q.dot(g)
    alpha = Z.dot(solve_upper_t(r.T, g))
    const = mean + (centred - phi.T.dot(coeffs)).sum(axis=0) / n
    coeffs[0] = const * _root_volume(manifold, phi)
    return alpha, const, coeffs


def _kernel_to_spectral(basis, phi, w, alpha, const):
    coeffs = w[:, None] * phi.dot(alpha)
    coeffs[0] = const * _root_volume(basis.manifold, phi)
    return coeffs


def interpolate(space, values):
    """Spline of ``space`` taking ``values`` at the nodes."""
    vals = np.asarray(values)
    if vals.shape != (space.size,):
        raise ParameterError(f"expected {space.size} nodal values, got shape {vals.shape}")
    if not np.all(np.isfinite(nm.to_float(vals))):
        raise ParameterError("nodal values must be finite")
    with nm.working_precision(space.dps):
        v = nm.convert(vals, space.dps)[:, None]
        alpha, const, coeffs = _solve(space.phi, space.root_weights, space.null_basis,
                                      space.q, space.r, v, space.manifold)
    return Spline(alpha[:, 0], const[0], coeffs[:, 0])


def spline_to_spectral(space, spline):
    """Spectral form of a spline; uses the cached coefficients when present."""
    if spline.coeffs is not None:
        return SpectralVector(space.basis, spline.coeffs)
    with nm.working_precision(space.dps):
        alpha = nm.convert(spline.alpha, space.dps)[:, None]
        const = nm.convert(np.atleast_1d(spline.constant), space.dps)
        w = space.basis.weights(2 * space.k, space.dps)
        coeffs = _kernel_to_spectral(space.basis, space.phi, w, alpha, const)
    return SpectralVector(space.basis, coeffs[:, 0])


def nodal_values(space, f):
    """Values of a SpectralVector at the nodes, in the space's working precision."""
    f = f.to_basis(space.basis)
    with nm.working_precision(space.dps):
        return space.phi.T.dot(nm.convert(f.coeffs, space.dps))


def interpolate_function(space, f):
    """``s_k(f)``: the spline interpolating ``f`` on the nodes, in both forms."""
    vals = nodal_values(space, f)
    spline = interpolate(space, vals)
    return Interpolant(spline, spline_to_spectral(space, spline))


def variational_residual(space, u, h, node_tol=1e-8):
    """``<Delta^k u, Delta^k h>`` for a trial ``h`` vanishing on the nodes."""
    if isinstance(u, Spline):
        u = spline_to_spectral(space, u)
    h_nodes = nm.to_float(nodal_values(space, h))
    h_norm = h.norm()
    if np.max(np.abs(h_nodes), initial=0.0) > node_tol * max(h_norm, np.finfo(float).tiny):
        raise PreconditionError("trial function does not vanish on the nodes")
    return u.inner(h, t=space.k)


# -- serialisation --------------------------------------------------------------------

def spline_to_json(space, spline):
    m = space.manifold
    return json.dumps({
        "manifold": m.kind, "dimension": m.dimension, "rho": space.aset.rho,
        "nodes": nm.to_float(space.nodes).tolist(), "k": space.k,
        "alpha": [str(a) if space.dps else float(a) for a in spline.alpha],
        "constant": str(spline.constant) if space.dps else float(spline.constant),
        "cutoff": space.cutoff, "tail_bound": space.tail_bound, "dps": space.dps,
    })


def spline_from_json(text, **build_kwargs):
    """Rebuild the space from the stored nodes and return ``(space, spline)``."""
    from .manifolds import get_manifold
    from .pointsets import from_nodes

    data = json.loads(text)
    manifold = get_manifold(data["manifold"], data["dimension"])
    aset = from_nodes(manifold, data["rho"], np.array(data["nodes"]))
    dps = data.get("dps")
    space = build_space(aset, data["k"], dps=dps, **build_kwargs)
    with nm.working_precision(dps):
        conv = nm.mpf if dps else float
        alpha = np.array([conv(a) for a in data["alpha"]], dtype=object if dps else float)
        spline = Spline(alpha, conv(data["constant"]))
    return space, spline
