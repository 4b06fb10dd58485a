"""Empirical checks of the inequalities behind the spline Ritz method.

The constants in these inequalities are existential, so each is tested as a
scaling law: quantities are sampled along a sweep (mesh size, spline order or
power) and a log-log line is fitted.  Fits always report their residual.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _numeric as nm
from .errors import ConditioningError, ParameterError
from .pointsets import AdmissibleSet, generate
from .splines import SpectralVector, build_space, interpolate_function

EXPONENTIATION_SLACK = 1e-10


@dataclass
class ScalingFit:
    """Least-squares fit of ``log y = exponent * g(x) + log constant``.

    ``g`` is ``log x`` for power laws and ``x`` itself for geometric laws
    (``loglinear=True``).
    """
    variable: str
    samples: list
    exponent: float
    constant: float
    residual: float
    loglinear: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def base(self):
        """Per-unit factor ``exp(exponent)`` of a geometric law."""
        return math.exp(self.exponent)


def fit_scaling(variable, xs, ys, loglinear=False):
    pts = [(x, y) for x, y in zip(xs, ys) if y > 0 and math.isfinite(y)]
    if len(pts) < 3:
        raise ParameterError(f"a scaling fit needs at least 3 positive samples, got {len(pts)}")
    x = np.array([p[0] for p in pts], float)
    y = np.log([p[1] for p in pts])
    gx = x if loglinear else np.log(x)
    slope, intercept = np.polyfit(gx, y, 1)
    resid = y - (slope * gx + intercept)
    return ScalingFit(variable, [(float(a), float(b)) for a, b in zip(xs, ys)], float(slope),
                      float(math.exp(intercept)), float(np.sqrt(np.mean(resid ** 2))), loglinear)


def highest_mode(f):
    """Largest eigenvalue carrying a nonzero coefficient of ``f``."""
    live = np.nonzero(nm.to_float(f.coeffs))[0]
    return float(f.basis.eigenvalues[live].max()) if live.size else 0.0


def _lift(space, g):
    g = g.to_basis(space.basis)
    return SpectralVector(space.basis, nm.convert(g.coeffs, space.dps))


def remainder(space, g):
    """``g - s_k(g)``, which vanishes on the nodes of ``space``."""
    g = _lift(space, g)
    with nm.working_precision(space.dps):
        return g - interpolate_function(space, g).spectral


def poincare_ratio(space, g, m=1):
    """``||f|| / ||Delta^(d m) f||`` for ``f = g - s_k(g)``; 0 when ``f`` vanishes."""
    if m < 1 or m & (m - 1):
        raise ParameterError(f"m must be a power of two, got {m}")
    with nm.working_precision(space.dps):
        f = remainder(space, g)
        scale = _lift(space, g).log_norm()
        lf = f.log_norm()
        if lf == -math.inf or lf - scale < math.log(100 * nm.unit_roundoff(f.coeffs)):
            return 0.0
        lh = f.log_norm(space.manifold.dimension * m)
    assert lh > -math.inf, "nonzero remainder with vanishing high-order norm"
    return math.exp(lf - lh)


def _as_set(manifold, item, seed):
    return item if isinstance(item, AdmissibleSet) else generate(manifold, item, seed)


def poincare_scaling(manifold, rho_schedule, k, g, m=1, seed=0, dps=None):
    """Poincare ratio along a mesh sweep, fitted as a power of ``rho``."""
    sets = [_as_set(manifold, r, seed) for r in rho_schedule]
    ratios = []
    for aset in sets:
        space = build_space(aset, k, dps=dps, min_cutoff=highest_mode(g))
        ratios.append(poincare_ratio(space, g, m))
    fit = fit_scaling("rho", [s.rho for s in sets], ratios)
    fit.extra.update({"m": m, "k": k, "target_exponent": 2 * manifold.dimension * m,
                      "N": [len(s) for s in sets]})
    return fit


@dataclass
class ExponentiationReport:
    s: float
    t: float
    a: float
    vacuous: bool
    rows: list

    @property
    def failures(self):
        return [r for r in self.rows if not r["ok"]]

    @property
    def passed(self):
        return self.vacuous or not self.failures


def exponentiation_check(f, s, t, l_max, slack=EXPONENTIATION_SLACK):
    """Check ``||Delta^t f|| <= a^m ||Delta^(ms+t) f||`` for ``m = 2^l``, ``l <= l_max``.

    ``a = ||f|| / ||Delta^s f||`` is the sharp single-step constant.  Work is in
    log-norms, so large ``m`` does not overflow.  The per-``m`` slack is the
    log of ``rhs / lhs`` (0 at saturation).
    """
    if not s > 0 or t < 0:
        raise ParameterError("need s > 0 and t >= 0")
    log_f, log_s = f.log_norm(0), f.log_norm(s)
    if log_f == -math.inf:
        raise ParameterError("f must be nonzero")
    if log_s == -math.inf:
        return ExponentiationReport(s, t, math.inf, True, [])
    log_a = log_f - log_s
    lhs = f.log_norm(t)
    rows = []
    for l in range(l_max + 1):
        m = 2 ** l
        rhs = m * log_a + f.log_norm(m * s + t)
        margin = rhs - lhs
        rows.append({"m": m, "log_lhs": lhs, "log_rhs": rhs, "slack": margin,
                     "ok": margin >= -slack * max(1.0, abs(lhs))})
    return ExponentiationReport(s, t, math.exp(log_a), False, rows)


def approximation_rate(manifold, rho, k_schedule, f, t=0.0, seed=0, dps=None, grid_points=10_000):
    """Interpolation error ``||Delta^t (s_k f - f)|| / ||Delta^k f||`` against ``k``.

    Fits ``log err`` linearly in ``k - d``; the per-unit base estimates
    ``C rho^2``, so the fitted constant is ``C = base / rho^2`` and the base
    drops below 1 for ``rho < rho / sqrt(base)`` (reported as ``rho_threshold``).
    Sup errors on a probe grid are reported alongside.  Conditioning failures
    truncate the schedule with a warning; exact reproductions (err = 0) are
    excluded from the fit.
    """
    d = manifold.dimension
    if t > d:
        raise ParameterError(f"t must be <= d = {d}")
    aset = _as_set(manifold, rho, seed)
    grid = manifold.probe_grid(grid_points)
    ks, errs, sups = [], [], []
    for k in k_schedule:
        try:
            space = build_space(aset, k, dps=dps, min_cutoff=highest_mode(f))
        except ConditioningError as exc:
            warnings.warn(f"schedule truncated at k={k}: {exc}", stacklevel=2)
            break
        with nm.working_precision(space.dps):
            fl = _lift(space, f)
            diff = interpolate_function(space, fl).spectral - fl
            err = math.exp(diff.log_norm(t) - fl.log_norm(k)) if diff.log_norm(t) > -math.inf else 0.0
        sup = float(np.max(np.abs(SpectralVector(space.basis, nm.to_float(diff.coeffs)).evaluate(grid))))
        ks.append(k)
        errs.append(err)
        sups.append(sup)
    xs = [k - d for k in ks]
    fit = fit_scaling("k - d", xs, errs, loglinear=True)
    base = fit.base
    fit.extra.update({
        "rho": aset.rho, "N": len(aset), "k": ks, "errors": errs, "sup_errors": sups, "t": t,
        "c_rho2": base, "c_hat": base / aset.rho ** 2,
        "rho_threshold": aset.rho / math.sqrt(base),
    })
    return fit
