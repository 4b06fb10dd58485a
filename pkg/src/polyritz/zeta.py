"""Spectral zeta functions and their Ritz approximations.

``zeta(s) = sum_{lambda_i != 0} lambda_i^-s`` converges for ``Re s > d/2``.  Plain
truncation converges far too slowly near the abscissa, so the exact series is
evaluated with classical accelerations whose remainders are explicit:

* flat tori (and the circle): the theta-function splitting of the Epstein zeta
  function of ``Z^d``, whose truncated sums decay like ``exp(-pi |m|^2)``;
* the round sphere: Euler-Maclaurin summation, where the integral of
  ``(2l+1)(l(l+1))^-s`` has the closed form ``(L(L+1))^(1-s) / (s-1)``.

The discrete zeta of a Ritz spectrum is the finite sum over its nonzero values.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from .errors import DegenerateSpectrumError, DomainError, ParameterError
from .manifolds import FlatTorus, RoundSphere
from .pointsets import AdmissibleSet, generate
from .ritz import UPPER_BOUND_SLACK, ritz_eigenvalues
from .splines import build_space

DOMAIN_MARGIN = 0.1
ZETA_DPS = 30
ZERO_TOL = 1e-8
EM_START = 40
EM_TERMS = 8


@dataclass(frozen=True)
class ZetaEval:
    s: complex
    value: complex
    truncation_level: float
    tail_bound: float


def check_domain(manifold, s):
    s = complex(s)
    if not s.real >= manifold.dimension / 2 + DOMAIN_MARGIN:
        raise DomainError(f"Re s = {s.real:g} must be at least d/2 + {DOMAIN_MARGIN} = "
                          f"{manifold.dimension / 2 + DOMAIN_MARGIN:g}")
    return s


def _to_complex(z):
    return complex(z.real, z.imag) if isinstance(z, mpmath.mpc) else complex(float(z), 0.0)


def _lattice_count_bound(d, t):
    """``#{m in Z^d : |m|^2 <= t} <= |B^d| (sqrt t + sqrt d / 2)^d``."""
    unit_ball = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    return unit_ball * (math.sqrt(t) + math.sqrt(d) / 2) ** d


def _epstein(manifold, s, tail_tol):
    """``sum' |m|^-2s`` over ``Z^d`` by theta-function splitting."""
    d = manifold.dimension
    s_mp = mpmath.mpc(s.real, s.imag)
    half = mpmath.mpf(d) / 2
    # Both incomplete-gamma terms of a shell at |m|^2 = t are bounded by
    # exp(-pi t) / (pi t (1 - q)), q = max(a - 1, 0) / (pi t), a the gamma order.
    prefactor = abs(mpmath.power(mpmath.pi, s_mp) / mpmath.gamma(s_mp))
    a_max = max(s.real, d / 2 - s.real, 1.0) - 1.0

    def tail(r2):
        total = 0.0
        for j in range(200):
            t = r2 + j
            q = a_max / (math.pi * t)
            if q >= 1:
                return math.inf
            total += _lattice_count_bound(d, t + 1) * 2 * math.exp(-math.pi * t) / (math.pi * t * (1 - q))
        return float(prefactor) * total

    r2 = 2.0
    while tail(r2) > tail_tol:
        r2 += 1.0
    total = mpmath.mpf(0)
    for level in manifold.enumerate_spectrum(r2):
        if level.eigenvalue == 0:
            continue
        x = mpmath.pi * level.eigenvalue
        total += level.multiplicity * (
            mpmath.gammainc(s_mp, x) * mpmath.power(x, -s_mp)
            + mpmath.gammainc(half - s_mp, x) * mpmath.power(x, s_mp - half))
    total += 1 / (s_mp - half) - 1 / s_mp
    return mpmath.power(mpmath.pi, s_mp) / mpmath.gamma(s_mp) * total, r2, tail(r2)


def _sphere_sum(s, tail_tol, start=EM_START, terms=EM_TERMS):
    """``sum_{l>=1} (2l+1)(l(l+1))^-s`` by Euler-Maclaurin from ``l = start``."""
    s_mp = mpmath.mpc(s.real, s.imag)

    def f(l):
        return (2 * l + 1) * mpmath.power(l * (l + 1), -s_mp)

    head = mpmath.fsum(f(mpmath.mpf(l)) for l in range(1, start))
    L = mpmath.mpf(start)
    tail = mpmath.power(L * (L + 1), 1 - s_mp) / (s_mp - 1) + f(L) / 2
    for j in range(1, terms + 1):
        tail -= mpmath.bernoulli(2 * j) / mpmath.factorial(2 * j) * mpmath.diff(f, L, 2 * j - 1)
    nxt = terms + 1
    remainder = 2 * abs(mpmath.bernoulli(2 * nxt) / mpmath.factorial(2 * nxt)
                        * mpmath.diff(f, L, 2 * nxt - 1))
    if remainder > tail_tol and start < 2000:
        return _sphere_sum(s, tail_tol, 2 * start, terms)
    return head + tail, start, float(remainder)


def zeta_exact(manifold, s, tail_tol=1e-12):
    """Spectral zeta of the exact spectrum with a bound on the neglected remainder."""
    s = check_domain(manifold, s)
    with mpmath.workdps(ZETA_DPS):
        if isinstance(manifold, FlatTorus):
            value, level, bound = _epstein(manifold, s, tail_tol)
        elif isinstance(manifold, RoundSphere):
            value, level, bound = _sphere_sum(s, tail_tol)
        else:
            raise ParameterError(f"unsupported manifold {manifold!r}")
        return ZetaEval(s, _to_complex(value), float(level), bound)


def _ritz_values(ritz):
    values = getattr(ritz, "ritz_values", ritz)
    return np.sort(np.asarray(values, dtype=float))


def nonzero_ritz(ritz):
    """Ritz values above ``1e-8 * lambda_2^(k)`` (the constants' zero mode is dropped)."""
    vals = _ritz_values(ritz)
    if len(vals) < 2:
        raise DegenerateSpectrumError("need at least two Ritz values to set the zero threshold")
    keep = vals[vals > ZERO_TOL * vals[1]]
    if keep.size == 0 or vals[1] <= 0:
        raise DegenerateSpectrumError("no Ritz value above the zero threshold")
    return keep


def zeta_discrete(ritz, s):
    """Finite zeta sum over the nonzero Ritz spectrum (principal branch)."""
    s = complex(s)
    vals = nonzero_ritz(ritz)
    value = complex(np.sum(np.exp(-s * np.log(vals))))
    return ZetaEval(s, value, float(len(vals)), 0.0)


def domination(ritz, s):
    """Check ``(lambda_j^(k))^-Re s <= lambda_j^-Re s`` index by index for ``lambda_j != 0``.

    Returns the list of violating indices (empty when domination holds to the
    solver slack used for the upper-bound property).
    """
    u = complex(s).real
    vals = _ritz_values(ritz)
    exact = np.asarray(ritz.exact_values, dtype=float)[:len(vals)]
    bad = []
    for j, (r, lam) in enumerate(zip(vals, exact)):
        if lam == 0 or r <= 0:
            continue
        if r ** -u > lam ** -u * (1 + u * UPPER_BOUND_SLACK * max(1.0, lam)):
            bad.append(j)
    return bad


@dataclass
class ZetaSweep:
    manifold: object
    k: int
    s_grid: list
    rows: list = field(default_factory=list)
    sup_errors: list = field(default_factory=list)
    rhos: list = field(default_factory=list)
    sizes: list = field(default_factory=list)
    domination_violations: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)

    @property
    def non_increasing(self):
        """Sup errors never grow by more than 10% along the schedule."""
        e = [x for x in self.sup_errors if not math.isnan(x)]
        return all(b <= 1.1 * a for a, b in zip(e, e[1:]))

    @property
    def dominated(self):
        return not any(self.domination_violations)

    def to_csv(self, digits=17):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["manifold", "rho", "N", "k", "re_s", "im_s", "re_zeta", "im_zeta",
                    "re_zeta_discrete", "im_zeta_discrete", "abs_error"])
        for row in self.rows:
            w.writerow([format(v, f".{digits}g") if isinstance(v, float) else v for v in row])
        return buf.getvalue()


def zeta_convergence_sweep(manifold, k, rho_schedule, s_grid, seed=0, dps=None, tail_tol=1e-12):
    """Sup over ``s_grid`` of ``|zeta - zeta_discrete|`` for each mesh in the schedule."""
    grid = [check_domain(manifold, s) for s in s_grid]
    exact = [zeta_exact(manifold, s, tail_tol).value for s in grid]
    sweep = ZetaSweep(manifold, k, grid)
    for item in rho_schedule:
        aset = item if isinstance(item, AdmissibleSet) else generate(manifold, item, seed)
        sweep.rhos.append(aset.rho)
        sweep.sizes.append(len(aset))
        try:
            res = ritz_eigenvalues(build_space(aset, k, dps=dps))
        except Exception as exc:  # recorded per cell, not fatal
            sweep.failures[aset.rho] = str(exc)
            sweep.sup_errors.append(math.nan)
            sweep.domination_violations.append([])
            continue
        worst = 0.0
        bad = set()
        for s, z in zip(grid, exact):
            zd = zeta_discrete(res, s).value
            err = abs(z - zd)
            worst = max(worst, err)
            bad.update(domination(res, s))
            sweep.rows.append([manifold.label, aset.rho, len(aset), k, s.real, s.imag,
                               z.real, z.imag, zd.real, zd.imag, err])
        sweep.sup_errors.append(worst)
        sweep.domination_violations.append(sorted(bad))
    return sweep
