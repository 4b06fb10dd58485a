"""Rayleigh-Ritz eigenvalues of the Laplace-Beltrami operator over spline spaces.

The trial space is ``S^k(M_rho)`` with its Lagrangian basis ``L_1..L_N``.  In
spectral coordinates ``L_nu = sum_i C[i, nu] phi_i``, so

    A = C^T diag(lambda) C      (energy, <Delta^1/2 L_g, Delta^1/2 L_n>)
    B = C^T C                   (mass, <L_g, L_n>)

and the Ritz values are the eigenvalues of the pencil ``(A, B)``.  Every Ritz
value bounds the matching exact eigenvalue from above, because the truncated
spline space is a genuine subspace of the function space.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _numeric as nm
from .errors import ConditioningError, NumericalError, PolyritzError
from .linalg import generalized_sym_eigen, sym_eigen, symmetrize
from .pointsets import AdmissibleSet, generate
from .splines import SpectralVector, build_space, interpolate_function

UPPER_BOUND_SLACK = 1e-8
RECONSTRUCTION_RANK_TOL = 1e-6


def num_threads():
    """Worker count from the ``NUM_THREADS`` environment variable (default 1)."""
    try:
        return max(1, int(os.environ.get("NUM_THREADS", "1")))
    except ValueError:
        return 1


def exact_pairing(manifold, count):
    """Exact eigenvalues ``lambda_1..lambda_count`` (with multiplicity, 0 first)."""
    return np.asarray(manifold.sorted_eigenvalues(count), dtype=float)


@dataclass(eq=False)
class RitzResult:
    energy_matrix: np.ndarray
    mass_matrix: np.ndarray
    d_matrix: np.ndarray
    ritz_values: np.ndarray
    effective_rank: int
    exact_values: np.ndarray
    gaps: np.ndarray
    raw_d_eigenvalues: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    ritz_values_exact: np.ndarray | None = None
    vectors: np.ndarray | None = None

    @property
    def violations(self):
        """Indices ``j`` where the upper-bound property fails beyond the slack."""
        slack = UPPER_BOUND_SLACK * np.maximum(1.0, self.exact_values)
        return [int(j) for j in np.nonzero(self.gaps < -slack)[0]]

    @property
    def upper_bound_ok(self):
        return not self.violations


def assemble(space):
    """Energy, mass and ``D`` matrices in the working precision of ``space``."""
    C = space.lagrange_spectral
    with nm.working_precision(space.dps):
        lam = nm.convert(space.basis.eigenvalues, space.dps)
        scaled = nm.sqrt(lam)[:, None] * C
        A, asym_a = symmetrize(scaled.T.dot(scaled))
        B, asym_b = symmetrize(C.T.dot(C))
        D, asym_d = symmetrize(C.T.dot(lam[:, None] * C))
    return A, B, D, {"asymmetry_A": asym_a, "asymmetry_B": asym_b, "asymmetry_D": asym_d}


def ritz_eigenvalues(space, rank_tol=1e-12):
    """Ritz values ``lambda_j^(k)`` of ``space`` with gaps against the exact spectrum."""
    A, B, D, diag = assemble(space)
    with nm.working_precision(space.dps):
        try:
            pencil = generalized_sym_eigen(A, B, rank_tol)
        except NumericalError as exc:
            raise type(exc)(f"{exc} (spline space: {space.diagnostics()})") from exc
        exact = exact_pairing(space.manifold, len(pencil.values))
        gaps = nm.to_float(pencil.values - nm.convert(exact, space.dps))
    raw_d = np.linalg.eigvalsh(nm.to_float(D))
    values = nm.to_float(pencil.values)
    diag.update(space.diagnostics())
    diag.update({
        "effective_rank": pencil.effective_rank,
        "zero_mode": float(values[0]) if len(values) else math.nan,
        "d_vs_a": nm.abs_max(D - A) / max(nm.abs_max(A), np.finfo(float).tiny),
    })
    return RitzResult(nm.to_float(A), nm.to_float(B), nm.to_float(D), values,
                      pencil.effective_rank, exact, gaps, raw_d, diag,
                      pencil.values if space.dps else None, pencil.vectors)


# -- convergence study -------------------------------------------------------------

@dataclass
class CellResult:
    rho: float
    N: int
    k: int
    status: str
    exact: list = field(default_factory=list)
    ritz: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    bounds: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == "ok"

    def gap_of(self, j):
        return self.gaps[j] if self.ok and j < len(self.gaps) else math.nan

    @property
    def max_gap(self):
        band = [g for lam, g in zip(self.exact, self.gaps) if lam > 0]
        return max(band) if band else math.nan


@dataclass
class ConvergenceReport:
    manifold: object
    omega: float
    rho_schedule: list
    k_schedule: list
    cells: list
    c0_fit: float = math.nan
    c0_envelope: float = math.nan
    c0_by_rho: dict = field(default_factory=dict)
    fit_residual: dict = field(default_factory=dict)
    monotone_in_k: dict = field(default_factory=dict)
    monotone_in_rho: dict = field(default_factory=dict)
    dps: int | None = None

    def cell(self, rho_index, k):
        rho = self.rho_schedule[rho_index]
        for c in self.cells:
            if c.rho == rho and c.k == k:
                return c
        raise KeyError((rho_index, k))

    def series_in_k(self, rho_index, j):
        return [self.cell(rho_index, k).gap_of(j) for k in self.k_schedule]

    def series_in_rho(self, k, j):
        return [self.cell(i, k).gap_of(j) for i in range(len(self.rho_schedule))]

    @property
    def upper_bound_ok(self):
        return all(g >= -UPPER_BOUND_SLACK * max(1.0, lam)
                   for c in self.cells if c.ok for lam, g in zip(c.exact, c.gaps))

    @property
    def fit_ok(self):
        return all(r < 0.5 for r in self.fit_residual.values() if not math.isnan(r))

    def rows(self):
        label = self.manifold.label
        for c in self.cells:
            if not c.ok:
                yield [label, c.rho, c.N, c.k, "", "", "", "", "", c.status]
                continue
            for j, (lam, val, gap, bound) in enumerate(zip(c.exact, c.ritz, c.gaps, c.bounds)):
                yield [label, c.rho, c.N, c.k, j, lam, val, gap, bound, "ok"]

    def to_csv(self, digits=17):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["manifold", "rho", "N", "k", "j", "lambda_exact", "lambda_ritz", "gap",
                    "bound", "status"])
        for row in self.rows():
            w.writerow([_fmt(v, digits) for v in row])
        return buf.getvalue()

    def to_dict(self):
        return {
            "manifold": self.manifold.label, "omega": self.omega, "dps": self.dps,
            "rho_schedule": self.rho_schedule, "k_schedule": self.k_schedule,
            "c0_fit": self.c0_fit, "c0_envelope": self.c0_envelope,
            "c0_by_rho": {str(k): v for k, v in self.c0_by_rho.items()},
            "fit_residual": {str(k): v for k, v in self.fit_residual.items()},
            "monotone_in_k": {str(k): v for k, v in self.monotone_in_k.items()},
            "monotone_in_rho": {str(k): v for k, v in self.monotone_in_rho.items()},
            "upper_bound_ok": self.upper_bound_ok,
            "cells": [c.__dict__ for c in self.cells],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, default=_json_default)


def _fmt(v, digits):
    if isinstance(v, float):
        return format(v, f".{digits}g")
    return v


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def theoretical_bound(omega, d, k, rho, c0):
    """``omega^2d gamma^2(k-d)`` with ``gamma = c0 rho^2 omega``."""
    gamma = c0 * rho * rho * omega
    return omega ** (2 * d) * gamma ** (2 * (k - d))


def _run_cell(aset, k, omega, dps, tail_tol):
    try:
        space = build_space(aset, k, target_tail_tol=tail_tol, dps=dps)
        res = ritz_eigenvalues(space)
    except (ConditioningError, NumericalError) as exc:
        return CellResult(aset.rho, len(aset), k, f"error: {exc}")
    band = [j for j, lam in enumerate(res.exact_values) if lam <= omega + 1e-9]
    return CellResult(aset.rho, len(aset), k, "ok",
                      [float(res.exact_values[j]) for j in band],
                      [float(res.ritz_values[j]) for j in band],
                      [float(res.gaps[j]) for j in band], [],
                      {key: v for key, v in res.diagnostics.items() if np.isscalar(v) or v is None})


def _log_fit(x, y):
    """Least-squares line; returns (slope, intercept, rms residual)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 2:
        return math.nan, math.nan, math.nan
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid ** 2))) if len(x) > 2 else 0.0


def _strictly_decreasing(values):
    vals = [v for v in values if not math.isnan(v)]
    return len(vals) >= 2 and all(b < a for a, b in zip(vals, vals[1:]))


def convergence_study(manifold, omega, rho_schedule, k_schedule, seed=0, dps=None,
                      tail_tol=1e-12, workers=None):
    """Ritz gaps over a grid of mesh sizes and spline orders.

    ``rho_schedule`` entries are mesh parameters (a set is generated) or
    AdmissibleSets.  Cells failing for conditioning are recorded, not raised.
    ``C0`` is fitted twice: by least squares of ``log(max gap)`` against the
    model ``2d log w + 2(k-d) log(C0 rho^2 w)`` over all cells, and as the
    smallest constant whose bound dominates every observed gap.
    """
    if not omega > 0:
        raise PolyritzError("omega must be positive")
    if not rho_schedule or not k_schedule:
        raise PolyritzError("schedules must be nonempty")
    d = manifold.dimension
    sets = [r if isinstance(r, AdmissibleSet) else generate(manifold, r, seed) for r in rho_schedule]
    rhos = [s.rho for s in sets]
    jobs = [(s, k) for s in sets for k in k_schedule]
    workers = workers or num_threads()
    if workers > 1 and not dps:
        with ThreadPoolExecutor(workers) as pool:
            cells = list(pool.map(lambda job: _run_cell(job[0], job[1], omega, dps, tail_tol), jobs))
    else:
        cells = [_run_cell(s, k, omega, dps, tail_tol) for s, k in jobs]

    report = ConvergenceReport(manifold, omega, rhos, list(k_schedule), cells, dps=dps)
    fit_x, fit_y = [], []
    for c in cells:
        g = c.max_gap
        if c.ok and g > 0 and c.k > d:
            a = 2 * (c.k - d)
            fit_x.append(a)
            fit_y.append(math.log(g) - 2 * d * math.log(omega) - a * (2 * math.log(c.rho) + math.log(omega)))
    if fit_x:
        x, y = np.array(fit_x, float), np.array(fit_y, float)
        report.c0_fit = float(math.exp(x.dot(y) / x.dot(x)))
        report.c0_envelope = float(math.exp(np.max(y / x)))
    for i, rho in enumerate(rhos):
        series = [report.cell(i, k).max_gap for k in k_schedule]
        pts = [(k - d, math.log(g)) for k, g in zip(k_schedule, series) if g > 0]
        if len(pts) >= 2:
            slope, _, resid = _log_fit(*zip(*pts))
            report.c0_by_rho[rho] = math.exp(slope / 2) / (rho * rho * omega)
            report.fit_residual[rho] = resid
        report.monotone_in_k[rho] = _strictly_decreasing(series)
    for k in k_schedule:
        report.monotone_in_rho[k] = _strictly_decreasing(
            [report.cell(i, k).max_gap for i in range(len(rhos))])
    c0 = report.c0_fit
    for c in cells:
        if c.ok:
            c.bounds = [theoretical_bound(omega, d, c.k, c.rho, c0) if lam > 0 and not math.isnan(c0)
                        else 0.0 for lam in c.exact]
    return report


# -- eigenfunction reconstruction ---------------------------------------------------

@dataclass
class ReconstructionEntry:
    descriptor: tuple
    eigenvalue: float
    l2_error: float
    sup_error: float


@dataclass
class ReconstructionReport:
    entries: list
    projected_rank: int
    band_dimension: int
    grid_points: int
    singular_values: list

    @property
    def max_l2(self):
        return max(e.l2_error for e in self.entries)

    @property
    def max_sup(self):
        return max(e.sup_error for e in self.entries)

    @property
    def rank_preserved(self):
        return self.projected_rank == self.band_dimension


def eigenfunction_reconstruction(space, omega, grid_points=10_000, rank_tol=RECONSTRUCTION_RANK_TOL):
    """Interpolate every exact eigenfunction with ``lambda <= omega`` and measure errors.

    L2 errors come from the spectral coefficients; sup errors are maxima over a
    dense product grid, evaluated in float64 from the coefficient differences.
    """
    if omega > space.cutoff:
        raise PolyritzError(f"omega={omega} exceeds the spectral cutoff {space.cutoff}")
    basis = space.basis
    grid = space.manifold.probe_grid(grid_points)
    band = [i for i, lam in enumerate(basis.eigenvalues) if lam <= omega + 1e-9]
    entries, columns = [], []
    for i in band:
        desc = basis.descriptors[i]
        f = SpectralVector.eigenfunction(basis, desc)
        s = interpolate_function(space, f).spectral
        diff = SpectralVector(basis, nm.to_float(s.coeffs - nm.convert(f.coeffs, space.dps)))
        sup = float(np.max(np.abs(diff.evaluate(grid))))
        entries.append(ReconstructionEntry(desc, float(basis.eigenvalues[i]), diff.norm(), sup))
        columns.append(nm.to_float(s.coeffs))
    sv = np.linalg.svd(np.array(columns).T, compute_uv=False)
    rank = int(np.sum(sv > rank_tol * sv[0])) if sv.size else 0
    return ReconstructionReport(entries, rank, len(band), len(grid), sv.tolist())
