"""Command-line front end: ``polyritz <experiment> [options]``.

Options come from flags and an optional ``--config`` file of ``key = value``
lines (``#`` starts a comment); flags win over the file.  Every parameter is
validated before any computation and all problems are reported together.

Exit status: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
Failures also print a one-line JSON error record to standard error.
"""
from __future__ import annotations

import argparse
import difflib
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .errors import ConditioningError, NumericalError, ParameterError, PolyritzError
from .manifolds import get_manifold

EXPERIMENTS = ("spectrum", "pointset", "eigs", "convergence", "reconstruct", "poincare", "zeta")
EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 2, 3, 4


def _float_list(text):
    return [float(v) for v in _split(text)]


def _int_list(text):
    return [int(v) for v in _split(text)]


def _complex_list(text):
    return [complex(v.replace(" ", "").replace("i", "j")) for v in _split(text)]


def _split(text):
    items = [v.strip() for v in str(text).split(",") if v.strip()]
    if not items:
        raise ValueError("empty list")
    return items


def _fmt_choice(choices):
    def parse(text):
        if text not in choices:
            raise ValueError(f"expected one of {', '.join(choices)}")
        return text
    return parse


# key -> (parser, help, experiments using it, default)
PARAMETERS = {
    "manifold": (_fmt_choice(("circle", "flat_torus", "sphere2")), "circle | flat_torus | sphere2", EXPERIMENTS, "circle"),
    "dimension": (int, "torus dimension d (1..3)", EXPERIMENTS, None),
    "output": (str, "output path (stdout when omitted)", EXPERIMENTS, None),
    "format": (_fmt_choice(("csv", "json")), "csv | json", EXPERIMENTS, "csv"),
    "digits": (int, "significant digits for floats", EXPERIMENTS, 17),
    "seed": (int, "seed for node generation and random test functions", EXPERIMENTS, 0),
    "dps": (int, "decimal digits for extended precision (float64 when omitted)", EXPERIMENTS, None),
    "tail_tol": (float, "kernel tail tolerance for the spectral cutoff", EXPERIMENTS, 1e-12),
    "lambda_max": (float, "largest eigenvalue listed", ("spectrum",), None),
    "rho": (float, "mesh parameter of the node set", ("pointset", "eigs", "reconstruct"), None),
    "nodes": (str, "node CSV written by 'pointset' (overrides rho)", ("eigs", "reconstruct"), None),
    "probes": (int, "probe count for validation", ("pointset",), 10_000),
    "k": (int, "spline order", ("eigs", "reconstruct", "poincare", "zeta"), None),
    "omega": (float, "spectral band [0, omega]", ("eigs", "convergence", "reconstruct", "poincare"), None),
    "rho_schedule": (_float_list, "comma-separated mesh parameters", ("convergence", "poincare", "zeta"), None),
    "k_schedule": (_int_list, "comma-separated spline orders", ("convergence",), None),
    "m": (int, "Poincare power m (a power of two)", ("poincare",), 1),
    "grid": (int, "sup-norm grid size", ("reconstruct",), 10_000),
    "s_grid": (_complex_list, "comma-separated complex s values, e.g. 2,2+1j", ("zeta",), None),
}
REQUIRED = {
    "spectrum": ("lambda_max",),
    "pointset": ("rho",),
    "eigs": ("k", "omega"),
    "convergence": ("omega", "rho_schedule", "k_schedule"),
    "reconstruct": ("k", "omega"),
    "poincare": ("k", "omega", "rho_schedule"),
    "zeta": ("k", "rho_schedule", "s_grid"),
}


class ConfigError(PolyritzError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class RunConfig:
    experiment: str
    params: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.params[name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def manifold_model(self):
        return get_manifold(self.params["manifold"], self.params.get("dimension"))


def read_config_file(path):
    """Parse ``key = value`` lines into a dict of raw strings."""
    out, errors = {}, []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                errors.append(f"{path}:{lineno}: expected 'key = value'")
                continue
            out[key.strip().replace("-", "_")] = value.strip()
    return out, errors


def _unknown_key(key):
    near = difflib.get_close_matches(key, PARAMETERS, n=1)
    hint = f" (did you mean '{near[0]}'?)" if near else ""
    return f"unknown key '{key}'{hint}"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="polyritz",
        description="Rayleigh-Ritz eigenvalues in polyharmonic spline spaces on model manifolds.",
        epilog="Exit status: 0 ok, 2 config error, 3 numerical failure, 4 I/O error. "
               "NUM_THREADS caps worker threads.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, argument_default=argparse.SUPPRESS,
                           help=f"run the {name} experiment")
        p.add_argument("--config", help="file of key = value lines; flags override it")
        for key, (_, text, used_by, default) in PARAMETERS.items():
            if name in used_by:
                suffix = f" (default {default})" if default is not None else ""
                p.add_argument("--" + key.replace("_", "-"), dest=key, type=str, help=text + suffix)
    return parser


def parse_config(argv=None):
    """Merge config file and flags into a validated RunConfig; raise ConfigError."""
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    experiment = ns.pop("experiment")
    raw, errors = {}, []
    path = ns.pop("config", None)
    if path:
        try:
            file_values, file_errors = read_config_file(path)
        except OSError as exc:
            raise ConfigError([f"cannot read config file: {exc}"]) from None
        errors += file_errors
        for key, value in file_values.items():
            if key not in PARAMETERS:
                errors.append(_unknown_key(key))
            elif experiment not in PARAMETERS[key][2]:
                errors.append(f"key '{key}' does not apply to '{experiment}'")
            else:
                raw[key] = value
    raw.update(ns)
    params = {}
    for key, (conv, _, used_by, default) in PARAMETERS.items():
        if experiment not in used_by:
            continue
        if key in raw:
            try:
                params[key] = conv(raw[key])
            except (TypeError, ValueError) as exc:
                errors.append(f"{key}: cannot parse {raw[key]!r} ({exc})")
        else:
            params[key] = default
    for key in REQUIRED[experiment]:
        if params.get(key) is None and not any(key in e for e in errors):
            if key == "rho" and params.get("nodes"):
                continue
            errors.append(f"missing required key '{key}'")
    if experiment in ("eigs", "reconstruct") and params.get("rho") is None and not params.get("nodes"):
        errors.append("one of 'rho' or 'nodes' is required")
    errors += _validate(experiment, params)
    if errors:
        raise ConfigError(errors)
    return RunConfig(experiment, params)


def _validate(experiment, p):
    errors = []
    try:
        manifold = get_manifold(p.get("manifold") or "circle", p.get("dimension"))
    except (ParameterError, TypeError, ValueError) as exc:
        return [f"manifold: {exc}"]
    d = manifold.dimension
    k = p.get("k")
    if k is not None and not k > d / 2:
        errors.append(f"k = {k} violates k > d/2 = {d / 2:g}")
    for kk in p.get("k_schedule") or []:
        if not kk > d / 2:
            errors.append(f"k_schedule entry {kk} violates k > d/2 = {d / 2:g}")
    limit = manifold.injectivity_radius / 6
    for r in ([p["rho"]] if p.get("rho") is not None else []) + list(p.get("rho_schedule") or []):
        if not 0 < r < limit:
            errors.append(f"rho = {r} outside (0, r/6) = (0, {limit:.6g})")
    for key in ("omega", "lambda_max", "tail_tol"):
        if p.get(key) is not None and not p[key] > 0:
            errors.append(f"{key} must be positive")
    if p.get("digits") is not None and not 1 <= p["digits"] <= 17:
        errors.append("digits must lie in 1..17")
    if p.get("dps") is not None and p["dps"] < 16:
        errors.append("dps must be at least 16")
    if p.get("probes") is not None and p["probes"] < 1000:
        errors.append("probes must be at least 1000")
    m = p.get("m")
    if m is not None and (m < 1 or m & (m - 1)):
        errors.append(f"m = {m} must be a power of two")
    for s in p.get("s_grid") or []:
        if not s.real >= d / 2 + 0.1:
            errors.append(f"s = {s} needs Re s >= d/2 + 0.1 = {d / 2 + 0.1:g}")
    if p.get("rho_schedule") and len(p["rho_schedule"]) < 3 and experiment == "poincare":
        errors.append("poincare needs at least 3 rho values for a fit")
    return errors


# -- experiments ---------------------------------------------------------------------

@dataclass
class Result:
    header: list
    rows: list
    extra: dict = field(default_factory=dict)
    csv_text: str | None = None
    summary: list = field(default_factory=list)


def _node_set(cfg, manifold):
    from .pointsets import from_csv, generate
    if cfg.params.get("nodes"):
        with open(cfg.nodes, encoding="utf-8") as fh:
            aset = from_csv(fh.read())
        if aset.manifold.label != manifold.label:
            raise ConfigError([f"node file is for {aset.manifold.label}, not {manifold.label}"])
        return aset
    return generate(manifold, cfg.rho, cfg.seed)


def _spectrum(cfg, manifold):
    levels = manifold.enumerate_spectrum(cfg.lambda_max)
    return Result(["lambda", "multiplicity"], [[lv.eigenvalue, lv.multiplicity] for lv in levels])


def _pointset(cfg, manifold):
    from .pointsets import generate, to_csv, validate
    aset = generate(manifold, cfg.rho, cfg.seed, cfg.probes)
    report = validate(aset, cfg.probes)
    rows = [[float(v) for v in row] for row in aset.nodes]
    extra = {"rho": aset.rho, "N": len(aset), "metrics": report.metrics.__dict__,
             "passed": report.passed}
    return Result([], rows, extra, to_csv(aset, cfg.digits), list(report.lines()))


def _eigs(cfg, manifold):
    from .ritz import ritz_eigenvalues
    from .splines import build_space
    aset = _node_set(cfg, manifold)
    res = ritz_eigenvalues(build_space(aset, cfg.k, cfg.tail_tol, dps=cfg.dps))
    rows = [[j, float(lam), float(val), float(gap)]
            for j, (lam, val, gap) in enumerate(zip(res.exact_values, res.ritz_values, res.gaps))
            if lam <= cfg.omega + 1e-9]
    extra = {"rho": aset.rho, "N": len(aset), "k": cfg.k, "upper_bound_ok": res.upper_bound_ok,
             "diagnostics": res.diagnostics}
    return Result(["j", "lambda_exact", "lambda_ritz", "gap"], rows, extra)


def _convergence(cfg, manifold):
    from .ritz import convergence_study
    rep = convergence_study(manifold, cfg.omega, cfg.rho_schedule, cfg.k_schedule, cfg.seed,
                            cfg.dps, cfg.tail_tol)
    text = rep.to_csv(cfg.digits)
    rows = list(rep.rows())
    summary = [f"rho={c.rho:.6g} N={c.N} k={c.k} {c.status if not c.ok else f'max gap {c.max_gap:.3e}'}"
               for c in rep.cells]
    return Result([], rows, rep.to_dict(), text, summary)


def _reconstruct(cfg, manifold):
    from .ritz import eigenfunction_reconstruction
    from .splines import build_space
    aset = _node_set(cfg, manifold)
    space = build_space(aset, cfg.k, cfg.tail_tol, dps=cfg.dps)
    rep = eigenfunction_reconstruction(space, cfg.omega, cfg.grid)
    rows = [[" ".join(map(str, _flatten(e.descriptor))), e.eigenvalue, e.l2_error, e.sup_error]
            for e in rep.entries]
    extra = {"projected_rank": rep.projected_rank, "band_dimension": rep.band_dimension,
             "grid_points": rep.grid_points, "N": len(aset), "rho": aset.rho}
    return Result(["descriptor", "eigenvalue", "l2_error", "sup_error"], rows, extra)


def _flatten(desc):
    for part in desc:
        if isinstance(part, tuple):
            yield from part
        else:
            yield part


def _poincare(cfg, manifold):
    from .diagnostics import poincare_scaling
    from .splines import SpectralVector
    basis = manifold.basis(max(cfg.omega, 1.0))
    g = SpectralVector.random(basis, cfg.omega, np.random.default_rng(cfg.seed))
    fit = poincare_scaling(manifold, cfg.rho_schedule, cfg.k, g, cfg.m, cfg.seed, cfg.dps)
    rows = [[x, n, y] for (x, y), n in zip(fit.samples, fit.extra["N"])]
    extra = {"exponent": fit.exponent, "constant": fit.constant, "residual": fit.residual,
             "target_exponent": fit.extra["target_exponent"]}
    summary = [f"fitted exponent {fit.exponent:.4f} (target {fit.extra['target_exponent']}), "
               f"residual {fit.residual:.3e}"]
    return Result(["rho", "N", "ratio"], rows, extra, summary=summary)


def _zeta(cfg, manifold):
    from .zeta import zeta_convergence_sweep
    sweep = zeta_convergence_sweep(manifold, cfg.k, cfg.rho_schedule, cfg.s_grid, cfg.seed,
                                   cfg.dps, cfg.tail_tol)
    extra = {"sup_errors": sweep.sup_errors, "rhos": sweep.rhos, "N": sweep.sizes,
             "non_increasing": sweep.non_increasing, "dominated": sweep.dominated,
             "failures": sweep.failures}
    summary = [f"rho={r:.6g} N={n} sup error {e:.6e}"
               for r, n, e in zip(sweep.rhos, sweep.sizes, sweep.sup_errors)]
    return Result([], sweep.rows, extra, sweep.to_csv(cfg.digits), summary)


RUNNERS = {"spectrum": _spectrum, "pointset": _pointset, "eigs": _eigs,
           "convergence": _convergence, "reconstruct": _reconstruct, "poincare": _poincare,
           "zeta": _zeta}


def _cell(v, digits):
    if isinstance(v, (float, np.floating)):
        return format(float(v), f".{digits}g")
    if isinstance(v, complex):
        return f"{v.real:.{digits}g}{v.imag:+.{digits}g}j"
    return str(v)


def render(cfg, result):
    if cfg.format == "json":
        payload = {"experiment": cfg.experiment, "params": _jsonable(cfg.params),
                   "header": result.header, "rows": _jsonable(result.rows),
                   "extra": _jsonable(result.extra)}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if result.csv_text is not None:
        return result.csv_text
    buf = io.StringIO()
    buf.write(",".join(result.header) + "\n")
    for row in result.rows:
        buf.write(",".join(_cell(v, cfg.digits) for v in row) + "\n")
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if obj is None or isinstance(obj, (str, int, float, bool)):
        return obj
    return str(obj)


def write_atomic(path, text):
    """Write via a temporary file in the target directory and rename into place."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".polyritz-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(cfg, stdout=None):
    stdout = stdout or sys.stdout
    manifold = cfg.manifold_model
    result = RUNNERS[cfg.experiment](cfg, manifold)
    text = render(cfg, result)
    if cfg.output:
        write_atomic(cfg.output, text)
        lines = result.summary or [", ".join(_cell(v, 6) for v in row) for row in result.rows]
        for line in lines:
            print(line, file=stdout)
    else:
        stdout.write(text)
    return 0


def _error_record(kind, message, status, errors=None):
    record = {"status": status, "kind": kind, "message": message}
    if errors:
        record["errors"] = errors
    print(json.dumps(record, default=str), file=sys.stderr)
    return status


def main(argv=None):
    try:
        cfg = parse_config(argv)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return _error_record("config", str(exc), EXIT_CONFIG, exc.errors)
    try:
        return run(cfg)
    except ConfigError as exc:
        return _error_record("config", str(exc), EXIT_CONFIG, exc.errors)
    except ParameterError as exc:
        return _error_record("config", str(exc), EXIT_CONFIG)
    except (ConditioningError, NumericalError) as exc:
        diag = {k: v for k, v in vars(exc).items() if not k.startswith("_")}
        print(f"numerical failure: {exc}", file=sys.stderr)
        return _error_record("numerical", str(exc), EXIT_NUMERICAL, [diag] if diag else None)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return _error_record("io", str(exc), EXIT_IO)
    except PolyritzError as exc:
        return _error_record("numerical", str(exc), EXIT_NUMERICAL)


if __name__ == "__main__":
    sys.exit(main())
