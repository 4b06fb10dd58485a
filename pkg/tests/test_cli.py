import csv
import io
import json
import os
import subprocess
import sys

import pytest

from polyritz.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, PARAMETERS, build_parser, main, parse_config

EIGS = ["eigs", "--manifold", "circle", "--rho", "0.3926990817", "--k", "2", "--omega", "10"]


def run_cli(capsys, argv):
    status = main(argv)
    out = capsys.readouterr()
    return status, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_spectrum_sphere(capsys):
    status, out, _ = run_cli(capsys, ["spectrum", "--manifold", "sphere2", "--lambda-max", "7"])
    assert status == 0
    got = [(float(r["lambda"]), int(r["multiplicity"])) for r in rows(out)]
    assert got == [(0, 1), (2, 3), (6, 5)]


def test_eigs_example_extended_precision(capsys):
    status, out, _ = run_cli(capsys, EIGS + ["--dps", "40"])
    assert status == 0
    table = rows(out)
    assert list(table[0]) == ["j", "lambda_exact", "lambda_ritz", "gap"]
    assert [float(r["lambda_exact"]) for r in table] == [0, 1, 1, 4, 4, 9, 9]
    assert all(float(r["gap"]) >= 0 for r in table)


def test_eigs_example_float(capsys):
    # In float64 the low gaps sit at rounding level, so only the slack-based
    # upper-bound property is asserted.
    status, out, _ = run_cli(capsys, EIGS)
    assert status == 0
    for r in rows(out):
        assert float(r["gap"]) >= -1e-8 * max(1.0, float(r["lambda_exact"]))


def test_k_zero_is_config_error(capsys):
    status, _, err = run_cli(capsys, EIGS[:5] + ["--k", "0", "--omega", "10"])
    assert status == EXIT_CONFIG == 2
    assert "k > d/2" in err
    record = json.loads(err.strip().splitlines()[-1])
    assert record["status"] == 2 and record["kind"] == "config"


def test_all_errors_reported_together(capsys):
    status, _, err = run_cli(capsys, ["eigs", "--manifold", "circle", "--k", "0"])
    assert status == 2
    record = json.loads(err.strip().splitlines()[-1])
    assert len(record["errors"]) >= 2


def test_unknown_key_suggestion(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("rhoo = 0.3\nk = 2\nomega = 10\n")
    status, _, err = run_cli(capsys, ["eigs", "--config", str(cfg)])
    assert status == 2
    assert "rhoo" in err and "did you mean 'rho'" in err


def test_flag_overrides_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment line\nmanifold = circle\nrho = 0.5  # trailing comment\nk = 2\nomega = 10\n")
    conf = parse_config(["eigs", "--config", str(cfg), "--rho", "0.3"])
    assert conf.rho == 0.3 and conf.k == 2
    conf = parse_config(["eigs", "--config", str(cfg)])
    assert conf.rho == 0.5


def test_flags_only_config():
    conf = parse_config(EIGS)
    assert conf.experiment == "eigs" and conf.k == 2 and conf.digits == 17


def test_help_documents_every_key(capsys):
    parser = build_parser()
    for exp in ("eigs", "convergence", "zeta"):
        with pytest.raises(SystemExit):
            parser.parse_args([exp, "--help"])
        text = capsys.readouterr().out
        for key, (_, _, experiments, _) in PARAMETERS.items():
            if exp in experiments:
                assert "--" + key.replace("_", "-") in text


def test_numerical_failure_status(capsys):
    status, _, err = run_cli(capsys, ["eigs", "--rho", "0.2", "--k", "9", "--omega", "10"])
    assert status == EXIT_NUMERICAL == 3
    record = json.loads(err.strip().splitlines()[-1])
    assert record["kind"] == "numerical"


def test_io_failure_status(capsys, tmp_path):
    out = tmp_path / "missing" / "out.csv"
    status, _, _ = run_cli(capsys, ["spectrum", "--lambda-max", "5", "--output", str(out)])
    assert status == EXIT_IO == 4
    assert not out.exists()


def test_output_atomic_and_reproducible(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        status, out, _ = run_cli(capsys, ["pointset", "--manifold", "sphere2", "--rho", "0.5",
                                          "--seed", "3", "--output", str(path)])
        assert status == 0 and "packing" in out
    assert a.read_bytes() == b.read_bytes()
    assert sorted(os.listdir(tmp_path)) == ["a.csv", "b.csv"]


def test_pointset_feeds_eigs(tmp_path, capsys):
    nodes = tmp_path / "nodes.csv"
    assert main(["pointset", "--rho", "0.4", "--output", str(nodes)]) == 0
    capsys.readouterr()
    status, out, _ = run_cli(capsys, ["eigs", "--nodes", str(nodes), "--k", "2", "--omega", "4"])
    assert status == 0 and len(rows(out)) == 5


def test_json_output(capsys):
    status, out, _ = run_cli(capsys, EIGS + ["--format", "json"])
    data = json.loads(out)
    assert data["experiment"] == "eigs"
    assert data["header"] == ["j", "lambda_exact", "lambda_ritz", "gap"]
    assert data["extra"]["diagnostics"]["k"] == 2


def test_convergence_reconstruct_poincare_zeta(capsys):
    status, out, _ = run_cli(capsys, ["convergence", "--omega", "4", "--rho-schedule", "0.5,0.4",
                                      "--k-schedule", "2,3"])
    assert status == 0 and out.startswith("manifold,rho,N,k")
    status, out, _ = run_cli(capsys, ["reconstruct", "--rho", "0.4", "--k", "2", "--omega", "4"])
    assert status == 0 and len(rows(out)) == 5
    status, out, _ = run_cli(capsys, ["poincare", "--k", "2", "--omega", "9",
                                      "--rho-schedule", "0.5,0.3,0.2"])
    assert status == 0 and len(rows(out)) == 3
    status, out, _ = run_cli(capsys, ["zeta", "--k", "2", "--rho-schedule", "0.4,0.2",
                                      "--s-grid", "0.6,2,2+1j"])
    assert status == 0 and len(rows(out)) == 6


def test_zeta_domain_on_torus(capsys):
    status, _, _ = run_cli(capsys, ["zeta", "--manifold", "flat_torus", "--dimension", "2", "--k", "2",
                                    "--rho-schedule", "0.5", "--s-grid", "0.6,2"])
    assert status == 2


def test_entry_point_subprocess():
    proc = subprocess.run([sys.executable, "-m", "polyritz.cli", "spectrum", "--lambda-max", "4"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == "lambda,multiplicity"
