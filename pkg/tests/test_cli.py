import json
import math
import subprocess
import sys

import pytest

from flagquer import cli
from flagquer.cli import ConfigError, parse_args
from flagquer.quermass import ball_closed_form
from flagquer.sampling import IndexSeq

BALL = '{"type": "ball", "n": 3, "radius": 1.0}'


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_compute():
    cfg = parse_args(["compute", "--quantity", "psi_r", "--body", BALL, "--indices", "1,2", "--samples", "100"])
    assert cfg.indices == IndexSeq(3, (1, 2)) and cfg.body.n == 3 and cfg.samples == 100
    cfg = parse_args(["compute", "--quantity", "phi_omega", "--body", BALL, "--permutation", "2,1,3"])
    assert cfg.permutation.values == (2, 1, 3)


@pytest.mark.parametrize("argv, msg", [
    (["compute", "--quantity", "psi_r", "--body", BALL, "--indices", "2,2"], "strictly increasing"),
    (["compute", "--quantity", "psi_r", "--body", "{oops", "--indices", "1"], "--body"),
    (["compute", "--quantity", "psi_r", "--indices", "1"], "--body is required"),
    (["compute", "--quantity", "psi_r", "--body", '{"type": "blob", "n": 3}', "--indices", "1"], "--body"),
    (["compute", "--quantity", "phi_omega", "--body", BALL, "--permutation", "2,1"], "--permutation"),
    (["compute", "--quantity", "example2_a", "--diag", "1,2"], "--diag"),
    (["verify", "nope"], "unknown check"),
    (["verify", "--samples", "1"], "--samples"),
    (["verify", "--threads", "0"], "--threads"),
    (["compute", "--bogus"], "bogus|required"),
])
def test_config_errors(argv, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_args(argv)


def test_config_error_exit_code(capsys):
    code, out, err = run(capsys, "compute", "--quantity", "psi_r", "--body", BALL, "--indices", "2,2")
    assert code == 2 and out == "" and "indices must be strictly increasing" in err
    code, _, err = run(capsys, "verify", "--unknown-flag")
    assert code == 2


def test_estimation_error_exit_code(capsys):
    code, _, err = run(capsys, "compute", "--quantity", "example2_a", "--diag", "1,2,3", "--samples", "100")
    assert code == 2 and "error" in err


def test_compute_ball_within_closed_form(capsys):
    code, out, _ = run(capsys, "compute", "--quantity", "psi_r", "--body", BALL, "--indices", "1,2",
                       "--samples", "4000", "--format", "json")
    rec = json.loads(out)
    exact = ball_closed_form(IndexSeq(3, (1, 2)))
    assert code == 0 and abs(rec["mean"] - exact) <= 3 * rec["std_error"] + 1e-12
    assert set(cli.RESULT_COLUMNS) <= set(rec)


def test_compute_csv_and_output_file(capsys, tmp_path):
    target = tmp_path / "out.csv"
    code, out, _ = run(capsys, "compute", "--quantity", "phi_r", "--body", '{"type": "cube", "n": 3, "half_width": 1.0}',
                       "--indices", "1", "--samples", "500", "--format", "csv", "--output", str(target))
    assert code == 0 and out == ""
    header, row = target.read_text().splitlines()
    assert header.split(",") == list(cli.RESULT_COLUMNS)


def test_body_from_file(capsys, tmp_path):
    p = tmp_path / "body.json"
    p.write_text('{"type": "ellipsoid", "n": 2, "matrix": [[1, 0], [0, 4]]}')
    code, out, _ = run(capsys, "compute", "--quantity", "psi_full", "--body", str(p), "--samples", "200")
    assert code == 0 and out.startswith("psi_full = ")


def test_function_quantities(capsys):
    g = '{"type": "gaussian", "matrix": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]}'
    code, out, _ = run(capsys, "compute", "--quantity", "dpp_ratio", "--function", g, "--indices", "1,2",
                       "--samples", "256", "--format", "json")
    rec = json.loads(out)
    assert code == 0 and rec["ratio"] == pytest.approx(4 / 9)


def test_list(capsys):
    code, out, _ = run(capsys, "list")
    assert code == 0
    for name in ("example2-deformed-cube", "polytope_h", "phi_omega"):
        assert name in out
    code, out, _ = run(capsys, "list", "--format", "json")
    assert len(json.loads(out)["checks"]) == len(cli.harness.REGISTRY)


def test_verify_deterministic_and_thread_independent(capsys, monkeypatch):
    argv = ["verify", "combinatorial-identities", "santalo-pair", "--samples", "2000", "--seed", "5",
            "--format", "json"]
    code1, a, _ = run(capsys, *argv, "--threads", "1")
    code2, b, _ = run(capsys, *argv, "--threads", "3")
    monkeypatch.setenv("FLAGQUER_THREADS", "2")
    code3, c, _ = run(capsys, *argv)
    assert a == b == c and code1 == code2 == code3 == 0


def test_reproduce_example2(capsys):
    code, out, _ = run(capsys, "reproduce", "example2", "--seed", "7")
    assert code == 0
    assert "example2-deformed-cube" in out and "PASS" in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "flagquer", "list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "checks" in proc.stdout.lower()
