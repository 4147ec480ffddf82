import json

import numpy as np
import pytest

from ntkseries import cli
from ntkseries.spectral import write_matrix


def _run(tmp_path, name, *args):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)])
    return code, out


def test_coeffs_writes_tables_and_config(tmp_path):
    code, out = _run(tmp_path, "c", "coeffs", "--depth", "2", "--truncation", "64")
    assert code == cli.EXIT_OK
    config = json.loads((out / "config.json").read_text())
    assert config["depth"] == 2 and config["truncation"] == 64
    lines = (out / "coefficients.csv").read_text().splitlines()
    assert lines[0] == f"# config={config['digest']} seed=0 experiment=coeffs"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["chi"] == pytest.approx(1.0)
    assert set(summary["layers"]) == {"2", "3"}


def test_truncation_error_summary(tmp_path):
    code, out = _run(tmp_path, "t", "truncation-error", "--depth", "2")
    assert code == cli.EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["T=50,L=2"]["max_abs_error_inner"] <= 1e-10
    assert summary["T=50,L=1"]["max_abs_error"] <= 0.5


def test_outputs_are_byte_identical_across_runs(tmp_path):
    args = ("gram-spectrum", "--n", "40", "--d", "6", "--seed", "3", "--truncation", "200")
    _, a = _run(tmp_path, "a", *args)
    _, b = _run(tmp_path, "b", *args)
    for name in ("spectrum.csv", "summary.json", "config.json"):
        left, right = (a / name).read_bytes(), (b / name).read_bytes()
        if name == "config.json":
            left, right = (json.loads(x) for x in (left, right))
            left.pop("out"), right.pop("out")
        assert left == right


def test_seed_changes_provenance(tmp_path):
    _, a = _run(tmp_path, "a", "gram-spectrum", "--n", "20", "--d", "4", "--truncation", "50")
    _, b = _run(tmp_path, "b", "gram-spectrum", "--n", "20", "--d", "4", "--truncation", "50", "--seed", "1")
    head_a = (a / "spectrum.csv").read_text().splitlines()[0]
    head_b = (b / "spectrum.csv").read_text().splitlines()[0]
    assert head_a != head_b and "seed=1" in head_b


@pytest.mark.parametrize(
    "args",
    [
        ("coeffs", "--depth", "0"),
        ("gram-spectrum", "--dataset", "nonsense"),
        ("gram-spectrum", "--activation", "softsign"),
        ("gram-spectrum", "--sigma-w", "3.0"),
        ("sphere-spectrum", "--depth", "2"),
        ("truncation-error", "--gamma-b", "0.3"),
        ("tail-bounds", "--decay-ratio", "1.5"),
        ("no-such-experiment",),
    ],
)
def test_invalid_configurations_exit_one(tmp_path, args):
    assert _run(tmp_path, "x", *args)[0] == cli.EXIT_INVALID


def test_file_dataset_requires_unit_rows(tmp_path):
    path = tmp_path / "X.txt"
    write_matrix(2 * np.random.default_rng(0).standard_normal((6, 3)), path)
    base = ("gram-spectrum", "--dataset", f"file:{path}", "--truncation", "40")
    assert _run(tmp_path, "bad", *base)[0] == cli.EXIT_INVALID
    code, out = _run(tmp_path, "ok", *base, "--normalize-rows")
    assert code == cli.EXIT_OK
    assert json.loads((out / "summary.json").read_text())["n"] == 6


def test_missing_file_exits_one(tmp_path):
    assert _run(tmp_path, "m", "gram-spectrum", "--dataset", f"file:{tmp_path / 'none.txt'}")[0] == cli.EXIT_INVALID


def test_numerical_failure_exits_two(tmp_path, monkeypatch):
    def boom(cfg):
        raise ArithmeticError("diverged")

    monkeypatch.setitem(cli.RUNNERS, "coeffs", boom)
    assert _run(tmp_path, "n", "coeffs")[0] == cli.EXIT_NUMERIC


def test_sphere_spectrum_reports_zero_frequencies(tmp_path):
    code, out = _run(tmp_path, "s", "sphere-spectrum", "--d", "2", "--frequencies", "10", "--pmax", "2000")
    assert code == cli.EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["zero_frequencies"] == [3, 5, 7, 9]
    assert summary["fit"]["skipped"]


def test_finite_width_and_tail_bounds(tmp_path):
    code, out = _run(tmp_path, "f", "finite-width", "--n", "16", "--d", "4", "--widths", "32", "--seeds", "2")
    assert code == cli.EXIT_OK
    rows = (out / "finite_width.csv").read_text().splitlines()
    assert rows[1].startswith("m,seed") and len(rows) == 4
    code, out = _run(tmp_path, "h", "tail-bounds", "--n", "30", "--d", "6", "--rank", "3")
    assert code == cli.EXIT_OK
    assert json.loads((out / "summary.json").read_text())["all_hold"] is True


def test_digest_ignores_output_directory():
    a = cli.ExperimentConfig("coeffs", out="x")
    b = cli.ExperimentConfig("coeffs", out="y")
    assert a.digest() == b.digest()
    assert a.digest() != cli.ExperimentConfig("coeffs", seed=1).digest()
