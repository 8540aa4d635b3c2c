"""
Test the command-line surface: exit codes, output and reproducible artifacts.
"""
import json

from palmbar.cli.main import EXIT_ERROR, EXIT_OK, EXIT_VERDICT, main

FINITE = {
    "model": {
        "kind": "finite_queue",
        "arrival": {"family": "exponential", "rate": 0.8},
        "service": {"family": "exponential", "rate": 1.0},
        "ell0": 2,
    },
    "horizon": {"events": 5000},
    "seed": 4,
}


def _artifacts(directory):
    return {path.name: path.read_bytes() for path in sorted(directory.iterdir())}


def test_traffic_run(config_dir, tmp_path, capsys):
    code = main(["run", str(config_dir / "tandem_traffic.json"), "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert "alpha = (1, 1)" in out
    assert "rho = (0.5, 0.8)" in out
    assert "verdict" not in out
    assert set(_artifacts(tmp_path)) == {"traffic_traffic.csv", "traffic.json"}
    provenance = json.loads((tmp_path / "traffic.json").read_text())["provenance"]
    assert provenance["experiment"] == "traffic"


def test_reruns_are_byte_identical(write_config, tmp_path):
    path = write_config({**FINITE, "experiment": {"kind": "simulate"}})
    out = tmp_path / "out"
    assert main(["run", str(path), "--out", str(out), "--reps", "2"]) == EXIT_OK
    first = _artifacts(out)
    assert main(["run", str(path), "--out", str(out), "--reps", "2", "--threads", "2"]) == EXIT_OK
    assert _artifacts(out) == first
    assert b"# seed: 4\n" in first["simulate_intensities.csv"]


def test_seed_flag_changes_results(write_config, tmp_path):
    path = write_config({**FINITE, "experiment": {"kind": "simulate"}})
    out = tmp_path / "out"
    main(["run", str(path), "--out", str(out), "--format", "csv"])
    first = _artifacts(out)
    main(["run", str(path), "--out", str(out), "--format", "csv", "--seed", "5"])
    assert set(first) == {"simulate_intensities.csv", "simulate_queues.csv"}
    assert _artifacts(out) != first


def test_failed_verdict_exit_code(write_config, tmp_path, capsys):
    path = write_config({**FINITE, "experiment": {"kind": "oracle-compare", "tolerance": 1e-9}})
    code = main(["run", str(path), "--out", str(tmp_path / "out")])
    assert code == EXIT_VERDICT
    assert "verdict: FAIL" in capsys.readouterr().out


def test_invalid_document(write_config, capsys):
    path = write_config({**FINITE, "experiment": {"kind": "simulate"}, "sede": 3})
    assert main(["run", str(path)]) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err


def test_usage_errors():
    assert main([]) == EXIT_ERROR
    assert main(["run"]) == EXIT_ERROR
    assert main(["run", "x.json", "--threads", "many"]) == EXIT_ERROR
    assert main(["--version"]) == EXIT_OK


def test_validate(config_dir, capsys):
    assert main(["validate", str(config_dir / "tandem_traffic.json")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "experiment: traffic" in out
    assert "stable = True" in out


def test_validate_overloaded_finite_queue(write_config, capsys):
    """A finite buffer is recurrent even with rho above 1."""
    document = {
        **FINITE,
        "model": {**FINITE["model"], "arrival": {"family": "exponential", "rate": 1.5}},
        "experiment": {"kind": "simulate"},
    }
    assert main(["validate", str(write_config(document))]) == EXIT_OK
    out = capsys.readouterr().out
    assert "stable = True" in out
    assert "rho = (1.5)" in out
