"""
Test the experiment runners end to end on short horizons.
"""
import pytest

from palmbar.core.errors import ConfigError, NotApplicable
from palmbar.schemas.config import (
    BarCheckExperiment,
    ConstantSpec,
    ExponentialSpec,
    LinearResidualSpec,
    PalmExperiment,
    load_config,
    parse_config,
)
from palmbar.services.experiments import (
    bar_test_functions,
    build_test_function,
    oracle_marginals,
    palm_target,
    run_experiment,
)

MM1 = {
    "kind": "network",
    "d": 1,
    "arrivals": {"1": {"family": "exponential", "rate": 0.5}},
    "services": [{"family": "exponential", "rate": 1.0}],
}
MM1_FINITE = {
    "kind": "finite_queue",
    "arrival": {"family": "exponential", "rate": 0.8},
    "service": {"family": "exponential", "rate": 1.0},
    "ell0": 2,
}


def document(model, experiment, events=20000, **extra):
    return parse_config(
        {"model": model, "horizon": {"events": events}, "seed": 17, "experiment": experiment, **extra}
    )


def test_traffic(config_dir):
    result = run_experiment(load_config(config_dir / "tandem_traffic.json"))
    assert result.lines[:2] == ["alpha = (1, 1)", "rho = (0.5, 0.8)"]
    assert result.passed is None
    assert result.exit_code == 0
    (table,) = result.tables
    assert table.rows[1] == pytest.approx([2, 0.0, 1.25, 1.0, 0.8])


def test_simulate_merges_replications():
    result = run_experiment(document(MM1, {"kind": "simulate"}, replications=2))
    assert result.summary["events"] == 2 * 16000
    assert set(result.summary["intensities"]) == {"1", "2", "N0", "Nall"}
    assert [table.name for table in result.tables] == ["intensities", "queues"]


def test_process_pool_matches_serial():
    config = document(MM1, {"kind": "simulate"}, events=5000, replications=3)
    serial = run_experiment(config, threads=1)
    pooled = run_experiment(config, threads=2)
    assert pooled.summary == serial.summary
    assert pooled.tables == serial.tables


def test_palm_checks():
    experiment = {"kind": "palm", "functional": "pre_queue_indicator", "k": 0, "ks_samples": 2000}
    result = run_experiment(document(MM1, experiment))
    assert set(result.summary["checks"]) == {"pasta", "service_ks"}
    assert [table.name for table in result.tables] == ["estimates", "pasta"]
    assert 0.0 < result.summary["palm_expectation"]["value"] < 1.0


def test_palm_skips_pasta_verdict_without_poisson_input():
    model = {**MM1, "arrivals": {"1": {"family": "erlang", "k": 2, "rate": 1.0}}}
    result = run_experiment(document(model, {"kind": "palm", "ks_samples": 500}, events=5000))
    assert "pasta" not in result.summary["checks"]
    assert "pasta_distance" in result.summary


def test_bar_check_finite_queue():
    experiment = {
        "kind": "bar-check",
        "test_functions": [{"kind": "constant"}, {"kind": "residual_exponential", "clock": 2}],
        "theta_grid": [0.5],
        "r": 0.5,
    }
    result = run_experiment(document(MM1_FINITE, experiment))
    checks = result.summary["checks"]
    assert checks["constant(1):residual"]
    assert checks["constant(1):telescoping"]
    assert "rate_conservation" in checks
    assert not any(name.endswith("jump_nulling") for name in checks)
    terms = {row[0] for row in result.tables[0].rows}
    assert terms == {"drift", "jump", "residual", "rate_left", "rate_right"}


def test_bar_check_writes_event_logs(tmp_path, config_dir):
    config = load_config(config_dir / "dd1_ties.json").with_overrides(events=500, directory=str(tmp_path))
    result = run_experiment(config)
    assert (tmp_path / "events_rep0.csv").exists()
    assert result.summary["checks"]["constant(1):telescoping"]


def test_oracle_compare_verdict():
    strict = document(MM1_FINITE, {"kind": "oracle-compare", "tolerance": 1e-9})
    result = run_experiment(strict)
    assert result.passed is False
    assert result.exit_code == 2
    assert len(result.summary["total_variation"]) == 1


def test_oracle_needs_closed_form():
    config = document(
        {**MM1_FINITE, "service": {"family": "deterministic", "value": 1.0}}, {"kind": "oracle-compare"}
    )
    with pytest.raises(NotApplicable):
        oracle_marginals(config.model)


def test_palm_target_checks_ranges(mm1):
    with pytest.raises(ConfigError):
        palm_target(PalmExperiment(station=2), mm1.d)
    with pytest.raises(ConfigError):
        palm_target(PalmExperiment(which=3), mm1.d)
    assert palm_target(PalmExperiment(which="N0", functional="constant"), mm1.d).which == "N0"


def test_build_test_function(tandem):
    f = build_test_function(ExponentialSpec(theta=-0.5, r=0.5), tandem)
    assert f.theta == (-0.5, -0.5)
    with pytest.raises(ConfigError):
        build_test_function(ExponentialSpec(theta=[-0.5], r=0.5), tandem)
    with pytest.raises(ConfigError):
        build_test_function(LinearResidualSpec(clock=5), tandem)


def test_bar_test_functions_are_unique(tandem):
    spec = BarCheckExperiment(
        test_functions=[ConstantSpec(), ConstantSpec()], theta_grid=[-0.5, [-0.5, -0.5]], r=0.5
    )
    names = [f.name for f in bar_test_functions(spec, tandem)]
    assert len(names) == 2
    assert names[0] == "constant(1)"


def test_sweep_grid_errors_are_config_errors():
    config = parse_config(
        {
            "experiment": {
                "kind": "ht-sweep",
                "arrival": {"family": "exponential", "rate": 1.0},
                "service": {"family": "exponential", "rate": 1.0},
                "b": 1.0,
                "ell0": 2.0,
                "r_grid": [0.1, 0.2],
            }
        }
    )
    with pytest.raises(ConfigError):
        run_experiment(config)


@pytest.mark.slow
@pytest.mark.parametrize(
    "name",
    [
        "tandem_oracle.json",
        "feedback_oracle.json",
        "mm1_finite_oracle.json",
        "mm1_palm.json",
        "mm1_finite_bar.json",
        "erlang_finite_bar.json",
        "tandem_bar.json",
    ],
)
def test_bundled_acceptance(config_dir, name):
    """The bundled long runs meet their verdicts."""
    result = run_experiment(load_config(config_dir / name), threads=2)
    assert result.passed, result.summary
