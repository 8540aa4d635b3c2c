"""
Experiment orchestration.

Each experiment kind has a runner that turns an ``ExperimentConfig`` into an
``ExperimentResult``: a JSON-ready summary, named tables for CSV output,
printable lines and a verdict. Replications run on streams
``(seed, replication index)``; with more than one worker they run in a
process pool, and their estimates are merged by concatenating batches.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from contextlib import ExitStack
from dataclasses import dataclass
from itertools import repeat
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar, Union

from pydantic import BaseModel, ValidationError
from scipy import stats

from palmbar.core.config import settings
from palmbar.core.errors import ConfigError, InsufficientData, NotApplicable
from palmbar.models.distributions import Exponential
from palmbar.models.laws import DiscreteLaw, total_variation
from palmbar.models.network import FiniteQueueModel, NetworkModel
from palmbar.repositories.base import BaseArtifactRepository
from palmbar.repositories.event_log import EventLogWriter
from palmbar.schemas.config import (
    BarCheckExperiment,
    ConstantSpec,
    ExperimentConfig,
    ExponentialSpec,
    HtSweepExperiment,
    LinearResidualSpec,
    OracleCompareExperiment,
    PalmExperiment,
    ResidualExponentialSpec,
    TestFunctionSpec,
)
from palmbar.schemas.estimate import EstimateWithCI
from palmbar.services.accumulators import Accumulator, ServiceSampleAccumulator
from palmbar.services.bar import (
    BarAccumulator,
    BarReport,
    RateConservationReport,
    TelescopingReport,
    bar_residual,
    merge_bar_reports,
    merge_rate_reports,
    rate_conservation_check,
    telescoping_check,
)
from palmbar.services.engine import SimulationRun, simulate
from palmbar.services.exponents import exponential_test_function
from palmbar.services.heavy_traffic import SWEEP_COLUMNS, ScaledFamily, SweepCriteria, ht_sweep
from palmbar.services.oracles import jackson_product_form, mm1_finite
from palmbar.services.palm import (
    ConstantFunctional,
    DecompositionAccumulator,
    DecompositionReport,
    PalmAccumulator,
    PalmTarget,
    PreQueueIndicator,
    PreQueueLength,
    arrival_weights,
    check_palm_decomposition,
    intensity,
    mean_queue_length,
    palm_expectation,
    time_average_weights,
)
from palmbar.services.stochastics import AUXILIARY, RngStream
from palmbar.services.test_functions import (
    ConstantFunction,
    LinearResidual,
    ResidualExponential,
    TestFunction,
)
from palmbar.services.traffic import check_stability, solve_traffic

logger = logging.getLogger(__name__)

Model = Union[NetworkModel, FiniteQueueModel]
Outcome = TypeVar("Outcome")


class Table(BaseModel):
    """A named result table written as ``<kind>_<name>.csv``."""

    name: str
    columns: List[str]
    rows: List[List[Any]]


class ExperimentResult(BaseModel):
    kind: str
    seed: int
    config_hash: str
    config: Dict[str, Any]
    passed: Optional[bool] = None
    summary: Dict[str, Any] = {}
    tables: List[Table] = []
    lines: List[str] = []

    @property
    def exit_code(self) -> int:
        """0 on success or when there is no verdict, 2 when a verdict failed."""
        return 2 if self.passed is False else 0

    def report(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "passed": self.passed,
            "summary": self.summary,
            "config": self.config,
        }


@dataclass
class RunContext:
    config: ExperimentConfig
    seed: int
    threads: int = 1

    @property
    def model(self) -> Model:
        if self.config.model is None:
            raise ConfigError("the experiment needs a model block", field=("model",))
        return self.config.model

    def result(self, **fields: Any) -> ExperimentResult:
        return ExperimentResult(
            kind=self.config.experiment.kind,
            seed=self.seed,
            config_hash=self.config.config_hash(),
            config=self.config.model_dump(mode="json"),
            **fields,
        )


def provenance(config: ExperimentConfig, seed: int) -> Dict[str, Any]:
    """Header carried by every artifact."""
    return {
        "tool": f"{settings.APP_NAME} {settings.APP_VERSION}",
        "config_hash": config.config_hash(),
        "seed": seed,
    }


def _fmt(values: Sequence[float]) -> str:
    return "(" + ", ".join(f"{x:.6g}" for x in values) + ")"


# Replications


def run_replication(
    config: ExperimentConfig,
    seed: int,
    index: int,
    sinks: Sequence[Accumulator] = (),
) -> SimulationRun:
    """Simulate replication ``index`` on stream ``(seed, index)``, with the event log if requested."""
    model = config.model
    if model is None:
        raise ConfigError("the experiment needs a model block", field=("model",))
    with ExitStack() as stack:
        attached = list(sinks)
        if config.outputs.event_log:
            writer = EventLogWriter(
                BaseArtifactRepository(config.outputs.directory),
                f"events_rep{index}",
                provenance(config, seed),
                full_state=config.outputs.full_state_log,
            )
            attached.append(stack.enter_context(writer))
        return simulate(
            model,
            config.horizon,
            RngStream(seed, index),
            config.warmup,
            attached,
            allow_unstable=config.allow_unstable,
        )


def map_replications(
    worker: Callable[[ExperimentConfig, int, int], Outcome],
    config: ExperimentConfig,
    seed: int,
    threads: int = 1,
) -> List[Outcome]:
    """Outcomes of every replication in index order."""
    count = config.replications
    if threads > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=min(threads, count)) as pool:
            return list(pool.map(worker, repeat(config, count), repeat(seed, count), range(count)))
    return [worker(config, seed, index) for index in range(count)]


def _pool_weights(parts: Sequence[Dict[int, float]]) -> Dict[int, float]:
    pooled: Dict[int, float] = {}
    for weights in parts:
        for n, w in weights.items():
            pooled[n] = pooled.get(n, 0.0) + w
    return pooled


# simulate


class SimulationOutcome(BaseModel):
    events: int
    elapsed: float
    intensities: Dict[str, EstimateWithCI]
    mean_queue: List[EstimateWithCI]


def _simulation_worker(config: ExperimentConfig, seed: int, index: int) -> SimulationOutcome:
    run = run_replication(config, seed, index)
    processes: List[Union[int, str]] = [*range(1, 2 * run.d + 1), "N0", "Nall"]
    return SimulationOutcome(
        events=run.events,
        elapsed=run.elapsed,
        intensities={str(which): intensity(run, which) for which in processes},
        mean_queue=[mean_queue_length(run, station) for station in range(1, run.d + 1)],
    )


def run_simulate(ctx: RunContext) -> ExperimentResult:
    outcomes = map_replications(_simulation_worker, ctx.config, ctx.seed, ctx.threads)
    logger.debug("merging %d simulation replications", len(outcomes))
    rates = {
        key: EstimateWithCI.merge([o.intensities[key] for o in outcomes])
        for key in outcomes[0].intensities
    }
    queues = [
        EstimateWithCI.merge([o.mean_queue[i] for o in outcomes])
        for i in range(len(outcomes[0].mean_queue))
    ]
    events = sum(o.events for o in outcomes)
    elapsed = math.fsum(o.elapsed for o in outcomes)
    return ctx.result(
        summary={
            "events": events,
            "elapsed": elapsed,
            "intensities": {key: est.summary() for key, est in rates.items()},
            "mean_queue": [est.summary() for est in queues],
        },
        tables=[
            Table(
                name="intensities",
                columns=["process", "value", "stderr", "count"],
                rows=[[key, est.value, est.stderr, est.count] for key, est in rates.items()],
            ),
            Table(
                name="queues",
                columns=["station", "mean", "stderr"],
                rows=[[i, est.value, est.stderr] for i, est in enumerate(queues, start=1)],
            ),
        ],
        lines=[
            f"events = {events}, elapsed = {elapsed:.6g}",
            "mean L = " + _fmt([est.value for est in queues]),
        ],
    )


# traffic


def run_traffic(ctx: RunContext) -> ExperimentResult:
    solution = solve_traffic(ctx.model)
    verdict = check_stability(ctx.model)
    rows = [
        [i, solution.lam[i - 1], solution.mu[i - 1], solution.alpha[i - 1], solution.rho[i - 1]]
        for i in range(1, len(solution.alpha) + 1)
    ]
    lines = [
        f"alpha = {_fmt(solution.alpha)}",
        f"rho = {_fmt(solution.rho)}",
        f"spectral radius = {solution.spectral_radius:.6g}",
    ]
    if not verdict.stable:
        lines.append(f"unstable stations: {verdict.unstable}")
    return ctx.result(
        summary={**solution.model_dump(), "stable": verdict.stable, "unstable": verdict.unstable},
        tables=[Table(name="traffic", columns=["station", "lam", "mu", "alpha", "rho"], rows=rows)],
        lines=lines,
    )


# palm


class PalmOutcome(BaseModel):
    intensity: EstimateWithCI
    expectation: EstimateWithCI
    arrival_weights: Dict[int, float]
    time_weights: Dict[int, float]
    service_samples: List[float]


def palm_target(spec: PalmExperiment, d: int) -> PalmTarget:
    """The point process and functional named by a palm experiment block."""
    if spec.station > d:
        raise ConfigError(f"station {spec.station} outside 1..{d}", field=("experiment", "station"))
    if isinstance(spec.which, int) and not 1 <= spec.which <= 2 * d:
        raise ConfigError(f"clock {spec.which} outside 1..{2 * d}", field=("experiment", "which"))
    if spec.functional == "constant":
        return PalmTarget(spec.which, ConstantFunctional(), "constant")
    if spec.functional == "pre_queue_length":
        return PalmTarget(spec.which, PreQueueLength(spec.station), f"L{spec.station}")
    return PalmTarget(
        spec.which, PreQueueIndicator(spec.station, spec.k), f"L{spec.station}=={spec.k}"
    )


def _palm_worker(config: ExperimentConfig, seed: int, index: int) -> PalmOutcome:
    spec = config.experiment
    assert isinstance(spec, PalmExperiment)
    model = config.model
    assert model is not None
    target = palm_target(spec, model.d)
    samples = ServiceSampleAccumulator(model.d, spec.station, limit=spec.ks_samples)
    run = run_replication(config, seed, index, [PalmAccumulator(target), samples])
    return PalmOutcome(
        intensity=intensity(run, target.which),
        expectation=palm_expectation(run, target),
        arrival_weights=arrival_weights(run, spec.station),
        time_weights=time_average_weights(run, spec.station),
        service_samples=samples.samples,
    )


def _poisson_input(model: Model, station: int) -> bool:
    dist = model.as_network().arrival_dist(station - 1)
    return isinstance(dist, Exponential)


def run_palm(ctx: RunContext) -> ExperimentResult:
    spec = ctx.config.experiment
    assert isinstance(spec, PalmExperiment)
    model = ctx.model
    outcomes = map_replications(_palm_worker, ctx.config, ctx.seed, ctx.threads)
    logger.debug("merging %d palm replications", len(outcomes))
    rate = EstimateWithCI.merge([o.intensity for o in outcomes])
    expectation = EstimateWithCI.merge([o.expectation for o in outcomes])
    checks: Dict[str, bool] = {}
    summary: Dict[str, Any] = {
        "which": spec.which,
        "functional": spec.functional,
        "intensity": rate.summary(),
        "palm_expectation": expectation.summary(),
    }
    lines = [
        f"intensity[{spec.which}] = {rate.value:.6g} +- {rate.stderr:.3g}",
        f"palm expectation = {expectation.value:.6g} +- {expectation.stderr:.3g}",
    ]
    tables = [
        Table(
            name="estimates",
            columns=["quantity", "value", "stderr", "count"],
            rows=[
                ["intensity", rate.value, rate.stderr, rate.count],
                ["palm_expectation", expectation.value, expectation.stderr, expectation.count],
            ],
        )
    ]

    arrivals = _pool_weights([o.arrival_weights for o in outcomes])
    if arrivals:
        palm_law = DiscreteLaw.from_weights(arrivals)
        time_law = DiscreteLaw.from_weights(_pool_weights([o.time_weights for o in outcomes]))
        distance = total_variation(palm_law, time_law)
        summary["pasta_distance"] = distance
        lines.append(f"PASTA total variation (station {spec.station}) = {distance:.6g}")
        if _poisson_input(model, spec.station):
            checks["pasta"] = distance <= spec.pasta_tolerance
        states = sorted(set(palm_law.support) | set(time_law.support))
        tables.append(
            Table(
                name="pasta",
                columns=["n", "arrival_palm", "time_average"],
                rows=[[n, palm_law.pmf(n), time_law.pmf(n)] for n in states],
            )
        )

    samples = [x for o in outcomes for x in o.service_samples][: spec.ks_samples]
    if len(samples) >= 2:
        dist = model.as_network().service_dist(spec.station - 1)
        fresh = dist.sample_array(
            RngStream(ctx.seed).child(AUXILIARY, spec.station).generator, len(samples)
        )
        test = stats.ks_2samp(samples, fresh)
        summary["service_ks"] = {"statistic": float(test.statistic), "pvalue": float(test.pvalue)}
        lines.append(f"service-mark KS p-value = {float(test.pvalue):.4g} ({len(samples)} samples)")
        checks["service_ks"] = float(test.pvalue) >= spec.ks_level

    summary["checks"] = checks
    return ctx.result(
        passed=all(checks.values()) if checks else None,
        summary=summary,
        tables=tables,
        lines=lines,
    )


# bar-check


def build_test_function(spec: TestFunctionSpec, model: Model) -> TestFunction:
    """Instantiate a test-function block against ``model``."""
    d = model.d
    if isinstance(spec, ConstantSpec):
        return ConstantFunction(spec.c)
    if isinstance(spec, (ResidualExponentialSpec, LinearResidualSpec)) and spec.clock > 2 * d:
        raise ConfigError(f"clock {spec.clock} outside 1..{2 * d}", field=("experiment", "clock"))
    if isinstance(spec, ResidualExponentialSpec):
        return ResidualExponential(spec.clock, spec.a)
    if isinstance(spec, LinearResidualSpec):
        return LinearResidual(spec.clock)
    assert isinstance(spec, ExponentialSpec)
    theta = [float(spec.theta)] * d if isinstance(spec.theta, (int, float)) else spec.theta
    if len(theta) != d:
        raise ConfigError(f"theta needs {d} entries", field=("experiment", "theta"))
    return exponential_test_function(model, theta, spec.r, spec.cutoff)


def bar_test_functions(spec: BarCheckExperiment, model: Model) -> List[TestFunction]:
    """Listed test functions plus one exponential function per theta grid point, by unique name."""
    specs: List[TestFunctionSpec] = list(spec.test_functions)
    specs.extend(ExponentialSpec(theta=theta, r=spec.r) for theta in spec.theta_grid)
    functions: Dict[str, TestFunction] = {}
    for item in specs:
        f = build_test_function(item, model)
        functions.setdefault(f.name, f)
    return list(functions.values())


class BarOutcome(BaseModel):
    reports: List[BarReport]
    telescoping: List[TelescopingReport]
    decomposition: List[DecompositionReport] = []
    rate: Optional[RateConservationReport] = None


def _bar_worker(config: ExperimentConfig, seed: int, index: int) -> BarOutcome:
    spec = config.experiment
    assert isinstance(spec, BarCheckExperiment)
    model = config.model
    assert model is not None
    functions = bar_test_functions(spec, model)
    sinks: List[Accumulator] = [BarAccumulator(f, model.d) for f in functions]
    if spec.decomposition:
        sinks.extend(DecompositionAccumulator(f, model.d) for f in functions)
    run = run_replication(config, seed, index, sinks)
    rate = None
    if spec.rate_conservation and isinstance(model, FiniteQueueModel):
        rate = rate_conservation_check(run)
    return BarOutcome(
        reports=[bar_residual(run, f) for f in functions],
        telescoping=[telescoping_check(run, f) for f in functions],
        decomposition=[check_palm_decomposition(run, f) for f in functions] if spec.decomposition else [],
        rate=rate,
    )


def run_bar_check(ctx: RunContext) -> ExperimentResult:
    spec = ctx.config.experiment
    assert isinstance(spec, BarCheckExperiment)
    model = ctx.model
    outcomes = map_replications(_bar_worker, ctx.config, ctx.seed, ctx.threads)
    logger.debug("merging %d bar-check replications", len(outcomes))
    nulling = isinstance(model, NetworkModel)

    checks: Dict[str, bool] = {}
    functions: Dict[str, Any] = {}
    rows: List[List[Any]] = []
    lines: List[str] = []
    for k, first in enumerate(outcomes[0].reports):
        name = first.test_function
        merged = merge_bar_reports([o.reports[k] for o in outcomes])
        telescoping = [o.telescoping[k] for o in outcomes]
        entry = merged.summary()
        entry["telescoping_gap"] = max(t.relative_gap for t in telescoping)
        checks[f"{name}:residual"] = merged.verdict
        checks[f"{name}:telescoping"] = all(t.passed for t in telescoping)
        if name.startswith("exponential") and nulling:
            checks[f"{name}:jump_nulling"] = all(merged.jump_nulling.values())
        if spec.decomposition:
            parts = [o.decomposition[k] for o in outcomes]
            entry["decomposition_gap"] = max(p.relative_gap for p in parts)
            checks[f"{name}:decomposition"] = all(p.passed for p in parts)
        functions[name] = entry
        rows.append(["drift", name, 0, *_cells(merged.drift_term)])
        rows.extend(["jump", name, j, *_cells(term)] for j, term in merged.jump_terms.items())
        rows.append(["residual", name, 0, *_cells(merged.residual)])
        verdict = "ok" if merged.verdict else "FAIL"
        lines.append(
            f"{name}: residual {merged.residual.value:.4g} +- {merged.residual.stderr:.3g} [{verdict}]"
        )

    summary: Dict[str, Any] = {"test_functions": functions}
    rates = [o.rate for o in outcomes if o.rate is not None]
    if rates:
        assert isinstance(model, FiniteQueueModel)
        rate = merge_rate_reports(rates, model)
        summary["rate_conservation"] = rate.summary()
        checks["rate_conservation"] = rate.passed
        rows.append(["rate_left", "rate_conservation", 0, rate.left, 0.0, 0])
        rows.append(["rate_right", "rate_conservation", 0, *_cells(rate.right)])
        lines.append(
            f"rate conservation: 1 - rho = {rate.left:.6g}, "
            f"P(L=0) - rho P1(full) = {rate.right.value:.6g} +- {rate.right.stderr:.3g}"
        )
    summary["checks"] = checks
    return ctx.result(
        passed=all(checks.values()),
        summary=summary,
        tables=[
            Table(
                name="terms",
                columns=["term", "test_function", "clock", "value", "stderr", "count"],
                rows=rows,
            )
        ],
        lines=lines,
    )


def _cells(estimate: EstimateWithCI) -> List[Any]:
    return [estimate.value, estimate.stderr, estimate.count]


# ht-sweep


def run_ht_sweep(ctx: RunContext) -> ExperimentResult:
    spec = ctx.config.experiment
    assert isinstance(spec, HtSweepExperiment)
    try:
        family = ScaledFamily(
            arrival=spec.arrival,
            service=spec.service,
            b=spec.b,
            ell0=spec.ell0,
            r_grid=spec.r_grid,
        )
    except ValidationError as exc:
        raise ConfigError(exc.errors()[0]["msg"], field=("experiment", "r_grid")) from exc
    events = spec.events_per_r or ctx.config.horizon.events
    if not events:
        raise ConfigError("set events_per_r or horizon.events", field=("experiment", "events_per_r"))
    if ctx.config.replications > 1:
        logger.warning("ht-sweep runs one path per r; ignoring replications=%d", ctx.config.replications)
    criteria = SweepCriteria(
        p0_tolerance=spec.p0_tolerance,
        full_tolerance=spec.full_tolerance,
        ks_threshold=spec.ks_threshold,
    )
    rng = RngStream(ctx.seed)
    with ExitStack() as stack:
        executor = None
        if ctx.threads > 1:
            executor = stack.enter_context(
                ProcessPoolExecutor(max_workers=min(ctx.threads, len(family.r_grid)))
            )
        report = ht_sweep(
            family, events, rng, ctx.config.warmup, criteria, spec.mgf_thetas, executor
        )
    mgf_rows = [
        [row.r, theta, simulated, limit]
        for row in report.rows
        for theta, (simulated, limit) in row.mgf.items()
    ]
    lines = [f"beta = {report.beta:.6g}, c_lower = {report.c_lower:.6g}, c_upper = {report.c_upper:.6g}"]
    lines.extend(
        f"r = {row.r:g}: P(L=0)/r ratio {row.p0_ratio:.4f}, full ratio {row.full_ratio:.4f}, KS {row.ks:.4g}"
        for row in report.rows
    )
    lines.extend(f"{name}: {'ok' if ok else 'FAIL'}" for name, ok in report.criteria.items())
    return ctx.result(
        passed=report.passed,
        summary=report.summary(),
        tables=[
            Table(name="sweep", columns=SWEEP_COLUMNS, rows=[row.csv_row() for row in report.rows]),
            Table(name="mgf", columns=["r", "theta", "simulated", "limit"], rows=mgf_rows),
        ],
        lines=lines,
    )


# oracle-compare


def oracle_marginals(model: Model) -> List[DiscreteLaw]:
    """Closed-form stationary marginals, when the model has them."""
    if isinstance(model, FiniteQueueModel):
        if not (isinstance(model.arrival, Exponential) and isinstance(model.service, Exponential)):
            raise NotApplicable("the finite-buffer oracle needs exponential laws")
        return [mm1_finite(model.rho, model.ell0)]
    return jackson_product_form(model)


def _oracle_worker(config: ExperimentConfig, seed: int, index: int) -> List[Dict[int, float]]:
    run = run_replication(config, seed, index)
    return [time_average_weights(run, station) for station in range(1, run.d + 1)]


def run_oracle_compare(ctx: RunContext) -> ExperimentResult:
    spec = ctx.config.experiment
    assert isinstance(spec, OracleCompareExperiment)
    oracles = oracle_marginals(ctx.model)
    outcomes = map_replications(_oracle_worker, ctx.config, ctx.seed, ctx.threads)
    distances: List[float] = []
    rows: List[List[Any]] = []
    for i, oracle in enumerate(oracles):
        pooled = _pool_weights([o[i] for o in outcomes])
        if not pooled:
            raise InsufficientData(f"station {i + 1} has no measured time")
        simulated = DiscreteLaw.from_weights(pooled)
        distances.append(total_variation(simulated, oracle))
        for n in sorted(set(simulated.support) | set(oracle.support)):
            rows.append([i + 1, n, simulated.pmf(n), oracle.pmf(n)])
    passed = all(tv < spec.tolerance for tv in distances)
    return ctx.result(
        passed=passed,
        summary={"total_variation": distances, "tolerance": spec.tolerance},
        tables=[Table(name="laws", columns=["station", "n", "simulated", "oracle"], rows=rows)],
        lines=[
            f"station {i}: total variation {tv:.6g}" for i, tv in enumerate(distances, start=1)
        ],
    )


RUNNERS: Dict[str, Callable[[RunContext], ExperimentResult]] = {
    "simulate": run_simulate,
    "traffic": run_traffic,
    "palm": run_palm,
    "bar-check": run_bar_check,
    "ht-sweep": run_ht_sweep,
    "oracle-compare": run_oracle_compare,
}


def run_experiment(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    """Run the experiment block of ``config``."""
    seed = settings.resolve_seed(config.seed)
    kind = config.experiment.kind
    logger.info("experiment %s seed=%d replications=%d", kind, seed, config.replications)
    result = RUNNERS[kind](RunContext(config=config, seed=seed, threads=max(1, threads)))
    logger.info("experiment %s finished, verdict %s", kind, result.passed)
    return result
