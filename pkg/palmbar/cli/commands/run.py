"""
``run CONFIG``: execute one experiment document and write its artifacts.
"""
import argparse
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence

from palmbar.core.config import settings
from palmbar.repositories.artifacts import ArtifactRepository
from palmbar.schemas.config import load_config
from palmbar.services.experiments import ExperimentResult, run_experiment

logger = logging.getLogger(__name__)


def register(subparsers: "argparse._SubParsersAction[argparse.ArgumentParser]", parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("run", parents=[parent], help="run an experiment document")
    parser.add_argument("config", help="path to the JSON experiment document")
    parser.add_argument("--seed", type=int, help="master seed (overrides the document and PALM_BAR_SEED)")
    parser.add_argument("--events", type=int, help="event budget per replication")
    parser.add_argument("--warmup", type=float, help="discarded fraction of the horizon")
    parser.add_argument("--reps", type=int, help="number of independent replications")
    parser.add_argument("--out", metavar="DIR", help="output directory")
    parser.add_argument(
        "--format",
        action="append",
        choices=["csv", "json"],
        help="artifact format; repeat for both (default: the document's outputs.formats)",
    )
    parser.add_argument("--threads", type=int, default=1, help="worker processes for replications")
    parser.set_defaults(handler=handle)


def write_artifacts(result: ExperimentResult, directory: str, formats: Sequence[str]) -> List[Path]:
    """CSV tables and the JSON summary of one result."""
    repository = ArtifactRepository(directory, provenance_header(result))
    written: List[Path] = []
    if "csv" in formats:
        for table in result.tables:
            written.append(
                repository.write_csv(f"{result.kind}_{table.name}.csv", table.columns, table.rows)
            )
    if "json" in formats:
        written.append(repository.write_json(f"{result.kind}.json", result.report()))
    for path in written:
        logger.info("wrote %s", path)
    return written


def provenance_header(result: ExperimentResult) -> Dict[str, Any]:
    return {
        "tool": f"{settings.APP_NAME} {settings.APP_VERSION}",
        "config_hash": result.config_hash,
        "seed": result.seed,
        "experiment": result.kind,
    }


def handle(args: argparse.Namespace) -> int:
    config = load_config(args.config).with_overrides(
        seed=args.seed,
        events=args.events,
        warmup=args.warmup,
        replications=args.reps,
        directory=args.out,
        formats=args.format,
    )
    result = run_experiment(config, threads=args.threads)
    write_artifacts(result, config.outputs.directory, config.outputs.formats)
    for line in result.lines:
        print(line)
    if result.passed is not None:
        print("verdict: " + ("pass" if result.passed else "FAIL"))
    return result.exit_code
