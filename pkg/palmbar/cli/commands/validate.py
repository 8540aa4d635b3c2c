"""
``validate CONFIG``: parse and validate a document without running it.
"""
import argparse

from palmbar.schemas.config import load_config
from palmbar.services.traffic import check_stability


def register(subparsers: "argparse._SubParsersAction[argparse.ArgumentParser]", parent: argparse.ArgumentParser) -> None:
    parser = subparsers.add_parser("validate", parents=[parent], help="check an experiment document")
    parser.add_argument("config", help="path to the JSON experiment document")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    print(f"experiment: {config.experiment.kind}")
    print(f"config hash: {config.config_hash()}")
    if config.model is not None:
        verdict = check_stability(config.model)
        rho = ", ".join(f"{value:.6g}" for value in verdict.rho)
        print(f"model: {config.model.kind}, d = {config.model.d}, stable = {verdict.stable}, rho = ({rho})")
    return 0
