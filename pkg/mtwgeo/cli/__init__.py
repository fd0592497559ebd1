"""Command-line front end: scenarios, verification suites and run reports."""

from .cli import (
    COMMANDS,
    SCHEMA_VERSION,
    SUITES,
    RunSession,
    build_parser,
    exit_status,
    load_scenario,
    main,
    run,
    scenario_from_args,
    validate,
    validate_scenario,
)

__all__ = [
    "COMMANDS",
    "SCHEMA_VERSION",
    "SUITES",
    "RunSession",
    "build_parser",
    "exit_status",
    "load_scenario",
    "main",
    "run",
    "scenario_from_args",
    "validate",
    "validate_scenario",
]
