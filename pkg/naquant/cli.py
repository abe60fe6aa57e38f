import json
import logging
import os
import sys
from argparse import ArgumentParser
from typing import List, NamedTuple, Optional

from naquant._external.verbosity_argument_parser import add_verbosity_argument, get_verbosity
from naquant._logging import create_logger
from naquant.common import NaQuantBaseError
from naquant.configuration import read_configuration, read_configuration_text, PipelineConfig, ConfigurationError
from naquant.formats import VolumeFormatError
from naquant.meta import DESCRIPTION, VERSION, PACKAGE_NAME, EXECUTABLE_NAME
from naquant.pipeline import run_pipeline
from naquant.reports import STAGES, PIPELINE_STAGE

STAGE_PARAMETER = "stage"
CONFIGURATION_LONG_PARAMETER = "config"
OUTPUT_DIRECTORY_LONG_PARAMETER = "out"
SEED_LONG_PARAMETER = "seed"
JOBS_LONG_PARAMETER = "jobs"
FORCE_LONG_PARAMETER = "force"
STDIN_CONFIGURATION_LOCATION = "-"

SUCCESS_EXIT_CODE = 0
CELL_FAILURE_EXIT_CODE = 1
CONFIGURATION_ERROR_EXIT_CODE = 2

logger = create_logger(__name__)


class InvalidCliArgumentError(NaQuantBaseError):
    """
    Raised when an invalid CLI argument has been given.
    """


class CliConfiguration(NamedTuple):
    """
    CLI configuration.
    """
    stage: str = PIPELINE_STAGE
    configuration_location: Optional[str] = None
    output_directory: Optional[str] = None
    master_seed: Optional[int] = None
    jobs: Optional[int] = None
    force: bool = False
    log_verbosity: int = logging.ERROR


def _create_parser() -> ArgumentParser:
    """
    Creates argument parser for the CLI.
    :return: the argument parser
    """
    parser = ArgumentParser(prog=EXECUTABLE_NAME, description=f"{DESCRIPTION} (v{VERSION})")
    add_verbosity_argument(parser)
    parser.add_argument(f"--{CONFIGURATION_LONG_PARAMETER}", type=str, default=None,
                        help=f"location of the configuration (\"{STDIN_CONFIGURATION_LOCATION}\" to read it from "
                             f"stdin; defaults are used if not given)")
    parser.add_argument(f"--{OUTPUT_DIRECTORY_LONG_PARAMETER}", type=str, default=None,
                        help="output directory (overrides the configuration)")
    parser.add_argument(f"--{SEED_LONG_PARAMETER}", type=int, default=None,
                        help="master seed (overrides the configuration)")
    parser.add_argument(f"--{JOBS_LONG_PARAMETER}", type=int, default=None,
                        help="maximum number of cells run concurrently (overrides the configuration)")
    parser.add_argument(f"--{FORCE_LONG_PARAMETER}", action="store_true", default=False,
                        help="recompute every cell, even if its persisted result is up-to-date")
    parser.add_argument(STAGE_PARAMETER, type=str, choices=STAGES, help="stage to run up to")
    return parser


def parse_cli_configuration(arguments: List[str]) -> CliConfiguration:
    """
    Parses the given CLI arguments.
    :param arguments: the arguments from the CLI
    :return: parsed configuration
    :raises InvalidCliArgumentError: if an argument is out of range
    """
    parsed_arguments = {x.replace("_", "-"): y for x, y in vars(_create_parser().parse_args(arguments)).items()}
    try:
        log_verbosity = get_verbosity(parsed_arguments)
    except ValueError as e:
        raise InvalidCliArgumentError(str(e)) from e
    jobs = parsed_arguments[JOBS_LONG_PARAMETER]
    if jobs is not None and jobs < 1:
        raise InvalidCliArgumentError(f"--{JOBS_LONG_PARAMETER} must be at least 1: {jobs}")
    return CliConfiguration(stage=parsed_arguments[STAGE_PARAMETER],
                            configuration_location=parsed_arguments[CONFIGURATION_LONG_PARAMETER],
                            output_directory=parsed_arguments[OUTPUT_DIRECTORY_LONG_PARAMETER],
                            master_seed=parsed_arguments[SEED_LONG_PARAMETER], jobs=jobs,
                            force=parsed_arguments[FORCE_LONG_PARAMETER], log_verbosity=log_verbosity)


def _load_configuration(cli_configuration: CliConfiguration, stdin_content: Optional[str]) -> PipelineConfig:
    location = cli_configuration.configuration_location
    if location == STDIN_CONFIGURATION_LOCATION:
        if stdin_content is None:
            raise InvalidCliArgumentError("Configuration is to be read from stdin but nothing was written to it")
        configuration = read_configuration_text(stdin_content)
    elif location is not None:
        configuration = read_configuration(location)
    else:
        configuration = PipelineConfig(output_directory=os.getcwd())

    if cli_configuration.output_directory is not None:
        configuration.output_directory = os.path.abspath(os.path.expanduser(cli_configuration.output_directory))
    if cli_configuration.master_seed is not None:
        configuration.master_seed = cli_configuration.master_seed
    if cli_configuration.jobs is not None:
        configuration.jobs = cli_configuration.jobs
    configuration.validate()
    return configuration


def main(cli_arguments: List[str], stdin_content: Optional[str]=None):
    """
    Entrypoint.
    :param cli_arguments: arguments passed in via the CLI
    :param stdin_content: content written on stdin
    :raises SystemExit: always raised
    """
    try:
        cli_configuration = parse_cli_configuration(cli_arguments)
        logging.getLogger(PACKAGE_NAME).setLevel(cli_configuration.log_verbosity)
        configuration = _load_configuration(cli_configuration, stdin_content)
        report = run_pipeline(configuration, cli_configuration.stage, cli_configuration.force)
    except (InvalidCliArgumentError, ConfigurationError, VolumeFormatError) as e:
        print(f"{EXECUTABLE_NAME}: error: {e}", file=sys.stderr)
        exit(CONFIGURATION_ERROR_EXIT_CODE)

    print(json.dumps(report.statuses))
    if len(report.failed) > 0:
        logger.error(f"Failed cells: {', '.join(report.failed)}")
        exit(CELL_FAILURE_EXIT_CODE)
    exit(SUCCESS_EXIT_CODE)


def entrypoint():
    """
    Entry-point to be used by CLI.
    """
    main(sys.argv[1:], None if sys.stdin.isatty() else sys.stdin.read())


if __name__ == "__main__":
    entrypoint()
