import json
import os
import unittest
from typing import List
from unittest.mock import patch

import yaml
from capturewrap import CaptureWrapBuilder

from naquant.cli import main, parse_cli_configuration, InvalidCliArgumentError, CONFIGURATION_LONG_PARAMETER, \
    OUTPUT_DIRECTORY_LONG_PARAMETER, SEED_LONG_PARAMETER, JOBS_LONG_PARAMETER, FORCE_LONG_PARAMETER, \
    STDIN_CONFIGURATION_LOCATION, CELL_FAILURE_EXIT_CODE, CONFIGURATION_ERROR_EXIT_CODE
from naquant.configuration import PipelineConfigJSONEncoder
from naquant.pipeline import CELL_RECORDS_FILE
from naquant.reports import ReportBundle, PHANTOM_STAGE, ACQUIRE_STAGE, PIPELINE_STAGE
from naquant.storage import COMPUTED_STATUS, REUSED_STATUS, FAILED_STATUS, DiskCellRecordStorage
from naquant.tests._common import TestWithConfiguration, TestWithTemporaryDirectory, create_test_configuration
from naquant.tests._examples import EXAMPLE_MASTER_SEED


class TestParseCliConfiguration(unittest.TestCase):
    """
    Tests for `parse_cli_configuration`.
    """
    def test_defaults(self):
        configuration = parse_cli_configuration([PIPELINE_STAGE])
        self.assertEqual(PIPELINE_STAGE, configuration.stage)
        self.assertIsNone(configuration.configuration_location)
        self.assertIsNone(configuration.master_seed)
        self.assertFalse(configuration.force)

    def test_all_options(self):
        configuration = parse_cli_configuration([
            f"--{CONFIGURATION_LONG_PARAMETER}", "config.yml", f"--{OUTPUT_DIRECTORY_LONG_PARAMETER}", "out",
            f"--{SEED_LONG_PARAMETER}", "5", f"--{JOBS_LONG_PARAMETER}", "3", f"--{FORCE_LONG_PARAMETER}",
            ACQUIRE_STAGE])
        self.assertEqual(ACQUIRE_STAGE, configuration.stage)
        self.assertEqual("config.yml", configuration.configuration_location)
        self.assertEqual("out", configuration.output_directory)
        self.assertEqual(5, configuration.master_seed)
        self.assertEqual(3, configuration.jobs)
        self.assertTrue(configuration.force)

    def test_invalid_jobs(self):
        self.assertRaises(InvalidCliArgumentError, parse_cli_configuration, [f"--{JOBS_LONG_PARAMETER}", "0",
                                                                              PIPELINE_STAGE])

    def test_unknown_stage(self):
        self.assertRaises(SystemExit, parse_cli_configuration, ["unknown"])


class TestMain(TestWithConfiguration, TestWithTemporaryDirectory):
    """
    Tests for CLI.
    """
    def setUp(self):
        super().setUp()
        self._captured_main = CaptureWrapBuilder(
            capture_stdout=True, capture_exceptions=lambda e: isinstance(e, SystemExit) and e.code == 0).build(main)
        self.configuration = create_test_configuration(self.temp_directory, n_subjects=2)

    def test_phantom_stage(self):
        statuses = self._run([PHANTOM_STAGE])
        self.assertEqual({"subject-0": COMPUTED_STATUS, "subject-1": COMPUTED_STATUS}, statuses)
        self.assertTrue(os.path.exists(os.path.join(self.temp_directory, CELL_RECORDS_FILE)))

    def test_rerun_then_force(self):
        self._run([PHANTOM_STAGE])
        self.assertEqual({REUSED_STATUS}, set(self._run([PHANTOM_STAGE]).values()))
        self.assertEqual({COMPUTED_STATUS}, set(self._run([f"--{FORCE_LONG_PARAMETER}", PHANTOM_STAGE]).values()))

    def test_seed_override_recomputes(self):
        self._run([PHANTOM_STAGE])
        statuses = self._run([f"--{SEED_LONG_PARAMETER}", str(EXAMPLE_MASTER_SEED + 1), PHANTOM_STAGE])
        self.assertEqual({COMPUTED_STATUS}, set(statuses.values()))

    def test_output_directory_override(self):
        output_directory = os.path.join(self.temp_directory, "override")
        self._run([f"--{OUTPUT_DIRECTORY_LONG_PARAMETER}", output_directory, PHANTOM_STAGE])
        records = DiskCellRecordStorage(os.path.join(output_directory, CELL_RECORDS_FILE)).get_all_records()
        self.assertEqual(2, len(records))

    def test_configuration_from_stdin(self):
        stdin = yaml.safe_dump(PipelineConfigJSONEncoder().default(self.configuration))
        result = self._captured_main(
            [f"--{CONFIGURATION_LONG_PARAMETER}", STDIN_CONFIGURATION_LOCATION, PHANTOM_STAGE], stdin)
        self.assertEqual(2, len(json.loads(result.stdout)))

    def test_configuration_from_empty_stdin(self):
        with self.assertRaises(SystemExit) as context:
            main([f"--{CONFIGURATION_LONG_PARAMETER}", STDIN_CONFIGURATION_LOCATION, PHANTOM_STAGE], None)
        self.assertEqual(CONFIGURATION_ERROR_EXIT_CODE, context.exception.code)

    def test_invalid_configuration(self):
        self.configuration.n_subjects = 0
        with self.assertRaises(SystemExit) as context:
            self._run([PHANTOM_STAGE])
        self.assertEqual(CONFIGURATION_ERROR_EXIT_CODE, context.exception.code)

    def test_unknown_configuration_key(self):
        with self.assertRaises(SystemExit) as context:
            main([f"--{CONFIGURATION_LONG_PARAMETER}", STDIN_CONFIGURATION_LOCATION, PHANTOM_STAGE],
                 f"output_directory: {self.temp_directory}\nsubjects: 2\n")
        self.assertEqual(CONFIGURATION_ERROR_EXIT_CODE, context.exception.code)

    def test_failed_cells(self):
        report = ReportBundle({"subject-0": COMPUTED_STATUS, "subject-1": FAILED_STATUS})
        with patch("naquant.cli.run_pipeline", return_value=report):
            with self.assertRaises(SystemExit) as context:
                self._run([PHANTOM_STAGE])
        self.assertEqual(CELL_FAILURE_EXIT_CODE, context.exception.code)

    def _run(self, arguments: List[str]) -> dict:
        """
        Runs the CLI with the test configuration written to file.
        :param arguments: arguments to pass in addition to the configuration location
        :return: the cell statuses written to stdout
        """
        location = self.configuration_to_file(self.configuration)
        result = self._captured_main([f"--{CONFIGURATION_LONG_PARAMETER}", location] + arguments, None)
        return json.loads(result.stdout)


if __name__ == "__main__":
    unittest.main()
