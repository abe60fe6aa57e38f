import os
import unittest

from naquant.cells import SubjectCell, AcquisitionCell, ReconstructionCell
from naquant.configuration import ConfigurationError, AcquisitionSettings
from naquant.pipeline import PipelineRunner, CircularDependencyError, UnmanagedCellError, create_cells, \
    run_pipeline, CELL_RECORDS_FILE
from naquant.reports import PHANTOM_STAGE, ACQUIRE_STAGE, RECON_STAGE, METRICS_TABLE, FAILURES_TABLE, TSC_TABLE
from naquant.storage import MemoryCellRecordStorage, DiskCellRecordStorage, COMPUTED_STATUS, REUSED_STATUS, \
    FAILED_STATUS
from naquant.tests._common import StubCell, TestWithTemporaryDirectory, create_test_configuration
from naquant.tests._examples import EXAMPLE_1_CELL_ID, EXAMPLE_2_CELL_ID, EXAMPLE_SPOKES


class TestPipelineRunner(TestWithTemporaryDirectory):
    """
    Tests for `PipelineRunner`.
    """
    def setUp(self):
        super().setUp()
        self.storage = MemoryCellRecordStorage()
        self.cell_1 = StubCell(EXAMPLE_1_CELL_ID, 1)
        self.cell_2 = StubCell(EXAMPLE_2_CELL_ID, 10, [EXAMPLE_1_CELL_ID])
        self.cell_3 = StubCell("example-cell-3", 100, [EXAMPLE_1_CELL_ID, EXAMPLE_2_CELL_ID])

    def _runner(self, *cells: StubCell, **kwargs) -> PipelineRunner:
        return PipelineRunner(cells, self.temp_directory, self.storage, **kwargs)

    def test_levels(self):
        levels = self._runner(self.cell_3, self.cell_2, self.cell_1).levels()
        self.assertEqual([[self.cell_1], [self.cell_2], [self.cell_3]], levels)

    def test_levels_keep_given_order(self):
        other = StubCell("other", 1)
        levels = self._runner(other, self.cell_1, self.cell_2).levels()
        self.assertEqual([[other, self.cell_1], [self.cell_2]], levels)

    def test_circular_dependency(self):
        cell_a = StubCell("a", requires=["b"])
        cell_b = StubCell("b", requires=["a"])
        self.assertRaises(CircularDependencyError, self._runner(cell_a, cell_b).levels)

    def test_unmanaged_requirement(self):
        self.assertRaises(UnmanagedCellError, self._runner(self.cell_2).levels)

    def test_run(self):
        outcomes = self._runner(self.cell_1, self.cell_2, self.cell_3).run()
        self.assertEqual([EXAMPLE_1_CELL_ID, EXAMPLE_2_CELL_ID, "example-cell-3"], list(outcomes.keys()))
        self.assertEqual([1, 11, 112], [x.result for x in outcomes.values()])
        self.assertTrue(all(x.status == COMPUTED_STATUS for x in outcomes.values()))
        self.assertEqual(3, len(self.storage.get_all_records()))
        self.assertTrue(os.path.exists(os.path.join(self.temp_directory, EXAMPLE_1_CELL_ID, "result.txt")))

    def test_run_reuses_up_to_date_results(self):
        self._runner(self.cell_1, self.cell_2).run()
        outcomes = self._runner(self.cell_1, self.cell_2).run()
        self.assertEqual(REUSED_STATUS, outcomes[EXAMPLE_2_CELL_ID].status)
        self.assertEqual(11, outcomes[EXAMPLE_2_CELL_ID].result)
        self.assertEqual(1, self.cell_1.runs)
        self.assertEqual(1, self.cell_2.runs)

    def test_run_after_parameter_change(self):
        self._runner(self.cell_1, self.cell_2).run()
        changed = StubCell(EXAMPLE_1_CELL_ID, 2)
        outcomes = self._runner(changed, self.cell_2).run()
        self.assertEqual(COMPUTED_STATUS, outcomes[EXAMPLE_1_CELL_ID].status)
        self.assertEqual(COMPUTED_STATUS, outcomes[EXAMPLE_2_CELL_ID].status)
        self.assertEqual(12, outcomes[EXAMPLE_2_CELL_ID].result)

    def test_run_after_artifact_removed(self):
        self._runner(self.cell_1).run()
        os.remove(os.path.join(self.temp_directory, EXAMPLE_1_CELL_ID, "result.txt"))
        outcomes = self._runner(self.cell_1).run()
        self.assertEqual(COMPUTED_STATUS, outcomes[EXAMPLE_1_CELL_ID].status)
        self.assertEqual(2, self.cell_1.runs)

    def test_run_when_forced(self):
        self._runner(self.cell_1).run()
        outcomes = self._runner(self.cell_1, force=True).run()
        self.assertEqual(COMPUTED_STATUS, outcomes[EXAMPLE_1_CELL_ID].status)
        self.assertEqual(2, self.cell_1.runs)

    def test_failure_propagates_downstream(self):
        failing = StubCell(EXAMPLE_1_CELL_ID, fail=True)
        independent = StubCell("independent", 5)
        outcomes = self._runner(failing, self.cell_2, self.cell_3, independent).run()
        self.assertEqual(FAILED_STATUS, outcomes[EXAMPLE_1_CELL_ID].status)
        self.assertIn("RuntimeError", outcomes[EXAMPLE_1_CELL_ID].message)
        self.assertEqual(FAILED_STATUS, outcomes[EXAMPLE_2_CELL_ID].status)
        self.assertEqual(f"upstream {EXAMPLE_1_CELL_ID} failed", outcomes[EXAMPLE_2_CELL_ID].message)
        self.assertEqual(FAILED_STATUS, outcomes["example-cell-3"].status)
        self.assertEqual(0, self.cell_2.runs)
        self.assertEqual(5, outcomes["independent"].result)
        self.assertEqual(FAILED_STATUS, self.storage.get_record(EXAMPLE_1_CELL_ID).status)

    def test_failed_cell_is_retried(self):
        self._runner(StubCell(EXAMPLE_1_CELL_ID, fail=True)).run()
        outcomes = self._runner(self.cell_1).run()
        self.assertEqual(COMPUTED_STATUS, outcomes[EXAMPLE_1_CELL_ID].status)

    def test_run_with_jobs(self):
        cells = [self.cell_1] + [StubCell(f"child-{i}", i, [EXAMPLE_1_CELL_ID]) for i in range(8)]
        outcomes = self._runner(*cells, jobs=4).run()
        self.assertEqual([1] + [i + 1 for i in range(8)], [x.result for x in outcomes.values()])


class TestCreateCells(unittest.TestCase):
    """
    Tests for `create_cells`.
    """
    def setUp(self):
        self.config = create_test_configuration("out", n_subjects=2)

    def test_all_stages(self):
        cells = create_cells(self.config)
        n_spokes = len(EXAMPLE_SPOKES)
        n_methods = len(self.config.reconstruction.methods)
        self.assertEqual(2 + 2 * n_spokes + 2 * n_spokes * n_methods, len(cells))
        self.assertEqual(2, len([x for x in cells if isinstance(x, SubjectCell)]))
        self.assertEqual(2 * n_spokes, len([x for x in cells if isinstance(x, AcquisitionCell)]))
        self.assertEqual(2 * n_spokes * n_methods, len([x for x in cells if isinstance(x, ReconstructionCell)]))

    def test_phantom_stage(self):
        self.assertEqual(["subject-0", "subject-1"], [x.identifier for x in create_cells(self.config, PHANTOM_STAGE)])

    def test_acquire_stage(self):
        cells = create_cells(self.config, ACQUIRE_STAGE)
        self.assertFalse(any(isinstance(x, ReconstructionCell) for x in cells))
        self.assertIn(f"subject-1/spokes-{EXAMPLE_SPOKES[-1]}", [x.identifier for x in cells])


class TestRunPipeline(TestWithTemporaryDirectory):
    """
    Tests for `run_pipeline`.
    """
    def test_run_to_recon(self):
        config = create_test_configuration(self.temp_directory)
        report = run_pipeline(config, RECON_STAGE)
        self.assertEqual([], report.failed)
        self.assertNotIn(METRICS_TABLE, report.tables)
        self.assertTrue(os.path.exists(os.path.join(self.temp_directory, CELL_RECORDS_FILE)))
        self.assertTrue(os.path.exists(os.path.join(self.temp_directory, f"{FAILURES_TABLE}.csv")))
        records = DiskCellRecordStorage(os.path.join(self.temp_directory, CELL_RECORDS_FILE)).get_all_records()
        self.assertEqual(len(create_cells(config, RECON_STAGE)), len(records))
        self.assertEqual(len(config.acquisition.spokes) * len(config.reconstruction.methods),
                         len(report.convergence))

    def test_rerun_reuses_results(self):
        config = create_test_configuration(self.temp_directory, acquisition=AcquisitionSettings((8, ), n_coils=2))
        run_pipeline(config, ACQUIRE_STAGE)
        report = run_pipeline(config, ACQUIRE_STAGE)
        self.assertEqual({REUSED_STATUS}, set(report.statuses.values()))
        forced = run_pipeline(config, ACQUIRE_STAGE, force=True)
        self.assertEqual({COMPUTED_STATUS}, set(forced.statuses.values()))

    def test_full_run_writes_tables(self):
        config = create_test_configuration(self.temp_directory, render_panels=True)
        report = run_pipeline(config)
        self.assertEqual([], report.failed)
        self.assertEqual(len(config.acquisition.spokes) * len(config.reconstruction.methods),
                         len(report.tables[METRICS_TABLE].rows))
        self.assertGreater(len(report.tables[TSC_TABLE].rows), 0)
        self.assertTrue(os.path.exists(os.path.join(self.temp_directory, f"{TSC_TABLE}.csv")))
        self.assertTrue(os.path.exists(os.path.join(self.temp_directory, "panels", f"spokes-{EXAMPLE_SPOKES[0]}.png")))

    def test_invalid_configuration(self):
        config = create_test_configuration(self.temp_directory, n_subjects=0)
        self.assertRaises(ConfigurationError, run_pipeline, config)

    def test_unknown_stage(self):
        self.assertRaises(ValueError, run_pipeline, create_test_configuration(self.temp_directory), "unknown")


if __name__ == "__main__":
    unittest.main()
