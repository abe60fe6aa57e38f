import os
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Dict, List, Callable, Optional, Any, Tuple

from naquant._logging import create_logger
from naquant.cells import PipelineCell, CellOutcome, SubjectCell, AcquisitionCell, ReconstructionCell
from naquant.checksums import CellChecksumCalculator
from naquant.common import NaQuantBaseError
from naquant.configuration import PipelineConfig
from naquant.containers import CellContainer
from naquant.formats import VolumeFormatError
from naquant.reports import ReportBundle, build_report, STAGES, PHANTOM_STAGE, ACQUIRE_STAGE
from naquant.storage import CellRecordStorage, MemoryCellRecordStorage, DiskCellRecordStorage, CellRecord, \
    COMPUTED_STATUS, REUSED_STATUS, FAILED_STATUS

CELL_RECORDS_FILE = "cells.json"
MESSAGE_DETAIL = "message"

logger = create_logger(__name__)


class PipelineError(NaQuantBaseError):
    """
    Base class for errors raised when running the pipeline.
    """


class CircularDependencyError(PipelineError):
    """
    Error raised when circular dependency detected.
    """


class UnmanagedCellError(PipelineError):
    """
    Error raised when a cell requires a cell that is not managed by the runner.
    """


class CellFailedError(PipelineError):
    """
    Error raised if a cell fails.
    """
    def __init__(self, identifier: str, message: str=None):
        super().__init__(message)
        self.identifier = identifier


class PipelineRunner:
    """
    Runs pipeline cells in dependency order, reusing persisted results of cells whose checksum is unchanged.
    """
    def __init__(self, cells: Iterable[PipelineCell], output_directory: str,
                 record_storage: CellRecordStorage=None, jobs: int=1, force: bool=False,
                 checksum_calculator_factory: Callable[[CellContainer], CellChecksumCalculator]
                 =CellChecksumCalculator):
        """
        Constructor.
        :param cells: the cells to run
        :param output_directory: directory that cell artifacts are written to
        :param record_storage: store of cell records
        :param jobs: maximum number of cells run concurrently
        :param force: recompute every cell, even if a persisted result is up-to-date
        :param checksum_calculator_factory: creates the checksum calculator for the managed cells
        """
        self.cells = CellContainer[PipelineCell](cells)
        self.output_directory = output_directory
        self.record_storage = record_storage if record_storage is not None else MemoryCellRecordStorage()
        self.jobs = jobs
        self.force = force
        self.checksum_calculator = checksum_calculator_factory(self.cells)

    def levels(self) -> List[List[PipelineCell]]:
        """
        Groups the cells into dependency levels: every cell only requires cells of earlier levels.
        :return: the levels, with cells in the order they were given
        :raises UnmanagedCellError: if a cell requires a cell that is not managed
        :raises CircularDependencyError: if cells depend on each other
        """
        depths: Dict[str, int] = {}
        building = set()

        def depth(cell: PipelineCell) -> int:
            if cell.identifier in depths:
                return depths[cell.identifier]
            if cell.identifier in building:
                raise CircularDependencyError(f"Circular dependency detected on {cell.identifier}")
            building.add(cell.identifier)
            level = 0
            for requirement in cell.requires:
                required = self.cells.get(requirement)
                if required is None:
                    raise UnmanagedCellError(f"{cell.identifier} requires {requirement}, which is not managed")
                level = max(level, depth(required) + 1)
            building.remove(cell.identifier)
            depths[cell.identifier] = level
            return level

        levels: List[List[PipelineCell]] = []
        for cell in self.cells:
            level = depth(cell)
            while len(levels) <= level:
                levels.append([])
        for cell in self.cells:
            levels[depths[cell.identifier]].append(cell)
        return levels

    def run(self) -> Dict[str, CellOutcome]:
        """
        Runs all managed cells. A failing cell does not stop the others: it and the cells requiring it are recorded
        as failed.
        :return: outcome of every cell, in the order the cells were given
        """
        outcomes: Dict[str, CellOutcome] = {}
        with ThreadPoolExecutor(max_workers=self.jobs) as executor:
            for level in self.levels():
                scheduled = []
                for cell in level:
                    failed = [x for x in cell.requires if outcomes[x].status == FAILED_STATUS]
                    if len(failed) > 0:
                        message = f"upstream {failed[0]} failed"
                        logger.error(f"Not running {cell.identifier}: {message}")
                        outcomes[cell.identifier] = CellOutcome(FAILED_STATUS, None, message)
                        continue
                    inputs = {x: outcomes[x].result for x in cell.requires}
                    checksum = self.checksum_calculator.calculate_checksum(cell.identifier)
                    scheduled.append((cell, checksum, executor.submit(self._run_cell, cell, inputs, checksum)))

                records: Dict[str, CellRecord] = {}
                for cell, checksum, future in scheduled:
                    outcome, record = future.result()
                    outcomes[cell.identifier] = outcome
                    if record is not None:
                        records[cell.identifier] = record
                self.record_storage.set_all_records(records)

        return {cell.identifier: outcomes[cell.identifier] for cell in self.cells}

    def _run_cell(self, cell: PipelineCell, inputs: Dict[str, Any], checksum: str) \
            -> Tuple[CellOutcome, Optional[CellRecord]]:
        """
        Runs (or loads) a single cell. Called from worker threads: never writes records.
        """
        record = self._up_to_date_record(cell, checksum)
        if record is not None:
            try:
                result = cell.load(self.output_directory, record)
                logger.info(f"Reused {cell.identifier}")
                return CellOutcome(REUSED_STATUS, result), None
            except (OSError, ValueError, KeyError, VolumeFormatError) as e:
                logger.warning(f"Could not load {cell.identifier} ({e}): recomputing")

        logger.info(f"Running {cell.identifier}")
        try:
            result = cell.run(inputs)
            artifacts, details = cell.save(result, self.output_directory)
        except Exception as e:
            error = CellFailedError(cell.identifier, f"{type(e).__name__}: {e}")
            logger.error(f"{cell.identifier} failed: {error}")
            return CellOutcome(FAILED_STATUS, None, str(error)), \
                CellRecord(checksum, [], FAILED_STATUS, {MESSAGE_DETAIL: str(error)})
        logger.info(f"Finished {cell.identifier}")
        return CellOutcome(COMPUTED_STATUS, result), CellRecord(checksum, artifacts, COMPUTED_STATUS, details)

    def _up_to_date_record(self, cell: PipelineCell, checksum: str) -> Optional[CellRecord]:
        """
        Gets the stored record of the given cell if its persisted result can be reused.
        :param cell: the cell to check
        :param checksum: the current checksum of the cell
        :return: the record or `None` if the cell must be run
        """
        if self.force:
            return None
        record = self.record_storage.get_record(cell.identifier)
        if record is None or record.status == FAILED_STATUS:
            return None
        up_to_date = record.checksum == checksum \
            and all(os.path.exists(os.path.join(self.output_directory, x)) for x in record.artifacts)
        logger.debug(f"Determined that \"{cell.identifier}\" is{'' if up_to_date else ' not'} up-to-date "
                     f"(checksum={checksum}{'' if record.checksum == checksum else ' != ' + record.checksum})")
        return record if up_to_date else None


def create_cells(config: PipelineConfig, stage: str=STAGES[-1]) -> List[PipelineCell]:
    """
    Creates the cells needed for the given stage.
    :param config: the pipeline configuration
    :param stage: the stage to run up to
    :return: the cells, subjects first
    """
    cells: List[PipelineCell] = []
    subjects = range(config.n_subjects)
    for subject in subjects:
        cells.append(SubjectCell(subject, config.phantom, config.master_seed))
    if stage == PHANTOM_STAGE:
        return cells
    adc_window = config.reconstruction.parameters.adc_window
    for subject in subjects:
        for n_spokes in config.acquisition.spokes:
            cells.append(AcquisitionCell(subject, n_spokes, config.acquisition, adc_window, config.master_seed))
    if stage == ACQUIRE_STAGE:
        return cells
    for subject in subjects:
        for n_spokes in config.acquisition.spokes:
            for method in config.reconstruction.methods:
                cells.append(ReconstructionCell(subject, n_spokes, method, config.reconstruction,
                                                config.acquisition, config.master_seed))
    return cells


def run_pipeline(config: PipelineConfig, stage: str=STAGES[-1], force: bool=False) -> ReportBundle:
    """
    Runs the pipeline up to the given stage and writes its artifacts and reports to the output directory.
    :param config: the pipeline configuration
    :param stage: the stage to run up to
    :param force: recompute every cell, even if a persisted result is up-to-date
    :return: the reports
    :raises ConfigurationError: if the configuration is invalid
    """
    if stage not in STAGES:
        raise ValueError(f"Unknown stage: {stage}")
    config.validate()
    output_directory = config.output_directory
    os.makedirs(output_directory, exist_ok=True)

    runner = PipelineRunner(create_cells(config, stage), output_directory,
                            DiskCellRecordStorage(os.path.join(output_directory, CELL_RECORDS_FILE)),
                            config.jobs, force)
    outcomes = runner.run()
    failed = [x for x, y in outcomes.items() if y.status == FAILED_STATUS]
    if len(failed) > 0:
        logger.error(f"{len(failed)} of {len(outcomes)} cells failed")
    logger.info(f"Reporting stage {stage}")
    report = build_report(config, stage, outcomes)
    report.write(output_directory)
    return report
