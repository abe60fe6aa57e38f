import os
import unittest
from abc import ABCMeta, abstractmethod
from tempfile import NamedTemporaryFile

from naquant.storage import CellRecordStorage, MemoryCellRecordStorage, DiskCellRecordStorage, CellRecord, \
    REUSED_STATUS, COMPUTED_STATUS
from naquant.tests._examples import EXAMPLE_1_CELL_ID, EXAMPLE_1_CHECKSUM, EXAMPLE_2_CELL_ID, EXAMPLE_2_CHECKSUM, \
    EXAMPLE_ARTIFACT_1, EXAMPLE_ARTIFACT_2

EXAMPLE_1_RECORD = CellRecord(EXAMPLE_1_CHECKSUM, [EXAMPLE_ARTIFACT_1], details={"result": 1})
EXAMPLE_2_RECORD = CellRecord(EXAMPLE_2_CHECKSUM, [EXAMPLE_ARTIFACT_2], REUSED_STATUS, {"converged": True})


class _TestCellRecordStorage(unittest.TestCase, metaclass=ABCMeta):
    """
    Tests for `CellRecordStorage` subclasses.
    """
    @abstractmethod
    def create_storage(self) -> CellRecordStorage:
        """
        Creates storage manager to be tested.
        :return: the created storage manager
        """

    def setUp(self):
        super().setUp()
        self.storage = self.create_storage()

    def test_get_when_not_set(self):
        self.assertIsNone(self.storage.get_record(EXAMPLE_1_CELL_ID))

    def test_get_when_multiple(self):
        self.storage.set_record("other", CellRecord("value", []))
        self.storage.set_record(EXAMPLE_1_CELL_ID, EXAMPLE_1_RECORD)
        self.assertEqual(EXAMPLE_1_RECORD, self.storage.get_record(EXAMPLE_1_CELL_ID))

    def test_get_all_records_when_none(self):
        self.assertEqual(0, len(self.storage.get_all_records()))

    def test_get_all_records(self):
        self.storage.set_record(EXAMPLE_1_CELL_ID, EXAMPLE_1_RECORD)
        self.storage.set_record(EXAMPLE_2_CELL_ID, EXAMPLE_2_RECORD)
        self.assertEqual({EXAMPLE_1_CELL_ID: EXAMPLE_1_RECORD, EXAMPLE_2_CELL_ID: EXAMPLE_2_RECORD},
                         self.storage.get_all_records())

    def test_set_when_set(self):
        self.storage.set_record(EXAMPLE_1_CELL_ID, CellRecord("old", []))
        self.storage.set_record(EXAMPLE_1_CELL_ID, EXAMPLE_1_RECORD)
        self.assertEqual({EXAMPLE_1_CELL_ID: EXAMPLE_1_RECORD}, self.storage.get_all_records())

    def test_set_all_records(self):
        self.storage.set_all_records({EXAMPLE_1_CELL_ID: EXAMPLE_1_RECORD, EXAMPLE_2_CELL_ID: EXAMPLE_2_RECORD})
        self.assertEqual(EXAMPLE_1_RECORD, self.storage.get_record(EXAMPLE_1_CELL_ID))
        self.assertEqual(EXAMPLE_2_RECORD, self.storage.get_record(EXAMPLE_2_CELL_ID))

    def test_str(self):
        self.storage.set_record(EXAMPLE_1_CELL_ID, EXAMPLE_1_RECORD)
        self.assertIn(EXAMPLE_1_CHECKSUM, str(self.storage))


class TestMemoryCellRecordStorage(_TestCellRecordStorage):
    """
    Tests for `MemoryCellRecordStorage`.
    """
    def create_storage(self) -> CellRecordStorage:
        return MemoryCellRecordStorage()

    def test_init_with_records(self):
        storage = MemoryCellRecordStorage({EXAMPLE_1_CELL_ID: EXAMPLE_1_RECORD})
        self.assertEqual(EXAMPLE_1_RECORD, storage.get_record(EXAMPLE_1_CELL_ID))


class TestDiskCellRecordStorage(_TestCellRecordStorage):
    """
    Tests for `DiskCellRecordStorage`.
    """
    def setUp(self):
        self._temp_file = NamedTemporaryFile().name
        super().setUp()

    def tearDown(self):
        if os.path.exists(self._temp_file):
            os.remove(self._temp_file)

    def create_storage(self) -> CellRecordStorage:
        return DiskCellRecordStorage(self._temp_file)

    def test_persists(self):
        self.storage.set_record(EXAMPLE_1_CELL_ID, EXAMPLE_1_RECORD)
        self.assertEqual(EXAMPLE_1_RECORD, DiskCellRecordStorage(self._temp_file).get_record(EXAMPLE_1_CELL_ID))


class TestCellRecord(unittest.TestCase):
    """
    Tests for `CellRecord`.
    """
    def test_defaults_from_json(self):
        record = CellRecord.from_json({"checksum": EXAMPLE_1_CHECKSUM})
        self.assertEqual(CellRecord(EXAMPLE_1_CHECKSUM, [], COMPUTED_STATUS, {}), record)


del _TestCellRecordStorage

if __name__ == "__main__":
    unittest.main()
