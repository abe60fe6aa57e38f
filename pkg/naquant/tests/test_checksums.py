import unittest

from naquant.checksums import CellChecksumCalculator, UnknownRequirementError
from naquant.containers import CellContainer
from naquant.hashers import Md5Hasher
from naquant.tests._common import StubCell
from naquant.tests._examples import EXAMPLE_1_CELL_ID, EXAMPLE_2_CELL_ID


class TestCellChecksumCalculator(unittest.TestCase):
    """
    Tests for `CellChecksumCalculator`.
    """
    def _checksum(self, *cells: StubCell) -> str:
        return CellChecksumCalculator(CellContainer(cells)).calculate_checksum(cells[-1].identifier)

    def test_calculate_checksum_type(self):
        self.assertIsInstance(self._checksum(StubCell(EXAMPLE_1_CELL_ID)), str)

    def test_same_parameters_same_checksum(self):
        self.assertEqual(self._checksum(StubCell(EXAMPLE_1_CELL_ID, 3)), self._checksum(StubCell(EXAMPLE_1_CELL_ID, 3)))

    def test_parameters_change_checksum(self):
        self.assertNotEqual(self._checksum(StubCell(EXAMPLE_1_CELL_ID, 3)),
                            self._checksum(StubCell(EXAMPLE_1_CELL_ID, 4)))

    def test_requirement_changes_checksum(self):
        checksums = {
            self._checksum(StubCell(EXAMPLE_2_CELL_ID, 1)),
            self._checksum(StubCell(EXAMPLE_1_CELL_ID, 1), StubCell(EXAMPLE_2_CELL_ID, 1, [EXAMPLE_1_CELL_ID])),
            self._checksum(StubCell(EXAMPLE_1_CELL_ID, 2), StubCell(EXAMPLE_2_CELL_ID, 1, [EXAMPLE_1_CELL_ID]))}
        self.assertEqual(3, len(checksums))

    def test_transitive_requirement_changes_checksum(self):
        def checksum(grandparent_value: int) -> str:
            return self._checksum(StubCell("grandparent", grandparent_value),
                                  StubCell("parent", 1, ["grandparent"]),
                                  StubCell(EXAMPLE_1_CELL_ID, 1, ["parent"]))
        self.assertNotEqual(checksum(1), checksum(2))

    def test_parameters_checksum_ignores_requirements(self):
        calculator = CellChecksumCalculator(CellContainer([StubCell(EXAMPLE_1_CELL_ID, 1),
                                                           StubCell(EXAMPLE_2_CELL_ID, 1, [EXAMPLE_1_CELL_ID])]))
        self.assertEqual(calculator.calculate_parameters_checksum(EXAMPLE_1_CELL_ID),
                         calculator.calculate_parameters_checksum(EXAMPLE_2_CELL_ID))
        self.assertEqual(Md5Hasher().update('{"value": 1}').generate(),
                         calculator.calculate_parameters_checksum(EXAMPLE_1_CELL_ID))

    def test_unknown_requirement(self):
        calculator = CellChecksumCalculator(CellContainer([StubCell(EXAMPLE_1_CELL_ID, requires=["missing"])]))
        self.assertRaises(UnknownRequirementError, calculator.calculate_checksum, EXAMPLE_1_CELL_ID)
        self.assertRaises(UnknownRequirementError, calculator.calculate_checksum, "missing")


if __name__ == "__main__":
    unittest.main()
