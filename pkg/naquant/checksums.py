import json
from typing import Callable, Dict

from naquant.containers import CellContainer
from naquant.hashers import Hasher, Md5Hasher
from naquant.meta import VERSION


class UnknownRequirementError(KeyError):
    """
    Raised when a cell requires a cell that the calculator does not know.
    """


class CellChecksumCalculator:
    """
    Calculates cell checksums: a hash of the cell's canonical parameters chained with the checksums of the cells it
    requires.
    """
    def __init__(self, cells: CellContainer, hasher_generator: Callable[[], Hasher]=lambda: Md5Hasher()):
        """
        Constructor.
        :param cells: the cells that requirements are looked up in
        :param hasher_generator: hash generator
        """
        self.cells = cells
        self.hasher_generator = hasher_generator
        self._cache: Dict[str, str] = {}

    def calculate_checksum(self, identifier: str) -> str:
        """
        Calculates the checksum of the given cell.
        :param identifier: identifier of the cell
        :return: the checksum
        :raises UnknownRequirementError: if the cell or one of its requirements is unknown
        """
        if identifier in self._cache:
            return self._cache[identifier]
        cell = self.cells.get(identifier)
        if cell is None:
            raise UnknownRequirementError(identifier)
        hasher = self.hasher_generator().update(VERSION).update(self.calculate_parameters_checksum(identifier))
        for requirement in cell.requires:
            hasher.update(self.calculate_checksum(requirement))
        checksum = hasher.generate()
        self._cache[identifier] = checksum
        return checksum

    def calculate_parameters_checksum(self, identifier: str) -> str:
        """
        Calculates the checksum of the canonical (sorted-key JSON) parameters of the given cell.
        """
        parameters = json.dumps(self.cells[identifier].parameters, sort_keys=True)
        return self.hasher_generator().update(parameters).generate()
