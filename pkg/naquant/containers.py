from typing import Generic, Iterable, Dict, Iterator, Optional, TypeVar

from naquant.cells import PipelineCell

CellType = TypeVar("CellType", bound=PipelineCell)


class CellContainer(Generic[CellType]):
    """
    Container of pipeline cells, keyed by identifier.
    """
    def __init__(self, cells: Iterable[CellType]=None):
        self._cells: Dict[str, CellType] = {}
        if cells is not None:
            self.add_all(cells)

    def __iter__(self) -> Iterator[CellType]:
        for cell in self._cells.values():
            yield cell

    def __getitem__(self, identifier: str) -> CellType:
        return self._cells[identifier]

    def __contains__(self, identifier: str) -> bool:
        return identifier in self._cells

    def __len__(self) -> int:
        return len(self._cells)

    def __str__(self) -> str:
        return str(list(self._cells.keys()))

    def get(self, identifier: str, default: Optional[CellType]=None) -> Optional[CellType]:
        """
        Gets the cell with the given identifier, returning the given default if there is no such cell.
        :param identifier: the identifier of the cell
        :param default: returned if the cell is not in the container
        :return: the cell or `default`
        """
        return self._cells.get(identifier, default)

    def add(self, cell: CellType):
        """
        Adds the given cell (replacing any cell with the same identifier).
        :param cell: the cell to add
        """
        self._cells[cell.identifier] = cell

    def add_all(self, cells: Iterable[CellType]):
        for cell in cells:
            self.add(cell)

    def remove(self, cell: CellType):
        """
        Removes the given cell.
        :param cell: the cell to remove
        :raises KeyError: if the cell is not in the container
        """
        del self._cells[cell.identifier]
