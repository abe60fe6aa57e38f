import json
import os
from abc import ABCMeta, abstractmethod
from copy import copy
from typing import Optional, Dict, Mapping, NamedTuple, List, Any

from naquant.common import DEFAULT_ENCODING
from naquant.formats import atomic_write

COMPUTED_STATUS = "computed"
REUSED_STATUS = "reused"
FAILED_STATUS = "failed"

_CHECKSUM_PROPERTY = "checksum"
_ARTIFACTS_PROPERTY = "artifacts"
_STATUS_PROPERTY = "status"
_DETAILS_PROPERTY = "details"


class CellRecord(NamedTuple):
    """
    What is known about the last run of a cell: the checksum of its inputs, the files it wrote (relative to the
    output directory) and small scalar results.
    """
    checksum: str
    artifacts: List[str]
    status: str = COMPUTED_STATUS
    details: Dict[str, Any] = {}

    def to_json(self) -> Dict:
        return {_CHECKSUM_PROPERTY: self.checksum, _ARTIFACTS_PROPERTY: list(self.artifacts),
                _STATUS_PROPERTY: self.status, _DETAILS_PROPERTY: dict(self.details)}

    @staticmethod
    def from_json(value: Dict) -> "CellRecord":
        return CellRecord(value[_CHECKSUM_PROPERTY], list(value.get(_ARTIFACTS_PROPERTY, [])),
                          value.get(_STATUS_PROPERTY, COMPUTED_STATUS), dict(value.get(_DETAILS_PROPERTY, {})))


class CellRecordRetriever(metaclass=ABCMeta):
    """
    Retriever of cell records, identified by cell identifier.
    """
    @abstractmethod
    def get_record(self, identifier: str) -> Optional[CellRecord]:
        """
        Gets the record of the given cell.
        :param identifier: the cell identifier
        :return: the record or `None` if none stored
        """

    @abstractmethod
    def get_all_records(self) -> Dict[str, CellRecord]:
        """
        Gets all of the identifier -> record mappings.
        :return: all stored mappings
        """


class CellRecordStorage(CellRecordRetriever, metaclass=ABCMeta):
    """
    Store of cell records, identified by cell identifier.
    """
    @abstractmethod
    def set_record(self, identifier: str, record: CellRecord):
        """
        Sets the record of the given cell.
        :param identifier: the cell identifier
        :param record: the record
        """

    def __init__(self, records: Mapping[str, CellRecord]=None):
        super().__init__()
        if records is not None:
            self.set_all_records(records)

    def __str__(self) -> str:
        return json.dumps({x: y.to_json() for x, y in self.get_all_records().items()}, sort_keys=True)

    def set_all_records(self, records: Mapping[str, CellRecord]):
        """
        Sets all of the given identifier -> record mappings.
        :param records: the mappings
        """
        for identifier, record in records.items():
            self.set_record(identifier, record)


class MemoryCellRecordStorage(CellRecordStorage):
    """
    In-memory storage of cell records.
    """
    def __init__(self, records: Mapping[str, CellRecord]=None):
        self._data: Dict[str, CellRecord] = {}
        super().__init__(records)

    def get_record(self, identifier: str) -> Optional[CellRecord]:
        return self._data.get(identifier, None)

    def get_all_records(self) -> Dict[str, CellRecord]:
        return copy(self._data)

    def set_record(self, identifier: str, record: CellRecord):
        self._data[identifier] = record


class DiskCellRecordStorage(CellRecordStorage):
    """
    On-disk (JSON) storage of cell records.

    Every update rewrites the file atomically. Updates from concurrent writers are not merged.
    """
    def __init__(self, storage_file_location: str, records: Mapping[str, CellRecord]=None):
        self.storage_file_location = storage_file_location
        super().__init__(records)

    def get_record(self, identifier: str) -> Optional[CellRecord]:
        return self.get_all_records().get(identifier, None)

    def get_all_records(self) -> Dict[str, CellRecord]:
        if not os.path.exists(self.storage_file_location):
            return {}
        with open(self.storage_file_location, "r", encoding=DEFAULT_ENCODING) as file:
            return {x: CellRecord.from_json(y) for x, y in json.load(file).items()}

    def set_record(self, identifier: str, record: CellRecord):
        self.set_all_records({identifier: record})

    def set_all_records(self, records: Mapping[str, CellRecord]):
        stored = self.get_all_records()
        stored.update(records)
        content = json.dumps({x: y.to_json() for x, y in stored.items()}, sort_keys=True, indent=2)
        atomic_write(self.storage_file_location, content.encode(DEFAULT_ENCODING))
