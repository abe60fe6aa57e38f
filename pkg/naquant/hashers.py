import hashlib
from abc import ABCMeta, abstractmethod

from typing import Union

from naquant.common import DEFAULT_ENCODING

SEED_HEX_DIGITS = 8


class Hasher(metaclass=ABCMeta):
    """
    Hash calculators.
    """
    @abstractmethod
    def update(self, content: Union[str, bytes]) -> "Hasher":
        """
        Accumulates the given input.
        :param content: the input to include in the hash
        :return: this hasher
        """

    @abstractmethod
    def generate(self) -> str:
        """
        Generates a hash of the accumulated inputs.
        :return: the hash as hexadecimal digits
        """


class Md5Hasher(Hasher):
    """
    MD5 hash calculator.
    """
    def __init__(self):
        super().__init__()
        self._md5 = hashlib.md5()

    def update(self, content: Union[str, bytes]) -> "Md5Hasher":
        if isinstance(content, str):
            content = content.encode(DEFAULT_ENCODING)
        self._md5.update(content)
        return self

    def generate(self) -> str:
        return self._md5.hexdigest()


def derive_seed(master_seed: int, *identity: Union[str, int]) -> int:
    """
    Derives the seed of a random stream from the master seed and the identity of its user.

    The same master seed and identity always give the same 32-bit seed, independently of the order in which streams
    are created.
    :param master_seed: the master seed
    :param identity: parts identifying the stream (e.g. cell identifier and purpose)
    :return: the derived seed
    """
    hasher = Md5Hasher().update(str(int(master_seed)))
    for part in identity:
        hasher.update("/").update(str(part))
    return int(hasher.generate()[:SEED_HEX_DIGITS], 16)
