import hashlib
import unittest

from naquant.hashers import Md5Hasher, derive_seed
from naquant.tests._examples import EXAMPLE_MASTER_SEED


class TestMd5Hasher(unittest.TestCase):
    """
    Tests for `Md5Hasher`.
    """
    def test_generate(self):
        self.assertEqual(hashlib.md5(b"").hexdigest(), Md5Hasher().generate())

    def test_accumulates(self):
        hasher = Md5Hasher().update("ab").update(b"cd")
        self.assertEqual(hashlib.md5(b"abcd").hexdigest(), hasher.generate())


class TestDeriveSeed(unittest.TestCase):
    """
    Tests for `derive_seed`.
    """
    def test_deterministic(self):
        self.assertEqual(derive_seed(EXAMPLE_MASTER_SEED, "subject-1", "noise"),
                         derive_seed(EXAMPLE_MASTER_SEED, "subject-1", "noise"))

    def test_depends_on_identity(self):
        seeds = {derive_seed(EXAMPLE_MASTER_SEED, "subject-1", "noise"),
                 derive_seed(EXAMPLE_MASTER_SEED, "subject-2", "noise"),
                 derive_seed(EXAMPLE_MASTER_SEED, "subject-1", "coils"),
                 derive_seed(EXAMPLE_MASTER_SEED + 1, "subject-1", "noise"),
                 derive_seed(EXAMPLE_MASTER_SEED, "subject-1noise")}
        self.assertEqual(5, len(seeds))

    def test_range(self):
        for subject in range(20):
            seed = derive_seed(EXAMPLE_MASTER_SEED, subject)
            self.assertGreaterEqual(seed, 0)
            self.assertLess(seed, 2 ** 32)


if __name__ == "__main__":
    unittest.main()
