import numpy as np
import pytest

from cfmseg.core import BinaryMask, FeatureMap


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def random_mask(rng, h, w, density=0.5) -> BinaryMask:
    return BinaryMask(rng.random((h, w)) < density)


def random_map(rng, c, h, w) -> FeatureMap:
    return FeatureMap(rng.standard_normal((c, h, w)).astype(np.float32))


def rect_mask(h, w, y0, y1, x0, x1) -> BinaryMask:
    bits = np.zeros((h, w), dtype=bool)
    bits[y0 : y1 + 1, x0 : x1 + 1] = True
    return BinaryMask(bits)
