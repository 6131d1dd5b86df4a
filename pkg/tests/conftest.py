import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from minidas.model import GeoHierarchy, Schema


@pytest.fixture
def schema4() -> Schema:
    return Schema((("a", 2), ("b", 2)))


@pytest.fixture
def schema16() -> Schema:
    return Schema((("a", 2), ("b", 2), ("c", 2), ("d", 2)))


@pytest.fixture
def hierarchy22() -> GeoHierarchy:
    return GeoHierarchy.from_fanouts((2, 2))


@pytest.fixture
def hierarchy3() -> GeoHierarchy:
    return GeoHierarchy.from_fanouts((2, 2, 2))
