import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from brwre import GeneratorSet, StepDistribution


@pytest.fixture
def z1():
    return GeneratorSet.nearest_neighbor(1)


@pytest.fixture
def z2():
    return GeneratorSet.nearest_neighbor(2)


@pytest.fixture
def symmetric_law(z1):
    return StepDistribution(z1, (0.5, 0.5))


@pytest.fixture
def drifted_law(z1):
    return StepDistribution(z1, (0.9, 0.1))
