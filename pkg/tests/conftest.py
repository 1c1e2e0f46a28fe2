import numpy as np
import pytest

from mcse.array import ArrayGeometry, tablet_geometry


@pytest.fixture
def geometry():
    return tablet_geometry()


@pytest.fixture
def pair_geometry():
    """Two mics 5 cm apart, no PDM exclusion."""
    return ArrayGeometry(
        np.array([[0.0, 0.0, 0.0], [0.05, 0.0, 0.0]]), pdm_excluded=frozenset()
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
