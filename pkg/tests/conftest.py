"""Shared fixtures.

The simulated sequences are deterministic but not free to generate, so the
ones used by several test modules are built once per session.
"""

import numpy as np
import pytest

from surfelio.simulator import generate_fixture


@pytest.fixture(scope="session")
def corner_fixture():
    """Static two-wall + floor room, 3 s, cheap."""
    return generate_fixture("corner-room")


@pytest.fixture(scope="session")
def openfield_fixture():
    """Sparse ground + fence patches, 20 s."""
    return generate_fixture("openfield-sparse")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
