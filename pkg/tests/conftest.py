"""Shared fixtures: catalog states, measurement sets, comparison helpers."""

import numpy as np
import pytest

from wvtransfer.numerics import GridSpec
from wvtransfer.physics import (COSINE_POWER, NARROW, RECTANGULAR, SlitSpec,
                                build_state, heaviside_set, identity_set)


@pytest.fixture(scope="session")
def rect_state():
    return build_state(SlitSpec(RECTANGULAR, s=1.0, w=0.5))


@pytest.fixture(scope="session")
def narrow_state():
    return build_state(SlitSpec(NARROW, s=1.0))


@pytest.fixture(scope="session")
def cos1_state():
    return build_state(SlitSpec(COSINE_POWER, s=1.0, w=0.5, n=1))


@pytest.fixture(scope="session")
def cos2_state():
    return build_state(SlitSpec(COSINE_POWER, s=1.0, w=0.5, n=2))


@pytest.fixture(scope="session")
def heaviside():
    return heaviside_set()


@pytest.fixture(scope="session")
def identity():
    return identity_set()


@pytest.fixture(scope="session")
def p_grid_default():
    return GridSpec.symmetric(40.0, 4001)


def assert_density_close(actual, expected, rtol, floor_frac=1e-2):
    """Pointwise closeness with a scale floor so density zeros do not turn
    finite absolute errors into unbounded relative ones."""
    actual = np.asarray(actual)
    expected = np.asarray(expected)
    scale = np.max(np.abs(expected))
    denom = np.maximum(np.abs(expected), floor_frac * scale)
    worst = np.max(np.abs(actual - expected) / denom)
    assert worst <= rtol, f"density mismatch: worst scaled error {worst:.3e}"
