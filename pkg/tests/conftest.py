import numpy as np
import pytest

from dipolarxy.geometry import (INTERACTING_SEPARATION, build_triangle_array,
                                inversion_pattern, mirror_pattern,
                                single_triangle_pattern)

SQRT3 = np.sqrt(3.0)


@pytest.fixture(scope="session")
def triangle():
    return build_triangle_array(12.3)


@pytest.fixture(scope="session")
def triangle_pattern():
    return single_triangle_pattern()


@pytest.fixture(scope="session")
def pair_mirror():
    geo = build_triangle_array(12.3, n_triangles=2,
                               separation=INTERACTING_SEPARATION,
                               orientation="inward")
    return geo, mirror_pattern()


@pytest.fixture(scope="session")
def pair_inversion():
    geo = build_triangle_array(12.3, n_triangles=2,
                               separation=INTERACTING_SEPARATION,
                               orientation="inward")
    return geo, inversion_pattern()
