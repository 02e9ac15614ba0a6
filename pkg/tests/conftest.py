import math

import numpy as np
import pytest

from spheredeconv import sphere


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def quad_s2():
    return sphere.product_quadrature(2, 24)


@pytest.fixture(scope="session")
def quad_s1():
    return sphere.product_quadrature(1, 64)


def random_point(rng, d):
    return sphere.from_coords(rng.standard_normal(d + 1))


def random_rotation_so3(rng):
    phi = rng.uniform(0.0, 2.0 * math.pi)
    theta = rng.uniform(0.0, math.pi)
    psi = rng.uniform(0.0, 2.0 * math.pi)
    return sphere.rotation_from_euler(phi, theta, psi)
