import numpy as np
import pytest

import klgauss as kg


@pytest.fixture(scope="session")
def quadratic_family():
    return kg.builtin_problem("quadratic")


@pytest.fixture(scope="session")
def double_well_family():
    return kg.builtin_problem("double-well")


@pytest.fixture(scope="session")
def shifted_family():
    return kg.builtin_problem("shifted-double-well")


@pytest.fixture(scope="session")
def double_well_modes(double_well_family):
    return kg.find_modes(double_well_family.v1_limit, double_well_family.v2)


@pytest.fixture(scope="session")
def shifted_modes(shifted_family):
    return kg.find_modes(shifted_family.v1_limit, shifted_family.v2)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
