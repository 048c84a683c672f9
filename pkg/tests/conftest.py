"""Shared fixtures: small systems reused across test modules."""

import numpy as np
import pytest

from randssm.manifold import compute_autonomous_ssm
from randssm.models import make_model
from randssm.spectral import compute_spectrum, slow_subspace
from randssm.systems import to_first_order


@pytest.fixture(scope="session")
def quarter_car_fos():
    preset = make_model("quarter-car")
    return to_first_order(preset.system)


@pytest.fixture(scope="session")
def quarter_car_ssm(quarter_car_fos):
    spec = compute_spectrum(quarter_car_fos.A)
    sub = slow_subspace(spec, 1)
    expansion = compute_autonomous_ssm(quarter_car_fos, sub, order=5)
    return quarter_car_fos, sub, expansion


@pytest.fixture(scope="session")
def building_fos():
    preset = make_model("building")
    return preset, to_first_order(preset.system)


def rng(seed=0):
    return np.random.default_rng(seed)
