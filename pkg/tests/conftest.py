import numpy as np
import pytest

from nearloc.scenario import Scenario


@pytest.fixture
def nominal():
    """28 GHz, 100 MHz, 257 subcarriers, 129 elements at lambda/2, UE at [1, 8] m."""
    return Scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_scenario(rng, spacing_choices=(0.25, 0.5, 1.0)):
    d = rng.uniform(0.5, 50.0)
    theta = rng.uniform(np.pi / 8, 7 * np.pi / 8)
    B = rng.uniform(-50.0, 50.0)
    base = Scenario(clock_bias=B)
    s = base.with_polar(d, theta)
    return s.with_spacing(rng.choice(spacing_choices) * s.wavelength)
