import math
import random

import pytest

from tfrenorm.errors import ConfigError
from tfrenorm.specfun import gamma


def test_anchor_values_to_1e12():
    assert abs(gamma(0.5) - math.sqrt(math.pi)) < 1e-12
    assert abs(gamma(1.0) - 1.0) < 1e-12


def test_small_integers_and_halves():
    assert gamma(2.0) == pytest.approx(1.0, rel=1e-13)
    assert gamma(5.0) == pytest.approx(24.0, rel=1e-13)
    assert gamma(1.5) == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-13)


def test_recurrence_property():
    rng = random.Random(5)
    for _ in range(200):
        x = rng.uniform(0.05, 20.0)
        assert gamma(x + 1.0) == pytest.approx(x * gamma(x), rel=1e-11)


def test_matches_stdlib_gamma():
    rng = random.Random(6)
    for _ in range(200):
        x = rng.uniform(0.05, 30.0)
        assert gamma(x) == pytest.approx(math.gamma(x), rel=1e-12)


def test_reflection_on_the_left_half_line():
    for x in (-0.5, -1.5, -2.3, 0.25):
        assert gamma(x) == pytest.approx(math.gamma(x), rel=1e-11)


def test_poles_raise():
    for x in (0.0, -1.0, -4.0):
        with pytest.raises(ConfigError):
            gamma(x)
