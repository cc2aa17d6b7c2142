import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shortfall.quadrature import gk15, integrate


@pytest.mark.parametrize("degree", range(0, 22))
def test_single_panel_exact_for_polynomials(degree):
    # a 15-point Kronrod rule integrates polynomials up to degree 22 exactly
    k, _ = gk15(lambda x: x ** degree, 0.0, 1.0)
    assert k == pytest.approx(1.0 / (degree + 1), rel=1e-13)


def test_adaptive_handles_sqrt_singularity():
    assert integrate(np.sqrt, 0.0, 1.0) == pytest.approx(2.0 / 3.0, abs=1e-9)


def test_kink_points_are_respected():
    val = integrate(lambda x: np.abs(x - 0.3), 0.0, 1.0, points=(0.3,))
    assert val == pytest.approx(0.5 * (0.3 ** 2 + 0.7 ** 2), abs=1e-14)


def test_empty_interval_is_zero():
    assert integrate(np.exp, 2.0, 2.0) == 0.0


@given(st.floats(0.1, 5.0), st.floats(0.0, 3.0), st.floats(0.1, 4.0))
def test_exponential_against_closed_form(rate, a, width):
    b = a + width
    exact = (math.exp(-rate * a) - math.exp(-rate * b)) / rate
    assert integrate(lambda x: np.exp(-rate * x), a, b) == pytest.approx(exact, abs=1e-9)
