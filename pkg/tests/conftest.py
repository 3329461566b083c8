import numpy as np
import pytest

from fracfp import coefficients as C
from fracfp.spectral import Field, Grid


@pytest.fixture
def grid1():
    return Grid(1, 128, 4.0)


@pytest.fixture
def porous_cs():
    """Truncated porous medium, Lorentzian b and a bounded sine drift on [-4, 4)."""
    return C.CoefficientSet(C.truncate(C.porous_medium(2), 2), C.lorentzian_b(), C.sine_D(1, 4.0, 0.5), 0.75)


@pytest.fixture
def linear_cs():
    return C.CoefficientSet(C.linear_beta(), C.constant_b(0.0), C.zero_D(1), 0.75)


def gaussian(grid, center=0.0, sigma=0.5):
    u = Field.from_function(grid, lambda *x: np.exp(-sum((xi - center) ** 2 for xi in x) / (2 * sigma**2)))
    return u * (1.0 / u.mass())
