import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carnot.fitting import fitted_constant, geometric_grid, loglog_slope, refine_grid


@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_slope_recovers_power_law(p, c):
    t = np.geomspace(1, 1e-4, 12)
    fit = loglog_slope(t, c * t**p)
    assert fit.slope == pytest.approx(p, abs=1e-9)
    assert fit.ok


def test_floor_drops_points():
    fit = loglog_slope([1, 0.1, 0.01], [1, 0, 0])
    assert not fit.ok and fit.points_used == 1


def test_fitted_constant():
    assert fitted_constant([1, 2], [2, 1]) == 2
    with pytest.raises(ValueError):
        fitted_constant([1], [0])


def test_grids():
    g = geometric_grid(0.5, 4, 20)
    assert g[0] == 0.5 and g[-1] == pytest.approx(5e-5) and len(g) == 20
    r = refine_grid(g, 4)
    assert len(r) == 77 and r[0] == g[0] and r[-1] == pytest.approx(g[-1])
    assert np.allclose(r[::4], g)
