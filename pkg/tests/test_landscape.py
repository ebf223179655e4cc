import numpy as np
import pytest

from lailoss.datasets import Dataset, gen_linear_band
from lailoss.errors import ConfigError, DimensionError
from lailoss.lai_loss import factor_mae, factor_mse
from lailoss.landscape import (
    DEFAULT_INTERCEPT_AXIS,
    DEFAULT_SLOPE_AXIS,
    LandscapeGrid,
    export_grid,
    grid_argmin,
    grid_eval,
    load_grid,
)

SMALL = ((-1.0, 12.0, 53), (0.0, 8.0, 33))  # slope step 0.25, intercept step 0.25


@pytest.fixture(scope="module")
def band():
    return gen_linear_band(2000, seed=0)


def _line():
    x = np.linspace(-1, 1, 41)
    return Dataset(x[:, None], 3.0 * x + 4.0)


def test_noiseless_mae_zero_at_line():
    g = grid_eval(_line(), *SMALL, loss="MAE")
    m, b, v = grid_argmin(g)
    assert (m, b, v) == (3.0, 4.0, 0.0)


@pytest.mark.parametrize("kind, base_kind, fac", [("LaiMAE", "MAE", factor_mae), ("LaiMSE", "MSE", factor_mse)])
@pytest.mark.parametrize("lam", [0.5, 1.0, 36.0])
def test_separable(band, kind, base_kind, fac, lam):
    lai = grid_eval(band, *SMALL, loss=kind, lam=lam)
    plain = grid_eval(band, *SMALL, loss=base_kind)
    expected = plain.loss * fac(lai.slopes, lam)[:, None]
    np.testing.assert_allclose(lai.loss, expected, rtol=1e-12)
    assert np.all(lai.loss >= 0) and np.all(np.isfinite(lai.loss))


def test_single_cell_and_ties():
    g = grid_eval(_line(), (2.0, 2.0, 1), (1.0, 1.0, 1), loss="MSE")
    assert grid_argmin(g)[:2] == (2.0, 1.0)
    tie = LandscapeGrid(np.array([0.0, 1.0]), np.array([0.0, 1.0]), np.array([[1.0, 0.5], [0.5, 0.5]]), "MAE")
    assert grid_argmin(tie) == (0.0, 1.0, 0.5)


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_lai_mae_argmin_tracks_lambda(band, lam):
    g = grid_eval(band, DEFAULT_SLOPE_AXIS, (3.0, 5.0, 101), loss="LaiMAE", lam=lam)
    m, b, _ = grid_argmin(g)
    assert abs(m - lam) <= g.slope_step
    assert abs(b - 4.0) <= g.intercept_step


def test_errors(band):
    with pytest.raises(DimensionError):
        grid_eval(Dataset(np.zeros((3, 2)), np.zeros(3)), *SMALL)
    with pytest.raises(ConfigError):
        grid_eval(band, *SMALL, loss="LaiMAE", lam=0.0)
    with pytest.raises(ConfigError):
        grid_eval(band, *SMALL, loss="Huber")
    with pytest.raises(ConfigError):
        grid_eval(band, (1.0, 0.0, 5), SMALL[1])


def test_export_round_trip(tmp_path, band):
    g = grid_eval(band, (0.0, 1.0, 2), (3.0, 4.0, 2), loss="LaiMSE", lam=2.0)
    export_grid(g, tmp_path / "a.csv")
    export_grid(g, tmp_path / "b.csv")
    text = (tmp_path / "a.csv").read_text()
    assert text == (tmp_path / "b.csv").read_text()
    assert len(text.splitlines()) == 5
    back = load_grid(tmp_path / "a.csv")
    assert back.loss.tobytes() == g.loss.tobytes()
    np.testing.assert_array_equal(back.slopes, g.slopes)


def test_default_axes():
    assert DEFAULT_SLOPE_AXIS == (-1.0, 12.0, 400) and DEFAULT_INTERCEPT_AXIS == (0.0, 8.0, 400)
