"""Model layer: moment functions, simulators, layout and CSV round trips."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import gel_expand as gx
from gel_expand.errors import DimensionError


def test_eval_g_mean_var_hand_values():
    model = gx.build_model("MeanVarModel")
    np.testing.assert_allclose(gx.eval_g(model, [0.0], [0.0]), [0.0, -1.0])
    np.testing.assert_allclose(gx.eval_g(model, [2.0], [1.0]), [1.0, 0.0])


def test_eval_g_dimension_mismatch():
    model = gx.build_model("MeanVarModel")
    with pytest.raises(DimensionError):
        gx.eval_g(model, [0.0, 1.0], [0.0])
    with pytest.raises(DimensionError):
        gx.eval_g(model, [0.0], [0.0, 1.0])


@given(x=st.floats(-50, 50), theta=st.floats(-50, 50))
@settings(max_examples=60, deadline=None)
def test_mean_var_g_component_relation(x, theta):
    # the second moment component is determined by the first
    model = gx.build_model("MeanVarModel")
    g = gx.eval_g(model, [x], [theta])
    assert g[1] == pytest.approx(g[0] ** 2 - 1.0, rel=1e-12, abs=1e-9)


@pytest.mark.parametrize("name", gx.MODEL_NAMES)
def test_jacobian_matches_finite_differences(name):
    model = gx.build_model(name)
    assert gx.jacobian_fd_error(model, n_points=100, seed=11) <= 1e-5


@pytest.mark.parametrize("name", gx.MODEL_NAMES)
def test_simulator_moment_condition_five_sigma(name):
    model = gx.build_model(name)
    n = 10**6
    data = gx.simulate(model, n, 2024)
    gbar = model.g_rows(data.rows, model.theta_star).mean(axis=0)
    omega = gx.population_moments(model, "analytic").Omega
    bound = 5.0 * math.sqrt(float(np.linalg.eigvalsh(omega).max())) / math.sqrt(n)
    assert np.linalg.norm(gbar) <= bound


def test_simulate_deterministic():
    model = gx.build_model("MeanVarModel")
    a = gx.simulate(model, 5, 7)
    b = gx.simulate(model, 5, 7)
    np.testing.assert_array_equal(a.rows, b.rows)
    c = gx.simulate(model, 5, 8)
    assert not np.array_equal(a.rows, c.rows)


def test_simulate_law_of_large_numbers():
    model = gx.build_model("MeanVarModel", theta_star=0.0)
    n = 10**5
    data = gx.simulate(model, n, 1)
    assert abs(data.rows[:, 0].mean()) <= 5.0 * n**-0.5


def test_simulate_rejects_empty():
    model = gx.build_model("MeanVarModel")
    with pytest.raises(DimensionError):
        gx.simulate(model, 0, 1)


def test_dataset_validation():
    with pytest.raises(DimensionError):
        gx.Dataset(np.zeros((0, 1)))
    with pytest.raises(DimensionError):
        gx.Dataset(np.zeros(3))
    ds = gx.Dataset(np.zeros((3, 2)))
    assert ds.n == 3 and ds.dim_x == 2
    with pytest.raises(ValueError):
        ds.rows[0, 0] = 1.0  # immutable


def test_index_layout_offsets():
    layout = gx.IndexLayout(dim_g=2, dim_theta=1)
    assert (layout.l_tau, layout.l_kappa, layout.l_lambda, layout.l_theta) == (0, 1, 3, 5)
    assert layout.dim_beta == 6
    with pytest.raises(DimensionError):
        gx.IndexLayout(dim_g=1, dim_theta=2)


def test_csv_round_trip(tmp_path):
    model = gx.build_model("MeanVarModel")
    data = gx.simulate(model, 17, 3)
    path = tmp_path / "data.csv"
    gx.dataset_to_csv(data, path)
    assert path.read_text().splitlines()[0] == "x1"
    back = gx.dataset_from_csv(path)
    np.testing.assert_array_equal(back.rows, data.rows)


def test_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(DimensionError):
        gx.dataset_from_csv(path)


def test_unknown_model_rejected():
    with pytest.raises(DimensionError, match="valid models"):
        gx.build_model("NoSuchModel")


def test_skew_model_has_nonzero_third_moments(skew):
    # the skewed DGP is what makes the cubic cancellation checks non-trivial
    assert abs(skew.mt.T[0, 0, 0]) > 1.0


def test_gauss_measure_matches_analytic_moments(bundles):
    for name, b in bundles.items():
        pma = gx.population_moments(b.model, "analytic")
        assert np.abs(b.pm.G - pma.G).max() <= 1e-3
        assert np.abs(b.pm.Omega - pma.Omega).max() <= 1e-3 * np.abs(pma.Omega).max()
