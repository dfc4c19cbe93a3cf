import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from frontalgait.analysis import (
    BASE,
    COMPARISON_SETS,
    FIGURES,
    DimensionlessPoint,
    MinFreqTask,
    montecarlo_experiment,
    ols_fit,
    predict_dimensionless,
    predict_min_hip_width,
    predict_min_stride_frequency,
    random_models,
    run_min_freq,
)
from frontalgait.params import DomainError, ModelKind, ModelParams, ParamRanges, derive


def fixed_hip(m, k, l0, w, **kw):
    return ModelParams(ModelKind.FIXED_HIP, m, k, l0, w, **kw)


# ---------------------------------------------------------------------------
# closed-form predictors


def test_min_hip_width_example():
    assert predict_min_hip_width(fixed_hip(80.0, 16000.0, 0.9, 0.3)) == pytest.approx(
        4 * math.sqrt(0.85095) / math.sqrt(200.0), rel=1e-12
    )
    assert predict_min_hip_width(fixed_hip(80.0, 16000.0, 0.9, 0.3)) == pytest.approx(0.2609, abs=5e-5)


def test_min_hip_width_falls_when_stiffness_doubles():
    a = fixed_hip(80.0, 12000.0, 0.9, 0.3)
    b = a.with_(leg_stiffness=24000.0)
    assert derive(b).natural_frequency == pytest.approx(math.sqrt(2) * derive(a).natural_frequency)
    assert derive(b).static_deflection == pytest.approx(0.5 * derive(a).static_deflection)
    assert predict_min_hip_width(b) < predict_min_hip_width(a)


def test_half_width_law_rearranged():
    p = fixed_hip(70.0, 12000.0, 1.0, 0.3)
    rho_min = 0.5 * predict_min_hip_width(p)
    dq = derive(p)
    assert math.sqrt(dq.effective_rest_length) / rho_min == pytest.approx(0.5 * dq.natural_frequency, rel=1e-14)


def test_hip_width_prediction_domain_error():
    with pytest.raises(DomainError):
        predict_min_hip_width(fixed_hip(100.0, 1000.0, 0.9, 0.3))


def test_min_stride_frequency_example():
    assert predict_min_stride_frequency(fixed_hip(70.0, 12000.0, 1.0, 0.30)) == pytest.approx(16.208, abs=1e-3)
    assert predict_min_stride_frequency(fixed_hip(100.0, 10000.0, 0.9, 0.36)) == pytest.approx(13.27, abs=5e-3)


@settings(max_examples=200)
@given(
    st.floats(50.0, 100.0), st.floats(6000.0, 20000.0), st.floats(0.7, 1.2), st.floats(0.1, 0.7),
    st.floats(3.0, 30.0),
)
def test_dimensionless_and_dimensional_predictors_agree(m, k, l0, w, g):
    p = fixed_hip(m, k, l0, w, gravity=g)
    if derive(p).static_deflection >= l0:
        return
    pt = DimensionlessPoint.from_params(p, 1.0)
    l = derive(p).diag_leg_length
    lhs = predict_dimensionless(pt.k_hat) * math.sqrt(g / l)
    assert lhs == pytest.approx(predict_min_stride_frequency(p), rel=4e-16, abs=0)


def test_dimensionless_groups_invariant_under_similarity():
    p = fixed_hip(100.0, 1e4, 0.9, 0.6)
    c = 1.21  # lengths scale by c, stiffness by 1/c, time by sqrt(c)
    q = p.with_(rest_length_max=0.9 * c, hip_width=0.6 * c, torso_offset=0.2 * c, leg_stiffness=1e4 / c)
    a = DimensionlessPoint.from_params(p, 13.0)
    b = DimensionlessPoint.from_params(q, 13.0 / math.sqrt(c))
    assert b.k_hat == pytest.approx(a.k_hat, rel=1e-13)
    assert b.omega_s_hat == pytest.approx(a.omega_s_hat, rel=1e-13)


def test_simulated_minimum_obeys_dynamic_similarity():
    p = fixed_hip(100.0, 1e4, 0.9, 0.6)
    c = 1.21
    q = p.with_(rest_length_max=0.9 * c, hip_width=0.6 * c, torso_offset=0.2 * c, leg_stiffness=1e4 / c)
    a = run_min_freq(MinFreqTask(p, tol=0.005))
    b = run_min_freq(MinFreqTask(q, tol=0.005))
    assert a.ok and b.ok
    pa = DimensionlessPoint.from_params(p, a.omega_s_min)
    pb = DimensionlessPoint.from_params(q, b.omega_s_min)
    assert pb.omega_s_hat == pytest.approx(pa.omega_s_hat, abs=0.01 / math.sqrt(9.81 / 0.9))


def test_dimensionless_point_positive():
    with pytest.raises(ValueError):
        DimensionlessPoint(0.0, 1.0)


# ---------------------------------------------------------------------------
# regression


def test_collinear_points():
    fit = ols_fit([0, 1, 2, 3], [1, 3, 5, 7])
    assert fit.slope == pytest.approx(2.0) and fit.intercept == pytest.approx(1.0, abs=1e-14)
    assert fit.r_squared == 1.0 and fit.residual_std == pytest.approx(0.0, abs=1e-14)


def test_symmetric_noise_cancels():
    eps = 0.3
    xs = [0.0, 1.0, 1.0, 2.0]
    ys = [1.0, 3.0 + eps, 3.0 - eps, 5.0]
    fit = ols_fit(xs, ys)
    assert fit.slope == pytest.approx(2.0, abs=1e-14)
    assert fit.intercept == pytest.approx(1.0, abs=1e-14)
    assert 0.0 <= fit.r_squared < 1.0


def test_fit_matches_numpy_polyfit():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 10, 40)
    y = 0.7 * x - 2 + rng.normal(0, 0.5, 40)
    fit = ols_fit(x, y)
    slope, intercept = np.polyfit(x, y, 1)
    assert fit.slope == pytest.approx(slope, rel=1e-10)
    assert fit.intercept == pytest.approx(intercept, rel=1e-10)
    assert fit.r_squared == pytest.approx(np.corrcoef(x, y)[0, 1] ** 2, rel=1e-10)


@pytest.mark.parametrize("xs,ys", [([1, 1, 1], [1, 2, 3]), ([1, 2], [1, 2]), ([1, 2, 3], [1, 2])])
def test_bad_regression_inputs(xs, ys):
    with pytest.raises(ValueError):
        ols_fit(xs, ys)


def test_prediction_band_symmetric():
    fit = ols_fit([0, 1, 2, 3, 4], [0.1, 0.9, 2.2, 2.8, 4.1])
    lo, hi = fit.prediction_interval_95(np.array([-1.0, 2.0, 7.0]))
    mid = fit.predict(np.array([-1.0, 2.0, 7.0]))
    np.testing.assert_allclose(hi - mid, mid - lo, rtol=1e-12)
    # narrowest at the mean of x
    assert (hi - lo)[1] < (hi - lo)[0] and (hi - lo)[1] < (hi - lo)[2]


def test_prediction_interval_coverage():
    rng = np.random.default_rng(2024)
    x = np.linspace(0.0, 10.0, 12)
    hits = 0
    trials = 1000
    for _ in range(trials):
        y = 1.0 + 2.0 * x + rng.normal(0.0, 0.7, x.size)
        fit = ols_fit(x, y)
        x_new = rng.uniform(0.0, 10.0)
        y_new = 1.0 + 2.0 * x_new + rng.normal(0.0, 0.7)
        lo, hi = fit.prediction_interval_95(x_new)
        hits += lo <= y_new <= hi
    assert 0.90 <= hits / trials <= 0.99


# ---------------------------------------------------------------------------
# Monte Carlo plumbing


def test_random_models_deterministic_and_in_range():
    a = random_models(ParamRanges(), 20, seed=11)
    assert a == random_models(ParamRanges(), 20, seed=11)
    assert a != random_models(ParamRanges(), 20, seed=12)
    # the cohort prefix does not depend on its size
    assert random_models(ParamRanges(), 5, seed=11) == a[:5]
    for p in a:
        assert 8.0 - 1e-9 <= derive(p).natural_frequency <= 20.0 + 1e-9


def test_montecarlo_needs_ten_models():
    with pytest.raises(ValueError):
        montecarlo_experiment(ParamRanges(), 9, seed=0)


def test_failed_sweep_point_is_reported_not_raised():
    p = fixed_hip(100.0, 1e4, 0.9, 0.6)
    rec = run_min_freq(MinFreqTask(p, omega_lo=8.0, omega_hi=12.0))
    assert not rec.ok and rec.status == "no_stable_frequency"
    assert math.isnan(rec.omega_s_min)


def test_figure_registry_and_comparison_sets():
    assert set(FIGURES) == {
        "fig3", "fig4", "fig5", "fig6", "fig7", "fig8a", "fig8b", "fig9a", "fig9b", "fig10", "fig11",
    }
    assert len(COMPARISON_SETS) == 5
    assert BASE["total_mass"] == 80.0
