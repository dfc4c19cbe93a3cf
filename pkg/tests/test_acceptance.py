"""End-to-end acceptance criteria 1 to 11.

Each test prints one ``PASS criterion N`` or ``FAIL criterion N`` line (also
repeated in the terminal summary) and then asserts the criterion at its
stated tolerance. Expensive minimum-frequency searches are cached so that
criteria sharing a model reuse the result.

Run just this suite with ``pytest -m acceptance -s``.
"""

import dataclasses
import math
import statistics

import numpy as np
import pytest

from frontalgait.analysis import (
    COMPARISON_SETS,
    DimensionlessPoint,
    MinFreqTask,
    _base,
    comparison_tasks,
    hip_width_experiment,
    hip_width_grid,
    montecarlo_experiment,
    predict_dimensionless,
    predict_min_stride_frequency,
    run_min_freq,
)
from frontalgait.dynamics import HybridState, Phase, System, mechanical_energy
from frontalgait.params import ModelKind, ModelParams, ParamRanges, active_gains, derive
from frontalgait.profile import LEFT, RIGHT, StrideProfile, neutral_length, neutral_length_accel
from frontalgait.sim import IntegratorConfig, integrate_until_event
from frontalgait.stability import linearize_map, linearize_poincare, perturbation_decay
from frontalgait.orbit import PoincareSection, default_guess, find_fixed_point, relax
from conftest import record_criterion

pytestmark = pytest.mark.acceptance

SIMPLE = (ModelKind.FIXED_HIP, ModelKind.FIXED_ANKLE)
TOL = 0.01  # bisection tolerance [rad/s]
MC_SEED = 0

_cache: dict = {}


def min_freq(task: MinFreqTask):
    key = dataclasses.replace(task, label="")
    if key not in _cache:
        _cache[key] = run_min_freq(task)
    return _cache[key]


def omega_min(params, gains=(), tol=TOL, scan_step=None):
    rec = min_freq(MinFreqTask(params, gains, tol=tol, scan_step=scan_step))
    return rec.omega_s_min if rec.ok else math.nan


def report(number, ok, detail):
    record_criterion(number, ok, detail)
    assert ok, detail


@pytest.fixture(scope="module")
def montecarlo():
    return montecarlo_experiment(ParamRanges(), 50, MC_SEED, tol=TOL)


# ---------------------------------------------------------------------------


def test_criterion_01_prediction_accuracy(montecarlo):
    # the first ten models of the seeded cohort are the seeded 10-model set
    recs = montecarlo.records[:10]
    diffs = [abs(r.omega_s_min - r.predicted) if r.ok else math.inf for r in recs]
    worst, median = max(diffs), statistics.median(diffs)
    ok = worst <= 1.5 and median <= 1.0
    detail = (
        f"|sim - pred| max {worst:.3f} (<= 1.5), median {median:.3f} (<= 1.0) rad/s; "
        f"per model {[round(d, 2) for d in diffs]}"
    )
    report(1, ok, detail)


def test_criterion_02_dimensionless_regression(montecarlo):
    fit = montecarlo.dimensionless_fit
    n_fail = len(montecarlo.failures)
    if fit is None:
        report(2, False, f"no fit ({n_fail} of 50 models failed)")
    ok = 0.9 <= fit.slope <= 1.1 and 0.8 <= fit.intercept <= 1.2 and fit.r_squared >= 0.98
    detail = (
        f"slope {fit.slope:.3f} in [0.9, 1.1], intercept {fit.intercept:.3f} in [0.8, 1.2], "
        f"R2 {fit.r_squared:.4f} >= 0.98 (n={fit.n}, {n_fail} excluded)"
    )
    report(2, ok, detail)


def test_criterion_03_natural_frequency_regression(montecarlo):
    fit = montecarlo.natural_frequency_fit
    if fit is None:
        report(3, False, "no fit")
    detail = f"R2 {fit.r_squared:.4f} >= 0.98 (slope {fit.slope:.3f}, intercept {fit.intercept:.3f}, n={fit.n})"
    report(3, fit.r_squared >= 0.98, detail)


def test_criterion_04_equal_natural_frequency():
    wn = 12.0
    a = omega_min(_base(ModelKind.FIXED_HIP, total_mass=60.0, leg_stiffness=60.0 * wn * wn))
    b = omega_min(_base(ModelKind.FIXED_HIP, total_mass=90.0, leg_stiffness=90.0 * wn * wn))
    gap = abs(a - b)
    report(4, gap <= 2 * TOL, f"omega_s_min {a:.4f} vs {b:.4f} rad/s, gap {gap:.4f} <= {2 * TOL}")


def test_criterion_05_min_hip_width_law():
    recs, fit = hip_width_experiment(hip_width_grid([0.7, 0.95, 1.2], [10.0, 14.0, 18.0]))
    errs = [(r.w_min - r.predicted) / r.predicted if r.ok else math.inf for r in recs]
    pointwise = all(abs(e) <= 0.10 for e in errs)
    fit_ok = fit is not None and 0.45 <= fit.slope <= 0.55 and fit.r_squared >= 0.99
    fit_txt = "no fit" if fit is None else f"slope {fit.slope:.3f} in [0.45, 0.55], R2 {fit.r_squared:.4f} >= 0.99"
    detail = f"{fit_txt}; w_min vs law relative error {[f'{e:+.1%}' for e in errs]} (each within 10%)"
    report(5, fit_ok and pointwise, detail)


def test_criterion_06_stiffness_trend():
    rises = {}
    for kind in SIMPLE:
        for m in (60.0, 90.0):
            lo = omega_min(_base(kind, total_mass=m, leg_stiffness=8000.0))
            hi = omega_min(_base(kind, total_mass=m, leg_stiffness=16000.0))
            rises[f"{kind.value}/m={m:g}"] = hi / lo - 1.0
    ok = all(0.25 <= r <= 0.45 for r in rises.values())
    report(6, ok, "k 8 -> 16 kN/m raises omega_s_min by " + ", ".join(f"{k} {v:+.1%}" for k, v in rises.items())
           + " (each in [25%, 45%])")


def test_criterion_07_mass_trend():
    masses = [50.0, 60.0, 70.0, 80.0, 90.0, 100.0]
    ok = True
    parts = []
    for kind in SIMPLE:
        ws = [omega_min(_base(kind, total_mass=m)) for m in masses]
        dec = all(b < a for a, b in zip(ws, ws[1:]))
        ok &= dec
        parts.append(f"{kind.value} {[round(w, 3) for w in ws]} {'decreasing' if dec else 'NOT decreasing'}")
    report(7, ok, "; ".join(parts))


def test_criterion_08_torso_inertia():
    changes = {}
    for kind in SIMPLE:
        a = omega_min(_base(kind))
        b = omega_min(_base(kind, torso_radius_of_gyration=0.3))
        changes[kind.value] = (a, b, abs(b - a) / a)
    ok = all(c < 0.02 for _, _, c in changes.values())
    report(8, ok, "; ".join(f"{k} {a:.3f} -> {b:.3f} ({c:.1%} < 2%)" for k, (a, b, c) in changes.items()))


def _comparison():
    tasks = comparison_tasks(COMPARISON_SETS, tol=TOL)
    out = {}
    for t in tasks:
        i, kind, _ = t.label.split("/")
        rec = min_freq(t)
        out[(int(i[3:]), kind)] = rec.omega_s_min if rec.ok else math.nan
    return out


def test_criterion_09_model_agreement():
    res = _comparison()
    ok = True
    parts = []
    for i in range(len(COMPARISON_SETS)):
        fh, fa, ex = res[(i, "fixed_hip")], res[(i, "fixed_ankle")], res[(i, "extended")]
        simple_gap = abs(fh - fa) / fh
        ext_gap = max(abs(ex - fh) / fh, abs(ex - fa) / fa)
        good = simple_gap < 0.02 and ext_gap < 0.10
        ok &= bool(good)
        parts.append(f"set{i}: hip {fh:.2f} ankle {fa:.2f} ext {ex:.2f} (hip/ankle {simple_gap:.1%}, ext {ext_gap:.1%})")
    report(9, ok, "; ".join(parts) + " [limits 2%, 10%]")


def test_criterion_10_active_control():
    ok = True
    parts = []
    for i, (m, k, l0, w) in enumerate(COMPARISON_SETS):
        for kind in SIMPLE:
            p = _base(kind, total_mass=m, leg_stiffness=k, rest_length_max=l0, hip_width=w)
            passive = omega_min(p)
            active = omega_min(p, active_gains(p))
            change = (passive - active) / passive
            if kind is ModelKind.FIXED_ANKLE:
                good = change >= 0.70
            else:
                good = abs(change) < 0.05
            ok &= bool(good)
            parts.append(f"set{i} {kind.value}: {passive:.2f} -> {active:.2f} ({change:+.1%} reduction)")
    report(10, ok, "; ".join(parts) + " [ankle-fixed >= 70%, hip-fixed |change| < 5%]")


def test_criterion_11_property_suite():
    checks = {}

    # energy conservation with no damping and a constant neutral length
    p = ModelParams(ModelKind.FIXED_HIP, 80.0, 12800.0, 0.9, 0.0, damping_ratio=0.0, retraction_fraction=0.0)
    s = System(p, StrideProfile.for_model(p, 15.0))
    st = HybridState(np.array([0.83, 0.0]), np.array([0.1, 0.0]), Phase.single(RIGHT), 0.0)
    e0 = mechanical_energy(s, st)
    out, ev, _ = integrate_until_event(IntegratorConfig(), s, st, 10.0, armed=0)
    drift = abs(mechanical_energy(s, out) - e0) / abs(e0)
    checks["energy drift"] = (ev is None and drift < 1e-6, f"{drift:.1e}")

    # quintic program: endpoints, periodicity, C2 joints
    prof = StrideProfile(0.3, 0.9, 0.18)
    T = prof.stride_time
    ends = all(neutral_length(prof, t, LEFT)[1] == 0.0 for t in (0.0, 0.5 * T, T))
    trough = abs(neutral_length(prof, 0.25 * T, LEFT)[0] - 0.72) < 1e-12
    periodic = all(
        abs(neutral_length(prof, t, leg)[0] - neutral_length(prof, t + T, leg)[0]) < 1e-12
        for t in np.linspace(0.0, T, 61) for leg in (LEFT, RIGHT)
    )
    c2 = all(
        abs(neutral_length_accel(prof, tj + T - 1e-9, LEFT) - neutral_length_accel(prof, tj + T + 1e-9, LEFT)) < 1e-3
        for tj in prof.breakpoints()
    )
    checks["quintic profile"] = (ends and trough and periodic and c2, "ok" if ends and trough and periodic and c2 else "bad")

    # dimensionless and dimensional predictors agree
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        q = ModelParams(ModelKind.FIXED_HIP, rng.uniform(50, 100), rng.uniform(6000, 20000),
                        rng.uniform(0.7, 1.2), rng.uniform(0.1, 0.7))
        pt = DimensionlessPoint.from_params(q, 1.0)
        lhs = predict_dimensionless(pt.k_hat) * math.sqrt(q.gravity / derive(q).diag_leg_length)
        worst = max(worst, abs(lhs - predict_min_stride_frequency(q)) / predict_min_stride_frequency(q))
    checks["predictor identity"] = (worst < 1e-14, f"{worst:.1e}")

    # finite-difference Jacobian of a linear map is exact
    a = rng.normal(size=(8, 8)) * 0.3
    rep = linearize_map(lambda x: a @ x, rng.normal(size=8))
    err = float(np.max(np.abs(np.sort_complex(rep.eigenvalues) - np.sort_complex(np.linalg.eigvals(a)))))
    checks["linear map eigenvalues"] = (err < 1e-8, f"{err:.1e}")

    # eigenvalue verdict against direct simulation of a perturbed orbit
    wide = ModelParams(ModelKind.FIXED_HIP, 100.0, 1e4, 0.9, 0.6)
    for omega, expect_stable in ((15.0, True), (12.5, False)):
        sec = PoincareSection(System(wide, StrideProfile.for_model(wide, omega)))
        x, _ = relax(sec, default_guess(sec.system), 20)
        orbit = find_fixed_point(sec, x)
        r = linearize_poincare(orbit)
        vals, vecs = np.linalg.eig(r.jacobian)
        v = np.real(vecs[:, np.argmax(np.abs(vals))])
        ratio = perturbation_decay(wide, omega, orbit.fixed_point, direction=v)
        agree = r.stable == expect_stable and ((ratio < 0.1) if r.stable else (ratio > 1.0))
        checks[f"verdict at {omega:g} rad/s"] = (agree, f"radius {r.spectral_radius:.3f}, decay {ratio:.2g}")

    ok = all(v[0] for v in checks.values())
    report(11, ok, "; ".join(f"{k}: {v[1]}" for k, v in checks.items()))
