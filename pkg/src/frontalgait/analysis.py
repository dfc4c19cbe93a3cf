"""Closed-form predictors, linear regression and the Monte Carlo drivers."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .params import (
    ModelKind,
    ModelParams,
    ParamRanges,
    PdGains,
    derive,
    random_model,
)
from .sim import IntegratorConfig
from .stability import (
    BoundaryOutOfRange,
    NoStableFrequencyInRange,
    SearchOptions,
    min_hip_width,
    min_stride_frequency,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DimensionlessPoint:
    k_hat: float
    omega_s_hat: float

    def __post_init__(self):
        if not (self.k_hat > 0 and self.omega_s_hat > 0):
            raise ValueError("dimensionless groups must be positive")

    @classmethod
    def from_params(cls, params: ModelParams, omega_s: float) -> "DimensionlessPoint":
        """k_hat = k l / (m g), omega_s_hat = omega_s / sqrt(g / l), l the diagonal leg."""
        dq = derive(params)
        l, g = dq.diag_leg_length, params.gravity
        return cls(
            params.leg_stiffness * l / (params.total_mass * g),
            omega_s / math.sqrt(g / l),
        )


def predict_min_hip_width(params: ModelParams) -> float:
    """w_min = 4 sqrt(l_eq) / omega_n."""
    dq = derive(params)
    return 4.0 * math.sqrt(dq.effective_rest_length) / dq.natural_frequency


def predict_min_stride_frequency(params: ModelParams) -> float:
    """omega_n + omega_p."""
    dq = derive(params)
    return dq.natural_frequency + dq.pendulum_frequency


def predict_dimensionless(k_hat: float) -> float:
    """Dimensionless form of the stride-frequency predictor: sqrt(k_hat) + 1."""
    return math.sqrt(k_hat) + 1.0


# ---------------------------------------------------------------------------
# ordinary least squares


@dataclass(frozen=True)
class RegressionFit:
    slope: float
    intercept: float
    r_squared: float
    residual_std: float
    n: int
    x_mean: float
    sxx: float

    def predict(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)

    def prediction_interval_95(self, x):
        """(lo, hi) band for a new observation at x (Student-t, n - 2 dof)."""
        x = np.asarray(x, dtype=float)
        t = stats.t.ppf(0.975, self.n - 2)
        half = t * self.residual_std * np.sqrt(1.0 + 1.0 / self.n + (x - self.x_mean) ** 2 / self.sxx)
        y = self.predict(x)
        return y - half, y + half


def ols_fit(xs: Sequence[float], ys: Sequence[float]) -> RegressionFit:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be equal-length 1-D sequences")
    n = x.size
    if n < 3:
        raise ValueError("need at least three points")
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx <= 1e-300 * max(1.0, float(np.sum(x * x))):
        raise ValueError("degenerate regressor: all xs equal")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    res = y - (intercept + slope * x)
    ss_res = float(np.sum(res * res))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return RegressionFit(
        slope=slope,
        intercept=intercept,
        r_squared=min(1.0, max(0.0, r2)),
        residual_std=math.sqrt(ss_res / (n - 2)),
        n=n,
        x_mean=float(xm),
        sxx=sxx,
    )


# ---------------------------------------------------------------------------
# parallel helpers


def parallel_map(fn: Callable, items: Iterable, jobs: int = 1) -> list:
    """Order-preserving map; a process pool when ``jobs > 1``."""
    items = list(items)
    if jobs <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


@dataclass
class MinFreqRecord:
    """One row of a minimum-frequency sweep; ``status`` is 'ok' or a failure reason."""

    params: ModelParams
    label: str
    omega_n: float
    omega_p: float
    predicted: float
    omega_s_min: float = math.nan
    spectral_radius: float = math.nan
    bracket_lo: float = math.nan
    bracket_hi: float = math.nan
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class MinFreqTask:
    params: ModelParams
    gains: tuple[PdGains, ...] = ()
    label: str = ""
    tol: float = 0.01
    omega_lo: float | None = None
    omega_hi: float | None = None
    scan_step: float | None = None
    cfg: IntegratorConfig | None = None


def run_min_freq(task: MinFreqTask) -> MinFreqRecord:
    p = task.params
    dq = derive(p)
    rec = MinFreqRecord(
        p, task.label, dq.natural_frequency, dq.pendulum_frequency,
        dq.natural_frequency + dq.pendulum_frequency,
    )
    try:
        r = min_stride_frequency(
            p, task.gains, task.omega_lo, task.omega_hi, task.tol, task.cfg, task.scan_step
        )
    except NoStableFrequencyInRange as exc:
        rec.status = "no_stable_frequency"
        log.info("%s: %s", task.label or p, exc)
        return rec
    except Exception as exc:  # one bad point must not sink a sweep
        rec.status = f"error: {type(exc).__name__}"
        log.warning("%s failed: %s", task.label or p, exc)
        return rec
    rec.omega_s_min = r.omega_s_min
    rec.spectral_radius = r.spectral_radius
    # bracket as (lower, upper)
    rec.bracket_lo, rec.bracket_hi = min(r.bracket), max(r.bracket)
    return rec


def min_freq_sweep(tasks: Sequence[MinFreqTask], jobs: int = 1) -> list[MinFreqRecord]:
    return parallel_map(run_min_freq, tasks, jobs)


# ---------------------------------------------------------------------------
# Monte Carlo experiment


@dataclass
class MonteCarloResult:
    records: list[MinFreqRecord]
    points: list[DimensionlessPoint]
    dimensionless_fit: RegressionFit | None
    natural_frequency_fit: RegressionFit | None
    failures: list[MinFreqRecord] = field(default_factory=list)


def random_models(ranges: ParamRanges, n_models: int, seed: int) -> list[ModelParams]:
    """Deterministic model cohort: one child seed per model so results do not
    depend on worker count or evaluation order."""
    children = np.random.SeedSequence(seed).spawn(n_models)
    return [random_model(ranges, np.random.default_rng(c)) for c in children]


def montecarlo_experiment(
    ranges: ParamRanges,
    n_models: int,
    seed: int,
    cfg: IntegratorConfig | None = None,
    jobs: int = 1,
    tol: float = 0.01,
    min_models: int = 10,
) -> MonteCarloResult:
    """Simulated minimum stride frequency for a random cohort, with the
    dimensionless fit (omega_s_hat against sqrt(k_hat)) and the natural
    frequency fit (omega_s_min against omega_n). Failed models are logged and
    left out of both fits."""
    if n_models < min_models:
        raise ValueError(f"n_models must be at least {min_models}")
    models = random_models(ranges, n_models, seed)
    tasks = [MinFreqTask(p, label=f"model{i}", tol=tol, cfg=cfg) for i, p in enumerate(models)]
    records = min_freq_sweep(tasks, jobs)
    good = [r for r in records if r.ok]
    bad = [r for r in records if not r.ok]
    for r in bad:
        log.warning("excluded %s from the fits: %s", r.label, r.status)
    points = [DimensionlessPoint.from_params(r.params, r.omega_s_min) for r in good]
    dim_fit = nat_fit = None
    if len(good) >= 3:
        dim_fit = ols_fit([math.sqrt(pt.k_hat) for pt in points], [pt.omega_s_hat for pt in points])
        nat_fit = ols_fit([r.omega_n for r in good], [r.omega_s_min for r in good])
    return MonteCarloResult(records, points, dim_fit, nat_fit, bad)


# ---------------------------------------------------------------------------
# minimum hip width boundary


@dataclass
class HipWidthRecord:
    params: ModelParams
    omega_n: float
    l_eq: float
    w_min: float = math.nan
    predicted: float = math.nan
    status: str = "ok"

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def ratio(self) -> float:
        """sqrt(l_eq) / rho_min."""
        return math.sqrt(self.l_eq) / (0.5 * self.w_min)


@dataclass(frozen=True)
class HipWidthTask:
    params: ModelParams
    tol: float = 2e-3
    span: tuple[float, float] = (0.5, 2.5)  # bisection range as multiples of the prediction
    n_samples: int = 24
    cfg: IntegratorConfig | None = None


def run_hip_width(task: HipWidthTask) -> HipWidthRecord:
    p = task.params
    dq = derive(p)
    pred = predict_min_hip_width(p)
    rec = HipWidthRecord(p, dq.natural_frequency, dq.effective_rest_length, predicted=pred)
    try:
        rec.w_min = min_hip_width(
            p, task.span[0] * pred, task.span[1] * pred, task.tol,
            cfg=task.cfg, n_samples=task.n_samples,
        )
    except BoundaryOutOfRange as exc:
        rec.status = "boundary_out_of_range"
        log.info("%s", exc)
    except Exception as exc:
        rec.status = f"error: {type(exc).__name__}"
        log.warning("hip-width search failed: %s", exc)
    return rec


def hip_width_grid(
    rest_lengths: Sequence[float],
    natural_frequencies: Sequence[float],
    mass: float = 80.0,
    kind: ModelKind = ModelKind.FIXED_HIP,
) -> list[ModelParams]:
    """Models on an (l0, omega_n) grid at fixed mass; the hip width is a
    placeholder that the boundary search overrides."""
    out = []
    for l0 in rest_lengths:
        for wn in natural_frequencies:
            out.append(ModelParams(kind, mass, mass * wn * wn, l0, 0.3))
    return out


def hip_width_experiment(
    models: Sequence[ModelParams], jobs: int = 1, tol: float = 2e-3, cfg=None
) -> tuple[list[HipWidthRecord], RegressionFit | None]:
    """Boundary widths and the fit of sqrt(l_eq)/rho_min against omega_n."""
    recs = parallel_map(run_hip_width, [HipWidthTask(p, tol, cfg=cfg) for p in models], jobs)
    good = [r for r in recs if r.ok]
    fit = ols_fit([r.omega_n for r in good], [r.ratio for r in good]) if len(good) >= 3 else None
    return recs, fit


# ---------------------------------------------------------------------------
# figure data


@dataclass
class Table:
    """Plot-ready data: a name, a header and rows."""

    name: str
    header: list[str]
    rows: list[list]


MIN_FREQ_HEADER = [
    "label", "kind", "total_mass", "leg_stiffness", "damping_ratio", "rest_length_max",
    "hip_width", "torso_radius_of_gyration", "omega_n", "omega_p", "omega_s_min",
    "spectral_radius_at_min", "bracket_lo", "bracket_hi", "predicted", "status",
]


def min_freq_row(r: MinFreqRecord) -> list:
    p = r.params
    rg = p.torso_radius_of_gyration
    return [
        r.label, p.kind.value, p.total_mass, p.leg_stiffness, p.damping_ratio,
        p.rest_length_max, p.hip_width, math.nan if rg is None else rg,
        r.omega_n, r.omega_p, r.omega_s_min, r.spectral_radius, r.bracket_lo,
        r.bracket_hi, r.predicted, r.status,
    ]


def min_freq_table(name: str, records: Sequence[MinFreqRecord]) -> Table:
    return Table(name, list(MIN_FREQ_HEADER), [min_freq_row(r) for r in records])


SIMPLE_KINDS = (ModelKind.FIXED_HIP, ModelKind.FIXED_ANKLE)

# shared reference values: mass, stiffness, resting length, hip width
BASE = dict(total_mass=80.0, leg_stiffness=12800.0, rest_length_max=0.9, hip_width=0.5)


def _base(kind: ModelKind, **changes) -> ModelParams:
    vals = {**BASE, **changes}
    if kind is ModelKind.EXTENDED:
        from .params import extended_params

        return extended_params(
            vals.pop("total_mass"), vals.pop("leg_stiffness"),
            vals.pop("rest_length_max"), vals.pop("hip_width"), **vals,
        )
    return ModelParams(kind, **vals)


def _grid(lo, hi, n_coarse, n_fine, fine):
    return list(np.linspace(lo, hi, n_fine if fine else n_coarse))


def fig3(fine=False, jobs=1, seed=0) -> list[Table]:
    """Mass sweep at a few stiffnesses, both simplified kinds."""
    tasks = []
    for kind in SIMPLE_KINDS:
        for k in (10000.0, 15000.0):
            for m in _grid(50, 100, 6, 11, fine):
                tasks.append(MinFreqTask(_base(kind, total_mass=m, leg_stiffness=k), label=f"{kind.value}/k={k:g}"))
    return [min_freq_table("fig3", min_freq_sweep(tasks, jobs))]


def fig4(fine=False, jobs=1, seed=0) -> list[Table]:
    """Point-mass torso against a torso with radius of gyration 0.3 m."""
    tasks = []
    for kind in SIMPLE_KINDS:
        for m in _grid(50, 100, 3, 6, fine):
            for rg in (None, 0.3):
                p = _base(kind, total_mass=m, torso_radius_of_gyration=rg)
                tasks.append(MinFreqTask(p, label=f"{kind.value}/{'inertia' if rg else 'point'}"))
    return [min_freq_table("fig4", min_freq_sweep(tasks, jobs))]


def fig5(fine=False, jobs=1, seed=0) -> list[Table]:
    """Stiffness sweep from 6 to 20 kN/m, both simplified kinds."""
    tasks = []
    for kind in SIMPLE_KINDS:
        for m in (60.0, 90.0):
            for k in _grid(6000, 20000, 6, 15, fine):
                tasks.append(MinFreqTask(_base(kind, total_mass=m, leg_stiffness=k), label=f"{kind.value}/m={m:g}"))
    return [min_freq_table("fig5", min_freq_sweep(tasks, jobs))]


def fig6(fine=False, jobs=1, seed=0) -> list[Table]:
    """Hip width (0.18 to 0.54 m) and resting length sweeps."""
    tasks = []
    for kind in SIMPLE_KINDS:
        for wn in (11.0, 14.0):
            for w in _grid(0.18, 0.54, 7, 19, fine):
                p = _base(kind, total_mass=80.0, leg_stiffness=80.0 * wn * wn, hip_width=w)
                tasks.append(MinFreqTask(p, label=f"{kind.value}/width/wn={wn:g}"))
            for l0 in _grid(0.7, 1.2, 6, 11, fine):
                p = _base(kind, total_mass=80.0, leg_stiffness=80.0 * wn * wn, rest_length_max=l0)
                tasks.append(MinFreqTask(p, label=f"{kind.value}/length/wn={wn:g}"))
    return [min_freq_table("fig6", min_freq_sweep(tasks, jobs))]


HIP_WIDTH_HEADER = [
    "total_mass", "leg_stiffness", "rest_length_max", "omega_n", "l_eq", "w_min",
    "w_min_predicted", "sqrt_leq_over_rho_min", "status",
]


def fig7(fine=False, jobs=1, seed=0) -> list[Table]:
    """Fixed-hip minimum hip width over resting lengths and natural frequencies."""
    l0s = _grid(0.7, 1.2, 3, 5, fine)
    wns = _grid(10.0, 18.0, 3, 5, fine)
    recs, fit = hip_width_experiment(hip_width_grid(l0s, wns), jobs)
    rows = [
        [r.params.total_mass, r.params.leg_stiffness, r.params.rest_length_max, r.omega_n,
         r.l_eq, r.w_min, r.predicted, r.ratio if r.ok else math.nan, r.status]
        for r in recs
    ]
    return [Table("fig7", HIP_WIDTH_HEADER, rows), fit_table("fig7_fit", fit)]


FIT_HEADER = ["slope", "intercept", "r_squared", "residual_std", "n"]


def fit_table(name: str, fit: RegressionFit | None) -> Table:
    if fit is None:
        return Table(name, FIT_HEADER, [])
    return Table(name, FIT_HEADER, [[fit.slope, fit.intercept, fit.r_squared, fit.residual_std, fit.n]])


def _montecarlo_tables(fine, jobs, seed):
    res = montecarlo_experiment(ParamRanges(), 50, seed, jobs=jobs, tol=0.005 if fine else 0.01)
    recs = min_freq_table("montecarlo", res.records)
    return res, recs


def fig8a(fine=False, jobs=1, seed=0) -> list[Table]:
    res, recs = _montecarlo_tables(fine, jobs, seed)
    recs.name = "fig8a"
    return [recs, fit_table("fig8a_fit", res.natural_frequency_fit)]


def fig8b(fine=False, jobs=1, seed=0) -> list[Table]:
    """Pairs of (m, k) with equal natural frequency."""
    tasks = []
    for wn in _grid(10.0, 16.0, 3, 7, fine):
        for m in (60.0, 90.0):
            tasks.append(MinFreqTask(_base(ModelKind.FIXED_HIP, total_mass=m, leg_stiffness=m * wn * wn), label=f"wn={wn:g}"))
    return [min_freq_table("fig8b", min_freq_sweep(tasks, jobs))]


def fig9a(fine=False, jobs=1, seed=0) -> list[Table]:
    res, _ = _montecarlo_tables(fine, jobs, seed)
    ok = [r for r in res.records if r.ok]
    rows = [
        [r.label, pt.k_hat, math.sqrt(pt.k_hat), pt.omega_s_hat, predict_dimensionless(pt.k_hat)]
        for r, pt in zip(ok, res.points)
    ]
    head = ["label", "k_hat", "sqrt_k_hat", "omega_s_hat", "omega_s_hat_predicted"]
    return [Table("fig9a", head, rows), fit_table("fig9a_fit", res.dimensionless_fit)]


def fig9b(fine=False, jobs=1, seed=0) -> list[Table]:
    """Predicted against simulated minimum frequency for 10 random models."""
    models = random_models(ParamRanges(), 10, seed)
    tasks = [MinFreqTask(p, label=f"model{i}", tol=0.005 if fine else 0.01) for i, p in enumerate(models)]
    return [min_freq_table("fig9b", min_freq_sweep(tasks, jobs))]


# five comparison sets: mass, stiffness, resting length, hip width
COMPARISON_SETS = (
    (100.0, 10000.0, 0.9, 0.6),
    (80.0, 12800.0, 0.9, 0.5),
    (70.0, 12000.0, 1.0, 0.5),
    (90.0, 9000.0, 0.8, 0.6),
    (60.0, 9600.0, 1.0, 0.5),
)


def comparison_tasks(
    sets: Sequence[tuple[float, float, float, float]] = COMPARISON_SETS,
    kinds: Sequence[ModelKind] = (ModelKind.FIXED_HIP, ModelKind.FIXED_ANKLE, ModelKind.EXTENDED),
    active: bool = False,
    tol: float = 0.02,
) -> list[MinFreqTask]:
    from .params import active_gains, passive_gains

    tasks = []
    for i, (m, k, l0, w) in enumerate(sets):
        for kind in kinds:
            p = _base(kind, total_mass=m, leg_stiffness=k, rest_length_max=l0, hip_width=w)
            modes = [("passive", passive_gains(p))]
            if active:
                modes.append(("active", active_gains(p)))
            for name, gains in modes:
                # the extended model is costly; scan it coarsely
                step = 0.05 * predict_min_stride_frequency(p) if kind is ModelKind.EXTENDED else None
                tasks.append(MinFreqTask(p, gains, f"set{i}/{kind.value}/{name}", tol, scan_step=step))
    return tasks


def fig10(fine=False, jobs=1, seed=0) -> list[Table]:
    return [min_freq_table("fig10", min_freq_sweep(comparison_tasks(tol=0.01 if fine else 0.02), jobs))]


def fig11(fine=False, jobs=1, seed=0) -> list[Table]:
    tasks = comparison_tasks(COMPARISON_SETS[:1], active=True, tol=0.01 if fine else 0.02)
    return [min_freq_table("fig11", min_freq_sweep(tasks, jobs))]


FIGURES: dict[str, Callable[..., list[Table]]] = {
    "fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6, "fig7": fig7,
    "fig8a": fig8a, "fig8b": fig8b, "fig9a": fig9a, "fig9b": fig9b,
    "fig10": fig10, "fig11": fig11,
}
