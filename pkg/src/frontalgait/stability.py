"""Linearized return-map stability, minimum stride frequency and hip width."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import System
from .orbit import (
    MapFailure,
    OrbitResult,
    PoincareSection,
    default_guess,
    find_fixed_point,
    half_map,
    relax,
)
from .params import ModelParams, PdGains, derive
from .profile import StrideProfile
from .sim import IntegratorConfig, simulate_strides


class LinearizationError(RuntimeError):
    pass


class NoStableFrequencyInRange(RuntimeError):
    pass


class BoundaryOutOfRange(RuntimeError):
    pass


@dataclass
class StabilityReport:
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    spectral_radius: float
    stable: bool
    perturbation_size: float


def jacobian_central(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    """Central-difference Jacobian, column i = (f(x + h e_i) - f(x - h e_i)) / 2h."""
    x = np.asarray(x, dtype=float)
    n = x.size
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2.0 * h))
    return np.column_stack(cols)


def report_from_jacobian(jac: np.ndarray, h: float) -> StabilityReport:
    if not np.all(np.isfinite(jac)):
        raise LinearizationError("non-finite Jacobian")
    eig = np.linalg.eigvals(jac)
    rad = float(np.max(np.abs(eig))) if eig.size else 0.0
    return StabilityReport(jac, eig, rad, rad < 1.0, h)


def linearize_map(
    fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float = 1e-6, retries: int = 1
) -> StabilityReport:
    """Linearize an arbitrary map at x; retries with h/10 if evaluations fail."""
    for attempt in range(retries + 1):
        try:
            jac = jacobian_central(fn, x, h)
            if np.all(np.isfinite(jac)):
                return report_from_jacobian(jac, h)
        except MapFailure:
            pass
        if attempt < retries:
            h /= 10.0
    raise LinearizationError("map evaluation failed at every perturbation size")


def linearize_poincare(
    orbit: OrbitResult,
    h: float = 1e-6,
    cfg: IntegratorConfig | None = None,
    use_symmetry: bool = True,
) -> StabilityReport:
    """Eigenvalues of the linearized stride map at a fixed point.

    Works in scaled section coordinates. With ``use_symmetry`` the half-stride
    map G is differenced and the stride Jacobian is its square (exact at a
    symmetric fixed point); otherwise P = G o G is differenced directly.
    """
    section = orbit.section
    if section is None:
        raise ValueError("orbit carries no section")
    cfg = cfg or IntegratorConfig.precise()
    sc = section.scales()

    def g(z):
        return half_map(section, z * sc, cfg) / sc

    def p(z):
        return g(g(z))

    z = orbit.fixed_point / sc
    if use_symmetry:
        rep = linearize_map(g, z, h)
        return report_from_jacobian(rep.jacobian @ rep.jacobian, rep.perturbation_size)
    return linearize_map(p, z, h)


# ---------------------------------------------------------------------------
# classification of one stride frequency


@dataclass
class Classification:
    omega_s: float
    feasible: bool
    reason: str  # stable, unstable, no_orbit, flight, asymmetric, irregular_contact, ...
    orbit: OrbitResult | None = None
    report: StabilityReport | None = None


@dataclass
class SearchOptions:
    relax_iterations: int = 40
    max_iter: int | None = None
    h: float = 1e-6
    swing_fraction: float = 0.5


def make_system(
    params: ModelParams, omega_s: float, gains: tuple[PdGains, ...] = (), swing_fraction=0.5
) -> System:
    return System(params, StrideProfile.for_model(params, omega_s, swing_fraction), gains)


def classify(
    params: ModelParams,
    omega_s: float,
    gains: tuple[PdGains, ...] = (),
    guess: np.ndarray | None = None,
    cfg: IntegratorConfig | None = None,
    opts: SearchOptions | None = None,
) -> Classification:
    """Find the symmetric orbit at one stride frequency and judge its stability."""
    opts = opts or SearchOptions()
    cfg = cfg or IntegratorConfig.precise()
    system = make_system(params, omega_s, gains, opts.swing_fraction)
    section = PoincareSection(system)
    x0 = default_guess(system) if guess is None else np.asarray(guess, dtype=float)
    # forward iteration pulls a rough guess close to an attracting orbit
    try:
        x_rel, _ = relax(section, x0, opts.relax_iterations, cfg, tol=1e-9)
        start = x_rel if np.all(np.isfinite(x_rel)) else x0
    except MapFailure:
        start = x0
    orbit = find_fixed_point(section, start, cfg, max_iter=opts.max_iter)
    # a warm start from a neighbouring frequency can sit in the wrong basin;
    # fall back to the raw guess, then to the default one
    fallbacks = [x0] if guess is None else [x0, default_guess(system)]
    for alt_start in fallbacks:
        if _usable(orbit) or alt_start is start:
            continue
        alt = find_fixed_point(section, alt_start, cfg, max_iter=opts.max_iter)
        if _usable(alt) or (not orbit.accepted and alt.half_residual < orbit.half_residual):
            orbit = alt
    if not orbit.accepted:
        return Classification(omega_s, False, "no_orbit", orbit)
    if orbit.has_flight:
        return Classification(omega_s, False, "flight", orbit)
    if not orbit.symmetric:
        return Classification(omega_s, False, "asymmetric", orbit)
    if not orbit.regular:
        return Classification(omega_s, False, "irregular_contact", orbit)
    try:
        rep = linearize_poincare(orbit, opts.h, cfg)
    except LinearizationError:
        return Classification(omega_s, False, "linearization_failed", orbit)
    return Classification(omega_s, rep.stable, "stable" if rep.stable else "unstable", orbit, rep)


def _usable(orbit: OrbitResult) -> bool:
    return orbit.accepted and orbit.symmetric and orbit.regular and not orbit.has_flight


@dataclass
class MinFreqResult:
    omega_s_min: float
    bracket: tuple[float, float]  # (stable omega, infeasible omega)
    orbit_at_min: OrbitResult
    report_at_min: StabilityReport
    constraint_flags: dict[str, bool] = field(default_factory=dict)
    samples: list[Classification] = field(default_factory=list, repr=False)

    @property
    def spectral_radius(self) -> float:
        return self.report_at_min.spectral_radius


def min_stride_frequency(
    params: ModelParams,
    gains: tuple[PdGains, ...] = (),
    omega_lo: float | None = None,
    omega_hi: float | None = None,
    tol: float = 0.01,
    cfg: IntegratorConfig | None = None,
    scan_step: float | None = None,
    opts: SearchOptions | None = None,
) -> MinFreqResult:
    """Lowest stride frequency with a stable, symmetric, flight-free orbit.

    An upward scan from ``omega_lo`` finds the first stable sample, then
    bisection (warm-started from the stable side) narrows the bracket to
    ``tol``. Default range is 0.5 to 3 times the predicted minimum.
    """
    dq = derive(params)
    pred = dq.natural_frequency + dq.pendulum_frequency
    omega_lo = 0.5 * pred if omega_lo is None else omega_lo
    omega_hi = 3.0 * pred if omega_hi is None else omega_hi
    if not omega_lo < omega_hi:
        raise ValueError("omega_lo must be below omega_hi")
    if tol <= 0:
        raise ValueError("tol must be positive")
    step = scan_step or max(tol, 0.025 * pred)
    samples: list[Classification] = []
    prev = None
    guess = None
    stable = None
    grid = list(np.arange(omega_lo, omega_hi, step)) + [omega_hi]
    for om in grid:
        c = classify(params, float(om), gains, guess, cfg, opts)
        samples.append(c)
        if c.orbit is not None and _usable(c.orbit):
            guess = c.orbit.fixed_point
        if c.feasible:
            stable = c
            break
        prev = c
    if stable is None:
        raise NoStableFrequencyInRange(
            f"no stable gait between {omega_lo:.4g} and {omega_hi:.4g} rad/s"
        )
    if prev is None:
        # the lower end is already stable; report it without a bracket below
        return _result(stable, (stable.omega_s, stable.omega_s), samples)
    lo, hi = prev.omega_s, stable.omega_s
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        c = classify(params, mid, gains, stable.orbit.fixed_point, cfg, opts)
        samples.append(c)
        if c.feasible:
            hi, stable = mid, c
        else:
            lo = mid
    return _result(stable, (hi, lo), samples)


def _result(stable: Classification, bracket, samples) -> MinFreqResult:
    return MinFreqResult(
        omega_s_min=stable.omega_s,
        bracket=bracket,
        orbit_at_min=stable.orbit,
        report_at_min=stable.report,
        constraint_flags={
            "symmetric": stable.orbit.symmetric,
            "no_flight": not stable.orbit.has_flight,
            "regular_contact": stable.orbit.regular,
        },
        samples=samples,
    )


def has_stable_frequency(
    params: ModelParams,
    omega_lo: float,
    omega_hi: float,
    gains: tuple[PdGains, ...] = (),
    n_samples: int = 24,
    cfg: IntegratorConfig | None = None,
    opts: SearchOptions | None = None,
) -> bool:
    """Whether any sampled frequency in the range is stable (scanned from the
    top, where stability is most likely, with continuation downwards)."""
    guess = None
    for om in np.linspace(omega_hi, omega_lo, n_samples):
        c = classify(params, float(om), gains, guess, cfg, opts)
        if c.feasible:
            return True
        if c.orbit is not None and _usable(c.orbit):
            guess = c.orbit.fixed_point
    return False


def min_hip_width(
    params: ModelParams,
    w_lo: float,
    w_hi: float,
    tol: float = 1e-3,
    probe: tuple[float, float] = (0.8, 3.0),
    gains: tuple[PdGains, ...] = (),
    cfg: IntegratorConfig | None = None,
    n_samples: int = 24,
    opts: SearchOptions | None = None,
) -> float:
    """Smallest hip width admitting a stable gait in the probe frequency range
    ``probe`` times the predicted minimum stride frequency."""
    if not w_lo < w_hi:
        raise ValueError("w_lo must be below w_hi")

    def feasible(w):
        p = params.with_(hip_width=w)
        dq = derive(p)
        pred = dq.natural_frequency + dq.pendulum_frequency
        return has_stable_frequency(
            p, probe[0] * pred, probe[1] * pred, gains, n_samples, cfg, opts
        )

    if not feasible(w_hi):
        raise BoundaryOutOfRange(f"no stable gait even at w = {w_hi:.4g} m")
    if feasible(w_lo):
        raise BoundaryOutOfRange(f"stable gait already at w = {w_lo:.4g} m")
    lo, hi = w_lo, w_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def perturbation_decay(
    params: ModelParams,
    omega_s: float,
    x_star: np.ndarray,
    gains: tuple[PdGains, ...] = (),
    eps: float = 1e-3,
    n_strides: int = 100,
    cfg: IntegratorConfig | None = None,
    direction: np.ndarray | None = None,
) -> float:
    """Ratio of final to initial scaled deviation after ``n_strides`` strides
    from a perturbed fixed point (inf if the model falls)."""
    system = make_system(params, omega_s, gains)
    section = PoincareSection(system)
    sc = section.scales()
    if direction is None:
        direction = np.ones(section.dim)
    d = direction / np.linalg.norm(direction)
    x0 = x_star + eps * d * sc
    run = simulate_strides(system, section.to_state(x0), n_strides, cfg or IntegratorConfig())
    if not run.result.ok or len(run.section_states) < n_strides:
        return math.inf
    try:
        x_end = section.from_state(run.section_states[-1])
    except MapFailure:
        return math.inf
    return float(np.linalg.norm((x_end - x_star) / sc) / eps)
