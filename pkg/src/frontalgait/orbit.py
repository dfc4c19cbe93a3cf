"""Periodic orbits: Poincaré section, half-stride return map, fixed points.

The section is stroboscopic: the state is sampled at the middle of the left
leg's swing window (right leg in stance). Because the leg program is
time-periodic, a touchdown-triggered section would still have to carry the
clock; sampling at a fixed stride phase removes it exactly.

Lateral mirror symmetry gives the half-stride map
``G(x) = mirror(flow over T/2 from x)``, which maps the section onto itself;
the full-stride return map is ``P = G o G`` and fixed points of ``G`` are the
symmetric period-one gaits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import root

from . import _kernels as kn
from .dynamics import Event, HybridState, Phase, PhaseKind, System, mirror_state, static_state
from .params import ModelKind, derive
from .profile import LEFT, RIGHT
from .sim import IntegrationError, IntegratorConfig, simulate
from .simplex import nelder_mead


class MapFailure(RuntimeError):
    """The return map could not be evaluated; ``reason`` is one of
    'fell', 'flight', 'no_crossing' or 'integration'."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


@dataclass(frozen=True)
class PoincareSection:
    """Section at left mid-swing with the right leg in stance."""

    system: System

    @property
    def time(self) -> float:
        prof = self.system.profile
        return prof.window_start(LEFT) + 0.5 * prof.swing_fraction * prof.stride_time

    @property
    def dim(self) -> int:
        return 10 if self.system.kind is ModelKind.EXTENDED else 4

    def scales(self) -> np.ndarray:
        """Coordinate scales: l0 for lengths, 1 rad for angles, w_p l0 and w_p
        for their rates."""
        p = self.system.params
        l0 = p.rest_length_max
        wp = derive(p).pendulum_frequency
        if self.system.kind is ModelKind.EXTENDED:
            pos = np.array([1.0, l0, 1.0, l0, 1.0])
            return np.concatenate([pos, pos * wp])
        return np.array([l0, 1.0, l0 * wp, wp])

    def to_state(self, x: np.ndarray, t: float | None = None) -> HybridState:
        x = np.asarray(x, dtype=float)
        t = self.time if t is None else t
        if self.system.kind is not ModelKind.EXTENDED:
            return HybridState(x[:2].copy(), x[2:].copy(), Phase.single(RIGHT), t, (0.0, 0.0))
        return _extended_from_section(self.system, x, t)

    def from_state(self, state: HybridState) -> np.ndarray:
        if state.phase != Phase.single(RIGHT):
            raise MapFailure("no_crossing", f"section reached in phase {state.phase}")
        if self.system.kind is not ModelKind.EXTENDED:
            return state.y.copy()
        q, qd = state.q, state.q_dot
        idx = [2, 5, 6, 3, 4]
        return np.concatenate([q[idx], qd[idx]])

    def mirror(self, x: np.ndarray) -> np.ndarray:
        """Reflect a section-like vector whose stance leg is the left one."""
        x = np.asarray(x, dtype=float).copy()
        if self.system.kind is ModelKind.EXTENDED:
            sign = np.array([-1, 1, -1, 1, -1] * 2, dtype=float)
            return x * sign
        x[1], x[3] = -x[1], -x[3]
        return x


def _extended_from_section(system: System, x: np.ndarray, t: float) -> HybridState:
    """Rebuild the torso position from the planted right foot at the origin."""
    p = system.vector(HybridState(np.zeros(7), np.zeros(7), Phase.single(RIGHT), t))
    q = np.zeros(7)
    qd = np.zeros(7)
    q[[2, 5, 6, 3, 4]] = x[:5]
    qd[[2, 5, 6, 3, 4]] = x[5:]
    # foot = hip - l u with hip offset from the torso; solve for torso position
    px, py, jx, jy, _, _ = kn._leg_point(q, qd, p, RIGHT, 0.0)
    q[0] -= px
    q[1] -= py
    _, _, jx, jy, _, _ = kn._leg_point(q, qd, p, RIGHT, 0.0)
    qd[0] = -np.dot(jx[2:], qd[2:])
    qd[1] = -np.dot(jy[2:], qd[2:])
    return HybridState(q, qd, Phase.single(RIGHT), t, (0.0, 0.0))


def _rebase(state: HybridState) -> HybridState:
    """Shift x so the right (stance) foot sits at the origin."""
    shift = state.foot_anchors[RIGHT]
    q = state.q.copy()
    if q.size == 7:
        q[0] -= shift
    anchors = (state.foot_anchors[0] - shift, 0.0)
    return HybridState(q, state.q_dot.copy(), state.phase, state.t, anchors)


@dataclass
class MapStats:
    evaluations: int = 0
    flight: bool = False


def half_map(
    section: PoincareSection,
    x: np.ndarray,
    cfg: IntegratorConfig | None = None,
    stats: MapStats | None = None,
) -> np.ndarray:
    """G: flow for half a stride, then reflect back onto the section."""
    cfg = cfg or IntegratorConfig.precise()
    system = section.system
    state = section.to_state(x)
    if stats is not None:
        stats.evaluations += 1
    try:
        res = simulate(system, state, state.t + 0.5 * system.profile.stride_time, cfg)
    except IntegrationError as exc:
        raise MapFailure("integration", str(exc)) from exc
    if res.fell:
        raise MapFailure("fell")
    if res.flight:
        if stats is not None:
            stats.flight = True
        if system.kind is not ModelKind.EXTENDED:
            raise MapFailure("flight")
    end = res.state
    if end.phase != Phase.single(LEFT):
        raise MapFailure("no_crossing", f"half stride ended in phase {end.phase}")
    mirrored = _rebase(mirror_state(system, end))
    mirrored = HybridState(mirrored.q, mirrored.q_dot, mirrored.phase, section.time,
                           mirrored.foot_anchors)
    return section.from_state(mirrored)


def poincare_map(
    section: PoincareSection, x: np.ndarray, cfg: IntegratorConfig | None = None
) -> np.ndarray:
    """Full-stride return map P = G o G."""
    return half_map(section, half_map(section, x, cfg), cfg)


def full_stride_map(
    section: PoincareSection, x: np.ndarray, cfg: IntegratorConfig | None = None
) -> np.ndarray:
    """P evaluated by direct simulation over one whole stride (no symmetry used)."""
    cfg = cfg or IntegratorConfig.precise()
    system = section.system
    state = section.to_state(x)
    res = simulate(system, state, state.t + system.profile.stride_time, cfg)
    if res.fell:
        raise MapFailure("fell")
    if res.flight and system.kind is not ModelKind.EXTENDED:
        raise MapFailure("flight")
    end = _rebase(res.state)
    return section.from_state(end)


@dataclass
class OrbitResult:
    fixed_point: np.ndarray
    residual: float  # scaled norm of P(x) - x
    half_residual: float  # scaled norm of G(x) - x
    symmetric: bool
    has_flight: bool
    stride_time: float
    converged: bool
    iterations: int = 0
    evaluations: int = 0
    message: str = ""
    section: PoincareSection | None = field(default=None, repr=False)
    contact_sequence: tuple[Event, ...] = ()

    @property
    def regular(self) -> bool:
        """One touchdown followed by one trailing-leg liftoff per half stride."""
        return self.contact_sequence == (Event.TOUCHDOWN, Event.LIFTOFF)

    @property
    def accepted(self) -> bool:
        return self.converged and self.residual < 1e-8


def default_guess(system: System) -> np.ndarray:
    """Upright, statically deflected stance at rest, expressed on the section."""
    section = PoincareSection(system)
    st = static_state(system, RIGHT, section.time)
    if system.kind is not ModelKind.EXTENDED:
        return st.y
    return section.from_state(st)


def relax(
    section: PoincareSection,
    x: np.ndarray,
    n_iter: int,
    cfg: IntegratorConfig | None = None,
    tol: float = 0.0,
) -> tuple[np.ndarray, float]:
    """Iterate G from x (forward simulation); returns (last x, last scaled step)."""
    sc = section.scales()
    step = math.inf
    for _ in range(n_iter):
        xn = half_map(section, x, cfg)
        step = float(np.linalg.norm((xn - x) / sc))
        x = xn
        if step <= tol:
            break
    return x, step


def find_fixed_point(
    section: PoincareSection,
    x_guess: np.ndarray,
    cfg: IntegratorConfig | None = None,
    max_iter: int | None = None,
    xtol: float = 1e-10,
    res_tol: float = 1e-8,
    step: float | None = None,
    polish: bool = True,
) -> OrbitResult:
    """Nelder-Mead on the scaled squared residual of the half-stride map.

    The simplex stalls on the 10-dimensional extended-model section, so by
    default it gets a budget of 200 iterations per coordinate (4-D) or 30 per
    coordinate (10-D), and an unconverged simplex result is handed to a
    finite-difference hybrid Powell solve on ``G(x) - x``.
    """
    cfg = cfg or IntegratorConfig.precise()
    sc = section.scales()
    n = section.dim
    stats = MapStats()
    x_guess = np.asarray(x_guess, dtype=float)
    if not np.all(np.isfinite(x_guess)):
        raise ValueError("x_guess must be finite")
    if max_iter is None:
        max_iter = 200 * n if n <= 4 else 30 * n

    def residual(z):
        x = z * sc
        return (half_map(section, x, cfg, stats) - x) / sc

    def objective(z):
        try:
            r = residual(z)
        except MapFailure:
            return math.inf
        return float(r @ r)

    z0 = x_guess / sc
    f0 = objective(z0)
    if step is None:
        step = min(0.05, max(1e-7, 2.0 * math.sqrt(f0))) if math.isfinite(f0) else 0.02
    if f0 <= (0.1 * res_tol) ** 2:
        z, fbest, it, msg, conv = z0, f0, 0, "guess already a fixed point", True
    else:
        res = nelder_mead(
            objective, z0, step=step, xtol=xtol, fstop=(0.1 * res_tol) ** 2, max_iter=max_iter
        )
        z, fbest, it, msg, conv = res.x, res.fun, res.iterations, res.message, res.converged
        if polish and not (conv and fbest < res_tol**2) and math.isfinite(fbest):
            zp = _polish(residual, z, n)
            fp = objective(zp) if zp is not None else math.inf
            if fp < fbest:
                z, fbest = zp, fp
                conv = fp < res_tol**2
                msg = "simplex stalled; polished by hybrid Powell solve"
    x = z * sc
    half_res = math.sqrt(fbest) if math.isfinite(fbest) else math.inf
    full_res = math.inf
    flight = stats.flight
    if math.isfinite(half_res):
        try:
            chk = MapStats()
            g1 = half_map(section, x, cfg, chk)
            g2 = half_map(section, g1, cfg, chk)
            full_res = float(np.linalg.norm((g2 - x) / sc))
            flight = chk.flight
        except MapFailure:
            pass
    converged = conv and half_res < res_tol and full_res < res_tol
    seq = half_stride_events(section, x, cfg) if converged else ()
    return OrbitResult(
        fixed_point=x,
        residual=full_res,
        half_residual=half_res,
        symmetric=half_res < 1e-6,
        has_flight=flight,
        stride_time=section.system.profile.stride_time,
        converged=converged,
        iterations=it,
        evaluations=stats.evaluations,
        message=msg if converged else f"not converged ({msg})",
        section=section,
        contact_sequence=seq,
    )


def half_stride_events(
    section: PoincareSection, x: np.ndarray, cfg: IntegratorConfig | None = None
) -> tuple[Event, ...]:
    """Contact events met during the half stride that starts at x."""
    system = section.system
    st = section.to_state(x)
    try:
        res = simulate(system, st, st.t + 0.5 * system.profile.stride_time, cfg)
    except IntegrationError:
        return ()
    return tuple(e.event for e in res.events)


def _polish(residual, z0, n):
    def safe(z):
        try:
            return residual(z)
        except MapFailure:
            return np.full(n, 1e3)

    try:
        sol = root(safe, z0, method="hybr", options={"xtol": 1e-13, "maxfev": 100 * (n + 1)})
    except (ValueError, np.linalg.LinAlgError):
        return None
    return sol.x if np.all(np.isfinite(sol.x)) else None


def mirror_check(section: PoincareSection, orbit: OrbitResult, cfg=None) -> float:
    """Distance between the state half a stride later and the mirror image of
    the section state (zero for a symmetric gait)."""
    system = section.system
    cfg = cfg or IntegratorConfig.precise()
    st = section.to_state(orbit.fixed_point)
    res = simulate(system, st, st.t + 0.5 * system.profile.stride_time, cfg)
    end = res.state
    if end.phase.kind is not PhaseKind.SINGLE or end.phase.leg != LEFT:
        return math.inf
    mirrored = _rebase(mirror_state(system, end))
    mirrored = HybridState(mirrored.q, mirrored.q_dot, mirrored.phase, section.time,
                           mirrored.foot_anchors)
    return float(np.max(np.abs(section.from_state(mirrored) - orbit.fixed_point)))
