"""Hybrid simulation: adaptive Dormand-Prince integration with event location.

The continuous flow is integrated segment by segment between the joints of
the leg-length program (so the integrator never steps across a kink in a
higher derivative and the touchdown guards can be armed on a schedule).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kn
from .dynamics import (
    Event,
    HybridState,
    Phase,
    PhaseKind,
    System,
    classify_guard,
    land_from_flight,
    leg_force,
    mechanical_energy,
    reset_map,
)
from .params import ModelKind

TRAJECTORY_SCHEMA = "trajectory/1"


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_step: float | None = None  # None -> stride_time / 50
    event_tol: float = 1e-10
    max_events_per_stride: int = 8
    max_steps: int = 2_000_000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.event_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_step is not None and self.max_step <= 0:
            raise ValueError("max_step must be positive")

    @classmethod
    def precise(cls) -> "IntegratorConfig":
        """Tolerances tight enough for finite-difference linearization."""
        return cls(rel_tol=1e-11, abs_tol=1e-13, event_tol=1e-12)

    def step_cap(self, stride_time: float) -> float:
        return self.max_step if self.max_step is not None else stride_time / 50.0


@dataclass(frozen=True)
class EventRecord:
    t: float
    event: Event
    phase_before: Phase
    leg: int | None = None


@dataclass
class SimResult:
    state: HybridState
    events: list[EventRecord] = field(default_factory=list)
    fell: bool = False
    flight: bool = False
    times: np.ndarray | None = None
    ys: np.ndarray | None = None
    modes: np.ndarray | None = None
    anchors: np.ndarray | None = None
    sigmas: np.ndarray | None = None
    section_states: list[HybridState] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.fell or self.flight)


class _Recorder:
    def __init__(self, n: int, cap: int = 2048):
        self.cap = cap
        self.buf_t = np.empty(cap)
        self.buf_y = np.empty((cap, n))
        self.t, self.y, self.mode, self.anchor, self.sigma = [], [], [], [], []

    def take(self, k, state_phase, anchors, sigma):
        self.t.append(self.buf_t[:k].copy())
        self.y.append(self.buf_y[:k].copy())
        self.mode.append(np.full(k, state_phase.mode))
        self.anchor.append(np.tile(np.asarray(anchors, dtype=float), (k, 1)))
        self.sigma.append(np.full(k, sigma))

    def arrays(self):
        if not self.t:
            return None
        return (
            np.concatenate(self.t),
            np.concatenate(self.y),
            np.concatenate(self.mode),
            np.concatenate(self.anchor),
            np.concatenate(self.sigma),
        )


def _breaks_after(system: System, t: float, t_end: float) -> float:
    """Next program joint strictly after t (or t_end)."""
    prof = system.profile
    T = prof.stride_time
    pts = prof.breakpoints()
    base = math.floor(t / T) * T
    for k in range(3):
        for s in pts:
            tb = base + k * T + s
            if tb > t + 1e-12 * max(1.0, abs(t)):
                return min(tb, t_end)
    return t_end


def integrate_until_event(
    cfg: IntegratorConfig,
    system: System,
    state: HybridState,
    t_end: float,
    armed: int | None = None,
    h0: float = 0.0,
    recorder: _Recorder | None = None,
):
    """Integrate the current phase until t_end or the first guard crossing.

    Returns ``(state, EventRecord | None, h_next)``; the state returned with an
    event is the pre-transition state on the crossing side of the guard.
    """
    if t_end <= state.t:
        raise ValueError("t_end must lie after the state's time")
    if armed is None:
        armed = system.armed_mask(0.5 * (state.t + t_end), state.phase)
    p = system.vector(state, armed)
    y = state.y
    cap_t = recorder.buf_t if recorder is not None else np.empty(0)
    cap_y = recorder.buf_y if recorder is not None else np.empty((0, y.size))
    hmax = cfg.step_cap(system.profile.stride_time)
    t, anchors, phase = state.t, state.foot_anchors, state.phase
    while True:
        status, t, y, ev, h, nrec, _ = kn.integrate(
            system.code, phase.mode, t, y, t_end, p, cfg.rel_tol, cfg.abs_tol, hmax,
            h0, cfg.event_tol, cap_t, cap_y, cfg.max_steps,
        )
        if recorder is not None and nrec:
            recorder.take(nrec, phase, anchors, p[kn.SIGMA])
        h0 = h
        if status == kn.ST_BUFFER:
            continue
        if status == kn.ST_FAIL:
            raise IntegrationError(
                f"step size underflow or step budget exhausted at t={t:.6g} in phase {phase}"
            )
        out = HybridState.from_y(y, phase, t, anchors)
        if status == kn.ST_DONE:
            return out, None, h
        event = classify_guard(phase, ev)
        leg = ev if phase.kind is PhaseKind.FLIGHT and ev < 2 else None
        return out, EventRecord(t, event, phase, leg), h


def _transition(system: System, state: HybridState, rec: EventRecord) -> HybridState:
    if rec.phase_before.kind is PhaseKind.FLIGHT:
        return land_from_flight(system, state, rec.leg)
    return reset_map(system, state, rec.event, strict=False)


def _immediate_touchdown(system: System, state: HybridState, armed: int) -> EventRecord | None:
    """A touchdown guard that is already non-positive when it becomes armed."""
    if state.phase.kind is PhaseKind.DOUBLE or not armed:
        return None
    g = np.empty(kn.NGUARD)
    kn.guards(system.code, state.phase.mode, state.t, state.y, system.vector(state, armed), g)
    if state.phase.kind is PhaseKind.SINGLE:
        if g[0] < 0.0:
            return EventRecord(state.t, Event.TOUCHDOWN, state.phase)
        return None
    for leg in (0, 1):
        if (armed >> leg) & 1 and g[leg] < 0.0:
            return EventRecord(state.t, Event.TOUCHDOWN, state.phase, leg)
    return None


def simulate(
    system: System,
    state: HybridState,
    t_end: float,
    cfg: IntegratorConfig | None = None,
    record: bool = False,
    section_times: np.ndarray | None = None,
) -> SimResult:
    """Run the hybrid system to ``t_end``.

    Stops early on a fall, and on flight for the simplified kinds (which have
    no airborne dynamics). ``section_times`` are extra mandatory stopping
    times whose states are collected in ``section_states``.
    """
    cfg = cfg or IntegratorConfig()
    rec = _Recorder(state.q.size * 2) if record else None
    res = SimResult(state)
    T = system.profile.stride_time
    budget = cfg.max_events_per_stride * (math.ceil((t_end - state.t) / T) + 1)
    stops = sorted(float(s) for s in (section_times if section_times is not None else []))
    si = 0
    h = 0.0
    while state.t < t_end - 1e-12 * max(1.0, t_end):
        while si < len(stops) and stops[si] <= state.t + 1e-13:
            si += 1
        seg_end = _breaks_after(system, state.t, t_end)
        if si < len(stops):
            seg_end = min(seg_end, stops[si])
        armed = system.armed_mask(0.5 * (state.t + seg_end), state.phase)
        event = _immediate_touchdown(system, state, armed)
        if event is None:
            state, event, h = integrate_until_event(cfg, system, state, seg_end, armed, h, rec)
        if event is None:
            if si < len(stops) and abs(state.t - stops[si]) < 1e-12 * max(1.0, state.t):
                res.section_states.append(state)
                si += 1
            continue
        res.events.append(event)
        if len(res.events) > budget:
            raise IntegrationError("too many contact events (chattering contact)")
        if event.event is Event.FELL:
            res.fell = True
            break
        if event.event is Event.FLIGHT:
            res.flight = True
            if system.kind is not ModelKind.EXTENDED:
                break
        state = _transition(system, state, event)
        h = 0.0
    res.state = state
    if rec is not None:
        arrays = rec.arrays()
        if arrays is not None:
            res.times, res.ys, res.modes, res.anchors, res.sigmas = arrays
    return res


@dataclass
class StrideRun:
    result: SimResult
    section_states: list[HybridState]


def simulate_strides(
    system: System,
    state0: HybridState,
    n_strides: int,
    cfg: IntegratorConfig | None = None,
    record: bool = False,
) -> StrideRun:
    """Simulate whole strides, collecting the state at each stride boundary
    (the same stride phase as ``state0``)."""
    if n_strides < 1:
        raise ValueError("n_strides must be >= 1")
    T = system.profile.stride_time
    stops = state0.t + T * np.arange(1, n_strides + 1)
    res = simulate(system, state0, float(stops[-1]), cfg, record, section_times=stops[:-1])
    if res.ok and res.state.t >= stops[-1] - 1e-9:
        res.section_states.append(res.state)
    return StrideRun(res, res.section_states)


# ---------------------------------------------------------------------------
# trajectory output


def trajectory_rows(system: System, res: SimResult):
    """Rows of (t, phase, q..., q_dot..., F_left, F_right, E_total)."""
    if res.times is None:
        return []
    rows = []
    n = res.ys.shape[1] // 2
    prev_t = -math.inf
    for t, y, mode, anc, sig in zip(res.times, res.ys, res.modes, res.anchors, res.sigmas):
        if t <= prev_t:
            continue  # drop duplicates at phase switches
        prev_t = t
        phase = _phase_of(int(mode), sig)
        st = HybridState(y[:n].copy(), y[n:].copy(), phase, float(t), tuple(anc))
        fl = leg_force(system, st, 0).f
        fr = leg_force(system, st, 1).f
        rows.append([float(t), str(phase), *map(float, y), fl, fr, mechanical_energy(system, st)])
    return rows


def _phase_of(mode: int, sigma: float) -> Phase:
    if mode == kn.SS_LEFT:
        return Phase.single(0)
    if mode == kn.SS_RIGHT:
        return Phase.single(1)
    if mode == kn.DOUBLE:
        return Phase.double(kn.leg_of(sigma))
    return Phase.flight()


def trajectory_header(system: System) -> list[str]:
    if system.kind is ModelKind.EXTENDED:
        names = ["x", "y", "phi", "l_L", "beta_L", "l_R", "beta_R"]
    else:
        names = ["l", "angle"]
    return ["t", "phase", *names, *(f"{c}_dot" for c in names), "F_left", "F_right", "E_total"]


def write_trajectory_csv(path, system: System, res: SimResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"# schema={TRAJECTORY_SCHEMA}"])
        w.writerow(trajectory_header(system))
        for row in trajectory_rows(system, res):
            w.writerow([f"{v:.12g}" if isinstance(v, float) else v for v in row])
