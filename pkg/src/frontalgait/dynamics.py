"""Hybrid frontal-plane dynamics: phases, states, leg force, guards and resets.

The heavy lifting lives in ``_kernels``; this module wraps it in typed
objects and implements the discrete transitions between contact phases.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as kn
from .params import DomainError, Joint, ModelKind, ModelParams, PdGains, derive
from .profile import LEFT, RIGHT, StrideProfile


class PhaseKind(enum.Enum):
    SINGLE = "single"
    DOUBLE = "double"
    FLIGHT = "flight"


@dataclass(frozen=True)
class Phase:
    """Contact phase. ``leg`` is the stance leg in single support and the
    trailing leg (the one that will lift off) in double support."""

    kind: PhaseKind
    leg: int | None = None

    @classmethod
    def single(cls, stance: int) -> "Phase":
        return cls(PhaseKind.SINGLE, stance)

    @classmethod
    def double(cls, trailing: int) -> "Phase":
        return cls(PhaseKind.DOUBLE, trailing)

    @classmethod
    def flight(cls) -> "Phase":
        return cls(PhaseKind.FLIGHT, None)

    @property
    def mode(self) -> int:
        if self.kind is PhaseKind.SINGLE:
            return kn.SS_LEFT if self.leg == LEFT else kn.SS_RIGHT
        return kn.DOUBLE if self.kind is PhaseKind.DOUBLE else kn.FLIGHT

    def __str__(self) -> str:
        if self.kind is PhaseKind.FLIGHT:
            return "flight"
        side = "L" if self.leg == LEFT else "R"
        return f"{'ss' if self.kind is PhaseKind.SINGLE else 'ds'}_{side}"


class Event(enum.Enum):
    TOUCHDOWN = "touchdown"
    LIFTOFF = "liftoff"
    LEAD_LIFTOFF = "lead_liftoff"  # leading leg unloads again in double support
    FLIGHT = "flight"
    FELL = "fell"


@dataclass(frozen=True)
class HybridState:
    """Mechanical state, phase, clock and planted-foot x positions.

    Simplified kinds use ``q = [l, angle]``; the extended kind uses
    ``q = [x, y, phi, l_L, beta_L, l_R, beta_R]``.
    """

    q: np.ndarray
    q_dot: np.ndarray
    phase: Phase
    t: float
    foot_anchors: tuple[float, float] = (0.0, 0.0)

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([self.q, self.q_dot])

    @classmethod
    def from_y(cls, y, phase, t, anchors) -> "HybridState":
        y = np.asarray(y, dtype=float)
        n = y.size // 2
        return cls(y[:n].copy(), y[n:].copy(), phase, float(t), tuple(anchors))


@dataclass(frozen=True)
class LegForce:
    f: float


@dataclass
class System:
    """Everything the integrator needs: model, leg program and controllers."""

    params: ModelParams
    profile: StrideProfile
    gains: tuple[PdGains, ...] = ()
    fall_fraction: float = 0.2
    baumgarte: float = 40.0
    _base: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.gains = tuple(self.gains or ())
        self._base = pack_params(self.params, self.profile, self.gains, self.fall_fraction)
        self._base[kn.BAUM] = self.baumgarte

    @property
    def kind(self) -> ModelKind:
        return self.params.kind

    @property
    def code(self) -> int:
        return self.params.kind.code

    def vector(self, state: HybridState, armed: int = 0) -> np.ndarray:
        p = self._base.copy()
        p[kn.SIGMA] = _sigma(state.phase)
        p[kn.FOOT_L], p[kn.FOOT_R] = state.foot_anchors
        p[kn.ARMED] = armed
        return p

    def armed_mask(self, t: float, phase: Phase) -> int:
        """Swing legs whose touchdown guard is live at time t.

        A leg may touch down only in the second half of its swing window or
        after it (the foot is still clearing the ground before mid-swing).
        """
        mask = 0
        for leg in (LEFT, RIGHT):
            if leg_planted(phase, leg):
                continue
            if swing_progress(self.profile, t, leg) >= 0.5 * self.profile.swing_fraction:
                mask |= 1 << leg
        return mask


def swing_progress(profile: StrideProfile, t: float, leg: int) -> float:
    """Fraction of the stride elapsed since the leg's swing window opened."""
    T = profile.stride_time
    return ((t - profile.window_start(leg)) % T) / T


def leg_planted(phase: Phase, leg: int) -> bool:
    if phase.kind is PhaseKind.DOUBLE:
        return True
    if phase.kind is PhaseKind.FLIGHT:
        return False
    return phase.leg == leg


def _sigma(phase: Phase) -> float:
    if phase.leg is None:
        return 0.0
    return kn.sign_of(phase.leg)


def pack_params(
    params: ModelParams,
    profile: StrideProfile,
    gains: tuple[PdGains, ...] = (),
    fall_fraction: float = 0.2,
) -> np.ndarray:
    dq = derive(params)
    p = np.zeros(kn.NPAR)
    p[kn.M_TOT] = params.total_mass
    p[kn.K] = params.leg_stiffness
    p[kn.B] = dq.damping_coeff
    p[kn.G] = params.gravity
    p[kn.L0] = params.rest_length_max
    p[kn.DEPTH] = profile.retraction_depth
    p[kn.T] = profile.stride_time
    p[kn.FRAC] = profile.swing_fraction
    p[kn.PHASE] = profile.phase_offset
    p[kn.RHO] = params.half_width
    p[kn.D] = params.torso_offset
    r = params.torso_radius_of_gyration or 0.0
    p[kn.RG2] = r * r
    p[kn.LEG_FRAC] = params.leg_mass_fraction
    p[kn.LM] = params.lm
    p[kn.FALL_H] = fall_fraction * params.rest_length_max
    slots = {
        Joint.STANCE_ANKLE: (kn.KP_A, kn.KD_A, kn.SP_A),
        Joint.STANCE_HIP: (kn.KP_H, kn.KD_H, kn.SP_H),
        Joint.SWING_HIP: (kn.KP_S, kn.KD_S, kn.SP_S),
    }
    for g in gains:
        if params.kind is not ModelKind.EXTENDED:
            # massless legs: only the joint that carries the body is meaningful
            if g.target_joint is Joint.SWING_HIP:
                continue
            if params.kind is ModelKind.FIXED_HIP and g.target_joint is not Joint.STANCE_ANKLE:
                raise DomainError("the fixed-hip model only has a stance ankle joint")
            if params.kind is ModelKind.FIXED_ANKLE and g.target_joint is not Joint.STANCE_HIP:
                raise DomainError("the fixed-ankle model only has a stance hip joint")
        ikp, ikd, isp = slots[g.target_joint]
        p[ikp], p[ikd], p[isp] = g.kp, g.kd, g.setpoint
    return p


# ---------------------------------------------------------------------------
# public evaluation helpers


def force_value(params: ModelParams, ln: float, lnd: float, l: float, ld: float) -> float:
    b = derive(params).damping_coeff
    return params.leg_stiffness * (ln - l) + b * (lnd - ld)


def leg_lengths(system: System, state: HybridState) -> tuple[float | None, float | None]:
    """Current (l_L, l_R); None for an unloaded massless leg."""
    q, ph = state.q, state.phase
    if system.kind is ModelKind.EXTENDED:
        return float(q[3]), float(q[5])
    out: list[float | None] = [None, None]
    if ph.kind is PhaseKind.SINGLE:
        out[ph.leg] = float(q[0])
    elif ph.kind is PhaseKind.DOUBLE:
        p = system.vector(state)
        out[ph.leg] = float(q[0])
        out[1 - ph.leg] = float(q[0] + kn.ds_offset(system.code, p, q[1]))
    return out[0], out[1]


def _leg_rates(system: System, state: HybridState) -> tuple[float | None, float | None]:
    q, qd, ph = state.q, state.q_dot, state.phase
    if system.kind is ModelKind.EXTENDED:
        return float(qd[3]), float(qd[5])
    out: list[float | None] = [None, None]
    if ph.kind is PhaseKind.SINGLE:
        out[ph.leg] = float(qd[0])
    elif ph.kind is PhaseKind.DOUBLE:
        out[0] = out[1] = float(qd[0])
    return out[0], out[1]


def leg_force(system: System, state: HybridState, leg: int) -> LegForce:
    """Axial spring-damper force, positive when pushing.

    For an unloaded massless leg the force is zero (it follows its neutral
    length exactly).
    """
    l = leg_lengths(system, state)[leg]
    if l is None:
        return LegForce(0.0)
    ld = _leg_rates(system, state)[leg]
    ln, lnd, _ = kn.neutral_length_kernel(state.t, leg, *system.profile.as_tuple())
    return LegForce(force_value(system.params, ln, lnd, l, ld))


def vector_field(system: System, state: HybridState) -> np.ndarray:
    """Generalized accelerations for the state's phase."""
    _check_state(system, state)
    out = np.empty(state.q.size * 2)
    kn.rhs(system.code, state.phase.mode, state.t, state.y, system.vector(state), out)
    if not np.all(np.isfinite(out)):
        raise DomainError("non-finite accelerations (singular configuration)")
    return out[state.q.size :]


def event_functions(system: System, state: HybridState, armed: int | None = None) -> np.ndarray:
    """Guard values ``[g0, g1, fall]``; a guard fires on a downward crossing.

    single support: g0 = swing-foot height, g1 = stance-leg force
    double support: g0 = trailing-leg force, g1 = leading-leg force
    flight (extended only): g0, g1 = left/right foot heights
    Unarmed touchdown guards read 1.
    """
    if armed is None:
        armed = 3
    out = np.empty(kn.NGUARD)
    kn.guards(system.code, state.phase.mode, state.t, state.y, system.vector(state, armed), out)
    return out


def mechanical_energy(system: System, state: HybridState) -> float:
    """Kinetic + gravitational + spring energy."""
    return float(kn.energy(system.code, state.phase.mode, state.t, state.y, system.vector(state)))


def power_terms(system: System, state: HybridState) -> tuple[float, float, float]:
    """(actuator power, damper dissipation, controller power)."""
    return kn.power(system.code, state.phase.mode, state.t, state.y, system.vector(state))


def pd_torque(gains: PdGains, joint_angle: float, joint_rate: float) -> float:
    return gains.kp * (gains.setpoint - joint_angle) - gains.kd * joint_rate


def com_position(system: System, state: HybridState) -> tuple[float, float]:
    """World-frame centre of mass."""
    q, ph = state.q, state.phase
    if system.kind is ModelKind.EXTENDED:
        p = system.vector(state)
        mt = system.params.torso_mass
        ml = system.params.leg_mass
        x, y = mt * q[0], mt * q[1]
        for leg in (LEFT, RIGHT):
            px, py = kn._leg_point(q, state.q_dot, p, leg, p[kn.LM])[:2]
            x += ml * px
            y += ml * py
        return x / system.params.total_mass, y / system.params.total_mass
    p = system.vector(state)
    sig = kn.sign_of(ph.leg)
    cx, cy = kn.com_simple(system.code, p, sig, q[0], q[1])
    return state.foot_anchors[ph.leg] + cx, cy


def com_velocity(system: System, state: HybridState, eps: float = 1e-7) -> np.ndarray:
    """CoM velocity by differentiating the position along the state velocity."""
    y = state.y
    n = state.q.size
    dy = np.concatenate([state.q_dot, np.zeros(n)])
    hi = HybridState.from_y(y + eps * dy, state.phase, state.t, state.foot_anchors)
    lo = HybridState.from_y(y - eps * dy, state.phase, state.t, state.foot_anchors)
    return (np.array(com_position(system, hi)) - np.array(com_position(system, lo))) / (2 * eps)


def foot_position(system: System, state: HybridState, leg: int) -> tuple[float, float]:
    """World position of a foot (swing legs of the simplified kinds follow l_n)."""
    q, ph = state.q, state.phase
    p = system.vector(state)
    if system.kind is ModelKind.EXTENDED:
        return kn.ext_foot(state.y, p, leg)
    if leg_planted(ph, leg):
        return state.foot_anchors[leg], 0.0
    ln, _, _ = kn.neutral_length_kernel(state.t, leg, *system.profile.as_tuple())
    sx, sy = kn.swing_foot_simple(system.code, p, kn.sign_of(ph.leg), q[0], q[1], ln)
    return state.foot_anchors[ph.leg] + sx, sy


def _check_state(system: System, state: HybridState) -> None:
    n = system.kind.n_coords
    if state.q.size != n or state.q_dot.size != n:
        raise DomainError(f"{system.kind.value} expects {n} coordinates, got {state.q.size}")
    if system.kind is not ModelKind.EXTENDED:
        if state.phase.kind is PhaseKind.FLIGHT:
            raise DomainError("simplified models have no flight phase")
        if state.q[0] <= 1e-6:
            raise DomainError("leg length must be positive")
    elif state.q[3] <= 1e-6 or state.q[5] <= 1e-6:
        raise DomainError("leg length must be positive")


# ---------------------------------------------------------------------------
# discrete transitions


def _project_constraints(system: System, y: np.ndarray, mode: int, p: np.ndarray) -> np.ndarray:
    """Remove the velocity component violating the planted-foot constraints
    (perfectly inelastic foot contact for a leg that carries mass)."""
    q, qd = y[:7], y[7:]
    jc, _ = kn._ext_constraints(mode, q, qd, p)
    mm = kn.ext_mass(q, p)
    minv_jt = np.linalg.solve(mm, jc.T)
    lam = np.linalg.solve(jc @ minv_jt, jc @ qd)
    out = y.copy()
    out[7:] = qd - minv_jt @ lam
    return out


def reset_map(
    system: System, state: HybridState, event: Event, strict: bool = True
) -> HybridState:
    """Apply the discrete transition triggered by ``event``.

    With ``strict`` a touchdown requires the foot to be at ground level; the
    simulator relaxes this when a guard is armed with the foot already below
    the ground.
    """
    if event is Event.FELL:
        raise DomainError("a fall has no successor state")
    q, qd, ph, t = state.q.copy(), state.q_dot.copy(), state.phase, state.t
    anchors = list(state.foot_anchors)
    p = system.vector(state)
    if system.kind is ModelKind.EXTENDED:
        return _reset_extended(system, state, event, p, strict)
    if ph.kind is PhaseKind.SINGLE:
        st = ph.leg
        sig = kn.sign_of(st)
        if event is Event.FLIGHT:
            raise DomainError("stance leg unloaded: simplified models cannot enter flight")
        if event is not Event.TOUCHDOWN:
            raise DomainError(f"{event.value} is not a single-support event")
        ln_sw, _, _ = kn.neutral_length_kernel(t, 1 - st, *system.profile.as_tuple())
        sx, sy = kn.swing_foot_simple(system.code, p, sig, q[0], q[1], ln_sw)
        if strict and abs(sy) > 1e-6:
            raise DomainError(f"touchdown requested with swing foot at height {sy:.3g} m")
        anchors[1 - st] = anchors[st] + sx
        # the 1-DoF double-support chart only admits motion along the leg
        rho, d = system.params.half_width, system.params.torso_offset
        if system.kind is ModelKind.FIXED_HIP:
            ld = qd[0] + sig * rho * qd[1]
        else:
            ld = qd[0] + (-sig * rho * math.cos(q[1]) - d * math.sin(q[1])) * qd[1]
        return HybridState(
            np.array([q[0], q[1]]), np.array([ld, 0.0]), Phase.double(st), t, tuple(anchors)
        )
    if ph.kind is PhaseKind.DOUBLE:
        tr = ph.leg
        if event is Event.LIFTOFF:
            dl = kn.ds_offset(system.code, p, q[1])
            return HybridState(
                np.array([q[0] + dl, q[1]]), np.array([qd[0], 0.0]), Phase.single(1 - tr), t,
                tuple(anchors),
            )
        if event is Event.LEAD_LIFTOFF:
            return HybridState(q, np.array([qd[0], 0.0]), Phase.single(tr), t, tuple(anchors))
    raise DomainError(f"no transition for {event.value} in phase {ph}")


def _reset_extended(system: System, state: HybridState, event: Event, p, strict) -> HybridState:
    ph, t = state.phase, state.t
    y = state.y
    anchors = list(state.foot_anchors)

    def land(leg, new_phase):
        fx, fy = kn.ext_foot(y, p, leg)
        if strict and abs(fy) > 1e-6:
            raise DomainError(f"touchdown requested with foot at height {fy:.3g} m")
        anchors[leg] = fx
        pp = p.copy()
        pp[kn.FOOT_L], pp[kn.FOOT_R] = anchors
        pp[kn.SIGMA] = _sigma(new_phase)
        yn = _project_constraints(system, y, new_phase.mode, pp)
        return HybridState.from_y(yn, new_phase, t, anchors)

    if ph.kind is PhaseKind.SINGLE:
        if event is Event.TOUCHDOWN:
            return land(1 - ph.leg, Phase.double(ph.leg))
        if event is Event.FLIGHT:
            return HybridState.from_y(y, Phase.flight(), t, anchors)
    elif ph.kind is PhaseKind.DOUBLE:
        if event is Event.LIFTOFF:
            return HybridState.from_y(y, Phase.single(1 - ph.leg), t, anchors)
        if event is Event.LEAD_LIFTOFF:
            return HybridState.from_y(y, Phase.single(ph.leg), t, anchors)
    elif ph.kind is PhaseKind.FLIGHT and event in (Event.TOUCHDOWN,):
        raise DomainError("flight touchdown needs the landing leg; use land_from_flight")
    raise DomainError(f"no transition for {event.value} in phase {ph}")


def land_from_flight(system: System, state: HybridState, leg: int) -> HybridState:
    y = state.y
    p = system.vector(state)
    anchors = list(state.foot_anchors)
    anchors[leg] = kn.ext_foot(y, p, leg)[0]
    pp = p.copy()
    pp[kn.FOOT_L], pp[kn.FOOT_R] = anchors
    ph = Phase.single(leg)
    yn = _project_constraints(system, y, ph.mode, pp)
    return HybridState.from_y(yn, ph, state.t, anchors)


def classify_guard(phase: Phase, index: int) -> Event:
    """Map a guard index to its event for a given phase."""
    if index == 2:
        return Event.FELL
    if phase.kind is PhaseKind.SINGLE:
        return Event.TOUCHDOWN if index == 0 else Event.FLIGHT
    if phase.kind is PhaseKind.DOUBLE:
        return Event.LIFTOFF if index == 0 else Event.LEAD_LIFTOFF
    return Event.TOUCHDOWN


# ---------------------------------------------------------------------------
# extended-model coordinate helpers


def extended_named(state: HybridState) -> dict[str, float]:
    """Express an extended state in stance/swing terms: torso position,
    stance leg length, stance ankle angle, stance and swing hip angles, swing
    leg length (hip angles are leg angles relative to the pelvis normal)."""
    q = state.q
    st = state.phase.leg if state.phase.leg is not None else LEFT
    sw = 1 - st
    return {
        "x": float(q[0]),
        "y": float(q[1]),
        "l_st": float(q[3 + 2 * st]),
        "theta_a_st": float(q[4 + 2 * st]),
        "theta_h_st": float(q[4 + 2 * st] + q[2]),
        "l_sw": float(q[3 + 2 * sw]),
        "theta_h_sw": float(q[4 + 2 * sw] + q[2]),
    }


def mirror_state(system: System, state: HybridState) -> HybridState:
    """Lateral reflection x -> -x with left/right swapped."""
    ph = state.phase
    new_leg = None if ph.leg is None else 1 - ph.leg
    nph = Phase(ph.kind, new_leg)
    anchors = (-state.foot_anchors[1], -state.foot_anchors[0])
    q, qd = state.q.copy(), state.q_dot.copy()
    if system.kind is ModelKind.EXTENDED:
        perm = [0, 1, 2, 5, 6, 3, 4]
        flip = np.array([-1, 1, -1, 1, -1, 1, -1], dtype=float)
        q, qd = q[perm] * flip, qd[perm] * flip
    else:
        q[1], qd[1] = -q[1], -qd[1]
    return HybridState(q, qd, nph, state.t, anchors)


def static_state(system: System, stance: int = RIGHT, t: float = 0.0) -> HybridState:
    """Upright single-support state at static deflection, at rest."""
    params = system.params
    l = params.rest_length_max - params.static_deflection
    if system.kind is not ModelKind.EXTENDED:
        return HybridState(np.array([l, 0.0]), np.zeros(2), Phase.single(stance), t, (0.0, 0.0))
    sig = kn.sign_of(stance)
    rho, d = params.half_width, params.torso_offset
    q = np.zeros(7)
    q[3 + 2 * stance] = l
    ln_sw, _, _ = kn.neutral_length_kernel(t, 1 - stance, *system.profile.as_tuple())
    q[3 + 2 * (1 - stance)] = ln_sw
    # torso above the stance hip; stance foot at the origin
    q[0] = -sig * rho
    q[1] = l + d
    anchors = [0.0, 0.0]
    anchors[1 - stance] = -2.0 * sig * rho
    return HybridState(q, np.zeros(7), Phase.single(stance), t, tuple(anchors))


def with_time(state: HybridState, t: float) -> HybridState:
    return replace(state, t=float(t))
