"""Model parameters, derived quantities and random model generation."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np


class DomainError(ValueError):
    """Raised when a parameter set or state is outside the physical domain."""


class ConfigError(ValueError):
    """Raised for malformed or incomplete parameter files."""

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class ModelKind(enum.Enum):
    FIXED_HIP = "fixed_hip"
    FIXED_ANKLE = "fixed_ankle"
    EXTENDED = "extended"

    @property
    def n_coords(self) -> int:
        return 7 if self is ModelKind.EXTENDED else 2

    @property
    def code(self) -> int:
        return _KIND_CODES[self]

    @classmethod
    def parse(cls, text: str) -> "ModelKind":
        key = text.strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {
            "fixedhip": cls.FIXED_HIP,
            "fixedankle": cls.FIXED_ANKLE,
            "free": cls.EXTENDED,
            "seven_dof": cls.EXTENDED,
        }
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown model kind {text!r}", key="kind") from None


_KIND_CODES = {ModelKind.FIXED_HIP: 0, ModelKind.FIXED_ANKLE: 1, ModelKind.EXTENDED: 2}


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of one model instance (SI units).

    ``leg_mass_fraction`` is the share of ``total_mass`` carried by both legs
    together; it must be zero for the two simplified kinds. A ``None``
    ``leg_mass_offset`` means half the resting leg length.
    """

    kind: ModelKind
    total_mass: float
    leg_stiffness: float
    rest_length_max: float
    hip_width: float
    damping_ratio: float = 0.1
    retraction_fraction: float = 0.2
    torso_offset: float = 0.2
    torso_radius_of_gyration: float | None = None
    leg_mass_fraction: float = 0.0
    leg_mass_offset: float | None = None
    gravity: float = 9.81

    def __post_init__(self):
        if not isinstance(self.kind, ModelKind):
            object.__setattr__(self, "kind", ModelKind.parse(str(self.kind)))
        if self.total_mass <= 0 or self.leg_stiffness <= 0 or self.rest_length_max <= 0:
            raise DomainError("mass, stiffness and rest length must be positive")
        if self.hip_width < 0:
            raise DomainError("hip width must be non-negative")
        if not 0 <= self.retraction_fraction < 1:
            raise DomainError("retraction_fraction must lie in [0, 1)")
        if not 0 <= self.leg_mass_fraction < 1:
            raise DomainError("leg_mass_fraction must lie in [0, 1)")
        if self.kind is not ModelKind.EXTENDED and self.leg_mass_fraction != 0:
            raise DomainError("simplified models have massless legs")
        if self.kind is ModelKind.EXTENDED and self.leg_mass_fraction <= 0:
            raise DomainError("the extended model needs leg mass")
        if self.damping_ratio < 0 or self.gravity <= 0:
            raise DomainError("damping ratio must be >= 0 and gravity > 0")
        if self.static_deflection >= self.rest_length_max:
            raise DomainError(
                f"static deflection {self.static_deflection:.4g} m exceeds "
                f"rest length {self.rest_length_max:.4g} m"
            )

    @property
    def half_width(self) -> float:
        return 0.5 * self.hip_width

    @property
    def static_deflection(self) -> float:
        return self.total_mass * self.gravity / self.leg_stiffness

    @property
    def lm(self) -> float:
        if self.leg_mass_offset is None:
            return 0.5 * self.rest_length_max
        return self.leg_mass_offset

    @property
    def torso_mass(self) -> float:
        return self.total_mass * (1.0 - self.leg_mass_fraction)

    @property
    def leg_mass(self) -> float:
        """Mass of a single leg (legs split the leg fraction evenly)."""
        return 0.5 * self.total_mass * self.leg_mass_fraction

    @property
    def torso_inertia(self) -> float:
        r = self.torso_radius_of_gyration or 0.0
        return self.torso_mass * r * r

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)


def extended_params(
    total_mass: float,
    leg_stiffness: float,
    rest_length_max: float,
    hip_width: float,
    **kw,
) -> ModelParams:
    """Extended-model parameters with the usual 30 % leg mass and r_g = 0.3 m."""
    kw.setdefault("leg_mass_fraction", 0.3)
    kw.setdefault("torso_radius_of_gyration", 0.3)
    return ModelParams(
        ModelKind.EXTENDED, total_mass, leg_stiffness, rest_length_max, hip_width, **kw
    )


@dataclass(frozen=True)
class DerivedQuantities:
    damping_coeff: float
    natural_frequency: float
    static_deflection: float
    effective_rest_length: float
    diag_leg_length: float
    pendulum_frequency: float


def derive(params: ModelParams) -> DerivedQuantities:
    m, k, g = params.total_mass, params.leg_stiffness, params.gravity
    dl = m * g / k
    l_eq = params.rest_length_max - dl
    if l_eq <= 0:
        raise DomainError("static deflection exceeds the resting leg length")
    rho = params.half_width
    l = math.sqrt(params.rest_length_max**2 + rho * rho)
    return DerivedQuantities(
        damping_coeff=2.0 * params.damping_ratio * math.sqrt(k * m),
        natural_frequency=math.sqrt(k / m),
        static_deflection=dl,
        effective_rest_length=l_eq,
        diag_leg_length=l,
        pendulum_frequency=math.sqrt(g / l),
    )


class Joint(enum.Enum):
    STANCE_ANKLE = "stance_ankle"
    STANCE_HIP = "stance_hip"
    SWING_HIP = "swing_hip"


@dataclass(frozen=True)
class PdGains:
    kp: float
    kd: float
    target_joint: Joint
    setpoint: float = 0.0

    def __post_init__(self):
        if self.kp < 0 or self.kd < 0:
            raise DomainError("PD gains must be non-negative")


def joint_inertia(params: ModelParams, joint: Joint) -> float:
    """Inertia seen by a joint controller at the nominal upright configuration."""
    dq = derive(params)
    rho, d = params.half_width, params.torso_offset
    mt, it = params.torso_mass, params.torso_inertia
    if joint is Joint.STANCE_ANKLE:
        a = dq.effective_rest_length + d
        return mt * (a * a + rho * rho) + it
    if joint is Joint.STANCE_HIP:
        return mt * (rho * rho + d * d) + it
    r = params.rest_length_max - params.lm
    return max(params.leg_mass, 1e-9) * r * r


def pd_gains(
    params: ModelParams, joint: Joint, kp: float, setpoint: float = 0.0, zeta: float = 0.1
) -> PdGains:
    """PD gains with kd chosen from a damping ratio about the joint inertia."""
    kd = 2.0 * zeta * math.sqrt(kp * joint_inertia(params, joint))
    return PdGains(kp, kd, joint, setpoint)


def active_gains(params: ModelParams) -> tuple[PdGains, ...]:
    """Stance-phase controller set used for the active-control comparison."""
    if params.kind is ModelKind.FIXED_HIP:
        return (pd_gains(params, Joint.STANCE_ANKLE, 150.0),)
    if params.kind is ModelKind.FIXED_ANKLE:
        return (pd_gains(params, Joint.STANCE_HIP, 300.0),)
    return (
        pd_gains(params, Joint.STANCE_ANKLE, 150.0),
        pd_gains(params, Joint.STANCE_HIP, 300.0),
        pd_gains(params, Joint.SWING_HIP, 500.0),
    )


def passive_gains(params: ModelParams) -> tuple[PdGains, ...]:
    # a massive swing leg always needs its placement controller
    if params.kind is ModelKind.EXTENDED:
        return (pd_gains(params, Joint.SWING_HIP, 500.0),)
    return ()


@dataclass(frozen=True)
class ParamRanges:
    """Sampling ranges for random models (defaults follow the study's table)."""

    mass: tuple[float, float] = (50.0, 100.0)
    stiffness: tuple[float, float] = (6000.0, 20000.0)
    rest_length: tuple[float, float] = (0.7, 1.2)
    natural_frequency: tuple[float, float] = (8.0, 20.0)
    # hip width = factor * predicted minimum width
    width_factor: tuple[float, float] = (1.3, 2.0)
    kind: ModelKind = ModelKind.FIXED_HIP


def min_hip_width_estimate(total_mass, leg_stiffness, rest_length_max, gravity=9.81) -> float:
    l_eq = rest_length_max - total_mass * gravity / leg_stiffness
    if l_eq <= 0:
        raise DomainError("static deflection exceeds the resting leg length")
    return 4.0 * math.sqrt(l_eq) / math.sqrt(leg_stiffness / total_mass)


def _uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    if hi < lo:
        raise DomainError(f"empty range ({lo}, {hi})")
    return lo if hi == lo else float(rng.uniform(lo, hi))


def random_model(ranges: ParamRanges, rng_seed: int | np.random.Generator) -> ModelParams:
    """Draw one model: natural frequency, then a stiffness compatible with the
    mass range, then rest length and a hip width above the predicted minimum."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    (m_lo, m_hi), (k_lo, k_hi) = ranges.mass, ranges.stiffness
    for _ in range(10_000):
        wn = _uniform(rng, *ranges.natural_frequency)
        # k = m * wn^2 must keep m inside its range
        lo, hi = max(k_lo, m_lo * wn * wn), min(k_hi, m_hi * wn * wn)
        if lo > hi * (1 + 1e-12):
            continue
        k = _uniform(rng, lo, max(lo, hi))
        m = min(max(k / (wn * wn), m_lo), m_hi)
        l0 = _uniform(rng, *ranges.rest_length)
        try:
            w_min = min_hip_width_estimate(m, k, l0)
        except DomainError:
            continue
        w = w_min * _uniform(rng, *ranges.width_factor)
        if ranges.kind is ModelKind.EXTENDED:
            return extended_params(m, k, l0, w)
        return ModelParams(ranges.kind, m, k, l0, w)
    raise DomainError("could not draw a model inside the requested ranges")


# ---------------------------------------------------------------------------
# key = value parameter files

_REQUIRED = ("kind", "total_mass", "leg_stiffness", "rest_length_max", "hip_width")


def parse_config(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        out[key] = value
    return out


def params_from_mapping(values: dict[str, str]) -> ModelParams:
    for key in _REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required key '{key}'", key=key)
    names = {f.name for f in fields(ModelParams)}
    kw: dict[str, object] = {}
    for key, raw in values.items():
        if key not in names:
            continue
        if key == "kind":
            kw[key] = ModelKind.parse(raw)
        elif raw.lower() in ("none", ""):
            kw[key] = None
        else:
            try:
                kw[key] = float(raw)
            except ValueError:
                raise ConfigError(f"key '{key}': not a number: {raw!r}", key=key) from None
    kind = kw["kind"]
    if kind is ModelKind.EXTENDED:
        kw.setdefault("leg_mass_fraction", 0.3)
        kw.setdefault("torso_radius_of_gyration", 0.3)
    try:
        return ModelParams(**kw)
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> tuple[ModelParams, dict[str, str]]:
    """Read a parameter file; returns the model and the raw key/value map."""
    values = parse_config(Path(path).read_text())
    return params_from_mapping(values), values


def dump_config(params: ModelParams) -> str:
    lines = []
    for f in fields(params):
        v = getattr(params, f.name)
        if isinstance(v, ModelKind):
            v = v.value
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
