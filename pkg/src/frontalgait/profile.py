"""Periodic neutral leg length program.

Each leg spends ``swing_fraction`` of the stride retracting and re-extending
(two mirrored quintic segments) and the rest of the stride at ``l0``. The
right leg runs half a stride behind the left one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

LEFT, RIGHT = 0, 1


def stride_frequency_to_time(omega_s: float) -> float:
    if omega_s <= 0:
        raise ValueError("stride frequency must be positive")
    return 2.0 * math.pi / omega_s


def stride_time_to_frequency(stride_time: float) -> float:
    if stride_time <= 0:
        raise ValueError("stride time must be positive")
    return 2.0 * math.pi / stride_time


@dataclass(frozen=True)
class StrideProfile:
    stride_time: float
    rest_length_max: float
    retraction_depth: float
    swing_fraction: float = 0.5
    phase_offset: float = 0.0  # start of the left leg's swing window

    def __post_init__(self):
        if self.stride_time <= 0 or self.rest_length_max <= 0:
            raise ValueError("stride time and rest length must be positive")
        if not 0 <= self.retraction_depth < self.rest_length_max:
            raise ValueError("retraction depth must lie in [0, l0)")
        if not 0 < self.swing_fraction <= 1:
            raise ValueError("swing_fraction must lie in (0, 1]")

    @classmethod
    def for_model(cls, params, omega_s: float, swing_fraction: float = 0.5) -> "StrideProfile":
        l0 = params.rest_length_max
        return cls(
            stride_frequency_to_time(omega_s),
            l0,
            params.retraction_fraction * l0,
            swing_fraction,
        )

    @property
    def omega(self) -> float:
        return 2.0 * math.pi / self.stride_time

    def window_start(self, leg: int) -> float:
        return self.phase_offset + (0.5 * self.stride_time if leg == RIGHT else 0.0)

    def breakpoints(self) -> np.ndarray:
        """Segment joints within one stride, sorted, in [0, T)."""
        T, f = self.stride_time, self.swing_fraction
        pts = []
        for leg in (LEFT, RIGHT):
            s = self.window_start(leg)
            pts += [s, s + 0.5 * f * T, s + f * T]
        return np.unique(np.mod(np.array(pts), T))

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (
            self.stride_time,
            self.rest_length_max,
            self.retraction_depth,
            self.swing_fraction,
            self.phase_offset,
        )


@njit(cache=True)
def quintic(s):
    """Normalized rest-to-rest quintic: value, first and second derivative."""
    s2 = s * s
    return (
        s2 * s * (10.0 - 15.0 * s + 6.0 * s2),
        30.0 * s2 * (1.0 - 2.0 * s + s2),
        60.0 * s * (1.0 - 3.0 * s + 2.0 * s2),
    )


@njit(cache=True)
def neutral_length_kernel(t, leg, T, l0, depth, frac, phase):
    """(l_n, dl_n/dt, d2l_n/dt2) for one leg at time t."""
    start = phase + 0.5 * T * leg
    tau = (t - start) % T
    half = 0.5 * frac * T
    if depth == 0.0 or tau >= 2.0 * half:
        return l0, 0.0, 0.0
    if tau < half:
        v, dv, ddv = quintic(tau / half)
        return l0 - depth * v, -depth * dv / half, -depth * ddv / (half * half)
    v, dv, ddv = quintic((tau - half) / half)
    return l0 - depth + depth * v, depth * dv / half, depth * ddv / (half * half)


def neutral_length(profile: StrideProfile, t: float, leg: int) -> tuple[float, float]:
    if t < 0:
        raise ValueError("time must be non-negative")
    ln, lnd, _ = neutral_length_kernel(float(t), int(leg), *profile.as_tuple())
    return ln, lnd


def neutral_length_accel(profile: StrideProfile, t: float, leg: int) -> float:
    return neutral_length_kernel(float(t), int(leg), *profile.as_tuple())[2]


def dump_rows(profile: StrideProfile, n: int = 200, strides: float = 1.0):
    """Rows (t, l_n_left, l_n_dot_left, l_n_right, l_n_dot_right)."""
    ts = np.linspace(0.0, strides * profile.stride_time, n)
    rows = []
    for t in ts:
        a, ad = neutral_length(profile, t, LEFT)
        b, bd = neutral_length(profile, t, RIGHT)
        rows.append((float(t), a, ad, b, bd))
    return rows
