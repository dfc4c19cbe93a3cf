import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from frontalgait.profile import (
    LEFT,
    RIGHT,
    StrideProfile,
    dump_rows,
    neutral_length,
    neutral_length_accel,
    quintic,
    stride_frequency_to_time,
    stride_time_to_frequency,
)

PROF = StrideProfile(0.3, 0.9, 0.18)


def test_trough_at_swing_window_midpoint():
    ln, lnd = neutral_length(PROF, 0.25 * 0.3, LEFT)
    assert ln == pytest.approx(0.72, abs=1e-14)
    assert lnd == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("t", [0.15, 0.2, 0.2999, 0.3])
def test_stance_window_constant(t):
    assert neutral_length(PROF, t, LEFT) == (0.9, 0.0)


def test_quintic_midpoint_and_segment_midpoint():
    assert quintic(0.5)[0] == pytest.approx(0.5, abs=1e-15)
    ln, _ = neutral_length(PROF, 0.5 * 0.075, LEFT)
    assert ln == pytest.approx(0.9 - 0.09, abs=1e-14)


def test_right_leg_half_stride_behind():
    for t in np.linspace(0, 0.6, 37):
        assert neutral_length(PROF, t + 0.15, RIGHT) == pytest.approx(neutral_length(PROF, t, LEFT), abs=1e-12)


def test_frequency_time_conversions():
    assert stride_frequency_to_time(2 * math.pi) == pytest.approx(1.0, abs=1e-15)
    assert stride_time_to_frequency(0.3) == pytest.approx(20.944, abs=1e-3)
    with pytest.raises(ValueError):
        stride_frequency_to_time(0.0)


@given(st.floats(0.1, 200.0))
def test_frequency_round_trip(w):
    assert stride_time_to_frequency(stride_frequency_to_time(w)) == pytest.approx(w, rel=1e-14)


def test_derivative_matches_finite_difference():
    joints = PROF.breakpoints()
    h = 1e-7
    for t in np.linspace(0.001, 0.599, 400):
        if np.min(np.abs(np.mod(t, 0.3) - np.append(joints, 0.3))) < 1e-4:
            continue
        for leg in (LEFT, RIGHT):
            fd = (neutral_length(PROF, t + h, leg)[0] - neutral_length(PROF, t - h, leg)[0]) / (2 * h)
            lnd = neutral_length(PROF, t, leg)[1]
            assert abs(fd - lnd) < 1e-6 * max(1.0, abs(lnd))


def test_periodic():
    for t in np.linspace(0, 0.3, 101):
        for leg in (LEFT, RIGHT):
            a = neutral_length(PROF, t, leg)
            b = neutral_length(PROF, t + 0.3, leg)
            assert abs(a[0] - b[0]) < 1e-12 and abs(a[1] - b[1]) < 1e-9


def test_c2_at_segment_joints():
    eps = 1e-9
    for tj in PROF.breakpoints():
        tj = float(tj) + 0.3  # keep t positive on the left side
        for leg in (LEFT, RIGHT):
            lo = neutral_length(PROF, tj - eps, leg), neutral_length_accel(PROF, tj - eps, leg)
            hi = neutral_length(PROF, tj + eps, leg), neutral_length_accel(PROF, tj + eps, leg)
            assert abs(lo[0][0] - hi[0][0]) < 1e-9
            assert abs(lo[0][1] - hi[0][1]) < 1e-6
            assert abs(lo[1] - hi[1]) < 1e-3


def test_rate_exactly_zero_at_window_ends():
    T, f = PROF.stride_time, PROF.swing_fraction
    for t in (0.0, f * T, T):
        assert neutral_length(PROF, t, LEFT)[1] == 0.0
        assert neutral_length_accel(PROF, t, LEFT) == 0.0


@given(st.floats(0.0, 10.0), st.sampled_from([LEFT, RIGHT]))
def test_bounds(t, leg):
    ln, _ = neutral_length(PROF, t, leg)
    assert 0.72 - 1e-12 <= ln <= 0.9 + 1e-12


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        neutral_length(PROF, -0.1, LEFT)


def test_invalid_profile_rejected():
    with pytest.raises(ValueError):
        StrideProfile(0.3, 0.9, 0.95)
    with pytest.raises(ValueError):
        StrideProfile(0.3, 0.9, 0.1, swing_fraction=0.0)


def test_dump_rows_columns():
    rows = dump_rows(PROF, n=11)
    assert len(rows) == 11 and len(rows[0]) == 5
    assert rows[0][0] == 0.0 and rows[-1][0] == pytest.approx(0.3)
