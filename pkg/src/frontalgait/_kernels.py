"""Compiled equations of motion, guards and energy bookkeeping.

All kernels share one flat float64 parameter vector (layout below) so that a
single compiled integrator serves every model kind and contact mode.

Simplified kinds use the state ``[l, angle, l_dot, angle_dot]``:
fixed hip -> angle is the stance-leg (ankle) angle from vertical,
fixed ankle -> angle is the pelvis roll angle. In double support the state is
``[l_trailing, frozen angle, l_dot, 0]``.

The extended kind uses ``[x, y, phi, l_L, beta_L, l_R, beta_R]`` plus rates:
torso-mass position, pelvis roll (counter-clockwise), leg lengths and
absolute leg angles (foot-to-hip direction ``(sin b, cos b)``).
"""

import math

import numpy as np
from numba import njit

from .profile import neutral_length_kernel

# parameter vector layout
M_TOT, K, B, G, L0, DEPTH, T, FRAC, PHASE = 0, 1, 2, 3, 4, 5, 6, 7, 8
RHO, D, RG2, LEG_FRAC, LM = 9, 10, 11, 12, 13
SIGMA, FOOT_L, FOOT_R = 14, 15, 16
KP_A, KD_A, SP_A, KP_H, KD_H, SP_H, KP_S, KD_S, SP_S = 17, 18, 19, 20, 21, 22, 23, 24, 25
BAUM, FALL_H, ARMED = 26, 27, 28
NPAR = 32

FIXED_HIP, FIXED_ANKLE, EXTENDED = 0, 1, 2
SS_LEFT, SS_RIGHT, DOUBLE, FLIGHT = 0, 1, 2, 3
NGUARD = 3

# event codes reported by the integrator
EV_NONE, EV_GUARD0, EV_GUARD1, EV_GUARD2 = -1, 0, 1, 2
ST_DONE, ST_EVENT, ST_FAIL, ST_BUFFER = 0, 1, 2, 3


@njit(cache=True)
def sign_of(leg):
    return -1.0 if leg == 0 else 1.0


@njit(cache=True)
def leg_of(sigma):
    return 0 if sigma < 0 else 1


@njit(cache=True)
def neutral(p, t, leg):
    return neutral_length_kernel(t, leg, p[T], p[L0], p[DEPTH], p[FRAC], p[PHASE])


@njit(cache=True)
def spring_force(p, ln, lnd, l, ld):
    return p[K] * (ln - l) + p[B] * (lnd - ld)


@njit(cache=True)
def armed(p, leg):
    return (int(p[ARMED]) >> leg) & 1 == 1


@njit(cache=True)
def ds_offset(kind, p, ang):
    """Leading minus trailing leg length in double support."""
    sig = p[SIGMA]
    if kind == FIXED_HIP:
        return 2.0 * sig * p[RHO] * math.tan(ang)
    return -2.0 * sig * p[RHO] * math.sin(ang)


# ---------------------------------------------------------------------------
# simplified models


@njit(cache=True)
def _simple_mass(kind, p, sig, l, ang):
    """(m11, m12, m22) of the single-support mass matrix."""
    m = p[M_TOT]
    inertia = m * p[RG2]
    rho, d = p[RHO], p[D]
    if kind == FIXED_HIP:
        c = -sig * rho
        a = l + d
        return m, -m * c, m * (c * c + a * a) + inertia
    ayp = -sig * rho * math.cos(ang) - d * math.sin(ang)
    return m, m * ayp, m * (rho * rho + d * d) + inertia


@njit(cache=True)
def com_height_simple(kind, p, sig, l, ang):
    rho, d = p[RHO], p[D]
    if kind == FIXED_HIP:
        return (l + d) * math.cos(ang) + sig * rho * math.sin(ang)
    return l - sig * rho * math.sin(ang) + d * math.cos(ang)


@njit(cache=True)
def com_simple(kind, p, sig, l, ang):
    """CoM position relative to the stance (or trailing) foot."""
    rho, d = p[RHO], p[D]
    if kind == FIXED_HIP:
        a = l + d
        c = -sig * rho
        return a * math.sin(ang) + c * math.cos(ang), a * math.cos(ang) - c * math.sin(ang)
    ca, sa = math.cos(ang), math.sin(ang)
    return -sig * rho * ca - d * sa, l - sig * rho * sa + d * ca


@njit(cache=True)
def swing_foot_simple(kind, p, sig, l, ang, ln_sw):
    """Swing foot position relative to the stance foot (massless swing leg)."""
    rho = p[RHO]
    if kind == FIXED_HIP:
        c = -sig * rho
        return (l - ln_sw) * math.sin(ang) + 2.0 * c * math.cos(ang), (
            (l - ln_sw) * math.cos(ang) + 2.0 * sig * rho * math.sin(ang)
        )
    return -2.0 * sig * rho * math.cos(ang), l - 2.0 * sig * rho * math.sin(ang) - ln_sw


@njit(cache=True)
def _simple_pd(kind, p, ang, angd):
    if kind == FIXED_HIP:
        return p[KP_A] * (p[SP_A] - ang) - p[KD_A] * angd
    return p[KP_H] * (p[SP_H] - ang) - p[KD_H] * angd


@njit(cache=True)
def rhs_simple(kind, mode, t, y, p, out):
    m, g = p[M_TOT], p[G]
    l, ang, ld, angd = y[0], y[1], y[2], y[3]
    out[0] = ld
    out[1] = angd
    if mode == DOUBLE:
        sig = p[SIGMA]
        tr = leg_of(sig)
        dl = ds_offset(kind, p, ang)
        ln1, lnd1, _ = neutral(p, t, tr)
        ln2, lnd2, _ = neutral(p, t, 1 - tr)
        f = spring_force(p, ln1, lnd1, l, ld) + spring_force(p, ln2, lnd2, l + dl, ld)
        grav = m * g * math.cos(ang) if kind == FIXED_HIP else m * g
        out[2] = (f - grav) / m
        out[3] = 0.0
        return
    leg = 0 if mode == SS_LEFT else 1
    sig = sign_of(leg)
    ln, lnd, _ = neutral(p, t, leg)
    f = spring_force(p, ln, lnd, l, ld)
    tau = _simple_pd(kind, p, ang, angd)
    m11, m12, m22 = _simple_mass(kind, p, sig, l, ang)
    rho, d = p[RHO], p[D]
    if kind == FIXED_HIP:
        c = -sig * rho
        a = l + d
        r1 = f - m * g * math.cos(ang) + m * a * angd * angd
        r2 = m * g * (a * math.sin(ang) + c * math.cos(ang)) + tau - 2.0 * m * a * ld * angd
    else:
        ay = -sig * rho * math.sin(ang) + d * math.cos(ang)
        ayp = -sig * rho * math.cos(ang) - d * math.sin(ang)
        r1 = f - m * g + m * angd * angd * ay
        r2 = -m * g * ayp + tau
    det = m11 * m22 - m12 * m12
    out[2] = (m22 * r1 - m12 * r2) / det
    out[3] = (m11 * r2 - m12 * r1) / det


@njit(cache=True)
def guards_simple(kind, mode, t, y, p, out):
    l, ang, ld = y[0], y[1], y[2]
    if mode == DOUBLE:
        sig = p[SIGMA]
        tr = leg_of(sig)
        dl = ds_offset(kind, p, ang)
        ln1, lnd1, _ = neutral(p, t, tr)
        ln2, lnd2, _ = neutral(p, t, 1 - tr)
        out[0] = spring_force(p, ln1, lnd1, l, ld)
        out[1] = spring_force(p, ln2, lnd2, l + dl, ld)
        out[2] = com_height_simple(kind, p, sig, l, ang) - p[FALL_H]
        return
    leg = 0 if mode == SS_LEFT else 1
    sig = sign_of(leg)
    if armed(p, 1 - leg):
        ln_sw, _, _ = neutral(p, t, 1 - leg)
        out[0] = swing_foot_simple(kind, p, sig, l, ang, ln_sw)[1]
    else:
        out[0] = 1.0
    ln, lnd, _ = neutral(p, t, leg)
    out[1] = spring_force(p, ln, lnd, l, ld)
    out[2] = com_height_simple(kind, p, sig, l, ang) - p[FALL_H]


@njit(cache=True)
def energy_simple(kind, mode, t, y, p):
    """Kinetic + gravitational + stored spring energy."""
    m, g, k = p[M_TOT], p[G], p[K]
    l, ang, ld, angd = y[0], y[1], y[2], y[3]
    if mode == DOUBLE:
        sig = p[SIGMA]
        tr = leg_of(sig)
        dl = ds_offset(kind, p, ang)
        ln1, _, _ = neutral(p, t, tr)
        ln2, _, _ = neutral(p, t, 1 - tr)
        kin = 0.5 * m * ld * ld
        spr = 0.5 * k * ((ln1 - l) ** 2 + (ln2 - l - dl) ** 2)
        return kin + m * g * com_height_simple(kind, p, sig, l, ang) + spr
    leg = 0 if mode == SS_LEFT else 1
    sig = sign_of(leg)
    m11, m12, m22 = _simple_mass(kind, p, sig, l, ang)
    kin = 0.5 * (m11 * ld * ld + 2.0 * m12 * ld * angd + m22 * angd * angd)
    ln, _, _ = neutral(p, t, leg)
    return kin + m * g * com_height_simple(kind, p, sig, l, ang) + 0.5 * k * (ln - l) ** 2


@njit(cache=True)
def power_simple(kind, mode, t, y, p):
    """(actuator power, damper dissipation, controller power)."""
    l, ang, ld, angd = y[0], y[1], y[2], y[3]
    b = p[B]
    if mode == DOUBLE:
        tr = leg_of(p[SIGMA])
        dl = ds_offset(kind, p, ang)
        ln1, lnd1, _ = neutral(p, t, tr)
        ln2, lnd2, _ = neutral(p, t, 1 - tr)
        f1 = spring_force(p, ln1, lnd1, l, ld)
        f2 = spring_force(p, ln2, lnd2, l + dl, ld)
        return f1 * lnd1 + f2 * lnd2, b * ((lnd1 - ld) ** 2 + (lnd2 - ld) ** 2), 0.0
    leg = 0 if mode == SS_LEFT else 1
    ln, lnd, _ = neutral(p, t, leg)
    f = spring_force(p, ln, lnd, l, ld)
    return f * lnd, b * (lnd - ld) ** 2, _simple_pd(kind, p, ang, angd) * angd


# ---------------------------------------------------------------------------
# extended (7 coordinate) model


@njit(cache=True)
def _leg_point(q, qd, p, leg, s_off):
    """Position, Jacobian rows and bias acceleration of the point at distance
    ``l - s_off`` below the hip along leg ``leg``."""
    sig = sign_of(leg)
    rho, d = p[RHO], p[D]
    x, yy, phi = q[0], q[1], q[2]
    il, ib = 3 + 2 * leg, 4 + 2 * leg
    l, beta = q[il], q[ib]
    phid, ld, bd = qd[2], qd[il], qd[ib]
    sp, cp = math.sin(phi), math.cos(phi)
    sb, cb = math.sin(beta), math.cos(beta)
    s = l - s_off
    px = x + d * sp + sig * rho * cp - s * sb
    py = yy - d * cp + sig * rho * sp - s * cb
    jx = np.zeros(7)
    jy = np.zeros(7)
    jx[0] = 1.0
    jy[1] = 1.0
    jx[2] = d * cp - sig * rho * sp
    jy[2] = d * sp + sig * rho * cp
    jx[il] = -sb
    jy[il] = -cb
    jx[ib] = -s * cb
    jy[ib] = s * sb
    bx = phid * phid * (-d * sp - sig * rho * cp) - 2.0 * ld * bd * cb + s * bd * bd * sb
    by = phid * phid * (d * cp - sig * rho * sp) + 2.0 * ld * bd * sb + s * bd * bd * cb
    return px, py, jx, jy, bx, by


@njit(cache=True)
def planted_mask(mode):
    if mode == SS_LEFT:
        return True, False
    if mode == SS_RIGHT:
        return False, True
    if mode == DOUBLE:
        return True, True
    return False, False


@njit(cache=True)
def ext_mass(q, p):
    mt = p[M_TOT] * (1.0 - p[LEG_FRAC])
    ml = 0.5 * p[M_TOT] * p[LEG_FRAC]
    mm = np.zeros((7, 7))
    mm[0, 0] = mt
    mm[1, 1] = mt
    mm[2, 2] = mt * p[RG2]
    qd = np.zeros(7)
    for leg in range(2):
        _, _, jx, jy, _, _ = _leg_point(q, qd, p, leg, p[LM])
        mm += ml * (np.outer(jx, jx) + np.outer(jy, jy))
    return mm


@njit(cache=True)
def _ext_forces(mode, t, q, qd, p):
    """Mass matrix, generalized forces minus velocity terms."""
    mt = p[M_TOT] * (1.0 - p[LEG_FRAC])
    ml = 0.5 * p[M_TOT] * p[LEG_FRAC]
    g = p[G]
    mm = np.zeros((7, 7))
    mm[0, 0] = mt
    mm[1, 1] = mt
    mm[2, 2] = mt * p[RG2]
    rhs = np.zeros(7)
    rhs[1] = -mt * g
    planted = planted_mask(mode)
    for leg in range(2):
        _, _, jx, jy, bx, by = _leg_point(q, qd, p, leg, p[LM])
        mm += ml * (np.outer(jx, jx) + np.outer(jy, jy))
        rhs -= ml * (jx * bx + jy * by)
        rhs -= ml * g * jy
        il, ib = 3 + 2 * leg, 4 + 2 * leg
        ln, lnd, _ = neutral(p, t, leg)
        rhs[il] += spring_force(p, ln, lnd, q[il], qd[il])
        if planted[leg]:
            tau = p[KP_A] * (p[SP_A] - q[ib]) - p[KD_A] * qd[ib]
            rhs[ib] += tau
        else:
            tau = p[KP_S] * (p[SP_S] - q[ib]) - p[KD_S] * qd[ib]
            rhs[ib] += tau
            rhs[2] += tau
    # pelvis levelling through the stance (or trailing) hip
    if mode != FLIGHT:
        st = 0 if mode == SS_LEFT else (1 if mode == SS_RIGHT else leg_of(p[SIGMA]))
        tau = p[KP_H] * (p[SP_H] - q[2]) - p[KD_H] * qd[2]
        rhs[2] += tau
        rhs[4 + 2 * st] += tau
    return mm, rhs


@njit(cache=True)
def _ext_constraints(mode, q, qd, p):
    planted = planted_mask(mode)
    nc = 2 * (int(planted[0]) + int(planted[1]))
    jc = np.zeros((nc, 7))
    rc = np.zeros(nc)
    alpha = p[BAUM]
    row = 0
    for leg in range(2):
        if not planted[leg]:
            continue
        px, py, jx, jy, bx, by = _leg_point(q, qd, p, leg, 0.0)
        anchor = p[FOOT_L] if leg == 0 else p[FOOT_R]
        jc[row] = jx
        jc[row + 1] = jy
        vx = np.dot(jx, qd)
        vy = np.dot(jy, qd)
        rc[row] = -bx - 2.0 * alpha * vx - alpha * alpha * (px - anchor)
        rc[row + 1] = -by - 2.0 * alpha * vy - alpha * alpha * py
        row += 2
    return jc, rc


@njit(cache=True)
def ext_solve(mode, t, y, p):
    """Accelerations and ground reaction forces (fx, fy per planted foot,
    in left-to-right order) from the constrained equations of motion."""
    q = y[:7]
    qd = y[7:]
    mm, rhs = _ext_forces(mode, t, q, qd, p)
    jc, rc = _ext_constraints(mode, q, qd, p)
    nc = jc.shape[0]
    n = 7 + nc
    a = np.zeros((n, n))
    a[:7, :7] = mm
    a[:7, 7:] = jc.T
    a[7:, :7] = jc
    r = np.zeros(n)
    r[:7] = rhs
    r[7:] = rc
    sol = np.linalg.solve(a, r)
    return sol[:7], -sol[7:]


@njit(cache=True)
def rhs_ext(mode, t, y, p, out):
    qdd, _ = ext_solve(mode, t, y, p)
    out[:7] = y[7:]
    out[7:] = qdd


@njit(cache=True)
def ext_foot(y, p, leg):
    px, py, _, _, _, _ = _leg_point(y[:7], y[7:], p, leg, 0.0)
    return px, py


@njit(cache=True)
def guards_ext(mode, t, y, p, out):
    """Like the simplified guards, but contact unloading is judged by the
    vertical ground reaction, which with a massive leg differs from the
    spring force by the leg's weight and inertia."""
    fall = y[1] - p[FALL_H]
    if mode == FLIGHT:
        for leg in range(2):
            out[leg] = ext_foot(y, p, leg)[1] if armed(p, leg) else 1.0
        out[2] = fall
        return
    _, grf = ext_solve(mode, t, y, p)
    if mode == DOUBLE:
        tr = leg_of(p[SIGMA])
        out[0] = grf[2 * tr + 1]
        out[1] = grf[2 * (1 - tr) + 1]
        out[2] = fall
        return
    st = 0 if mode == SS_LEFT else 1
    sw = 1 - st
    out[0] = ext_foot(y, p, sw)[1] if armed(p, sw) else 1.0
    out[1] = grf[1]
    out[2] = fall


@njit(cache=True)
def energy_ext(mode, t, y, p):
    q = y[:7]
    qd = y[7:]
    mm = ext_mass(q, p)
    kin = 0.5 * np.dot(qd, mm @ qd)
    mt = p[M_TOT] * (1.0 - p[LEG_FRAC])
    ml = 0.5 * p[M_TOT] * p[LEG_FRAC]
    pot = mt * p[G] * q[1]
    for leg in range(2):
        py = _leg_point(q, qd, p, leg, p[LM])[1]
        pot += ml * p[G] * py
        ln, _, _ = neutral(p, t, leg)
        pot += 0.5 * p[K] * (ln - q[3 + 2 * leg]) ** 2
    return kin + pot


@njit(cache=True)
def power_ext(mode, t, y, p):
    q = y[:7]
    qd = y[7:]
    act = 0.0
    dis = 0.0
    ctl = 0.0
    planted = planted_mask(mode)
    for leg in range(2):
        il, ib = 3 + 2 * leg, 4 + 2 * leg
        ln, lnd, _ = neutral(p, t, leg)
        act += spring_force(p, ln, lnd, q[il], qd[il]) * lnd
        dis += p[B] * (lnd - qd[il]) ** 2
        if planted[leg]:
            ctl += (p[KP_A] * (p[SP_A] - q[ib]) - p[KD_A] * qd[ib]) * qd[ib]
        else:
            tau = p[KP_S] * (p[SP_S] - q[ib]) - p[KD_S] * qd[ib]
            ctl += tau * (qd[ib] + qd[2])
    if mode != FLIGHT:
        st = 0 if mode == SS_LEFT else (1 if mode == SS_RIGHT else leg_of(p[SIGMA]))
        tau = p[KP_H] * (p[SP_H] - q[2]) - p[KD_H] * qd[2]
        ctl += tau * (qd[2] + qd[4 + 2 * st])
    return act, dis, ctl


# ---------------------------------------------------------------------------
# dispatch


@njit(cache=True)
def rhs(kind, mode, t, y, p, out):
    if kind == EXTENDED:
        rhs_ext(mode, t, y, p, out)
    else:
        rhs_simple(kind, mode, t, y, p, out)


@njit(cache=True)
def guards(kind, mode, t, y, p, out):
    if kind == EXTENDED:
        guards_ext(mode, t, y, p, out)
    else:
        guards_simple(kind, mode, t, y, p, out)


@njit(cache=True)
def energy(kind, mode, t, y, p):
    if kind == EXTENDED:
        return energy_ext(mode, t, y, p)
    return energy_simple(kind, mode, t, y, p)


@njit(cache=True)
def power(kind, mode, t, y, p):
    if kind == EXTENDED:
        return power_ext(mode, t, y, p)
    return power_simple(kind, mode, t, y, p)


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4) with dense output and event localisation

A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
A71, A73, A74, A75, A76 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
C2, C3, C4, C5 = 0.2, 0.3, 0.8, 8.0 / 9.0
E1, E3, E4, E5, E6, E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)
D1, D3, D4, D5, D6, D7 = (
    -12715105075.0 / 11282082432.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
)


@njit(cache=True)
def dopri_step(kind, mode, t, y, k1, h, p, ks):
    """One Dormand-Prince step; stages are written into ks (7 x n).
    Returns (y_new, err_vector)."""
    n = y.shape[0]
    ks[0] = k1
    rhs(kind, mode, t + C2 * h, y + h * A21 * k1, p, ks[1])
    rhs(kind, mode, t + C3 * h, y + h * (A31 * k1 + A32 * ks[1]), p, ks[2])
    rhs(kind, mode, t + C4 * h, y + h * (A41 * k1 + A42 * ks[1] + A43 * ks[2]), p, ks[3])
    rhs(
        kind,
        mode,
        t + C5 * h,
        y + h * (A51 * k1 + A52 * ks[1] + A53 * ks[2] + A54 * ks[3]),
        p,
        ks[4],
    )
    rhs(
        kind,
        mode,
        t + h,
        y + h * (A61 * k1 + A62 * ks[1] + A63 * ks[2] + A64 * ks[3] + A65 * ks[4]),
        p,
        ks[5],
    )
    ynew = y + h * (A71 * k1 + A73 * ks[2] + A74 * ks[3] + A75 * ks[4] + A76 * ks[5])
    rhs(kind, mode, t + h, ynew, p, ks[6])
    err = h * (E1 * k1 + E3 * ks[2] + E4 * ks[3] + E5 * ks[4] + E6 * ks[5] + E7 * ks[6])
    return ynew, err


@njit(cache=True)
def dense_eval(y0, y1, ks, h, theta):
    r2 = y1 - y0
    r3 = h * ks[0] - r2
    r4 = r2 - h * ks[6] - r3
    r5 = h * (D1 * ks[0] + D3 * ks[2] + D4 * ks[3] + D5 * ks[4] + D6 * ks[5] + D7 * ks[6])
    th1 = 1.0 - theta
    return y0 + theta * (r2 + th1 * (r3 + theta * (r4 + th1 * r5)))


@njit(cache=True)
def _exact(kind, mode, t, y, k1, h, p):
    ks = np.empty((7, y.shape[0]))
    if h == 0.0:
        return y.copy()
    return dopri_step(kind, mode, t, y, k1, h, p, ks)[0]


@njit(cache=True)
def _locate(kind, mode, t, y, k1, h, p, gi, g_lo, event_tol):
    """Illinois regula falsi on exact sub-steps for guard gi, which is > 0
    at t and <= 0 at t + h. Returns (dt, state) on the event side."""
    gbuf = np.empty(NGUARD)
    a, b = 0.0, h
    fa = g_lo
    yb = _exact(kind, mode, t, y, k1, b, p)
    guards(kind, mode, t + b, yb, p, gbuf)
    fb = gbuf[gi]
    side = 0
    for _ in range(200):
        if b - a <= event_tol or fb == 0.0:
            break
        c = b - fb * (b - a) / (fb - fa)
        if not (a < c < b):
            c = 0.5 * (a + b)
        yc = _exact(kind, mode, t, y, k1, c, p)
        guards(kind, mode, t + c, yc, p, gbuf)
        fc = gbuf[gi]
        if fc > 0.0:
            a, fa = c, fc
            if side == -1:
                fb *= 0.5
            side = -1
        else:
            b, fb, yb = c, fc, yc
            if side == 1:
                fa *= 0.5
            side = 1
        if abs(fc) < 1e-15:
            if fc <= 0.0:
                break
    return b, yb


@njit(cache=True)
def integrate(
    kind,
    mode,
    t0,
    y0,
    t_end,
    p,
    rtol,
    atol,
    hmax,
    h0,
    event_tol,
    rec_t,
    rec_y,
    max_steps,
):
    """Integrate one contact mode until t_end or the first guard crossing.

    Guards trigger on a strictly positive to non-positive transition.
    Returns (status, t, y, event, h_next, n_recorded, n_steps).
    """
    n = y0.shape[0]
    y = y0.copy()
    t = t0
    k1 = np.empty(n)
    rhs(kind, mode, t, y, p, k1)
    ks = np.empty((7, n))
    g_old = np.empty(NGUARD)
    g_new = np.empty(NGUARD)
    guards(kind, mode, t, y, p, g_old)
    h = h0 if h0 > 0 else min(hmax, 1e-3)
    nrec = 0
    cap = rec_t.shape[0]
    if cap > 0:
        rec_t[0] = t
        rec_y[0] = y
        nrec = 1
    steps = 0
    while t < t_end:
        if steps >= max_steps:
            return ST_FAIL, t, y, EV_NONE, h, nrec, steps
        last = False
        h = min(h, hmax)
        if t + h >= t_end:
            h = t_end - t
            last = True
        if h < 1e-14 * max(1.0, abs(t)):
            return ST_FAIL, t, y, EV_NONE, h, nrec, steps
        ynew, err = dopri_step(kind, mode, t, y, k1, h, p, ks)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        enorm = math.sqrt(np.mean((err / sc) ** 2))
        if not math.isfinite(enorm):
            h *= 0.25
            steps += 1
            continue
        if enorm > 1.0:
            h *= max(0.2, 0.9 * enorm ** -0.2)
            steps += 1
            continue
        steps += 1
        tnew = t + h if not last else t_end
        guards(kind, mode, tnew, ynew, p, g_new)
        ev = EV_NONE
        best = 2.0
        for i in range(NGUARD):
            if g_old[i] > 0.0 and g_new[i] <= 0.0:
                # coarse estimate on the dense interpolant to rank simultaneous crossings
                lo, hi, flo = 0.0, 1.0, g_old[i]
                gb = np.empty(NGUARD)
                for _ in range(30):
                    mid = 0.5 * (lo + hi)
                    guards(kind, mode, t + mid * h, dense_eval(y, ynew, ks, h, mid), p, gb)
                    if gb[i] > 0.0:
                        lo, flo = mid, gb[i]
                    else:
                        hi = mid
                if hi < best:
                    best = hi
                    ev = i
        if ev != EV_NONE:
            dt, yev = _locate(kind, mode, t, y, k1, h, p, ev, g_old[ev], event_tol)
            tev = t + dt
            if nrec < cap:
                rec_t[nrec] = tev
                rec_y[nrec] = yev
                nrec += 1
            return ST_EVENT, tev, yev, ev, h, nrec, steps
        t = tnew
        y = ynew
        k1[:] = ks[6]
        g_old[:] = g_new
        if nrec < cap:
            rec_t[nrec] = t
            rec_y[nrec] = y
            nrec += 1
            if nrec == cap and t < t_end:
                return ST_BUFFER, t, y, EV_NONE, h, nrec, steps
        h = h * min(5.0, max(0.2, 0.9 * max(enorm, 1e-10) ** -0.2))
    return ST_DONE, t, y, EV_NONE, h, nrec, steps
