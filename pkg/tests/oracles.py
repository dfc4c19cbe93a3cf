"""Independent reference computations used to freeze expected values.

Nothing here goes through the simplex search, the finite-difference
Jacobian or the half-stride symmetry map: stability is judged by plain
long-horizon simulation, and the equations of motion are rederived
symbolically from a Lagrangian.

Run ``python3 tests/oracles.py`` to regenerate the frozen numbers quoted
in the test modules.
"""

from __future__ import annotations

import math
import sys
from functools import lru_cache

import numpy as np

from frontalgait.dynamics import Event, System, mirror_state
from frontalgait.orbit import PoincareSection, default_guess
from frontalgait.params import ModelKind, ModelParams
from frontalgait.profile import StrideProfile
from frontalgait.sim import IntegrationError, IntegratorConfig, simulate


# ---------------------------------------------------------------------------
# symbolic equations of motion for the single-support simplified models


@lru_cache(maxsize=None)
def symbolic_accelerations(kind: ModelKind):
    """Return a numeric function (values, F, tau) -> (l_dd, angle_dd) built
    from the Lagrangian of a point-mass torso on one massless leg."""
    import sympy as sp

    t = sp.symbols("t")
    l = sp.Function("l")(t)
    th = sp.Function("th")(t)
    m, g, rho, d, inertia, force, tau, sig = sp.symbols("m g rho d I F tau sig")
    if kind is ModelKind.FIXED_HIP:
        # leg pivots about the foot, torso rigidly on top of the hip
        c, a = -sig * rho, l + d
        r = sp.Matrix([a * sp.sin(th) + c * sp.cos(th), a * sp.cos(th) - c * sp.sin(th)])
    else:
        # vertical leg, pelvis rolls about the stance hip
        r = sp.Matrix([
            -sig * rho * sp.cos(th) - d * sp.sin(th),
            l - sig * rho * sp.sin(th) + d * sp.cos(th),
        ])
    v = r.diff(t)
    lag = (v.dot(v) * m + inertia * th.diff(t) ** 2) / 2 - m * g * r[1]
    eqs = [
        sp.diff(lag.diff(q.diff(t)), t) - lag.diff(q) - gen
        for q, gen in ((l, force), (th, tau))
    ]
    acc = sp.solve(eqs, [l.diff(t, 2), th.diff(t, 2)])
    ls, ths, lds, thds = sp.symbols("ls ths lds thds")
    rep = {l.diff(t): lds, th.diff(t): thds}
    exprs = []
    for q in (l, th):
        e = acc[q.diff(t, 2)].subs(rep).subs({l: ls, th: ths})
        exprs.append(e)
    return sp.lambdify((ls, ths, lds, thds, m, g, rho, d, inertia, force, tau, sig), exprs)


# ---------------------------------------------------------------------------
# brute-force stability by simulation


def simulated_stable(
    params: ModelParams,
    omega_s: float,
    gains=(),
    n_settle: int = 300,
    n_window: int = 100,
    contraction: float = 0.5,
    sym_tol: float = 1e-4,
) -> bool:
    """Stable symmetric gait at omega_s judged by simulation alone
    (simplified kinds).

    Start upright, run ``n_settle + n_window`` strides and require that the
    model neither falls nor flies, that the last stride has the alternating
    contact pattern, and that over the final window both the stride-to-stride
    change and the left/right asymmetry shrink (or have already vanished).
    """
    system = System(params, StrideProfile.for_model(params, omega_s), gains)
    section = PoincareSection(system)
    state0 = section.to_state(default_guess(system))
    T = system.profile.stride_time
    n = n_settle + n_window
    halves = state0.t + 0.5 * T * np.arange(1, 2 * n + 1)
    try:
        res = simulate(system, state0, float(halves[-1]), IntegratorConfig(), section_times=halves[:-1])
    except IntegrationError:
        return False
    if not res.ok or len(res.section_states) < 2 * n - 1:
        return False
    states = [*res.section_states, res.state]
    sc = section.scales()
    full = np.array([s.y / sc for s in states[1::2]])
    steps = np.linalg.norm(np.diff(full, axis=0), axis=1)
    if steps[-1] < 1e-9:
        contracting = True
    else:
        contracting = steps[-1] < contraction * steps[-n_window]

    def asymmetry(k):
        # full-stride state k against the mirror of the half stride before it
        return np.linalg.norm(mirror_state(system, states[2 * k]).y / sc - full[k])

    a_end, a_start = asymmetry(len(full) - 1), asymmetry(len(full) - 1 - n_window)
    symmetric = a_end < sym_tol or a_end < contraction * a_start
    t_last = states[-1].t
    last = [e.event for e in res.events if e.t > t_last - T]
    alternating = last == [Event.TOUCHDOWN, Event.LIFTOFF] * 2
    return bool(contracting and symmetric and alternating)


def scan_min_frequency(params, lo, hi, step=0.05, gains=()):
    """Lowest grid frequency in [lo, hi] judged stable, plus the verdicts."""
    grid = np.arange(lo, hi + 0.5 * step, step)
    verdicts = [(float(w), simulated_stable(params, float(w), gains)) for w in grid]
    stable = [w for w, ok in verdicts if ok]
    return (min(stable) if stable else math.nan), verdicts


def scan_boundary_above(params, lo, hi, step=0.05, gains=()):
    """Lowest grid frequency from which every higher grid point is stable."""
    _, verdicts = scan_min_frequency(params, lo, hi, step, gains)
    best = math.nan
    for w, ok in reversed(verdicts):
        if not ok:
            break
        best = w
    return best, verdicts


if __name__ == "__main__":
    cases = {
        "fixed_hip_w060": (ModelParams(ModelKind.FIXED_HIP, 100.0, 1e4, 0.9, 0.6), 11.5, 14.5),
        "fixed_hip_w036": (ModelParams(ModelKind.FIXED_HIP, 100.0, 1e4, 0.9, 0.36), 11.0, 20.0),
        "fixed_ankle_w036": (ModelParams(ModelKind.FIXED_ANKLE, 100.0, 1e4, 0.9, 0.36), 11.5, 14.5),
    }
    which = sys.argv[1:] or list(cases)
    for name in which:
        p, lo, hi = cases[name]
        b, verdicts = scan_boundary_above(p, lo, hi)
        print(name, "boundary", b, flush=True)
        print("  unstable grid points:", [w for w, ok in verdicts if not ok][-5:])
