"""Derivative-free Nelder-Mead simplex minimization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool
    message: str
    history: list[float] = field(default_factory=list)


def initial_simplex(x0: np.ndarray, step: float | np.ndarray) -> np.ndarray:
    n = x0.size
    steps = np.broadcast_to(np.asarray(step, dtype=float), (n,))
    sim = np.tile(x0, (n + 1, 1))
    for i in range(n):
        sim[i + 1, i] += steps[i]
    return sim


def nelder_mead(
    func: Callable[[np.ndarray], float],
    x0,
    step: float | np.ndarray = 0.05,
    xtol: float = 1e-10,
    ftol: float = 1e-20,
    fstop: float = 0.0,
    max_iter: int = 2000,
    max_eval: int | None = None,
) -> SimplexResult:
    """Minimize ``func`` from ``x0``.

    Standard coefficients (reflect 1, expand 2, contract 1/2, shrink 1/2).
    Stops when the simplex diameter drops below ``xtol`` and the spread of
    function values below ``ftol``, or as soon as the best value reaches
    ``fstop``. Non-finite function values are treated as +inf.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    max_eval = max_eval or 2 * max_iter + n + 1

    nev = 0

    def f(x):
        nonlocal nev
        nev += 1
        v = float(func(x))
        return v if np.isfinite(v) else np.inf

    sim = initial_simplex(x0, step)
    fs = np.array([f(x) for x in sim])
    history = []
    it = 0
    msg = "maximum iterations reached"
    converged = False
    while it < max_iter and nev < max_eval:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        history.append(fs[0])
        if fs[0] <= fstop:
            msg, converged = "target value reached", True
            break
        diam = np.max(np.abs(sim[1:] - sim[0]))
        spread = fs[-1] - fs[0] if np.isfinite(fs[-1]) else np.inf
        if diam <= xtol and spread <= ftol:
            msg, converged = "simplex collapsed", True
            break
        it += 1
        centroid = sim[:-1].mean(axis=0)
        xr = centroid + (centroid - sim[-1])
        fr = f(xr)
        if fr < fs[0]:
            xe = centroid + 2.0 * (centroid - sim[-1])
            fe = f(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[-1]:
            xc = centroid + 0.5 * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (sim[-1] - centroid)
            fc = f(xc)
            if fc < fs[-1]:
                sim[-1], fs[-1] = xc, fc
                continue
        # shrink towards the best vertex
        for i in range(1, n + 1):
            sim[i] = sim[0] + 0.5 * (sim[i] - sim[0])
            fs[i] = f(sim[i])
    order = np.argsort(fs, kind="stable")
    sim, fs = sim[order], fs[order]
    if nev >= max_eval and not converged:
        msg = "maximum evaluations reached"
    return SimplexResult(sim[0].copy(), float(fs[0]), it, nev, converged, msg, history)
