"""Command-line front end.

Every command writes plain CSV/JSON and, next to each CSV, a JSON manifest
holding the command line, the configuration and the seed, enough to rerun it.
Exit codes: 0 ok, 2 usage or configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import json
import logging
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import analysis
from .analysis import MinFreqTask, Table
from .dynamics import System
from .orbit import PoincareSection, default_guess
from .params import (
    ConfigError,
    DomainError,
    ModelParams,
    ParamRanges,
    active_gains,
    derive,
    load_config,
    passive_gains,
)
from .profile import StrideProfile, dump_rows
from .sim import IntegrationError, IntegratorConfig, simulate_strides, write_trajectory_csv
from .stability import classify

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3
SCHEMA_VERSION = 1

log = logging.getLogger("frontalgait")


class UsageError(Exception):
    pass


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


@dataclasses.dataclass
class RunManifest:
    command: list[str]
    config: dict
    seed: int | None
    tool_version: str
    started: str
    finished: str = ""
    outputs: list[str] = dataclasses.field(default_factory=list)

    def write(self, csv_path: Path) -> Path:
        path = csv_path.with_suffix(csv_path.suffix + ".manifest.json")
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True) + "\n")
        return path


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")  # locale independent
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, schema: str, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"# schema={schema}/{SCHEMA_VERSION}"])
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


class Context:
    """Shared per-invocation state: output directory and manifest bookkeeping."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.started = _now()
        self.config: dict = {}

    def manifest(self, csv_path: Path, extra_outputs=()) -> None:
        m = RunManifest(
            command=self.argv,
            config=self.config,
            seed=self.args.seed,
            tool_version=tool_version(),
            started=self.started,
            finished=_now(),
            outputs=[str(csv_path), *map(str, extra_outputs)],
        )
        m.write(csv_path)

    def table(self, table: Table) -> Path:
        path = self.out / f"{table.name}.csv"
        write_csv(path, table.name, table.header, table.rows)
        self.manifest(path)
        return path


def _params(ctx: Context) -> ModelParams:
    if not ctx.args.config:
        raise UsageError("--config is required for this command")
    params, raw = load_config(ctx.args.config)
    ctx.config = dict(raw)
    return params


def _cfg(args) -> IntegratorConfig:
    return IntegratorConfig.precise() if args.fine else IntegratorConfig()


def _gains(args, params: ModelParams):
    return active_gains(params) if getattr(args, "active", False) else passive_gains(params)


def _default_freq(params: ModelParams) -> float:
    return 1.3 * analysis.predict_min_stride_frequency(params)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(ctx: Context) -> int:
    args = ctx.args
    params = _params(ctx)
    omega = args.freq or _default_freq(params)
    n_strides = args.strides or 10

    system = System(params, StrideProfile.for_model(params, omega), _gains(args, params))
    state0 = PoincareSection(system).to_state(default_guess(system))
    try:
        run = simulate_strides(system, state0, n_strides, IntegratorConfig(), record=True)
    except IntegrationError as exc:
        log.error("simulation failed: %s", exc)
        return EXIT_RUNTIME
    path = ctx.out / "trajectory.csv"
    write_trajectory_csv(path, system, run.result)
    ctx.manifest(path)
    print(path)
    if not run.result.ok:
        log.error("model %s before %d strides", "fell" if run.result.fell else "entered flight", n_strides)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_profile(ctx: Context) -> int:
    args = ctx.args
    params = _params(ctx)
    omega = args.freq or _default_freq(params)
    prof = StrideProfile.for_model(params, omega)
    path = ctx.out / "profile.csv"
    head = ["t", "l_n_left", "l_n_dot_left", "l_n_right", "l_n_dot_right"]
    write_csv(path, "profile", head, dump_rows(prof, args.samples, args.strides or 1))
    ctx.manifest(path)
    print(path)
    return EXIT_OK


def cmd_find_orbit(ctx: Context) -> int:
    args = ctx.args
    params = _params(ctx)
    omega = args.freq or _default_freq(params)
    c = classify(params, omega, _gains(args, params))
    orbit = c.orbit
    if orbit is None:
        return EXIT_RUNTIME
    rec = {
        "omega_s": omega,
        "fixed_point": [float(v) for v in orbit.fixed_point],
        "residual": orbit.residual,
        "symmetric": orbit.symmetric,
        "has_flight": orbit.has_flight,
        "converged": orbit.accepted,
        "verdict": c.reason,
        "spectral_radius": c.report.spectral_radius if c.report else None,
    }
    print(json.dumps(rec))
    return EXIT_OK if orbit.accepted else EXIT_RUNTIME


def _min_freq_task(ctx: Context, params, label="") -> MinFreqTask:
    a = ctx.args
    return MinFreqTask(params, _gains(a, params), label, a.tol, cfg=None)


def cmd_min_freq(ctx: Context) -> int:
    params = _params(ctx)
    rec = analysis.run_min_freq(_min_freq_task(ctx, params, Path(ctx.args.config).stem))
    ctx.table(analysis.min_freq_table("min_freq", [rec]))
    print(f"omega_s_min = {_fmt(rec.omega_s_min)} rad/s ({rec.status})")
    return EXIT_OK if rec.ok else EXIT_RUNTIME


SWEEPABLE = (
    "total_mass", "leg_stiffness", "rest_length_max", "hip_width", "damping_ratio",
    "torso_radius_of_gyration", "retraction_fraction", "torso_offset",
)


def cmd_sweep(ctx: Context) -> int:
    a = ctx.args
    params = _params(ctx)
    if a.param not in SWEEPABLE:
        raise UsageError(f"cannot sweep {a.param!r}; choose from {', '.join(SWEEPABLE)}")
    n = a.points * (3 if a.fine else 1)
    values = np.linspace(a.start, a.stop, n)
    try:
        tasks = [
            _min_freq_task(ctx, params.with_(**{a.param: float(v)}), f"{a.param}={v:.6g}")
            for v in values
        ]
    except DomainError as exc:
        raise ConfigError(str(exc), key=a.param) from exc
    recs = analysis.min_freq_sweep(tasks, a.jobs)
    ctx.table(analysis.min_freq_table("sweep", recs))
    return EXIT_OK if any(r.ok for r in recs) else EXIT_RUNTIME


def cmd_montecarlo(ctx: Context) -> int:
    a = ctx.args
    seed = 0 if a.seed is None else a.seed
    ctx.config = {"n_models": a.n_models, "seed": seed}
    res = analysis.montecarlo_experiment(
        ParamRanges(), a.n_models, seed, jobs=a.jobs, tol=0.005 if a.fine else 0.01
    )
    recs = ctx.table(analysis.min_freq_table("montecarlo_models", res.records))
    fits = Table("montecarlo_fit", ["fit", *analysis.FIT_HEADER, "excluded"], [])
    for name, fit in (("omega_s_hat_vs_sqrt_k_hat", res.dimensionless_fit),
                      ("omega_s_min_vs_omega_n", res.natural_frequency_fit)):
        if fit is not None:
            fits.rows.append([name, fit.slope, fit.intercept, fit.r_squared, fit.residual_std, fit.n, len(res.failures)])
    ctx.table(fits)
    print(recs)
    return EXIT_OK if res.dimensionless_fit is not None else EXIT_RUNTIME


def cmd_predict(ctx: Context) -> int:
    params = _params(ctx)
    dq = derive(params)
    rec = {
        "omega_n": dq.natural_frequency,
        "omega_p": dq.pendulum_frequency,
        "omega_s_min_predicted": analysis.predict_min_stride_frequency(params),
        "w_min_predicted": analysis.predict_min_hip_width(params),
        "l_eq": dq.effective_rest_length,
        "diag_leg_length": dq.diag_leg_length,
    }
    print(json.dumps(rec))
    return EXIT_OK


def cmd_figures(ctx: Context) -> int:
    a = ctx.args
    ids = list(analysis.FIGURES) if a.figure == "all" else [a.figure]
    for fid in ids:
        if fid not in analysis.FIGURES:
            raise UsageError(f"unknown figure {fid!r}; choose from {', '.join(analysis.FIGURES)}")
    ctx.config = {"figures": ids, "fine": a.fine}
    seed = 0 if a.seed is None else a.seed
    for fid in ids:
        for table in analysis.FIGURES[fid](fine=a.fine, jobs=a.jobs, seed=seed):
            print(ctx.table(table))
    return EXIT_OK


def cmd_compare(ctx: Context) -> int:
    a = ctx.args
    if a.config:
        params = _params(ctx)
        sets = [(params.total_mass, params.leg_stiffness, params.rest_length_max, params.hip_width)]
    else:
        sets = list(analysis.COMPARISON_SETS)
        ctx.config = {"sets": sets}
    tasks = analysis.comparison_tasks(sets, active=a.active, tol=a.tol)
    recs = analysis.min_freq_sweep(tasks, a.jobs)
    ctx.table(analysis.min_freq_table("compare", recs))
    for r in recs:
        print(f"{r.label:40s} {_fmt(r.omega_s_min):>10s} {r.status}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "profile": cmd_profile,
    "find-orbit": cmd_find_orbit,
    "min-freq": cmd_min_freq,
    "sweep": cmd_sweep,
    "montecarlo": cmd_montecarlo,
    "predict": cmd_predict,
    "figures": cmd_figures,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value parameter file")
    common.add_argument("--seed", type=int, default=None, metavar="N")
    common.add_argument("--out", default=".", metavar="DIR", help="output directory")
    common.add_argument("--fine", action="store_true", help="full resolution and tighter tolerances")
    common.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes")
    common.add_argument("--freq", type=float, default=None, metavar="RAD_S", help="stride frequency")
    common.add_argument("--strides", type=int, default=None, metavar="N")
    common.add_argument("--active", action="store_true", help="enable the stance-phase PD controllers")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="frontalgait", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate strides, write a trajectory CSV")
    p = sub.add_parser("profile", parents=[common], help="neutral leg length program")
    p.add_argument("action", choices=["dump"])
    p.add_argument("--samples", type=int, default=200)
    sub.add_parser("find-orbit", parents=[common], help="periodic orbit at --freq (JSON line)")
    for name in ("min-freq", "sweep", "compare"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--tol", type=float, default=0.01, help="bisection tolerance [rad/s]")
        if name == "sweep":
            p.add_argument("--param", required=True)
            p.add_argument("--start", type=float, required=True)
            p.add_argument("--stop", type=float, required=True)
            p.add_argument("--points", type=int, default=6)
    p = sub.add_parser("montecarlo", parents=[common], help="random-model regression experiment")
    p.add_argument("--n-models", type=int, default=50)
    sub.add_parser("predict", parents=[common], help="closed-form predictions (JSON line)")
    p = sub.add_parser("figures", parents=[common], help="plot-ready CSV data for one figure")
    p.add_argument("figure", help=f"one of {', '.join(analysis.FIGURES)} or 'all'")
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if (args.strides is not None and args.strides < 1) or args.jobs < 1:
        print("error: --strides and --jobs must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        ctx = Context(args, argv)
        return COMMANDS[args.command](ctx)
    except (ConfigError, UsageError, FileNotFoundError) as exc:
        key = getattr(exc, "key", None)
        print(f"error: {exc}" + (f" (key: {key})" if key else ""), file=sys.stderr)
        return EXIT_USAGE
    except (DomainError, IntegrationError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
