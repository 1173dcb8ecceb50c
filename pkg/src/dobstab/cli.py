"""``dobstab`` command line: discretize, constraints, rootlocus, bode, simulate.

Exit codes: 0 when the command ran (an unstable or diverging configuration is
a result, not an error), 2 for invalid input, 1 for internal errors.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import classify, default_grid, frequency_response, root_locus
from .config import RunConfig, load_config
from .loops import build_inner_loop, build_outer_loop, inertia_ratio, inner_constraint, open_loop_tf
from .observer import ObserverConfig, classify_factor, error_contraction_factor, gain_upper_bound
from .plant import NominalPlant, zoh_discretize
from .serialize import csv_text, dumps
from .sim import TRACE_COLUMNS, DivergenceError, regulation_metrics, simulate_dob, simulate_pid

SWEEP_PARAMETERS = ("g_D", "g_n", "alpha")
ROOTLOCUS_COLUMNS = (
    "parameter",
    "lambda1_re",
    "lambda1_im",
    "lambda2_re",
    "lambda2_im",
    "lambda3_re",
    "lambda3_im",
    "spectral_radius",
    "boundary",
)
BODE_COLUMNS = ("omega", "magnitude", "magnitude_db", "phase_deg")


class UsageError(ValueError):
    pass


def parse_sweep(text: str) -> tuple[str, float, float, int]:
    """``param:lo:hi:count`` with ``param`` one of g_D, g_n, alpha."""
    parts = text.split(":")
    if len(parts) != 4:
        raise UsageError(f"--sweep expects param:lo:hi:count, got {text!r}")
    name = parts[0]
    if name not in SWEEP_PARAMETERS:
        raise UsageError(f"unknown sweep parameter {name!r}; choose from {', '.join(SWEEP_PARAMETERS)}")
    try:
        lo, hi, count = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError:
        raise UsageError(f"--sweep bounds must be numbers and count an integer, got {text!r}") from None
    if count < 2:
        raise UsageError("--sweep count must be at least 2")
    if not (0 < lo < hi):
        raise UsageError("--sweep needs 0 < lo < hi")
    return name, lo, hi, count


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _output_path(args, cfg: RunConfig) -> str | None:
    return args.output or cfg.output.path


def _output_format(args, cfg: RunConfig) -> str:
    return args.format or cfg.output.format


def _discrete_dict(d) -> dict:
    return {"A_D": d.A, "B_D": d.B, "D_D": d.D}


def cmd_discretize(cfg: RunConfig, args) -> int:
    plant, nominal = cfg.discrete()
    bound = gain_upper_bound(nominal)
    result = {
        "T_s": cfg.T_s,
        "plant": _discrete_dict(plant),
        "nominal": _discrete_dict(nominal),
        "gain_upper_bound": bound,
    }
    if _output_format(args, cfg) == "csv":
        rows = []
        for name, d in (("plant", plant), ("nominal", nominal)):
            for (i, j), v in np.ndenumerate(d.A):
                rows.append((name, "A_D", i, j, v))
            for i, v in enumerate(d.B):
                rows.append((name, "B_D", i, 0, v))
            for i, v in enumerate(d.D):
                rows.append((name, "D_D", i, 0, v))
        rows.append(("nominal", "gain_upper_bound", 0, 0, bound))
        text = csv_text(("model", "quantity", "row", "col", "value"), rows)
    else:
        text = dumps(result) + "\n"
    _emit(text, _output_path(args, cfg))
    return 0


def constraint_report(cfg: RunConfig) -> dict:
    plant, nominal = cfg.discrete()
    obs = cfg.observer_config(nominal)
    gains = cfg.feedback_gains()
    factor = error_contraction_factor(obs)
    bound = gain_upper_bound(nominal)
    alpha = inertia_ratio(plant, nominal)
    gn = obs.normalized_gain
    inner_class = inner_constraint(alpha, gn)
    observer_ok = 0 < obs.gain < bound
    inner_ok = 0 < alpha * gn < 2
    checks = {"observer_gain_bound": observer_ok, "inner_loop_constraint": inner_ok}
    inner = classify(build_inner_loop(plant, nominal, obs).A, checks)
    outer = classify(build_outer_loop(plant, nominal, obs, gains).A, checks)
    return {
        "config": cfg.to_json_dict(),
        "observer": {
            "g_D": obs.gain,
            "gain_upper_bound": bound,
            "contraction_factor": factor,
            "classification": classify_factor(factor).value,
            "satisfied": observer_ok,
        },
        "inner_constraint": {
            "alpha": alpha,
            "normalized_gain": gn,
            "alpha_times_gain": alpha * gn,
            "classification": inner_class.value,
            "satisfied": inner_ok,
            "frictionless": plant.frictionless and nominal.frictionless,
        },
        "inner_loop": inner.to_dict(),
        "outer_loop": outer.to_dict(),
    }


def cmd_constraints(cfg: RunConfig, args) -> int:
    report = constraint_report(cfg)
    obs, inn = report["observer"], report["inner_constraint"]
    say = lambda s: print(s, file=sys.stderr)  # noqa: E731
    say(
        f"observer gain g_D = {obs['g_D']:.6g} (bound {obs['gain_upper_bound']:.6g}): "
        f"{'ok' if obs['satisfied'] else 'VIOLATED'}, factor {obs['contraction_factor']:.6g}"
    )
    say(
        f"inner loop alpha*g_n = {inn['alpha_times_gain']:.6g} (0 < . < 2): "
        f"{'ok' if inn['satisfied'] else 'VIOLATED'}"
    )
    for name in ("inner_loop", "outer_loop"):
        r = report[name]
        say(f"{name.replace('_', ' ')}: spectral radius {r['spectral_radius']:.12g}, {r['classification']}")
    if _output_format(args, cfg) == "csv":
        rows = [
            ("observer_gain_bound", obs["satisfied"], obs["gain_upper_bound"]),
            ("inner_loop_constraint", inn["satisfied"], inn["alpha_times_gain"]),
            ("inner_loop", report["inner_loop"]["classification"], report["inner_loop"]["spectral_radius"]),
            ("outer_loop", report["outer_loop"]["classification"], report["outer_loop"]["spectral_radius"]),
        ]
        text = csv_text(("check", "result", "value"), rows)
    else:
        text = dumps(report) + "\n"
    _emit(text, _output_path(args, cfg))
    return 0


def sweep_builder(cfg: RunConfig, parameter: str, loop: str):
    """Map a sweep value to the 3x3 loop matrix."""
    plant, nominal = cfg.discrete()
    gains = cfg.feedback_gains()
    base_gn = cfg.observer_config(nominal).normalized_gain

    def assemble(n, obs):
        if loop == "inner":
            return build_inner_loop(plant, n, obs).A
        return build_outer_loop(plant, n, obs, gains).A

    if parameter == "g_D":
        return lambda p: assemble(nominal, ObserverConfig(p, nominal))
    if parameter == "g_n":
        return lambda p: assemble(nominal, ObserverConfig.from_normalized_gain(p, nominal))

    def by_alpha(p):
        source = NominalPlant(p * cfg.plant.J, cfg.nominal.b_n)
        n = zoh_discretize(source, cfg.T_s)
        return assemble(n, ObserverConfig.from_normalized_gain(base_gn, n))

    return by_alpha


def cmd_rootlocus(cfg: RunConfig, args) -> int:
    if not args.sweep:
        raise UsageError("rootlocus requires --sweep param:lo:hi:count")
    name, lo, hi, count = parse_sweep(args.sweep)
    trace = root_locus(sweep_builder(cfg, name, args.loop), lo, hi, count, parameter=name)
    if _output_format(args, cfg) == "csv":
        rows = []
        for (p, lam), rho in zip(trace.rows(), trace.radii):
            row = [p]
            for v in lam:
                row += [v.real, v.imag]
            rows.append(row + [rho, trace.boundary])
        text = csv_text(ROOTLOCUS_COLUMNS, rows)
    else:
        text = dumps(
            {
                "config": cfg.to_json_dict(),
                "parameter": name,
                "loop": args.loop,
                "boundary": trace.boundary,
                "samples": [
                    {"value": p, "eigenvalues": list(lam), "spectral_radius": rho}
                    for (p, lam), rho in zip(trace.rows(), trace.radii)
                ],
            }
        ) + "\n"
    _emit(text, _output_path(args, cfg))
    return 0


def cmd_bode(cfg: RunConfig, args) -> int:
    plant, nominal = cfg.discrete()
    obs = cfg.observer_config(nominal)
    gains = cfg.feedback_gains()
    if plant.frictionless and nominal.frictionless:
        loop = open_loop_tf(plant, nominal, obs, gains)
    else:
        inner = build_inner_loop(plant, nominal, obs)
        K = gains.vector
        I3 = np.eye(3)

        def loop(z):
            z = np.atleast_1d(z)
            return np.array([K @ np.linalg.solve(zi * I3 - inner.A, inner.B) for zi in z])

    omega = None
    if args.points is not None:
        if args.points < 2:
            raise UsageError("--points must be at least 2")
        omega = default_grid(cfg.T_s, points=args.points)
    fr = frequency_response(loop, cfg.T_s, omega)
    if fr.note:
        print(f"note: {fr.note}", file=sys.stderr)
    if _output_format(args, cfg) == "csv":
        mag = fr.magnitude
        rows = zip(fr.omega, mag, 20 * np.log10(mag), fr.phase_deg)
        text = csv_text(BODE_COLUMNS, rows)
    else:
        text = dumps(
            {
                "config": cfg.to_json_dict(),
                "gain_crossover": fr.gain_crossover,
                "phase_margin": fr.phase_margin,
                "crossovers": list(fr.crossovers),
                "note": fr.note,
                "omega": fr.omega,
                "magnitude": fr.magnitude,
                "phase_deg": fr.phase_deg,
            }
        ) + "\n"
    _emit(text, _output_path(args, cfg))
    return 0


def _run(fn, *a):
    try:
        return fn(*a), None
    except DivergenceError as exc:
        return exc.trace, exc


def _trace_text(trace, fmt: str) -> str:
    cols = trace.columns()
    if fmt == "json":
        return dumps({name: cols[name] for name in TRACE_COLUMNS}) + "\n"
    return csv_text(TRACE_COLUMNS, zip(*(cols[name] for name in TRACE_COLUMNS)))


def _summary(trace, err) -> dict:
    out = {"diverged": err is not None, "diverged_at_step": None if err is None else err.step}
    out.update(regulation_metrics(trace).to_dict())
    return out


def cmd_simulate(cfg: RunConfig, args) -> int:
    plant, nominal_c = cfg.continuous_plant(), cfg.nominal_plant()
    obs = cfg.observer_config()
    dist, ref, n = cfg.disturbance_profile(), cfg.reference_profile(), cfg.n_steps
    dob, dob_err = _run(simulate_dob, plant, nominal_c, obs, cfg.feedback_gains(), dist, ref, n)
    metrics = {"config": cfg.to_json_dict(), "dob": _summary(dob, dob_err)}
    pid = None
    if cfg.scenario.run_pid:
        pid, pid_err = _run(simulate_pid, plant, cfg.pid_config(), dist, ref, n, cfg.T_s, (0.0, 0.0), nominal_c)
        metrics["pid"] = _summary(pid, pid_err)
        p_sse = metrics["pid"]["steady_state_error"]
        d_sse = metrics["dob"]["steady_state_error"]
        metrics["steady_state_error_ratio"] = d_sse / p_sse if p_sse > 0 else None
    fmt = _output_format(args, cfg)
    path = _output_path(args, cfg)
    if path:
        out = Path(path)
        out.write_text(_trace_text(dob, fmt))
        if pid is not None:
            out.with_name(f"{out.stem}_pid{out.suffix}").write_text(_trace_text(pid, fmt))
        out.with_name(f"{out.stem}_metrics.json").write_text(dumps(metrics) + "\n")
    else:
        sys.stdout.write(dumps(metrics) + "\n")
    if dob_err is not None:
        print(f"note: {dob_err}", file=sys.stderr)
    return 0


COMMANDS = {
    "discretize": cmd_discretize,
    "constraints": cmd_constraints,
    "rootlocus": cmd_rootlocus,
    "bode": cmd_bode,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dobstab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration (defaults apply to missing fields)")
        p.add_argument("--output", help="output file (stdout when omitted)")
        p.add_argument("--format", choices=("csv", "json"), help="output format")
        if name == "rootlocus":
            p.add_argument("--sweep", help="param:lo:hi:count, param in g_D, g_n, alpha")
            p.add_argument("--loop", choices=("inner", "outer"), default="outer")
        if name == "bode":
            p.add_argument("--points", type=int, help="number of log-spaced frequencies (default 400)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ValueError as exc:  # ConfigError and UsageError included
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
