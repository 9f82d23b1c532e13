"""Command-line front end: ``localtime-lab {simulate,verify,clt,bracket,report}``.

Configuration precedence is preset < config file < ``LOCALTIME_LAB_SEED``
(seed only) < flags.  The resolved configuration is written to
``<out>/manifest.json`` before any computation, and a manifest can be fed
back through ``--config`` to repeat a run.

Exit codes: 0 success, 1 acceptance failure, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .paths import SimConfig, generate_brownian

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
SEED_ENV = "LOCALTIME_LAB_SEED"

PRESETS = {
    "smoke": {
        "t": 1.0,
        "steps": 50_000,
        "replicas": 200,
        "h": [0.08, 0.04],
        "verify_replicas": 10,
        "verify_steps": 100_000,
        "ks_max": 0.2,
        "var_rel": 0.5,
        "bootstrap": 50,
    },
    "desk": {
        "t": 1.0,
        "steps": 200_000,
        "replicas": 2000,
        "h": [0.08, 0.04, 0.02],
        "verify_replicas": 100,
        "verify_steps": 200_000,
        "ks_max": 0.06,
        "var_rel": 0.2,
        "bootstrap": 200,
    },
    "full": {
        "t": 1.0,
        "steps": 400_000,
        "replicas": 5000,
        "h": [0.08, 0.04, 0.02, 0.01],
        "verify_replicas": 200,
        "verify_steps": 400_000,
        "ks_max": 0.06,
        "var_rel": 0.2,
        "bootstrap": 200,
    },
}
DEFAULTS = {
    "seed": 0,
    "threads": None,
    "delta_fraction": 8,
    "eps_fraction": 8,
    "t_list": [0.25, 0.5, 1.0],
    "a_values": [0.0, 0.1, -0.1],
    "verify_h": 0.05,
    "residual_rel": 0.05,
    "bracket_h": [0.08, 0.04, 0.02, 0.01],
    "a3": False,
    "field_delta": None,
}
KNOWN_KEYS = set(DEFAULTS) | set(PRESETS["desk"])


class ConfigError(ValueError):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file (or a previous manifest.json)")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    common.add_argument("--preset", choices=sorted(PRESETS), default="desk")

    p = argparse.ArgumentParser(prog="localtime-lab", description="Brownian local time Monte Carlo laboratory")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write sample paths (and optionally local time fields)")
    s.add_argument("--t", type=float, dest="t")
    s.add_argument("--steps", type=int)
    s.add_argument("--replicas", type=int, default=None)
    s.add_argument("--field-delta", type=float, dest="field_delta", help="also write binned fields of this width")

    v = sub.add_parser("verify", parents=[common], help="deterministic and pathwise identity checks")
    v.add_argument("--deterministic-only", action="store_true")
    v.add_argument("--self-test-negate-K", dest="negate_k", action="store_true", help="flip K_h; the suite must fail")
    v.add_argument("--replicas", type=int, dest="verify_replicas")
    v.add_argument("--steps", type=int, dest="verify_steps")

    c = sub.add_parser("clt", parents=[common], help="CLT experiment, KS test and moment rows")
    c.add_argument("--h", type=float, nargs="+")
    c.add_argument("--replicas", type=int)
    c.add_argument("--steps", type=int)
    c.add_argument("--t", type=float, dest="t")

    b = sub.add_parser("bracket", parents=[common], help="bracket and A3 studies")
    b.add_argument("--h", type=float, nargs="+", dest="bracket_h")
    b.add_argument("--replicas", type=int)
    b.add_argument("--steps", type=int)
    b.add_argument("--a3", action="store_true", default=None)

    r = sub.add_parser("report", parents=[common], help="validate and summarize a CLT report")
    r.add_argument("--input", type=Path, help="report JSON (default: <out>/clt_report.json)")
    return p


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError:
        raise
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if isinstance(data, dict) and "config" in data and isinstance(data["config"], dict):
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def resolve_config(args: argparse.Namespace, environ=os.environ) -> dict:
    cfg = dict(DEFAULTS)
    cfg.update(PRESETS[args.preset])
    from_file = _load_config(args.config)
    cfg.update(from_file)
    if environ.get(SEED_ENV):
        try:
            cfg["seed"] = int(environ[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    for key in KNOWN_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if args.command == "simulate" and getattr(args, "replicas", None) is None and "replicas" not in from_file:
        cfg["replicas"] = 1
    if getattr(args, "threads", None) is not None:
        cfg["threads"] = args.threads
    _check_config(cfg)
    return cfg


def _check_config(cfg):
    try:
        seed = int(cfg["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError("seed must be an integer") from exc
    if not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    for key in ("steps", "replicas", "verify_replicas", "verify_steps"):
        if not isinstance(cfg[key], int) or cfg[key] < 1:
            raise ConfigError(f"{key} must be a positive integer")
    if cfg["threads"] is not None and (not isinstance(cfg["threads"], int) or cfg["threads"] < 1):
        raise ConfigError("threads must be a positive integer")
    if not float(cfg["t"]) > 0:
        raise ConfigError("t must be positive")


def _manifest(args, cfg, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "subcommand": args.command,
        "config_file": str(args.config) if args.config else None,
        "overrides": {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config", "out")},
        "output_dir": str(out),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "resolved_seed": int(cfg["seed"]),
        "version": __version__,
        "numpy": np.__version__,
        "config": cfg,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n", encoding="utf-8")


def _sim(cfg, steps_key="steps", replicas_key="replicas") -> SimConfig:
    try:
        return SimConfig(float(cfg["t"]), int(cfg[steps_key]), int(cfg["seed"]), int(cfg[replicas_key]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _table(rows, header):
    widths = [max(len(str(h)), *(len(str(r[i])) for r in rows)) if rows else len(str(h)) for i, h in enumerate(header)]
    fmt = "  ".join(f"{{:<{w}}}" for w in widths)
    lines = [fmt.format(*header)] + [fmt.format(*map(str, r)) for r in rows]
    return "\n".join(lines)


def _fmt(x, digits=4):
    return f"{x:.{digits}g}" if isinstance(x, float) else str(x)


def cmd_simulate(args, cfg) -> int:
    from .localtime import local_time_binned

    sim = _sim(cfg)
    out = args.out
    for i in range(sim.replica_count):
        path = generate_brownian(sim, i)
        path.to_csv(out / f"path_{i}.csv")
        if cfg.get("field_delta"):
            local_time_binned(path, float(cfg["field_delta"])).to_csv(out / f"field_{i}.csv")
    print(f"wrote {sim.replica_count} path(s) of {sim.steps} steps to {out}")
    return EXIT_OK


def deterministic_checks() -> list:
    """``(name, ok, detail)`` for the closed-form suite."""
    from .intersection import resolvent_integral, resolvent_v, weight_integral_closed_form, weight_integral_quadrature
    from .localtime import Mollifier, mollified_positive_part
    from .tanaka import kernel_J, kernel_J_positive_parts, kernel_K, kernel_K_indicators
    from .clt import C_MIXTURE, C_PRIME

    x = np.linspace(-3.0, 3.0, 10_001)[:-1]
    j_ok = bool(np.array_equal(kernel_J(1.0, x), kernel_J_positive_parts(1.0, x)))
    j_ok &= bool(np.array_equal(kernel_J(0.5, x), kernel_J_positive_parts(0.5, x)))
    grid = np.concatenate([x, [-1.0, 0.0, 1.0, -0.5, 0.5]])
    k_ok = bool(np.array_equal(kernel_K(1.0, grid), kernel_K_indicators(1.0, grid)))
    k_ok &= bool(np.array_equal(kernel_K(0.25, grid / 4), kernel_K(1.0, grid)))
    w_cf, w_q = weight_integral_closed_form(), weight_integral_quadrature()
    v1, q1 = float(resolvent_v(1.0)), resolvent_integral(1.0)
    gp = mollified_positive_part(Mollifier(0.1), 0.0)[1]
    return [
        ("kernel_J piecewise == positive parts", j_ok, "10^4 grid points"),
        ("kernel_K piecewise == indicators", k_ok, "10^4 grid points + boundaries"),
        ("weight integral = 2/3", abs(w_cf - 2 / 3) < 1e-12 and abs(w_q - 2 / 3) < 1e-12, f"quad {w_q!r}"),
        ("v(1) = e^-1 and its integral", abs(v1 - math.exp(-1)) < 1e-15 and abs(q1 - math.exp(-1)) < 1e-8, f"quad {q1!r}"),
        ("g'_eps(0) = 1/2", abs(gp - 0.5) < 1e-12, f"{gp!r}"),
        ("c' = c sqrt(2)", abs(C_PRIME - C_MIXTURE * math.sqrt(2)) < 1e-12, f"c = {C_MIXTURE:.7f}"),
    ]


def pathwise_checks(cfg, negate_k=False, threads=None) -> list:
    from .clt import map_replicas
    from .tanaka import decomposition_check, tanaka_check

    sim = _sim(cfg, "verify_steps", "verify_replicas")
    h = float(cfg["verify_h"])
    eps = h / int(cfg["eps_fraction"])
    a_values = [float(a) for a in cfg["a_values"]]
    tol = float(cfg["residual_rel"])

    def one(i):
        p = generate_brownian(sim, i)
        tan = [tanaka_check(p, a, eps) for a in a_values]
        dec = decomposition_check(p, h, eps, negate_kernel=negate_k)
        return [(r.lhs, r.residual) for r in tan], (dec.lhs, dec.residual, abs(dec.j_end) <= dec.j_bound)

    res = map_replicas(one, range(sim.replica_count), threads)
    rms = lambda v: float(np.sqrt(np.mean(np.square(v))))
    rows = []
    for k, a in enumerate(a_values):
        lhs = [r[0][k][0] for r in res]
        resid = [r[0][k][1] for r in res]
        rel = rms(resid) / rms(lhs) if rms(lhs) > 0 else rms(resid)
        rows.append((f"tanaka a={a:+g}", rel <= tol, f"rms residual / rms lhs = {rel:.4g}"))
    lhs = [r[1][0] for r in res]
    resid = [r[1][1] for r in res]
    rel = rms(resid) / rms(lhs)
    rows.append((f"decomposition h={h:g}" + (" (K negated)" if negate_k else ""), rel <= tol, f"rms residual / rms lhs = {rel:.4g}"))
    viol = sum(not r[1][2] for r in res)
    rows.append(("J-term bound", viol == 0, f"{viol} violations in {len(res)} paths"))
    return rows


def cmd_verify(args, cfg) -> int:
    rows = deterministic_checks()
    if not args.deterministic_only or args.negate_k:
        rows += pathwise_checks(cfg, negate_k=args.negate_k, threads=cfg["threads"])
    print(_table([(n, "PASS" if ok else "FAIL", d) for n, ok, d in rows], ("check", "result", "detail")))
    if args.out:
        with open(args.out / "verify.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["check", "passed", "detail"])
            writer.writerows((n, int(ok), d) for n, ok, d in rows)
    return EXIT_OK if all(ok for _, ok, _ in rows) else EXIT_FAIL


def clt_thresholds(per_h, cfg) -> list:
    from .clt import ks_trend_ok

    finest = per_h[-1]
    return [
        (f"KS D at h={finest['h']:g} <= {cfg['ks_max']:g}", finest["ks_D"] <= float(cfg["ks_max"])),
        ("KS D nonincreasing in h (1 bootstrap s.e.)", ks_trend_ok(per_h)),
        (
            f"Var(S) within {cfg['var_rel']:g} of (64/3) mean int L^2 at h={finest['h']:g}",
            abs(finest["var_S"] / finest["predicted_var"] - 1) <= float(cfg["var_rel"]),
        ),
    ]


def cmd_clt(args, cfg) -> int:
    from .clt import MIN_REPLICAS, ExperimentPlan, expectation_study, run_clt_experiment

    if int(cfg["replicas"]) < MIN_REPLICAS:
        raise ConfigError(f"clt needs at least {MIN_REPLICAS} replicas")
    try:
        plan = ExperimentPlan(
            _sim(cfg),
            h_list=tuple(sorted((float(h) for h in cfg["h"]), reverse=True)),
            delta_fraction=int(cfg["delta_fraction"]),
            eps_fraction=int(cfg["eps_fraction"]),
            bootstrap=int(cfg["bootstrap"]),
            threads=cfg["threads"],
            out_dir=str(args.out),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    report = run_clt_experiment(plan)
    report.write(args.out)
    rows = [
        (
            _fmt(r["h"]), _fmt(r["ks_D"]), _fmt(r["ks_p"]), _fmt(r["ks_D_recentred"]), _fmt(r["skew_S"]),
            _fmt(r["mean_S"]), _fmt(r["exact_mean"]), _fmt(r["var_S"]), _fmt(r["predicted_var"]),
        )
        for r in report.per_h
    ]
    print(_table(rows, ("h", "ks_D", "ks_p", "ks_D_rc", "skew_S", "mean_S", "exact_mean", "var_S", "pred_var")))
    if plan.replicas >= 500:
        exp_rows = expectation_study(plan, report)
        with open(args.out / "expectation.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["h", "mean", "stderr", "prediction", "exact", "residual_over_h3", "count"])
            for r in exp_rows:
                writer.writerow([r["h"], repr(r["mean"]), repr(r["stderr"]), repr(r["prediction"]), repr(r["exact"]), repr(r["residual_over_h3"]), r["count"]])
    checks = clt_thresholds(report.per_h, cfg)
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return EXIT_OK if all(ok for _, ok in checks) else EXIT_FAIL


def cmd_bracket(args, cfg) -> int:
    from .clt import ExperimentPlan, bracket_study
    from .tanaka import write_scaling_csv

    try:
        plan = ExperimentPlan(
            _sim(cfg),
            h_list=tuple(sorted((float(h) for h in cfg["bracket_h"]), reverse=True)),
            eps_fraction=int(cfg["eps_fraction"]),
            t_list=tuple(float(t) for t in cfg["t_list"]),
            threads=cfg["threads"],
            out_dir=str(args.out),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    study = bracket_study(plan, a3=bool(cfg["a3"]))
    (args.out / "bracket_study.json").write_text(json.dumps(study, indent=2) + "\n", encoding="utf-8")
    with open(args.out / "bracket_table.csv", "w", newline="", encoding="utf-8") as fh:
        keys = list(study["rows"][0])
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(keys)
        for r in study["rows"]:
            writer.writerow([r[k] for k in keys])
    final = [r for r in study["rows"] if r["t"] == plan.t_list[-1]]
    table = [{"h": r["h"], "mean": r["mean_MW"], "stderr": r["MW_stderr"], "count": r["count"]} for r in final]
    write_scaling_csv(table, args.out / "bracket_mw_scaling.csv")
    rows = [(_fmt(r["h"]), _fmt(r["t"]), _fmt(r["ratio"]), _fmt(r.get("exact_ratio", float("nan"))), _fmt(r["mean_MW"]), _fmt(r["rms_MW"])) for r in study["rows"]]
    print(_table(rows, ("h", "t", "MM/alpha2", "exact", "mean MW", "rms MW")))
    for r in study["a3"]:
        print(f"A3 h={r['h']:g}: int A3 / (h (4/3) alpha2(0)) = {r['ratio']:.4g} +- {r['stderr']:.2g}")
    return EXIT_OK


def cmd_report(args, cfg) -> int:
    from .clt import validate_report

    src = args.input or (args.out / "clt_report.json" if args.out else None)
    if src is None:
        raise ConfigError("report needs --input or --out")
    report = json.loads(Path(src).read_text(encoding="utf-8"))
    try:
        validate_report(report)
    except ValueError as exc:
        raise ConfigError(f"invalid report: {exc}") from exc
    rows = [(_fmt(r["h"]), _fmt(r["ks_D"]), _fmt(r["ks_p"]), _fmt(r["mean_S"]), _fmt(r["var_S"]), _fmt(r["predicted_var"])) for r in report["per_h"]]
    print(_table(rows, ("h", "ks_D", "ks_p", "mean_S", "var_S", "pred_var")))
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "clt": cmd_clt, "bracket": cmd_bracket, "report": cmd_report}
NEEDS_OUT = {"simulate", "clt", "bracket"}


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    if args.command in NEEDS_OUT and args.out is None:
        parser.print_usage(sys.stderr)
        print(f"localtime-lab {args.command}: error: --out is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = resolve_config(args)
        if args.out is not None:
            _manifest(args, cfg, args.out)
        start = time.monotonic()
        code = COMMANDS[args.command](args, cfg)
        sys.stdout.flush()
        print(f"done in {time.monotonic() - start:.1f} s", file=sys.stderr)
        return code
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
