"""Command-line entry point.

Exit status is 0 on success, 1 for usage or configuration problems and 2
when a simulation or optimisation fails. Each subcommand prints a single
JSON line on stdout; progress and human-readable detail go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .campaign import (
    CampaignConfig, crn_probe, evaluate_baselines, final_size, herd_threshold, optimize,
    terminal_ci, write_results,
)
from .codec import CodecError, plan_from_dict, plan_to_dict
from .config import ConfigFileError, LoadedConfig, defaults, load
from .dspsa import FlatLossError, OracleError, tune_initial_gain
from .epi.model import ConfigError

log = logging.getLogger("dspsa_epi")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit 2
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _theta(text: str) -> list[int]:
    try:
        vals = [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v != int(v) for v in vals):
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    return [int(v) for v in vals]


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dspsa-epi", description="Discrete SPSA optimisation of epidemic intervention plans.")
    p.add_argument("-v", "--verbose", action="store_true", help="more detail on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp: argparse.ArgumentParser, out_required: bool = False) -> None:
        sp.add_argument("--mode", choices=("h1n1", "covid"), help="scenario (defaults to the config's mode)")
        sp.add_argument("--config", type=Path, help="JSON config document")
        sp.add_argument("--out", type=Path, required=out_required, help="output directory")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--threads", type=_positive, help="worker threads (default $DSPSA_EPI_THREADS or 1)")
        sp.add_argument("--backend", choices=("auto", "numba", "numpy"), help="simulation kernels")

    sp = sub.add_parser("optimize", help="run a DSPSA campaign")
    common(sp, out_required=True)
    sp.add_argument("--runs", type=_positive)
    sp.add_argument("--iterations", type=_positive)
    sp.add_argument("--theta0", type=_theta)
    sp.add_argument("--ci-replicates", type=_positive)
    sp.add_argument("--baseline-replicates", type=_positive)
    sp.add_argument("--no-ci", action="store_true", help="skip terminal confidence intervals")
    sp.add_argument("--no-baselines", action="store_true", help="skip the baseline comparison")
    sp.add_argument("--probe", action="store_true", help="also run the CRN probe at theta0")

    sp = sub.add_parser("evaluate", help="estimate the mean loss of one plan")
    common(sp)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--theta", type=_theta)
    g.add_argument("--plan", help="plan as a JSON object")
    sp.add_argument("--replicates", type=_positive)

    sp = sub.add_parser("baselines", help="compare the configured reference plans")
    common(sp)
    sp.add_argument("--replicates", type=_positive)
    sp.add_argument("--theta", type=_theta, action="append", default=[], help="extra point to include")

    sp = sub.add_parser("crn-probe", help="test whether paired evaluations should share seeds")
    common(sp)
    sp.add_argument("--theta", type=_theta)
    sp.add_argument("--pairs", type=_positive)

    sp = sub.add_parser("tune-gain", help="choose the gain coefficient a for a desired first step")
    common(sp)
    sp.add_argument("--theta", type=_theta)
    sp.add_argument("--step", type=float, default=1.0, help="desired mean |first step| (default 1)")
    sp.add_argument("--samples", type=_positive, default=50)

    sp = sub.add_parser("herd-check", help="herd-immunity threshold and final size for R0")
    sp.add_argument("--r0", type=float)
    sp.add_argument("--mode", choices=("h1n1", "covid"))
    sp.add_argument("--config", type=Path)
    sp.add_argument("--out", type=Path)
    return p


# -- helpers ------------------------------------------------------------------


def _load(args: argparse.Namespace) -> LoadedConfig:
    if args.config is not None:
        loaded = load(args.config)
        if args.mode is not None and args.mode != loaded.scenario.mode:
            raise ConfigFileError(args.config, [f"--mode {args.mode} does not match config mode {loaded.scenario.mode}"])
        return loaded
    if args.mode is None:
        raise UsageError("either --config or --mode is required")
    return defaults(args.mode)


def _seed(args, loaded: LoadedConfig) -> int:
    seed = loaded.campaign.master_seed if getattr(args, "seed", None) is None else args.seed
    if seed < 0:
        raise UsageError("--seed must be nonnegative")
    return seed


def _backend(args, loaded: LoadedConfig) -> str | None:
    b = getattr(args, "backend", None)
    if b is None:
        return loaded.backend
    return None if b == "auto" else b


def _emit(doc: dict[str, Any], out: Path | None, name: str) -> None:
    line = json.dumps(doc, sort_keys=True, allow_nan=False, default=_jsonable)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    print(line)


def _jsonable(x: Any) -> Any:
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serialisable: {type(x).__name__}")


def _num(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


def _check_theta(theta, loaded: LoadedConfig, what: str) -> np.ndarray:
    bounds = loaded.scenario.bounds(loaded.tau)
    t = np.asarray(theta, dtype=float)
    if t.size != bounds.p:
        raise UsageError(f"{what} needs {bounds.p} components for mode {loaded.scenario.mode}, got {t.size}")
    return t


# -- subcommands ----------------------------------------------------------------


def cmd_optimize(args, loaded: LoadedConfig) -> int:
    seed = _seed(args, loaded)
    c = loaded.campaign
    theta0 = tuple(args.theta0) if args.theta0 is not None else c.theta0
    _check_theta(theta0, loaded, "--theta0")
    cfg = CampaignConfig(
        runs=args.runs or c.runs, M=args.iterations or c.M, theta0=theta0, gains=c.gains, crn=c.crn,
        master_seed=seed, baselines=c.baselines,
        ci_replicates=args.ci_replicates or c.ci_replicates, ci_level=c.ci_level,
        baseline_replicates=args.baseline_replicates or c.baseline_replicates, probe_pairs=c.probe_pairs,
    )
    sc = loaded.scenario
    oracle = sc.oracle(_backend(args, loaded))
    bounds = sc.bounds(loaded.tau)
    log.info("optimize: mode=%s runs=%d iterations=%d backend=%s", sc.mode, cfg.runs, cfg.M, oracle.simulator.backend)
    t0 = time.perf_counter()
    report = optimize(cfg, oracle, bounds, sc.repair(), args.threads,
                      with_ci=not args.no_ci, with_baselines=not args.no_baselines)
    probe = crn_probe(oracle, np.array(theta0, dtype=float), cfg.probe_pairs, seed, bounds) if args.probe else None
    log.info("campaign finished in %.1f s", time.perf_counter() - t0)
    res = report.result
    if not res.succeeded:
        for t in res.trials:
            log.error("trial %d failed: %s", t.index, t.error)
        raise OracleError("every trial failed")
    summary = write_results(args.out, res, sc.mode, sc.decoder(), report.cis, report.baselines, probe,
                            {"best": report.best, "backend": oracle.simulator.backend})
    for t in res.trials:
        if t.ok:
            log.info("trial %d: solution %s", t.index, [int(v) for v in t.solution])
        else:
            log.warning("trial %d failed: %s", t.index, t.error)
    dec = summary.get("loss_decrease")
    if dec is not None:
        log.info("mean loss decrease: %.1f%%", 100 * dec)
    if report.baselines:
        for b in report.baselines:
            log.info("  %-24s %10.3f +/- %.3f", b.name, b.mean, b.stderr)
    line: dict[str, Any] = {
        "command": "optimize", "mode": sc.mode, "master_seed": seed, "out": str(args.out),
        "trials_ok": len(res.succeeded), "trials_failed": len(res.failed), "loss_decrease": dec,
        "best": report.best,
    }
    if report.best is not None:
        idx = int(report.best.split("_")[1])
        line["best_theta"] = [int(v) for v in res.trials[idx].solution]
        line["best_mean"] = _num(report.cis[report.best].mean)
    print(json.dumps(line, sort_keys=True))
    return EXIT_OK if not res.failed else EXIT_RUNTIME


def cmd_evaluate(args, loaded: LoadedConfig) -> int:
    seed = _seed(args, loaded)
    sc = loaded.scenario
    if args.plan is not None:
        try:
            target = plan_from_dict({"kind": sc.mode, **json.loads(args.plan)})
        except (json.JSONDecodeError, TypeError, CodecError) as exc:
            raise UsageError(f"--plan: {exc}") from None
    else:
        target = sc.strict_decoder()(_check_theta(args.theta, loaded, "--theta"))
    n = args.replicates or loaded.campaign.ci_replicates
    oracle = sc.oracle(_backend(args, loaded))
    ci = terminal_ci(target, oracle, n, loaded.campaign.ci_level, seed, args.threads)
    log.info("mean loss %.4f, %g%% CI [%.4f, %.4f] over %d replicates",
             ci.mean, 100 * ci.level, ci.lo, ci.hi, ci.n)
    doc = {"command": "evaluate", "mode": sc.mode, "master_seed": seed, "plan": plan_to_dict(target),
           "ci": {k: (_num(v) if isinstance(v, float) else v) for k, v in ci.to_dict().items()}}
    _emit(doc, args.out, "evaluate.json")
    return EXIT_OK


def cmd_baselines(args, loaded: LoadedConfig) -> int:
    seed = _seed(args, loaded)
    sc = loaded.scenario
    plans: list[tuple[str, Any]] = list(sc.baselines)
    for i, th in enumerate(args.theta):
        plans.append((f"theta_{i}", sc.strict_decoder()(_check_theta(th, loaded, "--theta"))))
    if not plans:
        raise UsageError(f"no baselines configured for mode {sc.mode}; pass --theta")
    n = args.replicates or loaded.campaign.baseline_replicates
    rows = evaluate_baselines(plans, sc.oracle(_backend(args, loaded)), n, seed, args.threads)
    for r in rows:
        log.info("%-24s %10.3f +/- %.3f%s", r.name, r.mean, r.stderr, f"  ({r.error})" if r.error else "")
    doc = {"command": "baselines", "mode": sc.mode, "master_seed": seed, "replicates": n,
           "baselines": [{"name": r.name, "mean": _num(r.mean), "stderr": _num(r.stderr), "n": r.n,
                          "error": r.error} for r in rows]}
    _emit(doc, args.out, "baselines.json")
    return EXIT_RUNTIME if any(not r.ok for r in rows) else EXIT_OK


def cmd_crn_probe(args, loaded: LoadedConfig) -> int:
    seed = _seed(args, loaded)
    sc = loaded.scenario
    theta = _check_theta(args.theta if args.theta is not None else loaded.campaign.theta0, loaded, "--theta")
    n = args.pairs or loaded.campaign.probe_pairs
    if n < 10:
        raise UsageError("--pairs must be at least 10")
    res = crn_probe(sc.oracle(_backend(args, loaded)), theta, n, seed, sc.bounds(loaded.tau))
    if res.degenerate:
        log.info("paired evaluations have zero spread; no recommendation")
    else:
        log.info("correlation %.3f (one-sided p=%.3g): %s", res.correlation, res.p_value,
                 "use CRN" if res.recommend_crn else "do not use CRN")
    doc = {"command": "crn-probe", "mode": sc.mode, "master_seed": seed, "theta": [int(v) for v in theta],
           **{k: (_num(v) if isinstance(v, float) else v) for k, v in res.to_dict().items()}}
    _emit(doc, args.out, "crn_probe.json")
    return EXIT_OK


def cmd_tune_gain(args, loaded: LoadedConfig) -> int:
    seed = _seed(args, loaded)
    sc = loaded.scenario
    theta = _check_theta(args.theta if args.theta is not None else loaded.campaign.theta0, loaded, "--theta")
    if not args.step > 0:
        raise UsageError("--step must be positive")
    g = loaded.campaign.gains
    a = tune_initial_gain(sc.oracle(_backend(args, loaded)), theta, sc.bounds(loaded.tau), args.step,
                          args.samples, seed, loaded.campaign.crn)
    # the same rule applied to the first gain a_0 = a / (1 + A)^alpha rather than to a
    a_first = a * (1.0 + g.A) ** g.alpha
    log.info("a = %.6g makes a * mean|g_0| = %g; a = %.6g makes the first step a_0 * mean|g_0| = %g "
             "(A=%g, alpha=%g)", a, args.step, a_first, args.step, g.A, g.alpha)
    doc = {"command": "tune-gain", "mode": sc.mode, "master_seed": seed, "a": a, "a_first_step": a_first,
           "A": g.A, "alpha": g.alpha, "step": args.step, "samples": args.samples}
    _emit(doc, args.out, "tune_gain.json")
    return EXIT_OK


def cmd_herd_check(args) -> int:
    r0 = args.r0
    if r0 is None:
        if args.config is None and args.mode is None:
            raise UsageError("herd-check needs --r0, --config or --mode")
        r0 = _load(args).scenario.population.R0
    if not r0 > 0 or not math.isfinite(r0):
        raise UsageError("--r0 must be a positive number")
    h = herd_threshold(r0)
    fs = final_size(r0)
    pct = f"{100 * h:.1f}%"
    print(f"herd-immunity threshold at R0={r0:g}: {pct}; final size without intervention: {100 * fs:.1f}%",
          file=sys.stderr)
    doc = {"command": "herd-check", "r0": r0, "herd_threshold": h, "herd_threshold_percent": pct,
           "final_size": fs}
    _emit(doc, args.out, "herd_check.json")
    return EXIT_OK


COMMANDS = {
    "optimize": cmd_optimize,
    "evaluate": cmd_evaluate,
    "baselines": cmd_baselines,
    "crn-probe": cmd_crn_probe,
    "tune-gain": cmd_tune_gain,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(message)s", force=True)
    try:
        if args.command == "herd-check":
            return cmd_herd_check(args)
        loaded = _load(args)
        log.info("master seed %d", _seed(args, loaded))
        return COMMANDS[args.command](args, loaded)
    except (UsageError, ConfigFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FlatLossError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ConfigError, CodecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any simulation failure is a runtime error
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
