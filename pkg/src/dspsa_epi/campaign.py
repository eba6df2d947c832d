"""Multi-trial experiments around the optimiser.

A campaign runs independent DSPSA trials from one master seed, averages
their loss traces, and can then estimate the loss of the terminal plans,
compare them against reference plans and probe whether paired
evaluations benefit from common random numbers.

Every random stream is derived from the master seed, and results are
stored in indexed slots, so the outputs do not depend on thread timing.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import optimize as sopt
from scipy import stats

from .codec import BoxBounds, CovidPlan, H1N1Plan, encode_covid, encode_h1n1, plan_to_dict
from .dspsa import (
    GainSchedule, OracleError, RunConfig, RunTrace, as_oracle, draw_perturbation, midpoint, run,
)
from .seeding import TAG_BASELINE, TAG_CI, TAG_PROBE, TAG_TRIAL, generator, mix64, substream

Plan = H1N1Plan | CovidPlan


def herd_threshold(R0: float) -> float:
    """Immune fraction above which an epidemic cannot grow: ``1 - 1/R0``."""
    if not R0 > 0:
        raise ValueError(f"R0 must be positive, got {R0}")
    return 1.0 - 1.0 / R0


def final_size(R0: float) -> float:
    """Positive root of ``A = 1 - exp(-R0 A)`` (zero when ``R0 <= 1``)."""
    if R0 <= 1.0:
        return 0.0
    return float(sopt.brentq(lambda a: a - 1.0 + math.exp(-R0 * a), 1e-12, 1.0))


def loss_decrease(mean_trace: np.ndarray, tail: int | None = None, head: int = 1) -> float:
    """Relative drop from the start of a loss trace to its end.

    The start is the mean of the first ``head`` entries (by default the
    loss around the initial iterate itself); the end is the mean of the
    last ``tail`` entries, by default the final 1% of iterations.
    """
    y = np.asarray(mean_trace, dtype=float)
    if y.size == 0:
        raise ValueError("empty trace")
    tail = max(1, y.size // 100) if tail is None else min(int(tail), y.size)
    head = min(max(1, int(head)), y.size)
    start = float(np.mean(y[:head]))
    if start == 0.0:
        raise ValueError("initial loss is zero; relative decrease undefined")
    return 1.0 - float(np.mean(y[-tail:])) / start


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        env = os.environ.get("DSPSA_EPI_THREADS", "").strip()
        threads = int(env) if env else 1
    if threads < 1:
        raise ValueError("thread count must be at least 1")
    return threads


# ---------------------------------------------------------------------------
# trials


@dataclass(frozen=True)
class CampaignConfig:
    runs: int
    M: int
    theta0: tuple[int, ...]
    gains: GainSchedule
    crn: bool = False
    master_seed: int = 0
    baselines: tuple[tuple[str, Plan], ...] = ()
    ci_replicates: int = 500
    ci_level: float = 0.95
    baseline_replicates: int = 100
    probe_pairs: int = 100

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.M < 1:
            raise ValueError("M must be at least 1")
        if self.ci_replicates < 2 or self.baseline_replicates < 2:
            raise ValueError("ci_replicates and baseline_replicates must be at least 2")
        if not 0.0 < self.ci_level < 1.0:
            raise ValueError("ci_level must lie in (0, 1)")
        if self.probe_pairs < 10:
            raise ValueError("probe_pairs must be at least 10")
        object.__setattr__(self, "theta0", tuple(int(x) for x in self.theta0))

    def trial_seed(self, i: int) -> int:
        return mix64(substream(self.master_seed, TAG_TRIAL), i)

    def run_config(self, i: int) -> RunConfig:
        return RunConfig(self.M, np.array(self.theta0, dtype=float), self.gains, self.crn, self.trial_seed(i))


@dataclass
class TrialResult:
    index: int
    base_seed: int
    trace: RunTrace | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.trace is not None

    @property
    def solution(self) -> np.ndarray | None:
        return None if self.trace is None else self.trace.solution


@dataclass
class CampaignResult:
    config: CampaignConfig
    trials: list[TrialResult]

    @property
    def succeeded(self) -> list[TrialResult]:
        return [t for t in self.trials if t.ok]

    @property
    def failed(self) -> list[TrialResult]:
        return [t for t in self.trials if not t.ok]

    def mean_loss(self) -> np.ndarray:
        """Per-iteration mean of ``(y_plus + y_minus) / 2`` over successful trials."""
        ok = self.succeeded
        if not ok:
            return np.empty(0)
        return np.mean([t.trace.mean_loss for t in ok], axis=0)

    def averaged(self) -> dict[str, np.ndarray]:
        ok = self.succeeded
        if not ok:
            return {}
        tr = [t.trace for t in ok]
        return {
            "k": tr[0].k,
            "a_k": tr[0].a_k,
            "y_plus": np.mean([t.y_plus for t in tr], axis=0),
            "y_minus": np.mean([t.y_minus for t in tr], axis=0),
            "mean_loss": self.mean_loss(),
            "theta": np.mean([t.theta for t in tr], axis=0),
        }

    def solutions(self) -> list[np.ndarray]:
        return [t.solution for t in self.succeeded]

    def loss_decrease(self, tail: int | None = None, head: int = 1) -> float:
        return loss_decrease(self.mean_loss(), tail, head)


def _one_trial(cfg: CampaignConfig, i: int, oracle, bounds, repair) -> TrialResult:
    rc = cfg.run_config(i)
    try:
        trace = run(rc, oracle, bounds, repair)
    except OracleError as exc:
        return TrialResult(i, rc.base_seed, None, str(exc))
    return TrialResult(i, rc.base_seed, trace)


def run_campaign(
    config: CampaignConfig,
    oracle,
    bounds: BoxBounds | None = None,
    repair=None,
    threads: int | None = None,
) -> CampaignResult:
    oracle = as_oracle(oracle)
    n = resolve_threads(threads)
    if n == 1 or config.runs == 1:
        trials = [_one_trial(config, i, oracle, bounds, repair) for i in range(config.runs)]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            futures = [pool.submit(_one_trial, config, i, oracle, bounds, repair) for i in range(config.runs)]
            trials = [f.result() for f in futures]
    return CampaignResult(config, trials)


# ---------------------------------------------------------------------------
# statistics


@dataclass(frozen=True)
class ConfidenceInterval:
    mean: float
    half_width: float
    lo: float
    hi: float
    n: int
    level: float
    sample_min: float
    sample_max: float
    std: float

    def to_dict(self) -> dict[str, float | int]:
        return asdict(self)


def t_interval(samples: Sequence[float], level: float = 0.95) -> ConfidenceInterval:
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    mean = float(np.mean(x))
    sd = float(np.std(x, ddof=1))
    hw = float(stats.t.ppf((1.0 + level) / 2.0, n - 1)) * sd / math.sqrt(n)
    # keep min <= mean <= max despite summation rounding on constant samples
    lo_s, hi_s = float(x.min()), float(x.max())
    mean = min(max(mean, lo_s), hi_s)
    return ConfidenceInterval(mean, hw, mean - hw, mean + hw, n, level, lo_s, hi_s, sd)


def _evaluate(oracle, target, seed: int) -> float:
    if isinstance(target, (H1N1Plan, CovidPlan)):
        return float(oracle.evaluate_plan(target, seed))
    return float(oracle.evaluate(np.asarray(target, dtype=float), seed))


def _replicates(oracle, target, n: int, stream: int, threads: int) -> np.ndarray:
    seeds = [mix64(stream, i) for i in range(n)]
    if threads == 1:
        return np.array([_evaluate(oracle, target, s) for s in seeds])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.array(list(pool.map(lambda s: _evaluate(oracle, target, s), seeds)))


def terminal_ci(
    solution,
    oracle,
    n: int = 500,
    level: float = 0.95,
    seed: int = 0,
    threads: int | None = None,
) -> ConfidenceInterval:
    """Student-t interval for the mean loss at ``solution`` from ``n`` fresh evaluations."""
    if n < 2:
        raise ValueError("n must be at least 2")
    ys = _replicates(as_oracle(oracle), solution, n, substream(seed, TAG_CI), resolve_threads(threads))
    return t_interval(ys, level)


@dataclass(frozen=True)
class BaselineResult:
    name: str
    mean: float
    stderr: float
    n: int
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def evaluate_baselines(
    plans: Sequence[tuple[str, Any]],
    oracle,
    n: int = 100,
    seed: int = 0,
    threads: int | None = None,
) -> list[BaselineResult]:
    """Mean and standard error of each plan's loss, ranked from cheapest.

    Every plan sees the same ``n`` seeds, so listing a plan twice yields
    identical rows. A plan that fails is reported with its error and
    sorted last.
    """
    oracle = as_oracle(oracle)
    stream = substream(seed, TAG_BASELINE)
    th = resolve_threads(threads)
    out = []
    for name, target in plans:
        try:
            ys = _replicates(oracle, target, n, stream, th)
        except Exception as exc:  # isolate per-plan failures
            out.append(BaselineResult(name, math.nan, math.nan, 0, f"{type(exc).__name__}: {exc}"))
            continue
        out.append(BaselineResult(name, float(ys.mean()), float(ys.std(ddof=1) / math.sqrt(n)), n))
    return sorted(out, key=lambda r: (not r.ok, r.mean if r.ok else 0.0))


@dataclass(frozen=True)
class CrnProbe:
    correlation: float
    p_value: float
    n_pairs: int
    recommend_crn: bool | None
    degenerate: bool
    alpha: float = 0.05

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def crn_probe(
    oracle,
    theta,
    n_pairs: int = 100,
    seed: int = 0,
    bounds: BoxBounds | None = None,
    alpha: float = 0.05,
) -> CrnProbe:
    """Correlation between paired evaluations that share a seed.

    Recommends CRN only when the Pearson correlation is positive at the
    one-sided ``alpha`` level. Zero-variance samples are flagged as
    degenerate and get no recommendation.
    """
    if n_pairs < 10:
        raise ValueError("n_pairs must be at least 10")
    oracle = as_oracle(oracle)
    stream = substream(seed, TAG_PROBE)
    rng = generator(stream)
    theta = np.asarray(theta, dtype=float)
    mid = midpoint(theta, bounds)
    yp = np.empty(n_pairs)
    ym = np.empty(n_pairs)
    for i in range(n_pairs):
        delta = draw_perturbation(theta.size, rng)
        s = mix64(stream, i)
        yp[i] = oracle.evaluate(mid + delta / 2.0, s)
        ym[i] = oracle.evaluate(mid - delta / 2.0, s)
    if np.ptp(yp) == 0.0 or np.ptp(ym) == 0.0:
        return CrnProbe(math.nan, math.nan, n_pairs, None, True, alpha)
    res = stats.pearsonr(yp, ym, alternative="greater")
    r, p = float(res.statistic), float(res.pvalue)
    return CrnProbe(r, p, n_pairs, bool(p < alpha and r > 0), False, alpha)


# ---------------------------------------------------------------------------
# serialisation


def _num(x: float) -> float | None:
    x = float(x)
    return x if math.isfinite(x) else None


def _solution_dict(mode: str | None, sol: np.ndarray, decoder) -> dict[str, Any]:
    doc: dict[str, Any] = {"theta": [int(v) for v in sol]}
    if decoder is not None:
        try:
            doc["plan"] = plan_to_dict(decoder(sol))
        except Exception as exc:  # noqa: BLE001 - record rather than fail the write
            doc["plan_error"] = str(exc)
    return doc


def write_trace_mean(path: Path, averaged: dict[str, np.ndarray]) -> None:
    p = averaged["theta"].shape[1]
    lines = [",".join(["k", "a_k", "y_plus", "y_minus", "mean_loss"] + [f"theta_{i + 1}" for i in range(p)])]
    for k in range(averaged["k"].size):
        row = [str(int(averaged["k"][k]))] + [
            repr(float(averaged[c][k])) for c in ("a_k", "y_plus", "y_minus", "mean_loss")
        ] + [repr(float(v)) for v in averaged["theta"][k]]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_results(
    out_dir: str | Path,
    result: CampaignResult,
    mode: str | None = None,
    decoder=None,
    cis: dict[str, ConfidenceInterval] | None = None,
    baselines: list[BaselineResult] | None = None,
    probe: CrnProbe | None = None,
    extra: dict[str, Any] | None = None,
) -> dict[str, Any]:
    """Write trace CSVs and ``summary.json``; return the summary document."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(2, len(str(len(result.trials) - 1)))
    for t in result.succeeded:
        t.trace.to_csv(out / f"trace_trial_{t.index:0{width}d}.csv")
    if result.succeeded:
        write_trace_mean(out / "trace_mean.csv", result.averaged())
    cfg = result.config
    summary: dict[str, Any] = {
        "mode": mode,
        "master_seed": cfg.master_seed,
        "runs": cfg.runs,
        "iterations": cfg.M,
        "theta0": list(cfg.theta0),
        "gains": {"a": cfg.gains.a, "A": cfg.gains.A, "alpha": cfg.gains.alpha},
        "crn": cfg.crn,
        "trials": [
            {
                "index": t.index,
                "base_seed": t.base_seed,
                "ok": t.ok,
                "error": t.error,
                **(_solution_dict(mode, t.solution, decoder) if t.ok else {}),
                **({"final_mean_loss": _num(t.trace.mean_loss[-1])} if t.ok else {}),
            }
            for t in result.trials
        ],
    }
    if result.succeeded:
        summary["loss_decrease"] = _num(result.loss_decrease())
    if cis:
        summary["terminal_ci"] = {k: {kk: _num(vv) if isinstance(vv, float) else vv for kk, vv in v.to_dict().items()}
                                  for k, v in cis.items()}
    if baselines is not None:
        summary["baselines"] = [
            {"name": b.name, "mean": _num(b.mean), "stderr": _num(b.stderr), "n": b.n, "error": b.error}
            for b in baselines
        ]
    if probe is not None:
        summary["crn_probe"] = {k: (_num(v) if isinstance(v, float) else v) for k, v in probe.to_dict().items()}
    if extra:
        summary.update(extra)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def plan_theta(plan: Plan) -> np.ndarray:
    return encode_h1n1(plan) if isinstance(plan, H1N1Plan) else encode_covid(plan)


@dataclass
class OptimizeReport:
    result: CampaignResult
    cis: dict[str, ConfidenceInterval] = field(default_factory=dict)
    baselines: list[BaselineResult] | None = None
    probe: CrnProbe | None = None
    best: str | None = None


def optimize(
    config: CampaignConfig,
    oracle,
    bounds: BoxBounds | None = None,
    repair=None,
    threads: int | None = None,
    with_ci: bool = True,
    with_baselines: bool = True,
) -> OptimizeReport:
    """Run the trials, then price each distinct terminal solution and the baselines."""
    result = run_campaign(config, oracle, bounds, repair, threads)
    report = OptimizeReport(result)
    if with_ci:
        seen: dict[tuple[int, ...], str] = {}
        for t in result.succeeded:
            key = tuple(int(v) for v in t.solution)
            if key in seen:
                continue
            label = f"trial_{t.index}"
            seen[key] = label
            report.cis[label] = terminal_ci(t.solution, oracle, config.ci_replicates, config.ci_level,
                                            config.master_seed, threads)
        if report.cis:
            report.best = min(report.cis, key=lambda k: report.cis[k].mean)
    if with_baselines and config.baselines:
        plans: list[tuple[str, Any]] = list(config.baselines)
        if report.best is not None:
            idx = int(report.best.split("_")[1])
            plans.insert(0, ("dspsa_terminal", result.trials[idx].solution))
        report.baselines = evaluate_baselines(plans, oracle, config.baseline_replicates, config.master_seed, threads)
    return report
