"""Constrained discrete simultaneous perturbation stochastic approximation.

One iteration at iterate ``theta``:

1. draw ``delta`` with independent +/-1 components;
2. ``mid = floor(project(theta)) + 1/2`` so every corner of the unit
   hypercube around ``mid`` is an integer point;
3. evaluate the noisy loss at ``mid + delta/2`` and ``mid - delta/2``;
4. ``g = (y_plus - y_minus) * delta`` (``delta`` is its own inverse);
5. ``theta <- theta - a_k * g`` with ``a_k = a / (1 + A + k) ** alpha``.

After ``M`` iterations the answer is the rounded projection of the iterate.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import Executor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Protocol, runtime_checkable

import numpy as np

from .codec import BoxBounds
from .seeding import TAG_PERTURBATION, TAG_TUNE, generator, mix64, mix64_array, substream


class OracleError(RuntimeError):
    """A loss evaluation failed; carries the iteration and the point."""

    def __init__(self, k: int, point: np.ndarray, cause: BaseException) -> None:
        self.k = k
        self.point = np.asarray(point).copy()
        self.cause = cause
        super().__init__(f"oracle failed at iteration {k}, point {self.point.tolist()}: {cause}")


class FlatLossError(ValueError):
    """The loss showed no variation at the start point, so no gain can be fitted."""


@runtime_checkable
class NoisyLossOracle(Protocol):
    def evaluate(self, theta: np.ndarray, seed: int) -> float: ...


class FunctionOracle:
    """Adapt a plain ``f(theta, seed) -> float`` to the oracle interface."""

    def __init__(self, fn: Callable[[np.ndarray, int], float], thread_safe: bool = True) -> None:
        self.fn = fn
        self.thread_safe = thread_safe

    def evaluate(self, theta: np.ndarray, seed: int) -> float:
        return float(self.fn(theta, seed))


def as_oracle(obj) -> NoisyLossOracle:
    if hasattr(obj, "evaluate"):
        return obj
    if callable(obj):
        return FunctionOracle(obj)
    raise TypeError(f"{obj!r} is neither an oracle nor a callable")


@dataclass(frozen=True)
class GainSchedule:
    a: float
    A: float = 0.0
    alpha: float = 0.501

    def __post_init__(self) -> None:
        if not self.a > 0:
            raise ValueError(f"gain coefficient a must be positive, got {self.a}")
        if not self.A >= 0:
            raise ValueError(f"stability constant A must be nonnegative, got {self.A}")
        if not 0.5 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0.5, 1], got {self.alpha}")

    def at(self, k: int) -> float:
        return gain_at(self, k)


def gain_at(gains: GainSchedule, k: int) -> float:
    if k < 0:
        raise ValueError("iteration index must be nonnegative")
    return gains.a / (1.0 + gains.A + k) ** gains.alpha


def draw_perturbation(p: int, rng: np.random.Generator) -> np.ndarray:
    if p < 1:
        raise ValueError("dimension must be at least 1")
    return rng.integers(0, 2, size=p, dtype=np.int64) * 2 - 1


def _project(theta: np.ndarray, bounds: BoxBounds | None) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    return theta if bounds is None else bounds.project(theta)


def midpoint(theta_hat: np.ndarray, bounds: BoxBounds | None = None) -> np.ndarray:
    return np.floor(_project(theta_hat, bounds)) + 0.5


def pair_seeds(base_seed: int, k: int, crn: bool) -> tuple[int, int]:
    if crn:
        s = mix64(base_seed, k)
        return s, s
    return mix64(base_seed, 2 * k), mix64(base_seed, 2 * k + 1)


def eval_pair(
    mid: np.ndarray,
    delta: np.ndarray,
    oracle: NoisyLossOracle,
    crn: bool,
    k: int,
    base_seed: int,
    executor: Executor | None = None,
) -> tuple[float, float]:
    plus = mid + delta / 2.0
    minus = mid - delta / 2.0
    s_plus, s_minus = pair_seeds(base_seed, k, crn)

    def call(point: np.ndarray, seed: int) -> float:
        try:
            return float(oracle.evaluate(point, seed))
        except Exception as exc:
            raise OracleError(k, point, exc) from exc

    if executor is not None and getattr(oracle, "thread_safe", False):
        f_minus = executor.submit(call, minus, s_minus)
        y_plus = call(plus, s_plus)
        return y_plus, f_minus.result()
    return call(plus, s_plus), call(minus, s_minus)


def gradient_estimate(y_plus: float, y_minus: float, delta: np.ndarray) -> np.ndarray:
    return (y_plus - y_minus) / np.asarray(delta, dtype=float)


def update(theta_hat: np.ndarray, a_k: float, g_hat: np.ndarray) -> np.ndarray:
    theta_hat = np.asarray(theta_hat, dtype=float)
    g_hat = np.asarray(g_hat, dtype=float)
    if theta_hat.shape != g_hat.shape:
        raise ValueError("iterate and gradient dimensions differ")
    return theta_hat - a_k * g_hat


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def finalize(theta_hat: np.ndarray, bounds: BoxBounds | None = None) -> np.ndarray:
    """Round the projected iterate to the answer.

    Coordinates clipped at the upper bound sit at ``upper - tau`` and are
    rounded down to ``upper - 1`` (round half down when ``tau = 0.5``, and
    still inside the box for any other ``tau``); all others round half away
    from zero.
    """
    theta_hat = np.asarray(theta_hat, dtype=float)
    projected = _project(theta_hat, bounds)
    out = _round_half_away(projected)
    if bounds is not None:
        clipped = bounds.clipped_upper(theta_hat)
        out[clipped] = np.floor(projected[clipped])
    return out.astype(np.int64)


@dataclass(frozen=True)
class IterationRecord:
    k: int
    theta_hat: np.ndarray
    midpoint: np.ndarray
    delta: np.ndarray
    y_plus: float
    y_minus: float
    g_hat: np.ndarray
    a_k: float

    @property
    def theta_plus(self) -> np.ndarray:
        return self.midpoint + self.delta / 2.0

    @property
    def theta_minus(self) -> np.ndarray:
        return self.midpoint - self.delta / 2.0


@dataclass(frozen=True)
class RunConfig:
    M: int
    theta0: np.ndarray
    gains: GainSchedule
    crn: bool = False
    base_seed: int = 0

    def __post_init__(self) -> None:
        if self.M < 1:
            raise ValueError("M must be at least 1")
        theta0 = np.asarray(self.theta0, dtype=float).ravel()
        if theta0.size < 1:
            raise ValueError("theta0 must have at least one component")
        if not np.all(theta0 == np.round(theta0)):
            raise ValueError(f"theta0 must be integer-valued, got {theta0.tolist()}")
        object.__setattr__(self, "theta0", theta0)

    @property
    def p(self) -> int:
        return self.theta0.size


@dataclass
class RunTrace:
    """Column store of a run: row ``k`` describes iteration ``k``."""

    k: np.ndarray
    a_k: np.ndarray
    y_plus: np.ndarray
    y_minus: np.ndarray
    theta: np.ndarray
    midpoints: np.ndarray
    deltas: np.ndarray
    g: np.ndarray
    theta_final: np.ndarray
    solution: np.ndarray

    def __len__(self) -> int:
        return self.k.size

    @property
    def p(self) -> int:
        return self.theta.shape[1]

    def record(self, k: int) -> IterationRecord:
        return IterationRecord(
            int(self.k[k]),
            self.theta[k],
            self.midpoints[k],
            self.deltas[k],
            float(self.y_plus[k]),
            float(self.y_minus[k]),
            self.g[k],
            float(self.a_k[k]),
        )

    def records(self) -> Iterator[IterationRecord]:
        for k in range(len(self)):
            yield self.record(k)

    @property
    def mean_loss(self) -> np.ndarray:
        return (self.y_plus + self.y_minus) / 2.0

    def header(self) -> list[str]:
        p = self.p
        return (
            ["k", "a_k", "y_plus", "y_minus"]
            + [f"theta_{i + 1}" for i in range(p)]
            + [f"g_{i + 1}" for i in range(p)]
        )

    def rows(self) -> Iterator[list[str]]:
        for k in range(len(self)):
            yield (
                [str(int(self.k[k])), repr(float(self.a_k[k])),
                 repr(float(self.y_plus[k])), repr(float(self.y_minus[k]))]
                + [repr(float(x)) for x in self.theta[k]]
                + [repr(float(x)) for x in self.g[k]]
            )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            writer.writerows(self.rows())


def read_trace_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Load a trace CSV back into named columns (theta and g as matrices)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(x) for x in row] for row in reader], dtype=float).reshape(-1, len(header))
    p = (len(header) - 4) // 2
    return {
        "k": data[:, 0].astype(np.int64),
        "a_k": data[:, 1],
        "y_plus": data[:, 2],
        "y_minus": data[:, 3],
        "theta": data[:, 4 : 4 + p],
        "g": data[:, 4 + p :],
    }


def run(
    config: RunConfig,
    oracle,
    bounds: BoxBounds | None = None,
    repair: Callable[[np.ndarray], np.ndarray] | None = None,
    executor: Executor | None = None,
) -> RunTrace:
    oracle = as_oracle(oracle)
    M, p = config.M, config.p
    if bounds is not None and bounds.p != p:
        raise ValueError(f"bounds have dimension {bounds.p}, theta0 has {p}")
    rng = generator(substream(config.base_seed, TAG_PERTURBATION))

    ks = np.arange(M, dtype=np.int64)
    # one batched draw consumes the stream exactly like M calls to draw_perturbation
    deltas = rng.integers(0, 2, size=(M, p), dtype=np.int64) * 2 - 1
    half = deltas / 2.0
    a = np.array([gain_at(config.gains, k) for k in range(M)])
    yp = np.empty(M)
    ym = np.empty(M)
    thetas = np.empty((M, p))
    mids = np.empty((M, p))
    gs = np.empty((M, p))
    if bounds is not None:
        lo, hi, top = bounds.lower, bounds.upper, bounds.upper - bounds.tau
    threaded = executor is not None and getattr(oracle, "thread_safe", False)
    counters = np.arange(M, dtype=np.uint64)
    if config.crn:
        s_p = s_m = mix64_array(config.base_seed, counters).tolist()
    else:
        s_p = mix64_array(config.base_seed, 2 * counters).tolist()
        s_m = mix64_array(config.base_seed, 2 * counters + np.uint64(1)).tolist()

    theta = config.theta0.copy()
    for k in range(M):
        # inline midpoint(): same projection, without per-call validation
        t = theta if bounds is None else np.where(theta >= hi, top, np.maximum(theta, lo))
        mid = np.floor(t) + 0.5
        if threaded:
            y_plus, y_minus = eval_pair(mid, deltas[k], oracle, config.crn, k, config.base_seed, executor)
        else:
            y_plus = _call(oracle, mid + half[k], s_p[k], k)
            y_minus = _call(oracle, mid - half[k], s_m[k], k)
        g = (y_plus - y_minus) / deltas[k]
        yp[k], ym[k] = y_plus, y_minus
        thetas[k], mids[k], gs[k] = theta, mid, g
        theta = theta - a[k] * g
        if repair is not None:
            theta = np.asarray(repair(theta), dtype=float)
    return RunTrace(ks, a, yp, ym, thetas, mids, deltas, gs, theta, finalize(theta, bounds))


def _call(oracle, point: np.ndarray, seed: int, k: int) -> float:
    try:
        return float(oracle.evaluate(point, seed))
    except Exception as exc:
        raise OracleError(k, point, exc) from exc


def tune_initial_gain(
    oracle,
    theta0: np.ndarray,
    bounds: BoxBounds | None,
    desired_step: float,
    n_samples: int,
    base_seed: int,
    crn: bool = False,
) -> float:
    """Pick ``a`` so that ``a`` times the mean ``|g_0|`` equals ``desired_step``."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if not desired_step > 0:
        raise ValueError("desired_step must be positive")
    oracle = as_oracle(oracle)
    theta0 = np.asarray(theta0, dtype=float)
    stream = substream(base_seed, TAG_TUNE)
    rng = generator(stream)
    mid = midpoint(theta0, bounds)
    total = 0.0
    for i in range(n_samples):
        delta = draw_perturbation(theta0.size, rng)
        y_plus, y_minus = eval_pair(mid, delta, oracle, crn, i, stream)
        total += float(np.mean(np.abs(gradient_estimate(y_plus, y_minus, delta))))
    avg = total / n_samples
    if avg == 0.0 or not math.isfinite(avg):
        raise FlatLossError(f"mean gradient magnitude at theta0 is {avg}; cannot scale the gain")
    return desired_step / avg
