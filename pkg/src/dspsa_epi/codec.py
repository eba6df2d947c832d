"""Box projection, window repair and the integer <-> plan codecs.

Canonical H1N1 layout (8 slots)::

    [fraction*10, P_pre_school, P_school_age, P_young_adults,
     P_older_adults, P_elderly, antiviral_policy, closure_weeks]

Canonical COVID layout (12 slots), ``(start, end, intensity/10)`` for
distancing, school closure, testing and tracing in that order. A policy is
active on days ``start <= day < end``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any

import numpy as np

AGE_GROUPS = ("pre_school", "school_age", "young_adults", "older_adults", "elderly")
COVID_POLICIES = ("distancing", "school_closure", "testing", "tracing")

H1N1_DIM = 8
COVID_DIM = 12
H1N1_MAX_CLOSURE_WEEKS = 25


class CodecError(ValueError):
    """An integer vector or plan lies outside its discrete grid."""


# ---------------------------------------------------------------------------
# projection


@dataclass(frozen=True)
class BoxBounds:
    """Per-coordinate box ``[lower, upper]`` with the upper offset ``tau``."""

    lower: np.ndarray
    upper: np.ndarray
    tau: float = 0.5

    def __post_init__(self) -> None:
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        if lower.shape != upper.shape or lower.size == 0:
            raise ValueError("lower and upper must be non-empty vectors of equal length")
        if not np.all(lower < upper):
            raise ValueError("every lower bound must be strictly below its upper bound")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @classmethod
    def uniform(cls, p: int, lower: float, upper: float, tau: float = 0.5) -> BoxBounds:
        return cls(np.full(p, float(lower)), np.full(p, float(upper)), tau)

    @property
    def p(self) -> int:
        return self.lower.size

    def project(self, t: np.ndarray) -> np.ndarray:
        return project_box(t, self)

    def clipped_upper(self, t: np.ndarray) -> np.ndarray:
        return np.asarray(t, dtype=float) >= self.upper

    def contains(self, theta: np.ndarray) -> bool:
        theta = np.asarray(theta, dtype=float)
        return bool(np.all(theta >= self.lower) and np.all(theta <= self.upper))


def project_box(t: np.ndarray, bounds: BoxBounds) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.shape != bounds.lower.shape:
        raise ValueError(f"dimension mismatch: {t.shape} vs {bounds.lower.shape}")
    out = t.copy()
    out[t < bounds.lower] = bounds.lower[t < bounds.lower]
    high = t >= bounds.upper
    out[high] = bounds.upper[high] - bounds.tau
    return out


# ---------------------------------------------------------------------------
# COVID window repair

COVID_WINDOW_PAIRS = ((0, 1), (3, 4), (6, 7), (9, 10))
COVID_INTENSITY_SLOTS = (2, 5, 8, 11)


def repair_windows(
    theta: np.ndarray, pairs: tuple[tuple[int, int], ...] = COVID_WINDOW_PAIRS
) -> np.ndarray:
    """Set ``start = end - 1`` wherever a window's end precedes its start."""
    out = np.array(theta, dtype=float, copy=True)
    for s, e in pairs:
        if out[e] < out[s]:
            out[s] = out[e] - 1.0
    return out


def repair_point(theta: np.ndarray, first_day: int = 1) -> np.ndarray:
    """Repair an integer evaluation point and keep start days on the calendar."""
    out = repair_windows(theta)
    for s, _ in COVID_WINDOW_PAIRS:
        out[s] = max(out[s], float(first_day))
    return out


# ---------------------------------------------------------------------------
# H1N1 plans


class AntiviralPolicy(enum.IntEnum):
    NONE = 0
    TREATMENT_ONLY = 1
    HHTAP100 = 2
    HHTAP = 3


_AV_NAMES = {
    AntiviralPolicy.NONE: "none",
    AntiviralPolicy.TREATMENT_ONLY: "treatment_only",
    AntiviralPolicy.HHTAP100: "hhtap100",
    AntiviralPolicy.HHTAP: "hhtap",
}


def _on_grid(x: float, step: float) -> bool:
    q = x / step
    return abs(q - round(q)) < 1e-9


@dataclass(frozen=True)
class H1N1Plan:
    vaccination_fraction: float = 0.0
    priorities: tuple[int, int, int, int, int] = (0, 0, 0, 0, 0)
    antiviral_policy: AntiviralPolicy = AntiviralPolicy.NONE
    school_closure_weeks: int = 0

    def __post_init__(self) -> None:
        f = float(self.vaccination_fraction)
        if not 0.0 <= f <= 1.0 or not _on_grid(f, 0.1):
            raise CodecError(f"vaccination fraction {f} is not one of 0.0, 0.1, ..., 1.0")
        object.__setattr__(self, "vaccination_fraction", round(f * 10) / 10)
        pr = tuple(int(x) for x in self.priorities)
        if len(pr) != 5 or any(x not in (0, 1, 2, 3) for x in pr):
            raise CodecError(f"priorities must be five values in 0..3, got {self.priorities}")
        object.__setattr__(self, "priorities", pr)
        object.__setattr__(self, "antiviral_policy", AntiviralPolicy(int(self.antiviral_policy)))
        if int(self.school_closure_weeks) < 0:
            raise CodecError("school closure weeks must be nonnegative")
        object.__setattr__(self, "school_closure_weeks", int(self.school_closure_weeks))


H1N1_LOWER = np.zeros(H1N1_DIM)


def h1n1_bounds(max_closure_weeks: int = H1N1_MAX_CLOSURE_WEEKS, tau: float = 0.5) -> BoxBounds:
    upper = np.array([10, 3, 3, 3, 3, 3, 3, max_closure_weeks], dtype=float)
    return BoxBounds(H1N1_LOWER.copy(), upper, tau)


def _as_int_vector(theta: Any, dim: int) -> np.ndarray:
    arr = np.asarray(theta, dtype=float).ravel()
    if arr.size != dim:
        raise CodecError(f"expected a vector of length {dim}, got {arr.size}")
    if not np.all(np.isfinite(arr)) or not np.all(arr == np.round(arr)):
        raise CodecError(f"vector must be integer-valued, got {arr.tolist()}")
    return arr.astype(np.int64)


def decode_h1n1(theta: Any, max_closure_weeks: int = H1N1_MAX_CLOSURE_WEEKS) -> H1N1Plan:
    v = _as_int_vector(theta, H1N1_DIM)
    if not 0 <= v[0] <= 10:
        raise CodecError(f"slot 0 (vaccination fraction) = {v[0]} outside [0, 10]")
    for i, name in enumerate(AGE_GROUPS, start=1):
        if not 0 <= v[i] <= 3:
            raise CodecError(f"slot {i} (priority {name}) = {v[i]} outside [0, 3]")
    if not 0 <= v[6] <= 3:
        raise CodecError(f"slot 6 (antiviral policy) = {v[6]} outside [0, 3]")
    if not 0 <= v[7] <= max_closure_weeks:
        raise CodecError(f"slot 7 (school closure weeks) = {v[7]} outside [0, {max_closure_weeks}]")
    return H1N1Plan(v[0] / 10, tuple(int(x) for x in v[1:6]), AntiviralPolicy(int(v[6])), int(v[7]))


def encode_h1n1(plan: H1N1Plan) -> np.ndarray:
    f = plan.vaccination_fraction
    if not _on_grid(f, 0.1):
        raise CodecError(f"vaccination fraction {f} is off the 0.1 grid")
    return np.array(
        [round(f * 10), *plan.priorities, int(plan.antiviral_policy), plan.school_closure_weeks],
        dtype=np.int64,
    )


# ---------------------------------------------------------------------------
# COVID plans


@dataclass(frozen=True)
class PolicyWindow:
    start_day: int
    end_day: int
    intensity_percent: int = 0

    def __post_init__(self) -> None:
        for name in ("start_day", "end_day"):
            object.__setattr__(self, name, int(getattr(self, name)))
        pct = self.intensity_percent
        if not 0 <= pct <= 100 or not _on_grid(float(pct), 10.0):
            raise CodecError(f"intensity {pct}% is not one of 0, 10, ..., 100")
        object.__setattr__(self, "intensity_percent", int(round(pct)))
        if self.start_day < 0 or self.start_day > self.end_day:
            raise CodecError(
                f"window start {self.start_day} must not follow end {self.end_day}; "
                "repair the vector first"
            )

    def active(self, day: int) -> bool:
        return self.start_day <= day < self.end_day

    def days_within(self, sim_length: int) -> int:
        lo = max(self.start_day, 1)
        hi = min(self.end_day, sim_length + 1)
        return max(0, hi - lo)


NULL_WINDOW = PolicyWindow(1, 2, 0)


@dataclass(frozen=True)
class CovidPlan:
    distancing: PolicyWindow = NULL_WINDOW
    school_closure: PolicyWindow = NULL_WINDOW
    testing: PolicyWindow = NULL_WINDOW
    tracing: PolicyWindow = NULL_WINDOW

    def windows(self) -> tuple[PolicyWindow, ...]:
        return (self.distancing, self.school_closure, self.testing, self.tracing)


def covid_bounds(sim_length: int, tau: float = 0.5) -> BoxBounds:
    lower = np.tile([1.0, 1.0, 0.0], 4)
    upper = np.tile([float(sim_length), float(sim_length), 10.0], 4)
    return BoxBounds(lower, upper, tau)


def decode_covid(theta: Any, sim_length: int) -> CovidPlan:
    v = _as_int_vector(theta, COVID_DIM)
    windows = []
    for j, name in enumerate(COVID_POLICIES):
        s, e, lvl = (int(x) for x in v[3 * j : 3 * j + 3])
        if not 0 <= lvl <= 10:
            raise CodecError(f"slot {3 * j + 2} ({name} intensity) = {lvl} outside [0, 10]")
        if e > sim_length:
            raise CodecError(f"slot {3 * j + 1} ({name} end day) = {e} beyond day {sim_length}")
        if s > e:
            raise CodecError(f"{name}: start day {s} after end day {e}; repair the vector first")
        windows.append(PolicyWindow(s, e, 10 * lvl))
    return CovidPlan(*windows)


def encode_covid(plan: CovidPlan) -> np.ndarray:
    out = []
    for w in plan.windows():
        if not _on_grid(float(w.intensity_percent), 10.0):
            raise CodecError(f"intensity {w.intensity_percent}% is off the 10% grid")
        out += [w.start_day, w.end_day, w.intensity_percent // 10]
    return np.array(out, dtype=np.int64)


def covid_eval_decoder(sim_length: int):
    """Decoder used by the COVID oracle: repair the point, then decode it."""

    def decode(theta: Any) -> CovidPlan:
        return decode_covid(repair_point(_as_int_vector(theta, COVID_DIM)), sim_length)

    return decode


# ---------------------------------------------------------------------------
# JSON documents


def plan_to_dict(plan: H1N1Plan | CovidPlan) -> dict[str, Any]:
    if isinstance(plan, H1N1Plan):
        return {
            "kind": "h1n1",
            "vaccination_fraction": plan.vaccination_fraction,
            "priorities": dict(zip(AGE_GROUPS, plan.priorities)),
            "antiviral_policy": _AV_NAMES[plan.antiviral_policy],
            "school_closure_weeks": plan.school_closure_weeks,
        }
    doc: dict[str, Any] = {"kind": "covid"}
    for name, w in zip(COVID_POLICIES, plan.windows()):
        doc[name] = {
            "start_day": w.start_day,
            "end_day": w.end_day,
            "intensity_percent": w.intensity_percent,
        }
    return doc


def plan_from_dict(doc: dict[str, Any]) -> H1N1Plan | CovidPlan:
    kind = doc.get("kind")
    if kind == "h1n1":
        by_name = {v: k for k, v in _AV_NAMES.items()}
        av = doc.get("antiviral_policy", "none")
        if isinstance(av, str):
            if av not in by_name:
                raise CodecError(f"unknown antiviral policy {av!r}; expected one of {sorted(by_name)}")
            av = by_name[av]
        pri = doc.get("priorities", {})
        if isinstance(pri, dict):
            unknown = set(pri) - set(AGE_GROUPS)
            if unknown:
                raise CodecError(f"unknown age groups in priorities: {sorted(unknown)}")
            pri = [pri.get(g, 0) for g in AGE_GROUPS]
        return H1N1Plan(
            doc.get("vaccination_fraction", 0.0),
            tuple(pri),
            av,
            doc.get("school_closure_weeks", 0),
        )
    if kind == "covid":
        windows = []
        for name in COVID_POLICIES:
            w = doc.get(name, {"start_day": 1, "end_day": 2, "intensity_percent": 0})
            windows.append(PolicyWindow(w["start_day"], w["end_day"], w.get("intensity_percent", 0)))
        return CovidPlan(*windows)
    raise CodecError(f"plan document needs kind 'h1n1' or 'covid', got {kind!r}")
