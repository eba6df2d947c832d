"""Data types of the cell-level stochastic epidemic model.

The population is split into ten cells, five age groups by two risk
levels (``cell = 2 * age + risk``, ``risk = 1`` is high risk). Each cell
carries integer counts in ten compartments, see ``COMPARTMENTS``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..codec import AGE_GROUPS, CovidPlan, H1N1Plan
from ..seeding import generator

N_AGES = 5
N_CELLS = 10
LAYERS = ("household", "school", "work", "community")

# S   susceptible, unvaccinated
# W   susceptible, vaccinated without protection
# Q   susceptible, quarantined at home by contact tracing
# E   latent
# EQ  latent, quarantined (isolated once infectious)
# IA  infectious, asymptomatic
# IS  infectious, symptomatic
# IM  infectious and managed (antiviral-treated or isolated)
# R   removed
# V   protected by vaccination
COMPARTMENTS = ("S", "W", "Q", "E", "EQ", "IA", "IS", "IM", "R", "V")
S, W, Q, E, EQ, IA, IS, IM, R, V = range(10)

# tally layout
T_SYM = 0
T_DEAD = 10
T_HOSP = 20
T_ICU = 21
T_VACC = 22
T_COURSES = 23
T_TESTS = 24
T_TRACED = 25
T_HH_TREATED = 26
T_INVENTORY = 27
N_TALLY = 28


class ConfigError(ValueError):
    """A scenario configuration violates its invariants."""


def _vec(x: Sequence[float], n: int, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float).ravel()
    if arr.size != n:
        raise ConfigError(f"{name} needs {n} entries, got {arr.size}")
    return arr


def _age_risk(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != (N_AGES, 2):
        raise ConfigError(f"{name} must be a 5x2 table (age x [low, high] risk), got {arr.shape}")
    return arr


@dataclass(frozen=True)
class PopulationConfig:
    total_population: int
    age_fractions: np.ndarray
    high_risk_fraction_by_age: np.ndarray
    households_count: int
    students_count: int
    communities_count: int
    R0: float
    mean_latent_days: float
    mean_infectious_days: float
    sim_length_days: int
    initial_infected: int

    def __post_init__(self) -> None:
        fr = _vec(self.age_fractions, N_AGES, "age_fractions")
        hr = _vec(self.high_risk_fraction_by_age, N_AGES, "high_risk_fraction_by_age")
        object.__setattr__(self, "age_fractions", fr)
        object.__setattr__(self, "high_risk_fraction_by_age", hr)
        if np.any(fr < 0) or abs(fr.sum() - 1.0) > 1e-9:
            raise ConfigError(f"age fractions must be nonnegative and sum to 1, got sum {fr.sum()}")
        if np.any(hr < 0) or np.any(hr > 1):
            raise ConfigError("high-risk fractions must lie in [0, 1]")
        for name in ("total_population", "households_count", "students_count",
                     "communities_count", "sim_length_days", "initial_infected"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.total_population < 1:
            raise ConfigError("total_population must be positive")
        if not 1 <= self.households_count <= self.total_population:
            raise ConfigError("households_count must lie in [1, total_population]")
        if self.students_count < 0 or self.communities_count < 1:
            raise ConfigError("students_count must be >= 0 and communities_count >= 1")
        if not 0 <= self.initial_infected <= self.total_population:
            raise ConfigError("initial_infected must lie in [0, total_population]")
        if self.R0 <= 0 or self.mean_latent_days < 1 or self.mean_infectious_days < 1:
            raise ConfigError("R0 must be positive and mean durations at least one day")
        if self.sim_length_days < 1:
            raise ConfigError("sim_length_days must be positive")

    @property
    def household_size(self) -> float:
        return self.total_population / self.households_count

    def age_counts(self) -> np.ndarray:
        return largest_remainder(self.age_fractions, self.total_population)

    def cell_counts(self) -> np.ndarray:
        ages = self.age_counts()
        high = np.rint(ages * self.high_risk_fraction_by_age).astype(np.int64)
        cells = np.empty(N_CELLS, dtype=np.int64)
        cells[0::2] = ages - high
        cells[1::2] = high
        return cells


def largest_remainder(fractions: np.ndarray, total: int) -> np.ndarray:
    raw = np.asarray(fractions, dtype=float) * total
    out = np.floor(raw + 1e-9).astype(np.int64)
    short = total - int(out.sum())
    if short > 0:
        order = np.argsort(-(raw - out), kind="stable")
        out[order[:short]] += 1
    return out


@dataclass(frozen=True)
class EpiRates:
    """Per-case probabilities and intervention effect sizes.

    Defaults are placeholders, not values from any published table.
    """

    symptomatic_fraction: float = 0.67
    asymptomatic_infectiousness: float = 0.5
    hospitalization_ratio_by_age_risk: np.ndarray = field(
        default_factory=lambda: np.array(
            [[0.016, 0.16], [0.008, 0.08], [0.012, 0.12], [0.020, 0.20], [0.08, 0.40]]
        )
    )
    icu_fraction_of_hospitalized: float = 0.10
    fatality_ratio_by_age_risk: np.ndarray = field(
        default_factory=lambda: np.array(
            [[5e-4, 5e-3], [1.25e-4, 1.25e-3], [6.25e-4, 6.25e-3], [1.25e-3, 1.25e-2], [3.75e-3, 3.75e-2]]
        )
    )
    vaccine_efficacy: float = 0.8
    antiviral_transmission_reduction: float = 0.4
    antiviral_susceptibility_reduction: float = 0.3
    ascertainment_rate: float = 0.2
    background_test_rate: float = 0.01
    isolation_days: float = 14.0
    hhtap100_household_cap: int = 100

    def __post_init__(self) -> None:
        hosp = _age_risk(self.hospitalization_ratio_by_age_risk, "hospitalization ratios")
        fat = _age_risk(self.fatality_ratio_by_age_risk, "fatality ratios")
        object.__setattr__(self, "hospitalization_ratio_by_age_risk", hosp)
        object.__setattr__(self, "fatality_ratio_by_age_risk", fat)
        probs = {
            "symptomatic_fraction": self.symptomatic_fraction,
            "asymptomatic_infectiousness": self.asymptomatic_infectiousness,
            "icu_fraction_of_hospitalized": self.icu_fraction_of_hospitalized,
            "vaccine_efficacy": self.vaccine_efficacy,
            "antiviral_transmission_reduction": self.antiviral_transmission_reduction,
            "antiviral_susceptibility_reduction": self.antiviral_susceptibility_reduction,
            "ascertainment_rate": self.ascertainment_rate,
            "background_test_rate": self.background_test_rate,
        }
        for name, val in probs.items():
            if not 0.0 <= val <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {val}")
        if np.any(hosp < 0) or np.any(hosp > 1) or np.any(fat < 0) or np.any(fat > 1):
            raise ConfigError("hospitalization and fatality ratios must lie in [0, 1]")
        if np.any(fat > hosp):
            raise ConfigError("fatality ratio may not exceed hospitalization ratio (deaths are hospitalized)")
        if np.any(fat[:, 1] < fat[:, 0]):
            raise ConfigError("high-risk fatality ratio must be at least the low-risk ratio")
        if self.isolation_days < 1:
            raise ConfigError("isolation_days must be at least one day")

    def cell_vector(self, table: np.ndarray) -> np.ndarray:
        return np.asarray(table, dtype=float).reshape(N_CELLS)


@dataclass(frozen=True)
class ContactStructure:
    """Daily contacts per person, ``matrices[layer, age_of_person, age_of_contact]``."""

    matrices: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrices, dtype=float)
        if m.shape != (len(LAYERS), N_AGES, N_AGES):
            raise ConfigError(f"contact layers must have shape (4, 5, 5), got {m.shape}")
        if np.any(m < 0):
            raise ConfigError("contact rates must be nonnegative")
        object.__setattr__(self, "matrices", m)

    def layer(self, name: str) -> np.ndarray:
        return self.matrices[LAYERS.index(name)]

    def reciprocal(self, age_population: np.ndarray) -> ContactStructure:
        """Balance each layer so total contacts ``C[a, b] * N[a]`` are symmetric."""
        n = np.asarray(age_population, dtype=float)
        out = np.zeros_like(self.matrices)
        for li, m in enumerate(self.matrices):
            pairs = m * n[:, None]
            sym = (pairs + pairs.T) / 2.0
            with np.errstate(divide="ignore", invalid="ignore"):
                out[li] = np.where(n[:, None] > 0, sym / n[:, None], 0.0)
        return ContactStructure(out)

    def scaled(self, scales: Sequence[float]) -> ContactStructure:
        s = np.asarray(scales, dtype=float)
        return ContactStructure(self.matrices * s[:, None, None])

    @classmethod
    def homogeneous(cls, age_fractions: Sequence[float], contacts_per_day: float = 1.0) -> ContactStructure:
        fr = np.asarray(age_fractions, dtype=float)
        m = np.zeros((len(LAYERS), N_AGES, N_AGES))
        m[LAYERS.index("community")] = contacts_per_day * np.tile(fr, (N_AGES, 1))
        return cls(m)


def default_contacts() -> ContactStructure:
    """Placeholder layered contact rates (rows: person's age, columns: contact's age)."""
    household = [
        [0.6, 0.8, 0.5, 1.4, 0.1],
        [0.3, 1.2, 0.3, 1.4, 0.1],
        [0.2, 0.3, 0.9, 0.6, 0.1],
        [0.2, 0.7, 0.3, 1.0, 0.2],
        [0.05, 0.1, 0.1, 0.4, 0.9],
    ]
    school = [
        [2.0, 0.0, 0.0, 0.2, 0.0],
        [0.0, 9.0, 0.2, 0.6, 0.0],
        [0.0, 0.3, 0.0, 0.0, 0.0],
        [0.02, 0.3, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0],
    ]
    work = [
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 2.0, 2.5, 0.1],
        [0.0, 0.0, 1.0, 3.0, 0.2],
        [0.0, 0.0, 0.2, 0.4, 0.2],
    ]
    community = [
        [0.1, 0.2, 0.2, 0.5, 0.1],
        [0.1, 0.6, 0.3, 0.6, 0.1],
        [0.1, 0.3, 1.0, 1.0, 0.2],
        [0.1, 0.3, 0.5, 1.2, 0.3],
        [0.1, 0.2, 0.3, 0.8, 0.6],
    ]
    return ContactStructure(np.array([household, school, work, community], dtype=float))


def calibrate_beta(config: PopulationConfig, rates: EpiRates, contacts: ContactStructure) -> float:
    """Transmission scale giving the next-generation matrix spectral radius ``R0``.

    One infectious person in group ``b`` causes ``beta * D * w * C[a, b] *
    N[a] / N[b]`` infections in group ``a``, where ``D`` is the mean
    infectious period and ``w`` the average relative infectiousness.
    """
    n = config.age_counts().astype(float)
    m = contacts.reciprocal(n).matrices.sum(axis=0)
    present = n > 0
    m = m[np.ix_(present, present)]
    n = n[present]
    ngm = m * n[:, None] / n[None, :]
    rho = float(np.max(np.abs(np.linalg.eigvals(ngm))))
    if rho <= 0:
        raise ConfigError("contact structure has no transmission (spectral radius 0)")
    f = rates.symptomatic_fraction
    w = f + (1.0 - f) * rates.asymptomatic_infectiousness
    if w <= 0:
        raise ConfigError("average infectiousness is zero")
    return config.R0 / (config.mean_infectious_days * w * rho)


@dataclass
class PopulationState:
    """Mutable simulation state; ``compartments[k, cell]``."""

    config: PopulationConfig
    compartments: np.ndarray
    vaccinated: np.ndarray
    tally: np.ndarray
    daily_new: np.ndarray

    def copy(self) -> PopulationState:
        return PopulationState(
            self.config,
            self.compartments.copy(),
            self.vaccinated.copy(),
            self.tally.copy(),
            self.daily_new.copy(),
        )

    @property
    def cell_population(self) -> np.ndarray:
        return self.compartments.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.compartments.sum())


def build_population(config: PopulationConfig, seed: int) -> PopulationState:
    cells = config.cell_counts()
    ages = cells.reshape(N_AGES, 2).sum(axis=1)
    school_age = int(ages[AGE_GROUPS.index("school_age")])
    if config.students_count > school_age:
        raise ConfigError(
            f"students_count {config.students_count} exceeds the school-age population {school_age}"
        )
    comp = np.zeros((len(COMPARTMENTS), N_CELLS), dtype=np.int64)
    comp[S] = cells
    if config.initial_infected:
        # index cases start infectious and symptomatic
        seeded = generator(seed).multinomial(config.initial_infected, cells / cells.sum())
        seeded = np.minimum(seeded, cells)
        comp[S] -= seeded
        comp[IS] += seeded
    return PopulationState(
        config,
        comp,
        np.zeros(N_CELLS, dtype=np.int64),
        np.zeros(N_TALLY, dtype=np.int64),
        np.zeros(config.sim_length_days, dtype=np.int64),
    )


@dataclass(frozen=True)
class OutcomeSummary:
    symptomatic_by_age_risk: np.ndarray
    deaths_by_age_risk: np.ndarray
    hospitalized_count: int
    icu_count: int
    vaccines_used: int
    antiviral_courses_used: int
    tests_performed: int
    traced_quarantines: int
    per_day_new_infections: np.ndarray
    initial_infected: int = 0
    total_population: int = 0

    @classmethod
    def empty(cls, days: int = 0) -> OutcomeSummary:
        z = np.zeros((N_AGES, 2), dtype=np.int64)
        return cls(z, z.copy(), 0, 0, 0, 0, 0, 0, np.zeros(days, dtype=np.int64))

    @classmethod
    def from_state(cls, state: PopulationState) -> OutcomeSummary:
        t = state.tally
        return cls(
            t[T_SYM:T_SYM + N_CELLS].reshape(N_AGES, 2).copy(),
            t[T_DEAD:T_DEAD + N_CELLS].reshape(N_AGES, 2).copy(),
            int(t[T_HOSP]),
            int(t[T_ICU]),
            int(t[T_VACC]),
            int(t[T_COURSES]),
            int(t[T_TESTS]),
            int(t[T_TRACED]),
            state.daily_new.copy(),
            state.config.initial_infected,
            state.config.total_population,
        )

    def with_counts(self, **kw) -> OutcomeSummary:
        return replace(self, **kw)

    @property
    def symptomatic_total(self) -> int:
        return int(self.symptomatic_by_age_risk.sum())

    @property
    def deaths_total(self) -> int:
        return int(self.deaths_by_age_risk.sum())

    @property
    def new_infections(self) -> int:
        return int(self.per_day_new_infections.sum())

    @property
    def attack_rate(self) -> float:
        if not self.total_population:
            return float("nan")
        return (self.new_infections + self.initial_infected) / self.total_population


# ---------------------------------------------------------------------------
# intervention schedules


def layer_scales(plan: H1N1Plan | CovidPlan | None, days: int) -> np.ndarray:
    """Per-day multipliers on the four contact layers; row ``d`` is day ``d``."""
    scales = np.ones((days + 1, len(LAYERS)))
    if isinstance(plan, H1N1Plan):
        closed = min(7 * plan.school_closure_weeks, days)
        scales[1 : closed + 1, LAYERS.index("school")] = 0.0
    elif isinstance(plan, CovidPlan):
        d = np.arange(days + 1)
        dist = plan.distancing
        on = (d >= dist.start_day) & (d < dist.end_day)
        keep = 1.0 - dist.intensity_percent / 100.0
        scales[on, LAYERS.index("work")] *= keep
        scales[on, LAYERS.index("community")] *= keep
        sc = plan.school_closure
        on = (d >= sc.start_day) & (d < sc.end_day)
        scales[on, LAYERS.index("school")] *= 1.0 - sc.intensity_percent / 100.0
    scales[0] = 1.0
    return scales


def effective_contacts(day: int, plan: H1N1Plan | CovidPlan | None, base: ContactStructure,
                       days: int | None = None) -> ContactStructure:
    horizon = max(day, days or 0)
    return base.scaled(layer_scales(plan, horizon)[day])
