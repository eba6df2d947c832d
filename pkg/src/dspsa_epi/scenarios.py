"""Built-in scenarios: population, rates, costs and optimiser settings.

Numbers marked placeholder are illustrative and not taken from any
published table; swap in real values through a config file.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .codec import (
    AntiviralPolicy, BoxBounds, CovidPlan, H1N1Plan, covid_bounds, covid_eval_decoder,
    decode_covid, decode_h1n1, h1n1_bounds, repair_point,
)
from .costs import MILLION, CovidCostTable, H1N1CostTable, LossOracle, make_oracle
from .dspsa import GainSchedule
from .epi.model import ContactStructure, EpiRates, PopulationConfig, default_contacts

MODES = ("h1n1", "covid")

H1N1_POPULATION = 99_617
H1N1_STUDENTS = 21_976


def h1n1_population(**overrides: Any) -> PopulationConfig:
    school = H1N1_STUDENTS / H1N1_POPULATION
    pre, young, elderly = 0.068, 0.150, 0.124
    kw: dict[str, Any] = dict(
        total_population=H1N1_POPULATION,
        age_fractions=[pre, school, young, 1.0 - pre - school - young - elderly, elderly],
        high_risk_fraction_by_age=[0.05, 0.08, 0.10, 0.20, 0.40],
        households_count=35_578,
        students_count=H1N1_STUDENTS,
        communities_count=61,
        R0=1.3,
        mean_latent_days=1.5,
        mean_infectious_days=3.0,
        sim_length_days=175,
        initial_infected=20,
    )
    kw.update(overrides)
    return PopulationConfig(**kw)


def h1n1_rates(**overrides: Any) -> EpiRates:
    return EpiRates(**overrides)


def h1n1_supply(total_doses: int = 23_000, first_day: int = 45, last_day: int = 97) -> dict[int, int]:
    """Weekly vaccine deliveries (placeholder schedule), as ``{day: doses}``."""
    days = list(range(first_day, last_day + 1, 7))
    base, extra = divmod(total_doses, len(days))
    return {d: base + (1 if i < extra else 0) for i, d in enumerate(days)}


def covid_population(**overrides: Any) -> PopulationConfig:
    kw: dict[str, Any] = dict(
        total_population=100_000,
        age_fractions=[0.060, 0.175, 0.145, 0.465, 0.155],
        high_risk_fraction_by_age=[0.03, 0.05, 0.10, 0.25, 0.55],
        households_count=37_453,
        students_count=17_000,
        communities_count=1,
        R0=2.5,
        mean_latent_days=4.6,
        mean_infectious_days=8.0,
        sim_length_days=60,
        initial_infected=50,
    )
    kw.update(overrides)
    return PopulationConfig(**kw)


def covid_rates(**overrides: Any) -> EpiRates:
    kw: dict[str, Any] = dict(
        symptomatic_fraction=0.65,
        asymptomatic_infectiousness=0.5,
        hospitalization_ratio_by_age_risk=np.array(
            [[0.002, 0.02], [0.002, 0.02], [0.01, 0.05], [0.04, 0.12], [0.12, 0.30]]
        ),
        fatality_ratio_by_age_risk=np.array(
            [[1e-5, 1e-4], [1e-5, 1e-4], [2e-4, 1e-3], [2e-3, 1e-2], [2e-2, 6e-2]]
        ),
        vaccine_efficacy=0.0,
        antiviral_transmission_reduction=0.0,
        antiviral_susceptibility_reduction=0.0,
        ascertainment_rate=0.0,
        background_test_rate=0.02,
        isolation_days=14.0,
    )
    kw.update(overrides)
    return EpiRates(**kw)


@dataclass(frozen=True)
class OptimizerSettings:
    M: int
    theta0: tuple[int, ...]
    gains: GainSchedule
    crn: bool
    runs: int


@dataclass(frozen=True)
class Scenario:
    """Everything needed to build the loss oracle for one mode."""

    mode: str
    population: PopulationConfig
    rates: EpiRates
    contacts: ContactStructure
    costs: H1N1CostTable | CovidCostTable
    optimizer: OptimizerSettings
    supply: dict[int, int] | None = None
    max_closure_weeks: int = 25
    baselines: tuple[tuple[str, H1N1Plan | CovidPlan], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if len(self.optimizer.theta0) != self.bounds().p:
            raise ValueError(f"theta0 must have {self.bounds().p} components for mode {self.mode}")

    def bounds(self, tau: float = 0.5) -> BoxBounds:
        if self.mode == "h1n1":
            return h1n1_bounds(self.max_closure_weeks, tau)
        return covid_bounds(self.population.sim_length_days, tau)

    def decoder(self) -> Callable[[Any], H1N1Plan | CovidPlan]:
        if self.mode == "h1n1":
            weeks = self.max_closure_weeks
            return lambda theta: decode_h1n1(theta, weeks)
        return covid_eval_decoder(self.population.sim_length_days)

    def strict_decoder(self) -> Callable[[Any], H1N1Plan | CovidPlan]:
        if self.mode == "h1n1":
            return self.decoder()
        days = self.population.sim_length_days
        return lambda theta: decode_covid(theta, days)

    def repair(self) -> Callable[[np.ndarray], np.ndarray] | None:
        return repair_point if self.mode == "covid" else None

    def oracle(self, backend: str | None = None, scale: float = MILLION) -> LossOracle:
        return make_oracle(
            self.mode, self.population, self.rates, self.contacts, self.costs,
            self.decoder(), self.supply, backend, scale,
        )

    def with_optimizer(self, **kw: Any) -> Scenario:
        return replace(self, optimizer=replace(self.optimizer, **kw))


def h1n1_baselines() -> tuple[tuple[str, H1N1Plan], ...]:
    """Strategies of the kind recommended elsewhere, expressed as plans."""
    everyone = (3, 3, 3, 3, 3)
    return (
        ("hhtap_2wk_closure", H1N1Plan(0.0, (0, 0, 0, 0, 0), AntiviralPolicy.HHTAP, 2)),
        ("school_age_and_adults", H1N1Plan(1.0, (0, 3, 0, 2, 0))),
        ("vaccinate_60pct", H1N1Plan(0.6, everyone)),
        ("vaccinate_40pct", H1N1Plan(0.4, everyone)),
    )


def h1n1_scenario() -> Scenario:
    return Scenario(
        mode="h1n1",
        population=h1n1_population(),
        rates=h1n1_rates(),
        contacts=default_contacts(),
        costs=H1N1CostTable(),
        optimizer=OptimizerSettings(
            M=10_000,
            theta0=(2, 0, 0, 0, 0, 0, 0, 0),
            gains=GainSchedule(1.5, 1000.0, 0.501),
            crn=False,
            runs=10,
        ),
        supply=h1n1_supply(),
        baselines=h1n1_baselines(),
    )


def covid_scenario() -> Scenario:
    return Scenario(
        mode="covid",
        population=covid_population(),
        rates=covid_rates(),
        contacts=default_contacts(),
        costs=CovidCostTable(),
        optimizer=OptimizerSettings(
            M=5_000,
            theta0=(1, 2, 0) * 4,
            gains=GainSchedule(0.08, 500.0, 0.501),
            crn=True,
            runs=1,
        ),
    )


def default_scenario(mode: str) -> Scenario:
    if mode == "h1n1":
        return h1n1_scenario()
    if mode == "covid":
        return covid_scenario()
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def homogeneous_population(
    R0: float = 1.3,
    total_population: int = 100_000,
    initial_infected: int = 20,
    sim_length_days: int = 730,
) -> tuple[PopulationConfig, EpiRates, ContactStructure]:
    """Single-layer well-mixed population with every infection equally infectious.

    Used to compare the simulator with the classical final-size relation
    and the herd-immunity threshold.
    """
    fr = [0.068, 0.221, 0.150, 0.437, 0.124]
    cfg = PopulationConfig(
        total_population=total_population,
        age_fractions=fr,
        high_risk_fraction_by_age=[0.0] * 5,
        households_count=total_population // 3,
        students_count=0,
        communities_count=1,
        R0=R0,
        mean_latent_days=2.0,
        mean_infectious_days=4.0,
        sim_length_days=sim_length_days,
        initial_infected=initial_infected,
    )
    rates = EpiRates(asymptomatic_infectiousness=1.0, vaccine_efficacy=1.0)
    return cfg, rates, ContactStructure.homogeneous(fr)
