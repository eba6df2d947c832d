"""Societal cost of an epidemic outcome under an intervention plan.

Two loss functions are provided. The H1N1 loss adds medication,
vaccination, antiviral, school-closure and mortality costs. The COVID loss
adds distancing, school-closure, testing, tracing, treatment and death
costs. Composing either with the simulator gives a noisy loss oracle.

Defaults flagged "placeholder" stand in for external tables and should be
replaced with real data before drawing conclusions.
"""

from __future__ import annotations

import csv
import io
import threading
from dataclasses import dataclass, field, fields
from typing import Any, Callable

import numpy as np

from .codec import CovidPlan, H1N1Plan, covid_eval_decoder, decode_h1n1
from .epi.model import (
    N_AGES, ContactStructure, EpiRates, OutcomeSummary, PopulationConfig,
)
from .epi.simulate import Simulator

#: Oracle losses are reported in millions of dollars by default.
MILLION = 1e-6


class CostModelError(ValueError):
    """The outcome, plan and cost table do not belong to the same mode."""


def _nonneg(obj: Any) -> None:
    for f in fields(obj):
        val = np.asarray(getattr(obj, f.name), dtype=float)
        if np.any(val < 0) or not np.all(np.isfinite(val)):
            raise CostModelError(f"cost parameter {f.name} must be finite and nonnegative")


@dataclass(frozen=True)
class H1N1CostTable:
    # placeholder: expected outpatient cost per symptomatic case, age x [low, high] risk
    nonhosp_medication_cost_by_age_risk: np.ndarray = field(
        default_factory=lambda: np.array(
            [[70.0, 140.0], [65.0, 130.0], [90.0, 180.0], [115.0, 230.0], [110.0, 220.0]]
        )
    )
    hospital_day_cost: float = 2430.0
    icu_day_cost: float = 4960.0
    hospital_days: float = 5.0
    icu_days: float = 10.0
    icu_fraction: float = 0.10
    vaccine_dose_cost: float = 40.0
    adverse_event_expected_cost_per_dose: float = 5.0  # placeholder
    antiviral_course_cost: float = 74.0
    school_closure_week_per_community: float = 221_804.0
    # placeholder: present value of future earnings lost per death, by age group
    death_cost_by_age: np.ndarray = field(
        default_factory=lambda: np.array([1.40e6, 1.50e6, 2.10e6, 1.60e6, 0.16e6])
    )
    makeup_class_per_student_day: float = 23.0
    weekly_wage: float = 980.0
    couple_missed_days: float = 2.5
    single_missed_days: float = 5.0
    single_parent_share: float = 0.024

    def __post_init__(self) -> None:
        med = np.asarray(self.nonhosp_medication_cost_by_age_risk, dtype=float)
        death = np.asarray(self.death_cost_by_age, dtype=float).ravel()
        if med.shape != (N_AGES, 2):
            raise CostModelError("nonhosp_medication_cost_by_age_risk must be 5x2")
        if death.shape != (N_AGES,):
            raise CostModelError("death_cost_by_age needs one value per age group")
        object.__setattr__(self, "nonhosp_medication_cost_by_age_risk", med)
        object.__setattr__(self, "death_cost_by_age", death)
        _nonneg(self)
        if not 0.0 <= self.icu_fraction <= 1.0 or not 0.0 <= self.single_parent_share <= 1.0:
            raise CostModelError("icu_fraction and single_parent_share must lie in [0, 1]")

    @property
    def hospitalized_case_cost(self) -> float:
        """Expected bill of one hospitalised case: ward days for all, ICU days for some."""
        ward = self.hospital_days * self.hospital_day_cost
        return ward + self.icu_fraction * self.icu_days * self.icu_day_cost


@dataclass(frozen=True)
class CovidCostTable:
    test_cost: float = 36.0
    tracing_national_annual_cost: float = 3.6e9
    national_population: float = 328.2e6
    nonhosp_treatment_cost: float = 3994.0
    hosp_treatment_cost: float = 30_000.0
    vsl: float = 9.3e6
    school_closure_per_student_day: float = 125.0
    weekly_wage: float = 992.0
    makeup_class_per_student_day: float = 23.0
    household_weekly_income: float = 1631.0  # placeholder, census-style median
    distancing_income_drop_at_38: float = 0.10  # placeholder, fraction of income lost
    couple_missed_days: float = 2.5
    single_missed_days: float = 5.0
    single_parent_share: float = 0.024

    def __post_init__(self) -> None:
        _nonneg(self)
        if self.national_population <= 0:
            raise CostModelError("national_population must be positive")
        if not 0.0 <= self.distancing_income_drop_at_38 <= 1.0:
            raise CostModelError("distancing_income_drop_at_38 is a fraction in [0, 1]")


@dataclass(frozen=True)
class CostBreakdown:
    """Named cost components in a fixed order; ``total`` is their sum."""

    mode: str
    components: tuple[tuple[str, float], ...]

    @property
    def total(self) -> float:
        return sum(v for _, v in self.components)

    def __getitem__(self, name: str) -> float:
        for k, v in self.components:
            if k == name:
                return v
        raise KeyError(name)

    def to_dict(self) -> dict[str, float]:
        out = {k: v for k, v in self.components}
        out["total"] = self.total
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.to_dict()
        w.writerow(list(d))
        w.writerow([repr(float(v)) for v in d.values()])
        return buf.getvalue()


def school_closure_per_student_day(
    makeup: float,
    weekly_wage: float,
    couple_missed_days: float = 2.5,
    single_missed_days: float = 5.0,
    single_parent_share: float = 0.024,
) -> float:
    """Daily cost of closing school for one student, in whole dollars.

    Make-up classes plus a parent's daily wage times the expected days of
    work missed per closed week, spread over the five school days. The
    expected days missed mix two-parent and single-parent households by
    ``single_parent_share``.
    """
    missed = (1.0 - single_parent_share) * couple_missed_days + single_parent_share * single_missed_days
    return float(round(makeup + weekly_wage / 5.0 * missed / 5.0))


def h1n1_school_closure_per_student_day(table: H1N1CostTable) -> float:
    return school_closure_per_student_day(
        table.makeup_class_per_student_day, table.weekly_wage, table.couple_missed_days,
        table.single_missed_days, table.single_parent_share,
    )


def covid_school_closure_per_student_day(table: CovidCostTable) -> float:
    return school_closure_per_student_day(
        table.makeup_class_per_student_day, table.weekly_wage, table.couple_missed_days,
        table.single_missed_days, table.single_parent_share,
    )


def h1n1_cost(
    outcome: OutcomeSummary,
    plan: H1N1Plan,
    table: H1N1CostTable,
    config: PopulationConfig,
    rates: EpiRates,
) -> CostBreakdown:
    if not isinstance(plan, H1N1Plan) or not isinstance(table, H1N1CostTable):
        raise CostModelError("h1n1_cost needs an H1N1 plan and an H1N1 cost table")
    sym = np.asarray(outcome.symptomatic_by_age_risk, dtype=float)
    hosp = rates.hospitalization_ratio_by_age_risk
    fat = rates.fatality_ratio_by_age_risk
    per_case = table.nonhosp_medication_cost_by_age_risk + hosp * table.hospitalized_case_cost
    medication = float(np.sum(sym * per_case))
    vaccination = outcome.vaccines_used * (table.vaccine_dose_cost + table.adverse_event_expected_cost_per_dose)
    antiviral = outcome.antiviral_courses_used * table.antiviral_course_cost
    closure = plan.school_closure_weeks * config.communities_count * table.school_closure_week_per_community
    mortality = float(np.sum(sym * fat * table.death_cost_by_age[:, None]))
    return CostBreakdown(
        "h1n1",
        (
            ("medication", medication),
            ("vaccination", float(vaccination)),
            ("antiviral", float(antiviral)),
            ("school_closure", float(closure)),
            ("mortality", mortality),
        ),
    )


def covid_cost(
    outcome: OutcomeSummary,
    plan: CovidPlan,
    table: CovidCostTable,
    config: PopulationConfig,
) -> CostBreakdown:
    if not isinstance(plan, CovidPlan) or not isinstance(table, CovidCostTable):
        raise CostModelError("covid_cost needs a COVID plan and a COVID cost table")
    T = config.sim_length_days
    d = plan.distancing
    weeks = d.days_within(T) / 7.0
    income = config.households_count * table.household_weekly_income
    distancing = d.intensity_percent / 38.0 * income * table.distancing_income_drop_at_38 * weeks
    sc = plan.school_closure
    school = (table.school_closure_per_student_day * config.students_count
              * sc.days_within(T) * sc.intensity_percent / 100.0)
    testing = table.test_cost * outcome.tests_performed
    tr = plan.tracing
    share = config.total_population / table.national_population
    tracing = share * table.tracing_national_annual_cost * tr.days_within(T) / 365.0 * tr.intensity_percent / 100.0
    hosp = outcome.hospitalized_count
    nonhosp = max(outcome.symptomatic_total - hosp, 0)
    treatment = table.nonhosp_treatment_cost * nonhosp + table.hosp_treatment_cost * hosp
    death = table.vsl * outcome.deaths_total
    return CostBreakdown(
        "covid",
        (
            ("distancing", float(distancing)),
            ("school_closure", float(school)),
            ("testing", float(testing)),
            ("tracing", float(tracing)),
            ("treatment", float(treatment)),
            ("death", float(death)),
        ),
    )


class LossOracle:
    """Noisy loss: decode the point, simulate it, and cost the outcome.

    ``evaluate`` returns the total cost times ``scale`` (millions of dollars
    by default) so gain coefficients stay in a readable range.
    """

    thread_safe = True

    def __init__(
        self,
        mode: str,
        simulator: Simulator,
        table: H1N1CostTable | CovidCostTable,
        decoder: Callable[[Any], H1N1Plan | CovidPlan],
        scale: float = MILLION,
    ) -> None:
        if mode not in ("h1n1", "covid"):
            raise CostModelError(f"unknown mode {mode!r}")
        expected = H1N1CostTable if mode == "h1n1" else CovidCostTable
        if not isinstance(table, expected):
            raise CostModelError(f"{mode} oracle needs a {expected.__name__}")
        self.mode = mode
        self.simulator = simulator
        self.table = table
        self.decoder = decoder
        self.scale = float(scale)
        self._lock = threading.Lock()

    def plan(self, theta: Any) -> H1N1Plan | CovidPlan:
        return self.decoder(theta)

    def breakdown_for_plan(self, plan: H1N1Plan | CovidPlan, seed: int) -> CostBreakdown:
        with self._lock:
            prm = self.simulator.params(plan)
        outcome = self.simulator.run_with_params(prm, seed)
        sim = self.simulator
        if self.mode == "h1n1":
            return h1n1_cost(outcome, plan, self.table, sim.config, sim.rates)
        return covid_cost(outcome, plan, self.table, sim.config)

    def breakdown(self, theta: Any, seed: int) -> CostBreakdown:
        return self.breakdown_for_plan(self.plan(theta), seed)

    def evaluate_plan(self, plan: H1N1Plan | CovidPlan, seed: int) -> float:
        return self.breakdown_for_plan(plan, seed).total * self.scale

    def evaluate(self, theta: Any, seed: int) -> float:
        return self.evaluate_plan(self.plan(theta), seed)


def make_oracle(
    mode: str,
    config: PopulationConfig,
    rates: EpiRates,
    contacts: ContactStructure,
    table: H1N1CostTable | CovidCostTable,
    decoder: Callable[[Any], H1N1Plan | CovidPlan] | None = None,
    supply=None,
    backend: str | None = None,
    scale: float = MILLION,
) -> LossOracle:
    if decoder is None:
        decoder = decode_h1n1 if mode == "h1n1" else covid_eval_decoder(config.sim_length_days)
    sim = Simulator(config, rates, contacts, supply if mode == "h1n1" else None, backend)
    return LossOracle(mode, sim, table, decoder, scale)
