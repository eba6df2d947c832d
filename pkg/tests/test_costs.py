from dataclasses import fields, replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dspsa_epi.codec import AntiviralPolicy, CovidPlan, H1N1Plan, PolicyWindow
from dspsa_epi.costs import (
    CostBreakdown, CostModelError, CovidCostTable, H1N1CostTable, LossOracle, covid_cost,
    covid_school_closure_per_student_day, h1n1_cost, h1n1_school_closure_per_student_day,
    make_oracle, school_closure_per_student_day,
)
from dspsa_epi.epi import EpiRates, OutcomeSummary
from dspsa_epi.scenarios import covid_population, h1n1_population

H1 = h1n1_population(communities_count=1)
CV = covid_population()
RATES = EpiRates()


def zero_out(days=60):
    return OutcomeSummary.empty(days)


def outcome(sym=None, deaths=None, **kw):
    o = zero_out()
    if sym is not None:
        o = o.with_counts(symptomatic_by_age_risk=np.asarray(sym))
    if deaths is not None:
        o = o.with_counts(deaths_by_age_risk=np.asarray(deaths))
    return o.with_counts(**kw) if kw else o


def zeroed(table):
    kw = {}
    for f in fields(table):
        v = getattr(table, f.name)
        if f.name in ("national_population",):
            continue
        kw[f.name] = np.zeros_like(v) if isinstance(v, np.ndarray) else 0.0
    return replace(table, **kw)


# -- composites ------------------------------------------------------------------


def test_school_closure_composites():
    assert h1n1_school_closure_per_student_day(H1N1CostTable()) == 123
    assert covid_school_closure_per_student_day(CovidCostTable()) == 125
    assert school_closure_per_student_day(23, 0) == 23
    assert CovidCostTable().school_closure_per_student_day == covid_school_closure_per_student_day(CovidCostTable())


def test_hospital_case_expectation():
    t = H1N1CostTable()
    expected = 0.9 * 5 * 2430 + 0.1 * (5 * 2430 + 10 * 4960)
    assert t.hospitalized_case_cost == pytest.approx(expected)


def test_unit_cost_defaults():
    t = H1N1CostTable()
    assert (t.hospital_day_cost, t.icu_day_cost, t.vaccine_dose_cost, t.antiviral_course_cost) == (2430, 4960, 40, 74)
    assert t.school_closure_week_per_community == 221_804
    c = CovidCostTable()
    assert (c.test_cost, c.nonhosp_treatment_cost, c.hosp_treatment_cost, c.vsl) == (36, 3994, 30_000, 9.3e6)


# -- H1N1 loss -------------------------------------------------------------------------


def test_h1n1_zero():
    assert h1n1_cost(zero_out(), H1N1Plan(), H1N1CostTable(), H1, RATES).total == 0


def test_h1n1_closure_two_weeks():
    b = h1n1_cost(zero_out(), H1N1Plan(school_closure_weeks=2), H1N1CostTable(), H1, RATES)
    assert b.total == 443_608


def test_h1n1_antiviral_courses():
    b = h1n1_cost(outcome(antiviral_courses_used=1000), H1N1Plan(), H1N1CostTable(), H1, RATES)
    assert b.total == 74_000 and b["antiviral"] == 74_000


def test_h1n1_medication_and_mortality_formula():
    t = H1N1CostTable()
    sym = np.zeros((5, 2), dtype=np.int64)
    sym[3, 1] = 100
    b = h1n1_cost(outcome(sym), H1N1Plan(), t, H1, RATES)
    hosp = RATES.hospitalization_ratio_by_age_risk[3, 1]
    fat = RATES.fatality_ratio_by_age_risk[3, 1]
    assert b["medication"] == pytest.approx(100 * (t.nonhosp_medication_cost_by_age_risk[3, 1] + hosp * t.hospitalized_case_cost))
    assert b["mortality"] == pytest.approx(100 * fat * t.death_cost_by_age[3])


def test_h1n1_vaccination():
    t = H1N1CostTable(adverse_event_expected_cost_per_dose=2.0)
    b = h1n1_cost(outcome(vaccines_used=500), H1N1Plan(), t, H1, RATES)
    assert b["vaccination"] == 500 * 42


@given(st.integers(0, 25), st.integers(1, 200))
def test_h1n1_closure_linear(weeks, communities):
    cfg = h1n1_population(communities_count=communities)
    b = h1n1_cost(zero_out(), H1N1Plan(school_closure_weeks=weeks), H1N1CostTable(), cfg, RATES)
    assert b["school_closure"] == weeks * communities * 221_804


# -- COVID loss -----------------------------------------------------------------------------


def test_covid_zero():
    assert covid_cost(zero_out(), CovidPlan(), CovidCostTable(), CV).total == 0


def test_covid_tests():
    assert covid_cost(outcome(tests_performed=10_000), CovidPlan(), CovidCostTable(), CV).total == 360_000


def test_covid_deaths():
    deaths = np.zeros((5, 2), dtype=np.int64)
    deaths[4, 1] = 2
    b = covid_cost(outcome(deaths=deaths), CovidPlan(), CovidCostTable(), CV)
    assert b["death"] == pytest.approx(18.6e6)
    assert b["treatment"] == 0


def test_covid_treatment_split():
    sym = np.zeros((5, 2), dtype=np.int64)
    sym[2, 0] = 100
    b = covid_cost(outcome(sym, hospitalized_count=10), CovidPlan(), CovidCostTable(), CV)
    assert b["treatment"] == 90 * 3994 + 10 * 30_000


def test_covid_policy_terms():
    t = CovidCostTable()
    plan = CovidPlan(
        distancing=PolicyWindow(1, 15, 40),
        school_closure=PolicyWindow(1, 11, 50),
        tracing=PolicyWindow(1, 31, 100),
    )
    b = covid_cost(zero_out(), plan, t, CV)
    assert b["distancing"] == pytest.approx(CV.households_count * t.household_weekly_income * t.distancing_income_drop_at_38 * 2 * 40 / 38)
    assert b["school_closure"] == pytest.approx(125 * CV.students_count * 10 * 0.5)
    assert b["tracing"] == pytest.approx(1 / t.national_population * 3.6e9 * 30 / 365 * CV.total_population)


def test_mode_mismatch():
    with pytest.raises(CostModelError):
        h1n1_cost(zero_out(), CovidPlan(), H1N1CostTable(), H1, RATES)
    with pytest.raises(CostModelError):
        covid_cost(zero_out(), H1N1Plan(), CovidCostTable(), CV)
    with pytest.raises(CostModelError):
        covid_cost(zero_out(), CovidPlan(), H1N1CostTable(), CV)


def test_table_validation():
    with pytest.raises(CostModelError):
        H1N1CostTable(vaccine_dose_cost=-1)
    with pytest.raises(CostModelError):
        CovidCostTable(distancing_income_drop_at_38=2)
    with pytest.raises(CostModelError):
        H1N1CostTable(death_cost_by_age=np.ones(3))


# -- properties ---------------------------------------------------------------------


counts = st.integers(0, 5000)
cells = st.lists(counts, min_size=10, max_size=10).map(lambda x: np.array(x).reshape(5, 2))


@given(cells, counts, counts, st.integers(0, 25))
def test_h1n1_total_is_sum(sym, vax, courses, weeks):
    b = h1n1_cost(outcome(sym, vaccines_used=vax, antiviral_courses_used=courses),
                  H1N1Plan(school_closure_weeks=weeks), H1N1CostTable(), H1, RATES)
    assert b.total == pytest.approx(sum(v for _, v in b.components), rel=1e-15)
    assert b.to_dict()["total"] == b.total


@given(cells, counts, counts)
def test_covid_monotone_in_counts(sym, tests, deaths_n):
    t = CovidCostTable()
    deaths = np.zeros((5, 2), dtype=np.int64)
    deaths[3, 0] = deaths_n
    base = covid_cost(outcome(sym, deaths, tests_performed=tests), CovidPlan(), t, CV)
    more_tests = covid_cost(outcome(sym, deaths, tests_performed=tests + 1), CovidPlan(), t, CV)
    deaths2 = deaths.copy()
    deaths2[3, 0] += 1
    more_deaths = covid_cost(outcome(sym, deaths2, tests_performed=tests), CovidPlan(), t, CV)
    assert more_tests["testing"] >= base["testing"]
    assert more_deaths["death"] >= base["death"]


@given(cells, counts, st.integers(0, 25))
def test_h1n1_monotone(sym, courses, weeks):
    t = H1N1CostTable()
    a = h1n1_cost(outcome(sym, antiviral_courses_used=courses), H1N1Plan(school_closure_weeks=weeks), t, H1, RATES)
    b = h1n1_cost(outcome(sym, antiviral_courses_used=courses + 1),
                  H1N1Plan(school_closure_weeks=weeks + 1), t, H1, RATES)
    assert b["antiviral"] >= a["antiviral"] and b["school_closure"] >= a["school_closure"]


@given(cells, counts, counts, counts)
def test_zero_unit_costs_give_zero(sym, tests, vax, courses):
    o = outcome(sym, sym, tests_performed=tests, vaccines_used=vax, antiviral_courses_used=courses,
                hospitalized_count=int(sym.sum()))
    plan = CovidPlan(PolicyWindow(1, 30, 50), PolicyWindow(1, 30, 50), PolicyWindow(1, 30, 50), PolicyWindow(1, 30, 50))
    assert covid_cost(o, plan, zeroed(CovidCostTable()), CV).total == 0
    assert h1n1_cost(o, H1N1Plan(0.5, (3, 0, 0, 0, 0), AntiviralPolicy.HHTAP, 4), zeroed(H1N1CostTable()), H1, RATES).total == 0


def test_breakdown_serialisation():
    b = CostBreakdown("covid", (("a", 1.5), ("b", 2.0)))
    assert b.to_csv() == "a,b,total\n1.5,2.0,3.5\n"
    with pytest.raises(KeyError):
        b["c"]


# -- oracle -----------------------------------------------------------------------------


def test_oracle_noise_and_determinism(h1n1_oracle):
    z = np.zeros(8)
    a, b = h1n1_oracle.evaluate(z, 1), h1n1_oracle.evaluate(z, 2)
    assert a != b
    assert h1n1_oracle.evaluate(z, 1) == a


def test_oracle_decode_error_surfaces(h1n1_oracle):
    with pytest.raises(Exception):
        h1n1_oracle.evaluate(np.array([11, 0, 0, 0, 0, 0, 0, 0]), 0)


def test_oracle_mode_checks(h1n1):
    with pytest.raises(CostModelError):
        make_oracle("h1n1", h1n1.population, h1n1.rates, h1n1.contacts, CovidCostTable())
    with pytest.raises(CostModelError):
        LossOracle("sars", None, H1N1CostTable(), lambda t: t)


def test_oracle_breakdown_scale(covid_oracle):
    theta = np.array([1, 2, 0] * 4)
    b = covid_oracle.breakdown(theta, 3)
    assert covid_oracle.evaluate(theta, 3) == pytest.approx(b.total * 1e-6)


def test_optimal_form_beats_null(h1n1_oracle):
    null = np.zeros(8)
    best = np.array([10, 0, 3, 0, 0, 0, 3, 0])
    ys0 = np.array([h1n1_oracle.evaluate(null, s) for s in range(200)])
    ys1 = np.array([h1n1_oracle.evaluate(best, s) for s in range(200)])
    assert ys1.mean() < ys0.mean()
