import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dspsa_epi.codec import AntiviralPolicy, CovidPlan, H1N1Plan, PolicyWindow
from dspsa_epi.epi import (
    ConfigError, ContactStructure, EpiRates, OutcomeSummary, Simulator, apply_vaccination,
    build_population, calibrate_beta, default_contacts, effective_contacts, simulate, step_day,
    supply_array,
)
from dspsa_epi.epi.model import IS, S
from dspsa_epi.scenarios import covid_population, h1n1_population, h1n1_supply, homogeneous_population

BACKENDS = ["numba", "numpy"]


# -- population ------------------------------------------------------------------


def test_h1n1_population_total():
    st_ = build_population(h1n1_population(), 0)
    assert st_.total == 99_617
    ages = st_.cell_population.reshape(5, 2).sum(axis=1)
    assert ages[1] == 21_976


def test_covid_population_seeds_50():
    st_ = build_population(covid_population(), 3)
    assert st_.compartments[IS].sum() == 50
    assert st_.total == 100_000


def test_degenerate_age_fractions():
    cfg = h1n1_population(age_fractions=[1, 0, 0, 0, 0], students_count=0)
    cells = build_population(cfg, 0).cell_population.reshape(5, 2).sum(axis=1)
    assert cells.tolist() == [99_617, 0, 0, 0, 0]


def test_students_exceed_school_age():
    with pytest.raises(ConfigError, match="students"):
        build_population(h1n1_population(students_count=30_000), 0)


def test_population_deterministic():
    a, b = build_population(covid_population(), 9), build_population(covid_population(), 9)
    assert np.array_equal(a.compartments, b.compartments)


def test_population_validation():
    with pytest.raises(ConfigError):
        h1n1_population(age_fractions=[0.5, 0.5, 0.5, 0, 0])
    with pytest.raises(ConfigError):
        h1n1_population(R0=0)
    with pytest.raises(ConfigError):
        EpiRates(symptomatic_fraction=1.5)
    with pytest.raises(ConfigError):
        EpiRates(fatality_ratio_by_age_risk=np.array([[0.01, 0.001]] * 5))


# -- contacts ------------------------------------------------------------------


def test_contacts_reciprocal():
    n = np.array([10.0, 20, 30, 40, 5])
    r = default_contacts().reciprocal(n).matrices
    for m in r:
        assert np.allclose(m * n[:, None], (m * n[:, None]).T)


def test_school_layer_mostly_school_age():
    school = default_contacts().layer("school")
    assert school[1, 1] == school.max()


def test_effective_contacts_covid():
    base = default_contacts()
    null = CovidPlan()
    assert np.array_equal(effective_contacts(10, null, base, 60).matrices, base.matrices)
    plan = CovidPlan(distancing=PolicyWindow(5, 20, 100))
    eff = effective_contacts(10, plan, base, 60)
    assert np.all(eff.layer("community") == 0) and np.all(eff.layer("work") == 0)
    assert np.array_equal(eff.layer("household"), base.layer("household"))
    assert np.array_equal(effective_contacts(20, plan, base, 60).matrices, base.matrices)
    half = effective_contacts(10, CovidPlan(distancing=PolicyWindow(5, 20, 40)), base, 60)
    assert np.allclose(half.layer("community"), 0.6 * base.layer("community"))


def test_effective_contacts_h1n1_closure():
    base = default_contacts()
    eff = effective_contacts(10, H1N1Plan(school_closure_weeks=2), base, 175)
    assert np.all(eff.layer("school") == 0)
    assert np.array_equal(effective_contacts(15, H1N1Plan(school_closure_weeks=2), base, 175).matrices,
                          base.matrices)


# -- beta calibration ---------------------------------------------------------------


@pytest.mark.parametrize("r0", [0.9, 1.3, 2.5])
def test_beta_homogeneous_closed_form(r0):
    cfg, rates, contacts = homogeneous_population(R0=r0)
    assert calibrate_beta(cfg, rates, contacts) == pytest.approx(r0 / cfg.mean_infectious_days, rel=1e-12)


def test_beta_no_transmission():
    cfg, rates, _ = homogeneous_population()
    with pytest.raises(ConfigError):
        calibrate_beta(cfg, rates, ContactStructure(np.zeros((4, 5, 5))))


# -- one day ---------------------------------------------------------------------------


@pytest.mark.parametrize("backend", BACKENDS)
def test_no_infectious_no_infections(backend):
    cfg = h1n1_population(initial_infected=0)
    st0 = build_population(cfg, 0)
    st1 = step_day(st0, EpiRates(), default_contacts(), None, 1, 5, backend)
    assert st1.daily_new.sum() == 0
    assert np.array_equal(st1.compartments[S], st0.compartments[S])


@pytest.mark.parametrize("backend", BACKENDS)
def test_step_day_deterministic(backend):
    cfg = h1n1_population(initial_infected=500)
    st0 = build_population(cfg, 1)
    a = step_day(st0, EpiRates(), default_contacts(), None, 1, 42, backend)
    b = step_day(st0, EpiRates(), default_contacts(), None, 1, 42, backend)
    assert np.array_equal(a.compartments, b.compartments)
    assert a.total == st0.total
    assert not np.array_equal(a.compartments, st0.compartments)


def test_step_day_accepts_generator():
    cfg = h1n1_population(initial_infected=500)
    st0 = build_population(cfg, 1)
    rng = np.random.default_rng(4)
    out = step_day(st0, EpiRates(), default_contacts(), None, 3, rng, "numpy")
    assert out.total == st0.total
    with pytest.raises(ValueError):
        step_day(st0, EpiRates(), default_contacts(), None, 0, 1, "numpy")


@pytest.mark.parametrize("backend", BACKENDS)
def test_zero_beta_never_grows(backend):
    cfg = h1n1_population(initial_infected=200)
    sim = Simulator(cfg, EpiRates(), default_contacts(), backend=backend)
    prm = sim.params(None)._replace(beta=0.0)
    out = sim.run_with_params(prm, 7)
    assert out.new_infections == 0


# -- vaccination --------------------------------------------------------------------------


@pytest.mark.parametrize("backend", BACKENDS)
def test_priority_zero_uses_no_doses(backend):
    cfg = h1n1_population(initial_infected=0)
    st0 = build_population(cfg, 0)
    out = apply_vaccination(st0, H1N1Plan(1.0), {1: 10**6}, 1, EpiRates(), default_contacts(), 0, backend)
    assert OutcomeSummary.from_state(out).vaccines_used == 0 and out.vaccinated.sum() == 0


@pytest.mark.parametrize("backend", BACKENDS)
def test_school_age_full_coverage(backend):
    cfg = h1n1_population(initial_infected=0)
    st0 = build_population(cfg, 0)
    plan = H1N1Plan(1.0, (0, 3, 0, 0, 0))
    out = apply_vaccination(st0, plan, {1: 10**6}, 1, EpiRates(), default_contacts(), 0, backend)
    used = int(out.vaccinated.sum())
    assert used == 21_976
    assert used / 99_617 == pytest.approx(0.221, abs=5e-4)
    ages = out.vaccinated.reshape(5, 2).sum(axis=1)
    assert ages[[0, 2, 3, 4]].sum() == 0


@pytest.mark.parametrize("backend", BACKENDS)
def test_fraction_cap(backend):
    cfg = h1n1_population(initial_infected=0)
    st0 = build_population(cfg, 0)
    plan = H1N1Plan(0.5, (0, 0, 0, 3, 0))
    out = apply_vaccination(st0, plan, {1: 10**6}, 1, EpiRates(), default_contacts(), 0, backend)
    older = st0.cell_population.reshape(5, 2).sum(axis=1)[3]
    assert out.vaccinated.reshape(5, 2).sum(axis=1)[3] <= older / 2 + 1


def test_priority_tiers_order():
    cfg = h1n1_population(initial_infected=0)
    st0 = build_population(cfg, 0)
    plan = H1N1Plan(1.0, (1, 3, 0, 2, 0))
    out = apply_vaccination(st0, plan, {1: 25_000}, 1, EpiRates(), default_contacts(), 0, "numpy")
    got = out.vaccinated.reshape(5, 2).sum(axis=1)
    assert got[1] == 21_976  # tier 3 filled first
    assert got[3] == 25_000 - 21_976 and got[0] == 0


def test_vaccination_rejects_covid_plan():
    st0 = build_population(covid_population(), 0)
    with pytest.raises(TypeError):
        apply_vaccination(st0, CovidPlan(), None, 1, EpiRates(), default_contacts())


def test_supply_array_forms():
    assert supply_array(None, 3).tolist() == [0, 0, 0, 0]
    assert supply_array([5, 6], 3).tolist() == [0, 5, 6, 0]
    assert supply_array({2: 7, 9: 1}, 3).tolist() == [0, 0, 7, 0]
    assert supply_array(h1n1_supply(), 175).sum() == 23_000
    with pytest.raises(ValueError):
        supply_array([-1], 3)


# -- whole simulations ------------------------------------------------------------------------


@pytest.mark.parametrize("backend", BACKENDS)
def test_simulate_supercritical_and_deterministic(backend):
    cfg, rates, contacts = homogeneous_population(R0=1.3, sim_length_days=300)
    a = simulate(None, cfg, rates, contacts, seed=11, backend=backend)
    b = simulate(None, cfg, rates, contacts, seed=11, backend=backend)
    assert a.attack_rate > 0
    assert np.array_equal(a.symptomatic_by_age_risk, b.symptomatic_by_age_risk)
    assert np.array_equal(a.per_day_new_infections, b.per_day_new_infections)


def _outcome_invariants(out: OutcomeSummary):
    assert np.all(out.symptomatic_by_age_risk >= 0)
    assert np.all(out.deaths_by_age_risk <= out.symptomatic_by_age_risk)
    assert out.hospitalized_count >= out.icu_count >= 0
    assert out.hospitalized_count >= out.deaths_total
    assert np.all(out.per_day_new_infections >= 0)


h1n1_plans = st.builds(
    H1N1Plan,
    st.integers(0, 10).map(lambda f: f / 10),
    st.tuples(*[st.integers(0, 3)] * 5),
    st.sampled_from(list(AntiviralPolicy)),
    st.integers(0, 25),
)
windows = st.tuples(st.integers(1, 59), st.integers(0, 30), st.integers(0, 10)).map(
    lambda t: PolicyWindow(t[0], min(t[0] + t[1], 60), 10 * t[2])
)
covid_plans = st.builds(CovidPlan, windows, windows, windows, windows)


@given(plan=h1n1_plans, seed=st.integers(0, 2**63))
def test_h1n1_conservation(h1n1, plan, seed):
    sim = Simulator(h1n1.population, h1n1.rates, h1n1.contacts, h1n1.supply, backend="numba")
    st_ = sim.run_state(plan, seed)
    assert st_.total == 99_617
    assert np.all(st_.compartments >= 0)
    _outcome_invariants(OutcomeSummary.from_state(st_))


@given(plan=covid_plans, seed=st.integers(0, 2**63))
def test_covid_conservation(covid, plan, seed):
    sim = Simulator(covid.population, covid.rates, covid.contacts, backend="numba")
    st_ = sim.run_state(plan, seed)
    assert st_.total == 100_000
    assert np.all(st_.compartments >= 0)
    _outcome_invariants(OutcomeSummary.from_state(st_))


def test_numpy_backend_conservation(covid, h1n1):
    plan = CovidPlan(PolicyWindow(3, 30, 50), PolicyWindow(1, 40, 100), PolicyWindow(1, 50, 80),
                     PolicyWindow(2, 45, 60))
    st_ = Simulator(covid.population, covid.rates, covid.contacts, backend="numpy").run_state(plan, 5)
    assert st_.total == 100_000 and np.all(st_.compartments >= 0)
    plan = H1N1Plan(0.6, (1, 3, 2, 0, 1), AntiviralPolicy.HHTAP100, 3)
    st_ = Simulator(h1n1.population, h1n1.rates, h1n1.contacts, h1n1.supply, backend="numpy").run_state(plan, 5)
    assert st_.total == 99_617 and np.all(st_.compartments >= 0)


def _mean_sd(sim, plan, n, attr):
    xs = np.array([getattr(sim.run(plan, s), attr) for s in range(n)], dtype=float)
    return xs.mean(), xs.std(ddof=1) / np.sqrt(n)


def test_distancing_monotone(covid):
    sim = Simulator(covid.population, covid.rates, covid.contacts, backend="numba")
    means = []
    for lvl in (0, 30, 60, 100):
        m, se = _mean_sd(sim, CovidPlan(distancing=PolicyWindow(1, 60, lvl)), 200, "new_infections")
        means.append((m, se))
    for (m0, s0), (m1, s1) in zip(means, means[1:]):
        assert m1 <= m0 + 3 * np.hypot(s0, s1)


def test_vaccination_monotone(h1n1):
    sim = Simulator(h1n1.population, h1n1.rates, h1n1.contacts, h1n1.supply, backend="numba")
    means = []
    for f in (0.0, 0.3, 0.6, 1.0):
        means.append(_mean_sd(sim, H1N1Plan(f, (3, 3, 3, 3, 3)), 200, "symptomatic_total"))
    for (m0, s0), (m1, s1) in zip(means, means[1:]):
        assert m1 <= m0 + 3 * np.hypot(s0, s1)


def test_antivirals_consume_courses(h1n1):
    sim = Simulator(h1n1.population, h1n1.rates, h1n1.contacts, h1n1.supply, backend="numba")
    none = sim.run(H1N1Plan(), 3)
    treat = sim.run(H1N1Plan(antiviral_policy=AntiviralPolicy.TREATMENT_ONLY), 3)
    hh = sim.run(H1N1Plan(antiviral_policy=AntiviralPolicy.HHTAP), 3)
    capped = sim.run(H1N1Plan(antiviral_policy=AntiviralPolicy.HHTAP100), 3)
    assert none.antiviral_courses_used == 0
    assert treat.antiviral_courses_used > 0
    assert hh.antiviral_courses_used > capped.antiviral_courses_used > 0
    # at most 100 households, each index case plus its household members
    hh_size = h1n1.population.household_size
    assert capped.antiviral_courses_used <= 100 * (1 + round(hh_size - 1)) + 100


def test_testing_and_tracing_counted(covid):
    sim = Simulator(covid.population, covid.rates, covid.contacts, backend="numba")
    out = sim.run(CovidPlan(testing=PolicyWindow(1, 60, 100), tracing=PolicyWindow(1, 60, 100)), 2)
    assert out.tests_performed > 0 and out.traced_quarantines > 0
    null = sim.run(CovidPlan(), 2)
    assert null.tests_performed == 0 and null.traced_quarantines == 0


def test_params_cache_reuses(h1n1):
    sim = Simulator(h1n1.population, h1n1.rates, h1n1.contacts, h1n1.supply, backend="numba", cache_size=2)
    p = H1N1Plan(0.3, (3, 0, 0, 0, 0))
    assert sim.params(p) is sim.params(p)
    sim.params(H1N1Plan(0.1))
    sim.params(H1N1Plan(0.2))
    assert len(sim._cache) == 2
    with pytest.raises(TypeError):
        sim.params("plan")
