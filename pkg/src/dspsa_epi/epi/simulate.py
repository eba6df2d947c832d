"""Plan-driven simulation on either backend."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from .._accel import resolve_backend
from ..codec import AntiviralPolicy, CovidPlan, H1N1Plan
from ..seeding import fold32, fold32_array, generator, mix64, mix64_array
from . import kernels_numpy
from .model import (
    LAYERS, N_AGES, ContactStructure, EpiRates, OutcomeSummary, PopulationConfig,
    PopulationState, build_population, calibrate_beta, layer_scales,
)
from .params import KernelParams

Plan = H1N1Plan | CovidPlan | None


def _numba_kernels():
    from . import kernels_numba

    return kernels_numba


def supply_array(supply, days: int) -> np.ndarray:
    """Daily doses as ``int64[days + 1]`` (index 0 unused).

    ``supply`` may be ``None``, a sequence of per-day doses starting at day
    1, or a ``{day: doses}`` mapping.
    """
    out = np.zeros(days + 1, dtype=np.int64)
    if supply is None:
        return out
    if isinstance(supply, dict):
        for day, doses in supply.items():
            d = int(day)
            if 1 <= d <= days:
                out[d] += int(doses)
        return out
    arr = np.asarray(supply, dtype=np.int64).ravel()[:days]
    if np.any(arr < 0):
        raise ValueError("vaccine supply must be nonnegative")
    out[1 : 1 + arr.size] = arr
    return out


class Simulator:
    """Bind a scenario once and run many (plan, seed) simulations."""

    def __init__(
        self,
        config: PopulationConfig,
        rates: EpiRates,
        contacts: ContactStructure,
        supply=None,
        backend: str | None = None,
        cache_size: int = 512,
    ) -> None:
        self.config = config
        self.rates = rates
        self.backend = resolve_backend(backend)
        self.cell_pop = config.cell_counts()
        self.age_pop = self.cell_pop.reshape(N_AGES, 2).sum(axis=1).astype(float)
        self.contacts = contacts.reciprocal(self.age_pop)
        self.beta = calibrate_beta(config, rates, contacts)
        self.supply = supply_array(supply, config.sim_length_days)
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        build_population(config, 0)  # validates students vs school-age

    # -- parameters -------------------------------------------------------

    def params(self, plan: Plan) -> KernelParams:
        hit = self._cache.get(plan)
        if hit is not None:
            self._cache.move_to_end(plan)
            return hit
        prm = self._build_params(plan)
        self._cache[plan] = prm
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return prm

    def _build_params(self, plan: Plan) -> KernelParams:
        cfg, rt = self.config, self.rates
        days = cfg.sim_length_days
        zeros = np.zeros(days + 1)
        test_sym, test_bg, trace = zeros, zeros, zeros
        managed = np.ones(len(LAYERS))
        prophylaxis = 1.0
        av_policy = 0
        vaccinating = False
        priorities = np.zeros(N_AGES, dtype=np.int64)
        target = np.zeros(N_AGES, dtype=np.int64)

        if isinstance(plan, H1N1Plan):
            av_policy = int(plan.antiviral_policy)
            managed = np.full(len(LAYERS), 1.0 - rt.antiviral_transmission_reduction)
            if plan.antiviral_policy in (AntiviralPolicy.HHTAP, AntiviralPolicy.HHTAP100):
                prophylaxis = 1.0 - rt.antiviral_susceptibility_reduction
            priorities = np.array(plan.priorities, dtype=np.int64)
            target = np.rint(plan.vaccination_fraction * self.age_pop).astype(np.int64)
            vaccinating = bool(priorities.any() and target.any() and self.supply.any())
        elif isinstance(plan, CovidPlan):
            managed = np.zeros(len(LAYERS))
            managed[LAYERS.index("household")] = 1.0
            d = np.arange(days + 1)
            t, c = plan.testing, plan.tracing
            on_t = ((d >= t.start_day) & (d < t.end_day)).astype(float) * t.intensity_percent / 100.0
            test_sym = on_t
            test_bg = on_t * rt.background_test_rate
            trace = ((d >= c.start_day) & (d < c.end_day)).astype(float) * c.intensity_percent / 100.0
        elif plan is not None:
            raise TypeError(f"unsupported plan type {type(plan).__name__}")

        return KernelParams(
            n_days=int(days),
            cell_pop=self.cell_pop,
            age_pop=self.age_pop,
            contacts=self.contacts.matrices,
            beta=float(self.beta),
            layer_scale=layer_scales(plan, days),
            managed_mult=managed,
            prophylaxis_factor=float(prophylaxis),
            asym_factor=float(rt.asymptomatic_infectiousness),
            p_latent=1.0 / cfg.mean_latent_days,
            p_recover=1.0 / cfg.mean_infectious_days,
            sym_frac=float(rt.symptomatic_fraction),
            hosp_ratio=rt.cell_vector(rt.hospitalization_ratio_by_age_risk),
            fatality=rt.cell_vector(rt.fatality_ratio_by_age_risk),
            icu_frac=float(rt.icu_fraction_of_hospitalized),
            av_policy=av_policy,
            ascertain=float(rt.ascertainment_rate),
            hh_cap=int(rt.hhtap100_household_cap),
            hh_extra=float(cfg.household_size - 1.0),
            vaccinating=vaccinating,
            supply=self.supply,
            priorities=priorities,
            vacc_target=target,
            efficacy=float(rt.vaccine_efficacy),
            test_sym=np.ascontiguousarray(test_sym, dtype=float),
            test_bg=np.ascontiguousarray(test_bg, dtype=float),
            trace_prob=np.ascontiguousarray(trace, dtype=float),
            p_qexit=1.0 / rt.isolation_days,
        )

    # -- running ----------------------------------------------------------

    def initial_state(self, seed: int) -> PopulationState:
        return build_population(self.config, mix64(seed, 1))

    def run_state(self, plan: Plan, seed: int, state: PopulationState | None = None) -> PopulationState:
        return self._run(self.params(plan), seed, state)

    def _run(self, prm: KernelParams, seed: int, state: PopulationState | None = None) -> PopulationState:
        st = self.initial_state(seed) if state is None else state.copy()
        day_seeds = mix64_array(mix64(seed, 2), np.arange(prm.n_days + 1))
        if self.backend == "numba":
            _numba_kernels().run_days(
                st.compartments, st.vaccinated, st.tally, st.daily_new, prm, fold32_array(day_seeds)
            )
        else:
            kernels_numpy.run_days(st.compartments, st.vaccinated, st.tally, st.daily_new, prm, day_seeds)
        return st

    def run_with_params(self, prm: KernelParams, seed: int) -> OutcomeSummary:
        return OutcomeSummary.from_state(self._run(prm, seed))

    def run(self, plan: Plan, seed: int) -> OutcomeSummary:
        return OutcomeSummary.from_state(self.run_state(plan, seed))


def simulate(
    plan: Plan,
    config: PopulationConfig,
    rates: EpiRates,
    contacts: ContactStructure,
    supply=None,
    seed: int = 0,
    backend: str | None = None,
) -> OutcomeSummary:
    return Simulator(config, rates, contacts, supply, backend).run(plan, seed)


def _one_day(fn_name: str, state, rates, contacts, plan, day, rng, supply, backend):
    sim = Simulator(state.config, rates, contacts, supply, backend)
    prm = sim.params(plan)
    if not 1 <= day <= prm.n_days:
        raise ValueError(f"day {day} outside 1..{prm.n_days}")
    out = state.copy()
    args = (out.compartments, out.vaccinated, out.tally)
    if sim.backend == "numba":
        k = _numba_kernels()
        seed = rng if isinstance(rng, (int, np.integer)) else int(rng.integers(2**32))
        k.seed(fold32(seed))
        if fn_name == "step":
            k.step_day(*args, out.daily_new, prm, day)
        else:
            k.vaccinate(*args, prm, day)
    else:
        gen = generator(rng) if isinstance(rng, (int, np.integer)) else rng
        if fn_name == "step":
            kernels_numpy.step_day(*args, out.daily_new, prm, day, gen)
        else:
            kernels_numpy.vaccinate(*args, prm, day, gen)
    return out


def step_day(
    state: PopulationState,
    rates: EpiRates,
    contacts: ContactStructure,
    plan: Plan,
    day: int,
    rng,
    backend: str | None = None,
) -> PopulationState:
    """Advance a copy of ``state`` by one day.

    ``rng`` is an integer seed or a numpy ``Generator``.
    """
    return _one_day("step", state, rates, contacts, plan, day, rng, None, backend)


def apply_vaccination(
    state: PopulationState,
    plan: H1N1Plan,
    supply,
    day: int,
    rates: EpiRates,
    contacts: ContactStructure,
    rng=0,
    backend: str | None = None,
) -> PopulationState:
    """Deliver the day's doses for ``plan`` to a copy of ``state``."""
    if not isinstance(plan, H1N1Plan):
        raise TypeError("vaccination applies to H1N1 plans only")
    return _one_day("vaccinate", state, rates, contacts, plan, day, rng, supply, backend)
