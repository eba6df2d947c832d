import json
import math

import mpmath
import numpy as np
import pytest

from conftest import Quadratic
from dspsa_epi.campaign import (
    CampaignConfig, crn_probe, evaluate_baselines, final_size, herd_threshold, loss_decrease,
    optimize, resolve_threads, run_campaign, t_interval, terminal_ci, write_results,
)
from dspsa_epi.codec import BoxBounds, H1N1Plan
from dspsa_epi.dspsa import GainSchedule, run

BOX = BoxBounds.uniform(2, -10, 10)


def cfg(**kw):
    base = dict(runs=3, M=200, theta0=(6, -6), gains=GainSchedule(0.5, 10, 0.602), master_seed=11)
    base.update(kw)
    return CampaignConfig(**base)


# -- intervals -----------------------------------------------------------------


def test_t_interval_constant():
    ci = t_interval([3.0] * 10)
    assert ci.mean == 3.0 and ci.half_width == 0.0 and ci.lo == ci.hi == 3.0


def test_t_interval_against_textbook():
    x = np.array([1.0, 2.0, 4.0, 7.0])
    ci = t_interval(x, 0.95)
    # t_{0.975, 3} = 3.182446305284263
    assert ci.half_width == pytest.approx(3.182446305284263 * x.std(ddof=1) / 2, rel=1e-12)


def test_t_interval_width_standard_normal():
    rng = np.random.default_rng(0)
    hws = [t_interval(rng.standard_normal(400)).half_width for _ in range(50)]
    assert np.mean(hws) == pytest.approx(0.098, abs=0.02)


def test_t_interval_root_n_shrinkage():
    rng = np.random.default_rng(1)
    w = {n: np.mean([t_interval(rng.standard_normal(n)).half_width for _ in range(200)]) for n in (100, 400, 1600)}
    assert w[100] / w[400] == pytest.approx(2.0, rel=0.2)
    assert w[400] / w[1600] == pytest.approx(2.0, rel=0.2)


def test_t_interval_errors():
    with pytest.raises(ValueError):
        t_interval([1.0])
    with pytest.raises(ValueError):
        t_interval([1.0, 2.0], level=1.0)


# -- trials -------------------------------------------------------------------------


def test_campaign_reproducible_and_thread_invariant():
    q = Quadratic([1, -2], sigma=0.5)
    a = run_campaign(cfg(), q, BOX, threads=1)
    b = run_campaign(cfg(), q, BOX, threads=3)
    for x, y in zip(a.trials, b.trials):
        assert x.base_seed == y.base_seed
        assert np.array_equal(x.trace.theta, y.trace.theta)
    assert np.array_equal(a.mean_loss(), b.mean_loss())
    assert len({t.base_seed for t in a.trials}) == 3


def test_single_run_average_is_the_trace():
    q = Quadratic([1, -2], sigma=0.5)
    c = cfg(runs=1)
    res = run_campaign(c, q, BOX)
    direct = run(c.run_config(0), q, BOX)
    assert np.array_equal(res.mean_loss(), direct.mean_loss)
    assert np.array_equal(res.averaged()["theta"], direct.theta)


class FailsOnSeed:
    thread_safe = True

    def __init__(self, bad_seed):
        self.bad = bad_seed
        self.q = Quadratic([0, 0])

    def evaluate(self, theta, seed):
        if seed == self.bad:
            raise RuntimeError("simulator crashed")
        return self.q.loss(theta)


def test_trial_failure_is_isolated():
    c = cfg(crn=True)
    bad = c.run_config(1).base_seed
    from dspsa_epi.seeding import mix64

    res = run_campaign(c, FailsOnSeed(mix64(bad, 5)), BOX)
    assert [t.ok for t in res.trials] == [True, False, True]
    assert "crashed" in res.trials[1].error
    assert np.array_equal(res.mean_loss(), np.mean([t.trace.mean_loss for t in res.succeeded], axis=0))


def test_loss_decrease():
    assert loss_decrease(np.array([10.0] + [4.0] * 99)) == pytest.approx(0.6)
    assert loss_decrease(np.linspace(10, 1, 1000), tail=1) == pytest.approx(0.9)
    with pytest.raises(ValueError):
        loss_decrease(np.zeros(5))
    with pytest.raises(ValueError):
        loss_decrease(np.array([]))


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(runs=0)
    with pytest.raises(ValueError):
        cfg(ci_replicates=1)
    with pytest.raises(ValueError):
        resolve_threads(0)


# -- baselines and CI --------------------------------------------------------------------


def test_duplicate_baselines_identical():
    q = Quadratic([0, 0], sigma=1.0)
    rows = evaluate_baselines([("a", [1, 1]), ("b", [3, 0]), ("a2", [1, 1])], q, n=50, seed=4)
    by = {r.name: r for r in rows}
    assert by["a"].mean == by["a2"].mean and by["a"].stderr == by["a2"].stderr
    assert [r.name for r in rows][-1] == "b"


def test_baseline_failure_sorted_last(h1n1_oracle):
    rows = evaluate_baselines([("bad", np.array([99] * 8)), ("null", H1N1Plan())], h1n1_oracle, n=4)
    assert rows[0].name == "null" and rows[0].ok
    assert rows[1].name == "bad" and not rows[1].ok


def test_terminal_ci_covers_true_mean():
    q = Quadratic([0, 0], sigma=2.0)
    ci = terminal_ci(np.array([1, 1]), q, n=500, seed=3)
    assert ci.lo < 2.0 < ci.hi


def test_optimize_dedups_and_ranks():
    q = Quadratic([1, -2], sigma=0.2)
    c = cfg(M=300, baselines=(("far", (8, 8)),), ci_replicates=20, baseline_replicates=20)
    rep = optimize(c, q, BOX)
    sols = {tuple(s) for s in rep.result.solutions()}
    assert len(rep.cis) == len(sols)
    assert rep.baselines[0].name == "dspsa_terminal"


# -- CRN probe --------------------------------------------------------------------------------


class SharedNoise:
    def evaluate(self, theta, seed):
        return float(np.sum(np.asarray(theta) ** 2)) * 0.01 + np.random.default_rng(seed).standard_normal()


class IndependentNoise:
    def __init__(self):
        self.calls = 0

    def evaluate(self, theta, seed):
        self.calls += 1
        return float(np.random.default_rng([seed, self.calls]).standard_normal())


def test_probe_shared_noise():
    pr = crn_probe(SharedNoise(), [2, 2], n_pairs=200, seed=1, bounds=BOX)
    assert pr.correlation > 0.9 and pr.recommend_crn


def test_probe_independent_noise():
    pr = crn_probe(IndependentNoise(), [2, 2], n_pairs=200, seed=1, bounds=BOX)
    assert abs(pr.correlation) < 0.25 and not pr.recommend_crn


def test_probe_degenerate():
    pr = crn_probe(lambda th, s: 1.0, [0, 0], n_pairs=20)
    assert pr.degenerate and pr.recommend_crn is None and math.isnan(pr.correlation)


def test_probe_symmetric_in_pair_order():
    class Swapped(SharedNoise):
        def evaluate(self, theta, seed):
            return super().evaluate(-np.asarray(theta), seed)

    a = crn_probe(SharedNoise(), [0, 0], n_pairs=50, seed=2, bounds=BoxBounds.uniform(2, -10, 11))
    b = crn_probe(Swapped(), [0, 0], n_pairs=50, seed=2, bounds=BoxBounds.uniform(2, -10, 11))
    assert a.correlation == pytest.approx(b.correlation, abs=1e-12)


def test_probe_covid_positive(covid_oracle):
    theta = np.array([20, 40, 5, 1, 2, 0, 10, 50, 5, 1, 2, 0])
    pr = crn_probe(covid_oracle, theta, n_pairs=60, seed=0)
    assert pr.correlation > 0


# -- epidemiology cross-checks ------------------------------------------------------------------


def test_herd_threshold():
    assert herd_threshold(1.3) == pytest.approx(0.3 / 1.3)
    assert f"{herd_threshold(1.3):.1%}" == "23.1%"
    assert herd_threshold(2.0) == 0.5
    with pytest.raises(ValueError):
        herd_threshold(0)


@pytest.mark.parametrize("R0", [1.1, 1.3, 2.0, 3.5])
def test_final_size_matches_mpmath(R0):
    ref = mpmath.findroot(lambda a: a - 1 + mpmath.exp(-R0 * a), 0.9)
    assert final_size(R0) == pytest.approx(float(ref), rel=1e-10)


def test_final_size_examples():
    assert final_size(1.3) == pytest.approx(0.42, abs=0.005)
    assert final_size(0.9) == 0.0


# -- outputs -------------------------------------------------------------------------------------


def test_write_results_byte_reproducible(tmp_path):
    q = Quadratic([1, -2], sigma=0.5)
    docs = []
    for d in ("a", "b"):
        rep = optimize(cfg(ci_replicates=10), q, BOX, with_baselines=False)
        write_results(tmp_path / d, rep.result, cis=rep.cis)
        docs.append({p.name: p.read_bytes() for p in (tmp_path / d).iterdir()})
    assert docs[0] == docs[1]
    assert set(docs[0]) == {"summary.json", "trace_mean.csv", "trace_trial_00.csv", "trace_trial_01.csv", "trace_trial_02.csv"}
    summary = json.loads(docs[0]["summary.json"])
    assert summary["runs"] == 3 and len(summary["trials"]) == 3
