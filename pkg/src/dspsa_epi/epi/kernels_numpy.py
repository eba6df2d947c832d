"""Vectorised numpy kernels; the fallback when numba is disabled or missing."""

from __future__ import annotations

import numpy as np

from .model import (
    E, EQ, IA, IM, IS, Q, R, S, V, W,
    T_COURSES, T_DEAD, T_HH_TREATED, T_HOSP, T_ICU, T_INVENTORY, T_SYM,
    T_TESTS, T_TRACED, T_VACC,
)
from ..seeding import generator
from .params import allocate_tiers

_TRACE_KINDS = (S, W, E, IA, IS, R, V)


def _binom(rng: np.random.Generator, n, p):
    return rng.binomial(n, np.clip(p, 0.0, 1.0))


def vaccinate(comp, vax, tally, prm, day, rng):
    tally[T_INVENTORY] += prm.supply[day]
    avail = int(tally[T_INVENTORY])
    if avail <= 0:
        return
    have = vax.reshape(5, 2).sum(axis=1)
    need = np.maximum(prm.vacc_target - have, 0)
    alloc = allocate_tiers(avail, need, prm.priorities)
    if not alloc.any():
        return
    unv = (prm.cell_pop - vax).reshape(5, 2)
    tot = unv.sum(axis=1)
    d_lo = np.where(tot > 0, alloc * unv[:, 0] // np.maximum(tot, 1), 0)
    doses = np.stack([d_lo, alloc - d_lo], axis=1).reshape(10)
    unv = unv.reshape(10)
    frac = np.where(unv > 0, comp[S] / np.maximum(unv, 1), 0.0)
    to_sus = np.minimum(_binom(rng, doses, frac), comp[S])
    prot = _binom(rng, to_sus, prm.efficacy)
    comp[S] -= to_sus
    comp[V] += prot
    comp[W] += to_sus - prot
    vax += doses
    used = int(alloc.sum())
    tally[T_VACC] += used
    tally[T_INVENTORY] = avail - used


def step_day(comp, vax, tally, daily, prm, day, rng):
    mm = prm.managed_mult.copy()
    if prm.av_policy == 3 or (prm.av_policy == 2 and tally[T_HH_TREATED] < prm.hh_cap):
        mm[0] *= prm.prophylaxis_factor
    free = (prm.asym_factor * comp[IA] + comp[IS]).reshape(5, 2).sum(axis=1)
    man = comp[IM].reshape(5, 2).sum(axis=1).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        src = np.where(prm.age_pop > 0, (free[None, :] + mm[:, None] * man[None, :]) / prm.age_pop, 0.0)
    lam = prm.beta * prm.layer_scale[day][:, None] * np.einsum("lab,lb->la", prm.contacts, src)
    p_full = np.repeat(1.0 - np.exp(-lam.sum(axis=0)), 2)
    p_home = np.repeat(1.0 - np.exp(-lam[0]), 2)

    inf_s = _binom(rng, comp[S], p_full)
    inf_w = _binom(rng, comp[W], p_full)
    inf_q = _binom(rng, comp[Q], p_home)
    rel_q = _binom(rng, comp[Q] - inf_q, prm.p_qexit)
    prog_e = _binom(rng, comp[E], prm.p_latent)
    prog_eq = _binom(rng, comp[EQ], prm.p_latent)
    rec_ia = _binom(rng, comp[IA], prm.p_recover)
    rec_is = _binom(rng, comp[IS], prm.p_recover)
    rec_im = _binom(rng, comp[IM], prm.p_recover)
    sym = _binom(rng, prog_e, prm.sym_frac)
    sym_q = _binom(rng, prog_eq, prm.sym_frac)

    treated = np.zeros(10, dtype=np.int64)
    if prm.av_policy > 0:
        asc = _binom(rng, sym, prm.ascertain)
        if prm.av_policy == 1:
            treated = asc
            tally[T_COURSES] += int(asc.sum())
        else:
            if prm.av_policy == 2:
                room = max(int(prm.hh_cap - tally[T_HH_TREATED]), 0)
                treated = np.diff(np.minimum(np.cumsum(asc), room), prepend=0)
            else:
                treated = asc
            tally[T_HH_TREATED] += int(treated.sum())
            tally[T_COURSES] += int(treated.sum() + np.floor(treated * prm.hh_extra + 0.5).sum())

    onset = sym + sym_q
    dead = _binom(rng, onset, prm.fatality)
    with np.errstate(divide="ignore", invalid="ignore"):
        p_extra = np.where(prm.fatality < 1.0, (prm.hosp_ratio - prm.fatality) / (1.0 - prm.fatality), 0.0)
    hosp = dead + _binom(rng, onset - dead, p_extra)
    tally[T_SYM:T_SYM + 10] += onset
    tally[T_DEAD:T_DEAD + 10] += dead
    tally[T_HOSP] += int(hosp.sum())
    tally[T_ICU] += int(_binom(rng, hosp, prm.icu_frac).sum())

    comp[S] += rel_q - inf_s
    comp[W] -= inf_w
    comp[Q] -= inf_q + rel_q
    comp[E] += inf_s + inf_w - prog_e
    comp[EQ] += inf_q - prog_eq
    comp[IA] += prog_e - sym - rec_ia
    comp[IS] += sym - treated - rec_is
    comp[IM] += treated + prog_eq - rec_im
    comp[R] += rec_ia + rec_is + rec_im
    daily[day - 1] += int((inf_s + inf_w + inf_q).sum())

    p_sym = prm.test_sym[day]
    p_bg = prm.test_bg[day]
    if p_sym <= 0.0 and p_bg <= 0.0:
        return
    ts = _binom(rng, comp[IS], p_sym)
    ta = _binom(rng, comp[IA], p_bg)
    to = _binom(rng, comp[S] + comp[W] + comp[E] + comp[R] + comp[V], p_bg)
    comp[IS] -= ts
    comp[IA] -= ta
    comp[IM] += ts + ta
    tally[T_TESTS] += int((ts + ta + to).sum())
    detected = int((ts + ta).sum())

    p_tr = prm.trace_prob[day]
    if p_tr <= 0.0 or detected == 0:
        return
    counts = comp[list(_TRACE_KINDS)].T.reshape(-1)  # cell-major, kind-minor
    pool = int(counts.sum())
    if pool == 0:
        return
    n = min(int(_binom(rng, int(detected * prm.hh_extra + 0.5), p_tr)), pool)
    tally[T_TRACED] += n
    picked = rng.multivariate_hypergeometric(counts, n) if n else np.zeros_like(counts)
    picked = picked.reshape(10, len(_TRACE_KINDS)).T
    for row, kind in enumerate(_TRACE_KINDS):
        x = picked[row]
        if kind in (S, W):
            comp[kind] -= x
            comp[Q] += x
        elif kind == E:
            comp[E] -= x
            comp[EQ] += x
        elif kind in (IA, IS):
            comp[kind] -= x
            comp[IM] += x


def run_days(comp, vax, tally, daily, prm, day_seeds):
    for day in range(1, prm.n_days + 1):
        rng = generator(int(day_seeds[day]))
        if prm.vaccinating:
            vaccinate(comp, vax, tally, prm, day, rng)
        step_day(comp, vax, tally, daily, prm, day, rng)
