"""numba kernels: one simulated day as explicit loops over cells.

Random draws come from numba's internal generator, reseeded at the start
of every day. Runs are reproducible given their day seeds, and two runs
sharing seeds stay in step day by day even when their plans differ. The
stream is not the one the numpy backend draws from.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .model import (
    E, EQ, IA, IM, IS, Q, R, S, V, W,
    T_COURSES, T_DEAD, T_HH_TREATED, T_HOSP, T_ICU, T_INVENTORY, T_SYM,
    T_TESTS, T_TRACED, T_VACC,
)
from .params import allocate_tiers

_allocate = njit(cache=True, nogil=True)(allocate_tiers)


@njit(cache=True, nogil=True)
def seed(s):
    np.random.seed(s)


@njit(cache=True, nogil=True)
def _binom(n, p):
    if n <= 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    return np.random.binomial(n, p)


@njit(cache=True, nogil=True)
def _prophylaxis_active(prm, tally):
    if prm.av_policy == 3:
        return True
    return prm.av_policy == 2 and tally[T_HH_TREATED] < prm.hh_cap


@njit(cache=True, nogil=True)
def vaccinate(comp, vax, tally, prm, day):
    tally[T_INVENTORY] += prm.supply[day]
    avail = tally[T_INVENTORY]
    if avail <= 0:
        return
    need = np.zeros(5, dtype=np.int64)
    for g in range(5):
        have = vax[2 * g] + vax[2 * g + 1]
        if prm.vacc_target[g] > have:
            need[g] = prm.vacc_target[g] - have
    alloc = _allocate(avail, need, prm.priorities)
    used = 0
    for g in range(5):
        doses = alloc[g]
        if doses <= 0:
            continue
        lo = 2 * g
        hi = lo + 1
        u_lo = prm.cell_pop[lo] - vax[lo]
        u_hi = prm.cell_pop[hi] - vax[hi]
        d_lo = doses * u_lo // (u_lo + u_hi)
        for c, d in ((lo, d_lo), (hi, doses - d_lo)):
            if d <= 0:
                continue
            unv = prm.cell_pop[c] - vax[c]
            to_sus = _binom(d, comp[S, c] / unv)
            if to_sus > comp[S, c]:
                to_sus = comp[S, c]
            prot = _binom(to_sus, prm.efficacy)
            comp[S, c] -= to_sus
            comp[V, c] += prot
            comp[W, c] += to_sus - prot
            vax[c] += d
        used += doses
    tally[T_VACC] += used
    tally[T_INVENTORY] = avail - used


@njit(cache=True, nogil=True)
def step_day(comp, vax, tally, daily, prm, day):
    # force of infection from start-of-day state
    mm = prm.managed_mult.copy()
    if _prophylaxis_active(prm, tally):
        mm[0] *= prm.prophylaxis_factor
    src = np.zeros((4, 5))
    for b in range(5):
        free = 0.0
        man = 0.0
        for r in range(2):
            c = 2 * b + r
            free += prm.asym_factor * comp[IA, c] + comp[IS, c]
            man += comp[IM, c]
        n = prm.age_pop[b]
        if n > 0:
            for L in range(4):
                src[L, b] = (free + mm[L] * man) / n
    p_full = np.empty(5)
    p_home = np.empty(5)
    for a in range(5):
        lam = 0.0
        lam_home = 0.0
        for L in range(4):
            s = 0.0
            for b in range(5):
                s += prm.contacts[L, a, b] * src[L, b]
            s *= prm.beta * prm.layer_scale[day, L]
            lam += s
            if L == 0:
                lam_home = s
        p_full[a] = 1.0 - math.exp(-lam)
        p_home[a] = 1.0 - math.exp(-lam_home)

    new_inf = 0
    for c in range(10):
        a = c // 2
        inf_s = _binom(comp[S, c], p_full[a])
        inf_w = _binom(comp[W, c], p_full[a])
        inf_q = _binom(comp[Q, c], p_home[a])
        rel_q = _binom(comp[Q, c] - inf_q, prm.p_qexit)
        prog_e = _binom(comp[E, c], prm.p_latent)
        prog_eq = _binom(comp[EQ, c], prm.p_latent)
        rec_ia = _binom(comp[IA, c], prm.p_recover)
        rec_is = _binom(comp[IS, c], prm.p_recover)
        rec_im = _binom(comp[IM, c], prm.p_recover)
        sym = _binom(prog_e, prm.sym_frac)
        sym_q = _binom(prog_eq, prm.sym_frac)

        treated = 0
        if prm.av_policy > 0 and sym > 0:
            asc = _binom(sym, prm.ascertain)
            if prm.av_policy == 1:
                treated = asc
                tally[T_COURSES] += asc
            else:
                treated = asc
                if prm.av_policy == 2:
                    room = prm.hh_cap - tally[T_HH_TREATED]
                    if room < 0:
                        room = 0
                    if treated > room:
                        treated = room
                tally[T_HH_TREATED] += treated
                tally[T_COURSES] += treated + int(treated * prm.hh_extra + 0.5)

        onset = sym + sym_q
        if onset > 0:
            f = prm.fatality[c]
            dead = _binom(onset, f)
            extra = 0
            if f < 1.0:
                extra = _binom(onset - dead, (prm.hosp_ratio[c] - f) / (1.0 - f))
            hosp = dead + extra
            tally[T_SYM + c] += onset
            tally[T_DEAD + c] += dead
            tally[T_HOSP] += hosp
            tally[T_ICU] += _binom(hosp, prm.icu_frac)

        comp[S, c] += rel_q - inf_s
        comp[W, c] -= inf_w
        comp[Q, c] -= inf_q + rel_q
        comp[E, c] += inf_s + inf_w - prog_e
        comp[EQ, c] += inf_q - prog_eq
        comp[IA, c] += prog_e - sym - rec_ia
        comp[IS, c] += sym - treated - rec_is
        comp[IM, c] += treated + prog_eq - rec_im
        comp[R, c] += rec_ia + rec_is + rec_im
        new_inf += inf_s + inf_w + inf_q
    daily[day - 1] += new_inf

    p_sym = prm.test_sym[day]
    p_bg = prm.test_bg[day]
    if p_sym <= 0.0 and p_bg <= 0.0:
        return
    detected = 0
    for c in range(10):
        ts = _binom(comp[IS, c], p_sym)
        ta = _binom(comp[IA, c], p_bg)
        other = comp[S, c] + comp[W, c] + comp[E, c] + comp[R, c] + comp[V, c]
        to = _binom(other, p_bg)
        comp[IS, c] -= ts
        comp[IA, c] -= ta
        comp[IM, c] += ts + ta
        tally[T_TESTS] += ts + ta + to
        detected += ts + ta

    p_tr = prm.trace_prob[day]
    if p_tr <= 0.0 or detected == 0:
        return
    pool = 0
    for c in range(10):
        pool += comp[S, c] + comp[W, c] + comp[E, c] + comp[IA, c] + comp[IS, c] + comp[R, c] + comp[V, c]
    n = _binom(int(detected * prm.hh_extra + 0.5), p_tr)
    if n > pool:
        n = pool
    tally[T_TRACED] += n
    left = pool
    for c in range(10):
        for k in (S, W, E, IA, IS, R, V):
            if n <= 0 or left <= 0:
                return
            cnt = comp[k, c]
            x = 0
            if cnt > 0:
                x = np.random.hypergeometric(cnt, left - cnt, n)
            left -= cnt
            n -= x
            if x == 0:
                continue
            comp[k, c] -= x
            if k == S or k == W:
                comp[Q, c] += x
            elif k == E:
                comp[EQ, c] += x
            elif k == IA or k == IS:
                comp[IM, c] += x
            else:
                comp[k, c] += x


@njit(cache=True, nogil=True)
def run_days(comp, vax, tally, daily, prm, day_seeds):
    for day in range(1, prm.n_days + 1):
        np.random.seed(day_seeds[day])
        if prm.vaccinating:
            vaccinate(comp, vax, tally, prm, day)
        step_day(comp, vax, tally, daily, prm, day)
