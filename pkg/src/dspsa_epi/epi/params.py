"""Flat parameter bundle shared by both simulator backends."""

from __future__ import annotations

from collections import namedtuple

import numpy as np

KernelParams = namedtuple(
    "KernelParams",
    [
        "n_days",  # int
        "cell_pop",  # int64[10]
        "age_pop",  # float64[5]
        "contacts",  # float64[4, 5, 5], reciprocal
        "beta",  # float
        "layer_scale",  # float64[n_days + 1, 4]
        "managed_mult",  # float64[4], layer weights of managed infectious
        "prophylaxis_factor",  # float, extra household weight under HHTAP
        "asym_factor",
        "p_latent",
        "p_recover",
        "sym_frac",
        "hosp_ratio",  # float64[10]
        "fatality",  # float64[10]
        "icu_frac",
        "av_policy",  # int, AntiviralPolicy value
        "ascertain",
        "hh_cap",  # int
        "hh_extra",  # float, household size minus one
        "vaccinating",  # bool
        "supply",  # int64[n_days + 1]
        "priorities",  # int64[5]
        "vacc_target",  # int64[5]
        "efficacy",
        "test_sym",  # float64[n_days + 1]
        "test_bg",  # float64[n_days + 1]
        "trace_prob",  # float64[n_days + 1]
        "p_qexit",
    ],
)


def allocate_tiers(avail: int, need: np.ndarray, priorities: np.ndarray) -> np.ndarray:
    """Split ``avail`` doses over age groups, priority 3 first, then 2, then 1.

    Within a tier doses go in proportion to each group's remaining need;
    groups with priority 0 never receive doses.
    """
    alloc = np.zeros(5, dtype=np.int64)
    for tier in (3, 2, 1):
        if avail <= 0:
            break
        total = 0
        for g in range(5):
            if priorities[g] == tier:
                total += need[g]
        if total == 0:
            continue
        give = min(avail, total)
        if give == total:
            for g in range(5):
                if priorities[g] == tier:
                    alloc[g] = need[g]
        else:
            given = 0
            for g in range(5):
                if priorities[g] == tier:
                    alloc[g] = give * need[g] // total
                    given += alloc[g]
            for g in range(5):
                if given >= give:
                    break
                if priorities[g] == tier and alloc[g] < need[g]:
                    alloc[g] += 1
                    given += 1
        avail -= give
    return alloc
