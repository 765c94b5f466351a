"""Per-cell uplink proportional-fair PRB allocation and backhaul capping.

Grants are contiguous PRB chunks (SC-FDMA style).  The allocator ranks
active UEs by instantaneous-rate over average-throughput and hands out, in
rank order, min(useful PRBs, equal-share ceiling, what can be given while
still leaving one PRB per not-yet-served UE).  The reserve term guarantees
every active UE a grant whenever there are at least as many PRBs as UEs.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import radio


@dataclass(slots=True)
class Grant:
    ue_id: int
    prb_start: int
    prb_len: int
    tx_power_dbm: float


@dataclass
class PfState:
    """Average served throughput per associated UE (EMA, floored above zero)."""

    avg_throughput: dict = field(default_factory=dict)  # ue_id -> bits/s
    time_constant: float = 100.0  # subframes
    floor_bps: float = 1e3


@dataclass(slots=True)
class SchedCandidate:
    """Engine-provided view of one active UE competing for PRBs."""

    ue_id: int
    l_serving_db: float
    l_most_interfered_db: float
    max_prbs: int
    inst_rate_bps: float  # current single-PRB rate estimate


def max_useful_prbs(l_serving_db: float, l_most_interfered_db: float,
                    antenna_gain_dbi: float, pc_cfg: radio.PowerControlConfig,
                    link: radio.LinkBudget) -> int:
    """Grant size that maximizes this UE's noise-limited rate.

    Evaluates the rate over every feasible M and returns the argmax,
    smallest on ties; at least 1.  A power-limited UE splits a fixed budget
    over more PRBs, so the scan is what decides whether width still pays.
    """
    m = np.arange(1, link.prb_count + 1)
    p_dbm = radio.uplink_tx_power_array(pc_cfg, m, l_serving_db,
                                        l_most_interfered_db)
    sinr = radio.uplink_sinr(p_dbm, m, antenna_gain_dbi - l_serving_db,
                             link.noise_mw_per_prb)
    rates = radio.achievable_rate(sinr, m, link)
    return int(np.argmax(rates)) + 1


def schedule_cell(candidates, pf: PfState, prb_count: int,
                  pc_cfg: radio.PowerControlConfig) -> list:
    """Allocate one subframe's PRBs of a cell among its active UEs.

    Candidates are ranked by inst_rate / avg_throughput (ties to the lower
    ue id).  When there are more UEs than PRBs, only the top ``prb_count``
    get (single-PRB) grants this subframe.  Transmit powers are inlined from
    the power-control formula (parity-tested against radio.uplink_tx_power).
    """
    if not candidates:
        return []
    avg = pf.avg_throughput
    floor = pf.floor_bps
    ranked = sorted(
        candidates,
        key=lambda c: (-c.inst_rate_bps / avg.get(c.ue_id, floor), c.ue_id))
    k = min(len(ranked), prb_count)
    ceiling = math.ceil(prb_count / len(ranked))
    interference_aware = pc_cfg.regime == radio.INTERFERENCE_AWARE
    grants = []
    start = 0
    remaining = prb_count
    for idx in range(k):
        c = ranked[idx]
        m = min(c.max_prbs, ceiling, remaining - (k - idx - 1))
        bw_db = 10.0 * math.log10(m)
        p = pc_cfg.p0_dbm + pc_cfg.alpha * c.l_serving_db + bw_db
        if p > pc_cfg.p_max_dbm:
            p = pc_cfg.p_max_dbm
        if interference_aware:
            cap = pc_cfg.i0_dbm + c.l_most_interfered_db + bw_db
            if cap < p:
                p = cap
        grants.append(Grant(c.ue_id, start, m, p))
        start += m
        remaining -= m
        if remaining == 0:
            break
    return grants


def apply_backhaul_cap(bits_per_ue, budget_bits: float) -> list:
    """Scale one subframe's served bits so their total fits the backhaul.

    Proportional scaling: if the total exceeds the budget every UE keeps the
    same share of a smaller pie.  An infinite budget passes through.
    """
    bits = list(bits_per_ue)
    if math.isinf(budget_bits):
        return bits
    if budget_bits <= 0.0:
        return [0.0] * len(bits)
    total = sum(bits)
    if total <= budget_bits:
        return bits
    scale = budget_bits / total
    return [b * scale for b in bits]


def update_pf(pf: PfState, served_bits, subframe_duration_s: float) -> PfState:
    """Advance the per-UE throughput averages by one subframe.

    ``served_bits`` must cover every associated UE, with zero entries for
    the unserved ones; averages decay towards the floor, never below it.
    """
    w = 1.0 / pf.time_constant
    keep = 1.0 - w
    floor = pf.floor_bps
    avg = dict(pf.avg_throughput)
    for ue, bits in served_bits.items():
        prev = avg.get(ue, floor)
        avg[ue] = max(floor, keep * prev + w * (bits / subframe_duration_s))
    return PfState(avg, pf.time_constant, floor)
