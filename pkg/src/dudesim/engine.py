"""Subframe-synchronous simulation engine.

Each subframe runs, in order: broadcast refresh, idle-wait ticks and
association epochs for arriving flows, per-cell scheduling, serving against
the previous subframe's interference field, backhaul capping, queue drains
and completions, interference accumulation for the next subframe, and
estimator/metric updates.  The loop is sequential and bit-deterministic for
a fixed (config, scenario): every stochastic entity owns an independent
substream, so runs replicate exactly.

For speed the loop keeps state in flat arrays and inlines the per-grant
power/SINR arithmetic (parity with the radio module is asserted in tests);
flow arrivals are event-bucketed so idle UEs cost nothing per subframe.
"""

import math
import warnings
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from . import association as assoc
from . import radio, scheduler, traffic
from .deployment import (Scenario, ScenarioSpec, compute_pathloss_matrix,
                         draw_headings, generate_scenario, step_mobility)
from .errors import ConfigError, SimulationError, StaleBroadcastError
from .metrics import MetricsLog
from .streams import StreamFamily

POLICIES = ("dl_rsrp", "dude", "dude_load")
BACKHAUL_CRITERIA = ("total", "residual")
SUBFRAME_S = 1e-3  # LTE subframe duration


def random_streams(seed: int) -> StreamFamily:
    """Independent, reproducible substreams per (purpose, entity id).

    Draw counts in one substream never shift any other, so toggling e.g.
    fading leaves the per-UE traffic sequences untouched.  Seed 0 is valid.
    """
    return StreamFamily(seed)


@dataclass(frozen=True)
class SimConfig:
    """Everything one simulation run depends on besides the scenario."""

    subframes: int = 10_000
    seed: int = 0
    association_policy: str = "dude_load"
    pc: radio.PowerControlConfig = radio.SETTING_1
    flow: traffic.FlowModel = traffic.FlowModel()
    link: radio.LinkBudget = radio.LinkBudget()
    scenario: ScenarioSpec = ScenarioSpec()
    broadcast_period: int = 50       # subframes between load broadcasts
    warmup_subframes: int = 1000     # flagged and excluded from statistics
    backhaul_overrides: tuple = ()   # (("macro", bps), ("small", bps)) or ()
    backhaul_criterion: str = "total"  # advertised C_bk: total | residual
    mobility_enabled: bool = True
    fading_enabled: bool = False
    load_smoothing: float = 0.01     # EMA beta per subframe
    pf_time_constant: float = 100.0  # subframes
    pf_floor_bps: float = 1e3
    record_tx: bool = True           # per-(subframe, UE) rows in the log

    def __post_init__(self):
        if self.subframes < 1:
            raise ConfigError("subframes must be >= 1")
        if self.broadcast_period < 1:
            raise ConfigError("broadcast_period must be >= 1")
        if not 0 <= self.warmup_subframes <= self.subframes:
            raise ConfigError("warmup_subframes must be in [0, subframes]")
        if self.association_policy not in POLICIES:
            raise ConfigError(
                f"unknown association_policy {self.association_policy!r}")
        if self.backhaul_criterion not in BACKHAUL_CRITERIA:
            raise ConfigError(
                f"unknown backhaul_criterion {self.backhaul_criterion!r}")
        if not 0.0 < self.load_smoothing <= 1.0:
            raise ConfigError("load_smoothing must be in (0, 1]")
        if self.pf_time_constant < 1.0:
            raise ConfigError("pf_time_constant must be >= 1")
        for tier, _ in self.backhaul_overrides:
            if tier not in ("macro", "small"):
                raise ConfigError(f"backhaul override for unknown tier {tier!r}")


def association_epoch(policy: str, ue_id: int, pathloss_row, rsrp_row,
                      broadcasts=None, access_rates_bps=None):
    """Dispatch one arriving UE to its policy's association operation.

    ``dude_load`` decides from broadcast snapshots, never live cell state;
    the other policies ignore broadcasts entirely.  The UE then stays on the
    chosen uplink cell until its queue empties.
    """
    if policy == "dl_rsrp":
        return assoc.associate_dl_rsrp(ue_id, rsrp_row)
    if policy == "dude":
        return assoc.associate_dude(ue_id, pathloss_row, rsrp_row)
    if policy == "dude_load":
        if broadcasts is None or access_rates_bps is None:
            raise StaleBroadcastError("dude_load association without broadcasts")
        return assoc.associate_dude_load(ue_id, broadcasts, access_rates_bps,
                                         rsrp_row)
    raise ConfigError(f"unknown association_policy {policy!r}")


def _effective_backhaul(scenario: Scenario, overrides) -> np.ndarray:
    bk = np.array([c.backhaul_capacity_bps for c in scenario.cells])
    for tier, bps in overrides:
        if bps is not None:
            for j, c in enumerate(scenario.cells):
                if c.tier == tier:
                    bk[j] = bps
    return bk


def run(config: SimConfig, scenario: Scenario | None = None) -> MetricsLog:
    """Execute one simulation and return the finalized metrics log.

    When no scenario is passed, one is generated from (config.seed,
    config.scenario).  Identical (config, scenario) inputs produce a
    bit-identical log.
    """
    if scenario is None:
        scenario = generate_scenario(config.seed, config.scenario)

    n_ues = scenario.n_ues
    n_cells = scenario.n_cells
    link = config.link
    pc = config.pc
    policy = config.association_policy
    prb_count = link.prb_count
    prb_bw = link.prb_bandwidth_hz
    se_cap = link.max_spectral_efficiency
    noise_mw = link.noise_mw_per_prb
    beta = config.load_smoothing
    interference_aware = pc.regime == radio.INTERFERENCE_AWARE
    log2, log10 = math.log2, math.log10

    tiers = [c.tier for c in scenario.cells]
    ant_gain = np.array([c.antenna_gain_dbi for c in scenario.cells])
    tx_dl = np.array([c.tx_power_dl_dbm for c in scenario.cells])
    bk_bps = _effective_backhaul(scenario, config.backhaul_overrides)
    budget_bits = bk_bps * SUBFRAME_S  # backhaul budget per subframe

    mobility = config.mobility_enabled
    if mobility and scenario.synthetic is None and n_ues > 0:
        warnings.warn("mobility requested for a file-loaded scenario; "
                      "disabled (no analytic model to recompute pathloss)")
        mobility = False

    pathloss = scenario.propagation.pathloss_db.copy()
    gain_db = ant_gain[None, :] - pathloss
    gain_lin = 10.0 ** (gain_db / 10.0)

    streams = random_streams(config.seed)
    traffic_rng = [streams.get("traffic", i) for i in range(n_ues)]
    if mobility:
        positions = scenario.ue_positions()
        cell_pos = scenario.cell_positions()
        headings = draw_headings(streams.get("mobility"), n_ues)
        shadow = scenario.synthetic.shadow_db
    fading_rng = streams.get("fading") if config.fading_enabled else None

    flow_model = config.flow

    # Per-UE state as plain lists (hot loop avoids numpy scalar boxing);
    # link constants are frozen per association epoch.
    pending = [0.0] * n_ues
    ul_cell = [-1] * n_ues
    flow_of = [-1] * n_ues
    l_serving = [0.0] * n_ues
    l_interfered = [0.0] * n_ues
    max_prbs = [1] * n_ues
    p1_lin = np.zeros(n_ues)  # linear single-PRB tx power, for the PF metric

    # Per-cell state.
    load_ema = np.zeros(n_cells)
    counts = np.zeros(n_cells)
    active_by_cell = [[] for _ in range(n_cells)]
    pf_states = [scheduler.PfState({}, config.pf_time_constant,
                                   config.pf_floor_bps) for _ in range(n_cells)]
    broadcasts: list = []
    broadcast_sf = -1
    last_used_bits = [0.0] * n_cells

    prev_field = np.zeros((n_cells, prb_count))
    prev_mean = [0.0] * n_cells
    field_is_zero = True

    arrivals_at = defaultdict(list)
    for i in range(n_ues):
        w = traffic.draw_wait(flow_model, traffic_rng[i])
        arrivals_at[w - 1].append(i)  # wait drawn before subframe 0

    log = MetricsLog(n_ues, n_cells, config.subframes, config.warmup_subframes,
                     record_tx=config.record_tx)
    log.meta = {
        "policy": policy,
        "seed": config.seed,
        "subframes": config.subframes,
        "warmup_subframes": config.warmup_subframes,
        "pc": {"regime": pc.regime, "alpha": pc.alpha, "p0_dbm": pc.p0_dbm,
               "p_max_dbm": pc.p_max_dbm, "i0_dbm": pc.i0_dbm},
        "flow": {"mean_flow_size_bits": flow_model.mean_flow_size_bits,
                 "mean_wait_subframes": flow_model.mean_wait_subframes},
        "n_cells": n_cells,
        "n_ues": n_ues,
        "backhaul_criterion": config.backhaul_criterion,
    }

    for t in range(config.subframes):
        try:
            if mobility:
                positions, headings = step_mobility(positions, headings,
                                                    scenario.area_m, SUBFRAME_S)
                pathloss = compute_pathloss_matrix(positions, cell_pos, tiers,
                                                   shadow)
                gain_db = ant_gain[None, :] - pathloss
                gain_lin = 10.0 ** (gain_db / 10.0)
            if fading_rng is not None:
                g_eff = gain_lin * fading_rng.exponential(1.0, size=(n_ues, n_cells))
            else:
                g_eff = gain_lin

            # (a) broadcast refresh precedes association in the same subframe
            if t % config.broadcast_period == 0:
                if config.backhaul_criterion == "residual":
                    adv_bk = np.maximum(bk_bps - np.array(last_used_bits) / SUBFRAME_S,
                                        0.0)
                else:
                    adv_bk = bk_bps
                broadcasts = [assoc.CellBroadcast(j, float(load_ema[j]),
                                                  float(adv_bk[j]), t)
                              for j in range(n_cells)]
                broadcast_sf = t

            # (b) flow arrivals and association epochs
            arriving = arrivals_at.pop(t, None)
            if arriving:
                prev_mean_arr = np.asarray(prev_mean)
                for i in sorted(arriving):
                    size = traffic.draw_flow_size(flow_model, traffic_rng[i])
                    pl_row = pathloss[i]
                    rsrp_row = tx_dl + ant_gain - pl_row
                    if n_cells >= 2:
                        two = np.partition(pl_row, 1)
                        nearest = int(np.argmin(pl_row))
                    if policy == "dude_load":
                        if n_cells >= 2:
                            ls_vec = np.full(n_cells, two[0])
                            ls_vec[nearest] = two[1]
                        else:
                            ls_vec = np.array([math.inf])
                        rates = assoc.access_rate_estimate(
                            pl_row, ls_vec, ant_gain, prev_mean_arr, link, pc)
                        dec = association_epoch(policy, i, pl_row, rsrp_row,
                                                broadcasts, rates)
                        age = t - broadcast_sf
                        if age > log.max_broadcast_age:
                            log.max_broadcast_age = age
                    else:
                        dec = association_epoch(policy, i, pl_row, rsrp_row)
                    c = dec.ul_cell
                    if n_cells >= 2:
                        ls = float(two[1] if c == nearest else two[0])
                    else:
                        ls = math.inf
                    pending[i] = size
                    ul_cell[i] = c
                    l_serving[i] = float(pl_row[c])
                    l_interfered[i] = ls
                    max_prbs[i] = scheduler.max_useful_prbs(
                        l_serving[i], ls, float(ant_gain[c]), pc, link)
                    p1 = radio.uplink_tx_power(pc, 1, l_serving[i], ls)
                    p1_lin[i] = 10.0 ** (p1 / 10.0)
                    flow_of[i] = log.flow_started(i, c, dec.dl_anchor, size, t)
                    counts[c] += 1
                    active_by_cell[c].append(i)

            # (c)-(e) schedule, serve against the t-1 interference, drain
            all_grants = {}
            for c in range(n_cells):
                actives = active_by_cell[c]
                if not actives:
                    last_used_bits[c] = 0.0
                    continue
                denom1 = noise_mw + prev_mean[c]
                idx = np.array(actives)
                sinr1 = p1_lin[idx] * g_eff[idx, c] / denom1
                rate1 = prb_bw * np.minimum(np.log2(1.0 + sinr1), se_cap)
                cands = [scheduler.SchedCandidate(i, l_serving[i],
                                                  l_interfered[i], max_prbs[i], r)
                         for i, r in zip(actives, rate1.tolist())]
                grants = scheduler.schedule_cell(cands, pf_states[c],
                                                 prb_count, pc)
                all_grants[c] = grants

                if field_is_zero:
                    prefix = None
                else:
                    prefix = np.concatenate(([0.0], np.cumsum(prev_field[c]))).tolist()
                gcol = g_eff[:, c]
                raw_bits = []
                sinrs_db = []
                for g in grants:
                    i = g.ue_id
                    m = g.prb_len
                    if prefix is None:
                        imean = 0.0
                    else:
                        s = g.prb_start
                        imean = (prefix[s + m] - prefix[s]) / m
                    rcv = (10.0 ** (g.tx_power_dbm / 10.0) / m) * gcol[i]
                    sinr = rcv / (noise_mw + imean)
                    se = log2(1.0 + sinr)
                    if se > se_cap:
                        se = se_cap
                    bits = m * prb_bw * se * SUBFRAME_S
                    p = pending[i]
                    raw_bits.append(bits if bits < p else p)
                    sinrs_db.append(10.0 * log10(sinr))
                served = scheduler.apply_backhaul_cap(raw_bits, budget_bits[c])
                last_used_bits[c] = sum(served)

                served_map = {i: 0.0 for i in actives}
                for g, bits, sdb in zip(grants, served, sinrs_db):
                    i = g.ue_id
                    served_map[i] = bits
                    pending[i] -= bits
                    log.tx(t, i, flow_of[i], c, g.prb_len, bits, sdb)
                pf_states[c] = scheduler.update_pf(pf_states[c], served_map,
                                                   SUBFRAME_S)
                for g in grants:
                    i = g.ue_id
                    if pending[i] <= 0.0:
                        pending[i] = 0.0
                        log.flow_completed(flow_of[i], t)
                        ul_cell[i] = -1
                        flow_of[i] = -1
                        counts[c] -= 1
                        actives.remove(i)
                        pf_states[c].avg_throughput.pop(i, None)
                        w = traffic.draw_wait(flow_model, traffic_rng[i])
                        arrivals_at[t + w].append(i)

            # (f) interference seen at t+1 is what was transmitted at t
            if n_cells > 1:
                if all_grants:
                    field = radio.accumulate_interference(all_grants, g_eff,
                                                          prb_count, t)
                    prev_field = field.power_mw
                    prev_mean = prev_field.mean(axis=1).tolist()
                    field_is_zero = False
                elif not field_is_zero:  # nobody transmitted: field drops to zero
                    prev_field = np.zeros((n_cells, prb_count))
                    prev_mean = [0.0] * n_cells
                    field_is_zero = True

            # (g)-(h) estimator updates and per-cell panels
            load_ema = (1.0 - beta) * load_ema + beta * counts
            log.active_count[:, t] = counts
            log.load_ema[:, t] = load_ema
            log.backhaul_used_bits[:, t] = last_used_bits
        except (AssertionError, ArithmeticError, RuntimeError, ValueError) as e:
            if isinstance(e, SimulationError):
                raise
            raise SimulationError(f"subframe {t}: {e}") from e

    return log.finalize(final_pending_bits=pending)
