"""Link-budget arithmetic: uplink power control, SINR, Shannon rate, RSRP.

All internal power sums happen in linear milliwatts; dB and dBm appear only
at function boundaries.  ``uplink_tx_power`` is plain-float scalar code
because the scheduler calls it per grant; ``uplink_tx_power_array`` is the
vectorized twin used on per-cell vectors (the two are parity-tested).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import SchedulerError

THERMAL_NOISE_DBM_PER_HZ = -174.0

OPEN_LOOP = "open_loop"
INTERFERENCE_AWARE = "interference_aware"


def dbm_to_mw(dbm):
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw):
    return 10.0 * np.log10(mw)


def db_to_linear(db):
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class PowerControlConfig:
    """Uplink power-control regime and its broadcast parameters."""

    regime: str = OPEN_LOOP
    alpha: float = 1.0          # pathloss compensation factor, in [0, 1]
    p0_dbm: float = -80.0       # normalized power target
    p_max_dbm: float = 20.0     # UE max transmit power
    i0_dbm: float | None = None  # interference PSD target, interference_aware only

    def __post_init__(self):
        if self.regime not in (OPEN_LOOP, INTERFERENCE_AWARE):
            raise ValueError(f"unknown power-control regime: {self.regime!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.regime == INTERFERENCE_AWARE and self.i0_dbm is None:
            raise ValueError("interference_aware regime requires i0_dbm")


SETTING_1 = PowerControlConfig(OPEN_LOOP, alpha=1.0, p0_dbm=-80.0)
SETTING_2 = PowerControlConfig(OPEN_LOOP, alpha=0.6, p0_dbm=-70.0)
INTERFERENCE_AWARE_DEFAULT = PowerControlConfig(
    INTERFERENCE_AWARE, alpha=1.0, p0_dbm=-80.0, i0_dbm=-100.0
)

POWER_PRESETS = {
    "setting1": SETTING_1,
    "setting2": SETTING_2,
    "interference_aware": INTERFERENCE_AWARE_DEFAULT,
}


@dataclass(frozen=True)
class LinkBudget:
    """Carrier-level constants of the 20 MHz / 100 PRB uplink."""

    bandwidth_hz: float = 20e6
    prb_count: int = 100
    prb_bandwidth_hz: float = 180e3
    noise_figure_db: float = 5.0
    max_spectral_efficiency: float = 6.0  # 64-QAM ceiling, bits/s/Hz

    def __post_init__(self):
        if self.prb_count < 1:
            raise ValueError("prb_count must be >= 1")
        if self.prb_count * self.prb_bandwidth_hz > self.bandwidth_hz:
            raise ValueError("PRB grid exceeds the carrier bandwidth")

    @property
    def noise_dbm_per_prb(self) -> float:
        return (THERMAL_NOISE_DBM_PER_HZ
                + 10.0 * math.log10(self.prb_bandwidth_hz)
                + self.noise_figure_db)

    @property
    def noise_mw_per_prb(self) -> float:
        return 10.0 ** (self.noise_dbm_per_prb / 10.0)


@dataclass
class InterferenceField:
    """Out-of-cell received power per base station per PRB, one subframe.

    ``power_mw[j, k]`` is the total power received at cell j on PRB k from
    UEs scheduled in cells other than j.  Written once per subframe, then
    read-only; consumed one subframe later.
    """

    power_mw: np.ndarray  # (n_cells, prb_count), linear mW
    subframe: int

    @classmethod
    def zeros(cls, n_cells: int, prb_count: int, subframe: int = -1):
        return cls(np.zeros((n_cells, prb_count)), subframe)

    def mean_mw_per_prb(self) -> np.ndarray:
        """Per-cell interference level averaged over the PRB grid."""
        return self.power_mw.mean(axis=1)


def uplink_tx_power(cfg: PowerControlConfig, m: int, l_serving_db: float,
                    l_most_interfered_db: float | None = None) -> float:
    """UE transmit power in dBm for an M-PRB grant.

    Open loop: min{P_MAX, 10 log10(M) + P_0 + alpha * L}.  The
    interference-aware regime additionally caps the received PSD at the
    most-interfered neighbour: min with I_0 + L_s + 10 log10(M).
    """
    if m < 1:
        raise SchedulerError(f"power requested for M={m} PRBs")
    bw_db = 10.0 * math.log10(m)
    p = cfg.p0_dbm + cfg.alpha * l_serving_db + bw_db
    if p > cfg.p_max_dbm:
        p = cfg.p_max_dbm
    if cfg.regime == INTERFERENCE_AWARE:
        if l_most_interfered_db is None:
            raise ValueError("interference_aware power needs l_most_interfered_db")
        cap = cfg.i0_dbm + l_most_interfered_db + bw_db
        if cap < p:
            p = cap
    return p


def uplink_tx_power_array(cfg: PowerControlConfig, m, l_serving_db,
                          l_most_interfered_db=None):
    """Vectorized ``uplink_tx_power`` over numpy inputs."""
    m = np.asarray(m)
    if np.any(m < 1):
        raise SchedulerError("power requested for M=0 PRBs")
    bw_db = 10.0 * np.log10(m)
    p = np.minimum(cfg.p_max_dbm, cfg.p0_dbm + cfg.alpha * np.asarray(l_serving_db) + bw_db)
    if cfg.regime == INTERFERENCE_AWARE:
        if l_most_interfered_db is None:
            raise ValueError("interference_aware power needs l_most_interfered_db")
        p = np.minimum(p, cfg.i0_dbm + np.asarray(l_most_interfered_db) + bw_db)
    return p


def uplink_sinr(p_tx_dbm, m, h_db, noise_mw_per_prb, interference_mw_per_prb=0.0):
    """Per-PRB SINR (linear ratio) of an M-PRB transmission.

    ``h_db`` is the channel gain towards the receiving cell including
    antenna gains (typically negative: gains minus pathloss).
    """
    m = np.asarray(m)
    if np.any(m < 1):
        raise SchedulerError("SINR requested for M=0 PRBs")
    received = dbm_to_mw(p_tx_dbm) / m * db_to_linear(h_db)
    return received / (noise_mw_per_prb + interference_mw_per_prb)


def achievable_rate(sinr, m, link: LinkBudget):
    """Shannon rate in bits/s over M PRBs, capped at the 64-QAM efficiency."""
    se = np.minimum(np.log2(1.0 + sinr), link.max_spectral_efficiency)
    return np.asarray(m) * link.prb_bandwidth_hz * se


def dl_rsrp(cell, pathloss_db):
    """Downlink reference-signal received power in dBm.

    Absolute calibration is irrelevant: only the argmax over cells is used.
    """
    return cell.tx_power_dl_dbm + cell.antenna_gain_dbi - pathloss_db


def accumulate_interference(schedule, gain_linear: np.ndarray, prb_count: int,
                            subframe: int) -> InterferenceField:
    """Sum per-PRB out-of-cell received power from one subframe's grants.

    ``schedule`` maps cell id -> sequence of grants (objects with ue_id,
    prb_start, prb_len, tx_power_dbm); ``gain_linear[i, j]`` is the linear
    channel gain from UE i to cell j for this subframe.  Overlapping PRB
    ranges within one cell signal a scheduler bug.
    """
    n_cells = gain_linear.shape[1]
    flat = []  # (ue, cell, start, end, per-PRB mW)
    for cell_id in sorted(schedule):
        prev_end = 0
        for g in sorted(schedule[cell_id], key=lambda g: g.prb_start):
            if g.prb_start < prev_end:
                raise SchedulerError(
                    f"overlapping PRBs in cell {cell_id} at subframe {subframe}")
            prev_end = g.prb_start + g.prb_len
            flat.append((g.ue_id, cell_id, g.prb_start, prev_end,
                         dbm_to_mw(g.tx_power_dbm) / g.prb_len))
    if not flat:
        return InterferenceField.zeros(n_cells, prb_count, subframe)
    # Transmitted PSD per grant row, then one matmul folds in the gains.
    psd = np.zeros((len(flat), prb_count))
    ue_ids = np.fromiter((f[0] for f in flat), dtype=int, count=len(flat))
    for row, (_, _, start, end, per_prb_mw) in enumerate(flat):
        psd[row, start:end] = per_prb_mw
    field = gain_linear[ue_ids].T @ psd  # (n_cells, prb_count)
    for ue, cell_id, start, end, per_prb_mw in flat:
        field[cell_id, start:end] -= per_prb_mw * gain_linear[ue, cell_id]
    return InterferenceField(field, subframe)
