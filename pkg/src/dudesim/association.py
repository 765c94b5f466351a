"""Uplink cell association policies and the per-cell load estimator.

Three policies are supported:

* ``dl_rsrp``  - uplink follows the strongest downlink (baseline LTE);
* ``dude``     - uplink follows minimum pathloss, downlink keeps the
  strongest-RSRP anchor (decoupled access);
* ``dude_load``- uplink maximizes the backhaul-clamped achievable rate
  divided by (expected active flows + 1), from broadcast load snapshots.

All policies break ties towards the lowest cell id, so decisions are
reproducible bit-for-bit.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import radio
from .errors import StaleBroadcastError


@dataclass(frozen=True)
class CellBroadcast:
    """Immutable per-cell snapshot advertised to UEs each broadcast epoch."""

    cell_id: int
    expected_flows: float
    backhaul_capacity_bps: float
    issued_at: int


@dataclass(frozen=True)
class LoadEstimator:
    """Exponential moving average of a cell's active flow count."""

    cell_id: int
    ema_flows: float = 0.0
    smoothing_factor: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.smoothing_factor <= 1.0:
            raise ValueError("smoothing_factor must be in (0, 1]")
        if self.ema_flows < 0.0:
            raise ValueError("ema_flows must be >= 0")


@dataclass(frozen=True)
class AssociationDecision:
    ue_id: int
    ul_cell: int
    dl_anchor: int
    criterion_values: np.ndarray


def estimate_utilization(estimator: LoadEstimator) -> float:
    """Utilization implied by the flow-count average: E[N] / (E[N] + 1)."""
    return estimator.ema_flows / (estimator.ema_flows + 1.0)


def update_load(estimator: LoadEstimator, active_flows_now: int) -> LoadEstimator:
    """One smoothing step of the flow-count average; called once per subframe."""
    if active_flows_now < 0:
        raise ValueError("active_flows_now must be >= 0")
    beta = estimator.smoothing_factor
    ema = (1.0 - beta) * estimator.ema_flows + beta * active_flows_now
    return replace(estimator, ema_flows=ema)


def _argmax_lowest_id(values) -> int:
    # np.argmax returns the first maximum, i.e. the lowest cell id.
    return int(np.argmax(values))


def associate_dl_rsrp(ue_id: int, rsrp_dbm: np.ndarray) -> AssociationDecision:
    """Baseline: uplink and downlink both on the strongest-RSRP cell."""
    rsrp_dbm = np.asarray(rsrp_dbm, dtype=float)
    if rsrp_dbm.size == 0:
        raise ValueError("association needs at least one cell")
    best = _argmax_lowest_id(rsrp_dbm)
    return AssociationDecision(ue_id, best, best, rsrp_dbm.copy())


def associate_dude(ue_id: int, pathloss_db: np.ndarray,
                   rsrp_dbm: np.ndarray) -> AssociationDecision:
    """Decoupled: uplink on minimum pathloss, downlink anchor on max RSRP.

    The uplink choice depends on pathloss only, never on transmit powers.
    """
    pathloss_db = np.asarray(pathloss_db, dtype=float)
    if pathloss_db.size == 0:
        raise ValueError("association needs at least one cell")
    criterion = -pathloss_db
    return AssociationDecision(
        ue_id, _argmax_lowest_id(criterion),
        _argmax_lowest_id(np.asarray(rsrp_dbm)), criterion)


def associate_dude_load(ue_id: int, broadcasts, access_rates_bps: np.ndarray,
                        rsrp_dbm: np.ndarray) -> AssociationDecision:
    """Load/backhaul-aware uplink choice from broadcast snapshots.

    Per cell j the criterion is min(access rate, advertised backhaul)
    divided by (advertised expected flows + 1).  A missing broadcast for
    any cell, or snapshots from mixed epochs, is a staleness error.
    """
    access_rates_bps = np.asarray(access_rates_bps, dtype=float)
    n_cells = access_rates_bps.size
    if n_cells == 0:
        raise ValueError("association needs at least one cell")
    by_id = {b.cell_id: b for b in broadcasts}
    missing = [j for j in range(n_cells) if j not in by_id]
    if missing:
        raise StaleBroadcastError(f"no broadcast for cells {missing}")
    epochs = {b.issued_at for b in by_id.values()}
    if len(epochs) > 1:
        raise StaleBroadcastError(f"broadcasts from mixed epochs {sorted(epochs)}")
    expected = np.array([by_id[j].expected_flows for j in range(n_cells)])
    backhaul = np.array([by_id[j].backhaul_capacity_bps for j in range(n_cells)])
    c_max = np.minimum(access_rates_bps, backhaul)
    scores = c_max / (expected + 1.0)
    return AssociationDecision(
        ue_id, _argmax_lowest_id(scores),
        _argmax_lowest_id(np.asarray(rsrp_dbm)), scores)


def access_rate_estimate(pathloss_serving_db, pathloss_most_interfered_db,
                         antenna_gain_dbi, interference_mw_per_prb,
                         link: radio.LinkBudget,
                         pc_cfg: radio.PowerControlConfig):
    """Decision-time achievable rate for a hypothetical serving cell.

    Assumes a nominal full-band grant, power from the power-control formula
    for that cell, and the interference level measured at that cell in the
    previous subframe.  numpy-polymorphic: pass per-cell vectors to rank all
    candidates at once.
    """
    m = link.prb_count
    p_dbm = radio.uplink_tx_power_array(
        pc_cfg, m, pathloss_serving_db, pathloss_most_interfered_db)
    h_db = np.asarray(antenna_gain_dbi) - np.asarray(pathloss_serving_db)
    sinr = radio.uplink_sinr(p_dbm, m, h_db, link.noise_mw_per_prb,
                             interference_mw_per_prb)
    return radio.achievable_rate(sinr, m, link)
