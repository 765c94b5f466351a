"""Post-processing of simulation logs into the reported quantities.

The log is columnar: one row per flow, one row per (subframe, transmitting
UE), and dense per-(cell, subframe) panels.  All statistics default to the
post-warm-up region.  Percentiles use the nearest-rank rule so results are
bit-exact and implementation independent.
"""

import hashlib
import json
import math
from array import array
from dataclasses import dataclass

import numpy as np


class MetricsLog:
    """Columnar record store filled by the engine.

    Appenders are cheap (array.array); ``finalize`` freezes everything into
    numpy arrays.  Flow columns: ue, ul cell, dl anchor, size, start, end
    (-1 while incomplete).  Tx columns: subframe, ue, flow index, cell,
    granted PRBs, served bits, SINR dB.
    """

    def __init__(self, n_ues: int, n_cells: int, subframes: int,
                 warmup_subframes: int, record_tx: bool = True):
        self.n_ues = n_ues
        self.n_cells = n_cells
        self.subframes = subframes
        self.warmup_subframes = warmup_subframes
        self.record_tx = record_tx
        self.meta: dict = {}
        self.max_broadcast_age = 0

        self._flow_ue = array("q")
        self._flow_cell = array("q")
        self._flow_anchor = array("q")
        self._flow_size = array("d")
        self._flow_start = array("q")
        self._flow_end = array("q")

        self._tx_sf = array("q")
        self._tx_ue = array("q")
        self._tx_flow = array("q")
        self._tx_cell = array("q")
        self._tx_prbs = array("q")
        self._tx_served = array("d")
        self._tx_sinr_db = array("d")

        # Dense per-cell panels, written column-by-column each subframe.
        self.active_count = np.zeros((n_cells, subframes))
        self.load_ema = np.zeros((n_cells, subframes))
        self.backhaul_used_bits = np.zeros((n_cells, subframes))

        self.final_pending_bits = np.zeros(n_ues)
        self._final = False

    # -- engine-facing appenders -------------------------------------------

    def flow_started(self, ue: int, cell: int, anchor: int, size_bits: float,
                     subframe: int) -> int:
        idx = len(self._flow_ue)
        self._flow_ue.append(ue)
        self._flow_cell.append(cell)
        self._flow_anchor.append(anchor)
        self._flow_size.append(size_bits)
        self._flow_start.append(subframe)
        self._flow_end.append(-1)
        return idx

    def flow_completed(self, flow_idx: int, subframe: int) -> None:
        self._flow_end[flow_idx] = subframe

    def tx(self, subframe: int, ue: int, flow_idx: int, cell: int, prbs: int,
           served_bits: float, sinr_db: float) -> None:
        if not self.record_tx:
            return
        self._tx_sf.append(subframe)
        self._tx_ue.append(ue)
        self._tx_flow.append(flow_idx)
        self._tx_cell.append(cell)
        self._tx_prbs.append(prbs)
        self._tx_served.append(served_bits)
        self._tx_sinr_db.append(sinr_db)

    def finalize(self, final_pending_bits=None) -> "MetricsLog":
        if final_pending_bits is not None:
            self.final_pending_bits = np.asarray(final_pending_bits, dtype=float).copy()
        for name in ("flow_ue", "flow_cell", "flow_anchor", "flow_size",
                     "flow_start", "flow_end", "tx_sf", "tx_ue", "tx_flow",
                     "tx_cell", "tx_prbs", "tx_served", "tx_sinr_db"):
            setattr(self, name, np.asarray(getattr(self, "_" + name)))
        self._final = True
        return self

    # -- derived views ------------------------------------------------------

    @property
    def n_flows(self) -> int:
        return len(self._flow_ue)

    def completed_mask(self, post_warmup: bool = True) -> np.ndarray:
        done = self.flow_end >= 0
        if post_warmup:
            done &= self.flow_start >= self.warmup_subframes
        return done

    def digest(self) -> str:
        """SHA-256 over every record column; equal digests mean equal logs."""
        assert self._final, "finalize() the log before hashing"
        h = hashlib.sha256()
        for name in ("flow_ue", "flow_cell", "flow_anchor", "flow_size",
                     "flow_start", "flow_end", "tx_sf", "tx_ue", "tx_flow",
                     "tx_cell", "tx_prbs", "tx_served", "tx_sinr_db"):
            h.update(np.ascontiguousarray(getattr(self, name)).tobytes())
        for panel in (self.active_count, self.load_ema,
                      self.backhaul_used_bits, self.final_pending_bits):
            h.update(np.ascontiguousarray(panel).tobytes())
        h.update(json.dumps(self.meta, sort_keys=True).encode())
        return h.hexdigest()


@dataclass
class SummaryStats:
    label: str
    throughput_p5_bps: float
    throughput_p50_bps: float
    throughput_p90_bps: float
    included_ues: int
    excluded_ues: int
    sinr_variance_median_db2: float
    ue_per_cell_variance: float
    completed_flows: int

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "throughput_p5_bps": self.throughput_p5_bps,
            "throughput_p50_bps": self.throughput_p50_bps,
            "throughput_p90_bps": self.throughput_p90_bps,
            "included_ues": self.included_ues,
            "excluded_ues": self.excluded_ues,
            "sinr_variance_median_db2": self.sinr_variance_median_db2,
            "ue_per_cell_variance": self.ue_per_cell_variance,
            "completed_flows": self.completed_flows,
        }


def percentile(values, p: float) -> float:
    """Nearest-rank percentile: sorted[ceil(p/100 * n)], 1-clamped.

    Permutation invariant and monotone in p; no interpolation, so the result
    is always one of the input values.
    """
    values = sorted(values)
    n = len(values)
    if n == 0:
        raise ValueError("percentile of an empty sequence")
    rank = math.ceil(p / 100.0 * n)
    rank = min(max(rank, 1), n)
    return values[rank - 1]


def ue_throughput(log: MetricsLog, ue: int, mode: str = "flow"):
    """Throughput of one UE over the post-warm-up region, bits/second.

    ``flow`` mode is the flow-average rate: total completed flow bits over
    total flow durations (arrival to completion, in seconds).  ``served``
    mode is total served bits over post-warm-up wall-clock.  Returns None in
    flow mode when the UE completed no post-warm-up flow.
    """
    if mode == "served":
        sel = (log.tx_ue == ue) & (log.tx_sf >= log.warmup_subframes)
        seconds = (log.subframes - log.warmup_subframes) * 1e-3
        return float(log.tx_served[sel].sum()) / seconds
    if mode != "flow":
        raise ValueError(f"unknown throughput mode {mode!r}")
    sel = log.completed_mask() & (log.flow_ue == ue)
    if not sel.any():
        return None
    duration_sf = log.flow_end[sel] - log.flow_start[sel] + 1
    return float(log.flow_size[sel].sum() / (duration_sf.sum() * 1e-3))


def all_ue_throughputs(log: MetricsLog, mode: str = "flow"):
    """Per-UE throughputs plus the count of UEs excluded for lack of flows."""
    done = log.completed_mask()
    values = []
    excluded = 0
    if mode == "flow":
        size_by_ue = np.zeros(log.n_ues)
        dur_by_ue = np.zeros(log.n_ues)
        np.add.at(size_by_ue, log.flow_ue[done], log.flow_size[done])
        np.add.at(dur_by_ue, log.flow_ue[done],
                  log.flow_end[done] - log.flow_start[done] + 1)
        for ue in range(log.n_ues):
            if dur_by_ue[ue] > 0:
                values.append(size_by_ue[ue] / (dur_by_ue[ue] * 1e-3))
            else:
                excluded += 1
        return np.array(values), excluded
    for ue in range(log.n_ues):
        values.append(ue_throughput(log, ue, mode))
    return np.array(values), excluded


def sinr_variance_per_ue(log: MetricsLog, min_samples: int = 30):
    """Variance of each UE's transmit-time SINR (dB^2), post-warm-up.

    Only subframes where the UE actually transmits contribute; UEs with
    fewer than ``min_samples`` samples are excluded.  Variance is over the
    UE's own samples (ddof 0).
    """
    sel = log.tx_sf >= log.warmup_subframes
    ue = log.tx_ue[sel]
    sinr = log.tx_sinr_db[sel]
    count = np.bincount(ue, minlength=log.n_ues)
    s1 = np.bincount(ue, weights=sinr, minlength=log.n_ues)
    s2 = np.bincount(ue, weights=sinr * sinr, minlength=log.n_ues)
    ok = count >= min_samples
    mean = np.divide(s1, count, out=np.zeros_like(s1), where=count > 0)
    var = np.divide(s2, count, out=np.zeros_like(s2), where=count > 0) - mean ** 2
    return np.maximum(var[ok], 0.0)


def sinr_variance_cdf(log: MetricsLog, min_samples: int = 30):
    """Empirical CDF of per-UE SINR variance: (sorted dB^2, cumulative prob)."""
    var = np.sort(sinr_variance_per_ue(log, min_samples))
    if var.size == 0:
        return var, var
    return var, np.arange(1, var.size + 1) / var.size


def ue_per_cell_variance(log: MetricsLog) -> float:
    """Population variance, across cells, of time-average active UE counts."""
    start = min(log.warmup_subframes, log.subframes)
    panel = log.active_count[:, start:]
    if panel.shape[1] == 0:
        panel = log.active_count
    means = panel.mean(axis=1) if panel.size else np.zeros(log.n_cells)
    return float(means.var())


def summarize(log: MetricsLog, label: str = "") -> SummaryStats:
    values, excluded = all_ue_throughputs(log)
    if values.size:
        p5 = percentile(values, 5)
        p50 = percentile(values, 50)
        p90 = percentile(values, 90)
    else:
        p5 = p50 = p90 = 0.0
    var = sinr_variance_per_ue(log)
    done = int(log.completed_mask(post_warmup=False).sum())
    return SummaryStats(
        label=label,
        throughput_p5_bps=float(p5),
        throughput_p50_bps=float(p50),
        throughput_p90_bps=float(p90),
        included_ues=int(values.size),
        excluded_ues=int(excluded),
        sinr_variance_median_db2=float(percentile(var, 50)) if var.size else 0.0,
        ue_per_cell_variance=ue_per_cell_variance(log),
        completed_flows=done,
    )
