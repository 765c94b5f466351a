"""dudesim: flow-level uplink simulator for decoupled cell association.

Simulates a two-tier (macro + small cell) network at subframe resolution
and compares three uplink association policies -- strongest downlink
(dl_rsrp), minimum pathloss (dude), and load/backhaul-aware decoupling
(dude_load) -- under configurable open-loop and interference-aware power
control, with flow-level traffic, proportional-fair scheduling, inter-cell
interference, and per-cell backhaul caps.
"""

from .association import (AssociationDecision, CellBroadcast, LoadEstimator,
                          associate_dl_rsrp, associate_dude,
                          associate_dude_load, estimate_utilization,
                          update_load)
from .deployment import (Cell, PropagationMap, Scenario, ScenarioSpec,
                         UePlacement, generate_scenario, load_scenario,
                         pathloss_at, save_scenario, step_mobility)
from .engine import SimConfig, association_epoch, random_streams, run
from .errors import (ConfigError, ScenarioError, SchedulerError,
                     SimulationError, StaleBroadcastError)
from .metrics import (MetricsLog, SummaryStats, percentile, sinr_variance_cdf,
                      summarize, ue_per_cell_variance, ue_throughput)
from .radio import (InterferenceField, LinkBudget, PowerControlConfig,
                    SETTING_1, SETTING_2, INTERFERENCE_AWARE_DEFAULT,
                    accumulate_interference, achievable_rate, dl_rsrp,
                    uplink_sinr, uplink_tx_power)
from .scheduler import (Grant, PfState, apply_backhaul_cap, max_useful_prbs,
                        schedule_cell, update_pf)
from .traffic import FlowModel, UeQueue, draw_flow_size, draw_wait, tick_queue

__version__ = "0.1.0"
