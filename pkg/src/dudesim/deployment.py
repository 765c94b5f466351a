"""Network geometry, propagation, UE placement, mobility, scenario I/O.

The synthetic propagation model is log-distance pathloss with spatially
correlated log-normal shadowing.  It replaces externally supplied
(ray-traced) pathloss matrices, which can instead be plugged in through
``load_scenario``.  Scenarios are immutable after construction.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ScenarioError
from .streams import substream

MACRO = "macro"
SMALL = "small"
TIERS = (MACRO, SMALL)

# Log-distance model, reference distance 1 m.  The exponents are chosen so
# small cells have a steeper decay (smaller coverage) than macros.
MACRO_PL0_DB = 34.0
MACRO_EXPONENT = 3.7
SMALL_PL0_DB = 38.0
SMALL_EXPONENT = 4.0
TIER_PARAMS = {MACRO: (MACRO_PL0_DB, MACRO_EXPONENT),
               SMALL: (SMALL_PL0_DB, SMALL_EXPONENT)}

# Free-space floor convention used by scenario validation: intercept anchored
# at the smallest model intercept, 20 dB/decade.  Shadowing never takes a
# link below this curve.
FREE_SPACE_INTERCEPT_DB = 34.0

PEDESTRIAN_SPEED_MPS = 3.0 / 3.6  # 3 km/h

SCENARIO_FORMAT = "dudesim-scenario"
SCENARIO_VERSION = 1


@dataclass(frozen=True)
class Cell:
    id: int
    tier: str
    x: float
    y: float
    tx_power_dl_dbm: float
    antenna_gain_dbi: float
    backhaul_capacity_bps: float


@dataclass(frozen=True)
class UePlacement:
    id: int
    x: float
    y: float
    hotspot_id: int | None = None


@dataclass
class PropagationMap:
    """Pathloss matrix in dB, one row per UE, one column per cell."""

    pathloss_db: np.ndarray
    shadowing_sigma_macro_db: float
    shadowing_sigma_small_db: float
    decorrelation_distance_m: float


@dataclass
class SyntheticChannel:
    """Generator-side state kept so mobility can recompute pathloss.

    Holds the frozen per-link shadowing realization; only scenarios built by
    ``generate_scenario`` carry it.  Not persisted by ``save_scenario``.
    """

    shadow_db: np.ndarray  # (n_ues, n_cells)


@dataclass(eq=False)
class Scenario:
    cells: tuple
    ues: tuple
    propagation: PropagationMap
    area_m: float  # square side; bounding box is [0, area_m]^2
    synthetic: SyntheticChannel | None = None

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_ues(self) -> int:
        return len(self.ues)

    def ue_positions(self) -> np.ndarray:
        return np.array([[u.x, u.y] for u in self.ues], dtype=float).reshape(-1, 2)

    def cell_positions(self) -> np.ndarray:
        return np.array([[c.x, c.y] for c in self.cells], dtype=float).reshape(-1, 2)

    def __eq__(self, other):
        """Equality over the persisted content (generator state excluded)."""
        if not isinstance(other, Scenario):
            return NotImplemented
        p, q = self.propagation, other.propagation
        return (self.cells == other.cells
                and self.ues == other.ues
                and self.area_m == other.area_m
                and np.array_equal(p.pathloss_db, q.pathloss_db)
                and p.shadowing_sigma_macro_db == q.shadowing_sigma_macro_db
                and p.shadowing_sigma_small_db == q.shadowing_sigma_small_db
                and p.decorrelation_distance_m == q.decorrelation_distance_m)


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of the synthetic scenario generator.

    Defaults describe the reference deployment: 5 macros and 21 small cells
    over a 1 km square with 330 UEs, 70% of them clustered on the small-cell
    hotspots.
    """

    macro_count: int = 5
    small_count: int = 21
    ue_count: int = 330
    area_m: float = 1000.0
    hotspot_count: int | None = None     # None -> one hotspot per small cell
    hotspot_fraction: float = 0.7        # share of UEs drawn around hotspots
    hotspot_sigma_m: float = 40.0
    shadowing_sigma_macro_db: float = 8.0
    shadowing_sigma_small_db: float = 10.0
    decorrelation_distance_m: float = 50.0
    macro_tx_power_dbm: float = 46.0
    small_tx_power_dbm: float = 30.0
    macro_antenna_gain_dbi: float = 17.8
    small_antenna_gain_dbi: float = 4.0
    macro_backhaul_bps: float = math.inf
    small_backhaul_bps: float = math.inf


def pathloss_at(distance_m, tier: str, shadow_db=0.0):
    """Log-distance pathloss in dB with an explicit shadowing term.

    Distances below 1 m are clamped.  The shadowed value never drops below
    the free-space curve anchored at the tier intercept (20 dB/decade), so
    the result is monotonically non-decreasing in distance for a fixed
    shadowing draw.
    """
    pl0, n = TIER_PARAMS[tier]
    log_d = np.log10(np.maximum(distance_m, 1.0))
    return pl0 + np.maximum(10.0 * n * log_d + shadow_db, 20.0 * log_d)


def free_space_floor_db(distance_m):
    """Validation floor: free-space curve under the documented convention."""
    return FREE_SPACE_INTERCEPT_DB + 20.0 * np.log10(np.maximum(distance_m, 1.0))


def _macro_grid(count: int, area_m: float) -> np.ndarray:
    """Regular lattice of macro sites over the square area."""
    k = math.ceil(math.sqrt(count))
    ticks = (np.arange(k) + 0.5) / k * area_m
    xx, yy = np.meshgrid(ticks, ticks)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    return pts[:count]


def _distances(ue_pos: np.ndarray, cell_pos: np.ndarray) -> np.ndarray:
    diff = ue_pos[:, None, :] - cell_pos[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])


def _correlated_shadowing(ue_pos, sigmas_per_cell, decorrelation_m, rng):
    """Per-cell shadowing fields, correlated across UEs (exp(-d/d_corr)).

    Columns (cells) are independent; within a column nearby UEs see similar
    shadowing.  One Cholesky factor is shared by all cells and scaled per
    tier sigma.
    """
    n = len(ue_pos)
    if n == 0:
        return np.zeros((0, len(sigmas_per_cell)))
    d = _distances(ue_pos, ue_pos)
    corr = np.exp(-d / decorrelation_m)
    corr[np.diag_indices(n)] += 1e-9  # SPD jitter
    chol = np.linalg.cholesky(corr)
    normals = rng.standard_normal((n, len(sigmas_per_cell)))
    return (chol @ normals) * np.asarray(sigmas_per_cell)[None, :]


def compute_pathloss_matrix(ue_pos, cell_pos, tiers, shadow_db):
    """Pathloss matrix from positions, tier parameters and shadowing draws."""
    dist = _distances(ue_pos, cell_pos)
    pl = np.empty_like(dist)
    tiers = np.asarray(tiers)
    for tier in TIERS:
        cols = tiers == tier
        if cols.any():
            pl[:, cols] = pathloss_at(dist[:, cols], tier, shadow_db[:, cols])
    return pl


def generate_scenario(seed: int, spec: ScenarioSpec) -> Scenario:
    """Build the synthetic reference scenario; pure function of (seed, spec).

    Macro sites sit on a regular lattice; small cells sit in uniformly drawn
    hotspots; ``hotspot_fraction`` of the UEs are Gaussian-clustered around
    those hotspots and the rest are uniform over the area.
    """
    n_cells = spec.macro_count + spec.small_count
    if n_cells <= 0:
        raise ScenarioError("scenario needs at least one cell")
    if spec.ue_count <= 0:
        raise ScenarioError("scenario needs at least one UE")
    if not 0.0 <= spec.hotspot_fraction <= 1.0:
        raise ScenarioError(
            f"hotspot_fraction must be in [0, 1], got {spec.hotspot_fraction}")
    if spec.area_m <= 0:
        raise ScenarioError("area_m must be positive")

    rng = substream(seed, "scenario")
    area = spec.area_m

    macro_pos = _macro_grid(spec.macro_count, area) if spec.macro_count else np.zeros((0, 2))

    n_hot = spec.hotspot_count if spec.hotspot_count is not None else spec.small_count
    hotspots = rng.uniform(0.1 * area, 0.9 * area, size=(n_hot, 2)) if n_hot else np.zeros((0, 2))

    if spec.small_count:
        if n_hot == 0:
            raise ScenarioError("small cells require at least one hotspot")
        idx = np.arange(spec.small_count) % n_hot
        jitter = rng.normal(0.0, spec.hotspot_sigma_m / 2.0, size=(spec.small_count, 2))
        small_pos = np.clip(hotspots[idx] + jitter, 0.0, area)
    else:
        small_pos = np.zeros((0, 2))

    n_clustered = round(spec.hotspot_fraction * spec.ue_count) if n_hot else 0
    hotspot_ids = np.full(spec.ue_count, -1)
    ue_pos = np.empty((spec.ue_count, 2))
    if n_clustered:
        picks = rng.integers(0, n_hot, size=n_clustered)
        offsets = rng.normal(0.0, spec.hotspot_sigma_m, size=(n_clustered, 2))
        ue_pos[:n_clustered] = np.clip(hotspots[picks] + offsets, 0.0, area)
        hotspot_ids[:n_clustered] = picks
    n_uniform = spec.ue_count - n_clustered
    if n_uniform:
        ue_pos[n_clustered:] = rng.uniform(0.0, area, size=(n_uniform, 2))

    cells = tuple(
        [Cell(i, MACRO, float(macro_pos[i, 0]), float(macro_pos[i, 1]),
              spec.macro_tx_power_dbm, spec.macro_antenna_gain_dbi,
              spec.macro_backhaul_bps)
         for i in range(spec.macro_count)]
        + [Cell(spec.macro_count + i, SMALL,
                float(small_pos[i, 0]), float(small_pos[i, 1]),
                spec.small_tx_power_dbm, spec.small_antenna_gain_dbi,
                spec.small_backhaul_bps)
           for i in range(spec.small_count)]
    )
    ues = tuple(
        UePlacement(i, float(ue_pos[i, 0]), float(ue_pos[i, 1]),
                    int(hotspot_ids[i]) if hotspot_ids[i] >= 0 else None)
        for i in range(spec.ue_count)
    )

    tiers = [c.tier for c in cells]
    sigmas = [spec.shadowing_sigma_macro_db if t == MACRO
              else spec.shadowing_sigma_small_db for t in tiers]
    shadow = _correlated_shadowing(ue_pos, sigmas, spec.decorrelation_distance_m, rng)
    cell_pos = np.array([[c.x, c.y] for c in cells])
    pathloss = compute_pathloss_matrix(ue_pos, cell_pos, tiers, shadow)

    scenario = Scenario(
        cells=cells,
        ues=ues,
        propagation=PropagationMap(
            pathloss_db=pathloss,
            shadowing_sigma_macro_db=spec.shadowing_sigma_macro_db,
            shadowing_sigma_small_db=spec.shadowing_sigma_small_db,
            decorrelation_distance_m=spec.decorrelation_distance_m,
        ),
        area_m=area,
        synthetic=SyntheticChannel(shadow_db=shadow),
    )
    validate_scenario(scenario)
    return scenario


def validate_scenario(scenario: Scenario) -> None:
    """Check the structural invariants; raises ScenarioError on violation."""
    cells, ues = scenario.cells, scenario.ues
    if len(cells) == 0:
        raise ScenarioError("scenario has no cells")
    if [c.id for c in cells] != list(range(len(cells))):
        raise ScenarioError("cell ids must be unique and dense in [0, B)")
    if [u.id for u in ues] != list(range(len(ues))):
        raise ScenarioError("UE ids must be unique and dense in [0, N_u)")
    for c in cells:
        if c.tier not in TIERS:
            raise ScenarioError(f"cell {c.id}: unknown tier {c.tier!r}")
        if not c.backhaul_capacity_bps > 0:
            raise ScenarioError(f"cell {c.id}: backhaul capacity must be > 0")
    area = scenario.area_m
    for u in ues:
        if not (0.0 <= u.x <= area and 0.0 <= u.y <= area):
            raise ScenarioError(f"UE {u.id} lies outside the bounding box")
    pl = scenario.propagation.pathloss_db
    if pl.shape != (len(ues), len(cells)):
        raise ScenarioError(
            f"pathloss matrix is {pl.shape}, expected {(len(ues), len(cells))}")
    if pl.size and not np.isfinite(pl).all():
        raise ScenarioError("pathloss matrix contains non-finite entries")
    if len(ues):
        dist = _distances(scenario.ue_positions(), scenario.cell_positions())
        floor = free_space_floor_db(dist)
        if (pl < floor - 1e-9).any():
            i, j = np.argwhere(pl < floor - 1e-9)[0]
            raise ScenarioError(
                f"pathloss UE {i} -> cell {j} is below the free-space floor")


def draw_headings(rng, n: int) -> np.ndarray:
    """Unit velocity vectors with persistent random directions."""
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
    return np.column_stack([np.cos(theta), np.sin(theta)])


def step_mobility(positions: np.ndarray, headings: np.ndarray, area_m: float,
                  dt_s: float):
    """Advance pedestrian UEs by one step, reflecting at the walls.

    Returns (positions, headings); headings flip on reflection so the walk
    direction is persistent between walls.
    """
    if dt_s <= 0:
        raise ValueError("dt_s must be positive")
    new = positions + PEDESTRIAN_SPEED_MPS * dt_s * headings
    headings = headings.copy()
    for _ in range(4):  # step << area, one pass suffices; loop is a guard
        below = new < 0.0
        above = new > area_m
        if not (below.any() or above.any()):
            break
        new[below] = -new[below]
        new[above] = 2.0 * area_m - new[above]
        headings[below | above] *= -1.0
    return new, headings


def _bps_to_json(value: float):
    return "inf" if math.isinf(value) else value


def _bps_from_json(value, where: str) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return math.inf
        raise ScenarioError(f"{where}: cannot parse capacity {value!r}")
    return float(value)


def save_scenario(scenario: Scenario, path) -> None:
    """Write the scenario to its self-describing JSON file format.

    The writer and ``load_scenario`` are inverse up to float round-trip
    (exact for JSON's shortest-repr floats).  Generator-side shadowing state
    is not persisted, so file-loaded scenarios cannot re-derive pathloss
    under mobility.
    """
    doc = {
        "format": SCENARIO_FORMAT,
        "version": SCENARIO_VERSION,
        "area_m": scenario.area_m,
        "cells": [
            {"id": c.id, "tier": c.tier, "x": c.x, "y": c.y,
             "tx_power_dl_dbm": c.tx_power_dl_dbm,
             "antenna_gain_dbi": c.antenna_gain_dbi,
             "backhaul_capacity_bps": _bps_to_json(c.backhaul_capacity_bps)}
            for c in scenario.cells
        ],
        "ues": [
            {"id": u.id, "x": u.x, "y": u.y, "hotspot_id": u.hotspot_id}
            for u in scenario.ues
        ],
        "propagation": {
            "shadowing_sigma_macro_db": scenario.propagation.shadowing_sigma_macro_db,
            "shadowing_sigma_small_db": scenario.propagation.shadowing_sigma_small_db,
            "decorrelation_distance_m": scenario.propagation.decorrelation_distance_m,
        },
        "pathloss_db": scenario.propagation.pathloss_db.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    """Read a scenario file and re-validate every invariant."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(doc, dict) or doc.get("format") != SCENARIO_FORMAT:
        raise ScenarioError(f"{path}: not a {SCENARIO_FORMAT} file")
    if doc.get("version") != SCENARIO_VERSION:
        raise ScenarioError(f"{path}: unsupported version {doc.get('version')}")
    try:
        cells = tuple(
            Cell(int(c["id"]), str(c["tier"]), float(c["x"]), float(c["y"]),
                 float(c["tx_power_dl_dbm"]), float(c["antenna_gain_dbi"]),
                 _bps_from_json(c["backhaul_capacity_bps"], f"cell {c['id']}"))
            for c in doc["cells"]
        )
        ues = tuple(
            UePlacement(int(u["id"]), float(u["x"]), float(u["y"]),
                        None if u.get("hotspot_id") is None else int(u["hotspot_id"]))
            for u in doc["ues"]
        )
        prop = doc["propagation"]
        pathloss = np.array(doc["pathloss_db"], dtype=float)
        if pathloss.size == 0:
            pathloss = np.zeros((len(ues), len(cells)))
        scenario = Scenario(
            cells=cells,
            ues=ues,
            propagation=PropagationMap(
                pathloss_db=pathloss,
                shadowing_sigma_macro_db=float(prop["shadowing_sigma_macro_db"]),
                shadowing_sigma_small_db=float(prop["shadowing_sigma_small_db"]),
                decorrelation_distance_m=float(prop["decorrelation_distance_m"]),
            ),
            area_m=float(doc["area_m"]),
            synthetic=None,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ScenarioError(f"{path}: malformed scenario file ({e})") from e
    validate_scenario(scenario)
    return scenario
