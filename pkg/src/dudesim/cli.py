"""Experiment harness and command-line interface.

Verbs: ``generate-scenario``, ``run``, ``sweep``, ``report``.  Three canned
experiment families cover the standard study: ``policy_comparison`` (three
association policies under both open-loop power settings, ideal backhaul),
``power_control_comparison`` (the three policies under interference-aware
power control), and ``backhaul_sweep`` (small-cell backhaul swept with
interference-aware power control).  Output files are byte-identical across
reruns of the same spec: no timestamps, stable key order, repr floats.
"""

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from . import engine, metrics, radio
from .deployment import ScenarioSpec, generate_scenario, load_scenario, save_scenario
from .errors import ConfigError, ScenarioError
from .traffic import FlowModel

EXPERIMENTS = ("policy_comparison", "power_control_comparison", "backhaul_sweep")
DEFAULT_SWEEP_MBPS = (1, 2, 5, 10, 20, 50, 100)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
SWEEP_MACRO_BACKHAUL_BPS = 100e6

RUNS_HEADER = ("experiment", "variant", "policy", "power_control",
               "small_backhaul_mbps", "seed", "throughput_p5_bps",
               "throughput_p50_bps", "throughput_p90_bps",
               "sinr_variance_median_db2", "ue_per_cell_variance",
               "completed_flows", "included_ues", "excluded_ues")

AGG_HEADER = ("experiment", "variant", "metric", "min", "median", "max")

AGG_METRICS = ("throughput_p5_bps", "throughput_p50_bps", "throughput_p90_bps",
               "sinr_variance_median_db2", "ue_per_cell_variance")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    base: engine.SimConfig
    seeds: tuple = DEFAULT_SEEDS
    sweep_small_backhaul_bps: tuple = tuple(m * 1e6 for m in DEFAULT_SWEEP_MBPS)
    scenario_path: str | None = None

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.name!r}")
        if len(self.seeds) < 1:
            raise ConfigError("experiment needs at least one seed")
        sweep = self.sweep_small_backhaul_bps
        if any(b <= 0 for b in sweep):
            raise ConfigError("sweep values must be positive")
        if list(sweep) != sorted(set(sweep)):
            raise ConfigError("sweep values must be strictly increasing")


# -- config parsing ----------------------------------------------------------

def _reject_unknown(section: dict, known, path: str) -> None:
    for key in section:
        if key not in known:
            raise ConfigError(f"unknown key: {path}{key}")


def _as_bps(value, path: str) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return math.inf
        raise ConfigError(f"{path}: cannot parse rate {value!r}")
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _typed(section: dict, key: str, kind, default, path: str):
    if key not in section or section[key] is None:
        return default
    value = section[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is float and isinstance(value, str):
        return _as_bps(value, path + key)
    if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
        raise ConfigError(f"{path}{key}: expected {kind.__name__}, got {value!r}")
    return value


def _parse_pc(section: dict) -> radio.PowerControlConfig:
    _reject_unknown(section, ("preset", "regime", "alpha", "p0_dbm",
                              "p_max_dbm", "i0_dbm"), "pc.")
    base = radio.SETTING_1
    if "preset" in section:
        name = section["preset"]
        if name not in radio.POWER_PRESETS:
            raise ConfigError(f"pc.preset: unknown preset {name!r}")
        base = radio.POWER_PRESETS[name]
    kwargs = {}
    for key in ("regime", "alpha", "p0_dbm", "p_max_dbm", "i0_dbm"):
        if key in section:
            kwargs[key] = section[key]
    try:
        return replace(base, **kwargs) if kwargs else base
    except ValueError as e:
        raise ConfigError(f"pc: {e}") from e


def _parse_scenario(section: dict) -> ScenarioSpec:
    fields = ("macro_count", "small_count", "ue_count", "area_m",
              "hotspot_count", "hotspot_fraction", "hotspot_sigma_m",
              "shadowing_sigma_macro_db", "shadowing_sigma_small_db",
              "decorrelation_distance_m", "macro_tx_power_dbm",
              "small_tx_power_dbm", "macro_antenna_gain_dbi",
              "small_antenna_gain_dbi", "macro_backhaul_bps",
              "small_backhaul_bps")
    _reject_unknown(section, fields, "scenario.")
    kwargs = {}
    for key in fields:
        if key in section and section[key] is not None:
            value = section[key]
            if key.endswith("_bps"):
                value = _as_bps(value, f"scenario.{key}")
            kwargs[key] = value
    try:
        return ScenarioSpec(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"scenario: {e}") from e


def validate_config(raw) -> engine.SimConfig:
    """Parse a JSON config (text, path content, or dict) into a SimConfig.

    Every absent field takes its reference default; unknown keys and
    out-of-range values are rejected with the offending field path.
    """
    if isinstance(raw, str):
        try:
            raw = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from e
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    top_keys = ("subframes", "seed", "association_policy", "broadcast_period",
                "warmup_subframes", "mobility_enabled", "fading_enabled",
                "load_smoothing", "pf_time_constant", "pf_floor_bps",
                "record_tx", "backhaul_criterion", "pc", "flow", "link",
                "scenario", "backhaul_overrides")
    _reject_unknown(raw, top_keys, "")

    pc = _parse_pc(raw.get("pc") or {})

    flow_section = raw.get("flow") or {}
    _reject_unknown(flow_section, ("mean_flow_size_bits", "mean_wait_subframes"),
                    "flow.")
    try:
        flow = FlowModel(
            mean_flow_size_bits=_typed(flow_section, "mean_flow_size_bits",
                                       float, 1e6, "flow."),
            mean_wait_subframes=_typed(flow_section, "mean_wait_subframes",
                                       float, 100.0, "flow."),
        )
    except ValueError as e:
        raise ConfigError(f"flow: {e}") from e

    link_section = raw.get("link") or {}
    _reject_unknown(link_section, ("bandwidth_hz", "prb_count",
                                   "prb_bandwidth_hz", "noise_figure_db",
                                   "max_spectral_efficiency"), "link.")
    try:
        link = radio.LinkBudget(
            bandwidth_hz=_typed(link_section, "bandwidth_hz", float, 20e6, "link."),
            prb_count=_typed(link_section, "prb_count", int, 100, "link."),
            prb_bandwidth_hz=_typed(link_section, "prb_bandwidth_hz", float,
                                    180e3, "link."),
            noise_figure_db=_typed(link_section, "noise_figure_db", float,
                                   5.0, "link."),
            max_spectral_efficiency=_typed(link_section,
                                           "max_spectral_efficiency", float,
                                           6.0, "link."),
        )
    except ValueError as e:
        raise ConfigError(f"link: {e}") from e

    scenario = _parse_scenario(raw.get("scenario") or {})

    overrides_section = raw.get("backhaul_overrides") or {}
    _reject_unknown(overrides_section, ("macro", "small"), "backhaul_overrides.")
    overrides = tuple(
        (tier, _as_bps(overrides_section[tier], f"backhaul_overrides.{tier}"))
        for tier in ("macro", "small") if overrides_section.get(tier) is not None
    )

    try:
        return engine.SimConfig(
            subframes=_typed(raw, "subframes", int, 10_000, ""),
            seed=_typed(raw, "seed", int, 0, ""),
            association_policy=_typed(raw, "association_policy", str,
                                      "dude_load", ""),
            pc=pc,
            flow=flow,
            link=link,
            scenario=scenario,
            broadcast_period=_typed(raw, "broadcast_period", int, 50, ""),
            warmup_subframes=_typed(raw, "warmup_subframes", int, 1000, ""),
            backhaul_overrides=overrides,
            backhaul_criterion=_typed(raw, "backhaul_criterion", str, "total", ""),
            mobility_enabled=_typed(raw, "mobility_enabled", bool, True, ""),
            fading_enabled=_typed(raw, "fading_enabled", bool, False, ""),
            load_smoothing=_typed(raw, "load_smoothing", float, 0.01, ""),
            pf_time_constant=_typed(raw, "pf_time_constant", float, 100.0, ""),
            pf_floor_bps=_typed(raw, "pf_floor_bps", float, 1e3, ""),
            record_tx=_typed(raw, "record_tx", bool, True, ""),
        )
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from e


def config_to_dict(cfg: engine.SimConfig) -> dict:
    """Effective config as a JSON-serializable dict (echoed for provenance)."""
    def _num(x):
        return "inf" if isinstance(x, float) and math.isinf(x) else x

    return {
        "subframes": cfg.subframes,
        "seed": cfg.seed,
        "association_policy": cfg.association_policy,
        "broadcast_period": cfg.broadcast_period,
        "warmup_subframes": cfg.warmup_subframes,
        "mobility_enabled": cfg.mobility_enabled,
        "fading_enabled": cfg.fading_enabled,
        "load_smoothing": cfg.load_smoothing,
        "pf_time_constant": cfg.pf_time_constant,
        "pf_floor_bps": cfg.pf_floor_bps,
        "record_tx": cfg.record_tx,
        "backhaul_criterion": cfg.backhaul_criterion,
        "backhaul_overrides": {tier: _num(bps) for tier, bps in cfg.backhaul_overrides},
        "pc": {"regime": cfg.pc.regime, "alpha": cfg.pc.alpha,
               "p0_dbm": cfg.pc.p0_dbm, "p_max_dbm": cfg.pc.p_max_dbm,
               "i0_dbm": cfg.pc.i0_dbm},
        "flow": {"mean_flow_size_bits": cfg.flow.mean_flow_size_bits,
                 "mean_wait_subframes": cfg.flow.mean_wait_subframes},
        "link": {"bandwidth_hz": cfg.link.bandwidth_hz,
                 "prb_count": cfg.link.prb_count,
                 "prb_bandwidth_hz": cfg.link.prb_bandwidth_hz,
                 "noise_figure_db": cfg.link.noise_figure_db,
                 "max_spectral_efficiency": cfg.link.max_spectral_efficiency},
        "scenario": {k: _num(v) for k, v in vars(cfg.scenario).items()},
    }


# -- experiment execution ----------------------------------------------------

def _variants(spec: ExperimentSpec):
    """(variant label, policy, pc label, config) for every run variant."""
    base = spec.base
    ideal = (("macro", math.inf), ("small", math.inf))
    out = []
    if spec.name == "policy_comparison":
        for pc_name in ("setting1", "setting2"):
            for policy in engine.POLICIES:
                cfg = replace(base, association_policy=policy,
                              pc=radio.POWER_PRESETS[pc_name],
                              backhaul_overrides=ideal)
                out.append((f"{policy}+{pc_name}", policy, pc_name, None, cfg))
    elif spec.name == "power_control_comparison":
        for policy in engine.POLICIES:
            cfg = replace(base, association_policy=policy,
                          pc=radio.POWER_PRESETS["interference_aware"],
                          backhaul_overrides=ideal)
            out.append((f"{policy}+interference_aware", policy,
                        "interference_aware", None, cfg))
    else:  # backhaul_sweep
        for bk in spec.sweep_small_backhaul_bps:
            mbps = bk / 1e6
            for policy in engine.POLICIES:
                cfg = replace(base, association_policy=policy,
                              pc=radio.POWER_PRESETS["interference_aware"],
                              backhaul_overrides=(("macro", SWEEP_MACRO_BACKHAUL_BPS),
                                                  ("small", bk)))
                out.append((f"{policy}+bk{mbps:g}", policy,
                            "interference_aware", mbps, cfg))
    return out


def _run_one(args):
    variant, policy, pc_name, mbps, cfg, scenario_path = args
    if scenario_path is not None:
        scenario = load_scenario(scenario_path)
    else:
        scenario = generate_scenario(cfg.seed, cfg.scenario)
    log = engine.run(cfg, scenario)
    stats = metrics.summarize(log, label=variant)
    return {
        "experiment": None,  # filled by the caller
        "variant": variant,
        "policy": policy,
        "power_control": pc_name,
        "small_backhaul_mbps": mbps,
        "seed": cfg.seed,
        "throughput_p5_bps": stats.throughput_p5_bps,
        "throughput_p50_bps": stats.throughput_p50_bps,
        "throughput_p90_bps": stats.throughput_p90_bps,
        "sinr_variance_median_db2": stats.sinr_variance_median_db2,
        "ue_per_cell_variance": stats.ue_per_cell_variance,
        "completed_flows": stats.completed_flows,
        "included_ues": stats.included_ues,
        "excluded_ues": stats.excluded_ues,
    }


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(path: Path, header, rows, preamble: str) -> None:
    lines = [preamble, "\t".join(header)]
    lines += ["\t".join(_fmt(row[h]) for h in header) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def run_experiment(spec: ExperimentSpec, out_dir, workers: int = 1) -> dict:
    """Run every (variant, seed) of an experiment and write result files.

    Writes ``runs.tsv`` (one row per run), ``aggregates.tsv`` (min/median/max
    across seeds per variant) and ``summary.json``; every file carries the
    effective base config in its header.  Returns {name: path}.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    jobs = []
    for variant, policy, pc_name, mbps, cfg in _variants(spec):
        for seed in spec.seeds:
            jobs.append((variant, policy, pc_name, mbps,
                         replace(cfg, seed=seed), spec.scenario_path))

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one, jobs))
    else:
        rows = [_run_one(job) for job in jobs]
    for row in rows:
        row["experiment"] = spec.name
    rows.sort(key=lambda r: (r["variant"], r["seed"]))

    agg_rows = []
    variants = sorted({r["variant"] for r in rows})
    for variant in variants:
        seeds_rows = [r for r in rows if r["variant"] == variant]
        for metric_name in AGG_METRICS:
            values = sorted(r[metric_name] for r in seeds_rows)
            agg_rows.append({
                "experiment": spec.name,
                "variant": variant,
                "metric": metric_name,
                "min": values[0],
                "median": metrics.percentile(values, 50),
                "max": values[-1],
            })

    echo = json.dumps({"experiment": spec.name,
                       "seeds": list(spec.seeds),
                       "sweep_small_backhaul_bps":
                           [b for b in spec.sweep_small_backhaul_bps],
                       "scenario_path": spec.scenario_path,
                       "base_config": config_to_dict(spec.base)},
                      sort_keys=True)
    preamble = "# " + echo

    paths = {
        "runs": out_dir / "runs.tsv",
        "aggregates": out_dir / "aggregates.tsv",
        "summary": out_dir / "summary.json",
    }
    _write_rows(paths["runs"], RUNS_HEADER, rows, preamble)
    _write_rows(paths["aggregates"], AGG_HEADER, agg_rows, preamble)
    paths["summary"].write_text(json.dumps(
        {"experiment": spec.name, "runs": len(rows),
         "variants": variants, "spec": json.loads(echo)},
        sort_keys=True, indent=2) + "\n")
    return paths


# -- command-line entry points -----------------------------------------------

def _load_config_arg(path) -> engine.SimConfig:
    if path is None:
        return validate_config({})
    text = Path(path).read_text()
    return validate_config(text)


def _parse_seeds(arg) -> tuple:
    if arg is None:
        return DEFAULT_SEEDS
    try:
        seeds = tuple(int(s) for s in str(arg).split(",") if s != "")
    except ValueError as e:
        raise ConfigError(f"--seeds: {e}") from e
    if not seeds:
        raise ConfigError("--seeds: empty seed list")
    return seeds


def _cmd_generate_scenario(args) -> int:
    cfg = _load_config_arg(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    scenario = generate_scenario(seed, cfg.scenario)
    save_scenario(scenario, args.out)
    print(f"wrote {args.out}: {scenario.n_cells} cells, "
          f"{scenario.n_ues} UEs, seed {seed}")
    return 0


def _cmd_run(args) -> int:
    base = _load_config_arg(args.config)
    spec = ExperimentSpec(name=args.experiment, base=base,
                          seeds=_parse_seeds(args.seeds),
                          scenario_path=args.scenario)
    paths = run_experiment(spec, args.out, workers=args.workers)
    print(f"experiment {spec.name}: "
          f"{len(spec.seeds)} seed(s), results in {args.out}")
    for name in ("runs", "aggregates", "summary"):
        print(f"  {paths[name]}")
    return 0


def _cmd_sweep(args) -> int:
    base = _load_config_arg(args.config)
    sweep = tuple(float(v) * 1e6 for v in str(args.points).split(",")) \
        if args.points else tuple(m * 1e6 for m in DEFAULT_SWEEP_MBPS)
    spec = ExperimentSpec(name="backhaul_sweep", base=base,
                          seeds=_parse_seeds(args.seeds),
                          sweep_small_backhaul_bps=sweep,
                          scenario_path=args.scenario)
    paths = run_experiment(spec, args.out, workers=args.workers)
    print(f"backhaul sweep over {[b / 1e6 for b in sweep]} Mbps, "
          f"results in {args.out}")
    for name in ("runs", "aggregates", "summary"):
        print(f"  {paths[name]}")
    return 0


def _cmd_report(args) -> int:
    path = Path(args.out) / "aggregates.tsv"
    if not path.exists():
        print(f"no aggregates at {path}", file=sys.stderr)
        return 1
    lines = path.read_text().splitlines()
    rows = [line.split("\t") for line in lines if not line.startswith("#")]
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    for row in rows:
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dudesim",
        description="Uplink cell-association simulator for two-tier networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-scenario", help="write a scenario file")
    p.add_argument("--config", help="JSON config path (scenario section used)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output scenario path")
    p.set_defaults(fn=_cmd_generate_scenario)

    p = sub.add_parser("run", help="run an experiment family")
    p.add_argument("--config", help="JSON config path")
    p.add_argument("--experiment", choices=EXPERIMENTS,
                   default="policy_comparison")
    p.add_argument("--scenario", help="scenario file (default: generate per seed)")
    p.add_argument("--seeds", help="comma-separated seed list (default 0-4)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("sweep", help="run the small-cell backhaul sweep")
    p.add_argument("--config", help="JSON config path")
    p.add_argument("--scenario", help="scenario file (default: generate per seed)")
    p.add_argument("--seeds", help="comma-separated seed list (default 0-4)")
    p.add_argument("--points", help="comma-separated small-cell backhaul Mbps")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("report", help="print the aggregate table of a result dir")
    p.add_argument("--out", required=True, help="experiment output directory")
    p.set_defaults(fn=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ScenarioError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
