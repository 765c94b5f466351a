"""Exception types shared across the simulator."""


class ConfigError(ValueError):
    """A configuration value is missing, out of range, or unknown."""


class ScenarioError(ValueError):
    """Scenario parameters or a scenario file violate the schema."""


class StaleBroadcastError(RuntimeError):
    """A load-aware association ran without a fresh broadcast for every cell."""


class SchedulerError(RuntimeError):
    """The scheduler produced an inconsistent allocation (overlap, idle grant, M=0)."""


class SimulationError(RuntimeError):
    """Fatal inconsistency detected inside the subframe loop."""
