"""Recorded defaults for every knob the underlying problem leaves open.

The overlay scenario fixes only the node/link counts; capacities, propagation
delays and demand levels are generator decisions, so they live here where both
the library and the CLI read (and serialize) them.
"""

from dataclasses import dataclass, asdict


@dataclass(frozen=True)
class Defaults:
    # topology shape: 12 overlay edge nodes, 19 underlay nodes, 72 links
    n_overlay: int = 12
    n_underlay: int = 19
    n_links: int = 72
    # seed of the canonical testbed instance used by repro commands
    topo_seed: int = 7
    capacity_range: tuple[float, float] = (1000.0, 2000.0)   # pps
    prop_range: tuple[float, float] = (0.001, 0.005)         # seconds

    # traffic demand per ordered overlay pair, pps
    demand_range: tuple[float, float] = (15.0, 60.0)

    # queueing stability margin: reject samples with any rho >= rho_max
    rho_max: float = 0.95

    # discrete-event backend
    des_horizon_packets: int = 1_000_000
    des_warmup_fraction: float = 0.2

    # optimizer
    opt_budget: int = 2000
    opt_restarts: int = 8

    def as_dict(self):
        return asdict(self)


DEFAULTS = Defaults()
