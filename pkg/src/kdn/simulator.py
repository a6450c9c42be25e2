"""Ground-truth data plane: offered-load composition and analytic delays.

Each directed link is an M/M/1 queue: mean sojourn prop + 1/(mu - lambda).
A packet entering at overlay node s toward d takes one of s's attachment
links (chosen by the split policy) and then the deterministic shortest path
from the attachment's far end to d; the per-pair delay is the ratio-weighted
average over the attachment choices.
"""

from dataclasses import dataclass

import numpy as np

from . import jsonio
from .config import DEFAULTS
from .errors import InstabilityError
from .netmodel import shortest_path


class PathEngine:
    """Routing structure of one topology, flattened for vectorized math.

    One column per (source, destination, attachment-choice) route. The binary
    membership matrix M (links x routes) turns route weights into link loads;
    its transpose turns per-link sojourn times into route delays.
    """

    def __init__(self, topo):
        self.topo = topo
        self.n_links = len(topo.links)
        self.n_pairs = len(topo.pairs)
        self.mu = np.array([l.capacity_pps for l in topo.links])
        self.prop = np.array([l.prop_delay_s for l in topo.links])

        # ratio slots follow dataset column order: nodes sorted, then
        # attachments in dst order
        self.ratio_nodes = []
        slot = {}
        for node in topo.overlay_nodes:
            for k, link in enumerate(topo.attachments[node]):
                slot[(node, k)] = len(self.ratio_nodes)
                self.ratio_nodes.append((node, k, link))
        self.n_ratio_slots = len(self.ratio_nodes)

        pair_idx = {p: i for i, p in enumerate(topo.pairs)}
        routes = []
        col_pair, col_slot = [], []
        for (s, d) in topo.pairs:
            for k, attach in enumerate(topo.attachments[s]):
                tail = shortest_path(topo, attach.dst, d)
                routes.append([topo.link_index[attach.link_id]]
                              + [topo.link_index[l.link_id] for l in tail])
                col_pair.append(pair_idx[(s, d)])
                col_slot.append(slot[(s, k)])
        self.routes = routes
        self.col_pair = np.array(col_pair, dtype=np.int64)
        self.col_slot = np.array(col_slot, dtype=np.int64)
        self.membership = np.zeros((self.n_links, len(routes)))
        for c, route in enumerate(routes):
            for li in route:
                self.membership[li, c] = 1.0

    @classmethod
    def for_topology(cls, topo):
        engine = topo.__dict__.get("_path_engine")
        if engine is None:
            engine = cls(topo)
            topo.__dict__["_path_engine"] = engine
        return engine

    def weights(self, tm, pol):
        """Per-route offered load: demand(s,d) * ratio of the chosen attachment."""
        demand = tm.values(self.topo.pairs)
        ratio = np.concatenate(
            [pol.vector(n) for n in self.topo.overlay_nodes]
        )
        return demand[self.col_pair] * ratio[self.col_slot], ratio

    def link_lambdas(self, tm, pol):
        w, _ = self.weights(tm, pol)
        return self.membership @ w

    def pair_delays(self, tm, pol, sojourn):
        """Ratio-weighted route delays folded back onto ordered pairs."""
        _, ratio = self.weights(tm, pol)
        route_delay = self.membership.T @ sojourn
        out = np.zeros(self.n_pairs)
        np.add.at(out, self.col_pair, ratio[self.col_slot] * route_delay)
        return out


@dataclass
class PathDelayVector:
    """Average end-to-end delay in seconds for every ordered overlay pair."""

    pairs: tuple
    delay_s: np.ndarray

    def __getitem__(self, pair):
        return float(self.delay_s[self.pairs.index(pair)])

    def as_dict(self):
        return {p: float(v) for p, v in zip(self.pairs, self.delay_s)}

    def mean(self):
        return float(np.mean(self.delay_s))

    def max(self):
        return float(np.max(self.delay_s))

    def to_doc(self):
        return {
            "schema_version": jsonio.SCHEMA_VERSION,
            "kind": "path_delays",
            "delay_s": {f"{s}->{d}": float(v) for (s, d), v in zip(self.pairs, self.delay_s)},
        }


@dataclass
class LinkLoadReport:
    """Offered load and utilization for every directed link."""

    link_ids: tuple
    offered_pps: np.ndarray
    utilization: np.ndarray

    def rho(self, link_id):
        return float(self.utilization[self.link_ids.index(link_id)])

    def offered(self, link_id):
        return float(self.offered_pps[self.link_ids.index(link_id)])

    def as_dict(self):
        return {
            lid: {"offered_pps": float(l), "rho": float(r)}
            for lid, l, r in zip(self.link_ids, self.offered_pps, self.utilization)
        }


def _check_inputs(topo, tm, pol):
    tm.check_against(topo)
    pol.check_against(topo)


def link_loads(topo, tm, pol):
    """Compose per-link offered load from demand, split ratios and routing."""
    _check_inputs(topo, tm, pol)
    eng = PathEngine.for_topology(topo)
    lam = eng.link_lambdas(tm, pol)
    return LinkLoadReport(
        link_ids=tuple(l.link_id for l in topo.links),
        offered_pps=lam,
        utilization=lam / eng.mu,
    )


def check_stability(topo, tm, pol, rho_max=DEFAULTS.rho_max):
    """Raise InstabilityError listing links at/above the margin."""
    report = link_loads(topo, tm, pol)
    bad = [
        (lid, float(r))
        for lid, r in zip(report.link_ids, report.utilization)
        if r >= rho_max
    ]
    if bad:
        raise InstabilityError(bad, rho_max)
    return report


def link_sojourn(mu, lam, prop):
    """M/M/1 mean time through one link: waiting + service + propagation."""
    return prop + 1.0 / (mu - lam)


def simulate_analytic(topo, tm, pol, rho_max=DEFAULTS.rho_max):
    """Deterministic per-pair average delays under the M/M/1 link law."""
    report = check_stability(topo, tm, pol, rho_max)
    eng = PathEngine.for_topology(topo)
    sojourn = link_sojourn(eng.mu, report.offered_pps, eng.prop)
    return PathDelayVector(pairs=topo.pairs, delay_s=eng.pair_delays(tm, pol, sojourn))
