"""Domain types for the overlay/underlay scenario plus seeded generators.

A Topology is an undirected-symmetric graph stored as directed links (each
physical connection contributes one link per direction, and the two directions
carry independent queueing state). Overlay edge nodes sit at the border and
attach to the underlay with a handful of links; all transit happens inside the
underlay, which is hidden from whoever only observes overlay traffic.

Counting convention: ``n_links`` counts physical (bidirectional) connections,
i.e. the number of direction pairs; the stored directed-link list has twice
that many entries.
"""

import heapq
from dataclasses import dataclass

import numpy as np

from . import jsonio
from .config import DEFAULTS
from .errors import (
    InconsistencyError,
    InfeasibleParametersError,
    InvalidPolicyError,
    SchemaError,
    UnreachableError,
)

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class Link:
    """One directed link: served at `capacity_pps`, then `prop_delay_s` of flight."""

    src: str
    dst: str
    capacity_pps: float
    prop_delay_s: float

    @property
    def link_id(self):
        return f"{self.src}_{self.dst}"


def duplex(a, b, capacity_pps, prop_delay_s):
    """Both directions of a symmetric connection, as a two-link list."""
    return [
        Link(a, b, capacity_pps, prop_delay_s),
        Link(b, a, capacity_pps, prop_delay_s),
    ]


def overlay_name(i, n_overlay):
    if n_overlay <= 26:
        return chr(ord("A") + i)
    return f"o{i + 1:03d}"


def underlay_name(i):
    return f"u{i + 1:02d}"


class Topology:
    """Immutable-by-convention graph with derived routing structure.

    Invariants checked at construction: connected, every overlay node has at
    least one attachment to an underlay node, capacities positive, propagation
    delays non-negative, (src, dst) unique, and every directed link has its
    reverse (symmetric connections).
    """

    def __init__(self, overlay_nodes, underlay_nodes, links):
        self.overlay_nodes = tuple(sorted(overlay_nodes))
        self.underlay_nodes = tuple(sorted(underlay_nodes))
        if set(self.overlay_nodes) & set(self.underlay_nodes):
            raise InconsistencyError("node id used in both roles")
        self.nodes = tuple(sorted(self.overlay_nodes + self.underlay_nodes))
        self.links = tuple(sorted(links, key=lambda l: (l.src, l.dst)))
        self._validate()

        self._adj = {n: [] for n in self.nodes}
        self._by_id = {}
        for link in self.links:
            self._adj[link.src].append((link.dst, link))
            self._by_id[link.link_id] = link
        for n in self._adj:
            self._adj[n].sort(key=lambda pair: pair[0])

        # attachment links of an overlay node, in canonical (dst-sorted) order
        self.attachments = {
            n: tuple(l for _, l in self._adj[n]) for n in self.overlay_nodes
        }
        self.pairs = tuple(
            (s, d) for s in self.overlay_nodes for d in self.overlay_nodes if s != d
        )
        self.link_index = {l.link_id: i for i, l in enumerate(self.links)}

    def _validate(self):
        node_set = set(self.nodes)
        seen = set()
        directed = set()
        for l in self.links:
            if l.src not in node_set or l.dst not in node_set:
                raise InconsistencyError(f"link {l.link_id} references unknown node")
            if l.src == l.dst:
                raise InconsistencyError(f"self-loop {l.link_id}")
            if (l.src, l.dst) in seen:
                raise InconsistencyError(f"duplicate link {l.link_id}")
            seen.add((l.src, l.dst))
            directed.add((l.src, l.dst))
            if not (l.capacity_pps > 0):
                raise InconsistencyError(f"link {l.link_id}: capacity must be > 0")
            if l.prop_delay_s < 0:
                raise InconsistencyError(f"link {l.link_id}: negative delay")
        for s, d in directed:
            if (d, s) not in directed:
                raise InconsistencyError(f"link {s}_{d} has no reverse direction")
        for n in self.overlay_nodes:
            forbidden = [d for s, d in directed if s == n and d in self.overlay_nodes]
            if forbidden:
                raise InconsistencyError(f"overlay-overlay link {n}_{forbidden[0]}")
            if not any(s == n for s, _ in directed):
                raise InconsistencyError(f"overlay node {n} has no attachment link")
        self._check_connected(directed)

    def _check_connected(self, directed):
        if not self.nodes:
            raise InconsistencyError("empty topology")
        nbrs = {n: set() for n in self.nodes}
        for s, d in directed:
            nbrs[s].add(d)
        stack, seen = [self.nodes[0]], {self.nodes[0]}
        while stack:
            for m in nbrs[stack.pop()]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        if seen != set(self.nodes):
            raise InconsistencyError("graph is not connected")

    # -- accessors ---------------------------------------------------------

    def adjacency(self, node):
        return self._adj[node]

    def link(self, link_id):
        return self._by_id[link_id]

    def has_link(self, link_id):
        return link_id in self._by_id

    @property
    def n_connections(self):
        return len(self.links) // 2

    def role(self, node):
        return "overlay" if node in set(self.overlay_nodes) else "underlay"

    # -- serialization -----------------------------------------------------

    def to_doc(self):
        return {
            "schema_version": jsonio.SCHEMA_VERSION,
            "kind": "topology",
            "nodes": [
                {"id": n, "role": self.role(n)} for n in self.nodes
            ],
            "links": [
                {
                    "src": l.src,
                    "dst": l.dst,
                    "capacity_pps": l.capacity_pps,
                    "prop_delay_s": l.prop_delay_s,
                }
                for l in self.links
            ],
        }

    @classmethod
    def from_doc(cls, doc, path="<doc>"):
        jsonio.check_schema_version(doc, path, kind="topology")
        try:
            overlay = [n["id"] for n in doc["nodes"] if n["role"] == "overlay"]
            underlay = [n["id"] for n in doc["nodes"] if n["role"] == "underlay"]
            links = [
                Link(l["src"], l["dst"], float(l["capacity_pps"]), float(l["prop_delay_s"]))
                for l in doc["links"]
            ]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"{path}: malformed topology: {exc}") from exc
        return cls(overlay, underlay, links)

    def save(self, path):
        jsonio.dump_file(path, self.to_doc())

    @classmethod
    def load(cls, path):
        return cls.from_doc(jsonio.load_file(path), path)

    def digest(self):
        return jsonio.digest(self.to_doc())


class TrafficMatrix:
    """Demand in packets/second for every ordered overlay pair."""

    def __init__(self, demand_pps):
        self.demand = {}
        for (s, d), v in demand_pps.items():
            if s == d:
                raise InconsistencyError(f"self-pair ({s},{d}) in traffic matrix")
            v = float(v)
            if not np.isfinite(v) or v < 0:
                raise InconsistencyError(f"demand for ({s},{d}) must be finite and >= 0")
            self.demand[(s, d)] = v
        self.pairs = tuple(sorted(self.demand))

    def __getitem__(self, pair):
        return self.demand[pair]

    def values(self, pairs=None):
        pairs = self.pairs if pairs is None else pairs
        return np.array([self.demand[p] for p in pairs], dtype=float)

    def total_from(self, node):
        return sum(v for (s, _), v in self.demand.items() if s == node)

    def to_doc(self):
        return {
            "schema_version": jsonio.SCHEMA_VERSION,
            "kind": "traffic_matrix",
            "demand_pps": {f"{s}->{d}": self.demand[(s, d)] for s, d in self.pairs},
        }

    @classmethod
    def from_doc(cls, doc, path="<doc>"):
        jsonio.check_schema_version(doc, path, kind="traffic_matrix")
        demand = {}
        for key, v in doc["demand_pps"].items():
            s, _, d = key.partition("->")
            if not d:
                raise SchemaError(f"{path}: bad pair key {key!r}")
            demand[(s, d)] = v
        return cls(demand)

    def save(self, path):
        jsonio.dump_file(path, self.to_doc())

    @classmethod
    def load(cls, path):
        return cls.from_doc(jsonio.load_file(path), path)

    def check_against(self, topo):
        if set(self.pairs) != set(topo.pairs):
            raise InconsistencyError("traffic matrix pairs do not match topology")


class SplitPolicy:
    """Per overlay node: destination-independent split ratios over its attachments.

    Ratios are keyed by the far-end underlay node and kept in dst-sorted order,
    which is also the attachment order used by Topology, datasets and features.
    """

    def __init__(self, ratios):
        self.ratios = {}
        for node, per_link in ratios.items():
            items = tuple(sorted((str(dst), float(r)) for dst, r in dict(per_link).items()))
            vec = np.array([r for _, r in items], dtype=float)
            if len(vec) == 0:
                raise InvalidPolicyError(f"{node}: empty ratio vector")
            if np.any(vec < 0) or np.any(vec > 1):
                raise InvalidPolicyError(f"{node}: ratios must lie in [0,1]")
            if abs(vec.sum() - 1.0) > SIMPLEX_TOL:
                raise InvalidPolicyError(
                    f"{node}: ratios sum to {vec.sum():.12f}, expected 1"
                )
            self.ratios[node] = dict(items)
        self.nodes = tuple(sorted(self.ratios))

    def vector(self, node):
        return np.array(list(self.ratios[node].values()), dtype=float)

    def flat(self, nodes=None):
        """Concatenated ratio vector over (sorted) nodes; dataset column order."""
        nodes = self.nodes if nodes is None else nodes
        return np.concatenate([self.vector(n) for n in nodes])

    def replace(self, node, vec):
        """New policy with one node's ratio vector swapped (attachment order)."""
        ratios = {n: dict(v) for n, v in self.ratios.items()}
        ratios[node] = dict(zip(self.ratios[node].keys(), (float(x) for x in vec)))
        return SplitPolicy(ratios)

    def to_doc(self):
        return {
            "schema_version": jsonio.SCHEMA_VERSION,
            "kind": "split_policy",
            "ratios": {n: self.ratios[n] for n in self.nodes},
        }

    @classmethod
    def from_doc(cls, doc, path="<doc>"):
        jsonio.check_schema_version(doc, path, kind="split_policy")
        return cls(doc["ratios"])

    def save(self, path):
        jsonio.dump_file(path, self.to_doc())

    @classmethod
    def load(cls, path):
        return cls.from_doc(jsonio.load_file(path), path)

    def check_against(self, topo):
        if set(self.nodes) != set(topo.overlay_nodes):
            raise InvalidPolicyError("policy nodes do not match overlay nodes")
        for node in self.nodes:
            want = tuple(l.dst for l in topo.attachments[node])
            got = tuple(self.ratios[node].keys())
            if want != got:
                raise InvalidPolicyError(
                    f"{node}: policy links {got} do not match attachments {want}"
                )


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def gen_topology(
    seed,
    n_overlay=DEFAULTS.n_overlay,
    n_underlay=DEFAULTS.n_underlay,
    n_links=DEFAULTS.n_links,
    capacity_range=DEFAULTS.capacity_range,
    prop_range=DEFAULTS.prop_range,
):
    """Random connected topology: underlay spanning tree, overlay attachments
    (2-3 each when the budget allows), remaining budget as extra underlay links.

    `n_links` counts bidirectional connections. Deterministic per seed; raises
    InfeasibleParametersError when the requested shape cannot exist.
    """
    if n_overlay < 1 or n_underlay < 1:
        raise InfeasibleParametersError("need at least one node of each role")
    if capacity_range[0] <= 0 or capacity_range[0] > capacity_range[1]:
        raise InfeasibleParametersError("capacity_range must be positive and ordered")
    if prop_range[0] < 0 or prop_range[0] > prop_range[1]:
        raise InfeasibleParametersError("prop_range must be non-negative and ordered")

    rng = np.random.default_rng(seed)
    overlay = [overlay_name(i, n_overlay) for i in range(n_overlay)]
    underlay = [underlay_name(i) for i in range(n_underlay)]

    tree_edges = n_underlay - 1
    min_links = tree_edges + n_overlay  # one attachment each
    if n_links < min_links:
        raise InfeasibleParametersError(
            f"n_links={n_links} < minimum {min_links} for this shape"
        )

    connections = []

    # random underlay spanning tree
    perm = rng.permutation(n_underlay)
    for i in range(1, n_underlay):
        j = int(rng.integers(0, i))
        connections.append((underlay[perm[i]], underlay[perm[j]]))

    # attachment counts: aim for 2-3 per overlay node, capped by the number of
    # distinct underlay nodes and trimmed round-robin to fit the budget
    counts = rng.integers(2, 4, size=n_overlay)
    counts = np.minimum(counts, n_underlay)
    budget = n_links - tree_edges
    i = 0
    while counts.sum() > budget:
        if counts[i % n_overlay] > 1:
            counts[i % n_overlay] -= 1
        i += 1
    for i, node in enumerate(overlay):
        targets = rng.choice(n_underlay, size=int(counts[i]), replace=False)
        for t in sorted(int(x) for x in targets):
            connections.append((node, underlay[t]))

    # spend the rest on extra underlay-underlay connections
    extra = n_links - len(connections)
    existing = {frozenset(c) for c in connections}
    candidates = [
        (underlay[a], underlay[b])
        for a in range(n_underlay)
        for b in range(a + 1, n_underlay)
        if frozenset((underlay[a], underlay[b])) not in existing
    ]
    if extra > len(candidates):
        raise InfeasibleParametersError(
            f"n_links={n_links} exceeds the densest graph for this shape"
        )
    if extra:
        picks = rng.choice(len(candidates), size=extra, replace=False)
        connections.extend(candidates[int(k)] for k in sorted(int(x) for x in picks))

    links = []
    for a, b in connections:
        cap = float(rng.uniform(*capacity_range))
        prop = float(rng.uniform(*prop_range))
        links.append(Link(a, b, cap, prop))
        links.append(Link(b, a, cap, prop))
    return Topology(overlay, underlay, links)


def shortest_path(topo, src, dst):
    """Links of the minimum-propagation-delay path from src to dst.

    Ties are broken by the lexicographically smallest node-id sequence, so the
    result is deterministic. A node to itself is the empty path.
    """
    if src not in topo._adj or dst not in topo._adj:
        raise UnreachableError(f"unknown node in ({src}, {dst})")
    if src == dst:
        return []
    heap = [(0.0, (src,), src)]
    done = set()
    while heap:
        dist, seq, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == dst:
            return [topo.link(f"{a}_{b}") for a, b in zip(seq, seq[1:])]
        for v, link in topo.adjacency(u):
            if v not in done:
                heapq.heappush(heap, (dist + link.prop_delay_s, seq + (v,), v))
    raise UnreachableError(f"no path from {src} to {dst}")


def path_delay(path):
    return sum(l.prop_delay_s for l in path)


def gen_traffic(seed, topo, demand_range=DEFAULTS.demand_range):
    """Independent uniform demand per ordered overlay pair; seeded."""
    rng = np.random.default_rng(seed)
    return gen_traffic_rng(rng, topo, demand_range)


def gen_traffic_rng(rng, topo, demand_range=DEFAULTS.demand_range):
    lo, hi = demand_range
    if lo < 0 or lo > hi:
        raise InconsistencyError("demand_range must be within [0, inf) and ordered")
    draws = rng.uniform(lo, hi, size=len(topo.pairs))
    return TrafficMatrix({p: float(v) for p, v in zip(topo.pairs, draws)})


def gen_policy(seed, topo):
    """Split ratios drawn uniformly on each node's simplex; seeded."""
    rng = np.random.default_rng(seed)
    return gen_policy_rng(rng, topo)


def gen_policy_rng(rng, topo):
    # normalized exponential draws = flat Dirichlet
    ratios = {}
    for node in topo.overlay_nodes:
        attach = topo.attachments[node]
        raw = rng.exponential(1.0, size=len(attach))
        vec = raw / raw.sum()
        ratios[node] = {l.dst: float(r) for l, r in zip(attach, vec)}
    return SplitPolicy(ratios)
