import numpy as np
import pytest

from kdn import netmodel
from kdn.errors import (
    InconsistencyError,
    InfeasibleParametersError,
    InvalidPolicyError,
    UnreachableError,
)
from kdn.netmodel import (
    Link,
    SplitPolicy,
    Topology,
    TrafficMatrix,
    duplex,
    gen_policy,
    gen_topology,
    gen_traffic,
    path_delay,
    shortest_path,
)


class TestTopology:
    def test_default_shape(self, default_topo):
        t = default_topo
        assert len(t.overlay_nodes) == 12
        assert len(t.underlay_nodes) == 19
        # 72 bidirectional connections stored as directed pairs
        assert len(t.links) == 144
        assert len(t.pairs) == 12 * 11

    def test_every_overlay_attached(self, default_topo):
        for n in default_topo.overlay_nodes:
            assert len(default_topo.attachments[n]) >= 1

    def test_reverse_links_present(self, default_topo):
        ids = {(l.src, l.dst) for l in default_topo.links}
        assert all((d, s) in ids for s, d in ids)

    def test_no_overlay_overlay_links(self, default_topo):
        ov = set(default_topo.overlay_nodes)
        for l in default_topo.links:
            assert not (l.src in ov and l.dst in ov)

    def test_connected_enforced(self):
        links = (duplex("A", "u01", 1000, 0.001) + duplex("B", "u02", 1000, 0.001))
        with pytest.raises(InconsistencyError):
            Topology(["A", "B"], ["u01", "u02"], links)

    def test_unattached_overlay_rejected(self):
        links = duplex("A", "u01", 1000, 0.001)
        with pytest.raises(InconsistencyError):
            Topology(["A", "B"], ["u01"], links)

    def test_duplicate_directed_link_rejected(self):
        links = (duplex("A", "u01", 1000, 0.001) + duplex("B", "u01", 1000, 0.001)
                 + [Link("A", "u01", 500, 0.002)])
        with pytest.raises(InconsistencyError):
            Topology(["A", "B"], ["u01"], links)

    def test_bad_capacity_rejected(self):
        links = (duplex("A", "u01", 0.0, 0.001) + duplex("B", "u01", 1000, 0.001))
        with pytest.raises(InconsistencyError):
            Topology(["A", "B"], ["u01"], links)

    def test_roundtrip(self, default_topo, tmp_path):
        p = tmp_path / "t.topo.json"
        default_topo.save(p)
        again = Topology.load(p)
        assert again.links == default_topo.links
        assert again.overlay_nodes == default_topo.overlay_nodes
        assert again.digest() == default_topo.digest()


class TestGenTopology:
    def test_deterministic(self, tmp_path):
        a, b = gen_topology(1), gen_topology(1)
        pa, pb = tmp_path / "a.json", tmp_path / "b.json"
        a.save(pa)
        b.save(pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_seeds_differ(self):
        assert gen_topology(1).digest() != gen_topology(2).digest()

    def test_minimal_chain(self):
        # 2 connections force the unique layout A - u01 - B
        t = gen_topology(3, n_overlay=2, n_underlay=1, n_links=2)
        assert t.overlay_nodes == ("A", "B")
        assert t.underlay_nodes == ("u01",)
        assert len(t.links) == 4
        assert len(t.attachments["A"]) == 1
        assert len(t.attachments["B"]) == 1

    def test_infeasible_budget(self):
        with pytest.raises(InfeasibleParametersError):
            gen_topology(0, n_overlay=5, n_underlay=4, n_links=6)

    def test_link_count_honored(self):
        for seed in range(5):
            t = gen_topology(seed, n_overlay=4, n_underlay=6, n_links=16)
            assert len(t.links) == 32

    def test_parameter_ranges(self):
        t = gen_topology(4, capacity_range=(500, 600), prop_range=(0.01, 0.02))
        for l in t.links:
            assert 500 <= l.capacity_pps <= 600
            assert 0.01 <= l.prop_delay_s <= 0.02


class TestShortestPath:
    def test_self_is_empty(self, default_topo):
        n = default_topo.nodes[0]
        assert shortest_path(default_topo, n, n) == []

    def test_two_hop_beats_direct(self):
        # 1ms + 1ms via v beats the 3ms direct link
        links = (duplex("A", "u01", 1000, 0.003) + duplex("B", "u01", 1000, 0.001)
                 + duplex("A", "u02", 1000, 0.001) + duplex("u01", "u02", 1000, 0.001))
        t = Topology(["A", "B"], ["u01", "u02"], links)
        path = shortest_path(t, "A", "B")
        assert [l.link_id for l in path] == ["A_u02", "u02_u01", "u01_B"]

    def test_lexicographic_tie_break(self):
        # two equal-cost routes; the node sequence through u01 sorts first
        links = (duplex("A", "u01", 1000, 1.0) + duplex("A", "u02", 1000, 1.0)
                 + duplex("B", "u01", 1000, 1.0) + duplex("B", "u02", 1000, 1.0))
        t = Topology(["A", "B"], ["u01", "u02"], links)
        path = shortest_path(t, "A", "B")
        assert [l.link_id for l in path] == ["A_u01", "u01_B"]

    def test_path_is_contiguous(self, default_topo):
        for s, d in default_topo.pairs[:20]:
            path = shortest_path(default_topo, s, d)
            assert path[0].src == s and path[-1].dst == d
            for a, b in zip(path, path[1:]):
                assert a.dst == b.src

    def test_path_beats_random_walks(self, default_topo, rng):
        # no sampled simple path is shorter than the claimed optimum
        s, d = default_topo.pairs[0]
        best = path_delay(shortest_path(default_topo, s, d))
        for _ in range(200):
            node, seen, cost = s, {s}, 0.0
            while node != d:
                nbrs = [(v, l) for v, l in default_topo.adjacency(node) if v not in seen]
                if not nbrs:
                    break
                v, l = nbrs[rng.integers(len(nbrs))]
                seen.add(v)
                cost += l.prop_delay_s
                node = v
            if node == d:
                assert cost >= best - 1e-12

    def test_reverse_symmetry(self, default_topo):
        # symmetric metric: the reverse path is the path reversed
        for s, d in default_topo.pairs[:10]:
            fwd = shortest_path(default_topo, s, d)
            rev = shortest_path(default_topo, d, s)
            # same node sequence backwards, unless an equal-cost tie broke
            # differently; delays must match regardless
            assert path_delay(fwd) == pytest.approx(path_delay(rev))

    def test_unknown_node(self, default_topo):
        with pytest.raises(UnreachableError):
            shortest_path(default_topo, "A", "nope")


class TestTrafficMatrix:
    def test_gen_respects_range(self, default_topo):
        tm = gen_traffic(0, default_topo, (5.0, 6.0))
        vals = tm.values()
        assert vals.min() >= 5.0 and vals.max() <= 6.0
        assert len(vals) == len(default_topo.pairs)

    def test_gen_deterministic(self, default_topo):
        assert gen_traffic(9, default_topo).demand == gen_traffic(9, default_topo).demand

    def test_zero_range(self, default_topo):
        tm = gen_traffic(0, default_topo, (0.0, 0.0))
        assert tm.values().sum() == 0.0

    def test_bad_range(self, default_topo):
        with pytest.raises(InconsistencyError):
            gen_traffic(0, default_topo, (5.0, 2.0))

    def test_negative_demand_rejected(self):
        with pytest.raises(InconsistencyError):
            TrafficMatrix({("A", "B"): -1.0})

    def test_self_pair_rejected(self):
        with pytest.raises(InconsistencyError):
            TrafficMatrix({("A", "A"): 1.0})

    def test_roundtrip(self, default_topo, tmp_path):
        tm = gen_traffic(3, default_topo)
        p = tmp_path / "t.tm.json"
        tm.save(p)
        assert TrafficMatrix.load(p).demand == tm.demand


class TestSplitPolicy:
    def test_gen_simplex(self, default_topo):
        pol = gen_policy(0, default_topo)
        for n in default_topo.overlay_nodes:
            vec = pol.vector(n)
            assert np.all(vec >= 0)
            assert vec.sum() == pytest.approx(1.0, abs=1e-9)
            assert len(vec) == len(default_topo.attachments[n])

    def test_two_link_split_is_uniform_on_average(self):
        # Dirichlet(1,1) marginal: mean share 1/2
        links = (duplex("A", "u01", 1000, 0.001) + duplex("A", "u02", 1000, 0.001)
                 + duplex("B", "u01", 1000, 0.001) + duplex("u01", "u02", 1000, 0.001))
        t = Topology(["A", "B"], ["u01", "u02"], links)
        shares = [gen_policy(s, t).vector("A")[0] for s in range(4000)]
        assert np.mean(shares) == pytest.approx(0.5, abs=0.02)

    def test_simplex_enforced(self):
        with pytest.raises(InvalidPolicyError):
            SplitPolicy({"A": {"u01": 0.5, "u02": 0.4}})
        with pytest.raises(InvalidPolicyError):
            SplitPolicy({"A": {"u01": 1.2, "u02": -0.2}})

    def test_replace_keeps_other_nodes(self, default_topo):
        pol = gen_policy(1, default_topo)
        node = next(n for n in default_topo.overlay_nodes
                    if len(default_topo.attachments[n]) > 1)
        k = len(pol.vector(node))
        new = pol.replace(node, np.full(k, 1.0 / k))
        assert np.allclose(new.vector(node), 1.0 / k)
        for other in default_topo.overlay_nodes:
            if other != node:
                assert np.array_equal(new.vector(other), pol.vector(other))

    def test_check_against_wrong_topology(self, default_topo, chain_topo):
        pol = gen_policy(0, default_topo)
        with pytest.raises(InvalidPolicyError):
            pol.check_against(chain_topo)

    def test_roundtrip(self, default_topo, tmp_path):
        pol = gen_policy(5, default_topo)
        p = tmp_path / "p.pol.json"
        pol.save(p)
        assert SplitPolicy.load(p).ratios == pol.ratios


def test_generator_invariants_over_many_seeds(default_topo):
    # ranges and simplex structure hold across a wide seed sweep
    lo, hi = 15.0, 60.0
    for seed in range(1000):
        tm = netmodel.gen_traffic(seed, default_topo, (lo, hi))
        v = tm.values()
        assert v.min() >= lo and v.max() <= hi
        pol = netmodel.gen_policy(seed, default_topo)
        flat = pol.flat()
        assert np.all(flat >= 0)
        for n in default_topo.overlay_nodes:
            assert abs(pol.vector(n).sum() - 1.0) <= 1e-9
