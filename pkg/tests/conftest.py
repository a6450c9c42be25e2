import numpy as np
import pytest

from kdn import netmodel
from kdn.config import DEFAULTS
from kdn.netmodel import Topology, TrafficMatrix, SplitPolicy, duplex


@pytest.fixture(scope="session")
def default_topo():
    """The canonical 12/19/72 instance used across suites."""
    return netmodel.gen_topology(DEFAULTS.topo_seed)


@pytest.fixture()
def chain_topo():
    """A - u01 - B, single attachments: the smallest usable layout."""
    links = (duplex("A", "u01", 1000.0, 0.001)
             + duplex("B", "u01", 1000.0, 0.001))
    return Topology(["A", "B"], ["u01"], links)


@pytest.fixture()
def split_toy():
    """Two overlay nodes; A splits between tails of unequal capacity.

    Returns (topo, tm): mean delay has an interior optimum in A's ratio.
    """
    links = (duplex("A", "u01", 2000.0, 0.001)
             + duplex("A", "u02", 2000.0, 0.001)
             + duplex("B", "u03", 2000.0, 0.001)
             + duplex("u01", "u03", 1000.0, 0.001)
             + duplex("u02", "u03", 1400.0, 0.002))
    topo = Topology(["A", "B"], ["u01", "u02", "u03"], links)
    tm = TrafficMatrix({("A", "B"): 900.0, ("B", "A"): 50.0})
    return topo, tm


def uniform_policy(topo):
    return SplitPolicy({
        n: {l.dst: 1.0 / len(topo.attachments[n]) for l in topo.attachments[n]}
        for n in topo.overlay_nodes
    })


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
