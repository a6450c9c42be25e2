"""Observation record and dataset materialization.

The store is an append-only JSONL file: a header line binding it to one
topology digest, then one observation per line. Lines are self-describing
(pair and node ids are spelled out), so a store can be turned into a training
matrix without the topology object at hand.
"""

import datetime
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import jsonio
from .config import DEFAULTS
from .errors import (
    EmptyStoreError,
    InconsistencyError,
    InsufficientRowsError,
    ResampleBudgetError,
    SchemaError,
)
from .netmodel import SplitPolicy, TrafficMatrix, gen_policy_rng, gen_traffic_rng
from .simulator import PathDelayVector, simulate_analytic

MAX_ATTEMPTS_PER_SAMPLE = 1000


def _pair_key(pair):
    return f"{pair[0]}->{pair[1]}"


def _parse_pair(key):
    s, d = key.split("->")
    return (s, d)


@dataclass
class TelemetrySample:
    sample_id: int
    tm: TrafficMatrix
    pol: SplitPolicy
    delays: PathDelayVector
    backend: str
    seed: int
    created_at: str
    extra: dict = field(default_factory=dict)

    def to_doc(self):
        doc = {
            "kind": "sample",
            "sample_id": self.sample_id,
            "backend": self.backend,
            "seed": self.seed,
            "created_at": self.created_at,
            "tm": {_pair_key(p): v for p, v in sorted(self.tm.demand.items())},
            "pol": {n: self.pol.ratios[n] for n in self.pol.nodes},
            "delays": dict(
                zip((_pair_key(p) for p in self.delays.pairs),
                    (float(v) for v in self.delays.delay_s))
            ),
        }
        if self.extra:
            doc["extra"] = self.extra
        return doc

    @classmethod
    def from_doc(cls, doc):
        pairs = tuple(sorted(_parse_pair(k) for k in doc["delays"]))
        delay_s = np.array([doc["delays"][_pair_key(p)] for p in pairs])
        return cls(
            sample_id=int(doc["sample_id"]),
            tm=TrafficMatrix({_parse_pair(k): v for k, v in doc["tm"].items()}),
            pol=SplitPolicy(doc["pol"]),
            delays=PathDelayVector(pairs=pairs, delay_s=delay_s),
            backend=doc["backend"],
            seed=int(doc["seed"]),
            created_at=doc.get("created_at", ""),
            extra=doc.get("extra", {}),
        )


class SampleStore:
    """Append-only JSONL observation log bound to one topology digest."""

    def __init__(self, path, topology_hash, count):
        self.path = Path(path)
        self.topology_hash = topology_hash
        self._count = count

    @classmethod
    def create(cls, path, topo):
        path = Path(path)
        header = {
            "schema_version": jsonio.SCHEMA_VERSION,
            "kind": "samples",
            "topology_hash": topo.digest(),
        }
        with path.open("w") as fh:
            fh.write(jsonio.dumps_line(header) + "\n")
        return cls(path, header["topology_hash"], 0)

    @classmethod
    def open(cls, path):
        path = Path(path)
        with path.open() as fh:
            first = fh.readline()
            if not first.strip():
                raise SchemaError(f"{path}: missing store header")
            header = jsonio.loads(first, path)
            if header.get("kind") != "samples" or "topology_hash" not in header:
                raise SchemaError(f"{path}: not a sample store")
            jsonio.check_schema_version(header, path, kind="samples")
            count = sum(1 for line in fh if line.strip())
        return cls(path, header["topology_hash"], count)

    @classmethod
    def open_or_create(cls, path, topo):
        path = Path(path)
        if path.exists() and path.stat().st_size > 0:
            store = cls.open(path)
            if store.topology_hash != topo.digest():
                raise InconsistencyError(
                    f"{path}: store is bound to a different topology"
                )
            return store
        return cls.create(path, topo)

    def append(self, sample):
        with self.path.open("a") as fh:
            fh.write(jsonio.dumps_line(sample.to_doc()) + "\n")
        self._count += 1

    def __len__(self):
        return self._count

    def __iter__(self):
        with self.path.open() as fh:
            fh.readline()
            for line in fh:
                if line.strip():
                    yield TelemetrySample.from_doc(jsonio.loads(line, self.path))

    def samples(self):
        return list(self)


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def collect(
    topo,
    n_samples,
    seed,
    backend="analytic",
    demand_range=DEFAULTS.demand_range,
    store=None,
    rho_max=DEFAULTS.rho_max,
    horizon_packets=DEFAULTS.des_horizon_packets,
    warmup_fraction=DEFAULTS.des_warmup_fraction,
):
    """Append n_samples stable observations to the store; returns the count.

    Sample i draws from an RNG substream keyed (seed, i, attempt), so the
    result is independent of batching order, and an unstable draw is replaced
    by the next attempt without disturbing other samples' streams.
    """
    if backend not in ("analytic", "des"):
        raise ValueError(f"unknown backend {backend!r}")
    if store is None:
        raise ValueError("collect requires a store")
    if store.topology_hash != topo.digest():
        raise InconsistencyError("store is bound to a different topology")

    from .des import simulate_des
    from .errors import InstabilityError

    appended = 0
    for i in range(n_samples):
        sample = None
        for attempt in range(MAX_ATTEMPTS_PER_SAMPLE):
            rng = np.random.default_rng((seed, i, attempt))
            tm = gen_traffic_rng(rng, topo, demand_range)
            pol = gen_policy_rng(rng, topo)
            try:
                if backend == "analytic":
                    delays = simulate_analytic(topo, tm, pol, rho_max)
                    extra = {}
                else:
                    des_seed = int(rng.integers(0, 2**63))
                    res = simulate_des(
                        topo, tm, pol, des_seed,
                        horizon_packets=horizon_packets,
                        warmup_fraction=warmup_fraction,
                        rho_max=rho_max,
                    )
                    delays = res.delays
                    extra = {
                        "des_seed": des_seed,
                        "horizon_packets": horizon_packets,
                        "warmup_fraction": warmup_fraction,
                    }
                    if res.undersampled:
                        extra["undersampled"] = [
                            _pair_key(p) for p in res.undersampled
                        ]
            except InstabilityError:
                continue
            sample = TelemetrySample(
                sample_id=len(store),
                tm=tm,
                pol=pol,
                delays=delays,
                backend=backend,
                seed=seed,
                created_at=_now(),
                extra=extra,
            )
            break
        if sample is None:
            raise ResampleBudgetError(
                f"sample {i}: no stable draw in {MAX_ATTEMPTS_PER_SAMPLE} attempts"
            )
        store.append(sample)
        appended += 1
    return appended


@dataclass
class Dataset:
    """Row-aligned training matrices with named columns, bound to a topology."""

    X: np.ndarray
    Y: np.ndarray
    feature_names: tuple
    target_names: tuple
    topology_hash: str

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Y = np.asarray(self.Y, dtype=float)
        if self.X.shape[0] != self.Y.shape[0]:
            raise InconsistencyError("X and Y row counts differ")
        if self.X.shape[1] != len(self.feature_names):
            raise InconsistencyError("feature_names do not match X columns")
        if self.Y.shape[1] != len(self.target_names):
            raise InconsistencyError("target_names do not match Y columns")
        self.feature_names = tuple(self.feature_names)
        self.target_names = tuple(self.target_names)

    @property
    def n_rows(self):
        return self.X.shape[0]

    def take(self, indices):
        return Dataset(
            X=self.X[indices],
            Y=self.Y[indices],
            feature_names=self.feature_names,
            target_names=self.target_names,
            topology_hash=self.topology_hash,
        )

    def to_doc(self):
        return {
            "schema_version": jsonio.SCHEMA_VERSION,
            "kind": "dataset",
            "topology_hash": self.topology_hash,
            "feature_names": list(self.feature_names),
            "target_names": list(self.target_names),
            "X": [[float(v) for v in row] for row in self.X],
            "Y": [[float(v) for v in row] for row in self.Y],
        }

    @classmethod
    def from_doc(cls, doc, path="<doc>"):
        jsonio.check_schema_version(doc, path, kind="dataset")
        return cls(
            X=np.array(doc["X"], dtype=float).reshape(
                len(doc["X"]), len(doc["feature_names"])
            ),
            Y=np.array(doc["Y"], dtype=float).reshape(
                len(doc["Y"]), len(doc["target_names"])
            ),
            feature_names=tuple(doc["feature_names"]),
            target_names=tuple(doc["target_names"]),
            topology_hash=doc["topology_hash"],
        )

    def save(self, path):
        jsonio.dump_file(path, self.to_doc())

    @classmethod
    def load(cls, path):
        return cls.from_doc(jsonio.load_file(path), path)


def feature_layout(sample):
    """Column labels derived from one sample: demand pairs then split ratios."""
    pairs = sample.tm.pairs
    features = [f"demand_{s}_{d}" for s, d in pairs]
    for node in sample.pol.nodes:
        for dst in sample.pol.ratios[node]:
            features.append(f"ratio_{node}_{dst}")
    targets = [f"delay_{s}_{d}" for s, d in sample.delays.pairs]
    return tuple(features), tuple(targets), pairs


def feature_row(topo, tm, pol):
    """One input row in dataset column order for a (traffic, policy) pair."""
    return np.concatenate([tm.values(topo.pairs), pol.flat(topo.overlay_nodes)])


def to_dataset(store):
    """Materialize a store into aligned (X, Y) matrices, in sample_id order."""
    samples = store.samples()
    if not samples:
        raise EmptyStoreError(f"{store.path}: no samples")
    features, targets, pairs = feature_layout(samples[0])
    X = np.empty((len(samples), len(features)))
    Y = np.empty((len(samples), len(targets)))
    for r, s in enumerate(samples):
        layout = feature_layout(s)
        if layout[:2] != (features, targets):
            raise InconsistencyError(
                f"sample {s.sample_id}: column layout differs from sample 0"
            )
        demand = [s.tm.demand[p] for p in pairs]
        ratios = [r_ for n in s.pol.nodes for r_ in s.pol.ratios[n].values()]
        X[r] = demand + ratios
        Y[r] = s.delays.delay_s
    return Dataset(
        X=X, Y=Y,
        feature_names=features,
        target_names=targets,
        topology_hash=store.topology_hash,
    )


def split(ds, n_train, n_test, seed):
    """Disjoint seeded train/test row subsets."""
    if n_train < 0 or n_test < 0:
        raise ValueError("split sizes must be nonnegative")
    if n_train + n_test > ds.n_rows:
        raise InsufficientRowsError(
            f"need {n_train}+{n_test} rows, dataset has {ds.n_rows}"
        )
    if n_train == 0:
        warnings.warn("empty training split; evaluation-only use")
    perm = np.random.default_rng(seed).permutation(ds.n_rows)
    return ds.take(perm[:n_train]), ds.take(perm[n_train:n_train + n_test])
