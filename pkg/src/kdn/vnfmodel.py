"""Synthetic VNF workload generator and CPU-consumption regression.

Real packet traces are replaced by a parametric generator: per 20-second
batch it draws correlated log-normal traffic features (volume drives flows,
packets, distinct addresses and ports) and computes ground-truth CPU from a
known saturating function of flows, packets and packet length. Because the
generating function is recorded in the profile, model error can be judged
against an exact oracle. The regressor is the same network as the overlay
delay model, with one output.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import jsonio, kplane
from .telemetry import Dataset

N_FEATURES = 86

_CORE = (
    "n_packets",
    "n_flows",
    "avg_pkt_len",
    "n_src_ips",
    "n_dst_ips",
    "n_src_ports",
    "n_dst_ports",
)
_APP_SHARES = (
    "share_http",
    "share_dns",
    "share_smtp",
    "share_ssh",
    "share_streaming",
    "share_p2p",
    "share_other",
)
FEATURE_NAMES = _CORE + _APP_SHARES + tuple(
    f"aux_{i:02d}" for i in range(N_FEATURES - len(_CORE) - len(_APP_SHARES))
)
# aux features couple to the volume latent with fixed per-column exponents
_AUX_EXPONENTS = tuple(0.15 * (i % 5) for i in range(len(FEATURE_NAMES) - len(_CORE) - len(_APP_SHARES)))

BATCH_SECONDS = 20


@dataclass(frozen=True)
class VnfProfile:
    """CPU cost curve of one VNF class, in percent of a core."""

    name: str
    baseline_pct: float
    per_flow: float
    per_packet: float
    interaction: float   # scales flows*avg_len/(1 + saturation*flows)
    saturation: float
    noise_std: float     # percentage points added before clamping
    single_feature: str  # the one-variable baseline model to beat

    def __post_init__(self):
        if min(self.per_flow, self.per_packet, self.interaction,
               self.saturation, self.noise_std) < 0:
            raise ValueError("profile coefficients must be >= 0")

    def cpu(self, n_flows, n_packets, avg_pkt_len):
        """Noise-free ground truth before clamping is applied with the noise."""
        n_flows = np.asarray(n_flows, dtype=float)
        sat = self.interaction * n_flows * np.asarray(avg_pkt_len, dtype=float)
        sat = sat / (1.0 + self.saturation * n_flows)
        return (self.baseline_pct + self.per_flow * n_flows
                + self.per_packet * np.asarray(n_packets, dtype=float) + sat)

    def without_noise(self):
        return replace(self, noise_std=0.0)

    def to_doc(self):
        return {
            "schema_version": jsonio.SCHEMA_VERSION,
            "kind": "vnf_profile",
            "name": self.name,
            "baseline_pct": self.baseline_pct,
            "per_flow": self.per_flow,
            "per_packet": self.per_packet,
            "interaction": self.interaction,
            "saturation": self.saturation,
            "noise_std": self.noise_std,
            "single_feature": self.single_feature,
        }

    def digest(self):
        return jsonio.digest(self.to_doc())


# flows-dominated with saturating inspection cost, like a stateful firewall
FW_LIKE = VnfProfile(
    name="fw-like", baseline_pct=5.0,
    per_flow=1.25e-2, per_packet=8e-5,
    interaction=2.1e-5, saturation=5e-4,
    noise_std=2.0, single_feature="n_flows",
)
# payload inspection: packet- and byte-heavy with strong interaction
IDS_LIKE = VnfProfile(
    name="ids-like", baseline_pct=8.0,
    per_flow=2e-3, per_packet=3.5e-4,
    interaction=4.5e-5, saturation=8e-4,
    noise_std=2.0, single_feature="n_packets",
)
# forwarding only: linear in packet count, no interaction
SWITCH_LIKE = VnfProfile(
    name="switch-like", baseline_pct=3.0,
    per_flow=0.0, per_packet=6e-4,
    interaction=0.0, saturation=0.0,
    noise_std=2.0, single_feature="n_packets",
)
PROFILES = {p.name: p for p in (FW_LIKE, IDS_LIKE, SWITCH_LIKE)}


def gen_vnf_dataset(profile, n_batches, seed):
    """Feature matrix and ground-truth CPU for n_batches synthetic batches."""
    if n_batches <= 0:
        raise ValueError("n_batches must be > 0")
    rng = np.random.default_rng(seed)
    n = int(n_batches)

    volume = rng.lognormal(np.log(2000.0), 0.5, n)       # flow-count latent
    n_flows = volume
    pkts_per_flow = rng.lognormal(np.log(30.0), 0.4, n)
    n_packets = n_flows * pkts_per_flow
    avg_len = np.clip(rng.lognormal(np.log(700.0), 0.25, n), 64.0, 1500.0)

    def distinct(exponent, spread):
        return np.power(n_flows, exponent) * rng.lognormal(0.0, spread, n)

    cols = {
        "n_packets": n_packets,
        "n_flows": n_flows,
        "avg_pkt_len": avg_len,
        "n_src_ips": distinct(0.80, 0.20),
        "n_dst_ips": distinct(0.75, 0.20),
        "n_src_ports": distinct(0.85, 0.15),
        "n_dst_ports": distinct(0.60, 0.25),
    }
    shares = rng.dirichlet([2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0], size=n)
    for j, name in enumerate(_APP_SHARES):
        cols[name] = shares[:, j]
    for j, name in enumerate(FEATURE_NAMES[len(_CORE) + len(_APP_SHARES):]):
        w = _AUX_EXPONENTS[j]
        cols[name] = rng.lognormal(0.0, 0.3, n) * np.power(volume / 2000.0, w)

    X = np.column_stack([cols[name] for name in FEATURE_NAMES])
    cpu = profile.cpu(n_flows, n_packets, avg_len)
    if profile.noise_std > 0:
        cpu = cpu + rng.normal(0.0, profile.noise_std, n)
    Y = np.clip(cpu, 0.0, 100.0).reshape(-1, 1)
    return Dataset(
        X=X, Y=Y,
        feature_names=FEATURE_NAMES,
        target_names=("cpu_pct",),
        topology_hash=profile.digest(),
    )


def single_feature_view(ds, feature_name):
    """The one-column baseline dataset the full model is compared against."""
    j = ds.feature_names.index(feature_name)
    return Dataset(
        X=ds.X[:, [j]], Y=ds.Y,
        feature_names=(feature_name,),
        target_names=ds.target_names,
        topology_hash=ds.topology_hash,
    )


def fit_vnf(train, cfg=None):
    return kplane.fit(train, cfg or kplane.TrainConfig())


@dataclass
class VnfEvalReport:
    metrics: kplane.EvalMetrics
    rel_errors: np.ndarray            # per test batch
    percentiles: dict                 # {50, 90, 95} -> error

    def as_dict(self):
        return {
            "mse": self.metrics.mse,
            "mean_rel_err": self.metrics.mean_rel_err,
            "percentiles": {str(k): float(v) for k, v in self.percentiles.items()},
            "n_rows": self.metrics.n_rows,
        }


def evaluate_vnf(model, test):
    metrics = kplane.evaluate(model, test)
    errors = metrics.per_sample_rel_err
    errors = errors[np.isfinite(errors)]
    pct = {q: float(np.percentile(errors, q)) for q in (50, 90, 95)}
    return VnfEvalReport(metrics=metrics, rel_errors=errors, percentiles=pct)


def error_cdf(errors):
    """Empirical CDF points (error, cumulative fraction), sorted ascending."""
    e = np.sort(np.asarray(errors, dtype=float))
    if e.size == 0:
        raise ValueError("error_cdf needs at least one error value")
    frac = np.arange(1, e.size + 1) / e.size
    return list(zip((float(v) for v in e), (float(f) for f in frac)))


def write_error_cdf(path, cdf):
    with open(path, "w") as fh:
        fh.write("rel_err,cum_frac\n")
        for err, frac in cdf:
            fh.write(f"{err!r},{frac!r}\n")
