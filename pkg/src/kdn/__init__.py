"""Desk-scale testbed for learning-driven overlay network control.

A hidden underlay of M/M/1 links serves as ground truth; telemetry samples of
(traffic, split policy) -> per-pair delays train a neural model; a declarative
intent is rendered into an objective the optimizer searches; the controller
applies the winning policy and the measurement feeds the next round.
"""

from .config import DEFAULTS, Defaults
from .netmodel import (
    Link,
    SplitPolicy,
    Topology,
    TrafficMatrix,
    duplex,
    gen_policy,
    gen_topology,
    gen_traffic,
    shortest_path,
)
from .simulator import (
    LinkLoadReport,
    PathDelayVector,
    check_stability,
    link_loads,
    simulate_analytic,
)
from .des import DesResult, simulate_des
from .telemetry import (
    Dataset,
    SampleStore,
    TelemetrySample,
    collect,
    feature_row,
    split,
    to_dataset,
)
from .kplane import (
    EvalMetrics,
    MlpModel,
    TrainConfig,
    evaluate,
    fit,
    gradient,
    learning_curve,
    predict,
    smoothed,
)
from .intent import Constraint, Intent, ObjectiveSpec, parse, pretty, render
from .controller import ControllerState, apply_policy, replay, what_if
from .optimizer import (
    ClosedLoopResult,
    OptimizationResult,
    closed_loop_step,
    optimize,
)
from .vnfmodel import (
    FW_LIKE,
    IDS_LIKE,
    PROFILES,
    SWITCH_LIKE,
    VnfProfile,
    error_cdf,
    evaluate_vnf,
    fit_vnf,
    gen_vnf_dataset,
    single_feature_view,
    write_error_cdf,
)

__version__ = "0.1.0"
