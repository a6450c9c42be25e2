"""Closed-loop decision maker: local search over split policies.

The same multi-restart hill climber runs against either the learned model
(surrogate mode, the normal operating regime) or the analytic simulator
(oracle mode, for calibration experiments). A candidate is produced by
perturbing one node's ratio vector with Gaussian noise, clamping to the
nonnegative orthant and renormalizing, which keeps every candidate on the
simplex product. The step size halves after a run of non-improving steps.
"""

import datetime
from dataclasses import dataclass

import numpy as np

from . import jsonio, kplane
from .config import DEFAULTS
from .errors import InconsistencyError, InstabilityError
from .intent import render
from .netmodel import gen_policy_rng
from .simulator import PathDelayVector, check_stability, link_loads, simulate_analytic
from .telemetry import TelemetrySample, feature_row

SIGMA_INIT = 0.25
SIGMA_FLOOR = 1e-3
SIGMA_PATIENCE = 10
FEASIBLE_PENALTY = 1e-6


@dataclass
class OptimizationResult:
    best_policy: object
    predicted: PathDelayVector
    objective_value: float
    residual_penalty: float
    trace: list                    # (evaluation index, best objective so far)
    mode: str                      # surrogate | oracle
    evaluations: int

    @property
    def feasible(self):
        return self.residual_penalty <= FEASIBLE_PENALTY

    def to_doc(self):
        return {
            "schema_version": jsonio.SCHEMA_VERSION,
            "kind": "optimization_result",
            "mode": self.mode,
            "objective_value": self.objective_value,
            "residual_penalty": self.residual_penalty,
            "feasible": self.feasible,
            "evaluations": self.evaluations,
            "best_policy": self.best_policy.to_doc(),
            "predicted_delays": self.predicted.to_doc(),
            "trace": [[int(i), float(v)] for i, v in self.trace],
        }


class _Evaluator:
    """Objective evaluation in one mode; unstable oracle candidates score inf."""

    def __init__(self, spec, topo, tm, model):
        self.spec = spec
        self.topo = topo
        self.tm = tm
        self.model = model
        self.mode = "oracle" if model is None else "surrogate"

    def delays(self, pol):
        if self.model is None:
            return simulate_analytic(self.topo, self.tm, pol)
        x = feature_row(self.topo, self.tm, pol)
        y = kplane.predict(self.model, x)[0]
        return PathDelayVector(pairs=self.topo.pairs, delay_s=y)

    def __call__(self, pol):
        try:
            d = self.delays(pol)
        except InstabilityError:
            return float("inf"), float("inf"), None
        report = link_loads(self.topo, self.tm, pol) if self.spec.needs_utils else None
        pen = self.spec.penalty(d, report)
        return self.spec.base(d) + pen, pen, d


def _perturb(rng, pol, nodes, sigma):
    node = nodes[rng.integers(len(nodes))]
    vec = pol.vector(node) + rng.normal(0.0, sigma, size=len(pol.vector(node)))
    vec = np.maximum(vec, 0.0)
    s = vec.sum()
    if s <= 1e-12:
        vec = rng.exponential(1.0, size=len(vec))
        s = vec.sum()
    return pol.replace(node, vec / s)


def optimize(
    intent_ast,
    tm,
    model,
    topo,
    budget=DEFAULTS.opt_budget,
    restarts=DEFAULTS.opt_restarts,
    seed=0,
):
    """Search split-policy space for the intent's objective; seeded, serial.

    model=None selects oracle mode (analytic simulator as the objective);
    a trained model selects surrogate mode. Every candidate evaluation counts
    against the budget; the best policy across restarts is returned together
    with its predicted delays and the full improvement trace.
    """
    if budget < restarts or restarts < 1:
        raise ValueError("budget must cover at least one evaluation per restart")
    if model is not None and model.meta.get("topology_hash") != topo.digest():
        raise InconsistencyError("model was trained on a different topology")
    tm.check_against(topo)

    spec = render(intent_ast)
    ev = _Evaluator(spec, topo, tm, model)
    multi = [n for n in topo.overlay_nodes if len(topo.attachments[n]) > 1]

    per = [budget // restarts] * restarts
    for i in range(budget % restarts):
        per[i] += 1

    best = None  # (objective, penalty, policy, delays)
    trace = []
    n_eval = 0
    for r in range(restarts):
        rng = np.random.default_rng((seed, r))
        pol = gen_policy_rng(rng, topo)
        obj, pen, d = ev(pol)
        n_eval += 1
        if best is None or obj < best[0]:
            best = (obj, pen, pol, d)
            trace.append((n_eval, obj))
        cur_obj, cur_pol = obj, pol
        sigma = SIGMA_INIT
        stall = 0
        for _ in range(per[r] - 1):
            if not multi:
                break  # policy space is a single point
            cand = _perturb(rng, cur_pol, multi, sigma)
            obj, pen, d = ev(cand)
            n_eval += 1
            if obj < cur_obj:
                cur_obj, cur_pol = obj, cand
                stall = 0
                if obj < best[0]:
                    best = (obj, pen, cand, d)
                    trace.append((n_eval, obj))
            else:
                stall += 1
                if stall >= SIGMA_PATIENCE:
                    sigma = max(sigma / 2.0, SIGMA_FLOOR)
                    stall = 0

    obj, pen, pol, d = best
    if d is None:
        # every candidate was unstable; re-evaluating the best one raises
        # InstabilityError naming the overloaded links
        ev.delays(pol)
    return OptimizationResult(
        best_policy=pol,
        predicted=d,
        objective_value=float(obj),
        residual_penalty=float(pen),
        trace=trace,
        mode=ev.mode,
        evaluations=n_eval,
    )


@dataclass
class ClosedLoopResult:
    applied: bool
    policy: object
    before: PathDelayVector
    after: PathDelayVector
    optimization: OptimizationResult | None
    sample_id: int | None

    @property
    def improved(self):
        return self.after.mean() < self.before.mean()


def closed_loop_step(
    intent_ast,
    tm,
    model,
    topo,
    ctrl,
    budget=DEFAULTS.opt_budget,
    seed=0,
    restarts=DEFAULTS.opt_restarts,
    store=None,
    force=False,
):
    """One turn of the loop: optimize on the surrogate, apply, re-measure.

    The candidate is refused (state left unchanged) when the search ends
    infeasible or the policy would overload a link, unless force=True. The
    post-step measurement is always recorded into the store when one is
    given, budget=0 no-op included: the loop's output feeds its next input.
    """
    if ctrl.topo is not topo and ctrl.topo.digest() != topo.digest():
        raise InconsistencyError("controller is bound to a different topology")
    before = ctrl.measure(tm)

    res = None
    applied = False
    if budget > 0:
        res = optimize(intent_ast, tm, model, topo,
                       budget=budget, restarts=restarts, seed=seed)
        stable = True
        try:
            check_stability(topo, tm, res.best_policy)
        except InstabilityError:
            stable = False
        if (res.feasible and stable) or force:
            ctrl.apply_policy(res.best_policy, source="kplane")
            applied = True

    after = ctrl.measure(tm) if applied else before

    sample_id = None
    if store is not None:
        sample = TelemetrySample(
            sample_id=len(store),
            tm=tm,
            pol=ctrl.active_policy,
            delays=after,
            backend="analytic",
            seed=seed,
            created_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
            extra={"closed_loop": True, "applied": applied},
        )
        store.append(sample)
        sample_id = sample.sample_id
    return ClosedLoopResult(
        applied=applied,
        policy=ctrl.active_policy,
        before=before,
        after=after,
        optimization=res,
        sample_id=sample_id,
    )
