"""In-process stand-in for the centralized controller.

Holds the authoritative split policy, applies changes atomically with an
append-only history, and answers open-loop queries (what-if prediction)
through a bound learned model. Southbound programming is a direct call into
the simulator rather than a wire protocol.
"""

import datetime
from dataclasses import dataclass

from . import jsonio, kplane
from .errors import InconsistencyError, NoModelBoundError
from .netmodel import SplitPolicy
from .simulator import PathDelayVector, link_loads, simulate_analytic
from .telemetry import feature_row


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


@dataclass(frozen=True)
class PolicyEvent:
    timestamp: str
    policy: SplitPolicy
    source: str  # operator | kplane

    def to_doc(self):
        return {
            "timestamp": self.timestamp,
            "source": self.source,
            "policy": self.policy.to_doc(),
        }


@dataclass
class Verdict:
    constraint: object
    metric: float
    ok: bool

    def as_dict(self):
        c = self.constraint
        return {
            "kind": c.kind,
            "subject": list(c.subject),
            "bound": c.bound,
            "strict": c.strict,
            "metric": self.metric,
            "ok": self.ok,
        }


class ControllerState:
    """Mutable controller: one active policy, append-only history."""

    def __init__(self, topo, initial_policy, source="operator"):
        initial_policy.check_against(topo)
        self.topo = topo
        self.active_policy = initial_policy
        self.history = [PolicyEvent(_now(), initial_policy, source)]
        self.model = None
        self.active_intent = None

    def bind_model(self, model):
        if model.meta.get("topology_hash") != self.topo.digest():
            raise InconsistencyError("model was trained on a different topology")
        self.model = model
        return self

    def set_intent(self, intent_ast):
        self.active_intent = intent_ast
        return self

    def apply_policy(self, pol, source):
        """Replace the active policy; validation failures leave state untouched."""
        if source not in ("operator", "kplane"):
            raise ValueError(f"unknown source {source!r}")
        pol.check_against(self.topo)
        self.active_policy = pol
        self.history.append(PolicyEvent(_now(), pol, source))
        return self

    def measure(self, tm, rho_max=None):
        """Ground-truth delays for tm under the active policy."""
        kwargs = {} if rho_max is None else {"rho_max": rho_max}
        return simulate_analytic(self.topo, tm, self.active_policy, **kwargs)

    def what_if(self, candidate, tm):
        """Predicted delays for a candidate policy; never touches state.

        Returns (PathDelayVector, verdicts) where verdicts judge the active
        intent's constraints on the prediction (utilization constraints are
        computed exactly from offered loads, which need no learned model).
        """
        if self.model is None:
            raise NoModelBoundError("bind a trained model before what-if queries")
        candidate.check_against(self.topo)
        tm.check_against(self.topo)
        x = feature_row(self.topo, tm, candidate)
        y = kplane.predict(self.model, x)[0]
        delays = PathDelayVector(pairs=self.topo.pairs, delay_s=y)
        verdicts = []
        if self.active_intent is not None and self.active_intent.constraints:
            report = link_loads(self.topo, tm, candidate)
            for c in self.active_intent.constraints:
                if c.kind == "pair_delay":
                    metric = delays[c.subject]
                else:
                    metric = report.rho(c.subject[0])
                ok = metric < c.bound if c.strict else metric <= c.bound
                verdicts.append(Verdict(constraint=c, metric=float(metric), ok=ok))
        return delays, verdicts

    def to_doc(self):
        from .intent import pretty

        return {
            "schema_version": jsonio.SCHEMA_VERSION,
            "kind": "controller_state",
            "topology_hash": self.topo.digest(),
            "active_policy": self.active_policy.to_doc(),
            "history": [ev.to_doc() for ev in self.history],
            "intent": pretty(self.active_intent) if self.active_intent else None,
            "model_digest": jsonio.digest(self.model.to_doc()) if self.model else None,
        }

    def state_digest(self):
        """Hash of the full observable state; what-if queries must not move it."""
        return jsonio.digest(self.to_doc())

    def save(self, path):
        jsonio.dump_file(path, self.to_doc())

    @classmethod
    def from_doc(cls, doc, topo, path="<doc>"):
        from .intent import parse

        jsonio.check_schema_version(doc, path, kind="controller_state")
        if doc["topology_hash"] != topo.digest():
            raise InconsistencyError(f"{path}: snapshot belongs to a different topology")
        events = [
            PolicyEvent(
                timestamp=ev["timestamp"],
                policy=SplitPolicy.from_doc(ev["policy"]),
                source=ev["source"],
            )
            for ev in doc["history"]
        ]
        if not events:
            raise InconsistencyError(f"{path}: empty policy history")
        state = cls(topo, events[0].policy, source=events[0].source)
        state.history = events
        state.active_policy = SplitPolicy.from_doc(doc["active_policy"])
        state.active_policy.check_against(topo)
        if doc.get("intent"):
            state.active_intent = parse(doc["intent"], topo)
        return state

    @classmethod
    def load(cls, path, topo):
        return cls.from_doc(jsonio.load_file(path), topo, path)


def replay(state):
    """Rebuild a state by re-applying its history from the initial event."""
    fresh = ControllerState(state.topo, state.history[0].policy,
                            source=state.history[0].source)
    for ev in state.history[1:]:
        fresh.apply_policy(ev.policy, ev.source)
    if state.active_intent is not None:
        fresh.set_intent(state.active_intent)
    if state.model is not None:
        fresh.bind_model(state.model)
    return fresh


def apply_policy(state, pol, source):
    return state.apply_policy(pol, source)


def what_if(state, candidate, tm):
    return state.what_if(candidate, tm)
