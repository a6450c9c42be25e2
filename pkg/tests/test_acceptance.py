"""Acceptance gate: nine numbered criteria, one test each.

Run `pytest -v tests/test_acceptance.py` for a per-criterion pass/fail line.
Tolerances are pinned here and nowhere else; the expensive shared artifacts
(the 9,900-sample store and the 3,000-row model) are session fixtures so the
whole gate stays under a few minutes.
"""

import numpy as np
import pytest

from kdn import intent as dsl
from kdn import jsonio
from kdn.config import DEFAULTS
from kdn.controller import ControllerState
from kdn.des import simulate_des
from kdn.errors import InstabilityError
from kdn.kplane import (
    MlpModel,
    TrainConfig,
    evaluate,
    fit,
    gradient,
    learning_curve,
    loss_norm,
    smoothed,
)
from kdn.netmodel import (
    Topology,
    TrafficMatrix,
    duplex,
    gen_policy_rng,
    gen_topology,
    gen_traffic_rng,
)
from kdn.optimizer import closed_loop_step, optimize
from kdn.simulator import check_stability, simulate_analytic
from kdn.telemetry import SampleStore, collect, feature_row, split, to_dataset
from kdn.vnfmodel import (
    FW_LIKE,
    IDS_LIKE,
    PROFILES,
    error_cdf,
    evaluate_vnf,
    fit_vnf,
    gen_vnf_dataset,
    single_feature_view,
)

from conftest import uniform_policy

COLLECT_SEED = 42
TRAIN_ROWS, TEST_ROWS = 3000, 300
CURVE_SIZES = (600, 1200, 2400, 4800, 9600)


def stable_draw(topo, key, demand_range=DEFAULTS.demand_range):
    """First stable (tm, policy) pair along the keyed substream."""
    for attempt in range(1000):
        rng = np.random.default_rng((*key, attempt))
        tm = gen_traffic_rng(rng, topo, demand_range)
        pol = gen_policy_rng(rng, topo)
        try:
            check_stability(topo, tm, pol)
        except InstabilityError:
            continue
        return tm, pol
    raise AssertionError("no stable draw found")


@pytest.fixture(scope="session")
def big_store(default_topo, tmp_path_factory):
    path = tmp_path_factory.mktemp("acceptance") / "samples.samples.jsonl"
    store = SampleStore.create(path, default_topo)
    collect(default_topo, max(CURVE_SIZES) + TEST_ROWS, COLLECT_SEED, store=store)
    return store


@pytest.fixture(scope="session")
def big_ds(big_store):
    return to_dataset(big_store)


@pytest.fixture(scope="session")
def main_split(big_ds):
    return split(big_ds, TRAIN_ROWS, TEST_ROWS, seed=0)


@pytest.fixture(scope="session")
def main_model(main_split):
    train, _ = main_split
    return fit(train, TrainConfig(seed=0))


@pytest.fixture(scope="session")
def held_out_err(main_model, main_split):
    _, test = main_split
    return evaluate(main_model, test).mean_rel_err


def test_criterion_1_overlay_model_accuracy(main_model, main_split):
    # 3,000 training / 300 test samples on the default topology:
    # mean relative path-delay error at most 5 percent
    _, test = main_split
    met = evaluate(main_model, test)
    assert met.n_rows == TEST_ROWS
    assert met.mean_rel_err <= 0.05, (
        f"mean relative error {met.mean_rel_err:.4f} exceeds 0.05"
    )


def test_criterion_2_learning_curve(big_ds):
    # MSE over training sizes {600 .. 9600} against one fixed 300-row test
    # set: window-2 smoothed curve strictly decreasing, and the final MSE
    # under half the initial one
    rows = learning_curve(big_ds, list(CURVE_SIZES), TrainConfig(seed=0),
                          test_size=TEST_ROWS)
    mses = [mse for _, mse, _ in rows]
    sm = smoothed(mses, window=2)
    assert all(a > b for a, b in zip(sm, sm[1:])), f"smoothed MSE not decreasing: {sm}"
    assert mses[-1] < 0.5 * mses[0], (
        f"MSE(9600)={mses[-1]:.4e} not under half of MSE(600)={mses[0]:.4e}"
    )


def test_criterion_3_simulator_cross_validation(default_topo):
    # 20 stable samples: per-pair DES (1e6 packets) vs analytic within 5%;
    # plus the bare M/M/1 closed form reproduced by the event simulator
    worst = 0.0
    for k in range(20):
        tm, pol = stable_draw(default_topo, (17, k))
        analytic = simulate_analytic(default_topo, tm, pol)
        res = simulate_des(default_topo, tm, pol, seed=1000 + k,
                           horizon_packets=1_000_000)
        assert res.undersampled == ()
        rel = np.abs(res.delays.delay_s - analytic.delay_s) / analytic.delay_s
        worst = max(worst, float(rel.max()))
    assert worst <= 0.05, f"worst per-pair DES deviation {worst:.4f} exceeds 0.05"

    # single queue: second hop made negligible, W = 1/(mu - lambda)
    links = duplex("A", "u01", 1000.0, 0.0) + duplex("B", "u01", 1e9, 0.0)
    topo = Topology(["A", "B"], ["u01"], links)
    tm = TrafficMatrix({("A", "B"): 600.0, ("B", "A"): 0.0})
    res = simulate_des(topo, tm, uniform_policy(topo), seed=5,
                       horizon_packets=1_000_000)
    expect = 1.0 / (1000.0 - 600.0)
    dev = abs(res.delays[("A", "B")] - expect) / expect
    assert dev <= 0.05, f"M/M/1 closed-form deviation {dev:.4f} exceeds 0.05"


def test_criterion_4_gradient_correctness():
    # analytic backprop vs central finite differences on 10 random small
    # networks: max relative deviation below 1e-4
    eps = 1e-5
    worst = 0.0
    for seed in range(10):
        topo = gen_topology(seed, n_overlay=3, n_underlay=4, n_links=9,
                            capacity_range=(800, 1600))
        rng = np.random.default_rng(seed)
        rows_x, rows_y = [], []
        for k in range(24):
            tm, pol = stable_draw(topo, (23, seed, k), demand_range=(10.0, 40.0))
            rows_x.append(feature_row(topo, tm, pol))
            rows_y.append(simulate_analytic(topo, tm, pol).delay_s)
        from kdn.telemetry import Dataset
        ds = Dataset(
            X=np.array(rows_x), Y=np.array(rows_y),
            feature_names=tuple(f"x{i}" for i in range(len(rows_x[0]))),
            target_names=tuple(f"y{i}" for i in range(len(rows_y[0]))),
            topology_hash=topo.digest(),
        )
        model = fit(ds, TrainConfig(hidden_units=6, max_epochs=3, batch_size=8,
                                    seed=seed))
        for r in (0, 1):
            x, y = ds.X[r], ds.Y[r]
            grads = gradient(model, x, y)
            for name in ("W1", "b1", "W2", "b2"):
                P = getattr(model, name)
                G = grads[name]
                it = np.nditer(P, flags=["multi_index"])
                for _ in it:
                    i = it.multi_index
                    old = P[i]
                    P[i] = old + eps
                    up = loss_norm(model, x, y)
                    P[i] = old - eps
                    dn = loss_norm(model, x, y)
                    P[i] = old
                    fd = (up - dn) / (2 * eps)
                    denom = max(abs(fd), abs(G[i]), 1e-8)
                    worst = max(worst, abs(fd - G[i]) / denom)
    assert worst < 1e-4, f"max gradient deviation {worst:.2e} not below 1e-4"


def test_criterion_5_closed_loop(split_toy, default_topo, main_model):
    # toy with one free split scalar: oracle search within 1% of the
    # exhaustive grid optimum
    topo, tm = split_toy
    mean_intent = dsl.parse("minimize mean_delay")

    def toy_mean(r):
        pol = uniform_policy(topo).replace("A", np.array([r, 1.0 - r]))
        return simulate_analytic(topo, tm, pol).mean()

    grid_best = min(toy_mean(r) for r in np.arange(0.0, 1.0001, 0.01))
    res = optimize(mean_intent, tm, None, topo, budget=400, restarts=4, seed=0)
    assert res.objective_value <= grid_best * 1.01, (
        f"oracle optimum {res.objective_value:.6e} not within 1% of "
        f"grid {grid_best:.6e}"
    )

    # default topology: surrogate-driven loop beats the random initial
    # policy in at least 9 of 10 seeds
    improved = 0
    for s in range(10):
        tm_s, pol0 = stable_draw(default_topo, (31, s))
        ctrl = ControllerState(default_topo, pol0)
        ctrl.bind_model(main_model)
        out = closed_loop_step(mean_intent, tm_s, main_model, default_topo,
                               ctrl, budget=DEFAULTS.opt_budget, seed=s,
                               restarts=DEFAULTS.opt_restarts)
        if out.applied and out.improved:
            improved += 1
    assert improved >= 9, f"closed loop improved only {improved}/10 seeds"


def test_criterion_6_what_if(default_topo, main_model, held_out_err):
    # 50 random candidate policies: what-if prediction error within twice
    # the model's held-out error, and the query leaves no trace on state
    tm, pol0 = stable_draw(default_topo, (47, 0))
    ctrl = ControllerState(default_topo, pol0)
    ctrl.bind_model(main_model)
    ctrl.set_intent(dsl.parse("minimize mean_delay"))
    rels = []
    digest0 = ctrl.state_digest()
    done = 0
    k = 0
    while done < 50:
        _, cand = stable_draw(default_topo, (48, k))
        k += 1
        try:
            actual = simulate_analytic(default_topo, tm, cand)
        except InstabilityError:
            continue
        predicted, _ = ctrl.what_if(cand, tm)
        rels.append(np.abs(predicted.delay_s - actual.delay_s) / actual.delay_s)
        done += 1
    err = float(np.mean(np.concatenate(rels)))
    assert err <= 2.0 * held_out_err, (
        f"what-if error {err:.4f} exceeds twice the held-out error "
        f"{held_out_err:.4f}"
    )
    assert ctrl.state_digest() == digest0, "what-if queries moved controller state"


def test_criterion_7_intent_pipeline(default_topo):
    # grammar round-trip idempotence on a 20-intent corpus, and penalty
    # strictly growing with the size of a randomized violation
    rng = np.random.default_rng(7)
    nodes = default_topo.overlay_nodes
    link_ids = [l.link_id for l in default_topo.links]
    for k in range(20):
        lines = [f"minimize {'mean_delay' if k % 2 else 'max_delay'}"]
        for _ in range(int(rng.integers(1, 5))):
            if rng.random() < 0.6:
                s, d = rng.choice(nodes, size=2, replace=False)
                op = "<" if rng.random() < 0.5 else "<="
                lines.append(f"delay({s}->{d}) {op} {rng.uniform(0.5, 40):.4f} ms")
            else:
                lid = link_ids[int(rng.integers(len(link_ids)))]
                lines.append(f"util({lid}) < {rng.uniform(0.1, 1.0):.4f}")
        ast = dsl.parse("\n".join(lines), default_topo)
        text = dsl.pretty(ast)
        assert dsl.parse(text, default_topo) == ast
        assert dsl.pretty(dsl.parse(text, default_topo)) == text

    tm, pol = stable_draw(default_topo, (53, 0))
    delays = simulate_analytic(default_topo, tm, pol)
    for _ in range(50):
        pair = default_topo.pairs[int(rng.integers(len(default_topo.pairs)))]
        d = delays[pair]
        f1, f2 = sorted(rng.uniform(0.1, 0.95, size=2))
        tighter = dsl.render(dsl.parse(
            f"minimize mean_delay\ndelay({pair[0]}->{pair[1]}) < {d * f1} s"))
        looser = dsl.render(dsl.parse(
            f"minimize mean_delay\ndelay({pair[0]}->{pair[1]}) < {d * f2} s"))
        assert tighter.penalty(delays) > looser.penalty(delays) > 0


def test_criterion_8_vnf_pipeline():
    # noise-free profile learned to a median relative error of 5% or less
    cfg = TrainConfig(hidden_units=32, max_epochs=150, seed=0)
    ds = gen_vnf_dataset(FW_LIKE.without_noise(), 2400, seed=11)
    train, test = split(ds, 2000, 400, seed=0)
    rep = evaluate_vnf(fit_vnf(train, cfg), test)
    assert rep.percentiles[50] <= 0.05, (
        f"noise-free median error {rep.percentiles[50]:.4f} exceeds 0.05"
    )

    # every interaction-bearing profile: the full feature set beats the
    # single-feature baseline in held-out MSE, for each of 5 seeds
    for profile in (p for p in PROFILES.values() if p.interaction > 0):
        for seed in range(5):
            noisy = gen_vnf_dataset(profile, 1200, seed=100 + seed)
            tr, te = split(noisy, 1000, 200, seed=seed)
            full = evaluate_vnf(fit_vnf(tr, cfg), te)
            view_tr = single_feature_view(tr, profile.single_feature)
            view_te = single_feature_view(te, profile.single_feature)
            single = evaluate_vnf(fit_vnf(view_tr, cfg), view_te)
            assert full.metrics.mse < single.metrics.mse, (
                f"{profile.name} seed {seed}: full MSE {full.metrics.mse:.4e} "
                f"not below single-feature {single.metrics.mse:.4e}"
            )

    # the written CDF is a proper distribution function
    cdf = error_cdf(rep.rel_errors)
    errs = [e for e, _ in cdf]
    fracs = [f for _, f in cdf]
    assert errs == sorted(errs)
    assert fracs == sorted(fracs)
    assert fracs[-1] == 1.0


def test_criterion_9_determinism(default_topo, tmp_path):
    # every seeded operation, re-run on identical inputs, emits
    # byte-identical machine-readable output once timestamps are stripped
    def strip_times(store_path):
        lines = store_path.read_text().splitlines()
        docs = [jsonio.loads(ln, store_path) for ln in lines if ln.strip()]
        for d in docs:
            d.pop("created_at", None)
        return [jsonio.dumps_line(d) for d in docs]

    # topology generation
    t1, t2 = tmp_path / "t1.json", tmp_path / "t2.json"
    gen_topology(3).save(t1)
    gen_topology(3).save(t2)
    assert t1.read_bytes() == t2.read_bytes()

    # telemetry collection
    small = gen_topology(1, n_overlay=3, n_underlay=5, n_links=12)
    p1, p2 = tmp_path / "s1.jsonl", tmp_path / "s2.jsonl"
    for p in (p1, p2):
        collect(small, 20, seed=6, store=SampleStore.create(p, small))
    assert strip_times(p1) == strip_times(p2)

    # training
    ds = to_dataset(SampleStore.open(p1))
    cfg = TrainConfig(hidden_units=8, max_epochs=20, seed=2)
    m1, m2 = tmp_path / "m1.json", tmp_path / "m2.json"
    fit(ds, cfg).save(m1)
    fit(ds, cfg).save(m2)
    assert m1.read_bytes() == m2.read_bytes()

    # optimization
    tm, _ = stable_draw(small, (61, 0))
    model = MlpModel.load(m1)
    mean_intent = dsl.parse("minimize mean_delay")
    r1 = optimize(mean_intent, tm, model, small, budget=120, restarts=3, seed=4)
    r2 = optimize(mean_intent, tm, model, small, budget=120, restarts=3, seed=4)
    assert jsonio.dumps(r1.to_doc()) == jsonio.dumps(r2.to_doc())

    # event-driven simulation
    pol = uniform_policy(small)
    d1 = simulate_des(small, tm, pol, seed=9, horizon_packets=50_000)
    d2 = simulate_des(small, tm, pol, seed=9, horizon_packets=50_000)
    assert jsonio.dumps(d1.delays.to_doc()) == jsonio.dumps(d2.delays.to_doc())

    # synthetic VNF data
    v1, v2 = tmp_path / "v1.json", tmp_path / "v2.json"
    gen_vnf_dataset(IDS_LIKE, 40, seed=3).save(v1)
    gen_vnf_dataset(IDS_LIKE, 40, seed=3).save(v2)
    assert v1.read_bytes() == v2.read_bytes()
