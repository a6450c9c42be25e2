"""Command-line surface: generation, training, optimization, reproduction.

Every command writes its machine-readable outputs under --out together with a
runconfig JSON capturing the resolved arguments, so any output directory can
be regenerated exactly (timestamps aside). Exit codes: 0 success, 1 generic
failure (including a FAIL verdict from repro checks), 2 usage, 3 malformed
input file, 4 instability, 5 training failure. KDN_LOG sets log verbosity.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import (
    controller,
    intent as intent_mod,
    jsonio,
    kplane,
    netmodel,
    optimizer,
    telemetry,
    vnfmodel,
)
from .config import DEFAULTS
from .errors import (
    InstabilityError,
    IntentError,
    KdnError,
    NonFiniteLossError,
    ResampleBudgetError,
    SchemaError,
    TrainingFailureError,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_SCHEMA = 3
EXIT_INSTABILITY = 4
EXIT_TRAINING = 5

log = logging.getLogger("kdn")

OVERLAY_ERROR_THRESHOLD = 0.05
CURVE_SIZES = (600, 1200, 2400, 4800, 9600)


def _out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_runconfig(out, name, args):
    doc = {
        "schema_version": jsonio.SCHEMA_VERSION,
        "kind": "runconfig",
        "command": name,
        "args": {
            k: v for k, v in sorted(vars(args).items())
            if k != "func" and not k.startswith("_")
        },
        "defaults": DEFAULTS.as_dict(),
    }
    jsonio.dump_file(out / f"runconfig-{name}.json", doc)


def _load_intent(spec_arg, topo):
    """--intent accepts a file path or the intent text itself."""
    if os.path.exists(spec_arg):
        return intent_mod.load(spec_arg, topo)
    return intent_mod.parse(spec_arg, topo)


def _train_config(args, fallback_seed=0):
    return kplane.TrainConfig(seed=getattr(args, "seed", fallback_seed))


# ---------------------------------------------------------------- commands


def cmd_topo_gen(args):
    out = _out_dir(args)
    topo = netmodel.gen_topology(
        args.seed, args.n_overlay, args.n_underlay, args.n_links
    )
    path = out / "topology.topo.json"
    topo.save(path)
    _write_runconfig(out, "topo-gen", args)
    print(f"wrote {path}: {len(topo.overlay_nodes)} overlay / "
          f"{len(topo.underlay_nodes)} underlay nodes, "
          f"{len(topo.links)} directed links, digest {topo.digest()[:12]}")
    return EXIT_OK


def cmd_dataset_gen(args):
    topo = netmodel.Topology.load(args.topo)
    store = telemetry.SampleStore.open_or_create(args.store, topo)
    n = telemetry.collect(
        topo, args.n_samples, args.seed,
        backend=args.backend, store=store,
        demand_range=(args.demand_min, args.demand_max),
    )
    out = _out_dir(args)
    _write_runconfig(out, "dataset-gen", args)
    print(f"appended {n} samples ({args.backend}) -> {store.path} "
          f"({len(store)} total)")
    return EXIT_OK


def cmd_train(args):
    store = telemetry.SampleStore.open(args.store)
    ds = telemetry.to_dataset(store)
    train, test = telemetry.split(ds, args.train_size, args.test_size, args.seed)
    model = kplane.fit(train, _train_config(args))
    out = _out_dir(args)
    model_path = out / "model.model.json"
    model.save(model_path)
    summary = {"model": str(model_path), "train_rows": train.n_rows}
    if test.n_rows:
        met = kplane.evaluate(model, test)
        summary.update(mse=met.mse, mean_rel_err=met.mean_rel_err,
                       test_rows=test.n_rows)
        jsonio.dump_file(out / "train-metrics.json", {
            "schema_version": jsonio.SCHEMA_VERSION,
            "kind": "eval_metrics",
            **met.as_dict(),
        })
    _write_runconfig(out, "train", args)
    print(f"wrote {model_path}" + (
        f"; test mse {summary['mse']:.4e}, rel err {summary['mean_rel_err']:.4f}"
        if test.n_rows else ""))
    return EXIT_OK


def cmd_eval(args):
    model = kplane.MlpModel.load(args.model)
    store = telemetry.SampleStore.open(args.store)
    ds = telemetry.to_dataset(store)
    if args.test_size:
        _, ds = telemetry.split(ds, max(ds.n_rows - args.test_size, 0),
                                args.test_size, args.seed)
    met = kplane.evaluate(model, ds)
    out = _out_dir(args)
    jsonio.dump_file(out / "eval-metrics.json", {
        "schema_version": jsonio.SCHEMA_VERSION,
        "kind": "eval_metrics",
        **met.as_dict(),
    })
    _write_runconfig(out, "eval", args)
    print(f"{ds.n_rows} rows: mse {met.mse:.4e}, mean rel err {met.mean_rel_err:.4f}")
    return EXIT_OK


def _write_curve_csv(path, rows):
    with open(path, "w") as fh:
        fh.write("train_size,mse,mean_rel_err\n")
        for size, mse, rel in rows:
            fh.write(f"{size},{mse!r},{rel!r}\n")


def cmd_curve(args):
    store = telemetry.SampleStore.open(args.store)
    ds = telemetry.to_dataset(store)
    sizes = [int(s) for s in args.sizes.split(",")]
    rows = kplane.learning_curve(ds, sizes, _train_config(args), args.test_size)
    out = _out_dir(args)
    path = out / "curve.csv"
    _write_curve_csv(path, rows)
    _write_runconfig(out, "curve", args)
    for size, mse, rel in rows:
        print(f"  {size:>6} samples: mse {mse:.4e}, rel err {rel:.4f}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_optimize(args):
    topo = netmodel.Topology.load(args.topo)
    tm = netmodel.TrafficMatrix.load(args.tm)
    ast = _load_intent(args.intent, topo)
    model = kplane.MlpModel.load(args.model) if args.model else None
    res = optimizer.optimize(ast, tm, model, topo,
                             budget=args.budget, restarts=args.restarts,
                             seed=args.seed)
    out = _out_dir(args)
    jsonio.dump_file(out / "optimization.json", res.to_doc())
    res.best_policy.save(out / "best.pol.json")
    _write_runconfig(out, "optimize", args)
    print(f"{res.mode} mode: objective {res.objective_value:.6e} "
          f"({'feasible' if res.feasible else 'INFEASIBLE'}, "
          f"{res.evaluations} evaluations)")
    return EXIT_OK


def cmd_whatif(args):
    topo = netmodel.Topology.load(args.topo)
    tm = netmodel.TrafficMatrix.load(args.tm)
    candidate = netmodel.SplitPolicy.load(args.policy)
    model = kplane.MlpModel.load(args.model)
    state = controller.ControllerState(topo, candidate)
    state.bind_model(model)
    if args.intent:
        state.set_intent(_load_intent(args.intent, topo))
    digest_before = state.state_digest()
    delays, verdicts = state.what_if(candidate, tm)
    digest_after = state.state_digest()
    out = _out_dir(args)
    jsonio.dump_file(out / "whatif.json", {
        "schema_version": jsonio.SCHEMA_VERSION,
        "kind": "whatif",
        "predicted_delays": delays.to_doc(),
        "verdicts": [v.as_dict() for v in verdicts],
        "state_digest_before": digest_before,
        "state_digest_after": digest_after,
        "state_unchanged": digest_before == digest_after,
    })
    _write_runconfig(out, "whatif", args)
    print(f"predicted mean delay {delays.mean()*1e3:.3f} ms; "
          f"{sum(v.ok for v in verdicts)}/{len(verdicts)} constraints satisfied; "
          f"state unchanged: {digest_before == digest_after}")
    return EXIT_OK


def cmd_intent_apply(args):
    topo = netmodel.Topology.load(args.topo)
    tm = netmodel.TrafficMatrix.load(args.tm)
    model = kplane.MlpModel.load(args.model)
    ast = _load_intent(args.intent, topo)
    pol0 = (netmodel.SplitPolicy.load(args.policy) if args.policy
            else netmodel.gen_policy(args.seed, topo))
    ctrl = controller.ControllerState(topo, pol0)
    ctrl.bind_model(model)
    ctrl.set_intent(ast)
    store = None
    if args.store:
        store = telemetry.SampleStore.open_or_create(args.store, topo)
    res = optimizer.closed_loop_step(ast, tm, model, topo, ctrl,
                                     budget=args.budget, seed=args.seed,
                                     store=store, force=args.force)
    out = _out_dir(args)
    ctrl.save(out / "controller-state.json")
    res.policy.save(out / "applied.pol.json")
    doc = {
        "schema_version": jsonio.SCHEMA_VERSION,
        "kind": "closed_loop_result",
        "applied": res.applied,
        "before_mean_delay_s": res.before.mean(),
        "after_mean_delay_s": res.after.mean(),
        "improved": res.improved,
        "sample_id": res.sample_id,
    }
    if res.optimization is not None:
        doc["optimization"] = res.optimization.to_doc()
    jsonio.dump_file(out / "closed-loop.json", doc)
    _write_runconfig(out, "intent-apply", args)
    print(f"mean delay {res.before.mean()*1e3:.3f} -> {res.after.mean()*1e3:.3f} ms "
          f"(applied={res.applied})")
    return EXIT_OK


def cmd_vnf_gen(args):
    profile = vnfmodel.PROFILES[args.profile]
    if args.noise_free:
        profile = profile.without_noise()
    ds = vnfmodel.gen_vnf_dataset(profile, args.n_batches, args.seed)
    out = _out_dir(args)
    path = out / f"{profile.name}.dataset.json"
    ds.save(path)
    _write_runconfig(out, "vnf-gen", args)
    print(f"wrote {path}: {ds.n_rows} batches, "
          f"median cpu {float(np.median(ds.Y)):.1f}%")
    return EXIT_OK


def cmd_vnf_train(args):
    ds = telemetry.Dataset.load(args.dataset)
    train, test = telemetry.split(ds, args.train_size, args.test_size, args.seed)
    model = vnfmodel.fit_vnf(train, _train_config(args))
    out = _out_dir(args)
    model_path = out / "vnf-model.model.json"
    model.save(model_path)
    msg = f"wrote {model_path}"
    if test.n_rows:
        rep = vnfmodel.evaluate_vnf(model, test)
        jsonio.dump_file(out / "vnf-train-metrics.json", {
            "schema_version": jsonio.SCHEMA_VERSION,
            "kind": "vnf_metrics",
            **rep.as_dict(),
        })
        msg += (f"; median rel err {rep.percentiles[50]:.4f}, "
                f"p95 {rep.percentiles[95]:.4f}")
    _write_runconfig(out, "vnf-train", args)
    print(msg)
    return EXIT_OK


def cmd_vnf_eval(args):
    model = kplane.MlpModel.load(args.model)
    ds = telemetry.Dataset.load(args.dataset)
    rep = vnfmodel.evaluate_vnf(model, ds)
    out = _out_dir(args)
    jsonio.dump_file(out / "vnf-eval-metrics.json", {
        "schema_version": jsonio.SCHEMA_VERSION,
        "kind": "vnf_metrics",
        **rep.as_dict(),
    })
    cdf_path = out / "error-cdf.csv"
    vnfmodel.write_error_cdf(cdf_path, vnfmodel.error_cdf(rep.rel_errors))
    _write_runconfig(out, "vnf-eval", args)
    print(f"{ds.n_rows} rows: median rel err {rep.percentiles[50]:.4f}, "
          f"p90 {rep.percentiles[90]:.4f}, p95 {rep.percentiles[95]:.4f}; "
          f"wrote {cdf_path}")
    return EXIT_OK


# ---------------------------------------------------------------- repro


def _default_topology():
    return netmodel.gen_topology(DEFAULTS.topo_seed)


def _collected_dataset(out, topo, n_samples, seed):
    store_path = out / "samples.samples.jsonl"
    store = telemetry.SampleStore.open_or_create(store_path, topo)
    missing = n_samples - len(store)
    if missing > 0:
        log.info("collecting %d samples", missing)
        telemetry.collect(topo, missing, seed, store=store)
    return telemetry.to_dataset(store)


def cmd_repro_fig4(args):
    out = _out_dir(args)
    topo = _default_topology()
    ds = _collected_dataset(out, topo, max(CURVE_SIZES) + 300, args.seed)
    rows = kplane.learning_curve(ds, list(CURVE_SIZES),
                                 kplane.TrainConfig(seed=args.seed),
                                 test_size=300)
    path = out / "fig4.csv"
    _write_curve_csv(path, rows)
    _write_runconfig(out, "repro-fig4", args)
    mses = [r[1] for r in rows]
    sm = kplane.smoothed(mses, 2)
    decreasing = all(sm[i + 1] < sm[i] for i in range(len(sm) - 1))
    for size, mse, rel in rows:
        print(f"  {size:>6} samples: mse {mse:.4e}, rel err {rel:.4f}")
    print(f"wrote {path}; smoothed MSE decreasing: {decreasing}; "
          f"MSE ratio (9600/600): {mses[-1] / mses[0]:.3f}")
    return EXIT_OK if decreasing else EXIT_ERROR


def cmd_repro_overlay_error(args):
    out = _out_dir(args)
    topo = _default_topology()
    ds = _collected_dataset(out, topo, args.train_size + args.test_size, args.seed)
    train, test = telemetry.split(ds, args.train_size, args.test_size, seed=1)
    model = kplane.fit(train, kplane.TrainConfig(seed=1))
    model.save(out / "model.model.json")
    met = kplane.evaluate(model, test)
    ok = met.mean_rel_err <= OVERLAY_ERROR_THRESHOLD
    jsonio.dump_file(out / "overlay-error.json", {
        "schema_version": jsonio.SCHEMA_VERSION,
        "kind": "overlay_error",
        "train_size": args.train_size,
        "test_size": args.test_size,
        "mean_rel_err": met.mean_rel_err,
        "threshold": OVERLAY_ERROR_THRESHOLD,
        "pass": ok,
    })
    _write_runconfig(out, "repro-overlay-error", args)
    print(f"mean relative delay error at {args.train_size} training samples: "
          f"{met.mean_rel_err:.4f} -> {'PASS' if ok else 'FAIL'} "
          f"(threshold {OVERLAY_ERROR_THRESHOLD})")
    return EXIT_OK if ok else EXIT_ERROR


def cmd_repro_closed_loop(args):
    out = _out_dir(args)
    topo = _default_topology()
    ds = _collected_dataset(out, topo, 3300, args.seed)
    train, test = telemetry.split(ds, 3000, 300, seed=1)
    model = kplane.fit(train, kplane.TrainConfig(seed=1))
    ast = intent_mod.parse("minimize mean_delay", topo)
    rows = []
    wins = 0
    for s in range(10):
        tm = netmodel.gen_traffic((100, s), topo)
        pol0 = netmodel.gen_policy((200, s), topo)
        ctrl = controller.ControllerState(topo, pol0)
        ctrl.bind_model(model)
        res = optimizer.closed_loop_step(ast, tm, model, topo, ctrl,
                                         budget=args.budget, seed=s)
        wins += res.improved
        rows.append((s, res.before.mean(), res.after.mean(), res.improved))
        print(f"  seed {s}: {res.before.mean()*1e3:.3f} -> "
              f"{res.after.mean()*1e3:.3f} ms "
              f"({'improved' if res.improved else 'no improvement'})")
    with open(out / "closed-loop.csv", "w") as fh:
        fh.write("seed,before_mean_s,after_mean_s,improved\n")
        for s, b, a, i in rows:
            fh.write(f"{s},{b!r},{a!r},{int(i)}\n")
    _write_runconfig(out, "repro-closed-loop", args)
    ok = wins >= 9
    print(f"improved in {wins}/10 seeds -> {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_ERROR


# ---------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(
        prog="kdn",
        description="Overlay-network learning and control testbed",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add_out(sp):
        sp.add_argument("--out", default=".", help="output directory")

    topo = sub.add_parser("topo", help="topology commands").add_subparsers(
        dest="sub", required=True)
    g = topo.add_parser("gen", help="generate a random topology")
    g.add_argument("--seed", type=int, default=DEFAULTS.topo_seed)
    g.add_argument("--n-overlay", type=int, default=DEFAULTS.n_overlay)
    g.add_argument("--n-underlay", type=int, default=DEFAULTS.n_underlay)
    g.add_argument("--n-links", type=int, default=DEFAULTS.n_links,
                   help="bidirectional connections (stored as directed pairs)")
    add_out(g)
    g.set_defaults(func=cmd_topo_gen)

    dataset = sub.add_parser("dataset", help="telemetry collection").add_subparsers(
        dest="sub", required=True)
    g = dataset.add_parser("gen", help="collect samples into a store")
    g.add_argument("--topo", required=True)
    g.add_argument("--store", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n-samples", type=int, required=True)
    g.add_argument("--backend", choices=("analytic", "des"), default="analytic")
    g.add_argument("--demand-min", type=float, default=DEFAULTS.demand_range[0])
    g.add_argument("--demand-max", type=float, default=DEFAULTS.demand_range[1])
    add_out(g)
    g.set_defaults(func=cmd_dataset_gen)

    g = sub.add_parser("train", help="fit the delay model from a store")
    g.add_argument("--store", required=True)
    g.add_argument("--train-size", type=int, default=3000)
    g.add_argument("--test-size", type=int, default=300)
    g.add_argument("--seed", type=int, default=0)
    add_out(g)
    g.set_defaults(func=cmd_train)

    g = sub.add_parser("eval", help="evaluate a model against a store")
    g.add_argument("--model", required=True)
    g.add_argument("--store", required=True)
    g.add_argument("--test-size", type=int, default=0,
                   help="carve this many rows as the test set (0: all rows)")
    g.add_argument("--seed", type=int, default=0)
    add_out(g)
    g.set_defaults(func=cmd_eval)

    g = sub.add_parser("curve", help="learning curve over training sizes")
    g.add_argument("--store", required=True)
    g.add_argument("--sizes", default=",".join(str(s) for s in CURVE_SIZES))
    g.add_argument("--test-size", type=int, default=300)
    g.add_argument("--seed", type=int, default=0)
    add_out(g)
    g.set_defaults(func=cmd_curve)

    g = sub.add_parser("optimize", help="search split policies for an intent")
    g.add_argument("--topo", required=True)
    g.add_argument("--tm", required=True)
    g.add_argument("--intent", required=True, help="intent file or inline text")
    g.add_argument("--model", help="surrogate model; omit for oracle mode")
    g.add_argument("--budget", type=int, default=DEFAULTS.opt_budget)
    g.add_argument("--restarts", type=int, default=DEFAULTS.opt_restarts)
    g.add_argument("--seed", type=int, default=0)
    add_out(g)
    g.set_defaults(func=cmd_optimize)

    g = sub.add_parser("whatif", help="predict delays for a candidate policy")
    g.add_argument("--topo", required=True)
    g.add_argument("--model", required=True)
    g.add_argument("--tm", required=True)
    g.add_argument("--policy", required=True, help="candidate policy file")
    g.add_argument("--intent", help="intent supplying constraint verdicts")
    add_out(g)
    g.set_defaults(func=cmd_whatif)

    ig = sub.add_parser("intent", help="intent commands").add_subparsers(
        dest="sub", required=True)
    g = ig.add_parser("apply", help="one closed-loop optimization step")
    g.add_argument("--topo", required=True)
    g.add_argument("--tm", required=True)
    g.add_argument("--model", required=True)
    g.add_argument("--intent", required=True)
    g.add_argument("--policy", help="initial policy (default: seeded random)")
    g.add_argument("--store", help="append the post-step observation here")
    g.add_argument("--budget", type=int, default=DEFAULTS.opt_budget)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--force", action="store_true",
                   help="apply even if predicted infeasible")
    add_out(g)
    g.set_defaults(func=cmd_intent_apply)

    vnf = sub.add_parser("vnf", help="VNF CPU model pipeline").add_subparsers(
        dest="sub", required=True)
    g = vnf.add_parser("gen", help="generate a synthetic VNF dataset")
    g.add_argument("--profile", choices=sorted(vnfmodel.PROFILES), required=True)
    g.add_argument("--n-batches", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--noise-free", action="store_true")
    add_out(g)
    g.set_defaults(func=cmd_vnf_gen)
    g = vnf.add_parser("train", help="fit a CPU regressor")
    g.add_argument("--dataset", required=True)
    g.add_argument("--train-size", type=int, default=900)
    g.add_argument("--test-size", type=int, default=200)
    g.add_argument("--seed", type=int, default=0)
    add_out(g)
    g.set_defaults(func=cmd_vnf_train)
    g = vnf.add_parser("eval", help="evaluate a CPU regressor, emit error CDF")
    g.add_argument("--model", required=True)
    g.add_argument("--dataset", required=True)
    add_out(g)
    g.set_defaults(func=cmd_vnf_eval)

    repro = sub.add_parser("repro", help="end-to-end reproduction runs").add_subparsers(
        dest="sub", required=True)
    g = repro.add_parser("fig4", help="learning-curve table")
    g.add_argument("--seed", type=int, default=42)
    add_out(g)
    g.set_defaults(func=cmd_repro_fig4)
    g = repro.add_parser("overlay-error", help="3000-sample accuracy check")
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--train-size", type=int, default=3000)
    g.add_argument("--test-size", type=int, default=300)
    add_out(g)
    g.set_defaults(func=cmd_repro_overlay_error)
    g = repro.add_parser("closed-loop", help="ten-seed improvement check")
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--budget", type=int, default=DEFAULTS.opt_budget)
    add_out(g)
    g.set_defaults(func=cmd_repro_closed_loop)

    return p


def main(argv=None):
    level = os.environ.get("KDN_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SchemaError, IntentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (InstabilityError, ResampleBudgetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    except (NonFiniteLossError, TrainingFailureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except KdnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
