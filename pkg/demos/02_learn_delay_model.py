"""
Learning the delay function from telemetry
==========================================

Collects (traffic, policy) -> delay observations into a JSONL store,
trains the one-hidden-layer network on them, and shows how accuracy
scales with training set size.
"""

import tempfile
from pathlib import Path

from kdn import (
    DEFAULTS,
    SampleStore,
    TrainConfig,
    collect,
    evaluate,
    fit,
    gen_topology,
    learning_curve,
    smoothed,
    split,
    to_dataset,
)

topo = gen_topology(DEFAULTS.topo_seed)
out = Path(tempfile.mkdtemp(prefix="kdn-demo-"))

# Telemetry samples are uniform random demand plus uniform random split
# ratios, kept only when every link stays under the stability margin.
# 2400 samples takes a few seconds with the analytic backend.
store = SampleStore.create(out / "samples.samples.jsonl", topo)
n = collect(topo, 2400, seed=42, store=store)
print(f"collected {n} samples -> {store.path}")

ds = to_dataset(store)
print(f"dataset: X {ds.X.shape} (demands + split ratios), Y {ds.Y.shape} (pair delays)")

# Train on 2000 rows, hold out 300. The model is deliberately plain:
# one sigmoid hidden layer, linear outputs, Adam, early stopping on a
# validation slice.
train, test = split(ds, 2000, 300, seed=0)
model = fit(train, TrainConfig(seed=0))
met = evaluate(model, test)
print(f"\nheld-out: mse {met.mse:.4e} (normalized), "
      f"mean relative delay error {met.mean_rel_err*100:.2f}%")
print(f"stopped at epoch {model.meta['best_epoch']}")

# The interesting question is the sample cost of that accuracy. Re-fit
# at growing training sizes against one fixed test set.
print("\nlearning curve:")
rows = learning_curve(ds, [300, 600, 1200, 2100], TrainConfig(seed=0),
                      test_size=300)
for size, mse, rel in rows:
    bar = "#" * int(rel * 400)
    print(f"  {size:>5} samples  rel err {rel*100:5.2f}%  {bar}")

sm = smoothed([m for _, m, _ in rows])
trend = "monotone" if all(a >= b for a, b in zip(sm, sm[1:])) else "noisy"
print(f"smoothed MSE trend: {trend}")
