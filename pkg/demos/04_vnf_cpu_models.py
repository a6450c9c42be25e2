"""
CPU demand models for virtual network functions
===============================================

The same learning machinery that predicts overlay delays also predicts
how much CPU a packet-processing function burns. Each profile below is
a synthetic ground truth for one VNF class; the question is whether a
model fed the full 86-feature traffic description beats the obvious
one-variable baseline (CPU vs flow count, or CPU vs packet count).
"""

import numpy as np

from kdn import (
    PROFILES,
    TrainConfig,
    error_cdf,
    evaluate_vnf,
    fit_vnf,
    gen_vnf_dataset,
    single_feature_view,
    split,
)

CFG = TrainConfig(hidden_units=32, max_epochs=200, seed=0)

print("profiles:")
for p in PROFILES.values():
    kind = "interacting" if p.interaction > 0 else "linear"
    print(f"  {p.name:12s} baseline {p.baseline_pct:.0f}%, "
          f"single-feature baseline uses '{p.single_feature}' ({kind})")

# One fit per profile, full feature set vs the single feature the
# profile nominates. 2% measurement noise on the CPU readings.
print(f"\n{'profile':12s} {'full p50':>9s} {'full p95':>9s} "
      f"{'single p50':>11s}  verdict")
reports = {}
for p in PROFILES.values():
    ds = gen_vnf_dataset(p, 1800, seed=21)
    train, test = split(ds, 1500, 300, seed=0)
    full = evaluate_vnf(fit_vnf(train, CFG), test)

    strain = single_feature_view(train, p.single_feature)
    stest = single_feature_view(test, p.single_feature)
    single = evaluate_vnf(fit_vnf(strain, CFG), stest)

    if full.metrics.mse < single.metrics.mse:
        verdict = f"full wins ({single.metrics.mse / full.metrics.mse:.1f}x lower MSE)"
    else:
        verdict = "single feature suffices"
    reports[p.name] = full
    print(f"{p.name:12s} {full.percentiles[50]*100:8.2f}% "
          f"{full.percentiles[95]*100:8.2f}% "
          f"{single.percentiles[50]*100:10.2f}%  {verdict}")

# switch-like has no flow/packet interaction term, so the one-variable
# model is already the right shape and the extra 85 columns buy little.

# Strip the noise and the full model should track the curve to within a
# few percent; what is left is pure approximation error.
fw = PROFILES["fw-like"].without_noise()
ds = gen_vnf_dataset(fw, 1800, seed=21)
train, test = split(ds, 1500, 300, seed=0)
clean = evaluate_vnf(fit_vnf(train, CFG), test)
print(f"\nfw-like without measurement noise: median rel err "
      f"{clean.percentiles[50]*100:.2f}%, p95 "
      f"{clean.percentiles[95]*100:.2f}%")

# The error CDF is the standard way to present these fits. Crude text
# rendering; the CSV writer emits the same points for real plotting.
cdf = error_cdf(reports["ids-like"].rel_errors)
print("\nids-like full-model error CDF:")
for target in (0.25, 0.5, 0.75, 0.9, 0.99):
    err = next(e for e, f in cdf if f >= target)
    bar = "#" * int(round(40 * target))
    print(f"  {target*100:3.0f}% of batches under {err*100:5.2f}% | {bar}")
