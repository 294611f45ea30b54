"""Track IPN covariances across frames: snapshot averaging error vs S, the
Gaussian error model, and the persistence baseline over the prediction horizon.

Run:  python demos/02_covariance_tracking.py
"""

import numpy as np

from ipnbeam import desk_config
from ipnbeam.experiments import scenario_rng, simulate_frames
from ipnbeam.interference import (
    gen_impulse_train,
    gen_ipn_snapshots,
    igs_arrival_angles,
    true_ipn_covariance,
)
from ipnbeam.tracking import IpnSeries, nmse, predict_persistence, snapshot_covariance

cfg = desk_config()
rng = scenario_rng(cfg.seed, 0, 1)
angles = igs_arrival_angles(cfg)
truth = true_ipn_covariance(cfg, angles)

print("== snapshot averaging: error vs snapshot count ==")
for s in (10, 50, 200, 1000):
    trains = [gen_impulse_train(cfg, rng, i) for i in range(s)]
    est = snapshot_covariance(gen_ipn_snapshots(cfg, trains, angles, s, rng)).R
    err = np.sum(np.abs(est - truth) ** 2) / np.sum(np.abs(truth) ** 2)
    print(f"S = {s:5d}: NMSE {err:.4f}  ({10 * np.log10(err):6.1f} dB)")

print("\n== persistence baseline vs horizon (clean history) ==")
run = simulate_frames(cfg, scenario_rng(cfg.seed, 0, 2), frames=10)
history = IpnSeries(run.true_covs.frames[:5])
pred = predict_persistence(history, 5)
for h in range(1, 6):
    score = nmse(
        IpnSeries([pred[h - 1]]).stack(), IpnSeries([run.true_covs[4 + h]]).stack()
    )
    print(f"horizon {h}: NMSE {score:.3e}  (drift grows with the lead time)")
