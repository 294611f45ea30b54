"""Compare the beamforming solvers on one scenario: the fully-digital bound,
truncated AO-IR(5,2), AO-IR run to convergence, and the unfolded forward pass
from the FD initialization.

Run:  python demos/03_beamforming_solvers.py
"""

import numpy as np

from ipnbeam import desk_config
from ipnbeam.experiments import scenario_rng, simulate_frames
from ipnbeam.kddd import StepSizeSchedule, init_from_fd, kddd_forward
from ipnbeam.solvers import AoConfig, ao_ir_solve, fd_ir_solve, mse_objective, random_init

cfg = desk_config()
run = simulate_frames(cfg, scenario_rng(cfg.seed, 0, 3), frames=1)
h, r = run.channels[0].H, run.true_covs[0].R

fd = fd_ir_solve(h, r, cfg.Ns)
print(f"FD-IR bound:          MSE {mse_objective(fd, h, r):.4f} "
      f"(converged={fd.converged} in {fd.iterations} alternations)")

init = random_init(cfg.X, cfg.ka_total, cfg.kb_total, cfg.KrfA, cfg.KrfB, cfg.Ns,
                   np.random.default_rng(1))
print(f"random hybrid init:   MSE {mse_objective(init, h, r):.4f}")

ao52, info = ao_ir_solve(h, r, AoConfig(2, (5, 2)), init)
print(f"AO-IR(5,2):           MSE {mse_objective(ao52, h, r):.4f} "
      f"(objective per outer: {[round(o, 4) for o in info.objectives]})")

aoc, info = ao_ir_solve(h, r, AoConfig(2, (5, 2), converge_tol=1e-8, max_outer=300), init)
print(f"AO-IR(converge):      MSE {mse_objective(aoc, h, r):.4f} "
      f"({len(info.objectives)} outer iterations)")

hinit = init_from_fd(fd, cfg.KrfA, cfg.KrfB)
print(f"FD-initialized hybrid: MSE {mse_objective(hinit, h, r):.4f}")
un, _ = kddd_forward(h, r, StepSizeSchedule.constant([5, 2], 0.1), hinit)
print(f"unfolded (gamma=0.1):  MSE {mse_objective(un, h, r):.4f} "
      f"(untrained constant step sizes)")
