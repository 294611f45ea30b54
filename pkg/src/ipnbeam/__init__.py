"""Interference-robust broadband MIMO toolkit.

Simulates rapidly-varying air-to-ground MIMO channels under impulsive
interference, tracks interference-plus-noise (IPN) covariance matrices
across frames, and computes MSE-minimizing hybrid beamformers via
alternating optimization on the complex-circle manifold and via a
deep-unfolded solver with trained step sizes.
"""

from .config import ScenarioConfig, Positions, ConfigError, desk_config, load_scenario
from .arrays import upa_steering
from .channel import PathState, FrameChannel, evolve_paths, gen_frame_channel
from .interference import ImpulseTrain, IpnSnapshot, gen_impulse_train, gen_ipn_snapshots
from .tracking import (
    IpnCovariance,
    IpnSeries,
    ErrorModel,
    snapshot_covariance,
    perturb_covariance,
    nmse,
    nmse_db,
    predict_persistence,
    nearest_psd,
)
from .tensorio import write_tensor_file, read_tensor_file, TensorFormatError
from .manifold import riemannian_project, retract, tangent_step, armijo_search, ArmijoParams
from .solvers import (
    HybridTransceiver,
    FullDigitalTransceiver,
    AoConfig,
    SolverError,
    mse_objective,
    bb_combiner_closed_form,
    combiner_residual_objective,
    euclidean_grad_combiner,
    bb_precoder_closed_form,
    precoder_residual_objective,
    euclidean_grad_precoder,
    ao_ir_solve,
    fd_ir_solve,
    random_init,
)
from .kddd import StepSizeSchedule, TrainConfig, init_from_fd, kddd_forward, kddd_train
from .flopcount import FlopCounter, counting, count_flops

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
