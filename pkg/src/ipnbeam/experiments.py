"""Batch experiment runner: scenario pipeline, sweeps, plot data and dataset export.

Per-scenario RNG streams come from a counter-based split of the master seed
(Philox with counter words [0, 0, point_index, scenario_index]), so parallel
and serial runs agree and reruns are byte-identical.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .channel import FrameChannel, evolve_paths, frame_interval, gen_frame_channel, init_path_state
from .config import ConfigError, ScenarioConfig, desk_config
from .interference import gen_impulse_train, gen_ipn_snapshots, igs_arrival_angles, true_ipn_covariance
from .kddd import StepSizeSchedule, init_from_fd, kddd_forward
from .solvers import AoConfig, ao_ir_solve, fd_ir_solve, mse_objective, random_init
from .tensorio import write_tensor_file
from .tracking import (
    ErrorModel,
    IpnCovariance,
    IpnSeries,
    nearest_psd,
    nmse,
    perturb_covariance,
    predict_persistence,
    snapshot_covariance,
)

SWEEP_VARIABLES = ("snrDb", "sirDb", "antennas", "rhoDb", "paths", "frameHorizon")
METRICS = ("mse", "nmseDb", "flops")


class MissingScheduleError(RuntimeError):
    """A learned method was requested without its trained weights."""


def scenario_rng(seed: int, point: int, scenario: int) -> np.random.Generator:
    """Counter-based stream split: disjoint Philox streams per (point, scenario)."""
    return np.random.Generator(
        np.random.Philox(key=seed & 0xFFFFFFFFFFFFFFFF, counter=[0, 0, point, scenario])
    )


# -- scenario pipeline -----------------------------------------------------------


@dataclass
class SimulationRun:
    channels: list[FrameChannel]
    true_covs: IpnSeries
    est_covs: IpnSeries


def simulate_frames(
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    *,
    frames: int | None = None,
    snapshots_per_frame: int | None = None,
    error_model: ErrorModel | None = None,
    frame_stride: int = 1,
) -> SimulationRun:
    """Roll the scenario forward frame by frame.

    Estimated covariances come from snapshot averaging when
    snapshots_per_frame is set, otherwise from the Gaussian error model when
    given, otherwise they equal the true covariances. frame_stride spaces the
    recorded frames by that many base frame intervals (tracking cadences are
    typically coarser than the channel frame).
    """
    frames = cfg.frames if frames is None else frames
    if frame_stride < 1:
        raise ConfigError("frame_stride must be >= 1")
    dt = frame_interval(cfg) * frame_stride
    state = init_path_state(cfg, rng)
    channels: list[FrameChannel] = []
    true_list: list[IpnCovariance] = []
    est_list: list[IpnCovariance] = []
    for t in range(frames):
        channels.append(gen_frame_channel(cfg, state, t))
        angles = igs_arrival_angles(cfg, state.ac_pos)
        true_cov = IpnCovariance(t=t, R=true_ipn_covariance(cfg, angles))
        true_list.append(true_cov)
        if snapshots_per_frame:
            trains = [gen_impulse_train(cfg, rng, symbol=s) for s in range(snapshots_per_frame)]
            snaps = gen_ipn_snapshots(cfg, trains, angles, snapshots_per_frame, rng)
            est_list.append(snapshot_covariance(snaps, t=t))
        elif error_model is not None:
            est_list.append(perturb_covariance(true_cov, error_model, rng))
        else:
            est_list.append(IpnCovariance(t=t, R=true_cov.R.copy()))
        if t + 1 < frames:
            state = evolve_paths(state, dt, cfg, rng)
    return SimulationRun(channels, IpnSeries(true_list), IpnSeries(est_list))


# -- sweeps ----------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    sweep: str
    values: tuple
    scenarios: int = 20
    methods: tuple[str, ...] = ("fd", "ao")
    seed: int = 0
    config: ScenarioConfig = field(default_factory=desk_config)
    ao_inner: tuple[int, ...] = (5, 2)
    schedule_path: str | None = None
    rhoDb: float | None = None          # estimation error fed to the solvers
    history_frames: int = 8             # persistence history for horizon sweeps

    def __post_init__(self):
        if self.sweep not in SWEEP_VARIABLES:
            raise ConfigError(f"unknown sweep variable {self.sweep!r}")
        if not self.values:
            raise ConfigError("sweep needs a nonempty value list")
        if self.scenarios < 1:
            raise ConfigError("scenario count must be >= 1")

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        d = json.loads(text)
        known = {
            "sweep", "values", "scenarios", "methods", "seed", "config",
            "ao_inner", "schedule_path", "rhoDb", "history_frames",
        }
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        if "config" in d:
            d["config"] = ScenarioConfig.from_dict(d["config"])
        for key in ("values", "methods", "ao_inner"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def echo(self) -> dict:
        d = asdict(self)
        d["config"] = json.loads(self.config.to_json())
        return d


@dataclass
class ResultRow:
    sweep_value: float
    method: str
    metric: str
    mean: float
    stddev: float
    n: int


@dataclass
class ResultTable:
    spec: ExperimentSpec
    rows: list[ResultRow] = field(default_factory=list)

    def select(self, method: str, metric: str) -> list[ResultRow]:
        return [r for r in self.rows if r.method == method and r.metric == metric]


def _antenna_grid(k: int) -> tuple[int, int]:
    rows = int(np.sqrt(k))
    while rows > 1 and k % rows:
        rows -= 1
    return rows, k // rows


def _cfg_for_point(spec: ExperimentSpec, value) -> ScenarioConfig:
    base = json.loads(spec.config.to_json())
    if spec.sweep == "snrDb":
        base["snrDb"] = float(value)
    elif spec.sweep == "sirDb":
        base["sirDb"] = float(value)
    elif spec.sweep == "antennas":
        base["Ka"] = list(_antenna_grid(int(value)))
        base["Kb"] = list(_antenna_grid(int(value)))
    elif spec.sweep == "paths":
        base["U"] = int(value)
    # rhoDb / frameHorizon leave the scenario untouched
    return ScenarioConfig.from_dict(base)


def _solve_methods(spec: ExperimentSpec, cfg, h, r_est, r_true, rng, schedule):
    out = {}
    ns = cfg.Ns
    for method in spec.methods:
        if method == "fd":
            fd = fd_ir_solve(h, r_est, ns)
            out[method] = mse_objective(fd, h, r_true)
        elif method == "ao":
            ao_cfg = AoConfig(outer_iters=len(spec.ao_inner), inner_iters=tuple(spec.ao_inner))
            init = random_init(cfg.X, cfg.ka_total, cfg.kb_total, cfg.KrfA, cfg.KrfB, ns, rng)
            tx, _ = ao_ir_solve(h, r_est, ao_cfg, init)
            out[method] = mse_objective(tx, h, r_true)
        elif method == "kddd":
            if schedule is None:
                raise MissingScheduleError("method 'kddd' requires --schedule (trained weights)")
            fd = fd_ir_solve(h, r_est, ns)
            init = init_from_fd(fd, krf_a=cfg.KrfA, krf_b=cfg.KrfB)
            tx, _ = kddd_forward(h, r_est, schedule, init)
            out[method] = mse_objective(tx, h, r_true)
        elif method == "persistence":
            continue
        else:
            raise ConfigError(f"unknown method {method!r}")
    return out


def run_experiment(spec: ExperimentSpec) -> ResultTable:
    """Sweep the configured variable; per point and scenario, simulate, estimate
    the IPN covariance, solve with each method on the estimate, and score the
    Eq.-style MSE against the true covariance (NMSE for the predictor rows).

    Deterministic given spec.seed; the frameHorizon sweep reuses the same
    scenario stream at every horizon so the comparison is paired.
    """
    schedule = StepSizeSchedule.load(spec.schedule_path) if spec.schedule_path else None
    table = ResultTable(spec=spec)

    for point, value in enumerate(spec.values):
        cfg = _cfg_for_point(spec, value)
        rho = float(value) if spec.sweep == "rhoDb" else spec.rhoDb
        em = ErrorModel(rhoDb=rho) if rho is not None else None
        per_method: dict[str, list[float]] = {m: [] for m in spec.methods}
        for s in range(spec.scenarios):
            stream_point = 0 if spec.sweep == "frameHorizon" else point
            rng = scenario_rng(spec.seed, stream_point, s)
            if spec.sweep == "frameHorizon":
                horizon = int(value)
                run = simulate_frames(
                    cfg, rng, frames=spec.history_frames + horizon, error_model=em
                )
                history = IpnSeries(run.est_covs.frames[: spec.history_frames])
                future = IpnSeries(run.true_covs.frames[spec.history_frames :])
                pred = predict_persistence(history, horizon)
                if "persistence" in per_method:
                    per_method["persistence"].append(
                        10.0 * np.log10(nmse(pred, future))
                    )
                continue
            run = simulate_frames(cfg, rng, frames=1, error_model=em)
            h = run.channels[0].H
            r_true = run.true_covs[0].R
            r_est = nearest_psd(run.est_covs[0].R) if em is not None else r_true
            for method, value_ in _solve_methods(
                spec, cfg, h, r_est, r_true, rng, schedule
            ).items():
                per_method[method].append(value_)

        for method in spec.methods:
            vals = np.asarray(per_method[method], dtype=float)
            if vals.size == 0:
                continue
            metric = "nmseDb" if method == "persistence" else "mse"
            table.rows.append(
                ResultRow(
                    sweep_value=float(value),
                    method=method,
                    metric=metric,
                    mean=float(vals.mean()),
                    stddev=float(vals.std()),
                    n=int(vals.size),
                )
            )
    return table


def emit_plot_data(table: ResultTable, out_dir: str | os.PathLike) -> list[str]:
    """One CSV per (metric, method) with header x,mean,stddev,n plus a JSON
    summary echoing the exact spec for reproducibility. Returns written paths."""
    if not table.rows:
        raise ValueError("empty result table")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    pairs = sorted({(r.metric, r.method) for r in table.rows})
    for metric, method in pairs:
        path = os.path.join(out_dir, f"{metric}_{method}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("x,mean,stddev,n\n")
            for row in table.select(method, metric):
                fh.write(f"{row.sweep_value!r},{row.mean!r},{row.stddev!r},{row.n}\n")
        written.append(path)
    summary = os.path.join(out_dir, "summary.json")
    with open(summary, "w", encoding="utf-8") as fh:
        json.dump({"spec": table.spec.echo(), "files": [os.path.basename(p) for p in written]},
                  fh, indent=2, sort_keys=True)
    written.append(summary)
    return written


# -- dataset export ---------------------------------------------------------------


def export_dataset(
    cfg: ScenarioConfig,
    out_dir: str | os.PathLike,
    *,
    windows: int,
    history: int,
    horizon: int,
    rho_db: float = 10.0,
    splits: tuple[float, float, float] = (0.8, 0.1, 0.1),
    eval_rhos: tuple[float, ...] = (),
    seed: int | None = None,
    frame_stride: int = 64,
) -> dict:
    """Write (noisy history, true future) window datasets for the sequence
    trainer as .ipnt tensors: <split>_history.ipnt [W, P, X, Ka, Ka] and
    <split>_future.ipnt [W, L, X, Ka, Ka].

    Each window draws an independent scenario with a high-mobility velocity
    spread U[300, 600] km/h and randomized node geometry; frame_stride spaces
    the tracked frames so the covariance series drifts perceptibly across the
    window. Extra evaluation variants of the test history at other error
    levels are emitted for each entry of eval_rhos (same windows, fresh error
    draws).
    """
    os.makedirs(out_dir, exist_ok=True)
    seed = cfg.seed if seed is None else seed
    base = json.loads(cfg.to_json())
    em = ErrorModel(rhoDb=rho_db)
    hist, fut = [], []
    eval_hists: dict[float, list[np.ndarray]] = {r: [] for r in eval_rhos}
    for w in range(windows):
        rng = scenario_rng(seed, 0, w)
        d = dict(base)
        d["velocity"] = float(rng.uniform(300.0, 600.0))
        ac = list(base["positions"]["ac"])
        ac[0] += float(rng.uniform(-500.0, 500.0))
        igs = list(base["positions"]["igs"])
        igs[0] += float(rng.uniform(-400.0, 400.0))
        igs[1] += float(rng.uniform(-400.0, 400.0))
        d["positions"] = {"lgs": base["positions"]["lgs"], "igs": igs, "ac": ac}
        wcfg = ScenarioConfig.from_dict(d)
        run = simulate_frames(
            wcfg, rng, frames=history + horizon, error_model=em, frame_stride=frame_stride
        )
        true_stack = run.true_covs.stack()
        hist.append(run.est_covs.stack()[:history])
        fut.append(true_stack[history:])
        for r in eval_rhos:
            em_r = ErrorModel(rhoDb=r)
            noisy = [
                perturb_covariance(run.true_covs[t], em_r, rng).R for t in range(history)
            ]
            eval_hists[r].append(np.stack(noisy))

    hist_arr = np.stack(hist)
    fut_arr = np.stack(fut)
    n_train = int(round(splits[0] * windows))
    n_valid = int(round(splits[1] * windows))
    bounds = {
        "train": slice(0, n_train),
        "valid": slice(n_train, n_train + n_valid),
        "test": slice(n_train + n_valid, windows),
    }
    axes_h = ["window", "frame", "subcarrier", "rx", "rx"]
    meta = {"P": history, "L": horizon, "rhoDb": rho_db, "seed": seed}
    files = {}
    for split, sl in bounds.items():
        if hist_arr[sl].shape[0] == 0:
            continue
        hp = os.path.join(out_dir, f"{split}_history.ipnt")
        fp = os.path.join(out_dir, f"{split}_future.ipnt")
        write_tensor_file(hp, hist_arr[sl], axes=axes_h, meta=meta)
        write_tensor_file(fp, fut_arr[sl], axes=axes_h, meta=meta)
        files[split] = {"history": hp, "future": fp, "windows": int(hist_arr[sl].shape[0])}
    for r in eval_rhos:
        arr = np.stack(eval_hists[r])[bounds["test"]]
        path = os.path.join(out_dir, f"test_history_rho{r:g}.ipnt")
        write_tensor_file(path, arr, axes=axes_h, meta={**meta, "rhoDb": r})
        files[f"test_rho{r:g}"] = {"history": path}
    manifest = {
        "config": base,
        "windows": windows,
        "history": history,
        "horizon": horizon,
        "rhoDb": rho_db,
        "eval_rhos": list(eval_rhos),
        "frame_stride": frame_stride,
        "seed": seed,
        "files": {k: {kk: os.path.basename(vv) if isinstance(vv, str) else vv
                      for kk, vv in v.items()} for k, v in files.items()},
    }
    with open(os.path.join(out_dir, "dataset.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest
