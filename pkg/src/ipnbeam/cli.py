"""ipnb command-line interface.

Exit codes: 0 success, 2 configuration/usage error, 3 tensor-format error,
4 numerical/solver error, 5 missing weights for a learned method.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import ConfigError, ScenarioConfig, desk_config, load_scenario, SEED_ENV_VAR
from .experiments import (
    ExperimentSpec,
    MissingScheduleError,
    emit_plot_data,
    export_dataset,
    run_experiment,
    scenario_rng,
    simulate_frames,
)
from .flopcount import count_flops
from .kddd import StepSizeSchedule, TrainConfig, init_from_fd, kddd_forward, kddd_train
from .solvers import AoConfig, SolverError, ao_ir_solve, fd_ir_solve, mse_objective, random_init
from .tensorio import TensorFormatError, read_tensor_file, write_tensor_file
from .tracking import ErrorModel, nearest_psd, nmse

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FORMAT = 3
EXIT_SOLVER = 4
EXIT_WEIGHTS = 5


def _load_cfg(path: str | None) -> ScenarioConfig:
    if path is None:
        cfg = desk_config()
        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed is not None:
            cfg = ScenarioConfig.from_dict({**json.loads(cfg.to_json()), "seed": int(env_seed)})
        return cfg
    return load_scenario(path)


def _cmd_simulate(args) -> int:
    cfg = _load_cfg(args.config)
    os.makedirs(args.out, exist_ok=True)
    rng = scenario_rng(cfg.seed, 0, 0)
    em = ErrorModel(rhoDb=args.rho) if args.rho is not None else None
    run = simulate_frames(
        cfg, rng, snapshots_per_frame=args.snapshots, error_model=em
    )
    write_tensor_file(
        os.path.join(args.out, "true_covs.ipnt"), run.true_covs,
        axes=["frame", "subcarrier", "rx", "rx"],
    )
    write_tensor_file(
        os.path.join(args.out, "est_covs.ipnt"), run.est_covs,
        axes=["frame", "subcarrier", "rx", "rx"],
    )
    write_tensor_file(
        os.path.join(args.out, "channels.ipnt"),
        np.stack([c.H for c in run.channels]),
        axes=["frame", "subcarrier", "rx", "tx"],
    )
    with open(os.path.join(args.out, "scenario.json"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_json())
    print(f"wrote {cfg.frames} frames to {args.out}")
    return EXIT_OK


def _cmd_export_dataset(args) -> int:
    cfg = _load_cfg(args.config)
    eval_rhos = tuple(float(v) for v in args.eval_rhos.split(",")) if args.eval_rhos else ()
    windows = args.frames if args.frames is not None else args.windows
    manifest = export_dataset(
        cfg,
        args.out,
        windows=windows,
        history=args.history,
        horizon=args.horizon,
        rho_db=args.rho,
        eval_rhos=eval_rhos,
        frame_stride=args.frame_stride,
    )
    total = sum(v.get("windows", 0) for v in manifest["files"].values())
    print(f"exported {total} windows across splits to {args.out}")
    return EXIT_OK


def _cmd_solve(args) -> int:
    cfg = _load_cfg(args.scenario)
    rng = scenario_rng(cfg.seed, 0, 0)
    em = ErrorModel(rhoDb=args.rho) if args.rho is not None else None
    run = simulate_frames(cfg, rng, frames=1, error_model=em)
    h = run.channels[0].H
    r_true = run.true_covs[0].R
    r_est = nearest_psd(run.est_covs[0].R) if em is not None else r_true

    if args.method == "fd":
        tx = fd_ir_solve(h, r_est, cfg.Ns)
    elif args.method == "ao":
        inner = tuple(int(v) for v in args.inner.split(","))
        init = random_init(cfg.X, cfg.ka_total, cfg.kb_total, cfg.KrfA, cfg.KrfB, cfg.Ns, rng)
        tx, _ = ao_ir_solve(h, r_est, AoConfig(len(inner), inner), init)
    elif args.method == "kddd":
        if not args.schedule:
            raise MissingScheduleError("method 'kddd' requires --schedule")
        sched = StepSizeSchedule.load(args.schedule)
        fd = fd_ir_solve(h, r_est, cfg.Ns)
        tx, _ = kddd_forward(h, r_est, sched, init_from_fd(fd, cfg.KrfA, cfg.KrfB))
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown method {args.method}")

    mse = mse_objective(tx, h, r_true)
    result = {"method": args.method, "mse": mse, "frames": 1, "seed": cfg.seed}
    print(json.dumps(result, indent=2))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=2)
    return EXIT_OK


def _cmd_train_kddd(args) -> int:
    config_path = args.config
    if config_path is None and args.data:
        candidate = os.path.join(args.data, "scenario.json")
        if os.path.exists(candidate):
            config_path = candidate
    cfg = _load_cfg(config_path)
    layers = tuple(int(v) for v in args.layers.split(","))
    tcfg = TrainConfig(
        layers=layers,
        epochs=args.epochs,
        batch=args.batch,
        train_size=args.train_size,
        valid_size=args.valid_size,
        test_size=args.test_size,
        learning_rate=args.lr,
    )
    need = tcfg.train_size + tcfg.valid_size + tcfg.test_size
    em = ErrorModel(rhoDb=args.rho) if args.rho is not None else None
    scenarios = []
    for s in range(need):
        rng = scenario_rng(cfg.seed, 0, s)
        run = simulate_frames(cfg, rng, frames=1, error_model=em)
        r = nearest_psd(run.est_covs[0].R) if em is not None else run.true_covs[0].R
        scenarios.append((run.channels[0].H, r))
    sched, report = kddd_train(
        scenarios, tcfg, ns=cfg.Ns, krf_a=cfg.KrfA, krf_b=cfg.KrfB,
        rng=scenario_rng(cfg.seed, 1, 0),
    )
    sched.save(args.out)
    curve_path = os.path.splitext(args.out)[0] + "_curve.csv"
    with open(curve_path, "w", encoding="utf-8") as fh:
        fh.write("layer,epoch,train_mse,valid_mse\n")
        for li, curve in enumerate(report.curves):
            for epoch, tr, va in curve:
                fh.write(f"{li + 1},{epoch},{tr!r},{va!r}\n")
    print(
        json.dumps(
            {
                "schedule": args.out,
                "curve": curve_path,
                "final_train_mse": report.final_train_loss,
                "final_valid_mse": report.final_valid_loss,
                "zero_schedule_train_mse": report.zero_schedule_train_loss,
            },
            indent=2,
        )
    )
    return EXIT_OK


def _cmd_sweep(args) -> int:
    with open(args.spec, "r", encoding="utf-8") as fh:
        spec = ExperimentSpec.from_json(fh.read())
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        spec = ExperimentSpec.from_json(json.dumps({**spec.echo(), "seed": int(env_seed)}))
    table = run_experiment(spec)
    written = emit_plot_data(table, args.out)
    print(f"wrote {len(written)} files to {args.out}")
    return EXIT_OK


def _cmd_flops(args) -> int:
    with open(args.dims, "r", encoding="utf-8") as fh:
        dims = json.load(fh)
    methods = args.methods.split(",") if args.methods else ["ao", "kddd"]
    out = {m: count_flops(m, dims) for m in methods}
    if "ao" in out and "kddd" in out:
        out["ratio_kddd_over_ao"] = (
            out["kddd"]["instrumented"]["total"] / out["ao"]["instrumented"]["total"]
        )
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _cmd_import_predictions(args) -> int:
    pred, pred_hdr = read_tensor_file(args.file, with_header=True)
    truth, _ = read_tensor_file(args.truth, with_header=True)
    if pred.shape != truth.shape:
        raise TensorFormatError(
            "shape mismatch", f"predictions {pred.shape} vs truth {truth.shape}"
        )
    pred = np.asarray(pred, dtype=complex)
    truth = np.asarray(truth, dtype=complex)

    def db(v):
        return 10.0 * float(np.log10(v)) if v > 0 else None

    overall = nmse(pred, truth)
    per_horizon = []
    if pred.ndim >= 4:  # (windows, horizon, ...) layout
        for l in range(pred.shape[1]):
            per_horizon.append(db(nmse(pred[:, l], truth[:, l])))
    result = {
        "nmse": overall,
        "nmseDb": db(overall),
        "per_horizon_db": per_horizon,
        "frames": pred_hdr.get("frame_ids", []),
    }
    print(json.dumps(result, indent=2))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(result, fh, indent=2)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ipnb", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate frames, channels and IPN covariances")
    s.add_argument("--config", help="scenario JSON (defaults to the desk-scale scenario)")
    s.add_argument("--out", required=True)
    s.add_argument("--snapshots", type=int, default=None, help="snapshot-average estimates")
    s.add_argument("--rho", type=float, default=None, help="Gaussian error level rho[dB]")
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("export-dataset", help="write training windows for the sequence trainer")
    s.add_argument("--config", help="scenario JSON")
    s.add_argument("--frames", type=int, default=None, help="alias of --windows")
    s.add_argument("--windows", type=int, default=200)
    s.add_argument("--history", type=int, default=10)
    s.add_argument("--horizon", type=int, default=3)
    s.add_argument("--rho", type=float, default=10.0)
    s.add_argument("--eval-rhos", default="", help="comma list of extra test error levels")
    s.add_argument("--frame-stride", type=int, default=64,
                   help="base frame intervals between tracked frames")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_export_dataset)

    s = sub.add_parser("solve", help="solve one scenario with a configured method")
    s.add_argument("--method", required=True, choices=["ao", "kddd", "fd"])
    s.add_argument("--scenario", help="scenario JSON")
    s.add_argument("--schedule", help="trained step-size schedule (kddd)")
    s.add_argument("--inner", default="5,2", help="AO inner step counts")
    s.add_argument("--rho", type=float, default=None)
    s.add_argument("--out")
    s.set_defaults(func=_cmd_solve)

    s = sub.add_parser("train-kddd", help="train the unfolded solver's step sizes")
    s.add_argument("--data", help="directory holding scenario.json (e.g. from 'ipnb simulate')")
    s.add_argument("--config", help="scenario JSON (overrides --data)")
    s.add_argument("--out", required=True)
    s.add_argument("--layers", default="5,2")
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--batch", type=int, default=32)
    s.add_argument("--train-size", type=int, default=128)
    s.add_argument("--valid-size", type=int, default=16)
    s.add_argument("--test-size", type=int, default=16)
    s.add_argument("--lr", type=float, default=0.05)
    s.add_argument("--rho", type=float, default=None)
    s.set_defaults(func=_cmd_train_kddd)

    s = sub.add_parser("sweep", help="run a sweep experiment from a spec file")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_sweep)

    s = sub.add_parser("flops", help="analytic + instrumented operation counts")
    s.add_argument("--dims", required=True, help="JSON with X, Ka, Kb, Krf, Ns, J")
    s.add_argument("--methods", default="")
    s.set_defaults(func=_cmd_flops)

    s = sub.add_parser("import-predictions", help="score predicted covariances vs truth")
    s.add_argument("--file", required=True, help="predictions .ipnt")
    s.add_argument("--truth", required=True, help="ground-truth .ipnt")
    s.add_argument("--out")
    s.set_defaults(func=_cmd_import_predictions)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TensorFormatError as exc:
        print(f"tensor format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except MissingScheduleError as exc:
        print(f"missing weights: {exc}", file=sys.stderr)
        return EXIT_WEIGHTS
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
