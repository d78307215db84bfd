"""Command-line front end: run experiments, persist results, render reports.

Every subcommand resolves a JSON config (packaged default unless --config is
given), runs deterministically from the recorded seeds, writes its data files
atomically, and finishes by writing exactly one manifest.json into the output
directory. Re-running a finished experiment from its manifest reproduces the
CSV outputs byte for byte.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from importlib import resources

import numpy as np

from . import __version__
from .control import ControlConfig, run_control_loop
from .errors import TsmDitherError
from . import experiments as xp
from .plant import PlantParams
from .signals import metric_report
from .tcn import TcnConfig, curve_to_csv, load_checkpoint, train
from .trajgen import trajectory_for_samples

EXIT_OK = 0
EXIT_FAILED = 1     # experiment ran, an assertion or simulation failed
EXIT_USAGE = 2      # bad invocation: unknown flags, unreadable config


class ConfigError(Exception):
    """Unusable config file; message carries a schema pointer."""


# -- config plumbing ----------------------------------------------------------


def default_config_path() -> str:
    return str(resources.files("tsm_dither").joinpath("data/default_config.json"))


def load_config(path=None) -> tuple[dict, str, str]:
    """Returns (config dict, resolved path, sha256 of the file bytes)."""
    resolved = os.path.abspath(path if path is not None else default_config_path())
    if not os.path.isfile(resolved):
        raise ConfigError(f"config file not found: {resolved}")
    with open(resolved, "rb") as fh:
        raw = fh.read()
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {resolved} is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {resolved}: top level must be an object")
    return cfg, resolved, hashlib.sha256(raw).hexdigest()


def _section(cfg: dict, key: str) -> dict:
    if key not in cfg or not isinstance(cfg[key], dict):
        raise ConfigError(f"config['{key}']: missing or not an object")
    return cfg[key]


def plant_from_config(cfg: dict) -> PlantParams:
    try:
        return PlantParams.from_json(_section(cfg, "plant"))
    except (KeyError, TypeError, ValueError, TsmDitherError) as e:
        raise ConfigError(f"config['plant']: {e}") from e


def control_from_config(cfg: dict) -> ControlConfig:
    try:
        return ControlConfig.from_json(_section(cfg, "control"))
    except (KeyError, TypeError, ValueError, TsmDitherError) as e:
        raise ConfigError(f"config['control']: {e}") from e


def _cfg_get(cfg: dict, section: str, key: str):
    sec = _section(cfg, section)
    if key not in sec:
        raise ConfigError(f"config['{section}']['{key}']: missing")
    return sec[key]


def tcn_config_from(cfg: dict, size: int, seed: int, epochs=None) -> TcnConfig:
    tr = _section(cfg, "training")
    tiers = tr.get("tiers", {})
    if str(size) not in tiers:
        raise ConfigError(f"config['training']['tiers']['{size}']: missing")
    e = int(epochs if epochs is not None else tr.get("train_epochs", 60))
    return TcnConfig(
        length=int(tr.get("window", 40)),
        kernel_size=int(tr.get("kernel_size", 3)),
        channels=tuple(int(c) for c in tiers[str(size)]),
        lr=float(tr.get("lr", 1e-3)),
        batch=int(tr.get("batch", 64)),
        epochs=e, patience=e, seed=seed,
    )


# -- atomic output ------------------------------------------------------------


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: str, obj) -> None:
    _atomic_write(path, json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _write_csv_rows(path: str, header: str, rows) -> None:
    lines = [header]
    for row in rows:
        lines.append(",".join(f"{v:.12g}" if isinstance(v, float) else str(v)
                              for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_manifest(out_dir: str, command: str, config_path: str,
                   config_sha256: str, seeds, t_start: float,
                   args: dict) -> None:
    """Written last: a manifest marks a completed, reproducible run."""
    _write_json(os.path.join(out_dir, "manifest.json"), {
        "command": command,
        "config_path": config_path,
        "config_sha256": config_sha256,
        "seeds": list(seeds),
        "out_dir": os.path.abspath(out_dir),
        "version": __version__,
        "duration_s": time.time() - t_start,
        "args": args,
    })


# -- plotting -----------------------------------------------------------------


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "tsm-dither"
    return plt


def _save_svg(fig, path: str) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})


def _plot_sweep(rep: xp.ExperimentReport, path: str) -> None:
    plt = _plt()
    rows = rep.simulated["rows"]
    ref = rep.hardware_reference["rows"]
    f = [r["freq_hz"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    ax1.plot(f, [r["rmse_mm"] for r in rows], "o-", label="simulated")
    ax1.plot([r["freq_hz"] for r in ref], [r["rmse_mm"] for r in ref],
             "s--", label="hardware ref")
    ax1.set_xlabel("dither frequency (Hz)")
    ax1.set_ylabel("tracking RMSE (mm)")
    ax1.legend()
    ax2.plot(f, [r["norm_corr"] for r in rows], "o-", label="simulated")
    ax2.plot([r["freq_hz"] for r in ref], [r["norm_corr"] for r in ref],
             "s--", label="hardware ref")
    ax2.set_xlabel("dither frequency (Hz)")
    ax2.set_ylabel("normalized correlation")
    ax2.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def _plot_sinusoid(rep: xp.ExperimentReport, path: str) -> None:
    plt = _plt()
    cells = rep.simulated["cells"]
    names = sorted({k.split("@")[0] for k in cells})
    off = [cells[f"{n}@0Hz"]["gain"] for n in names]
    on = [cells[f"{n}@{xp.STUDY_VIB_FREQ_HZ:g}Hz"]["gain"] for n in names]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(6, 3.4))
    ax.bar(x - 0.2, off, width=0.4, label="dither off")
    ax.bar(x + 0.2, on, width=0.4, label=f"{xp.STUDY_VIB_FREQ_HZ:g} Hz dither")
    ax.set_xticks(x, names, rotation=20)
    ax.set_ylabel("fundamental gain")
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def _plot_ablation(rep: xp.ExperimentReport, path: str) -> None:
    plt = _plt()
    summary = rep.simulated["summary"]
    tiers = sorted(int(t) for t in summary)
    fig, ax = plt.subplots(figsize=(6, 3.4))
    for cond, marker in (("no_vib", "o"), ("vib", "s")):
        mean = [summary[str(t)][cond]["mean_val_mse"] for t in tiers]
        std = [summary[str(t)][cond]["std_val_mse"] for t in tiers]
        ax.errorbar(tiers, mean, yerr=std, marker=marker, capsize=3, label=cond)
    for t, (nv, vb) in rep.hardware_reference["val_mse_no_vib_vs_vib"].items():
        ax.plot([int(t)], [nv], "x", color="tab:blue")
        ax.plot([int(t)], [vb], "x", color="tab:orange")
    ax.set_xscale("log")
    ax.set_xlabel("parameter count")
    ax.set_ylabel("validation MSE (mm^2)")
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


def _plot_deploy(rep: xp.ExperimentReport, path: str) -> None:
    plt = _plt()
    tiers = rep.simulated["tiers"]
    names = sorted(int(t) for t in tiers)
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(6, 3.4))
    for i, cond in enumerate(xp.CONDITIONS):
        mae = [tiers[str(t)][cond]["mae_mm"] for t in names]
        ax.bar(x + (i - 0.5) * 0.4, mae, width=0.4, label=cond)
        ax.axhline(rep.simulated["uncompensated"][cond]["mae_mm"],
                   linestyle="--", color=f"C{i}", alpha=0.6)
    ax.set_xticks(x, [str(n) for n in names])
    ax.set_xlabel("model size tier (dashed: uncompensated)")
    ax.set_ylabel("tracking MAE (mm)")
    ax.legend()
    fig.tight_layout()
    _save_svg(fig, path)
    plt.close(fig)


# -- subcommands ----------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg, path, sha = load_config(args.config)
    params = plant_from_config(cfg)
    ctrl = control_from_config(cfg)
    t0 = time.time()
    os.makedirs(args.out, exist_ok=True)
    traj = trajectory_for_samples(args.samples, seed=args.seed,
                                  sample_rate_hz=ctrl.rate_motion_hz)
    try:
        log = run_control_loop(traj, params, ctrl, args.freq)
    except TsmDitherError as e:
        print(f"simulation failed: {e}", file=sys.stderr)
        return EXIT_FAILED
    tmp = os.path.join(args.out, "log.csv.tmp")
    log.to_csv(tmp)
    os.replace(tmp, os.path.join(args.out, "log.csv"))
    rep = metric_report(traj.values, log.p_meas)
    _write_json(os.path.join(args.out, "metrics.json"), {
        "metrics": rep.to_json(),
        "dissipation_j": log.dissipation_j,
        "vib_freq_hz": log.vib_freq_hz,
    })
    write_manifest(args.out, "simulate", path, sha, [args.seed], t0, {
        "seed": args.seed, "freq": args.freq, "samples": args.samples,
    })
    return EXIT_OK


def _finish_experiment(rep: xp.ExperimentReport, out_dir: str, command: str,
                       config_path: str, sha: str, seeds, t0: float,
                       args_dict: dict, plot=None, plot_name=None) -> int:
    _write_json(os.path.join(out_dir, "report.json"), rep.to_json())
    if plot is not None:
        plot(rep, os.path.join(out_dir, plot_name))
    write_manifest(out_dir, command, config_path, sha, seeds, t0, args_dict)
    if not rep.passed:
        failed = [k for k, v in rep.assertions.items() if not v]
        print(f"{command}: failed assertions: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_freq_sweep(args) -> int:
    cfg, path, sha = load_config(args.config)
    t0 = time.time()
    os.makedirs(args.out, exist_ok=True)
    rep = xp.freq_sweep(seed=args.seed, plant_params=plant_from_config(cfg),
                        control_config=control_from_config(cfg))
    _write_csv_rows(
        os.path.join(args.out, "sweep.csv"),
        "freq_hz,rmse_mm,std_mm,mae_mm,pearson,norm_corr",
        [(r["freq_hz"], r["rmse_mm"], r["std_mm"], r["mae_mm"],
          r["pearson"], r["norm_corr"]) for r in rep.simulated["rows"]],
    )
    return _finish_experiment(rep, args.out, "freq-sweep", path, sha,
                              [args.seed], t0, {"seed": args.seed},
                              _plot_sweep, "sweep.svg")


def cmd_sinusoid(args) -> int:
    cfg, path, sha = load_config(args.config)
    t0 = time.time()
    os.makedirs(args.out, exist_ok=True)
    rep = xp.sinusoid_study(plant_params=plant_from_config(cfg),
                            control_config=control_from_config(cfg))
    rows = []
    for key in sorted(rep.simulated["cells"]):
        m = rep.simulated["cells"][key]
        cell, vib = key.split("@")
        rows.append((cell, vib.removesuffix("Hz"), m["gain"], m["lag_s"],
                     m["position_loop_area"], m["tension_spread"]))
    _write_csv_rows(
        os.path.join(args.out, "cells.csv"),
        "cell,vib_hz,gain,lag_s,position_loop_area,tension_spread", rows)
    return _finish_experiment(rep, args.out, "sinusoid-study", path, sha,
                              [], t0, {}, _plot_sinusoid, "sinusoid.svg")


def cmd_gen_data(args) -> int:
    cfg, path, sha = load_config(args.config)
    params = plant_from_config(cfg)
    ctrl = control_from_config(cfg)
    seed = args.seed if args.seed is not None else int(_cfg_get(cfg, "dataset", "seed"))
    n = int(_cfg_get(cfg, "dataset", "n_samples"))
    vib_freq = float(_cfg_get(cfg, "dataset", "train_vib_freq_hz"))
    t0 = time.time()
    os.makedirs(args.out, exist_ok=True)
    traj = trajectory_for_samples(n, seed=seed, sample_rate_hz=ctrl.rate_motion_hz)
    for cond, freq in (("no_vib", 0.0), ("vib", vib_freq)):
        log = run_control_loop(traj, params, ctrl, freq)
        tmp = os.path.join(args.out, f"{cond}.csv.tmp")
        log.to_csv(tmp)
        os.replace(tmp, os.path.join(args.out, f"{cond}.csv"))
    _write_json(os.path.join(args.out, "dataset.json"), {
        "seed": seed, "n_samples": n, "split": int(_cfg_get(cfg, "dataset", "split")),
        "conditions": {"no_vib": 0.0, "vib": vib_freq},
        "columns": "t_s,q_ref_mm,q_d_mm,p_meas_mm,T_in_N,T_out_N",
    })
    write_manifest(args.out, "gen-data", path, sha, [seed], t0,
                   {"seed": seed})
    return EXIT_OK


def _build_study_datasets(cfg: dict) -> tuple:
    ds_cfg = _section(cfg, "dataset")
    split = ds_cfg.get("split")
    return xp.build_datasets(
        seed=int(ds_cfg.get("seed", 7)),
        plant_params=plant_from_config(cfg),
        control_config=control_from_config(cfg),
        n_samples=int(ds_cfg.get("n_samples", xp.DATASET_SAMPLES)),
        split=None if split is None else int(split),
    )


def cmd_train(args) -> int:
    cfg, path, sha = load_config(args.config)
    cond = args.condition.replace("-", "_")
    t0 = time.time()
    os.makedirs(args.out, exist_ok=True)
    ds_nv, ds_v = _build_study_datasets(cfg)
    ds = ds_nv if cond == "no_vib" else ds_v
    tcfg = tcn_config_from(cfg, args.size, args.seed, args.epochs)
    model, curve = train(tcfg, ds.windows(tcfg.length))
    model.save(os.path.join(args.out, "checkpoint.json"))
    _atomic_write(os.path.join(args.out, "curve.csv"), curve_to_csv(curve))
    _write_json(os.path.join(args.out, "train.json"), {
        "condition": cond, "size": args.size,
        "best_val_mse": min(r.val_mse for r in curve),
        "epochs_run": len(curve),
    })
    write_manifest(args.out, "train", path, sha, [ds.seed, args.seed], t0, {
        "seed": args.seed, "condition": args.condition, "size": args.size,
        "epochs": args.epochs,
    })
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg, path, sha = load_config(args.config)
    tr = _section(cfg, "training")
    t0 = time.time()
    os.makedirs(args.out, exist_ok=True)
    ds_nv, ds_v = _build_study_datasets(cfg)
    rep, models = xp.ablate(
        ds_nv, ds_v,
        seeds=tuple(int(s) for s in tr.get("ablation_seeds", (0, 1, 2))),
        epochs=int(tr.get("ablation_epochs", xp.ABLATION_EPOCHS)),
    )
    rows = []
    for key in sorted(rep.simulated["cells"]):
        tier, cond, seed = key.split("/")
        rows.append((int(tier), cond, int(seed),
                     rep.simulated["cells"][key]["best_val_mse"]))
    rows.sort()
    _write_csv_rows(os.path.join(args.out, "grid.csv"),
                    "tier,condition,seed,best_val_mse", rows)
    ckpt_dir = os.path.join(args.out, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    for (tier, cond, seed), model in models.items():
        model.save(os.path.join(ckpt_dir, f"t{tier}_{cond}_s{seed}.json"))
    seeds = [ds_nv.seed] + [int(s) for s in tr.get("ablation_seeds", (0, 1, 2))]
    return _finish_experiment(rep, args.out, "ablate", path, sha, seeds, t0,
                              {}, _plot_ablation, "ablation.svg")


def cmd_compensate(args) -> int:
    cfg, path, sha = load_config(args.config)
    cond = args.condition.replace("-", "_")
    dp = _section(cfg, "deploy")
    seed = args.seed if args.seed is not None else int(dp.get("seed", 1234))
    t0 = time.time()
    os.makedirs(args.out, exist_ok=True)
    model = load_checkpoint(args.model)
    rep = xp.compensate(
        model, cond, deploy_seed=seed,
        n_samples=int(dp.get("n_samples", xp.DEPLOY_SAMPLES)),
        plant_params=plant_from_config(cfg),
        control_config=control_from_config(cfg),
    )
    return _finish_experiment(rep, args.out, "compensate", path, sha,
                              [seed], t0, {
                                  "seed": seed, "condition": args.condition,
                                  "model": os.path.abspath(args.model),
                              })


def cmd_report(args) -> int:
    """Combined summary: cheap studies run fresh, heavy ones read if present."""
    cfg, path, sha = load_config(args.config)
    t0 = time.time()
    os.makedirs(args.out, exist_ok=True)
    plant = plant_from_config(cfg)
    ctrl = control_from_config(cfg)
    sweep = xp.freq_sweep(seed=args.seed, plant_params=plant, control_config=ctrl)
    sinus = xp.sinusoid_study(plant_params=plant, control_config=ctrl)
    sections = {"freq_sweep": sweep.to_json(), "sinusoid_study": sinus.to_json()}
    _plot_sweep(sweep, os.path.join(args.out, "sweep.svg"))
    _plot_sinusoid(sinus, os.path.join(args.out, "sinusoid.svg"))
    ok = sweep.passed and sinus.passed
    for name, plot, svg in (("ablation", _plot_ablation, "ablation.svg"),
                            ("deployment", _plot_deploy, "deployment.svg")):
        found = _find_report(args.search, name)
        if found is not None:
            sections[name] = found.to_json()
            plot(found, os.path.join(args.out, svg))
            ok = ok and found.passed
    _write_json(os.path.join(args.out, "summary.json"), {
        "sections": sections, "all_passed": ok,
    })
    write_manifest(args.out, "report", path, sha, [args.seed], t0,
                   {"seed": args.seed, "search": args.search})
    if not ok:
        print("report: one or more included experiments failed", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def _find_report(search_dir, name: str):
    """Load a prior report.json with the given experiment name, if any."""
    if search_dir is None or not os.path.isdir(search_dir):
        return None
    for root, _dirs, files in sorted(os.walk(search_dir)):
        if "report.json" in files:
            try:
                with open(os.path.join(root, "report.json")) as fh:
                    d = json.load(fh)
            except (OSError, json.JSONDecodeError):
                continue
            if d.get("name") == name:
                return xp.ExperimentReport(
                    name=d["name"], simulated=d["simulated"],
                    assertions=d["assertions"], manifest=d["manifest"],
                    hardware_reference=d.get("hardware_reference", {}),
                )
    return None


def rerun_from_manifest(manifest_path: str, out_dir: str) -> int:
    """Replay a finished run into a fresh directory; outputs must match."""
    with open(manifest_path) as fh:
        man = json.load(fh)
    argv = [man["command"], "--config", man["config_path"], "--out", out_dir]
    a = man.get("args", {})
    for key in ("seed", "freq", "samples", "condition", "size", "epochs",
                "model", "search"):
        if a.get(key) is not None:
            argv += [f"--{key}", str(a[key])]
    return main(argv)


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tsm-dither",
        description="Tendon-sheath simulator: dither studies, inverse-model "
                    "training and compensation",
    )
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed_default=None):
        sp.add_argument("--config", default=None, metavar="PATH",
                        help="JSON config (default: packaged)")
        sp.add_argument("--out", required=True, metavar="DIR",
                        help="output directory")
        if seed_default is not ...:
            sp.add_argument("--seed", type=int, default=seed_default,
                            metavar="N")

    sp = sub.add_parser("simulate", help="one closed-loop episode")
    common(sp, seed_default=0)
    sp.add_argument("--freq", type=float, default=0.0, metavar="HZ",
                    help="dither frequency")
    sp.add_argument("--samples", type=int, default=1500, metavar="N")
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("freq-sweep", help="tracking metrics vs dither frequency")
    common(sp, seed_default=42)
    sp.set_defaults(fn=cmd_freq_sweep)

    sp = sub.add_parser("sinusoid-study", help="slow sinusoid grid, dither on/off")
    common(sp, seed_default=...)
    sp.set_defaults(fn=cmd_sinusoid)

    sp = sub.add_parser("gen-data", help="collect paired training datasets")
    common(sp, seed_default=None)
    sp.set_defaults(fn=cmd_gen_data)

    sp = sub.add_parser("train", help="fit one inverse model")
    common(sp, seed_default=0)
    sp.add_argument("--condition", required=True, choices=("vib", "no-vib"))
    sp.add_argument("--size", type=int, required=True,
                    choices=tuple(sorted(xp.TIER_CHANNELS)))
    sp.add_argument("--epochs", type=int, default=None, metavar="N")
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("ablate", help="size-tier x condition training grid")
    common(sp, seed_default=...)
    sp.set_defaults(fn=cmd_ablate)

    sp = sub.add_parser("compensate", help="deploy a trained inverse model")
    common(sp, seed_default=None)
    sp.add_argument("--condition", required=True, choices=("vib", "no-vib"))
    sp.add_argument("--model", required=True, metavar="PATH",
                    help="checkpoint from `train`")
    sp.set_defaults(fn=cmd_compensate)

    sp = sub.add_parser("report", help="combined JSON + SVG summary")
    common(sp, seed_default=42)
    sp.add_argument("--search", default=None, metavar="DIR",
                    help="directory scanned for prior ablate/deploy reports")
    sp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_USAGE
    except TsmDitherError as e:
        print(f"{args.command}: {e}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
