"""Study drivers: dataset builds, dither sweeps, ablation training, deployment.

Each driver returns an ExperimentReport whose `simulated` payload holds only
numbers this package produced, with any hardware reference values kept in a
separate read-only field. The reference numbers come from a physical
tendon-sheath rig and exist purely for side-by-side display; no assertion
ever compares simulator output against them for equality.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from multiprocessing import get_context

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .control import ControlConfig, run_control_loop
from .errors import ConfigurationError
from .plant import PlantParams
from .signals import (TimeSeries, band_spread, hysteresis_loop_area, mae_std,
                      metric_report, normalize_correlations, phase_gain)
from .tcn import TcnConfig, TcnModel, WindowedDataset, exact_param_count, train
from .trajgen import TrajectorySpec, gen_sinusoid, trajectory_for_samples

# -- fixed study geometry ----------------------------------------------------

DATASET_SAMPLES = 15000
TRAIN_SAMPLES = 12000
WINDOW = 40
TRAIN_VIB_FREQ_HZ = 70.0     # dither applied while collecting the vib dataset
STUDY_VIB_FREQ_HZ = 33.0     # dither used by the sinusoid grid
SWEEP_FREQS_HZ = tuple(float(f) for f in range(0, 101, 10))
SWEEP_SAMPLES = 1500
DEPLOY_SAMPLES = 3500

# size tiers: constant width where a constant width lands inside +-10% of the
# target count; 1282 needs the mixed 6/7 profile (pure 6s or 7s both miss)
TIER_CHANNELS = {
    354: (3, 3, 3, 3, 3),
    1282: (6, 6, 6, 7, 7),
    4866: (13, 13, 13, 13, 13),
    18946: (26, 26, 26, 26, 26),
}
ABLATION_SEEDS = (0, 1, 2)
ABLATION_EPOCHS = 25
CALIBRATION_SEED = 8
CALIBRATION_SAMPLES = 2000
DEPLOY_SEED = 1234

CONDITIONS = ("no_vib", "vib")

# -- hardware reference values (display only, never asserted against) --------

# (freq Hz, RMSE mm, STD mm, normalized correlation)
HARDWARE_SWEEP_REFERENCE = (
    (0, 2.2345, 1.2090, 0.0000),
    (10, 1.9155, 1.1295, 0.8061),
    (20, 1.9466, 1.1246, 0.7665),
    (30, 1.9469, 1.1227, 0.7828),
    (40, 1.9083, 1.1050, 0.7277),
    (50, 1.9120, 1.1023, 0.7548),
    (60, 1.9466, 1.1351, 0.6206),
    (70, 1.7974, 1.0647, 1.0000),
    (80, 1.7561, 1.0550, 0.9666),
    (90, 1.7113, 1.0309, 0.7603),
    (100, 1.8366, 1.0958, 0.7099),
)
HARDWARE_BEST_RMSE_DROP_PCT = 23.41
HARDWARE_GAIN_RISE_PCT = 33.79

# smallest/largest tier validation MSE on the rig, (no_vib, vib)
HARDWARE_ABLATION_REFERENCE = {354: (0.1596, 0.091), 18946: (0.082, 0.048)}

# deployment MAE/STD in mm on the rig
HARDWARE_DEPLOY_REFERENCE = {
    "uncompensated": {"no_vib": (1.334, 0.964), "vib": (1.077, 0.692)},
    "compensated": {
        354: {"no_vib": (0.4336, 0.300), "vib": (0.2757, 0.184)},
        1282: {"no_vib": (0.3719, 0.253), "vib": (0.1984, 0.162)},
        4866: {"no_vib": (0.3913, 0.286), "vib": (0.2200, 0.195)},
        18946: {"no_vib": (0.3703, 0.257), "vib": (0.1969, 0.157)},
    },
}


# -- shared report shape ------------------------------------------------------


@dataclass
class ExperimentReport:
    name: str
    simulated: dict
    assertions: dict
    manifest: dict
    hardware_reference: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(bool(v) for v in self.assertions.values())

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "simulated": self.simulated,
            "hardware_reference": self.hardware_reference,
            "assertions": {k: bool(v) for k, v in self.assertions.items()},
            "passed": self.passed,
            "manifest": self.manifest,
        }


def condition_freq(condition: str) -> float:
    if condition == "no_vib":
        return 0.0
    if condition == "vib":
        return TRAIN_VIB_FREQ_HZ
    raise ConfigurationError(f"condition must be one of {CONDITIONS}, got {condition!r}")


# -- worker pool --------------------------------------------------------------


def worker_count(explicit=None) -> int:
    """Resolve the experiment fan-out: explicit arg, env cap, then cpu count."""
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get("TSM_DITHER_THREADS")
    if env is not None:
        return max(1, int(env))
    return os.cpu_count() or 1


def _single_threaded_blas() -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = "1"


def _parallel_map(fn, items: list, workers: int) -> list:
    """Order-preserving map; forks a spawn-based pool only when it can help."""
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(
        max_workers=min(workers, len(items)),
        mp_context=get_context("spawn"),
        initializer=_single_threaded_blas,
    ) as pool:
        return list(pool.map(fn, items))


# -- datasets ------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """One collected condition: the command trajectory and what the plant did."""

    condition: str
    vib_freq_hz: float
    p_cmd: np.ndarray
    p_meas: np.ndarray
    seed: int
    split: int = TRAIN_SAMPLES

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ConfigurationError(f"condition must be one of {CONDITIONS}")
        if len(self.p_cmd) != len(self.p_meas):
            raise ConfigurationError("p_cmd and p_meas lengths differ")
        if not 0 < self.split < len(self.p_cmd):
            raise ConfigurationError("split must cut the series in two")

    @property
    def n(self) -> int:
        return int(len(self.p_cmd))

    def windows(self, length: int = WINDOW) -> WindowedDataset:
        """Inverse-model pairs: measured history window -> command at its end.

        Window t covers p_meas[t-length+1 .. t] and targets p_cmd[t]; the
        train/validation boundary falls at the fixed sample split, so the
        validation rows never see training-time measurements.
        """
        x = sliding_window_view(self.p_meas, length)
        y = self.p_cmd[length - 1:]
        n_train = self.split - (length - 1)
        return WindowedDataset(
            np.ascontiguousarray(x, dtype=np.float64),
            np.asarray(y, dtype=np.float64),
            n_train,
        )


def build_datasets(seed: int, plant_params: PlantParams | None = None,
                   control_config: ControlConfig | None = None,
                   n_samples: int = DATASET_SAMPLES,
                   split: int | None = None) -> tuple[Dataset, Dataset]:
    """Collect the paired conditions over one shared random trajectory.

    split defaults to 80% of the samples, which reproduces the stock
    TRAIN_SAMPLES boundary at the stock dataset size.
    """
    params = plant_params if plant_params is not None else PlantParams()
    cfg = control_config if control_config is not None else ControlConfig()
    if split is None:
        split = int(round(0.8 * n_samples))
    traj = trajectory_for_samples(n_samples, seed=seed)
    out = []
    for condition in CONDITIONS:
        freq = condition_freq(condition)
        log = run_control_loop(traj, params, cfg, freq)
        out.append(Dataset(
            condition=condition, vib_freq_hz=freq,
            p_cmd=traj.values.copy(), p_meas=log.p_meas.copy(), seed=seed,
            split=split,
        ))
    return out[0], out[1]


# -- frequency sweep -----------------------------------------------------------


def _sweep_cell(args):
    freq, traj_t0, traj_dt, traj_values, params_json, cfg_json = args
    traj = TimeSeries(t0=traj_t0, dt=traj_dt, values=np.asarray(traj_values), unit="mm")
    params = PlantParams.from_json(params_json)
    cfg = ControlConfig.from_json(cfg_json)
    log = run_control_loop(traj, params, cfg, freq)
    rep = metric_report(traj.values, log.p_meas)
    resid_std = float(np.std(traj.values - log.p_meas))
    return freq, rep.rmse_mm, resid_std, rep.pearson, rep.mae_mm


def freq_sweep(seed: int = 42, freqs=SWEEP_FREQS_HZ,
               plant_params: PlantParams | None = None,
               control_config: ControlConfig | None = None,
               n_samples: int = SWEEP_SAMPLES,
               workers=None) -> ExperimentReport:
    """Track one seeded trajectory at every dither frequency.

    The STD column is the std of signed residuals. Normalized correlation is
    the min-max rescaling of the Pearson row, so the weakest frequency reads
    0 and the strongest reads 1 by construction.
    """
    params = plant_params if plant_params is not None else PlantParams()
    cfg = control_config if control_config is not None else ControlConfig()
    traj = trajectory_for_samples(n_samples, seed=seed)
    tasks = [
        (float(f), traj.t0, traj.dt, traj.values, params.to_json(), cfg.to_json())
        for f in freqs
    ]
    rows = _parallel_map(_sweep_cell, tasks, worker_count(workers))
    rows.sort(key=lambda r: r[0])
    pearsons = [r[3] for r in rows]
    norm = normalize_correlations(pearsons)
    table = [
        {"freq_hz": r[0], "rmse_mm": r[1], "std_mm": r[2],
         "pearson": r[3], "mae_mm": r[4], "norm_corr": float(nc)}
        for r, nc in zip(rows, norm)
    ]
    base = table[0]
    dithered = table[1:]
    best = min(dithered, key=lambda row: row["rmse_mm"])
    best_drop_pct = 100.0 * (1.0 - best["rmse_mm"] / base["rmse_mm"])
    assertions = {
        "rmse_below_no_dither_everywhere": all(
            row["rmse_mm"] < base["rmse_mm"] for row in dithered),
        "pearson_above_no_dither_everywhere": all(
            row["pearson"] > base["pearson"] for row in dithered),
        "best_rmse_drop_at_least_10pct": best_drop_pct >= 10.0,
        "no_dither_has_minimum_norm_corr": base["norm_corr"] == 0.0
        and base["pearson"] == min(pearsons),
    }
    return ExperimentReport(
        name="freq_sweep",
        simulated={
            "rows": table,
            "best_freq_hz": best["freq_hz"],
            "best_rmse_drop_pct": best_drop_pct,
        },
        assertions=assertions,
        manifest={
            "seed": seed,
            "n_samples": n_samples,
            "freqs_hz": [float(f) for f in freqs],
            "plant": params.to_json(),
            "control": cfg.to_json(),
        },
        hardware_reference={
            "rows": [
                {"freq_hz": f, "rmse_mm": r, "std_mm": s, "norm_corr": c}
                for f, r, s, c in HARDWARE_SWEEP_REFERENCE
            ],
            "best_rmse_drop_pct": HARDWARE_BEST_RMSE_DROP_PCT,
        },
    )


# -- sinusoid grid ---------------------------------------------------------------

SINUSOID_AMPLITUDE_MM = 16.0
SINUSOID_BASE_PERIOD_S = 1.0
SINUSOID_GRID = {
    # cell id: (period multiple, preload N)
    "tension_9N": (10.0, 9.0),
    "tension_13N": (10.0, 13.0),
    "period_5T": (5.0, None),
    "period_20T": (20.0, None),
}


def sinusoid_study(plant_params: PlantParams | None = None,
                   control_config: ControlConfig | None = None) -> ExperimentReport:
    """Slow sinusoid grid: preload pair at 10T, period pair at stock preload.

    Every cell runs with the dither off and at the study frequency; the cell
    metrics are fundamental gain/lag, position-loop area and the spread of
    the input-output tension band.
    """
    base = plant_params if plant_params is not None else PlantParams()
    cfg = control_config if control_config is not None else ControlConfig()
    dt = 1.0 / cfg.rate_motion_hz
    cells = {}
    for cell_id, (mult, preload) in SINUSOID_GRID.items():
        period = mult * SINUSOID_BASE_PERIOD_S
        params = base if preload is None else replace(base, f_init=preload)
        traj = gen_sinusoid(TrajectorySpec(
            kind="sinusoid", amplitude_mm=SINUSOID_AMPLITUDE_MM,
            period_s=period, duration_s=3.0 * period,
            sample_rate_hz=cfg.rate_motion_hz,
        ))
        for vib in (0.0, STUDY_VIB_FREQ_HZ):
            log = run_control_loop(traj, params, cfg, vib)
            gain, lag = phase_gain(
                traj, TimeSeries(traj.t0, dt, log.p_meas, unit="mm"), period)
            cells[(cell_id, vib)] = {
                "gain": gain,
                "lag_s": lag,
                "position_loop_area": hysteresis_loop_area(traj.values, log.p_meas),
                "tension_spread": band_spread(log.t_in, log.t_out),
            }
    gain_up = {
        cell_id: cells[(cell_id, STUDY_VIB_FREQ_HZ)]["gain"] > cells[(cell_id, 0.0)]["gain"]
        for cell_id in SINUSOID_GRID
    }
    a9 = cells[("tension_9N", 0.0)]["position_loop_area"]
    a13 = cells[("tension_13N", 0.0)]["position_loop_area"]
    area_change_pct = 100.0 * abs(a13 - a9) / a9
    s5 = cells[("period_5T", 0.0)]["tension_spread"]
    s20 = cells[("period_20T", 0.0)]["tension_spread"]
    assertions = {
        "dither_raises_gain_every_cell": all(gain_up.values()),
        "preload_area_change_below_20pct": area_change_pct < 20.0,
        "slow_period_tension_band_narrower": s20 < s5,
    }
    return ExperimentReport(
        name="sinusoid_study",
        simulated={
            "cells": {f"{cid}@{vib:g}Hz": m for (cid, vib), m in cells.items()},
            "gain_up": gain_up,
            "preload_area_change_pct": area_change_pct,
            "tension_spread_5T": s5,
            "tension_spread_20T": s20,
        },
        assertions=assertions,
        manifest={
            "amplitude_mm": SINUSOID_AMPLITUDE_MM,
            "base_period_s": SINUSOID_BASE_PERIOD_S,
            "grid": {k: list(v) for k, v in SINUSOID_GRID.items()},
            "study_vib_freq_hz": STUDY_VIB_FREQ_HZ,
            "plant": base.to_json(),
            "control": cfg.to_json(),
        },
        hardware_reference={"gain_rise_pct": HARDWARE_GAIN_RISE_PCT},
    )


# -- ablation --------------------------------------------------------------------


def tier_config(tier: int, seed: int, epochs: int = ABLATION_EPOCHS) -> TcnConfig:
    if tier not in TIER_CHANNELS:
        raise ConfigurationError(f"unknown size tier {tier}; have {sorted(TIER_CHANNELS)}")
    return TcnConfig(channels=TIER_CHANNELS[tier], seed=seed,
                     epochs=epochs, patience=epochs)


def _ablate_cell(args):
    tier, condition, seed, epochs, x, y, n_train = args
    ds = WindowedDataset(x, y, n_train)
    model, curve = train(tier_config(tier, seed, epochs), ds)
    best = min(rec.val_mse for rec in curve)
    return (tier, condition, seed, best,
            [(rec.epoch, rec.train_mse, rec.val_mse) for rec in curve], model)


def ablate(ds_no_vib: Dataset, ds_vib: Dataset, tiers=None,
           seeds=ABLATION_SEEDS, epochs: int = ABLATION_EPOCHS,
           workers=None) -> tuple[ExperimentReport, dict]:
    """Train every (size tier x condition x seed) cell and compare conditions.

    Returns the report plus {(tier, condition, seed): model} so the
    deployment study can pick among seeds without retraining.
    """
    tiers = dict(TIER_CHANNELS) if tiers is None else {
        t: TIER_CHANNELS[t] for t in tiers}
    datasets = {"no_vib": ds_no_vib, "vib": ds_vib}
    tasks = []
    for tier in sorted(tiers):
        for condition in CONDITIONS:
            win = datasets[condition].windows()
            for seed in seeds:
                tasks.append((tier, condition, seed, epochs,
                              win.x, win.y, win.n_train))
    results = _parallel_map(_ablate_cell, tasks, worker_count(workers))

    cells = {}
    models = {}
    for tier, condition, seed, best, curve, model in results:
        cells[(tier, condition, seed)] = {"best_val_mse": best, "curve": curve}
        models[(tier, condition, seed)] = model
    summary = {}
    for tier in sorted(tiers):
        summary[tier] = {}
        for condition in CONDITIONS:
            vals = [cells[(tier, condition, s)]["best_val_mse"] for s in seeds]
            summary[tier][condition] = {
                "mean_val_mse": float(np.mean(vals)),
                "std_val_mse": float(np.std(vals)),
                "per_seed": vals,
            }
    counts = {tier: exact_param_count(TIER_CHANNELS[tier]) for tier in sorted(tiers)}
    smallest, largest = min(tiers), max(tiers)
    vib_below = all(
        summary[t]["vib"]["mean_val_mse"] < summary[t]["no_vib"]["mean_val_mse"]
        for t in tiers)
    std_majority = sum(
        summary[t]["no_vib"]["std_val_mse"] >= summary[t]["vib"]["std_val_mse"]
        for t in tiers) > len(tiers) / 2
    assertions = {
        "vib_val_mse_below_no_vib_every_tier": vib_below,
        "smallest_vib_at_most_largest_no_vib":
            summary[smallest]["vib"]["mean_val_mse"]
            <= summary[largest]["no_vib"]["mean_val_mse"],
        "exact_counts_within_10pct_of_targets": all(
            abs(counts[t] - t) <= 0.10 * t for t in tiers),
        "no_vib_seed_spread_wider_in_majority": std_majority,
    }
    report = ExperimentReport(
        name="ablation",
        simulated={
            "summary": {str(t): summary[t] for t in sorted(tiers)},
            "cells": {
                f"{t}/{c}/{s}": {"best_val_mse": cells[(t, c, s)]["best_val_mse"]}
                for (t, c, s) in cells
            },
            "exact_param_counts": {str(t): counts[t] for t in counts},
        },
        assertions=assertions,
        manifest={
            "tiers": {str(t): list(TIER_CHANNELS[t]) for t in sorted(tiers)},
            "seeds": list(seeds),
            "epochs": epochs,
            "dataset_seed": ds_no_vib.seed,
            "window": WINDOW,
        },
        hardware_reference={
            "val_mse_no_vib_vs_vib": {
                str(t): list(v) for t, v in HARDWARE_ABLATION_REFERENCE.items()
            },
        },
    )
    return report, models


# -- deployment ---------------------------------------------------------------


def calibrated_commands(model: TcnModel, desired: np.ndarray,
                        chunk: int = 4096) -> np.ndarray:
    """Feed desired positions through the inverse model in place of history.

    The model was fit on measured-position windows; deployment substitutes
    the desired trajectory into those windows, which is the entire trick.
    The first WINDOW-1 windows are zero-padded on the left.
    """
    desired = np.asarray(desired, dtype=np.float64)
    length = model.config.length
    padded = np.concatenate([np.zeros(length - 1), desired])
    wins = sliding_window_view(padded, length)
    out = np.empty(desired.shape[0])
    for i in range(0, wins.shape[0], chunk):
        out[i:i + chunk] = model.forward(np.ascontiguousarray(wins[i:i + chunk]))
    return out


def compensate(model: TcnModel, condition: str, deploy_seed: int,
               n_samples: int = DEPLOY_SAMPLES,
               plant_params: PlantParams | None = None,
               control_config: ControlConfig | None = None,
               deploy_condition: str | None = None) -> ExperimentReport:
    """Deploy an inverse model on a fresh trajectory and score the tracking.

    The deployment vibration setting must match the condition the model was
    trained under; crossing them is refused rather than silently scored.
    Scores exclude the zero-padded warm-up windows.
    """
    if deploy_condition is None:
        deploy_condition = condition
    if deploy_condition != condition:
        raise ConfigurationError(
            f"model trained for {condition!r} cannot deploy under {deploy_condition!r}")
    params = plant_params if plant_params is not None else PlantParams()
    cfg = control_config if control_config is not None else ControlConfig()
    freq = condition_freq(condition)
    traj = trajectory_for_samples(n_samples, seed=deploy_seed)
    desired = traj.values
    warm = model.config.length - 1

    calibrated = calibrated_commands(model, desired)
    log_comp = run_control_loop(
        TimeSeries(traj.t0, traj.dt, calibrated, unit="mm"), params, cfg, freq)
    log_raw = run_control_loop(traj, params, cfg, freq)

    mae_c, std_c = mae_std(desired[warm:], log_comp.p_meas[warm:])
    mae_u, std_u = mae_std(desired[warm:], log_raw.p_meas[warm:])
    assertions = {
        "compensation_reduces_mae": mae_c < mae_u,
        "compensated_mae_below_half_uncompensated": mae_c < 0.5 * mae_u,
    }
    return ExperimentReport(
        name="compensation",
        simulated={
            "condition": condition,
            "vib_freq_hz": freq,
            "compensated": {"mae_mm": mae_c, "std_mm": std_c},
            "uncompensated": {"mae_mm": mae_u, "std_mm": std_u},
            "mae_drop_pct": 100.0 * (1.0 - mae_c / mae_u),
            "warmup_samples_excluded": warm,
        },
        assertions=assertions,
        manifest={
            "deploy_seed": deploy_seed,
            "n_samples": n_samples,
            "model_params": exact_param_count(model),
            "model_config": model.config.to_json(),
            "plant": params.to_json(),
            "control": cfg.to_json(),
        },
        hardware_reference={
            "uncompensated": {
                c: list(v) for c, v in HARDWARE_DEPLOY_REFERENCE["uncompensated"].items()
            },
            "compensated": {
                str(t): {c: list(v) for c, v in d.items()}
                for t, d in HARDWARE_DEPLOY_REFERENCE["compensated"].items()
            },
        },
    )


def deploy_study(models: dict, deploy_seed: int = DEPLOY_SEED,
                 cal_seed: int = CALIBRATION_SEED,
                 cal_samples: int = CALIBRATION_SAMPLES,
                 n_samples: int = DEPLOY_SAMPLES,
                 plant_params: PlantParams | None = None,
                 control_config: ControlConfig | None = None) -> ExperimentReport:
    """Deploy every (tier, condition) cell, selecting its seed by calibration.

    models maps (tier, condition, seed) to a trained model, as returned by
    ablate(). Validation MSE barely separates seeds, but deployment feeds
    desired-position windows where training saw measured ones, and quality
    off that manifold swings widely with initialization. Each cell therefore
    deploys whichever seed tracks best on a calibration trajectory that is
    disjoint from both the training and the final deployment trajectory.
    """
    if cal_seed == deploy_seed:
        raise ConfigurationError("calibration and deployment seeds must differ")
    cells: dict = {}
    for (tier, condition, seed), model in models.items():
        cells.setdefault((tier, condition), {})[seed] = model
    tiers = sorted({t for t, _ in cells})
    if any((t, c) not in cells for t in tiers for c in CONDITIONS):
        raise ConfigurationError("models must cover every tier under both conditions")

    table: dict = {str(t): {} for t in tiers}
    uncomp = {}
    for (tier, condition), by_seed in sorted(cells.items()):
        cal = {
            seed: compensate(
                model, condition, deploy_seed=cal_seed, n_samples=cal_samples,
                plant_params=plant_params, control_config=control_config,
            ).simulated["compensated"]["mae_mm"]
            for seed, model in by_seed.items()
        }
        picked = min(cal, key=cal.get)
        rep = compensate(
            by_seed[picked], condition, deploy_seed=deploy_seed,
            n_samples=n_samples, plant_params=plant_params,
            control_config=control_config,
        )
        sim = rep.simulated
        table[str(tier)][condition] = {
            "mae_mm": sim["compensated"]["mae_mm"],
            "std_mm": sim["compensated"]["std_mm"],
            "drop_pct": sim["mae_drop_pct"],
            "seed": picked,
            "cal_mae_mm": cal[picked],
        }
        uncomp[condition] = sim["uncompensated"]

    headline = {}
    for condition in CONDITIONS:
        best_tier = min(tiers, key=lambda t: table[str(t)][condition]["mae_mm"])
        row = table[str(best_tier)][condition]
        headline[condition] = {
            "tier": best_tier,
            "mae_mm": row["mae_mm"],
            "drop_pct": row["drop_pct"],
        }
    assertions = {
        "compensation_reduces_mae_every_cell": all(
            table[str(t)][c]["mae_mm"] < uncomp[c]["mae_mm"]
            for t in tiers for c in CONDITIONS),
        "best_tier_mae_below_half_uncompensated_both_conditions": all(
            headline[c]["mae_mm"] < 0.5 * uncomp[c]["mae_mm"] for c in CONDITIONS),
        "vib_mae_below_no_vib_every_tier": all(
            table[str(t)]["vib"]["mae_mm"] < table[str(t)]["no_vib"]["mae_mm"]
            for t in tiers),
    }
    return ExperimentReport(
        name="deployment",
        simulated={
            "tiers": table,
            "uncompensated": uncomp,
            "headline": headline,
        },
        assertions=assertions,
        manifest={
            "deploy_seed": deploy_seed,
            "cal_seed": cal_seed,
            "cal_samples": cal_samples,
            "n_samples": n_samples,
            "tiers": tiers,
        },
        hardware_reference={
            "uncompensated": {
                c: list(v) for c, v in HARDWARE_DEPLOY_REFERENCE["uncompensated"].items()
            },
            "compensated": {
                str(t): {c: list(v) for c, v in d.items()}
                for t, d in HARDWARE_DEPLOY_REFERENCE["compensated"].items()
            },
        },
    )
