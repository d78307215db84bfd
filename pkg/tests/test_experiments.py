"""Experiment drivers: dataset plumbing, report containers, deployment glue.

The full-size studies are exercised by the acceptance suite; here the same
code paths run on small inputs where expected values can be worked out by
hand.
"""

import numpy as np
import pytest

from tsm_dither.errors import ConfigurationError
from tsm_dither.experiments import (
    CONDITIONS,
    Dataset,
    ExperimentReport,
    TIER_CHANNELS,
    TRAIN_VIB_FREQ_HZ,
    build_datasets,
    calibrated_commands,
    compensate,
    condition_freq,
    deploy_study,
    freq_sweep,
    tier_config,
    worker_count,
)
from tsm_dither.tcn import TcnConfig, TcnModel, exact_param_count


def test_condition_freq():
    assert condition_freq("no_vib") == 0.0
    assert condition_freq("vib") == TRAIN_VIB_FREQ_HZ
    with pytest.raises(ConfigurationError):
        condition_freq("both")


def test_tier_config_and_unknown_tier():
    cfg = tier_config(1282, seed=5, epochs=12)
    assert cfg.channels == TIER_CHANNELS[1282]
    assert cfg.seed == 5
    assert cfg.epochs == 12
    assert cfg.patience == 12  # grid cells run to their epoch budget
    with pytest.raises(ConfigurationError):
        tier_config(999, seed=0)


def test_tier_names_match_exact_counts_within_10pct():
    for tier, channels in TIER_CHANNELS.items():
        exact = exact_param_count(channels)
        assert abs(exact - tier) <= 0.10 * tier


def test_dataset_validation():
    ok = dict(condition="vib", vib_freq_hz=70.0, p_cmd=np.zeros(100),
              p_meas=np.zeros(100), seed=0, split=80)
    Dataset(**ok)
    with pytest.raises(ConfigurationError):
        Dataset(**{**ok, "condition": "maybe"})
    with pytest.raises(ConfigurationError):
        Dataset(**{**ok, "p_meas": np.zeros(99)})
    with pytest.raises(ConfigurationError):
        Dataset(**{**ok, "split": 100})


def test_dataset_windows_alignment():
    # window t spans p_meas[t-39 .. t] and targets p_cmd[t]; the split sample
    # is the first validation target
    p_meas = np.arange(100.0)
    p_cmd = np.arange(100.0) + 1000.0
    ds = Dataset(condition="no_vib", vib_freq_hz=0.0, p_cmd=p_cmd,
                 p_meas=p_meas, seed=3, split=80)
    win = ds.windows(40)
    assert win.x.shape == (61, 40)
    assert win.y.shape == (61,)
    assert win.n_train == 80 - 39
    np.testing.assert_array_equal(win.x[0], np.arange(40.0))
    assert win.y[0] == 1039.0
    np.testing.assert_array_equal(win.x[-1], np.arange(60.0, 100.0))
    assert win.y[-1] == 1099.0
    assert win.train_y[-1] == 1000.0 + 79.0
    assert win.val_y[0] == 1000.0 + 80.0


def test_build_datasets_shares_trajectory_and_differs_by_dither():
    ds_nv, ds_v = build_datasets(seed=11, n_samples=320)
    assert (ds_nv.condition, ds_v.condition) == CONDITIONS
    assert ds_nv.vib_freq_hz == 0.0
    assert ds_v.vib_freq_hz == TRAIN_VIB_FREQ_HZ
    assert ds_nv.split == 256  # 80% default
    np.testing.assert_array_equal(ds_nv.p_cmd, ds_v.p_cmd)
    assert not np.array_equal(ds_nv.p_meas, ds_v.p_meas)
    assert ds_nv.n == 320


def test_experiment_report_passed_and_json():
    rep = ExperimentReport(
        name="demo", simulated={"x": 1},
        assertions={"a": True, "b": np.bool_(True)},
        manifest={"seed": 0}, hardware_reference={"r": 2},
    )
    assert rep.passed
    d = rep.to_json()
    assert d["passed"] is True
    assert all(isinstance(v, bool) for v in d["assertions"].values())
    rep.assertions["b"] = False
    assert not rep.passed
    assert rep.to_json()["passed"] is False


def test_worker_count(monkeypatch):
    assert worker_count(3) == 3
    assert worker_count(0) == 1
    monkeypatch.setenv("TSM_DITHER_THREADS", "5")
    assert worker_count() == 5
    monkeypatch.delenv("TSM_DITHER_THREADS")
    assert worker_count() >= 1


def _tiny_model(seed: int = 12) -> TcnModel:
    model = TcnModel(TcnConfig(channels=(3,) * 5, seed=seed),
                     x_mean=2.0, x_std=3.0, y_mean=1.0, y_std=2.0)
    jitter = np.random.default_rng(77).normal(0.0, 0.05, model.n_parameters)
    model.set_flat_parameters(model.flat_parameters() + jitter)
    return model


def test_calibrated_commands_match_manual_windows():
    model = _tiny_model()
    desired = np.random.default_rng(6).normal(8.0, 4.0, 50)
    out = calibrated_commands(model, desired)
    assert out.shape == desired.shape
    padded = np.concatenate([np.zeros(39), desired])
    for i in (0, 1, 25, 49):
        window = padded[i:i + 40]
        assert out[i] == model.forward(window)


def test_compensate_refuses_cross_condition():
    model = _tiny_model()
    with pytest.raises(ConfigurationError):
        compensate(model, "vib", deploy_seed=1, deploy_condition="no_vib")


def test_deploy_study_rejects_seed_collision_and_gaps():
    with pytest.raises(ConfigurationError):
        deploy_study({}, deploy_seed=8, cal_seed=8)
    partial = {(354, "no_vib", 0): _tiny_model()}
    with pytest.raises(ConfigurationError):
        deploy_study(partial)


def test_freq_sweep_report_structure():
    rep = freq_sweep(seed=2, freqs=(0.0, 60.0), n_samples=220)
    assert rep.name == "freq_sweep"
    rows = rep.simulated["rows"]
    assert [r["freq_hz"] for r in rows] == [0.0, 60.0]
    # min-max rescaled correlations hit both endpoints with two rows
    assert sorted(r["norm_corr"] for r in rows) == [0.0, 1.0]
    assert rep.manifest["seed"] == 2
    assert set(rep.assertions) == {
        "rmse_below_no_dither_everywhere",
        "pearson_above_no_dither_everywhere",
        "best_rmse_drop_at_least_10pct",
        "no_dither_has_minimum_norm_corr",
    }
