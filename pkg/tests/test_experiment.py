import dataclasses
from pathlib import Path

import numpy as np
import pytest

from esnmpc import esn, plant
from esnmpc.experiment import (
    Dataset,
    ExperimentConfig,
    RunLog,
    collect_phase,
    compensated_phase,
    metrics,
    nrmse,
    openloop_predict,
    run_pipeline,
    settling_step,
    stage_cost,
    train_phase,
    training_report,
)
from esnmpc.plant import ResidualSpec

GOLDEN = Path(__file__).parent / "data" / "golden_phase1.csv"


def zero_readout(weights):
    return dataclasses.replace(weights, w_out=np.zeros_like(weights.w_out), trained=True)


def test_config_invariants():
    with pytest.raises(ValueError, match="sim_steps"):
        ExperimentConfig(sim_steps=31)
    with pytest.raises(ValueError, match="compensation_input"):
        ExperimentConfig(compensation_input="future")
    cfg = ExperimentConfig()
    assert cfg.esn_config.input_dim == 3 and cfg.esn_config.output_dim == 2
    assert cfg.x0 == (10.0, 0.0) and cfg.sim_steps == 100


def test_config_hash_is_stable_and_sensitive():
    a, b = ExperimentConfig(), ExperimentConfig()
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != ExperimentConfig(seed=1).config_hash()


# --- collect --------------------------------------------------------------

def test_collect_without_residual_has_zero_targets(nominal_plant_config):
    dataset, log = collect_phase(nominal_plant_config)
    assert np.max(np.abs(dataset.mu)) <= 1e-12
    assert np.max(np.abs(log.mu)) <= 1e-12


def test_collect_bookkeeping(benchmark_phase1, benchmark_config):
    dataset, log = benchmark_phase1
    assert len(dataset) == len(log) == benchmark_config.sim_steps
    np.testing.assert_allclose(log.t, np.arange(100) * 0.1)
    assert dataset.phase == "collect" and dataset.config_hash == benchmark_config.config_hash()


def test_collect_matches_golden_replay(benchmark_phase1):
    golden = np.loadtxt(GOLDEN, delimiter=",", skiprows=1)
    _, log = benchmark_phase1
    np.testing.assert_allclose(log.x_true, golden[:, 1:3], atol=1e-8, rtol=0)
    np.testing.assert_allclose(log.u, golden[:, 3], atol=1e-8, rtol=0)


def test_collect_pairs_are_consistent(benchmark_phase1, benchmark_config):
    dataset, log = benchmark_phase1
    model = benchmark_config.nominal_model
    for k in range(99):
        np.testing.assert_array_equal(dataset.z[k], np.append(log.x_true[k], log.u[k]))
        expected_mu = log.x_true[k + 1] - plant.nominal_step(model, log.x_true[k], [log.u[k]])
        np.testing.assert_allclose(dataset.mu[k], expected_mu, atol=1e-12)
        np.testing.assert_array_equal(log.mu[k + 1], dataset.mu[k])


def test_stage_cost_bookkeeping(benchmark_phase1, benchmark_config):
    _, log = benchmark_phase1
    recomputed = sum(
        (x @ np.diag([1.0, 0.1]) @ x) + 0.1 * u * u for x, u in zip(log.x_true, log.u)
    )
    assert log.cumulative_cost == pytest.approx(recomputed, abs=1e-10)
    assert stage_cost(benchmark_config.mpc, [1.0, 2.0], [3.0]) == pytest.approx(1 + 0.4 + 0.9)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported_with_step():
    cfg = ExperimentConfig(residual=ResidualSpec(alpha=0.5))
    with pytest.raises(FloatingPointError, match="diverged at step"):
        collect_phase(cfg)


# --- train ----------------------------------------------------------------

def test_train_zero_targets_gives_zero_readout(small_config):
    ds = Dataset(np.random.default_rng(0).normal(size=(50, 3)), np.zeros((50, 2)))
    w = train_phase(small_config, ds)
    assert w.trained
    np.testing.assert_array_equal(w.w_out, 0.0)


def test_train_alignment(small_config, benchmark_phase1):
    dataset, _ = benchmark_phase1
    w = train_phase(small_config, dataset)
    washout = small_config.esn.washout
    states = esn.run_states(w, dataset.z)
    # column j of the fit pairs the state after z(washout + j) with mu(washout + j + 1)
    expected = esn.linalg.ridge_solve(
        np.vstack([states[washout:].T, np.ones((1, len(dataset) - washout))]),
        dataset.mu[washout:].T, small_config.esn.beta)
    np.testing.assert_array_equal(w.w_out, expected)


def test_train_needs_data_beyond_washout(small_config):
    ds = Dataset(np.zeros((30, 3)), np.zeros((30, 2)))
    with pytest.raises(ValueError, match="washout"):
        train_phase(small_config, ds)


def test_training_report(small_config, benchmark_phase1):
    dataset, _ = benchmark_phase1
    w = train_phase(small_config, dataset)
    report = training_report(small_config, w, dataset)
    assert report["samples"] == 70
    assert len(report["train_nrmse"]) == 2


# --- compensated ----------------------------------------------------------

@pytest.mark.parametrize("mode", ["current", "previous"])
def test_zero_readout_reproduces_phase1(small_config, benchmark_phase1, mode):
    cfg = dataclasses.replace(small_config, compensation_input=mode)
    weights = zero_readout(esn.init(cfg.esn_config))
    log = compensated_phase(cfg, weights)
    _, nominal = benchmark_phase1
    for name in ("x_true", "x_pred", "u", "mu", "stage_cost"):
        assert getattr(log, name).tobytes() == getattr(nominal, name).tobytes(), name


def test_zero_residual_reproduces_nominal_run():
    base = ExperimentConfig(residual=ResidualSpec(kind="none"))
    cfg = dataclasses.replace(base, esn=dataclasses.replace(base.esn, reservoir_size=60))
    dataset, nominal = collect_phase(cfg)
    weights = train_phase(cfg, dataset)
    log = compensated_phase(cfg, weights)
    assert log.x_true.tobytes() == nominal.x_true.tobytes()
    assert log.u.tobytes() == nominal.u.tobytes()


def test_compensated_requires_trained(small_config):
    with pytest.raises(RuntimeError, match="readout not fitted"):
        compensated_phase(small_config, esn.init(small_config.esn_config))


def test_compensated_one_step_prediction_uses_estimate(small_config, benchmark_phase1):
    dataset, _ = benchmark_phase1
    w = train_phase(small_config, dataset)
    log = compensated_phase(small_config, w)
    model = small_config.nominal_model
    # x_pred differs from the bare nominal prediction by the lifted estimate
    comp = log.x_pred[1:] - np.array(
        [plant.nominal_step(model, x, [u]) for x, u in zip(log.x_true[:-1], log.u[:-1])])
    assert np.any(comp != 0.0)
    np.testing.assert_allclose(log.mu[1:] - comp, log.model_error, atol=1e-9)


def test_retraining_runs(small_config, benchmark_phase1):
    dataset, _ = benchmark_phase1
    cfg = dataclasses.replace(small_config, retrain_every=25)
    w = train_phase(cfg, dataset)
    log = compensated_phase(cfg, w, dataset)
    assert len(log) == 100 and np.all(np.isfinite(log.x_true))
    plain = compensated_phase(small_config, w, dataset)
    # the first retrain happens at k = 25; the trajectories agree before it
    np.testing.assert_array_equal(log.u[:25], plain.u[:25])
    assert not np.array_equal(log.u[25:], plain.u[25:])


# --- open-loop prediction -------------------------------------------------

def test_openloop_empty_horizon(small_config, benchmark_phase1):
    dataset, _ = benchmark_phase1
    table = openloop_predict(small_config, esn.init(small_config.esn_config), dataset, 70, 0)
    assert len(table) == 0


def test_openloop_zero_residual(nominal_plant_config):
    cfg = dataclasses.replace(
        nominal_plant_config, esn=dataclasses.replace(nominal_plant_config.esn, reservoir_size=60))
    dataset, _ = collect_phase(cfg)
    table = openloop_predict(cfg, esn.init(cfg.esn_config), dataset, 70, 30)
    assert len(table) == 30
    assert np.max(np.abs(table.mu_pred)) <= 1e-9


def test_openloop_teacher_forced_replay(small_config, benchmark_phase1):
    dataset, _ = benchmark_phase1
    base = esn.init(small_config.esn_config)
    table = openloop_predict(small_config, base, dataset, 70, 30)
    np.testing.assert_array_equal(table.k, np.arange(70, 100))
    np.testing.assert_array_equal(table.mu_true, dataset.mu[70:])
    fitted = train_phase(small_config, dataset.head(70), base=base)
    states = esn.run_states(fitted, dataset.z)
    replay = (fitted.w_out @ np.vstack([states[70:].T, np.ones((1, 30))])).T
    np.testing.assert_allclose(table.mu_pred, replay, atol=1e-12)


def test_openloop_length_checks(small_config, benchmark_phase1):
    dataset, _ = benchmark_phase1
    base = esn.init(small_config.esn_config)
    with pytest.raises(ValueError, match="exceeds"):
        openloop_predict(small_config, base, dataset, 80, 30)
    with pytest.raises(ValueError, match="washout"):
        openloop_predict(small_config, base, dataset, 30, 10)


# --- metrics --------------------------------------------------------------

def test_nrmse_conventions():
    np.testing.assert_allclose(nrmse(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 3.0])), [0.0])
    t = np.zeros((4, 1))
    assert nrmse(t, t)[0] == 0.0
    assert nrmse(t, t + 1)[0] == np.inf
    x = np.array([0.0, 2.0])
    assert nrmse(x, np.array([1.0, 1.0]))[0] == pytest.approx(1.0)


def test_metrics_identical_logs(benchmark_phase1):
    _, log = benchmark_phase1
    m = metrics(log, log)
    assert m["cost_ratio"] == 1.0 and m["error_ratio"] == 1.0
    assert m["settling_step_nominal"] == m["settling_step_compensated"]


def test_metrics_perfect_compensation(benchmark_phase1):
    _, log = benchmark_phase1
    perfect = dataclasses.replace(log, x_pred=log.x_true.copy())
    m = metrics(log, perfect)
    assert m["compensated_rms_mu"] == 0.0 and m["error_ratio"] == 0.0
    assert m["nominal_rms_mu"] == pytest.approx(np.sqrt(np.mean(np.sum(log.mu[1:] ** 2, axis=1))))


def test_metrics_length_mismatch(benchmark_phase1):
    _, log = benchmark_phase1
    short = RunLog(log.dt, log.x_true[:5], log.x_pred[:5], log.u[:5], log.mu[:5], log.stage_cost[:5])
    with pytest.raises(ValueError, match="length"):
        metrics(log, short)


def test_settling_step():
    xs = np.array([[1.0, 0.0], [0.05, 0.0], [0.2, 0.0], [0.01, 0.0], [0.0, 0.0]])
    log = RunLog(0.1, xs, xs, np.zeros(5), np.zeros((5, 2)), np.zeros(5))
    assert settling_step(log) == 3
    log.final_state = np.array([0.5, 0.0])
    assert settling_step(log) is None


# --- end to end -----------------------------------------------------------

def test_pipeline_determinism(small_config):
    a, b = run_pipeline(small_config), run_pipeline(small_config)
    for name in ("x_true", "x_pred", "u", "mu", "stage_cost"):
        assert getattr(a.compensated_log, name).tobytes() == getattr(b.compensated_log, name).tobytes()
    assert a.weights.w_out.tobytes() == b.weights.w_out.tobytes()
    assert a.metrics == b.metrics


def test_benchmark_training_fit(benchmark_config, benchmark_pipeline):
    p = benchmark_pipeline
    report = training_report(benchmark_config, p.weights, p.dataset)
    assert max(report["train_nrmse"]) < 0.2


def test_benchmark_compensation_lowers_cost(benchmark_pipeline):
    m = benchmark_pipeline.metrics
    assert m["compensated_cost"] < m["nominal_cost"]
