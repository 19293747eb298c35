"""Two-phase closed-loop experiment.

Phase 1 runs nominal MPC on the true plant and records regressor/residual
pairs. The reservoir readout is then fitted offline on those pairs. Phase 2
reruns the loop with the learned residual added to the MPC prediction model.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import esn, plant
from .esn import EsnConfig, EsnWeights
from .mpc import CondensedMpc, MpcConfig, mpc_step
from .plant import ResidualSelector, ResidualSpec, SpringDamperParams

logger = logging.getLogger(__name__)

COMPENSATION_INPUTS = ("current", "previous")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one run.

    ``compensation_input`` selects the regressor fed to the reservoir when
    estimating the residual for the upcoming solve: ``"current"`` uses the
    measured state with the previously applied input standing in for the
    not-yet-chosen one; ``"previous"`` feeds the last complete regressor
    ``z(k-1)``, which yields a one-step-lagged estimate.
    """

    plant: SpringDamperParams = field(default_factory=SpringDamperParams)
    residual: ResidualSpec = field(default_factory=ResidualSpec)
    selector: ResidualSelector = field(default_factory=ResidualSelector)
    esn: EsnConfig = field(default_factory=EsnConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    sim_steps: int = 100
    x0: tuple = (10.0, 0.0)
    retrain_every: Optional[int] = None
    seed: int = 0
    predict_train_len: int = 70
    predict_horizon: int = 30
    compensation_input: str = "current"

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        if self.sim_steps < self.esn.washout + 2:
            raise ValueError(
                f"sim_steps ({self.sim_steps}) must be >= washout + 2 ({self.esn.washout + 2})"
            )
        if len(self.x0) != 2:
            raise ValueError(f"x0 must have 2 entries, got {len(self.x0)}")
        if self.retrain_every is not None and self.retrain_every < 1:
            raise ValueError(f"retrain_every must be >= 1, got {self.retrain_every}")
        if self.compensation_input not in COMPENSATION_INPUTS:
            raise ValueError(
                f"compensation_input must be one of {COMPENSATION_INPUTS}, got {self.compensation_input!r}"
            )
        if self.selector.b_n.shape[0] != 2 or self.selector.b_z.shape[1] != 3:
            raise ValueError("selectors must act on a 2-state, 1-input plant")
        if self.predict_train_len < 0 or self.predict_horizon < 0:
            raise ValueError("predict_train_len and predict_horizon must be >= 0")

    @property
    def esn_config(self) -> EsnConfig:
        """Reservoir config with dimensions and seed resolved from the experiment."""
        return dataclasses.replace(
            self.esn,
            input_dim=self.selector.n_z,
            output_dim=self.selector.n,
            seed=self.seed,
        )

    @property
    def nominal_model(self) -> plant.LinearModel:
        return plant.discretize(self.plant)

    def to_dict(self) -> dict:
        return {
            "plant": dataclasses.asdict(self.plant),
            "residual": {
                "kind": self.residual.kind,
                "true_m": self.residual.true_params.m,
                "true_k": self.residual.true_params.k,
                "true_b": self.residual.true_params.b,
                "alpha": self.residual.alpha,
            },
            "selectors": {
                "b_n": self.selector.b_n.tolist(),
                "b_z": self.selector.b_z.tolist(),
            },
            "esn": {
                k: v
                for k, v in dataclasses.asdict(self.esn).items()
                if k not in ("input_dim", "output_dim", "seed")
            },
            "mpc": {
                "horizon": self.mpc.horizon,
                "q_diag": list(self.mpc.q_diag),
                "r": self.mpc.r_scalar,
                "reference": list(self.mpc.reference),
                "terminal_mode": self.mpc.terminal_mode,
                "u_limit": self.mpc.u_limit,
            },
            "experiment": {
                "sim_steps": self.sim_steps,
                "x0": list(self.x0),
                "retrain_every": self.retrain_every,
                "seed": self.seed,
                "predict_train_len": self.predict_train_len,
                "predict_horizon": self.predict_horizon,
                "compensation_input": self.compensation_input,
            },
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Dataset:
    """Ordered training pairs: row ``k`` holds ``z(k)`` and ``mu(k+1)``."""

    z: np.ndarray  # (K, n_z)
    mu: np.ndarray  # (K, n)
    phase: str = "collect"
    seed: int = 0
    config_hash: str = ""

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64).reshape(len(self.z), -1)
        self.mu = np.asarray(self.mu, dtype=np.float64).reshape(len(self.mu), -1)
        if len(self.z) != len(self.mu):
            raise ValueError(f"z has {len(self.z)} rows but mu has {len(self.mu)}")

    def __len__(self) -> int:
        return len(self.z)

    def head(self, n: int) -> "Dataset":
        return dataclasses.replace(self, z=self.z[:n], mu=self.mu[:n])

    def extend(self, other: "Dataset") -> "Dataset":
        return dataclasses.replace(
            self, z=np.vstack([self.z, other.z]), mu=np.vstack([self.mu, other.mu])
        )


@dataclass
class RunLog:
    """Closed-loop trajectory, one row per control step ``k``.

    Rows are aligned in time: ``x_pred[k]`` is the controller model's
    one-step prediction of ``x_true[k]`` issued at step ``k-1`` and
    ``mu[k] = x_true[k] - A x_true[k-1] - B u[k-1]`` is the nominal-model
    residual that landed on that step. Row 0 holds ``x_pred = x0`` and
    ``mu = 0``. ``final_state`` is ``x_true`` after the last input.
    """

    dt: float
    x_true: np.ndarray  # (K, 2)
    x_pred: np.ndarray  # (K, 2)
    u: np.ndarray  # (K,)
    mu: np.ndarray  # (K, 2)
    stage_cost: np.ndarray  # (K,)
    final_state: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.u)

    @property
    def k(self) -> np.ndarray:
        return np.arange(len(self))

    @property
    def t(self) -> np.ndarray:
        return self.k * self.dt

    @property
    def cumulative_cost(self) -> float:
        return float(np.sum(self.stage_cost))

    @property
    def model_error(self) -> np.ndarray:
        """One-step prediction error ``x_true[k] - x_pred[k]`` for ``k >= 1``."""
        return self.x_true[1:] - self.x_pred[1:]

    @property
    def rms_model_error(self) -> float:
        err = self.model_error
        if len(err) == 0:
            return 0.0
        return float(np.sqrt(np.mean(np.sum(err**2, axis=1))))

    def summary(self) -> dict:
        return {
            "cumulative_cost": self.cumulative_cost,
            "rms_model_error": self.rms_model_error,
            "final_state": None if self.final_state is None else self.final_state.tolist(),
        }


def stage_cost(config: MpcConfig, x, u) -> float:
    """``(x - r)' Q (x - r) + R u^2``."""
    e = np.asarray(x, dtype=np.float64) - np.asarray(config.reference)
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    return float(e @ config.q @ e) + config.r_scalar * float(u @ u)


class _ReservoirCompensator:
    """Holds the persistent reservoir state for Phase 2."""

    def __init__(self, weights: EsnWeights, selector: ResidualSelector, mode: str):
        self.weights = weights
        self.selector = selector
        self.mode = mode
        self.state = esn.zero_state(weights)
        self._pending: Optional[np.ndarray] = None  # z(k-1), not yet consumed

    def estimate(self, x: np.ndarray, u_prev: np.ndarray) -> np.ndarray:
        """Residual estimate in state space for the step about to be taken."""
        if self.mode == "previous":
            z = self._pending if self._pending is not None else np.zeros(self.selector.n_z)
            y, self.state = esn.predict(self.weights, self.state, z)
            self._pending = None
            return self.selector.lift(y)
        if self._pending is not None:
            self.state = esn.step(self.weights, self.state, self._pending)
            self._pending = None
        y, _ = esn.predict(self.weights, self.state, plant.regressor(self.selector, x, u_prev))
        return self.selector.lift(y)

    def observe(self, z: np.ndarray) -> None:
        self._pending = z


def _closed_loop(config: ExperimentConfig, weights: Optional[EsnWeights] = None,
                 base_dataset: Optional[Dataset] = None) -> tuple[Dataset, RunLog]:
    model = config.nominal_model
    controller = CondensedMpc(model, config.mpc)
    selector = config.selector
    n_steps, horizon = config.sim_steps, config.mpc.horizon
    nx = model.n_x

    comp_source = None
    if weights is not None:
        comp_source = _ReservoirCompensator(weights, selector, config.compensation_input)

    x_true = np.empty((n_steps, nx))
    x_pred = np.empty((n_steps, nx))
    mu_log = np.zeros((n_steps, nx))
    u_log = np.empty(n_steps)
    costs = np.empty(n_steps)
    z_rows = np.empty((n_steps, selector.n_z))
    target_rows = np.empty((n_steps, selector.n))

    x = np.array(config.x0, dtype=np.float64)
    x_pred[0] = x
    u_prev = np.zeros(model.n_u)
    for k in range(n_steps):
        x_true[k] = x
        if comp_source is None:
            d_hat = np.zeros(nx)
        else:
            if config.retrain_every and k > 0 and k % config.retrain_every == 0:
                accumulated = Dataset(z_rows[:k], target_rows[:k], phase="compensate")
                if base_dataset is not None:
                    accumulated = base_dataset.extend(accumulated)
                if len(accumulated) > config.esn.washout:
                    comp_source.weights = train_phase(config, accumulated, base=comp_source.weights)
            d_hat = comp_source.estimate(x, u_prev)
        comp = np.tile(d_hat, (horizon, 1))
        u, _ = mpc_step(model, config.mpc, x, comp, controller=controller)

        costs[k] = stage_cost(config.mpc, x, u)
        u_log[k] = u[0]
        x_nom_next = plant.nominal_step(model, x, u)
        x_next = plant.true_step(config.residual, model, x, u)
        if not np.all(np.isfinite(x_next)):
            raise FloatingPointError(f"closed loop diverged at step {k}: state {x_next}")
        z = plant.regressor(selector, x, u)
        z_rows[k] = z
        target_rows[k] = plant.residual_target(selector, x_next, x_nom_next)
        if comp_source is not None:
            comp_source.observe(z)
        if k + 1 < n_steps:
            x_pred[k + 1] = x_nom_next + d_hat
            mu_log[k + 1] = x_next - x_nom_next
        x = x_next
        u_prev = u

    phase = "collect" if weights is None else "compensate"
    dataset = Dataset(z_rows, target_rows, phase=phase, seed=config.seed,
                      config_hash=config.config_hash())
    log = RunLog(config.plant.dt, x_true, x_pred, u_log, mu_log, costs, final_state=x)
    return dataset, log


def collect_phase(config: ExperimentConfig) -> tuple[Dataset, RunLog]:
    """Phase 1: nominal MPC on the true plant; returns training pairs and the log."""
    return _closed_loop(config)


def train_phase(config: ExperimentConfig, dataset: Dataset,
                base: Optional[EsnWeights] = None) -> EsnWeights:
    """Fit the readout on ``dataset``.

    The harvested state after consuming ``z(k)`` is paired with ``mu(k+1)``.
    ``base`` reuses already-drawn fixed weights instead of re-initializing.
    """
    washout = config.esn.washout
    if len(dataset) <= washout:
        raise ValueError(f"dataset has {len(dataset)} pairs; need more than washout={washout}")
    weights = base if base is not None else esn.init(config.esn_config)
    harvested = esn.harvest(weights, dataset.z, washout)
    return esn.fit_readout(weights, harvested, dataset.mu[washout:].T, config.esn.beta)


def nrmse(target: np.ndarray, prediction: np.ndarray) -> np.ndarray:
    """Per-column RMSE divided by the target's standard deviation.

    A column whose target is constant has no scale; it scores 0 when the
    prediction is exact and ``inf`` otherwise.
    """
    target = np.asarray(target, dtype=np.float64).reshape(len(target), -1)
    prediction = np.asarray(prediction, dtype=np.float64).reshape(len(prediction), -1)
    rmse = np.sqrt(np.mean((target - prediction) ** 2, axis=0))
    std = np.std(target, axis=0)
    out = np.empty_like(rmse)
    for i, (e, s) in enumerate(zip(rmse, std)):
        if s > 0:
            out[i] = e / s
        else:
            out[i] = 0.0 if e == 0 else np.inf
    return out


def training_report(config: ExperimentConfig, weights: EsnWeights, dataset: Dataset) -> dict:
    washout = config.esn.washout
    harvested = esn.harvest(weights, dataset.z, washout)
    fitted = (weights.w_out @ harvested).T
    targets = dataset.mu[washout:]
    return {
        "samples": int(len(targets)),
        "washout": washout,
        "beta": config.esn.beta,
        "reservoir_size": weights.config.reservoir_size,
        "seed": weights.config.seed,
        "config_hash": config.config_hash(),
        "train_nrmse": [float(v) for v in nrmse(targets, fitted)],
        "train_rmse": [float(v) for v in np.sqrt(np.mean((targets - fitted) ** 2, axis=0))],
    }


def compensated_phase(config: ExperimentConfig, weights: EsnWeights,
                      dataset: Optional[Dataset] = None) -> RunLog:
    """Phase 2: MPC with the learned residual held constant over the horizon.

    ``dataset`` (the Phase 1 pairs) is only used when ``retrain_every`` is set.
    """
    if not weights.trained:
        raise RuntimeError("readout not fitted")
    return _closed_loop(config, weights, base_dataset=dataset)[1]


@dataclass
class PredictionTable:
    k: np.ndarray  # (H,)
    mu_true: np.ndarray  # (H, n)
    mu_pred: np.ndarray  # (H, n)

    def __len__(self) -> int:
        return len(self.k)

    def nrmse(self) -> np.ndarray:
        return nrmse(self.mu_true, self.mu_pred)


def openloop_predict(config: ExperimentConfig, weights: EsnWeights, dataset: Dataset,
                     train_len: int, horizon: int) -> PredictionTable:
    """Fit on the first ``train_len`` pairs, then predict the next ``horizon``
    residuals while feeding the recorded regressors."""
    n = dataset.mu.shape[1]
    if horizon == 0:
        return PredictionTable(np.zeros(0, dtype=int), np.zeros((0, n)), np.zeros((0, n)))
    if train_len + horizon > len(dataset):
        raise ValueError(
            f"train_len + horizon = {train_len + horizon} exceeds dataset length {len(dataset)}"
        )
    washout = config.esn.washout
    if train_len <= washout:
        raise ValueError(f"train_len ({train_len}) must exceed washout ({washout})")
    fitted = train_phase(config, dataset.head(train_len), base=weights)
    state = esn.run_states(fitted, dataset.z[:train_len])[-1]
    preds = np.empty((horizon, n))
    for i, t in enumerate(range(train_len, train_len + horizon)):
        preds[i], state = esn.predict(fitted, state, dataset.z[t])
    ks = np.arange(train_len, train_len + horizon)
    return PredictionTable(ks, dataset.mu[train_len:train_len + horizon].copy(), preds)


def settling_step(log: RunLog, threshold: float = 0.1) -> Optional[int]:
    """First ``k`` from which ``||x_true||_inf < threshold`` holds for the rest of the run."""
    states = log.x_true
    if log.final_state is not None:
        states = np.vstack([states, log.final_state])
    inside = np.max(np.abs(states), axis=1) < threshold
    if not inside[-1]:
        return None
    outside = np.flatnonzero(~inside)
    return 0 if len(outside) == 0 else int(outside[-1] + 1)


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return 1.0 if num == 0 else float("inf")
    return num / den


def metrics(nominal_log: RunLog, compensated_log: RunLog) -> dict:
    if len(nominal_log) != len(compensated_log):
        raise ValueError(
            f"logs differ in length: {len(nominal_log)} vs {len(compensated_log)}"
        )
    nominal_cost = nominal_log.cumulative_cost
    compensated_cost = compensated_log.cumulative_cost
    nominal_err = nominal_log.rms_model_error
    compensated_err = compensated_log.rms_model_error
    return {
        "nominal_cost": nominal_cost,
        "compensated_cost": compensated_cost,
        "cost_ratio": _ratio(compensated_cost, nominal_cost),
        "nominal_rms_mu": nominal_err,
        "compensated_rms_mu": compensated_err,
        "error_ratio": _ratio(compensated_err, nominal_err),
        "settling_step_nominal": settling_step(nominal_log),
        "settling_step_compensated": settling_step(compensated_log),
    }


@dataclass
class PipelineResult:
    dataset: Dataset
    nominal_log: RunLog
    weights: EsnWeights
    train_report: dict
    compensated_log: RunLog
    prediction: PredictionTable
    metrics: dict


def run_pipeline(config: ExperimentConfig) -> PipelineResult:
    """Collect, train, run compensated, predict, and score."""
    dataset, nominal_log = collect_phase(config)
    base = esn.init(config.esn_config)
    weights = train_phase(config, dataset, base=base)
    report = training_report(config, weights, dataset)
    compensated_log = compensated_phase(config, weights, dataset)
    prediction = openloop_predict(
        config, base, dataset, config.predict_train_len, config.predict_horizon
    )
    return PipelineResult(
        dataset=dataset,
        nominal_log=nominal_log,
        weights=weights,
        train_report=report,
        compensated_log=compensated_log,
        prediction=prediction,
        metrics=metrics(nominal_log, compensated_log),
    )
