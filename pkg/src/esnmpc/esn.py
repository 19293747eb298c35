"""Echo State Network with a sparse fixed reservoir and a ridge-trained readout.

Reservoir update (leaky integrator, tanh activation)::

    s(t+1) = (1 - leak) * s(t) + leak * tanh(W_res s(t) + W_in z(t))

Readout::

    y(t) = W_out [s(t); 1]

All random draws come from ``numpy.random.default_rng(seed)`` (PCG64), in
this order: ``W_in``, then the column indices of each reservoir row, then
the reservoir values.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse

from . import linalg

logger = logging.getLogger(__name__)

WEIGHTS_FORMAT = "esnmpc-esn-weights"
WEIGHTS_VERSION = 1


@dataclass(frozen=True)
class EsnConfig:
    reservoir_size: int = 1500
    input_dim: int = 3
    output_dim: int = 2
    leak_rate: float = 0.4
    spectral_radius: float = 1.0
    degree: int = 3
    input_scale: float = 1.0
    beta: float = 1e-4
    washout: int = 30
    seed: int = 0

    def __post_init__(self):
        if self.reservoir_size < 1:
            raise ValueError(f"reservoir_size must be >= 1, got {self.reservoir_size}")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if not 0.0 < self.leak_rate <= 1.0:
            raise ValueError(f"leak_rate must lie in (0, 1], got {self.leak_rate}")
        if not self.spectral_radius > 0.0:
            raise ValueError(f"spectral_radius must be > 0, got {self.spectral_radius}")
        if not 1 <= self.degree <= self.reservoir_size:
            raise ValueError(
                f"degree must lie in [1, reservoir_size={self.reservoir_size}], got {self.degree}"
            )
        if not self.input_scale > 0.0:
            raise ValueError(f"input_scale must be > 0, got {self.input_scale}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.washout < 0:
            raise ValueError(f"washout must be >= 0, got {self.washout}")


@dataclass(frozen=True, eq=False)
class EsnWeights:
    """Fixed input/reservoir weights plus the trainable readout.

    ``w_res`` is kept as (row, col, value) triplets; ``w_res_csr`` is the same
    matrix in CSR form for the state update. ``w_out`` has a trailing bias
    column.
    """

    config: EsnConfig
    w_in: np.ndarray
    res_rows: np.ndarray
    res_cols: np.ndarray
    res_vals: np.ndarray
    w_out: np.ndarray
    trained: bool = False

    def __post_init__(self):
        n = self.config.reservoir_size
        if self.w_in.shape != (n, self.config.input_dim):
            raise ValueError(f"w_in must be {n}x{self.config.input_dim}, got {self.w_in.shape}")
        if self.w_out.shape != (self.config.output_dim, n + 1):
            raise ValueError(
                f"w_out must be {self.config.output_dim}x{n + 1}, got {self.w_out.shape}"
            )
        csr = scipy.sparse.csr_matrix(
            (self.res_vals, (self.res_rows, self.res_cols)), shape=(n, n)
        )
        object.__setattr__(self, "w_res_csr", csr)
        for arr in (self.w_in, self.res_rows, self.res_cols, self.res_vals, self.w_out):
            arr.setflags(write=False)

    def w_res_dense(self) -> np.ndarray:
        return self.w_res_csr.toarray()


def init(config: EsnConfig) -> EsnWeights:
    """Draw the fixed weights for ``config`` and rescale the reservoir to the
    target spectral radius. The readout starts at zero."""
    rng = np.random.default_rng(config.seed)
    n = config.reservoir_size
    w_in = rng.uniform(-config.input_scale, config.input_scale, size=(n, config.input_dim))

    cols = np.empty((n, config.degree), dtype=np.int64)
    for i in range(n):
        cols[i] = rng.choice(n, size=config.degree, replace=False)
    vals = rng.uniform(-1.0, 1.0, size=n * config.degree)
    rows = np.repeat(np.arange(n, dtype=np.int64), config.degree)
    cols = cols.ravel()

    raw = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    radius = _reservoir_radius(raw)
    if radius < 1e-12:
        raise ValueError(
            f"degenerate reservoir draw for seed {config.seed}: spectral radius {radius:.3e}; reseed"
        )
    vals = vals * (config.spectral_radius / radius)

    return EsnWeights(
        config=config,
        w_in=w_in,
        res_rows=rows,
        res_cols=cols,
        res_vals=vals,
        w_out=np.zeros((config.output_dim, n + 1)),
        trained=False,
    )


def _reservoir_radius(raw: scipy.sparse.csr_matrix) -> float:
    est = linalg.spectral_radius(raw, max_iters=20_000, tol=1e-12)
    if est.converged:
        return est.radius
    # near-degenerate dominant spectrum: fall back to a dense eigen-solve
    logger.warning(
        "power iteration did not converge after %d sweeps (estimate %.6f); using dense eigenvalues",
        est.iterations,
        est.radius,
    )
    return float(np.max(np.abs(np.linalg.eigvals(raw.toarray()))))


def zero_state(weights: EsnWeights) -> np.ndarray:
    return np.zeros(weights.config.reservoir_size)


def step(weights: EsnWeights, state, z) -> np.ndarray:
    """One leaky reservoir update; returns a new state array."""
    state = np.asarray(state, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (weights.config.input_dim,):
        raise ValueError(f"input must have length {weights.config.input_dim}, got shape {z.shape}")
    leak = weights.config.leak_rate
    pre = weights.w_res_csr @ state + weights.w_in @ z
    new = (1.0 - leak) * state + leak * np.tanh(pre)
    if not np.all(np.isfinite(new)):
        raise FloatingPointError("reservoir state became non-finite")
    return new


def run_states(weights: EsnWeights, inputs: Sequence, state=None) -> np.ndarray:
    """Drive the reservoir over ``inputs``; row ``t`` is the state after consuming ``inputs[t]``."""
    s = zero_state(weights) if state is None else np.asarray(state, dtype=np.float64)
    out = np.empty((len(inputs), weights.config.reservoir_size))
    for t, z in enumerate(inputs):
        s = step(weights, s, z)
        out[t] = s
    return out


def harvest(weights: EsnWeights, inputs: Sequence, washout: int) -> np.ndarray:
    """Collect bias-augmented states ``[s(t); 1]`` for every step after the washout.

    Returns an ``(N_r + 1) x (T - washout)`` matrix; column ``j`` is the state
    after consuming ``inputs[washout + j]``.
    """
    T = len(inputs)
    if T <= washout:
        raise ValueError(f"need more inputs than the washout ({washout}), got {T}")
    states = run_states(weights, inputs)[washout:]
    return np.vstack([states.T, np.ones((1, T - washout))])


def fit_readout(weights: EsnWeights, harvested, targets, beta: float) -> EsnWeights:
    w_out = linalg.ridge_solve(harvested, targets, beta)
    if w_out.shape != weights.w_out.shape:
        raise ValueError(f"readout shape {w_out.shape} does not match {weights.w_out.shape}")
    return dataclasses.replace(weights, w_out=w_out, trained=True)


def readout(weights: EsnWeights, state) -> np.ndarray:
    return weights.w_out[:, :-1] @ state + weights.w_out[:, -1]


def predict(weights: EsnWeights, state, z) -> tuple[np.ndarray, np.ndarray]:
    """Advance the reservoir with ``z`` and read out; returns ``(y, next_state)``."""
    if not weights.trained:
        raise RuntimeError("readout not fitted")
    next_state = step(weights, state, z)
    return readout(weights, next_state), next_state


def regularized_objective(w_out, harvested, targets, beta: float) -> float:
    """``||Y - W S||_F^2 + beta ||W||_F^2``."""
    resid = np.asarray(targets) - np.asarray(w_out) @ np.asarray(harvested)
    return float(np.sum(resid**2) + beta * np.sum(np.asarray(w_out) ** 2))


def save_weights(weights: EsnWeights, path) -> None:
    payload = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "config": dataclasses.asdict(weights.config),
        "trained": weights.trained,
        "w_in": weights.w_in.tolist(),
        "w_res": {
            "rows": weights.res_rows.tolist(),
            "cols": weights.res_cols.tolist(),
            "vals": weights.res_vals.tolist(),
        },
        "w_out": weights.w_out.tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def load_weights(path) -> EsnWeights:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != WEIGHTS_FORMAT:
        raise ValueError(f"{path}: not an ESN weights file")
    if payload.get("version") != WEIGHTS_VERSION:
        raise ValueError(f"{path}: unsupported weights version {payload.get('version')}")
    config = EsnConfig(**payload["config"])
    n = config.reservoir_size
    return EsnWeights(
        config=config,
        w_in=np.array(payload["w_in"], dtype=np.float64).reshape(n, config.input_dim),
        res_rows=np.array(payload["w_res"]["rows"], dtype=np.int64),
        res_cols=np.array(payload["w_res"]["cols"], dtype=np.int64),
        res_vals=np.array(payload["w_res"]["vals"], dtype=np.float64),
        w_out=np.array(payload["w_out"], dtype=np.float64).reshape(config.output_dim, n + 1),
        trained=bool(payload["trained"]),
    )
