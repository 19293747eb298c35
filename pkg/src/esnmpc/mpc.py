"""Condensed finite-horizon quadratic MPC with an additive compensation term.

The prediction model over the horizon is::

    x(k+1) = A x(k) + B u(k) + d(k)

where ``d`` is a known per-step compensation sequence. States are
eliminated, leaving a dense positive-definite quadratic in the stacked
inputs that is solved by a Cholesky factorization.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg

from . import linalg
from .plant import LinearModel

TERMINAL_MODES = ("riccati", "q_copy")


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 20
    q_diag: tuple = (1.0, 0.1)
    r_scalar: float = 0.1
    reference: tuple = (0.0, 0.0)
    terminal_mode: str = "riccati"
    u_limit: Optional[float] = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if any(q < 0 for q in self.q_diag):
            raise ValueError(f"q_diag entries must be >= 0, got {self.q_diag}")
        if not self.r_scalar > 0:
            raise ValueError(f"r_scalar must be > 0, got {self.r_scalar}")
        if len(self.reference) != len(self.q_diag):
            raise ValueError("reference and q_diag must have the same length")
        if self.terminal_mode not in TERMINAL_MODES:
            raise ValueError(f"terminal_mode must be one of {TERMINAL_MODES}, got {self.terminal_mode!r}")
        if self.u_limit is not None and self.u_limit < 0:
            raise ValueError(f"u_limit must be >= 0, got {self.u_limit}")
        object.__setattr__(self, "q_diag", tuple(float(q) for q in self.q_diag))
        object.__setattr__(self, "reference", tuple(float(r) for r in self.reference))

    @property
    def q(self) -> np.ndarray:
        return np.diag(self.q_diag)


class MpcSolution(NamedTuple):
    u_seq: np.ndarray  # (N, n_u)
    x_pred: np.ndarray  # (N + 1, n_x)
    cost: float


def build_prediction(model: LinearModel, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stacked prediction matrices ``(S_x, S_u, S_d)`` for ``n`` steps.

    ``vec(x(1..n)) = S_x x0 + S_u vec(u(0..n-1)) + S_d vec(d(0..n-1))``.
    """
    if n < 1:
        raise ValueError(f"horizon must be >= 1, got {n}")
    a, b = model.a, model.b_mat
    nx, nu = model.n_x, model.n_u
    powers = [np.eye(nx)]
    for _ in range(n):
        powers.append(a @ powers[-1])
    s_x = np.vstack(powers[1:])
    s_u = np.zeros((n * nx, n * nu))
    s_d = np.zeros((n * nx, n * nx))
    for i in range(n):
        for j in range(i + 1):
            rows = slice(i * nx, (i + 1) * nx)
            s_u[rows, j * nu:(j + 1) * nu] = powers[i - j] @ b
            s_d[rows, j * nx:(j + 1) * nx] = powers[i - j]
    return s_x, s_u, s_d


def terminal_weight(model: LinearModel, config: MpcConfig) -> np.ndarray:
    q = config.q
    if config.terminal_mode == "q_copy":
        return q
    r = np.eye(model.n_u) * config.r_scalar
    return linalg.riccati_recursion(model.a, model.b_mat, q, r)


class CondensedMpc:
    """Precomputed condensed problem for a fixed ``(model, config)`` pair.

    Immutable after construction; ``solve`` may be called from any number of
    trajectories.
    """

    def __init__(self, model: LinearModel, config: MpcConfig):
        if len(config.q_diag) != model.n_x:
            raise ValueError(f"q_diag has {len(config.q_diag)} entries but the model has {model.n_x} states")
        self.model = model
        self.config = config
        n, nx, nu = config.horizon, model.n_x, model.n_u
        self.s_x, self.s_u, self.s_d = build_prediction(model, n)
        self.p = terminal_weight(model, config)
        q_bar = scipy.linalg.block_diag(*([config.q] * (n - 1) + [self.p]))
        self.q_bar = q_bar
        self.r_bar = np.eye(n * nu) * config.r_scalar
        self.ref_stack = np.tile(np.asarray(config.reference), n)
        hessian = self.s_u.T @ q_bar @ self.s_u + self.r_bar
        self._chol = scipy.linalg.cho_factor(hessian, lower=True)
        self._grad_map = self.s_u.T @ q_bar

    def solve(self, x0, comp=None) -> MpcSolution:
        model, config = self.model, self.config
        n, nx, nu = config.horizon, model.n_x, model.n_u
        x0 = np.asarray(x0, dtype=np.float64)
        if x0.shape != (nx,):
            raise ValueError(f"x0 must have length {nx}, got shape {x0.shape}")
        d = _comp_array(comp, n, nx)

        free = self.s_x @ x0 + self.s_d @ d.ravel() - self.ref_stack
        u_flat = -scipy.linalg.cho_solve(self._chol, self._grad_map @ free)
        if not np.all(np.isfinite(u_flat)):
            raise FloatingPointError("MPC solution is non-finite")
        u_seq = u_flat.reshape(n, nu)
        x_pred = rollout(model, x0, u_seq, d)
        return MpcSolution(u_seq, x_pred, self.cost(x_pred, u_seq))

    def cost(self, x_pred: np.ndarray, u_seq: np.ndarray) -> float:
        """Horizon objective: stage costs on ``x(0..N-1)``, terminal weight on ``x(N)``."""
        q = self.config.q
        r = self.config.r_scalar
        ref = np.asarray(self.config.reference)
        total = 0.0
        for k in range(self.config.horizon):
            e = x_pred[k] - ref
            total += float(e @ q @ e) + r * float(u_seq[k] @ u_seq[k])
        e = x_pred[-1] - ref
        return total + float(e @ self.p @ e)


def _comp_array(comp, n: int, nx: int) -> np.ndarray:
    if comp is None:
        return np.zeros((n, nx))
    d = np.asarray(comp, dtype=np.float64)
    if d.shape != (n, nx):
        raise ValueError(f"compensation sequence must be {n}x{nx}, got shape {d.shape}")
    return d


def rollout(model: LinearModel, x0, u_seq, d) -> np.ndarray:
    """Replay ``x(k+1) = A x(k) + B u(k) + d(k)``; returns ``x(0..N)``."""
    n = len(u_seq)
    xs = np.empty((n + 1, model.n_x))
    xs[0] = x0
    for k in range(n):
        xs[k + 1] = model.a @ xs[k] + model.b_mat @ u_seq[k] + d[k]
    return xs


def solve(model: LinearModel, config: MpcConfig, x0, comp=None) -> MpcSolution:
    return CondensedMpc(model, config).solve(x0, comp)


def clamp_input(u: np.ndarray, config: MpcConfig) -> np.ndarray:
    if config.u_limit is None:
        return u
    return np.clip(u, -config.u_limit, config.u_limit)


def mpc_step(model: LinearModel, config: MpcConfig, x0, comp=None, controller: CondensedMpc | None = None):
    """Solve and return ``(u0, solution)`` with ``u0`` saturated if ``u_limit`` is set."""
    ctrl = controller if controller is not None else CondensedMpc(model, config)
    sol = ctrl.solve(x0, comp)
    return clamp_input(sol.u_seq[0].copy(), config), sol
