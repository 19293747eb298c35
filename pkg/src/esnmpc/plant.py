"""Spring-damper plant: nominal forward-Euler model, configurable true plant,
and the regressor / residual-target maps used to train the reservoir."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RESIDUAL_KINDS = ("none", "param_perturbation", "cubic_spring", "combined")


@dataclass(frozen=True)
class SpringDamperParams:
    m: float = 1.0
    k: float = 10.0
    b: float = 0.5
    dt: float = 0.1

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError(f"m must be > 0, got {self.m}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.b < 0:
            raise ValueError(f"b must be >= 0, got {self.b}")
        if self.k < 0:
            raise ValueError(f"k must be >= 0, got {self.k}")


@dataclass(frozen=True)
class LinearModel:
    """Discrete dynamics ``x(k+1) = A x(k) + B u(k)``."""

    a: np.ndarray
    b_mat: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b_mat, dtype=np.float64)
        if b.ndim == 1:
            b = b.reshape(-1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"A must be square, got shape {a.shape}")
        if b.ndim != 2 or b.shape[0] != a.shape[0]:
            raise ValueError(f"B must have {a.shape[0]} rows, got shape {b.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("LinearModel entries must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b_mat", b)

    @property
    def n_x(self) -> int:
        return self.a.shape[0]

    @property
    def n_u(self) -> int:
        return self.b_mat.shape[1]


@dataclass(frozen=True)
class ResidualSpec:
    """Ground-truth unmodeled dynamics of the simulated plant.

    ``param_perturbation`` replaces the nominal parameters by ``true_params``;
    ``cubic_spring`` adds a hardening force ``alpha * s**3``; ``combined`` does
    both.
    """

    kind: str = "combined"
    true_params: SpringDamperParams = field(
        default_factory=lambda: SpringDamperParams(m=1.0, k=12.0, b=1.0, dt=0.1)
    )
    alpha: float = 0.05

    def __post_init__(self):
        if self.kind not in RESIDUAL_KINDS:
            raise ValueError(f"residual kind must be one of {RESIDUAL_KINDS}, got {self.kind!r}")
        if not np.isfinite(self.alpha):
            raise ValueError("alpha must be finite")


@dataclass(frozen=True, eq=False)
class ResidualSelector:
    """``b_n`` maps residual coordinates into state space; ``b_z`` picks regressor
    coordinates out of the stacked ``[x; u]``."""

    b_n: np.ndarray = field(default_factory=lambda: np.eye(2))
    b_z: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        b_n = np.atleast_2d(np.asarray(self.b_n, dtype=np.float64))
        b_z = np.atleast_2d(np.asarray(self.b_z, dtype=np.float64))
        if np.linalg.matrix_rank(b_n) < b_n.shape[1]:
            raise ValueError(f"b_n ({b_n.shape[0]}x{b_n.shape[1]}) must have full column rank")
        object.__setattr__(self, "b_n", b_n)
        object.__setattr__(self, "b_z", b_z)
        # left pseudo-inverse; exact for identity selectors
        object.__setattr__(self, "_b_n_pinv", np.linalg.solve(b_n.T @ b_n, b_n.T))

    @property
    def n(self) -> int:
        return self.b_n.shape[1]

    @property
    def n_z(self) -> int:
        return self.b_z.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ResidualSelector):
            return NotImplemented
        return np.array_equal(self.b_n, other.b_n) and np.array_equal(self.b_z, other.b_z)

    __hash__ = None

    def lift(self, d: np.ndarray) -> np.ndarray:
        """Map a residual vector into state space, ``B_n d``."""
        return self.b_n @ np.asarray(d, dtype=np.float64)


def discretize(params: SpringDamperParams) -> LinearModel:
    """Forward-Euler discretization of ``m s'' + b s' + k s = F`` with state ``[s, v]``."""
    m, k, b, dt = params.m, params.k, params.b, params.dt
    a = np.array([[1.0, dt], [-(k / m) * dt, 1.0 - (b / m) * dt]])
    b_mat = np.array([[0.0], [dt / m]])
    return LinearModel(a, b_mat)


def nominal_step(model: LinearModel, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    return model.a @ x + model.b_mat @ u


def true_step(spec: ResidualSpec, nominal: LinearModel, x, u) -> np.ndarray:
    """Advance the simulated true plant one sample."""
    if spec.kind == "none":
        return nominal_step(nominal, x, u)
    x = np.asarray(x, dtype=np.float64)
    if spec.kind in ("param_perturbation", "combined"):
        x_next = nominal_step(discretize(spec.true_params), x, u)
        m = spec.true_params.m
        dt = spec.true_params.dt
    else:
        x_next = nominal_step(nominal, x, u)
        # nominal mass and dt recovered from B = [0, dt/m]
        dt = nominal.a[0, 1]
        m = dt / nominal.b_mat[1, 0]
    if spec.kind in ("cubic_spring", "combined") and spec.alpha != 0.0:
        x_next[1] -= (spec.alpha / m) * dt * x[0] ** 3
    return x_next


def residual_target(selector: ResidualSelector, x_true_next, x_nom_next) -> np.ndarray:
    """Training label ``B_n^+ (x_true(k+1) - x_nom(k+1))``."""
    diff = np.asarray(x_true_next, dtype=np.float64) - np.asarray(x_nom_next, dtype=np.float64)
    return selector._b_n_pinv @ diff


def regressor(selector: ResidualSelector, x, u) -> np.ndarray:
    """Reservoir input ``B_z [x; u]``."""
    xu = np.concatenate([np.asarray(x, dtype=np.float64), np.atleast_1d(np.asarray(u, dtype=np.float64))])
    if xu.shape[0] != selector.b_z.shape[1]:
        raise ValueError(
            f"b_z expects {selector.b_z.shape[1]} stacked state/input entries, got {xu.shape[0]}"
        )
    return selector.b_z @ xu
