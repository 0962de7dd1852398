"""Model parameters and Emden states.

Both containers are frozen; arrays are stored as read-only float64 copies so
instances can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InputError


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} must contain finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ModelParams:
    """Constants of the polytropic flow and of the self-similar profile.

    Pressure is ``K * rho**gamma``. ``xi`` couples the profile to the scale
    dynamics, ``alpha`` is the profile amplitude and ``d`` the drift of the
    ellipsoid centre (located at ``-d``).
    """

    N: int
    gamma: float = 1.0
    K: float = 1.0
    mu: float = 0.0
    xi: float = 1.0
    alpha: float = 1.0
    d: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise InputError(f"N must be a positive integer, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        for name in ("gamma", "K", "mu", "xi", "alpha"):
            value = float(getattr(self, name))
            if not np.isfinite(value):
                raise InputError(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.gamma < 1.0:
            raise InputError(f"gamma must be >= 1, got {self.gamma}")
        if self.K <= 0.0:
            raise InputError(f"K must be > 0, got {self.K}")
        if self.mu < 0.0:
            raise InputError(f"mu must be >= 0, got {self.mu}")
        if self.alpha < 0.0:
            raise InputError(f"alpha must be >= 0, got {self.alpha}")
        d = np.zeros(self.N) if self.d is None else self.d
        d = _frozen_array(d, "d")
        if d.size != self.N:
            raise InputError(f"drift vector has length {d.size}, expected N={self.N}")
        object.__setattr__(self, "d", d)

    @property
    def isothermal(self) -> bool:
        return self.gamma == 1.0

    def replace(self, **changes) -> "ModelParams":
        kwargs = dict(N=self.N, gamma=self.gamma, K=self.K, mu=self.mu,
                      xi=self.xi, alpha=self.alpha, d=self.d)
        kwargs.update(changes)
        return ModelParams(**kwargs)

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (self.N, self.gamma, self.K, self.mu, self.xi, self.alpha) == (
            other.N, other.gamma, other.K, other.mu, other.xi, other.alpha
        ) and np.array_equal(self.d, other.d)

    def __hash__(self):
        return hash((self.N, self.gamma, self.K, self.mu, self.xi, self.alpha,
                     tuple(self.d)))


@dataclass(frozen=True)
class EmdenState:
    """Time, scale factors ``a`` (all positive) and their rates ``a_dot``."""

    t: float
    a: np.ndarray
    a_dot: np.ndarray

    def __post_init__(self):
        a = _frozen_array(self.a, "a")
        a_dot = _frozen_array(self.a_dot, "a_dot")
        if a.size == 0 or a.size != a_dot.size:
            raise InputError("a and a_dot must be non-empty and of equal length")
        if np.any(a <= 0.0):
            raise DomainError(f"scale factors must be positive, got {a}")
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "a_dot", a_dot)

    @property
    def N(self) -> int:
        return self.a.size

    @classmethod
    def initial(cls, a0, a1, t: float = 0.0) -> "EmdenState":
        return cls(t, a0, a1)

    def check_params(self, params: ModelParams) -> None:
        if self.N != params.N:
            raise InputError(f"state has dimension {self.N}, params have N={params.N}")

    def __eq__(self, other):
        if not isinstance(other, EmdenState):
            return NotImplemented
        return (self.t == other.t and np.array_equal(self.a, other.a)
                and np.array_equal(self.a_dot, other.a_dot))

    def __hash__(self):
        return hash((self.t, tuple(self.a), tuple(self.a_dot)))
