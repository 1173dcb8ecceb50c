"""Discrete disturbance observer built on the auxiliary variable ``z = tau_dn + L^T x``.

The observer runs the nominal discrete model with the disturbance held over
each sample. Its estimation error obeys::

    e_z(k+1) = (1 - L^T D_Dn) e_z(k) + (tau_dn(k+1) - tau_dn(k))

so with ``L = g [1, 1]`` the stand-alone observer is stable iff
``0 < g < 2 / ||D_Dn||_1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .plant import DiscretePlant

__all__ = [
    "MARGINAL_BAND",
    "Stability",
    "ObserverConfig",
    "ObserverState",
    "initial_state",
    "observer_step",
    "disturbance_estimate",
    "error_contraction_factor",
    "gain_upper_bound",
    "classify_factor",
    "StandaloneRun",
    "run_standalone",
]

MARGINAL_BAND = 1e-9


class Stability(str, Enum):
    STABLE = "stable"
    MARGINAL = "marginal"
    UNSTABLE = "unstable"

    @classmethod
    def from_radius(cls, radius: float, band: float = MARGINAL_BAND) -> "Stability":
        if radius < 1.0 - band:
            return cls.STABLE
        if radius <= 1.0 + band:
            return cls.MARGINAL
        return cls.UNSTABLE


@dataclass(frozen=True)
class ObserverConfig:
    """Observer gain ``g`` (so ``L = g [1, 1]``) and the discrete nominal model.

    ``L`` may be overridden for experiments with a general gain vector; the
    stability results in this package are stated for the ``g [1, 1]`` shape.
    """

    gain: float
    nominal: DiscretePlant
    L: np.ndarray = field(default=None)

    def __post_init__(self):
        if not math.isfinite(self.gain) or self.gain <= 0:
            raise ValueError(f"observer gain must be positive, got {self.gain!r}")
        if self.L is None:
            object.__setattr__(self, "L", self.gain * np.ones(2))
        else:
            L = np.asarray(self.L, dtype=float).reshape(2)
            object.__setattr__(self, "L", L)

    @classmethod
    def from_normalized_gain(cls, normalized_gain: float, nominal: DiscretePlant) -> "ObserverConfig":
        """Pick ``g`` so that ``L^T D_Dn`` equals ``normalized_gain``."""
        return cls(gain=normalized_gain / float(np.sum(nominal.D)), nominal=nominal)

    @property
    def normalized_gain(self) -> float:
        """``L^T D_Dn``; the dimensionless gain that places the inner-loop pole."""
        return float(self.L @ self.nominal.D)

    @property
    def Ts(self) -> float:
        return self.nominal.Ts


@dataclass(frozen=True)
class ObserverState:
    z_hat: float
    tau_hat: float


def initial_state(x0, cfg: ObserverConfig) -> ObserverState:
    """Start with a zero disturbance estimate: ``z_hat(0) = L^T x(0)``."""
    z = float(cfg.L @ np.asarray(x0, dtype=float))
    return ObserverState(z_hat=z, tau_hat=0.0)


def _recursion_terms(cfg: ObserverConfig) -> tuple[float, np.ndarray, float]:
    n = cfg.nominal
    L = cfg.L
    a = 1.0 - float(L @ n.D)
    gx = L @ (n.A + np.outer(n.D, L) - np.eye(2))
    gu = float(L @ n.B)
    return a, gx, gu


def observer_step(
    state: ObserverState, x, u: float, cfg: ObserverConfig, x_next=None
) -> ObserverState:
    """Advance ``z_hat`` one sample given the state ``x(k)`` and input ``u(k)``.

    ``tau_hat`` of the result needs ``x(k+1)``; without ``x_next`` it is NaN
    and :func:`disturbance_estimate` should be called once the state is measured.
    """
    a, gx, gu = _recursion_terms(cfg)
    x = np.asarray(x, dtype=float)
    z_next = a * state.z_hat + float(gx @ x) + gu * u
    if x_next is None:
        return ObserverState(z_hat=z_next, tau_hat=math.nan)
    tau = z_next - float(cfg.L @ np.asarray(x_next, dtype=float))
    return ObserverState(z_hat=z_next, tau_hat=tau)


def disturbance_estimate(state: ObserverState, x, cfg: ObserverConfig) -> float:
    return state.z_hat - float(cfg.L @ np.asarray(x, dtype=float))


def error_contraction_factor(cfg: ObserverConfig) -> float:
    return 1.0 - float(cfg.L @ cfg.nominal.D)


def gain_upper_bound(nominal: DiscretePlant) -> float:
    """Largest stable ``g`` for the stand-alone observer, ``2 / ||D_Dn||_1``."""
    norm = float(np.sum(np.abs(nominal.D)))
    if norm == 0.0:
        raise ValueError("nominal disturbance vector is zero; observer gain is unbounded")
    return 2.0 / norm


def classify_factor(factor: float, band: float = MARGINAL_BAND) -> Stability:
    return Stability.from_radius(abs(factor), band)


@dataclass
class StandaloneRun:
    """Trajectories of the observer running open loop next to the nominal model."""

    x: np.ndarray
    z: np.ndarray
    z_hat: np.ndarray
    tau_hat: np.ndarray

    @property
    def error(self) -> np.ndarray:
        return self.z - self.z_hat


def run_standalone(cfg: ObserverConfig, tau_dn, u, x0=(0.0, 0.0)) -> StandaloneRun:
    """Drive the nominal discrete model with sampled ``tau_dn`` and inputs ``u``.

    The plant obeys ``x(k+1) = A_Dn x + B_Dn u - D_Dn tau_dn(k)`` exactly, so the
    error sequence is the pure observer recursion. The estimate is not fed back.
    """
    tau_dn = np.asarray(tau_dn, dtype=float)
    u = np.broadcast_to(np.asarray(u, dtype=float), tau_dn.shape)
    n = cfg.nominal
    N = tau_dn.size
    xs = np.empty((N, 2))
    zh = np.empty(N)
    x = np.asarray(x0, dtype=float)
    state = initial_state(x, cfg)
    for k in range(N):
        xs[k] = x
        zh[k] = state.z_hat
        x_next = n.A @ x + n.B * u[k] - n.D * tau_dn[k]
        state = observer_step(state, x, u[k], cfg, x_next)
        x = x_next
    z = tau_dn + xs @ cfg.L
    return StandaloneRun(x=xs, z=z, z_hat=zh, tau_hat=zh - xs @ cfg.L)
