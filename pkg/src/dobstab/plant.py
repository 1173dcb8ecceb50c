"""Second-order servo model and its exact zero-order-hold discretization.

Continuous model (position q, velocity qdot)::

    xdot = A_C x + B_C u - D_C tau_d,   A_C = [[0, 1], [0, -b/J]],   B_C = D_C = [0, 1/J]

Friction enters with a negative sign so that ``b >= 0`` is dissipative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "ContinuousPlant",
    "NominalPlant",
    "DiscretePlant",
    "LumpedDisturbance",
    "continuous_matrices",
    "transition",
    "zoh_discretize",
    "disturbance_integral",
    "lumped_disturbance",
]

# Below this |x| the phi-functions use their Taylor series.
_SERIES_RADIUS = 0.5


def _phi1(x: float) -> float:
    """(e^x - 1) / x, continuous at 0."""
    if x == 0.0:
        return 1.0
    return math.expm1(x) / x


def _phi2(x: float) -> float:
    """(e^x - 1 - x) / x^2, continuous at 0."""
    if abs(x) < _SERIES_RADIUS:
        # sum_k x^k / (k + 2)!
        term = 0.5
        total = term
        for k in range(1, 30):
            term *= x / (k + 2)
            total += term
        return total
    return (math.expm1(x) - x) / (x * x)


@dataclass(frozen=True)
class ContinuousPlant:
    """Servo with inertia ``J`` [kg m^2] and viscous friction ``b`` [N m s/rad]."""

    inertia: float
    friction: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.inertia) or self.inertia <= 0:
            raise ValueError(f"inertia must be positive and finite, got {self.inertia!r}")
        if not math.isfinite(self.friction) or self.friction < 0:
            raise ValueError(f"friction must be nonnegative and finite, got {self.friction!r}")

    @property
    def decay_rate(self) -> float:
        """b / J, the velocity decay rate in 1/s."""
        return self.friction / self.inertia


@dataclass(frozen=True)
class NominalPlant(ContinuousPlant):
    """The model the observer believes in (``J_n``, ``b_n``)."""


@dataclass(frozen=True)
class DiscretePlant:
    """ZOH-equivalent of a :class:`ContinuousPlant` at sampling period ``Ts``.

    ``D`` multiplies a disturbance that is held constant over the sample;
    the exact intersample contribution is :func:`disturbance_integral`.
    """

    A: np.ndarray
    B: np.ndarray
    D: np.ndarray
    Ts: float
    source: ContinuousPlant

    @property
    def frictionless(self) -> bool:
        return self.source.friction == 0.0


def continuous_matrices(plant: ContinuousPlant) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(A_C, B_C, D_C)`` for ``plant``."""
    J, b = plant.inertia, plant.friction
    A = np.array([[0.0, 1.0], [0.0, -b / J]])
    B = np.array([0.0, 1.0 / J])
    return A, B, B.copy()


def transition(plant: ContinuousPlant, t: float) -> np.ndarray:
    """Closed form of ``exp(A_C t)``."""
    a = plant.decay_rate
    return np.array([[1.0, t * _phi1(-a * t)], [0.0, math.exp(-a * t)]])


def zoh_discretize(plant: ContinuousPlant, Ts: float) -> DiscretePlant:
    """Exact zero-order-hold discretization of ``plant``.

    Uses the closed forms for this 2x2 family; no general matrix exponential
    is involved. With ``b = 0`` the result is ``A = [[1, Ts], [0, 1]]`` and
    ``B = D = [Ts^2 / 2J, Ts / J]``.
    """
    Ts = float(Ts)
    if not math.isfinite(Ts) or Ts <= 0:
        raise ValueError(f"sampling period must be positive, got {Ts!r}")
    a = plant.decay_rate
    x = -a * Ts
    A = np.array([[1.0, Ts * _phi1(x)], [0.0, math.exp(x)]])
    B = np.array([Ts * Ts * _phi2(x), Ts * _phi1(x)]) / plant.inertia
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise ValueError("discretization produced non-finite matrices")
    return DiscretePlant(A=A, B=B, D=B.copy(), Ts=Ts, source=plant)


def disturbance_integral(
    plant: ContinuousPlant,
    Ts: float,
    tau_d: Callable[[np.ndarray], np.ndarray],
    t_next: float | np.ndarray,
    panels: int = 16,
    order: int = 4,
) -> np.ndarray:
    """Intersample disturbance vector ``int_0^Ts exp(A_C s) D_C tau_d(t_next - s) ds``.

    Composite Gauss-Legendre (``panels`` x ``order`` interior nodes), so a
    disturbance that jumps exactly on a sampling instant is integrated without
    endpoint ambiguity. ``tau_d`` must accept arrays. ``t_next`` may be an
    array of end times; the result then has shape ``(len(t_next), 2)``.
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    h = Ts / panels
    left = np.arange(panels) * h
    s = (left[:, None] + 0.5 * h * (nodes[None, :] + 1.0)).ravel()
    w = np.tile(0.5 * h * weights, panels)
    a = plant.decay_rate
    kernel = np.stack([s * np.array([_phi1(-a * si) for si in s]), np.exp(-a * s)], axis=1)
    kernel /= plant.inertia
    t_next = np.asarray(t_next, dtype=float)
    tau = np.asarray(tau_d(t_next[..., None] - s), dtype=float)
    return (tau * w) @ kernel


@dataclass(frozen=True)
class LumpedDisturbance:
    """Scalar disturbance seen by the nominal model, in N m."""

    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise ValueError("lumped disturbance must be finite")

    def __float__(self) -> float:
        return self.value


def lumped_disturbance(
    x, u: float, tau_d: float, plant: ContinuousPlant, nominal: ContinuousPlant
) -> LumpedDisturbance:
    """Refer the true plant's disturbance, parameter and input mismatch to the nominal model.

    Solves ``D_Cn tau_dn = (A_Cn - A_C) x + (B_Cn - B_C) u + D_C tau_d``
    in the least-squares sense (exact here: both sides live on the velocity row).
    """
    x = np.asarray(x, dtype=float)
    A, B, D = continuous_matrices(plant)
    An, Bn, Dn = continuous_matrices(nominal)
    residual = (An - A) @ x + (Bn - B) * u + D * tau_d
    return LumpedDisturbance(float(Dn @ residual / (Dn @ Dn)))
