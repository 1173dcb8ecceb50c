"""Inner (disturbance-compensated) and outer (state-feedback) closed loops.

Augmented state ``x_a = [q, qdot, z_hat]``. The inner loop applies
``u = u_p + tau_hat`` with ``tau_hat = z_hat - L^T x``::

    A_i = [[A_D - B_D L^T,    B_D],
           [L^T (A_Dn - I),   1  ]],      B_i = [B_D, L^T B_Dn]

The outer loop closes ``u_p = r - K^T x_a`` around it, so ``A_o = A_i - B_i K^T``.

For the frictionless plant every loop quantity depends on the observer only
through the normalized gain ``gn = L^T D_Dn`` and the inertia ratio
``alpha = J_n / J``; the inner loop then has eigenvalues ``{1, 1, 1 - alpha gn}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .observer import MARGINAL_BAND, ObserverConfig, Stability
from .plant import DiscretePlant
from .tf import CANCEL_TOL, RationalTF

__all__ = [
    "FeedbackGains",
    "AugmentedSystem",
    "JordanForm",
    "DegenerateJordanError",
    "inertia_ratio",
    "build_inner_loop",
    "build_outer_loop",
    "inner_tf",
    "open_loop_tf",
    "closed_loop_tf",
    "inner_constraint",
    "jordan_decompose",
    "outer_spectrum_factored",
]


@dataclass(frozen=True)
class FeedbackGains:
    """Position and velocity gains of ``u_p = r - Kp q - Kv qdot``."""

    kp: float
    kv: float

    def __post_init__(self):
        for name in ("kp", "kv"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be nonnegative and finite, got {value!r}")

    @classmethod
    def of(cls, kp: float, kv: float | None = None, *, kd: float | None = None) -> "FeedbackGains":
        """Accept the velocity gain under either name (``kv`` or ``kd``)."""
        if kv is not None and kd is not None and kv != kd:
            raise ValueError("kv and kd are aliases; give one of them")
        v = kv if kv is not None else kd
        if v is None:
            raise ValueError("velocity gain is required")
        return cls(kp, v)

    @property
    def kd(self) -> float:
        return self.kv

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.kp, self.kv, 0.0])


@dataclass(frozen=True)
class AugmentedSystem:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    kind: Literal["inner", "outer"]
    plant: DiscretePlant
    cfg: ObserverConfig
    gains: FeedbackGains | None = None
    feedback: Literal["state", "modal"] | None = None

    @property
    def alpha(self) -> float:
        return inertia_ratio(self.plant, self.cfg.nominal)

    @property
    def normalized_gain(self) -> float:
        return self.cfg.normalized_gain

    @property
    def Ts(self) -> float:
        return self.plant.Ts

    @property
    def frictionless(self) -> bool:
        return self.plant.frictionless and self.cfg.nominal.frictionless


@dataclass(frozen=True)
class JordanForm:
    """``M A M^-1 = block_matrix`` with ``block_matrix = [[1,1,0],[0,1,0],[0,0,1-alpha gn]]``."""

    M: np.ndarray
    M_inv: np.ndarray
    block_matrix: np.ndarray
    residual: float
    condition: float

    @property
    def observer_eigenvalue(self) -> float:
        return float(self.block_matrix[2, 2])


class DegenerateJordanError(ValueError):
    """The decoupled eigenvalue has merged into the Jordan block at 1."""


def inertia_ratio(plant: DiscretePlant, nominal: DiscretePlant) -> float:
    """``alpha = J_n / J``."""
    return nominal.source.inertia / plant.source.inertia


def _check_pair(plant: DiscretePlant, cfg: ObserverConfig) -> None:
    if not math.isclose(plant.Ts, cfg.nominal.Ts, rel_tol=1e-12, abs_tol=0.0):
        raise ValueError(
            f"sampling periods differ: plant {plant.Ts!r} vs nominal {cfg.nominal.Ts!r}"
        )


def _require_frictionless(plant: DiscretePlant, cfg: ObserverConfig, what: str) -> None:
    if not (plant.frictionless and cfg.nominal.frictionless):
        raise ValueError(f"{what} is defined for frictionless plants only (b = 0 and b_n = 0)")


def build_inner_loop(plant: DiscretePlant, nominal: DiscretePlant, cfg: ObserverConfig) -> AugmentedSystem:
    """Plant, observer and disturbance compensation as one 3x3 system.

    Output vector is the velocity, ``C = [0, 1, 0]``.
    """
    _check_pair(plant, cfg)
    if nominal is not cfg.nominal:
        _check_pair(nominal, cfg)
    n = nominal
    L = cfg.L
    A = np.empty((3, 3))
    A[:2, :2] = plant.A - np.outer(plant.B, L)
    A[:2, 2] = plant.B
    A[2, :2] = L @ (n.A - np.eye(2))
    A[2, 2] = 1.0
    B = np.array([plant.B[0], plant.B[1], float(L @ n.B)])
    C = np.array([0.0, 1.0, 0.0])
    return AugmentedSystem(A=A, B=B, C=C, kind="inner", plant=plant, cfg=cfg)


def build_outer_loop(
    plant: DiscretePlant,
    nominal: DiscretePlant,
    cfg: ObserverConfig,
    gains: FeedbackGains,
    feedback: Literal["state", "modal"] = "state",
    jordan: JordanForm | None = None,
) -> AugmentedSystem:
    """Close ``u_p = r - K^T x_a`` around the inner loop.

    ``feedback="state"`` feeds back the physical state ``[q, qdot]``; this is
    the controller the simulator runs and the one whose loop gain is
    :func:`open_loop_tf`. ``feedback="modal"`` applies the same gains to the
    Jordan coordinates ``M x_a`` instead (frictionless plants only), which
    decouples the observer eigenvalue ``1 - alpha gn`` from ``K``.

    Output vector is ``C = K``.
    """
    inner = build_inner_loop(plant, nominal, cfg)
    K = gains.vector
    if feedback == "state":
        row = K
    elif feedback == "modal":
        if jordan is None:
            jordan = jordan_decompose(inner)
        row = K @ jordan.M
    else:
        raise ValueError(f"unknown feedback kind {feedback!r}")
    A = inner.A - np.outer(inner.B, row)
    return AugmentedSystem(
        A=A, B=inner.B.copy(), C=K, kind="outer", plant=plant, cfg=cfg, gains=gains, feedback=feedback
    )


def inner_tf(plant: DiscretePlant, nominal: DiscretePlant, cfg: ObserverConfig, tol: float = CANCEL_TOL) -> RationalTF:
    """Velocity response to ``u_p``: ``(Ts/J) (z - 1 + gn) / ((z - 1)(z - 1 + alpha gn))``.

    Built from the unreduced resolvent factors (zeros ``{1, 1 - gn}``, poles
    ``{1, 1, 1 - alpha gn}``) and then reduced; every cancelled pair is kept
    in :attr:`RationalTF.cancellations`.
    """
    _check_pair(plant, cfg)
    _require_frictionless(plant, cfg, "the inner-loop transfer function")
    gn = cfg.normalized_gain
    alpha = inertia_ratio(plant, nominal)
    full = RationalTF(
        zeros=(1.0, 1.0 - gn),
        poles=(1.0, 1.0, 1.0 - alpha * gn),
        gain=plant.Ts / plant.source.inertia,
    )
    return full.cancel(tol)


def open_loop_tf(
    plant: DiscretePlant,
    nominal: DiscretePlant,
    cfg: ObserverConfig,
    gains: FeedbackGains,
    tol: float = CANCEL_TOL,
) -> RationalTF:
    """Loop gain ``K^T (zI - A_i)^-1 B_i`` broken at ``u_p``.

    ``Ts/(2J) * (z - (1 - gn)) / (z - (1 - alpha gn)) * (2 Kv (z - 1) + Kp Ts (z + 1)) / (z - 1)^2``.
    The middle factor is a lead (``alpha > 1``) or lag (``alpha < 1``) compensator.
    """
    _check_pair(plant, cfg)
    _require_frictionless(plant, cfg, "the open-loop transfer function")
    Ts, J = plant.Ts, plant.source.inertia
    gn = cfg.normalized_gain
    alpha = inertia_ratio(plant, nominal)
    lead = 2.0 * gains.kv + gains.kp * Ts
    poles = (1.0, 1.0, 1.0 - alpha * gn)
    if lead == 0.0:
        return RationalTF((), poles, 0.0)
    pd_zero = (2.0 * gains.kv - gains.kp * Ts) / lead
    full = RationalTF(zeros=(1.0 - gn, pd_zero), poles=poles, gain=Ts * lead / (2.0 * J))
    return full.cancel(tol)


def closed_loop_tf(
    plant: DiscretePlant,
    nominal: DiscretePlant,
    cfg: ObserverConfig,
    gains: FeedbackGains,
    tol: float = CANCEL_TOL,
) -> RationalTF:
    """``L_o / (1 + L_o)``: response of ``K^T x`` to ``r``."""
    return open_loop_tf(plant, nominal, cfg, gains, tol).feedback()


def inner_constraint(alpha: float, normalized_gain: float, band: float = MARGINAL_BAND) -> Stability:
    """Stable iff ``0 < alpha gn < 2`` (inner-loop pole inside the unit circle)."""
    if alpha <= 0 or normalized_gain <= 0:
        raise ValueError("alpha and the observer gain must be positive")
    return Stability.from_radius(abs(1.0 - alpha * normalized_gain), band)


def _null_vector(matrix: np.ndarray) -> np.ndarray:
    v = np.linalg.svd(matrix)[2][-1]
    return v * np.sign(v[np.argmax(np.abs(v))])


def jordan_decompose(inner: AugmentedSystem, min_separation: float = 1e-6) -> JordanForm:
    """Similarity transform bringing the frictionless inner loop to Jordan form.

    Columns of ``M^-1`` are the eigenvector ``v1`` of the defective eigenvalue 1,
    a generalized eigenvector ``v2`` with ``(A - I) v2 = v1`` and ``v2 _|_ v1``,
    and the eigenvector ``v3`` of ``1 - alpha gn``. ``v1`` and ``v3`` have unit
    norm with their largest component positive.
    """
    if inner.kind != "inner":
        raise ValueError("jordan_decompose expects the inner-loop system")
    _require_frictionless(inner.plant, inner.cfg, "the Jordan structure")
    shift = inner.alpha * inner.normalized_gain
    if abs(shift) < min_separation:
        raise DegenerateJordanError(
            f"alpha * gn = {shift:.3g} is too small; 1 - alpha gn collides with the Jordan block at 1"
        )
    A = inner.A
    N = A - np.eye(3)
    v1 = _null_vector(N)
    v2 = np.linalg.lstsq(N, v1, rcond=None)[0]
    v2 -= (v2 @ v1) * v1
    lam = 1.0 - shift
    v3 = _null_vector(A - lam * np.eye(3))
    P = np.column_stack([v1, v2, v3])
    M = np.linalg.inv(P)
    block = np.array([[1.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, lam]])
    residual = float(np.max(np.abs(M @ A @ P - block)))
    return JordanForm(M=M, M_inv=P, block_matrix=block, residual=residual, condition=float(np.linalg.cond(P)))


def outer_spectrum_factored(
    outer: AugmentedSystem, jordan: JordanForm, gains: FeedbackGains | None = None
) -> tuple[float, np.ndarray]:
    """Eigenvalues of the modal outer loop from its block-triangular form.

    In Jordan coordinates the outer matrix is ``block_matrix - (M B) K^T``;
    its third column is untouched by feedback, so the spectrum splits into
    ``1 - alpha gn`` and the eigenvalues of the upper-left 2x2 block.
    """
    gains = gains if gains is not None else outer.gains
    if gains is None:
        raise ValueError("feedback gains are required")
    K = gains.vector
    modal = jordan.block_matrix - np.outer(jordan.M @ outer.B, K)
    pair = np.linalg.eigvals(modal[:2, :2])
    pair = pair[np.lexsort((pair.imag, pair.real))]
    return float(modal[2, 2]), pair
