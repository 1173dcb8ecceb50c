"""Rational transfer functions in z, kept in zero-pole-gain form."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["CANCEL_TOL", "Cancellation", "RationalTF"]

CANCEL_TOL = 1e-9


@dataclass(frozen=True)
class Cancellation:
    zero: complex
    pole: complex


def _as_roots(values) -> tuple[complex, ...]:
    return tuple(complex(v) for v in np.atleast_1d(np.asarray(values, dtype=complex)))


@dataclass(frozen=True)
class RationalTF:
    """``gain * prod(z - zeros) / prod(z - poles)``.

    Factored storage keeps analytically known roots exact; coefficient
    arrays (descending powers) are derived on demand.
    """

    zeros: tuple[complex, ...]
    poles: tuple[complex, ...]
    gain: float
    cancellations: tuple[Cancellation, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "zeros", _as_roots(self.zeros) if len(self.zeros) else ())
        object.__setattr__(self, "poles", _as_roots(self.poles) if len(self.poles) else ())
        if len(self.zeros) > len(self.poles) and self.gain != 0:
            raise ValueError("transfer function must be proper")

    @classmethod
    def from_coeffs(cls, num, den) -> "RationalTF":
        num = np.trim_zeros(np.atleast_1d(np.asarray(num, dtype=float)), "f")
        den = np.trim_zeros(np.atleast_1d(np.asarray(den, dtype=float)), "f")
        if den.size == 0:
            raise ValueError("denominator must be nonzero")
        if num.size == 0:
            return cls((), tuple(np.roots(den)), 0.0)
        return cls(tuple(np.roots(num)), tuple(np.roots(den)), float(num[0] / den[0]))

    @property
    def num(self) -> np.ndarray:
        return self.gain * np.real_if_close(np.poly(self.zeros)) if self.zeros else np.array([self.gain])

    @property
    def den(self) -> np.ndarray:
        return np.real_if_close(np.poly(self.poles)) if self.poles else np.array([1.0])

    @property
    def relative_degree(self) -> int:
        return len(self.poles) - len(self.zeros)

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.full(z.shape, self.gain, dtype=complex)
        for q in self.zeros:
            out = out * (z - q)
        for p in self.poles:
            out = out / (z - p)
        return out

    def cancel(self, tol: float = CANCEL_TOL) -> "RationalTF":
        """Remove zero/pole pairs closer than ``tol * max(1, |pole|)``.

        Removed pairs are appended to :attr:`cancellations`.
        """
        zeros = list(self.zeros)
        poles = list(self.poles)
        removed = list(self.cancellations)
        for q in list(zeros):
            if not poles:
                break
            dist = [abs(q - p) for p in poles]
            i = int(np.argmin(dist))
            if dist[i] <= tol * max(1.0, abs(poles[i])):
                removed.append(Cancellation(zero=q, pole=poles[i]))
                zeros.remove(q)
                poles.pop(i)
        return RationalTF(tuple(zeros), tuple(poles), self.gain, tuple(removed))

    def feedback(self) -> "RationalTF":
        """Unity negative feedback ``G / (1 + G)``; cancellations carry over."""
        num, den = self.num, self.den
        width = max(num.size, den.size)
        cl_den = np.pad(den, (width - den.size, 0)) + np.pad(num, (width - num.size, 0))
        cl_den = np.trim_zeros(np.real_if_close(cl_den), "f")
        if cl_den.size == 0:
            raise ValueError("closed loop is singular (G = -1)")
        lead = float(np.real(cl_den[0]))
        return RationalTF(self.zeros, tuple(np.roots(cl_den)), self.gain / lead, self.cancellations)

    def hidden_modes(self) -> tuple[complex, ...]:
        """Poles removed by cancellation; they remain modes of any realization."""
        return tuple(c.pole for c in self.cancellations)
