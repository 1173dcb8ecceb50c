"""Eigenvalue-based stability diagnostics, root-locus sweeps and frequency response."""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .observer import MARGINAL_BAND, Stability
from .tf import RationalTF

__all__ = [
    "Stability",
    "StabilityReport",
    "RootLocusTrace",
    "FrequencyResponse",
    "eigenvalues",
    "spectral_radius",
    "classify",
    "pair_eigenvalues",
    "root_locus",
    "locate_boundary",
    "frequency_response",
    "default_grid",
    "sweep_workers",
]


def _sort(values: np.ndarray) -> np.ndarray:
    return values[np.lexsort((values.imag, values.real))]


def eigenvalues(matrix) -> np.ndarray:
    """Eigenvalues with multiplicity, sorted by real then imaginary part.

    A defective eigenvalue of multiplicity m is perturbed by roughly
    ``eps^(1/m)`` in floating point, while the mean of the perturbed group is
    accurate to ``O(eps)``. Eigenvalues closer than ``10 sqrt(eps ||A||)`` are
    therefore grouped and replaced by their mean. Genuinely distinct
    eigenvalues that close are reported as coincident.
    """
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    lam = _sort(np.linalg.eigvals(A).astype(complex))
    scale = max(1.0, float(np.linalg.norm(A)))
    tol = 10.0 * math.sqrt(np.finfo(float).eps * scale)
    # union-find style grouping on proximity
    groups: list[list[int]] = []
    for i, value in enumerate(lam):
        hit = [g for g in groups if any(abs(value - lam[j]) <= tol for j in g)]
        merged = [i] + [j for g in hit for j in g]
        groups = [g for g in groups if g not in hit] + [merged]
    out = lam.copy()
    for g in groups:
        if len(g) > 1:
            mean = lam[g].mean()
            if abs(mean.imag) <= tol:
                mean = complex(mean.real, 0.0)
            out[g] = mean
    return _sort(out)


def spectral_radius(matrix) -> float:
    return float(np.max(np.abs(eigenvalues(matrix))))


@dataclass(frozen=True)
class StabilityReport:
    eigenvalues: np.ndarray
    spectral_radius: float
    classification: Stability
    constraint_checks: dict[str, bool] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [[float(v.real), float(v.imag)] for v in self.eigenvalues],
            "spectral_radius": self.spectral_radius,
            "classification": self.classification.value,
            "constraint_checks": dict(self.constraint_checks),
        }


def classify(matrix, constraint_checks: dict[str, bool] | None = None, band: float = MARGINAL_BAND) -> StabilityReport:
    """Unit-circle classification with a ``band`` wide marginal zone around radius 1."""
    lam = eigenvalues(matrix)
    rho = float(np.max(np.abs(lam)))
    return StabilityReport(
        eigenvalues=lam,
        spectral_radius=rho,
        classification=Stability.from_radius(rho, band),
        constraint_checks=dict(constraint_checks or {}),
    )


def pair_eigenvalues(previous: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Reorder ``current`` to minimise total displacement from ``previous``."""
    n = len(current)
    best, best_cost = None, math.inf
    for perm in itertools.permutations(range(n)):
        cost = sum(abs(current[p] - previous[i]) for i, p in enumerate(perm))
        if cost < best_cost:
            best, best_cost = perm, cost
    return current[list(best)]


def sweep_workers() -> int:
    """Worker count for sweeps, capped by ``DOBSTAB_THREADS`` when set."""
    cap = os.environ.get("DOBSTAB_THREADS")
    default = min(8, os.cpu_count() or 1)
    if not cap:
        return default
    try:
        return max(1, int(cap))
    except ValueError:
        raise ValueError(f"DOBSTAB_THREADS must be an integer, got {cap!r}") from None


@dataclass(frozen=True)
class RootLocusTrace:
    """Eigenvalues of a parametrised system along a sweep.

    ``samples`` holds the raw sorted multisets; ``branches`` the same values
    reordered by nearest-neighbour continuation so that column ``j`` follows one
    locus branch.
    """

    parameter: str
    values: np.ndarray
    samples: np.ndarray
    branches: np.ndarray
    radii: np.ndarray
    boundary: float | None

    def rows(self):
        for p, lam in zip(self.values, self.branches):
            yield float(p), lam


def _is_unstable(builder, p, band) -> bool:
    return spectral_radius(builder(p)) > 1.0 + band


def locate_boundary(
    builder: Callable[[float], np.ndarray],
    lo: float,
    hi: float,
    rtol: float = 1e-10,
    band: float = MARGINAL_BAND,
) -> float:
    """Bisect for the parameter where the spectral radius leaves ``1 + band``.

    ``lo`` and ``hi`` must bracket a change of stability status.
    """
    lo_bad = _is_unstable(builder, lo, band)
    if lo_bad == _is_unstable(builder, hi, band):
        raise ValueError("interval does not bracket a stability change")
    while hi - lo > rtol * max(abs(lo), abs(hi), 1e-300):
        mid = 0.5 * (lo + hi)
        if _is_unstable(builder, mid, band) == lo_bad:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def root_locus(
    builder: Callable[[float], np.ndarray],
    lo: float,
    hi: float,
    count: int,
    parameter: str = "p",
    workers: int | None = None,
    rtol: float = 1e-10,
) -> RootLocusTrace:
    """Sweep ``builder(p)`` over ``count`` evenly spaced values in ``[lo, hi]``.

    The boundary is the first place, scanning upward, where the system turns
    from stable or marginal to unstable; it is refined by bisection.
    """
    if count < 2:
        raise ValueError("a sweep needs at least 2 samples")
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise ValueError(f"invalid sweep range [{lo}, {hi}]")
    values = np.linspace(lo, hi, count)
    workers = workers or sweep_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            spectra = list(pool.map(lambda p: eigenvalues(builder(p)), values))
    else:
        spectra = [eigenvalues(builder(p)) for p in values]
    samples = np.array(spectra)
    branches = samples.copy()
    for i in range(1, count):
        branches[i] = pair_eigenvalues(branches[i - 1], samples[i])
    radii = np.max(np.abs(samples), axis=1)
    unstable = radii > 1.0 + MARGINAL_BAND
    boundary = None
    for i in range(1, count):
        if unstable[i] and not unstable[i - 1]:
            boundary = locate_boundary(builder, values[i - 1], values[i], rtol=rtol)
            break
    return RootLocusTrace(parameter, values, samples, branches, radii, boundary)


@dataclass(frozen=True)
class FrequencyResponse:
    omega: np.ndarray
    values: np.ndarray
    crossovers: tuple[float, ...]
    gain_crossover: float | None
    phase_margin: float | None
    note: str | None = None

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def phase_deg(self) -> np.ndarray:
        return _phase_deg(self.values)


def _phase_deg(values: np.ndarray) -> np.ndarray:
    phase = np.degrees(np.unwrap(np.angle(values)))
    # anchor the low-frequency end in (-360, 0]
    shift = 360.0 * math.ceil(phase[0] / 360.0) if phase.size else 0.0
    return phase - shift


def default_grid(Ts: float, points: int = 400, lowest: float = 1e-2) -> np.ndarray:
    return np.logspace(math.log10(lowest), math.log10(0.999 * math.pi / Ts), points)


def _at(tf, z: complex) -> complex:
    return complex(np.asarray(tf(np.array([z]))).reshape(-1)[0])


def frequency_response(tf: RationalTF | Callable, Ts: float, omega: Sequence[float] | None = None) -> FrequencyResponse:
    """Evaluate ``tf`` on ``z = exp(j w Ts)`` and locate the gain crossover.

    ``tf`` is a :class:`RationalTF` or any vectorised callable of ``z``.

    The phase margin is reported only when exactly one crossover lies in the
    grid; otherwise ``note`` says why it is missing.
    """
    if Ts <= 0:
        raise ValueError("sampling period must be positive")
    w = default_grid(Ts) if omega is None else np.asarray(omega, dtype=float)
    if np.any(np.diff(w) <= 0) or w[0] <= 0 or w[-1] >= math.pi / Ts:
        raise ValueError("frequency grid must be increasing inside (0, pi/Ts)")
    values = tf(np.exp(1j * w * Ts))
    excess = np.log(np.abs(values))
    crossings = []
    for i in np.nonzero(np.sign(excess[:-1]) * np.sign(excess[1:]) < 0)[0]:
        a, b = w[i], w[i + 1]
        fa = excess[i]
        for _ in range(80):
            m = 0.5 * (a + b)
            fm = math.log(abs(_at(tf, np.exp(1j * m * Ts))))
            if (fm > 0) == (fa > 0):
                a, fa = m, fm
            else:
                b = m
        crossings.append(0.5 * (a + b))
    note = None
    wc = pm = None
    if len(crossings) == 1:
        wc = crossings[0]
        # phase at wc continued from the grid so the branch matches
        grid = np.append(w[w < wc], wc)
        phase = _phase_deg(tf(np.exp(1j * grid * Ts)))[-1]
        pm = 180.0 + phase
    elif not crossings:
        note = "no gain crossover in band"
    else:
        note = f"{len(crossings)} gain crossovers in band"
    return FrequencyResponse(w, values, tuple(crossings), wc, pm, note)
