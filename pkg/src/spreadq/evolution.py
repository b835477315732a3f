"""Krylov-space time evolution and spread-complexity observables.

The tridiagonal coefficient matrix T is diagonalized once per job
(``scipy.linalg.eigh_tridiagonal``) and amplitudes follow exactly:

    phi_n(t) = sum_k U_nk exp(-i lambda_k t) U_0k

No time-stepping error enters; each grid point is independent, so the
evolution is unitary up to eigensolver roundoff at every t.

Infinite-time averages use the eigenbasis overlaps.  Eigenvalues closer than
1e-12 (relative) are merged into degenerate blocks first; the plain
sum-over-levels formula silently assumes a non-degenerate spectrum and
overestimates dephasing inside a block.
"""
import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .errors import DomainError, NumericalError
from .moment_lanczos import LanczosCoefficients

UNITARITY_ATOL = 1e-10
INTEGRITY_ATOL = 1e-8
DEGENERACY_RTOL = 1e-12
DEFAULT_GRID_POINTS = 600


@dataclass
class KrylovAmplitudes:
    """Amplitudes ``phi[i, n]`` of Krylov vector n at ``times[i]``."""

    times: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.phi = np.asarray(self.phi, dtype=complex)
        if self.times.ndim != 1 or self.phi.ndim != 2 \
                or self.phi.shape[0] != self.times.size:
            raise DomainError("phi must have shape (len(times), K)")
        norms = np.sum(np.abs(self.phi) ** 2, axis=1)
        worst = float(np.max(np.abs(norms - 1.0))) if norms.size else 0.0
        if worst > UNITARITY_ATOL:
            raise NumericalError(
                f"amplitude normalization off by {worst:.3e}")
        at_zero = self.times == 0.0
        if np.any(at_zero):
            start = np.zeros(self.phi.shape[1])
            start[0] = 1.0
            if np.max(np.abs(self.phi[at_zero] - start)) > UNITARITY_ATOL:
                raise NumericalError("phi(0) must be the first unit vector")

    @property
    def depth(self) -> int:
        return self.phi.shape[1]


@dataclass
class SpreadComplexitySeries:
    """Spread complexity C(t) and survival probability F(t) on a grid."""

    times: np.ndarray
    C: np.ndarray
    F: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.C = np.asarray(self.C, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        if not (self.times.shape == self.C.shape == self.F.shape):
            raise DomainError("times, C, F must share one shape")
        if np.any(self.C < -1e-10) or np.any(self.F < -1e-10) \
                or np.any(self.F > 1.0 + 1e-10):
            raise DomainError("C must be >= 0 and F within [0, 1]")
        # clamp eigensolver roundoff once validated
        self.C = np.maximum(self.C, 0.0)
        self.F = np.clip(self.F, 0.0, 1.0)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,C,F\n")
            for t, c, f in zip(self.times, self.C, self.F):
                fh.write(f"{t:.17g},{c:.17g},{f:.17g}\n")


@dataclass(frozen=True)
class LongTimeAverages:
    """Infinite-time means of C(t) and F(t) for a discrete spectrum."""

    c_bar: float
    f_bar: float


def _eigendecompose(lc: LanczosCoefficients):
    if not lc.physical:
        raise DomainError(
            "formal coefficient sets do not define a Hermitian evolution")
    if lc.K == 1:
        return np.array([lc.a[0]]), np.eye(1)
    lam, vecs = eigh_tridiagonal(lc.a, lc.b)
    return lam, vecs


def evolve_amplitudes(lc: LanczosCoefficients, times) -> KrylovAmplitudes:
    """Solve the discrete Schrodinger equation on the given time grid."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.size == 0:
        raise DomainError("empty time grid")
    if not np.all(np.isfinite(times)):
        raise DomainError("time grid must be finite")
    if np.any(np.diff(times) < 0):
        raise DomainError("time grid must be ascending")
    lam, vecs = _eigendecompose(lc)
    phases = np.exp(-1j * np.outer(times, lam))
    phi = (phases * vecs[0]) @ vecs.T
    return KrylovAmplitudes(times=times, phi=phi)


def spread_complexity(amp: KrylovAmplitudes) -> SpreadComplexitySeries:
    """C(t) = sum_n n |phi_n|^2 and F(t) = |phi_0|^2."""
    weights = np.abs(amp.phi) ** 2
    norms = np.sum(weights, axis=1)
    worst = float(np.max(np.abs(norms - 1.0))) if norms.size else 0.0
    if worst > INTEGRITY_ATOL:
        raise NumericalError(
            f"amplitudes lost normalization ({worst:.3e}); refusing to "
            "build observables from them")
    spread = weights @ np.arange(amp.depth)
    survival = weights[:, 0].copy()
    # phi(0) is the first unit vector up to rounding; pin the exact values
    at_zero = amp.times == 0.0
    spread[at_zero] = 0.0
    survival[at_zero] = 1.0
    return SpreadComplexitySeries(times=amp.times, C=spread, F=survival)


def _degenerate_blocks(lam: np.ndarray):
    scale = max(1.0, float(np.max(np.abs(lam))))
    gaps = np.diff(lam)
    boundaries = np.nonzero(gaps > DEGENERACY_RTOL * scale)[0]
    starts = np.concatenate([[0], boundaries + 1])
    stops = np.concatenate([boundaries + 1, [lam.size]])
    return starts, stops


def long_time_average(lc: LanczosCoefficients) -> LongTimeAverages:
    """Infinite-time averages of C and F with degenerate levels merged."""
    lam, vecs = _eigendecompose(lc)
    starts, stops = _degenerate_blocks(lam)
    overlap = vecs * vecs[0]
    block_sums = np.add.reduceat(overlap, starts, axis=1)
    c_bar = float(np.arange(lc.K) @ np.sum(block_sums ** 2, axis=1))
    f_bar = float(np.sum(block_sums[0] ** 2))
    return LongTimeAverages(c_bar=c_bar, f_bar=f_bar)


def default_time_grid(sigma0: float, points: int = DEFAULT_GRID_POINTS) \
        -> np.ndarray:
    """Logarithmic grid covering 1e-2 to 1e3 in units of 1/sigma0."""
    if not sigma0 > 0:
        raise DomainError(f"sigma0 must be positive, got {sigma0}")
    if points < 2:
        raise DomainError(f"need at least 2 grid points, got {points}")
    return np.geomspace(1e-2 / sigma0, 1e3 / sigma0, points)


def write_sidecar(avg: LongTimeAverages, depth: int, path) -> None:
    """JSON sidecar next to the t,C,F series."""
    with open(path, "w") as fh:
        json.dump({"C_bar": avg.c_bar, "F_bar": avg.f_bar, "K": depth},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
