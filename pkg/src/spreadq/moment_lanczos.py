"""Conversion between spectral moments and Lanczos coefficients.

The local density of states of an initial state defines power moments
``mu_n = <psi0|H^n|psi0>``.  The tridiagonal (Jacobi) representation of the
same data is the pair of Lanczos coefficient sequences ``a_n`` (diagonal)
and ``b_n`` (off-diagonal, b_0 = 0).  This module converts in both
directions without ever touching a matrix:

* ``moments_to_lanczos`` runs the double auxiliary-array recursion

      M_k^(0) = (-1)^k mu_k,          L_k^(0) = (-1)^(k+1) mu_(k+1),
      M_k^(n) = L_k^(n-1) - L_(n-1)^(n-1) M_k^(n-1) / M_(n-1)^(n-1),
      L_k^(n) = M_(k+1)^(n) / M_n^(n) - M_k^(n-1) / M_(n-1)^(n-1),

  from which ``b_n = sqrt(M_n^(n))`` and ``a_n = -L_n^(n)``.  The recursion
  is numerically violent (Hankel conditioning), so it never runs in double
  precision: rational inputs are processed with exact ``fractions.Fraction``
  arithmetic, everything else with ``mpmath`` at a working precision that is
  escalated until two precision levels agree.

* ``lanczos_to_moments`` recovers ``mu_n = (T^n)_00`` exactly.  Closed walks
  on a tridiagonal matrix cross every off-diagonal bond an even number of
  times, so the result is a polynomial in ``a_n`` and ``b_n^2`` and can be
  evaluated in exact rational arithmetic even though ``b_n`` itself is
  irrational.

Moment positivity (all Hankel determinants of ``[mu_(i+j)]`` positive) is
what guarantees real coefficients.  A sequence that fails the check is
*formal*: ``formal=True`` continues the recursion with sign-carrying
``b_n = sign(b_n^2) * sqrt(|b_n^2|)`` and marks the output non-physical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

import mpmath
import numpy as np

from .errors import (
    DomainError,
    InsufficientMomentsError,
    NumericalError,
    PositivityError,
    PrecisionError,
)

# Relative threshold below which b_n^2 is declared an exact Krylov
# exhaustion rather than a genuine coefficient (floating path only).
EXHAUSTION_RTOL = 1e-24

# Hard ceiling for the automatic precision escalation.
MAX_PRECISION_BITS = 1 << 14

# Two floating results are considered converged when the final b agrees
# to this relative tolerance between consecutive precision levels.
ESCALATION_RTOL = 1e-9


@dataclass
class MomentSequence:
    """Power moments ``mu_0 .. mu_order`` of a local density of states.

    ``values[n]`` is ``mu_n``; entries are ``Fraction``/``int`` on the exact
    path or ``mpmath.mpf``/``float`` otherwise.  ``precision_bits`` records
    the working precision used to produce them (``None`` means exact).
    ``mu_0`` must equal 1 (normalized state).
    """

    values: tuple
    precision_bits: int | None = None
    _violation: int | None = field(default=None, repr=False, compare=False)
    _checked: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        self.values = tuple(self.values)
        if len(self.values) == 0:
            raise DomainError("moment sequence must contain at least mu_0")
        mu0 = self.values[0]
        if isinstance(mu0, Rational):
            ok = mu0 == 1
        else:
            ok = abs(float(mu0) - 1.0) <= 1e-12
        if not ok:
            raise DomainError(f"mu_0 must be 1 (normalized state), got {mu0}")

    @property
    def order(self) -> int:
        return len(self.values) - 1

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, n):
        return self.values[n]

    def as_array(self) -> np.ndarray:
        return np.array([float(v) for v in self.values], dtype=float)

    def is_exact(self) -> bool:
        return all(isinstance(v, Rational) for v in self.values)

    def first_violation(self) -> int | None:
        """Depth of the first Hankel positivity violation, or None.

        Runs the recursion as deep as the available order allows and caches
        the result.  Exhaustion (b_n^2 == 0) is not a violation.
        """
        if not self._checked:
            depth = len(self.values) // 2
            self._violation = None
            if depth >= 1:
                result = _convert(self, depth, formal=True,
                                  precision_bits=self.precision_bits)
                self._violation = result.violation_depth
            self._checked = True
        return self._violation

    @property
    def physical(self) -> bool:
        return self.first_violation() is None


@dataclass
class LanczosCoefficients:
    """Tridiagonal coefficients ``a_0..a_(K-1)``, ``b_1..b_(K-1)``.

    ``physical=True`` requires every ``b_n > 0``.  Formal sequences
    (``physical=False``) may carry negative entries; such an entry encodes
    ``b_n^2 = sign(b_n) * b_n^2`` from a non-positive Hankel form and does
    not correspond to any Hermitian matrix.
    """

    a: np.ndarray
    b: np.ndarray
    physical: bool = True
    violation_depth: int | None = None

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.a.ndim != 1 or self.b.ndim != 1:
            raise DomainError("coefficient arrays must be one-dimensional")
        if len(self.a) == 0:
            raise DomainError("need at least a_0")
        if len(self.b) != len(self.a) - 1:
            raise DomainError(
                f"expected {len(self.a) - 1} off-diagonal entries, "
                f"got {len(self.b)}")
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.b))):
            raise DomainError("coefficients must be finite")
        if self.physical and np.any(self.b <= 0):
            raise DomainError("physical coefficients require all b_n > 0")

    @property
    def K(self) -> int:
        """Krylov dimension represented by these coefficients."""
        return len(self.a)

    def signed_b_squared(self) -> np.ndarray:
        """Return b_n^2 with the formal sign convention applied."""
        return np.sign(self.b) * self.b**2

    def to_csv(self, path) -> None:
        """Write rows ``n,a_n,b_n`` (b_0 written as 0 by convention)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "a_n", "b_n"])
            for n in range(self.K):
                bn = 0.0 if n == 0 else self.b[n - 1]
                writer.writerow([n, f"{self.a[n]:.17g}", f"{bn:.17g}"])

    @classmethod
    def from_csv(cls, path, physical: bool = True) -> "LanczosCoefficients":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [h.strip() for h in header] != ["n", "a_n", "b_n"]:
                raise DomainError(f"unexpected coefficient header: {header}")
            a, b = [], []
            for row in reader:
                n = int(row[0])
                a.append(float(row[1]))
                if n > 0:
                    b.append(float(row[2]))
        return cls(np.array(a), np.array(b), physical=physical)


def _is_rational_sequence(values: Sequence) -> bool:
    return all(isinstance(v, Rational) for v in values)


def _recursion(mu, K: int, formal: bool, exact: bool):
    """One pass of the auxiliary L/M recursion in the arithmetic of ``mu``.

    Returns ``(a, b2, violation_depth)`` where lists hold exact/mpf values
    and terminate early on Krylov exhaustion.
    """
    two_k = 2 * K
    M_prev = [((-1) ** k) * mu[k] for k in range(two_k + 1)]
    L_prev = [((-1) ** (k + 1)) * mu[k + 1] for k in range(two_k)]
    a = [-L_prev[0]]
    b2 = []
    violation = None
    scale = max(abs(mu[2] - mu[1] * mu[1]), abs(mu[2]), mu[1] * mu[1])

    for n in range(1, K):
        lo, hi = n, two_k - n
        M_cur = [None] * (hi + 1)
        pivot_L = L_prev[n - 1]
        pivot_M = M_prev[n - 1]
        for k in range(lo, hi + 1):
            M_cur[k] = L_prev[k] - pivot_L * M_prev[k] / pivot_M
        b2_n = M_cur[n]

        if exact:
            exhausted = b2_n == 0
            negative = b2_n < 0
        else:
            thr = EXHAUSTION_RTOL * max(scale, mpmath.mpf("1e-300"))
            exhausted = abs(b2_n) <= thr
            negative = b2_n < -thr
        if negative and not formal:
            raise PositivityError(
                f"Hankel positivity violated at depth {n}: b_{n}^2 = "
                f"{float(b2_n)}", depth=n)
        if negative:
            violation = n if violation is None else violation
        elif exhausted:
            break

        b2.append(b2_n)
        scale = max(scale, abs(b2_n))

        L_cur = [None] * hi
        for k in range(lo, hi):
            L_cur[k] = M_cur[k + 1] / b2_n - M_prev[k] / pivot_M
        a.append(-L_cur[n])
        M_prev, L_prev = M_cur, L_cur

    return a, b2, violation


def _finalize(a, b2, violation) -> LanczosCoefficients:
    a_arr = np.array([float(x) for x in a], dtype=float)
    b_arr = np.empty(len(b2), dtype=float)
    for i, v in enumerate(b2):
        fv = float(v)
        b_arr[i] = np.sign(fv) * np.sqrt(abs(fv))
    return LanczosCoefficients(a_arr, b_arr, physical=violation is None,
                               violation_depth=violation)


def _convert(moments, K, formal, precision_bits) -> LanczosCoefficients:
    mu = list(moments.values if isinstance(moments, MomentSequence)
              else moments)
    if _is_rational_sequence(mu):
        mu = [Fraction(v) for v in mu]
        a, b2, violation = _recursion(mu, K, formal, exact=True)
        return _finalize(a, b2, violation)

    # Floating path: exact conversion of the inputs, then escalate the
    # working precision until the deepest coefficient is stable.  A
    # positivity failure is only believed once two consecutive precision
    # levels report it at the same depth; otherwise it is retried.
    mu = [v if isinstance(v, mpmath.mpf) else mpmath.mpf(v) for v in mu]
    prec = max(128, 12 * K, precision_bits or 0)
    prev = None
    while prec <= MAX_PRECISION_BITS:
        try:
            with mpmath.workprec(prec):
                a, b2, violation = _recursion(mu, K, formal, exact=False)
            cur = ("ok", _finalize(a, b2, violation))
        except PositivityError as exc:
            cur = ("violation", exc)
        if prev is not None:
            if cur[0] == "ok" and prev[0] == "ok":
                new, old = cur[1], prev[1]
                if new.K == old.K:
                    if new.K == 1:
                        scale = max(abs(new.a[0]), 1.0)
                        agreed = abs(new.a[0] - old.a[0]) <= \
                            ESCALATION_RTOL * scale
                    else:
                        agreed = abs(new.b[-1] - old.b[-1]) <= \
                            ESCALATION_RTOL * max(abs(new.b[-1]), 1e-300)
                    if agreed:
                        return new
            elif (cur[0] == "violation" and prev[0] == "violation"
                  and cur[1].depth == prev[1].depth):
                raise cur[1]
        prev = cur
        prec *= 2
    raise PrecisionError(
        f"no convergence up to {MAX_PRECISION_BITS} bits for K={K}; "
        "the moment sequence is too ill-conditioned at this depth")


def moments_to_lanczos(moments, K: int, precision_bits: int | None = None,
                       formal: bool = False) -> LanczosCoefficients:
    """Convert power moments to Lanczos coefficients at depth ``K``.

    Parameters
    ----------
    moments : MomentSequence or sequence of numbers
        ``mu_0 .. mu_order`` with ``order >= 2K``.
    K : int
        Requested Krylov depth: returns ``a_0..a_(K-1)`` and ``b_1..b_(K-1)``.
        Terminates early (smaller K) when the Krylov space exhausts.
    precision_bits : int, optional
        Floor for the working precision on the floating path.  Rational
        inputs (int / Fraction entries) are converted exactly instead.
    formal : bool
        Continue through Hankel positivity violations with sign-carrying
        coefficients instead of raising ``PositivityError``.

    Raises
    ------
    InsufficientMomentsError
        If fewer than ``2K + 1`` moment values are available.
    PositivityError
        If some ``b_n^2 < 0`` and ``formal`` is not set.
    PrecisionError
        If precision escalation hits its ceiling without convergence.
    """
    if not isinstance(K, (int, np.integer)) or K < 1:
        raise DomainError(f"K must be a positive integer, got {K}")
    values = moments.values if isinstance(moments, MomentSequence) \
        else tuple(moments)
    order = len(values) - 1
    if order < 2 * K:
        raise InsufficientMomentsError(
            f"depth K={K} needs moments through order {2 * K}, "
            f"got order {order}")
    if not isinstance(moments, MomentSequence):
        moments = MomentSequence(values, precision_bits=precision_bits)
    return _convert(moments, K, formal, precision_bits)


def lanczos_to_moments(lc: LanczosCoefficients, order: int) -> MomentSequence:
    """Recover ``mu_n = (T^n)_00`` from tridiagonal coefficients.

    Exact: the walk sum only involves ``a_n`` and ``b_n^2``, so it is
    evaluated with ``Fraction`` arithmetic on the binary values stored in
    ``lc`` (floats are dyadic rationals).  For formal coefficient sets the
    sign convention of ``LanczosCoefficients`` is honoured, which makes
    this the exact inverse of ``moments_to_lanczos(..., formal=True)``.
    """
    if not isinstance(order, (int, np.integer)) or order < 0:
        raise DomainError(f"order must be a non-negative integer, got {order}")
    K = lc.K
    a = [Fraction(float(x)) for x in lc.a]
    b2 = [Fraction(float(x)) * abs(Fraction(float(x))) for x in lc.b]
    # v_j tracks the rescaled amplitude (prod_{i<=j} b_i) <K_j|T^n|K_0>, in
    # which representation applying T uses only a_j and b_j^2.
    v = [Fraction(0)] * K
    v[0] = Fraction(1)
    mu = [Fraction(1)]
    for _ in range(order):
        w = [Fraction(0)] * K
        for j in range(K):
            val = a[j] * v[j]
            if j > 0:
                val += b2[j - 1] * v[j - 1]
            if j < K - 1:
                val += v[j + 1]
            w[j] = val
        v = w
        mu.append(v[0])
    return MomentSequence(tuple(mu), precision_bits=None)


def hankel_matrix(moments, size: int) -> np.ndarray:
    """Dense Hankel matrix ``[mu_(i+j)]`` of the given size (float64)."""
    values = moments.values if isinstance(moments, MomentSequence) \
        else tuple(moments)
    if 2 * (size - 1) > len(values) - 1:
        raise InsufficientMomentsError(
            f"Hankel size {size} needs moments through order {2 * (size - 1)}")
    return np.array([[float(values[i + j]) for j in range(size)]
                     for i in range(size)], dtype=float)
