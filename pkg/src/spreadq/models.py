"""Closed-form autocorrelation and survival-probability models.

Four *amplitude* models give the return amplitude ``S(t)`` of a quenched
state directly (all normalized, ``S(0) = 1``):

* ``GaussianAutocorr(sigma0)``:        ``S(t) = exp(-sigma0^2 t^2 / 2)``,
  a Gaussian local density of states of width ``sigma0``.
* ``TruncatedQuadraticAutocorr(sigma0)``: ``S(t) = 1 - sigma0^2 t^2 / 2``,
  the bare short-time expansion kept as-is.  This is a *formal* model: its
  moment sequence (1, 0, sigma0^2, 0, 0, ...) violates Hankel positivity
  at depth 2, so no physical density reproduces it.
* ``InterpolationAutocorr(sigma0, gamma)``:
  ``S(t) = exp[ g2/(4 s2) - (1/2) sqrt(g2^2/(4 s2^2) + g2 t^2) ]`` with
  ``s2 = sigma0^2``, ``g2 = gamma^2``.  Gaussian decay of width ``sigma0``
  at short times crossing over to exponential decay ``|S|^2 ~ exp(-gamma t)``
  at long times.
* ``SemicircleAutocorr(alpha)``:       ``S(t) = J_1(2 alpha t) / (alpha t)``,
  the semicircle density on ``[-2 alpha, 2 alpha]`` (Catalan moments).

Two *survival probability* models describe ensemble-averaged fidelities
``F(t) = |S(t)|^2`` including spectral-correlation effects:

* ``FrmSurvival(dim)``: full random matrices of the orthogonal ensemble,

      <F(t)> = (1-Fbar)/(dim-1) * [4 dim J_1(eta t)^2/(eta t)^2
                                   - B_2(eta t/(4 dim))] + Fbar,

  with ``eta = sqrt(2 dim)`` (semicircle radius) and saturation
  ``Fbar = 3/(dim+2)``.  ``B_2`` is the two-level form factor of the
  orthogonal ensemble; it carves the correlation hole below ``Fbar``.
* ``SpinSurvival(sigma0, dim, A, fbar)``: phenomenological form for a
  disordered spin-1/2 chain,

      <F(t)> = (1-fbar)/(dim-1) * [dim g(t)/g(0) - B_2(sigma0 t/dim)] + fbar,
      g(t) = exp(-x) + A (1 - exp(-x))/x,   x = sigma0^2 t^2,

  whose ``t = 0`` singularity is removable (``g(0) = 1 + A``).

``moments_of_model`` returns the power moments of the implied density:
exact rational values for the closed-form cases, and high-precision values
from Richardson-extrapolated central differences (in the variable
``u = t^2``) for the interpolation model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import mpmath
import numpy as np
from scipy.special import j1 as _bessel_j1

from .errors import DomainError, PrecisionError, VariantError
from .moment_lanczos import MomentSequence

# Arguments smaller than this are routed through series branches when a
# formula has a removable singularity at zero.
SERIES_THRESHOLD = 1e-4

# Precision-escalation policy for derivative-based moment extraction.
MOMENT_ESCALATION_RTOL = 1e-3
MAX_MOMENT_PRECISION_BITS = 1 << 15


@dataclass(frozen=True)
class GaussianAutocorr:
    sigma0: float

    def __post_init__(self):
        _require_positive("sigma0", self.sigma0)


@dataclass(frozen=True)
class TruncatedQuadraticAutocorr:
    sigma0: float

    def __post_init__(self):
        _require_positive("sigma0", self.sigma0)


@dataclass(frozen=True)
class InterpolationAutocorr:
    sigma0: float
    gamma: float

    def __post_init__(self):
        _require_positive("sigma0", self.sigma0)
        _require_positive("gamma", self.gamma)

    @property
    def series_radius(self) -> float:
        """Convergence radius (in t) of the moment expansion.

        Set by the branch point of the square root at
        ``t^2 = -gamma^2 / (4 sigma0^4)``.
        """
        return self.gamma / (2.0 * self.sigma0**2)


@dataclass(frozen=True)
class SemicircleAutocorr:
    alpha: float

    def __post_init__(self):
        _require_positive("alpha", self.alpha)


@dataclass(frozen=True)
class FrmSurvival:
    dim: int

    def __post_init__(self):
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 2:
            raise DomainError(f"dim must be an integer >= 2, got {self.dim}")

    @property
    def fbar(self) -> float:
        """Infinite-time average of the survival probability."""
        return 3.0 / (self.dim + 2)

    @property
    def eta(self) -> float:
        """Semicircle radius sqrt(2 dim) of the matched spectral density."""
        return math.sqrt(2.0 * self.dim)


@dataclass(frozen=True)
class SpinSurvival:
    sigma0: float
    dim: int
    amplitude: float
    fbar: float

    def __post_init__(self):
        _require_positive("sigma0", self.sigma0)
        if not isinstance(self.dim, (int, np.integer)) or self.dim < 2:
            raise DomainError(f"dim must be an integer >= 2, got {self.dim}")
        if not (math.isfinite(self.amplitude) and self.amplitude >= 0):
            raise DomainError(
                f"amplitude must be finite and >= 0, got {self.amplitude}")
        if not (0 < self.fbar <= 1):
            raise DomainError(f"fbar must lie in (0, 1], got {self.fbar}")


AmplitudeModel = Union[GaussianAutocorr, TruncatedQuadraticAutocorr,
                       InterpolationAutocorr, SemicircleAutocorr]
SurvivalModel = Union[FrmSurvival, SpinSurvival]
AutocorrModel = Union[AmplitudeModel, SurvivalModel]

_VARIANTS = {
    "gaussian": GaussianAutocorr,
    "truncated_quadratic": TruncatedQuadraticAutocorr,
    "interpolation": InterpolationAutocorr,
    "semicircle": SemicircleAutocorr,
    "frm": FrmSurvival,
    "spin": SpinSurvival,
}
_VARIANT_NAMES = {cls: name for name, cls in _VARIANTS.items()}


@dataclass(frozen=True)
class LdosSummary:
    """Mean and width of a local density of states (E0 and sigma0 = b_1)."""

    e0: float
    sigma0: float


def _require_positive(name: str, value) -> None:
    if not (np.isscalar(value) and math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be a finite positive number, "
                          f"got {value!r}")


def _time_array(t, nonnegative: bool = False):
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("t must be finite")
    if nonnegative and np.any(arr < 0):
        raise DomainError("t must be >= 0")
    return arr, arr.ndim == 0


def _restore(value: np.ndarray, scalar: bool):
    return float(value) if scalar else value


def _j1_over_x(x: np.ndarray) -> np.ndarray:
    """``J_1(x)/x`` with a series branch across the removable zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_THRESHOLD
    out = np.empty_like(x)
    xs = x[small]
    out[small] = 0.5 - xs**2 / 16.0 + xs**4 / 384.0
    xl = x[~small]
    out[~small] = _bessel_j1(xl) / xl
    return out


def eval_autocorr(model: AmplitudeModel, t):
    """Return amplitude S(t) of an amplitude model (scalar or array t).

    Survival-probability models carry no amplitude and are rejected with
    ``VariantError``; use ``eval_frm_sp`` / ``eval_spin_sp`` for those.
    """
    arr, scalar = _time_array(t)
    if isinstance(model, GaussianAutocorr):
        out = np.exp(-0.5 * model.sigma0**2 * arr**2)
    elif isinstance(model, TruncatedQuadraticAutocorr):
        out = 1.0 - 0.5 * model.sigma0**2 * arr**2
    elif isinstance(model, InterpolationAutocorr):
        s2 = model.sigma0**2
        g2 = model.gamma**2
        out = np.exp(g2 / (4.0 * s2)
                     - 0.5 * np.sqrt(g2 * g2 / (4.0 * s2 * s2) + g2 * arr**2))
    elif isinstance(model, SemicircleAutocorr):
        out = 2.0 * _j1_over_x(2.0 * model.alpha * arr)
    elif isinstance(model, (FrmSurvival, SpinSurvival)):
        raise VariantError(
            f"{type(model).__name__} is a survival-probability model; "
            "it has no return amplitude")
    else:
        raise VariantError(f"unknown model type {type(model).__name__}")
    return _restore(out, scalar)


def eval_b2(t):
    """Two-level form factor of the orthogonal ensemble.

    Piecewise for t >= 0 (in units of the Heisenberg time):

        B_2(t) = 1 - 2 t + t ln(1 + 2 t)              for t <= 1,
        B_2(t) = t ln((2 t + 1)/(2 t - 1)) - 1        for t >= 1,

    the branches agreeing at t = 1 (both equal ln 3 - 1).  The second
    branch is evaluated as ``2 t artanh(1/(2 t)) - 1``, which is the same
    function with better conditioning for large t.  Monotonically falls
    from 1 at t = 0 to 0 as t -> infinity.
    """
    arr, scalar = _time_array(t, nonnegative=True)
    out = np.empty_like(arr)
    low = arr < 1.0
    tl = arr[low]
    out[low] = 1.0 - 2.0 * tl + tl * np.log1p(2.0 * tl)
    th = arr[~low]
    out[~low] = 2.0 * th * np.arctanh(1.0 / (2.0 * th)) - 1.0
    return _restore(out, scalar)


def eval_frm_sp(dim: int, t, include_form_factor: bool = True):
    """Ensemble-averaged survival probability for full random matrices.

    ``include_form_factor=False`` drops the B_2 term; the resulting curve
    never dips below its own infinite-time limit (no correlation hole).
    ``F(0) = 1`` exactly and ``F(t) -> 3/(dim+2)`` as ``t -> infinity``.
    """
    model = dim if isinstance(dim, FrmSurvival) else FrmSurvival(int(dim))
    arr, scalar = _time_array(t, nonnegative=True)
    x = model.eta * arr
    bessel = 4.0 * model.dim * _j1_over_x(x) ** 2
    if include_form_factor:
        bracket = bessel - eval_b2(x / (4.0 * model.dim))
    else:
        bracket = bessel - 0.0 * arr
    fbar = model.fbar
    out = (1.0 - fbar) * (bracket / (model.dim - 1)) + fbar
    return _restore(out, scalar)


def _relaxation_profile(x: np.ndarray, A: float) -> np.ndarray:
    """g(t) numerator: exp(-x) + A (1 - exp(-x))/x with x = sigma0^2 t^2."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_THRESHOLD
    ratio = np.empty_like(x)
    xs = x[small]
    ratio[small] = 1.0 - xs / 2.0 + xs**2 / 6.0 - xs**3 / 24.0
    xl = x[~small]
    ratio[~small] = -np.expm1(-xl) / xl
    return np.exp(-x) + A * ratio


def eval_spin_sp(params: SpinSurvival, t):
    """Phenomenological survival probability of a disordered spin chain.

    The prefactor uses the model's own saturation value ``fbar`` so that
    ``F(0) = 1`` holds exactly and ``F(t) -> fbar`` as ``t -> infinity``.
    """
    if not isinstance(params, SpinSurvival):
        raise VariantError("eval_spin_sp expects a SpinSurvival instance")
    arr, scalar = _time_array(t, nonnegative=True)
    x = params.sigma0**2 * arr**2
    g = _relaxation_profile(x, params.amplitude)
    g0 = 1.0 + params.amplitude
    bracket = params.dim * (g / g0) - eval_b2(params.sigma0 * arr / params.dim)
    out = (1.0 - params.fbar) * (bracket / (params.dim - 1)) + params.fbar
    return _restore(out, scalar)


def _double_factorial_odd(k: int) -> int:
    """(2k - 1)!! via factorials."""
    return math.factorial(2 * k) // (2**k * math.factorial(k))


def _catalan(k: int) -> int:
    return math.comb(2 * k, k) // (k + 1)


def _richardson_derivatives(f, kmax: int, radius, prec: int, levels: int = 6):
    """Derivatives f^(0..kmax)(0) by central differences at precision prec.

    Step sizes start at ``radius / (kmax + 2)`` (keeping all evaluation
    points well inside the analyticity radius) and halve through the
    Richardson tableau, which cancels the even-order truncation terms.
    """
    guard = 12 * kmax + 60
    radius = Fraction(radius)
    with mpmath.workprec(prec + guard):
        h0 = mpmath.mpf(radius.numerator) / radius.denominator / (kmax + 2)
        derivs = [f(mpmath.mpf(0))]
        for k in range(1, kmax + 1):
            coeffs = [(-1) ** j * math.comb(k, j) for j in range(k + 1)]
            rows = []
            for lev in range(levels):
                h = h0 / 2**lev
                acc = mpmath.mpf(0)
                for j, c in enumerate(coeffs):
                    acc += c * f((mpmath.mpf(k) / 2 - j) * h)
                row = [acc / h**k]
                for m in range(1, lev + 1):
                    fac = mpmath.mpf(4) ** m
                    row.append((fac * row[m - 1] - rows[lev - 1][m - 1])
                               / (fac - 1))
                rows.append(row)
            derivs.append(rows[-1][-1])
        return [mpmath.mpf(d) for d in derivs]


def _interpolation_moments(model: InterpolationAutocorr, order: int,
                           precision_bits: int | None) -> MomentSequence:
    """Even moments of the interpolation model by derivative extraction.

    Works in ``u = t^2``, where ``S`` is analytic in a disc of radius
    ``gamma^2 / (4 sigma0^4)``; then ``mu_2k = (-1)^k (2k)! s_k`` with
    ``s_k`` the Taylor coefficients of ``S(u)``.  Precision doubles until
    two levels agree to ``1e-3`` relative on the highest moment, and the
    higher-precision values are returned.
    """
    kmax = order // 2
    s2 = Fraction(model.sigma0) ** 2
    g2 = Fraction(model.gamma) ** 2
    radius_u = g2 / (4 * s2 * s2)

    def f(u):
        g2m = mpmath.mpf(g2.numerator) / g2.denominator
        s2m = mpmath.mpf(s2.numerator) / s2.denominator
        d = g2m / (2 * s2m)
        return mpmath.exp(d / 2 - mpmath.sqrt(d * d + g2m * u) / 2)

    prec = max(192, precision_bits or 0, 10 * kmax)
    prev = None
    while prec <= MAX_MOMENT_PRECISION_BITS:
        derivs = _richardson_derivatives(f, kmax, radius_u, prec)
        if prev is not None:
            ref = derivs[kmax]
            diff = abs(ref - prev[kmax])
            if diff <= MOMENT_ESCALATION_RTOL * max(abs(ref),
                                                    mpmath.mpf("1e-300")):
                values = []
                with mpmath.workprec(prec):
                    for n in range(order + 1):
                        if n % 2:
                            values.append(mpmath.mpf(0))
                        else:
                            k = n // 2
                            values.append((-1) ** k
                                          * mpmath.factorial(2 * k)
                                          / mpmath.factorial(k) * derivs[k])
                return MomentSequence(tuple(values), precision_bits=prec)
        prev = derivs
        prec *= 2
    raise PrecisionError(
        f"moment extraction did not converge below "
        f"{MAX_MOMENT_PRECISION_BITS} bits (order {order})")


def moments_of_model(model: AmplitudeModel, order: int,
                     precision_bits: int | None = None) -> MomentSequence:
    """Power moments mu_0..mu_order of the density implied by a model.

    Closed-form cases (Gaussian, semicircle, truncated quadratic) are
    returned as exact rationals in the model's binary parameters; the
    interpolation model goes through high-precision derivative extraction.
    Survival-probability models have no single implied density and raise
    ``VariantError``.
    """
    if not isinstance(order, (int, np.integer)) or order < 2 or order % 2:
        raise DomainError(f"order must be an even integer >= 2, got {order}")
    if order > 20 and precision_bits is not None and precision_bits < 128:
        raise DomainError(
            f"order {order} needs at least 128 bits, got {precision_bits}")

    if isinstance(model, GaussianAutocorr):
        s2 = Fraction(model.sigma0) ** 2
        values = [Fraction(0)] * (order + 1)
        for k in range(order // 2 + 1):
            values[2 * k] = _double_factorial_odd(k) * s2**k
        return MomentSequence(tuple(values), precision_bits=None)
    if isinstance(model, SemicircleAutocorr):
        a2 = Fraction(model.alpha) ** 2
        values = [Fraction(0)] * (order + 1)
        for k in range(order // 2 + 1):
            values[2 * k] = _catalan(k) * a2**k
        return MomentSequence(tuple(values), precision_bits=None)
    if isinstance(model, TruncatedQuadraticAutocorr):
        values = [Fraction(0)] * (order + 1)
        values[0] = Fraction(1)
        values[2] = Fraction(model.sigma0) ** 2
        return MomentSequence(tuple(values), precision_bits=None)
    if isinstance(model, InterpolationAutocorr):
        return _interpolation_moments(model, order, precision_bits)
    raise VariantError(
        f"{type(model).__name__} does not define moments of a single "
        "density; only amplitude models do")


def model_to_dict(model: AutocorrModel) -> dict:
    """JSON-ready dict with a ``variant`` tag plus the model parameters."""
    name = _VARIANT_NAMES.get(type(model))
    if name is None:
        raise VariantError(f"unknown model type {type(model).__name__}")
    out = {"variant": name}
    if isinstance(model, (GaussianAutocorr, TruncatedQuadraticAutocorr)):
        out["sigma0"] = model.sigma0
    elif isinstance(model, InterpolationAutocorr):
        out["sigma0"] = model.sigma0
        out["gamma"] = model.gamma
    elif isinstance(model, SemicircleAutocorr):
        out["alpha"] = model.alpha
    elif isinstance(model, FrmSurvival):
        out["dim"] = model.dim
    elif isinstance(model, SpinSurvival):
        out.update({"sigma0": model.sigma0, "dim": model.dim,
                    "amplitude": model.amplitude, "fbar": model.fbar})
    return out


def model_from_dict(data: dict) -> AutocorrModel:
    """Inverse of ``model_to_dict``; unknown variants or keys are rejected."""
    if "variant" not in data:
        raise DomainError("model dict needs a 'variant' key")
    name = data["variant"]
    cls = _VARIANTS.get(name)
    if cls is None:
        raise VariantError(
            f"unknown variant {name!r}; expected one of {sorted(_VARIANTS)}")
    kwargs = {k: v for k, v in data.items() if k != "variant"}
    fields = set(cls.__dataclass_fields__)
    unknown = set(kwargs) - fields
    if unknown:
        raise DomainError(f"unknown keys for variant {name!r}: "
                          f"{sorted(unknown)}")
    missing = fields - set(kwargs)
    if missing:
        raise DomainError(f"variant {name!r} missing keys: {sorted(missing)}")
    if "dim" in kwargs:
        kwargs["dim"] = int(kwargs["dim"])
    return cls(**kwargs)


def model_to_json(model: AutocorrModel) -> str:
    return json.dumps(model_to_dict(model), sort_keys=True)


def model_from_json(text: str) -> AutocorrModel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DomainError(f"invalid model JSON: {exc}") from exc
    return model_from_dict(data)
