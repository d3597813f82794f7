"""
Special functions behind the Gaussian and Beta embedding families.

The regularized incomplete beta function is evaluated by its continued
fraction (modified Lentz), switching to the symmetric form
I_x(a, b) = 1 - I_{1-x}(b, a) when x > (a + 1) / (a + b + 2). The inverse uses
Newton steps safeguarded by a bisection bracket. Everything is vectorized
over numpy arrays so a whole batch of embedding coordinates is handled in one
call.
"""

import logging
from typing import Tuple, Union

import numpy as np
from scipy import special

from .errors import ConvergenceError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

MAX_ITERATIONS = 200
_CF_EPS = 1e-15
_FPMIN = 1e-300
_INVERSE_TOL = 1e-13
_RESIDUAL_TOL = 1e-10


def std_normal_cdf(x: ArrayLike) -> ArrayLike:
    """
    Standard normal CDF.

    Args:
        x: Scalar or array

    Returns:
        Phi(x), same shape as x
    """
    result = special.ndtr(x)
    return float(result) if np.ndim(result) == 0 else result


def std_normal_log_pdf(z: ArrayLike) -> ArrayLike:
    return -0.5 * np.square(z) - 0.5 * np.log(2.0 * np.pi)


def beta_log_pdf(x: ArrayLike, a: ArrayLike, b: ArrayLike) -> np.ndarray:
    """Log density of Beta(a, b) at x in (0, 1)."""
    x = np.asarray(x, dtype=float)
    return (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - special.betaln(a, b)


def beta_pdf(x: ArrayLike, a: ArrayLike, b: ArrayLike) -> np.ndarray:
    return np.exp(beta_log_pdf(x, a, b))


def _continued_fraction(a: np.ndarray, b: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0

    c = np.ones_like(x)
    d = 1.0 - qab * x / qap
    d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
    d = 1.0 / d
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)

    for m in range(1, MAX_ITERATIONS + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        h = np.where(active, h * d * c, h)

        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = np.where(np.abs(d) < _FPMIN, _FPMIN, d)
        c = 1.0 + aa / c
        c = np.where(np.abs(c) < _FPMIN, _FPMIN, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(active, h * delta, h)

        active &= np.abs(delta - 1.0) >= _CF_EPS
        if not active.any():
            return h

    raise ConvergenceError(
        f"incomplete beta continued fraction did not converge in {MAX_ITERATIONS} "
        f"iterations for {int(active.sum())} argument(s)"
    )


def reg_inc_beta(x: ArrayLike, a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """
    Regularized incomplete beta function I_x(a, b).

    Args:
        x: Point(s) in [0, 1]; values outside are clamped
        a: First shape parameter(s), > 0
        b: Second shape parameter(s), > 0

    Returns:
        I_x(a, b) broadcast over the inputs

    Raises:
        ConvergenceError: If the continued fraction does not converge
    """
    x, a, b = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    )
    scalar = x.ndim == 0
    x = np.atleast_1d(np.clip(x, 0.0, 1.0))
    a = np.atleast_1d(a)
    b = np.atleast_1d(b)

    result = np.where(x >= 1.0, 1.0, 0.0)
    interior = (x > 0.0) & (x < 1.0)
    if interior.any():
        xi, ai, bi = x[interior], a[interior], b[interior]
        log_front = ai * np.log(xi) + bi * np.log1p(-xi) - special.betaln(ai, bi)
        front = np.exp(log_front)
        flip = xi > (ai + 1.0) / (ai + bi + 2.0)

        xs = np.where(flip, 1.0 - xi, xi)
        as_ = np.where(flip, bi, ai)
        bs = np.where(flip, ai, bi)
        cf = _continued_fraction(as_, bs, xs)
        direct = front * cf / as_
        result[interior] = np.clip(np.where(flip, 1.0 - direct, direct), 0.0, 1.0)

    return float(result[0]) if scalar else result


def _bracket_midpoint(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Bisection point; geometric near either edge so tiny roots are reachable."""
    arithmetic = 0.5 * (lo + hi)
    near_zero = np.sqrt(np.maximum(lo, _FPMIN) * hi)
    tail_lo = np.maximum(1.0 - hi, np.finfo(float).eps)
    near_one = 1.0 - np.sqrt(tail_lo * (1.0 - lo))
    mid = np.where(hi <= 0.5, near_zero, np.where(lo >= 0.5, near_one, arithmetic))
    return np.where((mid > lo) & (mid < hi), mid, arithmetic)


def _at_float_resolution(x: np.ndarray, p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """True where p lies between I at x and at its neighbouring doubles."""
    below = reg_inc_beta(np.nextafter(x, 0.0), a, b) - p
    above = reg_inc_beta(np.nextafter(x, 1.0), a, b) - p
    return below * above <= 0.0


def inverse_reg_inc_beta(p: ArrayLike, a: ArrayLike, b: ArrayLike) -> ArrayLike:
    """
    Inverse of the regularized incomplete beta function in x.

    Newton steps run inside a bisection bracket. The bracket is split in log
    space near 0 and 1, so roots as small as 1e-60 (shapes well below 1) are
    found. The result satisfies |I_x(a, b) - p| <= 1e-10 unless x sits at
    double resolution, where the neighbouring doubles straddle p.

    Args:
        p: Target probability in [0, 1]
        a: First shape parameter(s), > 0
        b: Second shape parameter(s), > 0

    Returns:
        x with I_x(a, b) = p

    Raises:
        ConvergenceError: If the root finder exceeds its iteration cap or the
            final residual is out of tolerance
    """
    p, a, b = np.broadcast_arrays(
        np.asarray(p, dtype=float), np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    )
    scalar = p.ndim == 0
    p = np.atleast_1d(p).astype(float)
    a = np.atleast_1d(a).astype(float)
    b = np.atleast_1d(b).astype(float)

    lo = np.zeros_like(p)
    hi = np.ones_like(p)
    # Start at the mean, clipped into the open interval
    x = np.clip(a / (a + b), 1e-6, 1.0 - 1e-6)
    done = (p <= 0.0) | (p >= 1.0)
    x = np.where(p <= 0.0, 0.0, np.where(p >= 1.0, 1.0, x))

    for _ in range(MAX_ITERATIONS):
        if done.all():
            break
        idx = ~done
        xi = x[idx]
        f = reg_inc_beta(xi, a[idx], b[idx]) - p[idx]

        converged = np.abs(f) <= _INVERSE_TOL * np.maximum(p[idx], _FPMIN)

        # Tighten the bracket around the root
        lo_i = np.where(f < 0, xi, lo[idx])
        hi_i = np.where(f > 0, xi, hi[idx])
        converged |= (hi_i - lo_i) <= np.spacing(lo_i)

        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            density = beta_pdf(xi, a[idx], b[idx])
            newton = xi - f / density
        inside = np.isfinite(newton) & (newton > lo_i) & (newton < hi_i)
        x_next = np.where(inside, newton, _bracket_midpoint(lo_i, hi_i))
        step_small = inside & (np.abs(x_next - xi) <= 1e-15 * np.maximum(xi, _FPMIN))

        lo[idx] = lo_i
        hi[idx] = hi_i
        x[idx] = np.where(converged, xi, x_next)
        done[idx] = converged | step_small
    else:
        if not done.all():
            raise ConvergenceError(
                f"inverse incomplete beta did not converge in {MAX_ITERATIONS} "
                f"iterations for {int((~done).sum())} argument(s)"
            )

    interior = (p > 0.0) & (p < 1.0)
    if interior.any():
        residual = np.abs(reg_inc_beta(x[interior], a[interior], b[interior]) - p[interior])
        off = residual > _RESIDUAL_TOL
        if off.any():
            xo, po, ao, bo = x[interior][off], p[interior][off], a[interior][off], b[interior][off]
            unresolved = ~_at_float_resolution(xo, po, ao, bo)
            if unresolved.any():
                raise ConvergenceError(
                    f"inverse incomplete beta left residual {float(residual[off].max()):.3g} "
                    f"for {int(unresolved.sum())} argument(s)"
                )

    return float(x[0]) if scalar else x


def reg_inc_beta_param_derivatives(
    x: ArrayLike, a: ArrayLike, b: ArrayLike
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Partial derivatives of I_x(a, b) in a and b by central finite differences,
    with steps 1e-5 * max(1, a) and 1e-5 * max(1, b). Each step is capped at
    half its shape parameter so the backward point stays positive.

    Returns:
        (dI/da, dI/db)
    """
    x, a, b = np.broadcast_arrays(
        np.asarray(x, dtype=float), np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    )
    ha = np.minimum(1e-5 * np.maximum(1.0, a), 0.5 * a)
    hb = np.minimum(1e-5 * np.maximum(1.0, b), 0.5 * b)
    d_da = (reg_inc_beta(x, a + ha, b) - reg_inc_beta(x, a - ha, b)) / (2.0 * ha)
    d_db = (reg_inc_beta(x, a, b + hb) - reg_inc_beta(x, a, b - hb)) / (2.0 * hb)
    return np.asarray(d_da), np.asarray(d_db)
