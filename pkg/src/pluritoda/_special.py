"""Real dilogarithm and closed-form antiderivative kernels.

Conventions
-----------
``re_dilog(w)`` is the real part of the dilogarithm Li2(w) for real ``w``,
extended continuously through the cut at ``w > 1`` via the inversion formula

    Re Li2(w) = pi^2/3 - (1/2) ln^2 w - Li2(1/w),   w > 1.

Its derivative is ``-log|1 - w| / w``, which is what makes it the right
building block for antiderivatives of ``log|a + b e^x|`` type integrands:
branch ambiguities in a complex Li2 would only ever contribute terms linear
in ``x`` times i*pi, and everything downstream consumes real parts of
differences in which those cancel.

The two kernels used by the leg tables:

    A1(a, b; x) = int log|a + b e^x| dx = x log|a| - re_dilog(-(b/a) e^x)
    A2(a, b; x) = int log|a + b x| dx  = ((a + b x)/b) (log|a + b x| - 1)

with the obvious degenerate limits when ``a == 0`` or ``b == 0``, plus their
partial derivatives in the coefficients, used for parameter-derivative
(conserved density) tables.
"""

from __future__ import annotations

import numpy as np
from scipy.special import spence

_PI2_3 = np.pi * np.pi / 3.0


def re_dilog(w):
    """Real part of Li2(w) for real w, vectorized.

    Li2(w) = -int_0^w log(1-t)/t dt for w <= 1; for w > 1 the real part is
    continued by the inversion formula. d/dw re_dilog = -log|1-w|/w.
    """
    w = np.asarray(w, dtype=float)
    scalar = w.ndim == 0
    w = np.atleast_1d(w)
    out = np.empty_like(w)
    low = w <= 1.0
    out[low] = spence(1.0 - w[low])
    if not low.all():
        wh = w[~low]
        out[~low] = _PI2_3 - 0.5 * np.log(wh) ** 2 - spence(1.0 - 1.0 / wh)
    return float(out[0]) if scalar else out


def a1(a: float, b: float, x):
    """Antiderivative of log|a + b e^x|."""
    x = np.asarray(x, dtype=float)
    if b == 0.0:
        if a == 0.0:
            raise ZeroDivisionError("a1 undefined for a == b == 0")
        return x * np.log(abs(a))
    if a == 0.0:
        return 0.5 * x * x + x * np.log(abs(b))
    return x * np.log(abs(a)) - re_dilog(-(b / a) * np.exp(x))


def a1_da(a: float, b: float, x):
    """d/da of a1(a, b; x)."""
    x = np.asarray(x, dtype=float)
    if b == 0.0:
        return x / a
    if a == 0.0:
        raise ZeroDivisionError("a1_da singular at a == 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.log(np.abs((a + b * np.exp(x)) / a))
    return (x - r) / a


def a1_db(a: float, b: float, x):
    """d/db of a1(a, b; x)."""
    x = np.asarray(x, dtype=float)
    if b == 0.0:
        raise ZeroDivisionError("a1_db singular at b == 0")
    if a == 0.0:
        return x / b
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.log(np.abs((a + b * np.exp(x)) / a))
    return r / b


def a2(a: float, b: float, x):
    """Antiderivative of log|a + b x|."""
    x = np.asarray(x, dtype=float)
    if b == 0.0:
        if a == 0.0:
            raise ZeroDivisionError("a2 undefined for a == b == 0")
        return x * np.log(abs(a))
    u = a + b * x
    with np.errstate(divide="ignore", invalid="ignore"):
        lu = np.log(np.abs(u))
    return (u / b) * (lu - 1.0)


def a2_da(a: float, b: float, x):
    """d/da of a2(a, b; x)."""
    x = np.asarray(x, dtype=float)
    if b == 0.0:
        return x / a
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(np.abs(a + b * x)) / b


def a2_db(a: float, b: float, x):
    """d/db of a2(a, b; x)."""
    x = np.asarray(x, dtype=float)
    if b == 0.0:
        raise ZeroDivisionError("a2_db singular at b == 0")
    u = a + b * x
    with np.errstate(divide="ignore", invalid="ignore"):
        lu = np.log(np.abs(u))
    return x * lu / b - u * (lu - 1.0) / (b * b)


def log_abs_sinh(u):
    """log|sinh(u)|, stable for large |u|."""
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        return au + np.log1p(-np.exp(-2.0 * au)) - np.log(2.0)


def sinh_primitive(u):
    """Odd, globally continuous antiderivative of log|sinh(u)|.

    F(u) = u^2/2 - u log 2 + (1/2)(re_dilog(e^{-2u}) - pi^2/6) for u > 0,
    extended by F(-u) = -F(u). F'(u) = log|sinh u| on both half lines and
    F(0) = 0 from either side, so differences of F taken across the log
    singularity keep the normalization of the continuous real primitive.
    """
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    core = (
        0.5 * au * au
        - au * np.log(2.0)
        + 0.5 * (re_dilog(np.exp(-2.0 * au)) - _PI2_3 / 2.0)
    )
    return np.sign(u) * core
