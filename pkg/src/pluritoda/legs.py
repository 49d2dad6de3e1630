"""Leg functions of the seven lattice families.

Every map and every variational identity in this package is assembled from
one-dimensional "leg" functions of a difference variable x. A leg f carries

  * value f(x) and derivative f'(x) on an explicit real domain (a union of
    open intervals cut out by the singularities of the defining expression);
  * a closed-form inverse of f restricted to a domain component (every leg
    shape used here is strictly monotone per component with pairwise
    disjoint component ranges, so the inverse needs no component hint);
  * a closed-form antiderivative F with F' = f, normalized as the globally
    continuous real primitive so that additive constants are consistent
    across domain components.

Two leg roles appear:

  * psi legs are derivatives of single-edge potentials L (psi = L');
  * phi legs are derivatives of diagonal potentials Lam (phi = Lam') and
    satisfy the skew relation phi_ab(x) = phi_ba(-x), i.e. Lam_ab(x) =
    -Lam_ba(-x) up to a constant.

A family is identified by FamilyId and a parameter pack FamilyParams
(alpha, lam, mu, eps). The two map directions use parameter ladders

    first direction  (parameter nu):  psi_F(nu), phi_F0(nu)
    second direction (parameter nu):  psi_G(nu), phi_G0(nu)

and cross legs phi_FF, phi_GG, phi_FG between two parameters. build_leg_set
instantiates the full 12-leg table at (lam, mu); map_legs builds the bundle
a single map needs at an arbitrary parameter value.

lambda_density_legs returns the parameter-derivative table
(dL_F, dLam_F0, dLam_FF, dLam_G0, dL_G) used by monodromy invariants and
local conservation laws. For the exp-Mobius family these are pinned to the
closed product forms of the invariants, which fixes two lambda-dependent
normalization constants in Lam_G0 and Lam_FF; everywhere else the table is
the parameter derivative of the natural continuous primitive.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._special import (
    a1,
    a1_da,
    a1_db,
    a2,
    a2_da,
    a2_db,
    log_abs_sinh,
    re_dilog,
    sinh_primitive,
)
from .errors import (
    DomainCrossing,
    DomainViolation,
    InvalidParams,
    NonConvergence,
    NoRoot,
)

_INF = math.inf


class FamilyId(str, enum.Enum):
    SYM_RATIONAL = "SymRational"
    SYM_LOG_RATIONAL = "SymLogRational"
    SYM_LOG_HYPERBOLIC = "SymLogHyperbolic"
    MODIFIED_EXPONENTIAL = "ModifiedExponential"
    MASTER_EXPONENTIAL = "MasterExponential"
    ADDITIVE_EXPONENTIAL = "AdditiveExponential"
    ASYMMETRIC_RATIONAL = "AsymmetricRational"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


ALL_FAMILIES = tuple(FamilyId)

_SYMMETRIC = {
    FamilyId.SYM_RATIONAL,
    FamilyId.SYM_LOG_RATIONAL,
    FamilyId.SYM_LOG_HYPERBOLIC,
}


@dataclass(frozen=True)
class FamilyParams:
    """Parameter pack shared by the leg tables.

    alpha is the lattice parameter of the undressed direction, lam and mu
    the two map parameters, eps the deformation scale of the master family
    (ignored by the other six).
    """

    alpha: float = 0.3
    lam: float = 0.7
    mu: float = 1.3
    eps: float = 0.2

    def __post_init__(self):
        for name in ("alpha", "lam", "mu", "eps"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise InvalidParams(f"{name} must be finite, got {v!r}")
        if self.lam == self.mu:
            raise InvalidParams("lam and mu must differ")

    def replace(self, **kw) -> "FamilyParams":
        data = {
            "alpha": self.alpha,
            "lam": self.lam,
            "mu": self.mu,
            "eps": self.eps,
        }
        data.update(kw)
        return FamilyParams(**data)


def _as_array(x):
    return np.asarray(x, dtype=float)


def _require_nonzero(name: str, *values: float) -> None:
    for v in values:
        if v == 0.0 or not np.isfinite(v):
            raise InvalidParams(f"{name}: coefficient {v!r} must be finite and nonzero")


class LegFunction:
    """Base class: a scalar function on a union of open intervals.

    Subclasses implement _value/_derivative/_antiderivative on raw arrays
    (no domain policing) plus closed-form inverse(). The public evaluators
    check domain membership and raise DomainViolation off-domain; the
    *_or_nan variants return nan instead, for vectorized scans.
    """

    name: str = "leg"
    #: tuple of (lo, hi) open intervals, ascending, non-overlapping
    domain: tuple = ((-_INF, _INF),)
    #: limit of the leg value as x -> +inf. Open-end chains replace the
    #: terms dropped at the ends by this constant (the virtual neighbour
    #: sits at infinity). Zero except for shapes that saturate instead of
    #: decaying: the sinh ratio, and linear ratios with both slopes nonzero.
    limit_at_inf: float = 0.0
    #: signed limit of factor(x) as x -> +inf, the multiplicative twin of
    #: limit_at_inf (1.0 whenever the leg value tends to 0 or diverges).
    factor_at_inf: float = 1.0
    #: True when the leg is the log of a ratio that may take either sign,
    #: so the map equations it enters must be solved multiplicatively
    #: (through factor/inverse_factor) to keep the sign information.
    signed: bool = False
    #: components where the underlying ratio is positive; None means the
    #: whole domain qualifies. Random draws sample from here so that the
    #: generated momenta are plain sums of the leg values.
    positive_domain: tuple = None

    # -- raw kernels -------------------------------------------------
    def _value(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def _derivative(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def _antiderivative(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def _inverse(self, y):  # pragma: no cover - abstract
        raise NotImplementedError

    # -- domain handling ---------------------------------------------
    def contains(self, x, margin: float = 0.0):
        """Boolean mask of domain membership (open intervals, optionally
        shrunk by `margin` at finite edges)."""
        x = _as_array(x)
        mask = np.zeros(x.shape, dtype=bool)
        for lo, hi in self.domain:
            a = lo + margin if np.isfinite(lo) else lo
            b = hi - margin if np.isfinite(hi) else hi
            mask |= (x > a) & (x < b)
        return mask

    def component_index(self, x: float) -> int:
        for i, (lo, hi) in enumerate(self.domain):
            if lo < x < hi:
                return i
        return -1

    def _check(self, x):
        x = _as_array(x)
        ok = self.contains(x)
        if not ok.all():
            bad = np.atleast_1d(x)[~np.atleast_1d(ok)][:1]
            raise DomainViolation(
                f"{self.name}: argument {float(bad[0]):.6g} outside domain "
                f"{self.domain}"
            )
        return x

    # -- public evaluators --------------------------------------------
    def value(self, x):
        return self._value(self._check(x))

    def derivative(self, x):
        return self._derivative(self._check(x))

    def antiderivative(self, x):
        return self._antiderivative(self._check(x))

    def value_or_nan(self, x):
        x = _as_array(x)
        with np.errstate(all="ignore"):
            v = np.where(self.contains(x), self._value(x), np.nan)
        return v

    def inverse(self, y: float) -> float:
        """Solve f(x) = y. Raises NoRoot when y is outside the range."""
        x = self._inverse(float(y))
        if not np.isfinite(x) or self.component_index(x) < 0:
            raise NoRoot(f"{self.name}: no preimage of {y!r}")
        # guard against algebraic edge cases: the closed form must verify
        v = float(self._value(np.asarray(x)))
        if not np.isfinite(v) or abs(v - y) > 1e-8 * (1.0 + abs(y)):
            raise NoRoot(f"{self.name}: closed-form preimage of {y!r} failed check")
        return x

    def inverse_or_nan(self, y):
        """Vectorized inverse; nan where no real preimage exists."""
        y = np.atleast_1d(_as_array(y))
        out = np.full(y.shape, np.nan)
        with np.errstate(all="ignore"):
            x = self._inverse_array(y)
            ok = np.isfinite(x) & self.contains(np.where(np.isfinite(x), x, 0.0))
            if ok.any():
                v = self._value(np.where(ok, x, 0.0))
                ok &= np.abs(v - y) <= 1e-8 * (1.0 + np.abs(y))
            out[ok] = x[ok]
        return out

    def _inverse_array(self, y):
        return np.array([self._inverse(float(t)) for t in y])

    def _inverse_candidates(self, y: float) -> tuple:
        """Closed-form preimages of y across all sign sectors, unverified."""
        try:
            return (self._inverse(y),)
        except NoRoot:
            return ()

    def factor_sign(self, x):
        """Sign of the multiplicative factor e^{value}; +1 unless signed."""
        return np.ones_like(_as_array(x), dtype=float)

    def integrate(self, x0: float, x1: float) -> float:
        """Definite integral of the leg between two points of one component."""
        c0, c1 = self.component_index(x0), self.component_index(x1)
        if c0 < 0 or c1 < 0:
            raise DomainViolation(f"{self.name}: integration endpoint off-domain")
        if c0 != c1:
            raise DomainCrossing(
                f"{self.name}: endpoints {x0:.6g}, {x1:.6g} lie on different "
                "domain components"
            )
        f1 = float(self._antiderivative(np.asarray(x1)))
        f0 = float(self._antiderivative(np.asarray(x0)))
        return f1 - f0

    def sample_domain(self, rng, n: int, lo: float = -2.0, hi: float = 2.0,
                      margin: float = 0.08, intervals: tuple = None):
        """n points uniform on [lo, hi] intersected with the domain,
        keeping at least `margin` away from finite component edges.
        `intervals` restricts the sampling to a subset of components."""
        pieces = []
        for a, b in (intervals if intervals is not None else self.domain):
            aa = max(a + margin if np.isfinite(a) else lo, lo)
            bb = min(b - margin if np.isfinite(b) else hi, hi)
            if bb > aa:
                pieces.append((aa, bb))
        if not pieces:
            raise DomainViolation(
                f"{self.name}: domain does not meet [{lo}, {hi}] with margin"
            )
        lens = np.array([b - a for a, b in pieces])
        probs = lens / lens.sum()
        idx = rng.choice(len(pieces), size=n, p=probs)
        u = rng.uniform(size=n)
        return np.array([pieces[i][0] + t * (pieces[i][1] - pieces[i][0])
                         for i, t in zip(idx, u)])

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        return f"<{type(self).__name__} {self.name} domain={self.domain}>"


# ---------------------------------------------------------------------------
# symmetric shapes: f(x) = phi(x; a) with phi odd in x and -a
# ---------------------------------------------------------------------------


class RationalLeg(LegFunction):
    """f(x) = a / x on x != 0."""

    def __init__(self, a: float, name: str = "a/x"):
        _require_nonzero(name, a)
        self.a = float(a)
        self.name = name
        self.domain = ((-_INF, 0.0), (0.0, _INF))

    def _value(self, x):
        return self.a / x

    def _derivative(self, x):
        return -self.a / (x * x)

    def _antiderivative(self, x):
        return self.a * np.log(np.abs(x))

    def _inverse(self, y):
        if y == 0.0:
            raise NoRoot(f"{self.name}: value 0 not attained")
        return self.a / y

    def _inverse_array(self, y):
        with np.errstate(all="ignore"):
            return np.where(y != 0.0, self.a / y, np.nan)

    def d_param(self, x):
        """df/da."""
        return 1.0 / _as_array(x)

    def d_param_antiderivative(self, x):
        """dF/da of the antiderivative."""
        return np.log(np.abs(_as_array(x)))


class LogRatioLeg(LegFunction):
    """f(x) = (1/2) log((x + a)/(x - a)) on |x| > |a|."""

    def __init__(self, a: float, name: str = "logratio"):
        _require_nonzero(name, a)
        self.a = float(a)
        self.name = name
        aa = abs(self.a)
        self.domain = ((-_INF, -aa), (aa, _INF))

    def _value(self, x):
        with np.errstate(all="ignore"):
            return 0.5 * (np.log(np.abs(x + self.a)) - np.log(np.abs(x - self.a)))

    def _derivative(self, x):
        return -self.a / (x * x - self.a * self.a)

    def _antiderivative(self, x):
        a = self.a
        with np.errstate(all="ignore"):
            return 0.5 * (
                (x + a) * np.log(np.abs(x + a)) - (x - a) * np.log(np.abs(x - a))
            )

    def _inverse(self, y):
        if y == 0.0:
            raise NoRoot(f"{self.name}: value 0 not attained")
        return self.a / math.tanh(y)

    def _inverse_array(self, y):
        with np.errstate(all="ignore"):
            return np.where(y != 0.0, self.a / np.tanh(y), np.nan)

    def d_param(self, x):
        return x / (x * x - self.a * self.a)

    def d_param_antiderivative(self, x):
        x = _as_array(x)
        with np.errstate(all="ignore"):
            return 0.5 * np.log(np.abs(x * x - self.a * self.a)) + 1.0


class LogSinhRatioLeg(LegFunction):
    """f(x) = (1/2) log(sinh(x + a)/sinh(x - a)) on |x| > |a|."""

    def __init__(self, a: float, name: str = "logsinhratio"):
        _require_nonzero(name, a)
        self.a = float(a)
        self.name = name
        aa = abs(self.a)
        self.domain = ((-_INF, -aa), (aa, _INF))
        # sinh(x+a)/sinh(x-a) -> e^{2a} as x -> +inf, for either sign of a
        self.limit_at_inf = self.a

    def _value(self, x):
        with np.errstate(all="ignore"):
            return 0.5 * (log_abs_sinh(x + self.a) - log_abs_sinh(x - self.a))

    def _derivative(self, x):
        with np.errstate(all="ignore"):
            return 0.5 * (1.0 / np.tanh(x + self.a) - 1.0 / np.tanh(x - self.a))

    def _antiderivative(self, x):
        return 0.5 * (sinh_primitive(x + self.a) - sinh_primitive(x - self.a))

    def _inverse(self, y):
        # tanh(x) = tanh(a) / tanh(y); |tanh a / tanh y| must be < 1
        if y == 0.0:
            raise NoRoot(f"{self.name}: value 0 not attained")
        t = math.tanh(self.a) / math.tanh(y)
        if abs(t) >= 1.0:
            raise NoRoot(f"{self.name}: value {y!r} lies in the spectral gap")
        return math.atanh(t)

    def _inverse_array(self, y):
        with np.errstate(all="ignore"):
            t = math.tanh(self.a) / np.tanh(y)
            return np.where(np.abs(t) < 1.0, np.arctanh(np.clip(t, -1, 1)), np.nan)

    def d_param(self, x):
        with np.errstate(all="ignore"):
            return 0.5 * (1.0 / np.tanh(x + self.a) + 1.0 / np.tanh(x - self.a))

    def d_param_antiderivative(self, x):
        x = _as_array(x)
        return 0.5 * (log_abs_sinh(x + self.a) + log_abs_sinh(x - self.a))


# ---------------------------------------------------------------------------
# log-ratio shapes in t = e^x and in t = x
# ---------------------------------------------------------------------------


def _ratio_domain_exp(a1c, b1c, a2c, b2c):
    """Domain (in x) where (a1 + b1 e^x)/(a2 + b2 e^x) > 0."""
    breaks = []
    for a, b in ((a1c, b1c), (a2c, b2c)):
        if b != 0.0 and a != 0.0 and -a / b > 0.0:
            breaks.append(math.log(-a / b))
    return _components_from_breaks(
        breaks,
        lambda x: (a1c + b1c * math.exp(x)) * (a2c + b2c * math.exp(x)),
    )


def _ratio_domain_lin(a1c, b1c, a2c, b2c):
    """Domain (in x) where (a1 + b1 x)/(a2 + b2 x) > 0."""
    breaks = []
    for a, b in ((a1c, b1c), (a2c, b2c)):
        if b != 0.0:
            breaks.append(-a / b)
    return _components_from_breaks(
        breaks, lambda x: (a1c + b1c * x) * (a2c + b2c * x)
    )


def _split_domain_lin(a1c, b1c, a2c, b2c):
    """Components of the line minus the root and the pole of the ratio."""
    breaks = sorted({-a / b for a, b in ((a1c, b1c), (a2c, b2c)) if b != 0.0})
    edges = [-_INF] + breaks + [_INF]
    return tuple((lo, hi) for lo, hi in zip(edges[:-1], edges[1:]) if lo < hi)


def _components_from_breaks(breaks, product_sign):
    pts = sorted(set(breaks))
    edges = [-_INF] + pts + [_INF]
    comps = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if np.isfinite(lo) and np.isfinite(hi):
            mid = 0.5 * (lo + hi)
        elif np.isfinite(lo):
            mid = lo + 1.0
        elif np.isfinite(hi):
            mid = hi - 1.0
        else:
            mid = 0.0
        if product_sign(mid) > 0.0:
            comps.append((lo, hi))
    if not comps:
        raise InvalidParams("leg has empty domain")
    # merge adjacent components when the shared edge is not a true break
    merged = [comps[0]]
    for lo, hi in comps[1:]:
        if merged[-1][1] == lo:
            merged[-1] = (merged[-1][0], hi)
        else:
            merged.append((lo, hi))
    return tuple(merged)


class ExpLogLeg(LegFunction):
    """f(x) = k log((a1 + b1 e^x)/(a2 + b2 e^x)) where the ratio is positive.

    Near-cancelling coefficient pairs (the small-eps deformed family) are
    supported through exact difference coefficients da = a1 - a2,
    db = b1 - b2 and the cross determinant b1 a2 - b2 a1, which the caller
    may supply exactly; value and inverse are then computed through
    log1p/expm1 so that k ~ 1/eps amplifies no rounding noise.
    """

    def __init__(self, a1c, b1c, a2c, b2c, k=1.0, name="explog",
                 da=None, db=None, cross=None):
        self.a1, self.b1 = float(a1c), float(b1c)
        self.a2, self.b2 = float(a2c), float(b2c)
        self.k = float(k)
        self.name = name
        self.da = float(da) if da is not None else self.a1 - self.a2
        self.db = float(db) if db is not None else self.b1 - self.b2
        self.cross = (
            float(cross) if cross is not None else self.b1 * self.a2 - self.b2 * self.a1
        )
        if self.k == 0.0 or self.cross == 0.0:
            raise InvalidParams(f"{name}: degenerate coefficients (constant leg)")
        if (self.a1 == 0.0 and self.b1 == 0.0) or (self.a2 == 0.0 and self.b2 == 0.0):
            raise InvalidParams(f"{name}: vanishing numerator or denominator")
        self.domain = _ratio_domain_exp(self.a1, self.b1, self.a2, self.b2)

    def _den(self, t):
        return self.a2 + self.b2 * t

    def _value(self, x):
        t = np.exp(x)
        with np.errstate(all="ignore"):
            return self.k * np.log1p((self.da + self.db * t) / self._den(t))

    def _derivative(self, x):
        t = np.exp(x)
        with np.errstate(all="ignore"):
            return self.k * t * self.cross / ((self.a1 + self.b1 * t) * self._den(t))

    def _antiderivative(self, x):
        return self.k * (a1(self.a1, self.b1, x) - a1(self.a2, self.b2, x))

    def _t_of_y(self, yk):
        # t = (a2 e^y' - a1)/(b1 - b2 e^y'), written via expm1 for stability
        e = np.expm1(yk)
        return (-self.da + self.a2 * e) / (self.db - self.b2 * e)

    def _inverse(self, y):
        with np.errstate(all="ignore"):
            t = float(self._t_of_y(y / self.k))
        if not (np.isfinite(t) and t > 0.0):
            raise NoRoot(f"{self.name}: no preimage of {y!r}")
        return math.log(t)

    def _inverse_array(self, y):
        with np.errstate(all="ignore"):
            t = self._t_of_y(y / self.k)
            return np.where(np.isfinite(t) & (t > 0.0), np.log(np.abs(t)), np.nan)


class MobiusExpLeg(LegFunction):
    """f(x) = (p e^x + q)/(r e^x + s) away from the pole."""

    def __init__(self, p, q, r, s, name="mobiusexp"):
        self.p, self.q, self.r, self.s = (float(p), float(q), float(r), float(s))
        self.name = name
        self.det = self.p * self.s - self.q * self.r
        if self.det == 0.0:
            raise InvalidParams(f"{name}: degenerate Mobius coefficients")
        if self.r == 0.0 and self.s == 0.0:
            raise InvalidParams(f"{name}: vanishing denominator")
        if self.r != 0.0 and -self.s / self.r > 0.0:
            x0 = math.log(-self.s / self.r)
            self.domain = ((-_INF, x0), (x0, _INF))
        else:
            self.domain = ((-_INF, _INF),)

    def _value(self, x):
        t = np.exp(x)
        with np.errstate(all="ignore"):
            return (self.p * t + self.q) / (self.r * t + self.s)

    def _derivative(self, x):
        t = np.exp(x)
        d = self.r * t + self.s
        with np.errstate(all="ignore"):
            return t * self.det / (d * d)

    def _antiderivative(self, x):
        x = _as_array(x)
        p, q, r, s = self.p, self.q, self.r, self.s
        if r == 0.0:
            return (p * np.exp(x) + q * x) / s
        if s == 0.0:
            return (p / r) * x - (q / r) * np.exp(-x)
        with np.errstate(all="ignore"):
            return (q / s) * x + (self.det / (r * s)) * np.log(
                np.abs(r * np.exp(x) + s)
            )

    def _inverse(self, y):
        den = y * self.r - self.p
        if den == 0.0:
            raise NoRoot(f"{self.name}: value {y!r} is the asymptotic level")
        t = (self.q - self.s * y) / den
        if not (np.isfinite(t) and t > 0.0):
            raise NoRoot(f"{self.name}: no preimage of {y!r}")
        return math.log(t)

    def _inverse_array(self, y):
        with np.errstate(all="ignore"):
            t = (self.q - self.s * y) / (y * self.r - self.p)
            return np.where(np.isfinite(t) & (t > 0.0), np.log(np.abs(t)), np.nan)


class LinLogLeg(LegFunction):
    """f(x) = k log|(a1 + b1 x)/(a2 + b2 x)| away from the root and pole.

    The ratio may take either sign: the domain covers every component and
    the value is the log of the absolute ratio. Map equations built from
    these legs are products of the signed ratios equated to an exponential,
    so their real solutions can pair up negative factors; the factor /
    inverse_factor methods expose the signed ratio for that purpose, and
    positive_domain keeps the components where the ratio is positive (the
    safe region for drawing states whose momenta are plain value sums).
    """

    def __init__(self, a1c, b1c, a2c, b2c, k=1.0, name="linlog"):
        self.a1, self.b1 = float(a1c), float(b1c)
        self.a2, self.b2 = float(a2c), float(b2c)
        self.k = float(k)
        self.name = name
        self.cross = self.b1 * self.a2 - self.b2 * self.a1
        if self.k == 0.0 or self.cross == 0.0:
            raise InvalidParams(f"{name}: degenerate coefficients (constant leg)")
        if (self.a1 == 0.0 and self.b1 == 0.0) or (self.a2 == 0.0 and self.b2 == 0.0):
            raise InvalidParams(f"{name}: vanishing numerator or denominator")
        self.positive_domain = _ratio_domain_lin(self.a1, self.b1, self.a2, self.b2)
        self.domain = _split_domain_lin(self.a1, self.b1, self.a2, self.b2)
        # sign bookkeeping through factors assumes the exponent is 1
        self.signed = self.k == 1.0
        if self.b1 != 0.0 and self.b2 != 0.0:
            # the ratio saturates at b1/b2, so the value does not decay
            self.factor_at_inf = self.b1 / self.b2
            self.limit_at_inf = self.k * math.log(abs(self.factor_at_inf))

    def factor(self, x):
        """The signed ratio itself (the multiplicative factor e^{value}
        when the ratio is positive, minus that when negative)."""
        x = _as_array(x)
        with np.errstate(all="ignore"):
            return (self.a1 + self.b1 * x) / (self.a2 + self.b2 * x)

    def factor_sign(self, x):
        x = _as_array(x)
        with np.errstate(all="ignore"):
            return np.sign((self.a1 + self.b1 * x) * (self.a2 + self.b2 * x))

    def inverse_factor(self, m):
        """Solve (a1 + b1 x)/(a2 + b2 x) = m; linear in x, any sign of m."""
        m = np.asarray(m, dtype=float)
        with np.errstate(all="ignore"):
            return (self.a2 * m - self.a1) / (self.b1 - self.b2 * m)

    def _value(self, x):
        with np.errstate(all="ignore"):
            return self.k * (
                np.log(np.abs(self.a1 + self.b1 * x))
                - np.log(np.abs(self.a2 + self.b2 * x))
            )

    def _derivative(self, x):
        with np.errstate(all="ignore"):
            return (
                self.k
                * self.cross
                / ((self.a1 + self.b1 * x) * (self.a2 + self.b2 * x))
            )

    def _antiderivative(self, x):
        return self.k * (a2(self.a1, self.b1, x) - a2(self.a2, self.b2, x))

    def _inverse(self, y):
        e = math.exp(y / self.k)
        den = self.b1 - self.b2 * e
        if den == 0.0:
            raise NoRoot(f"{self.name}: value {y!r} is the asymptotic level")
        return (self.a2 * e - self.a1) / den

    def _inverse_candidates(self, y):
        e = math.exp(y / self.k)
        out = []
        for m in (e, -e):
            den = self.b1 - self.b2 * m
            if den != 0.0:
                out.append((self.a2 * m - self.a1) / den)
        return tuple(out)

    def _inverse_array(self, y):
        with np.errstate(all="ignore"):
            e = np.exp(y / self.k)
            return (self.a2 * e - self.a1) / (self.b1 - self.b2 * e)


class ShiftedLeg(LegFunction):
    """A leg plus a constant added to its antiderivative only.

    Used to pin antiderivative normalizations (the parameter-derivative of
    the primitive) without touching value, derivative or inverse.
    """

    def __init__(self, base: LegFunction, const: float):
        self.base = base
        self.const = float(const)
        self.name = base.name
        self.domain = base.domain

    def _value(self, x):
        return self.base._value(x)

    def _derivative(self, x):
        return self.base._derivative(x)

    def _antiderivative(self, x):
        return self.base._antiderivative(x) + self.const

    def _inverse(self, y):
        return self.base._inverse(y)

    def _inverse_array(self, y):
        return self.base._inverse_array(y)


# ---------------------------------------------------------------------------
# family tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LegSet:
    """The full 12-leg table of one commuting pair of maps.

    Directions: i, j are maps of the first kind at parameters lam, mu;
    k, l are maps of the second kind at lam, mu. Index 0 is the undressed
    lattice direction.
    """

    psi_0: LegFunction
    psi_i: LegFunction
    psi_j: LegFunction
    psi_k: LegFunction
    psi_l: LegFunction
    phi_i0: LegFunction
    phi_j0: LegFunction
    phi_k0: LegFunction
    phi_l0: LegFunction
    phi_ij: LegFunction
    phi_kl: LegFunction
    phi_il: LegFunction


@dataclass(frozen=True)
class MapLegs:
    """Leg bundle of a single map: its psi, its phi to direction 0, and
    the undressed psi_0 (None when the family has no on-site 0-term)."""

    kind: str  # "F" or "G"
    param: float
    psi: LegFunction
    phi: LegFunction
    psi_0: LegFunction


@dataclass(frozen=True)
class DensityLegs:
    """Parameter derivatives of the five potentials entering invariants.

    Each entry maps an array of difference variables to d/dnu of the
    corresponding antiderivative, with nu the parameter of the first (dL_F,
    dLam_F0, dLam_FF) or second (dLam_G0, dL_G) map direction; dLam_FF and
    its mates are evaluated at the partner parameter stored in params.
    """

    dL_F: Callable
    dLam_F0: Callable
    dLam_FF: Callable
    dLam_G0: Callable
    dL_G: Callable


class _FamilyTable:
    """Constructor callbacks for one family's legs at arbitrary parameters."""

    def __init__(self, family: FamilyId, params: FamilyParams):
        self.family = family
        self.p = params
        self._validate()

    def _validate(self):
        # shared preconditions only; every other degeneracy (vanishing leg
        # parameter, constant ratio, singular Mobius block) raises from the
        # leg constructor that actually needs the combination
        p = self.p
        fam = self.family
        if p.alpha == 0.0:
            raise InvalidParams(f"{fam}: alpha must be nonzero")
        if fam is FamilyId.MASTER_EXPONENTIAL and p.eps == 0.0:
            raise InvalidParams(f"{fam}: eps must be nonzero")

    @staticmethod
    def _nonzero_param(fam, nu: float, tag: str) -> None:
        if nu == 0.0:
            raise InvalidParams(f"{fam}: leg {tag} needs a nonzero parameter")

    # base symmetric shape
    def _sym(self, a: float, name: str) -> LegFunction:
        if a == 0.0:
            raise InvalidParams(f"{self.family}: leg {name} has zero parameter")
        if self.family is FamilyId.SYM_RATIONAL:
            return RationalLeg(a, name)
        if self.family is FamilyId.SYM_LOG_RATIONAL:
            return LogRatioLeg(a, name)
        return LogSinhRatioLeg(a, name)

    # -- per-family leg constructors ----------------------------------
    def psi_0(self) -> LegFunction:
        p = self.p
        fam = self.family
        if fam in _SYMMETRIC:
            return self._sym(p.alpha, "psi_0")
        if fam is FamilyId.MODIFIED_EXPONENTIAL:
            return ExpLogLeg(1.0, p.alpha, 1.0, 0.0, name="psi_0")
        if fam is FamilyId.MASTER_EXPONENTIAL:
            e = p.eps
            return ExpLogLeg(1.0, e * p.alpha, 1.0, 0.0, k=1.0 / e, name="psi_0",
                             da=0.0, db=e * p.alpha, cross=e * p.alpha)
        if fam is FamilyId.ADDITIVE_EXPONENTIAL:
            return MobiusExpLeg(p.alpha, 0.0, 0.0, 1.0, name="psi_0")
        return LinLogLeg(1.0, p.alpha, 1.0, 0.0, name="psi_0")

    def psi_F(self, nu: float, tag: str = "psi_F") -> LegFunction:
        p = self.p
        fam = self.family
        if fam in _SYMMETRIC:
            return self._sym(nu, tag)
        if fam is FamilyId.MODIFIED_EXPONENTIAL:
            return ExpLogLeg(-1.0, 1.0, nu, 0.0, name=tag)
        if fam is FamilyId.MASTER_EXPONENTIAL:
            self._nonzero_param(fam, nu, tag)
            e = p.eps
            return ExpLogLeg(1.0 - e / nu, e / nu, 1.0, 0.0, k=1.0 / e, name=tag,
                             da=-e / nu, db=e / nu, cross=e / nu)
        if fam is FamilyId.ADDITIVE_EXPONENTIAL:
            self._nonzero_param(fam, nu, tag)
            return MobiusExpLeg(1.0 / nu, -1.0 / nu, 0.0, 1.0, name=tag)
        return LinLogLeg(0.0, 1.0, nu, 0.0, name=tag)

    def phi_F0(self, nu: float, tag: str = "phi_F0") -> LegFunction:
        p = self.p
        fam = self.family
        al = p.alpha
        if fam in _SYMMETRIC:
            return self._sym(nu - al, tag)
        if fam is FamilyId.MODIFIED_EXPONENTIAL:
            return ExpLogLeg(1.0, nu, 1.0, al, name=tag)
        if fam is FamilyId.MASTER_EXPONENTIAL:
            e = p.eps
            return ExpLogLeg(
                1.0, -nu * (al - e), 1.0, -al * (nu - e), k=1.0 / e, name=tag,
                da=0.0, db=e * (nu - al), cross=e * (nu - al),
            )
        if fam is FamilyId.ADDITIVE_EXPONENTIAL:
            return MobiusExpLeg(nu - al, 0.0, -nu * al, 1.0, name=tag)
        return LinLogLeg(1.0, nu, 1.0, al, name=tag)

    def psi_G(self, nu: float, tag: str = "psi_G") -> LegFunction:
        p = self.p
        fam = self.family
        al = p.alpha
        if fam in _SYMMETRIC:
            return self._sym(nu + al, tag)
        if fam is FamilyId.MODIFIED_EXPONENTIAL:
            return ExpLogLeg(1.0, nu + al, 1.0, 0.0, name=tag)
        if fam is FamilyId.MASTER_EXPONENTIAL:
            e = p.eps
            return ExpLogLeg(1.0, e * (nu + al), 1.0, 0.0, k=1.0 / e, name=tag,
                             da=0.0, db=e * (nu + al), cross=e * (nu + al))
        if fam is FamilyId.ADDITIVE_EXPONENTIAL:
            return MobiusExpLeg(nu + al, 0.0, 0.0, 1.0, name=tag)
        return LinLogLeg(1.0, nu + al, 1.0, 0.0, name=tag)

    def phi_G0(self, nu: float, tag: str = "phi_G0") -> LegFunction:
        p = self.p
        fam = self.family
        al = p.alpha
        if fam in _SYMMETRIC:
            return self._sym(nu, tag)
        if fam is FamilyId.MODIFIED_EXPONENTIAL:
            base = ExpLogLeg(-1.0, 1.0, nu + al, -al, name=tag)
            return ShiftedLeg(base, _mod_exp_norm_G0(nu, al))
        if fam is FamilyId.MASTER_EXPONENTIAL:
            e = p.eps
            return ExpLogLeg(
                nu + al - e, -(al - e), nu + al, -al, k=1.0 / e, name=tag,
                da=-e, db=e, cross=e * nu,
            )
        if fam is FamilyId.ADDITIVE_EXPONENTIAL:
            return MobiusExpLeg(1.0, -1.0, -al, nu + al, name=tag)
        return LinLogLeg(0.0, 1.0, nu, al * (nu + al), name=tag)

    def phi_FF(self, nu_a: float, nu_b: float, tag: str = "phi_FF") -> LegFunction:
        fam = self.family
        if nu_a == nu_b:
            raise InvalidParams(f"{fam}: cross leg needs distinct parameters")
        if fam in _SYMMETRIC:
            return self._sym(nu_a - nu_b, tag)
        if fam is FamilyId.MODIFIED_EXPONENTIAL:
            base = ExpLogLeg(-nu_b, nu_a, -1.0, 1.0, name=tag)
            return ShiftedLeg(base, math.log(abs(nu_a)) * math.log(abs(nu_b)))
        if fam is FamilyId.MASTER_EXPONENTIAL:
            e = self.p.eps
            return ExpLogLeg(
                -nu_b, nu_a, -(nu_b - e), nu_a - e, k=1.0 / e, name=tag,
                da=-e, db=e, cross=e * (nu_a - nu_b),
            )
        if fam is FamilyId.ADDITIVE_EXPONENTIAL:
            return MobiusExpLeg(1.0, -1.0, nu_a, -nu_b, name=tag)
        return LinLogLeg(nu_b - nu_a, nu_a * nu_b, 0.0, 1.0, name=tag)

    def phi_GG(self, nu_a: float, nu_b: float, tag: str = "phi_GG") -> LegFunction:
        fam = self.family
        al = self.p.alpha
        if nu_a == nu_b:
            raise InvalidParams(f"{fam}: cross leg needs distinct parameters")
        if fam in _SYMMETRIC:
            return self._sym(nu_a - nu_b, tag)
        if fam is FamilyId.MODIFIED_EXPONENTIAL:
            return ExpLogLeg(-1.0, 1.0, -(nu_a + al), nu_b + al, name=tag)
        if fam is FamilyId.MASTER_EXPONENTIAL:
            e = self.p.eps
            return ExpLogLeg(
                -(nu_a + al - e), nu_b + al - e, -(nu_a + al), nu_b + al,
                k=1.0 / e, name=tag, da=e, db=-e, cross=e * (nu_a - nu_b),
            )
        if fam is FamilyId.ADDITIVE_EXPONENTIAL:
            return MobiusExpLeg(-1.0, 1.0, nu_b + al, -(nu_a + al), name=tag)
        return LinLogLeg(0.0, 1.0, nu_a - nu_b, (nu_a + al) * (nu_b + al), name=tag)

    def phi_FG(self, nu_a: float, nu_b: float, tag: str = "phi_FG") -> LegFunction:
        """Cross leg between a first-kind map at nu_a and a second-kind map
        at nu_b; degenerates when nu_a == nu_b + alpha."""
        fam = self.family
        al = self.p.alpha
        if nu_a == nu_b + al:
            raise InvalidParams(f"{fam}: mixed cross leg degenerates")
        if fam in _SYMMETRIC:
            return self._sym(nu_a - nu_b - al, tag)
        if fam is FamilyId.MODIFIED_EXPONENTIAL:
            return ExpLogLeg(1.0, nu_a, 1.0, nu_b + al, name=tag)
        if fam is FamilyId.MASTER_EXPONENTIAL:
            e = self.p.eps
            return ExpLogLeg(
                1.0, -nu_a * (nu_b + al - e), 1.0, -(nu_a - e) * (nu_b + al),
                k=1.0 / e, name=tag,
                da=0.0, db=e * (nu_a - nu_b - al), cross=e * (nu_a - nu_b - al),
            )
        if fam is FamilyId.ADDITIVE_EXPONENTIAL:
            return MobiusExpLeg(nu_a - nu_b - al, 0.0, -nu_a * (nu_b + al), 1.0,
                                name=tag)
        return LinLogLeg(1.0, nu_a, 1.0, nu_b + al, name=tag)


def build_leg_set(family: FamilyId, params: FamilyParams) -> LegSet:
    """Instantiate the full 12-leg table at (lam, mu)."""
    t = _FamilyTable(family, params)
    lam, mu = params.lam, params.mu
    return LegSet(
        psi_0=t.psi_0(),
        psi_i=t.psi_F(lam, "psi_i"),
        psi_j=t.psi_F(mu, "psi_j"),
        psi_k=t.psi_G(lam, "psi_k"),
        psi_l=t.psi_G(mu, "psi_l"),
        phi_i0=t.phi_F0(lam, "phi_i0"),
        phi_j0=t.phi_F0(mu, "phi_j0"),
        phi_k0=t.phi_G0(lam, "phi_k0"),
        phi_l0=t.phi_G0(mu, "phi_l0"),
        phi_ij=t.phi_FF(lam, mu, "phi_ij"),
        phi_kl=t.phi_GG(lam, mu, "phi_kl"),
        phi_il=t.phi_FG(lam, mu, "phi_il"),
    )


def map_legs(family: FamilyId, params: FamilyParams, kind: str,
             param: float) -> MapLegs:
    """Leg bundle of a single map of the given kind at the given parameter.

    The bundle is built independently of params.lam/params.mu, so two maps
    at arbitrary (even equal) parameters can be compared side by side.
    """
    if kind not in ("F", "G"):
        raise InvalidParams(f"map kind must be 'F' or 'G', got {kind!r}")
    t = _FamilyTable(family, params)
    if kind == "F":
        return MapLegs(kind, float(param), t.psi_F(param), t.phi_F0(param),
                       t.psi_0())
    return MapLegs(kind, float(param), t.psi_G(param), t.phi_G0(param),
                   t.psi_0())


def cross_leg(family: FamilyId, params: FamilyParams, pair: str,
              param_a: float, param_b: float) -> LegFunction:
    """Cross leg between two maps: pair in {'FF', 'GG', 'FG'}.

    For 'FG', param_a is the first-kind parameter and param_b the
    second-kind one.
    """
    t = _FamilyTable(family, params)
    if pair == "FF":
        return t.phi_FF(param_a, param_b)
    if pair == "GG":
        return t.phi_GG(param_a, param_b)
    if pair == "FG":
        return t.phi_FG(param_a, param_b)
    raise InvalidParams(f"pair must be 'FF', 'GG' or 'FG', got {pair!r}")


def invert_leg(f: LegFunction, y: float, hint: float) -> float:
    """Solve f(x) = y on the domain component containing hint.

    The closed-form inverse is used when it lands on the right component;
    otherwise a bracketing search around the hint followed by Brent
    polishing. Raises NoRoot when y is not attained on that component.
    """
    y = float(y)
    hint = float(hint)
    ci = f.component_index(hint)
    if ci < 0:
        raise DomainViolation(f"{f.name}: hint {hint:.6g} is off-domain")
    for x in f._inverse_candidates(y):
        if not (np.isfinite(x) and f.component_index(x) == ci):
            continue
        v = float(f._value(np.asarray(x)))
        if np.isfinite(v) and abs(v - y) <= 1e-8 * (1.0 + abs(y)):
            return x

    def h(t: float) -> float:
        with np.errstate(all="ignore"):
            return float(f._value(np.asarray(t))) - y

    lo, hi = f.domain[ci]
    a = max(lo, hint - 50.0)
    b = min(hi, hint + 50.0)
    # stay off the component edges, where the leg typically diverges
    edge = 1e-12
    if np.isfinite(lo):
        a = max(a, lo + edge * (1.0 + abs(lo)))
    if np.isfinite(hi):
        b = min(b, hi - edge * (1.0 + abs(hi)))
    grid = np.linspace(a, b, 1025)
    with np.errstate(all="ignore"):
        vals = f._value(grid) - y
    ok = np.isfinite(vals)
    idx = None
    for i in range(len(grid) - 1):
        if ok[i] and ok[i + 1] and vals[i] * vals[i + 1] <= 0:
            if idx is None or abs(grid[i] - hint) < abs(grid[idx] - hint):
                idx = i
    if idx is None:
        raise NoRoot(f"{f.name}: {y!r} not attained near hint {hint:.6g}")
    from scipy.optimize import brentq

    x = float(brentq(h, grid[idx], grid[idx + 1], xtol=1e-14, rtol=8.9e-16,
                     maxiter=200))
    v = float(f._value(np.asarray(x)))
    if not np.isfinite(v) or abs(v - y) > 1e-8 * (1.0 + abs(y)):
        raise NonConvergence(f"{f.name}: root polish failed at {x:.6g}")
    return x


def antiderivative_pair(f: LegFunction):
    """The antiderivative L of a leg as a standalone callable.

    L is continuous on each domain component; differences across distinct
    components are not meaningful (integrate() raises DomainCrossing for
    those).
    """

    def L(x):
        return f.antiderivative(x)

    return L


# ---------------------------------------------------------------------------
# parameter-derivative (conserved density) tables
# ---------------------------------------------------------------------------


def _mod_exp_norm_G0(lam: float, al: float) -> float:
    """Normalization constant of the exp-Mobius Lam_G0 primitive.

    Chosen so that d/dlam of the primitive equals the closed-form density
    (-x + log|lam + alpha - alpha e^x| - log|lam|) / (lam + alpha); its
    lam-derivative is (log|lam+alpha| - log|lam|)/(lam+alpha).
    """
    la = lam + al
    return (
        0.5 * math.log(abs(la)) ** 2
        - math.log(abs(lam)) * math.log(abs(la / al))
        - float(re_dilog(-lam / al))
    )


#: The normalization constants are applied inside the table builder, so a
#: plain build_leg_set already carries them; the alias documents intent at
#: call sites that consume antiderivatives.
def build_leg_set_normalized(family: FamilyId, params: FamilyParams) -> LegSet:
    return build_leg_set(family, params)


def lambda_density_legs(family: FamilyId, params: FamilyParams) -> DensityLegs:
    """Closed-form parameter derivatives of the five invariant potentials.

    All entries take the difference variable (array ok) and return d/dnu of
    the corresponding primitive at nu = params.lam, with params.mu as the
    partner parameter of the FF cross term.
    """
    p = params
    lam, mu, al = p.lam, p.mu, p.alpha
    fam = family
    _FamilyTable(family, params)  # parameter validation
    bad = [("lam", lam), ("mu", mu), ("lam+alpha", lam + al)]
    if fam is FamilyId.MASTER_EXPONENTIAL:
        bad += [("lam-eps", lam - p.eps), ("mu-eps", mu - p.eps),
                ("lam+alpha-eps", lam + al - p.eps)]
    for nm, v in bad:
        if v == 0.0:
            raise InvalidParams(f"{fam}: density table needs nonzero {nm}")

    if fam in _SYMMETRIC:
        table = _FamilyTable(family, params)

        def d_of(a, name):
            leg = table._sym(a, name)
            return leg.d_param_antiderivative

        return DensityLegs(
            dL_F=d_of(lam, "dL_F"),
            dLam_F0=d_of(lam - al, "dLam_F0"),
            dLam_FF=d_of(lam - mu, "dLam_FF"),
            dLam_G0=d_of(lam, "dLam_G0"),
            dL_G=d_of(lam + al, "dL_G"),
        )

    if fam is FamilyId.MODIFIED_EXPONENTIAL:

        def dL_F(x):
            return -_as_array(x) / lam

        def dLam_F0(x):
            return np.log(np.abs(1.0 + lam * np.exp(x))) / lam

        def dLam_FF(x):
            return np.log(np.abs(lam * np.exp(x) - mu)) / lam

        def dLam_G0(x):
            x = _as_array(x)
            return (
                -x
                + np.log(np.abs(lam + al - al * np.exp(x)))
                - math.log(abs(lam))
            ) / (lam + al)

        def dL_G(x):
            return np.log(np.abs(1.0 + (lam + al) * np.exp(x))) / (lam + al)

        return DensityLegs(dL_F, dLam_F0, dLam_FF, dLam_G0, dL_G)

    if fam is FamilyId.MASTER_EXPONENTIAL:
        e = p.eps

        def dL_F(x):
            x = _as_array(x)
            a, b = 1.0 - e / lam, e / lam
            return (a1_da(a, b, x) - a1_db(a, b, x)) / (lam * lam)

        def dLam_F0(x):
            x = _as_array(x)
            return (
                -(al - e) * a1_db(1.0, -lam * (al - e), x)
                + al * a1_db(1.0, -al * (lam - e), x)
            ) / e

        def dLam_FF(x):
            x = _as_array(x)
            return (
                a1_db(-mu, lam, x) - a1_db(-(mu - e), lam - e, x)
            ) / e

        def dLam_G0(x):
            x = _as_array(x)
            return (
                a1_da(lam + al - e, -(al - e), x)
                - a1_da(lam + al, -al, x)
            ) / e

        def dL_G(x):
            x = _as_array(x)
            return a1_db(1.0, e * (lam + al), x)

        return DensityLegs(dL_F, dLam_F0, dLam_FF, dLam_G0, dL_G)

    if fam is FamilyId.ADDITIVE_EXPONENTIAL:

        def dL_F(x):
            x = _as_array(x)
            return -(np.exp(x) - x) / (lam * lam)

        def dLam_F0(x):
            x = _as_array(x)
            t = np.exp(x)
            with np.errstate(all="ignore"):
                return (
                    -np.log(np.abs(1.0 - lam * al * t)) / (lam * lam)
                    + ((lam - al) / lam) * t / (1.0 - lam * al * t)
                )

        def dLam_FF(x):
            x = _as_array(x)
            t = np.exp(x)
            with np.errstate(all="ignore"):
                return (
                    -np.log(np.abs(lam * t - mu)) / (lam * lam)
                    + ((mu - lam) / (lam * mu)) * t / (lam * t - mu)
                )

        def dLam_G0(x):
            x = _as_array(x)
            t = np.exp(x)
            la = lam + al
            with np.errstate(all="ignore"):
                return (
                    x / (la * la)
                    - np.log(np.abs(la - al * t)) / (la * la)
                    - (lam / (al * la)) / (la - al * t)
                )

        def dL_G(x):
            return np.exp(_as_array(x))

        return DensityLegs(dL_F, dLam_F0, dLam_FF, dLam_G0, dL_G)

    # AsymmetricRational
    def dL_F(x):
        return -_as_array(x) / lam

    def dLam_F0(x):
        return a2_db(1.0, lam, _as_array(x))

    def dLam_FF(x):
        x = _as_array(x)
        return -a2_da(mu - lam, lam * mu, x) + mu * a2_db(mu - lam, lam * mu, x)

    def dLam_G0(x):
        x = _as_array(x)
        b = al * (lam + al)
        return -(a2_da(lam, b, x) + al * a2_db(lam, b, x))

    def dL_G(x):
        return a2_db(1.0, lam + al, _as_array(x))

    return DensityLegs(dL_F, dLam_F0, dLam_FF, dLam_G0, dL_G)
