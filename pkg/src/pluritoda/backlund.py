"""The two commuting families of canonical lattice maps.

State and conventions
---------------------
A state is a pair of length-N arrays (x, p): site variables and conjugate
momenta. Boundary handling is either OPEN (terms referring to sites 0 and
N+1 are omitted) or PERIODIC (site indices are taken mod N).

A map of the first kind at parameter nu, with legs psi = psi_F(nu),
phi = phi_F0(nu) and the undressed leg psi_0, sends (x, p) to (X, P)
through the implicit system (1-based sites)

    p_n = psi(X_n - x_n) + phi(x_n - X_{n-1})
          - psi_0(x_{n+1} - x_n) + psi_0(x_n - x_{n-1})
    P_n = psi(X_n - x_n) + phi(x_{n+1} - X_n)

and a map of the second kind, with psi = psi_G(nu), phi = phi_G0(nu),
through

    p_n = phi(X_n - x_n) + psi(x_n - X_{n-1})
    P_n = phi(X_n - x_n) + psi(x_{n+1} - X_n)
          - psi_0(X_{n+1} - X_n) + psi_0(X_n - X_{n-1})

These are the stationarity equations p = -grad_x A, P = +grad_X A of the
generating actions

    A_F(x, X) = sum L_F(X_n - x_n) - sum L_0(x_{n+1} - x_n)
                - sum Lam_F0(x_{n+1} - X_n)
    A_G(x, X) = sum Lam_G0(X_n - x_n) + sum L_0(X_n - X_{n-1})
                - sum L_G(x_n - X_{n-1})

where capital letters denote antiderivatives of the matching legs; in A_F
the second and third sums run n = 1..N-1 when OPEN, in A_G they run
n = 2..N. Both maps are therefore canonical by construction.

Solving for X
-------------
OPEN: the implicit system is triangular. X_1 follows from the n=1 equation
by one leg inversion and each subsequent X_n from the equation at n. The
map is single valued (one branch) whenever all inversions have real
solutions; otherwise NoBranch is raised.

PERIODIC: seeding X_N = s makes the same recursion well defined, and
branches are the roots of g(s) = X_N(s) - s. The scan evaluates g on a
grid over a window around x_N (vectorized, nan marking infeasible legs),
brackets sign changes between finite neighbours, and polishes each root
with Brent's method. Generic states have finitely many (often two)
branches; BranchSet returns all of them sorted by root.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DomainViolation,
    InvalidParams,
    NoBranch,
    NonConvergence,
    NoRoot,
)
from .legs import FamilyId, FamilyParams, MapLegs, map_legs

__all__ = [
    "Boundary",
    "ChainState",
    "MapKind",
    "Branch",
    "BranchSet",
    "forward_pair_to_momenta",
    "lagrangian_value",
    "apply_map",
    "euler_lagrange_step",
    "evolve",
    "tangent_map",
    "symplectic_form",
    "random_pair_state",
]


class Boundary(str, enum.Enum):
    OPEN = "open"
    PERIODIC = "periodic"

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


@dataclass(frozen=True)
class ChainState:
    """Sites x, conjugate momenta p, and the boundary mode of a chain."""

    x: np.ndarray
    p: np.ndarray
    boundary: Boundary

    def __post_init__(self):
        object.__setattr__(self, "x", _layers(self.x, "x"))
        object.__setattr__(self, "p", _layers(self.p, "p"))
        if self.x.shape != self.p.shape:
            raise InvalidParams("x and p must have equal length")
        if not isinstance(self.boundary, Boundary):
            raise InvalidParams(f"not a boundary mode: {self.boundary!r}")

    @property
    def n_sites(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class MapKind:
    """A map family member: kind 'F' (first) or 'G' (second) at parameter nu."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind not in ("F", "G"):
            raise InvalidParams(f"map kind must be 'F' or 'G', got {self.kind!r}")
        if not np.isfinite(self.param):
            raise InvalidParams(f"map parameter must be finite, got {self.param!r}")

    @classmethod
    def F(cls, param: float) -> "MapKind":
        return cls("F", float(param))

    @classmethod
    def G(cls, param: float) -> "MapKind":
        return cls("G", float(param))

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"{self.kind}({self.param:g})"


@dataclass(frozen=True)
class Branch:
    """One solution of a map: the new chain state and its shooting root."""

    state: ChainState
    shooting_root: float

    @property
    def x_new(self) -> np.ndarray:
        return self.state.x

    @property
    def p_new(self) -> np.ndarray:
        return self.state.p

    @property
    def root(self) -> float:
        return self.shooting_root


@dataclass(frozen=True)
class BranchSet:
    """All branches found for one (state, map) pair, sorted by root."""

    branches: tuple
    kind: MapKind
    boundary: Boundary

    @property
    def count(self) -> int:
        return len(self.branches)

    def __len__(self) -> int:
        return len(self.branches)

    def __iter__(self):
        return iter(self.branches)

    def __getitem__(self, i) -> Branch:
        return self.branches[i]

    def nearest(self, x_ref) -> Branch:
        """Branch whose layer is closest (max norm) to a reference layer;
        ties resolved toward the smaller root."""
        x_ref = np.asarray(x_ref, dtype=float)
        best = None
        best_key = None
        for b in self.branches:
            key = (float(np.max(np.abs(b.x_new - x_ref))), b.root)
            if best_key is None or key < best_key:
                best, best_key = b, key
        return best

    @property
    def roots(self) -> np.ndarray:
        return np.array([b.root for b in self.branches])


def _layers(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InvalidParams(f"{name} must be a nonempty 1-d array")
    if not np.isfinite(x).all():
        raise InvalidParams(f"{name} contains non-finite entries")
    return x


def _psi0_difference(psi_0, d_next: float, d_prev: float) -> float:
    """psi_0(d_next) - psi_0(d_prev), with the exact cancellation of equal
    arguments short-circuited (the N=1 periodic case evaluates psi_0 at 0,
    where several families are singular, but always in cancelling pairs)."""
    if d_next == d_prev:
        return 0.0
    return float(psi_0.value(d_next)) - float(psi_0.value(d_prev))


def _multiplicative(ml: MapLegs) -> bool:
    """Whether the map equations must be solved as signed products.

    Legs that are logs of ratios of either sign advertise signed=True;
    their sums only determine momenta together with the product's sign,
    so the solvers work on the factors themselves.
    """
    return ml.psi.signed and ml.phi.signed and ml.psi_0.signed


def _pos_dom(leg):
    return leg.positive_domain if leg.positive_domain is not None else leg.domain


def _within(vals, intervals, margin: float) -> bool:
    vals = np.atleast_1d(np.asarray(vals, dtype=float))
    ok = np.zeros(vals.shape, dtype=bool)
    for a, b in intervals:
        aa = a + margin if np.isfinite(a) else a
        bb = b - margin if np.isfinite(b) else b
        ok |= (vals > aa) & (vals < bb)
    return bool(ok.all())


def _momentum_parity_ok(ml: MapLegs, x, X, per: bool) -> bool:
    """Whether every momentum's defining factor product is positive.

    Momenta are sums of log-absolute leg values, which represent the map
    only where the signed factor product equals e^p > 0; a layer pair
    whose product comes out negative solves no real momentum equation.
    """
    n_sites = x.size
    u = X - x

    def s(leg, arg):
        return float(leg.factor_sign(np.asarray(arg)))

    for n in range(n_sites):
        nx = (n + 1) % n_sites
        pv = (n - 1) % n_sites
        if ml.kind == "F":
            sp = sP = s(ml.psi, u[n])
            if per:
                sp *= s(ml.phi, x[n] - X[pv])
                if n_sites > 1:
                    sp *= s(ml.psi_0, x[nx] - x[n]) * s(ml.psi_0, x[n] - x[pv])
                sP *= s(ml.phi, x[nx] - X[n])
            else:
                if n >= 1:
                    sp *= s(ml.phi, x[n] - X[n - 1])
                    sp *= s(ml.psi_0, x[n] - x[n - 1])
                if n <= n_sites - 2:
                    sp *= s(ml.psi_0, x[n + 1] - x[n])
                    sP *= s(ml.phi, x[n + 1] - X[n])
        else:
            sp = sP = s(ml.phi, u[n])
            if per:
                sp *= s(ml.psi, x[n] - X[pv])
                sP *= s(ml.psi, x[nx] - X[n])
                if n_sites > 1:
                    sP *= s(ml.psi_0, X[nx] - X[n]) * s(ml.psi_0, X[n] - X[pv])
            else:
                if n >= 1:
                    sp *= s(ml.psi, x[n] - X[n - 1])
                    sP *= s(ml.psi_0, X[n] - X[n - 1])
                if n <= n_sites - 2:
                    sP *= s(ml.psi, x[n + 1] - X[n])
                    sP *= s(ml.psi_0, X[n + 1] - X[n])
        if sp <= 0.0 or sP <= 0.0:
            return False
    return True


def forward_pair_to_momenta(family: FamilyId, params: FamilyParams,
                            kind: MapKind, x, x_new, boundary: Boundary):
    """Momenta (p, p_new) induced by a known pair of layers.

    Evaluates the defining implicit system on (x, x_new); every generic
    layer pair with on-domain leg arguments determines both momenta
    explicitly.
    """
    ml = map_legs(family, params, kind.kind, kind.param)
    x = _layers(x, "x")
    X = _layers(x_new, "x_new")
    if x.shape != X.shape:
        raise InvalidParams("x and x_new must have equal length")
    n_sites = x.size
    per = boundary is Boundary.PERIODIC
    p = np.empty(n_sites)
    P = np.empty(n_sites)
    u = X - x

    def nxt(i):
        return (i + 1) % n_sites if per else i + 1

    def prv(i):
        return (i - 1) % n_sites if per else i - 1

    if kind.kind == "F":
        for n in range(n_sites):
            v = float(ml.psi.value(u[n]))
            pn, Pn = v, v
            if per:
                pn += float(ml.phi.value(x[n] - X[prv(n)]))
                pn -= _psi0_difference(ml.psi_0, x[nxt(n)] - x[n],
                                       x[n] - x[prv(n)])
                Pn += float(ml.phi.value(x[nxt(n)] - X[n]))
            else:
                if n >= 1:
                    pn += float(ml.phi.value(x[n] - X[n - 1]))
                    pn += float(ml.psi_0.value(x[n] - x[n - 1]))
                else:
                    pn += ml.phi.limit_at_inf + ml.psi_0.limit_at_inf
                if n <= n_sites - 2:
                    pn -= float(ml.psi_0.value(x[n + 1] - x[n]))
                    Pn += float(ml.phi.value(x[n + 1] - X[n]))
                else:
                    pn -= ml.psi_0.limit_at_inf
                    Pn += ml.phi.limit_at_inf
            p[n], P[n] = pn, Pn
    else:
        for n in range(n_sites):
            v = float(ml.phi.value(u[n]))
            pn, Pn = v, v
            if per:
                pn += float(ml.psi.value(x[n] - X[prv(n)]))
                Pn += float(ml.psi.value(x[nxt(n)] - X[n]))
                Pn -= _psi0_difference(ml.psi_0, X[nxt(n)] - X[n],
                                       X[n] - X[prv(n)])
            else:
                if n >= 1:
                    pn += float(ml.psi.value(x[n] - X[n - 1]))
                    Pn += float(ml.psi_0.value(X[n] - X[n - 1]))
                else:
                    pn += ml.psi.limit_at_inf
                    Pn += ml.psi_0.limit_at_inf
                if n <= n_sites - 2:
                    Pn += float(ml.psi.value(x[n + 1] - X[n]))
                    Pn -= float(ml.psi_0.value(X[n + 1] - X[n]))
                else:
                    Pn += ml.psi.limit_at_inf
                    Pn -= ml.psi_0.limit_at_inf
            p[n], P[n] = pn, Pn
    return p, P


def lagrangian_value(family: FamilyId, params: FamilyParams, kind: MapKind,
                     x, x_new, boundary: Boundary) -> float:
    """Value of the generating action A_F or A_G on a pair of layers."""
    ml = map_legs(family, params, kind.kind, kind.param)
    x = _layers(x, "x")
    X = _layers(x_new, "x_new")
    n_sites = x.size
    per = boundary is Boundary.PERIODIC
    total = 0.0
    if kind.kind == "F":
        total += float(np.sum(ml.psi.antiderivative(X - x)))
        rng_hi = n_sites if per else n_sites - 1
        for n in range(rng_hi):
            nn = (n + 1) % n_sites
            d = x[nn] - x[n]
            if not (per and n_sites == 1):
                total -= float(ml.psi_0.antiderivative(d))
            total -= float(ml.phi.antiderivative(x[nn] - X[n]))
    else:
        total += float(np.sum(ml.phi.antiderivative(X - x)))
        lo = 0 if per else 1
        for n in range(lo, n_sites):
            pv = (n - 1) % n_sites
            d = X[n] - X[pv]
            if not (per and n_sites == 1):
                total += float(ml.psi_0.antiderivative(d))
            total -= float(ml.psi.antiderivative(x[n] - X[pv]))
    return total


# ---------------------------------------------------------------------------
# solving the implicit system
# ---------------------------------------------------------------------------


def _open_branch_mult(ml: MapLegs, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Open-end recursion in the multiplicative picture.

    Each site equation is a product of signed ratio factors equated to
    e^{p_n}; the factor carrying the new point is linear in it, so the
    branch is unique and negative factor pairs are kept automatically.
    """
    n_sites = x.size
    X = np.empty(n_sites)
    if ml.kind == "F":
        for n in range(n_sites):
            m = math.exp(p[n])
            if n <= n_sites - 2:
                m *= float(ml.psi_0.factor(x[n + 1] - x[n]))
            if n >= 1:
                m /= float(ml.psi_0.factor(x[n] - x[n - 1]))
                m /= float(ml.phi.factor(x[n] - X[n - 1]))
            u = float(ml.psi.inverse_factor(m))
            if not np.isfinite(u):
                raise NoRoot(f"{ml.psi.name}: factor {m!r} not attained")
            X[n] = x[n] + u
    else:
        for n in range(n_sites):
            m = math.exp(p[n])
            if n >= 1:
                m /= float(ml.psi.factor(x[n] - X[n - 1]))
            u = float(ml.phi.inverse_factor(m))
            if not np.isfinite(u):
                raise NoRoot(f"{ml.phi.name}: factor {m!r} not attained")
            X[n] = x[n] + u
    return X


def _open_branch(ml: MapLegs, x: np.ndarray, p: np.ndarray) -> np.ndarray:
    if _multiplicative(ml):
        return _open_branch_mult(ml, x, p)
    n_sites = x.size
    X = np.empty(n_sites)
    if ml.kind == "F":
        for n in range(n_sites):
            rhs = p[n]
            if n <= n_sites - 2:
                rhs += float(ml.psi_0.value(x[n + 1] - x[n]))
            else:
                rhs += ml.psi_0.limit_at_inf
            if n >= 1:
                rhs -= float(ml.psi_0.value(x[n] - x[n - 1]))
                rhs -= float(ml.phi.value(x[n] - X[n - 1]))
            else:
                rhs -= ml.psi_0.limit_at_inf + ml.phi.limit_at_inf
            X[n] = x[n] + ml.psi.inverse(rhs)
    else:
        for n in range(n_sites):
            rhs = p[n]
            if n >= 1:
                rhs -= float(ml.psi.value(x[n] - X[n - 1]))
            else:
                rhs -= ml.psi.limit_at_inf
            X[n] = x[n] + ml.phi.inverse(rhs)
    return X


def _periodic_layer_from_seed(ml: MapLegs, x: np.ndarray, p: np.ndarray,
                              seeds: np.ndarray) -> np.ndarray:
    """Recursed layer X for an array of seed values X_N = s.

    Returns an (n_sites, len(seeds)) array with nan marking infeasible
    recursions.
    """
    n_sites = x.size
    s = np.atleast_1d(np.asarray(seeds, dtype=float))
    X = np.full((n_sites, s.size), np.nan)
    prev = s
    if _multiplicative(ml):
        with np.errstate(all="ignore"):
            if ml.kind == "F":
                for n in range(n_sites):
                    m = math.exp(p[n]) * np.ones(s.size)
                    nx, pv = (n + 1) % n_sites, (n - 1) % n_sites
                    if n_sites > 1:
                        m *= ml.psi_0.factor(x[nx] - x[n])
                        m /= ml.psi_0.factor(x[n] - x[pv])
                    m /= ml.phi.factor(x[n] - prev)
                    X[n] = x[n] + ml.psi.inverse_factor(m)
                    prev = X[n]
            else:
                for n in range(n_sites):
                    m = math.exp(p[n]) / ml.psi.factor(x[n] - prev)
                    X[n] = x[n] + ml.phi.inverse_factor(m)
                    prev = X[n]
        return X
    if ml.kind == "F":
        c = np.empty(n_sites)
        for n in range(n_sites):
            c[n] = p[n] + _psi0_difference(
                ml.psi_0,
                x[(n + 1) % n_sites] - x[n],
                x[n] - x[(n - 1) % n_sites],
            )
        for n in range(n_sites):
            with np.errstate(all="ignore"):
                rhs = c[n] - ml.phi.value_or_nan(x[n] - prev)
                X[n] = x[n] + ml.psi.inverse_or_nan(rhs)
            prev = X[n]
    else:
        for n in range(n_sites):
            with np.errstate(all="ignore"):
                rhs = p[n] - ml.psi.value_or_nan(x[n] - prev)
                X[n] = x[n] + ml.phi.inverse_or_nan(rhs)
            prev = X[n]
    return X


def _periodic_roots(ml: MapLegs, x: np.ndarray, p: np.ndarray,
                    window: float, n_grid: int):
    """All roots of g(s) = X_N(s) - s in the scan window.

    Sign changes between finite neighbours are polished with Brent's
    method. Because recursion poles and roots can pair up on scales far
    below any fixed grid, cells containing a local minimum of |g| without
    a bracketed sign change are rescanned recursively a few levels deep.
    """

    def g_vec(s):
        layer = _periodic_layer_from_seed(ml, x, p, s)
        return layer[-1] - s

    def g_scalar(t: float) -> float:
        return float(g_vec(np.array([t]))[0])

    roots = []
    budget = [400]  # total scan calls allowed, shared across the recursion

    def scan(lo: float, hi: float, n: int, depth: int):
        if budget[0] <= 0:
            return
        budget[0] -= 1
        s = np.linspace(lo, hi, n)
        with np.errstate(all="ignore"):
            g = g_vec(s)
        finite = np.isfinite(g)
        bracketed = np.zeros(n, dtype=bool)
        for i in range(n - 1):
            if not (finite[i] and finite[i + 1]):
                continue
            gi, gj = g[i], g[i + 1]
            if gi == 0.0:
                roots.append(float(s[i]))
                bracketed[i] = True
                continue
            if gi * gj < 0.0:
                bracketed[i] = bracketed[i + 1] = True
                try:
                    r = brentq(g_scalar, s[i], s[i + 1], xtol=1e-14,
                               rtol=8.9e-16, maxiter=200)
                except (ValueError, RuntimeError):
                    continue
                roots.append(float(r))
        if finite[-1] and g[-1] == 0.0:
            roots.append(float(s[-1]))
        # cells straddling a feasibility edge: the finite sliver between
        # a nan grid point and its finite neighbour can hide a whole
        # crossing below grid resolution, so bisect the boundary on
        # finiteness and bracket against the innermost finite sample
        for i in range(n - 1):
            if finite[i] == finite[i + 1]:
                continue
            if finite[i]:
                t_out, t_bad = float(s[i]), float(s[i + 1])
                g_out = float(g[i])
            else:
                t_out, t_bad = float(s[i + 1]), float(s[i])
                g_out = float(g[i + 1])
            t_in, g_in = t_out, g_out
            for _ in range(60):
                m = 0.5 * (t_in + t_bad)
                if m == t_in or m == t_bad:
                    break
                gm = g_scalar(m)
                if np.isfinite(gm):
                    t_in, g_in = m, gm
                else:
                    t_bad = m
            if g_in == 0.0:
                roots.append(t_in)
            elif t_in != t_out and g_in * g_out < 0.0:
                a, b = sorted((t_in, t_out))
                try:
                    r = brentq(g_scalar, a, b, xtol=1e-14,
                               rtol=8.9e-16, maxiter=200)
                except (ValueError, RuntimeError):
                    continue
                roots.append(float(r))
        if depth <= 0:
            return
        # refine around unbracketed local minima of |g|: a double crossing
        # (or root-pole pair) inside one cell leaves such a dip behind.
        # Scans are vectorized so refinement is cheap; cap the number of
        # children per scan to keep pathological profiles bounded.
        ag = np.where(finite, np.abs(g), np.inf)
        span = s[1] - s[0]
        cand = []
        for i in range(1, n - 1):
            if not finite[i] or bracketed[i]:
                continue
            if ag[i] <= ag[i - 1] and ag[i] <= ag[i + 1] and (
                    ag[i] < ag[i - 1] or ag[i] < ag[i + 1]):
                if ag[i] < 1e4 * span:
                    cand.append(i)
        cand.sort(key=lambda i: ag[i])
        for i in cand[:64]:
            scan(float(s[i - 1]), float(s[i + 1]), 65, depth - 1)

    center = float(x[-1])
    scan(center - window, center + window, n_grid, 3)

    roots.sort()
    merged = []
    for r in roots:
        if merged and abs(r - merged[-1]) < 1e-8 * (1.0 + abs(r)):
            continue
        merged.append(r)
    return merged


def apply_map(family: FamilyId, params: FamilyParams, kind: MapKind,
              state: ChainState, window: float = 20.0,
              n_grid: int = 4097) -> BranchSet:
    """Solve the implicit system for the new layer(s).

    OPEN returns the single branch (or raises NoBranch); PERIODIC returns
    every branch found by the shooting scan, sorted by root. The branch
    momenta are recomputed from the explicit P equations.
    """
    ml = map_legs(family, params, kind.kind, kind.param)
    x, p, boundary = state.x, state.p, state.boundary

    branches = []
    if boundary is Boundary.OPEN:
        try:
            X = _open_branch(ml, x, p)
            if _multiplicative(ml) and not _momentum_parity_ok(ml, x, X, False):
                # the image layer realises |e^p| but not e^p itself: some
                # momentum's factor product came out negative
                raise NoBranch(f"open-end map {kind}: negative factor product")
            _, P = forward_pair_to_momenta(family, params, kind, x, X,
                                           boundary)
        except (NoRoot, DomainViolation) as exc:
            raise NoBranch(f"open-end map {kind} has no real branch: {exc}") from exc
        branches.append(Branch(ChainState(X, P, boundary), float(X[-1])))
    else:
        try:
            roots = _periodic_roots(ml, x, p, window, n_grid)
        except DomainViolation as exc:
            # the incoming layer itself violates a leg precondition, so
            # the implicit system is undefined rather than rootless
            raise NoBranch(f"periodic map {kind}: {exc}") from exc
        for r in roots:
            layer = _periodic_layer_from_seed(ml, x, p, np.array([r]))[:, 0]
            if not np.isfinite(layer).all():
                continue
            # a bracketed sign change may be a pole of g rather than a
            # root; genuine roots close to round-off, poles do not
            if abs(layer[-1] - r) > 1e-7 * (1.0 + abs(r)):
                continue
            # the momentum recheck below compares log|factors| and cannot
            # see a sign flip, so signed families filter on parity here
            if _multiplicative(ml) and not _momentum_parity_ok(ml, x, layer, True):
                continue
            try:
                p2, P = forward_pair_to_momenta(family, params, kind, x,
                                                layer, boundary)
            except DomainViolation:
                continue  # image layer leaves the chart of the new momenta
            # branches passing arbitrarily close to a leg pole cancel
            # catastrophically in the momentum equations; they cannot be
            # certified at machine precision, so they are not reported
            tol = 1e-6 * (1.0 + float(np.max(np.abs(p))))
            if not np.all(np.abs(p2 - p) <= tol):
                continue
            branches.append(Branch(ChainState(layer, P, boundary), float(r)))
        if not branches:
            raise NoBranch(
                f"periodic map {kind}: no branch in window "
                f"[{x[-1] - window:.3g}, {x[-1] + window:.3g}]"
            )
    branches.sort(key=lambda b: b.root)
    return BranchSet(tuple(branches), kind, boundary)


def euler_lagrange_step(family: FamilyId, params: FamilyParams,
                        kind: MapKind, x_prev, x, boundary: Boundary,
                        window: float = 20.0,
                        n_grid: int = 4097) -> BranchSet:
    """All continuations x_next of the second-order chain equations.

    The stationarity of the two-rung action in the middle layer x reads,
    for the first kind,

        psi(x_next_n - x_n) + phi(x_n - x_next_{n-1})
            - psi_0(x_{n+1} - x_n) + psi_0(x_n - x_{n-1})
        = psi(x_n - x_prev_n) + phi(x_prev_{n+1} - x_n)

    and for the second kind

        phi(x_next_n - x_n) + psi(x_n - x_next_{n-1})
        = phi(x_n - x_prev_n) + psi(x_prev_{n+1} - x_n)
            - psi_0(x_{n+1} - x_n) + psi_0(x_n - x_{n-1})

    with the usual end-term omission when OPEN. The left side is the
    momentum form of the map, so solving proceeds exactly as apply_map
    with the right side in place of p.
    """
    ml = map_legs(family, params, kind.kind, kind.param)
    xp = _layers(x_prev, "x_prev")
    x = _layers(x, "x")
    if xp.shape != x.shape:
        raise InvalidParams("x_prev and x must have equal length")
    n_sites = x.size
    per = boundary is Boundary.PERIODIC
    rhs = np.empty(n_sites)
    for n in range(n_sites):
        nx = (n + 1) % n_sites
        pv = (n - 1) % n_sites
        if kind.kind == "F":
            v = float(ml.psi.value(x[n] - xp[n]))
            if per:
                v += float(ml.phi.value(xp[nx] - x[n]))
            elif n <= n_sites - 2:
                v += float(ml.phi.value(xp[n + 1] - x[n]))
            else:
                v += ml.phi.limit_at_inf
        else:
            v = float(ml.phi.value(x[n] - xp[n]))
            if per:
                v += float(ml.psi.value(xp[nx] - x[n]))
                v -= _psi0_difference(ml.psi_0, x[nx] - x[n], x[n] - x[pv])
            else:
                if n <= n_sites - 2:
                    v += float(ml.psi.value(xp[n + 1] - x[n]))
                    v -= float(ml.psi_0.value(x[n + 1] - x[n]))
                else:
                    v += ml.psi.limit_at_inf - ml.psi_0.limit_at_inf
                if n >= 1:
                    v += float(ml.psi_0.value(x[n] - x[n - 1]))
                else:
                    v += ml.psi_0.limit_at_inf
        rhs[n] = v
    return apply_map(family, params, kind, ChainState(x, rhs, boundary),
                     window=window, n_grid=n_grid)


def evolve(family: FamilyId, params: FamilyParams, kind: MapKind, x, p,
           boundary: Boundary, steps: int, window: float = 20.0,
           n_grid: int = 4097):
    """Iterate the map, tracking the branch nearest the previous layer.

    Returns the list of states [(x_0, p_0), ..., (x_steps, p_steps)].
    """
    x = _layers(x, "x")
    p = _layers(p, "p")
    out = [(x.copy(), p.copy())]
    ref = x
    for _ in range(steps):
        bs = apply_map(family, params, kind, ChainState(x, p, boundary),
                       window=window, n_grid=n_grid)
        b = bs.nearest(ref)
        ref = b.x_new
        x, p = b.x_new, b.p_new
        out.append((x.copy(), p.copy()))
    return out


def tangent_map(family: FamilyId, params: FamilyParams, kind: MapKind, x, p,
                boundary: Boundary, base: Branch = None,
                h: float = 1e-6) -> np.ndarray:
    """Jacobian of (x, p) -> (X, P) by central differences with branch
    tracking (the branch nearest the base layer is followed).

    Returns the (2N, 2N) matrix in the ordering (x_1..x_N, p_1..p_N).
    """
    x = _layers(x, "x")
    p = _layers(p, "p")
    n_sites = x.size
    if base is None:
        base = apply_map(family, params, kind,
                         ChainState(x, p, boundary)).nearest(x)

    def solve(xv, pv):
        bs = apply_map(family, params, kind, ChainState(xv, pv, boundary))
        b = bs.nearest(base.x_new)
        return np.concatenate([b.x_new, b.p_new])

    dim = 2 * n_sites
    jac = np.empty((dim, dim))
    for col in range(dim):
        dx = np.zeros(n_sites)
        dp = np.zeros(n_sites)
        if col < n_sites:
            dx[col] = h
        else:
            dp[col - n_sites] = h
        plus = solve(x + dx, p + dp)
        minus = solve(x - dx, p - dp)
        jac[:, col] = (plus - minus) / (2.0 * h)
    return jac


def symplectic_form(n_sites: int) -> np.ndarray:
    """The canonical 2-form matrix in the (x, p) block ordering."""
    eye = np.eye(n_sites)
    zero = np.zeros((n_sites, n_sites))
    return np.block([[zero, eye], [-eye, zero]])


# ---------------------------------------------------------------------------
# feasible random states
# ---------------------------------------------------------------------------


def _shrink_intervals(dom, margin):
    out = []
    for a, b in dom:
        aa = a + margin if np.isfinite(a) else a
        bb = b - margin if np.isfinite(b) else b
        if aa < bb:
            out.append((aa, bb))
    return tuple(out)


def _reflect_intervals(dom, c):
    """The set {c - t : t in dom}."""
    return tuple(sorted((c - b, c - a) for a, b in dom))


def _shift_intervals(dom, c):
    return tuple((a + c, b + c) for a, b in dom)


def _intersect_intervals(d1, d2):
    out = []
    for a, b in d1:
        for c, d in d2:
            lo, hi = max(a, c), min(b, d)
            if lo < hi:
                out.append((lo, hi))
    return tuple(sorted(out))


def _sample_intervals(rng, dom, lo=-2.5, hi=2.5):
    clipped = [(max(a, lo), min(b, hi)) for a, b in dom
               if max(a, lo) < min(b, hi)]
    if not clipped:
        return None
    w = np.array([b - a for a, b in clipped])
    i = int(rng.choice(len(clipped), p=w / w.sum()))
    a, b = clipped[i]
    return float(rng.uniform(a, b))


def random_pair_state(family: FamilyId, params: FamilyParams, kind: MapKind,
                      n_sites: int, boundary: Boundary, rng,
                      margin: float = 0.25, tries: int = 4000):
    """A random state lying on a known branch of the map.

    Draws a base layer x with increments on the psi_0 domain, then builds
    the offset layer X site by site, sampling each X_n - x_n uniformly
    from the interval intersection of every leg-domain constraint that
    touches it (the map's own leg, the coupling leg on the neighbour
    difference, and for G-kind the psi_0 chain on X increments). The
    returned (x, X, p, P) therefore lies on a branch by construction.
    """
    ml = map_legs(family, params, kind.kind, kind.param)
    per = boundary is Boundary.PERIODIC
    own = ml.psi if kind.kind == "F" else ml.phi
    coupling = ml.phi if kind.kind == "F" else ml.psi

    # sample from the positive-ratio components of signed legs so that
    # every momentum below is a plain sum of leg values
    own_dom = _shrink_intervals(_pos_dom(own), margin)
    cpl_dom = _shrink_intervals(_pos_dom(coupling), margin)
    psi0_dom = _shrink_intervals(_pos_dom(ml.psi_0), margin)

    for _ in range(tries):
        if n_sites > 1:
            d = ml.psi_0.sample_domain(rng, n_sites, lo=-2.5, hi=2.5,
                                       margin=margin,
                                       intervals=_pos_dom(ml.psi_0))
            if per:
                d = d - d.mean()
            x = np.concatenate([[0.0], np.cumsum(d[: n_sites - 1])])
            steps = np.diff(x)
            if per:
                steps = np.append(steps, x[0] - x[-1])
            # mean subtraction can push a step off-domain; redraw if so
            if not _within(steps, _pos_dom(ml.psi_0), margin):
                continue
        else:
            x = np.array([0.0])
            steps = np.array([0.0]) if per else np.array([])
        x = x + rng.uniform(-0.5, 0.5)

        u = np.empty(n_sites)
        feasible = True
        for n in range(n_sites):
            dom_n = own_dom
            if per or n <= n_sites - 2:
                dom_n = _intersect_intervals(
                    dom_n, _reflect_intervals(cpl_dom, steps[n]))
            if kind.kind == "G" and n_sites > 1:
                if n >= 1:
                    dom_n = _intersect_intervals(
                        dom_n,
                        _shift_intervals(psi0_dom, u[n - 1] - steps[n - 1]))
                if per and n == n_sites - 1:
                    dom_n = _intersect_intervals(
                        dom_n,
                        _reflect_intervals(psi0_dom, u[0] + steps[n]))
            draw = _sample_intervals(rng, dom_n)
            if draw is None:
                feasible = False
                break
            u[n] = draw
        if not feasible:
            continue
        X = x + u
        p, P = forward_pair_to_momenta(family, params, kind, x, X, boundary)
        if np.isfinite(p).all() and np.isfinite(P).all():
            return x, X, p, P
    raise NonConvergence(
        f"no feasible random state for {family} {kind} after {tries} draws"
    )
