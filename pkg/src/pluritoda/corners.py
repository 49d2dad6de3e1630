"""Pairwise consistency of commuting maps on one elementary square.

The two map directions span a square of layers (x, x_t, x_h, x_th).
Corner equations state that the momenta induced along its edges agree;
superposition formulae rebuild the double layer x_th from the other
three without any shooting; commutativity_check compares the composite
maps branch by branch.
"""

from dataclasses import dataclass

import numpy as np

from .backlund import (
    Boundary,
    ChainState,
    MapKind,
    _layers,
    apply_map,
    forward_pair_to_momenta,
    lagrangian_value,
)
from .errors import (
    DomainViolation,
    InvalidParams,
    MatchingFailed,
    NoBranch,
    NonConvergence,
    NoRoot,
    PrerequisiteViolated,
)
from .legs import FamilyId, FamilyParams, cross_leg, invert_leg, map_legs

__all__ = [
    "PairKind",
    "CornerData",
    "CornerResiduals",
    "CommutativityReport",
    "corner_residuals",
    "superposition",
    "superposition_residuals",
    "square_closure",
    "commutativity_check",
]


@dataclass(frozen=True)
class PairKind:
    """Two commuting maps: kind 'FF', 'GG' or 'FG' at (param_1, param_2).

    The first map acts in the tilde direction and the second in the hat
    direction; for 'FG' the first-kind map takes the tilde. Same-kind
    pairs need two distinct parameters, the mixed pair does not.
    """

    kind: str
    param_1: float
    param_2: float

    def __post_init__(self):
        if self.kind not in ("FF", "GG", "FG"):
            raise InvalidParams(
                f"pair kind must be 'FF', 'GG' or 'FG', got {self.kind!r}")
        if self.kind != "FG" and self.param_1 == self.param_2:
            raise InvalidParams(
                f"{self.kind} pair needs two distinct parameters")

    @property
    def first(self) -> MapKind:
        return MapKind(self.kind[0], self.param_1)

    @property
    def second(self) -> MapKind:
        return MapKind(self.kind[1], self.param_2)


@dataclass(frozen=True)
class CornerData:
    """The four layers of one elementary square of two map directions."""

    x: np.ndarray
    x_t: np.ndarray
    x_h: np.ndarray
    x_th: np.ndarray
    boundary: Boundary

    def __post_init__(self):
        for name in ("x", "x_t", "x_h", "x_th"):
            object.__setattr__(self, name, _layers(getattr(self, name), name))
        shapes = {self.x.shape, self.x_t.shape, self.x_h.shape, self.x_th.shape}
        if len(shapes) != 1:
            raise InvalidParams("all four layers must have equal length")
        if not isinstance(self.boundary, Boundary):
            raise InvalidParams(f"not a boundary mode: {self.boundary!r}")

    @property
    def n_sites(self) -> int:
        return self.x.size


@dataclass(frozen=True)
class CornerResiduals:
    """Left minus right of the four corner equations at every site."""

    e: np.ndarray
    e_first: np.ndarray
    e_second: np.ndarray
    e_both: np.ndarray

    def as_tuple(self):
        return (self.e, self.e_first, self.e_second, self.e_both)

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(v)) for v in self.as_tuple()))


def corner_residuals(family: FamilyId, params: FamilyParams, pair: PairKind,
                     data: CornerData) -> CornerResiduals:
    """Momentum mismatches across one elementary square.

    Each corner equation equates two momenta induced on a shared layer:

        e         p of the first map on (x, x_t)     vs p of the second on (x, x_h)
        e_first   P of the first map on (x, x_t)     vs p of the second on (x_t, x_th)
        e_second  P of the second map on (x, x_h)    vs p of the first on (x_h, x_th)
        e_both    P of the first map on (x_h, x_th)  vs P of the second on (x_t, x_th)

    Terms common to both sides cancel in the difference, which reproduces
    the usual reduced per-site form of the equations.
    """
    a, b = pair.first, pair.second
    bd = data.boundary
    p_a, P_a = forward_pair_to_momenta(family, params, a, data.x, data.x_t, bd)
    p_b, P_b = forward_pair_to_momenta(family, params, b, data.x, data.x_h, bd)
    p_bt, P_bt = forward_pair_to_momenta(family, params, b, data.x_t,
                                         data.x_th, bd)
    p_ah, P_ah = forward_pair_to_momenta(family, params, a, data.x_h,
                                         data.x_th, bd)
    return CornerResiduals(p_a - p_b, P_a - p_bt, P_b - p_ah, P_ah - P_bt)


def _all_preimages(f, y):
    """Every solution of f(x) = y reachable on any domain component."""
    roots = []
    for a, b in f.domain:
        aa = max(a, -100.0)
        bb = min(b, 100.0)
        if not aa < bb:
            continue
        for frac in (0.25, 0.75):
            try:
                r = invert_leg(f, y, aa + frac * (bb - aa))
            except (NoRoot, DomainViolation, NonConvergence):
                continue
            if not any(abs(r - s) <= 1e-9 * (1.0 + abs(s)) for s in roots):
                roots.append(r)
    return roots


def _pick_root(leg, val, hint, base, sgn, gap_fn, est_n, n, tol):
    """One double-layer entry from a scalar leg inversion.

    The inverse nearest the hint is kept when a companion residual
    confirms it (or cannot be evaluated there). Otherwise every real
    preimage is enumerated and the companion picks the component; with
    no evaluable companion the candidate nearest the additive estimate
    wins.
    """
    try:
        c = base + sgn * invert_leg(leg, val, hint)
        g = gap_fn(c)
        if not (np.isfinite(g) and g > tol):
            return c
    except (NoRoot, DomainViolation, NonConvergence):
        pass
    scored = []
    prox = []
    for u in _all_preimages(leg, val):
        c = base + sgn * u
        g = gap_fn(c)
        if np.isfinite(g):
            scored.append((g, c))
        prox.append((abs(c - est_n), c))
    if scored:
        return min(scored)[1]
    if prox:
        return min(prox)[1]
    raise NoRoot(f"no real preimage fixes the double layer at site {n}")


def _pair_legs(family, params, pair):
    a, b = pair.first, pair.second
    ml_a = map_legs(family, params, a.kind, a.param)
    ml_b = map_legs(family, params, b.kind, b.param)
    if pair.kind == "FG":
        phi_ab = cross_leg(family, params, "FG", a.param, b.param)
        phi_ba = None
    else:
        phi_ab = cross_leg(family, params, pair.kind, a.param, b.param)
        phi_ba = cross_leg(family, params, pair.kind, b.param, a.param)
    return ml_a, ml_b, phi_ab, phi_ba


def superposition(family: FamilyId, params: FamilyParams, pair: PairKind,
                  formula: int, x, x_t, x_h, boundary: Boundary,
                  tol: float = 1e-6) -> np.ndarray:
    """The double layer x_th from one local superposition formula.

    Every formula fixes x_th[n] by a single scalar leg inversion from the
    three known layers; no shooting is involved. 'FF' and 'GG' admit
    formulas 1..4, 'FG' admits 1..2 (its remaining two identities contain
    no isolated x_th entry and are checked by superposition_residuals).

    On open chains the trailing sites whose stencil would leave the
    lattice are completed from the tilde-layer corner equation instead,
    which is sequential in n but still a plain leg inversion per site.

    Raises PrerequisiteViolated unless the base corner equation holds on
    the inputs to within tol.
    """
    x = _layers(x, "x")
    x_t = _layers(x_t, "x_t")
    x_h = _layers(x_h, "x_h")
    if not (x.shape == x_t.shape == x_h.shape):
        raise InvalidParams("layers must have equal length")
    formula = int(formula)
    if formula not in (1, 2, 3, 4):
        raise InvalidParams(f"formula index must be 1..4, got {formula}")
    if pair.kind == "FG" and formula > 2:
        raise InvalidParams("FG superposition admits formulas 1 and 2 only")

    a, b = pair.first, pair.second
    ml_a, ml_b, phi_ab, phi_ba = _pair_legs(family, params, pair)
    psi_0 = ml_a.psi_0

    p_a, P_a = forward_pair_to_momenta(family, params, a, x, x_t, boundary)
    p_b, P_b = forward_pair_to_momenta(family, params, b, x, x_h, boundary)
    gap = float(np.max(np.abs(p_a - p_b)))
    if gap > tol:
        raise PrerequisiteViolated(
            f"base corner equation violated by {gap:.3g} (tolerance {tol:.3g})")

    n_sites = x.size
    per = boundary is Boundary.PERIODIC
    # hint layer: superpose both single-map shifts additively; the true
    # double layer deviates from it at second order in the shifts
    est = x_t + x_h - x
    x_th = np.empty(n_sites)

    if pair.kind == "FF":

        def parts(n, n1, n2):
            if formula == 1:
                val = (float(psi_0.value(x_t[n1] - x_t[n]))
                       + float(ml_a.phi.value(x[n1] - x_t[n]))
                       - float(phi_ab.value(x_h[n] - x_t[n])))
                return ml_b.psi, val, est[n] - x_t[n], x_t[n], 1.0
            if formula == 2:
                val = (float(psi_0.value(x_h[n1] - x_h[n]))
                       + float(ml_b.phi.value(x[n1] - x_h[n]))
                       - float(phi_ba.value(x_t[n] - x_h[n])))
                return ml_a.psi, val, est[n] - x_h[n], x_h[n], 1.0
            if formula == 3:
                # hint: the same leg argument one hat layer down
                val = (float(ml_a.psi.value(x_t[n1] - x[n1]))
                       + float(phi_ba.value(x_t[n1] - x_h[n1]))
                       - float(psi_0.value(x_t[n1] - x_t[n])))
                return ml_b.phi, val, x[n1] - x_h[n], x_t[n1], -1.0
            val = (float(ml_b.psi.value(x_h[n1] - x[n1]))
                   + float(phi_ab.value(x_h[n1] - x_t[n1]))
                   - float(psi_0.value(x_h[n1] - x_h[n])))
            return ml_a.phi, val, x[n1] - x_t[n], x_h[n1], -1.0

        def partner_gap(n, n1, n2, c):
            # the same-stencil companion identity at candidate c
            if formula == 1:
                return abs(float(ml_a.psi.value_or_nan(c - x_h[n]))
                           + float(phi_ba.value_or_nan(x_t[n] - x_h[n]))
                           - float(psi_0.value_or_nan(x_h[n1] - x_h[n]))
                           - float(ml_b.phi.value_or_nan(x[n1] - x_h[n])))
            if formula == 2:
                return abs(float(ml_b.psi.value_or_nan(c - x_t[n]))
                           + float(phi_ab.value_or_nan(x_h[n] - x_t[n]))
                           - float(psi_0.value_or_nan(x_t[n1] - x_t[n]))
                           - float(ml_a.phi.value_or_nan(x[n1] - x_t[n])))
            if formula == 3:
                return abs(float(ml_b.psi.value_or_nan(x_h[n1] - x[n1]))
                           + float(phi_ab.value_or_nan(x_h[n1] - x_t[n1]))
                           - float(psi_0.value_or_nan(x_h[n1] - x_h[n]))
                           - float(ml_a.phi.value_or_nan(x_h[n1] - c)))
            return abs(float(ml_a.psi.value_or_nan(x_t[n1] - x[n1]))
                       + float(phi_ba.value_or_nan(x_t[n1] - x_h[n1]))
                       - float(psi_0.value_or_nan(x_t[n1] - x_t[n]))
                       - float(ml_b.phi.value_or_nan(x_t[n1] - c)))

    elif pair.kind == "GG":

        def parts(n, n1, n2):
            if formula == 1:
                val = (float(ml_a.psi.value(x[n1] - x_t[n]))
                       + float(phi_ba.value(x_h[n] - x_t[n]))
                       - float(psi_0.value(x_t[n1] - x_t[n])))
                return ml_b.phi, val, est[n] - x_t[n], x_t[n], 1.0
            if formula == 2:
                val = (float(ml_b.psi.value(x[n1] - x_h[n]))
                       + float(phi_ab.value(x_t[n] - x_h[n]))
                       - float(psi_0.value(x_h[n1] - x_h[n])))
                return ml_a.phi, val, est[n] - x_h[n], x_h[n], 1.0
            if formula == 3:
                # hint: the same leg argument one tilde layer down
                val = (float(psi_0.value(x_h[n1] - x_h[n]))
                       + float(ml_b.phi.value(x_h[n1] - x[n1]))
                       - float(phi_ba.value(x_h[n1] - x_t[n1])))
                return ml_a.psi, val, x[n1] - x_t[n], x_h[n1], -1.0
            val = (float(psi_0.value(x_t[n1] - x_t[n]))
                   + float(ml_a.phi.value(x_t[n1] - x[n1]))
                   - float(phi_ab.value(x_t[n1] - x_h[n1])))
            return ml_b.psi, val, x[n1] - x_h[n], x_t[n1], -1.0

        def partner_gap(n, n1, n2, c):
            # the same-stencil companion identity at candidate c
            if formula == 1:
                return abs(float(ml_b.psi.value_or_nan(x[n1] - x_h[n]))
                           + float(phi_ab.value_or_nan(x_t[n] - x_h[n]))
                           - float(psi_0.value_or_nan(x_h[n1] - x_h[n]))
                           - float(ml_a.phi.value_or_nan(c - x_h[n])))
            if formula == 2:
                return abs(float(ml_a.psi.value_or_nan(x[n1] - x_t[n]))
                           + float(phi_ba.value_or_nan(x_h[n] - x_t[n]))
                           - float(psi_0.value_or_nan(x_t[n1] - x_t[n]))
                           - float(ml_b.phi.value_or_nan(c - x_t[n])))
            if formula == 3:
                return abs(float(ml_b.psi.value_or_nan(x_t[n1] - c))
                           + float(phi_ab.value_or_nan(x_t[n1] - x_h[n1]))
                           - float(psi_0.value_or_nan(x_t[n1] - x_t[n]))
                           - float(ml_a.phi.value_or_nan(x_t[n1] - x[n1])))
            return abs(float(ml_a.psi.value_or_nan(x_h[n1] - c))
                       + float(phi_ba.value_or_nan(x_h[n1] - x_t[n1]))
                       - float(psi_0.value_or_nan(x_h[n1] - x_h[n]))
                       - float(ml_b.phi.value_or_nan(x_h[n1] - x[n1])))

    else:

        def parts(n, n1, n2):
            if formula == 1:
                val = (float(ml_b.phi.value(x_h[n1] - x[n1]))
                       + float(psi_0.value(x[n2] - x[n1]))
                       - float(ml_a.psi.value(x_t[n1] - x[n1])))
            else:
                val = (float(psi_0.value(x[n1] - x[n]))
                       + float(ml_a.phi.value(x[n1] - x_t[n]))
                       - float(ml_b.psi.value(x[n1] - x_h[n])))
            return phi_ab, val, x[n1] - est[n], x[n1], -1.0

        def partner_gap(n, n1, n2, c):
            # the other local identity when its stencil fits, else the
            # consequence identity that references the previous site;
            # nan when neither is available
            if formula == 1:
                return abs(float(psi_0.value_or_nan(x[n1] - x[n]))
                           + float(ml_a.phi.value_or_nan(x[n1] - x_t[n]))
                           - float(ml_b.psi.value_or_nan(x[n1] - x_h[n]))
                           - float(phi_ab.value_or_nan(x[n1] - c)))
            if n2 is not None:
                return abs(float(ml_a.psi.value_or_nan(x_t[n1] - x[n1]))
                           + float(phi_ab.value_or_nan(x[n1] - c))
                           - float(ml_b.phi.value_or_nan(x_h[n1] - x[n1]))
                           - float(psi_0.value_or_nan(x[n2] - x[n1])))
            if n >= 1:
                return abs(float(ml_a.psi.value_or_nan(c - x_h[n]))
                           + float(phi_ab.value_or_nan(x[n1] - c))
                           - float(ml_b.phi.value_or_nan(c - x_t[n]))
                           - float(psi_0.value_or_nan(c - x_th[n - 1])))
            return np.nan

    def local(n, n1, n2):
        leg, val, hint, base, sgn = parts(n, n1, n2)
        return _pick_root(leg, val, hint, base, sgn,
                          lambda c: partner_gap(n, n1, n2, c),
                          est[n], n, tol)

    if per:
        for n in range(n_sites):
            x_th[n] = local(n, (n + 1) % n_sites, (n + 2) % n_sites)
        return x_th

    def sweep_gap(n, c):
        # incoming momentum of the first map on the hat layer against
        # the second map's outgoing momentum there
        if pair.kind == "GG":
            g = float(ml_a.phi.value_or_nan(c - x_h[n]))
            if n >= 1:
                g += float(ml_a.psi.value_or_nan(x_h[n] - x_th[n - 1]))
            else:
                g += ml_a.psi.limit_at_inf
        else:
            g = float(ml_a.psi.value_or_nan(c - x_h[n]))
            if n >= 1:
                g += float(ml_a.phi.value_or_nan(x_h[n] - x_th[n - 1]))
                g += float(psi_0.value_or_nan(x_h[n] - x_h[n - 1]))
            else:
                g += ml_a.phi.limit_at_inf + psi_0.limit_at_inf
            if n <= n_sites - 2:
                g -= float(psi_0.value_or_nan(x_h[n + 1] - x_h[n]))
            else:
                g -= psi_0.limit_at_inf
        return abs(g - P_b[n])

    reach = 2 if (pair.kind == "FG" and formula == 1) else 1
    n_local = max(0, n_sites - reach)
    for n in range(n_local):
        x_th[n] = local(n, n + 1, n + 2 if n + 2 < n_sites else None)
    for n in range(n_local, n_sites):
        # trailing sites: the first map's outgoing momentum equals the
        # second map's incoming momentum on the tilde layer
        val = P_a[n]
        if pair.kind == "FF":
            if n >= 1:
                val -= float(ml_b.phi.value(x_t[n] - x_th[n - 1]))
                val -= float(psi_0.value(x_t[n] - x_t[n - 1]))
            else:
                val -= ml_b.phi.limit_at_inf + psi_0.limit_at_inf
            if n <= n_sites - 2:
                val += float(psi_0.value(x_t[n + 1] - x_t[n]))
            else:
                val += psi_0.limit_at_inf
            leg = ml_b.psi
        else:
            if n >= 1:
                val -= float(ml_b.psi.value(x_t[n] - x_th[n - 1]))
            else:
                val -= ml_b.psi.limit_at_inf
            leg = ml_b.phi
        x_th[n] = _pick_root(leg, val, est[n] - x_t[n], x_t[n], 1.0,
                             lambda c: sweep_gap(n, c), est[n], n, tol)
    return x_th


def superposition_residuals(family: FamilyId, params: FamilyParams,
                            pair: PairKind, data: CornerData):
    """Left minus right of the four superposition identities.

    Returns four arrays. Periodic chains evaluate every identity at all
    sites; open chains only at the sites where the identity's stencil
    stays on the lattice, so the arrays may be shorter than the chain
    (and empty for very short chains).
    """
    ml_a, ml_b, phi_ab, phi_ba = _pair_legs(family, params, pair)
    psi_0 = ml_a.psi_0
    x, x_t, x_h, x_th = data.x, data.x_t, data.x_h, data.x_th
    n_sites = data.n_sites
    per = data.boundary is Boundary.PERIODIC

    def v(leg, arg):
        # off-domain arguments yield nan rather than an exception: a
        # matched square is defined by the corner equations, and a given
        # printed identity need not be real-evaluable at every site
        return float(leg.value_or_nan(arg))

    if pair.kind == "FF":

        def r1(n, n1):
            return (v(ml_b.psi, x_th[n] - x_t[n]) + v(phi_ab, x_h[n] - x_t[n])
                    - v(psi_0, x_t[n1] - x_t[n]) - v(ml_a.phi, x[n1] - x_t[n]))

        def r2(n, n1):
            return (v(ml_a.psi, x_th[n] - x_h[n]) + v(phi_ba, x_t[n] - x_h[n])
                    - v(psi_0, x_h[n1] - x_h[n]) - v(ml_b.phi, x[n1] - x_h[n]))

        def r3(n, n1):
            return (v(ml_a.psi, x_t[n1] - x[n1]) + v(phi_ba, x_t[n1] - x_h[n1])
                    - v(psi_0, x_t[n1] - x_t[n]) - v(ml_b.phi, x_t[n1] - x_th[n]))

        def r4(n, n1):
            return (v(ml_b.psi, x_h[n1] - x[n1]) + v(phi_ab, x_h[n1] - x_t[n1])
                    - v(psi_0, x_h[n1] - x_h[n]) - v(ml_a.phi, x_h[n1] - x_th[n]))

        stencils = [(r1, 0, 1), (r2, 0, 1), (r3, 0, 1), (r4, 0, 1)]
    elif pair.kind == "GG":

        def r1(n, n1):
            return (v(ml_a.psi, x[n1] - x_t[n]) + v(phi_ba, x_h[n] - x_t[n])
                    - v(psi_0, x_t[n1] - x_t[n]) - v(ml_b.phi, x_th[n] - x_t[n]))

        def r2(n, n1):
            return (v(ml_b.psi, x[n1] - x_h[n]) + v(phi_ab, x_t[n] - x_h[n])
                    - v(psi_0, x_h[n1] - x_h[n]) - v(ml_a.phi, x_th[n] - x_h[n]))

        def r3(n, n1):
            pv = n - 1 if n >= 1 else n_sites - 1
            return (v(ml_a.psi, x_h[n] - x_th[pv]) + v(phi_ba, x_h[n] - x_t[n])
                    - v(psi_0, x_h[n] - x_h[pv]) - v(ml_b.phi, x_h[n] - x[n]))

        def r4(n, n1):
            pv = n - 1 if n >= 1 else n_sites - 1
            return (v(ml_b.psi, x_t[n] - x_th[pv]) + v(phi_ab, x_t[n] - x_h[n])
                    - v(psi_0, x_t[n] - x_t[pv]) - v(ml_a.phi, x_t[n] - x[n]))

        stencils = [(r1, 0, 1), (r2, 0, 1), (r3, 1, 0), (r4, 1, 0)]
    else:

        def r1(n, n1):
            pv = n - 1 if n >= 1 else n_sites - 1
            return (v(ml_a.psi, x_t[n] - x[n]) + v(phi_ab, x[n] - x_th[pv])
                    - v(ml_b.phi, x_h[n] - x[n]) - v(psi_0, x[n1] - x[n]))

        def r2(n, n1):
            return (v(psi_0, x[n1] - x[n]) + v(ml_a.phi, x[n1] - x_t[n])
                    - v(ml_b.psi, x[n1] - x_h[n]) - v(phi_ab, x[n1] - x_th[n]))

        def r3(n, n1):
            pv = n - 1 if n >= 1 else n_sites - 1
            return (v(psi_0, x_th[n] - x_th[pv]) + v(ml_a.phi, x_h[n] - x_th[pv])
                    - v(ml_b.psi, x_t[n] - x_th[pv]) - v(phi_ab, x[n] - x_th[pv]))

        def r4(n, n1):
            pv = n - 1 if n >= 1 else n_sites - 1
            return (v(ml_a.psi, x_th[n] - x_h[n]) + v(phi_ab, x[n1] - x_th[n])
                    - v(ml_b.phi, x_th[n] - x_t[n]) - v(psi_0, x_th[n] - x_th[pv]))

        stencils = [(r1, 1, 1), (r2, 0, 1), (r3, 1, 0), (r4, 1, 1)]

    out = []
    for fn, back, ahead in stencils:
        if per:
            sites = range(n_sites)
        else:
            sites = range(back, n_sites - ahead)
        out.append(np.array([fn(n, (n + 1) % n_sites) for n in sites]))
    return tuple(out)


def square_closure(family: FamilyId, params: FamilyParams, pair: PairKind,
                   data: CornerData) -> float:
    """Signed sum of the four edge actions around the square.

    On solutions of the corner equations the underlying 1-form is closed,
    so the oriented sum vanishes.
    """
    a, b = pair.first, pair.second
    bd = data.boundary
    return (lagrangian_value(family, params, a, data.x, data.x_t, bd)
            + lagrangian_value(family, params, b, data.x_t, data.x_th, bd)
            - lagrangian_value(family, params, a, data.x_h, data.x_th, bd)
            - lagrangian_value(family, params, b, data.x, data.x_h, bd))


@dataclass(frozen=True)
class CommutativityReport:
    """Outcome of a both-orders comparison.

    first_then_second and second_then_first count the composite branches
    of each order (both 1 on open chains). For periodic chains, pairs
    holds the matched composite index pairs, max_discrepancy the largest
    matched (x, p) gap, min_second_ratio how much farther the runner-up
    candidate stayed (inf when there was a single candidate), and
    superposition_gap the largest mismatch between a matched double layer
    and the one rebuilt by the first superposition formula. squares holds
    one CornerData per matched composite.
    """

    pair: PairKind
    boundary: Boundary
    first_then_second: int
    second_then_first: int
    max_discrepancy: float
    pairs: tuple
    min_second_ratio: float
    superposition_gap: float
    squares: tuple


def commutativity_check(family: FamilyId, params: FamilyParams,
                        pair: PairKind, state: ChainState,
                        threshold: float = 1e-8, second_ratio: float = 10.0,
                        window: float = 20.0,
                        n_grid: int = 4097) -> CommutativityReport:
    """Apply the pair in both orders and compare the composites.

    Open chains carry single-valued maps, so the report holds the plain
    (x, p) max-norm gap between the two orders. Periodic chains are
    double-valued: every composite branch of one order must find exactly
    one partner of the other order within threshold, with the runner-up
    candidate at least second_ratio times farther away; otherwise
    MatchingFailed is raised. Each matched composite is additionally
    verified against the superposition construction.
    """
    a, b = pair.first, pair.second
    boundary = state.boundary

    if boundary is Boundary.OPEN:
        t = apply_map(family, params, a, state, window, n_grid)[0]
        th = apply_map(family, params, b, t.state, window, n_grid)[0]
        h = apply_map(family, params, b, state, window, n_grid)[0]
        ht = apply_map(family, params, a, h.state, window, n_grid)[0]
        gap = max(float(np.max(np.abs(th.x_new - ht.x_new))),
                  float(np.max(np.abs(th.p_new - ht.p_new))))
        square = CornerData(state.x, t.x_new, h.x_new, th.x_new, boundary)
        return CommutativityReport(pair, boundary, 1, 1, gap, (),
                                   np.inf, np.nan, (square,))

    ab = []
    for t in apply_map(family, params, a, state, window, n_grid):
        try:
            for u in apply_map(family, params, b, t.state, window, n_grid):
                ab.append((t, u))
        except NoBranch:
            continue
    ba = []
    for h in apply_map(family, params, b, state, window, n_grid):
        try:
            for w in apply_map(family, params, a, h.state, window, n_grid):
                ba.append((h, w))
        except NoBranch:
            continue
    if len(ab) != len(ba):
        raise MatchingFailed(
            f"{len(ab)} composites of one order against {len(ba)} of the other")
    if not ab:
        raise MatchingFailed("no composite branch survives either order")

    dist = np.empty((len(ab), len(ba)))
    for i, (_, u) in enumerate(ab):
        cu = np.concatenate([u.x_new, u.p_new])
        for j, (_, w) in enumerate(ba):
            dist[i, j] = np.max(np.abs(cu - np.concatenate([w.x_new, w.p_new])))

    pairs = []
    min_ratio = np.inf
    worst = 0.0
    taken = set()
    for i in range(len(ab)):
        order = np.argsort(dist[i])
        j = int(order[0])
        d = float(dist[i, j])
        if d > threshold:
            raise MatchingFailed(
                f"composite {i} has no partner within {threshold:.3g}"
                f" (nearest is {d:.3g} away)")
        if len(order) > 1:
            d2 = float(dist[i, int(order[1])])
            if d2 < second_ratio * d or (d == 0.0 and d2 == 0.0):
                raise MatchingFailed(
                    f"ambiguous pairing for composite {i}:"
                    f" nearest {d:.3g}, runner-up {d2:.3g}")
            min_ratio = min(min_ratio, d2 / d if d > 0 else np.inf)
        if j in taken:
            raise MatchingFailed(f"two composites map to partner {j}")
        taken.add(j)
        pairs.append((i, j))
        worst = max(worst, d)

    gaps = []
    squares = []
    formulas = (1, 2) if pair.kind == "FG" else (1, 2, 3, 4)
    for i, j in pairs:
        t, u = ab[i]
        h, _ = ba[j]
        for f in formulas:
            # any one construction confirms the match; some legs may not
            # be real-invertible at the layer a particular formula needs
            try:
                x_th = superposition(family, params, pair, f, state.x,
                                     t.x_new, h.x_new, boundary)
            except (NoRoot, DomainViolation, NonConvergence):
                continue
            gaps.append(float(np.max(np.abs(x_th - u.x_new))))
            break
        squares.append(CornerData(state.x, t.x_new, h.x_new, u.x_new,
                                  boundary))
    sup_gap = max(gaps) if gaps else np.nan

    return CommutativityReport(pair, boundary, len(ab), len(ba), worst,
                               tuple(pairs), min_ratio, sup_gap,
                               tuple(squares))
