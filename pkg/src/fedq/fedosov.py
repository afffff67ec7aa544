"""Abelian connection: the generic recursion and the induced-connection fast path.

Weyl degree counts y with weight 1 and hbar with weight 2.  ``r[z]`` is the
degree-z part of the correction r (a 1-form) and ``R[z]`` the degree-z part
of the curvature of γ + r.  The connection 1-form γ is stored as ``A[2]``
so that sums over γ + r become sums over ``A[k]``, k >= 2.

Classified tables use the bracket keys (all indices 1-based, i a spatial
multi-index of length n):

    R first  (i, a, b)      coefficient of y^i dq^a ∧ dp_b
    R second (i, t, a, b)   coefficient of y^i y^{t+n} dq^a ∧ dq^b, a < b
    R third  (u, i, a, b)   coefficient of p_u y^i dq^a ∧ dq^b, a < b
    r first  (i, a)         coefficient of y^i dp_a
    r second (i, t, a)      coefficient of y^i y^{t+n} dq^a
    r third  (u, i, a)      coefficient of p_u y^i dq^a
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import comb

from gmpy2 import mpq

from .geometry import Report, SymplecticConnectionCoeffs, ShapeError, is_induced_shape
from .scalars import Accumulator, Ring, RingElement, StructuralError
from .weyl import (KERNEL_SIGN, WeylSeries, circ, commutator, delta, delta_inv, exterior_d,
                   i_over_hbar)

KINDS = ("first", "second", "third")


class DegreeError(ValueError):
    """Requested degree outside what a state or formula supports."""


# ---------------------------------------------------------------------------
# multi-index helpers


def compositions(total: int, n: int):
    """All length-n tuples of non-negative ints summing to ``total``."""
    if n == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in compositions(total - first, n - 1):
            yield (first,) + rest


def unit(k: int, n: int) -> tuple:
    return tuple(int(x == k) for x in range(1, n + 1))


def madd(a: tuple, b: tuple) -> tuple:
    return tuple(x + y for x, y in zip(a, b))


def msub(a: tuple, b: tuple):
    out = tuple(x - y for x, y in zip(a, b))
    return out if min(out) >= 0 else None


def sub_indices(i: tuple, lo: int, hi: int):
    """Multi-indices g <= i (componentwise) with lo <= |g| <= hi."""
    for total in range(lo, hi + 1):
        for g in compositions(total, len(i)):
            if all(x <= y for x, y in zip(g, i)):
                yield g


# ---------------------------------------------------------------------------
# connection and curvature forms


# Sign of the connection 1-form relative to ½ γ_{ijk} y^i y^j dx^k.  With the
# calibrated kernel and ω^{a,a+n} = +1, (i/ħ)[½γ y y dx, y^i] = +γ^i_{jk} y^j dx^k;
# the covariant derivative needs the opposite sign.
GAMMA_FORM_SIGN = -KERNEL_SIGN


def gamma_one_form(gamma: SymplecticConnectionCoeffs) -> WeylSeries:
    """±½ γ_{ijk} y^i y^j dx^k as a degree-2 series (sign GAMMA_FORM_SIGN)."""
    ring = gamma.ring
    N = 2 * ring.n
    out = WeylSeries(ring, 2)
    half = mpq(GAMMA_FORM_SIGN, 2)
    for k in range(1, N + 1):
        for i in range(1, N + 1):
            for j in range(i, N + 1):
                c = gamma.get(i, j, k)
                if not c:
                    continue
                y = [0] * N
                y[i - 1] += 1
                y[j - 1] += 1
                out._add_term((0, tuple(y), (k,)), c.scale(half if i == j else 2 * half))
    return out


def hbar_product(a: WeylSeries, b: WeylSeries, deg: int) -> WeylSeries:
    """(i/ħ) (a∘b)_odd at Weyl degree ``deg``: the part surviving in (i/2ħ)[a, b]."""
    return i_over_hbar(circ(a, b, deg + 2, odd_only=True)).degree_part(deg).with_cap(deg)


def curvature_two_form(gform: WeylSeries) -> WeylSeries:
    """R_γ = dγ + (i/ħ) γ∘γ (degree 2)."""
    return (exterior_d(gform) + hbar_product(gform, gform, 2)).with_cap(2)


# ---------------------------------------------------------------------------
# classification


def _split_y(j: tuple, n: int):
    return j[:n], j[n:]


def classify_two_form(series: WeylSeries) -> tuple:
    """Return ({kind: table}, leftover series)."""
    ring = series.ring
    n = ring.n
    tables = {k: {} for k in KINDS}
    left = WeylSeries(ring, series.cap)
    for (k, j, form), c in series.terms.items():
        ys, ym = _split_y(j, n)
        ok = False
        if k == 0 and len(form) == 2:
            a, b = form
            if a <= n < b and not any(ym) and c.p_degree() == 0:
                tables["first"][(ys, a, b - n)] = c
                ok = True
            elif b <= n and sum(ym) == 1 and c.p_degree() == 0:
                t = ym.index(1) + 1
                tables["second"][(ys, t, a, b)] = c
                ok = True
            elif b <= n and not any(ym) and c.p_degrees() == {1}:
                for pe, cc in c.split_p().items():
                    tables["third"][(pe.index(1) + 1, ys, a, b)] = cc
                ok = True
        if not ok:
            left._add_term((k, j, form), c)
    return tables, left


def classify_one_form(series: WeylSeries) -> tuple:
    ring = series.ring
    n = ring.n
    tables = {k: {} for k in KINDS}
    left = WeylSeries(ring, series.cap)
    for (k, j, form), c in series.terms.items():
        ys, ym = _split_y(j, n)
        ok = False
        if k == 0 and len(form) == 1:
            (a,) = form
            if a > n and not any(ym) and c.p_degree() == 0:
                tables["first"][(ys, a - n)] = c
                ok = True
            elif a <= n and sum(ym) == 1 and c.p_degree() == 0:
                tables["second"][(ys, ym.index(1) + 1, a)] = c
                ok = True
            elif a <= n and not any(ym) and c.p_degrees() == {1}:
                for pe, cc in c.split_p().items():
                    tables["third"][(pe.index(1) + 1, ys, a)] = cc
                ok = True
        if not ok:
            left._add_term((k, j, form), c)
    return tables, left


def assemble_two_form(ring: Ring, tables: dict, deg: int) -> WeylSeries:
    n = ring.n
    out = WeylSeries(ring, deg)
    zero_m = (0,) * n
    for (i, a, b), c in tables.get("first", {}).items():
        out._add_term((0, i + zero_m, (a, b + n)), c)
    for (i, t, a, b), c in tables.get("second", {}).items():
        out._add_term((0, i + unit(t, n), (a, b)), c)
    for (u, i, a, b), c in tables.get("third", {}).items():
        out._add_term((0, i + zero_m, (a, b)), c * ring.p(u))
    return out


def assemble_one_form(ring: Ring, tables: dict, deg: int) -> WeylSeries:
    n = ring.n
    out = WeylSeries(ring, deg)
    zero_m = (0,) * n
    for (i, a), c in tables.get("first", {}).items():
        out._add_term((0, i + zero_m, (a + n,)), c)
    for (i, t, a), c in tables.get("second", {}).items():
        out._add_term((0, i + unit(t, n), (a,)), c)
    for (u, i, a), c in tables.get("third", {}).items():
        out._add_term((0, i + zero_m, (a,)), c * ring.p(u))
    return out


# ---------------------------------------------------------------------------
# state


@dataclass
class AbelianState:
    ring: Ring
    gamma: SymplecticConnectionCoeffs
    gform: WeylSeries
    Z: int
    mode: str
    r: dict = field(default_factory=dict)        # z -> WeylSeries, z = 3..Z
    R: dict = field(default_factory=dict)        # z -> WeylSeries, z = 2..Z
    r_tables: dict = field(default_factory=dict)
    R_tables: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.ring.n

    def A(self, z: int) -> WeylSeries:
        """Degree-z part of γ + r."""
        if z == 2:
            return self.gform
        return self.r.get(z, WeylSeries(self.ring, z))

    def r_total(self, cap: int | None = None) -> WeylSeries:
        cap = self.Z if cap is None else cap
        out = WeylSeries(self.ring, cap)
        for z in range(3, min(cap, self.Z) + 1):
            out = out + self.r[z].with_cap(cap)
        return out

    def classify(self):
        """Fill the classified tables from the series; returns leftover terms."""
        left = {}
        for z, s in self.r.items():
            self.r_tables[z], lo = classify_one_form(s)
            if lo:
                left[("r", z)] = lo
        for z, s in self.R.items():
            self.R_tables[z], lo = classify_two_form(s)
            if lo:
                left[("R", z)] = lo
        return left

    def to_json(self) -> dict:
        def dump(tables):
            out = {}
            for z in sorted(tables):
                out[str(z)] = {kind: [{"key": _key_json(key), "coeff": c.to_json()}
                                      for key, c in sorted(tables[z][kind].items(), key=lambda kv: _key_sort(kv[0]))]
                               for kind in KINDS}
            return out
        if not self.r_tables and (self.r or self.R):
            self.classify()
        return {"Z": self.Z, "mode": self.mode, "r": dump(self.r_tables), "R": dump(self.R_tables)}


def _key_json(key):
    return [list(x) if isinstance(x, tuple) else x for x in key]


def _key_sort(key):
    return tuple(tuple(x) if isinstance(x, tuple) else (x,) for x in key)


# ---------------------------------------------------------------------------
# generic recursion


def _curvature_at(state: AbelianState, z: int) -> WeylSeries:
    """R_{γ+r}[z] = d r[z] + (i/ħ) Σ_{a+b=z+2} A[a]∘A[b] (z >= 2)."""
    ring = state.ring
    out = WeylSeries(ring, z)
    if z >= 3:
        out = out + exterior_d(state.A(z)).with_cap(z)
    else:
        out = out + exterior_d(state.gform).with_cap(2)
    for a in range(2, z + 1):
        b = z + 2 - a
        if b < 2 or b > z:
            continue
        Aa, Ab = state.A(a), state.A(b)
        if Aa and Ab:
            out = out + hbar_product(Aa, Ab, z)
    return out


def abelian_generic(gamma: SymplecticConnectionCoeffs, Z: int) -> AbelianState:
    """Solve δr = R_γ + ∂_γ r + (i/ħ) r∘r degree by degree through Z."""
    if Z < 3:
        raise DegreeError("the recursion needs Z >= 3")
    ring = gamma.ring
    gform = gamma_one_form(gamma)
    st = AbelianState(ring, gamma, gform, Z, "generic")
    st.R[2] = curvature_two_form(gform)
    for z in range(3, Z + 1):
        st.r[z] = delta_inv(st.R[z - 1]).with_cap(z)
        if st.r[z].degrees() - {z}:
            raise StructuralError(f"degree bookkeeping broke at r[{z}]")
        st.R[z] = _curvature_at(st, z)
    return st


# ---------------------------------------------------------------------------
# Fedosov derivative and validation


def fedosov_d(a: WeylSeries, state: AbelianState, cap: int | None = None) -> WeylSeries:
    """D a = -δa + ∂_γ a + (i/ħ)[r, a].

    The ω_{ij} y^i dx^j part of the Abelian connection acts as -δ: with the
    calibrated kernel (i/ħ)[ω_{ij} y^i dx^j, ·] equals +δ, and the sign of
    this piece is fixed by requiring D² = 0 under the recursion for r.
    """
    if cap is None:
        cap = a.cap
    ring = state.ring
    out = (-delta(a)).with_cap(cap) + exterior_d(a).with_cap(cap)
    big = cap + 2
    conn = state.gform.with_cap(big) + state.r_total(min(big, state.Z)).with_cap(big)
    if conn:
        out = out + i_over_hbar(commutator(conn, a.with_cap(big), big)).with_cap(cap)
    return WeylSeries(ring, cap, out.terms)


def validate_abelian(state: AbelianState, sections=(), through: int | None = None) -> Report:
    """Defining-equation residual, δR = 0, Bianchi, D² = 0, γ bracket identities."""
    Z = state.Z if through is None else through
    rep = Report()
    for name in ("r_equation", "delta_inv_r", "delta_R", "bianchi", "d_squared", "gamma_identities"):
        rep.record(name, True)
    ring = state.ring
    gform = state.gform
    RG = state.R[2]
    # δr[z] = (R_γ + ∂_γ r + (i/ħ) r∘r)[z-1]
    for z in range(3, Z + 1):
        w = z - 1
        rhs = WeylSeries(ring, w)
        if w == 2:
            rhs = rhs + RG
        if w >= 3:
            rw = state.r[w]
            rhs = rhs + exterior_d(rw).with_cap(w) + i_over_hbar(commutator(gform.with_cap(w + 2), rw.with_cap(w + 2), w + 2)).with_cap(w)
        for a in range(3, w):
            b = w + 2 - a
            if 3 <= b < w:
                rhs = rhs + hbar_product(state.r[a], state.r[b], w)
        res = delta(state.r[z]).with_cap(w) - rhs
        if res:
            rep.record("r_equation", False, z)
        if delta_inv(state.r[z]):
            rep.record("delta_inv_r", False, z)
    for z in range(2, Z + 1):
        if delta(state.R[z]):
            rep.record("delta_R", False, z)
    # dR + (i/ħ)[γ + r, R] = 0 at each degree w
    for w in range(2, Z + 1):
        tot = exterior_d(state.R[w]).with_cap(w)
        for a in range(2, w + 1):
            b = w + 2 - a
            if 2 <= b <= w and state.A(a) and state.R[b]:
                tot = tot + i_over_hbar(commutator(state.A(a).with_cap(w + 2), state.R[b].with_cap(w + 2), w + 2)).with_cap(w)
        if tot:
            rep.record("bianchi", False, w)
    for a in sections:
        lim = min(Z - 2, a.cap - 2)
        if lim < 0:
            continue
        dd = fedosov_d(fedosov_d(a, state, a.cap), state, a.cap - 1).truncate(lim)
        if dd:
            rep.record("d_squared", False, min(dd.degrees()))
    rep.merge(gamma_bracket_identities(state))
    return rep


def gamma_bracket_identities(state: AbelianState) -> Report:
    """Relations among γ-form components forced by total symmetry of γ_{ijk}."""
    n = state.n
    rep = Report()
    rep.record("gamma_identities", True)
    tabs, left = classify_one_form(state.gform)
    if left:
        rep.record("gamma_identities", False, "unclassified γ terms")
        return rep
    g1, g2, g3 = tabs["first"], tabs["second"], tabs["third"]
    z = state.ring.zero()
    for a in range(1, n + 1):
        for b in range(1, n + 1):
            for t in range(1, n + 1):
                if g2.get((unit(a, n), t, b), z) != g2.get((unit(b, n), t, a), z):
                    rep.record("gamma_identities", False, ("second", a, b, t))
    for i in compositions(1, n):
        for a in range(1, n + 1):
            for t in range(1, n + 1):
                lhs = g2.get((i, t, a), z)
                rhs = g1.get((madd(i, unit(a, n)), t), z).scale(i[a - 1] + 1)
                if lhs != rhs:
                    rep.record("gamma_identities", False, ("first-second", i, t, a))
    for i in compositions(2, n):
        for a in range(1, n + 1):
            for b in range(a + 1, n + 1):
                if not i[b - 1]:
                    continue
                j = list(i)
                j[a - 1] += 1
                j[b - 1] -= 1
                for u in range(1, n + 1):
                    lhs = g3.get((u, i, a), z)
                    rhs = g3.get((u, tuple(j), b), z).scale(mpq(i[a - 1] + 1, i[b - 1]))
                    if lhs != rhs:
                        rep.record("gamma_identities", False, ("third", u, i, a, b))
    return rep


# ---------------------------------------------------------------------------
# fast path for induced connections


def second_kind_from_first(R1: dict, z: int, n: int, ring: Ring) -> dict:
    """R[0|i|t|a,b] = (i_b+1) R[0|i+e_b|0|a,t+n] - (i_a+1) R[0|i+e_a|0|b,t+n], |i| = z-1."""
    out = {}
    zero = ring.zero()
    for i in compositions(z - 1, n):
        for t in range(1, n + 1):
            for a in range(1, n + 1):
                for b in range(a + 1, n + 1):
                    v = (R1.get((madd(i, unit(b, n)), a, t), zero).scale(i[b - 1] + 1)
                         - R1.get((madd(i, unit(a, n)), b, t), zero).scale(i[a - 1] + 1))
                    if v:
                        out[(i, t, a, b)] = v
    return out


def second_kind_identity_check(R2: dict, z: int, n: int, ring: Ring) -> Report:
    """Three-spatial-index conditions on the second kind (nontrivial for n >= 3)."""
    rep = Report()
    rep.record("three_index", True)
    if n < 3 or z < 2:
        return rep
    zero = ring.zero()
    for i in compositions(z - 2, n):
        for t in range(1, n + 1):
            for a, b, k in combinations(range(1, n + 1), 3):
                v = (R2.get((madd(i, unit(a, n)), t, b, k), zero).scale(i[a - 1] + 1)
                     - R2.get((madd(i, unit(b, n)), t, a, k), zero).scale(i[b - 1] + 1)
                     + R2.get((madd(i, unit(k, n)), t, a, b), zero).scale(i[k - 1] + 1))
                if v:
                    rep.record("three_index", False, (i, t, a, b, k))
    return rep


def _r_first(R1: dict, z: int, n: int, ring: Ring) -> dict:
    """r[0|i|0|a+n], |i| = z+1, from first-kind R at degree z."""
    out = {}
    zero = ring.zero()
    f = mpq(1, z + 2)
    for i in compositions(z + 1, n):
        for a in range(1, n + 1):
            v = zero
            for s in range(1, n + 1):
                if i[s - 1]:
                    v = v + R1.get((msub(i, unit(s, n)), s, a), zero)
            if v:
                out[(i, a)] = v.scale(f)
    return out


def _r_second(r1: dict, R1: dict, z: int, n: int, ring: Ring) -> dict:
    """r[0|i|t|a] = (i_a+1) r[0|i+e_a|0|t+n] - R[0|i|0|a,t+n], |i| = z."""
    out = {}
    zero = ring.zero()
    for i in compositions(z, n):
        for t in range(1, n + 1):
            for a in range(1, n + 1):
                v = r1.get((madd(i, unit(a, n)), t), zero).scale(i[a - 1] + 1) - R1.get((i, a, t), zero)
                if v:
                    out[(i, t, a)] = v
    return out


def _R3_get(R3: dict, u: int, i: tuple, a: int, b: int, zero):
    if a == b or i is None:
        return zero
    if a < b:
        return R3.get((u, i, a, b), zero)
    return -R3.get((u, i, b, a), zero)


def _r_third(R3: dict, z: int, n: int, ring: Ring) -> dict:
    """r[u|i|0|a], |i| = z+1, by the three cases on the largest occupied index."""
    out = {}
    zero = ring.zero()
    f = mpq(1, z + 2)
    for i in compositions(z + 1, n):
        occ = [s for s in range(1, n + 1) if i[s - 1]]
        su = occ[-1]
        for u in range(1, n + 1):
            for a in range(1, n + 1):
                if su <= a:
                    v = zero
                    for s in occ:
                        if s == a:
                            continue
                        v = v + _R3_get(R3, u, msub(i, unit(s, n)), s, a, zero)
                    v = v.scale(f)
                    if v:
                        out[(u, i, a)] = v
        for u in range(1, n + 1):
            for a in range(1, su):
                j = madd(msub(i, unit(su, n)), unit(a, n))
                v = (out.get((u, j, su), zero).scale(mpq(i[a - 1] + 1, i[su - 1]))
                     - _R3_get(R3, u, msub(i, unit(su, n)), a, su, zero).scale(mpq(1, i[su - 1])))
                if v:
                    out[(u, i, a)] = v
    return out


def _conv_first(st_tabs, z: int, i: tuple, a: int, b: int, n: int, zero, bs: int):
    """The three convolution sums in the first-kind curvature iteration, separately.

    Slot 0 pairs γ (|g| = 1) with r, slot 1 pairs r with γ (|g| = z-1), slot 2
    is the r·r part.
    """
    ring = zero.ring
    sums = [Accumulator(ring) for _ in range(3)]
    for g in sub_indices(i, 1, z - 1):
        dg = sum(g)
        slot = 0 if dg == 1 else (1 if dg == z - 1 else 2)
        rest = msub(i, g)
        left_tab = st_tabs(dg + 1)["first"]
        right_tab = st_tabs(z - dg + 1)["second"]
        for m in range(1, n + 1):
            x = left_tab.get((madd(g, unit(m, n)), b))
            if not x:
                continue
            y = right_tab.get((rest, m, a))
            if y:
                sums[slot].addmul(x, y, (g[m - 1] + 1) * bs)
    return [acc.result() for acc in sums]


def first_kind_iterate(tabs, z: int, n: int, ring: Ring, bs: int | None = None) -> tuple:
    """First-kind R at degree z >= 2 and the per-sum audit.

    At z = 2 the tables are those of the γ-form and the result is the first
    kind of the curvature 2-form.
    """
    if z < 2:
        raise DegreeError("the first-kind iteration starts at degree 2")
    if bs is None:
        bs = -KERNEL_SIGN
    zero = ring.zero()
    r1, r3 = tabs(z)["first"], tabs(z)["third"]
    out, audit = {}, {}
    for i in compositions(z, n):
        for a in range(1, n + 1):
            for b in range(1, n + 1):
                v = r1.get((i, b), zero).derive(a) - r3.get((b, i, a), zero)
                sums = _conv_first(tabs, z, i, a, b, n, zero, bs)
                tot = v + sums[0] + sums[1] + sums[2]
                if tot:
                    out[(i, a, b)] = tot
                if any(sums):
                    audit[(i, a, b)] = sums
    return out, audit


# Whether the six-sum third-kind formula includes the spatial
# derivatives of the first kind coming from d R in the Bianchi identity.
APPENDIX_DERIVATIVES = True


def appendix_third_kind(tabs, Rtabs, z: int, n: int, ring: Ring, bs: int | None = None,
                        derivatives: bool | None = None) -> tuple:
    """Third-kind R at degree z > 2 from first/second-kind R and γ + r (Bianchi identity)."""
    if z <= 2:
        raise DegreeError("third-kind formula needs z > 2; degree 2 comes from the curvature 2-form")
    if bs is None:
        bs = -KERNEL_SIGN
    if derivatives is None:
        derivatives = APPENDIX_DERIVATIVES
    zero = ring.zero()
    out, audit = {}, {}
    for i in compositions(z, n):
        for a in range(1, n + 1):
            for b in range(a + 1, n + 1):
                for u in range(1, n + 1):
                    acc = [Accumulator(ring) for _ in range(6)]
                    for s in sub_indices(i, 1, z - 1):
                        ds = sum(s)
                        rest = msub(i, s)
                        R1 = Rtabs(ds + 1)["first"]
                        A2 = tabs(z - ds + 1)["second"]
                        R2 = Rtabs(ds + 1)["second"]
                        A1 = tabs(z - ds + 1)["first"]
                        lo = 0 if ds == z - 1 else 1
                        for l in range(1, n + 1):
                            sl = madd(s, unit(l, n))
                            x = R1.get((sl, a, u))
                            if x:
                                y = A2.get((rest, l, b))
                                if y:
                                    acc[lo].addmul(x, y, s[l - 1] + 1)
                            x = R1.get((sl, b, u))
                            if x:
                                y = A2.get((rest, l, a))
                                if y:
                                    acc[2 + lo].addmul(x, y, -(s[l - 1] + 1))
                            x = R2.get((s, l, a, b))
                            if x:
                                y = A1.get((madd(rest, unit(l, n)), u))
                                if y:
                                    acc[4 + lo].addmul(x, y, rest[l - 1] + 1)
                    parts = [x.result() for x in acc]
                    tot = sum(parts, zero).scale(bs)
                    if derivatives:
                        R1z = Rtabs(z)["first"]
                        tot = tot - R1z.get((i, b, u), zero).derive(a) + R1z.get((i, a, u), zero).derive(b)
                    if tot:
                        out[(u, i, a, b)] = tot
                    if any(parts):
                        audit[(u, i, a, b)] = [p.scale(bs) for p in parts]
    return out, audit


def abelian_induced_fast(gamma: SymplecticConnectionCoeffs, Z: int) -> AbelianState:
    """The per-degree loop over classified tables for an induced connection."""
    if not is_induced_shape(gamma):
        raise ShapeError("fast path needs an induced connection")
    if Z < 3:
        raise DegreeError("the recursion needs Z >= 3")
    ring = gamma.ring
    n = ring.n
    gform = gamma_one_form(gamma)
    st = AbelianState(ring, gamma, gform, Z, "induced-fast")
    gt, left = classify_one_form(gform)
    if left:
        raise ShapeError("γ-form has terms outside the three kinds")
    RG = curvature_two_form(gform)
    Rt2, left = classify_two_form(RG)
    if left:
        raise ShapeError("curvature 2-form has terms outside the three kinds")
    st.R[2] = RG
    st.R_tables[2] = Rt2
    tabs = lambda d: gt if d == 2 else st.r_tables[d]
    Rtabs = lambda d: st.R_tables[d]
    st.audit = {"first_kind_sums": {}, "third_kind_sums": {}}
    for z in range(2, Z):
        Rt = st.R_tables[z]
        r1 = _r_first(Rt["first"], z, n, ring)
        r2 = _r_second(r1, Rt["first"], z, n, ring)
        r3 = _r_third(Rt["third"], z, n, ring)
        zp = z + 1
        st.r_tables[zp] = {"first": r1, "second": r2, "third": r3}
        st.r[zp] = assemble_one_form(ring, st.r_tables[zp], zp)
        R1, aud1 = first_kind_iterate(tabs, zp, n, ring)
        R2 = second_kind_from_first(R1, zp, n, ring)
        st.R_tables[zp] = {"first": R1, "second": R2, "third": {}}
        R3, aud3 = appendix_third_kind(tabs, Rtabs, zp, n, ring)
        st.R_tables[zp]["third"] = R3
        st.R[zp] = assemble_two_form(ring, st.R_tables[zp], zp)
        st.audit["first_kind_sums"][zp] = aud1
        st.audit["third_kind_sums"][zp] = aud3
    return st


# ---------------------------------------------------------------------------
# structural validators


def third_kind_dependencies(R3: dict, z: int, n: int, ring: Ring) -> Report:
    """Blocks of third-kind coefficients, the two-term relation and block ranks."""
    rep = Report()
    for name in ("relation", "block_rank", "independent_count", "class_count"):
        rep.record(name, True)
    zero = ring.zero()
    independent = 0
    for u in range(1, n + 1):
        for blk in compositions(z + 2, n):
            S = [s for s in range(1, n + 1) if blk[s - 1]]
            if len(S) < 2:
                continue
            f = len(S) - 2
            top = S[-1]
            independent += f + 1
            members = list(combinations(S, 2))

            def coef(a, b):
                return _R3_get(R3, u, msub(blk, madd(unit(a, n), unit(b, n))), a, b, zero)

            for j, k in combinations(S[:-1], 2):
                lhs = coef(j, k)
                rhs = (coef(j, top).scale(mpq(blk[k - 1], blk[top - 1]))
                       - coef(k, top).scale(mpq(blk[j - 1], blk[top - 1])))
                if lhs != rhs:
                    rep.record("relation", False, (u, blk, j, k))
            # δR = 0 restricted to the block: one equation per triple
            rows = []
            for trip in combinations(S, 3):
                row = []
                for (a, b) in members:
                    if a in trip and b in trip:
                        c = next(x for x in trip if x not in (a, b))
                        m = msub(blk, madd(unit(a, n), unit(b, n)))
                        # y^m dq^a∧dq^b → m_c y^{m-e_c} dq^c∧dq^a∧dq^b
                        sign = _perm_sign_tuple((c, a, b))
                        row.append(Fraction(m[c - 1] * sign))
                    else:
                        row.append(Fraction(0))
                rows.append(row)
            expected = comb(f + 1, 2)
            if _rank(rows) != expected:
                rep.record("block_rank", False, (u, blk))
            dep_cols = [idx for idx, (a, b) in enumerate(members) if b != top]
            if _rank([[row[c] for c in dep_cols] for row in rows]) != len(dep_cols):
                rep.record("block_rank", False, (u, blk, "dependent set"))
    if n >= 2 and independent != n * (z + 1) * comb(n + z, z + 2):
        rep.record("independent_count", False, (independent, n * (z + 1) * comb(n + z, z + 2)))
    slots = n * comb(z + n - 1, z) * comb(n, 2)
    if len(third_kind_slots(z, n)) != slots:
        rep.record("class_count", False, slots)
    return rep


def _perm_sign_tuple(t) -> int:
    s = 1
    for x in range(len(t)):
        for y in range(x + 1, len(t)):
            if t[x] > t[y]:
                s = -s
    return s


def _rank(rows) -> int:
    M = [list(r) for r in rows]
    if not M:
        return 0
    rank, cols = 0, len(M[0])
    for c in range(cols):
        piv = next((r for r in range(rank, len(M)) if M[r][c] != 0), None)
        if piv is None:
            continue
        M[rank], M[piv] = M[piv], M[rank]
        for r in range(len(M)):
            if r != rank and M[r][c] != 0:
                f = M[r][c] / M[rank][c]
                M[r] = [x - f * y for x, y in zip(M[r], M[rank])]
        rank += 1
    return rank


def third_kind_slots(z: int, n: int) -> list:
    return [(u, i, a, b) for u in range(1, n + 1) for i in compositions(z, n)
            for a, b in combinations(range(1, n + 1), 2)]


def class_slots(z: int, n: int) -> dict:
    """Slot counts of the curvature classes at degree z and of r at degree z+1."""
    return {
        "R_first": len(list(compositions(z, n))) * n * n,
        "R_second": len(list(compositions(z - 1, n))) * n * comb(n, 2),
        "R_third": len(third_kind_slots(z, n)),
        "r_first": len(list(compositions(z + 1, n))) * n,
        "r_second": len(list(compositions(z, n))) * n * n,
        "r_third": len(list(compositions(z + 1, n))) * n * n,
    }


def class_formulas(z: int, n: int) -> dict:
    return {
        "R_first": n * n * comb(z + n - 1, z),
        "R_second": n * comb(z + n - 2, z - 1) * comb(n, 2),
        "R_third": n * comb(z + n - 1, z) * comb(n, 2),
        "r_first": n * comb(z + n, z + 1),
        "r_second": n * n * comb(z + n - 1, z),
        "r_third": n * n * comb(z + n, z + 1),
    }


def class_counts(state: AbelianState, z: int) -> dict:
    """Slots vs nonzero entries per class; slots are checked against the formulas."""
    if not state.R_tables:
        state.classify()
    n = state.n
    slots = class_slots(z, n)
    formulas = class_formulas(z, n)
    nonzero = {}
    Rt = state.R_tables.get(z)
    if Rt is not None:
        nonzero.update({f"R_{k}": len(Rt[k]) for k in KINDS})
    rt = state.r_tables.get(z + 1)
    if rt is not None:
        nonzero.update({f"r_{k}": len(rt[k]) for k in KINDS})
    return {"slots": slots, "formulas": formulas, "nonzero": nonzero,
            "match": all(slots[k] == formulas[k] for k in slots)}


def structural_report(state: AbelianState, riemannian: bool = False) -> Report:
    """ħ-free and p-free tables, vanishing families, optional Riemannian simplifications."""
    rep = Report()
    for name in ("classified", "hbar_free", "p_free", "R_pure_monomial", "r_first_pure",
                 "r_second_pure", "r_third_pure"):
        rep.record(name, True)
    left = state.classify() if not state.R_tables or state.mode == "generic" else {}
    if state.mode != "generic":
        for z, s in state.r.items():
            _, lo = classify_one_form(s)
            if lo:
                left[("r", z)] = lo
        for z, s in state.R.items():
            _, lo = classify_two_form(s)
            if lo:
                left[("R", z)] = lo
    if left:
        rep.record("classified", False, sorted(left))
    for z, s in list(state.r.items()) + list(state.R.items()):
        if not s.hbar_free():
            rep.record("hbar_free", False, z)
    n = state.n
    zero = state.ring.zero()
    for tabs in list(state.r_tables.values()) + list(state.R_tables.values()):
        for kind in KINDS:
            for key, c in tabs[kind].items():
                if c.p_degree():
                    rep.record("p_free", False, (kind, key))
    for z, Rt in state.R_tables.items():
        for a in range(1, n + 1):
            for t in range(1, n + 1):
                if Rt["first"].get((tuple(z * x for x in unit(a, n)), a, t), zero):
                    rep.record("R_pure_monomial", False, (z, a, t))
    for z, rt in state.r_tables.items():
        for a in range(1, n + 1):
            for b in range(1, n + 1):
                if rt["first"].get((tuple(z * x for x in unit(b, n)), a), zero):
                    rep.record("r_first_pure", False, (z, a, b))
                if rt["second"].get((tuple((z - 1) * x for x in unit(b, n)), a, b), zero):
                    rep.record("r_second_pure", False, (z, a, b))
                if rt["third"].get((a, tuple(z * x for x in unit(b, n)), b), zero):
                    rep.record("r_third_pure", False, (z, a, b))
    if riemannian:
        rep.record("riemannian_r_first", True)
        rep.record("riemannian_r_second", True)
        for z, rt in state.r_tables.items():
            if rt["first"]:
                rep.record("riemannian_r_first", False, z)
            Rt = state.R_tables.get(z - 1)
            if Rt is None:
                continue
            keys = set(rt["second"]) | {(i, t, a) for (i, a, t) in Rt["first"]}
            for (i, t, a) in keys:
                if rt["second"].get((i, t, a), zero) != -Rt["first"].get((i, a, t), zero):
                    rep.record("riemannian_r_second", False, (z, i, t, a))
    return rep


def states_equal(a: AbelianState, b: AbelianState) -> tuple:
    """Term-by-term comparison; returns (equal, first differing (kind, degree))."""
    for z in range(3, min(a.Z, b.Z) + 1):
        if a.r[z] != b.r[z]:
            return False, ("r", z)
    for z in range(2, min(a.Z, b.Z) + 1):
        if a.R[z] != b.R[z]:
            return False, ("R", z)
    return True, None
