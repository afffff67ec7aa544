"""Graded Weyl-bundle forms: series in hbar, fibre variables y and dx-forms.

A series term is ``hbar**k * y**j * dx^form * coeff`` with ``coeff`` a
RingElement.  Fibre indices run over 1..2n; index n+a pairs with a.  The
degree of a term is ``2k + |j|`` and every series carries a cap on it.
"""
from __future__ import annotations

from functools import lru_cache
from itertools import product as _cartesian
from math import factorial

from gmpy2 import mpq

from .scalars import GaussianRational, Ring, RingElement, StructuralError

# Fibre kernel: K^{a,a+n} = KERNEL_SIGN, K^{a+n,a} = -KERNEL_SIGN.  The value
# is calibrated so that the flat canonical bracket q*p - p*q comes out as
# -i*hbar with the lifting recursion used in quantize.
KERNEL_SIGN = 1

MAX_FORM_DEGREE = 3


class HbarError(ArithmeticError):
    """Division by hbar left a negative hbar exponent."""


def wedge_sign(f: tuple, g: tuple):
    """Return (sign, merged) for dx^f ∧ dx^g, or (0, None) on overlap."""
    if not f:
        return 1, g
    if not g:
        return 1, f
    if set(f) & set(g):
        return 0, None
    inv = 0
    for x in f:
        for y in g:
            if y < x:
                inv += 1
    return (-1 if inv & 1 else 1), tuple(sorted(f + g))


def insert_sign(k: int, form: tuple):
    """Sign and result of dx^k ∧ dx^form (k placed in front)."""
    if k in form:
        return 0, None
    pos = sum(1 for s in form if s < k)
    return (-1 if pos & 1 else 1), tuple(sorted(form + (k,)))


class WeylSeries:
    __slots__ = ("ring", "n", "cap", "terms")

    def __init__(self, ring: Ring, cap: int, terms: dict | None = None):
        self.ring = ring
        self.n = ring.n
        self.cap = cap
        self.terms = {}
        if terms:
            for key, c in terms.items():
                self._add_term(key, c)

    # construction -------------------------------------------------------
    def _add_term(self, key, c):
        k, j, form = key
        if 2 * k + sum(j) > self.cap or not c:
            return
        w = self.terms.get(key)
        if w is None:
            self.terms[key] = c
        else:
            w = w + c
            if w:
                self.terms[key] = w
            else:
                del self.terms[key]

    @classmethod
    def zero(cls, ring: Ring, cap: int) -> "WeylSeries":
        return cls(ring, cap)

    @classmethod
    def monomial(cls, ring: Ring, cap: int, j=None, form=(), k: int = 0, coeff=1) -> "WeylSeries":
        n2 = 2 * ring.n
        j = tuple(j) if j is not None else (0,) * n2
        if len(j) != n2:
            raise StructuralError("fibre multi-index has wrong length")
        form = tuple(form)
        if list(form) != sorted(set(form)):
            sign, form2 = 1, tuple(sorted(form))
            if len(set(form)) != len(form):
                return cls(ring, cap)
            sign = _perm_sign(form)
            coeff_el = coeff if isinstance(coeff, RingElement) else ring.const(coeff)
            return cls(ring, cap, {(k, j, form2): coeff_el.scale(sign)})
        if len(form) > MAX_FORM_DEGREE:
            raise StructuralError("form degree above 3")
        if not isinstance(coeff, RingElement):
            coeff = ring.const(coeff)
        return cls(ring, cap, {(k, j, form): coeff})

    @classmethod
    def scalar(cls, coeff: RingElement, cap: int) -> "WeylSeries":
        return cls.monomial(coeff.ring, cap, coeff=coeff)

    @classmethod
    def y(cls, ring: Ring, idx: int, cap: int, power: int = 1) -> "WeylSeries":
        j = [0] * (2 * ring.n)
        j[idx - 1] = power
        return cls.monomial(ring, cap, j)

    def copy(self, cap: int | None = None) -> "WeylSeries":
        out = WeylSeries(self.ring, self.cap if cap is None else cap)
        for key, c in self.terms.items():
            out._add_term(key, c)
        return out

    def with_cap(self, cap: int) -> "WeylSeries":
        return self.copy(cap)

    # arithmetic -----------------------------------------------------------
    def _same(self, other: "WeylSeries"):
        if not isinstance(other, WeylSeries):
            raise TypeError("expected a WeylSeries")
        if other.ring is not self.ring:
            raise StructuralError("series over different rings")

    def __add__(self, other: "WeylSeries") -> "WeylSeries":
        self._same(other)
        out = WeylSeries(self.ring, min(self.cap, other.cap))
        for key, c in self.terms.items():
            out._add_term(key, c)
        for key, c in other.terms.items():
            out._add_term(key, c)
        return out

    def __neg__(self):
        return WeylSeries(self.ring, self.cap, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "WeylSeries":
        """Multiply every coefficient by a scalar or RingElement."""
        out = WeylSeries(self.ring, self.cap)
        for key, v in self.terms.items():
            out._add_term(key, v * c)
        return out

    def __mul__(self, c):
        if isinstance(c, WeylSeries):
            raise TypeError("use circ() for the fibre product")
        return self.scale(c)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, WeylSeries):
            return NotImplemented
        return self.ring is other.ring and self.terms == other.terms

    def __bool__(self):
        return bool(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def __repr__(self):
        return f"WeylSeries(cap={self.cap}, {self.to_text()})"

    # structure --------------------------------------------------------------
    def form_degrees(self) -> set:
        return {len(f) for _, _, f in self.terms}

    def form_degree(self) -> int:
        degs = self.form_degrees()
        if len(degs) > 1:
            raise ValueError("series is not homogeneous in form degree")
        return degs.pop() if degs else 0

    def split_forms(self) -> dict:
        out: dict = {}
        for key, c in self.terms.items():
            out.setdefault(len(key[2]), WeylSeries(self.ring, self.cap)).terms[key] = c
        return out

    def degree_part(self, d: int) -> "WeylSeries":
        out = WeylSeries(self.ring, self.cap)
        for key, c in self.terms.items():
            if 2 * key[0] + sum(key[1]) == d:
                out.terms[key] = c
        return out

    def degrees(self) -> set:
        return {2 * k + sum(j) for k, j, _ in self.terms}

    def truncate(self, cap: int) -> "WeylSeries":
        return self.copy(min(cap, self.cap))

    def hbar_free(self) -> bool:
        return all(k == 0 for k, _, _ in self.terms)

    def project(self) -> dict:
        """Restriction to y = 0: map hbar exponent -> coefficient."""
        out: dict = {}
        for (k, j, form), c in self.terms.items():
            if form:
                raise ValueError("projection needs a 0-form")
            if not any(j):
                out[k] = out[k] + c if k in out else c
        return {k: v for k, v in out.items() if v}

    # JSON -------------------------------------------------------------------
    def sorted_items(self):
        return sorted(self.terms.items(), key=lambda kv: (2 * kv[0][0] + sum(kv[0][1]), kv[0][0], kv[0][1], kv[0][2]))

    def to_json(self) -> list:
        return [{"k": k, "j": list(j), "form": list(f), "coeff": c.to_json()}
                for (k, j, f), c in self.sorted_items()]

    def to_text(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for (k, j, f), c in self.sorted_items():
            fac = []
            if k:
                fac.append("h" if k == 1 else f"h^{k}")
            for idx, e in enumerate(j, 1):
                if e:
                    fac.append(f"y{idx}" if e == 1 else f"y{idx}^{e}")
            if f:
                fac.append("^".join(f"dx{s}" for s in f))
            parts.append(f"({c.to_text()})" + ("*" + "*".join(fac) if fac else ""))
        return " + ".join(parts)


def _perm_sign(seq) -> int:
    s = 1
    seq = list(seq)
    for a in range(len(seq)):
        for b in range(a + 1, len(seq)):
            if seq[a] > seq[b]:
                s = -s
    return s


# ---------------------------------------------------------------------------
# fibre product


def kernel_entries(n: int, sign: int = KERNEL_SIGN) -> tuple:
    """Nonzero kernel entries ((i, j), K^{ij}) with 1-based fibre indices."""
    out = []
    for a in range(1, n + 1):
        out.append(((a, a + n), sign))
        out.append(((a + n, a), -sign))
    return tuple(out)


def _falling(e: int, u: int) -> int:
    r = 1
    for x in range(e - u + 1, e + 1):
        r *= x
    return r


@lru_cache(maxsize=None)
def _pair_product(ja: tuple, jb: tuple, sign: int) -> tuple:
    """Expand y^ja ∘ y^jb as ((t, j, coeff), ...) with the hbar-free factor.

    Implements sum_t 1/t! (-i hbar/2)^t K^{i1 j1}..K^{it jt} d^t_a d^t_b
    by summing over multiplicities c_(ij) of each nonzero kernel entry.
    """
    n = len(ja) // 2
    entries = kernel_entries(n, sign)
    out: dict = {}

    def rec(idx, da, db, t, weight):
        if idx == len(entries):
            j = tuple(x - u + y - v for x, u, y, v in zip(ja, da, jb, db))
            c = weight
            for x, u in zip(ja, da):
                c *= _falling(x, u)
            for y, v in zip(jb, db):
                c *= _falling(y, v)
            key = (t, j)
            out[key] = out.get(key, 0) + c
            return
        (i, j), kv = entries[idx]
        max_c = min(ja[i - 1] - da[i - 1], jb[j - 1] - db[j - 1])
        for cnt in range(max_c + 1):
            nda = list(da)
            ndb = list(db)
            nda[i - 1] += cnt
            ndb[j - 1] += cnt
            rec(idx + 1, tuple(nda), tuple(ndb), t + cnt,
                weight * mpq(kv) ** cnt / factorial(cnt))

    zero = (0,) * len(ja)
    rec(0, zero, zero, 0, mpq(1))
    res = []
    for (t, j), c in out.items():
        if not c:
            continue
        # (-i/2)^t
        phase = [GaussianRational(1), GaussianRational(0, -1), GaussianRational(-1), GaussianRational(0, 1)][t % 4]
        res.append((t, j, phase * (c / mpq(2) ** t)))
    return tuple(res)


def circ(a: WeylSeries, b: WeylSeries, cap: int | None = None, sign: int | None = None,
         odd_only: bool = False) -> WeylSeries:
    """Fibre product a ∘ b truncated at ``cap`` (default min of the caps).

    With ``odd_only`` only the odd-t contractions are kept; twice that part
    is the graded commutator [a, b].
    """
    a._same(b)
    if cap is None:
        cap = min(a.cap, b.cap)
    if sign is None:
        sign = KERNEL_SIGN
    out = WeylSeries(a.ring, cap)
    acc: dict = {}
    bterms = list(b.terms.items())
    for (ka, ja, fa), ca in a.terms.items():
        da = 2 * ka + sum(ja)
        if da > cap:
            continue
        for (kb, jb, fb), cb in bterms:
            if da + 2 * kb + sum(jb) > cap:
                continue
            s, form = wedge_sign(fa, fb)
            if not s:
                continue
            coeff = ca * cb
            if not coeff:
                continue
            for t, j, c in _pair_product(ja, jb, sign):
                if odd_only and not t & 1:
                    continue
                key = (ka + kb + t, j, form)
                term = coeff.scale(c if s > 0 else -c)
                w = acc.get(key)
                acc[key] = term if w is None else w + term
    for key, c in acc.items():
        out._add_term(key, c)
    return out


def circ_closed_form(r: int, j: int, s: int, k: int, i: int, ring: Ring, cap: int | None = None,
                     sign: int | None = None) -> WeylSeries:
    """(y^i)^r (y^{i+n})^j ∘ (y^i)^s (y^{i+n})^k via the closed double sum.

    The textbook sum carries (i hbar/2)^t; with kernel sign ``sign`` the
    matching factor is (-sign * i hbar/2)^t.
    """
    if sign is None:
        sign = KERNEL_SIGN
    n = ring.n
    if cap is None:
        cap = r + j + s + k
    out = WeylSeries(ring, cap)
    pref = factorial(r) * factorial(j) * factorial(s) * factorial(k)
    unit = GaussianRational(0, -sign) * mpq(1, 2)
    for t in range(min(r, k) + min(j, s) + 1):
        lo = max(t - r, t - k, 0)
        hi = min(j, s, t)
        total = mpq(0)
        for a in range(lo, hi + 1):
            total += mpq((-1) ** a, factorial(a) * factorial(t - a) * factorial(r - t + a)
                         * factorial(j - a) * factorial(s - a) * factorial(k - t + a))
        if not total:
            continue
        jj = [0] * (2 * n)
        jj[i - 1] = r + s - t
        jj[i + n - 1] = k + j - t
        out._add_term((t, tuple(jj), ()), ring.const(unit ** t * (pref * total)))
    return out


def commutator(a: WeylSeries, b: WeylSeries, cap: int | None = None, sign: int | None = None) -> WeylSeries:
    """Graded commutator a∘b - (-1)^{m1 m2} b∘a.

    Swapping the factors multiplies the t-th contraction by (-1)^t and the
    form part by (-1)^{m1 m2}, so the commutator is twice the odd-t part of
    a∘b.  ``commutator_by_definition`` keeps the literal two-product form.
    """
    if cap is None:
        cap = min(a.cap, b.cap)
    return circ(a, b, cap, sign, odd_only=True).scale(2)


def commutator_by_definition(a: WeylSeries, b: WeylSeries, cap: int | None = None,
                             sign: int | None = None) -> WeylSeries:
    if cap is None:
        cap = min(a.cap, b.cap)
    out = WeylSeries(a.ring, cap)
    for m1, pa in a.split_forms().items():
        for m2, pb in b.split_forms().items():
            ab = circ(pa, pb, cap, sign)
            ba = circ(pb, pa, cap, sign)
            out = out + (ab - ba if (m1 * m2) % 2 == 0 else ab + ba)
    return out


def div_hbar(a: WeylSeries, factor=GaussianRational(0, 1)) -> WeylSeries:
    """Multiply by factor/hbar as an exponent shift; the cap drops by 2."""
    out = WeylSeries(a.ring, a.cap - 2)
    for (k, j, f), c in a.terms.items():
        if k < 1:
            raise HbarError(f"negative hbar exponent at y^{j} dx^{f}")
        out._add_term((k - 1, j, f), c * factor)
    return out


def i_over_hbar(a: WeylSeries) -> WeylSeries:
    return div_hbar(a, GaussianRational(0, 1))


# ---------------------------------------------------------------------------
# fibre differential operators


def delta(a: WeylSeries) -> WeylSeries:
    """δa = dx^k ∧ ∂a/∂y^k."""
    out = WeylSeries(a.ring, a.cap)
    for (kk, j, f), c in a.terms.items():
        for idx, e in enumerate(j):
            if not e:
                continue
            s, nf = insert_sign(idx + 1, f)
            if not s:
                continue
            nj = list(j)
            nj[idx] -= 1
            out._add_term((kk, tuple(nj), nf), c.scale(e * s))
    return out


def delta_inv(a: WeylSeries) -> WeylSeries:
    """δ⁻¹a = (1/(l+m)) y^k ι(∂/∂x^k) a on components with l+m > 0.

    The y-degree goes up by one, so the cap does too.
    """
    out = WeylSeries(a.ring, a.cap + 1)
    for (kk, j, f), c in a.terms.items():
        l, m = sum(j), len(f)
        if l + m == 0 or m == 0:
            continue
        for pos, s in enumerate(f):
            nf = f[:pos] + f[pos + 1:]
            nj = list(j)
            nj[s - 1] += 1
            sgn = -1 if pos & 1 else 1
            out._add_term((kk, tuple(nj), nf), c.scale(mpq(sgn, l + m)))
    return out


def exterior_d(a: WeylSeries) -> WeylSeries:
    """da = dx^k ∧ ∂a/∂x^k acting on coefficients."""
    out = WeylSeries(a.ring, a.cap)
    n2 = 2 * a.n
    for (kk, j, f), c in a.terms.items():
        for var in range(1, n2 + 1):
            s, nf = insert_sign(var, f)
            if not s:
                continue
            dc = c.derive(var)
            if dc:
                out._add_term((kk, j, nf), dc if s > 0 else -dc)
    return out


def covariant_d(a: WeylSeries, gamma_form: WeylSeries, cap: int | None = None) -> WeylSeries:
    """∂_γ a = da + (i/ħ)[γ, a]."""
    if cap is None:
        cap = a.cap
    res = exterior_d(a).truncate(cap)
    if gamma_form.terms:
        br = commutator(gamma_form.with_cap(cap + 2), a.with_cap(cap + 2), cap + 2)
        res = res.with_cap(cap) + i_over_hbar(br)
    return res


def degree_decompose(a: WeylSeries) -> list:
    """Partition into (k, l, component) with l the y-degree."""
    parts: dict = {}
    for key, c in a.terms.items():
        k, j, _ = key
        parts.setdefault((k, sum(j)), WeylSeries(a.ring, a.cap)).terms[key] = c
    return [(k, l, parts[(k, l)]) for k, l in sorted(parts, key=lambda kl: (2 * kl[0] + kl[1], -kl[0]))]


def recompose(parts: list, ring: Ring, cap: int) -> WeylSeries:
    out = WeylSeries(ring, cap)
    for _, _, comp in parts:
        out = out + comp.with_cap(cap)
    return out
