"""Exact coefficient arithmetic.

Gaussian rationals plus a sparse differential ring in the phase-space
coordinates q1..qn, p1..pn, declared function symbols (with a closed
derivative table) and jet symbols standing for abstract connection
coefficients and their spatial derivatives.
"""
from __future__ import annotations

import json
import operator
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from gmpy2 import mpq


class StructuralError(ValueError):
    """Operands come from different rings or use undeclared symbols."""


class EvaluationError(KeyError):
    """A point assignment is missing a symbol."""


def _to_mpq(x) -> mpq:
    if isinstance(x, str):
        return mpq(x.strip())
    return mpq(x)


_ZERO = mpq(0)


def _fmt(x: mpq) -> str:
    return f"{x.numerator}/{x.denominator}"


class GaussianRational:
    """Complex number with exact rational real and imaginary parts."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = _to_mpq(re)
        self.im = _to_mpq(im)

    @classmethod
    def _raw(cls, re: mpq, im: mpq) -> "GaussianRational":
        # skips coercion; both parts must already be mpq
        out = object.__new__(cls)
        out.re = re
        out.im = im
        return out

    @classmethod
    def coerce(cls, x) -> "GaussianRational":
        if isinstance(x, GaussianRational):
            return x
        if isinstance(x, complex):
            raise TypeError("floating complex values are not exact")
        return cls(x)

    def __add__(self, other):
        o = other if isinstance(other, GaussianRational) else GaussianRational.coerce(other)
        return GaussianRational._raw(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        o = other if isinstance(other, GaussianRational) else GaussianRational.coerce(other)
        return GaussianRational._raw(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        return GaussianRational.coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, GaussianRational):
            o = other
        elif isinstance(other, (int, type(_ZERO))):
            return GaussianRational._raw(self.re * other, self.im * other)
        else:
            o = GaussianRational.coerce(other)
        if not self.im and not o.im:
            return GaussianRational._raw(self.re * o.re, _ZERO)
        return GaussianRational._raw(self.re * o.re - self.im * o.im,
                                     self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __neg__(self):
        return GaussianRational._raw(-self.re, -self.im)

    def __truediv__(self, other):
        o = GaussianRational.coerce(other)
        den = o.re * o.re + o.im * o.im
        if den == 0:
            raise ZeroDivisionError("division by zero Gaussian rational")
        return GaussianRational((self.re * o.re + self.im * o.im) / den,
                                (self.im * o.re - self.re * o.im) / den)

    def __rtruediv__(self, other):
        return GaussianRational.coerce(other) / self

    def __pow__(self, e: int):
        if e < 0:
            return GaussianRational(1) / (self ** (-e))
        out = GaussianRational(1)
        base = self
        while e:
            if e & 1:
                out = out * base
            base = base * base
            e >>= 1
        return out

    def conjugate(self):
        return GaussianRational(self.re, -self.im)

    def __eq__(self, other):
        try:
            o = GaussianRational.coerce(other)
        except TypeError:
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __repr__(self):
        if not self.im:
            return f"GR({_fmt(self.re)})"
        return f"GR({_fmt(self.re)}, {_fmt(self.im)}i)"

    def to_json(self) -> dict:
        return {"re": _fmt(self.re), "im": _fmt(self.im)}

    @classmethod
    def from_json(cls, d: Mapping) -> "GaussianRational":
        return cls(d.get("re", "0"), d.get("im", "0"))


I = GaussianRational(0, 1)


@dataclass(frozen=True, order=True)
class JetSymbol:
    """Spatial derivative ∂^jet of an abstract connection coefficient Γ^eps_{a b}."""

    eps: int
    a: int
    b: int
    jet: tuple = ()

    def __post_init__(self):
        if self.a > self.b:
            a, b = self.b, self.a
            object.__setattr__(self, "a", a)
            object.__setattr__(self, "b", b)
        object.__setattr__(self, "jet", tuple(self.jet))

    @property
    def atom(self) -> tuple:
        return ("j", self.eps, self.a, self.b, self.jet)

    def label(self) -> str:
        s = f"G{self.eps}_{self.a}{self.b}"
        if any(self.jet):
            s += "[" + ",".join(map(str, self.jet)) + "]"
        return s


@dataclass
class FunctionSymbol:
    """A named function of the spatial coordinates.

    ``derivatives`` maps a spatial index mu (1-based) to a callable
    ``ring -> RingElement`` or a prebuilt element; missing entries mean the
    derivative vanishes.  ``invertible`` allows negative powers.  ``reduce``
    optionally rewrites ``sym**power`` for power >= ``reduce[0]`` through
    the identity ``sym**reduce[0] == reduce[1]``.
    """

    name: str
    derivatives: dict = field(default_factory=dict)
    invertible: bool = False
    reduce: tuple | None = None


def _atom_label(atom) -> str:
    if atom[0] == "f":
        return atom[1]
    if atom[0] == "a":
        return atom[1] + ("[" + ",".join(map(str, atom[2])) + "]" if any(atom[2]) else "")
    return JetSymbol(*atom[1:]).label()


class Ring:
    """Declared context: dimension n, function symbols and jet mode.

    Elements of different Ring instances never mix.
    """

    def __init__(self, n: int, symbols: Iterable[FunctionSymbol] = (), jets: bool = False, name: str = "",
                 abstract: Mapping | None = None):
        if n < 1:
            raise StructuralError("dimension must be positive")
        self.n = n
        self.symbols = {s.name: s for s in symbols}
        self.jets = jets
        self.name = name
        # abstract functions: name -> True when they depend on q only
        self.abstract = dict(abstract or {})
        self._dcache: dict = {}
        self._rcache: dict = {}
        self._has_reduce = any(s.reduce for s in self.symbols.values())
        self._merge_cache: dict = {}

    # constructors -------------------------------------------------------
    def zero(self) -> "RingElement":
        return RingElement(self, {})

    def const(self, c) -> "RingElement":
        c = GaussianRational.coerce(c)
        return RingElement(self, {self._unit_key(): c} if c else {})

    def one(self) -> "RingElement":
        return self.const(1)

    def _unit_key(self):
        return ((0,) * (2 * self.n), ())

    def var(self, idx: int, power: int = 1) -> "RingElement":
        """Coordinate x^idx, idx in 1..2n (q for idx <= n, p above)."""
        if not 1 <= idx <= 2 * self.n:
            raise StructuralError(f"coordinate index {idx} out of range")
        e = [0] * (2 * self.n)
        e[idx - 1] = power
        return RingElement(self, {(tuple(e), ()): GaussianRational(1)})

    def q(self, a: int, power: int = 1):
        if not 1 <= a <= self.n:
            raise StructuralError(f"q index {a} out of range")
        return self.var(a, power)

    def p(self, a: int, power: int = 1):
        if not 1 <= a <= self.n:
            raise StructuralError(f"p index {a} out of range")
        return self.var(a + self.n, power)

    def fsym(self, name: str, power: int = 1):
        if name not in self.symbols:
            raise StructuralError(f"undeclared function symbol {name!r}")
        return self._from_atoms({("f", name): power})

    def jet(self, eps: int, a: int, b: int, jet=None, power: int = 1):
        if not self.jets:
            raise StructuralError("ring has no jet symbols")
        for x in (eps, a, b):
            if not 1 <= x <= self.n:
                raise StructuralError("jet symbol index out of range")
        jet = tuple(jet) if jet is not None else (0,) * self.n
        if len(jet) != self.n:
            raise StructuralError("jet multi-index has wrong length")
        return self._from_atoms({JetSymbol(eps, a, b, jet).atom: power})

    def func(self, name: str, jet=None, power: int = 1):
        """Abstract function of (q, p) (or of q only) with derivative jet."""
        if name not in self.abstract:
            raise StructuralError(f"undeclared abstract function {name!r}")
        jet = tuple(jet) if jet is not None else (0,) * (2 * self.n)
        if len(jet) != 2 * self.n:
            raise StructuralError("abstract jet has wrong length")
        if self.abstract[name] and any(jet[self.n:]):
            return self.zero()
        return self._from_atoms({("a", name, jet): power})

    def _from_atoms(self, atoms: dict) -> "RingElement":
        out = {}
        for key, c in self._normalize((0,) * (2 * self.n), atoms):
            out[key] = out.get(key, GaussianRational(0)) + c
        return RingElement(self, {k: v for k, v in out.items() if v})

    # canonical form -----------------------------------------------------
    def _normalize(self, exps: tuple, atoms: dict):
        """Yield (key, coeff) pairs of the normal form of exps*atoms."""
        reduce_hit = None
        for a, pw in atoms.items():
            if a[0] == "f":
                sym = self.symbols.get(a[1])
                if sym is None:
                    raise StructuralError(f"undeclared function symbol {a[1]!r}")
                if pw < 0 and not sym.invertible:
                    raise StructuralError(f"negative power of non-invertible {a[1]!r}")
                if sym.reduce is not None and pw >= sym.reduce[0]:
                    reduce_hit = a
            elif a[0] == "a":
                if a[1] not in self.abstract:
                    raise StructuralError(f"undeclared abstract function {a[1]!r}")
            elif not self.jets:
                raise StructuralError("jet symbol in a ring without jets")
        if reduce_hit is None:
            key = (exps, tuple(sorted((a, pw) for a, pw in atoms.items() if pw)))
            return [(key, GaussianRational(1))]
        sym = self.symbols[reduce_hit[1]]
        e0, repl = sym.reduce
        rest = dict(atoms)
        rest[reduce_hit] -= e0
        base = RingElement(self, dict(self._normalize(exps, rest)))
        return list((base * self._reduce_element(sym)).terms.items())

    def _reduce_element(self, sym):
        r = self._rcache.get(sym.name)
        if r is None:
            repl = sym.reduce[1]
            r = repl(self) if callable(repl) else repl
            self._rcache[sym.name] = r
        return r

    def symbol_derivative(self, name: str, mu: int) -> "RingElement":
        key = (name, mu)
        d = self._dcache.get(key)
        if d is None:
            entry = self.symbols[name].derivatives.get(mu)
            if entry is None:
                d = self.zero()
            elif callable(entry):
                d = entry(self)
            else:
                d = entry
            if d.ring is not self:
                raise StructuralError("derivative table built for another ring")
            self._dcache[key] = d
        return d


def _merge_atoms(a: tuple, b: tuple) -> dict:
    out = dict(a)
    for k, v in b:
        out[k] = out.get(k, 0) + v
    return out


def _is_real(terms: dict) -> bool:
    return all(not v.im for v in terms.values())


def _product_into(acc_re: dict, acc_im: dict, ta: dict, tb: dict, merged: dict, cr=1, ci=0):
    """Add c * (ta × tb) into raw real/imaginary accumulators (rings without reduce rules)."""
    add = operator.add
    real = not ci and _is_real(ta) and _is_real(tb)
    if len(merged) > 1_000_000:
        merged.clear()
    bl = [(eb if any(eb) else None, ab, cb.re, cb.im) for (eb, ab), cb in tb.items()]
    get_re, get_im = acc_re.get, acc_im.get
    for (ea, aa), ca in ta.items():
        ar, ai = ca.re * cr - ca.im * ci, ca.re * ci + ca.im * cr
        for eb, ab, br, bi in bl:
            if not ab:
                atoms = aa
            elif not aa:
                atoms = ab
            else:
                atoms = merged.get((aa, ab))
                if atoms is None:
                    m = _merge_atoms(aa, ab)
                    atoms = tuple(sorted((a, p) for a, p in m.items() if p))
                    merged[(aa, ab)] = atoms
            key = (ea if eb is None else tuple(map(add, ea, eb)), atoms)
            acc_re[key] = get_re(key, _ZERO) + (ar * br if real else ar * br - ai * bi)
            if not real:
                acc_im[key] = get_im(key, _ZERO) + ar * bi + ai * br


def _from_raw(acc_re: dict, acc_im: dict) -> dict:
    out = {}
    for k, v in acc_re.items():
        w = acc_im.get(k, _ZERO)
        if v or w:
            out[k] = GaussianRational._raw(v, w)
    for k, w in acc_im.items():
        if w and k not in acc_re:
            out[k] = GaussianRational._raw(_ZERO, w)
    return out


class RingElement:
    """Sparse Gaussian-rational polynomial over a Ring.

    A term key is ``(exps, atoms)`` where ``exps`` holds the 2n exponents of
    q1..qn, p1..pn and ``atoms`` is a sorted tuple of (atom, power) pairs.
    """

    __slots__ = ("ring", "terms")

    def __init__(self, ring: Ring, terms: dict):
        self.ring = ring
        self.terms = terms

    def _check(self, other) -> "RingElement":
        if isinstance(other, RingElement):
            if other.ring is not self.ring:
                raise StructuralError("operands belong to different rings")
            return other
        return self.ring.const(other)

    def __add__(self, other):
        other = self._check(other)
        if not other.terms:
            return self
        if not self.terms:
            return other
        out = dict(self.terms)
        for k, v in other.terms.items():
            w = out.get(k)
            if w is None:
                out[k] = v
            else:
                w = w + v
                if w:
                    out[k] = w
                else:
                    del out[k]
        return RingElement(self.ring, out)

    __radd__ = __add__

    def __neg__(self):
        return RingElement(self.ring, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._check(other))

    def __rsub__(self, other):
        return self._check(other) - self

    def scale(self, c) -> "RingElement":
        c = GaussianRational.coerce(c)
        if not c:
            return self.ring.zero()
        return RingElement(self.ring, {k: v * c for k, v in self.terms.items()})

    def __mul__(self, other):
        if not isinstance(other, RingElement):
            return self.scale(other)
        other = self._check(other)
        if not self.terms or not other.terms:
            return self.ring.zero()
        ring = self.ring
        if len(self.terms) > len(other.terms):
            # iterate the short operand outside; the product is commutative
            self, other = other, self
        plain = not ring._has_reduce
        merged: dict = {}
        add = operator.add
        if plain:
            acc_re, acc_im = {}, {}
            _product_into(acc_re, acc_im, self.terms, other.terms, ring._merge_cache)
            return RingElement(ring, _from_raw(acc_re, acc_im))
        out: dict = {}
        bterms = list(other.terms.items())
        for (ea, aa), ca in self.terms.items():
            for (eb, ab), cb in bterms:
                exps = tuple(map(add, ea, eb))
                c = ca * cb
                if not ab:
                    atoms = aa
                elif not aa:
                    atoms = ab
                elif plain:
                    atoms = merged.get((aa, ab))
                    if atoms is None:
                        m = _merge_atoms(aa, ab)
                        atoms = tuple(sorted((a, p) for a, p in m.items() if p))
                        merged[(aa, ab)] = atoms
                else:
                    atoms = None
                if plain:
                    pairs = (((exps, atoms), c),)
                elif atoms is None:
                    pairs = [(k, v * c) for k, v in ring._normalize(exps, _merge_atoms(aa, ab))]
                else:
                    pairs = [(k, v * c) for k, v in ring._normalize(exps, dict(atoms))]
                for k, v in pairs:
                    w = out.get(k)
                    if w is None:
                        out[k] = v
                    else:
                        w = w + v
                        if w:
                            out[k] = w
                        else:
                            del out[k]
        return RingElement(ring, out)

    __rmul__ = __mul__

    def __pow__(self, e: int):
        if e < 0:
            raise ValueError("negative power of a ring element")
        out = self.ring.one()
        for _ in range(e):
            out = out * self
        return out

    def __eq__(self, other):
        if isinstance(other, RingElement):
            return self.ring is other.ring and self.terms == other.terms
        try:
            return self == self.ring.const(other)
        except TypeError:
            return NotImplemented

    def __hash__(self):
        return hash(frozenset(self.terms.items()))

    def __bool__(self):
        return bool(self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def __repr__(self):
        return f"RingElement({self.to_text()})"

    # structure ----------------------------------------------------------
    def p_degree(self) -> int:
        """Largest total momentum degree among the terms (0 for zero)."""
        n = self.ring.n
        return max((sum(e[n:]) for e, _ in self.terms), default=0)

    def p_degrees(self) -> set:
        n = self.ring.n
        return {sum(e[n:]) for e, _ in self.terms}

    def split_p(self) -> dict:
        """Map momentum exponent tuple -> momentum-free coefficient."""
        n = self.ring.n
        out: dict = {}
        for (e, a), c in self.terms.items():
            pe = e[n:]
            out.setdefault(pe, {})[(e[:n] + (0,) * n, a)] = c
        return {pe: RingElement(self.ring, t) for pe, t in out.items()}

    def atoms(self) -> set:
        return {a for _, at in self.terms for a, _ in at}

    def is_constant(self) -> bool:
        return all(not any(e) and not a for e, a in self.terms)

    def constant_value(self) -> GaussianRational:
        if not self.terms:
            return GaussianRational(0)
        if not self.is_constant():
            raise ValueError("element is not constant")
        return next(iter(self.terms.values()))

    # calculus -----------------------------------------------------------
    def derive(self, var: int) -> "RingElement":
        """Formal partial derivative with respect to x^var, var in 1..2n."""
        ring = self.ring
        n = ring.n
        if not 1 <= var <= 2 * n:
            raise StructuralError(f"coordinate index {var} out of range")
        out = ring.zero()
        acc: dict = {}
        spatial = var <= n
        for (e, atoms), c in self.terms.items():
            pw = e[var - 1]
            if pw:
                ne = list(e)
                ne[var - 1] -= 1
                key = (tuple(ne), atoms)
                acc[key] = acc.get(key, GaussianRational(0)) + c * pw
            if not atoms:
                continue
            for idx, (atom, apw) in enumerate(atoms):
                if not spatial and atom[0] != "a":
                    continue
                if atom[0] == "a" and not spatial and ring.abstract[atom[1]]:
                    continue
                rest = dict(atoms)
                rest[atom] = apw - 1
                if atom[0] == "a":
                    jet = list(atom[2])
                    jet[var - 1] += 1
                    nat = ("a", atom[1], tuple(jet))
                    rest[nat] = rest.get(nat, 0) + 1
                    for k, v in ring._normalize(e, rest):
                        acc[k] = acc.get(k, GaussianRational(0)) + v * c * apw
                elif atom[0] == "f":
                    d = ring.symbol_derivative(atom[1], var)
                    if not d.terms:
                        continue
                    base = RingElement(ring, dict((k, v * c * apw) for k, v in ring._normalize(e, rest)))
                    out = out + base * d
                else:
                    jet = list(atom[4])
                    jet[var - 1] += 1
                    nat = ("j", atom[1], atom[2], atom[3], tuple(jet))
                    rest[nat] = rest.get(nat, 0) + 1
                    for k, v in ring._normalize(e, rest):
                        acc[k] = acc.get(k, GaussianRational(0)) + v * c * apw
        return out + RingElement(ring, {k: v for k, v in acc.items() if v})

    def eval(self, point: Mapping) -> GaussianRational:
        """Exact substitution.

        ``point`` maps 'q1'.., 'p1'.., function-symbol names and JetSymbol
        instances (or their labels) to numbers.
        """
        n = self.ring.n
        names = [f"q{i}" for i in range(1, n + 1)] + [f"p{i}" for i in range(1, n + 1)]
        total = GaussianRational(0)
        for (e, atoms), c in self.terms.items():
            val = c
            for nm, pw in zip(names, e):
                if pw:
                    if nm not in point:
                        raise EvaluationError(f"no value for {nm}")
                    val = val * GaussianRational.coerce(point[nm]) ** pw
            for atom, pw in atoms:
                if atom[0] == "f":
                    key = atom[1]
                    x = point.get(key)
                elif atom[0] == "a":
                    key = _atom_label(atom)
                    x = point.get(key)
                else:
                    js = JetSymbol(*atom[1:])
                    x = point.get(js, point.get(js.label()))
                    key = js.label()
                if x is None:
                    raise EvaluationError(f"no value for {key}")
                val = val * GaussianRational.coerce(x) ** pw
            total = total + val
        return total

    def substitute_p_zero(self) -> "RingElement":
        n = self.ring.n
        return RingElement(self.ring, {k: v for k, v in self.terms.items() if not any(k[0][n:])})

    # serialization ------------------------------------------------------
    def to_json(self) -> list:
        n = self.ring.n
        rows = []
        for (e, atoms), c in sorted(self.terms.items(), key=lambda kv: _sort_key(kv[0])):
            row = {"q": list(e[:n]), "p": list(e[n:])}
            fs = [[a[1], pw] for a, pw in atoms if a[0] == "f"]
            js = [[[a[1], a[2], a[3]], list(a[4]), pw] for a, pw in atoms if a[0] == "j"]
            fn = [[a[1], list(a[2]), pw] for a, pw in atoms if a[0] == "a"]
            if fs:
                row["f"] = fs
            if js:
                row["jet"] = js
            if fn:
                row["fn"] = fn
            row.update(c.to_json())
            rows.append(row)
        return rows

    def to_text(self) -> str:
        if not self.terms:
            return "0"
        n = self.ring.n
        names = [f"q{i}" for i in range(1, n + 1)] + [f"p{i}" for i in range(1, n + 1)]
        parts = []
        for (e, atoms), c in sorted(self.terms.items(), key=lambda kv: _sort_key(kv[0])):
            fac = [nm if pw == 1 else f"{nm}^{pw}" for nm, pw in zip(names, e) if pw]
            for a, pw in atoms:
                lab = _atom_label(a)
                fac.append(lab if pw == 1 else f"{lab}^{pw}")
            cs = _coeff_text(c)
            if not fac:
                parts.append(cs)
            elif cs == "1":
                parts.append("*".join(fac))
            elif cs == "-1":
                parts.append("-" + "*".join(fac))
            else:
                parts.append(cs + "*" + "*".join(fac))
        return " + ".join(parts).replace("+ -", "- ")


def _sort_key(key):
    e, atoms = key
    return (sum(e), e, tuple((a[0],) + tuple(str(x) for x in a[1:]) + (pw,) for a, pw in atoms))


def _coeff_text(c: GaussianRational) -> str:
    def r(x):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if not c.im:
        return r(c.re)
    if not c.re:
        return f"({r(c.im)}i)"
    return f"({r(c.re)}+{r(c.im)}i)"


class Accumulator:
    """In-place sum of ring elements and products; avoids copying large sums."""

    __slots__ = ("ring", "re", "im", "slow")

    def __init__(self, ring: Ring):
        self.ring = ring
        self.re: dict = {}
        self.im: dict = {}
        self.slow = ring.zero() if ring._has_reduce else None

    def add(self, x: RingElement, c=None):
        c = GaussianRational(1) if c is None else GaussianRational.coerce(c)
        if self.slow is not None:
            self.slow = self.slow + x.scale(c)
            return self
        for k, v in x.terms.items():
            w = v * c
            self.re[k] = self.re.get(k, _ZERO) + w.re
            if w.im:
                self.im[k] = self.im.get(k, _ZERO) + w.im
        return self

    def addmul(self, x: RingElement, y: RingElement, c=None):
        if not x.terms or not y.terms:
            return self
        c = GaussianRational(1) if c is None else GaussianRational.coerce(c)
        if not c:
            return self
        if self.slow is not None:
            self.slow = self.slow + (x * y).scale(c)
            return self
        if len(x.terms) > len(y.terms):
            x, y = y, x
        _product_into(self.re, self.im, x.terms, y.terms, self.ring._merge_cache, c.re, c.im)
        return self

    def result(self) -> RingElement:
        if self.slow is not None:
            return self.slow
        return RingElement(self.ring, _from_raw(self.re, self.im))


def ring_from_json(ring: Ring, rows: list) -> RingElement:
    n = ring.n
    out = ring.zero()
    for row in rows:
        e = tuple(row.get("q", [0] * n)) + tuple(row.get("p", [0] * n))
        if len(e) != 2 * n:
            raise StructuralError("term has wrong number of exponents")
        atoms = {}
        for name, pw in row.get("f", []):
            atoms[("f", name)] = atoms.get(("f", name), 0) + pw
        for (eps, a, b), jet, pw in row.get("jet", []):
            at = JetSymbol(eps, a, b, tuple(jet)).atom
            atoms[at] = atoms.get(at, 0) + pw
        for name, jet, pw in row.get("fn", []):
            at = ("a", name, tuple(jet))
            atoms[at] = atoms.get(at, 0) + pw
        c = GaussianRational.from_json(row)
        out = out + RingElement(ring, dict((k, v * c) for k, v in ring._normalize(e, atoms)))
    return out


def ring_arith(a: RingElement, b, op: str) -> RingElement:
    if op == "add":
        return a + b
    if op == "mul":
        return a * b
    if op == "scale":
        return a.scale(b)
    raise ValueError(f"unknown ring operation {op!r}")


def ring_derive(a: RingElement, var: int) -> RingElement:
    return a.derive(var)


def ring_eval(a: RingElement, point: Mapping) -> GaussianRational:
    return a.eval(point)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
