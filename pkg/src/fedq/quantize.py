"""Flat sections, the star product and the structural audits of its terms."""
from __future__ import annotations

from dataclasses import dataclass, field

from .fedosov import AbelianState, DegreeError, fedosov_d
from .geometry import Report
from .scalars import RingElement, StructuralError
from .weyl import KERNEL_SIGN, WeylSeries, _pair_product, commutator, delta_inv, exterior_d, i_over_hbar


@dataclass
class FlatSection:
    a0: RingElement
    parts: list            # parts[z] = a[z] as a WeylSeries of cap z
    Z: int

    @property
    def series(self) -> WeylSeries:
        out = WeylSeries(self.a0.ring, self.Z)
        for p in self.parts:
            out = out + p.with_cap(self.Z)
        return out


@dataclass
class StarExpansion:
    N: int
    components: dict                     # i -> RingElement
    provenance: dict                     # i -> sorted [(z_a, z_b)]
    details: dict = field(default_factory=dict)   # i -> [(z_a, z_b, k_a, k_b, ja, jb)]

    def __getitem__(self, i: int) -> RingElement:
        return self.components[i]

    def to_json(self) -> dict:
        return {"N": self.N,
                "components": {str(i): self.components[i].to_json() for i in sorted(self.components)},
                "provenance": {str(i): [list(p) for p in self.provenance[i]] for i in sorted(self.provenance)}}

    def to_text(self) -> str:
        lines = []
        for i in sorted(self.components):
            lines.append(f"h^{i}: {self.components[i].to_text()}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# lifting


def lift(a0: RingElement, state: AbelianState, Z: int | None = None) -> FlatSection:
    """σ⁻¹(a0) through degree Z by the graded recursion

        a[z] = δ⁻¹(∂_γ a[z-1] + (i/ħ) Σ_{l=1}^{z-2} [r[z+1-l], a[l]]).
    """
    Z = state.Z if Z is None else Z
    if Z > state.Z:
        raise DegreeError(f"lift to degree {Z} needs an Abelian connection through degree {Z}, have {state.Z}")
    ring = state.ring
    if a0.ring is not ring:
        raise StructuralError("function and connection live over different rings")
    parts = [WeylSeries.scalar(a0, 0)]
    gform = state.gform
    for z in range(1, Z + 1):
        w = z - 1
        prev = parts[w]
        acc = exterior_d(prev).with_cap(w)
        if prev and gform:
            acc = acc + i_over_hbar(commutator(gform.with_cap(w + 2), prev.with_cap(w + 2), w + 2)).with_cap(w)
        for l in range(1, z - 1):
            m = z + 1 - l
            rm = state.r.get(m)
            if rm and parts[l]:
                acc = acc + i_over_hbar(commutator(rm.with_cap(w + 2), parts[l].with_cap(w + 2), w + 2)).with_cap(w)
        parts.append(delta_inv(acc).with_cap(z))
    return FlatSection(a0, parts, Z)


def flatness_residual(section: FlatSection, state: AbelianState) -> WeylSeries:
    """D σ⁻¹(a0) truncated at degree Z-1; zero for a correct lift."""
    cap = section.Z - 1
    return fedosov_d(section.series, state, cap).truncate(cap)


def project(a) -> dict:
    """σ(a) = a|_{y=0} as a map ħ-exponent -> coefficient."""
    if isinstance(a, FlatSection):
        a = a.series
    return a.project()


# ---------------------------------------------------------------------------
# star product


def _y0_pairing(A: WeylSeries, B: WeylSeries, sign: int):
    """y-free part of A∘B: yields (ħ exponent, coefficient, ka, kb, ja, jb)."""
    n = A.n
    byj: dict = {}
    for (kb, jb, fb), cb in B.terms.items():
        byj.setdefault(jb, []).append((kb, cb))
    zero = (0,) * (2 * n)
    for (ka, ja, fa), ca in A.terms.items():
        if fa:
            raise StructuralError("star product needs 0-forms")
        jb = ja[n:] + ja[:n]
        hits = byj.get(jb)
        if not hits:
            continue
        full = None
        for t, j, c in _pair_product(ja, jb, sign):
            if j == zero:
                full = (t, c)
                break
        if full is None:
            continue
        t, c = full
        for kb, cb in hits:
            yield ka + kb + t, (ca * cb).scale(c), ka, kb, ja, jb


def star(a0: RingElement, b0: RingElement, state: AbelianState, N: int, sign: int | None = None,
         lifts: tuple | None = None) -> StarExpansion:
    """a0 * b0 = σ(σ⁻¹a0 ∘ σ⁻¹b0) through ħ^N."""
    if state.Z < 2 * N:
        raise DegreeError(f"star product through ħ^{N} needs Z >= 2N = {2 * N} (B_i uses a[z_a], b[z_b] "
                          f"with z_a + z_b = 2i); the Abelian connection has Z = {state.Z}")
    if sign is None:
        sign = KERNEL_SIGN
    Z = 2 * N
    la, lb = lifts if lifts is not None else (lift(a0, state, Z), lift(b0, state, Z))
    ring = state.ring
    comps = {i: ring.zero() for i in range(N + 1)}
    prov: dict = {i: set() for i in range(N + 1)}
    details: dict = {i: [] for i in range(N + 1)}
    comps[0] = a0 * b0
    prov[0].add((0, 0))
    for za in range(1, Z):
        for zb in range(1, Z - za + 1):
            if (za + zb) % 2:
                continue
            i = (za + zb) // 2
            if i > N:
                continue
            total = ring.zero()
            for k, c, ka, kb, ja, jb in _y0_pairing(la.parts[za], lb.parts[zb], sign):
                if k != i:
                    raise StructuralError("ħ bookkeeping broke in the star product")
                total = total + c
                details[i].append((za, zb, ka, kb, ja, jb))
            if total:
                comps[i] = comps[i] + total
                prov[i].add((za, zb))
    return StarExpansion(N, comps, {i: sorted(v) for i, v in prov.items()}, details)


def moyal_bracket(a0: RingElement, b0: RingElement, state: AbelianState, N: int,
                  sign: int | None = None) -> StarExpansion:
    """{a0, b0}_M = a0*b0 - b0*a0."""
    Z = 2 * N
    if state.Z < Z:
        star(a0, b0, state, N, sign)   # raises the explanatory error
    la, lb = lift(a0, state, Z), lift(b0, state, Z)
    ab = star(a0, b0, state, N, sign, (la, lb))
    ba = star(b0, a0, state, N, sign, (lb, la))
    comps = {i: ab.components[i] - ba.components[i] for i in range(N + 1)}
    prov = {i: sorted(set(ab.provenance[i]) | {(zb, za) for za, zb in ba.provenance[i]}) for i in range(N + 1)}
    return StarExpansion(N, comps, prov, {})


# ---------------------------------------------------------------------------
# structural audits


def _abstract_atom(a0: RingElement):
    """The abstract function name if a0 is a single bare abstract function."""
    if len(a0.terms) != 1:
        return None
    (e, atoms), c = next(iter(a0.terms.items()))
    if any(e) or c != 1 or len(atoms) != 1:
        return None
    atom, pw = atoms[0]
    if atom[0] != "a" or pw != 1 or any(atom[2]):
        return None
    return atom[1]


def _split_by_jet(c: RingElement, names):
    """Group monomials by (p exponents, jets of the named abstract functions).

    Returns {(l, jets): rest} where ``jets`` is a tuple of derivative
    multi-indices (one per name, None if absent) and ``rest`` holds the
    q-only factor as a RingElement.
    """
    ring = c.ring
    n = ring.n
    out: dict = {}
    for (e, atoms), v in c.terms.items():
        l = e[n:]
        jets = []
        rest_atoms = []
        for name in names:
            found = [(a, pw) for a, pw in atoms if a[0] == "a" and a[1] == name]
            if len(found) > 1 or (found and found[0][1] != 1):
                jets.append("bad")
            else:
                jets.append(found[0][0][2] if found else None)
        rest_atoms = tuple((a, pw) for a, pw in atoms if not (a[0] == "a" and a[1] in names))
        key = (l, tuple(jets))
        rest = out.setdefault(key, {})
        rk = (e[:n] + (0,) * n, rest_atoms)
        rest[rk] = rest.get(rk, 0) + v
    return {k: RingElement(ring, {kk: vv for kk, vv in t.items() if vv}) for k, t in out.items()}


def structural_audit(section: FlatSection) -> Report:
    """Term-by-term checks of the expected shape of σ⁻¹(a0)."""
    a0 = section.a0
    ring = a0.ring
    n = ring.n
    rep = Report()
    rep.record("projection", project(section) == ({0: a0} if a0 else {}))
    name = _abstract_atom(a0)
    spatial = a0.p_degree() == 0 and not (name and not ring.abstract.get(name, False))
    pdeg = a0.p_degrees()
    if spatial:
        for key in ("no_hbar", "no_momentum_y", "degree_z_polynomial", "no_momenta"):
            rep.record(key, True)
        for z, part in enumerate(section.parts):
            for (k, j, f), c in part.terms.items():
                if k:
                    rep.record("no_hbar", False, (z, j))
                if any(j[n:]):
                    rep.record("no_momentum_y", False, (z, j))
                if sum(j) != z:
                    rep.record("degree_z_polynomial", False, (z, j))
                if c.p_degree():
                    rep.record("no_momenta", False, (z, j))
    if name is None and len(pdeg) == 1 and len(a0.split_p()) == 1:
        deg = pdeg.pop()
        rep.record("balanced_weight", True)
        rep.record("even_hbar", True)
        for z, part in enumerate(section.parts):
            for (k, j, f), c in part.terms.items():
                if k % 2:
                    rep.record("even_hbar", False, (z, k, j))
                for l in c.p_degrees():
                    if k + l + sum(j[n:]) != deg:
                        rep.record("balanced_weight", False, (z, k, j, l))
    if name is not None:
        for key in ("p1_degree", "p2_derivative_range", "p3_top_degree", "p4_momentum_count",
                    "p5_momenta_bound", "p6_q_only"):
            rep.record(key, True)
        for z, part in enumerate(section.parts):
            if z == 0:
                continue
            for (k, j, f), c in part.terms.items():
                if k % 2 or 2 * k + sum(j) != z:
                    rep.record("p1_degree", False, (z, k, j))
                d2 = k       # ħ power k = 2d
                for (l, (i,)), rest in _split_by_jet(c, [name]).items():
                    if i is None or i == "bad":
                        rep.record("p2_derivative_range", False, (z, j, "not linear in a0"))
                        continue
                    si = sum(i)
                    if not 1 <= si <= z:
                        rep.record("p2_derivative_range", False, (z, j, i))
                    if si == z and (k or any(l) or tuple(i) != tuple(j) or not rest.is_constant()):
                        rep.record("p3_top_degree", False, (z, j, i))
                    if sum(i[n:]) != d2 + sum(j[n:]) + sum(l):
                        rep.record("p4_momentum_count", False, (z, k, j, i, l))
                    sl = sum(l)
                    if sl > z // 2:
                        rep.record("p5_momenta_bound", False, (z, l))
                    if z % 2 == 0 and sl == z // 2 and (d2 + sum(j[n:]) or sum(i[n:]) != z // 2):
                        rep.record("p5_momenta_bound", False, (z, l, "edge"))
                    if rest.p_degree():
                        rep.record("p6_q_only", False, (z, j))
    return rep


def _admissible_pairs(i: int, za: int, zb: int, da: int, db: int) -> bool:
    return (1 <= za <= 2 * i - 1 and 1 <= zb <= 2 * i - 1 and za + zb == 2 * i
            and 2 * (da + db) <= i - 1 and zb - za == 4 * (db - da)
            and za - 4 * da <= i and zb - 4 * db <= i)


def bi_structure_audit(exp: StarExpansion, a0: RingElement, b0: RingElement) -> Report:
    """Checks on B_i: classical limit, admissible (z_a, z_b) pairs and term shapes."""
    ring = a0.ring
    n = ring.n
    rep = Report()
    rep.record("classical_limit", exp.components[0] == a0 * b0)
    rep.record("admissible_pairs", True)
    for i, rows in exp.details.items():
        for za, zb, ka, kb, ja, jb in rows:
            if ka % 2 or kb % 2 or not _admissible_pairs(i, za, zb, ka // 2, kb // 2):
                rep.record("admissible_pairs", False, (i, za, zb, ka, kb))
    a_spatial = a0.p_degree() == 0 and (_abstract_atom(a0) is None or ring.abstract.get(_abstract_atom(a0)))
    if a_spatial:
        rep.record("parity", True)
        rep.record("momentum_only_b", True)
        for i, rows in exp.details.items():
            for za, zb, ka, kb, ja, jb in rows:
                if za % 2 != i % 2 or zb % 2 != i % 2 or not (za <= i <= zb):
                    rep.record("parity", False, (i, za, zb))
                if any(ja[n:]) or any(jb[:n]):
                    rep.record("momentum_only_b", False, (i, ja, jb))
    # ħ-power bound for polynomial-in-p inputs
    na, nb = _abstract_atom(a0), _abstract_atom(b0)
    if na is None and nb is None:
        bound = a0.p_degree() + b0.p_degree()
        rep.record("hbar_bound", all(not exp.components[i] for i in exp.components if i > bound), bound)
    if na is not None and nb is not None:
        rep.record("bidifferential_shape", True)
        rep.record("momentum_weight", True)
        for i in range(1, exp.N + 1):
            for (l, (ka, kb)), rest in _split_by_jet(exp.components[i], [na, nb]).items():
                if ka is None or kb is None or "bad" in (ka, kb):
                    rep.record("bidifferential_shape", False, (i, "not bilinear"))
                    continue
                if not (1 <= sum(ka) <= i and 1 <= sum(kb) <= i):
                    rep.record("bidifferential_shape", False, (i, ka, kb))
                s = sum(l)
                if sum(ka[n:]) + sum(kb[n:]) - i != s or s > i // 2:
                    rep.record("momentum_weight", False, (i, ka, kb, l))
                if a_spatial and (any(ka[n:]) or any(kb[:n]) or sum(kb[n:]) != i):
                    rep.record("bidifferential_shape", False, (i, ka, kb, "spatial a0"))
    return rep


def factorization_check(a0: RingElement, b1: RingElement, b2: RingElement, state: AbelianState, N: int) -> bool:
    """a0*(b1 b2) == b1 (a0*b2) for q-only a0 and b1."""
    lhs = star(a0, b1 * b2, state, N)
    rhs = star(a0, b2, state, N)
    return all(lhs.components[i] == b1 * rhs.components[i] for i in range(N + 1))


def associativity_defect(a0, b0, c0, state: AbelianState, N: int) -> dict:
    """ħ^i coefficients of (a*b)*c - a*(b*c), i <= N; empty when associative."""
    ring = state.ring
    ab = star(a0, b0, state, N)
    bc = star(b0, c0, state, N)
    left = {i: ring.zero() for i in range(N + 1)}
    right = {i: ring.zero() for i in range(N + 1)}
    for i in range(N + 1):
        if ab.components[i]:
            x = star(ab.components[i], c0, state, N - i)
            for m in range(N - i + 1):
                left[i + m] = left[i + m] + x.components[m]
        if bc.components[i]:
            x = star(a0, bc.components[i], state, N - i)
            for m in range(N - i + 1):
                right[i + m] = right[i + m] + x.components[m]
    return {i: left[i] - right[i] for i in range(N + 1) if left[i] != right[i]}
