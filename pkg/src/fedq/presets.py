"""Named base geometries used by the CLI and the tests."""
from __future__ import annotations

import random
from dataclasses import dataclass

from gmpy2 import mpq

from .geometry import (BaseMetric, LinearConnection, SymplecticConnectionCoeffs, build_induced,
                       build_riemannian_induced, build_special_atlas, levi_civita)
from .scalars import FunctionSymbol, Ring


@dataclass
class Preset:
    name: str
    ring: Ring
    Gamma: LinearConnection
    gamma: SymplecticConnectionCoeffs
    mode: str
    metric: BaseMetric | None = None


def sphere_ring(abstract=None) -> Ring:
    """n=2 ring with s = sin q1 (invertible) and c = cos q1, c^2 = 1 - s^2."""
    s = FunctionSymbol("s", {1: lambda R: R.fsym("c")}, invertible=True)
    c = FunctionSymbol("c", {1: lambda R: -R.fsym("s")},
                       reduce=(2, lambda R: R.one() - R.fsym("s", 2)))
    return Ring(2, [s, c], name="sphere", abstract=abstract)


def flat(n: int = 2, abstract=None) -> Preset:
    ring = Ring(n, name="flat", abstract=abstract)
    G = LinearConnection.zero(ring)
    g = BaseMetric(ring, [[ring.const(int(a == b)) for b in range(n)] for a in range(n)])
    return Preset("flat", ring, G, build_riemannian_induced(G), "riemannian", g)


def sphere(abstract=None) -> Preset:
    ring = sphere_ring(abstract)
    g = BaseMetric(ring, [[ring.one(), ring.zero()], [ring.zero(), ring.fsym("s", 2)]])
    G = levi_civita(g)
    return Preset("sphere", ring, G, build_riemannian_induced(G), "riemannian", g)


def jet3(abstract=None) -> Preset:
    ring = Ring(3, jets=True, name="jet3", abstract=abstract)
    G = LinearConnection.from_jets(ring)
    return Preset("jet3", ring, G, build_special_atlas(G), "special")


def poly2(abstract=None) -> Preset:
    """n=2 polynomial connection with coefficients of degree <= 1."""
    ring = Ring(2, name="poly2", abstract=abstract)
    q1, q2 = ring.q(1), ring.q(2)
    G = LinearConnection(ring, {
        (1, 1, 1): q2,
        (1, 1, 2): ring.const(1) + q1,
        (2, 2, 2): q1.scale(mpq(1, 2)),
        (2, 1, 2): ring.const(mpq(-1, 3)) + q2,
    })
    return Preset("poly2", ring, G, build_riemannian_induced(G), "riemannian")


def random_poly(seed: int, n: int = 2, abstract=None, mode: str = "riemannian") -> Preset:
    """Seeded random connection with integer coefficients of degree <= 1 in q."""
    rng = random.Random(seed)
    ring = Ring(n, name=f"random{seed}", abstract=abstract)
    coeffs = {}
    for e in range(1, n + 1):
        for a in range(1, n + 1):
            for b in range(a, n + 1):
                v = ring.const(rng.randint(-2, 2))
                for mu in range(1, n + 1):
                    v = v + ring.q(mu).scale(rng.randint(-1, 1))
                coeffs[(e, a, b)] = v
    G = LinearConnection(ring, coeffs)
    gamma = build_riemannian_induced(G) if mode == "riemannian" else build_special_atlas(G)
    return Preset(f"random{seed}", ring, G, gamma, mode)


PRESETS = {"flat": flat, "sphere": sphere, "jet3": jet3, "poly2": poly2}


def get_preset(name: str, n: int | None = None, abstract=None) -> Preset:
    if name == "flat":
        return flat(n or 2, abstract)
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}")
    return PRESETS[name](abstract=abstract)
