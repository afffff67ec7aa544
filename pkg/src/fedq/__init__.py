"""Exact Fedosov deformation quantization on cotangent bundles."""
from .scalars import GaussianRational, JetSymbol, FunctionSymbol, Ring, RingElement
from .weyl import WeylSeries, circ, commutator, delta, delta_inv, exterior_d, covariant_d
from .geometry import LinearConnection, SymplecticConnectionCoeffs, build_induced, curvature
from .fedosov import AbelianState, abelian_generic, abelian_induced_fast, validate_abelian
from .quantize import lift, moyal_bracket, star

__all__ = [
    "GaussianRational", "JetSymbol", "FunctionSymbol", "Ring", "RingElement",
    "WeylSeries", "circ", "commutator", "delta", "delta_inv", "exterior_d", "covariant_d",
    "LinearConnection", "SymplecticConnectionCoeffs", "build_induced", "curvature",
    "AbelianState", "abelian_generic", "abelian_induced_fast", "validate_abelian",
    "lift", "moyal_bracket", "star",
]
