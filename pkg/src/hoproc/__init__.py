"""Simulation and verification toolkit for Heckman-Opdam and Dunkl processes on root systems."""
from .roots import RootSystem, build_standard, fold, radial_decompose, reflect, rescale_to_dunkl
from .sde import SimConfig, simulate_radial
from .jumps import JumpOptions, simulate_skew_product

__version__ = "0.1.0"

__all__ = [
    "RootSystem", "build_standard", "fold", "radial_decompose", "reflect", "rescale_to_dunkl",
    "SimConfig", "simulate_radial", "JumpOptions", "simulate_skew_product", "__version__",
]
