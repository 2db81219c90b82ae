"""Drift vector fields and jump-rate functions of the HO and Dunkl generators.

All functions accept points of any leading shape ``(..., n)`` and are pure.
Chamber-interior evaluators raise :class:`SingularInputError` on wall
contact; the ``*_floored`` helpers used by the integrators instead replace
each pairing by ``max((α, x), floor)``.
"""
from __future__ import annotations

import numpy as np

from .roots import RootSystem, combine, pairings, rescale_to_dunkl

WALL_EPSILON = 1e-12
SERIES_SWITCH = 1e-2


class SingularInputError(ValueError):
    """A drift field was evaluated on (or outside) a chamber wall."""


def _interior_pairings(roots: np.ndarray, x) -> np.ndarray:
    p = pairings(np.asarray(x, dtype=float), roots)
    if np.any(p <= 0):
        raise SingularInputError("point is not in the open positive chamber")
    return p


def coth_minus_one(u):
    """``coth(u) - 1`` for ``u > 0`` without cancellation; underflows to 0 for large ``u``."""
    with np.errstate(over="ignore"):
        return 2.0 / np.expm1(2.0 * np.asarray(u, dtype=float))


def inv_sinh2(u):
    """``sinh(u)^-2``, even in ``u``; underflows to 0 instead of overflowing."""
    a = np.abs(np.asarray(u, dtype=float))
    with np.errstate(over="ignore", divide="ignore"):
        e = np.exp(-2.0 * a)
        return 4.0 * e / np.expm1(-2.0 * a) ** 2


def coth_minus_inv(u):
    """``coth(u) - 1/u``, odd and bounded by 1, with a series branch near 0."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < SERIES_SWITCH
    us = np.where(small, u, 0.0)
    u2 = us * us
    series = us * (1 / 3 + u2 * (-1 / 45 + u2 * (2 / 945 + u2 * (-1 / 4725 + u2 * 2 / 93555))))
    ub = np.where(small, 1.0, u)
    direct = 1.0 / np.tanh(ub) - 1.0 / ub
    return np.where(small, series, direct)


# HO fields --------------------------------------------------------------------

def ho_radial_drift(model: RootSystem, x) -> np.ndarray:
    """``Σ_{α>0} k_α (α/2) coth((α, x)/2)`` on the open chamber."""
    p = _interior_pairings(model.positive_roots, x)
    return model.rho + ho_centered_from_pairings(model, p)


def ho_centered_from_pairings(model: RootSystem, p: np.ndarray) -> np.ndarray:
    return combine(0.5 * model.positive_k * coth_minus_one(0.5 * p), model.positive_roots)


def ho_centered_drift(model: RootSystem, x) -> np.ndarray:
    """Drift minus ρ: ``Σ k_α (α/2)[coth((α, x)/2) - 1]``, exponentially small deep inside."""
    return ho_centered_from_pairings(model, _interior_pairings(model.positive_roots, x))


def ho_centered_bound(model: RootSystem, x) -> float:
    """Bound ``C exp(-min_α (α, x))`` on the centered drift norm.

    Uses ``coth(u) - 1 = 2/(e^{2u} - 1) ≤ 2 e^{-2u} / (1 - e^{-2u_min})``.
    """
    p = _interior_pairings(model.positive_roots, x)
    pmin = float(np.min(p))
    c = np.sum(model.positive_k * np.sqrt(model.positive_norm2)) / (-np.expm1(-pmin))
    return float(c * np.exp(-pmin))


def ho_drift_floored(model: RootSystem, x: np.ndarray, floor: float) -> np.ndarray:
    """HO drift with every pairing floored at ``floor`` (valid on the closed chamber)."""
    p = np.maximum(pairings(x, model.positive_roots), floor)
    return model.rho + combine(0.5 * model.positive_k * coth_minus_one(0.5 * p), model.positive_roots)


# Dunkl fields -----------------------------------------------------------------

def dunkl_radial_drift(dunkl: RootSystem, x) -> np.ndarray:
    """``Σ_{β>0} k'_β β / (β, x)``; homogeneous of degree -1."""
    p = _interior_pairings(dunkl.positive_roots, x)
    return combine(dunkl.positive_k / p, dunkl.positive_roots)


def intrinsic_drift(dunkl: RootSystem, x) -> np.ndarray:
    """Drift of the intrinsic Brownian motion (all multiplicities 1)."""
    p = _interior_pairings(dunkl.positive_roots, x)
    return combine(1.0 / p, dunkl.positive_roots)


def rational_drift_floored(dunkl: RootSystem, x: np.ndarray, floor: float, unit: bool = False) -> np.ndarray:
    p = np.maximum(pairings(x, dunkl.positive_roots), floor)
    k = 1.0 if unit else dunkl.positive_k
    return combine(k / p, dunkl.positive_roots)


def log_pi_euler(dunkl: RootSystem, x, unit: bool = True) -> np.ndarray:
    """Euler operator applied to ``log π``: ``(x, ∇ log π(x))``, constant ``Σ k'`` off the walls."""
    d = intrinsic_drift(dunkl, x) if unit else dunkl_radial_drift(dunkl, x)
    return np.sum(np.asarray(x, dtype=float) * d, axis=-1)


# Girsanov ---------------------------------------------------------------------

def girsanov_integrand(model: RootSystem, x) -> np.ndarray:
    """``∇ log(δ^{1/2}/π)`` where π uses the rescaled system.

    Each positive root γ (including doubled ones) contributes
    ``k_γ (γ/2)[coth(u) - 1/u]`` with ``u = (γ, x)/2``.  Bounded on the whole
    space; the removable singularity at walls is handled by a series.
    """
    u = 0.5 * pairings(np.asarray(x, dtype=float), model.positive_roots)
    return combine(0.5 * model.positive_k * coth_minus_inv(u), model.positive_roots)


def girsanov_bound(model: RootSystem) -> float:
    """Analytic sup bound ``Σ k_α |α| / 2`` (uses ``|coth u - 1/u| ≤ 1``)."""
    return float(np.sum(model.positive_k * np.sqrt(model.positive_norm2)) / 2.0)


# jump rates -------------------------------------------------------------------

def ho_jump_rates(model: RootSystem, x, wall_epsilon: float = WALL_EPSILON) -> np.ndarray:
    """Per positive root: ``k_α |α|²/8 · sinh⁻²((α, x)/2)``; zero on the root's own wall."""
    p = pairings(np.asarray(x, dtype=float), model.positive_roots)
    on_wall = np.abs(p) < wall_epsilon
    rate = model.positive_k * model.positive_norm2 / 8.0 * inv_sinh2(0.5 * np.where(on_wall, 1.0, p))
    return np.where(on_wall, 0.0, rate)


def ho_jump_rate(model: RootSystem, alpha_index: int, x, wall_epsilon: float = WALL_EPSILON):
    return ho_jump_rates(model, x, wall_epsilon)[..., alpha_index]


def dunkl_jump_rates(dunkl: RootSystem, x, wall_epsilon: float = WALL_EPSILON, unit: bool = False) -> np.ndarray:
    """Per positive root: ``k'_β / (β, x)²``; zero on the root's own wall."""
    p = pairings(np.asarray(x, dtype=float), dunkl.positive_roots)
    on_wall = np.abs(p) < wall_epsilon
    k = 1.0 if unit else dunkl.positive_k
    return np.where(on_wall, 0.0, k / np.where(on_wall, 1.0, p) ** 2)


def dunkl_jump_rate(dunkl: RootSystem, alpha_index: int, x, wall_epsilon: float = WALL_EPSILON):
    return dunkl_jump_rates(dunkl, x, wall_epsilon)[..., alpha_index]


def field_table(model: RootSystem, kind: str, points: np.ndarray) -> np.ndarray:
    """Evaluate a named field on rows of ``points`` (used by the ``field`` CLI dump)."""
    dunkl = rescale_to_dunkl(model)
    if kind == "ho_drift":
        return ho_radial_drift(model, points)
    if kind == "ho_centered":
        return ho_centered_drift(model, points)
    if kind == "dunkl_drift":
        return dunkl_radial_drift(dunkl, points)
    if kind == "intrinsic_drift":
        return intrinsic_drift(dunkl, points)
    if kind == "girsanov":
        return girsanov_integrand(model, points)
    if kind == "ho_rate":
        return ho_jump_rates(model, points)
    if kind == "dunkl_rate":
        return dunkl_jump_rates(dunkl, points)
    raise ValueError(f"unknown field kind {kind!r}")


FIELD_KINDS = ("ho_drift", "ho_centered", "dunkl_drift", "intrinsic_drift", "girsanov", "ho_rate", "dunkl_rate")
