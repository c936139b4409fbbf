"""Nonclassicality criteria built from normally-ordered motional moments.

Three certificates are evaluated per time point: the minimized normally-
ordered quadrature variance (squeezing), the Mandel Q parameter (sub-Poisson
statistics), and the minimized anomalous number-quadrature correlation
determinant.  Negative values certify nonclassicality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ModelParams, MotionalEvolution
from .errors import UndefinedForVacuum
from .fock import MomentSet, Truncation, moments_from_rho

__all__ = [
    "CriteriaResult",
    "squeezing_functional",
    "c_sq",
    "mandel_q",
    "anomalous_cross",
    "c_ac",
    "criteria_scan",
]

#: Mean excitation below which the Mandel Q parameter is reported undefined.
VACUUM_THRESHOLD = 1e-14

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def squeezing_functional(moments: MomentSet, phi) -> float | np.ndarray:
    """Normally-ordered variance of the quadrature at phase ``phi``.

    2 Re{e^{2i phi} <a^2>} - 4 [Re{e^{i phi} <a>}]^2 + 2 <n>; accepts a scalar
    or an array of phases.
    """
    phi = np.asarray(phi, dtype=float)
    val = (
        2.0 * (np.exp(2j * phi) * moments.mean_a2).real
        - 4.0 * (np.exp(1j * phi) * moments.mean_a).real ** 2
        + 2.0 * moments.mean_n
    )
    return val if val.ndim else float(val)


def anomalous_cross(moments: MomentSet, phi) -> float | np.ndarray:
    """Normally-ordered cross-correlation of quadrature and number fluctuations."""
    phi = np.asarray(phi, dtype=float)
    val = 2.0 * (np.exp(1j * phi) * moments.mean_na).real - 2.0 * (
        np.exp(1j * phi) * moments.mean_a
    ).real * moments.mean_n
    return val if val.ndim else float(val)


def number_variance_normal(moments: MomentSet) -> float:
    """<:[Delta n]^2:> = <n^2> - <n> - <n>^2."""
    return moments.mean_n2 - moments.mean_n - moments.mean_n**2


def _anomalous_functional(moments: MomentSet, phi) -> float | np.ndarray:
    dn2 = number_variance_normal(moments)
    phi = np.asarray(phi, dtype=float)
    val = np.asarray(
        dn2 * squeezing_functional(moments, phi) - anomalous_cross(moments, phi) ** 2
    )
    return val if val.ndim else float(val)


def _minimize_phase(func, n_grid: int = 720, phase_tol: float = 1e-8) -> tuple[float, float]:
    """Global minimum of a smooth 2pi-periodic functional over the phase.

    Uniform grid scan (argmin ties resolve to the smallest phase) followed by
    golden-section refinement inside the bracketing grid cell.  A refined
    minimum that only ties the value at phase zero is reported at zero.
    """
    grid = np.linspace(0.0, 2.0 * math.pi, n_grid, endpoint=False)
    values = func(grid)
    best = int(np.argmin(values))
    spacing = 2.0 * math.pi / n_grid
    lo = grid[best] - spacing
    hi = grid[best] + spacing
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1 = float(func(x1))
    f2 = float(func(x2))
    while hi - lo > phase_tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = float(func(x1))
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = float(func(x2))
    phi_star = 0.5 * (lo + hi)
    val_star = float(func(phi_star))
    val_zero = float(func(0.0))
    if val_zero <= val_star + 1e-12 * (1.0 + abs(val_star)):
        return val_zero, 0.0
    return val_star, float(phi_star % (2.0 * math.pi))


def c_sq(moments: MomentSet) -> tuple[float, float]:
    """Squeezing criterion: minimum of the quadrature variance and its phase."""
    return _minimize_phase(lambda phi: squeezing_functional(moments, phi))


def mandel_q(moments: MomentSet) -> float:
    """Mandel Q parameter; raises UndefinedForVacuum at zero mean excitation."""
    if moments.mean_n < VACUUM_THRESHOLD:
        raise UndefinedForVacuum(
            f"Q is 0/0 at mean excitation {moments.mean_n:.3e}; not reported as 0"
        )
    return (moments.mean_n2 - moments.mean_n**2) / moments.mean_n - 1.0


def c_ac(moments: MomentSet) -> tuple[float, float]:
    """Anomalous-correlation criterion: minimized determinant combination."""
    return _minimize_phase(lambda phi: _anomalous_functional(moments, phi))


@dataclass(frozen=True)
class CriteriaResult:
    """All three criteria at one time point, with their optimizing phases."""

    t: float
    c_sq: float
    phi_sq: float
    c_sp: float | None  # None when the Mandel Q parameter is undefined
    c_ac: float
    phi_ac: float
    moments: MomentSet


def criteria_from_moments(t: float, moments: MomentSet) -> CriteriaResult:
    sq_val, sq_phi = c_sq(moments)
    ac_val, ac_phi = c_ac(moments)
    try:
        sp_val = mandel_q(moments)
    except UndefinedForVacuum:
        sp_val = None
    return CriteriaResult(
        t=t, c_sq=sq_val, phi_sq=sq_phi, c_sp=sp_val, c_ac=ac_val, phi_ac=ac_phi, moments=moments
    )


def criteria_scan(
    params: ModelParams,
    t_grid,
    trunc: Truncation = Truncation(),
    coverage_sigmas: float = 7.0,
) -> list[CriteriaResult]:
    """Evaluate all criteria along a nondecreasing time grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0:
        return []
    if np.any(t_grid < 0) or np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be nondecreasing and nonnegative")
    evolution = MotionalEvolution(params, trunc, coverage_sigmas)
    results = []
    for t in t_grid:
        moments = moments_from_rho(evolution.rho(float(t)))
        results.append(criteria_from_moments(float(t), moments))
    return results
