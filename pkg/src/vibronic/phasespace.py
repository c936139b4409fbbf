"""Characteristic functions and regularized quasiprobability maps.

The regularized P function is evaluated by two independent routes: a witness
series in normally-ordered displaced-number moments, and direct Fourier
quadrature of the filtered normally-ordered characteristic function.  Both
use the disc-autocorrelation filter; negativities of the resulting map
certify nonclassicality.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import ConvergenceWarning, DomainError
from .fock import _as_entries, _displaced_blocks, displaced_diagonals, displaced_number_columns

__all__ = [
    "FilterSpec",
    "PhaseGrid",
    "QuasiProbMap",
    "disc_filter",
    "normal_cf",
    "normal_cf_grid",
    "p_omega_series",
    "p_omega_integral",
    "p_omega_map",
    "witness_coefficients",
]

#: Largest |beta| at which the normally-ordered CF is numerically reliable.
CF_MAX_BETA = 6.0


@dataclass(frozen=True)
class FilterSpec:
    """Regularization filter: kind and width.

    Only the disc-autocorrelation filter is implemented; its Fourier transform
    is nonnegative by construction and its value at the origin is 1, which
    pins the total mass of the filtered map to the state's trace.
    """

    width: float = 1.5
    kind: str = "disc_autocorrelation"

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError(f"filter width must be positive, got {self.width}")
        if self.kind != "disc_autocorrelation":
            raise DomainError(f"unsupported filter kind '{self.kind}'")


@dataclass(frozen=True)
class PhaseGrid:
    """Square sampling grid in the coherent-amplitude plane.

    ``values[i, j]`` of a map on this grid corresponds to
    ``center + (-half_extent + j*spacing) + 1j*(-half_extent + i*spacing)``.
    """

    center: complex = 0.0 + 0.0j
    half_extent: float = 5.0
    n_side: int = 41

    def __post_init__(self):
        if self.n_side < 3 or self.n_side % 2 == 0:
            raise ValueError(f"n_side must be odd and >= 3, got {self.n_side}")
        if self.half_extent <= 0:
            raise ValueError("half_extent must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_extent / (self.n_side - 1)

    def axis(self) -> np.ndarray:
        return np.linspace(-self.half_extent, self.half_extent, self.n_side)

    def alphas(self) -> np.ndarray:
        """Complex sample points, shape (n_side, n_side)."""
        ax = self.axis()
        return self.center + ax[None, :] + 1j * ax[:, None]


@dataclass(frozen=True)
class QuasiProbMap:
    """Real-valued quasiprobability samples on a phase grid."""

    grid: PhaseGrid
    values: np.ndarray
    method: str  # "series" or "integral"

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValueError("quasiprobability map contains non-finite values")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.spacing**2)

    def min_value(self) -> float:
        return float(np.min(self.values))

    def argmin(self) -> tuple[int, int]:
        i, j = np.unravel_index(int(np.argmin(self.values)), self.values.shape)
        return int(i), int(j)


def disc_filter(beta, w: float):
    """Autocorrelation of the indicator of a disc of radius w/2, peak-normalized.

    (2/pi)(arccos u - u sqrt(1-u^2)) for u = |beta|/w <= 1, zero outside.
    """
    if w <= 0:
        raise ValueError("filter width must be positive")
    u = np.abs(np.asarray(beta)) / w
    inside = u <= 1.0
    uc = np.clip(u, 0.0, 1.0)
    vals = np.where(inside, (2.0 / math.pi) * (np.arccos(uc) - uc * np.sqrt(1.0 - uc**2)), 0.0)
    return vals if vals.ndim else float(vals)


def normal_cf(rho, beta: complex) -> complex:
    """Normally-ordered characteristic function Tr(rho D(beta)) e^{|beta|^2/2}."""
    beta = complex(beta)
    if abs(beta) > CF_MAX_BETA:
        raise DomainError(
            f"|beta| = {abs(beta):.3g} exceeds {CF_MAX_BETA}; the Gaussian "
            "amplification outruns the truncation fidelity there"
        )
    entries = _as_entries(rho)
    cols = displaced_number_columns(beta, entries.shape[0], entries.shape[0])
    return complex(np.einsum("nj,jn->", entries, cols) * math.exp(0.5 * abs(beta) ** 2))


def normal_cf_grid(rho, betas, chunk: int = 256) -> np.ndarray:
    """Vectorized ``normal_cf`` over an array of displacement arguments."""
    entries = _as_entries(rho)
    dim = entries.shape[0]
    betas = np.asarray(betas, dtype=complex).ravel()
    if betas.size and np.max(np.abs(betas)) > CF_MAX_BETA:
        raise DomainError(f"grid reaches beyond |beta| = {CF_MAX_BETA}")
    out = np.empty(betas.size, dtype=complex)
    for start in range(0, betas.size, chunk):
        sel = betas[start : start + chunk]
        blocks = _displaced_blocks(sel, dim, dim)
        out[start : start + chunk] = np.einsum("nj,pjn->p", entries, blocks)
    return out * np.exp(0.5 * np.abs(betas) ** 2)


def witness_coefficients(w: float, m_max: int) -> np.ndarray:
    """Series coefficients (-w^2/4)^m binom(2m+2, m) / ((m+1)!)^2, m = 0..m_max."""
    m = np.arange(m_max + 1)
    log_mag = (
        m * math.log(w**2 / 4.0)
        + gammaln(2 * m + 3)
        - gammaln(m + 1)
        - gammaln(m + 3)
        - 2.0 * gammaln(m + 2)
    )
    return np.where(m % 2 == 0, 1.0, -1.0) * np.exp(log_mag)


_KERNEL_CACHE: dict[tuple[float, int], np.ndarray] = {}


def witness_kernel(w: float, n_top: int) -> np.ndarray:
    """Per-level witness kernel K(n) = sum_m coeff_m(w) n!/(n-m)!, n = 0..n_top.

    Contracting the displaced diagonal against this kernel sums the witness
    series with the level sum outermost.  The alternating cancellation then
    lives entirely in K(n), which is summed here in arbitrary precision and
    cached, leaving the state-dependent contraction a stable positively
    weighted sum.  K(n) equals the map value of the number state |n> at the
    origin divided by the series prefactor, and is bounded in n.
    """
    key = (float(w), int(n_top))
    cached = _KERNEL_CACHE.get(key)
    if cached is not None:
        return cached
    import mpmath as mp

    n = np.arange(n_top + 1)
    log_fact = gammaln(n + 1)
    m = n  # the m-sum for level n stops at m = n
    log_coeff = (
        m * math.log(w**2 / 4.0)
        + gammaln(2 * m + 3)
        - gammaln(m + 1)
        - gammaln(m + 3)
        - 2.0 * gammaln(m + 2)
    )
    # Largest intermediate term sets the required working precision.
    max_log10 = 0.0
    for nn in range(n_top + 1):
        peak = np.max(log_coeff[: nn + 1] + log_fact[nn] - log_fact[nn::-1])
        max_log10 = max(max_log10, peak / math.log(10.0))
    with mp.workdps(int(max_log10) + 30):
        w2_4 = mp.mpf(w) ** 2 / 4
        coeffs = []
        for mm in range(n_top + 1):
            coeffs.append(
                (-w2_4) ** mm * mp.binomial(2 * mm + 2, mm) / (mp.factorial(mm + 1) ** 2)
            )
        kernel = np.empty(n_top + 1)
        for nn in range(n_top + 1):
            acc = mp.mpf(0)
            fact_ratio = mp.mpf(1)  # n!/(n-m)! built incrementally over m
            for mm in range(nn + 1):
                if mm > 0:
                    fact_ratio *= nn - mm + 1
                acc += coeffs[mm] * fact_ratio
            kernel[nn] = float(acc)
    kernel.setflags(write=False)
    _KERNEL_CACHE[key] = kernel
    return kernel


def _series_from_diagonal(diag: np.ndarray, w: float, peak_normalized: bool) -> float:
    """Contract displaced diagonal elements against the witness kernel."""
    n_top = diag.shape[0] - 1
    prefactor = w**2 / (4.0 * math.pi) if peak_normalized else w**2 / 16.0
    kernel = witness_kernel(w, n_top)
    value = prefactor * float(np.real(diag @ kernel))
    tail = float(np.max(np.abs(diag[-3:]))) * float(np.max(np.abs(kernel))) * prefactor
    if tail > 1e-10:
        warnings.warn(
            f"displaced diagonal tail contributes up to {tail:.3e} > 1e-10; "
            "enlarge the displaced table",
            ConvergenceWarning,
            stacklevel=2,
        )
    return value


def _support_estimate(rho) -> int:
    """Smallest n covering all but 1e-14 of the state's diagonal weight."""
    diag = np.abs(np.diagonal(_as_entries(rho)).real)
    total = diag.sum()
    if total <= 0:
        return rho.shape[0] - 1
    cum = np.cumsum(diag)
    idx = int(np.searchsorted(cum, (1.0 - 1e-14) * total))
    return min(idx, diag.shape[0] - 1)


def _displaced_table_size(rho, dist: float) -> int:
    radius = math.sqrt(_support_estimate(rho)) + dist
    return int(math.ceil(radius**2 + 8.0 * radius + 12.0))


def p_omega_series(
    rho,
    alpha: complex,
    w: float,
    peak_normalized: bool = True,
    n_upper: int | None = None,
) -> float:
    """Regularized P value at one phase-space point via the witness series.

    The series is expressed in normally-ordered displaced-number moments, so
    no phase-space integral is evaluated.  With ``peak_normalized`` the result
    matches filtering by ``disc_filter`` (unit filter value at the origin and
    unit total mass); without it the bare disc-overlap series is returned,
    which carries total mass pi/4.
    """
    entries = _as_entries(rho)
    if n_upper is None:
        n_upper = _displaced_table_size(entries, abs(alpha))
    diag = displaced_diagonals(entries, alpha, n_upper)
    return _series_from_diagonal(diag, w, peak_normalized)


def displaced_diagonal_table(rho, alphas: np.ndarray, n_upper: int, chunk: int = 64) -> np.ndarray:
    """Displaced diagonals for many phase-space points, shape (len(alphas), n_upper+1)."""
    entries = _as_entries(rho)
    dim = entries.shape[0]
    alphas = np.asarray(alphas, dtype=complex).ravel()
    out = np.empty((alphas.size, n_upper + 1), dtype=complex)
    for start in range(0, alphas.size, chunk):
        sel = alphas[start : start + chunk]
        blocks = _displaced_blocks(sel, dim, n_upper + 1)
        sandwich = np.matmul(entries[None, :, :], blocks)
        out[start : start + chunk] = np.einsum("pim,pim->pm", blocks.conj(), sandwich)
    return out


def p_omega_map(
    rho,
    grid: PhaseGrid,
    filt: FilterSpec,
    method: str = "series",
    peak_normalized: bool = True,
) -> QuasiProbMap:
    """Regularized P map over a phase grid by either evaluation route."""
    if method == "series":
        alphas = grid.alphas().ravel()
        dist = float(np.max(np.abs(alphas)))
        n_upper = _displaced_table_size(rho, dist)
        table = displaced_diagonal_table(rho, alphas, n_upper)
        values = np.array(
            [_series_from_diagonal(table[g], filt.width, peak_normalized) for g in range(table.shape[0])]
        )
        return QuasiProbMap(grid=grid, values=values.reshape(grid.n_side, grid.n_side), method="series")
    if method == "integral":
        return p_omega_integral(rho, grid, filt)
    raise ValueError(f"unknown method '{method}'")


def p_omega_integral(rho, grid: PhaseGrid, filt: FilterSpec) -> QuasiProbMap:
    """Regularized P map by 2-D trapezoidal quadrature of the filtered CF.

    The quadrature runs over the filter's support disc with spacing <= w/64;
    the imaginary residue of the result must stay below 1e-8 and is then
    discarded.
    """
    w = filt.width
    if w > CF_MAX_BETA:
        raise DomainError(
            f"filter width {w} exceeds the reliable CF domain |beta| <= {CF_MAX_BETA}"
        )
    n_side = 129  # spacing 2w/128 = w/64
    ax = np.linspace(-w, w, n_side)
    spacing = ax[1] - ax[0]
    bx, by = np.meshgrid(ax, ax)
    betas = (bx + 1j * by).ravel()
    mask = np.abs(betas) <= w
    betas = betas[mask]
    filtered = disc_filter(betas, w) * normal_cf_grid(rho, betas)
    alphas = grid.alphas().ravel()
    values = np.empty(alphas.size, dtype=complex)
    chunk = max(16, int(6e6 / max(1, betas.size)))  # cap the phase-matrix footprint
    for start in range(0, alphas.size, chunk):
        sel = alphas[start : start + chunk]
        phases = np.exp(sel[:, None] * betas.conj()[None, :] - sel.conj()[:, None] * betas[None, :])
        values[start : start + chunk] = phases @ filtered
    values *= spacing**2 / math.pi**2
    residue = float(np.max(np.abs(values.imag))) if values.size else 0.0
    if residue > 1e-8:
        raise DomainError(f"imaginary residue {residue:.3e} of the P map exceeds 1e-8")
    return QuasiProbMap(
        grid=grid, values=values.real.reshape(grid.n_side, grid.n_side), method="integral"
    )
