"""Truncated Fock-space numerics shared by every other module.

Conventions: hbar = 1, frequencies in units of the vibronic coupling
magnitude, times in units of its inverse.  Factorials only ever enter as
log-domain ratios, so all constructors remain usable far beyond the range
where raw factorials overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.special import gammainc, gammaln

from .errors import TruncationError

__all__ = [
    "Truncation",
    "FockAmplitudeVector",
    "MotionalDensityMatrix",
    "MomentSet",
    "laguerre_gen",
    "log_factorial_ratio",
    "coherent_vector",
    "coherent_rho",
    "thermal_rho",
    "number_rho",
    "displacement_matrix",
    "displacement_unitary",
    "displaced_number_columns",
    "displaced_diagonals",
    "moments_from_rho",
    "trace_distance",
]


@dataclass(frozen=True)
class Truncation:
    """Fock cutoff (dimension ``n_max + 1``) plus the admissible tail weight."""

    n_max: int = 64
    tail_tol: float = 1e-10

    def __post_init__(self):
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if not 0.0 < self.tail_tol < 1.0:
            raise ValueError(f"tail_tol must lie in (0, 1), got {self.tail_tol}")

    @property
    def dim(self) -> int:
        return self.n_max + 1


def laguerre_gen(n: int, k: int, x: float) -> float:
    """Generalized Laguerre polynomial L_n^(k)(x).

    Uses the ascending three-term recurrence in the degree, which is
    numerically stable on x >= 0 (the growing solution is the one wanted).
    """
    if n < 0 or k < 0:
        raise ValueError("laguerre_gen requires n >= 0 and k >= 0")
    if n == 0:
        return 1.0
    prev = 1.0
    curr = 1.0 + k - x
    for i in range(1, n):
        prev, curr = curr, ((2 * i + k + 1 - x) * curr - (i + k) * prev) / (i + 1)
    return curr


def laguerre_gen_sequence(n_max: int, k: int, x: float) -> np.ndarray:
    """All of L_0^(k)(x) ... L_{n_max}^(k)(x) from one pass of the recurrence."""
    out = np.empty(n_max + 1)
    out[0] = 1.0
    if n_max == 0:
        return out
    out[1] = 1.0 + k - x
    for i in range(1, n_max):
        out[i + 1] = ((2 * i + k + 1 - x) * out[i] - (i + k) * out[i - 1]) / (i + 1)
    return out


def log_factorial_ratio(n: int, k: int) -> float:
    """ln((n+k)! / n!) as a direct sum of logs; exact in the log domain."""
    if n < 0 or k < 0:
        raise ValueError("log_factorial_ratio requires n >= 0 and k >= 0")
    return float(sum(math.log(n + j) for j in range(1, k + 1)))


@dataclass(frozen=True)
class FockAmplitudeVector:
    """Pure-state coefficients <n|psi> in the truncated number basis."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def to_rho(self) -> "MotionalDensityMatrix":
        return MotionalDensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))


@dataclass(frozen=True)
class MotionalDensityMatrix:
    """Truncated density matrix of the motional mode in the number basis."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {entries.shape}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> float:
        return float(np.trace(self.entries).real)

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.entries + self.entries.conj().T))[0])

    def validate(self, tail_tol: float = 1e-10) -> None:
        """Raise if the Hermiticity / trace / positivity invariants fail."""
        defect = self.hermiticity_defect()
        if defect > 1e-12:
            raise ValueError(f"Hermiticity defect {defect:.3e} exceeds 1e-12")
        if abs(self.trace() - 1.0) > tail_tol:
            raise ValueError(f"trace deviates from 1 by {abs(self.trace() - 1.0):.3e}")
        lam = self.min_eigenvalue()
        if lam < -1e-9:
            raise ValueError(f"smallest eigenvalue {lam:.3e} below -1e-9")


def _as_entries(rho) -> np.ndarray:
    if isinstance(rho, MotionalDensityMatrix):
        return rho.entries
    return np.asarray(rho, dtype=complex)


def coherent_vector(amplitude: complex, trunc: Truncation) -> FockAmplitudeVector:
    """Coherent-state amplitudes c_n = e^{-|a|^2/2} a^n / sqrt(n!), in the log domain.

    Raises TruncationError when the Poisson weight beyond the cutoff exceeds
    ``trunc.tail_tol``.
    """
    alpha = complex(amplitude)
    lam = abs(alpha) ** 2
    # regularized lower incomplete gamma = Poisson tail P(X > n_max)
    tail = float(gammainc(trunc.n_max + 1, lam)) if lam > 0 else 0.0
    if tail > trunc.tail_tol:
        raise TruncationError(
            f"coherent state |alpha|^2 = {lam:.4g} keeps {tail:.3e} probability "
            f"beyond n_max = {trunc.n_max} (tail_tol = {trunc.tail_tol:.1e})"
        )
    n = np.arange(trunc.dim)
    if lam == 0.0:
        amps = np.zeros(trunc.dim, dtype=complex)
        amps[0] = 1.0
        return FockAmplitudeVector(amps)
    amps = np.exp(-0.5 * lam + n * np.log(alpha) - 0.5 * gammaln(n + 1))
    return FockAmplitudeVector(amps)


def coherent_rho(amplitude: complex, trunc: Truncation) -> MotionalDensityMatrix:
    return coherent_vector(amplitude, trunc).to_rho()


def thermal_rho(n_bar: float, trunc: Truncation) -> MotionalDensityMatrix:
    """Thermal (Bose-Einstein) state with mean occupation ``n_bar``."""
    if n_bar < 0:
        raise ValueError("n_bar must be nonnegative")
    if n_bar == 0:
        return number_rho(0, trunc)
    tail = (n_bar / (1.0 + n_bar)) ** (trunc.n_max + 1)
    if tail > trunc.tail_tol:
        raise TruncationError(
            f"thermal state n_bar = {n_bar:.4g} keeps {tail:.3e} probability "
            f"beyond n_max = {trunc.n_max}"
        )
    n = np.arange(trunc.dim)
    p = np.exp(n * math.log(n_bar) - (n + 1) * math.log(1.0 + n_bar))
    return MotionalDensityMatrix(np.diag(p.astype(complex)))


def number_rho(n: int, trunc: Truncation) -> MotionalDensityMatrix:
    if not 0 <= n <= trunc.n_max:
        raise TruncationError(f"number state |{n}> does not fit below n_max = {trunc.n_max}")
    entries = np.zeros((trunc.dim, trunc.dim), dtype=complex)
    entries[n, n] = 1.0
    return MotionalDensityMatrix(entries)


def _displaced_upper_blocks(alphas: np.ndarray, n_rows: int, n_cols: int) -> np.ndarray:
    """Entries <m|D(alpha)|n> with n >= m, batched over alpha values.

    Runs the fixed-offset (n - m constant) three-term recurrence, which works
    directly on the bounded matrix elements: the off-diagonal offset only
    shifts the Laguerre order, so each anti-diagonal needs at most n_rows
    steps and no intermediate ever exceeds unit magnitude.  Entries with
    n < m are left zero.
    """
    alphas = np.asarray(alphas, dtype=complex).ravel()
    p = alphas.size
    lam = (np.abs(alphas) ** 2)[:, None]
    k = np.arange(n_cols)[None, :]
    minus_conj = -np.conj(alphas)
    log_arg = np.log(np.where(minus_conj == 0, 1.0, minus_conj))[:, None]
    with np.errstate(under="ignore"):
        e0 = np.exp(-0.5 * lam + k * log_arg - 0.5 * gammaln(k + 1.0))
    e0[alphas == 0] = 0.0
    e0[alphas == 0, 0] = 1.0
    out = np.zeros((p, n_rows, n_cols), dtype=complex)
    out[:, 0, :] = e0
    prev = np.zeros_like(e0)
    curr = e0
    kf = k.astype(float)
    for j in range(min(n_rows, n_cols) - 1):
        with np.errstate(under="ignore"):
            nxt = ((2 * j + kf + 1 - lam) * curr - math.sqrt(j) * np.sqrt(j + kf) * prev) / (
                math.sqrt(j + 1) * np.sqrt(j + 1 + kf)
            )
        prev, curr = curr, nxt
        out[:, j + 1, j + 1 :] = curr[:, : n_cols - j - 1]
    return out


def _displaced_blocks(alphas: np.ndarray, n_rows: int, n_cols: int) -> np.ndarray:
    """Full blocks <m|D(alpha)|n>, m < n_rows, n < n_cols, batched over alpha."""
    alphas = np.asarray(alphas, dtype=complex).ravel()
    out = _displaced_upper_blocks(alphas, n_rows, n_cols)
    # Lower triangle via D(alpha)_{mn} = conj(D(-alpha)_{nm}).
    mirror_rows = min(n_cols, n_rows - 1)
    if mirror_rows >= 1:
        mirror = _displaced_upper_blocks(-alphas, mirror_rows, n_rows)
        lower = np.tril(mirror.conj().transpose(0, 2, 1), k=-1)
        out[:, :, :mirror_rows] += lower
    return out


def displaced_number_columns(alpha: complex, n_rows: int, n_cols: int) -> np.ndarray:
    """Matrix block <m|D(alpha)|n> for m < n_rows, n < n_cols.

    Exact matrix elements of the untruncated operator up to roundoff; see
    ``_displaced_upper_blocks`` for the evaluation scheme.
    """
    return _displaced_blocks(np.array([complex(alpha)]), n_rows, n_cols)[0]


def displacement_unitary(alpha: complex, dim: int) -> np.ndarray:
    """exp(alpha a^dag - conj(alpha) a) on the truncated space.

    Exactly unitary within the truncation (so displacements compose and
    invert cleanly), at the price of deviating from the untruncated operator's
    matrix elements near the cutoff; ``displaced_number_columns`` provides the
    complementary exact-element construction.
    """
    alpha = complex(alpha)
    n = np.arange(1, dim)
    generator = np.zeros((dim, dim), dtype=complex)
    generator += np.diag(-np.conj(alpha) * np.sqrt(n), k=1)
    generator += np.diag(alpha * np.sqrt(n), k=-1)
    return expm(generator)


def displacement_matrix(alpha: complex, trunc: Truncation) -> np.ndarray:
    """Truncated coherent displacement operator D(alpha) = exp(alpha a^dag - conj(alpha) a).

    Requires |alpha|^2 <= n_max / 4 so the deviation from the untruncated
    operator stays confined to the top quarter of the basis.
    """
    lam = abs(complex(alpha)) ** 2
    if lam > trunc.n_max / 4:
        raise TruncationError(
            f"|alpha|^2 = {lam:.4g} exceeds n_max/4 = {trunc.n_max / 4:.4g}; "
            "enlarge the cutoff before displacing this far"
        )
    return displacement_unitary(alpha, trunc.dim)


def displaced_diagonals(rho, alpha: complex, n_upper: int) -> np.ndarray:
    """Diagonal elements <n| D^dag(alpha) rho D(alpha) |n> for n = 0 .. n_upper.

    Because rho has finite support, the sandwich only needs the exact
    rectangular block of displacement matrix elements; there is no additional
    truncation error beyond roundoff.
    """
    entries = _as_entries(rho)
    cols = displaced_number_columns(alpha, entries.shape[0], n_upper + 1)
    return np.einsum("im,ij,jm->m", cols.conj(), entries, cols, optimize=True)


@dataclass(frozen=True)
class MomentSet:
    """Normally-ordered single-time moments of the motional mode."""

    mean_a: complex
    mean_a2: complex
    mean_n: float
    mean_na: complex  # <n a> = <a^dag a a>
    mean_n2: float

    def validate(self, atol: float = 1e-12) -> None:
        if self.mean_n < -atol:
            raise ValueError(f"mean_n = {self.mean_n:.3e} is negative")
        if self.mean_n2 < self.mean_n**2 - atol:
            raise ValueError("number variance is negative")
        if abs(self.mean_a) ** 2 > self.mean_n + atol:
            raise ValueError("|<a>|^2 exceeds <n>")


def moments_from_rho(rho) -> MomentSet:
    """Moments <a>, <a^2>, <n>, <a^dag a a>, <n^2> by direct index summation."""
    entries = _as_entries(rho)
    dim = entries.shape[0]
    n = np.arange(dim)
    diag = np.diagonal(entries)
    mean_n = np.sum(n * diag)
    mean_n2 = np.sum(n.astype(float) ** 2 * diag)
    scale = max(1.0, abs(mean_n2))
    if abs(mean_n.imag) > 1e-12 * scale or abs(mean_n2.imag) > 1e-12 * scale:
        raise ValueError("number moments acquired a non-negligible imaginary part")
    sub1 = np.diagonal(entries, offset=-1)  # rho[j, j-1], j = 1..
    j1 = n[1:]
    mean_a = np.sum(np.sqrt(j1) * sub1)
    mean_na = np.sum((j1 - 1) * np.sqrt(j1) * sub1)
    if dim >= 2:
        sub2 = np.diagonal(entries, offset=-2)  # rho[j, j-2], j = 2..
        j2 = n[2:]
        mean_a2 = np.sum(np.sqrt(j2 * (j2 - 1)) * sub2)
    else:
        mean_a2 = 0.0 + 0.0j
    return MomentSet(
        mean_a=complex(mean_a),
        mean_a2=complex(mean_a2),
        mean_n=float(mean_n.real),
        mean_na=complex(mean_na),
        mean_n2=float(mean_n2.real),
    )


def trace_distance(rho_a, rho_b) -> float:
    """Half the trace norm of the difference of two density matrices."""
    a = _as_entries(rho_a)
    b = _as_entries(rho_b)
    dim = max(a.shape[0], b.shape[0])
    pad_a = np.zeros((dim, dim), dtype=complex)
    pad_b = np.zeros((dim, dim), dtype=complex)
    pad_a[: a.shape[0], : a.shape[1]] = a
    pad_b[: b.shape[0], : b.shape[1]] = b
    diff = pad_a - pad_b
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))
