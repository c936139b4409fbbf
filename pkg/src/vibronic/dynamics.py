"""Analytic solution of the detuned nonlinear Jaynes-Cummings model.

The motional mode of a trapped ion is driven via a quantized pump mode on the
k-th vibrational sideband.  Each pair of bare states |2,m,n> and |1,m+1,n+k>
forms a closed two-level block; diagonalizing the blocks gives the dressed
branches from which the reduced motional density matrix follows in closed
form for a coherent pump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc, gammaln

from .errors import TruncationError
from .fock import (
    MotionalDensityMatrix,
    Truncation,
    coherent_vector,
    laguerre_gen,
    laguerre_gen_sequence,
    log_factorial_ratio,
)

__all__ = [
    "ModelParams",
    "EigenBranch",
    "CavityWindow",
    "f_k_diag",
    "rabi",
    "eigen_branch",
    "cavity_window",
    "MotionalEvolution",
    "reduced_rho",
]

#: |Omega| below this multiple of max(1, |detuning|) is treated as uncoupled.
DEGENERACY_CUTOFF = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the driven vibronic system, in coupling units.

    The pump (laser) frequency is derived, not stored:
    ``omega_L = omega21 - k_sideband * nu + delta_omega``.  The coupling has
    unit magnitude by convention; only its phase is adjustable.  The motional
    input state is the coherent state ``alpha0`` unless an explicit density
    matrix ``rho0`` is supplied.
    """

    eta: float = 0.3
    delta_phi: float = 0.0
    k_sideband: int = 0
    delta_omega: float = 20.0
    nu: float = 5000.0
    omega21: float = 1e5
    kappa_phase: float = 0.0
    beta0: complex = 100.0 + 0.0j
    alpha0: complex = complex(math.sqrt(8.0))
    rho0: np.ndarray | None = None

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.k_sideband < 0:
            raise ValueError(f"k_sideband must be >= 0, got {self.k_sideband}")
        if abs(self.beta0) == 0:
            raise ValueError("beta0 must be nonzero (the pump drives the dynamics)")

    @property
    def kappa(self) -> complex:
        return complex(math.cos(self.kappa_phase), math.sin(self.kappa_phase))

    @property
    def omega_laser(self) -> float:
        return self.omega21 - self.k_sideband * self.nu + self.delta_omega


def f_k_diag(n: int, params: ModelParams) -> float:
    """Diagonal mode-function value for the n-th motional level.

    Half of e^{i dphi - eta^2/2} (i eta)^k n!/(n+k)! L_n^(k)(eta^2) plus its
    conjugate; the factorial ratio is evaluated in the log domain.  The result
    is real by construction.
    """
    eta, k = params.eta, params.k_sideband
    z = (
        0.5
        * np.exp(1j * params.delta_phi - eta**2 / 2)
        * (1j * eta) ** k
        * math.exp(-log_factorial_ratio(n, k))
        * laguerre_gen(n, k, eta**2)
    )
    return float(2.0 * z.real)


def rabi(m: int, n: int, params: ModelParams) -> complex:
    """Coupling strength of the |2,m,n> <-> |1,m+1,n+k> block."""
    k = params.k_sideband
    return (
        2.0
        * params.kappa
        * math.sqrt(m + 1)
        * f_k_diag(n, params)
        * math.exp(0.5 * log_factorial_ratio(n, k))
    )


@dataclass(frozen=True)
class EigenBranch:
    """Dressed-branch quantities of one (m, n) block.

    ``w1`` and ``w2`` are the squared excited-state amplitude and the
    excited-times-shifted amplitude product entering the reduced density
    matrix; they stay finite through the uncoupled limit, where the (c, alpha)
    parametrization degenerates to the bare states.
    """

    m: int
    n: int
    Omega: complex
    alpha_plus: complex
    alpha_minus: complex
    c_plus: float
    c_minus: float
    omega_plus: float
    omega_minus: float
    degenerate: bool
    w1_plus: float
    w1_minus: float
    w2_plus: complex
    w2_minus: complex


def eigen_branch(m: int, n: int, params: ModelParams) -> EigenBranch:
    """Diagonalize the (m, n) block of the interaction."""
    omega = rabi(m, n, params)
    dw = params.delta_omega
    a2 = abs(omega) ** 2
    r = math.sqrt(dw**2 + a2)
    mean = 0.5 * (
        dw * (2 * m + 1)
        + params.nu * (2 * n - 2 * params.k_sideband * m)
        + params.omega21 * (2 * m + 2)
    )
    omega_plus = mean + 0.5 * r
    omega_minus = mean - 0.5 * r
    degenerate = abs(omega) < DEGENERACY_CUTOFF * max(1.0, abs(dw))
    if degenerate:
        # Uncoupled limit: the eigenstates are the bare states.  The branch
        # holding |2,m,n> is the one whose frequency tends to the bare
        # excited-state energy (mean - dw/2).
        bare2_is_minus = dw >= 0
        return EigenBranch(
            m=m,
            n=n,
            Omega=omega,
            alpha_plus=0.0j,
            alpha_minus=0.0j,
            c_plus=0.0 if bare2_is_minus else 1.0,
            c_minus=1.0 if bare2_is_minus else 0.0,
            omega_plus=omega_plus,
            omega_minus=omega_minus,
            degenerate=True,
            w1_plus=0.0 if bare2_is_minus else 1.0,
            w1_minus=1.0 if bare2_is_minus else 0.0,
            w2_plus=0.0j,
            w2_minus=0.0j,
        )
    alpha_plus = (dw + r) / omega
    alpha_minus = (dw - r) / omega
    c_plus = 1.0 / math.sqrt(1.0 + abs(alpha_plus) ** 2)
    c_minus = 1.0 / math.sqrt(1.0 + abs(alpha_minus) ** 2)
    den_plus = a2 + (dw + r) ** 2
    den_minus = a2 + (dw - r) ** 2
    return EigenBranch(
        m=m,
        n=n,
        Omega=omega,
        alpha_plus=alpha_plus,
        alpha_minus=alpha_minus,
        c_plus=c_plus,
        c_minus=c_minus,
        omega_plus=omega_plus,
        omega_minus=omega_minus,
        degenerate=False,
        w1_plus=a2 / den_plus,
        w1_minus=a2 / den_minus,
        w2_plus=np.conj(omega) * (dw + r) / den_plus,
        w2_minus=np.conj(omega) * (dw - r) / den_minus,
    )


@dataclass(frozen=True)
class CavityWindow:
    """Poisson window over pump photon numbers with renormalized weights."""

    m_lo: int
    m_hi: int
    log_weights: np.ndarray  # raw log-Poisson weights over [m_lo, m_hi]
    weights: np.ndarray  # renormalized to sum to 1
    coverage: float  # Poisson mass of the window before renormalization

    def __post_init__(self):
        self.log_weights.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def size(self) -> int:
        return self.m_hi - self.m_lo + 1


#: Minimum Poisson mass a cavity window must cover.
WINDOW_COVERAGE_FLOOR = 1.0 - 1e-10


def _poisson_window_mass(lam: float, m_lo: int, m_hi: int) -> float:
    upper = float(gammaincc(m_hi + 1, lam))
    lower = float(gammaincc(m_lo, lam)) if m_lo > 0 else 0.0
    return upper - lower


def cavity_window(beta0: complex, coverage_sigmas: float = 7.0) -> CavityWindow:
    """Photon-number window covering the pump's Poisson distribution.

    Starts from mean +- coverage_sigmas standard deviations and widens until
    the window holds at least ``WINDOW_COVERAGE_FLOOR`` of the mass, which the
    sigma rule alone does not guarantee for small pump amplitudes.
    """
    amp = abs(complex(beta0))
    if amp == 0:
        raise ValueError("beta0 must be nonzero")
    lam = amp**2
    m_lo = max(0, math.floor(lam - coverage_sigmas * amp))
    m_hi = math.ceil(lam + coverage_sigmas * amp)
    step = max(1, math.ceil(0.5 * amp))
    while _poisson_window_mass(lam, m_lo, m_hi) < WINDOW_COVERAGE_FLOOR:
        m_lo = max(0, m_lo - step)
        m_hi += step
    m = np.arange(m_lo, m_hi + 1)
    log_w = m * math.log(lam) - lam - gammaln(m + 1)
    w = np.exp(log_w)
    coverage = float(w.sum())
    return CavityWindow(
        m_lo=int(m_lo),
        m_hi=int(m_hi),
        log_weights=log_w,
        weights=w / coverage,
        coverage=coverage,
    )


class MotionalEvolution:
    """Reduced motional density matrix at arbitrary times for fixed parameters.

    Precomputes the dressed-branch tables over the cavity window once; each
    time point then costs two Gram-matrix products.  Instances are immutable
    after construction and safe to share across workers.
    """

    def __init__(
        self,
        params: ModelParams,
        trunc: Truncation = Truncation(),
        coverage_sigmas: float = 7.0,
    ):
        self.params = params
        self.trunc = trunc
        self.window = cavity_window(params.beta0, coverage_sigmas)
        k = params.k_sideband
        n_max = trunc.n_max
        if n_max - k < 0:
            raise TruncationError(f"n_max = {n_max} cannot hold a sideband shift of {k}")

        if params.rho0 is not None:
            rho_in = np.asarray(params.rho0, dtype=complex)
            if rho_in.shape[0] > trunc.dim:
                raise TruncationError(
                    f"input state dimension {rho_in.shape[0]} exceeds cutoff {trunc.dim}"
                )
            padded = np.zeros((trunc.dim, trunc.dim), dtype=complex)
            padded[: rho_in.shape[0], : rho_in.shape[0]] = rho_in
            rho_in = padded
        else:
            rho_in = np.outer(
                coherent_vector(params.alpha0, trunc).amplitudes,
                coherent_vector(params.alpha0, trunc).amplitudes.conj(),
            )
        # The shifted output block |n+k><n'+k| must fit below the cutoff.
        dropped = float(np.sum(np.diagonal(rho_in).real[n_max - k + 1 :]))
        if dropped > trunc.tail_tol:
            raise TruncationError(
                f"input state keeps {dropped:.3e} weight above n_max - k = {n_max - k}; "
                "raise n_max or shrink the input state"
            )
        self._rho_in = rho_in

        n = np.arange(trunc.dim)
        eta = params.eta
        lag = laguerre_gen_sequence(n_max, k, eta**2)
        if k:
            log_ratio = np.sum(np.log(n[:, None] + np.arange(1, k + 1)[None, :]), axis=1)
        else:
            log_ratio = np.zeros(trunc.dim)
        phase_factor = 0.5 * np.exp(1j * params.delta_phi - eta**2 / 2) * (1j * eta) ** k
        f_diag = 2.0 * (phase_factor * np.exp(-log_ratio) * lag).real
        coupling = f_diag * np.exp(0.5 * log_ratio)  # f_k(n) * sqrt((n+k)!/n!)

        m = np.arange(self.window.m_lo, self.window.m_hi + 1)
        omega = 2.0 * params.kappa * np.sqrt(m + 1.0)[:, None] * coupling[None, :]
        a2 = np.abs(omega) ** 2
        dw = params.delta_omega
        r = np.sqrt(dw**2 + a2)
        degenerate = a2 < (DEGENERACY_CUTOFF * max(1.0, abs(dw))) ** 2
        den_plus = a2 + (dw + r) ** 2
        den_minus = a2 + (dw - r) ** 2
        den_plus[degenerate] = 1.0
        den_minus[degenerate] = 1.0
        w1_plus = a2 / den_plus
        w1_minus = a2 / den_minus
        w2_plus = np.conj(omega) * (dw + r) / den_plus
        w2_minus = np.conj(omega) * (dw - r) / den_minus
        bare2_plus = dw < 0  # which branch carries |2,m,n> when uncoupled
        w1_plus[degenerate] = 1.0 if bare2_plus else 0.0
        w1_minus[degenerate] = 0.0 if bare2_plus else 1.0
        w2_plus[degenerate] = 0.0
        w2_minus[degenerate] = 0.0
        self._w1 = (w1_plus, w1_minus)
        self._w2 = (w2_plus, w2_minus)
        # Phases omit the per-m common term (detuning, pump, and electronic
        # energies): it cancels exactly between bra and ket at equal m, which
        # also keeps omega21-sized numbers out of the phase arithmetic.
        self._omega_reduced = (
            params.nu * n[None, :] + 0.5 * r,
            params.nu * n[None, :] - 0.5 * r,
        )

    def rho(self, t: float) -> MotionalDensityMatrix:
        """Reduced motional state at time t (units of inverse coupling)."""
        if t < 0:
            raise ValueError(f"t must be nonnegative, got {t}")
        phase_plus = np.exp(-1j * t * self._omega_reduced[0])
        phase_minus = np.exp(-1j * t * self._omega_reduced[1])
        a = self._w1[0] * phase_plus + self._w1[1] * phase_minus
        b = self._w2[0] * phase_plus + self._w2[1] * phase_minus
        weights = self.window.weights
        gram_keep = (weights[:, None] * a).T @ a.conj()
        gram_shift = (weights[:, None] * b).T @ b.conj()
        out = gram_keep * self._rho_in
        k = self.params.k_sideband
        if k:
            keep = self.trunc.dim - k
            out[k:, k:] += (gram_shift * self._rho_in)[:keep, :keep]
        else:
            out += gram_shift * self._rho_in
        out = 0.5 * (out + out.conj().T)
        return MotionalDensityMatrix(out)


def reduced_rho(
    t: float,
    params: ModelParams,
    trunc: Truncation = Truncation(),
    coverage_sigmas: float = 7.0,
) -> MotionalDensityMatrix:
    """One-shot evaluation of the reduced motional state at time t."""
    return MotionalEvolution(params, trunc, coverage_sigmas).rho(t)
