"""Brute-force validation of the analytic motional evolution.

Assembles the full vibronic Hamiltonian on the electronic x pump x motional
product space, exponentiates it by Hermitian eigendecomposition, and traces
out everything but the motion.  Deliberately independent of the dressed-branch
algebra so the two paths check each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

from .dynamics import ModelParams, f_k_diag
from .errors import TruncationError
from .fock import MotionalDensityMatrix, Truncation, coherent_vector, trace_distance

__all__ = ["TripartiteOracle", "oracle_evolve", "oracle_check", "OracleReport"]

#: Largest pump amplitude the dense oracle accepts.
MAX_ORACLE_BETA0 = 3.0


def _annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)


class TripartiteOracle:
    """Dense evolution of electronic (dim 2) x pump x motional states."""

    def __init__(self, params: ModelParams, cavity_dim: int, motional_dim: int):
        if abs(params.beta0) > MAX_ORACLE_BETA0:
            raise TruncationError(
                f"|beta0| = {abs(params.beta0):.3g} exceeds {MAX_ORACLE_BETA0}; "
                "the dense oracle only handles small pump amplitudes"
            )
        lam = abs(params.beta0) ** 2
        tail = float(gammainc(cavity_dim, lam))
        if tail > 1e-9:
            raise TruncationError(
                f"cavity_dim = {cavity_dim} keeps {tail:.3e} pump weight beyond the cutoff"
            )
        self.params = params
        self.cavity_dim = cavity_dim
        self.motional_dim = motional_dim

        k = params.k_sideband
        a = _annihilation(motional_dim)
        b = _annihilation(cavity_dim)
        n_mot = a.conj().T @ a
        n_cav = b.conj().T @ b
        i2 = np.eye(2, dtype=complex)
        ic = np.eye(cavity_dim, dtype=complex)
        im = np.eye(motional_dim, dtype=complex)
        proj_excited = np.diag([0.0, 1.0]).astype(complex)  # |2><2|
        flip_up = np.zeros((2, 2), dtype=complex)  # |2><1|
        flip_up[1, 0] = 1.0

        f_diag = np.diag([f_k_diag(n, params) for n in range(motional_dim)]).astype(complex)
        mode_op = f_diag @ np.linalg.matrix_power(a, k)

        h0 = (
            params.nu * np.kron(i2, np.kron(ic, n_mot))
            + params.omega_laser * np.kron(i2, np.kron(n_cav, im))
            + params.omega21 * np.kron(proj_excited, np.kron(ic, im))
        )
        h_int = params.kappa * np.kron(flip_up, np.kron(b, mode_op))
        h_int = h_int + h_int.conj().T
        self.hamiltonian = h0 + h_int
        self._eigvals, self._eigvecs = np.linalg.eigh(self.hamiltonian)

    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.hamiltonian - self.hamiltonian.conj().T)))

    def initial_state(self) -> np.ndarray:
        """Excited electronic state x coherent pump x coherent motion."""
        p = self.params
        if p.rho0 is not None:
            raise ValueError("the dense oracle only evolves coherent motional inputs")
        cav = coherent_vector(p.beta0, Truncation(self.cavity_dim - 1, 1e-9)).amplitudes
        mot = coherent_vector(p.alpha0, Truncation(self.motional_dim - 1, 1e-6)).amplitudes
        excited = np.array([0.0, 1.0], dtype=complex)
        return np.kron(excited, np.kron(cav, mot))

    def motional_rho(self, t: float) -> MotionalDensityMatrix:
        """Evolve and partial-trace over the electronic and pump indices."""
        psi0 = self.initial_state()
        phases = np.exp(-1j * self._eigvals * t)
        psi_t = self._eigvecs @ (phases * (self._eigvecs.conj().T @ psi0))
        blocks = psi_t.reshape(2, self.cavity_dim, self.motional_dim)
        rho = np.einsum("imn,imk->nk", blocks, blocks.conj())
        return MotionalDensityMatrix(rho)


def oracle_evolve(
    t: float,
    params: ModelParams,
    cavity_dim: int,
    motional_dim: int,
) -> MotionalDensityMatrix:
    """One-shot brute-force reduced motional state at time t."""
    return TripartiteOracle(params, cavity_dim, motional_dim).motional_rho(t)


@dataclass(frozen=True)
class OracleReport:
    """Trace-distance comparison between the analytic and brute-force paths."""

    times: np.ndarray
    distances: np.ndarray
    threshold: float

    @property
    def max_distance(self) -> float:
        return float(np.max(self.distances))

    @property
    def passed(self) -> bool:
        return bool(self.max_distance < self.threshold)


def oracle_check(
    params: ModelParams,
    times: np.ndarray,
    trunc: Truncation,
    cavity_dim: int,
    coverage_sigmas: float = 10.0,
    threshold: float = 1e-8,
    oracle_params: ModelParams | None = None,
) -> OracleReport:
    """Compare the analytic reduced state against the dense oracle.

    ``oracle_params`` lets a caller deliberately mismatch the two paths as a
    negative control; by default both use ``params``.
    """
    from .dynamics import MotionalEvolution

    evolution = MotionalEvolution(params, trunc, coverage_sigmas)
    oracle = TripartiteOracle(oracle_params or params, cavity_dim, trunc.dim)
    times = np.asarray(times, dtype=float)
    distances = np.array(
        [trace_distance(evolution.rho(t), oracle.motional_rho(t)) for t in times]
    )
    return OracleReport(times=times, distances=distances, threshold=threshold)
