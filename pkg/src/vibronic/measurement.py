"""Simulation of the displaced probe-cycle reconstruction protocol.

A vibronic state (electronic two-level system x motion) is read out by
repeating: coherent displacement, carrier drive on the weak transition for a
chosen interaction time, then a fluorescence test on the strong auxiliary
transition.  No-fluorescence outcomes condition the state without recoil and
their probabilities are linear in the displaced diagonal elements, which feed
the Wigner-function matrix, characteristic functions, moment extraction by
finite differences, and the regularized P-function matrix.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ModelParams, f_k_diag
from .errors import (
    ConvergenceWarning,
    DomainError,
    IllConditionedDesign,
    StencilOutOfDomain,
    TruncationError,
)
from .fock import MomentSet, _as_entries, _displaced_blocks, displacement_unitary
from .phasespace import FilterSpec, PhaseGrid, QuasiProbMap, disc_filter, witness_kernel

__all__ = [
    "VibronicState",
    "ProbeSchedule",
    "WignerMatrixSample",
    "WignerGrid",
    "CharacteristicFunctionMatrix",
    "ReconstructionResult",
    "displace_vibronic",
    "probe_rates",
    "probe_unitary_blocks",
    "probe_cycle",
    "no_fluorescence_probability",
    "schedule_family",
    "extract_rho_nn",
    "wigner_matrix",
    "wigner_grid",
    "cf_matrix_from_wigner",
    "moments_from_cf",
    "cf_moment_set",
    "p_matrix_series",
    "p_matrix_integral",
]

#: |beta| window where CFs rebuilt from Wigner samples remain reliable.
CF_FROM_WIGNER_MAX_BETA = 3.0

#: Condition-number gate for probe-schedule design matrices.
DESIGN_CONDITION_LIMIT = 1e8


@dataclass(frozen=True)
class VibronicState:
    """2x2 array of motional blocks rho_ij, electronic indices i, j in {1, 2}.

    ``blocks[0, 0]`` is the ground-ground block rho_11, ``blocks[1, 1]`` the
    excited-excited block rho_22.  Conditioned states may be subnormalized.
    """

    blocks: np.ndarray

    def __post_init__(self):
        blocks = np.asarray(self.blocks, dtype=complex)
        if blocks.ndim != 4 or blocks.shape[:2] != (2, 2) or blocks.shape[2] != blocks.shape[3]:
            raise ValueError(f"blocks must have shape (2, 2, d, d), got {blocks.shape}")
        blocks.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @property
    def dim(self) -> int:
        return self.blocks.shape[2]

    @classmethod
    def from_motional(cls, rho_mot, electronic: str = "excited") -> "VibronicState":
        """Product state with all weight in one electronic level."""
        entries = _as_entries(rho_mot)
        dim = entries.shape[0]
        blocks = np.zeros((2, 2, dim, dim), dtype=complex)
        idx = 1 if electronic == "excited" else 0
        blocks[idx, idx] = entries
        return cls(blocks)

    def trace(self) -> float:
        return float(np.trace(self.blocks[0, 0]).real + np.trace(self.blocks[1, 1]).real)

    def validate(self, atol: float = 1e-9) -> None:
        b = self.blocks
        for i in (0, 1):
            if np.max(np.abs(b[i, i] - b[i, i].conj().T)) > atol:
                raise ValueError(f"diagonal block {i} is not Hermitian")
        if np.max(np.abs(b[0, 1] - b[1, 0].conj().T)) > atol:
            raise ValueError("off-diagonal blocks are not conjugate transposes")
        tr = self.trace()
        if not 0.0 < tr <= 1.0 + 1e-12:
            raise ValueError(f"total trace {tr} outside (0, 1]")


@dataclass(frozen=True)
class ProbeSchedule:
    """Interaction times of consecutive probe cycles at one displacement."""

    displacement: complex
    times: tuple[float, ...]
    kappa_prime: float = 1.0

    def __post_init__(self):
        if len(self.times) < 1:
            raise ValueError("a probe schedule needs at least one interaction time")
        if any(t <= 0 for t in self.times):
            raise ValueError("interaction times must be positive")
        if self.kappa_prime <= 0:
            raise ValueError("kappa_prime must be positive")


def displace_vibronic(state: VibronicState, alpha: complex, out_dim: int | None = None) -> VibronicState:
    """Conjugate every motional block by the displacement: rho -> D^dag rho D.

    The returned blocks are exact matrix elements of the displaced state;
    weight moved beyond ``out_dim`` is lost, which subnormalizes the result.
    """
    dim = state.dim
    if out_dim is None:
        out_dim = dim
        if abs(alpha) ** 2 > (dim - 1) / 4:
            raise TruncationError(
                f"|alpha|^2 = {abs(alpha)**2:.3g} exceeds (dim-1)/4; pass a larger out_dim"
            )
    unitary = displacement_unitary(alpha, out_dim)
    new = np.empty((2, 2, out_dim, out_dim), dtype=complex)
    padded = np.zeros((out_dim, out_dim), dtype=complex)
    for i in (0, 1):
        for j in (0, 1):
            padded[:dim, :dim] = state.blocks[i, j]
            new[i, j] = unitary.conj().T @ padded @ unitary
    return VibronicState(new)


def probe_rates(dim: int, params: ModelParams, kappa_prime: float = 1.0) -> np.ndarray:
    """Per-level carrier Rabi rates g_n = |kappa'| f_0(n; eta)."""
    carrier = ModelParams(
        eta=params.eta,
        delta_phi=params.delta_phi,
        k_sideband=0,
        delta_omega=params.delta_omega,
        nu=params.nu,
        omega21=params.omega21,
        beta0=params.beta0,
    )
    return kappa_prime * np.array([f_k_diag(n, carrier) for n in range(dim)])


def probe_unitary_blocks(
    tau: float, params: ModelParams, kappa_prime: float, dim: int
) -> np.ndarray:
    """Per-level 2x2 carrier rotations, shape (dim, 2, 2).

    On span{|1,n>, |2,n>} the drive acts as [[cos, -i sin], [-i sin, cos]] of
    the mixing angle |kappa'| f_0(n; eta) tau.  Only cosine-squared factors
    are observable in no-fluorescence probabilities, so the off-diagonal
    phase convention (-i) is internal.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    theta = probe_rates(dim, params, kappa_prime) * tau
    blocks = np.zeros((dim, 2, 2), dtype=complex)
    blocks[:, 0, 0] = np.cos(theta)
    blocks[:, 1, 1] = np.cos(theta)
    blocks[:, 0, 1] = -1j * np.sin(theta)
    blocks[:, 1, 0] = -1j * np.sin(theta)
    return blocks


def _apply_unitary(state: VibronicState, rotations: np.ndarray) -> np.ndarray:
    """U rho U^dag for a per-level block-diagonal electronic rotation."""
    b = state.blocks
    out = np.zeros_like(b)
    for i in (0, 1):
        for j in (0, 1):
            for ii in (0, 1):
                for jj in (0, 1):
                    out[i, j] += (
                        rotations[:, i, ii][:, None]
                        * b[ii, jj]
                        * rotations[:, j, jj].conj()[None, :]
                    )
    return out


def probe_cycle(
    state: VibronicState, tau: float, params: ModelParams, kappa_prime: float = 1.0
) -> VibronicState:
    """One carrier drive followed by no-fluorescence conditioning.

    Evolves by the probe rotation and projects the electronic index onto the
    excited level; the returned state is unnormalized and its trace is the
    no-fluorescence probability (times the input trace).
    """
    rotations = probe_unitary_blocks(tau, params, kappa_prime, state.dim)
    evolved = _apply_unitary(state, rotations)
    blocks = np.zeros_like(evolved)
    blocks[1, 1] = evolved[1, 1]
    return VibronicState(blocks)


def no_fluorescence_probability(
    state: VibronicState, schedule: ProbeSchedule, params: ModelParams
) -> float:
    """Probability of an all-no-fluorescence record for one schedule.

    The displacement of the schedule is applied to the motional blocks first;
    the state is then driven and conditioned once per interaction time.
    """
    out_dim = state.dim + int(math.ceil(abs(schedule.displacement) ** 2 + 6 * abs(schedule.displacement))) + 8
    current = displace_vibronic(state, schedule.displacement, out_dim)
    for tau in schedule.times:
        current = probe_cycle(current, tau, params, schedule.kappa_prime)
    return current.trace()


# ---------------------------------------------------------------------------
# Linear reconstruction of displaced diagonal elements


def schedule_family(
    n_levels: int,
    displacement: complex,
    kappa_prime: float = 1.0,
    mode: str = "full",
    tau0: float = 1.2,
    oversample: float = 3.0,
) -> list[ProbeSchedule]:
    """Default probe-time family for reconstructing ``n_levels`` diagonal elements.

    ``mode='excited'`` assumes all weight sits in the excited electronic
    level and uses a single-cycle linear time ladder tau_s = tau0 * s.  The
    general mode pairs three first-cycle times with a second-cycle ladder so
    that ground, excited, and coherence contributions separate.  The ladder
    must stretch past the inverse spacing of the per-level Rabi rates for the
    design to condition; the defaults handle a level count of a few tens at a
    Lamb-Dicke parameter around 0.3.
    """
    if n_levels < 1:
        raise ValueError("n_levels must be positive")
    count = int(math.ceil(oversample * n_levels)) + 2
    if mode == "excited":
        return [
            ProbeSchedule(displacement, (tau0 * s,), kappa_prime)
            for s in range(1, count + 1)
        ]
    if mode == "full":
        first = (0.75 * tau0, 1.75 * tau0, 2.85 * tau0)
        return [
            ProbeSchedule(displacement, (t1, tau0 * s), kappa_prime)
            for t1 in first
            for s in range(1, count + 1)
        ]
    raise ValueError(f"unknown schedule mode '{mode}'")


def _design_matrix(
    schedules: list[ProbeSchedule], rates: np.ndarray, mode: str
) -> np.ndarray:
    """Rows map (rho_11^nn, rho_22^nn, Im rho_12^nn) to no-fluorescence probabilities."""
    rows = []
    for sched in schedules:
        theta1 = rates * sched.times[0]
        tail = np.ones_like(rates)
        for tau in sched.times[1:]:
            tail = tail * np.cos(rates * tau) ** 2
        a22 = np.cos(theta1) ** 2 * tail
        if mode == "excited":
            rows.append(a22)
        else:
            a11 = np.sin(theta1) ** 2 * tail
            a12 = np.sin(2.0 * theta1) * tail
            rows.append(np.concatenate([a11, a22, a12]))
    return np.asarray(rows)


@dataclass(frozen=True)
class ReconstructionResult:
    """Displaced diagonal elements recovered from probe statistics."""

    alpha: complex
    rho11: np.ndarray
    rho22: np.ndarray
    rho12: np.ndarray  # only the imaginary part is observable; real part is 0
    residual_norm: float
    condition_number: float
    probabilities: np.ndarray
    seed: int | None = None


def extract_rho_nn(
    state: VibronicState,
    alpha: complex,
    schedules: list[ProbeSchedule],
    params: ModelParams,
    n_levels: int | None = None,
    mode: str = "full",
    shots: int | None = None,
    seed: int | None = None,
) -> ReconstructionResult:
    """Solve the probe-statistics linear system for displaced diagonals.

    Ideal mode uses exact no-fluorescence probabilities; with ``shots`` each
    schedule is measured with a binomially fluctuating frequency drawn from
    one seeded stream per schedule.  The fixed probe phase makes the real
    part of the coherence block unobservable; it is reported as zero.
    """
    if n_levels is None:
        n_levels = state.dim
    if len(schedules) < n_levels:
        raise ValueError(
            f"need at least {n_levels} schedules to resolve {n_levels} levels, got {len(schedules)}"
        )
    if any(s.displacement != schedules[0].displacement for s in schedules):
        raise ValueError("all schedules of one reconstruction must share the displacement")
    if complex(alpha) != complex(schedules[0].displacement):
        raise ValueError("schedule displacement disagrees with alpha")
    kappa_prime = schedules[0].kappa_prime
    rates = probe_rates(n_levels, params, kappa_prime)
    design = _design_matrix(schedules, rates, mode)
    condition = float(np.linalg.cond(design))
    if condition > DESIGN_CONDITION_LIMIT:
        raise IllConditionedDesign(
            f"design condition number {condition:.3e} exceeds {DESIGN_CONDITION_LIMIT:.0e}"
        )

    displaced = displace_vibronic(state, alpha, out_dim=max(n_levels, state.dim))
    truth = np.concatenate(
        [
            np.diagonal(displaced.blocks[0, 0]).real[:n_levels],
            np.diagonal(displaced.blocks[1, 1]).real[:n_levels],
            np.diagonal(displaced.blocks[0, 1]).imag[:n_levels],
        ]
    )
    if mode == "excited":
        probabilities = design @ truth[n_levels : 2 * n_levels]
    else:
        probabilities = design @ truth
    if shots is not None:
        if shots < 1:
            raise ValueError("shots must be positive")
        base = 0 if seed is None else seed
        noisy = np.empty_like(probabilities)
        for idx, p in enumerate(probabilities):
            rng = np.random.default_rng([base, idx])
            noisy[idx] = rng.binomial(shots, min(max(p, 0.0), 1.0)) / shots
        probabilities = noisy

    solution, residual, _, _ = np.linalg.lstsq(design, probabilities, rcond=None)
    res_norm = float(np.linalg.norm(design @ solution - probabilities))
    if mode == "excited":
        rho11 = np.zeros(n_levels)
        rho22 = solution
        rho12 = np.zeros(n_levels, dtype=complex)
    else:
        rho11 = solution[:n_levels]
        rho22 = solution[n_levels : 2 * n_levels]
        rho12 = 1j * solution[2 * n_levels :]
    return ReconstructionResult(
        alpha=complex(alpha),
        rho11=rho11,
        rho22=rho22,
        rho12=rho12,
        residual_norm=res_norm,
        condition_number=condition,
        probabilities=probabilities,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Wigner-function matrix and characteristic functions


@dataclass(frozen=True)
class WignerMatrixSample:
    """Electronic-index-resolved Wigner values at one phase-space point."""

    alpha: complex
    values: np.ndarray  # 2x2 complex

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != (2, 2):
            raise ValueError("values must be a 2x2 matrix")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def _block_diagonal_tables(
    state: VibronicState, alphas: np.ndarray, n_upper: int, chunk: int = 64
) -> np.ndarray:
    """Displaced diagonals of every block, shape (len(alphas), 2, 2, n_upper+1).

    Identically zero blocks are skipped, and rho_21 is filled from rho_12 by
    conjugation.
    """
    alphas = np.asarray(alphas, dtype=complex).ravel()
    out = np.zeros((alphas.size, 2, 2, n_upper + 1), dtype=complex)
    dim = state.dim
    live = [
        (i, j)
        for (i, j) in ((0, 0), (1, 1), (0, 1))
        if np.any(state.blocks[i, j])
    ]
    mirror_12 = np.array_equal(state.blocks[1, 0], state.blocks[0, 1].conj().T)
    if not mirror_12 and np.any(state.blocks[1, 0]):
        live.append((1, 0))
    for start in range(0, alphas.size, chunk):
        sel = alphas[start : start + chunk]
        cols = _displaced_blocks(sel, dim, n_upper + 1)
        for i, j in live:
            sandwich = np.matmul(state.blocks[i, j][None, :, :], cols)
            out[start : start + chunk, i, j, :] = np.einsum(
                "pnm,pnm->pm", cols.conj(), sandwich
            )
    if mirror_12:
        out[:, 1, 0, :] = out[:, 0, 1, :].conj()
    return out


def _wigner_table_size(state: VibronicState, dist: float) -> int:
    diags = np.abs(np.diagonal(state.blocks[0, 0]).real) + np.abs(
        np.diagonal(state.blocks[1, 1]).real
    )
    total = diags.sum()
    support = state.dim - 1
    if total > 0:
        cum = np.cumsum(diags)
        support = int(np.searchsorted(cum, (1.0 - 1e-14) * total))
    radius = math.sqrt(support) + dist
    return int(math.ceil(radius**2 + 8.0 * radius + 12.0))


def wigner_matrix(state: VibronicState, alpha: complex, n_upper: int | None = None) -> WignerMatrixSample:
    """Wigner-function matrix W_ij(alpha) = (2/pi) sum_n (-1)^n rho_ij^nn(alpha)."""
    if n_upper is None:
        n_upper = _wigner_table_size(state, abs(alpha))
    tables = _block_diagonal_tables(state, np.array([alpha]), n_upper)[0]
    tail = float(np.max(np.abs(tables[:, :, -3:])))
    if tail > 1e-12:
        raise TruncationError(
            f"displaced diagonals still reach {tail:.3e} at the table end; raise n_upper"
        )
    signs = np.where(np.arange(n_upper + 1) % 2 == 0, 1.0, -1.0)
    values = (2.0 / math.pi) * np.einsum("ijn,n->ij", tables, signs)
    return WignerMatrixSample(alpha=complex(alpha), values=values)


@dataclass(frozen=True)
class WignerGrid:
    """Wigner-function matrix sampled on a phase grid (row-major flattened)."""

    grid: PhaseGrid
    values: np.ndarray  # (n_points, 2, 2)
    tables: np.ndarray  # displaced diagonals (n_points, 2, 2, n_upper+1)

    @property
    def alphas(self) -> np.ndarray:
        return self.grid.alphas().ravel()


def wigner_grid(state: VibronicState, grid: PhaseGrid, n_upper: int | None = None) -> WignerGrid:
    """Sample the Wigner-function matrix over a full phase grid."""
    alphas = grid.alphas().ravel()
    if n_upper is None:
        n_upper = _wigner_table_size(state, float(np.max(np.abs(alphas))))
    tables = _block_diagonal_tables(state, alphas, n_upper)
    tail = float(np.max(np.abs(tables[:, :, :, -3:])))
    if tail > 1e-12:
        raise TruncationError(
            f"displaced diagonals still reach {tail:.3e} at the table end; raise n_upper"
        )
    signs = np.where(np.arange(n_upper + 1) % 2 == 0, 1.0, -1.0)
    values = (2.0 / math.pi) * np.einsum("pijn,n->pij", tables, signs)
    return WignerGrid(grid=grid, values=values, tables=tables)


class CharacteristicFunctionMatrix:
    """Normally-ordered characteristic-function matrix from Wigner samples.

    Fourier quadrature of the sampled Wigner-function matrix gives the
    symmetric-ordered characteristic function; the Gaussian reweighting
    e^{|beta|^2/2} converts it to normal order.  Evaluations are restricted
    to a window where quadrature noise stays below the reweighting gain.
    """

    def __init__(self, wgrid: WignerGrid, max_beta: float = CF_FROM_WIGNER_MAX_BETA):
        self.alphas = wgrid.alphas
        self.weight = wgrid.grid.spacing**2
        self.w_values = wgrid.values
        self.max_beta = max_beta

    def eval(self, betas) -> np.ndarray:
        """Phi_ij at the given points, shape (len(betas), 2, 2)."""
        betas = np.asarray(betas, dtype=complex).ravel()
        if betas.size and float(np.max(np.abs(betas))) > self.max_beta:
            raise DomainError(f"CF evaluation outside |beta| <= {self.max_beta}")
        phases = np.exp(
            betas[:, None] * self.alphas.conj()[None, :]
            - betas.conj()[:, None] * self.alphas[None, :]
        )
        sym = np.einsum("bp,pij->bij", phases, self.w_values) * self.weight
        return sym * np.exp(0.5 * np.abs(betas) ** 2)[:, None, None]

    def traced(self, betas) -> np.ndarray:
        """Motional characteristic function sum_i Phi_ii(beta)."""
        vals = self.eval(betas)
        return vals[:, 0, 0] + vals[:, 1, 1]


def cf_matrix_from_wigner(
    wgrid: WignerGrid,
    state: VibronicState | None = None,
    trace_tol: float = 1e-6,
) -> CharacteristicFunctionMatrix:
    """Build the CF matrix and verify its zero-frequency limit.

    When the originating state is supplied, Phi_ii(0) is checked against the
    block traces to ``trace_tol``; failure indicates the Wigner grid does not
    capture the state.
    """
    cf = CharacteristicFunctionMatrix(wgrid)
    if state is not None:
        at_zero = cf.eval(np.array([0.0]))[0]
        for i in (0, 1):
            expected = float(np.trace(state.blocks[i, i]).real)
            if abs(at_zero[i, i].real - expected) > trace_tol:
                raise DomainError(
                    f"Phi_{i}{i}(0) = {at_zero[i, i].real:.8f} misses the block trace "
                    f"{expected:.8f} by more than {trace_tol}"
                )
    return cf


# ---------------------------------------------------------------------------
# Moment extraction by finite differences


def _laplacian_quarter(cf_traced, center: complex, h: float) -> complex:
    """d/dbeta d/dbeta* of the CF at ``center`` (five-point cross / 4)."""
    pts = np.array([center + h, center - h, center + 1j * h, center - 1j * h, center])
    vals = cf_traced(pts)
    return (vals[0] + vals[1] + vals[2] + vals[3] - 4.0 * vals[4]) / (4.0 * h * h)


def _moment_trio_at_step(cf_traced, phi: float, h: float) -> tuple[float, float, float]:
    u = np.exp(1j * (math.pi / 2.0 - phi))
    norm = cf_traced(np.array([0.0]))[0].real
    # <x(phi)>: radial first derivative along u, divided by i
    vals = cf_traced(np.array([h * u, -h * u]))
    mean_x = ((vals[0] - vals[1]) / (2j * h)).real / norm
    # <n>: negative mixed derivative
    mean_n = (-_laplacian_quarter(cf_traced, 0.0, h)).real / norm
    # <:x n:>: mixed derivative of the radial derivative, times -1/i = i
    lap_plus = _laplacian_quarter(cf_traced, h * u, h)
    lap_minus = _laplacian_quarter(cf_traced, -h * u, h)
    mean_xn = (1j * (lap_plus - lap_minus) / (2.0 * h)).real / norm
    return mean_x, mean_n, mean_xn


def moments_from_cf(
    cf_traced,
    phi: float,
    h: float = 0.02,
    richardson: bool = True,
) -> dict[str, float]:
    """Quadrature moments <x(phi)>, <n>, <:x(phi) n:> from CF samples.

    Central second-order stencils with radial direction pi/2 - phi, which
    makes the first derivative reproduce 2 Re{e^{i phi} <a>}.  Error budget:
    O(h^2) truncation plus sampling noise amplified by 1/h (first), 1/h^2
    (mixed), 1/h^3 (third derivative); ``richardson`` combines h and h/2 to
    cancel the leading truncation term.
    """
    if not 1e-4 <= h <= 1e-1:
        raise StencilOutOfDomain(f"step h = {h} outside [1e-4, 1e-1]")
    trio_h = np.array(_moment_trio_at_step(cf_traced, phi, h))
    if richardson:
        trio_h2 = np.array(_moment_trio_at_step(cf_traced, phi, h / 2.0))
        trio = (4.0 * trio_h2 - trio_h) / 3.0
    else:
        trio = trio_h
    return {"mean_x": float(trio[0]), "mean_n": float(trio[1]), "mean_xn": float(trio[2])}


def _biharmonic_sixteenth(cf_traced, h: float) -> float:
    """d^2/dbeta^2 d^2/dbeta*^2 at the origin (13-point stencil / 16)."""
    axial = np.array([h, -h, 1j * h, -1j * h])
    diag = np.array([h + 1j * h, h - 1j * h, -h + 1j * h, -h - 1j * h])
    far = 2.0 * axial
    pts = np.concatenate([[0.0], axial, diag, far])
    vals = cf_traced(pts)
    lap2 = (
        20.0 * vals[0]
        - 8.0 * np.sum(vals[1:5])
        + 2.0 * np.sum(vals[5:9])
        + np.sum(vals[9:13])
    ) / h**4
    return float(lap2.real) / 16.0


def cf_moment_set(cf_traced, h: float = 0.02, h4: float = 0.1, richardson: bool = True) -> MomentSet:
    """Full moment set from CF samples, for criteria reconstruction.

    First to third derivatives use ``h``; the fourth derivative behind <n^2>
    uses ``h4`` with two Richardson levels, since its truncation error grows
    with high moments while its noise amplification goes like 1/h^4.
    """
    norm = cf_traced(np.array([0.0]))[0].real

    def trio(phi):
        return moments_from_cf(cf_traced, phi, h, richardson)

    t0 = trio(0.0)
    t90 = trio(math.pi / 2.0)
    mean_n = 0.5 * (t0["mean_n"] + t90["mean_n"])
    mean_a = 0.5 * (t0["mean_x"] - 1j * t90["mean_x"])
    mean_na = 0.5 * (t0["mean_xn"] - 1j * t90["mean_xn"])

    def x2(phi, step):
        u = np.exp(1j * (math.pi / 2.0 - phi))
        vals = cf_traced(np.array([step * u, -step * u, 0.0]))
        return -((vals[0] + vals[1] - 2.0 * vals[2]) / step**2).real / norm

    def x2_r(phi):
        if richardson:
            return (4.0 * x2(phi, h / 2.0) - x2(phi, h)) / 3.0
        return x2(phi, h)

    # <:x(phi)^2:> = 2 Re{e^{2 i phi} <a^2>} + 2 <n>
    s0 = x2_r(0.0)
    s45 = x2_r(math.pi / 4.0)
    mean_a2 = 0.5 * ((s0 - 2.0 * mean_n) - 1j * (s45 - 2.0 * mean_n))

    def n2(step):
        return _biharmonic_sixteenth(cf_traced, step) / norm

    if richardson:
        rich1_h = (4.0 * n2(h4 / 2.0) - n2(h4)) / 3.0
        rich1_h2 = (4.0 * n2(h4 / 4.0) - n2(h4 / 2.0)) / 3.0
        quart = (16.0 * rich1_h2 - rich1_h) / 15.0
    else:
        quart = n2(h4)
    mean_n2 = quart + mean_n  # <a^dag2 a^2> = <n^2> - <n>
    return MomentSet(
        mean_a=complex(mean_a),
        mean_a2=complex(mean_a2),
        mean_n=float(mean_n),
        mean_na=complex(mean_na),
        mean_n2=float(mean_n2),
    )


# ---------------------------------------------------------------------------
# Regularized P-function matrix


def p_matrix_series(
    state: VibronicState,
    grid: PhaseGrid,
    filt: FilterSpec,
    peak_normalized: bool = True,
    tables: np.ndarray | None = None,
) -> np.ndarray:
    """P_ij maps from the witness series, shape (2, 2, n_side, n_side).

    Reuses precomputed displaced diagonal ``tables`` when given (e.g. from a
    Wigner grid over the same phase grid).
    """
    alphas = grid.alphas().ravel()
    if tables is None:
        n_upper = _wigner_table_size(state, float(np.max(np.abs(alphas))))
        tables = _block_diagonal_tables(state, alphas, n_upper)
    n_top = tables.shape[-1] - 1
    kernel = witness_kernel(filt.width, n_top)
    prefactor = filt.width**2 / (4.0 * math.pi) if peak_normalized else filt.width**2 / 16.0
    values = prefactor * np.einsum("pijn,n->pij", tables, kernel)
    maps = values.reshape(grid.n_side, grid.n_side, 2, 2).transpose(2, 3, 0, 1)
    herm_defect = float(np.max(np.abs(maps[0, 1] - maps[1, 0].conj())))
    if herm_defect > 1e-10:
        warnings.warn(
            f"P-matrix hermiticity defect {herm_defect:.3e}", ConvergenceWarning, stacklevel=2
        )
    return maps


def p_matrix_integral(
    cf_matrix: CharacteristicFunctionMatrix, grid: PhaseGrid, filt: FilterSpec
) -> np.ndarray:
    """P_ij maps by nested quadrature of the filtered CF matrix (expensive).

    The CF values are themselves quadratures over the Wigner grid; this route
    exists as an independent cross-check of the series method.
    """
    w = filt.width
    if w > cf_matrix.max_beta:
        raise DomainError(
            f"filter width {w} exceeds the CF window |beta| <= {cf_matrix.max_beta}"
        )
    n_side = 129
    ax = np.linspace(-w, w, n_side)
    spacing = ax[1] - ax[0]
    bx, by = np.meshgrid(ax, ax)
    betas = (bx + 1j * by).ravel()
    betas = betas[np.abs(betas) <= w]
    cf_vals = cf_matrix.eval(betas)  # (B, 2, 2)
    filtered = disc_filter(betas, w)[:, None, None] * cf_vals
    alphas = grid.alphas().ravel()
    out = np.empty((alphas.size, 2, 2), dtype=complex)
    chunk = max(16, int(4e6 / max(1, betas.size)))
    for start in range(0, alphas.size, chunk):
        sel = alphas[start : start + chunk]
        phases = np.exp(
            sel[:, None] * betas.conj()[None, :] - sel.conj()[:, None] * betas[None, :]
        )
        out[start : start + chunk] = np.einsum("pb,bij->pij", phases, filtered)
    out *= spacing**2 / math.pi**2
    return out.reshape(grid.n_side, grid.n_side, 2, 2).transpose(2, 3, 0, 1)
