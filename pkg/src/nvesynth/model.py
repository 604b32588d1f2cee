"""Physical parameters and Hamiltonian builders.

All frequencies are angular and expressed in units of the effective
qubit-mode coupling ``g`` unless a caller chooses otherwise. The ensembles are
represented by collective bosonic modes (low-excitation limit), so an ensemble
of ``N`` spins coupled with strength ``g_m`` enters as one mode coupled with
``g_m * sqrt(N)``.
"""
from __future__ import annotations

import dataclasses
import functools
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from .ops import (
    HilbertSpace,
    Operator,
    annihilation,
    embed,
    number,
    sigma_eg,
    sigma_ge,
    sigma_x,
    sigma_z_half,
)

QUBIT, MODE1, MODE2 = 0, 1, 2

__all__ = [
    "SystemParams",
    "DerivedParams",
    "TimeDependentHamiltonian",
    "derive",
    "validity_warnings",
    "single_mode_space",
    "two_mode_space",
    "full_space",
    "full_hamiltonian",
    "full_model",
    "ExchangeCalibration",
    "exchange_model",
    "perturbative_offsets",
    "dressed_exchange_hamiltonian",
    "calibrate_exchange",
    "effective_jc",
    "two_mode_effective",
    "selective_drive_frequency",
    "dispersive_rotation_hamiltonian",
    "strong_driving_effective",
    "strong_driving_model",
]


@dataclass(frozen=True)
class SystemParams:
    """Rates, couplings and detunings of the two-ensemble device.

    The ensemble-side fields (``g_c``, ``g_m``, ``N``, ``Omega``, ``Delta``)
    describe the microscopic model before the cavity is eliminated; the
    schedule-side fields (``omega_b1`` ... ``lam``) describe the effective
    two-mode model used for synthesis.

    Parameters
    ----------
    g_c : float
        Qubit-cavity coupling.
    g_m : float
        Single-spin ensemble-cavity coupling.
    N : float
        Number of spins per ensemble.
    Omega : float
        Classical drive amplitude of the shift pulse.
    Delta : float
        Common detuning. ``Delta_T``, ``Delta_m`` and ``Delta_d`` default to it.
    omega_b1, omega_b2 : float
        Effective mode frequencies.
    g1, g2 : float
        Effective qubit-mode couplings.
    Omega_s : float
        Rabi amplitude of the number-selective rotations.
    delta1, delta2 : float
        Qubit-mode detunings while the qubit is parked in the dispersive point.
    lam : float
        Dispersive shift per excitation.
    kappa, gamma : float
        Cavity decay rate and spin/qubit energy-relaxation rate.
    Delta_T, Delta_m, Delta_d : float or None
        Qubit-cavity, ensemble-cavity and drive detunings.
    relax_detunings : bool
        Allow the three detunings to differ.
    """

    g_c: float = 10.0
    g_m: float = 0.1
    N: float = 1e4
    Omega: float = 1.0
    Delta: float = 100.0
    omega_b1: float = 1.0
    omega_b2: float = 1.04
    g1: float = 1.0
    g2: float = 1.0
    Omega_s: float = 5.0
    delta1: float = 0.02
    delta2: float = -0.02
    lam: float = 50.0
    kappa: float = 0.0
    gamma: float = 0.0
    Delta_T: float | None = None
    Delta_m: float | None = None
    Delta_d: float | None = None
    relax_detunings: bool = False

    def __post_init__(self):
        for name in ("g_c", "g_m", "N", "Omega", "g1", "g2", "Omega_s", "lam", "kappa", "gamma"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite non-negative number, got {value!r}")
        if self.Delta == 0:
            raise ValueError("Delta must be nonzero")
        for name in ("Delta_T", "Delta_m", "Delta_d"):
            value = getattr(self, name)
            if value is not None and value == 0:
                raise ValueError(f"{name} must be nonzero")
        if not self.relax_detunings:
            for name in ("Delta_T", "Delta_m", "Delta_d"):
                value = getattr(self, name)
                if value is not None and value != self.Delta:
                    raise ValueError(
                        f"{name}={value} differs from Delta={self.Delta}; set relax_detunings to allow this"
                    )

    @property
    def detunings(self) -> tuple[float, float, float]:
        """(Delta_T, Delta_m, Delta_d) with defaults resolved."""
        pick = lambda v: self.Delta if v is None else v
        return pick(self.Delta_T), pick(self.Delta_m), pick(self.Delta_d)

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class DerivedParams:
    """Effective single-mode quantities after eliminating the cavity."""

    omega_z: float
    omega_b: float
    g_eff: float


def derive(params: SystemParams) -> DerivedParams:
    """Stark-shifted qubit frequency, mode frequency and effective coupling."""
    D = params.Delta
    if D == 0:
        raise ValueError("Delta must be nonzero")
    return DerivedParams(
        omega_z=2.0 * params.Omega**2 / D + params.g_c**2 / D,
        omega_b=params.N * params.g_m**2 / D,
        g_eff=np.sqrt(params.N) * params.g_m * params.g_c / D,
    )


def validity_warnings(params: SystemParams, ratio: float = 10.0) -> list[str]:
    """Human-readable notes for every approximation that is not well satisfied."""
    out = []
    D = abs(params.Delta)
    big = {"g_c": params.g_c, "Omega": params.Omega, "g_m*sqrt(N)": params.g_m * np.sqrt(params.N)}
    for name, value in big.items():
        if value > 0 and D / value < ratio:
            out.append(f"|Delta|/{name} = {D / value:.3g} < {ratio:g}: cavity elimination is questionable")
    if params.Omega_s >= params.lam:
        out.append(f"Omega_s={params.Omega_s:g} >= lam={params.lam:g}: rotations are not number selective")
    return out


def single_mode_space(mode_dim: int, cavity_dim: int | None = None) -> HilbertSpace:
    dims = (2, mode_dim) if cavity_dim is None else (2, mode_dim, cavity_dim)
    return HilbertSpace(dims)


def two_mode_space(dim1: int, dim2: int | None = None, cavity_dim: int | None = None) -> HilbertSpace:
    dim2 = dim1 if dim2 is None else dim2
    dims = (2, dim1, dim2) if cavity_dim is None else (2, dim1, dim2, cavity_dim)
    return HilbertSpace(dims)


full_space = two_mode_space


@dataclass(frozen=True)
class TimeDependentHamiltonian:
    """``H(t) = static + sum_k (X_k exp(i w_k t) + h.c.)``.

    Keeping the carrier decomposition lets the integrators choose their step
    from ``max_frequency`` and evaluate ``H(t)`` cheaply.
    """

    space: HilbertSpace
    static: np.ndarray
    carriers: tuple[tuple[float, np.ndarray], ...] = field(default_factory=tuple)

    def matrix(self, t: float) -> np.ndarray:
        h = self.static.copy()
        for w, x in self.carriers:
            y = x * np.exp(1j * w * t)
            h += y + y.conj().T
        return h

    def __call__(self, t: float) -> Operator:
        return Operator(self.space, self.matrix(t))

    @property
    def max_frequency(self) -> float:
        """Largest carrier frequency plus the spectral radius bound of the operators."""
        bound = np.linalg.norm(self.static, 2) + sum(2 * np.linalg.norm(x, 2) for _, x in self.carriers)
        carrier = max((abs(w) for w, _ in self.carriers), default=0.0)
        return float(carrier + bound)

    def static_frame(self, atol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal frame in which the Hamiltonian is time independent.

        Finds real ``d`` with ``d_i - d_j = -w_k`` wherever ``X_k[i, j] != 0``,
        so that ``psi(t) = exp(-i D t) phi(t)`` with ``D = diag(d)`` turns the
        dynamics into ``i phi' = K phi`` for the constant ``K``.

        Returns
        -------
        d : ndarray
            Frame energies.
        K : ndarray
            Constant Hermitian generator ``static - D + sum_k (X_k + X_k^+)``.

        Raises
        ------
        ValueError
            If the carriers admit no such frame, or ``static`` is not diagonal.
        """
        n = self.space.dim
        off = self.static - np.diag(np.diag(self.static))
        edges: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for w, x in ((0.0, off),) + tuple(self.carriers):
            for i, j in zip(*np.nonzero(np.abs(x) > atol)):
                # d_i - d_j = -w
                edges[i].append((j, -w))
                edges[j].append((i, w))
        d = np.full(n, np.nan)
        for root in range(n):
            if not np.isnan(d[root]):
                continue
            d[root] = 0.0
            stack = [root]
            while stack:
                i = stack.pop()
                for j, w in edges[i]:
                    want = d[i] - w
                    if np.isnan(d[j]):
                        d[j] = want
                        stack.append(j)
                    elif abs(d[j] - want) > 1e-9 * (1.0 + abs(want)):
                        raise ValueError("carrier frequencies admit no static frame")
        K = self.static - np.diag(d).astype(complex)
        for _, x in self.carriers:
            K = K + x + x.conj().T
        return d, K


def _require_cavity(space: HilbertSpace) -> None:
    if space.n_factors not in (3, 4) or space.factor_dims[0] != 2:
        raise ValueError(
            "full_hamiltonian needs a (qubit, mode[, mode], cavity) space, got " f"{space.factor_dims}"
        )


def full_model(
    params: SystemParams,
    space: HilbertSpace,
    active_mode: int = 1,
    qubit_offset: float = 0.0,
    mode_offset: float = 0.0,
    spectator_frequency: float = 0.0,
) -> TimeDependentHamiltonian:
    """Microscopic qubit + ensemble + cavity Hamiltonian in the cavity frame.

    ``H(t) = g_c s_eg a e^{i D_T t} + Omega s_eg e^{i D_d t}
    + g_m sqrt(N) b^+ a e^{i D_m t} + h.c.``

    The last factor of ``space`` is the cavity. In a four-factor space only
    the ensemble ``active_mode`` couples to the cavity; the other one evolves
    freely at ``spectator_frequency``. ``qubit_offset`` and ``mode_offset``
    add static ``|e><e|`` and ``b^+ b`` terms. A static offset ``x`` on the
    qubit is the same physics as shifting ``D_T`` by ``x`` relative to
    ``D_m``, written in the frame where the exchange terms share one carrier.

    Parameters
    ----------
    params : SystemParams
    space : HilbertSpace
        ``(2, mode, cavity)`` or ``(2, mode1, mode2, cavity)``.
    active_mode : {1, 2}
    qubit_offset, mode_offset, spectator_frequency : float
    """
    _require_cavity(space)
    D_T, D_m, D_d = params.detunings
    if not params.relax_detunings and not (D_T == D_m == D_d):
        raise ValueError("unequal detunings require relax_detunings")
    cav = space.n_factors - 1
    if space.n_factors == 3:
        mode_idx, other_idx = 1, None
    else:
        if active_mode not in (1, 2):
            raise ValueError("active_mode must be 1 or 2")
        mode_idx = active_mode
        other_idx = 3 - active_mode
    a = embed(annihilation(space.factor_dims[cav]), cav, space).matrix
    b = embed(annihilation(space.factor_dims[mode_idx]), mode_idx, space).matrix
    s_eg = embed(sigma_eg(), QUBIT, space).matrix
    s_ee = s_eg @ s_eg.conj().T
    static = qubit_offset * s_ee + mode_offset * (b.conj().T @ b)
    if other_idx is not None:
        static = static + spectator_frequency * embed(number(space.factor_dims[other_idx]), other_idx, space).matrix
    G = params.g_m * np.sqrt(params.N)
    groups: dict[float, np.ndarray] = {}
    for w, x in ((D_T, params.g_c * s_eg @ a), (D_d, params.Omega * s_eg), (D_m, G * b.conj().T @ a)):
        groups[w] = groups.get(w, 0) + x
    carriers = tuple((w, x) for w, x in groups.items() if np.any(x))
    return TimeDependentHamiltonian(space, static.astype(complex), carriers)


def perturbative_offsets(params: SystemParams, mode: int, drive_ratio: float = 2.0) -> tuple[float, float]:
    """Second-order ``(qubit_offset, mode_offset)`` placing the shifted qubit and mode at ``omega_bk``.

    The cavity Stark shift ``g_c^2/Delta`` and the drive shift
    ``2 Omega^2/Delta_d`` (drive detuned by ``drive_ratio * Delta``) move the
    qubit; ``g_m^2 N/Delta`` moves the mode.
    """
    wk = params.omega_b1 if mode == 1 else params.omega_b2
    D = params.Delta
    G2 = params.g_m**2 * params.N
    return wk - params.g_c**2 / D - 2.0 * params.Omega**2 / (drive_ratio * D), wk - G2 / D


def exchange_model(
    params: SystemParams,
    space: HilbertSpace,
    mode: int,
    qubit_offset: float,
    mode_offset: float,
    drive_ratio: float = 2.0,
    spectator_frequency: float = 0.0,
) -> TimeDependentHamiltonian:
    """Microscopic model of an exchange segment on ``(qubit, mode1, mode2, cavity)``.

    The drive is detuned by ``drive_ratio * Delta`` so its carrier stays
    distinct from the cavity one; the offsets tune the qubit onto mode ``mode``.
    """
    D = params.Delta
    p = params.replace(relax_detunings=True, Delta_T=D, Delta_m=D, Delta_d=drive_ratio * D)
    return full_model(p, space, active_mode=mode, qubit_offset=qubit_offset, mode_offset=mode_offset,
                      spectator_frequency=spectator_frequency)


def dressed_exchange_hamiltonian(
    params: SystemParams,
    mode: int,
    qubit_offset: float,
    mode_offset: float,
    mode_dim: int = 5,
    cavity_dim: int = 3,
    drive_ratio: float = 2.0,
) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Exact effective Hamiltonian of an exchange segment on the cavity-vacuum sector.

    The carrier-free generator is diagonalized and, separately for each
    exchange doublet ``{|e, n-1, 0_c>, |g, n, 0_c>}`` (and the lone ``|g, 0, 0_c>``),
    the eigenvectors with the largest weight on it are orthonormalized onto
    it (des Cloizeaux block diagonalization). Every other state, including
    the drive partners of the doublet, is eliminated to all orders, so the
    drive and cavity Stark shifts appear on the diagonal.

    Returns
    -------
    H : ndarray
        ``(2 mode_dim) x (2 mode_dim)`` Hermitian matrix, block diagonal in
        the doublets, in the frame of the carriers, i.e. directly comparable
        with ``omega_b (b^+b + |e><e|) + g (...)``.
    labels : list of (q, n)
        Basis order of ``H`` (``q = 0`` is the excited state).
    """
    dims = (2, mode_dim, 1, cavity_dim) if mode == 1 else (2, 1, mode_dim, cavity_dim)
    space = HilbertSpace(dims)
    d, K = exchange_model(params, space, mode, qubit_offset, mode_offset, drive_ratio).static_frame()
    labels = [(q, n) for q in (0, 1) for n in range(mode_dim)]
    at = {lab: i for i, lab in enumerate(labels)}
    full_index = [space.index((q, n, 0, 0) if mode == 1 else (q, 0, n, 0)) for q, n in labels]
    w, U = linalg.eigh(K)
    clusters = [[(1, 0)]] + [[(0, n - 1), (1, n)] for n in range(1, mode_dim)] + [[(0, mode_dim - 1)]]
    H = np.zeros((len(labels), len(labels)), dtype=complex)
    for cluster in clusters:
        rows = [full_index[at[lab]] for lab in cluster]
        weight = np.sum(np.abs(U[rows, :]) ** 2, axis=0)
        sel = np.argsort(-weight, kind="stable")[: len(cluster)]
        u, _, vh = np.linalg.svd(U[np.ix_(rows, sel)])
        A = u @ vh
        block = A @ np.diag(w[sel]) @ A.conj().T + np.diag(d[rows])
        pos = [at[lab] for lab in cluster]
        H[np.ix_(pos, pos)] = block
    return 0.5 * (H + H.conj().T), labels


@dataclass(frozen=True)
class ExchangeCalibration:
    """Exchange-segment settings measured on the microscopic model.

    Attributes
    ----------
    qubit_offset, mode_offset : float
        Static offsets for :func:`exchange_model`.
    coupling : float
        Effective exchange coupling per ``sqrt(n)``, averaged over ``n = 1..n_max``.
    detuning_spread : float
        Largest remaining ``|E(e, n-1) - E(g, n)|``; photon-number-dependent
        shifts that no static offset removes.
    """

    qubit_offset: float
    mode_offset: float
    coupling: float
    detuning_spread: float


@functools.lru_cache(maxsize=256)
def calibrate_exchange(
    params: SystemParams,
    mode: int,
    n_max: int = 3,
    cavity_dim: int = 3,
    drive_ratio: float = 2.0,
    tol: float = 1e-12,
    max_iterations: int = 30,
) -> ExchangeCalibration:
    """Offsets and coupling that make an exchange segment match the ideal one to all orders.

    Starting from :func:`perturbative_offsets`, the mode offset is adjusted
    until the dressed single-quantum spacing equals ``omega_bk`` and the qubit
    offset until the mean detuning of the exchange doublets ``n = 1..n_max``
    vanishes. Iterates until both corrections fall below ``tol * max(1, |Delta|)``.

    Raises
    ------
    RuntimeError
        If the offsets do not settle within ``max_iterations``.
    """
    if mode not in (1, 2):
        raise ValueError("mode must be 1 or 2")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    wk = params.omega_b1 if mode == 1 else params.omega_b2
    q_off, m_off = perturbative_offsets(params, mode, drive_ratio)
    mode_dim = n_max + 2

    def levels(q_off, m_off):
        H, labels = dressed_exchange_hamiltonian(params, mode, q_off, m_off, mode_dim, cavity_dim, drive_ratio)
        at = {lab: i for i, lab in enumerate(labels)}
        Eg = np.array([H[at[(1, n)], at[(1, n)]].real for n in range(n_max + 1)])
        Ee = np.array([H[at[(0, n - 1)], at[(0, n - 1)]].real for n in range(1, n_max + 1)])
        c = np.array([abs(H[at[(0, n - 1)], at[(1, n)]]) / math.sqrt(n) for n in range(1, n_max + 1)])
        return Eg, Ee, c

    for _ in range(max_iterations):
        Eg, Ee, _c = levels(q_off, m_off)
        dm = wk - (Eg[1] - Eg[0])
        dq = -float(np.mean(Ee - Eg[1:]))
        m_off += dm
        q_off += dq
        # eigenvalue rounding grows with the largest energy scale, |Delta|
        if max(abs(dm), abs(dq)) <= tol * max(1.0, abs(params.Delta)):
            break
    else:
        raise RuntimeError("exchange calibration did not converge")
    Eg, Ee, c = levels(q_off, m_off)
    return ExchangeCalibration(float(q_off), float(m_off), float(np.mean(c)), float(np.max(np.abs(Ee - Eg[1:]))))


def full_hamiltonian(params: SystemParams, t: float, space: HilbertSpace | None = None) -> Operator:
    """Microscopic Hamiltonian at time ``t`` (defaults: mode and cavity of dimension 3)."""
    if space is None:
        space = single_mode_space(3, 3)
    return full_model(params, space)(t)


def effective_jc(params: SystemParams, space: HilbertSpace | None = None, omega_z: float | None = None) -> Operator:
    """``omega_z S_z + omega_b b^+ b + g (s_ge b^+ + s_eg b)`` from the derived quantities."""
    if space is None:
        space = single_mode_space(4)
    if space.n_factors != 2 or space.factor_dims[0] != 2:
        raise ValueError(f"effective_jc needs a (qubit, mode) space, got {space.factor_dims}")
    d = derive(params)
    wz = d.omega_z if omega_z is None else omega_z
    sz = embed(sigma_z_half(), 0, space)
    b = embed(annihilation(space.factor_dims[1]), 1, space)
    sge = embed(sigma_ge(), 0, space)
    exch = sge @ b.dag
    return wz * sz + d.omega_b * (b.dag @ b) + d.g_eff * (exch + exch.dag)


def two_mode_effective(params: SystemParams, omega_z: float, space: HilbertSpace | None = None) -> Operator:
    """Qubit alternately addressing two modes (both couplings present)."""
    if space is None:
        space = two_mode_space(4)
    if space.n_factors != 3 or space.factor_dims[0] != 2:
        raise ValueError(f"two_mode_effective needs a (qubit, mode1, mode2) space, got {space.factor_dims}")
    sz = embed(sigma_z_half(), QUBIT, space)
    sge = embed(sigma_ge(), QUBIT, space)
    h = omega_z * sz
    for idx, w, g in ((MODE1, params.omega_b1, params.g1), (MODE2, params.omega_b2, params.g2)):
        b = embed(annihilation(space.factor_dims[idx]), idx, space)
        exch = sge @ b.dag
        h = h + w * (b.dag @ b) + g * (exch + exch.dag)
    return h


def selective_drive_frequency(params: SystemParams, delta_n: int, omega_z: float | None = None) -> float:
    """Drive frequency addressing the class ``n1 - n2 = delta_n``.

    Raises if the two dispersive shifts ``g1^2/delta1`` and ``-g2^2/delta2``
    do not agree with ``lam``.
    """
    if params.delta1 == 0 or params.delta2 == 0:
        raise ValueError("dispersive shifts need nonzero delta1 and delta2")
    r1 = params.g1**2 / params.delta1
    r2 = -params.g2**2 / params.delta2
    scale = max(abs(params.lam), abs(r1), abs(r2), 1e-300)
    if abs(r1 - params.lam) > 1e-9 * scale or abs(r2 - params.lam) > 1e-9 * scale:
        raise ValueError(f"dispersive shifts disagree: g1^2/delta1={r1:.12g}, -g2^2/delta2={r2:.12g}, lam={params.lam:.12g}")
    wz = derive(params).omega_z if omega_z is None else omega_z
    return wz + 2.0 * params.lam * int(delta_n)


def dispersive_rotation_hamiltonian(
    params: SystemParams, space: HilbertSpace, delta_n: int, phase: float = 0.0
) -> Operator:
    """Dispersive qubit driven at the frequency selecting class ``delta_n``.

    In the frame of the drive, ``H = lam (n1 - n2 - delta_n) sigma_z +
    Omega_s (e^{-i phase} s_eg + h.c.)``. Levels of the addressed class see a
    resonant Rabi drive; the others are detuned by ``2 lam`` per unit of
    class difference. The number-selective rotation gate is the limit
    ``Omega_s / lam -> 0`` of this Hamiltonian.
    """
    if space.n_factors != 3 or space.factor_dims[0] != 2:
        raise ValueError(f"dispersive rotation needs a (qubit, mode1, mode2) space, got {space.factor_dims}")
    sz = 2.0 * embed(sigma_z_half(), QUBIT, space).matrix
    n1 = embed(number(space.factor_dims[1]), MODE1, space).matrix
    n2 = embed(number(space.factor_dims[2]), MODE2, space).matrix
    shift = n1 - n2 - int(delta_n) * np.eye(space.dim)
    drive = np.exp(-1j * phase) * embed(sigma_eg(), QUBIT, space).matrix
    H = params.lam * shift @ sz + params.Omega_s * (drive + drive.conj().T)
    return Operator(space, H)


def strong_driving_model(params: SystemParams, space: HilbertSpace | None = None) -> TimeDependentHamiltonian:
    """Carrier form of the strong-driving interaction (modes only couple through sigma_x)."""
    if space is None:
        space = two_mode_space(8)
    if space.n_factors != 3 or space.factor_dims[0] != 2:
        raise ValueError(f"strong driving needs a (qubit, mode1, mode2) space, got {space.factor_dims}")
    for g, d in ((params.g1, params.delta1), (params.g2, params.delta2)):
        if params.Omega_s < 10 * max(abs(d), g):
            warnings.warn(
                f"Omega_s={params.Omega_s:g} is not >> (delta, g) = ({d:g}, {g:g}); strong-driving form is approximate",
                stacklevel=2,
            )
    sx = embed(sigma_x(), QUBIT, space).matrix
    carriers = []
    for idx, g, d in ((MODE1, params.g1, params.delta1), (MODE2, params.g2, params.delta2)):
        b = embed(annihilation(space.factor_dims[idx]), idx, space).matrix
        # (sx/2) g b e^{-i d t} + h.c.
        carriers.append((-d, 0.5 * g * sx @ b))
    return TimeDependentHamiltonian(space, np.zeros((space.dim, space.dim), complex), tuple(carriers))


def strong_driving_effective(params: SystemParams, t: float, space: HilbertSpace | None = None) -> Operator:
    """Strong-driving effective Hamiltonian at time ``t``."""
    return strong_driving_model(params, space)(t)


HamiltonianFunc = Callable[[float], Operator]
