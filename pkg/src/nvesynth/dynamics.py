"""Time-evolution engines and pulse-schedule execution.

Five ways of running a schedule are provided, from idealized to physical:

``analytic``
    closed-form resonant exchange and number-selective rotation maps.
``oracle``
    the generator of every segment exponentiated exactly (eigendecomposition).
``effective``
    fixed-step RK4 on the two-mode effective Hamiltonian.
``full``
    fixed-step RK4 on the microscopic qubit + ensemble + cavity Hamiltonian
    for each exchange segment.
``lindblad``
    RK4 on the master equation of the effective model with energy relaxation
    of the qubit and both modes and cavity-mediated loss.

Rotations are applied in the interaction frame of the dispersive free
Hamiltonian, i.e. they are the same ideal class-projected SU(2) map in every
engine. The engines therefore differ only in how exchange and idle segments
are modelled.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as sparse_linalg

from .model import (
    QUBIT,
    SystemParams,
    TimeDependentHamiltonian,
    calibrate_exchange,
    exchange_model,
    full_model,
    perturbative_offsets,
)
from .ops import (
    HilbertSpace,
    DensityMatrix,
    Operator,
    StateVector,
    annihilation,
    embed,
    hermiticity_residual,
    propagator_exact,
    sigma_eg,
    sigma_ge,
)

__all__ = [
    "SegmentKind",
    "PulseSegment",
    "PulseSchedule",
    "Trajectory",
    "EngineOptions",
    "IntegrationError",
    "default_step",
    "evolve_schrodinger",
    "evolve_lindblad",
    "liouvillian",
    "jc_gate",
    "selective_rotation_gate",
    "idle_gate",
    "segment_generator",
    "collapse_operators",
    "run_schedule",
    "reduce_to_modes",
]

# keeps RK4 within 1e-8 of the exact propagator (and the norm drift below 1e-8) over a few periods
STEPS_PER_PERIOD = 320
NORM_DRIFT_LIMIT = 1e-6


class IntegrationError(RuntimeError):
    """Raised when an integrator's conservation diagnostic exceeds its limit."""


class SegmentKind(enum.Enum):
    RESONANT_MODE1 = "resonant1"
    RESONANT_MODE2 = "resonant2"
    SELECTIVE_ROTATION = "rotation"
    IDLE = "idle"


@dataclass(frozen=True)
class PulseSegment:
    """One piece of a schedule.

    Parameters
    ----------
    kind : SegmentKind
    duration : float
        Physical duration. For rotations the pulse area is ``Omega_s * duration``.
    delta_n : int
        Addressed class ``n1 - n2`` (rotations only).
    phase : float
        Drive phase ``beta`` of a rotation.
    alpha : float
        Diagonal phase ``alpha`` of a rotation (zero for physical single pulses).
    """

    kind: SegmentKind
    duration: float
    delta_n: int = 0
    phase: float = 0.0
    alpha: float = 0.0

    def __post_init__(self):
        kind = SegmentKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if not np.isfinite(self.duration) or self.duration < 0:
            raise ValueError(f"segment duration must be finite and >= 0, got {self.duration}")
        if kind is not SegmentKind.SELECTIVE_ROTATION and (self.delta_n or self.phase or self.alpha):
            raise ValueError("only rotations carry delta_n and phases")
        if not (np.isfinite(self.phase) and np.isfinite(self.alpha)):
            raise ValueError("rotation phases must be finite")
        object.__setattr__(self, "delta_n", int(self.delta_n))

    @classmethod
    def resonant(cls, mode: int, duration: float) -> "PulseSegment":
        if mode not in (1, 2):
            raise ValueError("mode must be 1 or 2")
        kind = SegmentKind.RESONANT_MODE1 if mode == 1 else SegmentKind.RESONANT_MODE2
        return cls(kind, duration)

    @classmethod
    def rotation(cls, delta_n: int, theta: float, phase: float, Omega_s: float, alpha: float = 0.0) -> "PulseSegment":
        """Rotation of angle ``theta`` realised by a pulse of amplitude ``Omega_s``."""
        if Omega_s <= 0:
            raise ValueError("Omega_s must be positive")
        if theta < 0:
            theta, phase = -theta, phase + math.pi
        return cls(SegmentKind.SELECTIVE_ROTATION, theta / Omega_s, delta_n, phase, alpha)

    @classmethod
    def idle(cls, duration: float) -> "PulseSegment":
        return cls(SegmentKind.IDLE, duration)

    @property
    def mode(self) -> int | None:
        return {SegmentKind.RESONANT_MODE1: 1, SegmentKind.RESONANT_MODE2: 2}.get(self.kind)

    def describe(self) -> str:
        if self.kind is SegmentKind.SELECTIVE_ROTATION:
            return f"rotation(dn={self.delta_n:+d}, t={self.duration:.6g}, phase={self.phase:.6g})"
        return f"{self.kind.value}(t={self.duration:.6g})"


@dataclass(frozen=True)
class PulseSchedule:
    """Ordered segments. ``predicted_total_time`` must equal the sum of durations."""

    segments: tuple[PulseSegment, ...] = ()
    predicted_total_time: float | None = None

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        total = math.fsum(s.duration for s in segs)
        if self.predicted_total_time is None:
            object.__setattr__(self, "predicted_total_time", total)
        elif abs(self.predicted_total_time - total) > 1e-12 * max(total, 1.0):
            raise ValueError(f"predicted_total_time {self.predicted_total_time} != sum of durations {total}")

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    @property
    def total_time(self) -> float:
        return float(self.predicted_total_time)

    def count(self, kind: SegmentKind) -> int:
        return sum(1 for s in self.segments if s.kind is kind)

    def without_pauses(self) -> "PulseSchedule":
        return PulseSchedule(tuple(s for s in self.segments if s.kind is not SegmentKind.IDLE))


@dataclass(frozen=True)
class Trajectory:
    """Sampled states of one evolution.

    ``states`` is an array of kets with shape ``(n, d)`` or of density
    matrices with shape ``(n, d, d)``.
    """

    times: np.ndarray
    states: np.ndarray
    space: HilbertSpace
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValueError("times and states must have the same length")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("trajectory times must be non-decreasing")

    @property
    def is_density(self) -> bool:
        return self.states.ndim == 3

    def __len__(self) -> int:
        return len(self.times)

    def state(self, i: int) -> StateVector | DensityMatrix:
        s = self.states[i]
        if self.is_density:
            return DensityMatrix(self.space, 0.5 * (s + s.conj().T) / np.trace(s).real)
        return StateVector(self.space, s / np.linalg.norm(s))

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class EngineOptions:
    """Knobs of the integrated engines.

    Parameters
    ----------
    cavity_dim : int
        Cavity truncation for the ``full`` engine.
    include_spectator_coupling : bool
        ``effective``/``lindblad``: keep the coupling to the non-addressed mode
        during exchange segments.
    shift_compensation : {'calibrated', 'perturbative', 'none'}
        ``full``: how the qubit and mode offsets of exchange segments are
        chosen so that the shifted qubit sits on the addressed mode.
        ``calibrated`` measures them on the microscopic model to all orders
        (:func:`~nvesynth.model.calibrate_exchange`), ``perturbative`` uses
        the second-order Stark shifts, ``none`` applies no offset.
    drive_detuning_ratio : float
        ``full`` with compensation: drive detuning in units of ``Delta``.
    steps_per_period : int
        RK4 steps per period of the fastest frequency for integrated segments.
    store_every : int or None
        Store every k-th integration step; None keeps only segment boundaries.
    dressed_basis : bool
        ``full``: treat the logical levels as the cavity-dressed levels. The
        cavity couplings are permanent, so a bare state entering an exchange
        segment is first mapped onto its dressed counterpart and mapped back
        afterwards. Without this, each segment boundary acts as a sudden
        switch of the couplings and costs about ``(g_c/Delta)^2 n`` in fidelity.
    calibration_quanta : (int, int) or None
        ``full`` with calibrated compensation: photon numbers per mode over
        which the exchange calibration is averaged. None uses the mode
        dimensions minus two (the target padding of one level).
    lindblad_method : {'exact', 'rk4'}
        ``lindblad``: propagate each (time-independent) segment with the
        action of the exponentiated sparse Liouvillian, or integrate it with RK4.
    full_method : {'exact', 'rk4'}
        ``full``: propagate exchange segments exactly in the diagonal frame
        that removes every carrier, or integrate them with RK4.
    """

    cavity_dim: int = 3
    include_spectator_coupling: bool = False
    shift_compensation: str = "calibrated"
    drive_detuning_ratio: float = 2.0
    steps_per_period: int = STEPS_PER_PERIOD
    store_every: int | None = None
    dressed_basis: bool = True
    full_method: str = "exact"
    lindblad_method: str = "exact"
    calibration_quanta: tuple[int, int] | None = None


# --------------------------------------------------------------------------
# integrators


def default_step(omega_max: float, steps_per_period: int = STEPS_PER_PERIOD) -> float:
    """``(2 pi / omega_max) / steps_per_period``; infinite for a zero generator."""
    if omega_max <= 0:
        return math.inf
    return 2.0 * math.pi / omega_max / steps_per_period


def _step_grid(t_final: float, dt: float) -> tuple[int, float]:
    if t_final < 0:
        raise ValueError("t_final must be >= 0")
    if t_final == 0:
        return 0, 0.0
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = max(1, int(math.ceil(t_final / dt - 1e-9)))
    return n, t_final / n


def _as_hamiltonian(H, space: HilbertSpace):
    """Return (matrix function, constant matrix or None, omega_max)."""
    if isinstance(H, Operator):
        if H.space.factor_dims != space.factor_dims:
            raise ValueError("Hamiltonian and state live on different spaces")
        if not H.is_hermitian():
            raise ValueError(f"Hamiltonian is not Hermitian (residual {hermiticity_residual(H.matrix):.3g})")
        m = np.asarray(H.matrix)
        return (lambda t: m), m, float(np.max(np.abs(np.linalg.eigvalsh(m)), initial=0.0))
    if isinstance(H, TimeDependentHamiltonian):
        if H.space.factor_dims != space.factor_dims:
            raise ValueError("Hamiltonian and state live on different spaces")
        if not H.carriers:
            m = H.static
            return (lambda t: m), m, float(np.max(np.abs(np.linalg.eigvalsh(m)), initial=0.0))
        return H.matrix, None, H.max_frequency
    if callable(H):
        def f(t):
            h = H(t)
            return np.asarray(h.matrix if isinstance(h, Operator) else h, dtype=complex)

        h0 = f(0.0)
        if hermiticity_residual(h0) > 1e-12:
            raise ValueError("Hamiltonian is not Hermitian at t = 0")
        return f, None, float(np.linalg.norm(h0, 2))
    raise TypeError(f"unsupported Hamiltonian type {type(H).__name__}")


def _rk4_ket(hfunc, const, psi, t0, n, dt, store_every):
    times, states = [t0], [psi.copy()]
    if const is not None:
        # RK4 on a constant linear generator is the degree-4 Taylor polynomial of the step
        M = -1j * dt * const
        step = np.eye(len(psi), dtype=complex)
        term = np.eye(len(psi), dtype=complex)
        for k in range(1, 5):
            term = term @ M / k
            step = step + term
        for i in range(n):
            psi = step @ psi
            if store_every and (i + 1) % store_every == 0 and i + 1 < n:
                times.append(t0 + (i + 1) * dt)
                states.append(psi.copy())
    else:
        t = t0
        for i in range(n):
            h_a = hfunc(t)
            h_b = hfunc(t + 0.5 * dt)
            h_c = hfunc(t + dt)
            k1 = -1j * (h_a @ psi)
            k2 = -1j * (h_b @ (psi + 0.5 * dt * k1))
            k3 = -1j * (h_b @ (psi + 0.5 * dt * k2))
            k4 = -1j * (h_c @ (psi + dt * k3))
            psi = psi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t = t0 + (i + 1) * dt
            if store_every and (i + 1) % store_every == 0 and i + 1 < n:
                times.append(t)
                states.append(psi.copy())
    if n > 0:
        times.append(t0 + n * dt)
        states.append(psi.copy())
    return psi, times, states


def _integrate_ket(H, v, space, t_final, dt=None, omega_max=None, steps_per_period=STEPS_PER_PERIOD,
                   store_every=1, t0=0.0):
    hfunc, const, w_est = _as_hamiltonian(H, space)
    w = w_est if omega_max is None else omega_max
    if dt is None:
        dt = default_step(w, steps_per_period)
    n, h = _step_grid(t_final, min(dt, t_final) if math.isinf(dt) else dt)
    v0 = np.linalg.norm(v)
    psi, times, states = _rk4_ket(hfunc, const, np.asarray(v, dtype=complex), t0, n, h, store_every)
    drift = abs(np.linalg.norm(psi) - v0)
    if drift > NORM_DRIFT_LIMIT:
        raise IntegrationError(f"norm drift {drift:.3g} exceeds {NORM_DRIFT_LIMIT:g}; use a smaller step than {h:.4g}")
    return Trajectory(np.array(times), np.array(states), space, {"norm_drift": drift, "dt": h, "steps": n})


def evolve_schrodinger(
    H,
    psi0: StateVector,
    t_final: float,
    dt: float | None = None,
    *,
    omega_max: float | None = None,
    steps_per_period: int = STEPS_PER_PERIOD,
    store_every: int | None = 1,
    t0: float = 0.0,
) -> Trajectory:
    """Fixed-step RK4 integration of ``i d psi/dt = H(t) psi``.

    Parameters
    ----------
    H : Operator, TimeDependentHamiltonian or callable
        Callables map a time to an Operator or matrix.
    psi0 : StateVector
    t_final : float
        Integration length.
    dt : float, optional
        Step; defaults to ``(2 pi / omega_max) / steps_per_period``.
    omega_max : float, optional
        Fastest frequency; estimated from ``H`` if omitted.
    store_every : int or None
        Keep every k-th step (the initial and final states are always kept).

    Returns
    -------
    Trajectory
        ``diagnostics['norm_drift']`` holds ``| |psi(T)| - 1 |``. The state
        is never renormalized.

    Raises
    ------
    IntegrationError
        If the norm drift exceeds 1e-6.
    """
    return _integrate_ket(H, psi0.amplitudes, psi0.space, t_final, dt, omega_max, steps_per_period, store_every, t0)


def _dissipator_parts(collapse_ops, space):
    Ls, absorb = [], np.zeros((space.dim, space.dim), dtype=complex)
    for L, rate in collapse_ops:
        if rate < 0:
            raise ValueError(f"decay rates must be >= 0, got {rate}")
        if rate == 0:
            continue
        m = L.matrix if isinstance(L, Operator) else np.asarray(L, dtype=complex)
        if m.shape != (space.dim, space.dim):
            raise ValueError("collapse operator dimension mismatch")
        Ls.append((rate, m))
        absorb += 0.5 * rate * (m.conj().T @ m)
    return Ls, absorb


def _integrate_rho(H, collapse_ops, rho, space, t_final, dt=None, omega_max=None,
                   steps_per_period=STEPS_PER_PERIOD, store_every=1, t0=0.0):
    hfunc, const, w_est = _as_hamiltonian(H, space)
    Ls, absorb = _dissipator_parts(collapse_ops, space)
    if const is not None and omega_max is None:
        # a density matrix oscillates at eigenvalue differences
        ev = np.linalg.eigvalsh(const)
        w_est = float(ev[-1] - ev[0]) if len(ev) else 0.0
    w = (w_est if omega_max is None else omega_max) + sum(r for r, _ in Ls)
    if dt is None:
        dt = default_step(w, steps_per_period)
    n, h = _step_grid(t_final, min(dt, t_final) if math.isinf(dt) else dt)

    def rhs(hm, r):
        heff = hm - 1j * absorb
        out = -1j * (heff @ r - r @ heff.conj().T)
        for rate, L in Ls:
            out += rate * (L @ r @ L.conj().T)
        return out

    rho = np.asarray(rho, dtype=complex)
    tr0 = np.trace(rho).real
    times, states = [t0], [rho.copy()]
    t = t0
    for i in range(n):
        if const is not None:
            ha = hb = hc = const
        else:
            ha, hb, hc = hfunc(t), hfunc(t + 0.5 * h), hfunc(t + h)
        k1 = rhs(ha, rho)
        k2 = rhs(hb, rho + 0.5 * h * k1)
        k3 = rhs(hb, rho + 0.5 * h * k2)
        k4 = rhs(hc, rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (i + 1) * h
        if store_every and (i + 1) % store_every == 0 and i + 1 < n:
            times.append(t)
            states.append(rho.copy())
    if n > 0:
        times.append(t0 + n * h)
        states.append(rho.copy())
    drift = abs(np.trace(rho).real - tr0)
    if drift > NORM_DRIFT_LIMIT:
        raise IntegrationError(f"trace drift {drift:.3g} exceeds {NORM_DRIFT_LIMIT:g}; use a smaller step than {h:.4g}")
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
    diag = {"trace_drift": drift, "min_eigenvalue": min_eig, "positivity_ok": min_eig >= -1e-7, "dt": h, "steps": n}
    return Trajectory(np.array(times), np.array(states), space, diag)


def evolve_lindblad(
    H,
    collapse_ops: Sequence[tuple[Operator, float]],
    rho0: DensityMatrix | StateVector,
    t_final: float,
    dt: float | None = None,
    *,
    omega_max: float | None = None,
    steps_per_period: int = STEPS_PER_PERIOD,
    store_every: int | None = 1,
    t0: float = 0.0,
) -> Trajectory:
    """Fixed-step RK4 on the master equation.

    ``d rho/dt = -i[H, rho] + sum_k r_k/2 (2 L rho L^+ - L^+L rho - rho L^+L)``

    ``diagnostics`` reports the trace drift and the smallest eigenvalue of
    the final state; negative eigenvalues down to -1e-7 are tolerated and
    only flagged.

    Raises
    ------
    IntegrationError
        If the trace drifts by more than 1e-6.
    """
    if isinstance(rho0, StateVector):
        rho0 = rho0.to_density()
    return _integrate_rho(H, collapse_ops, rho0.matrix, rho0.space, t_final, dt, omega_max,
                          steps_per_period, store_every, t0)


def _wrap_density(space: HilbertSpace, m: np.ndarray) -> DensityMatrix:
    m = 0.5 * (m + m.conj().T)
    m = m / np.trace(m).real
    w, V = np.linalg.eigh(m)
    if w[0] < -1e-9:
        w = np.clip(w, 0, None)
        m = (V * (w / w.sum())) @ V.conj().T
    return DensityMatrix(space, m)


# --------------------------------------------------------------------------
# closed-form gates


def _mode_axes(space: HilbertSpace):
    if space.n_factors < 3 or space.factor_dims[0] != 2:
        raise ValueError(f"expected a (qubit, mode1, mode2, ...) space, got {space.factor_dims}")
    return space.factor_dims


def _as_tensor(state, space):
    v = state.amplitudes if isinstance(state, StateVector) else np.asarray(state, dtype=complex)
    return v.reshape(space.factor_dims)


def jc_gate(state: StateVector, mode: int, duration: float, params: SystemParams) -> StateVector:
    """Resonant exchange with ``mode`` in closed form.

    The generator is ``w_k |e><e| + w_1 n_1 + w_2 n_2 + g_k (s_ge b_k^+ + h.c.)``:
    each pair ``|e, n>, |g, n+1>`` of the addressed mode rotates at
    ``g_k sqrt(n+1)`` and picks up the common phase of the pair. The other
    mode only accumulates its free phase.
    """
    space = state.space
    _mode_axes(space)
    if mode not in (1, 2):
        raise ValueError("mode must be 1 or 2")
    g = params.g1 if mode == 1 else params.g2
    wk = params.omega_b1 if mode == 1 else params.omega_b2
    wo = params.omega_b2 if mode == 1 else params.omega_b1
    psi = _as_tensor(state, space)
    if mode == 2:
        psi = np.swapaxes(psi, 1, 2)
    d_k, d_o = psi.shape[1], psi.shape[2]
    rest = psi.shape[3:]
    t = duration
    n = np.arange(d_k)
    m = np.arange(d_o)
    out = np.empty_like(psi)
    free_o = np.exp(-1j * wo * m * t).reshape((1, d_o) + (1,) * len(rest))
    # excited, paired with ground one level up
    e = psi[0]
    gr = psi[1]
    new_e = np.empty_like(e)
    new_g = np.empty_like(gr)
    theta = g * np.sqrt(n[:-1] + 1.0) * t
    c = np.cos(theta).reshape((-1, 1) + (1,) * len(rest))
    s = np.sin(theta).reshape((-1, 1) + (1,) * len(rest))
    pair_phase = np.exp(-1j * wk * (n[:-1] + 1.0) * t).reshape((-1, 1) + (1,) * len(rest))
    new_e[:-1] = pair_phase * (c * e[:-1] - 1j * s * gr[1:])
    new_g[1:] = pair_phase * (-1j * s * e[:-1] + c * gr[1:])
    # unpaired levels: |g, 0> and the top |e, d-1>
    new_g[0] = gr[0]
    new_e[-1] = np.exp(-1j * wk * d_k * t) * e[-1]
    out[0] = new_e * free_o
    out[1] = new_g * free_o
    if mode == 2:
        out = np.swapaxes(out, 1, 2)
    return StateVector(space, out.ravel())


def _su2_block(theta: float, alpha: float, beta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array(
        [
            [np.exp(-1j * alpha) * c, -1j * np.exp(-1j * beta) * s],
            [-1j * np.exp(1j * beta) * s, np.exp(1j * alpha) * c],
        ]
    )


def selective_rotation_gate(
    state: StateVector, delta_n: int, theta: float, phases: tuple[float, float] = (0.0, 0.0)
) -> StateVector:
    """Rotate the qubit only on levels with ``n1 - n2 = delta_n``.

    The (e, g) amplitudes of each addressed level are multiplied by
    ``[[e^{-ia} c, -i e^{-ib} s], [-i e^{ib} s, e^{ia} c]]`` with
    ``c = cos(theta)``, ``s = sin(theta)`` and ``(a, b) = phases``.
    """
    space = state.space
    dims = _mode_axes(space)
    psi = _as_tensor(state, space).copy()
    U = _su2_block(theta, *phases)
    for n1 in range(dims[1]):
        n2 = n1 - delta_n
        if 0 <= n2 < dims[2]:
            pair = psi[:, n1, n2].copy()
            psi[:, n1, n2] = np.tensordot(U, pair, axes=(1, 0))
    return StateVector(space, psi.ravel())


def _idle_qubit_frequency(params: SystemParams) -> float:
    return params.omega_b1 + params.delta1


def idle_gate(state: StateVector, duration: float, params: SystemParams) -> StateVector:
    """Free evolution at the dispersive parking point."""
    space = state.space
    dims = _mode_axes(space)
    psi = _as_tensor(state, space)
    n1 = np.arange(dims[1]).reshape(1, -1, 1)
    n2 = np.arange(dims[2]).reshape(1, 1, -1)
    q = np.array([1.0, 0.0]).reshape(-1, 1, 1)
    phase = np.exp(-1j * duration * (_idle_qubit_frequency(params) * q + params.omega_b1 * n1 + params.omega_b2 * n2))
    phase = phase.reshape(phase.shape + (1,) * (len(dims) - 3))
    return StateVector(space, (psi * phase).ravel())


# --------------------------------------------------------------------------
# generators


def _class_projector(space: HilbertSpace, delta_n: int) -> np.ndarray:
    dims = space.factor_dims
    n1 = np.arange(dims[1]).reshape(-1, 1)
    n2 = np.arange(dims[2]).reshape(1, -1)
    mask = (n1 - n2 == delta_n).astype(float)
    rest = int(np.prod(dims[3:]))
    diag = np.kron(np.kron(np.ones(2), mask.ravel()), np.ones(rest))
    return np.diag(diag).astype(complex)


# rotations shorter than this are applied as instantaneous unitaries (K / T would overflow)
_INSTANT_DURATION = 1e-200


def _rotation_area(space: HilbertSpace, seg: PulseSegment, Omega_s: float) -> np.ndarray:
    """Hermitian ``K`` with ``exp(-i K)`` equal to the class-projected rotation."""
    theta = Omega_s * seg.duration
    c, s = math.cos(theta), math.sin(theta)
    v = np.array([s * math.cos(seg.phase), s * math.sin(seg.phase), c * math.sin(seg.alpha)])
    vn = float(np.linalg.norm(v))
    phi = math.atan2(vn, c * math.cos(seg.alpha))
    if vn < 1e-300:
        v, vn = np.array([0.0, 0.0, 1.0]), 1.0
    sx = np.array([[0, 1], [1, 0]], complex)
    sy = np.array([[0, -1j], [1j, 0]], complex)
    sz = np.array([[1, 0], [0, -1]], complex)
    local = (phi / vn) * (v[0] * sx + v[1] * sy + v[2] * sz)
    rest = int(np.prod(space.factor_dims[1:]))
    return np.kron(local, np.eye(rest)) @ _class_projector(space, seg.delta_n)


def _rotation_generator(space: HilbertSpace, seg: PulseSegment, Omega_s: float) -> np.ndarray:
    K = _rotation_area(space, seg, Omega_s)
    if seg.duration < _INSTANT_DURATION:
        return np.zeros_like(K)
    return K / seg.duration


def _instant_unitary(seg: PulseSegment, space: HilbertSpace, params: SystemParams) -> np.ndarray | None:
    """Exact unitary of a rotation too short to integrate, else None."""
    if seg.kind is not SegmentKind.SELECTIVE_ROTATION or seg.duration >= _INSTANT_DURATION:
        return None
    K = _rotation_area(space, seg, params.Omega_s)
    return linalg.expm(-1j * 0.5 * (K + K.conj().T))


def _resonant_generator(space: HilbertSpace, mode: int, params: SystemParams, spectator_coupling: bool) -> np.ndarray:
    wk = params.omega_b1 if mode == 1 else params.omega_b2
    s_eg = embed(sigma_eg(), QUBIT, space).matrix
    H = wk * (s_eg @ s_eg.conj().T)
    for idx, w, g in ((1, params.omega_b1, params.g1), (2, params.omega_b2, params.g2)):
        b = embed(annihilation(space.factor_dims[idx]), idx, space).matrix
        H = H + w * (b.conj().T @ b)
        if idx == mode or spectator_coupling:
            x = g * (s_eg.conj().T @ b.conj().T)
            H = H + x + x.conj().T
    return H


def _idle_generator(space: HilbertSpace, params: SystemParams) -> np.ndarray:
    s_eg = embed(sigma_eg(), QUBIT, space).matrix
    H = _idle_qubit_frequency(params) * (s_eg @ s_eg.conj().T)
    for idx, w in ((1, params.omega_b1), (2, params.omega_b2)):
        b = embed(annihilation(space.factor_dims[idx]), idx, space).matrix
        H = H + w * (b.conj().T @ b)
    return H


def segment_generator(
    seg: PulseSegment, space: HilbertSpace, params: SystemParams, spectator_coupling: bool = False
) -> Operator:
    """Time-independent Hamiltonian whose propagator over ``seg.duration`` is the segment."""
    _mode_axes(space)
    if seg.kind is SegmentKind.SELECTIVE_ROTATION:
        H = _rotation_generator(space, seg, params.Omega_s)
    elif seg.kind is SegmentKind.IDLE:
        H = _idle_generator(space, params)
    else:
        H = _resonant_generator(space, seg.mode, params, spectator_coupling)
    return Operator(space, 0.5 * (H + H.conj().T))


def collapse_operators(space: HilbertSpace, params: SystemParams) -> list[tuple[Operator, float]]:
    """Energy relaxation of qubit and modes plus cavity-mediated loss.

    With the cavity eliminated, ``a ~ -(g_c s_ge + G_1 b_1 + G_2 b_2)/Delta``
    where ``G_k = g_k Delta / g_c`` reproduces the effective couplings, so the
    cavity channel is ``(g_c/Delta) s_ge + (g_1/g_c) b_1 + (g_2/g_c) b_2`` at
    rate ``kappa``.
    """
    _mode_axes(space)
    s_ge = embed(sigma_ge(), QUBIT, space)
    b1 = embed(annihilation(space.factor_dims[1]), 1, space)
    b2 = embed(annihilation(space.factor_dims[2]), 2, space)
    ops = [(s_ge, params.gamma), (b1, params.gamma), (b2, params.gamma)]
    if params.kappa > 0:
        if params.g_c == 0:
            raise ValueError("cavity-mediated loss needs g_c > 0")
        L = (params.g_c / params.Delta) * s_ge + (params.g1 / params.g_c) * b1 + (params.g2 / params.g_c) * b2
        ops.append((L, params.kappa))
    return ops


# --------------------------------------------------------------------------
# schedule execution


def _full_segment_model(seg: PulseSegment, space4: HilbertSpace, params: SystemParams, opts: EngineOptions):
    mode = seg.mode
    wo = params.omega_b2 if mode == 1 else params.omega_b1
    ratio = opts.drive_detuning_ratio
    if opts.shift_compensation == "calibrated":
        if opts.calibration_quanta is not None:
            n_max = max(1, int(opts.calibration_quanta[mode - 1]))
        else:
            n_max = max(1, space4.factor_dims[mode] - 2)
        cal = calibrate_exchange(params, mode, n_max, opts.cavity_dim, ratio)
        q_off, m_off = cal.qubit_offset, cal.mode_offset
    elif opts.shift_compensation == "perturbative":
        q_off, m_off = perturbative_offsets(params, mode, ratio)
    elif opts.shift_compensation == "none":
        return full_model(params, space4, active_mode=mode, spectator_frequency=wo)
    else:
        raise ValueError(f"unknown shift_compensation {opts.shift_compensation!r}")
    return exchange_model(params, space4, mode, q_off, m_off, ratio, spectator_frequency=wo)


def _dressing(H: TimeDependentHamiltonian, t: float) -> np.ndarray:
    """First-order dressing generator ``eta(t) = sum_k (X_k e^{i w_k t} - h.c.) / w_k``.

    The permanent off-resonant couplings dress the bare levels;
    ``exp(-eta(t))`` maps a bare state onto the dressed state it
    adiabatically connects to.
    """
    eta = np.zeros((H.space.dim, H.space.dim), dtype=complex)
    for w, x in H.carriers:
        if w == 0:
            continue
        y = x * np.exp(1j * w * t) / w
        eta += y - y.conj().T
    return eta


def _propagate_frame(H: TimeDependentHamiltonian, v: np.ndarray, t0: float, t1: float) -> np.ndarray:
    d, K = H.static_frame()
    w, U = linalg.eigh(K)
    phi = np.exp(1j * d * t0) * v
    phi = U @ (np.exp(-1j * w * (t1 - t0)) * (U.conj().T @ phi))
    return np.exp(-1j * d * t1) * phi


def _with_cavity(psi: np.ndarray, cavity_dim: int) -> np.ndarray:
    vac = np.zeros(cavity_dim, dtype=complex)
    vac[0] = 1.0
    return np.kron(psi, vac)


def reduce_to_modes(state: StateVector | DensityMatrix) -> DensityMatrix:
    """Drop the cavity factor of a four-factor state (trace it out)."""
    from .ops import partial_trace

    if state.space.n_factors == 4:
        return partial_trace(state, (0, 1, 2))
    if isinstance(state, StateVector):
        return state.to_density()
    return state


def run_schedule(
    schedule: PulseSchedule,
    psi0: StateVector,
    engine: str = "analytic",
    params: SystemParams | None = None,
    options: EngineOptions | None = None,
) -> tuple[StateVector | DensityMatrix, Trajectory]:
    """Apply the segments of ``schedule`` in order.

    Parameters
    ----------
    schedule : PulseSchedule
    psi0 : StateVector
        State on ``(qubit, mode1, mode2)``.
    engine : {'analytic', 'oracle', 'effective', 'full', 'lindblad'}
    params : SystemParams
    options : EngineOptions, optional

    Returns
    -------
    final : StateVector or DensityMatrix
        ``full`` returns a state that still carries the cavity factor;
        ``lindblad`` returns a density matrix.
    trajectory : Trajectory
        States at the segment boundaries (and at intermediate steps when
        ``options.store_every`` is set for integrated engines).
    """
    if params is None:
        raise ValueError("run_schedule needs SystemParams")
    opts = options or EngineOptions()
    space = psi0.space
    if space.n_factors != 3:
        raise ValueError(f"schedules act on (qubit, mode1, mode2) states, got {space.factor_dims}")
    max_dn = space.factor_dims[1] + space.factor_dims[2] - 2
    for seg in schedule:
        if seg.kind is SegmentKind.SELECTIVE_ROTATION and abs(seg.delta_n) > max_dn:
            raise ValueError(f"rotation class {seg.delta_n} outside the truncated space")

    if engine == "analytic":
        return _run_analytic(schedule, psi0, params)
    if engine == "oracle":
        return _run_oracle(schedule, psi0, params)
    if engine == "effective":
        return _run_effective(schedule, psi0, params, opts)
    if engine == "full":
        return _run_full(schedule, psi0, params, opts)
    if engine == "lindblad":
        return _run_lindblad(schedule, psi0, params, opts)
    raise ValueError(f"unknown engine {engine!r}")


def _run_analytic(schedule, psi0, params):
    state = psi0
    times, states = [0.0], [psi0.amplitudes]
    t = 0.0
    for seg in schedule:
        if seg.kind is SegmentKind.SELECTIVE_ROTATION:
            state = selective_rotation_gate(state, seg.delta_n, params.Omega_s * seg.duration, (seg.alpha, seg.phase))
        elif seg.kind is SegmentKind.IDLE:
            state = idle_gate(state, seg.duration, params)
        else:
            state = jc_gate(state, seg.mode, seg.duration, params)
        t += seg.duration
        times.append(t)
        states.append(state.amplitudes)
    return state, Trajectory(np.array(times), np.array(states), psi0.space)


def _run_oracle(schedule, psi0, params):
    psi = psi0.amplitudes.copy()
    times, states = [0.0], [psi.copy()]
    t = 0.0
    for seg in schedule:
        if seg.kind is SegmentKind.SELECTIVE_ROTATION:
            K = _rotation_area(psi0.space, seg, params.Omega_s)
            psi = linalg.expm(-1j * 0.5 * (K + K.conj().T)) @ psi
        else:
            psi = propagator_exact(segment_generator(seg, psi0.space, params), seg.duration).matrix @ psi
        t += seg.duration
        times.append(t)
        states.append(psi.copy())
    final = StateVector(psi0.space, psi / np.linalg.norm(psi))
    return final, Trajectory(np.array(times), np.array(states), psi0.space)


def _run_effective(schedule, psi0, params, opts):
    v = psi0.amplitudes.astype(complex)
    times, states = [0.0], [v.copy()]
    t = 0.0
    for seg in schedule:
        U = _instant_unitary(seg, psi0.space, params)
        if U is not None:
            v = U @ v
            times.append(t + seg.duration)
            states.append(v.copy())
            t += seg.duration
            continue
        H = segment_generator(seg, psi0.space, params, opts.include_spectator_coupling)
        tr = _integrate_ket(H, v, psi0.space, seg.duration, steps_per_period=opts.steps_per_period,
                            store_every=opts.store_every, t0=t)
        v = tr.final
        times.extend(tr.times[1:])
        states.extend(tr.states[1:])
        t += seg.duration
    drift = abs(np.linalg.norm(v) - 1.0)
    final = StateVector(psi0.space, v / np.linalg.norm(v))
    return final, Trajectory(np.array(times), np.array(states), psi0.space, {"norm_drift": drift})


def _run_full(schedule, psi0, params, opts):
    dims = psi0.space.factor_dims
    space4 = HilbertSpace(dims + (opts.cavity_dim,))
    v = _with_cavity(psi0.amplitudes, opts.cavity_dim)
    times, states = [0.0], [v.copy()]
    t = 0.0
    for seg in schedule:
        resonant = seg.kind in (SegmentKind.RESONANT_MODE1, SegmentKind.RESONANT_MODE2)
        U = _instant_unitary(seg, space4, params)
        if U is not None:
            v = U @ v
            times.append(t + seg.duration)
            states.append(v.copy())
            t += seg.duration
            continue
        if not resonant:
            H = segment_generator(seg, space4, params)
            tr = _integrate_ket(H, v, space4, seg.duration, steps_per_period=opts.steps_per_period,
                                store_every=opts.store_every, t0=t)
            v = tr.final
            times.extend(tr.times[1:])
            states.extend(tr.states[1:])
            t += seg.duration
            continue
        H = _full_segment_model(seg, space4, params, opts)
        if opts.dressed_basis:
            v = linalg.expm(-_dressing(H, t)) @ v
        if opts.full_method == "exact":
            v = _propagate_frame(H, v, t, t + seg.duration)
            tr = None
        else:
            tr = _integrate_ket(H, v, space4, seg.duration, steps_per_period=opts.steps_per_period,
                                store_every=opts.store_every, t0=t)
            v = tr.final
        if opts.dressed_basis:
            v = linalg.expm(_dressing(H, t + seg.duration)) @ v
        if tr is None:
            times.append(t + seg.duration)
            states.append(v.copy())
            t += seg.duration
            continue
        times.extend(tr.times[1:])
        states.extend(tr.states[1:])
        t += seg.duration
    drift = abs(np.linalg.norm(v) - 1.0)
    final = StateVector(space4, v / np.linalg.norm(v))
    return final, Trajectory(np.array(times), np.array(states), space4, {"norm_drift": drift})


def liouvillian(H: Operator | np.ndarray, collapse_ops, space: HilbertSpace) -> sparse.csr_matrix:
    """Sparse Lindblad generator acting on row-major ``rho.ravel()``."""
    m = H.matrix if isinstance(H, Operator) else np.asarray(H, dtype=complex)
    Ls, absorb = _dissipator_parts(collapse_ops, space)
    heff = sparse.csr_matrix(m - 1j * absorb)
    eye = sparse.identity(space.dim, dtype=complex, format="csr")
    out = -1j * (sparse.kron(heff, eye) - sparse.kron(eye, heff.conj()))
    for rate, L in Ls:
        Ls_ = sparse.csr_matrix(L)
        out = out + rate * sparse.kron(Ls_, Ls_.conj())
    return out.tocsr()


def _run_lindblad(schedule, psi0, params, opts):
    rho = psi0.to_density().matrix
    cops = collapse_operators(psi0.space, params)
    times, states = [0.0], [rho.copy()]
    t = 0.0
    min_eig = 0.0
    exact = opts.lindblad_method == "exact" and opts.store_every is None
    if opts.lindblad_method not in ("exact", "rk4"):
        raise ValueError(f"unknown lindblad_method {opts.lindblad_method!r}")
    for seg in schedule:
        U = _instant_unitary(seg, psi0.space, params)
        if U is not None:
            rho = U @ rho @ U.conj().T
            times.append(t + seg.duration)
            states.append(rho.copy())
            t += seg.duration
            continue
        H = segment_generator(seg, psi0.space, params, opts.include_spectator_coupling)
        if exact:
            if seg.duration > 0:
                Lv = liouvillian(H, cops, psi0.space)
                rho = sparse_linalg.expm_multiply(Lv * seg.duration, rho.ravel()).reshape(rho.shape)
                rho = 0.5 * (rho + rho.conj().T)
            times.append(t + seg.duration)
            states.append(rho.copy())
            t += seg.duration
            continue
        tr = _integrate_rho(H, cops, rho, psi0.space, seg.duration, steps_per_period=opts.steps_per_period,
                            store_every=opts.store_every, t0=t)
        min_eig = min(min_eig, tr.diagnostics.get("min_eigenvalue", 0.0))
        rho = tr.final
        times.extend(tr.times[1:])
        states.extend(tr.states[1:])
        t += seg.duration
    if exact:
        min_eig = min(0.0, float(np.linalg.eigvalsh(rho)[0]))
    diag = {"trace_drift": abs(np.trace(rho).real - 1.0), "min_eigenvalue": min_eig}
    return _wrap_density(psi0.space, rho), Trajectory(np.array(times), np.array(states), psi0.space, diag)
