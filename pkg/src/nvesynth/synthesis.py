"""Arbitrary two-mode state synthesis by inverse evolution.

The synthesizer disassembles a target ``|g> sum c[n1, n2] |n1, n2>`` down to
``|g, 0, 0>`` with the adjoints of the three available gates and returns the
reversed sequence. Rows of mode 2 are emptied from the top, columns from the
right; mode 1 is emptied last along the ``n2 = 0`` row.

Every exchange step must cancel one amplitude of a pair
``(|e, n1, m-1>, |g, n1, m>)``, which a real exchange coupling can only do when
the two amplitudes are a quarter period out of phase. Each rotation therefore
uses its diagonal phase to put the amplitude it creates into quadrature with
its future exchange partner; every later operation acting on that pair
preserves the quadrature, so every step is solved exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .dynamics import (
    PulseSchedule,
    PulseSegment,
    jc_gate,
    run_schedule,
    selective_rotation_gate,
)
from .model import SystemParams, two_mode_space
from .ops import HilbertSpace, StateVector

__all__ = [
    "TargetState",
    "SynthesisReport",
    "SynthesisError",
    "synthesize",
    "inverse_pass",
    "predicted_total_time",
    "worst_case_schedule",
    "solve_timing",
    "timing_candidates",
    "TimingResult",
    "target_space",
    "target_vector",
]

ZERO_TOL = 1e-13


class SynthesisError(RuntimeError):
    """Raised when an inverse step cannot be solved without disturbing populated levels."""


@dataclass(frozen=True)
class TargetState:
    """Normalized coefficient grid ``c[n1, n2]``, ``0 <= n1 <= N1``, ``0 <= n2 <= N2``."""

    coefficients: np.ndarray

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coefficients, dtype=complex))
        if c.ndim != 2:
            raise ValueError("coefficients must be a 2-D grid")
        norm2 = float(np.sum(np.abs(c) ** 2))
        if abs(norm2 - 1.0) > 1e-12:
            raise ValueError(f"target is not normalized (sum |c|^2 = {norm2:.15g})")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)

    @property
    def N1(self) -> int:
        return self.coefficients.shape[0] - 1

    @property
    def N2(self) -> int:
        return self.coefficients.shape[1] - 1

    @classmethod
    def from_dict(cls, amplitudes: dict[tuple[int, int], complex], N1: int | None = None, N2: int | None = None):
        n1 = max(k[0] for k in amplitudes) if N1 is None else N1
        n2 = max(k[1] for k in amplitudes) if N2 is None else N2
        c = np.zeros((n1 + 1, n2 + 1), dtype=complex)
        for (a, b), v in amplitudes.items():
            c[a, b] = v
        return cls(c)

    @classmethod
    def random(cls, N1: int, N2: int, rng: np.random.Generator) -> "TargetState":
        c = rng.normal(size=(N1 + 1, N2 + 1)) + 1j * rng.normal(size=(N1 + 1, N2 + 1))
        return cls(c / np.linalg.norm(c))

    @classmethod
    def uniform_random_phases(cls, N1: int, N2: int, rng: np.random.Generator) -> "TargetState":
        phases = rng.uniform(0, 2 * np.pi, size=(N1 + 1, N2 + 1))
        c = np.exp(1j * phases) / np.sqrt((N1 + 1) * (N2 + 1))
        return cls(c)

    def padded(self, N1: int, N2: int) -> "TargetState":
        c = np.zeros((N1 + 1, N2 + 1), dtype=complex)
        c[: self.N1 + 1, : self.N2 + 1] = self.coefficients
        return TargetState(c)


def target_space(target: TargetState, extra_levels: int = 1) -> HilbertSpace:
    """Qubit plus both modes, each keeping ``extra_levels`` Fock levels above the target's top level."""
    if extra_levels < 0:
        raise ValueError("extra_levels must be >= 0")
    return two_mode_space(target.N1 + 1 + extra_levels, target.N2 + 1 + extra_levels)


def target_vector(target: TargetState, space: HilbertSpace | None = None) -> StateVector:
    """``|g> (x) sum c[n1, n2] |n1, n2>`` on ``space``."""
    space = target_space(target) if space is None else space
    d1, d2 = space.factor_dims[1], space.factor_dims[2]
    if target.N1 >= d1 or target.N2 >= d2:
        raise ValueError("space too small for the target")
    psi = np.zeros(space.factor_dims, dtype=complex)
    psi[1, : target.N1 + 1, : target.N2 + 1] = target.coefficients
    return StateVector(space, psi.ravel())


@dataclass(frozen=True)
class SynthesisReport:
    """Result of :func:`synthesize`.

    Attributes
    ----------
    schedule : PulseSchedule
        Forward sequence, to be applied to ``|g, 0, 0>``.
    predicted_time : float
        Worst-case duration for the target's dimensions.
    achieved_fidelity : float
        Fidelity of the forward analytic execution with the target.
    step_residuals : list of float
        Amplitude left un-cancelled by each inverse step.
    inverse_residual : float
        ``1 - |<g,0,0|U^+|target>|^2`` after the literal inverse sequence.
    pause : float
        Duration of any phase-correcting pause appended to the schedule.
    """

    schedule: PulseSchedule
    predicted_time: float
    achieved_fidelity: float
    step_residuals: list = field(default_factory=list)
    inverse_residual: float = 0.0
    pause: float = 0.0
    raw_fidelity: float | None = None
    labels: tuple = ()


def predicted_total_time(N1: int, N2: int, params: SystemParams) -> float:
    """Worst-case synthesis time: every rotation of area pi, every exchange a full transfer."""
    if N1 < 0 or N2 < 0:
        raise ValueError("N1 and N2 must be >= 0")
    t = (N1 + 1) * (N2 + 1) * math.pi / params.Omega_s
    t += math.fsum(math.pi / (2 * math.sqrt(j) * params.g1) for j in range(1, N1 + 1))
    t += (N1 + 1) * math.fsum(math.pi / (2 * math.sqrt(j) * params.g2) for j in range(1, N2 + 1))
    return t


def worst_case_schedule(N1: int, N2: int, params: SystemParams) -> PulseSchedule:
    """Schedule with the maximal segment counts and worst-case durations, in forward order."""
    segs: list[PulseSegment] = []
    rot = lambda dn: PulseSegment.rotation(dn, math.pi, 0.0, params.Omega_s)
    # forward: mode-1 ladder first, then rows of mode 2 bottom-up
    segs.append(rot(0))
    for n in range(1, N1 + 1):
        segs.append(PulseSegment.resonant(1, math.pi / (2 * math.sqrt(n) * params.g1)))
        segs.append(rot(n))
    for j in range(1, N2 + 1):
        for k in range(N1 + 1):
            segs.append(PulseSegment.resonant(2, math.pi / (2 * math.sqrt(j) * params.g2)))
            segs.append(rot(k - j))
    return PulseSchedule(tuple(segs))


# --------------------------------------------------------------------------
# inverse evolution


def _pair(psi: np.ndarray, e_idx, g_idx) -> tuple[complex, complex]:
    return psi[(0,) + e_idx], psi[(1,) + g_idx]


def _rotation_params(e: complex, g: complex, partner: complex | None) -> tuple[float, float, float] | None:
    """(theta, alpha, beta) of the inverse rotation cancelling ``e`` into ``g``.

    The resulting ``g`` amplitude is put in quadrature with ``partner`` (the
    e-amplitude it will later exchange with). Returns None when no rotation
    is needed.
    """
    ae, ag = abs(e), abs(g)
    r = math.hypot(ae, ag)
    if r < ZERO_TOL:
        return None
    need_phase = partner is not None and abs(partner) > ZERO_TOL
    if ae < ZERO_TOL:
        if not need_phase:
            return None
        # a full 2 pi Bloch turn only re-phases the class
        target = float(np.angle(partner)) - math.pi / 2
        cur = np.angle(-g)
        alpha = float(cur - target)
        return math.pi, alpha, 0.0
    theta = math.atan2(ae, ag)
    arg_g = float(np.angle(g)) if ag > ZERO_TOL else 0.0
    arg_e = float(np.angle(e))
    if need_phase:
        # this quadrature sign gives the later exchange an angle below pi/2
        target = float(np.angle(partner)) - math.pi / 2
        alpha = arg_g - target
    else:
        alpha = 0.0
    beta = -math.pi / 2 + arg_g - arg_e - alpha
    return theta, alpha, beta


def _apply_inverse_rotation(psi_sv: StateVector, dn: int, theta: float, alpha: float, beta: float) -> StateVector:
    # R(theta, a, b)^+ = R(-theta, -a, b) for the SU(2) block used here
    return selective_rotation_gate(psi_sv, dn, -theta, (-alpha, beta))


def _exchange_time(b: complex, a: complex, rate: float) -> float | None:
    """Time after which the inverse exchange cancels ``a`` (pair ``(b, a)`` in quadrature)."""
    if abs(a) < ZERO_TOL:
        return None
    if abs(b) < ZERO_TOL:
        return math.pi / (2 * rate)
    u = b / abs(b)
    x = abs(b)
    y = float(np.real(a / (1j * u)))
    theta = math.atan2(-y, x) % math.pi
    return theta / rate


def inverse_pass(target: TargetState, params: SystemParams, space: HilbertSpace | None = None):
    """Disassemble ``target`` to ``|g, 0, 0>``.

    Returns
    -------
    steps : list of PulseSegment
        Inverse-order segments; the forward schedule is this list reversed.
    residuals : list of float
        Amplitude left by each step in the component it was meant to cancel.
    final : StateVector
        State after the whole inverse sequence.
    labels : list of str
        Which amplitude each step cancelled.
    """
    space = target_space(target) if space is None else space
    sv = target_vector(target, space)
    N1, N2 = target.N1, target.N2
    steps: list[PulseSegment] = []
    residuals: list[float] = []
    labels: list[str] = []
    tensor = lambda s: s.amplitudes.reshape(space.factor_dims)

    def rotate(dn: int, e_idx, g_idx, partner_idx, label):
        nonlocal sv
        psi = tensor(sv)
        e, g = _pair(psi, e_idx, g_idx)
        partner = psi[(0,) + partner_idx] if partner_idx is not None else None
        prm = _rotation_params(e, g, partner)
        if prm is None:
            return
        theta, alpha, beta = prm
        _check_class(psi, dn, e_idx, label)
        sv = _apply_inverse_rotation(sv, dn, theta, alpha, beta)
        steps.append(PulseSegment.rotation(dn, theta, beta, params.Omega_s, alpha))
        residuals.append(float(abs(tensor(sv)[(0,) + e_idx])))
        labels.append(label)

    def exchange(mode: int, m: int, e_idx, g_idx, label):
        nonlocal sv
        psi = tensor(sv)
        b, a = _pair(psi, e_idx, g_idx)
        rate = (params.g1 if mode == 1 else params.g2) * math.sqrt(m)
        t = _exchange_time(b, a, rate)
        if t is None:
            return
        # inverse of the forward exchange U(t) is U(t)^+, applied here as the adjoint map
        sv = _jc_adjoint(sv, mode, t, params)
        steps.append(PulseSegment.resonant(mode, t))
        residuals.append(float(abs(tensor(sv)[(1,) + g_idx])))
        labels.append(label)

    for j in range(N2, 0, -1):
        for k in range(N1, -1, -1):
            exchange(2, j, (k, j - 1), (k, j), f"g,{k},{j}")
            partner = (k, j - 2) if j >= 2 else ((k - 1, 0) if k >= 1 else None)
            rotate(k - j + 1, (k, j - 1), (k, j - 1), partner, f"e,{k},{j - 1}")
    for n in range(N1, 0, -1):
        exchange(1, n, (n - 1, 0), (n, 0), f"g,{n},0")
        partner = (n - 2, 0) if n >= 2 else None
        rotate(n - 1, (n - 1, 0), (n - 1, 0), partner, f"e,{n - 1},0")
    return steps, residuals, sv, labels


def _jc_adjoint(sv: StateVector, mode: int, t: float, params: SystemParams) -> StateVector:
    # U(t)^+ = U(-t) for a time-independent generator
    return jc_gate(sv, mode, -t, params)


def _check_class(psi: np.ndarray, dn: int, own, label: str) -> None:
    """Refuse a rotation that would move population out of an already emptied row."""
    _, d1, d2 = psi.shape[:3]
    n1o, n2o = own
    for n1 in range(d1):
        n2 = n1 - dn
        if not 0 <= n2 < d2 or n2 <= n2o:
            continue
        if abs(psi[1, n1, n2]) > 1e-9 or abs(psi[0, n1, n2]) > 1e-9:
            raise SynthesisError(
                f"rotation on class {dn} for {label} would disturb populated level ({n1}, {n2})"
            )


def synthesize(target: TargetState, params: SystemParams, space: HilbertSpace | None = None) -> SynthesisReport:
    """Pulse schedule preparing ``target`` from ``|g, 0, 0>``.

    Parameters
    ----------
    target : TargetState
    params : SystemParams
        Uses ``g1``, ``g2``, ``Omega_s``, ``omega_b1``, ``omega_b2``.
    space : HilbertSpace, optional
        Defaults to one spare Fock level per mode above the target.

    Returns
    -------
    SynthesisReport
    """
    if not isinstance(target, TargetState):
        target = TargetState(target)
    if params.Omega_s <= 0 or params.g1 <= 0 or params.g2 <= 0:
        raise ValueError("synthesis needs positive Omega_s, g1 and g2")
    if params.Omega_s >= params.lam:
        raise ValueError(f"Omega_s={params.Omega_s} must be below lam={params.lam} for number-selective rotations")
    space = target_space(target) if space is None else space
    steps, residuals, final, labels = inverse_pass(target, params, space)
    ground = final.amplitudes.reshape(space.factor_dims)[1, 0, 0]
    inverse_residual = max(0.0, 1.0 - abs(ground) ** 2)
    schedule = PulseSchedule(tuple(reversed(steps)))
    start = StateVector(space, _ground(space))
    out, _ = run_schedule(schedule, start, "analytic", params)
    tv = target_vector(target, space)
    fid = float(abs(np.vdot(tv.amplitudes, out.amplitudes)) ** 2)
    return SynthesisReport(
        schedule=schedule,
        predicted_time=predicted_total_time(target.N1, target.N2, params),
        achieved_fidelity=min(fid, 1.0),
        step_residuals=residuals,
        inverse_residual=inverse_residual,
        raw_fidelity=min(fid, 1.0),
        labels=tuple(reversed(labels)),
    )


def _ground(space: HilbertSpace) -> np.ndarray:
    v = np.zeros(space.dim, dtype=complex)
    v[space.index((1,) + (0,) * (space.n_factors - 1))] = 1.0
    return v


# --------------------------------------------------------------------------
# timing solver


@dataclass(frozen=True)
class TimingResult:
    duration: float
    residual: float


def _condition_funcs(conditions) -> list[Callable[[np.ndarray], np.ndarray]]:
    funcs = []
    for cond in conditions:
        if callable(cond):
            funcs.append(cond)
            continue
        coef, kind = cond
        if coef <= 0:
            raise ValueError("condition coefficients must be positive")
        if kind in ("sin", "sin-zero"):
            funcs.append(lambda t, c=coef: np.sin(c * t))
        elif kind in ("cos", "cos-zero"):
            funcs.append(lambda t, c=coef: np.cos(c * t))
        else:
            raise ValueError(f"unknown condition kind {kind!r}")
    return funcs


def timing_candidates(
    conditions: Sequence,
    search_window: tuple[float, float] = (0.0, 4.0),
    points_per_pi: int = 10_000,
) -> list[TimingResult]:
    """Every local minimum of the summed squared condition violation, in time order.

    Arguments as for :func:`solve_timing`.
    """
    funcs = _condition_funcs(conditions)
    if not funcs:
        raise ValueError("solve_timing needs at least one condition")
    lo, hi = (float(search_window[0]) * math.pi, float(search_window[1]) * math.pi)
    if not hi > lo:
        raise ValueError("search window is empty")
    n = max(3, int(math.ceil((hi - lo) / math.pi * points_per_pi)) + 1)
    grid = np.linspace(lo, hi, n)

    def cost(t):
        return sum(np.asarray(f(t), dtype=float) ** 2 for f in funcs)

    vals = cost(grid)
    idx = [i for i in range(1, n - 1) if vals[i] <= vals[i - 1] and vals[i] <= vals[i + 1]]
    out = []
    for i in sorted(set(idx + [0, n - 1])):
        if i in (0, n - 1):
            out.append(TimingResult(float(grid[i]), float(vals[i])))
            continue
        a, b = grid[i - 1], grid[i + 1]
        res = optimize.minimize_scalar(lambda x: float(np.sum(cost(np.asarray(x).item()))), bracket=(a, grid[i], b), method="golden",
                                       options={"xtol": 1e-14})
        t, r = float(res.x), float(res.fun)
        if not (a <= t <= b) or r > vals[i]:
            t, r = float(grid[i]), float(vals[i])
        out.append(TimingResult(t, r))
    # plateaus produce neighbouring duplicates
    dedup: list[TimingResult] = []
    for c in out:
        if dedup and abs(c.duration - dedup[-1].duration) < 1e-9:
            if c.residual < dedup[-1].residual:
                dedup[-1] = c
            continue
        dedup.append(c)
    return dedup


def solve_timing(
    conditions: Sequence,
    search_window: tuple[float, float] = (0.0, 4.0),
    points_per_pi: int = 10_000,
    tie_tol: float = 1e-12,
) -> TimingResult:
    """Duration minimizing the summed squared violation of trigonometric conditions.

    Parameters
    ----------
    conditions : sequence
        ``(coefficient, 'sin')`` asks for ``sin(coefficient * t) = 0``,
        ``(coefficient, 'cos')`` for ``cos(coefficient * t) = 0``; a callable
        ``f(t)`` asks for ``f(t) = 0`` and must accept arrays.
    search_window : (float, float)
        Window in multiples of pi.
    points_per_pi : int
        Density of the initial grid scan.
    tie_tol : float
        Residuals within this distance count as equal; the shorter duration wins.

    Returns
    -------
    TimingResult
    """
    best: TimingResult | None = None
    for c in timing_candidates(conditions, search_window, points_per_pi):
        if best is None or c.residual < best.residual - tie_tol:
            best = c
    return best
