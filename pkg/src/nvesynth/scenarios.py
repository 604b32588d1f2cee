"""Scenario runners behind the command-line interface.

Each runner takes a resolved :class:`~nvesynth.cli.ScenarioConfig` and
returns a :class:`ResultTable`. Runners are deterministic for a given config
and seed.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from . import __version__
from .dynamics import EngineOptions, SegmentKind, reduce_to_modes, run_schedule
from .model import SystemParams, calibrate_exchange, derive, full_model, single_mode_space, validity_warnings
from .ops import StateVector
from .protocols import (
    coherent_trajectory,
    mdes_schedule,
    mdes_target,
    noon_schedule,
    noon_target,
    state_fidelity,
)
from .synthesis import TargetState, predicted_total_time, synthesize, target_space

__all__ = ["ResultTable", "SCENARIOS", "benchmark_target", "benchmark_params", "benchmark_fidelity"]


@dataclass
class ResultTable:
    """Rectangular numeric table with a metadata block.

    ``blocks`` optionally splits the rows into labelled groups (for example
    one per detuning); each entry is ``(label, first_row, stop_row)``.
    """

    columns: list[str]
    rows: list[list[float]]
    metadata: dict[str, str] = field(default_factory=dict)
    blocks: list[tuple[str, int, int]] = field(default_factory=list)

    def __post_init__(self):
        for r in self.rows:
            if len(r) != len(self.columns):
                raise ValueError(f"row of length {len(r)} in a table with {len(self.columns)} columns")

    def column(self, name: str) -> np.ndarray:
        return np.array([r[self.columns.index(name)] for r in self.rows], dtype=float)


# --------------------------------------------------------------------------
# shared pieces


def benchmark_target(cfg) -> TargetState:
    """Uniform-amplitude grid with seeded random phases (3 x 3 quanta by default)."""
    rng = np.random.default_rng(cfg.seed)
    return TargetState.uniform_random_phases(cfg.bench_n1, cfg.bench_n2, rng)


def benchmark_params(params: SystemParams, n_max: tuple[int, int] = (3, 3), cavity_dim: int = 3,
                     calibrated: bool = True) -> SystemParams:
    """Effective parameters for one microscopic operating point.

    Both ensembles start from the second-order coupling and mode frequency;
    the second ensemble keeps the configured frequency ratio to the first.
    With ``calibrated`` the exchange couplings are replaced by the values
    measured on the microscopic model for ``n_max`` quanta per mode, which
    sets the exchange durations of the synthesized schedule.
    """
    d = derive(params)
    ratio = params.omega_b2 / params.omega_b1
    p = params.replace(g1=d.g_eff, g2=d.g_eff, omega_b1=d.omega_b, omega_b2=d.omega_b * ratio)
    if calibrated:
        c1 = calibrate_exchange(p, 1, max(1, n_max[0]), cavity_dim)
        c2 = calibrate_exchange(p, 2, max(1, n_max[1]), cavity_dim)
        p = p.replace(g1=c1.coupling, g2=c2.coupling)
    return p


def benchmark_fidelity(params: SystemParams, target: TargetState, cavity_dim: int = 4,
                       calibrated: bool = True, extra_levels: int = 1) -> float:
    """Synthesize ``target`` and run it under the microscopic model; cavity traced out.

    ``calibrated`` selects measured (rather than second-order) exchange
    couplings and Stark-shift offsets; ``extra_levels`` pads each mode above
    the target's highest occupation.
    """
    p = benchmark_params(params, (target.N1, target.N2), cavity_dim, calibrated)
    rep = synthesize(target, p)
    comp = "calibrated" if calibrated else "perturbative"
    opts = EngineOptions(cavity_dim=cavity_dim, shift_compensation=comp, calibration_quanta=(target.N1, target.N2))
    out, _ = run_schedule(rep.schedule, _ground(target_space(target, extra_levels)), "full", p, opts)
    return state_fidelity(target, reduce_to_modes(out))


def _ground(space) -> StateVector:
    v = np.zeros(space.dim, dtype=complex)
    v[space.index((1,) + (0,) * (space.n_factors - 1))] = 1.0
    return StateVector(space, v)


def _warn_validity(params: SystemParams) -> None:
    for msg in validity_warnings(params):
        warnings.warn(msg, stacklevel=3)


def _sweep_values(cfg, default: tuple[str, float, float, int]) -> tuple[str, np.ndarray]:
    if cfg.sweep is None and getattr(cfg, "fixed", False):
        return default[0], np.array([getattr(cfg.params, default[0])])
    name, lo, hi, n = cfg.sweep if cfg.sweep is not None else default
    return name, np.linspace(lo, hi, n)


def _meta(cfg, **extra) -> dict[str, str]:
    m = {"version": __version__}
    m.update({k: str(v) for k, v in extra.items()})
    return m


# --------------------------------------------------------------------------
# runners


def run_fig2(cfg) -> ResultTable:
    """Bare-level populations of ``|e, 0, 0_c>`` and ``|g, 1, 0_c>`` under the microscopic
    model and under the effective exchange model, for each detuning of the sweep."""
    name, values = _sweep_values(cfg, ("Delta", 100.0, 200.0, 2))
    rows: list[list[float]] = []
    blocks = []
    for v in values:
        p = cfg.params.replace(**{name: float(v)})
        _warn_validity(p)
        d = derive(p)
        space = single_mode_space(cfg.mode_dim, cfg.cavity_dim)
        H = full_model(p, space)
        dvec, K = H.static_frame()
        w, U = linalg.eigh(K)
        psi0 = np.zeros(space.dim, dtype=complex)
        i1 = space.index((0, 0, 0))
        i2 = space.index((1, 1, 0))
        psi0[i1] = 1.0
        c = U.conj().T @ psi0
        times = np.linspace(0.0, cfg.t_max / d.g_eff, cfg.points)
        start = len(rows)
        # effective model: detuned exchange between |e,0> and |g,1>
        det = d.omega_z - d.omega_b
        W = math.sqrt(4 * d.g_eff**2 + det**2)
        for t in times:
            psi = np.exp(-1j * dvec * t) * (U @ (np.exp(-1j * w * t) * c))
            p2e = 4 * d.g_eff**2 / W**2 * math.sin(W * t / 2) ** 2
            rows.append([float(t * d.g_eff), abs(psi[i1]) ** 2, abs(psi[i2]) ** 2, 1.0 - p2e, p2e])
        blocks.append((f"{name} = {float(v)!r}", start, len(rows)))
    return ResultTable(["t", "P1_full", "P2_full", "P1_eff", "P2_eff"], rows,
                       _meta(cfg, time_unit="g*t with g the effective coupling of each block"), blocks)


def _fig4(cfg, default) -> ResultTable:
    name, values = _sweep_values(cfg, default)
    target = benchmark_target(cfg)
    rows = []
    for v in values:
        p = cfg.params.replace(**{name: float(v)})
        _warn_validity(p)
        rows.append([float(v), benchmark_fidelity(p, target, cfg.cavity_dim)])
    col = {"Omega": "Omega_over_g", "Delta": "Delta_over_g"}.get(name, name)
    return ResultTable([col, "fidelity"], rows, _meta(cfg, benchmark=f"uniform {cfg.bench_n1}x{cfg.bench_n2} seeded phases"))


def run_fig4a(cfg) -> ResultTable:
    """Benchmark fidelity against the classical drive amplitude."""
    return _fig4(cfg, ("Omega", 1.0, 5.0, 5))


def run_fig4b(cfg) -> ResultTable:
    """Benchmark fidelity against the cavity detuning."""
    return _fig4(cfg, ("Delta", 40.0, 200.0, 9))


def run_fig5(cfg) -> ResultTable:
    """Benchmark fidelity on a grid of cavity and emitter decay rates."""
    target = benchmark_target(cfg)
    _warn_validity(cfg.params)
    p = benchmark_params(cfg.params, (target.N1, target.N2), cfg.cavity_dim)
    rep = synthesize(target, p)
    space = target_space(target)
    psi0 = _ground(space)
    rates = np.linspace(0.0, cfg.grid_max, cfg.grid_points)
    rows = []
    for kappa in rates:
        for gamma in rates:
            q = p.replace(kappa=float(kappa), gamma=float(gamma))
            rho, _ = run_schedule(rep.schedule, psi0, "lindblad", q)
            rows.append([float(kappa), float(gamma), state_fidelity(target, rho)])
    return ResultTable(["kappa_over_g", "gamma_over_g", "fidelity"], rows,
                       _meta(cfg, benchmark=f"uniform {cfg.bench_n1}x{cfg.bench_n2} seeded phases"))


def _protocol_rows(cfg, schedule_fn, target_fn) -> ResultTable:
    rows = []
    for N in range(1, cfg.n_max + 1):
        rep = schedule_fn(N, cfg.params)
        syn = synthesize(target_fn(N), cfg.params)
        rows.append([
            float(N),
            rep.achieved_fidelity,
            syn.achieved_fidelity,
            rep.schedule.without_pauses().total_time,
            predicted_total_time(N, N, cfg.params),
            rep.predicted_time,
            rep.raw_fidelity,
            rep.pause,
        ])
    cols = ["N", "fidelity_shortcut", "fidelity_synthesized", "time_shortcut", "time_worst_case",
            "time_nominal", "fidelity_raw", "pause"]
    return ResultTable(cols, rows, _meta(cfg))


def run_noon(cfg) -> ResultTable:
    return _protocol_rows(cfg, noon_schedule, noon_target)


def run_mdes(cfg) -> ResultTable:
    return _protocol_rows(cfg, mdes_schedule, mdes_target)


def run_ecs(cfg) -> ResultTable:
    """Predicted and simulated displacements along one evolution."""
    p = cfg.params
    t_max = cfg.t_max if cfg.t_max is not None else 2 * math.pi / abs(p.delta1)
    sims = coherent_trajectory(p, t_max, cfg.points, cfg.truncation)
    rows = []
    for pred, sim in sims:
        rows.append([
            sim.t,
            pred.alpha.real, pred.alpha.imag, pred.beta.real, pred.beta.imag,
            sim.b1[1].real, sim.b1[1].imag, sim.b2[1].real, sim.b2[1].imag,
            sim.fidelity,
        ])
    cols = ["t", "re_alpha", "im_alpha", "re_beta", "im_beta", "re_b1", "im_b1", "re_b2", "im_b2", "fidelity"]
    return ResultTable(cols, rows, _meta(cfg, conditional_branch="sigma_x = -1"))


_KIND_CODE = {
    SegmentKind.RESONANT_MODE1: 1,
    SegmentKind.RESONANT_MODE2: 2,
    SegmentKind.SELECTIVE_ROTATION: 3,
    SegmentKind.IDLE: 4,
}


def run_synth(cfg) -> ResultTable:
    """Synthesis schedule, one row per segment, with the running fidelity to the target."""
    target = cfg.resolve_target()
    rep = synthesize(target, cfg.params)
    space = target_space(target)
    state = _ground(space)
    rows = [[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, state_fidelity(target, state)]]
    t = 0.0
    for i, seg in enumerate(rep.schedule, start=1):
        state, _ = run_schedule(type(rep.schedule)((seg,)), state, "analytic", cfg.params)
        t += seg.duration
        theta = seg.duration * cfg.params.Omega_s if seg.kind is SegmentKind.SELECTIVE_ROTATION else 0.0
        rows.append([float(i), float(_KIND_CODE[seg.kind]), float(seg.delta_n), seg.duration, theta,
                     seg.phase, seg.alpha, t, state_fidelity(target, state)])
    cols = ["step", "kind", "delta_n", "duration", "theta", "phase", "alpha", "t_end", "fidelity"]
    return ResultTable(cols, rows, _meta(cfg, kind_codes="0 start, 1 mode-1 exchange, 2 mode-2 exchange, 3 rotation, 4 pause",
                                         inverse_residual=repr(rep.inverse_residual)))


SCENARIOS: dict[str, Callable] = {
    "fig2": run_fig2,
    "fig4a": run_fig4a,
    "fig4b": run_fig4b,
    "fig5": run_fig5,
    "noon": run_noon,
    "mdes": run_mdes,
    "ecs": run_ecs,
    "synth": run_synth,
}
