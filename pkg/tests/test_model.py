import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import linalg

from nvesynth.dynamics import evolve_schrodinger
from nvesynth.model import (
    SystemParams,
    calibrate_exchange,
    derive,
    dressed_exchange_hamiltonian,
    effective_jc,
    exchange_model,
    full_hamiltonian,
    full_model,
    perturbative_offsets,
    selective_drive_frequency,
    single_mode_space,
    strong_driving_effective,
    strong_driving_model,
    two_mode_effective,
    two_mode_space,
    validity_warnings,
)
from nvesynth.ops import HilbertSpace, StateVector, basis_state, embed, number, sigma_x, sigma_z_half


# -- parameters


def test_defaults_and_derived_values():
    # g_m = 0.1, g_c = 10, Omega = 1, N = 1e4, Delta = 100 (units of g)
    d = derive(SystemParams())
    assert d.omega_z == pytest.approx(1.02, rel=1e-15)
    assert d.omega_b == pytest.approx(1.0, rel=1e-15)
    assert d.g_eff == pytest.approx(1.0, rel=1e-15)


def test_derived_limits():
    assert derive(SystemParams(Omega=0.0, g_c=0.0)).omega_z == 0.0
    p = SystemParams(N=1.0, g_m=0.3, g_c=7.0, Delta=50.0)
    assert derive(p).g_eff == pytest.approx(0.3 * 7.0 / 50.0, rel=1e-15)


@given(
    st.floats(0.0, 20.0), st.floats(0.0, 1.0), st.floats(1.0, 1e5), st.floats(0.0, 5.0),
    st.floats(1.0, 500.0) | st.floats(-500.0, -1.0),
)
def test_derive_identities(g_c, g_m, N, Omega, Delta):
    d = derive(SystemParams(g_c=g_c, g_m=g_m, N=N, Omega=Omega, Delta=Delta))
    assert d.omega_z == 2 * Omega**2 / Delta + g_c**2 / Delta
    assert d.omega_b == N * g_m**2 / Delta
    assert d.g_eff == pytest.approx(math.sqrt(N) * g_m * g_c / Delta, rel=1e-15)


@pytest.mark.parametrize(
    "changes",
    [{"kappa": -1.0}, {"gamma": -0.1}, {"Delta": 0.0}, {"N": float("nan")}, {"Delta_T": 50.0}, {"Delta_d": 0.0}],
)
def test_params_validation(changes):
    with pytest.raises(ValueError):
        SystemParams(**changes)


def test_relaxed_detunings():
    p = SystemParams(Delta_T=50.0, Delta_d=80.0, relax_detunings=True)
    assert p.detunings == (50.0, 100.0, 80.0)


def test_validity_warnings():
    assert validity_warnings(SystemParams()) == []
    msgs = validity_warnings(SystemParams(Delta=40.0))
    assert any("g_m*sqrt(N)" in m for m in msgs)
    assert any("not number selective" in m for m in validity_warnings(SystemParams(Omega_s=60.0)))


# -- microscopic model


def test_full_hamiltonian_hermitian(rng):
    p = SystemParams()
    for t in rng.uniform(0, 10, size=5):
        m = full_hamiltonian(p, float(t)).matrix
        assert np.abs(m - m.conj().T).max() <= 1e-14


def test_full_hamiltonian_real_at_zero():
    m = full_hamiltonian(SystemParams(), 0.0).matrix
    assert np.abs(m.imag).max() == 0.0


def test_unequal_detunings_need_flag():
    p = SystemParams(Delta_T=120.0, relax_detunings=True)
    full_model(p, single_mode_space(3, 3))
    with pytest.raises(ValueError):
        full_model(SystemParams(), HilbertSpace((2, 3)))


def test_full_model_exchange_near_half_period():
    # full Hamiltonian moves |e,0,0_c> to |g,1,0_c> near g t = pi/2
    p = SystemParams()
    sp = single_mode_space(3, 3)
    H = full_model(p, sp)
    tr = evolve_schrodinger(H, basis_state(sp, (0, 0, 0)), math.pi / 2, steps_per_period=80, store_every=None)
    assert abs(tr.final[sp.index((1, 1, 0))]) ** 2 > 0.9


def test_static_frame_matches_integration():
    p = SystemParams(Delta=60.0)
    sp = HilbertSpace((2, 3, 2, 3))
    H = exchange_model(p, sp, 1, *perturbative_offsets(p, 1), spectator_frequency=1.04)
    d, K = H.static_frame()
    assert np.abs(K - K.conj().T).max() <= 1e-13
    psi0 = basis_state(sp, (0, 0, 1, 0))
    t = 1.3
    exact = np.exp(-1j * d * t) * (linalg.expm(-1j * K * t) @ psi0.amplitudes)
    tr = evolve_schrodinger(H, psi0, t, steps_per_period=400, store_every=None)
    assert np.linalg.norm(tr.final - exact) <= 1e-8


def test_static_frame_rejects_inconsistent_carriers():
    from nvesynth.model import TimeDependentHamiltonian

    x = np.zeros((2, 2), complex)
    x[0, 1] = 1.0
    y = np.zeros((2, 2), complex)
    y[0, 1] = 0.5
    H = TimeDependentHamiltonian(HilbertSpace((2,)), np.zeros((2, 2), complex), ((1.0, x), (2.0, y)))
    with pytest.raises(ValueError):
        H.static_frame()


# -- effective models


def test_effective_jc_conserves_excitations():
    p = SystemParams()
    sp = single_mode_space(5)
    wb = derive(p).omega_b
    H = effective_jc(p, sp, omega_z=wb).matrix
    n_exc = (embed(sigma_z_half(), 0, sp) + embed(number(5), 1, sp)).matrix + 0.5 * np.eye(sp.dim)
    assert np.linalg.norm(H @ n_exc - n_exc @ H) <= 1e-13


def test_effective_jc_uncoupled_is_diagonal():
    H = effective_jc(SystemParams(g_m=0.0), single_mode_space(4)).matrix
    assert np.count_nonzero(H - np.diag(np.diag(H))) == 0


def test_effective_jc_doublet_splitting():
    p = SystemParams()
    d = derive(p)
    w, g, top = d.omega_b, d.g_eff, 4
    H = effective_jc(p, single_mode_space(top + 1), omega_z=w).matrix
    expected = [-w / 2, w / 2 + top * w]
    for n in range(1, top + 1):
        expected += [w * (n - 0.5) + g * math.sqrt(n), w * (n - 0.5) - g * math.sqrt(n)]
    np.testing.assert_allclose(np.linalg.eigvalsh(H), np.sort(expected), atol=1e-12)


def test_two_mode_reduces_to_single_mode():
    p = SystemParams(g2=0.0)
    sp = two_mode_space(4, 3)
    H2 = two_mode_effective(p, derive(p).omega_z, sp).matrix
    H1 = effective_jc(p, single_mode_space(4)).matrix
    idx = [sp.index((q, n, 0)) for q in (0, 1) for n in range(4)]
    np.testing.assert_allclose(H2[np.ix_(idx, idx)], H1, atol=1e-15)
    assert np.abs(H2 - H2.conj().T).max() == 0


def test_two_mode_dispersive_leakage():
    # qubit resonant with mode 1, mode 2 detuned by 50 g2
    g2 = 1.0
    p = SystemParams(omega_b1=1.0, omega_b2=51.0, g1=1.0, g2=g2)
    sp = two_mode_space(3, 3)
    H = two_mode_effective(p, 1.0, sp).matrix
    w, U = np.linalg.eigh(H)
    c = U.conj().T @ basis_state(sp, (0, 0, 0)).amplitudes
    mode2 = np.array([sp.labels(i)[2] > 0 for i in range(sp.dim)])
    leak = []
    for t in np.linspace(0, 20, 2001):
        psi = U @ (np.exp(-1j * w * t) * c)
        leak.append(float(np.sum(np.abs(psi[mode2]) ** 2)))
    # two-level off-resonant Rabi: peak 4 (g/D)^2, mean 2 (g/D)^2; 5% slack for the
    # simultaneous resonant exchange with mode 1
    eps = (g2 / 50.0) ** 2
    assert max(leak) <= 4 * eps * 1.05
    assert np.mean(leak) <= 2 * eps * 1.05
    assert max(leak) > 0.5 * eps


def test_selective_drive_frequency_examples():
    p = SystemParams()
    wz = derive(p).omega_z
    assert selective_drive_frequency(p, 0) == wz
    assert selective_drive_frequency(p, 1) == pytest.approx(wz + 100.0)
    assert selective_drive_frequency(p, -2) == pytest.approx(wz - 4 * p.lam)


@given(st.integers(-6, 6))
def test_selective_drive_frequency_affine(dn):
    p = SystemParams()
    slope = selective_drive_frequency(p, dn + 1) - selective_drive_frequency(p, dn)
    assert slope == pytest.approx(2 * p.lam, rel=1e-14)


def test_selective_drive_frequency_inconsistent_shift():
    with pytest.raises(ValueError):
        selective_drive_frequency(SystemParams(lam=10.0), 1)


# -- strong driving


ECS = SystemParams(g1=1.0, g2=1.0, delta1=10.0, delta2=10.0, Omega_s=100.0)


def test_strong_driving_structure(rng):
    sp = two_mode_space(4)
    sx = embed(sigma_x(), 0, sp).matrix
    for t in rng.uniform(0, 5, size=4):
        H = strong_driving_effective(ECS, float(t), sp).matrix
        assert np.abs(H - H.conj().T).max() <= 1e-14
        assert np.linalg.norm(H @ sx - sx @ H) <= 1e-13


def test_strong_driving_preserves_sigma_x():
    sp = two_mode_space(6)
    plus = (basis_state(sp, (0, 0, 0)).amplitudes + basis_state(sp, (1, 0, 0)).amplitudes) / math.sqrt(2)
    tr = evolve_schrodinger(strong_driving_model(ECS, sp), StateVector(sp, plus), 0.4, steps_per_period=200)
    sx = embed(sigma_x(), 0, sp).matrix
    for psi in tr.states:
        assert np.vdot(psi, sx @ psi).real == pytest.approx(1.0, abs=1e-10)


def test_strong_driving_warns_outside_regime():
    with pytest.warns(UserWarning):
        strong_driving_model(SystemParams(), two_mode_space(3))


# -- exchange calibration


def test_perturbative_offsets():
    p = SystemParams()
    q, m = perturbative_offsets(p, 2)
    assert q == pytest.approx(p.omega_b2 - 1.0 - 0.01)
    assert m == pytest.approx(p.omega_b2 - 1.0)


def test_calibration_matches_dressed_levels():
    p = SystemParams(omega_b1=1.0, omega_b2=1.04)
    cal = calibrate_exchange(p, 1, n_max=3)
    H, labels = dressed_exchange_hamiltonian(p, 1, cal.qubit_offset, cal.mode_offset, 5)
    at = {lab: i for i, lab in enumerate(labels)}
    assert H[at[(1, 1)], at[(1, 1)]].real - H[at[(1, 0)], at[(1, 0)]].real == pytest.approx(1.0, abs=1e-9)
    det = [H[at[(0, n - 1)], at[(0, n - 1)]].real - H[at[(1, n)], at[(1, n)]].real for n in (1, 2, 3)]
    assert np.mean(det) == pytest.approx(0.0, abs=1e-9)
    assert cal.detuning_spread >= max(abs(x) for x in det) - 1e-12


def test_calibration_approaches_second_order_at_large_detuning():
    ratios = []
    for D in (100.0, 200.0, 400.0):
        p = SystemParams(Delta=D)
        d = derive(p)
        p = p.replace(omega_b1=d.omega_b, omega_b2=1.04 * d.omega_b)
        ratios.append(calibrate_exchange(p, 1).coupling / d.g_eff)
    assert ratios[0] < ratios[1] < ratios[2] < 1.0
    assert 1.0 - ratios[2] < 0.25 * (1.0 - ratios[0])


def test_calibrated_exchange_transfers_fully():
    # one full-transfer exchange segment executed on the microscopic model
    from nvesynth.dynamics import EngineOptions, PulseSchedule, PulseSegment, reduce_to_modes, run_schedule

    p = SystemParams(Delta=60.0)
    d = derive(p)
    p = p.replace(omega_b1=d.omega_b, omega_b2=1.04 * d.omega_b)
    sp = HilbertSpace((2, 3, 2))
    transfer = {}
    for comp in ("perturbative", "calibrated"):
        g = calibrate_exchange(p, 1, n_max=1).coupling if comp == "calibrated" else d.g_eff
        sched = PulseSchedule((PulseSegment.resonant(1, math.pi / (2 * g)),))
        out, _ = run_schedule(sched, basis_state(sp, (0, 0, 0)), "full", p,
                              EngineOptions(shift_compensation=comp, calibration_quanta=(1, 1)))
        i = sp.index((1, 1, 0))
        transfer[comp] = reduce_to_modes(out).matrix[i, i].real
    assert transfer["calibrated"] > 0.999
    assert transfer["calibrated"] > transfer["perturbative"]


def test_calibration_rejects_bad_arguments():
    with pytest.raises(ValueError):
        calibrate_exchange(SystemParams(), 3)
    with pytest.raises(ValueError):
        calibrate_exchange(SystemParams(), 1, n_max=0)
