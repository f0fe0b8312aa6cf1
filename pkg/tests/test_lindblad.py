import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from src.core.errors import DimensionMismatch, StepUnstable
from src.models.hamiltonian import OperatorMatrix, SystemParams, jaynes_cummings, sigma_z_operator
from src.models.hilbert import (
    DensityMatrix,
    JointState,
    Truncation,
    coherent_state,
    joint_density,
    product_density,
    reduce_qubit,
)
from src.models.lindblad import (
    ChannelKind,
    JumpChannel,
    TimeGrid,
    default_time_step,
    expectation,
    integrate_master,
    jump_channels,
    lindblad_rhs,
    standard_observables,
)

G = 2 * math.pi * 100e6


def zero_hamiltonian(trunc: Truncation) -> OperatorMatrix:
    return OperatorMatrix(np.zeros((trunc.dim, trunc.dim)))


def random_density(seed: int, trunc: Truncation) -> DensityMatrix:
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(trunc.dim, trunc.dim)) + 1j * rng.normal(size=(trunc.dim, trunc.dim))
    rho = m @ m.conj().T
    return DensityMatrix(rho / np.trace(rho), trunc)


def test_jump_channels_skip_zero_rates(small_trunc):
    """Only channels with a positive rate are built, in a fixed order."""
    p = SystemParams(g=G, kappa=1.0, gamma_phi=2.0)
    kinds = [c.kind for c in jump_channels(p, small_trunc)]
    assert kinds == [ChannelKind.CAVITY_LOSS, ChannelKind.PURE_DEPHASING]
    assert jump_channels(SystemParams(g=G), small_trunc) == []
    with pytest.raises(ValueError):
        JumpChannel.build("cavity_loss", -1.0, small_trunc)


def test_dephasing_jump_rate(small_trunc):
    """The dephasing operator fires at gamma_phi/2 on any normalized state."""
    channel = JumpChannel.build(ChannelKind.PURE_DEPHASING, 4.0, small_trunc)
    psi = JointState.basis(1, 2, small_trunc).amplitudes
    assert channel.jump_rate(psi) == pytest.approx(2.0)


def test_default_time_step():
    """Fifty steps per period of the fastest Rabi frequency sqrt(n_max) g."""
    trunc = Truncation(16)
    assert default_time_step(G, trunc) == pytest.approx(1e-8 / 4 / 50)


def test_time_grid():
    """The step shrinks so the span is an integer number of steps."""
    grid = TimeGrid(0.0, 1.0, 0.3)
    assert grid.n_steps == 4
    assert grid.step == pytest.approx(0.25)
    np.testing.assert_allclose(grid.times, [0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0.5, 0.1)
    with pytest.raises(ValueError):
        TimeGrid(0.0, 1.0, 0.0)


@given(st.integers(0, 2 ** 32 - 1))
def test_rhs_is_traceless_and_hermitian(seed):
    """The generator preserves trace and Hermiticity."""
    trunc = Truncation(4)
    p = SystemParams.from_ratios(1.0, g_over_kappa=3, g_over_gamma1=5, g_over_gamma_phi=7, detuning=0.4)
    rho = random_density(seed, trunc)
    drho = lindblad_rhs(rho, jaynes_cummings(p, trunc), jump_channels(p, trunc))
    assert abs(np.trace(drho)) < 1e-12
    np.testing.assert_allclose(drho, drho.conj().T, atol=1e-12)


def test_rhs_dimension_check(small_trunc):
    """Operands on different truncations are rejected."""
    rho = joint_density(JointState.basis(0, 0, small_trunc))
    with pytest.raises(DimensionMismatch):
        lindblad_rhs(rho, jaynes_cummings(SystemParams(g=G), Truncation(3)), [])
    with pytest.raises(DimensionMismatch):
        expectation(rho, sigma_z_operator(Truncation(3)))


def test_vacuum_rabi_oscillation():
    """|+,0> under the resonant Hamiltonian gives P(+) = cos^2(g t / 2)."""
    trunc = Truncation(2)
    p = SystemParams(g=G)
    rho0 = joint_density(JointState.basis(0, 0, trunc))
    grid = TimeGrid.default(p, trunc, 2 * p.rabi_period)
    result = integrate_master(rho0, jaynes_cummings(p, trunc), [], grid)
    expected = np.cos(G * result.record.times / 2) ** 2
    np.testing.assert_allclose(result.record.mean["p_plus"], expected, atol=1e-5)
    assert result.max_trace_drift < 1e-12
    assert result.final.is_physical()


def test_pure_dephasing_decays_coherence_at_gamma_phi(small_trunc):
    """A standalone qubit coherence decays as exp(-gamma_phi t)."""
    gamma_phi = 1e6
    p = SystemParams(g=G, gamma_phi=gamma_phi)
    vacuum = np.zeros((small_trunc.levels, small_trunc.levels))
    vacuum[0, 0] = 1.0
    rho0 = product_density(0.5 * np.ones((2, 2)), vacuum, small_trunc)
    grid = TimeGrid(0.0, 1 / gamma_phi, 1e-8)
    result = integrate_master(rho0, zero_hamiltonian(small_trunc), jump_channels(p, small_trunc), grid)
    assert reduce_qubit(result.final)[0, 1].real == pytest.approx(0.5 * math.exp(-1), rel=1e-8)


def test_relaxation_empties_excited_state(small_trunc):
    """P(+) decays as exp(-gamma1 t) without coupling."""
    gamma1 = 2e6
    p = SystemParams(g=G, gamma1=gamma1)
    rho0 = joint_density(JointState.basis(0, 3, small_trunc))
    grid = TimeGrid(0.0, 2 / gamma1, 1e-8)
    result = integrate_master(rho0, zero_hamiltonian(small_trunc), jump_channels(p, small_trunc), grid,
                              sample_every=10)
    expected = np.exp(-gamma1 * result.record.times)
    np.testing.assert_allclose(result.record.mean["p_plus"], expected, rtol=1e-8)
    np.testing.assert_allclose(result.record.mean["n_photon"], 3.0, rtol=1e-10)


def test_cavity_loss_damps_coherent_field():
    """<n> of a coherent field decays as n̄ exp(-kappa t)."""
    trunc = Truncation(20)
    kappa = 1e5
    p = SystemParams(g=G, kappa=kappa)
    field, _ = coherent_state(math.sqrt(2), trunc)
    rho0 = joint_density(JointState.from_blocks(np.zeros(trunc.levels), field, trunc))
    grid = TimeGrid(0.0, 1 / kappa, 1e-7)
    result = integrate_master(rho0, zero_hamiltonian(trunc), jump_channels(p, trunc), grid,
                              keep_states=True, sample_every=25)
    expected = 2.0 * np.exp(-kappa * result.record.times)
    np.testing.assert_allclose(result.record.mean["n_photon"], expected, rtol=1e-6)
    assert len(result.states) == len(result.record.times) == 5
    np.testing.assert_allclose(result.record.mean["sz"], -1.0)


def test_dissipative_jaynes_cummings_stays_physical(small_trunc, cqed2_params):
    """A damped resonant run keeps the density matrix physical."""
    field, _ = coherent_state(math.sqrt(2), small_trunc, leak_tol=1e-3)
    rho0 = joint_density(JointState.from_blocks(field, np.zeros(small_trunc.levels), small_trunc))
    grid = TimeGrid.default(cqed2_params, small_trunc, 3 * cqed2_params.rabi_period)
    result = integrate_master(rho0, jaynes_cummings(cqed2_params, small_trunc),
                              jump_channels(cqed2_params, small_trunc), grid, check_every=10)
    assert result.max_trace_drift < 1e-10
    assert result.max_herm_drift < 1e-10
    assert result.min_eigenvalue > -1e-8
    assert result.final.is_physical()


def test_oversized_step_is_reported(small_trunc):
    """A step far beyond the damping time drives populations negative."""
    p = SystemParams(g=G, kappa=1.0)
    rho0 = joint_density(JointState.basis(1, 1, small_trunc))
    grid = TimeGrid(0.0, 30.0, 10.0)
    with pytest.raises(StepUnstable):
        integrate_master(rho0, zero_hamiltonian(small_trunc), jump_channels(p, small_trunc), grid,
                         check_every=1)


def test_standard_observables(small_trunc):
    """sz, p_plus and n_photon on a basis state."""
    rho = joint_density(JointState.basis(0, 5, small_trunc))
    obs = standard_observables(small_trunc)
    assert expectation(rho, obs["sz"]) == pytest.approx(1.0)
    assert expectation(rho, obs["p_plus"]) == pytest.approx(1.0)
    assert expectation(rho, obs["n_photon"]) == pytest.approx(5.0)
