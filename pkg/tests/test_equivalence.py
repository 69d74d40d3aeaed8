import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochmech import (
    FieldConfig,
    LatticeSpec,
    ModelSpec,
    antiparticle_kernel,
    build_hamiltonian,
    build_lifted_generator,
    derive_sector_constant,
    expm_dense,
    preset,
    reconstruct_quantum_kernel,
    sector_identity_residual,
)
from stochmech.equivalence import lifted_kernel, quantum_propagator, residual_report
from stochmech.errors import AmplificationError, SectorConstantError

from conftest import random_model


def free_model(k0=None, phi=0.0):
    lattice = LatticeSpec(1, 8, 1.0)
    return ModelSpec(lattice, fields=FieldConfig(np.zeros((8, 1)), np.full(8, phi)), k0=k0)


def test_free_particle_sector_constant_by_hand():
    # L(pi/2) = -2 I - (i/2)(S+ + S-) and (i/hbar) H = i I - (i/2)(S+ + S-)
    # by direct entry readout, so the difference is (2 + i) I.
    c0 = derive_sector_constant(free_model())
    assert c0.residual == 0
    assert c0.c0 == pytest.approx(2 + 1j, abs=1e-15)


def test_sector_constant_independent_oracle():
    """c0 from the ratio of the two dense propagators' diagonals."""
    model = preset("harmonic")
    from stochmech import build_sector_generator

    t = 0.3
    Lp = expm_dense(build_sector_generator(model, np.pi / 2).toarray(), t).matrix
    U = quantum_propagator(model, t)
    oracle = -np.log(Lp[0, 0] / U[0, 0]) / t
    assert derive_sector_constant(model).c0 == pytest.approx(oracle, abs=1e-12)


def test_real_part_structural_form(exact_preset):
    model = exact_preset
    c = model.constants
    kinetic = model.lattice.dimension * c.hbar / (c.mass * model.lattice.spacing**2)
    c0 = derive_sector_constant(model).c0
    assert c0.real == pytest.approx(kinetic + 2 * model.k0 / c.hbar, abs=1e-12)
    assert abs(c0.imag) == pytest.approx(kinetic, abs=1e-12)


def test_k0_shift_moves_real_part_only():
    lo = derive_sector_constant(free_model(k0=0.25)).c0
    hi = derive_sector_constant(free_model(k0=0.5)).c0
    assert hi.real - lo.real == pytest.approx(2 * 0.25, abs=1e-14)
    assert hi.imag == pytest.approx(lo.imag, abs=1e-14)


def test_potential_shift_is_absorbed():
    base = derive_sector_constant(free_model(k0=0.5)).c0
    shifted = derive_sector_constant(free_model(k0=0.5, phi=0.6)).c0
    assert shifted == pytest.approx(base, abs=1e-14)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.sampled_from([1, 2]))
def test_sector_identity_for_random_scalar_potentials(seed, d):
    model = random_model(np.random.default_rng(seed), sites=4, dimension=d)
    assert sector_identity_residual(model) <= 1e-12


def test_sector_identity_free_particle_tight():
    assert sector_identity_residual(preset("free")) <= 1e-13


def test_one_sided_gradient_is_detected():
    model = preset("constant-A")
    assert sector_identity_residual(model, gradient="forward") > 1e-3


def test_vector_potential_breaks_the_identity():
    # gauge hops keep the winding, so they add a real hopping term to
    # L(pi/2) that no constant can absorb
    model = preset("constant-A")
    with pytest.raises(SectorConstantError) as info:
        derive_sector_constant(model)
    assert info.value.residual == pytest.approx(0.05, abs=1e-12)


@pytest.mark.parametrize("t", [0.05, 0.1, 0.2])
def test_reconstruction_matches_dense_oracle(exact_preset, t):
    K = lifted_kernel(exact_preset, t)
    U = reconstruct_quantum_kernel(K, exact_preset)
    assert np.abs(U - quantum_propagator(exact_preset, t)).max() <= 1e-10
    assert np.abs(U @ U.conj().T - np.eye(8)).max() <= 1e-9


def test_reconstruction_identity_at_zero(exact_preset):
    K = lifted_kernel(exact_preset, 0.0)
    np.testing.assert_array_equal(reconstruct_quantum_kernel(K, exact_preset), np.eye(8))
    np.testing.assert_array_equal(antiparticle_kernel(K, exact_preset), np.eye(8))


def test_amplification_guard():
    model = preset("free")
    K = lifted_kernel(model, 0.1)
    with pytest.raises(AmplificationError):
        reconstruct_quantum_kernel(K, model, t=30.0)
    with pytest.raises(AmplificationError):
        reconstruct_quantum_kernel(K, model, exponent_cap=0.1)


def test_antiparticle_is_conjugate_without_vector_potential(exact_preset):
    K = lifted_kernel(exact_preset, 0.2)
    anti = antiparticle_kernel(K, exact_preset)
    assert np.abs(anti - reconstruct_quantum_kernel(K, exact_preset).conj()).max() <= 1e-10


def test_antiparticle_equals_reversed_field_model():
    model = preset("constant-A")
    mirrored = preset("constant-A", vector_potential={"kind": "constant", "value": [-0.1]})
    t = 0.2
    anti = antiparticle_kernel(lifted_kernel(model, t), model, strict=False)
    particle = reconstruct_quantum_kernel(lifted_kernel(mirrored, t), mirrored, strict=False)
    assert np.abs(anti - particle).max() <= 1e-10


def test_residual_report_fields():
    report = residual_report(preset("free"), 0.2)
    assert report["residual"] <= 1e-10
    assert report["c0_re"] == pytest.approx(2.0)
    assert set(report) >= {"model_hash", "t", "sector_residual", "kinetic_rate", "threshold_rate"}
