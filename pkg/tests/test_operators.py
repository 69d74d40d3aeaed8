import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochmech import (
    FieldConfig,
    LatticeSpec,
    ModelSpec,
    build_base_generator,
    build_conjugate_generator,
    build_hamiltonian,
    build_lifted_generator,
    build_sector_generator,
    fiber_fourier,
    preset,
)
from stochmech.errors import NegativeRateError, NotMarkovError
from stochmech.operators import (
    block_diagonalize,
    event_table,
    fiber_fourier_matrix,
    winding_drift,
    winding_drift_closed_form,
)
from stochmech.semigroup import expm_dense

from conftest import random_model

QUARTERS = [k * np.pi / 2 for k in range(4)]


def state(site, n):
    return 4 * site + n


def free_model(sites=8, **kw):
    return ModelSpec(LatticeSpec(1, sites, 1.0), **kw)


def test_base_generator_free_particle():
    B = build_base_generator(free_model()).toarray()
    off = B[~np.eye(8, dtype=bool)]
    assert set(np.round(off[off != 0], 15)) == {0.5}
    np.testing.assert_array_equal(np.diag(B), -1.0)
    assert np.all(B.sum(axis=1) == 0)


def test_base_generator_constant_vector_potential():
    # 2 a e |A| / (c hbar) = 0.2  ->  A = 0.1
    model = preset("constant-A")
    B = build_base_generator(model).toarray()
    fwd, bwd = B[0, 1], B[0, 7]
    assert sorted([fwd, bwd]) == pytest.approx([0.5, 0.6], abs=1e-15)
    assert B[0, 0] == pytest.approx(-1.1, abs=1e-15)


def test_base_generator_rejects_non_generator_input():
    gen = build_base_generator(free_model())
    gen.validate()
    gen.matrix[0, 1] = -0.1
    with pytest.raises(NotMarkovError):
        gen.validate()


def test_lifted_generator_free_particle_rates():
    L = build_lifted_generator(free_model()).toarray()
    s = state(3, 1)
    # kinetic hops move the winding one unit and change the site
    assert L[s, state(4, 2)] == 0.5
    assert L[s, state(2, 2)] == 0.5
    # pure winding jumps
    assert L[s, state(3, 0)] == 0.5
    assert L[s, state(3, 2)] == 0.5
    assert L[s, s] == -2.0
    assert np.count_nonzero(L[s]) == 5


def test_lifted_generator_potential_rates():
    phi = np.zeros(8)
    phi[2] = 1.0
    model = free_model(fields=FieldConfig(np.zeros((8, 1)), phi), k0=1.0)
    L = build_lifted_generator(model).toarray()
    s = state(2, 0)
    # orientation: the winding steps down at K0 + V/2 and up at K0 - V/2
    assert L[s, state(2, 3)] == pytest.approx(1.5)
    assert L[s, state(2, 1)] == pytest.approx(0.5)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), with_vector=st.booleans(), d=st.sampled_from([1, 2]))
def test_random_admissible_generators_are_markov(seed, with_vector, d):
    model = random_model(np.random.default_rng(seed), sites=4, dimension=d, with_vector=with_vector)
    for gen in (build_base_generator(model), build_lifted_generator(model), build_conjugate_generator(model)):
        assert np.abs(gen.row_sums()).max() <= 1e-12
        assert gen.min_off_diagonal() >= 0


def test_negative_rate_detected():
    # vector potential too strong would still be fine; the bound guards V
    model = free_model()
    object.__setattr__(model, "k0", 0.0)
    object.__setattr__(model, "potential", np.full(8, 1.0))
    with pytest.raises(NegativeRateError):
        event_table(model)


def _mirror(n_sites):
    P = np.zeros((4 * n_sites, 4 * n_sites))
    for x in range(n_sites):
        for n in range(4):
            P[state(x, n), state(x, (-n) % 4)] = 1
    return P


def test_conjugate_mirrors_windings_for_free_particle():
    model = free_model()
    P = _mirror(8)
    L = build_lifted_generator(model).toarray()
    C = build_conjugate_generator(model).toarray()
    np.testing.assert_array_equal(C, P @ L @ P.T)
    assert np.abs(C.sum(axis=1)).max() == 0


@pytest.mark.parametrize("p", QUARTERS)
def test_conjugate_transform_is_conjugate(p):
    model = random_model(np.random.default_rng(3), sites=8, with_vector=True)
    lifted = fiber_fourier(build_lifted_generator(model).toarray(), p)
    conj = fiber_fourier(build_conjugate_generator(model).toarray(), p)
    assert np.abs(conj - lifted.conj()).max() <= 1e-12
    assert np.abs(build_sector_generator(model, p, conjugate=True).toarray() - conj).max() <= 1e-12


def test_sector_zero_is_fiber_sum():
    model = random_model(np.random.default_rng(4), sites=8, with_vector=True)
    L0 = build_sector_generator(model, 0.0).toarray()
    assert np.abs(L0.imag).max() <= 1e-14
    np.testing.assert_allclose(L0.real, build_base_generator(model).toarray(), atol=1e-14)


def test_sector_pi_is_real():
    model = random_model(np.random.default_rng(5), sites=8)
    assert np.abs(build_sector_generator(model, np.pi).toarray().imag).max() == 0


def test_sector_generator_matches_fiber_fourier_of_generator():
    model = random_model(np.random.default_rng(6), sites=8, with_vector=True)
    L = build_lifted_generator(model).toarray()
    for p in QUARTERS:
        assert np.abs(build_sector_generator(model, p).toarray() - fiber_fourier(L, p)).max() <= 1e-14


def test_hamiltonian_free_particle_l4():
    H = build_hamiltonian(free_model(sites=4)).toarray()
    expected = np.array(
        [[1, -0.5, 0, -0.5], [-0.5, 1, -0.5, 0], [0, -0.5, 1, -0.5], [-0.5, 0, -0.5, 1]], dtype=complex
    )
    np.testing.assert_array_equal(H, expected)
    assert np.all(H.imag == 0) and np.array_equal(H, H.T)


@pytest.mark.parametrize("sites,a,m", [(8, 1.0, 1.0), (11, 0.5, 2.0)])
def test_free_hamiltonian_spectrum(sites, a, m):
    from stochmech import PhysicalConstants

    model = ModelSpec(LatticeSpec(1, sites, a), PhysicalConstants(mass=m))
    evals = np.sort(np.linalg.eigvalsh(build_hamiltonian(model).toarray()))
    k = np.arange(sites)
    expected = np.sort((1 / (m * a**2)) * (1 - np.cos(2 * np.pi * k / sites)))
    np.testing.assert_allclose(evals, expected, atol=1e-12)


def test_hamiltonian_hermitian_for_site_dependent_field():
    model = random_model(np.random.default_rng(7), sites=6, dimension=2, with_vector=True)
    assert build_hamiltonian(model).hermiticity_residual() <= 1e-12
    assert build_hamiltonian(model, gradient="forward").hermiticity_residual() > 1e-3


def test_fiber_fourier_examples():
    model = random_model(np.random.default_rng(8), sites=8)
    K = expm_dense(build_lifted_generator(model), 0.3)
    marginal = fiber_fourier(K, 0.0)
    np.testing.assert_allclose(marginal.sum(axis=1), 1.0, atol=1e-12)
    assert np.abs(marginal.imag).max() == 0
    # p = pi/2 sums (-i)^n over the final winding
    manual = sum((-1j) ** n * K.matrix.reshape(8, 4, 8, 4)[:, 0, :, n] for n in range(4))
    assert np.abs(fiber_fourier(K, np.pi / 2) - manual).max() <= 1e-15
    identity = expm_dense(build_lifted_generator(model), 0.0)
    for p in QUARTERS:
        np.testing.assert_array_equal(fiber_fourier(identity, p), np.eye(8))


def test_fiber_fourier_rejects_non_quarter_momentum():
    with pytest.raises(ValueError):
        fiber_fourier(np.eye(32), 0.3)


def test_fiber_fourier_start_winding_invariance():
    model = random_model(np.random.default_rng(9), sites=6)
    K = expm_dense(build_lifted_generator(model), 0.4)
    for n0 in range(4):
        assert np.abs(fiber_fourier(K, np.pi / 2, n0) - fiber_fourier(K, np.pi / 2)).max() <= 1e-14


def test_block_diagonalization_32_states():
    model = preset("harmonic")
    T = fiber_fourier_matrix(8)
    np.testing.assert_allclose(T @ T.conj().T, np.eye(32), atol=1e-15)
    blocks, off = block_diagonalize(build_lifted_generator(model))
    assert off <= 1e-12
    for k, block in enumerate(blocks):
        assert np.abs(block - build_sector_generator(model, k * np.pi / 2).toarray()).max() <= 1e-12


def test_winding_drift_matches_closed_form():
    model = random_model(np.random.default_rng(10), sites=6, dimension=2)
    for orientation, gen in ((1, build_lifted_generator(model)), (-1, build_conjugate_generator(model))):
        np.testing.assert_allclose(
            winding_drift(gen), winding_drift_closed_form(model, orientation), atol=1e-13
        )


def test_k0_contributes_no_drift():
    lo = winding_drift(build_lifted_generator(free_model(k0=0.1)))
    hi = winding_drift(build_lifted_generator(free_model(k0=0.9)))
    np.testing.assert_allclose(lo, hi, atol=1e-15)
