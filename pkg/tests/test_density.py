import numpy as np
import pytest

from stochmech import build_hamiltonian, preset
from stochmech import density as dm
from stochmech.equivalence import quantum_propagator
from stochmech.errors import (
    AmplificationError,
    EigenvalueNotFoundError,
    SectorConstantError,
    ZeroProbabilityError,
)


def packet(model, center=3.0, width=1.0, k=0.7):
    return dm.gaussian_wavepacket(model, center, width, k)


def pure(psi):
    """Density matrix rho(xi, x) = conj(psi(xi)) psi(x)."""
    return np.outer(psi.conj(), psi)


def random_hermitian(rng, n):
    X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (X + X.conj().T) / 2


def test_phase_weights_table():
    w = dm.phase_weights()
    assert w.shape == (4, 4)
    assert w[0, 0] == 1 and w[1, 0] == -1j and w[1, 1] == -1 and w[3, 2] == -1j


def test_prepared_density_is_probability_and_recovers_state(free):
    rho = pure(packet(free))
    rho_c = dm.prepare_joint_density(rho)
    assert rho_c.values.min() >= 0
    assert rho_c.values.sum() == pytest.approx(1.0, abs=1e-14)
    back = dm.phase_average(rho_c, free).normalized().matrix
    assert np.abs(back - rho).max() <= 1e-14


def test_uniform_fiber_density_averages_to_zero(free):
    values = np.ones((8, 4, 8, 4)) / (64 * 16)
    rho = dm.phase_average(dm.JointDensity(values, 0.0), free)
    assert np.abs(rho.matrix).max() <= 1e-16


def test_evolution_identity_and_mass(free):
    rho_c = dm.prepare_joint_density(pure(packet(free)))
    same = dm.evolve_joint_density(rho_c, free, 0.0)
    np.testing.assert_allclose(same.values, rho_c.values, atol=1e-16)
    later = dm.evolve_joint_density(rho_c, free, 0.4)
    assert later.values.sum() == pytest.approx(1.0, abs=1e-10)
    assert later.values.min() >= -1e-15


def test_product_density_evolves_to_product_of_marginals():
    from stochmech import build_conjugate_generator, build_lifted_generator, expm_dense

    model = preset("harmonic")
    rng = np.random.default_rng(0)
    p = rng.random(32)
    q = rng.random(32)
    p, q = p / p.sum(), q / q.sum()
    rho_c = dm.JointDensity(np.outer(p, q).reshape(8, 4, 8, 4), 0.0)
    t = 0.3
    out = dm.evolve_joint_density(rho_c, model, t).as_matrix()
    p_t = p @ expm_dense(build_conjugate_generator(model), t).matrix
    q_t = q @ expm_dense(build_lifted_generator(model), t).matrix
    assert np.abs(out - np.outer(p_t, q_t)).max() <= 1e-12


@pytest.mark.parametrize("t", [0.0, 0.1, 0.2, 0.3])
def test_theorem1_residual(exact_preset, t):
    rng = np.random.default_rng(1)
    psi1, psi2 = packet(exact_preset), packet(exact_preset, 5.0, 1.5, -0.3)
    mixture = 0.6 * pure(psi1) + 0.4 * pure(psi2)
    for rho in (pure(psi1), mixture):
        res = dm.verify_theorem1(dm.prepare_joint_density(rho), exact_preset, t)
        assert res <= (0.0 if t == 0 else 1e-8)


def test_theorem1_invariant_on_every_preset(any_preset):
    """Invariant across all presets; constant-A has no exact sector constant."""
    rho = pure(packet(any_preset))
    try:
        res = dm.verify_theorem1(dm.prepare_joint_density(rho), any_preset, 0.2)
    except SectorConstantError:
        res = float("inf")
    assert res <= 1e-8


def test_theorem1_independent_oracle():
    """Phase average compared with e^{-itH} rho e^{itH} built from eigenvectors."""
    model = preset("harmonic")
    rho = pure(packet(model))
    t = 0.25
    E, V = np.linalg.eigh(build_hamiltonian(model).toarray())
    U = V @ np.diag(np.exp(-1j * E * t)) @ V.conj().T
    evolved = dm.evolve_joint_density(dm.prepare_joint_density(rho), model, t)
    out = dm.phase_average(evolved, model).normalized().matrix
    assert np.abs(out - U @ rho @ U.conj().T).max() <= 1e-10
    assert np.trace(out).real == pytest.approx(1.0, abs=1e-8)


def test_energy_eigenstate_is_stationary(free):
    E, V = np.linalg.eigh(build_hamiltonian(free).toarray())
    rho = pure(V[:, 2])
    rho_c = dm.prepare_joint_density(rho)
    out = dm.phase_average(dm.evolve_joint_density(rho_c, free, 0.3), free).normalized()
    assert np.abs(out.matrix - rho).max() <= 1e-8


def test_amplification_guard_for_long_times(free):
    rho_c = dm.prepare_joint_density(pure(packet(free)))
    with pytest.raises(AmplificationError):
        dm.phase_average(dm.evolve_joint_density(rho_c, free, 20.0), free)


def test_observable_lifting(free):
    rho = 0.5 * pure(packet(free)) + 0.5 * pure(packet(free, 6.0, 0.8, 0.0))
    rho_c = dm.evolve_joint_density(dm.prepare_joint_density(rho), free, 0.2)
    rho_t = dm.phase_average(rho_c, free).normalized().matrix

    ident = dm.classical_expectation(rho_c, dm.lift_observable(np.eye(8)), free)
    assert ident == pytest.approx(1.0, abs=1e-8)

    proj = np.zeros((8, 8))
    proj[4, 4] = 1
    value = dm.classical_expectation(rho_c, dm.lift_observable(proj), free)
    assert value == pytest.approx(rho_t[4, 4], abs=1e-8)

    F = random_hermitian(np.random.default_rng(2), 8)
    # explicit quadruple sum for the left side
    w = dm.phase_weights()
    total = sum(
        rho_c.values[xi, nu, x, n] * w[nu, n] * F[x, xi]
        for xi in range(8) for nu in range(4) for x in range(8) for n in range(4)
    )
    lhs = total * np.exp(dm.joint_exponent(free) * rho_c.t) / dm.phase_average(rho_c, free).trace.real
    assert lhs == pytest.approx(np.trace(rho_t @ F), abs=1e-8)


def test_pure_state_check(free):
    psi = packet(free)
    ok, rec = dm.pure_state_check(pure(psi))
    assert ok
    assert abs(np.vdot(psi, rec)) >= 1 - 1e-8
    assert dm.pure_state_check(np.eye(8) / 8) == (False, None)
    e = np.eye(8)
    assert dm.pure_state_check(0.5 * pure(e[0]) + 0.5 * pure(e[1]))[0] is False


def test_pure_state_survives_evolution(free):
    psi = packet(free)
    rho_c = dm.prepare_joint_density(pure(psi))
    out = dm.phase_average(dm.evolve_joint_density(rho_c, free, 0.3), free)
    ok, rec = dm.pure_state_check(out)
    assert ok
    # rho(xi, x) = conj(psi(xi)) psi(x) evolves psi by exp(+i t H) for real H
    expected = quantum_propagator(free, 0.3) @ psi
    assert abs(np.vdot(expected, rec)) >= 1 - 1e-8


def test_conditioning_reduces_to_bayes():
    rng = np.random.default_rng(3)
    p = rng.random(8)
    p /= p.sum()
    labels = np.array([0, 1, 2, 0, 1, 2, 0, 1], dtype=float)
    for g in (0.0, 1.0, 2.0):
        out, prob = dm.condition(np.diag(p), np.diag(labels), g, return_probability=True)
        mask = labels == g
        assert prob == pytest.approx(p[mask].sum(), abs=1e-12)
        assert np.abs(out.matrix - np.diag(np.where(mask, p, 0) / p[mask].sum())).max() <= 1e-12


def test_conditioning_pure_state_nondegenerate(free):
    psi = packet(free)
    G = random_hermitian(np.random.default_rng(4), 8)
    vals, vecs = np.linalg.eigh(G)
    out = dm.condition(pure(psi), G, vals[5])
    v = vecs[:, 5]
    assert np.abs(out.matrix - np.outer(v, v.conj())).max() <= 1e-10


def test_conditioning_idempotent(free):
    rho = pure(packet(free))
    G = np.diag(np.arange(8) % 2).astype(float)
    once = dm.condition(rho, G, 1.0)
    twice = dm.condition(once, G, 1.0)
    assert np.abs(once.matrix - twice.matrix).max() <= 1e-10


def test_conditioning_errors(free):
    rho = np.diag(np.r_[1.0, np.zeros(7)])
    G = np.diag(np.arange(8, dtype=float))
    with pytest.raises(EigenvalueNotFoundError):
        dm.condition(rho, G, 2.5)
    with pytest.raises(ZeroProbabilityError):
        dm.condition(rho, G, 3.0)


def test_commute_check(free):
    rng = np.random.default_rng(5)
    A, B = np.diag(rng.random(8)), np.diag(rng.random(8))
    assert dm.commute_check(A, B)
    H = build_hamiltonian(free).toarray()
    proj = np.zeros((8, 8))
    proj[0, 0] = 1
    assert not dm.commute_check(proj, H)
    E, V = np.linalg.eigh(H)
    F = V @ np.diag(np.cos(E) + E**2) @ V.conj().T
    assert dm.commute_check(F, H)


def test_off_diagonal_mass():
    assert dm.off_diagonal_mass(np.eye(4) / 4) == 0
    assert dm.off_diagonal_mass(np.full((2, 2), 0.5)) == pytest.approx(1.0)
