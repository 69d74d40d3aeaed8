"""Sparse operators on the lattice and on lattice x Z4.

Winding orientation
-------------------
Kinetic hops of the lifted process *increment* the winding number ``n``;
the potential-driven winding jump at rate ``K0/hbar + V/(2 hbar)`` lowers
it.  Fiber transforms use the weight ``exp(-i p n)``.  With this choice the
``p = pi/2`` sector reproduces ``(i/hbar) H`` up to a constant shift, and the
conjugate generator is the same process with ``n -> -n``.

States of the lifted space are enumerated as ``4 * site + n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NegativeRateError, NotMarkovError
from .lattice import ModelSpec, split_vector_potential

__all__ = [
    "FIBER",
    "EventTable",
    "SparseGenerator",
    "ComplexOperator",
    "event_table",
    "build_base_generator",
    "build_lifted_generator",
    "build_conjugate_generator",
    "build_sector_generator",
    "build_hamiltonian",
    "sector_phase",
    "fiber_fourier",
    "fiber_fourier_matrix",
    "block_diagonalize",
    "winding_drift",
    "winding_drift_closed_form",
]

FIBER = 4
DROP_TOL = 1e-15
ROW_SUM_TOL = 1e-12

# exp(-i k pi/2 * n) for k, n in Z4, exact
_QUARTER_PHASES = np.array([1, -1j, -1, 1j])


@dataclass(frozen=True)
class EventTable:
    """Jump events available from every lattice site.

    Arrays are indexed ``[site, event]``.  ``winding`` is the unreduced
    winding increment of the event; ``displacement[event]`` the integer
    lattice step (identical for all sites).
    """

    target: np.ndarray
    winding: np.ndarray
    rate: np.ndarray
    displacement: np.ndarray

    @property
    def exit_rate(self) -> np.ndarray:
        return self.rate.sum(axis=1)


def event_table(model: ModelSpec, orientation: int = 1) -> EventTable:
    """Per-site jump events of the lifted (``orientation=1``) or conjugate
    (``orientation=-1``) process.

    For each axis there are four hops: kinetic hops to ``x +/- a e_i`` that
    shift the winding by ``orientation``, and gauge hops that leave it fixed
    with rates set by the split of ``e A_i``.  Two pure winding jumps follow.
    """
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")
    lat, c = model.lattice, model.constants
    n, d = lat.n_sites, lat.dimension
    sites = np.arange(n)
    kin = model.hop_rate
    gauge = 1.0 / (c.light_speed * c.mass * lat.spacing)
    # split e*A rather than A so that negative charges keep rates nonnegative
    plus, minus = split_vector_potential(c.charge * model.fields.vector_potential)
    V = model.potential
    targets, windings, rates, disps = [], [], [], []
    for axis in range(d):
        fwd = lat.neighbor(sites, axis, 1)
        bwd = lat.neighbor(sites, axis, -1)
        unit = np.zeros(d, dtype=np.int64)
        unit[axis] = 1
        for tgt, w, r, disp in (
            (fwd, orientation, np.full(n, kin), unit),
            (bwd, orientation, np.full(n, kin), -unit),
            (fwd, 0, gauge * minus[:, axis], unit),
            (bwd, 0, gauge * plus[:, axis], -unit),
        ):
            targets.append(tgt)
            windings.append(np.full(n, w))
            rates.append(r)
            disps.append(disp)
    hbar = c.hbar
    for w, r in (
        (-orientation, model.k0 / hbar + V / (2 * hbar)),
        (orientation, model.k0 / hbar - V / (2 * hbar)),
    ):
        targets.append(sites)
        windings.append(np.full(n, w))
        rates.append(r)
        disps.append(np.zeros(d, dtype=np.int64))
    rate = np.stack(rates, axis=1)
    # |V| <= 2 K0 up to rounding
    rate[(rate < 0) & (rate > -1e-13 * max(1.0, model.k0 / hbar))] = 0.0
    if np.any(rate < 0):
        raise NegativeRateError(
            f"negative jump rate {rate.min():.3g}; the bound |V| <= 2 K0 is violated"
        )
    return EventTable(
        target=np.stack(targets, axis=1),
        winding=np.stack(windings, axis=1),
        rate=rate,
        displacement=np.array(disps),
    )


def _assemble(rows, cols, vals, dim, dtype=float):
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=dtype).tocsr()
    mat.sum_duplicates()
    mat.data[np.abs(mat.data) < DROP_TOL] = 0
    mat.eliminate_zeros()
    return mat


@dataclass(frozen=True)
class SparseGenerator:
    """Real Markov generator; entry ``(s, s')`` is the jump rate ``s -> s'``."""

    matrix: sp.csr_matrix
    state_space: str  # "base-lattice" or "lattice-z4"

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def min_off_diagonal(self) -> float:
        off = self.matrix - sp.diags(self.matrix.diagonal())
        return float(off.data.min()) if off.nnz else 0.0

    def validate(self, tol: float = ROW_SUM_TOL) -> "SparseGenerator":
        if self.min_off_diagonal() < 0:
            raise NotMarkovError(f"negative off-diagonal rate {self.min_off_diagonal():.3g}")
        worst = np.abs(self.row_sums()).max()
        if worst > tol:
            raise NotMarkovError(f"row sums deviate from zero by {worst:.3g}")
        return self

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


@dataclass(frozen=True)
class ComplexOperator:
    matrix: sp.csr_matrix
    tag: str  # "sector-generator" or "hamiltonian"

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def hermiticity_residual(self) -> float:
        diff = self.matrix - self.matrix.conj().T
        return float(np.abs(diff.data).max()) if diff.nnz else 0.0


def _off_diagonal_triplets(table: EventTable):
    n, n_events = table.rate.shape
    rows = np.repeat(np.arange(n), n_events)
    return rows, table.target.ravel(), table.winding.ravel(), table.rate.ravel()


def build_base_generator(model: ModelSpec) -> SparseGenerator:
    """Marginal generator of the lattice position (winding summed out)."""
    table = event_table(model)
    rows, cols, _, rates = _off_diagonal_triplets(table)
    hop = cols != rows
    n = model.n_sites
    rows, cols, rates = rows[hop], cols[hop], rates[hop]
    diag = np.bincount(rows, weights=rates, minlength=n)
    mat = _assemble(
        np.concatenate([rows, np.arange(n)]),
        np.concatenate([cols, np.arange(n)]),
        np.concatenate([rates, -diag]),
        n,
    )
    return SparseGenerator(mat, "base-lattice").validate()


def _lifted(model: ModelSpec, orientation: int) -> SparseGenerator:
    table = event_table(model, orientation)
    src, dst, dn, rates = _off_diagonal_triplets(table)
    n = model.n_sites
    rows, cols, vals = [], [], []
    for w in range(FIBER):
        rows.append(FIBER * src + w)
        cols.append(FIBER * dst + (w + dn) % FIBER)
        vals.append(rates)
    exit_rate = table.exit_rate
    states = np.arange(FIBER * n)
    rows.append(states)
    cols.append(states)
    vals.append(-np.repeat(exit_rate, FIBER))
    mat = _assemble(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), FIBER * n)
    return SparseGenerator(mat, "lattice-z4").validate()


def build_lifted_generator(model: ModelSpec) -> SparseGenerator:
    return _lifted(model, 1)


def build_conjugate_generator(model: ModelSpec) -> SparseGenerator:
    """Lifted generator with the winding orientation mirrored.

    Its sector generators are the complex conjugates of the lifted ones.
    """
    return _lifted(model, -1)


def sector_phase(p: float, winding) -> np.ndarray:
    """``exp(-i p n)``, exact when ``p`` is a multiple of pi/2."""
    winding = np.asarray(winding)
    k = 2 * p / np.pi
    if abs(k - round(k)) < 1e-12:
        return _QUARTER_PHASES[(int(round(k)) * winding) % FIBER]
    return np.exp(-1j * p * winding)


def build_sector_generator(model: ModelSpec, p: float, conjugate: bool = False) -> ComplexOperator:
    """Fiber-momentum block ``L(p)(x, x') = sum_k exp(-i p k) L~(x, 0; x', k)``.

    With ``conjugate=True`` the block of the conjugate generator is returned.
    """
    table = event_table(model, -1 if conjugate else 1)
    src, dst, dn, rates = _off_diagonal_triplets(table)
    n = model.n_sites
    vals = rates * sector_phase(p, dn)
    mat = _assemble(
        np.concatenate([src, np.arange(n)]),
        np.concatenate([dst, np.arange(n)]),
        np.concatenate([vals, -table.exit_rate.astype(complex)]),
        n,
        dtype=complex,
    )
    return ComplexOperator(mat, "sector-generator")


def build_hamiltonian(
    model: ModelSpec, gradient: str = "symmetric", symmetrize: bool = True
) -> ComplexOperator:
    """Lattice Hamiltonian ``-(hbar^2/2m) Lap + (i e hbar/(c m)) A.grad + V``.

    Parameters
    ----------
    gradient : {"symmetric", "forward", "backward"}
        Difference used for ``grad``.  Only the symmetric average yields a
        Hermitian operator; the one-sided forms exist as negative controls.
    symmetrize : bool
        Evaluate ``A`` at the link midpoint ``(A(x) + A(x'))/2`` so that the
        operator stays Hermitian for site-dependent fields.  Has no effect
        for uniform ``A``.
    """
    lat, c = model.lattice, model.constants
    n, a = lat.n_sites, lat.spacing
    sites = np.arange(n)
    kin = c.hbar**2 / (2 * c.mass * a**2)
    coupling = 1j * c.charge * c.hbar / (c.light_speed * c.mass)
    A = model.fields.vector_potential
    rows, cols, vals = [], [], []
    diag = 2 * lat.dimension * kin + model.potential.astype(complex)
    for axis in range(lat.dimension):
        fwd = lat.neighbor(sites, axis, 1)
        bwd = lat.neighbor(sites, axis, -1)
        if symmetrize:
            a_fwd = 0.5 * (A[:, axis] + A[fwd, axis])
            a_bwd = 0.5 * (A[:, axis] + A[bwd, axis])
        else:
            a_fwd = a_bwd = A[:, axis]
        if gradient == "symmetric":
            w_fwd, w_bwd, w_self = 0.5 / a, -0.5 / a, 0.0
        elif gradient == "forward":
            w_fwd, w_bwd, w_self = 1.0 / a, 0.0, -1.0 / a
        elif gradient == "backward":
            w_fwd, w_bwd, w_self = 0.0, -1.0 / a, 1.0 / a
        else:
            raise ValueError(f"unknown gradient {gradient!r}")
        rows += [sites, sites]
        cols += [fwd, bwd]
        vals += [-kin + coupling * a_fwd * w_fwd, -kin + coupling * a_bwd * w_bwd]
        diag = diag + coupling * A[:, axis] * w_self
    rows.append(sites)
    cols.append(sites)
    vals.append(diag)
    mat = _assemble(
        np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), n, dtype=complex
    )
    return ComplexOperator(mat, "hamiltonian")


def _check_quarter(p: float) -> int:
    k = 2 * p / np.pi
    if abs(k - round(k)) > 1e-12:
        raise ValueError(f"Z4 fiber transforms need p to be a multiple of pi/2, got {p}")
    return int(round(k)) % FIBER


def fiber_fourier(kernel, p: float, start_winding: int = 0) -> np.ndarray:
    """Project a lattice x Z4 kernel on fiber momentum ``p``.

    Returns ``sum_n exp(-i p (n - n0)) K(x, n0; x', n)``, a lattice-indexed
    complex matrix.  ``kernel`` is a FiberKernel or a square array of size
    ``4 * n_sites``.
    """
    k = _check_quarter(p)
    K = np.asarray(getattr(kernel, "matrix", kernel))
    if sp.issparse(K):
        K = K.toarray()
    n = K.shape[0] // FIBER
    block = K.reshape(n, FIBER, n, FIBER)[:, start_winding, :, :]
    phases = _QUARTER_PHASES[(k * (np.arange(FIBER) - start_winding)) % FIBER]
    return block @ phases


def fiber_fourier_matrix(n_sites: int) -> np.ndarray:
    """Unitary ``T`` with ``T L~ T^dagger`` block diagonal in (site, sector).

    The row for sector ``k`` carries ``exp(i k pi/2 n) / 2``; the resulting
    block equals :func:`fiber_fourier` of the generator at ``p = k pi/2``.
    """
    phi = np.conj(_QUARTER_PHASES[np.outer(np.arange(FIBER), np.arange(FIBER)) % FIBER]) / 2
    return np.kron(np.eye(n_sites), phi)


def block_diagonalize(gen) -> tuple:
    """Return ``(blocks, off_block_residual)`` of a fiber-invariant operator.

    ``blocks[k]`` is the sector-``k pi/2`` block (sites x sites).
    """
    M = gen.toarray() if hasattr(gen, "toarray") else np.asarray(gen)
    n = M.shape[0] // FIBER
    T = fiber_fourier_matrix(n)
    # (sector, sector', site, site')
    R = (T @ M @ T.conj().T).reshape(n, FIBER, n, FIBER).transpose(1, 3, 0, 2)
    blocks = [R[k, k].copy() for k in range(FIBER)]
    off = np.abs(R[~np.eye(FIBER, dtype=bool)])
    return blocks, float(off.max())


def winding_drift(gen: SparseGenerator) -> np.ndarray:
    """Exact drift ``sum_s' G(s, s') dn(s, s')`` per lattice site (winding 0 row).

    Winding increments are read mod 4 as -1, 0 or +1.
    """
    G = gen.matrix.tocoo()
    dn = (G.col % FIBER - G.row % FIBER) % FIBER
    if np.any((dn == 2) & (G.data != 0)):
        raise ValueError("generator has winding jumps of size 2")
    step = np.where(dn == 3, -1, dn)
    per_state = np.bincount(G.row, weights=G.data * step, minlength=gen.dimension)
    return per_state.reshape(-1, FIBER)[:, 0]


def winding_drift_closed_form(model: ModelSpec, orientation: int = 1) -> np.ndarray:
    """``orientation * (d hbar/(m a^2) - V/hbar)`` per site."""
    c = model.constants
    kinetic = model.lattice.dimension * c.hbar / (c.mass * model.lattice.spacing**2)
    return orientation * (kinetic - model.potential / c.hbar)
