"""Time-t kernels ``exp(t G)`` of generators and complex operators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.stats import poisson

from .errors import ConvergenceError, DimensionCapError, NotMarkovError

__all__ = [
    "DENSE_CAP",
    "FiberKernel",
    "expm_dense",
    "doubling_residual",
    "uniformize",
    "uniformize_rows",
    "expm_action",
]

DENSE_CAP = 4096
UNIFORMIZATION_FACTOR = 1.05


@dataclass(frozen=True, eq=False)
class FiberKernel:
    """Dense transition kernel ``K(s, s')`` over time ``t``.

    ``source`` records which operator generated it.
    """

    matrix: np.ndarray
    t: float
    source: str = ""

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    def winding_resolved(self, start_winding: int = 0) -> np.ndarray:
        """``K(x, n0; x', n)`` as an array ``[x, x', n]``."""
        n = self.dimension // 4
        return self.matrix.reshape(n, 4, n, 4)[:, start_winding, :, :]

    def stochasticity_defects(self) -> tuple:
        """``(most negative entry, max |row sum - 1|)``."""
        M = self.matrix.real
        return float(M.min()), float(np.abs(M.sum(axis=1) - 1).max())

    def __matmul__(self, other):
        other_m = other.matrix if isinstance(other, FiberKernel) else other
        t = self.t + other.t if isinstance(other, FiberKernel) else self.t
        return FiberKernel(self.matrix @ other_m, t, self.source)


def _as_matrix(op):
    M = getattr(op, "matrix", op)
    return M


def _source(op):
    return getattr(op, "state_space", None) or getattr(op, "tag", None) or "array"


def expm_dense(op, t: float, cap: int = DENSE_CAP) -> FiberKernel:
    """Dense ``exp(t op)`` by scaling and squaring with Pade approximants."""
    M = _as_matrix(op)
    if M.shape[0] > cap:
        raise DimensionCapError(f"dimension {M.shape[0]} exceeds dense cap {cap}")
    A = M.toarray() if sp.issparse(M) else np.asarray(M)
    if t == 0:
        return FiberKernel(np.eye(A.shape[0], dtype=A.dtype), 0.0, _source(op))
    return FiberKernel(scipy.linalg.expm(t * A), float(t), _source(op))


def doubling_residual(op, t: float) -> float:
    """Relative difference between ``exp(t A)`` and ``exp(t A / 2)^2``."""
    full = expm_dense(op, t).matrix
    half = expm_dense(op, t / 2).matrix
    return float(np.abs(full - half @ half).max() / max(np.abs(full).max(), 1e-300))


def _check_markov(M, tol):
    off = M - sp.diags(M.diagonal())
    if off.nnz and off.data.min() < 0:
        raise NotMarkovError(f"negative off-diagonal entry {off.data.min():.3g}")
    rows = np.abs(np.asarray(M.sum(axis=1)).ravel())
    if rows.max() > tol:
        raise NotMarkovError(f"row sums deviate from zero by {rows.max():.3g}")


def _poisson_weights(mean: float, tol: float) -> np.ndarray:
    kmax = int(poisson.isf(tol, mean)) + 1 if mean > 0 else 0
    return poisson.pmf(np.arange(kmax + 1), mean)


def uniformize_rows(gen, rows: np.ndarray, t: float, tol: float = 1e-10) -> np.ndarray:
    """``rows @ exp(t G)`` through the Poisson mixture of powers of ``I + G/Lambda``.

    Every term is a nonnegative combination, so nonnegative input rows stay
    nonnegative; the truncated Poisson tail is below ``tol``.
    """
    M = sp.csr_matrix(_as_matrix(gen), dtype=float)
    _check_markov(M, 1e-10)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    if t == 0:
        return rows.copy()
    lam = UNIFORMIZATION_FACTOR * float(np.abs(M.diagonal()).max())
    if lam == 0:
        return rows.copy()
    P = (sp.identity(M.shape[0], format="csr") + M / lam).T.tocsr()
    weights = _poisson_weights(lam * t, tol)
    # row @ P^k computed as (P^T)^k @ row^T
    X = rows.T.copy()
    out = weights[0] * X
    for w in weights[1:]:
        X = P @ X
        out += w * X
    return out.T


def uniformize(gen, t: float, tol: float = 1e-10) -> FiberKernel:
    """Full kernel ``exp(t G)`` by uniformization (entrywise nonnegative)."""
    n = _as_matrix(gen).shape[0]
    return FiberKernel(uniformize_rows(gen, np.eye(n), t, tol), float(t), _source(gen))


def _arnoldi(A, v, m):
    n = v.shape[0]
    V = np.zeros((n, m + 1), dtype=complex)
    H = np.zeros((m + 1, m), dtype=complex)
    beta = np.linalg.norm(v)
    V[:, 0] = v / beta
    for j in range(m):
        w = A @ V[:, j]
        for i in range(j + 1):
            H[i, j] = np.vdot(V[:, i], w)
            w = w - H[i, j] * V[:, i]
        # one reorthogonalisation pass
        for i in range(j + 1):
            corr = np.vdot(V[:, i], w)
            H[i, j] += corr
            w = w - corr * V[:, i]
        H[j + 1, j] = np.linalg.norm(w)
        if H[j + 1, j].real < 1e-12 * max(1.0, np.abs(H[: j + 2, : j + 1]).max()):
            return V[:, : j + 1], H[: j + 1, : j + 1], 0.0, True
        V[:, j + 1] = w / H[j + 1, j]
    return V[:, :m], H[:m, :m], H[m, m - 1].real, False


def expm_action(
    op,
    v,
    t: float,
    tol: float = 1e-8,
    krylov_dim: int = 30,
    max_steps: int = 10_000,
    return_error: bool = False,
):
    """Approximate ``exp(t A) v`` by time-stepped Arnoldi projection.

    Each accepted substep of length ``tau`` keeps its a-posteriori error
    estimate ``beta * h_{m+1,m} * tau * |phi_1(tau H_m) e_1|_m`` below
    ``tol * tau / t``, so the accumulated estimate is at most ``tol``.

    For row-vector propagation of a Markov generator pass ``G.T``.

    Raises
    ------
    ConvergenceError
        If ``max_steps`` substeps do not reach time ``t``; carries the
        error estimate accumulated so far.
    """
    A = _as_matrix(op)
    A = A.tocsr() if sp.issparse(A) else np.asarray(A)
    w = np.asarray(v, dtype=complex).copy()
    if t == 0 or not np.any(w):
        out = w if np.iscomplexobj(v) or np.iscomplexobj(A) else w.real
        return (out, 0.0) if return_error else out
    m = min(krylov_dim, w.shape[0])
    norm_a = float(abs(A).sum(axis=1).max()) if sp.issparse(A) else float(np.abs(A).sum(axis=1).max())
    t_done, err_total, steps = 0.0, 0.0, 0
    tau = min(t, 1.0 / max(norm_a, 1e-300) * m / 2)
    sign = 1.0 if t > 0 else -1.0
    t_abs = abs(t)
    tau = abs(tau)
    while t_done < t_abs * (1 - 1e-15):
        beta = np.linalg.norm(w)
        if beta == 0:
            break
        V, H, h_next, happy = _arnoldi(A, w, m)
        k = H.shape[0]
        while True:
            steps += 1
            if steps > max_steps:
                raise ConvergenceError(
                    f"expm_action did not converge in {max_steps} substeps", err_total
                )
            tau = min(tau, t_abs - t_done)
            aug = np.zeros((k + 1, k + 1), dtype=complex)
            aug[:k, :k] = sign * tau * H
            aug[0, k] = 1.0
            F = scipy.linalg.expm(aug)
            err = 0.0 if happy else beta * h_next * tau * abs(F[k - 1, k])
            if err <= tol * tau / t_abs or tau < 1e-300:
                break
            tau *= 0.5
        w = beta * (V @ F[:k, 0])
        t_done += tau
        err_total += err
        if happy:
            tau = t_abs - t_done
        elif err < 0.1 * tol * tau / t_abs:
            tau *= 1.5
    out = w if np.iscomplexobj(v) or np.iscomplexobj(A) else w.real
    return (out, err_total) if return_error else out
