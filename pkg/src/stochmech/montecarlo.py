"""Continuous-time path sampling of the lifted process ``(x_t, n_t)``.

Paths are simulated exactly (exponential holding times, categorical event
choice) in vectorised blocks of :data:`BLOCK_SIZE` paths.  Block ``b`` of a
run with master seed ``s`` draws from ``SeedSequence(s, spawn_key=(b,))``,
so any block can be recomputed in isolation and runs over disjoint,
block-aligned path ranges merge exactly into the run over their union.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .equivalence import EXPONENT_CAP, derive_sector_constant
from .errors import AmplificationError
from .lattice import ModelSpec
from .operators import (
    FIBER,
    build_base_generator,
    build_lifted_generator,
    event_table,
    sector_phase,
    winding_drift,
)
from .semigroup import uniformize

__all__ = [
    "BLOCK_SIZE",
    "PathSample",
    "Endpoints",
    "KernelEstimate",
    "QuantumKernelEstimate",
    "DriftEstimate",
    "ActionEstimate",
    "block_rng",
    "sample_path",
    "simulate_endpoints",
    "estimate_lifted_kernel",
    "estimate_quantum_kernel",
    "exact_weight_moments",
    "expected_winding_drift",
    "winding_drift_statistic",
    "action_statistic",
]

BLOCK_SIZE = 1 << 16


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _blocks(n_paths: int, first_path: int):
    if n_paths < 1:
        raise ValueError(f"need at least one path, got {n_paths}")
    if first_path % BLOCK_SIZE:
        raise ValueError(f"first_path must be a multiple of {BLOCK_SIZE}")
    start, stop = first_path, first_path + n_paths
    for lo in range(start, stop, BLOCK_SIZE):
        yield lo // BLOCK_SIZE, min(BLOCK_SIZE, stop - lo)


@dataclass(frozen=True, eq=False)
class PathSample:
    """One trajectory on ``[0, t]``.

    ``windings`` holds the winding after each jump reduced mod 4,
    ``increments`` the unreduced winding change of each jump.  Grid
    snapshots record the site occupied at each multiple of ``dt`` (the last
    position at or before the grid time).
    """

    start_site: int
    start_winding: int
    t: float
    times: np.ndarray
    sites: np.ndarray
    windings: np.ndarray
    increments: np.ndarray
    grid_times: np.ndarray
    grid_sites: np.ndarray

    @property
    def n_events(self) -> int:
        return len(self.times)

    @property
    def final_site(self) -> int:
        return int(self.sites[-1]) if self.n_events else self.start_site

    @property
    def winding_change(self) -> int:
        """Unreduced ``n_t - n_0``."""
        return int(self.increments.sum())

    def site_at(self, time: float) -> int:
        k = np.searchsorted(self.times, time, side="right")
        return self.start_site if k == 0 else int(self.sites[k - 1])


def sample_path(
    model: ModelSpec, start_site: int, t: float, seed: int, start_winding: int = 0, orientation: int = 1
) -> PathSample:
    """Simulate a single path exactly; deterministic in ``(seed, start, model)``."""
    table = event_table(model, orientation)
    rng = np.random.default_rng(seed)
    exit_rate = table.exit_rate
    site, wind, clock = int(start_site), int(start_winding) % FIBER, 0.0
    times, sites, winds, incs = [], [], [], []
    while True:
        clock += rng.exponential() / exit_rate[site]
        if clock >= t:
            break
        probs = table.rate[site] / exit_rate[site]
        ev = rng.choice(len(probs), p=probs)
        dn = int(table.winding[site, ev])
        site = int(table.target[site, ev])
        wind = (wind + dn) % FIBER
        times.append(clock)
        sites.append(site)
        winds.append(wind)
        incs.append(dn)
    times = np.array(times)
    sites = np.array(sites, dtype=np.int64)
    grid_times = np.arange(int(np.floor(t / model.dt + 1e-9)) + 1) * model.dt
    k = np.searchsorted(times, grid_times, side="right")
    visited = np.concatenate([[start_site], sites])
    grid_sites = visited[k]
    return PathSample(
        start_site=int(start_site),
        start_winding=int(start_winding) % FIBER,
        t=float(t),
        times=times,
        sites=sites,
        windings=np.array(winds, dtype=np.int64),
        increments=np.array(incs, dtype=np.int64),
        grid_times=grid_times,
        grid_sites=np.asarray(grid_sites, dtype=np.int64),
    )


@dataclass
class _State:
    site: np.ndarray
    winding: np.ndarray  # unreduced
    events: np.ndarray
    displacement: np.ndarray = None
    potential_integral: np.ndarray = None


def _advance(table, state: _State, duration: float, rng, potential=None):
    """Run every path of ``state`` forward by ``duration`` in place."""
    n_events = table.rate.shape[1]
    exit_rate = table.exit_rate
    cum = np.cumsum(table.rate, axis=1) / exit_rate[:, None]
    clock = np.zeros(state.site.size)
    active = np.arange(state.site.size)
    while active.size:
        s = state.site[active]
        hold = rng.exponential(size=active.size) / exit_rate[s]
        arrival = clock[active] + hold
        jumped = arrival < duration
        if potential is not None:
            dwell = np.where(jumped, hold, duration - clock[active])
            state.potential_integral[active] += potential[s] * dwell
        active = active[jumped]
        clock[active] = arrival[jumped]
        s = s[jumped]
        u = rng.random(active.size)
        ev = np.minimum((cum[s] < u[:, None]).sum(axis=1), n_events - 1)
        state.site[active] = table.target[s, ev]
        state.winding[active] += table.winding[s, ev]
        state.events[active] += 1
        if state.displacement is not None:
            state.displacement[active] += table.displacement[ev]


@dataclass(frozen=True, eq=False)
class Endpoints:
    """Final states of a batch of paths; windings unreduced."""

    sites: np.ndarray
    windings: np.ndarray
    events: np.ndarray


def simulate_endpoints(
    model: ModelSpec,
    start_site: int,
    t: float,
    n_paths: int,
    seed: int,
    first_path: int = 0,
    orientation: int = 1,
) -> Endpoints:
    table = event_table(model, orientation)
    out = []
    for block, size in _blocks(n_paths, first_path):
        rng = block_rng(seed, block)
        state = _State(
            site=np.full(size, start_site, dtype=np.int64),
            winding=np.zeros(size, dtype=np.int64),
            events=np.zeros(size, dtype=np.int64),
        )
        if t > 0:
            _advance(table, state, t, rng)
        out.append(state)
    return Endpoints(
        sites=np.concatenate([s.site for s in out]),
        windings=np.concatenate([s.winding for s in out]),
        events=np.concatenate([s.events for s in out]),
    )


@dataclass(frozen=True, eq=False)
class KernelEstimate:
    """Histogram of ``(final site, final winding mod 4)`` over ``n_paths`` paths."""

    counts: np.ndarray  # [site, winding]
    n_paths: int
    seed: int
    start_site: int
    t: float

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.n_paths

    @property
    def stderr(self) -> np.ndarray:
        p = self.probabilities
        return np.sqrt(p * (1 - p) / self.n_paths)

    def merge(self, other: "KernelEstimate") -> "KernelEstimate":
        if other.counts.shape != self.counts.shape or other.t != self.t or other.start_site != self.start_site:
            raise ValueError("estimates describe different kernels")
        return KernelEstimate(self.counts + other.counts, self.n_paths + other.n_paths, self.seed, self.start_site, self.t)

    def total_variation(self, reference) -> float:
        return 0.5 * float(np.abs(self.probabilities - np.asarray(reference)).sum())

    def write_csv(self, path, header: str = None):
        p, se = self.probabilities, self.stderr
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            writer = csv.writer(fh)
            writer.writerow(["site", "winding", "count", "prob", "stderr"])
            for site in range(self.counts.shape[0]):
                for w in range(FIBER):
                    writer.writerow([site, w, int(self.counts[site, w]), repr(p[site, w]), repr(se[site, w])])


def estimate_lifted_kernel(
    model: ModelSpec, start_site: int, t: float, n_paths: int, seed: int, first_path: int = 0
) -> KernelEstimate:
    ends = simulate_endpoints(model, start_site, t, n_paths, seed, first_path)
    flat = ends.sites * FIBER + ends.windings % FIBER
    counts = np.bincount(flat, minlength=model.n_sites * FIBER).reshape(model.n_sites, FIBER)
    return KernelEstimate(counts, n_paths, seed, start_site, float(t))


@dataclass(frozen=True, eq=False)
class QuantumKernelEstimate:
    """Phase-weighted estimate of one row of ``exp(i t H / hbar)``.

    Stores per-site sums of the weights ``exp(c0 t) (-i)^n 1{x_t = x}`` and of
    their squared real and imaginary parts, so estimates merge by addition.
    """

    weight_sum: np.ndarray
    sq_real_sum: np.ndarray
    sq_imag_sum: np.ndarray
    n_paths: int
    c0: complex
    t: float
    start_site: int

    @property
    def mean(self) -> np.ndarray:
        return self.weight_sum / self.n_paths

    def _se(self, sq, m):
        var = np.maximum(sq / self.n_paths - m**2, 0.0)
        return np.sqrt(var / self.n_paths)

    @property
    def stderr_real(self) -> np.ndarray:
        return self._se(self.sq_real_sum, self.mean.real)

    @property
    def stderr_imag(self) -> np.ndarray:
        return self._se(self.sq_imag_sum, self.mean.imag)

    def merge(self, other):
        return QuantumKernelEstimate(
            self.weight_sum + other.weight_sum,
            self.sq_real_sum + other.sq_real_sum,
            self.sq_imag_sum + other.sq_imag_sum,
            self.n_paths + other.n_paths,
            self.c0,
            self.t,
            self.start_site,
        )

    def variance_report(self) -> dict:
        """Per-path variance of the weighted estimator summed over sites.

        The second moment of every weight is ``exp(2 Re(c0) t)``, which is the
        sign-problem amplification of the estimator.
        """
        per_path = (self.sq_real_sum + self.sq_imag_sum).sum() / self.n_paths - np.sum(np.abs(self.mean) ** 2)
        return {
            "t": self.t,
            "n_paths": self.n_paths,
            "second_moment": float(np.exp(2 * self.c0.real * self.t)),
            "per_path_variance": float(per_path),
            "max_stderr": float(max(self.stderr_real.max(), self.stderr_imag.max())),
        }


def estimate_quantum_kernel(
    model: ModelSpec,
    start_site: int,
    t: float,
    n_paths: int,
    seed: int,
    first_path: int = 0,
    exponent_cap: float = EXPONENT_CAP,
) -> QuantumKernelEstimate:
    c0 = derive_sector_constant(model).c0
    if c0.real * t > exponent_cap:
        raise AmplificationError(f"Re(c0) t = {c0.real * t:.3g} exceeds the exponent cap {exponent_cap}")
    ends = simulate_endpoints(model, start_site, t, n_paths, seed, first_path)
    w = np.exp(c0 * t) * sector_phase(np.pi / 2, ends.windings)
    n = model.n_sites
    return QuantumKernelEstimate(
        weight_sum=np.bincount(ends.sites, weights=w.real, minlength=n)
        + 1j * np.bincount(ends.sites, weights=w.imag, minlength=n),
        sq_real_sum=np.bincount(ends.sites, weights=w.real**2, minlength=n),
        sq_imag_sum=np.bincount(ends.sites, weights=w.imag**2, minlength=n),
        n_paths=n_paths,
        c0=c0,
        t=float(t),
        start_site=start_site,
    )


def exact_weight_moments(model: ModelSpec, start_site: int, t: float):
    """Per-path mean and standard deviations of the phase-weighted estimator.

    Computed from the uniformization kernel, so Monte Carlo results can be
    scored against oracle standard errors (divide by ``sqrt(N)``).
    Returns ``(mean, sd_real, sd_imag)``, one entry per site.
    """
    c0 = derive_sector_constant(model).c0
    K = uniformize(build_lifted_generator(model), t).winding_resolved()[start_site]
    w = np.exp(c0 * t) * sector_phase(np.pi / 2, np.arange(FIBER))
    mean = K @ w
    sd_re = np.sqrt(np.maximum(K @ w.real**2 - mean.real**2, 0.0))
    sd_im = np.sqrt(np.maximum(K @ w.imag**2 - mean.imag**2, 0.0))
    return mean, sd_re, sd_im


@dataclass(frozen=True)
class DriftEstimate:
    value: float
    stderr: float
    exact: float
    n_paths: int

    @property
    def z_score(self) -> float:
        if self.stderr > 0:
            return (self.value - self.exact) / self.stderr
        return 0.0 if self.value == self.exact else float("inf")


def expected_winding_drift(model: ModelSpec, start_site: int, t: float) -> float:
    """Exact ``E[n_t - n_0] / t`` from the generators.

    Integrates the per-site drift against the base-lattice occupation:
    the top-right entry of ``exp(t [[B, d], [0, 0]])`` is
    ``int_0^t (exp(s B) d) ds``.
    """
    drift = winding_drift(build_lifted_generator(model))
    if t == 0:
        return float(drift[start_site])
    B = build_base_generator(model).toarray()
    n = B.shape[0]
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = B
    aug[:n, n] = drift
    return float(scipy.linalg.expm(t * aug)[start_site, n] / t)


def winding_drift_statistic(
    model: ModelSpec, start_site: int, t: float, n_paths: int, seed: int
) -> DriftEstimate:
    """Monte Carlo ``E[n_t - n_0] / t`` with unreduced windings."""
    if t <= 0:
        raise ValueError("drift statistic needs t > 0")
    ends = simulate_endpoints(model, start_site, t, n_paths, seed)
    rate = ends.windings / t
    return DriftEstimate(
        value=float(rate.mean()),
        stderr=float(rate.std(ddof=1) / np.sqrt(n_paths)) if n_paths > 1 else float("nan"),
        exact=expected_winding_drift(model, start_site, t),
        n_paths=n_paths,
    )


@dataclass(frozen=True)
class ActionEstimate:
    """Regularised action increment per ``dt`` step, in units of hbar.

    ``winding_per_step`` is the Monte Carlo winding change per step on the
    same paths and ``ratio = action_per_step / winding_per_step``.
    """

    action_per_step: float
    action_stderr: float
    winding_per_step: float
    winding_stderr: float
    exact_winding_per_step: float
    ratio: float
    n_steps: int
    n_paths: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def action_statistic(
    model: ModelSpec, start_site: int, t: float, n_paths: int, seed: int
) -> ActionEstimate:
    """Sample the regularised action on the ``dt = m a^2 / hbar`` grid.

    Each step contributes ``(m/2) (dx/dt + e A(x_j)/(c m))^2 dt - int V``,
    with ``x_j`` the grid snapshot at the start of the step and the
    potential integrated exactly along the path.
    """
    dt = model.dt
    n_steps = int(round(t / dt))
    if n_steps < 1 or abs(n_steps * dt - t) > 1e-9 * max(t, dt):
        raise ValueError(f"t = {t} is not a positive integer multiple of dt = {dt}")
    c = model.constants
    a = model.lattice.spacing
    drift_field = c.charge / (c.light_speed * c.mass) * model.fields.vector_potential
    table = event_table(model)
    V = model.potential
    per_path_action, per_path_winding = [], []
    for block, size in _blocks(n_paths, 0):
        rng = block_rng(seed, block)
        d = model.lattice.dimension
        state = _State(
            site=np.full(size, start_site, dtype=np.int64),
            winding=np.zeros(size, dtype=np.int64),
            events=np.zeros(size, dtype=np.int64),
            displacement=np.zeros((size, d), dtype=np.int64),
            potential_integral=np.zeros(size),
        )
        total = np.zeros(size)
        for _ in range(n_steps):
            origin = state.site.copy()
            state.displacement[:] = 0
            state.potential_integral[:] = 0
            _advance(table, state, dt, rng, potential=V)
            velocity = a * state.displacement / dt + drift_field[origin]
            total += 0.5 * c.mass * np.sum(velocity**2, axis=1) * dt - state.potential_integral
        per_path_action.append(total / (n_steps * c.hbar))
        per_path_winding.append(state.winding / n_steps)
    action = np.concatenate(per_path_action)
    winding = np.concatenate(per_path_winding)
    scale = np.sqrt(n_paths)
    exact = expected_winding_drift(model, start_site, t) * dt
    return ActionEstimate(
        action_per_step=float(action.mean()),
        action_stderr=float(action.std(ddof=1) / scale) if n_paths > 1 else float("nan"),
        winding_per_step=float(winding.mean()),
        winding_stderr=float(winding.std(ddof=1) / scale) if n_paths > 1 else float("nan"),
        exact_winding_per_step=exact,
        ratio=float(action.mean() / winding.mean()) if winding.mean() != 0 else float("nan"),
        n_steps=n_steps,
        n_paths=n_paths,
    )
