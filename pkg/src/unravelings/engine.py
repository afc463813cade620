"""Ito integrators for a one-parameter family of diffusive state equations.

A single Hermitian coupling operator ``L`` with rate ``lam`` and a complex
unit-modulus parameter ``xi = xi_r + i*xi_i`` (xi_r >= 0) define the
stochastic state update

    d|psi> = [ -(i/hbar) H dt
               - (lam/2) (|xi|^2 L^2 - 2 xi xi_r <L> L + xi_r^2 <L>^2) dt
               + sqrt(lam) (xi L - xi_r <L>) dW ] |psi>,

whose noise average reproduces, for every admissible xi, the same
master-equation flow

    drho/dt = -(i/hbar) [H, rho] - (lam/2) [L, [L, rho]].

``xi = 1`` is the norm-preserving measurement-conditioned (collapsing)
dynamics; ``xi = -i`` is the stochastic-potential (phase-noise) dynamics.
Conditional moments of order >= 2 differ between members of the family,
which is exactly what the higher-level modules quantify.

Integration scheme: Euler-Maruyama plus exact renormalization after every
step.  The deterministic master-equation oracle uses classical RK4 (for the
linear flow this equals the degree-4 Taylor propagator, which
:func:`lindblad_evolve` applies step by step for speed).
"""

from dataclasses import dataclass

import numpy as np

from . import noise as noise_mod
from .linalg import assert_normalized, is_hermitian
from .tolerances import TOL


@dataclass(frozen=True)
class UnravelingParams:
    """Complex family parameter (xi_r, xi_i) and coupling rate lam."""

    xi_r: float
    xi_i: float
    lam: float

    def __post_init__(self):
        if self.xi_r < 0.0:
            raise ValueError(f"xi_r must be >= 0, got {self.xi_r}")
        mod2 = self.xi_r ** 2 + self.xi_i ** 2
        if abs(mod2 - 1.0) > TOL.unit_modulus:
            raise ValueError(f"|xi|^2 = {mod2:.15f} must equal 1")
        if self.lam < 0.0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")

    @property
    def xi(self) -> complex:
        return complex(self.xi_r, self.xi_i)

    @classmethod
    def nonlinear(cls, lam: float) -> "UnravelingParams":
        """xi = 1: continuous-measurement (collapsing) member."""
        return cls(1.0, 0.0, lam)

    @classmethod
    def linear(cls, lam: float) -> "UnravelingParams":
        """xi = -i: stochastic-potential (non-collapsing) member."""
        return cls(0.0, -1.0, lam)


@dataclass(frozen=True)
class ModelSpec:
    """Hamiltonian, coupling operator and Hilbert-space dimension."""

    H: np.ndarray
    L: np.ndarray
    dim: int
    hbar: float = 1.0

    def __post_init__(self):
        for name, op in (("H", self.H), ("L", self.L)):
            if op.shape != (self.dim, self.dim):
                raise ValueError(f"{name} must be {self.dim}x{self.dim}, got {op.shape}")
            if not is_hermitian(op):
                raise ValueError(f"{name} is not Hermitian")
        if self.hbar <= 0.0:
            raise ValueError("hbar must be positive")


@dataclass(frozen=True)
class TrajectoryRecord:
    """One realized trajectory with dense state storage."""

    times: np.ndarray                 # (n_steps + 1,)
    states: np.ndarray                # (n_steps + 1, dim), each row normalized
    means: dict                       # name -> (n_steps + 1,) conditional means
    record: "noise_mod.RecordSeries | None"
    noise: noise_mod.NoisePath
    seed: int
    dt: float


@dataclass(frozen=True)
class EnsembleResult:
    """Snapshots of a lock-step trajectory ensemble."""

    times: np.ndarray                 # (n_snap,)
    step_indices: np.ndarray          # (n_snap,)
    rhos: np.ndarray                  # (n_snap, dim, dim) equal-weight averages
    means: dict                       # name -> (n_snap, n_traj) conditional means
    final_states: np.ndarray          # (n_traj, dim)
    psi0: np.ndarray
    base_seed: int
    dt: float

    @property
    def n_traj(self) -> int:
        return self.final_states.shape[0]

    def mean_of(self, name: str) -> np.ndarray:
        return self.means[name].mean(axis=1)

    def se_of(self, name: str) -> np.ndarray:
        vals = self.means[name]
        return vals.std(axis=1, ddof=1) / np.sqrt(vals.shape[1])


def max_stable_dt(model: ModelSpec, u: UnravelingParams) -> float:
    """Largest dt satisfying lam * max_eig(L)^2 * dt <= stability budget."""
    lmax = float(np.max(np.abs(np.linalg.eigvalsh(model.L))))
    if u.lam == 0.0 or lmax == 0.0:
        return np.inf
    return TOL.stability_budget / (u.lam * lmax ** 2)


def check_stability(model: ModelSpec, u: UnravelingParams, dt: float) -> None:
    cap = max_stable_dt(model, u)
    if dt > cap:
        raise ValueError(
            f"dt = {dt:.3e} violates the stability budget "
            f"lam * max_eig(L)^2 * dt <= {TOL.stability_budget}; use dt <= {cap:.3e}")


def _batch_means(psis: np.ndarray, op: np.ndarray) -> np.ndarray:
    """Conditional means <psi_k|op|psi_k> for a batch of rows, real parts."""
    return np.einsum("ni,ij,nj->n", psis.conj(), op, psis).real


def _sse_increment_batch(psis: np.ndarray, model: ModelSpec, u: UnravelingParams,
                         dW: np.ndarray, dt: float, L2: np.ndarray) -> np.ndarray:
    """Euler-Maruyama increment for a batch of normalized rows (N, dim)."""
    xi = u.xi
    Lpsi = psis @ model.L.T
    ell = np.einsum("ni,ni->n", psis.conj(), Lpsi).real
    Hpsi = psis @ model.H.T
    L2psi = psis @ L2.T
    drift = (-1j / model.hbar) * Hpsi - 0.5 * u.lam * (
        L2psi
        - (2.0 * xi * u.xi_r) * ell[:, None] * Lpsi
        + (u.xi_r ** 2) * (ell ** 2)[:, None] * psis)
    stoch = np.sqrt(u.lam) * (xi * Lpsi - u.xi_r * ell[:, None] * psis)
    return drift * dt + stoch * dW[:, None]


def sse_step(psi: np.ndarray, model: ModelSpec, u: UnravelingParams,
             dW: float, dt: float) -> np.ndarray:
    """One Euler-Maruyama step followed by exact renormalization."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    psi = np.asarray(psi, dtype=complex)
    L2 = model.L @ model.L
    out = psi + _sse_increment_batch(psi[None, :], model, u,
                                     np.array([dW]), dt, L2)[0]
    if not np.all(np.isfinite(out.view(float))):
        raise FloatingPointError("state became non-finite; reduce dt")
    nrm = np.linalg.norm(out)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise FloatingPointError("state norm overflowed or vanished; reduce dt")
    return out / nrm


def simulate_trajectory(model: ModelSpec, u: UnravelingParams, psi0: np.ndarray,
                        dt: float, n_steps: int, seed: int,
                        tracked_observables: dict | None = None) -> TrajectoryRecord:
    """Integrate one trajectory, storing every state and tracked mean.

    When xi_r > 0 the associated detector record is emitted alongside the
    states (built from the pre-step conditional means, matching the
    record-driven reconstruction loop).
    """
    psi0 = np.asarray(psi0, dtype=complex)
    assert_normalized(psi0, tol=1e-10)
    check_stability(model, u, dt)
    tracked = dict(tracked_observables or {})
    L2 = model.L @ model.L

    states = np.empty((n_steps + 1, model.dim), dtype=complex)
    states[0] = psi0
    ell_series = np.empty(n_steps)
    if n_steps >= 1:
        path = noise_mod.wiener_path(seed, dt, n_steps)
        psi = psi0[None, :].copy()
        for k in range(n_steps):
            ell_series[k] = _batch_means(psi, model.L)[0]
            psi = psi + _sse_increment_batch(psi, model, u,
                                             path.increments[k:k + 1], dt, L2)
            nrm = np.linalg.norm(psi)
            if not np.isfinite(nrm) or nrm == 0.0:
                raise FloatingPointError(f"trajectory diverged at step {k}; reduce dt")
            psi /= nrm
            states[k + 1] = psi[0]
    else:
        path = noise_mod.NoisePath(seed=seed, dt=dt, increments=np.empty(0))

    means = {name: _batch_means(states, op) for name, op in tracked.items()}
    record = None
    if u.xi_r > 0.0 and u.lam > 0.0 and n_steps >= 1:
        record = noise_mod.measurement_record(path, ell_series, u.xi_r, u.lam)
    times = np.arange(n_steps + 1) * dt
    return TrajectoryRecord(times=times, states=states, means=means,
                            record=record, noise=path, seed=seed, dt=dt)


def _evolve_block(model, u, psis, rngs, n_steps_block, dt, L2):
    """Advance a batch in lock step through one block of time steps."""
    n_traj = psis.shape[0]
    dWs = np.empty((n_steps_block, n_traj))
    sq = np.sqrt(dt)
    for k, rng in enumerate(rngs):
        dWs[:, k] = rng.standard_normal(n_steps_block)
    dWs *= sq
    for j in range(n_steps_block):
        psis = psis + _sse_increment_batch(psis, model, u, dWs[j], dt, L2)
        psis /= np.linalg.norm(psis, axis=1)[:, None]
    return psis


_ENSEMBLE_CHUNK = 2500  # trajectories per reduction chunk (fixed, not per-worker)


def simulate_ensemble(model: ModelSpec, u: UnravelingParams, psi0: np.ndarray,
                      dt: float, n_steps: int, n_traj: int, base_seed: int,
                      snapshot_steps=None, tracked_observables: dict | None = None,
                      n_workers: int = 1) -> EnsembleResult:
    """Run ``n_traj`` independent trajectories in lock step.

    Trajectory ``k`` consumes exactly the Wiener stream of
    ``wiener_path(derive_seed(base_seed, k), dt, n_steps)``.  Reduction
    happens over fixed-size trajectory chunks combined in index order, so
    the result is bit-identical for any worker count; workers only decide
    who computes which chunk.
    """
    psi0 = np.asarray(psi0, dtype=complex)
    assert_normalized(psi0, tol=1e-10)
    check_stability(model, u, dt)
    if snapshot_steps is None:
        snapshot_steps = [n_steps]
    snaps = sorted(set(int(s) for s in snapshot_steps))
    if any(s < 0 or s > n_steps for s in snaps):
        raise ValueError("snapshot steps must lie in [0, n_steps]")
    tracked = dict(tracked_observables or {})
    L2 = model.L @ model.L

    def run_chunk(k0: int, k1: int):
        m = k1 - k0
        rngs = [np.random.default_rng(noise_mod.derive_seed(base_seed, k))
                for k in range(k0, k1)]
        psis = np.tile(psi0, (m, 1))
        rho_snaps = np.empty((len(snaps), model.dim, model.dim), dtype=complex)
        mean_snaps = {name: np.empty((len(snaps), m)) for name in tracked}
        i_snap = 0
        step = 0
        while i_snap < len(snaps) and snaps[i_snap] == step:
            rho_snaps[i_snap] = np.einsum("ni,nj->ij", psis, psis.conj())
            for name, op in tracked.items():
                mean_snaps[name][i_snap] = _batch_means(psis, op)
            i_snap += 1
        block_cap = max(1, 4_000_000 // max(1, m))
        while step < n_steps:
            target = snaps[i_snap] if i_snap < len(snaps) else n_steps
            nb = min(block_cap, target - step)
            psis = _evolve_block(model, u, psis, rngs, nb, dt, L2)
            step += nb
            while i_snap < len(snaps) and snaps[i_snap] == step:
                rho_snaps[i_snap] = np.einsum("ni,nj->ij", psis, psis.conj())
                for name, op in tracked.items():
                    mean_snaps[name][i_snap] = _batch_means(psis, op)
                i_snap += 1
        return rho_snaps, mean_snaps, psis

    chunks = [(s, min(s + _ENSEMBLE_CHUNK, n_traj))
              for s in range(0, n_traj, _ENSEMBLE_CHUNK)]
    if int(n_workers) <= 1 or len(chunks) == 1:
        results = [run_chunk(*c) for c in chunks]
    else:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=min(int(n_workers), len(chunks))) as ex:
            results = list(ex.map(lambda c: run_chunk(*c), chunks))

    rho_sum = np.zeros((len(snaps), model.dim, model.dim), dtype=complex)
    for r, _, _ in results:
        rho_sum += r
    rhos = rho_sum / n_traj
    means = {name: np.concatenate([m[name] for _, m, _ in results], axis=1)
             for name in tracked}
    finals = np.concatenate([f for _, _, f in results], axis=0)
    snaps_arr = np.asarray(snaps)
    return EnsembleResult(times=snaps_arr * dt, step_indices=snaps_arr, rhos=rhos,
                          means=means, final_states=finals, psi0=psi0.copy(),
                          base_seed=base_seed, dt=dt)


def ensemble_average(trajectories, at_times) -> list:
    """Equal-weight density matrices of stored trajectories at given times."""
    if not trajectories:
        raise ValueError("empty trajectory list")
    t0 = trajectories[0]
    for tr in trajectories[1:]:
        if tr.times.size != t0.times.size or abs(tr.dt - t0.dt) > 1e-15 * t0.dt:
            raise ValueError("trajectories do not share a time grid")
    out = []
    for t in at_times:
        idx = int(round(t / t0.dt))
        if idx < 0 or idx >= t0.times.size or abs(t0.times[idx] - t) > 1e-9 * max(t0.dt, abs(t)):
            raise ValueError(f"time {t} is not on the trajectory grid")
        dim = t0.states.shape[1]
        rho = np.zeros((dim, dim), dtype=complex)
        for tr in trajectories:
            rho += np.outer(tr.states[idx], tr.states[idx].conj())
        out.append(rho / len(trajectories))
    return out


# --- deterministic master-equation flow ------------------------------------

def lindblad_rhs(rho: np.ndarray, model: ModelSpec, lam: float) -> np.ndarray:
    H, L = model.H, model.L
    comm = H @ rho - rho @ H
    LL = L @ L
    double = LL @ rho + rho @ LL - 2.0 * (L @ rho @ L)
    return (-1j / model.hbar) * comm - 0.5 * lam * double


def lindblad_step(rho: np.ndarray, model: ModelSpec, lam: float, dt: float) -> np.ndarray:
    """One classical RK4 step of the master equation (trace preserved)."""
    k1 = lindblad_rhs(rho, model, lam)
    k2 = lindblad_rhs(rho + 0.5 * dt * k1, model, lam)
    k3 = lindblad_rhs(rho + 0.5 * dt * k2, model, lam)
    k4 = lindblad_rhs(rho + dt * k3, model, lam)
    return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def lindblad_generator(model: ModelSpec, lam: float) -> np.ndarray:
    """Matrix M with vec(drho/dt) = M vec(rho) (row-major vec)."""
    d = model.dim
    I = np.eye(d, dtype=complex)
    H, L = model.H, model.L
    LL = L @ L
    M = (-1j / model.hbar) * (np.kron(H, I) - np.kron(I, H.T))
    M += -0.5 * lam * (np.kron(LL, I) + np.kron(I, LL.T) - 2.0 * np.kron(L, L.T))
    return M


def lindblad_propagator(model: ModelSpec, lam: float, dt: float) -> np.ndarray:
    """Degree-4 Taylor propagator; identical to one RK4 step of the linear flow."""
    M = lindblad_generator(model, lam)
    d2 = M.shape[0]
    P = np.eye(d2, dtype=complex)
    term = np.eye(d2, dtype=complex)
    for k in range(1, 5):
        term = term @ (M * (dt / k))
        P += term
    return P


def lindblad_evolve(rho0: np.ndarray, model: ModelSpec, lam: float, dt: float,
                    n_steps: int, snapshot_steps=None) -> list:
    """Apply the RK4-equivalent propagator ``n_steps`` times, snapshotting.

    Returns a list of (step_index, rho) pairs for the requested steps.
    """
    if snapshot_steps is None:
        snapshot_steps = [n_steps]
    snaps = sorted(set(int(s) for s in snapshot_steps))
    P = lindblad_propagator(model, lam, dt)
    v = np.asarray(rho0, dtype=complex).reshape(-1)
    out = []
    i = 0
    for step in range(n_steps + 1):
        if i < len(snaps) and snaps[i] == step:
            out.append((step, v.reshape(model.dim, model.dim).copy()))
            i += 1
        if step < n_steps:
            v = P @ v
    return out


# --- moment-flow diagnostics ------------------------------------------------

def conditional_moment_flow_residual(trajectory: TrajectoryRecord, observable: np.ndarray,
                                     model: ModelSpec, u: UnravelingParams,
                                     power: int) -> np.ndarray:
    """Per-step residual of the Ito flow of <O> (power 1) or <O>^2 (power 2).

    The finite difference of the stored conditional-mean series is compared
    with the Ito right-hand side evaluated on the pre-step state and the
    recorded increment; for an exact-in-law chain the RMS residual is O(dt).
    """
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    psis = trajectory.states
    if psis.shape[0] < 2:
        raise ValueError("trajectory must store at least two states")
    dW = trajectory.noise.increments
    dt = trajectory.dt
    O, H, L = observable, model.H, model.L

    m = _batch_means(psis, O)
    ell = _batch_means(psis, L)
    comm_OH = np.einsum("ni,ij,nj->n", psis.conj(), O @ H - H @ O, psis)
    dbl = L @ L @ O + O @ L @ L - 2.0 * (L @ O @ L)
    dbl_mean = np.einsum("ni,ij,nj->n", psis.conj(), dbl, psis).real
    anti_OL = np.einsum("ni,ij,nj->n", psis.conj(), O @ L + L @ O, psis).real
    comm_OL = np.einsum("ni,ij,nj->n", psis.conj(), O @ L - L @ O, psis)

    drift = ((-1j / model.hbar) * comm_OH).real - 0.5 * u.lam * dbl_mean
    gain = u.xi_r * (anti_OL - 2.0 * m * ell) + (1j * u.xi_i * comm_OL).real

    drift = drift[:-1]
    gain = gain[:-1]
    m0 = m[:-1]
    if power == 1:
        rhs = drift * dt + np.sqrt(u.lam) * gain * dW
        fd = np.diff(m)
    else:
        rhs = (2.0 * m0 * drift * dt + u.lam * gain ** 2 * dt
               + 2.0 * m0 * np.sqrt(u.lam) * gain * dW)
        fd = np.diff(m ** 2)
    return fd - rhs
