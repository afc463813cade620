import numpy as np
import pytest

from unravelings.engine import (ModelSpec, UnravelingParams, check_stability,
                                conditional_moment_flow_residual, ensemble_average,
                                lindblad_evolve, lindblad_propagator, lindblad_step,
                                max_stable_dt, simulate_ensemble,
                                simulate_trajectory, sse_step)
from unravelings.linalg import identity, pauli, projector
from unravelings.noise import derive_seed

SZ = pauli("z")
PSI0 = np.array([0.5, np.sqrt(3.0) / 2.0], dtype=complex)


def spin_model(nu=1.0):
    return ModelSpec(H=nu * SZ, L=SZ.copy(), dim=2, hbar=1.0)


def test_unraveling_params_validation():
    with pytest.raises(ValueError):
        UnravelingParams(0.6, 0.9, 1.0)
    with pytest.raises(ValueError):
        UnravelingParams(-1.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        UnravelingParams(1.0, 0.0, -2.0)
    assert UnravelingParams.nonlinear(2.0).xi == 1.0 + 0.0j
    assert UnravelingParams.linear(2.0).xi == -1.0j


def test_model_spec_requires_hermitian():
    bad = np.array([[0, 1], [0, 0]], dtype=complex)
    with pytest.raises(ValueError):
        ModelSpec(H=bad, L=SZ, dim=2)


def test_stability_budget():
    model = spin_model()
    u = UnravelingParams.nonlinear(4.0)
    assert max_stable_dt(model, u) == pytest.approx(0.01 / 4.0)
    with pytest.raises(ValueError, match="stability budget"):
        check_stability(model, u, 0.01)
    check_stability(model, u, 1e-3)


def test_sse_step_unitary_limit():
    # lam = 0: a plain Euler step of the Schroedinger flow, O(dt^2) norm drift
    model = spin_model(nu=2.0)
    u = UnravelingParams.nonlinear(0.0)
    dt = 1e-4
    raw = PSI0 + (-1j * 2.0 * (SZ @ PSI0)) * dt
    assert abs(np.linalg.norm(raw) - 1.0) <= 10.0 * dt ** 2
    stepped = sse_step(PSI0, model, u, dW=0.37, dt=dt)
    exact = np.exp(-1j * 2.0 * dt * np.array([1.0, -1.0])) * PSI0
    assert np.linalg.norm(stepped - exact) <= 10.0 * dt ** 2


def test_sse_step_eigenstate_is_deterministic_fixed_point():
    model = spin_model()
    u = UnravelingParams.nonlinear(1.0)
    up = np.array([1.0, 0.0], dtype=complex)
    out1 = sse_step(up, model, u, dW=0.5, dt=1e-3)
    out2 = sse_step(up, model, u, dW=-1.7, dt=1e-3)
    assert np.array_equal(out1, out2)
    assert abs(abs(out1[0]) - 1.0) <= 1e-12


def test_sse_step_linear_member_matches_phase_solution_per_step():
    # one Euler step vs the exact phase update.  The O(dt) bound holds with
    # plenty of room: renormalization cancels the scalar second-order noise
    # term (L^2 = 1 here), so the residual actually contracts at order 3/2.
    model = spin_model()
    u = UnravelingParams.linear(1.0)
    rng = np.random.default_rng(10)

    def rms(dt, n=4000):
        acc = np.empty(n)
        for i in range(n):
            dW = rng.standard_normal() * np.sqrt(dt)
            stepped = sse_step(PSI0, model, u, dW, dt)
            phase = 1.0 * dt + dW
            exact = np.exp(-1j * phase * np.array([1.0, -1.0])) * PSI0
            acc[i] = np.linalg.norm(stepped - exact) ** 2
        return np.sqrt(acc.mean())

    r1, r2 = rms(2e-3), rms(1e-3)
    assert r1 <= 2.0 * 1.0 * 2e-3          # <= 2 lam dt
    assert 2.3 <= r1 / r2 <= 3.4


def test_sse_step_rejects_divergence():
    model = spin_model()
    u = UnravelingParams.nonlinear(1.0)
    with pytest.raises(FloatingPointError):
        sse_step(PSI0, model, u, dW=1e200, dt=1e300)


def test_simulate_trajectory_shapes_and_record():
    model = spin_model()
    u = UnravelingParams.nonlinear(1.0)
    tr = simulate_trajectory(model, u, PSI0, 1e-3, 50, seed=3,
                             tracked_observables={"sz": SZ})
    assert tr.states.shape == (51, 2)
    assert tr.means["sz"].shape == (51,)
    assert tr.record is not None and tr.record.values.shape == (50,)
    norms = np.linalg.norm(tr.states, axis=1)
    assert np.max(np.abs(norms - 1.0)) <= 1e-10
    # record follows dy = <sz> dt + dW / (2 sqrt(lam)) with pre-step means
    expect = tr.means["sz"][:-1] * 1e-3 + tr.noise.increments / 2.0
    assert np.array_equal(tr.record.values, expect)


def test_simulate_trajectory_zero_steps_and_linear_member_has_no_record():
    model = spin_model()
    tr = simulate_trajectory(model, UnravelingParams.nonlinear(1.0), PSI0, 1e-3, 0, 1)
    assert tr.states.shape == (1, 2) and tr.record is None
    tr2 = simulate_trajectory(model, UnravelingParams.linear(1.0), PSI0, 1e-3, 5, 1)
    assert tr2.record is None


def test_lindblad_step_stationary_cases():
    model = spin_model()
    rho = projector(np.array([1.0, 0.0], dtype=complex))
    out = lindblad_step(rho, model, 0.0, 1e-2)          # [H, rho] = 0, lam = 0
    assert np.allclose(out, rho, atol=1e-15)
    mixed = identity(2) / 2.0
    out2 = lindblad_step(mixed, model, 1.0, 1e-2)
    assert np.allclose(out2, mixed, atol=1e-15)


def test_lindblad_dephasing_oracle():
    # d rho_01/dt = (-2 i nu - 2 lam) rho_01 solved analytically
    nu, lam, dt, n = 1.3, 0.8, 1e-3, 1000
    model = spin_model(nu=nu)
    plus_x = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
    rho = projector(plus_x)
    for _ in range(n):
        rho = lindblad_step(rho, model, lam, dt)
        assert abs(np.trace(rho).real - 1.0) <= 1e-12
    t = n * dt
    expected = 0.5 * np.exp((-2j * nu - 2.0 * lam) * t)
    assert abs(rho[0, 1] - expected) <= 1e-10
    assert abs(rho[0, 0] - 0.5) <= 1e-12


def test_lindblad_evolve_equals_repeated_rk4_steps():
    model = spin_model(nu=0.7)
    rho = projector(PSI0)
    dt, n = 2e-3, 40
    stepped = rho.copy()
    for _ in range(n):
        stepped = lindblad_step(stepped, model, 1.0, dt)
    evolved = lindblad_evolve(rho, model, 1.0, dt, n)[-1][1]
    assert np.max(np.abs(stepped - evolved)) <= 1e-13
    P = lindblad_propagator(model, 1.0, dt)
    one = (P @ rho.reshape(-1)).reshape(2, 2)
    assert np.max(np.abs(one - lindblad_step(rho, model, 1.0, dt))) <= 1e-15


@pytest.mark.parametrize("u", [UnravelingParams.nonlinear(1.0),
                               UnravelingParams.linear(1.0)])
def test_ensemble_density_matrix_tracks_master_equation(u):
    model = spin_model()
    n_traj, n_steps, dt = 800, 1000, 1e-3
    res = simulate_ensemble(model, u, PSI0, dt, n_steps, n_traj, base_seed=21,
                            snapshot_steps=[500, 1000])
    oracle = lindblad_evolve(projector(PSI0), model, 1.0, dt / 10.0, n_steps * 10,
                             snapshot_steps=[5000, 10000])
    tol = 5.0 / np.sqrt(n_traj)
    for i in range(2):
        assert np.max(np.abs(res.rhos[i] - oracle[i][1])) <= tol


def test_ensemble_average_matches_lockstep_result():
    model = spin_model()
    u = UnravelingParams.nonlinear(1.0)
    n_traj, n_steps, dt = 6, 40, 1e-3
    trajs = [simulate_trajectory(model, u, PSI0, dt, n_steps, derive_seed(33, k))
             for k in range(n_traj)]
    rhos = ensemble_average(trajs, [0.0, 0.02, 0.04])
    res = simulate_ensemble(model, u, PSI0, dt, n_steps, n_traj, base_seed=33,
                            snapshot_steps=[0, 20, 40])
    for a, b in zip(rhos, res.rhos):
        assert np.max(np.abs(a - b)) <= 1e-12
    single = ensemble_average(trajs[:1], [0.04])[0]
    evals = np.linalg.eigvalsh(single)
    assert evals.max() == pytest.approx(1.0, abs=1e-10)  # pure projector


def test_ensemble_average_rejects_mismatched_grids():
    model = spin_model()
    u = UnravelingParams.nonlinear(1.0)
    a = simulate_trajectory(model, u, PSI0, 1e-3, 10, 1)
    b = simulate_trajectory(model, u, PSI0, 1e-3, 11, 2)
    with pytest.raises(ValueError):
        ensemble_average([a, b], [0.005])
    with pytest.raises(ValueError):
        ensemble_average([], [0.0])
    with pytest.raises(ValueError):
        ensemble_average([a], [0.0033])


def test_vectorized_members_equal_serial_trajectories():
    model = spin_model()
    u = UnravelingParams.nonlinear(1.0)
    res = simulate_ensemble(model, u, PSI0, 1e-3, 300, 5, base_seed=42,
                            snapshot_steps=[300], tracked_observables={"sz": SZ})
    for k in range(5):
        tr = simulate_trajectory(model, u, PSI0, 1e-3, 300, derive_seed(42, k),
                                 tracked_observables={"sz": SZ})
        assert np.allclose(res.final_states[k], tr.states[-1], atol=1e-13)
        assert abs(res.means["sz"][0, k] - tr.means["sz"][300]) <= 1e-13


def test_worker_count_does_not_change_results():
    # n_traj spans multiple reduction chunks so threading actually splits work
    model = spin_model()
    u = UnravelingParams.linear(1.0)
    kw = dict(dt=1e-3, n_steps=60, n_traj=5100, base_seed=9,
              snapshot_steps=[0, 30, 60], tracked_observables={"sz": SZ})
    a = simulate_ensemble(model, u, PSI0, **kw, n_workers=1)
    b = simulate_ensemble(model, u, PSI0, **kw, n_workers=3)
    assert np.array_equal(a.final_states, b.final_states)
    assert np.array_equal(a.means["sz"], b.means["sz"])
    assert np.array_equal(a.rhos, b.rhos)


def test_moment_flow_residual_matches_inline_formula():
    # the engine residual must equal the hand-built Ito right-hand side for
    # the collapse member: gain = 2(1 - z^2), drift-free (H commutes with L)
    model = spin_model()
    u = UnravelingParams.nonlinear(1.0)
    tr = simulate_trajectory(model, u, PSI0, 1e-3, 300, 17,
                             tracked_observables={"sz": SZ})
    z = tr.means["sz"]
    gain = 2.0 * (1.0 - z[:-1] ** 2)
    r1 = conditional_moment_flow_residual(tr, SZ, model, u, 1)
    assert np.max(np.abs(r1 - (np.diff(z) - gain * tr.noise.increments))) <= 1e-14
    r2 = conditional_moment_flow_residual(tr, SZ, model, u, 2)
    rhs2 = gain ** 2 * 1e-3 + 2.0 * z[:-1] * gain * tr.noise.increments
    assert np.max(np.abs(r2 - (np.diff(z ** 2) - rhs2))) <= 1e-14


def _batched_residual_rms(power, dt, n_traj=3000, T=1.0, seed=5):
    """RMS of the engine's residual formula over a large lock-step batch."""
    model = spin_model()
    u = UnravelingParams.nonlinear(1.0)
    L2 = model.L @ model.L
    from unravelings.engine import _sse_increment_batch
    n = int(round(T / dt))
    rng = np.random.default_rng(seed)
    psi = np.tile(PSI0, (n_traj, 1))
    acc, cnt = 0.0, 0
    for _ in range(n):
        z = np.abs(psi[:, 0]) ** 2 - np.abs(psi[:, 1]) ** 2
        dW = rng.standard_normal(n_traj) * np.sqrt(dt)
        nxt = psi + _sse_increment_batch(psi, model, u, dW, dt, L2)
        nxt /= np.linalg.norm(nxt, axis=1)[:, None]
        z2 = np.abs(nxt[:, 0]) ** 2 - np.abs(nxt[:, 1]) ** 2
        gain = 2.0 * (1.0 - z ** 2)
        if power == 1:
            res = (z2 - z) - gain * dW
        else:
            res = (z2 ** 2 - z ** 2) - (gain ** 2 * dt + 2.0 * z * gain * dW)
        acc += float(np.sum(res ** 2))
        cnt += n_traj
        psi = nxt
    return np.sqrt(acc / cnt)


@pytest.mark.parametrize("power", [1, 2])
def test_moment_flow_residual_shrinks_linearly(power):
    coarse = _batched_residual_rms(power, 2e-3)
    fine = _batched_residual_rms(power, 1e-3)
    assert 1.7 <= coarse / fine <= 2.3


def test_moment_flow_residual_commuting_case_is_exact():
    # nu = 0 phase-noise member: <sz> is exactly conserved by the update,
    # and [L, O] = 0 kills every term of the <O>^2 flow
    model = spin_model(nu=0.0)
    u = UnravelingParams.linear(1.0)
    tr = simulate_trajectory(model, u, PSI0, 1e-3, 500, 5,
                             tracked_observables={"sz": SZ})
    r = conditional_moment_flow_residual(tr, SZ, model, u, 2)
    assert np.max(np.abs(r)) <= 1e-13


def test_variance_flow_against_third_moment_form():
    # for the collapse member the spread s = 1 - <sz>^2 obeys
    # ds = -4 lam s^2 dt + 2 sqrt(lam) m3 dW with m3 = -2 <sz> s; its
    # residual is minus the <sz>^2 flow residual (since <sz^2> = 1), so the
    # same linear contraction applies
    model = spin_model()
    u = UnravelingParams.nonlinear(1.0)
    tr = simulate_trajectory(model, u, PSI0, 1e-3, 400, 23,
                             tracked_observables={"sz": SZ})
    z = tr.means["sz"]
    s = 1.0 - z ** 2
    m3 = -2.0 * z * s
    rhs = -4.0 * s[:-1] ** 2 * 1e-3 + 2.0 * m3[:-1] * tr.noise.increments
    res_spread = np.diff(s) - rhs
    res_engine = conditional_moment_flow_residual(tr, SZ, model, u, 2)
    assert np.max(np.abs(res_spread + res_engine)) <= 1e-14


def test_weak_convergence_is_first_order():
    # Richardson on common refined noise: (A_h - A_{h/2}) / (A_{h/2} - A_{h/4}) ~ 2
    model = spin_model()
    u = UnravelingParams.nonlinear(1.0)
    n_traj, T, h = 50_000, 0.96, 0.04
    n4 = int(round(T / (h / 4.0)))
    rng = np.random.default_rng(77)
    dW4 = rng.standard_normal((n4, n_traj)) * np.sqrt(h / 4.0)
    L2 = model.L @ model.L
    from unravelings.engine import _sse_increment_batch

    def final_mean_z2(dWs, dt):
        psi = np.tile(PSI0, (n_traj, 1))
        for k in range(dWs.shape[0]):
            psi = psi + _sse_increment_batch(psi, model, u, dWs[k], dt, L2)
            psi /= np.linalg.norm(psi, axis=1)[:, None]
        z = np.abs(psi[:, 0]) ** 2 - np.abs(psi[:, 1]) ** 2
        return np.mean(z ** 2)

    a4 = final_mean_z2(dW4, h / 4.0)
    dW2 = dW4.reshape(-1, 2, n_traj).sum(axis=1)
    a2 = final_mean_z2(dW2, h / 2.0)
    dW1 = dW2.reshape(-1, 2, n_traj).sum(axis=1)
    a1 = final_mean_z2(dW1, h)
    ratio = (a1 - a2) / (a2 - a4)
    assert 1.5 <= ratio <= 2.8


def test_norm_drift_scalings():
    # pre-renormalization norm defect: RMS is O(dt) (fluctuating, zero mean),
    # the signed mean is O(dt^2); both scalings verified by halving
    model = spin_model()
    u = UnravelingParams.nonlinear(1.0)
    L2 = model.L @ model.L
    from unravelings.engine import _sse_increment_batch
    n = 400_000

    def defects(dt, seed):
        rng = np.random.default_rng(seed)
        psi = np.tile(PSI0, (n, 1))
        dW = rng.standard_normal(n) * np.sqrt(dt)
        raw = psi + _sse_increment_batch(psi, model, u, dW, dt, L2)
        d = np.einsum("ni,ni->n", raw.conj(), raw).real - 1.0
        return np.sqrt(np.mean(d ** 2)), np.mean(d)

    rms1, mean1 = defects(1e-2, 1)
    rms2, mean2 = defects(5e-3, 1)
    assert 1.7 <= rms1 / rms2 <= 2.4
    assert 2.8 <= mean1 / mean2 <= 5.5
