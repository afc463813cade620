"""Acceptance criteria: one callable per criterion, shared by CLI and tests.

Each criterion pins its own parameters, seeds and tolerances; nothing is
calibrated at run time.  Heavy ensembles shared between criteria (the
Born-rule ensemble also feeds the collapse bound) are cached per process.
"""

import time
from dataclasses import dataclass

import numpy as np

from .bell import alice_measures, dynamical_gap, signaling_gap
from .engine import (ModelSpec, UnravelingParams, lindblad_evolve, lindblad_rhs,
                     simulate_ensemble, sse_step)
from .gaussian import (LINEAR, NONLINEAR, MechanicalParams, a_closed_form,
                       centroid_ensemble, conditional_covariance_series,
                       conditional_spread_x, mean_square_x, riccati_matrices,
                       riccati_residual, simulate_width, spread_constants,
                       variance_covariance_series, variance_x)
from .gcm import POVM, kraus_apply, povm_completeness, solve_gcm_params
from .gcm import channel_apply
from .linalg import projector
from .spin import (SIGMA_Z, SpinParams, collapse_statistics, nonlinear_ensemble,
                   spin_model, supermartingale_check)

_PSI0 = np.array([0.5, np.sqrt(3.0) / 2.0], dtype=complex)
_FIG1 = MechanicalParams(mass=1e-15, omega=0.0, lam=1e23)
_FIG1_A0 = 0.25e9 + 0.0j
_CACHE: dict = {}


@dataclass(frozen=True)
class CriterionResult:
    index: int
    title: str
    passed: bool
    tolerance: str
    observed: dict
    seconds: float

    def line(self) -> str:
        return (f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.index:2d} "
                f"({self.seconds:6.1f}s) {self.title}")

    def as_dict(self) -> dict:
        return {"index": self.index, "title": self.title, "passed": self.passed,
                "tolerance": self.tolerance, "observed": self.observed,
                "seconds": self.seconds}


def _born_ensemble():
    """N = 1e4 collapse-member spin trajectories, lam T = 10 (criteria 2 and 3)."""
    if "born" not in _CACHE:
        sp = SpinParams(nu=1.0, lam=1.0)
        n_steps = 5000                       # dt = 2e-3, T = 10
        snaps = np.arange(0, n_steps + 1, 250)
        _CACHE["born"] = (nonlinear_ensemble(_PSI0, sp, 2e-3, n_steps, 10_000,
                                             base_seed=202, snapshot_steps=snaps),
                          sp)
    return _CACHE["born"]


def criterion_1() -> CriterionResult:
    """Ensemble density matrices of both members track the master equation."""
    t0 = time.perf_counter()
    sp = SpinParams(nu=1.0, lam=1.0)
    model = spin_model(sp)
    dt, n_steps, n_traj = 1e-4, 20_000, 5000
    snaps = [5000, 10_000, 20_000]
    tol = 5.0 / np.sqrt(n_traj)
    oracle = lindblad_evolve(projector(_PSI0), model, sp.lam, dt / 10.0,
                             n_steps * 10, snapshot_steps=[s * 10 for s in snaps])
    devs = {}
    for tag, u, seed in (("xi=1", UnravelingParams.nonlinear(sp.lam), 101),
                         ("xi=-i", UnravelingParams.linear(sp.lam), 102)):
        res = simulate_ensemble(model, u, _PSI0, dt, n_steps, n_traj, seed,
                                snapshot_steps=snaps)
        devs[tag] = float(max(np.max(np.abs(res.rhos[i] - oracle[i][1]))
                              for i in range(len(snaps))))
    seconds = time.perf_counter() - t0
    worst = max(devs.values())
    passed = worst <= tol and seconds <= 60.0
    return CriterionResult(1, "master-equation consistency of both members",
                           passed, f"elementwise <= 5/sqrt(N) = {tol:.4f}; runtime <= 60 s",
                           {"max_dev": devs, "runtime_s": seconds}, seconds)


def criterion_2() -> CriterionResult:
    """Collapse branch frequencies follow the Born weights."""
    t0 = time.perf_counter()
    result, _ = _born_ensemble()
    rep = collapse_statistics(result, threshold=0.999)
    dev = abs(rep.fraction_up - 0.25)
    unresolved = rep.n_unresolved / rep.n_total
    passed = dev <= 0.013 and unresolved < 0.01
    return CriterionResult(2, "Born-rule branch statistics", passed,
                           "fraction up within 0.25 +/- 0.013; unresolved < 1%",
                           {"fraction_up": rep.fraction_up, "dev": dev,
                            "unresolved": unresolved, "n": rep.n_total},
                           time.perf_counter() - t0)


def criterion_3() -> CriterionResult:
    """Mean conditional spread satisfies the collapse bound at every time."""
    t0 = time.perf_counter()
    result, sp = _born_ensemble()
    sup = supermartingale_check(result, sp)
    margin = float(np.min(sup.bound + 4.0 * sup.stderr - sup.mean_spread))
    return CriterionResult(3, "supermartingale collapse bound", sup.bound_ok,
                           "mean spread <= 0.75/(1+3t) + 4 SE at every output time",
                           {"min_margin": margin, "monotone_ok": sup.monotone_ok},
                           time.perf_counter() - t0)


def criterion_4() -> CriterionResult:
    """Free-particle closed forms: anchors, plateau, identity, ordering."""
    t0 = time.perf_counter()
    p, a0 = _FIG1, _FIG1_A0
    obs = {}
    vals0 = (conditional_spread_x(0.0, p, a0, NONLINEAR),
             conditional_spread_x(0.0, p, a0, LINEAR),
             float(variance_x(0.0, p, a0)))
    dev0 = max(abs(v / 1e-9 - 1.0) for v in vals0)
    obs["initial_rel_dev"] = dev0
    ok_a = dev0 <= 1e-12

    cons = spread_constants(p, a0, NONLINEAR)
    plateau = 1.0 / (4.0 * cons.asymptote.real)
    t_late = 100.0 / cons.rate.real
    dev_b = abs(conditional_spread_x(t_late, p, a0, NONLINEAR) / plateau - 1.0)
    obs["plateau_m2"] = plateau
    obs["plateau_rel_dev"] = float(dev_b)
    ok_b = dev_b <= 1e-3

    ts = np.linspace(2.0, 10.0, 9)
    gap = variance_x(ts, p, a0) - conditional_spread_x(ts, p, a0, LINEAR)
    ref = p.lam * p.hbar ** 2 * ts ** 3 / (3.0 * p.mass ** 2)
    dev_c = float(np.max(np.abs(gap / ref - 1.0)))
    obs["identity_rel_err"] = dev_c
    ok_c = dev_c <= 1e-10

    grid = np.logspace(-15.0, 1.0, 1000)
    s_a = conditional_spread_x(grid, p, a0, NONLINEAR)
    s_b = conditional_spread_x(grid, p, a0, LINEAR)
    v = variance_x(grid, p, a0)
    ok_d = bool(np.all(s_a <= s_b * (1 + 1e-12)) and np.all(s_b <= v * (1 + 1e-12)))
    obs["ordering_ok"] = ok_d

    return CriterionResult(4, "free-particle closed-form spreads",
                           ok_a and ok_b and ok_c and ok_d,
                           "(a) 1e-12 anchors (b) plateau 1e-3 (c) identity 1e-10 "
                           "(d) ordering on a 1000-point grid",
                           obs, time.perf_counter() - t0)


def criterion_5() -> CriterionResult:
    """Width SDE matches its closed form; centroid MC matches the quadrature."""
    t0 = time.perf_counter()
    p, a0 = _FIG1, _FIG1_A0
    cons = spread_constants(p, a0, NONLINEAR)
    T = 10.0 / cons.rate.real
    n = 1_000_000
    dt = T / n
    path = simulate_width(p, a0, NONLINEAR, dt, n)
    ref = a_closed_form(np.arange(n + 1) * dt, cons)
    rel = float(np.max(np.abs(path - ref) / np.abs(ref)))
    ok_width = rel <= 1e-4

    n2, n_traj = 1000, 2000
    dt2 = 1e-5
    snaps = [250, 500, 1000]
    xs = centroid_ensemble(p, a0, LINEAR, 0.0, 0.0, dt2, n2, n_traj, 505,
                           snapshot_steps=snaps)
    worst_se = 0.0
    for i, s in enumerate(snaps):
        mc = float(np.mean(xs[i] ** 2))
        se = float(np.std(xs[i] ** 2, ddof=1) / np.sqrt(n_traj))
        refv = mean_square_x(s * dt2, p, a0, 0.0, 0.0, LINEAR)
        worst_se = max(worst_se, abs(mc - refv) / se)
    ok_mc = worst_se <= 4.0

    return CriterionResult(5, "parameter SDE vs closed forms", ok_width and ok_mc,
                           "width path rel err <= 1e-4 at dt = T/1e6; "
                           "centroid MC within 4 SE of the quadrature",
                           {"width_max_rel_err": rel, "mc_worst_se": worst_se},
                           time.perf_counter() - t0)


def criterion_6() -> CriterionResult:
    """Covariance-flow residuals quarter (>= 3.5x) under 2x grid refinement.

    One flow is exempt from the ratio test by construction: the free
    phase-noise covariance is polynomial of degree <= 2 in t, the central
    difference of which is exact, leaving a residual at the double-precision
    rounding floor with nothing left to decrease.  That flow instead must
    sit below the floor 100 eps max|S| / h.
    """
    t0 = time.perf_counter()
    obs = {}
    ok = True
    eps = np.finfo(float).eps
    for tag, omega in (("free", 0.0), ("harmonic", 0.5)):
        p = MechanicalParams(mass=1.0, omega=omega, lam=1.0, hbar=1.0)
        a0 = 0.3 + 0.1j
        for label, which, member in (("nonlinear", "nonlinear", NONLINEAR),
                                     ("linear", "linear", LINEAR),
                                     ("variance", "variance", None)):
            maxima = []
            scale = 0.0
            h_fine = 0.0
            for n in (400, 800):
                ts = np.linspace(0.0, 4.0, n + 1)
                h_fine = ts[1] - ts[0]
                if member is None:
                    ser = variance_covariance_series(ts, p, a0)
                else:
                    ser = conditional_covariance_series(ts, p, a0, member)
                scale = float(np.max(np.abs(ser)))
                res = riccati_residual(ser, riccati_matrices(p, which), h_fine)
                maxima.append(float(np.max(res)))
            ratio = maxima[0] / maxima[1]
            floor = float(100.0 * eps * scale / h_fine)
            at_floor = max(maxima) <= floor
            obs[f"{tag}_{label}"] = {"ratio": ratio, "max_fine": maxima[1],
                                     "rounding_floor": floor}
            ok = ok and (ratio >= 3.5 or at_floor)
    return CriterionResult(6, "matrix covariance-flow residual convergence", ok,
                           "max residual decreases >= 3.5x per 2x refinement "
                           "(or already sits at the rounding floor), three "
                           "flows, free and harmonic",
                           obs, time.perf_counter() - t0)


def criterion_7() -> CriterionResult:
    """Trapped-particle formulas reach their free limits as omega -> 0."""
    t0 = time.perf_counter()
    p_free, a0 = _FIG1, _FIG1_A0
    cons_f = spread_constants(p_free, a0, NONLINEAR)
    omega = 1e-6 * np.sqrt(p_free.hbar * p_free.lam / p_free.mass)
    p_h = MechanicalParams(mass=p_free.mass, omega=omega, lam=p_free.lam,
                           hbar=p_free.hbar)
    cons_h = spread_constants(p_h, a0, NONLINEAR)
    dev_b = abs(cons_h.rate / cons_f.rate - 1.0)
    dev_c = abs(cons_h.asymptote / cons_f.asymptote - 1.0)
    ts = np.linspace(1e-4, 10.0 / cons_f.rate.real, 200)
    dev_s = float(np.max(np.abs(conditional_spread_x(ts, p_h, a0, NONLINEAR)
                                / conditional_spread_x(ts, p_free, a0, NONLINEAR) - 1.0)))
    worst = max(dev_b, dev_c, dev_s)
    return CriterionResult(7, "trap-to-free continuity", worst <= 1e-5,
                           "rate, asymptote and spread agree to rel 1e-5 at "
                           "omega = 1e-6 sqrt(hbar lam / m)",
                           {"rate_rel": float(dev_b), "asymptote_rel": float(dev_c),
                            "spread_rel": dev_s}, time.perf_counter() - t0)


def _rand_states(rng, n):
    v = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    return v / np.linalg.norm(v, axis=1)[:, None]


def _kraus_one_step(psis, dWs, dt, gp, nu):
    """Normalized measurement update times the commuting Hamiltonian phase."""
    out = np.empty_like(psis)
    for i in range(psis.shape[0]):
        ell = float(np.abs(psis[i, 0]) ** 2 - np.abs(psis[i, 1]) ** 2)
        dy = gp.xi.real * ell * dt + dWs[i] / (2.0 * np.sqrt(gp.gamma))
        post, _ = kraus_apply(psis[i], SIGMA_Z, gp, dy, dt)
        post = post / np.linalg.norm(post)
        out[i] = np.exp(-1j * nu * dt * np.array([1.0, -1.0])) * post
    return out


def _phase_aligned_rms(a, b):
    ph = np.einsum("ni,ni->n", b.conj(), a)
    ph = ph / np.abs(ph)
    return float(np.sqrt(np.mean(np.linalg.norm(a - ph[:, None] * b, axis=1) ** 2)))


def criterion_8() -> CriterionResult:
    """Measurement-operator update is equivalent to the state equation.

    (i) One operator update over a window dt matches the finely substepped
    state equation on the same refined noise at order dt^{3/2} (RMS ratio
    2.83 +/- 0.5 under dt halving).  The same-dt single Euler step differs
    at order dt (its ratio is reported for transparency: the one-step
    Euler map carries an O(dt) second-order noise remainder).
    (ii) Outcome-operator completeness within 1e-6.
    (iii) Outcome-averaged channel reproduces the measurement part of the
    master-equation step at O(dt^2).
    """
    t0 = time.perf_counter()
    nu = 1.0
    sp = SpinParams(nu=nu, lam=1.0)
    model = spin_model(sp)
    u = UnravelingParams.nonlinear(sp.lam)
    gp = solve_gcm_params(1.0 + 0.0j, sp.lam)
    n_samples = 1000

    def rms_vs_substepped(dt):
        rng = np.random.default_rng(808)
        psis = _rand_states(rng, n_samples)
        nsub = int(round(16.0 / dt))          # substep = dt^2 / 16
        dts = dt / nsub
        dWs = rng.standard_normal((nsub, n_samples)) * np.sqrt(dts)
        ref = psis.copy()
        L2 = model.L @ model.L
        from .engine import _sse_increment_batch
        for k in range(nsub):
            ref = ref + _sse_increment_batch(ref, model, u, dWs[k], dts, L2)
            ref /= np.linalg.norm(ref, axis=1)[:, None]
        kr = _kraus_one_step(psis, dWs.sum(axis=0), dt, gp, nu)
        return _phase_aligned_rms(kr, ref)

    r = [rms_vs_substepped(dt) for dt in (4e-2, 2e-2, 1e-2)]
    ratios = [r[0] / r[1], r[1] / r[2]]
    ok_order = all(abs(x - 2.0 ** 1.5) <= 0.5 for x in ratios)

    def rms_vs_single_euler(dt):
        rng = np.random.default_rng(809)
        psis = _rand_states(rng, n_samples)
        dWs = rng.standard_normal(n_samples) * np.sqrt(dt)
        kr = _kraus_one_step(psis, dWs, dt, gp, nu)
        eu = np.empty_like(psis)
        for i in range(n_samples):
            eu[i] = sse_step(psis[i], model, u, dWs[i], dt)
        return _phase_aligned_rms(kr, eu)

    rs = [rms_vs_single_euler(dt) for dt in (2e-3, 1e-3)]
    single_step_ratio = rs[0] / rs[1]

    worst_povm = 0.0
    for th in (0.0, 0.5, -0.9):
        g = solve_gcm_params(np.exp(1j * th), 1.0)
        defect = np.max(np.abs(povm_completeness(SIGMA_Z, g, 1e-3, normalization=POVM)
                               - np.eye(2)))
        worst_povm = max(worst_povm, float(defect))
    ok_povm = worst_povm <= 1e-6

    rho = projector(_PSI0)
    h0 = ModelSpec(H=np.zeros((2, 2), dtype=complex), L=SIGMA_Z, dim=2, hbar=1.0)
    defects = []
    for dt in (1e-3, 5e-4):
        out = channel_apply(rho, SIGMA_Z, gp, dt)
        lin = rho + lindblad_rhs(rho, h0, sp.lam) * dt
        defects.append(float(np.max(np.abs(out - lin))))
    channel_ratio = defects[0] / defects[1]
    ok_channel = 3.0 <= channel_ratio <= 5.0

    return CriterionResult(
        8, "measurement-operator / state-equation equivalence",
        ok_order and ok_povm and ok_channel,
        "substepped-reference RMS ratio in 2.83 +/- 0.5; completeness <= 1e-6; "
        "channel defect O(dt^2)",
        {"order_ratios": [float(x) for x in ratios],
         "single_euler_step_ratio": float(single_step_ratio),
         "povm_defect": worst_povm,
         "channel_defect_ratio": float(channel_ratio)},
        time.perf_counter() - t0)


def criterion_9() -> CriterionResult:
    """The two collapse-member constructions agree as dt -> 0.

    Matched-noise trajectory pairs are compared through the ensemble-mean
    conditional-spread curves (matching acts as variance reduction for this
    weak comparison); the RMS curve difference halves per dt halving.  The
    pathwise RMS difference is also reported; it contracts at the square
    root rate, as expected when an Euler chain is compared against the
    exponential construction on one noise path.
    """
    t0 = time.perf_counter()
    sp = SpinParams(nu=1.0, lam=1.0)
    model = spin_model(sp)
    u = UnravelingParams.nonlinear(sp.lam)
    T, n_pairs = 0.5, 100_000
    L2 = model.L @ model.L
    from .engine import _sse_increment_batch

    def mean_spread_curves(dt, seed):
        n = int(round(T / dt))
        rng = np.random.default_rng(seed)
        psi = np.tile(_PSI0, (n_pairs, 1))
        phi = psi.copy()
        z_ii = np.full(n_pairs, -0.5)
        idx = np.linspace(0, n, 11).astype(int)
        cur_i = np.empty(11)
        cur_ii = np.empty(11)
        cur_i[0] = cur_ii[0] = 0.75
        j = 1
        for k in range(n):
            dW = rng.standard_normal(n_pairs) * np.sqrt(dt)
            psi = psi + _sse_increment_batch(psi, model, u, dW, dt, L2)
            psi /= np.linalg.norm(psi, axis=1)[:, None]
            dxi = dW + 2.0 * np.sqrt(sp.lam) * z_ii * dt
            phi = phi * np.exp(np.array([1.0, -1.0])
                               * (np.sqrt(sp.lam) * dxi - 1j * sp.nu * dt)[:, None])
            phi /= np.linalg.norm(phi, axis=1)[:, None]
            z_ii = np.abs(phi[:, 0]) ** 2 - np.abs(phi[:, 1]) ** 2
            if j < 11 and k + 1 == idx[j]:
                z_i = np.abs(psi[:, 0]) ** 2 - np.abs(psi[:, 1]) ** 2
                cur_i[j] = np.mean(1.0 - z_i ** 2)
                cur_ii[j] = np.mean(1.0 - z_ii ** 2)
                j += 1
        return cur_i, cur_ii

    rms = []
    for dt in (8e-3, 4e-3, 2e-3):
        a, b = mean_spread_curves(dt, 999)
        rms.append(float(np.sqrt(np.mean((a - b) ** 2))))
    weak_ratios = [rms[0] / rms[1], rms[1] / rms[2]]
    ok = all(1.6 <= x <= 2.4 for x in weak_ratios)

    from .spin import spin_nonlinear_trajectory
    strong = []
    for dt in (2e-3, 1e-3):
        n = int(round(T / dt))
        acc = []
        for k in range(150):
            t1 = spin_nonlinear_trajectory(_PSI0, sp, dt, n, 7000 + k, route="sse")
            t2 = spin_nonlinear_trajectory(_PSI0, sp, dt, n, 7000 + k, route="girsanov")
            acc.append(np.mean((t1.means["sz"] - t2.means["sz"]) ** 2))
        strong.append(float(np.sqrt(np.mean(acc))))
    return CriterionResult(
        9, "agreement of the two collapse-member constructions", ok,
        "matched-noise mean-spread curve RMS halves per dt halving (+/- 20%); "
        "pathwise RMS reported (contracts at the square-root rate)",
        {"weak_ratios": [float(x) for x in weak_ratios],
         "weak_rms": rms,
         "pathwise_ratio": float(strong[0] / strong[1])},
        time.perf_counter() - t0)


def criterion_10() -> CriterionResult:
    """Identical marginals, different spread means, statically and dynamically."""
    t0 = time.perf_counter()
    out_z, out_x = alice_measures("z"), alice_measures("x")
    rho_d, sigma_gap = signaling_gap(out_z, out_x)
    ok_static = rho_d <= 1e-15 and sigma_gap == 1.0
    dyn = dynamical_gap(lam=1.0, t_final=1.5, dt=1e-3, n_traj=5000, base_seed=1010)
    rho_worst = float(np.max(dyn.rho_distance))
    ok_dyn = dyn.spread_gap_final > 0.5 and rho_worst <= dyn.mc_rho_tolerance
    return CriterionResult(
        10, "two-observer demo (static and dynamical)", ok_static and ok_dyn,
        "rho distance <= 1e-15 and gap = 1 exactly; dynamical gap > 0.5 with "
        "rho agreement within 5/sqrt(N)",
        {"rho_distance": rho_d, "sigma_gap": sigma_gap,
         "dyn_gap": dyn.spread_gap_final, "dyn_rho_worst": rho_worst,
         "dyn_rho_tol": dyn.mc_rho_tolerance},
        time.perf_counter() - t0)


def criterion_11() -> CriterionResult:
    """Re-running a preset with the same seed rewrites identical bytes."""
    import tempfile
    from .config import preset
    from .runner import files_equal_ignoring_timestamp, run_scenario
    t0 = time.perf_counter()
    cfg = preset("fig2")
    with tempfile.TemporaryDirectory() as d1, tempfile.TemporaryDirectory() as d2:
        w1 = run_scenario(cfg, d1)
        w2 = run_scenario(cfg, d2)
        pairs = list(zip(sorted(w1), sorted(w2)))
        same = {a.name: files_equal_ignoring_timestamp(a, b) for a, b in pairs}
    return CriterionResult(11, "byte-level determinism of preset outputs",
                           all(same.values()),
                           "every series/report file identical up to the "
                           "created_at metadata field",
                           {"files": same}, time.perf_counter() - t0)


CRITERIA = {i: fn for i, fn in enumerate(
    (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
     criterion_7, criterion_8, criterion_9, criterion_10, criterion_11), start=1)}


def run_criteria(only=None, verbose: bool = False) -> list:
    indices = sorted(only) if only else sorted(CRITERIA)
    results = []
    for i in indices:
        if i not in CRITERIA:
            raise ValueError(f"no criterion {i}; available 1..{len(CRITERIA)}")
        res = CRITERIA[i]()
        results.append(res)
        if verbose:
            print(res.line())
            print(f"    tolerance: {res.tolerance}")
            print(f"    observed:  {res.observed}")
    return results
