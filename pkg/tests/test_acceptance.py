"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Reference setup: J = J_n = 0.1 kg m^2, b = 0, Ts = 1 ms, K_p = 500, K_v = 25.
Throughout, ``gn`` is the loop-level observer gain L^T D_Dn and
``alpha = J_n / J``.
"""

import time

import numpy as np

import oracles
from dobstab import (
    ContinuousPlant,
    FeedbackGains,
    NominalPlant,
    ObserverConfig,
    build_inner_loop,
    build_outer_loop,
    eigenvalues,
    gain_upper_bound,
    jordan_decompose,
    outer_spectrum_factored,
    root_locus,
    zoh_discretize,
)
from dobstab.analysis import locate_boundary
from dobstab.loops import closed_loop_tf, inner_tf
from dobstab.observer import error_contraction_factor, run_standalone
from dobstab.sim import (
    DisturbanceProfile,
    PIDConfig,
    ReferenceProfile,
    regulation_metrics,
    simulate_dob,
    simulate_pid,
)

J = 0.1
TS = 1e-3
ALPHAS = (0.25, 0.5, 1.0, 1.5, 2.5)
GAINS = FeedbackGains(500.0, 25.0)


def pair(alpha, J_true=J, Ts=TS):
    return zoh_discretize(ContinuousPlant(J_true), Ts), zoh_discretize(NominalPlant(alpha * J_true), Ts)


def inner_matrix(alpha, gn):
    plant, nominal = pair(alpha)
    return build_inner_loop(plant, nominal, ObserverConfig.from_normalized_gain(gn, nominal)).A


def outer_matrix(alpha, gn, gains=GAINS):
    plant, nominal = pair(alpha)
    return build_outer_loop(plant, nominal, ObserverConfig.from_normalized_gain(gn, nominal), gains).A


def gn_grid(alpha, n=20):
    return np.linspace(0.0, 2.0 / alpha, n + 2)[1:-1]


def test_criterion_1_inner_eigenstructure(record):
    start = time.perf_counter()
    worst = 0.0
    for alpha in ALPHAS:
        for gn in gn_grid(alpha):
            expected = [1.0, 1.0, 1.0 - alpha * gn]
            worst = max(worst, oracles.multiset_distance(eigenvalues(inner_matrix(alpha, gn)), expected))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 1.0
    record(1, ok, f"max |eig - {{1, 1, 1 - alpha gn}}| = {worst:.2e}, {elapsed:.3f} s")
    assert worst <= 1e-9
    assert elapsed < 1.0


def test_criterion_2_constraint_boundary(record):
    start = time.perf_counter()
    worst = 0.0
    for alpha in ALPHAS:
        found = locate_boundary(lambda gn: inner_matrix(alpha, gn), 0.5 / alpha, 3.0 / alpha)
        worst = max(worst, abs(found - 2.0 / alpha) / (2.0 / alpha))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 1.0
    record(2, ok, f"max relative boundary error {worst:.2e}, {elapsed:.3f} s")
    assert worst <= 1e-6
    assert elapsed < 1.0


def test_criterion_3_observer_gain_bound(record):
    start = time.perf_counter()
    Jn = 0.1
    nominal = zoh_discretize(NominalPlant(Jn), TS)
    bound = gain_upper_bound(nominal)
    closed_form = 4 * Jn / (TS * (TS + 2))
    _, D_oracle = oracles.simpson_zoh(Jn, 0.0, TS)
    oracle_bound = 2.0 / np.sum(np.abs(D_oracle))
    rel = max(abs(bound - closed_form), abs(bound - oracle_bound)) / closed_form

    def final_error(scale):
        cfg = ObserverConfig(scale * bound, nominal)
        n = 400
        run = run_standalone(cfg, np.ones(n), u=np.ones(n))
        return abs(run.error[0]), abs(run.error[-1])

    e0_hi, eN_hi = final_error(1.05)
    e0_lo, eN_lo = final_error(0.95)
    elapsed = time.perf_counter() - start
    diverges = eN_hi > 1e6 * e0_hi
    contracts = eN_lo < 1e-6 * e0_lo
    ok = rel <= 1e-10 and diverges and contracts and elapsed < 2.0
    record(
        3,
        ok,
        f"bound {bound:.10f} (rel err {rel:.1e}); |e| at 1.05x: {eN_hi:.2e}, at 0.95x: {eN_lo:.2e}; {elapsed:.3f} s",
    )
    assert rel <= 1e-10
    assert diverges and contracts
    assert elapsed < 2.0


def test_criterion_4_error_recursion(record):
    nominal = zoh_discretize(NominalPlant(0.1), TS)
    cfg = ObserverConfig(50.0, nominal)
    f = error_contraction_factor(cfg)
    rng = np.random.default_rng(4)
    n = 1000
    tau = 2.0
    # input roughly cancels the disturbance so the state stays O(1)
    u = tau + 0.1 * rng.standard_normal(n)
    e = run_standalone(cfg, np.full(n, tau), u=u).error
    step_residual = float(np.max(np.abs(e[1:] - f * e[:-1])))

    slope = 1e-3
    ramp = slope * np.arange(n)
    e_ramp = run_standalone(cfg, ramp, u=ramp).error
    target = abs(slope) / (1.0 - abs(f))
    ramp_rel = abs(abs(e_ramp[-1]) - target) / target
    ok = step_residual <= 1e-12 and ramp_rel <= 0.05
    record(
        4,
        ok,
        f"factor {f:.6f}, max |e(k+1) - f e(k)| = {step_residual:.1e}; ramp |e| {abs(e_ramp[-1]):.6e} "
        f"vs {target:.6e} ({ramp_rel:.1e} rel)",
    )
    assert step_residual <= 1e-12
    assert ramp_rel <= 0.05


def _modal_case(alpha, gn, gains):
    plant, nominal = pair(alpha)
    cfg = ObserverConfig.from_normalized_gain(gn, nominal)
    inner = build_inner_loop(plant, nominal, cfg)
    jordan = jordan_decompose(inner)
    outer = build_outer_loop(plant, nominal, cfg, gains, feedback="modal", jordan=jordan)
    return outer, jordan


def test_criterion_5_eigenvalue_separation(record):
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    accepted = tries = 0
    while accepted < 200:
        tries += 1
        alpha = rng.uniform(0.25, 2.5)
        gn = rng.uniform(0.05, 1.95) / alpha
        gains = FeedbackGains(rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0))
        outer, jordan = _modal_case(alpha, gn, gains)
        lam = eigenvalues(outer.A)
        if np.max(np.abs(lam)) >= 1.0:
            continue
        accepted += 1
        observer_pole, block = outer_spectrum_factored(outer, jordan)
        worst = max(worst, abs(observer_pole - (1 - alpha * gn)))
        worst = max(worst, oracles.multiset_distance(lam, np.append(block, observer_pole)))
    # gain sweeps at fixed (alpha, gn) leave 1 - alpha gn in place
    invariance = 0.0
    for alpha, gn in ((0.5, 1.0), (1.5, 0.6), (1.0, 0.3)):
        for kp in np.linspace(0.0, 500.0, 6):
            for kv in np.linspace(0.0, 25.0, 6):
                outer, _ = _modal_case(alpha, gn, FeedbackGains(kp, kv))
                lam = eigenvalues(outer.A)
                invariance = max(invariance, float(np.min(np.abs(lam - (1 - alpha * gn)))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and invariance <= 1e-9 and elapsed < 5.0
    record(
        5,
        ok,
        f"200 stable of {tries} drawn, max split error {worst:.1e}, max drift of 1 - alpha gn {invariance:.1e}, "
        f"{elapsed:.3f} s",
    )
    assert worst <= 1e-9
    assert invariance <= 1e-9
    assert elapsed < 5.0


def test_criterion_6_tf_state_space_agreement(record):
    rng = np.random.default_rng(6)
    worst_inner = worst_outer = 0.0
    for i in range(200):
        alpha = 1.0 if i % 10 == 0 else rng.uniform(0.25, 2.5)
        gn = rng.uniform(0.05, 1.95) / alpha
        J_true = rng.uniform(0.01, 1.0)
        Ts = 10 ** rng.uniform(-4, -2)
        plant, nominal = pair(alpha, J_true, Ts)
        cfg = ObserverConfig.from_normalized_gain(gn, nominal)
        gains = FeedbackGains(rng.uniform(1.0, 1000.0), rng.uniform(0.5, 50.0))

        g_in = inner_tf(plant, nominal, cfg)
        poles_in = list(g_in.poles) + list(g_in.hidden_modes())
        lam_in = eigenvalues(build_inner_loop(plant, nominal, cfg).A)
        worst_inner = max(worst_inner, oracles.multiset_distance(poles_in, lam_in))

        t_cl = closed_loop_tf(plant, nominal, cfg, gains)
        poles_cl = list(t_cl.poles) + list(t_cl.hidden_modes())
        lam_out = eigenvalues(build_outer_loop(plant, nominal, cfg, gains).A)
        worst_outer = max(worst_outer, oracles.multiset_distance(poles_cl, lam_out))
    worst = max(worst_inner, worst_outer)
    ok = worst <= 1e-9
    record(6, ok, f"max |pole - eig| inner {worst_inner:.1e}, outer {worst_outer:.1e} over 200 configurations")
    assert worst <= 1e-9


def _outer_boundary(alpha):
    trace = root_locus(lambda gn: outer_matrix(alpha, gn), 1e-3, 2.5 / alpha, 400, parameter="g_n")
    return trace.boundary


def test_criterion_7_root_locus_structure(record):
    low, high = _outer_boundary(0.5), _outer_boundary(1.5)
    ordered = low is not None and high is not None and low < high

    gn = 0.5
    sweep = root_locus(lambda a: outer_matrix(a, gn), 0.25, 6.0, 200, parameter="alpha")
    eventually_unstable = sweep.boundary is not None and sweep.radii[-1] > 1.0
    ok = ordered and eventually_unstable
    record(
        7,
        ok,
        f"(a) first destabilizing gn: alpha=0.5 -> {low:.6g}, alpha=1.5 -> {high:.6g} "
        f"({'ordered' if ordered else 'NOT ordered'}); "
        f"(b) alpha sweep at gn={gn}: unstable beyond alpha={sweep.boundary:.6g}",
    )
    assert eventually_unstable, "(b) alpha sweep never left the unit disk"
    assert ordered, f"(a) expected boundary at alpha=0.5 ({low}) below alpha=1.5 ({high})"


def test_criterion_8_regulation_against_pid(record):
    start = time.perf_counter()
    plant, nominal_c = ContinuousPlant(J), NominalPlant(J)
    nominal = zoh_discretize(nominal_c, TS)
    cfg = ObserverConfig(50.0, nominal)
    n = 10_000
    ref = ReferenceProfile.regulation()
    dist = DisturbanceProfile.default()
    dob = simulate_dob(plant, nominal_c, cfg, GAINS, dist, ref, n)
    pid = simulate_pid(plant, PIDConfig(500.0, 5000.0, 25.0), dist, ref, n, TS)
    sse_dob = regulation_metrics(dob).steady_state_error
    sse_pid = regulation_metrics(pid).steady_state_error
    ratio = sse_dob / sse_pid

    # constant-load run for the estimate check; the default load has a sinusoid
    step = DisturbanceProfile("step", amplitude=5.0, time=2.0)
    settle = simulate_dob(plant, nominal_c, cfg, GAINS, step, ref, n)
    tail = slice(int(0.9 * n), None)
    tau_err = float(np.max(np.abs(settle.tau_hat[tail] - 5.0)))
    elapsed = time.perf_counter() - start
    ok = ratio <= 0.1 and tau_err <= 1e-3 and elapsed < 5.0
    record(
        8,
        ok,
        f"steady-state error DOb {sse_dob:.3e} rad, PID {sse_pid:.3e} rad (ratio {ratio:.3f}); "
        f"|tau_hat - 5| tail max {tau_err:.1e}; {elapsed:.3f} s",
    )
    assert ratio <= 0.1
    assert tau_err <= 1e-3
    assert elapsed < 5.0


def test_criterion_9_discretization_oracle(record):
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(100):
        Jr = 10 ** rng.uniform(-2, 1)
        Ts = 10 ** rng.uniform(-4, -2)
        # keep b Ts / J at most 5 so the oracle's own quadrature error stays small
        b = rng.uniform(0.0, min(5.0, 5.0 * Jr / Ts))
        d = zoh_discretize(ContinuousPlant(Jr, b), Ts)
        A_ref, B_ref = oracles.simpson_zoh(Jr, b, Ts)
        for got, want in ((d.A, A_ref), (d.B, B_ref), (d.D, B_ref)):
            nz = want != 0
            worst = max(worst, float(np.max(np.abs(got[nz] - want[nz]) / np.abs(want[nz]))))
            assert np.all(got[~nz] == 0)
    ok = worst <= 1e-10
    record(9, ok, f"max relative deviation from Simpson oracle {worst:.1e} over 100 triples")
    assert worst <= 1e-10
