"""End-to-end acceptance suite.

Each test exercises one numbered behavioral criterion at its stated
tolerance and prints a single pass/fail line (run with ``-s`` to see them).
Reference mean-squared-error values for the benchmark reproductions come
from previously published Monte Carlo tables; "band" checks require our
value to lie within a factor of 3 of the reference.  Known shortfalls are
analyzed in the project's decision notes.
"""

import dataclasses
import warnings

import numpy as np
import pytest

from ocestim import (
    get_model,
    linear_condition_matrices,
    make_condition_set,
    make_sine_basis,
    oc,
    rk4_solve,
    uniform_bspline_testfuncs,
)
from ocestim.baselines import EstimatorFailure, nls_estimate, ts_estimate
from ocestim.basis import KnotVector, make_bspline_testfuncs, uniform_knots
from ocestim.conditions import eval_conditions, eval_jacobian_theta
from ocestim.mc import generate_data, trajectory_scale
from ocestim.odesim import dde_solve
from ocestim.smoother import design_matrix, fit as spline_fit, gcv_select


def report(num, label, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"criterion {num:02d} [{label}]: {status} ({detail})")
    assert ok, f"criterion {num}: {detail}"


def in_band(value, reference, factor=3.0):
    return reference / factor <= value <= reference * factor


def exact_trajectory(model, n=3001, substeps=20):
    t = np.linspace(*model.t_span, n)
    return rk4_solve(model.field, model.theta_star, model.x0, t, substeps=substeps)


def quiet_minimize(cs, fitc, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return oc.minimize(cs, fitc, **kw)


# ---------------------------------------------------------------------------


def test_criterion_01_annihilation_on_exact_trajectories():
    worst = {}
    for name in ("alpha-pinene", "ricatti", "fhn", "linear2d"):
        m = get_model(name)
        cs = make_condition_set(m, make_sine_basis(20, m.t_span))
        e = eval_conditions(cs, exact_trajectory(m), m.theta_star).values
        worst[name] = np.max(np.abs(e))
    m = get_model("blowfly")
    traj = dde_solve(m.delayed_field, m.theta_star, m.default_history(), m.t_span[1],
                     max_step=m.tau / 512)
    cs = make_condition_set(m, make_sine_basis(20, (m.tau, m.t_span[1])))
    worst["blowfly"] = np.max(np.abs(eval_conditions(cs, traj, m.theta_star).values))
    bad = max(worst.values())
    detail = ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    report(1, "exact-trajectory annihilation L=20", bad <= 1e-6, detail)


def test_criterion_02_noiseless_recovery_all_estimators():
    m = get_model("exponential")
    obs = generate_data(m, n=200, sigma=0.0, seed=0)
    fitc = spline_fit(obs, gcv_select(obs, [6, 10, 14]))
    cs = make_condition_set(m, make_sine_basis(5, m.t_span))
    errs = {
        "oc": abs(quiet_minimize(cs, fitc).theta[0] - 1.0),
        "ts": abs(ts_estimate(fitc, m).theta[0] - 1.0),
        "nls": abs(nls_estimate(obs, m, starts=3, seed=0).theta[0] - 1.0),
    }
    detail = ", ".join(f"{k}={v:.1e}" for k, v in errs.items())
    report(2, "noiseless recovery within 1e-3", max(errs.values()) <= 1e-3, detail)


def test_criterion_03_jacobian_fidelity_all_models():
    rng = np.random.default_rng(33)
    worst = 0.0
    for name in ("exponential", "alpha-pinene", "ricatti", "ricatti-unknown-tr",
                 "fhn", "linear2d", "blowfly"):
        m = get_model(name)
        if name == "blowfly":
            curve = dde_solve(m.delayed_field, m.theta_star, m.default_history(),
                              m.t_span[1], max_step=m.tau / 64)
            cs = make_condition_set(m, make_sine_basis(6, (m.tau, m.t_span[1])))
        else:
            curve = exact_trajectory(m, n=601, substeps=4)
            cs = make_condition_set(m, make_sine_basis(max(m.n_params + 2, 6), m.t_span))
        for _ in range(10):
            th = m.theta_star * (1.0 + 0.2 * rng.uniform(-1, 1, m.n_params))
            th = np.clip(th, m.theta_box[0], m.theta_box[1])
            J = eval_jacobian_theta(cs, curve, th).j_theta
            Jfd = np.empty_like(J)
            for r in range(m.n_params):
                h = 1e-6 * (1 + abs(th[r]))
                tp, tm = th.copy(), th.copy()
                tp[r] += h
                tm[r] -= h
                Jfd[:, r] = (
                    eval_conditions(cs, curve, tp).values
                    - eval_conditions(cs, curve, tm).values
                ) / (2 * h)
            rel = np.max(np.abs(J - Jfd)) / max(np.max(np.abs(Jfd)), 1e-12)
            worst = max(worst, rel)
    report(3, "analytic vs FD condition Jacobian", worst <= 1e-6, f"max rel err={worst:.1e}")


def test_criterion_04_condition_covariance_formula():
    m = get_model("linear2d")
    n, sigma = 200, 0.1
    obs0 = generate_data(m, n=n, sigma=0.0, seed=0)
    kv = uniform_knots(*m.t_span, 12)
    fit0 = spline_fit(obs0, kv)
    cs = make_condition_set(m, make_sine_basis(8, m.t_span), equations=(0, 1))
    C = linear_condition_matrices(cs, m.theta_star, fit0)

    # analytic covariance with the true noise level
    P = design_matrix(kv, obs0.times)
    G = np.linalg.inv(P.T @ P)
    V = sigma**2 * sum(Cj @ G @ Cj.T for Cj in C)

    # empirical covariance over fresh noise redraws (coefficients are linear
    # in the noise, and so are the conditions for this state-linear model)
    rng = np.random.default_rng(44)
    proj = np.linalg.solve(P.T @ P, P.T)
    es = []
    for _ in range(2000):
        noisy = obs0.values + sigma * rng.standard_normal(obs0.values.shape)
        coef = proj @ noisy
        es.append(sum(C[j] @ coef[:, j] for j in range(2)))
    emp = np.cov(np.asarray(es).T)
    rel = np.linalg.norm(emp - V) / np.linalg.norm(V)
    report(4, "condition covariance vs 2000 redraws", rel <= 0.10,
           f"relative Frobenius error={rel:.3f}")


def test_criterion_05_benchmark_table_reproduction_linear_network():
    # five-state linear network, (n, sigma) = (400, 3), 100 replicates
    m = get_model("alpha-pinene")
    refs = {"ts": 7.2e-3, "oc": 5e-4, "nls": 2e-4}
    cs = make_condition_set(m, uniform_bspline_testfuncs(8, (0.0, 40.0)))
    E = {"oc": [], "ts": [], "nls": []}
    for k in range(100):
        obs = generate_data(m, n=400, sigma=3.0, seed=(15, k))
        con = (obs.times[0], m.x0)
        kv = gcv_select(obs, range(8, 31, 2), constraint=con)
        fitc = spline_fit(obs, kv, constraint=con)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            E["oc"].append(np.sum((quiet_minimize(cs, fitc).theta - m.theta_star) ** 2))
            E["ts"].append(np.sum((ts_estimate(fitc, m).theta - m.theta_star) ** 2))
            E["nls"].append(
                np.sum(
                    (nls_estimate(obs, m, center=m.theta_star, starts=3, seed=(15, k)).theta
                     - m.theta_star) ** 2
                )
            )
    mse = {k: float(np.mean(v)) for k, v in E.items()}
    checks = {
        "order nls<=oc": mse["nls"] <= mse["oc"],
        "order oc<=ts": mse["oc"] <= mse["ts"],
        "oc band": in_band(mse["oc"], refs["oc"]),
        "ts band": in_band(mse["ts"], refs["ts"]),
        "nls band": in_band(mse["nls"], refs["nls"]),
    }
    detail = (
        f"mse nls={mse['nls']:.2e} oc={mse['oc']:.2e} ts={mse['ts']:.2e}; "
        + ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items())
        + "; ts and nls beat their reference bands (see decision notes)"
    )
    report(5, "benchmark row, linear network (400,3)", all(checks.values()), detail)


def _scalar_quadratic_knots():
    # smoothing knots that admit a derivative break at the input switch time
    interior = np.sort(np.concatenate([[5.0] * 3]))
    return interior


def test_criterion_06_benchmark_row_scalar_quadratic_known_switch():
    m = get_model("ricatti")
    a, b = m.t_span
    ref_oc = 2.7e-3
    cs = make_condition_set(m, make_sine_basis(8, m.t_span))
    from ocestim.smoother import gcv_score

    def smooth(obs):
        best = None
        for k in range(6, 26, 2):
            interior = np.sort(np.concatenate([np.linspace(a, b, k + 2)[1:-1], [5.0] * 3]))
            kv = KnotVector(a=a, b=b, interior=interior, degree=3)
            s = gcv_score(obs, kv)
            if best is None or s < best[0]:
                best = (s, kv)
        return spline_fit(obs, best[1])

    E_oc, E_ts = [], []
    for k in range(100):
        obs = generate_data(m, n=400, sigma=0.2, seed=(123, k))
        fitc = smooth(obs)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            E_oc.append(np.sum((quiet_minimize(cs, fitc).theta - m.theta_star) ** 2))
            E_ts.append(np.sum((ts_estimate(fitc, m).theta - m.theta_star) ** 2))
    mse_oc, mse_ts = float(np.mean(E_oc)), float(np.mean(E_ts))
    checks = {"oc band": in_band(mse_oc, ref_oc), "ts<oc": mse_ts < mse_oc}
    detail = (
        f"mse oc={mse_oc:.2e} (ref {ref_oc:.1e}) ts={mse_ts:.2e}; "
        + ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items())
        + "; ts ordering not reproduced (see decision notes)"
    )
    report(6, "benchmark row, scalar quadratic (400,0.2)", all(checks.values()), detail)


def test_criterion_07_unknown_switch_time():
    m = get_model("ricatti-unknown-tr")
    a, b = m.t_span
    ref_tr = 1.39e-2
    kv = KnotVector(a=a, b=b, interior=np.linspace(a, b, 17)[1:-1], degree=3)
    cs = make_condition_set(m, make_sine_basis(8, m.t_span))
    finite, errs = 0, []
    for k in range(100):
        obs = generate_data(m, n=400, sigma=0.2, seed=(77, k))
        fitc = spline_fit(obs, kv)
        try:
            est = quiet_minimize(cs, fitc)
        except Exception:
            continue
        if np.all(np.isfinite(est.theta)):
            finite += 1
            errs.append((est.theta - m.theta_star) ** 2)
    mse_tr = float(np.mean(np.asarray(errs), axis=0)[3])

    obs = generate_data(m, n=400, sigma=0.2, seed=(77, 0))
    try:
        ts_estimate(spline_fit(obs, kv), m)
        ts_fails = False
    except EstimatorFailure:
        ts_fails = True

    checks = {
        "finite>=90%": finite >= 90,
        "tr band": in_band(mse_tr, ref_tr),
        "ts structured failure": ts_fails,
    }
    detail = (
        f"finite={finite}/100, mse(tr)={mse_tr:.2e} (ref {ref_tr:.1e}); "
        + ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items())
        + "; tr accuracy beats the reference band (see decision notes)"
    )
    report(7, "unknown switch-time estimation", all(checks.values()), detail)


def test_criterion_08_interval_coverage():
    m = get_model("exponential")
    cs = make_condition_set(m, make_sine_basis(5, m.t_span))
    hits = 0
    for k in range(500):
        obs = generate_data(m, n=400, sigma=0.1, seed=(88, k))
        fitc = spline_fit(obs, gcv_select(obs, [6, 10, 14]))
        est = quiet_minimize(cs, fitc, alpha=0.05)
        lo, hi = est.conf_int[0]
        hits += lo <= m.theta_star[0] <= hi
    cov = hits / 500.0
    report(8, "95% interval coverage, 500 replicates", 0.91 <= cov <= 0.99,
           f"coverage={cov:.1%}")


def test_criterion_09_terminal_stationarity_augmentation():
    m = get_model("alpha-pinene")
    interior = np.concatenate([np.linspace(0, 20, 9)[1:-1], [40.0, 60.0, 80.0]])
    kv = KnotVector(a=0.0, b=100.0, interior=interior, degree=3)
    cs = make_condition_set(m, make_bspline_testfuncs(kv, 8))
    cs1 = make_condition_set(
        m, make_bspline_testfuncs(kv, 8, active_right=True), neumann=np.zeros(5)
    )
    e0, e1 = [], []
    for k in range(100):
        obs = generate_data(m, n=50, sigma=8.0, seed=(9, k))
        fitc = spline_fit(obs, gcv_select(obs, range(4, 21, 2)))
        e0.append(np.sum((quiet_minimize(cs, fitc).theta - m.theta_star) ** 2))
        e1.append(np.sum((quiet_minimize(cs1, fitc).theta - m.theta_star) ** 2))
    m0, m1 = float(np.mean(e0)), float(np.mean(e1))
    report(9, "terminal-derivative member helps at (50,8)", m1 <= m0,
           f"mse augmented={m1:.3e} <= plain={m0:.3e}")


def test_criterion_10_delay_model_round_trip():
    m = get_model("blowfly")
    sigma = 0.05 * trajectory_scale(m)
    abc_reference = np.array([7.39, 365.03, 0.15])
    thetas, covered = [], 0
    for k in range(50):
        obs = generate_data(m, n=75, sigma=sigma, seed=(5, k))
        fitc = spline_fit(obs, gcv_select(obs, range(10, 37, 4)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = oc.select_L(
                m, fitc, range(9, 13),
                make_set=lambda L: make_condition_set(
                    m, make_sine_basis(L, (m.tau, m.t_span[1]))
                ),
            )
        thetas.append(est.theta)
        ci = est.conf_int
        covered += ci is not None and np.all(
            (abc_reference >= ci[:, 0]) & (abc_reference <= ci[:, 1])
        )
    mean_rel = np.abs(np.mean(thetas, axis=0) - m.theta_star) / m.theta_star
    checks = {
        "mean within 15%": bool(np.all(mean_rel <= 0.15)),
        "reference in CI >= 80%": covered >= 40,
    }
    detail = (
        f"mean rel err={np.array2string(mean_rel, precision=3)}, "
        f"reference covered {covered}/50; "
        + ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items())
    )
    report(10, "delay-model round trip", all(checks.values()), detail)


def test_criterion_11_bias_decay_in_condition_count():
    m = get_model("ricatti")
    curve = exact_trajectory(m, n=2001, substeps=20)
    p, d = m.n_params, m.dim
    Ls = list(range(p + 1, 2 * d * p + 1))
    errs = []
    for L in Ls:
        cs = make_condition_set(m, make_sine_basis(L, m.t_span))
        errs.append(np.linalg.norm(quiet_minimize(cs, curve).theta - m.theta_star))
    ok = all(errs[i + 1] <= errs[i] + 1e-8 for i in range(len(errs) - 1))
    detail = ", ".join(f"L={L}:{e:.1e}" for L, e in zip(Ls, errs))
    report(11, "bias non-increasing in L on exact curve", ok, detail)
