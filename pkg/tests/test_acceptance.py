"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import time
from dataclasses import replace
from fractions import Fraction as F

import numpy as np

from singtime import cli, spde
from singtime import criticality as crit
from singtime import experiments as ex
from singtime.fractal import (
    FractalSet,
    cantor_prefix,
    dimension_fit,
    hausdorff_premeasure,
    hausdorff_premeasure_bruteforce,
    measure_gap_check,
)
from singtime.noise import single_mode

LOG2_LOG3 = math.log(2) / math.log(3)


def test_01_criticality_table(acceptance, capsys):
    t0 = time.perf_counter()
    cli.main(["nse-table"])
    first = capsys.readouterr().out
    cli.main(["nse-table"])
    second = capsys.readouterr().out
    rep = crit.excess(crit.Setting(4, 0, (crit.NonlinearityTerm(1, F(3, 4)),), 2))
    d44 = crit.serrin_delta(4, 4).delta0
    endpoint = crit.serrin_delta(4, 6)
    elapsed = time.perf_counter() - t0
    rows = first.splitlines()
    ok = (
        first == second
        and rep.exc == F(1, 4) and rep.dimension_bound == F(1, 2) and rep.ell == 2
        and d44 == F(1, 2) and endpoint.delta0 == 0 and endpoint.serrin_sum == 1
        and rows[1].endswith("= 1/4 | 1/2")
        and "(4,4) -> 1/2" in rows[2] and "(4,6) -> 0" in rows[2]
    )
    acceptance(1, "criticality table", ok, f"Exc={rep.exc} bound={rep.dimension_bound} delta0(4,4)={d44} "
               f"delta0(4,6)={endpoint.delta0}", elapsed, 0.1)


def test_02_q_independence(acceptance):
    t0 = time.perf_counter()
    excs = {q: crit.excess(crit.nse_weak_setting(q).setting(2)).exc for q in (F(5, 2), 3, 4, 5)}
    elapsed = time.perf_counter() - t0
    ok = all(v == F(1, 4) and isinstance(v, F) for v in excs.values())
    acceptance(2, "q-independence", ok, ", ".join(f"q={q}: {v}" for q, v in excs.items()), elapsed, 0.1)


def test_03_cantor_oracle(acceptance):
    t0 = time.perf_counter()
    fit = dimension_fit(cantor_prefix(12), [3.0**-k / 2 for k in range(1, 13)])
    elapsed = time.perf_counter() - t0
    ok = (abs(fit.dimension - LOG2_LOG3) <= 0.02 and fit.r_squared >= 0.999
          and fit.counts == [2**k for k in range(1, 13)])
    acceptance(3, "Cantor oracle", ok, f"dim={fit.dimension:.6f} r2={fit.r_squared:.6f} counts=2^k", elapsed, 1)


def test_04_hausdorff_dp_oracle(acceptance):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        m = int(rng.integers(1, 13))
        pts = np.sort(rng.uniform(0, 1, 2 * m))
        ivs = [(pts[2 * i], pts[2 * i] if rng.random() < 0.3 else pts[2 * i + 1]) for i in range(m)]
        A = FractalSet.from_intervals(ivs)
        s = float(rng.choice([0.0, 1.0, rng.uniform(0, 1)]))
        eta = float(rng.uniform(0.005, 0.6))
        dp = hausdorff_premeasure(A, s, eta).value
        bf = hausdorff_premeasure_bruteforce(A, s, eta)
        worst = max(worst, abs(dp - bf) / max(abs(bf), 1e-300))
    elapsed = time.perf_counter() - t0
    acceptance(4, "Hausdorff DP oracle", worst <= 1e-12, f"max rel diff {worst:.2e} over 200 sets", elapsed, 30)


def test_05_measure_gap(acceptance):
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    ok, min_margin = True, math.inf
    for _ in range(50):
        pts = rng.uniform(0, 1, int(rng.integers(2, 40)))
        gap = float(np.min(np.diff(np.sort(pts))))
        etas = [gap / 4 / 2**j for j in range(9)]
        s = float(rng.uniform(0, 0.9))
        t = float(rng.uniform(s + 0.05, 1.0))
        res = measure_gap_check(FractalSet.from_points(pts), s, t, etas)
        required = 2 ** ((t - s) * 8 * 0.9)
        ok &= (not res["bounded"]) or res["decay"] >= required * (1 - 1e-12)
        ok &= res["bounded"]
        min_margin = min(min_margin, res["decay"] / required)
    elapsed = time.perf_counter() - t0
    acceptance(5, "measure gap", ok, f"min decay/required = {min_margin:.4f} over 50 sets", elapsed, 5)


def test_06_helmholtz(acceptance):
    rng = np.random.default_rng(6)
    g = spde.get_grid(2, 64)
    t0 = time.perf_counter()
    idem = grad = 0.0
    for _ in range(100):
        f = g.to_spectral(rng.standard_normal((2,) + g.shape))
        p1 = spde.helmholtz_project(f)
        p2 = spde.helmholtz_project(p1)
        idem = max(idem, math.sqrt(g.norm2(p2 - p1) / g.norm2(p1)))
        phi = g.to_spectral(rng.standard_normal(g.shape))
        gphi = g.ik * phi
        grad = max(grad, math.sqrt(g.norm2(spde.helmholtz_project(gphi)) / g.norm2(gphi)))
    elapsed = time.perf_counter() - t0
    acceptance(6, "Helmholtz", idem <= 1e-12 and grad <= 1e-12,
               f"idempotence {idem:.2e}, gradient {grad:.2e}", elapsed, 5)


def test_07_heat_energy_identity(acceptance):
    t0 = time.perf_counter()
    res = spde.simulate(spde.SimConfig(n=32, dt=1e-3, t_end=1.0, nonlinear=False, noise_kind="none",
                                       u0_kind="random_shell"))
    elapsed = time.perf_counter() - t0
    E0 = res.ledger.E0
    rel = float(np.max(np.abs(res.ledger.column("residual")))) / E0
    acceptance(7, "heat energy identity", rel <= 1e-8 and len(res.ledger.rows) == 1001,
               f"max |residual|/E0 = {rel:.2e}", elapsed, 10)


def test_08_convective_neutrality(acceptance):
    rng = np.random.default_rng(8)
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(50):
        st = spde.random_divergence_free(2, 32, rng)
        eps = (0.0, 0.02, 0.1)[i % 3]
        B = spde.nonlinear_term(st.u_hat, eps, dealias=True)
        worst = max(worst, abs(st.grid.inner(B, st.u_hat)) / spde.h1_norm2(st.u_hat))
    elapsed = time.perf_counter() - t0
    acceptance(8, "convective neutrality", worst <= 1e-10, f"max |<B,u>|/|u|_H1^2 = {worst:.2e}", elapsed, 10)


def test_09_transport_energy_law(acceptance):
    h = 2.5e-4
    base = spde.SimConfig(n=32, dt=h, t_end=0.1, noise_kind="kraichnan", noise_k_max=2,
                          u0_kind="random_shell", scheme="milstein")
    t0 = time.perf_counter()
    inc = spde.brownian_increments(1, 0, base.n_steps, len(base.noise_field()), h)
    residuals, drift_zero = [], True
    for f in (4, 2, 1):
        res = spde.simulate(replace(base, dt=h * f), increments=spde.coarsen_increments(inc, f))
        residuals.append(abs(res.ledger.final_residual))
        drift_zero &= bool(np.all(res.ledger.column("drift_cum") == 0.0))
    elapsed = time.perf_counter() - t0
    orders = [math.log2(residuals[i] / residuals[i + 1]) for i in range(2)]
    acceptance(9, "transport energy law", min(orders) >= 0.9 and drift_zero,
               f"residuals {', '.join(f'{r:.2e}' for r in residuals)}; orders "
               f"{orders[0]:.2f}, {orders[1]:.2f}; drift channel zero: {drift_zero}", elapsed, 60)


def _mode_state(g, k):
    kn = math.hypot(*k)
    e = (-k[1] / kn, k[0] / kn)
    kk = k if k[1] > 0 or (k[1] == 0 and k[0] > 0) else (-k[0], -k[1])
    u_hat = np.zeros((2,) + g.spectral_shape, dtype=complex)
    for i in range(2):
        u_hat[(i, kk[0] % g.n, kk[1])] = e[i]
    return g.to_spectral(g.to_physical(u_hat))


def test_10_ito_correction(acceptance):
    rng = np.random.default_rng(10)
    g = spde.get_grid(2, 16)
    t0 = time.perf_counter()
    worst = 0.0
    count = 0
    while count < 20:
        k = tuple(int(c) for c in rng.integers(-4, 5, 2))
        if k == (0, 0):
            continue
        theta = rng.uniform(0, 2 * math.pi)
        sig = np.array([math.cos(theta), math.sin(theta)]) * rng.uniform(0.5, 2.0)
        amp = float(np.linalg.norm(sig))
        field = single_mode(2, (0, 0), tuple(sig / amp), amplitude=amp)
        u_hat = _mode_state(g, k)
        Au = spde.ito_correction(u_hat, field)
        expected = -2 * math.pi**2 * float(sig @ np.array(k)) ** 2 * u_hat
        # normalise by the operator scale so near-orthogonal sigma, k stay well conditioned
        scale = 2 * math.pi**2 * amp**2 * (k[0] ** 2 + k[1] ** 2) * float(np.max(np.abs(u_hat)))
        worst = max(worst, float(np.max(np.abs(Au - expected))) / scale)
        count += 1
    elapsed = time.perf_counter() - t0
    acceptance(10, "Ito correction oracle", worst <= 1e-12, f"max rel error {worst:.2e} over 20 modes", elapsed, 1)


def test_11_blowup_oracle(acceptance):
    pairs = [(1.0, 10.0), (2.0, 50.0), (0.5, 4.0), (3.0, 1e6), (1.5, 2.0), (0.25, 100.0), (4.0, 8.0),
             (0.8, 1e3), (1.2, 3.0), (2.5, 1e9)]
    dt = 1e-3
    t0 = time.perf_counter()
    errs = [abs(ex.detect_lifetime(ex.scalar_surrogate(x0, dt, 5.0), k, "abs") - (1 / x0 - 1 / k)) for x0, k in pairs]
    elapsed = time.perf_counter() - t0
    acceptance(11, "blow-up oracle", max(errs) <= dt, f"max |tau - (1/x0 - 1/k)| = {max(errs):.2e}, dt = {dt}",
               elapsed, 1)


def test_12_tail_exponent_self_test(acceptance):
    setting = crit.Setting(4, 0, (crit.NonlinearityTerm(1, F(3, 4)),))
    rng = np.random.default_rng(12)
    t0 = time.perf_counter()
    samples = rng.random(10_000) ** (1 / float(4 * crit.excess(setting).exc))
    est = ex.estimate_from_samples(samples, 1.0, [0.01, 0.1, 1.0])
    chk = ex.tail_exponent_check(est, setting)
    elapsed = time.perf_counter() - t0
    ok = 0.9 <= chk.fitted_exponent <= 1.1 and chk.verdict == "PASS" and chk.predicted_exponent == 1
    acceptance(12, "tail exponent self-test", ok,
               f"fitted {chk.fitted_exponent:.4f} (ci {chk.ci:.4f}), predicted {chk.predicted_exponent}, "
               f"{chk.verdict}", elapsed, 5)


def test_13_proxy_pipeline(acceptance):
    scales = [3.0**-k / 2 for k in range(1, 9)]
    epsilons = (0.1, 0.3, 0.5)
    t0 = time.perf_counter()
    clean = ex.cantor_fixture(8, 40, background=0.0, seed=0)
    dims = {e: ex.singular_proxy(*clean, 1.0, e, scales) for e in epsilons}
    noisy = ex.cantor_fixture(8, 40, background=0.05, seed=1)
    flagged = [ex.singular_proxy(*noisy, 1.0, e, scales).flagged for e in epsilons]
    elapsed = time.perf_counter() - t0
    target = FractalSet(cantor_prefix(8).intervals, (0.0, 1.0))
    ok = all(abs(r.dimension.dimension - LOG2_LOG3) <= 0.03 and r.predicted_bound == F(1, 2)
             and r.flagged == target for r in dims.values())
    nested = flagged[0].contains(flagged[1]) and flagged[1].contains(flagged[2]) and flagged[2].contains(target)
    acceptance(13, "proxy pipeline", ok and nested,
               "dims " + ", ".join(f"eps={e}: {r.dimension.dimension:.4f}" for e, r in dims.items())
               + f"; bound {dims[0.5].predicted_bound}; nesting {nested} "
               f"({', '.join(str(len(f)) for f in flagged)} components)", elapsed, 10)


def test_14_determinism(acceptance, tmp_path, capsys):
    sim = ["simulate", "--set", "n=16", "--set", "t_end=0.05", "--set", "noise.kind=kraichnan",
           "--set", "noise.amplitude=0.3", "--set", "u0.kind=random_shell", "--seed", "11", "--quiet"]
    life = ["lifetime", "--set", "n=16", "--set", "t_end=0.05", "--set", "noise.kind=kraichnan",
            "--set", "u0.kind=random_shell", "--ensemble", "4", "--threshold", "1.5,10",
            "--horizons", "0.01,0.05", "--seed", "11", "--quiet"]
    surrogate = ["lifetime", "--surrogate", "1", "--sigma", "0.5", "--ensemble", "40", "--threshold", "10,100",
                 "--horizons", "0.5,1,2", "--seed", "11", "--quiet"]
    t0 = time.perf_counter()
    codes = []
    for run in ("a", "b"):
        codes.append(cli.main(sim + ["--out", str(tmp_path / run / "sim")]))
        codes.append(cli.main(life + ["--out", str(tmp_path / run / "life")]))
        codes.append(cli.main(surrogate + ["--out", str(tmp_path / run / "surr")]))
    elapsed = time.perf_counter() - t0
    capsys.readouterr()
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.csv"))
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    acceptance(14, "determinism", same and codes == [0] * 6 and len(files) == 9,
               f"{len(files)} CSV files byte-identical: {same}", elapsed, 60)
