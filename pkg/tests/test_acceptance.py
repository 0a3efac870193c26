"""End-to-end acceptance criteria at their stated tolerances.

Each test carries a label; ``conftest.py`` prints one PASS/FAIL line per
label at the end of the session.
"""

import filecmp
import math
import time

import numpy as np
import pytest

from _oracles import brute_force_w1, euler_generator_oracle, random_affine_model, random_polynomial_V
from apsde import (
    Box,
    LyapunovFunction,
    MetricConfig,
    RateFunction,
    TimeGrid,
    convergence_check,
    law_trajectory,
    l2_bound_certificate,
    lv_pair,
    lv_shifted,
    lv_single,
    rho_distance,
    second_moment_trajectory,
    simulate_coupled,
    simulate_ensemble,
    supermartingale_probe,
    tail_bound_check,
    verify_dissipativity,
)
from apsde.almostperiod import ApScanConfig, burned_in_reference, coefficient_crosscheck, scan_law_ap
from apsde.cli import example_config, main, run_apscan, run_certificate
from apsde.measure import EmpiricalLaw, w1_exact_1d
from apsde.registry import (
    EXAMPLES,
    check_diagonal_drift_bound,
    check_scalar_derivative_bounds,
    example3_model,
    example3_periodic_model,
    get_example,
    ou_model,
)

H = 2.0**-8


def acceptance(label):
    def deco(fn):
        fn.acceptance_label = label
        fn.acceptance_detail = ""
        return fn

    return deco


def _note(fn, text):
    fn.acceptance_detail = text


# -- A01 -----------------------------------------------------------------------


@acceptance("A01 generator oracle")
def test_generators_match_one_step_euler_oracle():
    start = time.time()
    worst = 0.0
    for k in range(20):
        rng = np.random.default_rng(1000 + k)
        d, m = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        model, V = random_affine_model(rng, d, m), random_polynomial_V(rng, d)
        t = rng.uniform(-5, 5)
        x, y = rng.uniform(-1.5, 1.5, d), rng.uniform(-1.5, 1.5, d)
        s1, s2 = rng.uniform(0, 5, 2)
        cases = [
            (lv_single(V, model, t, x), euler_generator_oracle(V, model, t, x, seed=k)),
            (lv_pair(V, model, t, x, y), euler_generator_oracle(V, model, t, x, y, seed=k)),
            (lv_shifted(V, model, t, s1, s2, x, y), euler_generator_oracle(V, model, t, x, y, s1, s2, seed=k)),
        ]
        for exact, (est, se, bias) in cases:
            allowed = 3 * se + bias
            worst = max(worst, abs(est - exact) / allowed)
            assert abs(est - exact) <= allowed, (k, exact, est, se, bias)
    elapsed = time.time() - start
    _note(test_generators_match_one_step_euler_oracle, f"worst |err|/(3se+bias)={worst:.2f}, {elapsed:.0f}s")
    assert elapsed < 120


# -- A02 -----------------------------------------------------------------------


@acceptance("A02 trivial-zero identities")
def test_trivial_zero_identities():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(10):
        d, m = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        model = random_affine_model(rng, d, m)
        V = random_polynomial_V(rng, d)
        t = rng.uniform(-10, 10, 100)
        x, y = rng.uniform(-2, 2, (100, d)), rng.uniform(-2, 2, (100, d))
        diag = lv_pair(V, model, t, x, x)
        gap = lv_shifted(V, model, t, 0.0, 0.0, x, y) - lv_pair(V, model, t, x, y)
        worst = max(worst, float(np.max(np.abs(diag))), float(np.max(np.abs(gap))))
    _note(test_trivial_zero_identities, f"max deviation {worst:.1e} on 1000 points")
    assert worst <= 1e-12


# -- A03 -----------------------------------------------------------------------


@acceptance("A03 example hypotheses")
def test_example_hypotheses_hold_on_samples():
    n = 100_000
    margins = {}
    ex1 = get_example("example1")
    m1, box1 = ex1.model(), ex1.box()
    margins["ex1 pair c(r)=r"] = verify_dissipativity(ex1.lyapunov(), m1, RateFunction.linear(1.0), "pair", box1, n, 1)
    margins["ex1 derivative bounds"] = check_scalar_derivative_bounds(m1, 1.0, box1, n, 2)
    ex2 = get_example("example2")
    m2, box2 = ex2.model(), ex2.box()
    margins["ex2 diagonal drift"] = check_diagonal_drift_bound(m2, box2, n, 3)
    margins["ex2 LV<=0 outside sqrt2"] = verify_dissipativity(
        ex2.lyapunov(), m2, None, "single", box2, n, 4, min_radius=math.sqrt(2)
    )
    ex3 = get_example("example3")
    margins["ex3 pair c(r)=2r"] = verify_dissipativity(
        ex3.lyapunov(), ex3.model(), RateFunction.linear(2.0), "pair", ex3.box(), n, 5
    )
    worst = {k: r.worst_value for k, r in margins.items()}
    _note(test_example_hypotheses_hold_on_samples, "worst margins " + ", ".join(f"{k}: {v:.1e}" for k, v in worst.items()))
    for k, r in margins.items():
        assert r.samples_used >= n, k
        assert r.worst_value <= 1e-8, (k, r.worst_value)


# -- A04 -----------------------------------------------------------------------


@acceptance("A04 supermartingale decay")
def test_supermartingale_decay_for_registry_examples():
    grid = TimeGrid.span(0.0, 20.0, H)
    notes = []
    for name, spec in EXAMPLES.items():
        model = spec.model()
        for a, b in spec.init_pairs:
            pair = simulate_coupled(model, model, {"point": list(a)}, {"point": list(b)}, grid, 4096, 11, record_every=8)
            rep = supermartingale_probe(spec.lyapunov(), pair, threshold=2.0)
            notes.append(f"{name}:{len(rep.violations)}")
            assert rep.passed, (name, rep.violations[:3])
    ou = ou_model(1.0, 1.0)
    pair = simulate_coupled(ou, ou, {"point": [0.0]}, {"point": [1.0]}, grid, 4096, 12, record_every=8)
    traj = supermartingale_probe(LyapunovFunction.norm2(1), pair).trajectory
    err = np.abs(traj.mean_value - np.exp(-2 * traj.times))
    allowed = 3 * traj.std_error + H
    notes.append(f"ou max |mean - e^-2t| {err.max():.1e}")
    _note(test_supermartingale_decay_for_registry_examples, "violations " + ", ".join(notes))
    assert np.all(err <= allowed)


# -- A05 -----------------------------------------------------------------------


@acceptance("A05 merging and merge time")
def test_example1_merges_before_bound():
    model = get_example("example1").model()
    grid = TimeGrid.span(0.0, 40.0, H)
    ea, eb = simulate_coupled(model, model, {"point": [0.0]}, {"point": [2.0]}, grid, 4096, 21, record_every=8)
    rep = convergence_check(
        law_trajectory(ea), law_trajectory(eb), epsilon=0.01, b=1.0, r=2.0, c=RateFunction.linear(1.0), a=1.0, coupled=True
    )
    _note(test_example1_merges_before_bound, f"crossing {rep.crossing_time} <= T={rep.merge_time_bound:g}")
    assert rep.merge_time_bound == pytest.approx(801.0)
    assert rep.crossing_time is not None and rep.crossing_time <= rep.merge_time_bound
    assert rep.crossing_time < 5.0
    assert rep.stays_below


# -- A06 -----------------------------------------------------------------------


@acceptance("A06 martingale tail bound")
def test_example1_tail_bound():
    model = get_example("example1").model()
    grid = TimeGrid.span(0.0, 20.0, H)
    pair = simulate_coupled(model, model, {"point": [0.0]}, {"point": [0.5]}, grid, 4096, 31, record_every=1)
    V = LyapunovFunction.norm2(1)
    parts = []
    for eps in (0.5, 1.0, 2.0):
        rep = tail_bound_check(V, pair, eps, lower_a=1.0)
        parts.append(f"eps={eps}: {rep.frequency:.3f}<={rep.bound:.3f}")
        assert rep.bound == pytest.approx(0.5 / eps)
        assert rep.frequency <= rep.bound + 3 * rep.std_error
    _note(test_example1_tail_bound, ", ".join(parts))


# -- A07 -----------------------------------------------------------------------


@acceptance("A07 L2 certificate")
def test_l2_certificates_cover_empirical_moments():
    parts = []
    for name, start in (("example2", [0.0, 0.0]), ("example3", [1.0, 1.0])):
        spec = get_example(name)
        cfg = {
            "model": name,
            "R": spec.single_radius,
            "a": 1.0,
            "b0": 1.0,
            "c0": 0.0,
            "Mbar": spec.Mbar,
            "init": {"point": start},
            "verify": {"n_samples": 20_000},
            "simulate": {"grid": {"t0": 0.0, "h": H, "horizon": 40.0}, "N": 4096, "record_every": 8},
        }
        rep = run_certificate(cfg, 41, threads=1)
        parts.append(f"{name}: {rep['empirical_running_max']:.3f}<={rep['certificate']:.3f}")
        assert math.isfinite(rep["certificate"])
        assert all(c["pass"] for c in rep["verification"]), rep["verification"]
        assert rep["empirical_running_max"] <= rep["certificate"]
        assert rep["pass"]
    assert l2_bound_certificate(None, None, math.sqrt(2), 1.0, 1.0, 0.0, 2.0, 0.0) == pytest.approx(4.0)
    _note(test_l2_certificates_cover_empirical_moments, ", ".join(parts))


# -- A08 -----------------------------------------------------------------------


@acceptance("A08 metric correctness")
def test_metric_matches_brute_force_and_axioms():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        a = rng.normal(size=n) * rng.uniform(0.1, 10)
        b = rng.normal(size=n) + rng.uniform(-3, 3)
        worst = max(worst, abs(w1_exact_1d(a, b) - brute_force_w1(a, b)))
    assert worst <= 1e-12
    cfg = MetricConfig(n_projections=16)
    for _ in range(100):
        laws = [EmpiricalLaw(rng.normal(size=(int(rng.integers(1, 20)), 2)) + rng.normal(size=2)) for _ in range(3)]
        p, q, r = laws
        assert rho_distance(p, p, cfg) == 0.0
        assert rho_distance(p, q, cfg) == pytest.approx(rho_distance(q, p, cfg), abs=1e-12)
        assert rho_distance(p, q, cfg) >= 0
        assert rho_distance(p, r, cfg) <= rho_distance(p, q, cfg) + rho_distance(q, r, cfg) + 1e-12
    _note(test_metric_matches_brute_force_and_axioms, f"max |W1 - brute force| {worst:.1e}")


# -- A09 -----------------------------------------------------------------------


@acceptance("A09a periodic law almost period")
def test_periodic_control_finds_two_pi():
    step = 8 * H
    cfg = ApScanConfig(0.05, 5.0, 7.5, step, t_window=(0.0, 20.0), t_step=0.5)
    ref = burned_in_reference(example3_periodic_model(), {"point": [1.0, 1.0]}, 27.5, H, 10_000, 51, burn_in=20.0, record_every=8)
    rep = scan_law_ap(ref, cfg)
    k = int(np.argmin(np.abs(rep.taus - 2 * math.pi)))
    tau, disc = float(rep.taus[k]), float(rep.discrepancies[k])
    _note(test_periodic_control_finds_two_pi, f"tau={tau} discrepancy={disc:.2e}")
    assert abs(tau - 2 * math.pi) <= step / 2
    assert disc < 0.05
    assert any(abs(t - tau) < 1e-12 for t, _ in rep.found_taus)


@acceptance("A09b quasi-periodic law and coefficient almost periods")
def test_quasi_periodic_law_periods_are_coefficient_periods():
    start = time.time()
    cfg = example_config("example3", 42)["apscan"]
    cfg.pop("aap")
    out = run_apscan(cfg, 42, threads=1)
    law, xc = out["law_scan"], out["crosscheck"]
    elapsed = time.time() - start
    _note(
        test_quasi_periodic_law_periods_are_coefficient_periods,
        f"{len(law['taus'])} law taus, max_gap {law['max_gap']}, coefficient levels {xc['recorded_levels']}, {elapsed:.0f}s",
    )
    assert elapsed < 600
    assert law["taus"] and law["max_gap"] is not None and math.isfinite(law["max_gap"])
    assert law["scanned_range"] == [1.0, 100.0]
    for name, level in xc["recorded_levels"].items():
        assert level < 0.15, (name, level)


# -- A10 -----------------------------------------------------------------------


@acceptance("A10 reproducible bundles")
def test_example_bundles_are_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    codes = [
        main(["example", "example1", "--seed", "42", "--out", str(a), "--threads", "1"]),
        main(["example", "example1", "--seed", "42", "--out", str(b), "--threads", "2"]),
    ]
    capsys.readouterr()
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    compared = [n for n in names if n != "meta.json"]
    match, mismatch, errors = filecmp.cmpfiles(a, b, compared, shallow=False)
    _note(test_example_bundles_are_byte_identical, f"{len(match)} files identical, exit codes {codes}")
    assert not mismatch and not errors
    assert codes == [0, 0]
