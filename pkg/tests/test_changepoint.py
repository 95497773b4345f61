import numpy as np
import pytest

from tscl.changepoint import (
    ChangePoint,
    Interval,
    NotConfig,
    auto_threshold,
    best_split,
    detect_not,
    estimate_sigma,
    fit_linear_rss,
    glr_statistic,
)


def oracle_rss(series, start, end):
    """Independent residual computation: explicit lstsq on the raw rows."""
    y = np.asarray(series, dtype=float)[start:end]
    t = np.arange(start + 1, end + 1, dtype=float)
    A = np.column_stack([np.ones_like(t), t])
    coef, _, _, _ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return coef, float(resid @ resid)


def oracle_glr(series, start, end, split, sigma):
    _, full = oracle_rss(series, start, end)
    _, left = oracle_rss(series, start, split)
    _, right = oracle_rss(series, split, end)
    return (full - left - right) / sigma**2


def piecewise_signal(n, breaks, slopes, jumps=None, start=0.0):
    slope_at = np.zeros(n)
    bounds = [0] + list(breaks) + [n]
    for j in range(len(bounds) - 1):
        slope_at[bounds[j] : bounds[j + 1]] = slopes[j]
    y = start + np.concatenate([[0.0], np.cumsum(slope_at)[:-1]])
    if jumps:
        for b, jump in zip(breaks, jumps):
            y[b:] += jump
    return y


def test_fit_exact_line():
    # y at time t is 2t + 1; the row at position i carries time i + 1
    y = 2.0 * np.arange(1, 31) + 1.0
    for s, e in ((0, 30), (5, 12), (17, 19)):
        intercept, slope, rss = fit_linear_rss(y, s, e)
        assert intercept == pytest.approx(1.0, abs=1e-9)
        assert slope == pytest.approx(2.0, rel=1e-12)
        assert rss == pytest.approx(0.0, abs=1e-9)


def test_fit_two_points_interpolates():
    y = np.array([3.0, -1.0, 7.0, 2.0])
    intercept, slope, rss = fit_linear_rss(y, 1, 3)
    assert rss == pytest.approx(0.0, abs=1e-12)
    # line passes through both rows (times 2 and 3)
    assert intercept + slope * 2 == pytest.approx(-1.0)
    assert intercept + slope * 3 == pytest.approx(7.0)


def test_fit_hand_solved_case():
    intercept, slope, rss = fit_linear_rss(np.array([0.0, 1.0, 0.0]), 0, 3)
    assert slope == pytest.approx(0.0, abs=1e-12)
    assert intercept == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert rss == pytest.approx(2.0 / 3.0, rel=1e-12)


def test_fit_matches_oracle_on_random_windows():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(6, 120))
        y = rng.normal(size=n) + rng.normal() * np.arange(n)
        s = int(rng.integers(0, n - 2))
        e = int(rng.integers(s + 2, n + 1))
        intercept, slope, rss = fit_linear_rss(y, s, e)
        coef, rss_o = oracle_rss(y, s, e)
        assert intercept == pytest.approx(coef[0], rel=1e-8, abs=1e-8)
        assert slope == pytest.approx(coef[1], rel=1e-8, abs=1e-8)
        assert rss == pytest.approx(rss_o, rel=1e-9, abs=1e-9)


def test_fit_argument_errors():
    y = np.arange(10.0)
    with pytest.raises(ValueError):
        fit_linear_rss(y, 3, 4)
    with pytest.raises(ValueError):
        fit_linear_rss(y, -1, 5)
    with pytest.raises(ValueError):
        fit_linear_rss(y, 0, 11)


def test_glr_zero_on_exact_line():
    y = 0.7 * np.arange(40.0) - 3.0
    for c in (5, 17, 30):
        assert glr_statistic(y, 0, 40, c, sigma=1.0) == 0.0


def test_glr_tent_apex_equals_full_rss():
    y = np.array([0.0, 1, 2, 3, 4, 4, 3, 2, 1, 0])
    _, full_rss = oracle_rss(y, 0, 10)
    got = glr_statistic(y, 0, 10, 5, sigma=1.0)
    assert got == pytest.approx(full_rss, rel=1e-12)
    # the two half fits are exact, so the full-line residual is the whole gain
    assert full_rss > 1.0


def test_glr_apex_dominates_other_splits():
    y = np.array([0.0, 1, 2, 3, 4, 4, 3, 2, 1, 0])
    apex = glr_statistic(y, 0, 10, 5, sigma=1.0)
    for c in range(2, 9):
        assert apex >= glr_statistic(y, 0, 10, c, sigma=1.0) - 1e-12


def test_glr_candidate_range_errors():
    y = np.arange(20.0)
    for c in (0, 1, 19, 20):
        with pytest.raises(ValueError):
            glr_statistic(y, 0, 20, c, sigma=1.0)
    with pytest.raises(ValueError):
        glr_statistic(y, 0, 20, 10, sigma=0.0)


def test_glr_matches_oracle_random_instances():
    # independent code path: three explicit least-squares solves
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(8, 200))
        kink = int(rng.integers(2, n - 2))
        slopes = rng.normal(size=2)
        y = np.where(
            np.arange(n) < kink,
            slopes[0] * np.arange(n),
            slopes[0] * kink + slopes[1] * (np.arange(n) - kink),
        ) + rng.normal(0, 0.5, size=n)
        s = int(rng.integers(0, n - 5))
        e = int(rng.integers(s + 5, n + 1))
        c = int(rng.integers(s + 2, e - 1))
        sigma = float(rng.uniform(0.3, 2.0))
        got = glr_statistic(y, s, e, c, sigma)
        want = oracle_glr(y, s, e, c, sigma)
        assert got == pytest.approx(want, rel=1e-9, abs=1e-9)


def test_glr_sigma_scale_covariance():
    rng = np.random.default_rng(5)
    y = np.cumsum(rng.normal(size=100))
    for _ in range(50):
        s = int(rng.integers(0, 60))
        e = int(rng.integers(s + 8, 101))
        c = int(rng.integers(s + 2, e - 1))
        g1 = glr_statistic(y, s, e, c, sigma=0.5)
        g2 = glr_statistic(y, s, e, c, sigma=1.0)
        if g1 > 0:
            assert g1 / g2 == pytest.approx(4.0, rel=1e-12)


def test_best_split_tent():
    y = np.array([0.0, 1, 2, 3, 4, 5, 4, 3, 2, 1, 0])
    c, glr = best_split(y, 0, 11, sigma=1.0)
    assert c == 5
    assert glr > 0


def test_best_split_exact_line_glr_zero():
    y = 1.5 * np.arange(30.0)
    c, glr = best_split(y, 0, 30, sigma=1.0)
    assert glr <= 1e-9


def test_best_split_tie_break_smaller_index():
    # symmetric M-shape: the splits at 4 and 9 are mirror images with
    # exactly equal statistics, so the smaller index must come back
    y = np.array([0.0, 1, 2, 3, 2, 1, 0, 1, 2, 3, 2, 1, 0])
    g4 = glr_statistic(y, 0, 13, 4, 1.0)
    g9 = glr_statistic(y, 0, 13, 9, 1.0)
    assert g4 == g9
    assert g4 == max(glr_statistic(y, 0, 13, c, 1.0) for c in range(2, 12))
    c, _ = best_split(y, 0, 13, sigma=1.0)
    assert c == 4


def test_best_split_interval_too_short():
    with pytest.raises(ValueError):
        best_split(np.arange(10.0), 2, 6, sigma=1.0)


def test_estimate_sigma_line_floors_with_warning():
    with pytest.warns(UserWarning):
        s = estimate_sigma(2.0 * np.arange(50) + 3.0)
    assert s == 1e-8


def test_estimate_sigma_gaussian_noise():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        s = estimate_sigma(rng.normal(0, 1, 10_000))
        assert 0.9 <= s <= 1.1


def test_estimate_sigma_ignores_kinks():
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        y = piecewise_signal(3000, (1000, 2000), (0.05, -0.05, 0.05))
        y = y + rng.normal(0, 0.5, 3000)
        s = estimate_sigma(y)
        assert 0.4 <= s <= 0.6


def test_estimate_sigma_too_short():
    with pytest.raises(ValueError):
        estimate_sigma(np.array([1.0, 2.0]))


def test_auto_threshold_grows_with_length():
    assert auto_threshold(10_000) > auto_threshold(300) > 0


def test_detect_exact_line_empty():
    y = 0.3 * np.arange(200.0) + 5
    with pytest.warns(UserWarning):
        cps = detect_not(y, NotConfig(num_intervals=500, rng_seed=0))
    assert cps == []


def test_detect_noiseless_three_segments():
    hits = 0
    for seed in range(10):
        y = piecewise_signal(300, (100, 200), (0.08, -0.08, 0.08), jumps=(2.0, -2.0))
        with pytest.warns(UserWarning):
            cps = detect_not(y, NotConfig(num_intervals=1000, rng_seed=seed))
        idx = [cp.index for cp in cps]
        if len(idx) == 2 and abs(idx[0] - 100) <= 3 and abs(idx[1] - 200) <= 3:
            hits += 1
    assert hits >= 9


def test_detect_noisy_three_segments():
    hits = 0
    for seed in range(10):
        base = piecewise_signal(300, (100, 200), (0.08, -0.08, 0.08), jumps=(2.0, -2.0))
        rng = np.random.default_rng(seed)
        y = base + 0.05 * np.ptp(base) * rng.normal(size=300)
        cps = detect_not(y, NotConfig(num_intervals=1000, rng_seed=seed))
        idx = [cp.index for cp in cps]
        if len(idx) == 2 and abs(idx[0] - 100) <= 5 and abs(idx[1] - 200) <= 5:
            hits += 1
    assert hits >= 8


def test_detect_deterministic_and_sorted():
    base = piecewise_signal(400, (150, 300), (0.1, -0.06, 0.02))
    rng = np.random.default_rng(0)
    y = base + 0.1 * rng.normal(size=400)
    cfg = NotConfig(num_intervals=800, rng_seed=42)
    a = detect_not(y, cfg)
    b = detect_not(y, cfg)
    assert [(cp.index, cp.glr) for cp in a] == [(cp.index, cp.glr) for cp in b]
    idx = [cp.index for cp in a]
    assert idx == sorted(idx)
    assert len(set(idx)) == len(idx)
    zeta = cfg.resolve_threshold(400)
    for cp in a:
        assert cp.glr > zeta
        assert cp.interval.start + 2 <= cp.index <= cp.interval.end - 2


def test_detect_pure_noise_calibration():
    # auto threshold keeps pure noise clean in at least 19 of 20 runs
    clean = 0
    for seed in range(20):
        rng = np.random.default_rng(9000 + seed)
        y = rng.normal(0, 1, 10_000)
        cps = detect_not(y, NotConfig(num_intervals=1000, rng_seed=seed))
        clean += len(cps) == 0
    assert clean >= 19


def test_detect_series_too_short():
    with pytest.raises(ValueError):
        detect_not(np.arange(9.0), NotConfig())


def test_not_config_validation():
    with pytest.raises(ValueError):
        NotConfig(num_intervals=0)
    with pytest.raises(ValueError):
        NotConfig(min_segment_length=4)
    with pytest.raises(ValueError):
        NotConfig(threshold=-1.0)
    with pytest.raises(ValueError):
        NotConfig(threshold="automatic")
    assert NotConfig(threshold=12.5).resolve_threshold(100) == 12.5


def test_interval_and_changepoint_validation():
    with pytest.raises(ValueError):
        Interval(5, 5)
    with pytest.raises(ValueError):
        ChangePoint(1, Interval(0, 10), 1.0)
    with pytest.raises(ValueError):
        ChangePoint(9, Interval(0, 10), 1.0)
    cp = ChangePoint(5, Interval(0, 10), 3.0, dimension=1)
    assert cp.interval.width == 10
