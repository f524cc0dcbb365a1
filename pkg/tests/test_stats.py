import json
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra import numpy as hnp

from rwgc.errors import ConfigError, DegenerateWarning, UsageError
from rwgc.metrics import PicConfig, PoicConfig, pic, poic
from rwgc.oracle import naive_welch, synthesize_sample, t_cdf_numeric, t_two_sided_p_numeric
from rwgc.stats import (BootstrapResult, compare_tasks, resample_rows, t_cdf, t_sf_two_sided, welch_test,
                        write_pairwise_csv, write_pairwise_json, bootstrap_metric)

samples = hnp.arrays(np.float64, st.integers(2, 30), elements=st.floats(-100, 100, allow_nan=False))


def noisy_matrix(seed, n=40, m=12):
    rng = np.random.default_rng(seed)
    return -np.abs(rng.normal(rng.normal(5, 2, (n, 1)), 1.0, (n, m)))


# ------------------------------------------------------------------ bootstrap


def test_identical_rows_give_zero_width():
    S = np.tile([-1.0, -2.0, -4.0], (20, 1))
    br = bootstrap_metric(S, "pic", PicConfig(10), k=100)
    assert np.all(br.resamples == br.point)
    assert br.ci_low == br.ci_high == br.point and br.std == 0.0


def test_bootstrap_deterministic_and_seeded():
    S = noisy_matrix(0)
    a = bootstrap_metric(S, "pic", PicConfig(50), k=200, seed=4)
    b = bootstrap_metric(S, "pic", PicConfig(50), k=200, seed=4)
    c = bootstrap_metric(S, "pic", PicConfig(50), k=200, seed=5)
    assert np.array_equal(a.resamples, b.resamples)
    assert not np.array_equal(a.resamples, c.resamples)


def test_bootstrap_seeds_agree():
    S = noisy_matrix(1, n=200)
    a = bootstrap_metric(S, "pic", PicConfig(100), k=1000, seed=0)
    b = bootstrap_metric(S, "pic", PicConfig(100), k=1000, seed=1)
    se = np.hypot(a.std, b.std) / np.sqrt(1000)
    assert abs(a.mean - b.mean) < 3 * se


def test_resampler_matches_direct_recomputation():
    S = noisy_matrix(2)
    for metric, cfg, fn in [("pic", PicConfig(30), pic), ("poic", PoicConfig(2.0, 0.0), poic)]:
        br = bootstrap_metric(S, metric, cfg, k=100, seed=3)
        for i in (0, 57, 99):
            direct = fn(S[resample_rows(S.shape[0], i, 3)], cfg)[0]
            assert br.resamples[i] == pytest.approx(direct, abs=1e-12)


def test_resample_rows_range():
    rows = resample_rows(7, 3, 0)
    assert rows.shape == (7,) and rows.min() >= 0 and rows.max() < 7
    assert np.array_equal(rows, resample_rows(7, 3, 0))


def test_bootstrap_validation():
    with pytest.raises(ConfigError):
        bootstrap_metric(noisy_matrix(0), "pic", k=99)
    with pytest.raises(ConfigError):
        bootstrap_metric(noisy_matrix(0), "entropy", k=100)


def test_bootstrap_dict_round_trip():
    br = bootstrap_metric(noisy_matrix(3), "poic", PoicConfig(), k=100)
    back = BootstrapResult.from_dict(json.loads(json.dumps(br.to_dict())))
    assert np.array_equal(back.resamples, br.resamples) and back.point == br.point
    with pytest.raises(UsageError):
        BootstrapResult.from_dict(br.to_dict(include_resamples=False))


@pytest.mark.parametrize("metric", ["poic", "pic"])
def test_ci_contains_point_for_most_inputs(metric):
    # PIC uses coarse bins here; with bins much finer than the data the
    # row bootstrap shifts plug-in PIC downwards and coverage collapses
    rng = np.random.default_rng(11)
    hits, trials = 0, 1000
    for _ in range(trials):
        n, m = rng.integers(10, 40), rng.integers(4, 12)
        S = -np.abs(rng.normal(rng.normal(3, 1, (n, 1)), rng.uniform(0.2, 2.0), (n, m)))
        cfg = PoicConfig(float(rng.uniform(0.5, 5.0)), 0.0) if metric == "poic" else PicConfig(10)
        br = bootstrap_metric(S, metric, cfg, k=100, seed=int(rng.integers(2**31)))
        assert br.std >= 0.0
        hits += br.ci_low <= br.point <= br.ci_high
    assert hits / trials >= 0.95


# ------------------------------------------------------------------ t distribution


@pytest.mark.parametrize("df", [1, 2, 5, 18, 100])
def test_t_cdf_matches_quadrature(df):
    for t in np.linspace(-10, 10, 81):
        assert t_cdf(t, df) == pytest.approx(t_cdf_numeric(t, df), abs=1e-8)
        assert t_sf_two_sided(t, df) == pytest.approx(t_two_sided_p_numeric(t, df), abs=1e-8)


@given(st.floats(0.0, 50.0), st.floats(0.0, 50.0), st.floats(0.5, 500.0))
def test_p_decreases_with_abs_t(t1, t2, df):
    lo, hi = sorted((t1, t2))
    assert t_sf_two_sided(hi, df) <= t_sf_two_sided(lo, df) + 1e-15
    assert 0.0 <= t_sf_two_sided(hi, df) <= 1.0


# ------------------------------------------------------------------ Welch


def test_welch_identical_samples():
    a = [0.3, 1.2, -0.7, 2.0]
    assert welch_test(a, a)[:3] == (0.0, 6.0, 1.0)


def test_welch_constant_samples():
    assert welch_test([1.0, 1.0], [1.0, 1.0, 1.0]).p == 1.0
    with pytest.warns(DegenerateWarning):
        r = welch_test([1.0, 1.0], [2.0, 2.0])
    assert r.p == 0.0 and r.degenerate and r.t < 0


def test_welch_separated():
    a = np.array([1.0, 2.0, 3.0, 4.0])
    r = welch_test(a, a + 10)
    assert r.t < -5 and r.p < 0.005


def test_welch_textbook_case():
    a, b = synthesize_sample(10, 0.0, 1.0), synthesize_sample(10, 1.0, 1.0)
    r = welch_test(a, b)
    assert r.t == pytest.approx(-np.sqrt(5), rel=1e-12)
    assert r.df == pytest.approx(18.0, rel=1e-12)
    assert r.p == pytest.approx(t_two_sided_p_numeric(r.t, r.df), abs=1e-8)


def test_welch_needs_two_observations():
    with pytest.raises(ConfigError):
        welch_test([1.0], [1.0, 2.0])


@given(samples, samples)
def test_welch_matches_naive_and_bounds(a, b):
    assume(np.var(a) > 1e-6 or np.var(b) > 1e-6)
    r = welch_test(a, b)
    t_ref, df_ref = naive_welch(a, b)
    assert r.t == pytest.approx(t_ref, rel=1e-9, abs=1e-9)
    assert r.df == pytest.approx(df_ref, rel=1e-9)
    assert min(a.size, b.size) - 1 - 1e-9 <= r.df <= a.size + b.size - 2 + 1e-9
    assert 0.0 <= r.p <= 1.0
    assert np.sign(r.t) == np.sign(round(a.mean() - b.mean(), 12)) or r.t == pytest.approx(0.0, abs=1e-9)


# ------------------------------------------------------------------ pairwise tables


def fake_result(center, seed, metric="pic"):
    v = np.random.default_rng(seed).normal(center, 0.01, 200)
    return BootstrapResult(metric, float(center), v, float(v.mean()), float(v.std(ddof=1)),
                           float(np.percentile(v, 2.5)), float(np.percentile(v, 97.5)))


def test_compare_tasks_structure(tmp_path):
    reports = [("a", fake_result(1.0, 0)), ("b", fake_result(1.5, 1)), ("c", fake_result(1.001, 2))]
    table = compare_tasks(reports)
    for lab in "abc":
        assert table.cell(lab, lab)[:3] == (0.0, 398.0, 1.0)
    for x in "abc":
        for y in "abc":
            assert table.cell(x, y).t == -table.cell(y, x).t
            assert table.cell(x, y).p == table.cell(y, x).p
    assert table.cell("a", "b").p < 0.005
    write_pairwise_csv([table], tmp_path / "w.csv")
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "task_a,task_b,metric,t,df,p" and len(lines) == 10
    write_pairwise_json([table], tmp_path / "w.json")
    assert json.loads((tmp_path / "w.json").read_text())[0]["labels"] == ["a", "b", "c"]


def test_compare_tasks_errors():
    with pytest.raises(ConfigError):
        compare_tasks([("a", fake_result(1.0, 0))])
    with pytest.raises(ConfigError):
        compare_tasks([("a", fake_result(1.0, 0)), ("a", fake_result(1.0, 1))])
    empty = BootstrapResult("pic", 1.0, np.array([]), 1.0, 0.0, 1.0, 1.0)
    with pytest.raises(UsageError):
        compare_tasks([("a", fake_result(1.0, 0)), ("b", empty)])


def test_compare_tasks_constant_pairs_serialise():
    const = BootstrapResult("pic", 1.0, np.ones(100), 1.0, 0.0, 1.0, 1.0)
    other = BootstrapResult("pic", 2.0, np.full(100, 2.0), 2.0, 0.0, 2.0, 2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", DegenerateWarning)
        table = compare_tasks([("a", const), ("b", other)])
    cells = table.to_dict()["cells"]
    assert any(c["t"] is None for c in cells)
    json.dumps(cells, allow_nan=False)
