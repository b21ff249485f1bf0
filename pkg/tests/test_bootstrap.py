import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bracketdid import bootstrap as bs
from bracketdid import rng
from bracketdid.bootstrap import (
    BootstrapConfig,
    BootstrapDistribution,
    IntervalResult,
    ParameterInternals,
    all_intervals,
    ci_identified_set,
    ci_parameter,
    ci_percentile,
    ci_union,
    draw_indices,
    empirical_quantile,
    normal_cdf,
    parameter_interval,
    percentile_interval,
    resample,
    run_bootstrap,
    set_interval,
    union_interval,
)
from bracketdid.estimators import BoundingEstimates, bounding_sums
from bracketdid.exceptions import BootstrapError
from bracketdid.simulation import DGPConfig, generate

from conftest import make_dataset

# several tests use deliberately small B
pytestmark = pytest.mark.filterwarnings("ignore:B=.*too small:UserWarning")


def fake_estimates(sums):
    sums = np.asarray(sums, dtype=float)
    return BoundingEstimates(2, sums, float(sums.min()), float(sums.max()), None)


@pytest.fixture(scope="module")
def case2_data():
    return generate(DGPConfig.case2(N=400), seed=11)


# --- primitives -----------------------------------------------------------

@pytest.mark.parametrize("x", [-37.5, -8.0, -3.3, -1e-3, 0.0, 0.7, 2.5, 6.0, 9.0])
def test_normal_cdf_against_mpmath(x):
    assert abs(normal_cdf(x) - float(mpmath.ncdf(x))) <= 1e-15
    assert math.isnan(normal_cdf(math.nan))


@settings(max_examples=200)
@given(st.floats(-40, 40))
def test_normal_cdf_symmetry_and_range(x):
    p = normal_cdf(x)
    assert 0.0 <= p <= 1.0
    assert abs(p + normal_cdf(-x) - 1.0) <= 2e-16


@pytest.mark.parametrize(
    "values, q, expected",
    [
        ([1, 2, 3, 4], 0.5, 2),
        ([5], 0.0, 5),
        ([5], 0.37, 5),
        ([5], 1.0, 5),
        ([4, 3, 2, 1], 0.0, 1),
        ([4, 3, 2, 1], 1.0, 4),
        (list(range(1, 11)), 0.7, 7),  # 0.7 * 10 is 7.000000000000001 in floating point
        (list(range(1, 11)), 0.71, 8),
    ],
)
def test_empirical_quantile_examples(values, q, expected):
    assert empirical_quantile(values, q) == expected


def test_empirical_quantile_300_values():
    values = np.random.default_rng(5).permutation(np.arange(1, 301))
    assert empirical_quantile(values, 0.975) == 293 == np.sort(values)[292]
    assert empirical_quantile(values, 0.025) == 8


def test_empirical_quantile_errors():
    with pytest.raises(ValueError):
        empirical_quantile([], 0.5)
    with pytest.raises(ValueError):
        empirical_quantile([1.0], 1.5)


@settings(max_examples=200)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.floats(0, 1), st.floats(0, 1))
def test_empirical_quantile_properties(values, q1, q2):
    lo, hi = sorted((q1, q2))
    a, b = empirical_quantile(values, lo), empirical_quantile(values, hi)
    assert a in values and b in values
    assert a <= b
    # at least ceil(q B) values lie at or below Q_q
    assert sum(v <= b for v in values) >= math.ceil(round(hi * len(values), 9))


def test_config_validation_and_small_b_warning():
    for bad in (dict(B=1), dict(alpha=0.0), dict(alpha=1.0), dict(seed=-1), dict(seed=2**64)):
        with pytest.raises(ValueError):
            BootstrapConfig(**bad)
    with pytest.warns(UserWarning, match="too small"):
        BootstrapConfig(B=20, alpha=0.05)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        BootstrapConfig(B=40, alpha=0.05)


# --- resampling -----------------------------------------------------------

def test_resample_of_single_unit_is_identity():
    ds = make_dataset(["trt"], [[1.0, 2.0]])
    assert resample(ds, rng.stream(1, 0)) == ds


def test_resample_is_deterministic_and_keeps_units_whole():
    ds = generate(DGPConfig.case1(N=30, missing_prob=0.2), seed=3)
    one = resample(ds, rng.stream(9, 4))
    two = resample(ds, rng.stream(9, 4))
    assert one == two
    assert one.N == ds.N
    lookup = {u: i for i, u in enumerate(ds.unit_ids)}
    for uid, y, r, g in zip(one.unit_ids, one.outcomes, one.observed, one.group_codes):
        src = lookup[uid.split("#")[0]]
        np.testing.assert_array_equal(y, ds.outcomes[src])
        np.testing.assert_array_equal(r, ds.observed[src])
        assert g == ds.group_codes[src]


def test_resample_multiplicity_is_uniform():
    gen = rng.stream(2024, 0)
    counts = np.zeros(3)
    n_draws = 100_000
    for _ in range(n_draws):
        counts += np.bincount(draw_indices(3, gen), minlength=3)
    np.testing.assert_allclose(counts / n_draws, 1.0, atol=0.02)


# --- replicate engine -----------------------------------------------------

def test_run_bootstrap_is_deterministic_and_job_invariant(case2_data):
    cfg = BootstrapConfig(B=64, seed=77)
    base = run_bootstrap(case2_data, 4, cfg)
    for jobs in (1, 3, 8):
        other = run_bootstrap(case2_data, 4, cfg, jobs=jobs)
        assert other.sums.tobytes() == base.sums.tobytes()
    assert base.sums.shape == (64, 8)
    assert np.all(base.mins <= base.maxs)


def test_replicate_depends_only_on_seed_and_index(case2_data):
    short = run_bootstrap(case2_data, 3, BootstrapConfig(B=20, seed=5))
    long = run_bootstrap(case2_data, 3, BootstrapConfig(B=50, seed=5))
    np.testing.assert_array_equal(short.sums, long.sums[:20])
    other = run_bootstrap(case2_data, 3, BootstrapConfig(B=20, seed=6))
    assert not np.array_equal(short.sums, other.sums)


def test_replicate_matches_explicit_resample(case2_data):
    cfg = BootstrapConfig(B=5, seed=123)
    dist = run_bootstrap(case2_data, 3, cfg)
    for b in range(cfg.B):
        star = resample(case2_data, rng.stream(cfg.seed, b))
        np.testing.assert_allclose(bounding_sums(star, 3).sums, dist.sums[b], rtol=0, atol=1e-12)


def test_sparse_cells_are_redrawn():
    ds = make_dataset(["trt"] * 4 + ["a"] * 4 + ["b"],
                      np.arange(18, dtype=float).reshape(9, 2))
    dist = run_bootstrap(ds, 2, BootstrapConfig(B=50, seed=1))
    assert dist.redraws > 0
    assert np.all(np.isfinite(dist.sums))


def test_redraw_limit_raises(monkeypatch):
    ds = make_dataset(["trt"] * 4 + ["a"] * 4 + ["b"],
                      np.arange(18, dtype=float).reshape(9, 2))
    monkeypatch.setattr(bs, "REDRAW_FACTOR", 0)
    with pytest.raises(BootstrapError, match="too sparse"):
        run_bootstrap(ds, 2, BootstrapConfig(B=50, seed=1))


def test_bootstrap_spread_tracks_sampling_spread():
    cfg = DGPConfig.case1(N=1000)
    boot = run_bootstrap(generate(cfg, 1), 3, BootstrapConfig(B=300, seed=2))
    direct = [bounding_sums(generate(cfg, s), 3).lower for s in range(100, 400)]

    def iqr(v):
        return np.quantile(v, 0.75) - np.quantile(v, 0.25)

    assert iqr(boot.mins) == pytest.approx(iqr(direct), rel=0.3)


# --- intervals ------------------------------------------------------------

def test_set_interval_reflects_quantiles():
    cfg = BootstrapConfig(B=40, alpha=0.05)
    sums = np.stack([np.arange(1, 41) / 10, np.arange(1, 41) / 10 + 1], axis=1)
    dist = BootstrapDistribution.from_sums(2, sums)
    ci = set_interval(fake_estimates([2.0, 3.0]), dist, cfg)
    # Q_.975(min*) = 3.9 (39th), Q_.025(max*) = 1.1 (1st)
    assert (ci.lower, ci.upper) == (2 * 2.0 - 3.9, 2 * 3.0 - 1.1)
    assert ci.kind == "set" and ci.internals is None


def test_single_sum_gives_basic_bootstrap():
    cfg = BootstrapConfig(B=200, alpha=0.1)
    draws = np.random.default_rng(0).normal(1.0, 0.3, size=200)
    dist = BootstrapDistribution.from_sums(2, draws)
    est = fake_estimates([1.05])
    srt = np.sort(draws)
    expected = (2 * 1.05 - srt[189], 2 * 1.05 - srt[9])
    for ci in (set_interval(est, dist, cfg), union_interval(est, dist, cfg)):
        assert (ci.lower, ci.upper) == expected
    perc = percentile_interval(dist, cfg)
    assert (perc.lower, perc.upper) == (srt[9], srt[189])


def test_parameter_interval_internals_by_hand():
    cfg = BootstrapConfig(B=4, alpha=0.5)
    sums = np.array([[0.0, 1.0], [1.0, 3.0], [2.0, 4.0], [3.0, 6.0]])
    dist = BootstrapDistribution.from_sums(2, sums)
    est = fake_estimates([1.5, 3.5])
    ci = parameter_interval(est, dist, cfg, n_units=100)
    # medians: min* -> 1.0, max* -> 3.0; omega = (7 - 3) - (3 - 1) = 2
    # IQRs: min* 2 - 0 = 2, max* 4 - 1 = 3 -> rho = 1 / (3 log 100)
    rho = 1 / (3 * math.log(100))
    p_hat = 1 - float(mpmath.ncdf(2 * rho)) * 0.5
    assert ci.internals.omega_hat_plus == 2.0
    assert ci.internals.rho == pytest.approx(rho, rel=1e-15)
    assert ci.internals.p_hat == pytest.approx(p_hat, rel=1e-15)
    k = math.ceil(p_hat * 4)  # order statistic used on the min side
    assert ci.lower == 3.0 - np.sort(dist.mins)[k - 1]
    assert ci.upper == 7.0 - np.sort(dist.maxs)[math.ceil((1 - p_hat) * 4) - 1]


def test_parameter_interval_degenerate_spread():
    cfg = BootstrapConfig(B=30)
    dist = BootstrapDistribution.from_sums(2, np.zeros((30, 2)))
    ci = parameter_interval(fake_estimates([0.0, 0.0]), dist, cfg, n_units=50)
    assert ci.internals.rho is None
    assert ci.internals.p_hat == 1 - cfg.alpha / 2
    assert "rho_undefined" in ci.flags
    assert (ci.lower, ci.upper) == (0.0, 0.0)


def test_quantile_crossing_is_clamped_and_flagged():
    cfg = BootstrapConfig(B=40)
    dist = BootstrapDistribution.from_sums(2, np.tile([0.0, 10.0], (40, 1)))
    ci = set_interval(fake_estimates([0.0, 0.0]), dist, cfg)
    assert ci.lower == ci.upper == -5.0
    assert ci.flags == ("quantile_crossing",)


distributions = st.integers(2, 5).flatmap(
    lambda k: st.tuples(
        st.lists(st.lists(st.floats(-10, 10), min_size=k, max_size=k), min_size=40, max_size=80),
        st.lists(st.floats(-10, 10), min_size=k, max_size=k),
        st.sampled_from([0.05, 0.1, 0.2]),
    )
)


@settings(max_examples=150, deadline=None)
@given(distributions)
def test_parameter_interval_nested_in_set_interval(args):
    reps, point, alpha = args
    cfg = BootstrapConfig(B=len(reps), alpha=alpha)
    dist = BootstrapDistribution.from_sums(2, np.array(reps))
    est = fake_estimates(point)
    s = set_interval(est, dist, cfg)
    p = parameter_interval(est, dist, cfg, n_units=1000)
    assert 1 - alpha <= p.internals.p_hat <= 1 - alpha / 2
    if not (s.flags or p.flags):
        assert s.lower <= p.lower and p.upper <= s.upper


def test_interval_result_contract():
    internals = ParameterInternals(0.0, 1.0, 0.975)
    with pytest.raises(ValueError):
        IntervalResult(0.0, 1.0, "set", 0.05, 300, 1, internals)
    with pytest.raises(ValueError):
        IntervalResult(0.0, 1.0, "parameter", 0.05, 300, 1)
    with pytest.raises(ValueError):
        IntervalResult(0.0, 1.0, "bogus", 0.05, 300, 1)
    ci = IntervalResult(0.0, 1.0, "parameter", 0.05, 300, 1, internals)
    moved = ci.shifted(0.5, 0.25)
    assert (moved.lower, moved.upper, moved.internals) == (-0.5, 1.25, internals)
    assert ci.contains(1.0) and not ci.contains(1.5)
    assert ci.covers(0.2, 0.9) and not ci.covers(-0.1, 0.5)


def test_public_helpers_agree_with_all_intervals(case2_data):
    cfg = BootstrapConfig(B=100, seed=8)
    est = bounding_sums(case2_data, 3)
    cis = all_intervals(est, run_bootstrap(case2_data, 3, cfg), cfg, case2_data.N)
    assert ci_identified_set(case2_data, 3, cfg) == cis["set"]
    assert ci_parameter(case2_data, 3, cfg) == cis["parameter"]
    assert ci_percentile(case2_data, 3, cfg) == cis["percentile"]
    assert ci_union(case2_data, 3, cfg) == cis["union"]
    assert cis["set"].lower <= est.lower <= est.upper <= cis["set"].upper
