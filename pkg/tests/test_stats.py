import numpy as np
import pytest

from critgw import (
    ChiSquareResult,
    EmpiricalSample,
    SeededStreamFamily,
    chi_square,
    ks_critical_value,
    ks_statistic,
    mc_run,
    tv_distance,
)
from critgw.stats import _splitmix64


def test_streams_reproducible():
    fam = SeededStreamFamily(master_seed=42)
    a = fam.stream(7).integers(0, 2**63, size=16)
    b = fam.stream(7).integers(0, 2**63, size=16)
    assert np.array_equal(a, b)


def test_streams_distinct_and_uncorrelated():
    fam = SeededStreamFamily(master_seed=42)
    seeds = {fam.seed_for(i) for i in range(1000)}
    assert len(seeds) == 1000
    x = fam.stream(0).standard_normal(20_000)
    y = fam.stream(1).standard_normal(20_000)
    corr = float(np.corrcoef(x, y)[0, 1])
    assert abs(corr) < 0.02


def test_splitmix_mask():
    assert 0 <= _splitmix64(2**70 + 3) < 2**64


def test_stream_index_validation():
    with pytest.raises(ValueError):
        SeededStreamFamily(0).stream(-1)


# ---------------------------------------------------------------------------
# KS


def test_ks_constant_sample_at_median():
    sample = np.full(1000, 0.0)
    cdf = lambda x: np.where(x >= 0, 0.5 + 0.5 * np.minimum(x, 1), 0.0)
    assert ks_statistic(sample, cdf) == pytest.approx(0.5, abs=1e-12)


def test_ks_single_point():
    q = 0.3
    cdf = lambda x: np.clip(x, 0.0, 1.0)
    assert ks_statistic(np.array([q]), cdf) == pytest.approx(max(q, 1 - q), abs=1e-12)


def test_ks_calibration_exponential():
    rng = np.random.default_rng(2)
    n = 10_000
    sample = rng.exponential(1.0, size=n)
    d = ks_statistic(sample, lambda x: -np.expm1(-np.maximum(x, 0.0)))
    assert d < ks_critical_value(n, level=0.01)


def test_ks_empty_sample_rejected():
    with pytest.raises(ValueError):
        ks_statistic(np.array([]), lambda x: x)


def test_ks_accepts_empirical_sample():
    s = EmpiricalSample(values=[0.1, 0.6, 0.9], atom_count=5, atom_point=0.0)
    assert s.n_total == 8
    d = ks_statistic(s, lambda x: np.clip(x, 0, 1))
    assert 0 <= d <= 1


def test_ks_critical_value_levels():
    assert ks_critical_value(10_000) == pytest.approx(0.0163, abs=1e-6)
    with pytest.raises(ValueError):
        ks_critical_value(100, level=0.5)


# ---------------------------------------------------------------------------
# chi-square


def test_chi_square_exact_proportions():
    res = chi_square([50, 30, 20], [0.5, 0.3, 0.2])
    assert res.statistic == pytest.approx(0.0, abs=1e-12)
    assert res.pvalue == pytest.approx(1.0, abs=1e-12)
    assert res.dof == 2


def test_chi_square_single_category_errors():
    with pytest.raises(ValueError, match="categories"):
        chi_square([100], [1.0])


def test_chi_square_all_zero_errors():
    with pytest.raises(ValueError, match="zero"):
        chi_square([0, 0], [0.5, 0.5])


def test_chi_square_merge_rule():
    # expected counts 1, 2, 3, 94: three smallest pool into one bucket of 6
    obs = [1, 2, 3, 94]
    res = chi_square(obs, [0.01, 0.02, 0.03, 0.94])
    assert res.dof == 1
    assert res.statistic == pytest.approx(0.0, abs=1e-12)


def test_chi_square_merge_keeps_two_categories():
    res = chi_square([3, 97], [0.03, 0.97])
    assert res.dof == 1


def test_chi_square_model_a_one_step(model_a, rng):
    from critgw import step

    counts = np.zeros(2)
    n = 10_000
    for _ in range(n):
        z = step(model_a, [1], rng)[0]
        counts[z // 2] += 1
    res = chi_square(counts, [0.5, 0.5])
    assert res.pvalue > 1e-3


# ---------------------------------------------------------------------------
# total variation


def test_tv_trivials():
    assert tv_distance([0.5, 0.5], [0.5, 0.5]) == 0.0
    assert tv_distance([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert tv_distance([1 / 3, 2 / 3], [0.5, 0.5]) == pytest.approx(1 / 6, abs=1e-15)


def test_tv_rejects_non_probability():
    with pytest.raises(ValueError):
        tv_distance([0.5, 0.6], [0.5, 0.5])


# ---------------------------------------------------------------------------
# Monte Carlo driver


def _const_task(rng):
    return 3.25


def _exp_mean_task(rng):
    return float(rng.exponential(1.0, size=10).mean())


def test_mc_run_constant():
    res = mc_run(_const_task, 100, SeededStreamFamily(1))
    assert res.value == pytest.approx(3.25, abs=0)
    assert res.stderr == pytest.approx(0.0, abs=0)


def test_mc_run_exponential_mean():
    res = mc_run(_exp_mean_task, 10_000, SeededStreamFamily(3))
    assert abs(res.value - 1.0) <= 4 * res.stderr


def test_mc_run_worker_count_invariance():
    serial = mc_run(_exp_mean_task, 64, SeededStreamFamily(5))
    parallel = mc_run(_exp_mean_task, 64, SeededStreamFamily(5), workers=3)
    assert serial.value == parallel.value
    assert serial.stderr == parallel.stderr


def test_mc_run_custom_aggregator_order_fixed():
    fam = SeededStreamFamily(9)
    collect = lambda rows: list(rows)
    a = mc_run(_exp_mean_task, 16, fam, aggregator=collect).value
    b = mc_run(_exp_mean_task, 16, fam, aggregator=collect, workers=4).value
    assert a == b


def test_mc_run_propagates_failures():
    def boom(rng):
        raise ValueError("bad draw")

    with pytest.raises(RuntimeError, match="replicate 0"):
        mc_run(boom, 4, SeededStreamFamily(0))
