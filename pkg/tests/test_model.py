import json

import numpy as np
import pytest

from critgw import (
    EnumerationLimitError,
    ModelError,
    builtin_model,
    exact_count_law,
    exact_total_law,
    extinction_by,
    load_model,
    model_to_config,
    moments,
    pgf_eval,
    q_form_vector,
    second_moment_matrix,
    step,
    third_abs_moments,
)


def test_load_model_a_direct_construction():
    text = json.dumps({"d": 1, "offspring": [[
        {"counts": [0], "prob": 0.5}, {"counts": [2], "prob": 0.5}]]})
    model = load_model(text)
    assert model.d == 1
    assert len(model.laws[0].atoms) == 2


def test_load_model_rejects_bad_probability_sum():
    text = json.dumps({"d": 1, "offspring": [[
        {"counts": [0], "prob": 0.5}, {"counts": [2], "prob": 0.4}]]})
    with pytest.raises(ModelError, match="sum to 0.9"):
        load_model(text)


def test_load_model_c_with_ratio_strings(model_c):
    mean = model_c.mean_matrix()
    assert np.allclose(mean, [[0.5, 0.5], [0.25, 0.75]], atol=0)
    assert model_c.d == 2


def test_load_model_dimension_mismatch():
    text = json.dumps({"d": 2, "offspring": [
        [{"counts": [1], "prob": 1.0}],
        [{"counts": [0, 1], "prob": 1.0}]]})
    with pytest.raises(ModelError, match="length"):
        load_model(text)


def test_load_model_reducible_graph():
    # type 2 unreachable from type 1
    text = json.dumps({"d": 2, "offspring": [
        [{"counts": [1, 0], "prob": 1.0}],
        [{"counts": [1, 1], "prob": 1.0}]]})
    with pytest.raises(ModelError, match="reducible"):
        load_model(text)


def test_zero_mean_entries_warn_but_validate(model_b):
    with pytest.warns(UserWarning, match="zero entries"):
        builtin_model("b")
    assert model_b.mean_matrix()[0, 0] == 0.0


def test_config_round_trip(model_c):
    again = load_model(model_to_config(model_c))
    assert again == model_c


def test_parse_failure():
    with pytest.raises(ModelError, match="parse"):
        load_model("{not json")


# ---------------------------------------------------------------------------
# moments


def test_mean_model_a(model_a):
    assert np.array_equal(moments(model_a).mean, np.array([[1.0]]))


def test_mean_model_c(model_c):
    assert np.array_equal(moments(model_c).mean, np.array([[0.5, 0.5], [0.25, 0.75]]))


def test_factorial2_model_c_type1(model_c):
    f1 = moments(model_c).factorial2[0]
    assert f1[0, 0] == 0.0
    assert f1[1, 1] == 0.0
    assert f1[0, 1] == pytest.approx(0.5, abs=0)
    assert f1[1, 0] == pytest.approx(0.5, abs=0)


def test_factorial2_symmetry(model_b, model_c):
    for model in (model_b, model_c):
        f2 = moments(model).factorial2
        for i in range(model.d):
            assert np.array_equal(f2[i], f2[i].T)


def test_step_mean_matches_moments(model_c, rng):
    z = np.array([2, 3])
    reps = 100_000
    total = np.zeros(2)
    totalsq = np.zeros(2)
    for _ in range(reps):
        out = step(model_c, z, rng)
        total += out
        totalsq += out.astype(float) ** 2
    mean = total / reps
    se = np.sqrt((totalsq / reps - mean**2) / reps)
    expected = z @ moments(model_c).mean
    assert (np.abs(mean - expected) <= 4 * se + 1e-12).all()


def test_third_abs_moments_finite(model_c, spectral_c):
    vals = third_abs_moments(model_c, spectral_c.u)
    assert np.isfinite(vals).all()
    assert (vals >= 0).all()
    assert moments(model_c).third_finite


# ---------------------------------------------------------------------------
# generating function and extinction


def test_pgf_at_one_is_one(model_a, model_b, model_c):
    for model in (model_a, model_b, model_c):
        assert np.abs(pgf_eval(model, np.ones(model.d)) - 1.0).max() <= 1e-12


def test_pgf_at_zero_model_a(model_a):
    assert pgf_eval(model_a, [0.0]) == pytest.approx([0.5], abs=0)


def test_pgf_model_c_at_zero(model_c):
    assert np.array_equal(pgf_eval(model_c, [0.0, 0.0]), np.array([0.5, 0.75]))


def test_pgf_monotone(model_c, rng):
    for _ in range(25):
        s = rng.random(2)
        t = np.minimum(s + rng.random(2) * (1 - s), 1.0)
        assert (pgf_eval(model_c, t) >= pgf_eval(model_c, s) - 1e-15).all()


def test_pgf_rejects_out_of_range(model_a):
    with pytest.raises(ModelError):
        pgf_eval(model_a, [1.5])


def test_extinction_by_examples(model_a):
    assert extinction_by(model_a, 0) == 0.0
    assert extinction_by(model_a, 1) == 0.5
    assert extinction_by(model_a, 3) == pytest.approx(89 / 128, abs=1e-15)


def test_extinction_nondecreasing_and_tends_to_one(model_a):
    values = [extinction_by(model_a, n) for n in (0, 1, 2, 5, 10, 50)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert extinction_by(model_a, 10_000) > 0.99


# ---------------------------------------------------------------------------
# quadratic form


def test_q_form_examples(model_a, model_c):
    assert q_form_vector(model_a, [1.0]) == pytest.approx([0.5], abs=0)
    assert np.allclose(q_form_vector(model_c, [1.0, 1.0]), [0.5, 1.5], atol=0)
    assert np.array_equal(q_form_vector(model_c, [0.0, 0.0]), np.zeros(2))


def test_q_form_homogeneity(model_c, rng):
    for _ in range(50):
        s = rng.random(2) * 3
        c = rng.random() * 5
        assert np.abs(q_form_vector(model_c, c * s) - c**2 * q_form_vector(model_c, s)).max() <= 1e-12


def test_q_form_rejects_negative(model_a):
    with pytest.raises(ModelError):
        q_form_vector(model_a, [-0.1])


# ---------------------------------------------------------------------------
# second moments


def test_second_moment_start(model_c):
    z = np.array([2.0, 1.0])
    assert np.array_equal(second_moment_matrix(model_c, z, 0), np.outer(z, z))


def test_second_moment_model_a_small_horizons(model_a):
    assert second_moment_matrix(model_a, [1.0], 1)[0, 0] == pytest.approx(2.0, abs=1e-12)
    assert second_moment_matrix(model_a, [1.0], 2)[0, 0] == pytest.approx(3.0, abs=1e-12)


@pytest.mark.parametrize("name,n", [("a", 1), ("a", 2), ("c", 1), ("c", 2)])
def test_second_moment_matches_enumeration(name, n):
    model = builtin_model(name)
    z = np.ones(model.d, dtype=int)
    law = exact_count_law(model, z, n)
    d = model.d
    brute = np.zeros((d, d))
    for state, p in law.items():
        vec = np.asarray(state, dtype=float)
        brute += p * np.outer(vec, vec)
    rec = second_moment_matrix(model, z, n)
    assert np.abs(rec - brute).max() <= 1e-12


# ---------------------------------------------------------------------------
# exact enumeration


def test_exact_count_law_model_a_two_generations(model_a):
    law = exact_count_law(model_a, [1], 2)
    assert law[(0,)] == pytest.approx(0.5 + 0.5 * 0.25, abs=1e-15)
    assert law[(2,)] == pytest.approx(0.25, abs=1e-15)
    assert law[(4,)] == pytest.approx(0.125, abs=1e-15)
    assert sum(law.values()) == pytest.approx(1.0, abs=1e-12)


def test_exact_total_law_matches_pgf_iteration(model_a):
    law = exact_total_law(model_a, [1], 3)
    assert law[0] == pytest.approx(extinction_by(model_a, 3), abs=1e-12)


def test_exact_count_law_guard(model_c):
    with pytest.raises(EnumerationLimitError):
        exact_count_law(model_c, [30, 30], 6, max_states=50)
