import json

import numpy as np
import pytest

from critgw import (
    ConvergenceError,
    NotCriticalError,
    big_Q,
    builtin_model,
    check_critical,
    load_model,
    model_to_config,
    moments,
    perron_eigen,
    survival_asymptote,
)


def test_model_c_eigen_data(model_c, spectral_c):
    assert spectral_c.lam == pytest.approx(1.0, abs=1e-10)
    assert np.abs(spectral_c.u - np.array([1.0, 1.0])).max() <= 1e-10
    assert np.abs(spectral_c.v - np.array([1 / 3, 2 / 3])).max() <= 1e-10
    assert np.abs(spectral_c.alpha - np.array([1 / 3, 2 / 3])).max() <= 1e-10
    spectral_c.validate(model_c.mean_matrix())


def test_model_b_eigen_data(model_b, spectral_b):
    # periodic support graph: plain power iteration would cycle
    assert spectral_b.lam == pytest.approx(1.0, abs=1e-10)
    assert np.abs(spectral_b.u - 1.0).max() <= 1e-10
    assert np.abs(spectral_b.v - 0.5).max() <= 1e-10
    spectral_b.validate(model_b.mean_matrix())


def test_scalar_case_lambda_equals_mean():
    model = load_model(json.dumps({"d": 1, "offspring": [[
        {"counts": [0], "prob": 0.6}, {"counts": [2], "prob": 0.4}]]}))
    sd = perron_eigen(model)
    assert sd.lam == pytest.approx(0.8, abs=1e-10)
    assert sd.u == pytest.approx([1.0], abs=1e-10)
    assert sd.v == pytest.approx([1.0], abs=1e-10)


def test_big_q_values(model_a, model_b, model_c, spectral_a, spectral_b, spectral_c):
    assert big_Q(model_a, spectral_a) == pytest.approx(0.5, abs=1e-10)
    assert big_Q(model_b, spectral_b) == pytest.approx(0.5, abs=1e-10)
    assert big_Q(model_c, spectral_c) == pytest.approx(7 / 6, abs=1e-10)
    assert spectral_c.q_u == pytest.approx(7 / 6, abs=1e-10)


def test_survival_asymptote_values(spectral_a, spectral_c):
    assert survival_asymptote(spectral_a, [1]) == pytest.approx(2.0, abs=1e-9)
    assert survival_asymptote(spectral_a, [3]) == pytest.approx(6.0, abs=1e-9)
    assert survival_asymptote(spectral_c, [1, 0]) == pytest.approx(6 / 7, abs=1e-9)


def test_survival_asymptote_linear_in_z(spectral_c, rng):
    for _ in range(10):
        z1 = rng.integers(0, 5, size=2) + 1
        z2 = rng.integers(0, 5, size=2) + 1
        lhs = survival_asymptote(spectral_c, z1 + z2)
        rhs = survival_asymptote(spectral_c, z1) + survival_asymptote(spectral_c, z2)
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_survival_asymptote_rejects_zero_start(spectral_a):
    with pytest.raises(Exception, match="nonzero"):
        survival_asymptote(spectral_a, [0])


def test_check_critical(spectral_a, spectral_c):
    assert check_critical(spectral_a, tol=1e-9)
    assert check_critical(spectral_c)
    sub = perron_eigen(load_model(json.dumps({"d": 1, "offspring": [[
        {"counts": [0], "prob": 0.6}, {"counts": [2], "prob": 0.4}]]})))
    assert not check_critical(sub)


def test_criticality_gate(spectral_a):
    sub = perron_eigen(load_model(json.dumps({"d": 1, "offspring": [[
        {"counts": [0], "prob": 0.6}, {"counts": [2], "prob": 0.4}]]})))
    with pytest.raises(NotCriticalError):
        survival_asymptote(sub, [1])
    # override works
    assert survival_asymptote(sub, [1], allow_noncritical=True) > 0


def test_normalization_identities(spectral_a, spectral_b, spectral_c):
    for sd in (spectral_a, spectral_b, spectral_c):
        assert abs(sd.v.sum() - 1.0) <= 1e-10
        assert abs(float(sd.u @ sd.v) - 1.0) <= 1e-10
        assert abs(sd.alpha.sum() - 1.0) <= 1e-10
        assert (sd.alpha > 0).all()
        assert sd.q_u > 0


def test_harmonic_identity_exact(model_c, spectral_c):
    # <u, E_z[Z(1)]> = lambda <u, z>, via the exact mean matrix
    mean = moments(model_c).mean
    for z in ([1, 0], [0, 1], [3, 2]):
        z = np.asarray(z, dtype=float)
        lhs = float((z @ mean) @ spectral_c.u)
        rhs = spectral_c.lam * float(spectral_c.u @ z)
        assert lhs == pytest.approx(rhs, abs=1e-10)


def test_invariance_under_reparse(model_c, spectral_c):
    again = perron_eigen(load_model(model_to_config(model_c)))
    assert abs(again.lam - spectral_c.lam) <= 1e-9
    assert np.abs(again.u - spectral_c.u).max() <= 1e-9
    assert np.abs(again.v - spectral_c.v).max() <= 1e-9


def test_nonconvergence_raises(model_c):
    with pytest.raises(ConvergenceError):
        perron_eigen(model_c, tol=1e-15, max_iter=2)
