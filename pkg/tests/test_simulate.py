import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from setclass import simulate
from setclass.pipeline import TrainConfig
from setclass.simulate import (
    SimulationConfig,
    covariance_factor,
    draw_hyper,
    generate_dataset,
    omega_cov,
    run_benchmark,
    sample_inv_wishart,
    sample_vmf,
    sample_wishart,
)


def _omega_oracle(p, rho, s):
    return np.array([[s[i] * (rho ** (abs(i - j) ** (1 / 7)) if i != j else 1.0) * s[j] for j in range(p)]
                     for i in range(p)])


def test_omega_examples():
    rng = np.random.default_rng(0)
    Om = omega_cov(6, 0.0, rng)
    np.testing.assert_array_equal(Om, np.diag(np.diag(Om)))
    assert ((np.diag(Om) >= 0.64) & (np.diag(Om) <= 1.44)).all()
    Om1 = omega_cov(6, 1.0, np.random.default_rng(1))
    s = np.sqrt(np.diag(Om1))
    np.testing.assert_allclose(Om1, np.outer(s, s), rtol=1e-12)
    Om2 = omega_cov(2, 0.5, np.random.default_rng(2))
    assert Om2[0, 1] / math.sqrt(Om2[0, 0] * Om2[1, 1]) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        omega_cov(3, 1.5, rng)


@given(st.integers(0, 2**31 - 1), st.integers(1, 12), st.floats(0.0, 1.0))
def test_omega_matches_oracle(seed, p, rho):
    Om = omega_cov(p, rho, np.random.default_rng(seed))
    s = np.random.default_rng(seed).uniform(0.8, 1.2, size=p)
    np.testing.assert_allclose(Om, _omega_oracle(p, rho, s), rtol=1e-10, atol=1e-300)


def test_model2_covariance_mean():
    cfg = SimulationConfig(model=2, p=6, N=2)
    rng = np.random.default_rng(3)
    h = draw_hyper(cfg, rng)
    for k in (1, 2):
        acc = sum(simulate.draw_covariance(cfg, h, k, rng) for _ in range(5000)) / 5000
        assert np.linalg.norm(acc - h.V[k]) / np.linalg.norm(h.V[k]) < 0.05


@pytest.mark.parametrize("m", [3, 8])
def test_wishart_mean_both_branches(m):
    rng = np.random.default_rng(m)
    V = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 0.5]])
    acc = sum(sample_wishart(V, m, rng) for _ in range(4000)) / 4000
    assert np.linalg.norm(acc / m - V) / np.linalg.norm(V) < 0.05


def test_inverse_wishart_is_inverse_of_wishart():
    V = np.array([[2.0, 0.3], [0.3, 1.0]])
    a = sample_inv_wishart(V, 5, np.random.default_rng(4))
    b = sample_wishart(np.linalg.inv(V), 5, np.random.default_rng(4))
    np.testing.assert_allclose(a @ b, np.eye(2), atol=1e-10)
    # E[IW(V, nu)] = V / (nu - p - 1) when nu > p + 1
    rng = np.random.default_rng(5)
    acc = sum(sample_inv_wishart(V, 12, rng) for _ in range(20000)) / 20000
    assert np.linalg.norm(acc - V / 9) / np.linalg.norm(V / 9) < 0.05
    with pytest.raises(ValueError):
        sample_inv_wishart(V, 1, rng)


def test_vmf():
    rng = np.random.default_rng(6)
    mu = np.zeros(5)
    mu[0] = 1.0
    draws = np.array([sample_vmf(mu, 0.0, rng) for _ in range(5000)])
    assert np.linalg.norm(draws.mean(axis=0)) < 0.05
    tight = np.array([sample_vmf(mu, 1e6, rng) for _ in range(200)])
    assert np.arccos(np.clip(tight @ mu, -1, 1)).max() < 0.01
    np.testing.assert_allclose(np.linalg.norm(tight, axis=1), 1.0)
    with pytest.raises(ValueError):
        sample_vmf(2 * mu, 1.0, rng)


def test_vmf_mean_resultant_length():
    # E[mu'u] = I_{d/2}(kappa) / I_{d/2-1}(kappa); for d=3 this is coth(kappa) - 1/kappa
    rng = np.random.default_rng(7)
    mu = np.array([0.0, 0.0, 1.0])
    kappa = 2.0
    w = np.array([sample_vmf(mu, kappa, rng) @ mu for _ in range(20000)])
    assert w.mean() == pytest.approx(1 / math.tanh(kappa) - 1 / kappa, abs=0.01)


def test_determinism_and_shape():
    cfg = SimulationConfig(model=1, p=20, N=10, seed=7)
    a, at = generate_dataset(cfg)
    b, bt = generate_dataset(cfg)
    for x, y in zip(a.sets + at.sets, b.sets + bt.sets):
        np.testing.assert_array_equal(x.observations, y.observations)
        assert x.set_id == y.set_id and x.label == y.label
    assert list(a.labels) == [1] * 5 + [2] * 5
    assert (a.sizes >= 10).all() and (at.sizes >= 10).all()
    c, _ = generate_dataset(cfg, replication=1)
    assert not np.array_equal(a.sets[0].observations, c.sets[0].observations)


def test_class_means():
    cfg = SimulationConfig(model=2, p=5, N=400, seed=1)
    tr, _ = generate_dataset(cfg)
    m1 = np.mean([s.observations.mean(axis=1) for s in tr.sets if s.label == 1], axis=0)
    m2 = np.mean([s.observations.mean(axis=1) for s in tr.sets if s.label == 2], axis=0)
    np.testing.assert_allclose(m1, [1, 0, 0, 0, 0], atol=0.2)
    np.testing.assert_allclose(m2, 0, atol=0.2)


@pytest.mark.parametrize("model", [1, 2, 3, 4])
def test_covariances_psd(model):
    cfg = SimulationConfig(model=model, p=8, N=2, rho=0.5)
    rng = np.random.default_rng(model)
    h = draw_hyper(cfg, rng)
    for k in (1, 2):
        for _ in range(20):
            S = simulate.draw_covariance(cfg, h, k, rng)
            np.testing.assert_allclose(S, S.T, atol=1e-10)
            assert np.linalg.eigvalsh(S)[0] >= -1e-8 * max(1.0, np.abs(S).max())


def test_model1_covariance_is_shared():
    cfg = SimulationConfig(model=1, p=4, N=2)
    rng = np.random.default_rng(0)
    h = draw_hyper(cfg, rng)
    F1, F2 = covariance_factor(cfg, h, 1, rng), covariance_factor(cfg, h, 2, rng)
    np.testing.assert_array_equal(F1 @ F1.T, F2 @ F2.T)


def test_config_validation():
    with pytest.raises(ValueError):
        SimulationConfig(N=5)
    with pytest.raises(ValueError):
        SimulationConfig(model=5)
    with pytest.raises(ValueError):
        SimulationConfig(rho=-0.1)
    assert SimulationConfig(N=4).test_sets == 4
    assert SimulationConfig(N=4, n_test=8).test_sets == 8


def test_benchmark_report():
    cfg = SimulationConfig(model=2, p=10, N=6, seed=2, replications=3)
    tc = TrainConfig(B=50)
    a = run_benchmark(cfg, ["PCF-LDA", "LDA-WV", "YA"], tc)
    b = run_benchmark(cfg, ["PCF-LDA", "LDA-WV", "YA"], tc, threads=3)
    assert a.to_csv() == b.to_csv()
    assert a.methods == ["PCF-LDA", "LDA-WV", "YA-WV"]
    lines = a.to_csv().splitlines()
    assert lines[0].startswith("# config: ")
    assert lines[1] == "method,mean_error,sd,se,n_ok,n_failed"
    for m in a.methods:
        assert 0 <= a.mean(m) <= 100 and len(a.errors[m]) == 3
    assert a.replications == 3
    assert "r_hat = 0" in a.to_table()
    with pytest.raises(ValueError):
        run_benchmark(cfg, ["SVM"])


def test_single_replication_has_no_se():
    rep = run_benchmark(SimulationConfig(model=1, p=6, N=4, replications=1), ["LDA-WV"])
    assert math.isnan(rep.se("LDA-WV"))
    assert "nan" in rep.to_csv().splitlines()[2]


def test_failures_are_recorded(monkeypatch):
    real = simulate.classify.fit_rule

    def flaky(kind, X, y, gamma=0.01):
        if kind == "qda":
            raise np.linalg.LinAlgError("forced")
        return real(kind, X, y, gamma)

    monkeypatch.setattr(simulate.classify, "fit_rule", flaky)
    rep = run_benchmark(SimulationConfig(model=1, p=6, N=4, replications=2), ["QDA-WV", "LDA-WV"])
    assert len(rep.failures["QDA-WV"]) == 2 and not rep.failures["LDA-WV"]
    assert math.isnan(rep.mean("QDA-WV")) and not math.isnan(rep.mean("LDA-WV"))
