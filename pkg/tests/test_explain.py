import numpy as np
import pytest

from oracles import random_mlp
from procfair.explain import (
    ExplanationSet,
    exact_shapley,
    grad_explanations,
    kernel_shap,
    shap_explanations,
)
from procfair.model import MlpParams, mlp_init, mlp_logits


def _linear_predict(w, b=0.0):
    return lambda X: np.atleast_2d(X) @ w + b


def test_grad_explanations_delegate_to_input_gradient():
    params = mlp_init(3, 5, seed=1)
    rows = np.random.default_rng(0).normal(size=(6, 3))
    es = grad_explanations(params, rows)
    from procfair.model import input_gradients

    np.testing.assert_array_equal(es.attributions, input_gradients(params, rows))
    assert es.method == "grad" and es.base_value == 0.0


def test_grad_explanations_zero_network():
    params = MlpParams(W1=np.zeros((4, 3)), b1=np.zeros(4), w2=np.zeros(4), b2=1.0)
    es = grad_explanations(params, np.ones((5, 3)))
    assert (es.attributions == 0).all()


def test_grad_explanations_linear_network():
    w = np.array([1.5, -2.5])
    params = MlpParams(W1=np.eye(2), b1=np.full(2, 100.0), w2=w, b2=0.0)
    es = grad_explanations(params, np.random.default_rng(1).normal(size=(4, 2)))
    np.testing.assert_array_equal(es.attributions, np.tile(w, (4, 1)))


def test_kernel_shap_linear_closed_form():
    # single background row mu: phi_i = w_i (x_i - mu_i)
    w = np.array([2.0, -1.0, 0.5])
    mu = np.array([[0.3, -0.2, 1.0]])
    x = np.array([1.0, 1.0, -1.0])
    phi, base = kernel_shap(_linear_predict(w, b=0.7), x, mu)
    np.testing.assert_allclose(phi, w * (x - mu[0]), atol=1e-10)
    assert base == pytest.approx(float(mu[0] @ w + 0.7), abs=1e-12)


def test_kernel_shap_constant_model():
    phi, base = kernel_shap(lambda X: np.full(np.atleast_2d(X).shape[0], 3.25),
                            np.array([1.0, 2.0]), np.zeros((5, 2)))
    np.testing.assert_allclose(phi, 0.0, atol=1e-10)
    assert base == pytest.approx(3.25)


def test_kernel_shap_d1_analytic():
    phi, base = kernel_shap(_linear_predict(np.array([2.0])), np.array([3.0]),
                            np.array([[1.0]]))
    assert phi[0] == pytest.approx(4.0, abs=1e-12)  # f(x) - f(mu)
    assert base == pytest.approx(2.0)


def test_kernel_shap_exhaustive_matches_exact_shapley():
    rng = np.random.default_rng(12)
    for d in (2, 3, 4, 5, 6):
        params = random_mlp(rng, d, 6)
        predict = lambda X: mlp_logits(params, X)
        x = rng.normal(size=d)
        background = rng.normal(size=(20, d))
        phi_k, base_k = kernel_shap(predict, x, background, budget="exhaustive")
        phi_e, base_e = exact_shapley(predict, x, background)
        np.testing.assert_allclose(phi_k, phi_e, atol=1e-6)
        assert base_k == pytest.approx(base_e, abs=1e-12)


def test_kernel_shap_efficiency_exhaustive():
    rng = np.random.default_rng(4)
    params = random_mlp(rng, 5, 7)
    predict = lambda X: mlp_logits(params, X)
    x = rng.normal(size=5)
    bg = rng.normal(size=(30, 5))
    phi, base = kernel_shap(predict, x, bg)
    assert phi.sum() + base == pytest.approx(float(predict(x[None])[0]), abs=1e-6)


def test_kernel_shap_dummy_feature_zero():
    # feature 2 never influences the model: phi_2 = 0 under enumeration
    w = np.array([1.0, -2.0, 0.0])
    rng = np.random.default_rng(9)
    phi, _ = kernel_shap(_linear_predict(w), rng.normal(size=3), rng.normal(size=(10, 3)))
    assert abs(phi[2]) < 1e-10


def test_kernel_shap_budget_validation():
    with pytest.raises(ValueError, match="budget"):
        kernel_shap(_linear_predict(np.ones(4)), np.ones(4), np.zeros((3, 4)), budget=3)
    with pytest.raises(ValueError, match="background"):
        kernel_shap(_linear_predict(np.ones(2)), np.ones(2), np.zeros((0, 2)))


def test_kernel_shap_sampled_budget_consistency():
    rng = np.random.default_rng(31)
    d = 8
    params = random_mlp(rng, d, 8)
    predict = lambda X: mlp_logits(params, X)
    x = rng.normal(size=d)
    bg = rng.normal(size=(15, d))
    phi_exact, _ = exact_shapley(predict, x, bg)
    devs = {}
    for budget in (64, 256):
        errs = []
        for seed in range(6):
            phi, _ = kernel_shap(predict, x, bg, budget=budget, seed=seed)
            errs.append(np.abs(phi - phi_exact).mean())
        devs[budget] = np.mean(errs)
    assert devs[256] < devs[64]


def test_kernel_shap_deterministic_per_seed():
    rng = np.random.default_rng(2)
    d = 13  # forces the sampled path under the default budget
    params = random_mlp(rng, d, 5)
    predict = lambda X: mlp_logits(params, X)
    x = rng.normal(size=d)
    bg = rng.normal(size=(8, d))
    a, _ = kernel_shap(predict, x, bg, budget=200, seed=7)
    b, _ = kernel_shap(predict, x, bg, budget=200, seed=7)
    np.testing.assert_array_equal(a, b)
    c, _ = kernel_shap(predict, x, bg, budget=200, seed=8)
    assert not np.array_equal(a, c)


def test_exact_shapley_d1_and_symmetry():
    phi, base = exact_shapley(_linear_predict(np.array([3.0])), np.array([2.0]),
                              np.array([[0.0], [1.0]]))
    # f(x) - mean f(background) = 6 - 1.5
    assert phi[0] == pytest.approx(4.5, abs=1e-12)
    assert base == pytest.approx(1.5)

    # symmetric model and inputs: phi_1 = phi_2
    predict = lambda X: np.atleast_2d(X).sum(axis=1)
    phi, _ = exact_shapley(predict, np.array([2.0, 2.0]), np.array([[0.0, 0.0]]))
    assert phi[0] == pytest.approx(phi[1], abs=1e-12)


def test_exact_shapley_efficiency_axiom():
    rng = np.random.default_rng(17)
    for _ in range(5):
        d = int(rng.integers(2, 7))
        params = random_mlp(rng, d, 5)
        predict = lambda X: mlp_logits(params, X)
        x = rng.normal(size=d)
        bg = rng.normal(size=(12, d))
        phi, base = exact_shapley(predict, x, bg)
        assert phi.sum() + base == pytest.approx(float(predict(x[None])[0]), abs=1e-9)


def test_exact_shapley_dimension_limit():
    with pytest.raises(ValueError, match="<= 12"):
        exact_shapley(lambda X: np.zeros(np.atleast_2d(X).shape[0]),
                      np.zeros(13), np.zeros((2, 13)))


def test_shap_explanations_batch(tmp_path):
    params = mlp_init(4, 6, seed=5)
    rows = np.random.default_rng(3).normal(size=(7, 4))
    bg = np.random.default_rng(4).normal(size=(10, 4))
    es = shap_explanations(params, rows, bg)
    assert es.method == "kernel_shap"
    assert es.attributions.shape == (7, 4)
    # batch output equals row-by-row calls
    for r in range(7):
        phi, _ = kernel_shap(lambda X: mlp_logits(params, X), rows[r], bg)
        np.testing.assert_allclose(es.attributions[r], phi, atol=1e-10)

    from procfair.explain import write_explanations_csv

    path = tmp_path / "e.csv"
    write_explanations_csv(es, np.zeros(7, dtype=int), ("a", "b", "c", "d"), path, "hash1")
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "# config_hash=hash1"
    assert lines[1].startswith("row_ref,group,a,b,c,d,base_value,method")
    assert len(lines) == 2 + 7


def test_explanation_set_validation():
    with pytest.raises(ValueError, match="finite"):
        ExplanationSet(attributions=np.array([[np.inf]]), method="grad",
                       row_refs=np.array([0]))
    with pytest.raises(ValueError, match="matching"):
        ExplanationSet(attributions=np.zeros((2, 2)), method="grad",
                       row_refs=np.array([0]))
