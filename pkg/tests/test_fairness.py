import numpy as np
import pytest

from procfair.fairness import (
    FairnessReport,
    MmdConfig,
    demographic_parity,
    disparate_impact,
    equal_opportunity,
    equalized_odds,
    gpf_loss,
    mmd,
    mmd_permutation_pvalue,
)


def test_demographic_parity_hand_counts():
    assert demographic_parity([1, 1, 0, 0], [1, 1, 0, 0]) == 1.0
    assert demographic_parity([1, 0, 1, 0], [1, 1, 0, 0]) == 0.0
    # rates 0.65 / 0.35 over 20-row groups
    preds = [1] * 13 + [0] * 7 + [1] * 7 + [0] * 13
    groups = [1] * 20 + [0] * 20
    assert demographic_parity(preds, groups) == pytest.approx(0.30, abs=1e-12)
    with pytest.raises(ValueError):
        demographic_parity([1, 0], [1, 1])


def test_disparate_impact():
    # rates 0.4 / 0.5: the four-fifths boundary
    preds = [1, 1, 0, 0, 0] + [1, 1, 1, 0, 0, 0]
    groups = [1] * 5 + [0] * 6
    assert disparate_impact(preds, groups) == pytest.approx(0.8, abs=1e-12)
    assert disparate_impact([1, 0, 1, 0], [1, 1, 0, 0]) == 1.0
    assert disparate_impact([1, 1, 0, 0], [1, 1, 0, 0]) is None


def test_di_reciprocal_and_dp_symmetry():
    rng = np.random.default_rng(0)
    preds = rng.integers(0, 2, 50)
    groups = rng.integers(0, 2, 50)
    flipped = 1 - groups
    assert demographic_parity(preds, groups) == demographic_parity(preds, flipped)
    di = disparate_impact(preds, groups)
    di_flip = disparate_impact(preds, flipped)
    if di and di_flip:
        assert di == pytest.approx(1.0 / di_flip, rel=1e-12)


def test_metrics_invariant_under_joint_permutation():
    rng = np.random.default_rng(1)
    preds = rng.integers(0, 2, 60)
    labels = rng.integers(0, 2, 60)
    groups = np.array([1] * 30 + [0] * 30)
    perm = rng.permutation(60)
    assert demographic_parity(preds, groups) == demographic_parity(preds[perm], groups[perm])
    assert equal_opportunity(preds, labels, groups) == equal_opportunity(
        preds[perm], labels[perm], groups[perm]
    )
    assert equalized_odds(preds, labels, groups) == equalized_odds(
        preds[perm], labels[perm], groups[perm]
    )


def test_equal_opportunity_and_odds_hand_counts():
    labels = np.array([1, 1, 0, 0, 1, 1, 0, 0])
    groups = np.array([1, 1, 1, 1, 0, 0, 0, 0])
    perfect = labels.copy()
    assert equal_opportunity(perfect, labels, groups) == 0.0
    assert equalized_odds(perfect, labels, groups) == 0.0

    # TPRs 1.0 vs 0.5, FPRs equal (0)
    preds = np.array([1, 1, 0, 0, 1, 0, 0, 0])
    assert equal_opportunity(preds, labels, groups) == 0.5
    assert equalized_odds(preds, labels, groups) == 0.5

    # TPRs equal, FPRs 1.0 vs 0.0 -> EOP 0, EOD 1.0
    preds2 = np.array([1, 1, 1, 1, 1, 1, 0, 0])
    assert equal_opportunity(preds2, labels, groups) == 0.0
    assert equalized_odds(preds2, labels, groups) == 1.0

    # a group with no positives makes EOP undefined
    labels3 = np.array([0, 0, 0, 0, 1, 1, 0, 0])
    assert equal_opportunity(preds, labels3, groups) is None
    assert equalized_odds(preds, labels3, groups) is None


def test_gpf_loss_values():
    assert gpf_loss(np.ones((4, 3)), np.ones((4, 3))) == 0.0
    e1 = np.array([[1.0, 2.0], [0.0, 0.0]])
    e2 = np.array([[0.0, 2.0], [0.0, 0.0]])
    assert gpf_loss(e1, e2) == pytest.approx(0.5, abs=1e-15)
    c = -3.7
    assert gpf_loss(c * e1, c * e2) == pytest.approx(abs(c) * 0.5, rel=1e-12)
    with pytest.raises(ValueError, match="shape"):
        gpf_loss(np.ones((2, 2)), np.ones((3, 2)))


def test_mmd_identical_multisets_is_zero():
    rng = np.random.default_rng(3)
    e = rng.normal(size=(20, 4))
    assert mmd(e, e.copy()) <= 1e-12


def test_mmd_singleton_closed_form():
    a = np.array([[0.0, 0.0]])
    b = np.array([[3.0, 4.0]])  # distance 5
    cfg = MmdConfig(bandwidth=5.0, n_permutations=100)
    assert mmd(a, b, cfg) == pytest.approx(2.0 - 2.0 * np.exp(-1.0), abs=1e-12)
    # gaussian kernel variant: exp(-r^2 / (2 sigma^2)) with r = sigma
    cfg_g = MmdConfig(kernel="gaussian", bandwidth=5.0, n_permutations=100)
    assert mmd(a, b, cfg_g) == pytest.approx(2.0 - 2.0 * np.exp(-0.5), abs=1e-12)


def test_mmd_symmetry_and_within_set_permutation_invariance():
    rng = np.random.default_rng(4)
    e1 = rng.normal(size=(15, 3))
    e2 = rng.normal(size=(11, 3)) + 0.5
    cfg = MmdConfig(bandwidth=2.0)
    assert mmd(e1, e2, cfg) == pytest.approx(mmd(e2, e1, cfg), abs=1e-15)
    perm = rng.permutation(15)
    assert mmd(e1[perm], e2, cfg) == pytest.approx(mmd(e1, e2, cfg), abs=1e-12)


def test_mmd_shrinks_for_same_distribution_samples():
    rng = np.random.default_rng(5)
    vals = {}
    for n in (40, 400):
        e1 = rng.normal(size=(n, 3))
        e2 = rng.normal(size=(n, 3))
        vals[n] = mmd(e1, e2, MmdConfig(bandwidth=2.0))
    assert vals[400] < vals[40]


def test_mmd_all_identical_points():
    e = np.ones((6, 2))
    assert mmd(e, np.ones((4, 2))) == 0.0


def test_permutation_pvalue_identical_sets_exactly_one():
    rng = np.random.default_rng(6)
    e = rng.normal(size=(30, 3))
    p, obs = mmd_permutation_pvalue(e, e.copy(), MmdConfig(n_permutations=200, seed=1))
    assert p == 1.0
    assert obs == 0.0


def test_permutation_pvalue_range_and_power():
    rng = np.random.default_rng(7)
    e1 = rng.normal(size=(40, 3))
    e2 = rng.normal(size=(40, 3)) + 4.0  # far-separated
    cfg = MmdConfig(n_permutations=400, seed=2)
    p, _ = mmd_permutation_pvalue(e1, e2, cfg)
    assert p == pytest.approx(1.0 / 401.0)
    p_null, _ = mmd_permutation_pvalue(e1, rng.normal(size=(40, 3)), cfg)
    assert 1.0 / 401.0 <= p_null <= 1.0


def test_permutation_pvalue_monotone_in_separation():
    rng = np.random.default_rng(8)
    base1 = rng.normal(size=(30, 3))
    base2 = rng.normal(size=(30, 3))
    cfg = MmdConfig(bandwidth=2.0, n_permutations=300, seed=3)
    ps = []
    for shift in (0.0, 0.8, 2.5):
        p, _ = mmd_permutation_pvalue(base1 + shift, base2, cfg)
        ps.append(p)
    assert ps[0] >= ps[1] >= ps[2]


def test_mmd_config_validation():
    with pytest.raises(ValueError, match="kernel"):
        MmdConfig(kernel="cubic")
    with pytest.raises(ValueError, match="bandwidth"):
        MmdConfig(bandwidth=0.0)
    with pytest.raises(ValueError, match="n_permutations"):
        MmdConfig(n_permutations=10)


def test_fairness_report_round_trip(tmp_path):
    rep = FairnessReport(
        accuracy=0.9, dp=0.1, di=None, eop=0.05, eod=0.07,
        gpf_fae=0.5, gpf_loss=0.2, train_seconds=1.0, eval_seconds=0.5,
        di_reason="no positive predictions in disadvantaged group",
    )
    path = tmp_path / "r.json"
    rep.to_json(path)
    import json

    obj = json.loads(path.read_text())
    assert obj["di"] is None and obj["di_reason"].startswith("no positive")
    back = FairnessReport.from_dict(obj)
    assert back.accuracy == rep.accuracy and back.di is None
