import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eis_saliency.classifier import (LinearModel, SingleClassError, dump_model, external_map,
                                     load_model_coefficients, optimal_bias, predict,
                                     primal_objective, train)
from eis_saliency.imaging import ValidationError
from eis_saliency.proposals import RegionProposal

from svm_oracles import qp_oracle, separable_dataset


def standardized(x):
    return (x - x.mean(axis=0)) / x.std(axis=0)


def test_toy_separable():
    x = np.zeros((6, 81))
    x[:3, 0] = 1.0
    x[3:, 0] = -1.0
    x[:, 1] = np.arange(6)
    y = np.array([1, 1, 1, -1, -1, -1.0])
    m = train((x, y))
    assert (np.sign(m.decision(x)) == y).all()
    assert m.n_pos == 3 and m.n_neg == 3


def test_label_flip_negates_model(rng):
    x, y = separable_dataset(rng, 30, 5)
    a, b = train((x, y)), train((x, -y))
    assert np.allclose(a.weights, -b.weights, atol=1e-6)
    assert a.bias == pytest.approx(-b.bias, abs=1e-5)


@pytest.mark.parametrize("seed", range(3))
def test_matches_qp_oracle_20_points(seed):
    r = np.random.default_rng(seed)
    x, y = separable_dataset(r, 20, 81)
    m = train((x, y))
    z = standardized(x)
    _, _, ref = qp_oracle(z, y)
    assert primal_objective(m.weights, m.bias, z, y, 1.0) == pytest.approx(ref, abs=1e-4)
    assert m.duality_gap < 1e-6


@settings(max_examples=20)
@given(st.integers(0, 2**31), st.integers(4, 40), st.integers(1, 6), st.floats(0.05, 10))
def test_history_monotone_and_gap(seed, n, d, c):
    r = np.random.default_rng(seed)
    x = r.normal(size=(n, d))
    y = np.where(r.random(n) < 0.5, -1.0, 1.0)
    y[0], y[1] = 1.0, -1.0
    m = train((x, y), C=c)
    primal = [h[0] for h in m.history]
    dual = [h[1] for h in m.history]
    assert all(p1 <= p0 for p0, p1 in zip(primal, primal[1:]))
    assert all(d1 >= d0 - 1e-12 for d0, d1 in zip(dual, dual[1:]))
    assert m.duality_gap < 1e-6 or m.epochs == 10_000


@given(st.integers(0, 2**31))
def test_sample_order_invariance(seed):
    r = np.random.default_rng(seed)
    x, y = separable_dataset(r, 25, 4)
    perm = r.permutation(25)
    a, b = train((x, y)), train(list(zip(x[perm], y[perm])))
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


def test_training_errors():
    x = np.zeros((3, 2))
    with pytest.raises(SingleClassError):
        train((x, np.ones(3)))
    with pytest.raises(SingleClassError):
        train([])
    with pytest.raises(ValidationError):
        train((x, np.array([1.0, 0.0, -1.0])))
    with pytest.raises(ValidationError):
        train((x, np.array([1.0, 1.0, -1.0])), C=0.0)


def test_optimal_bias_against_grid(rng):
    s = rng.normal(size=15)
    y = np.where(rng.random(15) < 0.5, -1.0, 1.0)
    b, loss = optimal_bias(s, y)
    grid = np.linspace(-5, 5, 20001)
    losses = np.maximum(0, 1 - y[None] * (s[None] + grid[:, None])).sum(axis=1)
    assert loss <= losses.min() + 1e-12
    assert loss == pytest.approx(np.maximum(0, 1 - y * (s + b)).sum())


def hand_model(w, b):
    d = len(w)
    return LinearModel(np.asarray(w, float), b, np.zeros(d), np.ones(d))


def test_predict_examples(rng):
    x, y = separable_dataset(rng, 30, 3)
    m = train((x, y))
    assert predict(m, m.mean) == pytest.approx(m.bias)
    margins = y * m.decision(x)
    assert (np.sign(m.decision(x))[margins > 1] == y[margins > 1]).all()
    w = rng.normal(size=81)
    v = rng.normal(size=81)
    expected = sum(wi * vi for wi, vi in zip(w, v)) + 0.25
    assert predict(hand_model(w, 0.25), v) == pytest.approx(expected, abs=1e-12)


def test_out_of_range_features_are_clipped(rng):
    x, y = separable_dataset(rng, 30, 3)
    m = train((x, y))
    far = x.max(axis=0) + 100.0
    assert predict(m, far) == pytest.approx(predict(m, x.max(axis=0)))


def test_dump_roundtrip(tmp_path, rng):
    x, y = separable_dataset(rng, 30, 5)
    m = train((x, y))
    dump_model(tmp_path / "m.txt", m)
    w, b = load_model_coefficients(tmp_path / "m.txt")
    assert len(w) == 5
    assert np.allclose(x @ w + b, m.decision(x), atol=1e-9)


# external map ------------------------------------------------------------------

def region(mask, score):
    return RegionProposal(mask=np.asarray(mask, dtype=bool), score=score)


def test_external_all_negative_is_zero():
    m = np.eye(4, dtype=bool)
    assert not external_map((4, 4), [region(m, -1.0), region(~m, 0.0)]).any()


def test_external_single_region_indicator():
    m = np.zeros((4, 4), dtype=bool)
    m[1:3, :] = True
    assert np.array_equal(external_map((4, 4), [region(m, 1.0)]), m.astype(float))


def test_external_overlap_values():
    a = np.zeros((1, 4), dtype=bool)
    a[0, :2] = True
    b = np.zeros((1, 4), dtype=bool)
    b[0, 1:3] = True
    got = external_map((1, 4), [region(a, 1.0), region(b, 0.5)])
    assert np.allclose(got, [[2 / 3, 1.0, 1 / 3, 0.0]], atol=1e-15)


def test_external_without_clamp_allows_negative():
    a = np.zeros((1, 3), dtype=bool)
    a[0, 0] = True
    got = external_map((1, 3), [region(a, -1.0)], clamp=False)
    assert got.tolist() == [[0.0, 1.0, 1.0]]


@given(st.integers(0, 2**31), st.floats(0.01, 100))
def test_external_permutation_and_scale(seed, c):
    r = np.random.default_rng(seed)
    masks = r.random((12, 6, 6)) < 0.4
    scores = r.normal(size=12)
    regions = [region(m, s) for m, s in zip(masks, scores)]
    ref = external_map((6, 6), regions)
    perm = r.permutation(12)
    assert np.array_equal(external_map((6, 6), [regions[i] for i in perm]), ref)
    scaled = external_map((6, 6), [region(m, c * s) for m, s in zip(masks, scores)])
    assert np.allclose(scaled, ref, atol=1e-12)


def test_external_requires_scores():
    with pytest.raises(ValidationError):
        external_map((2, 2), [RegionProposal(mask=np.ones((2, 2), dtype=bool))])
