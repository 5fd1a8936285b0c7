import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eis_saliency.evaluation import (PRCurve, ScoreReport, adaptive_scores, auc, f_beta, f_measure,
                                     pr_curve, read_report, score_image, write_curve, write_report)
from eis_saliency.imaging import ValidationError, normalize_map

from eval_oracles import counting_f, counting_pr, trapezoid_auc


@pytest.fixture
def gt():
    g = np.zeros((8, 8), dtype=bool)
    g[2:6, 3:7] = True
    return g


def test_perfect_map(gt):
    c = pr_curve(gt.astype(float), gt)
    assert (c.precision[:255] == 1).all() and (c.recall[:255] == 1).all()
    assert f_measure(gt.astype(float), gt) == 1.0
    assert auc(c) == 1.0


def test_inverted_map(gt):
    c = pr_curve(1.0 - gt, gt)
    assert (c.precision[:255] == 0).all()
    assert f_measure(1.0 - gt, gt) == 0.0


def test_hand_4x4_against_counting():
    s = np.array([[0.0, 0.1, 0.5, 0.9], [0.2, 0.4, 0.6, 1.0],
                  [0.3, 0.3, 0.7, 0.8], [0.05, 0.15, 0.25, 0.35]])
    g = s > 0.45
    g[3, 3] = True
    c = pr_curve(s, g)
    p, r = counting_pr(s, g)
    assert np.array_equal(c.precision, p) and np.array_equal(c.recall, r)


@given(st.integers(0, 2**31))
def test_random_8x8_against_counting(seed):
    rng = np.random.default_rng(seed)
    s = rng.random((8, 8)) ** rng.uniform(0.3, 3)
    g = rng.random((8, 8)) < rng.uniform(0.1, 0.6)
    g[rng.integers(8), rng.integers(8)] = True
    c = pr_curve(s, g)
    p, r = counting_pr(s, g)
    assert np.abs(c.precision - p).max() <= 1e-12 and np.abs(c.recall - r).max() <= 1e-12
    assert abs(f_measure(s, g) - counting_f(s, g)) <= 1e-12
    assert abs(auc(c) - trapezoid_auc(p, r)) <= 1e-12
    assert (np.diff(c.recall) <= 0).all()


def test_f_examples():
    assert f_beta(0.5, 0.5) == pytest.approx(0.5)
    assert f_beta(0.8, 0.4) == pytest.approx(0.65)
    assert f_beta(0.0, 0.0) == 0.0


def test_f_hand_instance_p08_r04():
    # 5 predicted pixels, 4 of them correct, out of 10 ground-truth pixels
    s = np.zeros((10, 10))
    g = np.zeros((10, 10), dtype=bool)
    g[0, :] = True
    s[0, :4] = 1.0
    s[5, 5] = 1.0
    p, r, f = adaptive_scores(s, g)
    assert (p, r) == (0.8, 0.4)
    assert f == pytest.approx(0.65)


def test_threshold_capped_on_uniform_map(gt):
    s = np.full((8, 8), 0.5)
    p, r, _ = adaptive_scores(s, gt)
    assert r == 1.0 and p == gt.mean()


def test_zero_map_has_no_recall(gt):
    p, r, f = adaptive_scores(np.zeros((8, 8)), gt)
    assert (p, r, f) == (1.0, 0.0, 0.0)


def test_auc_examples():
    assert auc(PRCurve(np.ones(5), np.linspace(0, 1, 5))) == 1.0
    assert auc(PRCurve(np.array([0.7]), np.array([0.3]))) == 0.0
    c = PRCurve(np.array([1.0, 0.8, 0.5]), np.array([0.0, 0.5, 1.0]))
    assert auc(c) == pytest.approx(0.5 * 0.9 + 0.5 * 0.65)


@given(st.integers(0, 2**31), st.floats(0.5, 3))
def test_quantization_invariance(seed, k):
    rng = np.random.default_rng(seed)
    raw = rng.random((8, 8)) * k
    g = rng.random((8, 8)) < 0.4
    g[0, 0] = True
    a = pr_curve(normalize_map(raw), g)
    b = pr_curve(normalize_map(normalize_map(raw)), g)
    assert np.array_equal(a.precision, b.precision) and np.array_equal(a.recall, b.recall)


def test_errors(gt):
    with pytest.raises(ValidationError):
        pr_curve(np.zeros((8, 8)), np.zeros((8, 8), dtype=bool))
    with pytest.raises(ValidationError):
        f_measure(np.zeros((4, 4)), gt)


def test_report_means_and_csv(tmp_path, rng):
    rows = []
    for i in range(5):
        g = rng.random((8, 8)) < 0.3
        g[0, 0] = True
        rows.append(score_image(f"im{i}", rng.random((8, 8)), g))
    report = ScoreReport(rows)
    for attr in ("precision", "recall", "f_measure", "auc"):
        assert getattr(report, attr) == pytest.approx(np.mean([getattr(r, attr) for r in rows]))
        assert 0.0 <= getattr(report, attr) <= 1.0
    write_report(tmp_path / "r.csv", report)
    text = (tmp_path / "r.csv").read_text()
    assert text.splitlines()[0] == "image_id,precision,recall,f_measure,auc"
    parsed = read_report(tmp_path / "r.csv")
    assert set(parsed) == {f"im{i}" for i in range(5)} | {"mean"}
    assert parsed["mean"]["auc"] == pytest.approx(report.auc, abs=1e-9)
    write_curve(tmp_path / "c.csv", report.mean_curve())
    assert len((tmp_path / "c.csv").read_text().splitlines()) == 257
