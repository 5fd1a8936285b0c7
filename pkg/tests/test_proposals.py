import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from skimage import measure

from eis_saliency.imaging import ValidationError, normalize_map
from eis_saliency.proposals import (DegenerateSaliency, center_prior, confidence, decode_rle,
                                    encode_rle, generate_proposals, psi_map, read_masks,
                                    select_by_center_prior, select_regions, write_masks)
from eis_saliency.slic import build_layers
from eis_saliency.synthetic import make_scene

from conftest import solid


@pytest.fixture(scope="module")
def scene():
    s = make_scene(np.random.default_rng(5), 0, 128, 1)
    return s.image, build_layers(s.image)


def test_two_blocks_are_proposed():
    img = solid(64, 96, (200, 30, 30))
    img[:, 48:] = (20, 40, 220)
    props = generate_proposals(img, build_layers(img, (6, 12, 24)))
    left = np.zeros((64, 96), dtype=bool)
    left[:, :48] = True
    assert any(np.array_equal(p, left) for p in props)
    assert any(np.array_equal(p, ~left) for p in props)


def test_proposals_connected_and_plentiful(scene):
    img, layers = scene
    props = generate_proposals(img, layers)
    assert len(props) >= 100
    for p in props:
        assert measure.label(p, connectivity=1).max() == 1
        assert 0.01 * p.size <= p.sum() <= 0.9 * p.size
    assert all(np.array_equal(a, b) for a, b in zip(generate_proposals(img, layers), props))


def test_duplicate_layers_deduplicated(scene):
    img, layers = scene
    once = generate_proposals(img, layers[:2])
    twice = generate_proposals(img, layers[:2] + layers[:2])
    assert len(once) == len(twice)
    assert all(np.array_equal(a, b) for a, b in zip(once, twice))


def test_proposals_need_layers(square_image):
    with pytest.raises(ValidationError):
        generate_proposals(square_image, [])


# center prior -------------------------------------------------------------------

def test_center_prior_examples():
    g = center_prior(9, 7, 2.0, 1.5)
    assert g[3, 4] == 1.0
    assert g[3, 6] == pytest.approx(np.exp(-0.5))
    assert g.min() > 0 and g.max() <= 1


def test_center_prior_5x5_grid():
    g = center_prior(5, 5, 1.0, 1.0)
    y, x = np.mgrid[0:5, 0:5]
    ref = np.exp(-((x - 2) ** 2) / 2 - ((y - 2) ** 2) / 2)
    assert np.allclose(g, ref, rtol=0, atol=1e-15)


def test_center_prior_default_sigma_and_errors():
    assert center_prior(30, 12)[5, 14 + 10] == pytest.approx(np.exp(-0.5))
    with pytest.raises(ValidationError):
        center_prior(5, 5, 0.0, 1.0)


# psi ------------------------------------------------------------------------------

def test_psi_examples():
    s = np.array([[0.2, 1.0], [0.5, 0.0]])
    o = np.array([[1.0, 0.5], [0.8, 1.0]])
    g = np.array([[0.9, 1.0], [0.4, 0.7]])
    prod = s * o * g
    assert np.allclose(psi_map(s, o, g), prod / prod.max())
    assert not psi_map(s, np.zeros((2, 2)), g).any()
    ones = np.ones((2, 2))
    assert np.array_equal(psi_map(s, ones, ones), normalize_map(s))
    with pytest.raises(ValidationError):
        psi_map(s, np.ones((3, 3)), g)


# selection --------------------------------------------------------------------------

def eta(mask, psi, tau=0.4):
    num = 0.0
    for p, r in zip(psi.ravel(), mask.ravel()):
        num += p * r
    return (1 + tau) * num / (tau * psi.sum() + mask.sum())


def test_eta_extremes():
    psi = np.zeros((4, 4))
    psi[1:3, 1:3] = 1.0
    support = psi > 0
    assert confidence(support[None], psi)[0] == pytest.approx(1.0)
    disjoint = np.zeros((4, 4), dtype=bool)
    disjoint[0, 0] = True
    assert confidence(disjoint[None], psi)[0] == 0.0


def test_three_regions_hand_oracle():
    psi = np.array([[0.0, 0.2, 0.2, 0.0],
                    [0.1, 1.0, 0.8, 0.0],
                    [0.1, 0.9, 0.7, 0.0],
                    [0.0, 0.0, 0.0, 0.0]])
    a = np.zeros((4, 4), dtype=bool)
    a[1:3, 1:3] = True
    b = np.zeros((4, 4), dtype=bool)
    b[0:3, 0:3] = True
    c = np.zeros((4, 4), dtype=bool)
    c[3, :] = True
    total = psi.sum()
    expected = [1.4 * 3.4 / (0.4 * total + 4), 1.4 * total / (0.4 * total + 9), 0.0]
    assert confidence(np.stack([a, b, c]), psi) == pytest.approx(expected, abs=1e-12)
    ranked = select_regions(np.stack([c, b, a]), psi, 3)
    order = np.argsort(expected)[::-1]
    assert [r.confidence for r in ranked] == pytest.approx([expected[i] for i in order])
    assert np.array_equal(ranked[0].mask, [a, b, c][order[0]])


masks_and_psi = st.integers(4, 16).flatmap(lambda s: st.tuples(
    arrays(np.bool_, (6, s, s)), arrays(np.float64, (s, s), elements=st.floats(0, 1))))


@given(masks_and_psi)
def test_eta_bounded_and_matches_direct(args):
    masks, psi = args
    masks = masks[masks.reshape(6, -1).any(axis=1)]
    if not len(masks) or not psi.sum() > 0:
        return
    psi = normalize_map(psi)
    got = confidence(masks, psi)
    assert ((got >= 0) & (got <= 1 + 1e-12)).all()
    assert np.allclose(got, [eta(m, psi) for m in masks], rtol=0, atol=1e-10)


@settings(max_examples=20)
@given(st.integers(0, 2**31))
def test_selection_permutation_stable(seed):
    r = np.random.default_rng(seed)
    masks = r.random((30, 8, 8)) < 0.4
    masks[:, 0, 0] = True
    masks[5] = masks[3]  # exact tie
    psi = normalize_map(r.random((8, 8)))
    ref = select_regions(masks, psi, 10)
    for _ in range(3):
        perm = r.permutation(30)
        got = select_regions(masks[perm], psi, 10)
        assert [x.digest for x in got] == [x.digest for x in ref]


def test_ties_prefer_smaller_area():
    psi = np.zeros((4, 4))
    psi[3, 3] = 1.0  # neither region touches it: both confidences are 0
    big = np.zeros((4, 4), dtype=bool)
    big[0, :] = True
    small = np.zeros((4, 4), dtype=bool)
    small[1, 0] = True
    first, second = select_regions(np.stack([big, small]), psi, 2)
    assert first.confidence == second.confidence == 0.0
    assert first.area < second.area


def test_selection_errors():
    masks = np.ones((2, 4, 4), dtype=bool)
    with pytest.raises(ValidationError):
        select_regions(masks, np.ones((4, 4)), 3)
    with pytest.raises(DegenerateSaliency):
        select_regions(masks, np.zeros((4, 4)), 1)
    with pytest.raises(ValidationError):
        select_regions(masks, np.ones((4, 4)), 1, tau=0.0)


def test_center_prior_fallback_prefers_central_regions():
    center = np.zeros((9, 9), dtype=bool)
    center[3:6, 3:6] = True
    corner = np.zeros((9, 9), dtype=bool)
    corner[:3, :3] = True
    ranked = select_by_center_prior(np.stack([corner, center]), center_prior(9, 9), 2)
    assert np.array_equal(ranked[0].mask, center)


# RLE ------------------------------------------------------------------------------

@given(arrays(np.bool_, st.tuples(st.integers(1, 20), st.integers(1, 20))))
def test_rle_roundtrip(mask):
    data = encode_rle(mask)
    assert data[:5] == b"RLEv1"
    w, h = struct.unpack_from("<II", data, 5)
    assert (w, h) == (mask.shape[1], mask.shape[0])
    runs = np.frombuffer(data[13:], dtype="<u4")
    assert runs.sum() == mask.size
    assert np.array_equal(decode_rle(data), mask)


def test_rle_layout():
    m = np.array([[1, 1, 0], [0, 1, 1]], dtype=bool)
    assert np.frombuffer(encode_rle(m)[13:], dtype="<u4").tolist() == [0, 2, 2, 2]


def test_rle_rejects_corruption():
    data = encode_rle(np.eye(4, dtype=bool))
    with pytest.raises(ValidationError):
        decode_rle(b"XXXXX" + data[5:])
    with pytest.raises(ValidationError):
        decode_rle(data[:-4])
    with pytest.raises(ValidationError):
        decode_rle(data + b"\0\0\0\0")


@given(st.lists(arrays(np.bool_, (5, 7)), max_size=5))
def test_mask_file_roundtrip(tmp_path_factory, masks):
    p = tmp_path_factory.mktemp("rle") / "m.rle"
    write_masks(p, masks)
    back = read_masks(p)
    assert len(back) == len(masks)
    assert all(np.array_equal(a, b) for a, b in zip(back, masks))
