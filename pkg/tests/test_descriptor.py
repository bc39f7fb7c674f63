import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lsgdlcd.core import GrayImage, InputError, SegmentationConfig
from lsgdlcd.descriptor import (
    DescriptorStack, Lsgd, extract_lsgd, l1_cell_distance, l1_distance, sim_score,
)
from lsgdlcd.segmentation import segment

from conftest import random_image


def random_lsgd(rng, m=2, n=3, total=300) -> Lsgd:
    labels = rng.integers(0, m * n, total)
    values = rng.integers(0, 256, total)
    counts = np.zeros((m * n, 256), dtype=np.int64)
    np.add.at(counts, (labels, values), 1)
    return Lsgd(counts.reshape(m, n, 256), total)


def hist(**bins):
    h = np.zeros(256, dtype=np.int64)
    for k, v in bins.items():
        h[int(k[1:])] = v
    return h


def test_constant_image_histograms():
    img = GrayImage(np.full((80, 80), 7, dtype=np.uint8))
    desc = extract_lsgd(img, segment(img, SegmentationConfig(sp=40)))
    assert desc.counts.shape == (2, 2, 256)
    assert (desc.counts[:, :, 7] == 1600).all()
    assert desc.counts.sum() == 6400 and desc.mass() == desc.total_pixels == 6400


def test_half_split_histograms_by_recount():
    px = np.zeros((80, 80), dtype=np.uint8)
    px[:, 40:] = 255
    img = GrayImage(px)
    seg = segment(img, SegmentationConfig(sp=40))
    desc = extract_lsgd(img, seg)
    for r in range(2):
        for c in range(2):
            cell = r * 2 + c
            recount = np.zeros(256, dtype=np.int64)
            for v in px[seg.labels == cell]:
                recount[v] += 1
            assert np.array_equal(desc.cell(r, c), recount)
            assert desc.cell(r, c)[255 if c == 1 else 0] == recount.sum()


def test_mass_conservation_on_random_images(rng):
    for sp in (4, 9, 16):
        img = random_image(rng, 37, 29)
        desc = extract_lsgd(img, segment(img, SegmentationConfig(sp=sp)))
        assert desc.mass() == 37 * 29


def test_extract_rejects_mismatched_segmentation(rng):
    seg = segment(random_image(rng, 20, 20), SegmentationConfig(sp=10))
    with pytest.raises(InputError):
        extract_lsgd(random_image(rng, 20, 21), seg)


def test_l1_cell_distance_examples():
    assert l1_cell_distance(hist(b3=4), hist(b3=4)) == 0
    assert l1_cell_distance(hist(b0=2), hist(b1=2)) == 4
    assert l1_cell_distance(hist(b5=3), hist()) == 3


def _const(v, shape=(2, 2)):
    # descriptor of a uniform 10x10-per-cell image with intensity v
    counts = np.zeros(shape + (256,), dtype=np.int64)
    counts[..., v] = 100
    return Lsgd(counts, 100 * shape[0] * shape[1])


def test_sim_score_examples():
    a = _const(0)
    assert sim_score(a, a) == 1.0
    assert sim_score(_const(0), _const(255)) == 0.0
    half = np.zeros((2, 2, 256), dtype=np.int64)
    half[:, 0, 0] = 100
    half[:, 1, 255] = 100
    # disjoint mass in the two right cells: D = 2 * 200 of total 400
    assert sim_score(_const(0), Lsgd(half, 400)) == 0.5


def test_sim_score_rejects_geometry_mismatch():
    with pytest.raises(InputError):
        sim_score(_const(0), _const(0, (1, 4)))
    a = _const(0)
    with pytest.raises(InputError):
        sim_score(a, Lsgd(a.counts, 401))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_similarity_properties(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_lsgd(rng) for _ in range(3))
    s_ab = sim_score(a, b)
    assert s_ab == sim_score(b, a)
    assert 0.0 <= s_ab <= 1.0
    assert sim_score(a, a) == 1.0 >= s_ab
    assert l1_distance(a, c) <= l1_distance(a, b) + l1_distance(b, c)


def test_binary_layout(rng):
    desc = random_lsgd(rng, 2, 3, 50)
    blob = desc.to_bytes()
    assert blob[:12] == struct.pack("<III", 2, 3, 50)
    assert len(blob) == Lsgd.blob_size(2, 3) == 12 + 4 * 2 * 3 * 256
    body = struct.unpack(f"<{2 * 3 * 256}I", blob[12:])
    assert list(body) == desc.counts.reshape(-1).tolist()
    assert Lsgd.from_bytes(blob) == desc


def test_from_bytes_rejects_truncation(rng):
    blob = random_lsgd(rng).to_bytes()
    with pytest.raises(InputError):
        Lsgd.from_bytes(blob[:-4])
    with pytest.raises(InputError):
        Lsgd.from_bytes(blob[:5])


def test_stack_matches_pairwise(rng):
    descs = [random_lsgd(rng) for _ in range(20)]
    stack = DescriptorStack()
    for d in descs:
        stack.append(d)
    q = random_lsgd(rng)
    assert stack.scores(q).tolist() == [sim_score(q, d) for d in descs]
    assert stack.distances(q, stop=5).tolist() == [l1_distance(q, d) for d in descs[:5]]
    assert len(stack.distances(q, stop=0)) == 0
    with pytest.raises(InputError):
        stack.append(random_lsgd(rng, 3, 3))
