"""
Tests for the edge-map pipeline and the Hu moment signature.
"""
import math

import numpy as np
import pytest

from medimark.errors import InvalidParams, NonPositiveSigma, ZeroMass
from medimark.feature import (
    EdgeMap,
    MomentSignature,
    RealGrid,
    _raw_moments,
    compute_edge_map,
    downscale,
    edge_map,
    hu_moments,
    log_kernel,
    log_response,
)
from medimark.imagecore import BitPlane, PixelGrid, merge_lsb, split_lsb

# --------------------------------- downscale --------------------------------


@pytest.mark.parametrize(
    "samples, s, expected",
    [
        pytest.param([[100, 100], [100, 100]], 2, [[100.0]], id="constant"),
        pytest.param([[0, 2], [4, 6]], 2, [[3.0]], id="mean"),
        pytest.param(
            [[0, 1, 2], [3, 4, 5], [6, 7, 8]], 2, [[2.0, 3.5], [6.5, 8.0]], id="ramp"
        ),
    ],
)
def test_downscale(samples, s, expected):
    out = downscale(PixelGrid(samples), s)
    np.testing.assert_array_equal(out.values, expected)


def test_downscale_preserves_weighted_mean():
    rng = np.random.default_rng(11)
    grid = PixelGrid(rng.integers(0, 256, size=(37, 29)))
    s = 4
    out = downscale(grid, s).values
    rows = np.minimum(s, 37 - np.arange(0, 37, s))
    cols = np.minimum(s, 29 - np.arange(0, 29, s))
    weights = np.outer(rows, cols)
    assert out.shape == (10, 8)
    assert np.sum(out * weights) / weights.sum() == pytest.approx(
        grid.array.mean(), abs=1e-9
    )


def test_downscale_rejects_small_factor():
    with pytest.raises(InvalidParams):
        downscale(PixelGrid([[1]]), 1)


# ------------------------------------ LoG -----------------------------------


@pytest.mark.parametrize("sigma", [0.5, 0.8, 1.0, 1.7, 2.0, 3.3, 5.0])
def test_log_kernel_shape_and_sum(sigma):
    kernel = log_kernel(sigma).values
    k = 2 * math.ceil(3 * sigma) + 1
    assert kernel.shape == (k, k)
    assert abs(kernel.sum()) <= 1e-12
    np.testing.assert_allclose(kernel, kernel.T, rtol=0, atol=1e-15)
    if sigma >= 0.8:
        assert kernel[k // 2, k // 2] == kernel.min()


def test_log_kernel_size_sigma_two():
    assert log_kernel(2.0).shape == (13, 13)


@pytest.mark.parametrize("sigma", [0.0, -1.0, float("nan")])
def test_log_kernel_rejects(sigma):
    with pytest.raises(NonPositiveSigma):
        log_kernel(sigma)


def test_log_response_constant_is_zero():
    out = log_response(RealGrid(np.full((20, 30), 87.0)), 2.0)
    assert out.shape == (20, 30)
    assert np.max(np.abs(out.values)) <= 1e-9


def test_log_response_impulse_reproduces_kernel():
    grid = np.zeros((41, 41))
    grid[20, 20] = 1.0
    out = log_response(RealGrid(grid), 2.0).values
    kernel = log_kernel(2.0).values
    np.testing.assert_allclose(
        out[14:27, 14:27], kernel[::-1, ::-1], rtol=0, atol=1e-12
    )
    assert np.max(np.abs(out[:14])) <= 1e-12


def _step(width=40, height=20, c=20, high=200.0):
    grid = np.zeros((height, width))
    grid[:, c:] = high
    return RealGrid(grid)


def test_log_response_step_is_antisymmetric():
    c = 20
    resp = log_response(_step(c=c), 2.0).values
    for d in range(8):
        np.testing.assert_allclose(resp[:, c - 1 - d], -resp[:, c + d], atol=1e-9)
    assert np.all(resp[:, c - 1] > 0)
    assert np.all(resp[:, c] < 0)


def test_edge_map_step_marks_single_column():
    c = 20
    edges = edge_map(log_response(_step(c=c), 2.0), 0.04)
    marked = np.flatnonzero(edges.bits.any(axis=0))
    assert marked.tolist() == [c - 1]
    assert edges.bits[:, c - 1].all()


def test_edge_map_zero_response_is_empty():
    assert edge_map(RealGrid(np.zeros((5, 7))), 0.5).count() == 0


def test_edge_map_zero_threshold_marks_every_crossing():
    response = RealGrid([[1.0, -1e-6, 2.0], [3.0, 4.0, 5.0]])
    bits = edge_map(response, 0.0).bits
    assert bits.tolist() == [[1, 1, 0], [0, 0, 0]]
    assert edge_map(response, 1.0).count() == 0


def test_edge_map_rejects_threshold():
    with pytest.raises(InvalidParams):
        edge_map(RealGrid([[0.0]]), 1.5)


def test_edge_map_dimensions():
    rng = np.random.default_rng(5)
    grid = PixelGrid(rng.integers(0, 128, size=(45, 50)) * 2)
    edges = compute_edge_map(grid, 4, 2.0, 0.04)
    assert isinstance(edges, EdgeMap)
    assert (edges.width, edges.height, edges.scale) == (13, 12, 4)


def test_edge_map_ignores_lsb_substitution():
    rng = np.random.default_rng(6)
    grid = PixelGrid(rng.integers(0, 256, size=(40, 40)))
    high, _ = split_lsb(grid)
    other = merge_lsb(high, BitPlane(rng.integers(0, 2, size=(40, 40))))
    a = compute_edge_map(split_lsb(grid)[0], 2, 2.0, 0.04)
    b = compute_edge_map(split_lsb(other)[0], 2, 2.0, 0.04)
    assert a == b


# ---------------------------------- moments ---------------------------------


def _direct_hu(arr):
    """
    Brute-force float summation of Hu's invariants.
    """
    arr = arr.astype(np.float64)
    ys, xs = np.mgrid[0 : arr.shape[0], 0 : arr.shape[1]]
    m00 = arr.sum()
    xc = (xs * arr).sum() / m00
    yc = (ys * arr).sum() / m00

    def eta(p, q):
        mu = (((xs - xc) ** p) * ((ys - yc) ** q) * arr).sum()
        return mu / m00 ** (1 + (p + q) / 2)

    n20, n02, n11 = eta(2, 0), eta(0, 2), eta(1, 1)
    n30, n03, n21, n12 = eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2)
    return [
        n20 + n02,
        (n20 - n02) ** 2 + 4 * n11**2,
        (n30 - 3 * n12) ** 2 + (3 * n21 - n03) ** 2,
        (n30 + n12) ** 2 + (n21 + n03) ** 2,
        (n30 - 3 * n12) * (n30 + n12) * ((n30 + n12) ** 2 - 3 * (n21 + n03) ** 2)
        + (3 * n21 - n03) * (n21 + n03) * (3 * (n30 + n12) ** 2 - (n21 + n03) ** 2),
        (n20 - n02) * ((n30 + n12) ** 2 - (n21 + n03) ** 2)
        + 4 * n11 * (n30 + n12) * (n21 + n03),
        (3 * n21 - n03) * (n30 + n12) * ((n30 + n12) ** 2 - 3 * (n21 + n03) ** 2)
        - (n30 - 3 * n12) * (n21 + n03) * (3 * (n30 + n12) ** 2 - (n21 + n03) ** 2),
    ]


def test_hu_point_mass_is_zero():
    arr = np.zeros((9, 9), dtype=np.uint8)
    arr[3, 5] = 200
    sig = hu_moments(PixelGrid(arr))
    assert sig.phi == (0.0,) * 7
    assert sig.average == 0.0


def test_hu_zero_mass():
    with pytest.raises(ZeroMass):
        hu_moments(PixelGrid.zeros(4, 4))


def test_hu_centered_square_matches_direct_sum():
    arr = np.zeros((64, 64), dtype=np.uint8)
    arr[16:48, 16:48] = 255
    sig = hu_moments(PixelGrid(arr))
    expected = _direct_hu(arr)
    n, mass = 32, 255 * 32 * 32
    assert sig.phi[0] == pytest.approx(expected[0], rel=1e-12)
    assert sig.phi[0] == pytest.approx(2 * (n * n - 1) / (12 * mass), rel=1e-12)
    for got in sig.phi[1:]:
        assert abs(got) <= 1e-15


def test_hu_random_matches_direct_sum():
    rng = np.random.default_rng(21)
    arr = rng.integers(0, 256, size=(23, 31)).astype(np.uint8)
    arr[:8, :10] = 0
    sig = hu_moments(PixelGrid(arr))
    expected = _direct_hu(arr)
    np.testing.assert_allclose(sig.phi[:4], expected[:4], rtol=1e-9)
    scale = max(abs(e) for e in expected[4:])
    np.testing.assert_allclose(sig.phi[4:], expected[4:], rtol=1e-6, atol=1e-9 * scale)


def test_raw_moments_exact_beyond_int64():
    width = 20_000
    arr = np.zeros((2, width), dtype=np.int64)
    arr[1, :] = 254
    m = _raw_moments(arr)
    row = 254 * (width * (width - 1) // 2) ** 2
    assert row > np.iinfo(np.int64).max
    assert m[3, 0] == row
    assert m[0, 0] == 254 * width
    assert m[1, 0] == 254 * width * (width - 1) // 2
    assert m[0, 3] == m[0, 0]
    assert m[2, 1] == sum(254 * x * x for x in range(width))


def test_hu_wide_image_is_translation_invariant():
    rng = np.random.default_rng(5)
    block = rng.integers(1, 128, size=(3, 40)) * 2
    narrow = np.zeros((3, 40), dtype=np.int64)
    narrow[:] = block
    wide = np.zeros((3, 100_000), dtype=np.int64)
    wide[:, -40:] = block
    # central moments are exact, so the shift changes no bit of the result
    assert hu_moments(PixelGrid(wide)).phi == hu_moments(PixelGrid(narrow)).phi


@pytest.fixture(params=[pytest.param(seed, id="seed {}".format(seed)) for seed in (1, 2, 3)])
def random_grid(request):
    rng = np.random.default_rng(request.param)
    arr = rng.integers(0, 256, size=(24, 40))
    arr[rng.integers(0, 24, 30), rng.integers(0, 40, 30)] = 0
    return PixelGrid(arr)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_hu_rotation_invariance(random_grid, k):
    assert hu_moments(random_grid.rot90(k)).phi == hu_moments(random_grid).phi


@pytest.mark.parametrize("axis", [0, 1])
def test_hu_flip_invariance(random_grid, axis):
    original = hu_moments(random_grid).phi
    flipped = hu_moments(random_grid.flip(axis)).phi
    np.testing.assert_allclose(flipped[:6], original[:6], rtol=1e-9)
    # the skew invariant changes sign under a mirror
    assert abs(flipped[6]) == pytest.approx(abs(original[6]), rel=1e-9)


def test_hu_ignores_lsb_substitution(random_grid):
    rng = np.random.default_rng(0)
    high, _ = split_lsb(random_grid)
    other = merge_lsb(high, BitPlane(rng.integers(0, 2, size=random_grid.shape)))
    assert hu_moments(split_lsb(other)[0]) == hu_moments(high)


# ----------------------------- moment signature -----------------------------


def test_signature_bytes():
    sig = MomentSignature([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])
    data = sig.to_bytes()
    assert len(data) == 64
    assert sig.average == 4.0
    assert MomentSignature.from_bytes(data) == sig
    bad = data[:56] + MomentSignature([0.0] * 7).to_bytes()[56:]
    with pytest.raises(ValueError):
        MomentSignature.from_bytes(bad)


def test_signature_matches():
    a = MomentSignature([0.2, 1e-3, 1e-5, 1e-6, 1e-12, 1e-8, -1e-12])
    b = MomentSignature([p * (1 + 1e-14) for p in a.phi])
    c = MomentSignature([0.2 * (1 + 1e-9)] + list(a.phi[1:]))
    assert a.matches(a)
    assert a.matches(b)
    assert not a.matches(c)


def test_signature_rejects():
    with pytest.raises(ValueError):
        MomentSignature([1.0] * 6)
    with pytest.raises(ValueError):
        MomentSignature([float("inf")] + [0.0] * 6)
