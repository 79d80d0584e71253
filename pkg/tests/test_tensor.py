import numpy as np
import pytest

from ccblock.tensor import ShapeError, as_tensor, col2im, conv_out_size, im2col, matmul


def naive_matmul(a, b):
    """Triple-loop reference, fixed summation order."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += float(a[i, t]) * float(b[t, j])
            out[i, j] = acc
    return out


def naive_im2col(x, kh, kw, stride, pad):
    """Patch-by-patch reference built from explicit padding and slicing."""
    c, h, w = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((c * kh * kw, ho * wo), dtype=x.dtype)
    for oi in range(ho):
        for oj in range(wo):
            patch = xp[:, oi * stride:oi * stride + kh, oj * stride:oj * stride + kw]
            out[:, oi * wo + oj] = patch.reshape(-1)
    return out


class TestMatmul:
    def test_identity(self):
        x = as_tensor([[2.0, -3.0], [0.5, 7.0]])
        eye = np.eye(2, dtype=np.float32)
        np.testing.assert_array_equal(matmul(eye, x), x)

    def test_hand_example(self):
        a = as_tensor([[1, 2], [3, 4]])
        b = as_tensor([[5, 6], [7, 8]])
        expected = np.array([[19, 22], [43, 50]], dtype=np.float32)
        np.testing.assert_array_equal(matmul(a, b), expected)
        np.testing.assert_array_equal(naive_matmul(a, b), expected)

    def test_zeros_annihilate(self):
        rng = np.random.default_rng(0)
        b = as_tensor(rng.normal(size=(4, 2)))
        out = matmul(np.zeros((3, 4), dtype=np.float32), b)
        np.testing.assert_array_equal(out, np.zeros((3, 2), dtype=np.float32))

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(42)
        for _ in range(5):
            m, k, n = rng.integers(1, 8, size=3)
            a = as_tensor(rng.normal(size=(m, k)))
            b = as_tensor(rng.normal(size=(k, n)))
            np.testing.assert_allclose(matmul(a, b), naive_matmul(a, b), rtol=1e-5)

    def test_bilinear(self):
        rng = np.random.default_rng(7)
        a = as_tensor(rng.normal(size=(5, 4)))
        b = as_tensor(rng.normal(size=(4, 6)))
        alpha = np.float32(3.25)
        np.testing.assert_allclose(
            matmul(alpha * a, b), alpha * matmul(a, b), rtol=1e-5
        )

    def test_shape_error_names_both_shapes(self):
        a = np.zeros((2, 3), dtype=np.float32)
        b = np.zeros((4, 2), dtype=np.float32)
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
            matmul(a, b)


class TestIm2col:
    def test_hand_enumerated_2x2_patches(self):
        x = np.arange(1, 10, dtype=np.float32).reshape(1, 3, 3)
        out = im2col(x, 2, 2, stride=1, pad=0)
        expected = np.array(
            [
                [1, 2, 4, 5],
                [2, 3, 5, 6],
                [4, 5, 7, 8],
                [5, 6, 8, 9],
            ],
            dtype=np.float32,
        )
        np.testing.assert_array_equal(out, expected)

    def test_1x1_kernel_is_reshape(self):
        rng = np.random.default_rng(1)
        x = as_tensor(rng.normal(size=(3, 4, 5)))
        np.testing.assert_array_equal(im2col(x, 1, 1, 1, 0), x.reshape(3, 20))

    def test_table2_ccblock_geometry(self):
        # 512 x 7 x 7 input under a 3x3 valid kernel -> 4608 x 25 (5x5 output)
        x = np.zeros((512, 7, 7), dtype=np.float32)
        out = im2col(x, 3, 3, stride=1, pad=0)
        assert out.shape == (4608, 25)
        assert conv_out_size(7, 3, 1, 0) == 5

    def test_matches_naive_oracle_with_padding(self):
        rng = np.random.default_rng(3)
        for c, h, w, k, s, p in [(2, 5, 5, 3, 1, 1), (3, 6, 4, 2, 2, 0), (1, 4, 4, 3, 1, 2)]:
            x = as_tensor(rng.normal(size=(c, h, w)))
            np.testing.assert_array_equal(im2col(x, k, k, s, p), naive_im2col(x, k, k, s, p))

    def test_non_integral_output_rejected(self):
        x = np.zeros((1, 5, 5), dtype=np.float32)
        with pytest.raises(ShapeError):
            im2col(x, 2, 2, stride=2, pad=0)


class TestCol2im:
    def test_disjoint_patches_round_trip(self):
        rng = np.random.default_rng(4)
        x = as_tensor(rng.normal(size=(2, 3, 4)))
        cols = im2col(x, 1, 1, 1, 0)
        np.testing.assert_array_equal(col2im(cols, 2, 3, 4, 1, 1, 1, 0), x)

    def test_center_overlap_count(self):
        # 2x2 windows over 3x3 with stride 1: the center cell sits in all 4 patches
        c = 2.5
        cols = np.full((4, 4), 0.0, dtype=np.float32)
        # center of the 3x3 image is slot (1,1)=3, (1,0)=2, (0,1)=1, (0,0)=0 per patch
        for j, slot in enumerate([3, 2, 1, 0]):
            cols[slot, j] = c
        img = col2im(cols, 1, 3, 3, 2, 2, 1, 0)
        assert img[0, 1, 1] == pytest.approx(4 * c)

    def test_zero_cols_zero_image(self):
        cols = np.zeros((4, 4), dtype=np.float32)
        np.testing.assert_array_equal(
            col2im(cols, 1, 3, 3, 2, 2, 1, 0), np.zeros((1, 3, 3), dtype=np.float32)
        )

    def test_adjoint_of_im2col(self):
        # <im2col(x), y> == <x, col2im(y)> is what conv backward relies on
        rng = np.random.default_rng(5)
        for c, h, w, k, s, p in [(2, 5, 5, 3, 1, 1), (3, 6, 6, 2, 2, 0), (1, 4, 4, 3, 1, 2)]:
            x = as_tensor(rng.normal(size=(c, h, w)))
            cols = im2col(x, k, k, s, p)
            y = as_tensor(rng.normal(size=cols.shape))
            lhs = float(np.vdot(cols.astype(np.float64), y.astype(np.float64)))
            back = col2im(y, c, h, w, k, k, s, p)
            rhs = float(np.vdot(x.astype(np.float64), back.astype(np.float64)))
            assert lhs == pytest.approx(rhs, rel=1e-4)

    def test_inconsistent_dims_rejected(self):
        cols = np.zeros((4, 5), dtype=np.float32)
        with pytest.raises(ShapeError):
            col2im(cols, 1, 3, 3, 2, 2, 1, 0)


def test_row_major_round_trip():
    x = np.zeros((2, 3, 4), dtype=np.float32)
    flat = x.reshape(-1)
    value = 0.0
    for i in range(2):
        for j in range(3):
            for k in range(4):
                x[i, j, k] = value
                offset = i * 12 + j * 4 + k
                assert flat[offset] == value
                value += 1.0
    assert x.flags["C_CONTIGUOUS"]
