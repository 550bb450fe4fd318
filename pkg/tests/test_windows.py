import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swinir.tensor import Tensor, softmax
from swinir.windows import (MASK_VALUE, WindowGrid, build_attn_mask,
                            crop_to, cyclic_shift, pad_to_multiple, unshift,
                            window_partition, window_reverse)


class TestPadToMultiple:
    def test_already_aligned(self, rng):
        x = Tensor(rng.uniform(size=(1, 8, 8, 2)).astype(np.float32))
        padded, (h, w) = pad_to_multiple(x, 8)
        assert (h, w) == (8, 8)
        np.testing.assert_array_equal(padded.data, x.data)

    def test_ceiling_arithmetic(self, rng):
        x = Tensor(rng.uniform(size=(1, 7, 9, 1)).astype(np.float32))
        padded, (h, w) = pad_to_multiple(x, 4)
        assert padded.shape == (1, 8, 12, 1)
        assert (h, w) == (7, 9)

    def test_pad_crop_roundtrip(self, rng):
        x = Tensor(rng.uniform(size=(2, 5, 6, 3)).astype(np.float32))
        padded, (h, w) = pad_to_multiple(x, 4)
        np.testing.assert_array_equal(crop_to(padded, h, w).data, x.data)

    def test_reflected_content(self):
        x = Tensor(np.arange(3, dtype=np.float32).reshape(1, 3, 1, 1))
        padded, _ = pad_to_multiple(x, 4)
        # reflect without repeating the edge: 0 1 2 | 1
        np.testing.assert_array_equal(padded.data[0, :, 0, 0], [0, 1, 2, 1])

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            pad_to_multiple(Tensor(np.zeros((1, 0, 3, 1))), 4)


class TestPartition:
    def test_single_window(self, rng):
        x = rng.uniform(size=(1, 4, 4, 2)).astype(np.float32)
        wins = window_partition(Tensor(x), 4)
        assert wins.shape == (1, 16, 2)
        np.testing.assert_array_equal(wins.data[0], x.reshape(16, 2))

    def test_tile_enumeration(self):
        x = np.arange(16, dtype=np.float32).reshape(1, 4, 4, 1)
        wins = window_partition(Tensor(x), 2)
        np.testing.assert_array_equal(wins.data[0, :, 0], [0, 1, 4, 5])
        np.testing.assert_array_equal(wins.data[1, :, 0], [2, 3, 6, 7])
        np.testing.assert_array_equal(wins.data[3, :, 0], [10, 11, 14, 15])

    def test_non_multiple_rejected(self):
        with pytest.raises(ValueError):
            window_partition(Tensor(np.zeros((1, 5, 4, 1))), 2)
        with pytest.raises(ValueError):
            window_reverse(Tensor(np.zeros((3, 4, 1))), 2, 4, 4)

    @given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3),
           st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_roundtrip_bit_identical(self, n, hh, ww, m, seed):
        r = np.random.default_rng(seed)
        x = r.normal(size=(n, hh * m, ww * m, 2)).astype(np.float32)
        wins = window_partition(Tensor(x), m)
        back = window_reverse(wins, m, hh * m, ww * m)
        np.testing.assert_array_equal(back.data, x)


class TestCyclicShift:
    def test_zero_identity(self, rng):
        x = Tensor(rng.uniform(size=(1, 3, 3, 1)).astype(np.float32))
        assert cyclic_shift(x, 0) is x

    def test_2x2_by_hand(self):
        a, b, c, d = 1.0, 2.0, 3.0, 4.0
        x = Tensor(np.array([[a, b], [c, d]], dtype=np.float32).reshape(1, 2, 2, 1))
        out = cyclic_shift(x, 1).data[0, :, :, 0]
        np.testing.assert_array_equal(out, [[d, c], [b, a]])

    def test_shift_unshift_bit_identical(self, rng):
        x = rng.uniform(size=(2, 6, 8, 3)).astype(np.float32)
        back = unshift(cyclic_shift(Tensor(x), 2), 2)
        np.testing.assert_array_equal(back.data, x)


class TestAttnMask:
    def test_zero_shift_all_zero(self):
        mask = build_attn_mask(8, 8, 4, 0)
        assert mask.shape == (4, 16, 16)
        assert not mask.any()

    def test_tiny_window_mixes_four_regions(self):
        mask = build_attn_mask(2, 2, 2, 1)
        assert mask.shape == (1, 4, 4)
        expected = np.full((4, 4), MASK_VALUE, dtype=np.float32)
        np.fill_diagonal(expected, 0.0)
        np.testing.assert_array_equal(mask[0], expected)

    def test_interior_window_unmasked(self):
        mask = build_attn_mask(8, 8, 4, 2)
        # window 0 covers rows/cols [0,4): a single pre-shift region
        assert not mask[0].any()
        # the corner window mixes all four region pairs
        assert (mask[3] == MASK_VALUE).any()

    def test_symmetric_relation(self):
        mask = build_attn_mask(8, 8, 4, 2)
        np.testing.assert_array_equal(mask, np.swapaxes(mask, 1, 2))

    def test_invalid_shift(self):
        with pytest.raises(ValueError):
            build_attn_mask(8, 8, 4, 1)

    def test_masked_pairs_get_negligible_weight(self, rng):
        mask = build_attn_mask(4, 4, 2, 1)
        logits = rng.normal(size=mask.shape).astype(np.float32)
        attn = softmax(Tensor(logits + mask)).data
        assert attn[mask == MASK_VALUE].max() < 1e-8

    def test_grid_validates(self):
        with pytest.raises(ValueError):
            WindowGrid(9, 8, 4)
        g = WindowGrid(8, 12, 4)
        assert g.num_windows == 6
