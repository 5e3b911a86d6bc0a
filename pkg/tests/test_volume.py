import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthmri.volume import (
    LabelMap,
    VectorField,
    Volume,
    nearest_sample,
    one_hot,
    sample_trilinear_array,
    trilinear_sample,
    upscale_trilinear,
)

from oracles import reference_trilinear


def bit_corner_volume():
    data = np.zeros((2, 2, 2), dtype=np.float32)
    for x in (0, 1):
        for y in (0, 1):
            for z in (0, 1):
                data[x, y, z] = x + 2 * y + 4 * z
    return Volume(data)


class TestTrilinear:
    def test_constant_field(self):
        v = Volume(np.full((4, 4, 4), 5.0, dtype=np.float32))
        assert trilinear_sample(v, (2.3, 1.7, 0.5)) == 5.0

    def test_node_identity_exact(self, rng):
        v = Volume(rng.standard_normal((5, 6, 7)).astype(np.float32))
        for i, j, k in [(0, 0, 0), (4, 5, 6), (2, 3, 1)]:
            assert trilinear_sample(v, (i, j, k)) == v.data[i, j, k]

    def test_center_of_bit_corners(self):
        assert trilinear_sample(bit_corner_volume(), (0.5, 0.5, 0.5)) == pytest.approx(3.5)

    def test_edge_clamp(self):
        v = bit_corner_volume()
        assert trilinear_sample(v, (-3.0, 0.0, 0.0)) == v.data[0, 0, 0]
        assert trilinear_sample(v, (9.0, 9.0, 9.0)) == v.data[1, 1, 1]

    def test_matches_reference_implementation(self, rng):
        data = rng.standard_normal((6, 5, 4)).astype(np.float32)
        pts = rng.uniform(-1.5, 7.0, size=(200, 3)).astype(np.float32)
        got = sample_trilinear_array(data, pts)
        want = np.array([reference_trilinear(data, p) for p in pts])
        np.testing.assert_allclose(got, want, atol=1e-4)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_no_overshoot(self, seed):
        r = np.random.default_rng(seed)
        data = r.standard_normal((4, 4, 4)).astype(np.float32)
        p = r.uniform(-1.0, 4.5, size=3)
        val = trilinear_sample(Volume(data), p)
        lo, hi = float(data.min()), float(data.max())
        span = hi - lo
        assert lo - 1e-5 * span <= val <= hi + 1e-5 * span


class TestNearest:
    def test_on_node(self, phantom32):
        assert nearest_sample(phantom32, (3, 4, 5)) == int(phantom32.labels[3, 4, 5])

    def test_out_of_field_is_background(self, phantom32):
        assert nearest_sample(phantom32, (-5, -5, -5)) == 0
        assert nearest_sample(phantom32, (100, 0, 0)) == 0

    def test_round_half_up(self):
        labels = np.zeros((4, 1, 1), dtype=np.int32)
        labels[1, 0, 0] = 7
        labels[2, 0, 0] = 9
        m = LabelMap(labels)
        assert nearest_sample(m, (1.49, 0, 0)) == 7
        assert nearest_sample(m, (1.5, 0, 0)) == 9


class TestUpscale:
    def test_constant_stays_constant(self):
        c = Volume(np.full((2, 2, 2), 3.25, dtype=np.float32))
        fine = upscale_trilinear(c, (7, 5, 9))
        assert fine.dims == (7, 5, 9)
        assert np.all(fine.data == np.float32(3.25))

    def test_same_dims_is_identity(self, rng):
        c = Volume(rng.standard_normal((4, 5, 6)).astype(np.float32))
        out = upscale_trilinear(c, (4, 5, 6))
        np.testing.assert_array_equal(out.data, c.data)

    def test_linear_ramp(self):
        data = np.zeros((2, 2, 2), dtype=np.float32)
        data[1, :, :] = 1.0
        fine = upscale_trilinear(Volume(data), (5, 2, 2))
        np.testing.assert_allclose(fine.data[:, 0, 0], [0, 0.25, 0.5, 0.75, 1.0], atol=1e-7)

    def test_coarse_nodes_reproduced(self, rng):
        # Commensurate sizes: (nf - 1) divisible by (nc - 1), as in the real
        # pipeline (e.g. 10 -> 64), so coarse preimages land on fine nodes.
        c = rng.standard_normal((3, 4, 5)).astype(np.float32)
        target = (9, 13, 13)
        fine = upscale_trilinear(Volume(c), target)
        for axis_idx in np.ndindex(3, 4, 5):
            pre = [
                axis_idx[a] * (target[a] - 1) / (c.shape[a] - 1) for a in range(3)
            ]
            got = trilinear_sample(fine, pre)
            assert abs(got - c[axis_idx]) < 1e-6

    def test_vector_field_per_component(self, rng):
        grid = rng.standard_normal((2, 2, 2, 3)).astype(np.float32)
        fine = upscale_trilinear(VectorField(grid), (4, 4, 4))
        for c in range(3):
            ref = upscale_trilinear(Volume(grid[..., c]), (4, 4, 4))
            np.testing.assert_array_equal(fine.data[..., c], ref.data)

    def test_rejects_small_target(self):
        c = Volume(np.zeros((2, 2, 2), dtype=np.float32))
        with pytest.raises(ValueError):
            upscale_trilinear(c, (1, 4, 4))

    def test_rejects_small_coarse(self):
        c = Volume(np.zeros((1, 2, 2), dtype=np.float32))
        with pytest.raises(ValueError):
            upscale_trilinear(c, (4, 4, 4))


class TestOneHot:
    def test_single_label(self):
        m = LabelMap(np.full((3, 3, 3), 4, dtype=np.int32))
        channels = one_hot(m, [4])
        assert np.all(channels[0].data == 1.0)

    def test_partition_of_unity(self, phantom32):
        channels = one_hot(phantom32, phantom32.label_set)
        total = sum(c.data for c in channels)
        np.testing.assert_array_equal(total, np.ones(phantom32.dims, dtype=np.float32))

    def test_checkerboard_complementary(self):
        idx = np.indices((4, 4, 4)).sum(axis=0) % 2
        m = LabelMap(idx.astype(np.int32))
        c0, c1 = one_hot(m, [0, 1])
        np.testing.assert_array_equal(c0.data + c1.data, np.ones((4, 4, 4), np.float32))
        assert np.all((c0.data == 0) | (c1.data == 0))

    def test_missing_label_rejected(self, phantom32):
        with pytest.raises(ValueError, match="absent from ordering"):
            one_hot(phantom32, [0, 1])


class TestInvariants:
    def test_volume_rejects_nan(self):
        data = np.zeros((2, 2, 2), dtype=np.float32)
        data[0, 0, 0] = np.nan
        with pytest.raises(ValueError, match="NaN"):
            Volume(data)

    def test_volume_rejects_wrong_rank(self):
        with pytest.raises(ValueError):
            Volume(np.zeros((2, 2), dtype=np.float32))

    def test_labelmap_rejects_negative(self):
        with pytest.raises(ValueError, match="negative"):
            LabelMap(np.full((2, 2, 2), -1, dtype=np.int32))

    def test_labelmap_label_set(self, phantom32):
        assert phantom32.label_set == tuple(sorted(np.unique(phantom32.labels)))
        assert len(phantom32.label_set) >= 2
