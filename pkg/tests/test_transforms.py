import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signenc.landmarks import LANDMARK_COUNT, SampleRef
from signenc.transforms import (
    AugmentParams,
    UniformizationPlan,
    apply_rigid,
    augment,
    compute_target,
    derive_seed,
    uniformize,
)

from conftest import random_sequence


def _refs(frame_counts):
    return [
        SampleRef(signer="s", label="a", take=i, path=f"{i}.slm", frame_count=c, fps=30.0)
        for i, c in enumerate(frame_counts)
    ]


def _marker_sequence(t, l=2):
    # frame index stored in every coordinate, scaled into [0, 1]
    coords = np.tile(np.arange(t, dtype=float)[:, None, None], (1, l, 2)) / max(t, 1)
    from signenc.landmarks import LandmarkSequence

    return LandmarkSequence(coords=coords)


class TestAugmentParams:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"rotation_deg": -1.0},
            {"zoom": 1.0},
            {"zoom": -0.1},
            {"translate": -0.5},
            {"flip_prob": 1.5},
        ],
    )
    def test_invalid_ranges_rejected(self, kwargs):
        with pytest.raises(ValueError):
            AugmentParams(**kwargs)


class TestAugment:
    def test_identity_params_bit_exact(self, rng):
        seq = random_sequence(rng, 6, 9)
        params = AugmentParams(rotation_deg=0, zoom=0, translate=0, flip_prob=0, seed=1)
        out = augment(seq, params)
        assert np.array_equal(out.coords, seq.coords)
        assert out.coords is not seq.coords

    def test_flip_moves_x(self):
        seq = _marker_sequence(1)
        seq.coords[:] = [[0.3, 0.4], [0.8, 0.1]]
        out = apply_rigid(seq, flip=True)
        assert out.coords[0, 0].tolist() == [0.7, 0.4]
        assert np.allclose(out.coords[0, 1], [0.2, 0.1])

    def test_flip_involution_on_dyadic_interior_points(self, rng):
        coords = rng.integers(1, 256, size=(5, 8, 2)) / 256.0
        from signenc.landmarks import LandmarkSequence

        seq = LandmarkSequence(coords=coords)
        twice = apply_rigid(apply_rigid(seq, flip=True), flip=True)
        assert np.array_equal(twice.coords, seq.coords)

    def test_flip_involution_general_floats_close(self, rng):
        seq = random_sequence(rng, 4, 6)
        twice = apply_rigid(apply_rigid(seq, flip=True), flip=True)
        assert np.abs(twice.coords - seq.coords).max() < 1e-15

    def test_rotation_quarter_turn(self):
        from signenc.landmarks import LandmarkSequence

        seq = LandmarkSequence(coords=np.array([[[1.0, 0.5]]]))
        out = apply_rigid(seq, rotation_deg=90.0)
        assert np.allclose(out.coords[0, 0], [0.5, 1.0], atol=1e-12)

    def test_zoom_about_center(self):
        from signenc.landmarks import LandmarkSequence

        seq = LandmarkSequence(coords=np.array([[[0.7, 0.5]]]))
        out = apply_rigid(seq, scale=2.0)
        assert np.allclose(out.coords[0, 0], [0.9, 0.5])

    def test_translation_and_clamp(self):
        from signenc.landmarks import LandmarkSequence

        seq = LandmarkSequence(coords=np.array([[[0.95, 0.02]]]))
        out = apply_rigid(seq, translate=(0.1, -0.1))
        assert out.coords[0, 0].tolist() == [1.0, 0.0]

    def test_same_seed_same_output(self, rng):
        seq = random_sequence(rng, 7, 11)
        params = AugmentParams(seed=99)
        a = augment(seq, params)
        b = augment(seq, params)
        assert np.array_equal(a.coords, b.coords)

    def test_different_seed_different_output(self, rng):
        seq = random_sequence(rng, 7, 11)
        a = augment(seq, AugmentParams(seed=1))
        b = augment(seq, AugmentParams(seed=2))
        assert not np.array_equal(a.coords, b.coords)

    def test_applied_identically_to_every_frame(self, rng):
        # constant sequence stays constant across frames after any transform
        from signenc.landmarks import LandmarkSequence

        coords = np.tile(rng.uniform(0.2, 0.8, size=(1, 5, 2)), (9, 1, 1))
        out = augment(LandmarkSequence(coords=coords), AugmentParams(seed=4))
        assert np.array_equal(np.tile(out.coords[:1], (9, 1, 1)), out.coords)

    def test_swap_lr_requires_canonical_layout(self, rng):
        seq = random_sequence(rng, 3, 10)
        with pytest.raises(ValueError, match="126"):
            apply_rigid(seq, flip=True, swap_lr=True)

    def test_swap_lr_flip_is_involution(self, rng):
        seq = random_sequence(rng, 3, LANDMARK_COUNT)
        seq.coords[:] = np.round(seq.coords * 256) / 256
        twice = apply_rigid(
            apply_rigid(seq, flip=True, swap_lr=True), flip=True, swap_lr=True
        )
        assert np.array_equal(twice.coords, seq.coords)

    @settings(max_examples=30, deadline=None)
    @given(
        seed=st.integers(min_value=0, max_value=2**31),
        t=st.integers(min_value=1, max_value=20),
        l=st.integers(min_value=1, max_value=30),
    )
    def test_shape_and_bounds_preserved(self, seed, t, l):
        seq = random_sequence(np.random.default_rng(seed), t, l)
        out = augment(seq, AugmentParams(rotation_deg=30, zoom=0.3, translate=0.2, seed=seed))
        assert out.coords.shape == seq.coords.shape
        assert out.coords.min() >= 0.0 and out.coords.max() <= 1.0


class TestDeriveSeed:
    def test_frozen_values(self):
        # regression pins: the derivation must stay stable across releases
        assert derive_seed(0, 1, "a") == 7662448641011171168
        assert derive_seed(42, 3, "s1/hello/0") == 2867836080400588492

    def test_order_sensitive(self):
        assert derive_seed(1, 2) != derive_seed(2, 1)

    def test_nonnegative_63_bit(self):
        for i in range(50):
            s = derive_seed("probe", i)
            assert 0 <= s < 2**63


class TestComputeTarget:
    def test_exact_mean(self):
        assert compute_target(_refs([10, 20, 30])).target_frames == 20

    def test_half_rounds_up(self):
        assert compute_target(_refs([10, 11])).target_frames == 11

    def test_single_sample(self):
        assert compute_target(_refs([7])).target_frames == 7

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            compute_target([])

    def test_minimum_is_one(self):
        assert compute_target(_refs([1, 1])).target_frames == 1


class TestUniformize:
    def test_equal_length_is_identity(self):
        seq = _marker_sequence(8)
        assert uniformize(seq, UniformizationPlan(8)) is seq

    def test_growth_repeats_last_frame(self):
        out = uniformize(_marker_sequence(5), UniformizationPlan(8))
        frames = out.coords[:, 0, 0] * 5
        assert np.allclose(frames, [0, 1, 2, 3, 4, 4, 4, 4])

    def test_shrink_keeps_documented_indices(self):
        out = uniformize(_marker_sequence(10), UniformizationPlan(6))
        kept = np.rint(out.coords[:, 0, 0] * 10).astype(int)
        assert kept.tolist() == [0, 2, 4, 5, 7, 9]

    def test_target_one_keeps_first_frame(self):
        out = uniformize(_marker_sequence(9), UniformizationPlan(1))
        assert out.num_frames == 1
        assert out.coords[0, 0, 0] == 0.0

    @settings(max_examples=80, deadline=None)
    @given(
        t=st.integers(min_value=1, max_value=200),
        target=st.integers(min_value=1, max_value=200),
    )
    def test_length_order_idempotency(self, t, target):
        plan = UniformizationPlan(target)
        out = uniformize(_marker_sequence(t), plan)
        assert out.num_frames == target
        frames = out.coords[:, 0, 0] * max(t, 1)
        assert np.all(np.diff(frames) >= 0)  # order preserved
        if target <= t:
            assert np.all(np.diff(frames) > 0) or target == 1  # strictly increasing subset
            assert np.isclose(frames[0], 0)
            if target > 1:
                assert np.isclose(frames[-1], t - 1)
        again = uniformize(out, plan)
        assert np.array_equal(again.coords, out.coords)

    def test_invalid_plan_rejected(self):
        with pytest.raises(ValueError):
            UniformizationPlan(0)
