"""System model tests: seeded generation, statistics, serialization, validation."""

import numpy as np
import pytest

from gmpid.model import (
    Dimensions,
    SystemInstance,
    generate_channel,
    load_instance,
    make_instance,
    sample_sources,
    save_instance,
    transmit,
)


class TestDimensions:
    def test_load_factor(self):
        assert Dimensions(100, 400).load_factor == 0.25

    def test_rejects_nonpositive_counts(self):
        with pytest.raises(ValueError):
            Dimensions(0, 4)
        with pytest.raises(ValueError):
            Dimensions(4, 0)
        with pytest.raises(ValueError):
            Dimensions(-3, 4)

    def test_rejects_non_integer_counts(self):
        with pytest.raises(TypeError):
            Dimensions(2.5, 4)
        with pytest.raises(TypeError):
            Dimensions(True, 4)


class TestGenerateChannel:
    def test_shape(self):
        H = generate_channel(Dimensions(3, 7), 0)
        assert H.shape == (7, 3)

    def test_same_seed_is_bit_identical(self):
        a = generate_channel(Dimensions(10, 20), 123)
        b = generate_channel(Dimensions(10, 20), 123)
        assert np.array_equal(a, b)

    def test_different_seeds_differ(self):
        a = generate_channel(Dimensions(10, 20), 1)
        b = generate_channel(Dimensions(10, 20), 2)
        assert not np.array_equal(a, b)

    def test_entries_are_standard_normal(self):
        """30000 draws: sample mean near 0, sample variance near 1."""
        H = generate_channel(Dimensions(100, 300), 0)
        assert abs(H.mean()) < 0.02
        assert abs(H.var() - 1.0) < 0.03

    def test_rejects_bad_seed(self):
        with pytest.raises(TypeError):
            generate_channel(Dimensions(2, 4), 1.5)
        with pytest.raises(ValueError):
            generate_channel(Dimensions(2, 4), -1)


class TestSampleSources:
    def test_variance_scaling(self):
        """Sample variance tracks the requested prior variance."""
        dims = Dimensions(10000, 1)
        x1 = sample_sources(dims, 1.0, 42)
        x4 = sample_sources(dims, 4.0, 42)
        assert 0.96 < x1.var() < 1.04
        assert 3.84 < x4.var() < 4.16

    def test_scaling_is_deterministic_per_seed(self):
        """Changing the variance rescales the same underlying draws."""
        dims = Dimensions(500, 1)
        x1 = sample_sources(dims, 1.0, 7)
        x9 = sample_sources(dims, 9.0, 7)
        np.testing.assert_allclose(x9, 3.0 * x1, rtol=1e-12)

    def test_per_user_variance_profile(self):
        dims = Dimensions(3, 1)
        base = sample_sources(dims, 1.0, 5)
        prof = sample_sources(dims, [1.0, 4.0, 9.0], 5)
        np.testing.assert_allclose(prof, base * np.array([1.0, 2.0, 3.0]), rtol=1e-12)

    def test_rejects_nonpositive_variance(self):
        with pytest.raises(ValueError):
            sample_sources(Dimensions(2, 1), 0.0, 0)
        with pytest.raises(ValueError):
            sample_sources(Dimensions(2, 1), [1.0, -1.0], 0)


class TestTransmit:
    def test_zero_noise_is_exact(self):
        H = generate_channel(Dimensions(4, 9), 3)
        x = sample_sources(Dimensions(4, 9), 1.0, 3)
        y = transmit(H, x, 0.0, 3)
        np.testing.assert_array_equal(y, H @ x)

    def test_noise_variance_matches(self):
        """Residual y - Hx has the requested variance (10000 samples)."""
        dims = Dimensions(1, 10000)
        H = generate_channel(dims, 0)
        x = sample_sources(dims, 1.0, 0)
        y = transmit(H, x, 0.25, 0)
        noise = y - H @ x
        assert abs(noise.var() / 0.25 - 1.0) < 0.05

    def test_noise_level_rescales_same_draws(self):
        """The noise stream is consumed identically at every noise level, so
        switching noise_var rescales the same residual rather than drawing a
        fresh one."""
        dims = Dimensions(3, 50)
        H = generate_channel(dims, 11)
        x = sample_sources(dims, 1.0, 11)
        r1 = transmit(H, x, 1.0, 11) - H @ x
        r2 = transmit(H, x, 2.0, 11) - H @ x
        np.testing.assert_allclose(r2, np.sqrt(2.0) * r1, rtol=1e-12)

    def test_rejects_negative_noise(self):
        H = generate_channel(Dimensions(2, 4), 0)
        x = sample_sources(Dimensions(2, 4), 1.0, 0)
        with pytest.raises(ValueError):
            transmit(H, x, -0.1, 0)


class TestMakeInstance:
    def test_components_match_standalone_calls(self):
        """Channel, sources and noise come from disjoint sub-streams, so the
        composed instance equals the three standalone generators exactly."""
        dims = Dimensions(6, 15)
        inst = make_instance(dims, 0.3, 2.0, 99)
        np.testing.assert_array_equal(inst.H, generate_channel(dims, 99))
        np.testing.assert_array_equal(inst.x, sample_sources(dims, 2.0, 99))
        np.testing.assert_array_equal(inst.y, transmit(inst.H, inst.x, 0.3, 99))

    def test_zero_noise_instance(self):
        inst = make_instance(Dimensions(4, 8), 0.0, 1.0, 1)
        np.testing.assert_array_equal(inst.y, inst.H @ inst.x)

    def test_dims_derived_from_matrix(self):
        inst = make_instance(Dimensions(5, 12), 1.0, 1.0, 0)
        assert inst.dims == Dimensions(5, 12)
        assert inst.H.shape == (12, 5)
        assert inst.source_vars.shape == (5,)

    def test_instance_rejects_mismatched_vectors(self):
        inst = make_instance(Dimensions(3, 6), 1.0, 1.0, 0)
        with pytest.raises(ValueError):
            SystemInstance(H=inst.H, y=inst.y[:-1], noise_var=1.0, source_vars=1.0)
        with pytest.raises(ValueError):
            SystemInstance(H=inst.H, y=inst.y, noise_var=1.0, source_vars=1.0,
                           x=np.zeros(4))
        with pytest.raises(ValueError):
            SystemInstance(H=inst.H, y=inst.y, noise_var=-1.0, source_vars=1.0)

    def test_truth_is_optional(self):
        inst = make_instance(Dimensions(3, 6), 1.0, 1.0, 0)
        blind = SystemInstance(H=inst.H, y=inst.y, noise_var=1.0, source_vars=1.0)
        assert blind.x is None


class TestSerialization:
    def test_round_trip_is_bit_exact(self, tmp_path):
        inst = make_instance(Dimensions(4, 7), 0.123456789123456789, 1.5, 2024)
        path = tmp_path / "instance.txt"
        save_instance(inst, path)
        back = load_instance(path)
        assert np.array_equal(back.H, inst.H)
        assert np.array_equal(back.x, inst.x)
        assert np.array_equal(back.y, inst.y)
        assert np.array_equal(back.source_vars, inst.source_vars)
        assert back.noise_var == inst.noise_var
        assert back.dims == inst.dims

    def test_requires_truth_vector(self, tmp_path):
        inst = make_instance(Dimensions(2, 4), 1.0, 1.0, 0)
        blind = SystemInstance(H=inst.H, y=inst.y, noise_var=1.0, source_vars=1.0)
        with pytest.raises(ValueError):
            save_instance(blind, tmp_path / "nope.txt")
