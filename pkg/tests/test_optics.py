import numpy as np
import pytest

import specklekit as sk
from specklekit import ParameterError
from oracles import fresnel_direct_sum

LAM, DIST, PITCH = 0.06e-9, 0.3, 0.65e-6


class TestCodedMask:
    def test_half_ones_512(self):
        mask = sk.generate_coded_mask(512, 8, sk.SeedContext(0))
        assert mask.coarse.shape == (64, 64)
        assert int(mask.coarse.sum()) == 2048
        pattern = mask.pattern.data
        blocks = pattern.reshape(64, 8, 64, 8)
        assert np.all(blocks == blocks[:, :1, :, :1])

    def test_tiny_mask(self):
        mask = sk.generate_coded_mask(16, 8, sk.SeedContext(1))
        assert mask.coarse.shape == (2, 2)
        assert int(mask.coarse.sum()) == 2

    def test_seed_reproducible(self):
        a = sk.generate_coded_mask(128, 8, sk.SeedContext(5)).pattern.data
        b = sk.generate_coded_mask(128, 8, sk.SeedContext(5)).pattern.data
        assert a.tobytes() == b.tobytes()

    def test_pitch_must_divide(self):
        with pytest.raises(ParameterError):
            sk.generate_coded_mask(100, 8, sk.SeedContext(0))

    def test_odd_cell_count_rejected(self):
        # 24/8 = 3 -> 9 coarse cells, cannot split half/half
        with pytest.raises(ParameterError):
            sk.generate_coded_mask(24, 8, sk.SeedContext(0))


def _random_complex(rng, n):
    return rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))


class TestFresnelExact:
    def test_matches_direct_sum_impulse(self):
        field = np.zeros((16, 16), dtype=complex)
        field[8, 8] = 1.0
        fast = sk.fresnel_propagate(sk.ComplexField2D(field), LAM, DIST, PITCH).data
        slow = fresnel_direct_sum(field, LAM, DIST, PITCH)
        rel = np.abs(fast - slow).max() / np.abs(slow).max()
        assert rel < 1e-6

    def test_matches_direct_sum_random(self):
        rng = np.random.default_rng(11)
        for trial in range(3):
            n = int(rng.integers(16, 33))
            field = _random_complex(rng, n)
            fast = sk.fresnel_propagate(sk.ComplexField2D(field), LAM, DIST, PITCH).data
            slow = fresnel_direct_sum(field, LAM, DIST, PITCH)
            rel = np.abs(fast - slow).max() / np.abs(slow).max()
            assert rel < 1e-6

    def test_linearity(self):
        rng = np.random.default_rng(12)
        a = _random_complex(rng, 32)
        b = _random_complex(rng, 32)
        pa = sk.fresnel_propagate(sk.ComplexField2D(a), LAM, DIST, PITCH).data
        pb = sk.fresnel_propagate(sk.ComplexField2D(b), LAM, DIST, PITCH).data
        pab = sk.fresnel_propagate(sk.ComplexField2D(a + b), LAM, DIST, PITCH).data
        scale = np.abs(pab).max()
        assert np.abs(pab - (pa + pb)).max() / scale < 1e-10

    def test_bad_distance(self):
        with pytest.raises(ParameterError):
            sk.fresnel_propagate(sk.ComplexField2D(np.ones((8, 8), complex)), LAM, 0.0, PITCH)


class TestFresnelSpectral:
    """The renderer's propagation path: unitary, plane-wave eigenfunction,
    exactly equivariant under cyclic shifts."""

    def test_plane_wave_modulus(self):
        field = sk.ComplexField2D(np.ones((128, 128), complex))
        out = sk.fresnel_propagate(field, LAM, DIST, PITCH, method="spectral")
        assert np.abs(np.abs(out.data) ** 2 - 1.0).max() < 1e-12

    def test_energy_conserved(self):
        rng = np.random.default_rng(13)
        field = _random_complex(rng, 64)
        out = sk.fresnel_propagate(sk.ComplexField2D(field), LAM, DIST, PITCH, "spectral")
        ratio = np.mean(np.abs(out.data) ** 2) / np.mean(np.abs(field) ** 2)
        assert abs(ratio - 1.0) < 1e-12

    def test_cyclic_shift_equivariance(self):
        rng = np.random.default_rng(14)
        field = _random_complex(rng, 64)
        out = sk.fresnel_propagate(sk.ComplexField2D(field), LAM, DIST, PITCH, "spectral").data
        shifted_in = np.roll(field, (0, 8), axis=(0, 1))
        out_shifted = sk.fresnel_propagate(
            sk.ComplexField2D(shifted_in), LAM, DIST, PITCH, "spectral"
        ).data
        assert np.abs(out_shifted - np.roll(out, (0, 8), axis=(0, 1))).max() < 1e-9


def _uniform_mask(value: float) -> sk.CodedMask:
    # 9x9 coarse cells (odd count) so the half-ones rule does not apply
    coarse = np.full((9, 9), value)
    return sk.CodedMask(coarse, 8, PITCH)


class TestRenderReference:
    def test_uniform_zero_mask(self):
        ref = sk.render_reference(_uniform_mask(0.0))
        assert np.abs(ref.data - 0.49).max() < 1e-6

    def test_uniform_one_mask(self):
        ref = sk.render_reference(_uniform_mask(1.0))
        assert np.abs(ref.data - 1.0).max() < 1e-6

    def test_speckle_contrast(self):
        mask = sk.generate_coded_mask(512, 8, sk.SeedContext(3))
        ref = sk.render_reference(mask)
        interior = ref.data[32:-32, 32:-32]
        assert interior.std() / interior.mean() > 0.15

    def test_output_positive(self):
        mask = sk.generate_coded_mask(128, 8, sk.SeedContext(4))
        ref = sk.render_reference(mask)
        assert ref.data.min() > 0

    def test_pattern_shift_translates_intensity(self):
        # whole-pitch cyclic translation of the coarse grid translates the
        # pre-blur intensity by the pitch
        mask = sk.generate_coded_mask(128, 8, sk.SeedContext(6))
        cfg = sk.OpticsConfig()

        def prop_intensity(coarse):
            pattern = np.repeat(np.repeat(coarse, 8, axis=0), 8, axis=1)
            entrance = (cfg.base_amplitude + cfg.amplitude_step * pattern) * np.exp(
                1j * cfg.mask_phase * pattern
            )
            out = sk.fresnel_propagate(
                sk.ComplexField2D(entrance), cfg.wavelength, cfg.distance, PITCH, "spectral"
            )
            return np.abs(out.data) ** 2

        base = prop_intensity(mask.coarse)
        shifted = prop_intensity(np.roll(mask.coarse, 1, axis=1))
        assert np.abs(shifted - np.roll(base, 8, axis=1)).max() < 1e-6

    def test_small_mask_rejected(self):
        coarse = np.zeros((3, 3))
        with pytest.raises(ParameterError):
            sk.render_reference(sk.CodedMask(coarse, 8, PITCH))


class TestOpticsConfig:
    def test_defaults(self):
        cfg = sk.OpticsConfig()
        assert cfg.wavelength == pytest.approx(0.06e-9)
        assert cfg.distance == pytest.approx(0.3)
        assert cfg.base_amplitude == pytest.approx(0.7)
        assert cfg.amplitude_step == pytest.approx(0.3)
        assert cfg.mask_phase == pytest.approx(np.pi)
        assert cfg.detector_blur_px == 3

    def test_validation(self):
        with pytest.raises(ParameterError):
            sk.OpticsConfig(detector_blur_px=2)
        with pytest.raises(ParameterError):
            sk.OpticsConfig(wavelength=-1.0)
