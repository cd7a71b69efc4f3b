"""Tests for channel parameter sampling, rotation and noise injection."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from sicsim.channel import (ChannelConfig, ChannelParams, apply_channel,
                            sample_channel_params, superpose_and_add_noise)
from sicsim.waveform import BasebandSignal, WaveformConfig, pulse_shape


def make_signal(samples, origin=0):
    return BasebandSignal(samples=np.asarray(samples, complex),
                          sample_period=0.25, origin=origin)


class TestSampling:
    def test_fixed_unit_amplitude(self):
        cfg = ChannelConfig(dfmax=0.01, esn0_db=3.0)
        rng = np.random.default_rng(0)
        assert all(sample_channel_params(cfg, rng).amplitude == 1.0
                   for _ in range(50))

    def test_dfmax_zero(self):
        cfg = ChannelConfig(dfmax=0.0, esn0_db=3.0)
        rng = np.random.default_rng(0)
        assert all(sample_channel_params(cfg, rng).freq_offset == 0.0
                   for _ in range(50))

    def test_phase_uniformity_ks(self):
        cfg = ChannelConfig(dfmax=0.01, esn0_db=3.0)
        rng = np.random.default_rng(123)
        phases = np.array([sample_channel_params(cfg, rng).phase
                           for _ in range(10 ** 5)])
        assert abs(phases.mean() - np.pi) < 0.02
        result = stats.kstest(phases / (2 * np.pi), "uniform")
        assert result.pvalue > 0.01

    def test_freq_scales_with_symbol_rate(self):
        cfg = ChannelConfig(dfmax=0.01, esn0_db=3.0)
        draws = [sample_channel_params(cfg, np.random.default_rng(9),
                                       symbol_rate=r).freq_offset
                 for r in (1.0, 2.0)]
        assert draws[1] == 2 * draws[0]

    def test_lognormal_amplitude_model(self):
        cfg = ChannelConfig(dfmax=0.0, esn0_db=3.0, amplitude_sigma=0.3)
        rng = np.random.default_rng(5)
        amps = np.array([sample_channel_params(cfg, rng).amplitude
                         for _ in range(20000)])
        assert np.all(amps > 0)
        assert abs(np.log(amps).std() - 0.3) < 0.01

    def test_determinism(self):
        cfg = ChannelConfig(dfmax=0.01, esn0_db=3.0)
        a = sample_channel_params(cfg, np.random.default_rng(77))
        b = sample_channel_params(cfg, np.random.default_rng(77))
        assert a == b


class TestApplyChannel:
    def test_identity(self):
        sig = make_signal(np.arange(10) + 1j)
        out = apply_channel(sig, ChannelParams(1.0, 0.0, 0.0))
        assert_array_equal(out.samples, sig.samples)

    def test_phase_pi_negates(self):
        sig = make_signal(np.arange(10) + 0j)
        out = apply_channel(sig, ChannelParams(1.0, 0.0, np.pi))
        assert_allclose(out.samples, -sig.samples, atol=1e-12)

    def test_closed_form_ramp(self):
        # constant-1 signal, Q=4: sample i becomes 2*exp(j*2*pi*0.01*i/4)
        sig = make_signal(np.ones(64))
        out = apply_channel(sig, ChannelParams(2.0, 0.01, 0.0))
        i = np.arange(64)
        assert_allclose(out.samples, 2.0 * np.exp(2j * np.pi * 0.01 * i * 0.25),
                        atol=1e-12)

    def test_ramp_anchored_at_origin(self):
        sig = make_signal(np.ones(64), origin=8)
        out = apply_channel(sig, ChannelParams(1.0, 0.02, 0.0))
        assert_allclose(out.samples[8], 1.0, atol=1e-12)

    def test_block_fading_constant_envelope(self):
        cfg = WaveformConfig()
        sig = pulse_shape(np.ones(32), cfg)
        out = apply_channel(sig, ChannelParams(1.7, 0.003, 1.0))
        assert_allclose(np.abs(out.samples), 1.7 * np.abs(sig.samples),
                        atol=1e-12)


class TestSuperposeAndNoise:
    def test_single_signal_noiseless_identity(self):
        sig = make_signal(np.arange(16) * 1j)
        out = superpose_and_add_noise([sig], ChannelConfig(esn0_db=None),
                                      np.random.default_rng(0))
        assert_array_equal(out.samples, sig.samples)

    def test_two_identical_signals_double(self):
        sig = make_signal(np.arange(16) + 2j)
        out = superpose_and_add_noise([sig, sig], ChannelConfig(esn0_db=None),
                                      np.random.default_rng(0))
        assert_array_equal(out.samples, 2 * sig.samples)

    def test_noise_variance_calibration(self):
        # zero signal at Es/N0 = 0 dB: variance matches N0=1 within 2% / 1e6
        sig = make_signal(np.zeros(10 ** 6))
        cfg = ChannelConfig(esn0_db=0.0)
        out = superpose_and_add_noise([sig], cfg, np.random.default_rng(3))
        measured = np.mean(np.abs(out.samples) ** 2)
        assert abs(measured - 1.0) < 0.02

    def test_length_mismatch_error(self):
        with pytest.raises(ValueError, match="length"):
            superpose_and_add_noise(
                [make_signal(np.zeros(4)), make_signal(np.zeros(5))],
                ChannelConfig(esn0_db=None), np.random.default_rng(0))

    def test_noise_determinism(self):
        sig = make_signal(np.zeros(100))
        cfg = ChannelConfig(esn0_db=2.0)
        a = superpose_and_add_noise([sig], cfg, np.random.default_rng(11))
        b = superpose_and_add_noise([sig], cfg, np.random.default_rng(11))
        assert_array_equal(a.samples, b.samples)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            ChannelConfig(dfmax=-0.1)
        with pytest.raises(ValueError):
            ChannelParams(amplitude=0.0, freq_offset=0.0, phase=0.0)
