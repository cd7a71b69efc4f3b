"""Block-fading multiplicative channel, user superposition and AWGN.

Within one slot the channel of user k is h_k(i) = A * exp(j*(2*pi*df*i*Te
+ phi)) with (A, df, phi) constant; the sample index i is counted from the
signal's origin (first symbol peak) so that true and estimated phases share
one reference.

Es/N0 convention: symbols have unit energy and the RRC has unit energy, so
the complex noise variance per baseband sample equals the symbol-rate noise
variance N0 after matched filtering; Es/N0 [dB] = -10*log10(N0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .waveform import BasebandSignal

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class ChannelParams:
    """True per-user channel triple; ``freq_offset`` is in Hz."""

    amplitude: float
    freq_offset: float
    phase: float

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")


@dataclass(frozen=True)
class ChannelConfig:
    """Channel randomization and noise level.

    ``dfmax`` is the maximum frequency offset as a fraction of the symbol
    rate.  ``esn0_db = None`` disables noise.  ``amplitude_sigma = 0`` gives
    the fixed unit-amplitude model; otherwise A is lognormal(0, sigma).
    """

    dfmax: float = 0.01
    esn0_db: float | None = None
    amplitude_sigma: float = 0.0

    def __post_init__(self):
        if self.dfmax < 0:
            raise ValueError("dfmax must be >= 0")
        if self.amplitude_sigma < 0:
            raise ValueError("amplitude_sigma must be >= 0")

    @property
    def noise_variance(self) -> float:
        if self.esn0_db is None:
            return 0.0
        return 10.0 ** (-self.esn0_db / 10.0)


def sample_channel_params(cfg: ChannelConfig, rng: np.random.Generator,
                          symbol_rate: float = 1.0) -> ChannelParams:
    """Draw (A, df, phi): A per model, df ~ U[0, dfmax/Ts], phi ~ U[0, 2pi)."""
    if cfg.amplitude_sigma == 0.0:
        amplitude = 1.0
    else:
        amplitude = float(rng.lognormal(mean=0.0, sigma=cfg.amplitude_sigma))
    freq = float(rng.uniform(0.0, cfg.dfmax * symbol_rate))
    phase = float(rng.uniform(0.0, TWO_PI))
    return ChannelParams(amplitude=amplitude, freq_offset=freq, phase=phase)


def channel_rotation(params: ChannelParams, num_samples: int, sample_period: float,
                     origin: int = 0) -> np.ndarray:
    """Per-sample complex channel coefficients, ramp anchored at ``origin``."""
    i = np.arange(num_samples) - origin
    return params.amplitude * np.exp(
        1j * (TWO_PI * params.freq_offset * i * sample_period + params.phase))


def apply_channel(signal: BasebandSignal, params: ChannelParams) -> BasebandSignal:
    """Rotate and scale a baseband signal by the block-fading coefficients."""
    rot = channel_rotation(params, len(signal.samples), signal.sample_period,
                           signal.origin)
    return BasebandSignal(samples=signal.samples * rot,
                          sample_period=signal.sample_period,
                          origin=signal.origin)


def superpose_and_add_noise(signals: list[BasebandSignal], cfg: ChannelConfig,
                            rng: np.random.Generator) -> BasebandSignal:
    """Sum user signals and add circular complex AWGN of variance N0."""
    if not signals:
        raise ValueError("need at least one signal")
    first = signals[0]
    for s in signals[1:]:
        if len(s.samples) != len(first.samples):
            raise ValueError("signal lengths differ")
        if s.sample_period != first.sample_period or s.origin != first.origin:
            raise ValueError("signal sampling metadata differs")
    total = np.sum([s.samples for s in signals], axis=0)
    n0 = cfg.noise_variance
    if n0 > 0.0:
        scale = np.sqrt(n0 / 2.0)
        noise = rng.standard_normal(len(total)) + 1j * rng.standard_normal(len(total))
        total = total + scale * noise
    return BasebandSignal(samples=total, sample_period=first.sample_period,
                          origin=first.origin)
