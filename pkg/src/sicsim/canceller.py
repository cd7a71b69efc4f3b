"""Interference reconstruction and subtraction for a decoded user.

The known user's full packet (training and guard included) is re-shaped,
rotated by its channel estimate and subtracted from the received baseband
before matched filtering, so residual interference is whatever the estimate
missed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelParams
from .waveform import (BasebandSignal, PacketLayout, WaveformConfig,
                       matched_filter_and_sample, pulse_shape)

TWO_PI = 2.0 * np.pi


@dataclass
class SlotScenario:
    """One contended slot: per-user symbols, true channels, noisy sum."""

    symbols: list[np.ndarray]
    channels: list[ChannelParams]
    received: BasebandSignal
    layout: PacketLayout
    waveform: WaveformConfig

    @property
    def num_users(self) -> int:
        return len(self.symbols)


def reconstruct_signal(symbols: np.ndarray, estimate,
                       cfg: WaveformConfig) -> BasebandSignal:
    """Pulse-shape known symbols and apply an estimated channel triple.

    ``estimate`` is anything with amplitude / freq_offset / phase attributes
    (a ChannelEstimate, or true ChannelParams for genie-aided cancellation).
    A zero-amplitude estimate yields the zero signal.
    """
    sig = pulse_shape(symbols, cfg)
    i = np.arange(len(sig.samples)) - sig.origin
    rot = estimate.amplitude * np.exp(
        1j * (TWO_PI * estimate.freq_offset * i * sig.sample_period
              + estimate.phase))
    return BasebandSignal(samples=sig.samples * rot,
                          sample_period=sig.sample_period, origin=sig.origin)


@dataclass
class CancellationResult:
    """Symbol-rate stream after cancellation plus decoder-ready symbols."""

    stream: np.ndarray          # matched-filtered, Ts-sampled, full packet
    soft_symbols: np.ndarray    # stream derotated/rescaled by target estimate
    reconstruction: BasebandSignal  # what was subtracted (diagnostics)


def cancel_and_extract(scenario: SlotScenario, known_user: int, estimates: list,
                       target_user: int | None = None) -> CancellationResult:
    """Subtract the known user's reconstruction; return the remaining stream.

    ``target_user`` (defaulting to the other user in the two-user scenario)
    selects whose estimate derotates the soft symbols.
    """
    if target_user is None:
        others = [k for k in range(scenario.num_users) if k != known_user]
        if len(others) != 1:
            raise ValueError("target_user is required when more than two users")
        target_user = others[0]
    recon = reconstruct_signal(scenario.symbols[known_user],
                               estimates[known_user], scenario.waveform)
    if len(recon.samples) != len(scenario.received.samples):
        raise ValueError("reconstruction length does not match received signal")
    residual = BasebandSignal(
        samples=scenario.received.samples - recon.samples,
        sample_period=scenario.received.sample_period,
        origin=scenario.received.origin)
    stream = matched_filter_and_sample(residual, scenario.waveform,
                                       scenario.layout)
    est = estimates[target_user]
    n = np.arange(scenario.layout.total_len)
    ts = 1.0 / scenario.waveform.symbol_rate
    derot = np.exp(-1j * (TWO_PI * est.freq_offset * ts * n + est.phase))
    amp = est.amplitude if est.amplitude > 0 else 1.0
    return CancellationResult(stream=stream, soft_symbols=stream * derot / amp,
                              reconstruction=recon)
