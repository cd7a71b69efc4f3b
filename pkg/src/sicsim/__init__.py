"""Physical-layer simulator for channel estimation and interference
cancellation of superimposed packets in a contended slot."""

from .canceller import (CancellationResult, SlotScenario, cancel_and_extract,
                        reconstruct_signal)
from .channel import (ChannelConfig, ChannelParams, apply_channel,
                      sample_channel_params, superpose_and_add_noise)
from .estimator import (ChannelEstimate, EmConfig, EstimationMode,
                        ObservationView, autocorr_init, em_e_step, em_m_step,
                        estimate_channels, psam_freq_init)
from .fec import CodecSpec, TurboCodec, default_codec, qpsk_llr, qpsk_map
from .harness import (PerCurve, PerPoint, SimConfig, TrialResult,
                      compute_rate_loss, measure_gap, run_sweep, run_trial)
from .waveform import (BasebandSignal, PacketLayout, TrainingSet,
                       WaveformConfig, build_packet, classic_layout,
                       generate_training_set, matched_filter_and_sample,
                       psam_layout, pulse_shape, rrc_taps)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
