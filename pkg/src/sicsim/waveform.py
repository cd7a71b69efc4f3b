"""Packet assembly, training sequences, pulse shaping and matched filtering.

Symbol conventions: training symbols are unit-energy BPSK (+1/-1), payload
symbols are unit-energy complex (QPSK from :mod:`sicsim.fec`), guard symbols
are zeros.  All symbol indexes are absolute positions within the slot,
starting at the first guard symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import hadamard


class LayoutError(ValueError):
    """Inconsistent packet layout or mismatched field lengths."""


class OrthogonalityError(ValueError):
    """No exactly-orthogonal training family exists for the request."""


@dataclass(frozen=True)
class PacketLayout:
    """Symbol-index geometry of one packet.

    ``pilot_count`` blocks of ``pilot_block_len`` BPSK symbols are spread
    uniformly through the payload, with ``pilot_spacing`` payload symbols
    between consecutive training blocks.
    """

    guard_len: int
    preamble_len: int
    postamble_len: int
    payload_len: int
    pilot_block_len: int = 0
    pilot_count: int = 0
    pilot_spacing: int = 0

    def __post_init__(self):
        if min(self.guard_len, self.preamble_len, self.postamble_len,
               self.payload_len, self.pilot_block_len, self.pilot_count,
               self.pilot_spacing) < 0:
            raise LayoutError("layout lengths must be non-negative")
        if self.pilot_count > 0:
            if self.pilot_block_len <= 0:
                raise LayoutError("pilot_count > 0 requires pilot_block_len > 0")
            expected = (self.pilot_count + 1) * self.pilot_spacing
            if self.payload_len != expected:
                raise LayoutError(
                    f"payload_len must be (P+1)*M = {expected}, got {self.payload_len}")

    @property
    def total_len(self) -> int:
        return (2 * self.guard_len + self.preamble_len + self.postamble_len
                + self.payload_len + self.pilot_count * self.pilot_block_len)

    def preamble_indexes(self) -> np.ndarray:
        g = self.guard_len
        return np.arange(g, g + self.preamble_len)

    def pilot_block_indexes(self, block: int) -> np.ndarray:
        if not 0 <= block < self.pilot_count:
            raise LayoutError(f"pilot block {block} out of range")
        start = (self.guard_len + self.preamble_len
                 + (block + 1) * self.pilot_spacing + block * self.pilot_block_len)
        return np.arange(start, start + self.pilot_block_len)

    def postamble_indexes(self) -> np.ndarray:
        start = (self.guard_len + self.preamble_len + self.payload_len
                 + self.pilot_count * self.pilot_block_len)
        return np.arange(start, start + self.postamble_len)

    def payload_indexes(self) -> np.ndarray:
        if self.pilot_count == 0:
            start = self.guard_len + self.preamble_len
            return np.arange(start, start + self.payload_len)
        blocks = []
        pos = self.guard_len + self.preamble_len
        for _ in range(self.pilot_count + 1):
            blocks.append(np.arange(pos, pos + self.pilot_spacing))
            pos += self.pilot_spacing + self.pilot_block_len
        return np.concatenate(blocks)

    def training_index_set(self, include_pilots: bool = True) -> np.ndarray:
        parts = [self.preamble_indexes()]
        if include_pilots:
            parts += [self.pilot_block_indexes(b) for b in range(self.pilot_count)]
        parts.append(self.postamble_indexes())
        return np.concatenate(parts)

    def guard_indexes(self) -> np.ndarray:
        g = self.guard_len
        return np.concatenate([np.arange(0, g),
                               np.arange(self.total_len - g, self.total_len)])


# Layouts used by the reference experiments: 460-symbol coded payload with
# either preamble 80 / postamble 48, or the pilot-assisted variant with
# preamble 40 / postamble 12 and nine 12-symbol pilot blocks.
def classic_layout(guard_len: int = 4) -> PacketLayout:
    return PacketLayout(guard_len=guard_len, preamble_len=80,
                        postamble_len=48, payload_len=460)


def psam_layout(guard_len: int = 4) -> PacketLayout:
    return PacketLayout(guard_len=guard_len, preamble_len=40, postamble_len=12,
                        payload_len=460, pilot_block_len=12, pilot_count=9,
                        pilot_spacing=46)


@dataclass(frozen=True)
class TrainingSet:
    """Per-user BPSK training sequences: preamble, postamble, pilot blocks.

    Arrays hold +1/-1 as float64.  Shape: preambles (K, L_pre), postambles
    (K, L_post), pilots (K, P, L).  Sequences for distinct users are exactly
    orthogonal field by field (and pilot block by pilot block).
    """

    preambles: np.ndarray
    postambles: np.ndarray
    pilots: np.ndarray

    @property
    def num_users(self) -> int:
        return self.preambles.shape[0]

    def training_vector(self, user: int, include_pilots: bool = True) -> np.ndarray:
        """Training symbols of ``user`` in training-index order."""
        parts = [self.preambles[user]]
        if include_pilots and self.pilots.shape[1]:
            parts += [self.pilots[user, b] for b in range(self.pilots.shape[1])]
        parts.append(self.postambles[user])
        return np.concatenate(parts)


def _orthogonal_family(length: int, num_users: int, rng: np.random.Generator) -> np.ndarray:
    """``num_users`` mutually orthogonal +/-1 rows of the given length.

    Rows 0 .. 2**a - 1 of a Sylvester-Hadamard matrix of size >= length stay
    pairwise orthogonal after truncation to ``length`` columns whenever 2**a
    divides ``length`` (the truncation keeps whole sign-balanced blocks).
    """
    if length <= 0:
        raise OrthogonalityError("training length must be positive")
    if num_users == 1:
        return np.ones((1, length))
    pow2 = length & -length  # largest power of two dividing length
    if num_users > pow2:
        raise OrthogonalityError(
            f"no orthogonal family: {num_users} users need a power-of-two "
            f"divisor of length {length} that is >= {num_users} (have {pow2})")
    size = 1 << int(np.ceil(np.log2(length)))
    rows = rng.choice(pow2, size=num_users, replace=False)
    family = hadamard(size)[rows, :length].astype(float)
    gram = family @ family.T
    if not np.array_equal(gram, length * np.eye(num_users)):
        raise OrthogonalityError("orthogonality verification failed")
    return family


def generate_training_set(num_users: int, layout: PacketLayout, seed: int) -> TrainingSet:
    """Draw per-user orthogonal BPSK training sequences, deterministically."""
    rng = np.random.default_rng(seed)
    pre = _orthogonal_family(layout.preamble_len, num_users, rng)
    post = _orthogonal_family(layout.postamble_len, num_users, rng)
    if layout.pilot_count:
        pilots = np.stack(
            [_orthogonal_family(layout.pilot_block_len, num_users, rng)
             for _ in range(layout.pilot_count)], axis=1)
    else:
        pilots = np.zeros((num_users, 0, 0))
    return TrainingSet(preambles=pre, postambles=post, pilots=pilots)


def build_packet(layout: PacketLayout, training: TrainingSet, user: int,
                 payload: np.ndarray) -> np.ndarray:
    """Place guard, training and payload symbols at their layout positions."""
    payload = np.asarray(payload)
    if len(payload) != layout.payload_len:
        raise LayoutError(
            f"payload length {len(payload)} != layout.payload_len {layout.payload_len}")
    if training.preambles.shape[1] != layout.preamble_len:
        raise LayoutError("training preamble length does not match layout")
    if training.postambles.shape[1] != layout.postamble_len:
        raise LayoutError("training postamble length does not match layout")
    if layout.pilot_count and training.pilots.shape[1:] != (layout.pilot_count,
                                                            layout.pilot_block_len):
        raise LayoutError("training pilot blocks do not match layout")
    packet = np.zeros(layout.total_len, dtype=complex)
    packet[layout.preamble_indexes()] = training.preambles[user]
    for b in range(layout.pilot_count):
        packet[layout.pilot_block_indexes(b)] = training.pilots[user, b]
    packet[layout.postamble_indexes()] = training.postambles[user]
    packet[layout.payload_indexes()] = payload
    return packet


@dataclass(frozen=True)
class WaveformConfig:
    """Pulse-shaping parameters; ``oversampling`` is samples per symbol."""

    symbol_rate: float = 1.0
    oversampling: int = 4
    rrc_rolloff: float = 0.35
    rrc_span: int = 10

    def __post_init__(self):
        if self.oversampling < 2:
            raise ValueError("oversampling must be >= 2")
        if not 0.0 < self.rrc_rolloff <= 1.0:
            raise ValueError("rrc_rolloff must be in (0, 1]")
        if self.rrc_span < 2:
            raise ValueError("rrc_span must be >= 2")

    @property
    def sample_period(self) -> float:
        return 1.0 / (self.symbol_rate * self.oversampling)


@dataclass
class BasebandSignal:
    """Complex sample stream with its sampling metadata.

    ``origin`` is the sample index of the first symbol peak; the channel
    phase ramp and all symbol-rate resampling are anchored there.
    """

    samples: np.ndarray
    sample_period: float
    origin: int = 0

    def __len__(self) -> int:
        return len(self.samples)


@lru_cache(maxsize=16)
def rrc_taps(oversampling: int, rolloff: float, span: int) -> np.ndarray:
    """Unit-energy root-raised-cosine impulse response (span*Q + 1 taps)."""
    n = span * oversampling
    t = (np.arange(n + 1) - n / 2) / oversampling
    b = rolloff
    h = np.empty_like(t)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1.0 - b + 4.0 * b / np.pi
        elif abs(abs(ti) - 1.0 / (4.0 * b)) < 1e-9:
            h[i] = (b / np.sqrt(2.0)
                    * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * b))
                       + (1 - 2 / np.pi) * np.cos(np.pi / (4 * b))))
        else:
            h[i] = ((np.sin(np.pi * ti * (1 - b))
                     + 4 * b * ti * np.cos(np.pi * ti * (1 + b)))
                    / (np.pi * ti * (1 - (4 * b * ti) ** 2)))
    h /= np.sqrt(np.sum(h ** 2))
    h.setflags(write=False)
    return h


def pulse_shape(symbols: np.ndarray, cfg: WaveformConfig) -> BasebandSignal:
    """Upsample by Q and convolve with the unit-energy RRC."""
    symbols = np.asarray(symbols, dtype=complex)
    q = cfg.oversampling
    h = rrc_taps(q, cfg.rrc_rolloff, cfg.rrc_span)
    up = np.zeros(len(symbols) * q, dtype=complex)
    up[::q] = symbols
    samples = np.convolve(up, h)
    return BasebandSignal(samples=samples, sample_period=cfg.sample_period,
                          origin=(len(h) - 1) // 2)


def matched_filter_and_sample(signal: BasebandSignal, cfg: WaveformConfig,
                              layout: PacketLayout) -> np.ndarray:
    """Matched-filter the signal and sample one value per packet symbol."""
    h = rrc_taps(cfg.oversampling, cfg.rrc_rolloff, cfg.rrc_span)
    filtered = np.convolve(signal.samples, h)
    origin = signal.origin + (len(h) - 1) // 2
    idx = origin + np.arange(layout.total_len) * cfg.oversampling
    if idx[-1] >= len(filtered):
        raise LayoutError(
            f"signal too short for layout: need symbol index {idx[-1]}, "
            f"have {len(filtered)} filtered samples")
    return filtered[idx]
