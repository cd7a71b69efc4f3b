"""Rate-1/2 turbo codec and QPSK mapping.

The default codec is a parallel concatenation of two 8-state recursive
systematic convolutional encoders, generators (feedback, feedforward) =
(13, 15) octal, joined by a fixed spread (S-random) interleaver.  Native
rate 1/2 is obtained by keeping the systematic stream and alternating the
two parity streams (encoder 1 parity at even positions, encoder 2 parity at
odd positions of its own interleaved domain); the trellises are left
unterminated.  Decoding is iterative max-log BCJR with extrinsic scaling
0.75 and early exit on stable hard decisions; with all-zero input LLRs the
tie-break decodes every bit as 0.

LLR convention throughout: positive means bit 0 is more likely.

QPSK is Gray-mapped: bit pair (b0, b1) -> ((1-2*b0) + 1j*(1-2*b1)) / sqrt(2),
so bits 00 map to (+1+1j)/sqrt(2); b0 rides on the real part.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

_NUM_STATES = 8


def _build_trellis() -> tuple[np.ndarray, np.ndarray]:
    # state = (d1 d2 d3); feedback taps 011 (poly 13), forward taps 101 after
    # the systematic tap (poly 15)
    nxt = np.zeros((_NUM_STATES, 2), np.int64)
    par = np.zeros((_NUM_STATES, 2), np.int64)
    for s in range(_NUM_STATES):
        d1, d2, d3 = (s >> 2) & 1, (s >> 1) & 1, s & 1
        for u in (0, 1):
            a = u ^ d2 ^ d3
            nxt[s, u] = (a << 2) | (d1 << 1) | d2
            par[s, u] = a ^ d1 ^ d3
    return nxt, par


_NXT, _PAR = _build_trellis()


@njit(cache=True)
def _rsc_encode(bits, nxt, par):
    out = np.empty(bits.shape[0], np.int8)
    s = 0
    for i in range(bits.shape[0]):
        u = bits[i]
        out[i] = par[s, u]
        s = nxt[s, u]
    return out


@njit(cache=True, fastmath=True)
def _bcjr_maxlog(l_sys, l_par, l_apriori, nxt, par):
    n = l_sys.shape[0]
    neg = -1e30
    alpha = np.empty((n + 1, _NUM_STATES))
    beta = np.empty((n + 1, _NUM_STATES))
    alpha[0, :] = neg
    alpha[0, 0] = 0.0
    beta[n, :] = 0.0  # unterminated trellis: uniform end metric
    for i in range(n):
        for s2 in range(_NUM_STATES):
            alpha[i + 1, s2] = neg
        for s in range(_NUM_STATES):
            a = alpha[i, s]
            if a <= neg:
                continue
            for u in range(2):
                su = 1.0 - 2.0 * u
                sp = 1.0 - 2.0 * par[s, u]
                g = 0.5 * (su * (l_sys[i] + l_apriori[i]) + sp * l_par[i])
                s2 = nxt[s, u]
                v = a + g
                if v > alpha[i + 1, s2]:
                    alpha[i + 1, s2] = v
    for i in range(n - 1, -1, -1):
        for s in range(_NUM_STATES):
            best = neg
            for u in range(2):
                su = 1.0 - 2.0 * u
                sp = 1.0 - 2.0 * par[s, u]
                g = 0.5 * (su * (l_sys[i] + l_apriori[i]) + sp * l_par[i])
                v = g + beta[i + 1, nxt[s, u]]
                if v > best:
                    best = v
            beta[i, s] = best
    llr = np.empty(n)
    for i in range(n):
        m0 = neg
        m1 = neg
        for s in range(_NUM_STATES):
            a = alpha[i, s]
            for u in range(2):
                su = 1.0 - 2.0 * u
                sp = 1.0 - 2.0 * par[s, u]
                g = 0.5 * (su * (l_sys[i] + l_apriori[i]) + sp * l_par[i])
                v = a + g + beta[i + 1, nxt[s, u]]
                if u == 0:
                    if v > m0:
                        m0 = v
                else:
                    if v > m1:
                        m1 = v
        llr[i] = m0 - m1
    return llr


@njit(cache=True, fastmath=True)
def _turbo_decode(l_sys, l_p1, l_p2, interleaver, max_iter, scale, nxt, par):
    n = l_sys.shape[0]
    l_apriori = np.zeros(n)
    l_sys_i = l_sys[interleaver]
    prev = np.zeros(n, np.int8)
    hard = np.zeros(n, np.int8)
    converged = False
    for it in range(max_iter):
        llr1 = _bcjr_maxlog(l_sys, l_p1, l_apriori, nxt, par)
        ext1 = scale * (llr1 - l_sys - l_apriori)
        llr2 = _bcjr_maxlog(l_sys_i, l_p2, ext1[interleaver], nxt, par)
        ext2 = scale * (llr2 - l_sys_i - ext1[interleaver])
        l_apriori = np.zeros(n)
        l_apriori[interleaver] = ext2
        full = l_sys + l_apriori + ext1
        same = True
        for i in range(n):
            hard[i] = 1 if full[i] < 0.0 else 0
            if hard[i] != prev[i]:
                same = False
            prev[i] = hard[i]
        if same and it > 0:
            converged = True
            break
    return hard, converged


def spread_interleaver(length: int, spread: int, seed: int) -> np.ndarray:
    """Greedy S-random permutation; relaxes the spread until feasible."""
    rng = np.random.default_rng(seed)
    s = spread
    while s >= 1:
        base = list(rng.permutation(length))
        out: list[int] = []
        feasible = True
        for i in range(length):
            placed = False
            for j, cand in enumerate(base):
                if all(abs(cand - out[k]) >= s
                       for k in range(max(0, i - s), i)):
                    out.append(cand)
                    base.pop(j)
                    placed = True
                    break
            if not placed:
                feasible = False
                break
        if feasible:
            return np.array(out, dtype=np.int64)
        s -= 1
    return rng.permutation(length).astype(np.int64)


class CodecError(ValueError):
    """Length mismatch at the codec boundary."""


@dataclass(frozen=True)
class CodecSpec:
    name: str
    rate: float
    info_len: int
    coded_len: int

    def __post_init__(self):
        if round(self.info_len / self.rate) != self.coded_len:
            raise CodecError(
                f"coded_len {self.coded_len} != info_len/rate "
                f"{self.info_len / self.rate:g}")


class TurboCodec:
    """Default pluggable codec: see module docstring for the exact layout."""

    def __init__(self, info_len: int = 460, iterations: int = 8,
                 extrinsic_scale: float = 0.75, interleaver_seed: int = 99):
        self.spec = CodecSpec(name="turbo-13-15-srandom", rate=0.5,
                              info_len=info_len, coded_len=2 * info_len)
        self.iterations = iterations
        self.extrinsic_scale = extrinsic_scale
        spread = max(1, int(np.sqrt(info_len / 2)))
        self.interleaver = spread_interleaver(info_len, spread,
                                              interleaver_seed)
        self._even = np.arange(info_len) % 2 == 0

    def encode(self, info_bits: np.ndarray) -> np.ndarray:
        info_bits = np.asarray(info_bits, dtype=np.int8)
        if len(info_bits) != self.spec.info_len:
            raise CodecError(
                f"info length {len(info_bits)} != {self.spec.info_len}")
        p1 = _rsc_encode(info_bits, _NXT, _PAR)
        p2 = _rsc_encode(info_bits[self.interleaver], _NXT, _PAR)
        coded = np.empty(self.spec.coded_len, np.int8)
        coded[0::2] = info_bits
        coded[1::2] = np.where(self._even, p1, p2)
        return coded

    def decode(self, llrs: np.ndarray) -> tuple[np.ndarray, bool]:
        llrs = np.asarray(llrs, dtype=float)
        if len(llrs) != self.spec.coded_len:
            raise CodecError(
                f"llr length {len(llrs)} != {self.spec.coded_len}")
        l_sys = np.ascontiguousarray(llrs[0::2])
        l_par = llrs[1::2]
        l_p1 = np.where(self._even, l_par, 0.0)
        l_p2 = np.where(~self._even, l_par, 0.0)
        bits, converged = _turbo_decode(l_sys, l_p1, l_p2, self.interleaver,
                                        self.iterations, self.extrinsic_scale,
                                        _NXT, _PAR)
        return bits, bool(converged)


@lru_cache(maxsize=4)
def default_codec(info_len: int = 460) -> TurboCodec:
    return TurboCodec(info_len=info_len)


def qpsk_map(coded_bits: np.ndarray) -> np.ndarray:
    """Gray-map bit pairs to unit-energy QPSK symbols."""
    coded_bits = np.asarray(coded_bits)
    if len(coded_bits) % 2:
        raise CodecError("bit count must be even for QPSK")
    re = 1.0 - 2.0 * coded_bits[0::2]
    im = 1.0 - 2.0 * coded_bits[1::2]
    return (re + 1j * im) / np.sqrt(2.0)


def qpsk_llr(soft_symbols: np.ndarray, noise_var: float) -> np.ndarray:
    """Per-bit LLRs from soft QPSK symbols (positive <=> bit 0 likely)."""
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    soft_symbols = np.asarray(soft_symbols)
    llrs = np.empty(2 * len(soft_symbols))
    scale = 2.0 * np.sqrt(2.0) / noise_var
    llrs[0::2] = scale * soft_symbols.real
    llrs[1::2] = scale * soft_symbols.imag
    return llrs
