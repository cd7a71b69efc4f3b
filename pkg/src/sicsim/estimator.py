"""Per-user channel estimation from the symbol-rate observation.

Three estimators are composed here:

* autocorrelation of the received training symbols with each user's known
  orthogonal sequence (initial amplitude and phase),
* an iterative two-step refinement that redistributes the residual between
  users and refits (A, df, phi) per user by least squares over the training
  index set,
* a two-block frequency initializer that reads the frequency offset from the
  phase advance between the preamble and the first pilot block.

All phase ramps use the absolute symbol index within the slot, so preamble,
pilots and postamble share one coherent ramp.  Frequencies are handled
internally as fractions of the symbol rate (nu = df * Ts) and exposed in Hz.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .waveform import PacketLayout, TrainingSet

TWO_PI = 2.0 * np.pi


class ConfigurationError(ValueError):
    """Estimation mode incompatible with the packet layout or config."""


class EstimationMode(Enum):
    AUTOCORR = "autocorr"
    EM_AUTOCORR = "em_autocorr"
    EM_AUTOCORR_PSAM = "em_autocorr_psam"


@dataclass(frozen=True)
class EmConfig:
    """Iterative-refinement knobs.

    ``df_grid_max``/``df_grid_step`` define the coarse frequency search grid
    as fractions of the symbol rate; ``refine_tolerance`` is the objective
    tolerance of the local refinement around the best grid point.
    """

    beta: float = 0.8
    iterations: int = 3
    df_grid_max: float = 0.01
    df_grid_step: float = 1e-4
    refine_tolerance: float = 1e-12

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must be in (0, 1]")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.df_grid_max < 0 or self.df_grid_step <= 0:
            raise ValueError("invalid frequency grid")


@dataclass
class ChannelEstimate:
    """Estimated (A, df, phi) with per-iteration history for diagnostics."""

    amplitude: float
    freq_offset: float
    phase: float
    history: list = field(default_factory=list)

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("estimated amplitude must be >= 0")
        self.phase = float(self.phase % TWO_PI)


@dataclass(frozen=True)
class ObservationView:
    """Observation restricted to an index set, with aligned training rows."""

    values: np.ndarray    # r over T, complex, shape (|T|,)
    indexes: np.ndarray   # T, absolute symbol indexes, shape (|T|,)
    training: np.ndarray  # b_k rows, +/-1, shape (K, |T|)

    def __post_init__(self):
        if len(self.indexes) == 0:
            raise ValueError("empty index set")
        if self.values.shape != self.indexes.shape:
            raise ValueError("values and indexes length mismatch")
        if self.training.ndim != 2 or self.training.shape[1] != len(self.indexes):
            raise ValueError("training rows must align with the index set")


def autocorr_init(view: ObservationView, user: int) -> tuple[float, float]:
    """Normalized correlation of r with the user's training over T."""
    c = np.dot(view.values, view.training[user]) / len(view.indexes)
    return float(np.abs(c)), float(np.angle(c) % TWO_PI)


def psam_freq_init(r_pre: np.ndarray, r_p1: np.ndarray, training: TrainingSet,
                   user: int, layout: PacketLayout,
                   symbol_rate: float = 1.0) -> float:
    """Frequency offset (Hz) from the preamble-to-first-pilot phase advance.

    The phase of each block correlation equals phi + 2*pi*nu*centroid, so
    their difference divided by the centroid spacing yields nu exactly in
    the noiseless case.  The phase difference is wrapped assuming nu >= 0,
    which extends the alias-free range to nu < 7/8 of a cycle per centroid
    spacing while tolerating small negative noise excursions.
    """
    if layout.pilot_count == 0:
        raise ConfigurationError("layout has no pilot blocks")
    f1 = np.angle(np.dot(r_pre, training.preambles[user]))
    f2 = np.angle(np.dot(r_p1, training.pilots[user, 0]))
    dphi = (f2 - f1 + np.pi / 4) % TWO_PI - np.pi / 4
    spacing = float(np.mean(layout.pilot_block_indexes(0))
                    - np.mean(layout.preamble_indexes()))
    return float(dphi / (TWO_PI * spacing) * symbol_rate)


def _ramps(estimates: list[ChannelEstimate], indexes: np.ndarray,
           symbol_rate: float) -> np.ndarray:
    """Per-user complex coefficients A*exp(j(2 pi nu n + phi)) over T."""
    nu = np.array([e.freq_offset / symbol_rate for e in estimates])
    amp = np.array([e.amplitude for e in estimates])
    phi = np.array([e.phase for e in estimates])
    return amp[:, None] * np.exp(
        1j * (TWO_PI * nu[:, None] * indexes[None, :] + phi[:, None]))


def em_e_step(view: ObservationView, current: list[ChannelEstimate],
              cfg: EmConfig, symbol_rate: float = 1.0) -> np.ndarray:
    """Split the observation into per-user components.

    Each user's reconstructed training signal is kept and a fraction beta of
    the joint residual is folded back in, shape (K, |T|).
    """
    h = _ramps(current, view.indexes, symbol_rate)
    recon = view.training * h
    residual = view.values[None, :] - np.sum(recon, axis=0, keepdims=True)
    return recon + cfg.beta * residual


_RAMP_CACHE: dict = {}


def _grid_matrix(indexes: np.ndarray, nu_grid: np.ndarray) -> np.ndarray:
    key = (indexes.tobytes(), nu_grid.tobytes())
    mat = _RAMP_CACHE.get(key)
    if mat is None:
        mat = np.exp(-1j * TWO_PI * nu_grid[:, None] * indexes[None, :])
        if len(_RAMP_CACHE) > 32:
            _RAMP_CACHE.clear()
        _RAMP_CACHE[key] = mat
    return mat


def ramp_fit_objective(z: np.ndarray, indexes: np.ndarray, nu: float) -> float:
    """Least-squares error of fitting z with the best c*exp(j 2 pi nu n)."""
    corr = np.dot(z, np.exp(-1j * TWO_PI * nu * indexes))
    return float(np.sum(np.abs(z) ** 2) - np.abs(corr) ** 2 / len(indexes))


def _refine_peak(z: np.ndarray, t: np.ndarray, lo: float, hi: float, nu0: float,
                 tol: float) -> float:
    """Maximize |C(nu)|^2 / n within [lo, hi] starting from nu0.

    Safeguarded Newton on the analytic derivatives of the correlation
    magnitude, with backtracking whenever a step does not improve the
    objective.  The start point is the best coarse-grid sample, so the
    bracket contains a single concave peak (or a boundary maximum).
    """
    n = len(t)

    def fval(nu):
        return np.abs(np.dot(z, np.exp(-1j * TWO_PI * nu * t))) ** 2 / n

    def fder(nu):
        e = np.exp(-1j * TWO_PI * nu * t)
        c = np.dot(z, e)
        c1 = np.dot(z, -1j * TWO_PI * t * e)
        c2 = np.dot(z, -(TWO_PI * t) ** 2 * e)
        f = np.abs(c) ** 2 / n
        f1 = 2.0 * np.real(c1 * np.conj(c)) / n
        f2 = 2.0 * (np.abs(c1) ** 2 + np.real(c2 * np.conj(c))) / n
        return f, f1, f2

    nu = min(max(nu0, lo), hi)
    if hi <= lo:
        return nu
    for _ in range(50):
        f, f1, f2 = fder(nu)
        if f2 < 0.0:
            step = -f1 / f2
        else:
            step = np.copysign((hi - lo) / 4.0, f1) if f1 else 0.0
        cand = min(max(nu + step, lo), hi)
        if abs(cand - nu) < 1e-15:
            break
        f_cand = fval(cand)
        while f_cand < f and abs(cand - nu) >= 1e-15:
            cand = nu + (cand - nu) / 2.0
            f_cand = fval(cand)
        if f_cand < f:
            break
        improved = f_cand - f
        nu = cand
        if improved < tol:
            break
    return nu


def em_m_step(p_hat: np.ndarray, b_k: np.ndarray, indexes: np.ndarray,
              cfg: EmConfig, symbol_rate: float = 1.0) -> ChannelEstimate:
    """Least-squares fit of a single rotating carrier to b_k * p_hat.

    For a fixed frequency the optimal complex gain is the projection of
    b_k * p_hat onto the unit ramp, so the search reduces to maximizing the
    correlation magnitude over frequency: coarse grid over [0, df_grid_max],
    then local refinement within one grid step.
    """
    if len(indexes) < 2:
        raise ValueError("need at least two training indexes")
    z = b_k * p_hat
    if not np.any(z):
        return ChannelEstimate(0.0, 0.0, 0.0)
    t = indexes.astype(float)
    n = len(t)
    nu_grid = np.arange(0.0, cfg.df_grid_max + cfg.df_grid_step / 2,
                        cfg.df_grid_step)
    corr_abs = np.abs(_grid_matrix(indexes, nu_grid) @ z)
    # refine every near-best local maximum: with multi-burst training the
    # correlation has almost equally tall side fringes, and the continuous
    # peak of a runner-up fringe can beat the refined argmax fringe
    interior = ((corr_abs[1:-1] >= corr_abs[:-2])
                & (corr_abs[1:-1] >= corr_abs[2:]))
    peaks = set(np.flatnonzero(interior) + 1)
    peaks.update((0, len(nu_grid) - 1, int(np.argmax(corr_abs))))
    cutoff = 0.98 * corr_abs.max()
    candidates = sorted((i for i in peaks if corr_abs[i] >= cutoff),
                        key=lambda i: corr_abs[i], reverse=True)[:8]
    nu, best_val = 0.0, -np.inf
    for i in candidates:
        lo = max(0.0, nu_grid[i] - cfg.df_grid_step)
        hi = min(nu_grid[-1], nu_grid[i] + cfg.df_grid_step)
        cand = _refine_peak(z, t, lo, hi, nu_grid[i], cfg.refine_tolerance)
        val = np.abs(np.dot(z, np.exp(-1j * TWO_PI * cand * t)))
        if val > best_val:
            nu, best_val = cand, val
    c = np.dot(z, np.exp(-1j * TWO_PI * nu * t)) / n
    return ChannelEstimate(amplitude=float(np.abs(c)),
                           freq_offset=float(nu * symbol_rate),
                           phase=float(np.angle(c) % TWO_PI))


def make_view(observation: np.ndarray, layout: PacketLayout,
              training: TrainingSet, include_pilots: bool) -> ObservationView:
    """Restrict a symbol-rate observation to the training index set."""
    idx = layout.training_index_set(include_pilots)
    b = np.stack([training.training_vector(k, include_pilots)
                  for k in range(training.num_users)])
    return ObservationView(values=observation[idx], indexes=idx, training=b)


def estimate_channels(observation: np.ndarray, layout: PacketLayout,
                      training: TrainingSet, mode: EstimationMode,
                      cfg: EmConfig,
                      symbol_rate: float = 1.0) -> list[ChannelEstimate]:
    """Run the selected estimator for every user.

    AUTOCORR: correlation over preamble+postamble, frequency fixed at zero.
    EM_AUTOCORR: autocorrelation init, then iterative refinement over
    preamble+postamble.  EM_AUTOCORR_PSAM: additionally initializes the
    frequency from the pilot blocks and extends the index set with them.
    """
    if len(observation) != layout.total_len:
        raise ConfigurationError(
            f"observation length {len(observation)} != layout.total_len "
            f"{layout.total_len}")
    use_pilots = mode is EstimationMode.EM_AUTOCORR_PSAM
    if use_pilots and layout.pilot_count == 0:
        raise ConfigurationError("PSAM estimation requires a layout with pilots")
    view = make_view(observation, layout, training, include_pilots=use_pilots)
    estimates = []
    for k in range(training.num_users):
        a0, phi0 = autocorr_init(view, k)
        df0 = 0.0
        if use_pilots:
            df0 = psam_freq_init(observation[layout.preamble_indexes()],
                                 observation[layout.pilot_block_indexes(0)],
                                 training, k, layout, symbol_rate)
        est = ChannelEstimate(a0, df0, phi0)
        est.history.append((a0, df0, phi0))
        estimates.append(est)
    if mode is EstimationMode.AUTOCORR:
        return estimates
    for _ in range(cfg.iterations):
        p_hat = em_e_step(view, estimates, cfg, symbol_rate)
        refreshed = []
        for k in range(training.num_users):
            est = em_m_step(p_hat[k], view.training[k], view.indexes, cfg,
                            symbol_rate)
            est.history = estimates[k].history + [
                (est.amplitude, est.freq_offset, est.phase)]
            refreshed.append(est)
        estimates = refreshed
    return estimates
