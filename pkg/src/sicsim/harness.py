"""Monte Carlo experiment engine: PER vs Es/N0 after cancellation.

Each trial is one contended slot with two symbol-synchronous users; user 1
is already decoded (its symbols are known at the receiver) and user 2 must
be demodulated after user 1's reconstruction is subtracted.  Sweeps are
pure functions of the configuration: the seed of trial ``t`` at sweep point
``p`` is ``SeedSequence(master_seed, spawn_key=(p, t))``, so matched seeds
across modes share channels and noise and results are machine-independent.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import canceller, channel, estimator, fec, waveform
from .estimator import EmConfig, EstimationMode
from .waveform import PacketLayout, WaveformConfig, classic_layout, psam_layout

MODE_PERFECT_CSI = "perfect_csi"
ESTIMATOR_MODES = {m.value: m for m in EstimationMode}
ALL_MODES = (MODE_PERFECT_CSI,) + tuple(ESTIMATOR_MODES)

# trials per deterministic aggregation chunk; fixed so that results do not
# depend on the worker count
CHUNK = 250


class SimConfigError(ValueError):
    """Invalid simulation configuration."""


@dataclass(frozen=True)
class SimConfig:
    layout_name: str = "classic"
    modes: tuple = (MODE_PERFECT_CSI,)
    esn0_start: float = 0.0
    esn0_step: float = 0.2
    esn0_stop: float = 4.0
    dfmax: float = 0.01
    trials: int = 10_000
    min_errors: int = 100
    master_seed: int = 1
    guard_len: int = 4
    info_len: int = 460
    beta: float = 0.8
    em_iterations: int = 3
    amplitude_sigma: float = 0.0
    waveform: WaveformConfig = field(default_factory=WaveformConfig)
    batch_size: int = 2000
    workers: int = 1

    def __post_init__(self):
        if self.layout_name not in ("classic", "psam"):
            raise SimConfigError(f"unknown layout {self.layout_name!r}")
        if not self.modes:
            raise SimConfigError("at least one mode required")
        for m in self.modes:
            if m not in ALL_MODES:
                raise SimConfigError(f"unknown mode {m!r}")
        if self.trials < 1:
            raise SimConfigError("trials must be >= 1")
        if self.min_errors < 10:
            raise SimConfigError("stop rule requires min_errors >= 10")
        if self.esn0_step <= 0 or self.esn0_stop < self.esn0_start:
            raise SimConfigError("empty Es/N0 sweep")
        if ("em_autocorr_psam" in self.modes and self.layout_name != "psam"):
            raise SimConfigError("em_autocorr_psam requires the psam layout")

    def esn0_points(self) -> list[float]:
        count = int(np.floor((self.esn0_stop - self.esn0_start)
                             / self.esn0_step + 1e-9)) + 1
        return [self.esn0_start + i * self.esn0_step for i in range(count)]

    def layout(self) -> PacketLayout:
        if self.layout_name == "classic":
            return classic_layout(self.guard_len)
        return psam_layout(self.guard_len)

    def em_config(self) -> EmConfig:
        return EmConfig(beta=self.beta, iterations=self.em_iterations,
                        df_grid_max=self.dfmax)


@dataclass
class TrialResult:
    success: bool
    converged: bool
    estimate_errors: tuple  # per user (dA, ddf [Hz], dphi [rad])
    residual_power: float


@dataclass(frozen=True)
class PerPoint:
    esn0_db: float
    per: float
    trials: int
    errors: int
    ci95: float
    mean_df_rmse: float
    mean_residual_power: float


@dataclass(frozen=True)
class PerCurve:
    mode: str
    layout_name: str
    points: tuple


def _wrap_phase(x: float) -> float:
    return (x + np.pi) % (2.0 * np.pi) - np.pi


class TrialRunner:
    """Precomputed per-sweep context (layout, training, codec, filters)."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.layout = cfg.layout()
        self.codec = fec.default_codec(cfg.info_len)
        if self.codec.spec.coded_len != 2 * self.layout.payload_len:
            raise SimConfigError(
                f"codec emits {self.codec.spec.coded_len} bits but the "
                f"payload carries {2 * self.layout.payload_len}")
        self.training = waveform.generate_training_set(
            2, self.layout, seed=cfg.master_seed)
        self.em = cfg.em_config()
        self.payload_idx = self.layout.payload_indexes()
        self.symbol_rate = cfg.waveform.symbol_rate

    def channel_config(self, esn0_db: float) -> channel.ChannelConfig:
        return channel.ChannelConfig(dfmax=self.cfg.dfmax, esn0_db=esn0_db,
                                     amplitude_sigma=self.cfg.amplitude_sigma)

    def trial(self, mode: str, esn0_db: float,
              rng: np.random.Generator) -> TrialResult:
        cfg = self.cfg
        wf = cfg.waveform
        chan_cfg = self.channel_config(esn0_db)
        infos, packets, signals, params = [], [], [], []
        for user in (0, 1):
            info = rng.integers(0, 2, cfg.info_len).astype(np.int8)
            payload = fec.qpsk_map(self.codec.encode(info))
            packet = waveform.build_packet(self.layout, self.training, user,
                                           payload)
            infos.append(info)
            packets.append(packet)
            signals.append(waveform.pulse_shape(packet, wf))
            params.append(channel.sample_channel_params(chan_cfg, rng,
                                                        self.symbol_rate))
        received = [channel.apply_channel(signals[u], params[u])
                    for u in (0, 1)]
        observed = channel.superpose_and_add_noise(received, chan_cfg, rng)

        if mode == MODE_PERFECT_CSI:
            estimates = params
        else:
            symbols = waveform.matched_filter_and_sample(observed, wf,
                                                         self.layout)
            estimates = estimator.estimate_channels(
                symbols, self.layout, self.training, ESTIMATOR_MODES[mode],
                self.em, self.symbol_rate)

        scenario = canceller.SlotScenario(
            symbols=packets, channels=params, received=observed,
            layout=self.layout, waveform=wf)
        result = canceller.cancel_and_extract(scenario, known_user=0,
                                              estimates=estimates)
        residual_power = float(np.mean(np.abs(
            received[0].samples - result.reconstruction.samples) ** 2))

        n0 = chan_cfg.noise_variance
        amp2 = max(estimates[1].amplitude, 1e-12)
        llrs = fec.qpsk_llr(result.soft_symbols[self.payload_idx],
                            max(n0, 1e-12) / amp2 ** 2)
        decoded, converged = self.codec.decode(llrs)
        success = bool(np.array_equal(decoded, infos[1]))
        errors = tuple(
            (float(estimates[u].amplitude - params[u].amplitude),
             float(estimates[u].freq_offset - params[u].freq_offset),
             _wrap_phase(estimates[u].phase - params[u].phase))
            for u in (0, 1))
        return TrialResult(success=success, converged=converged,
                           estimate_errors=errors,
                           residual_power=residual_power)


def trial_rng(master_seed: int, point_index: int,
              trial_index: int) -> np.random.Generator:
    """Documented counter scheme for per-trial seeds."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=master_seed,
                               spawn_key=(point_index, trial_index)))


def run_trial(cfg: SimConfig, trial_seed, mode: str | None = None,
              esn0_db: float | None = None) -> TrialResult:
    """Run one full-chain trial with an explicit seed (deterministic)."""
    runner = TrialRunner(cfg)
    if mode is None:
        mode = cfg.modes[0]
    if esn0_db is None:
        esn0_db = cfg.esn0_points()[0]
    return runner.trial(mode, esn0_db, np.random.default_rng(trial_seed))


@dataclass
class _ChunkStats:
    trials: int = 0
    errors: int = 0
    df_sq_sum: float = 0.0
    residual_sum: float = 0.0

    def add(self, other: "_ChunkStats"):
        self.trials += other.trials
        self.errors += other.errors
        self.df_sq_sum += other.df_sq_sum
        self.residual_sum += other.residual_sum


_WORKER_RUNNERS: dict = {}


def _run_chunk(cfg: SimConfig, mode: str, point_index: int, esn0_db: float,
               start: int, stop: int) -> _ChunkStats:
    runner = _WORKER_RUNNERS.get(cfg)
    if runner is None:
        runner = TrialRunner(cfg)
        _WORKER_RUNNERS.clear()
        _WORKER_RUNNERS[cfg] = runner
    stats = _ChunkStats()
    for t in range(start, stop):
        res = runner.trial(mode, esn0_db,
                           trial_rng(cfg.master_seed, point_index, t))
        stats.trials += 1
        stats.errors += 0 if res.success else 1
        stats.df_sq_sum += sum(e[1] ** 2 for e in res.estimate_errors)
        stats.residual_sum += res.residual_power
    return stats


def _point_stats(cfg: SimConfig, mode: str, point_index: int, esn0_db: float,
                 pool) -> _ChunkStats:
    total = _ChunkStats()
    done = 0
    while done < cfg.trials and total.errors < cfg.min_errors:
        batch = min(cfg.batch_size, cfg.trials - done)
        bounds = list(range(done, done + batch, CHUNK)) + [done + batch]
        jobs = [(cfg, mode, point_index, esn0_db, bounds[i], bounds[i + 1])
                for i in range(len(bounds) - 1)]
        if pool is None:
            results = [_run_chunk(*j) for j in jobs]
        else:
            results = list(pool.map(_run_chunk, *zip(*jobs)))
        for r in results:  # fixed chunk order keeps float sums reproducible
            total.add(r)
        done += batch
    return total


def run_sweep(cfg: SimConfig) -> list[PerCurve]:
    """One PER curve per configured mode; pure function of the config."""
    points = cfg.esn0_points()
    pool = None
    try:
        if cfg.workers > 1:
            pool = ProcessPoolExecutor(max_workers=cfg.workers)
        curves = []
        for mode in cfg.modes:
            rows = []
            for p, esn0_db in enumerate(points):
                s = _point_stats(cfg, mode, p, esn0_db, pool)
                per = s.errors / s.trials
                ci = 1.96 * np.sqrt(per * (1.0 - per) / s.trials)
                rows.append(PerPoint(
                    esn0_db=esn0_db, per=per, trials=s.trials,
                    errors=s.errors, ci95=float(ci),
                    mean_df_rmse=float(np.sqrt(s.df_sq_sum / (2 * s.trials))),
                    mean_residual_power=s.residual_sum / s.trials))
            curves.append(PerCurve(mode=mode, layout_name=cfg.layout_name,
                                   points=tuple(rows)))
        return curves
    finally:
        if pool is not None:
            pool.shutdown()


def compute_rate_loss(layout_psam: PacketLayout,
                      layout_base: PacketLayout) -> float:
    """Relative growth in non-guard packet size from inserting pilots."""
    s_psam = layout_psam.total_len - 2 * layout_psam.guard_len
    s_base = layout_base.total_len - 2 * layout_base.guard_len
    return (s_psam - s_base) / s_base


def crossing_esn0(curve: PerCurve, per_target: float,
                  min_errors: int = 10) -> float | None:
    """Es/N0 where the curve crosses the target PER (log-linear interp).

    Only points whose error count meets ``min_errors`` participate.  Returns
    None when the curve never reaches the target within the sweep.
    """
    pts = [p for p in curve.points if p.errors >= min_errors and p.per > 0]
    pts.sort(key=lambda p: p.esn0_db)
    for a, b in zip(pts, pts[1:]):
        if a.per >= per_target >= b.per:
            if a.per == b.per:
                return a.esn0_db
            frac = ((np.log(per_target) - np.log(a.per))
                    / (np.log(b.per) - np.log(a.per)))
            return float(a.esn0_db + frac * (b.esn0_db - a.esn0_db))
    return None


def measure_gap(curve: PerCurve, reference: PerCurve, per_target: float,
                min_errors: int = 10) -> float | None:
    """Es/N0 penalty of ``curve`` vs ``reference`` at the target PER."""
    x = crossing_esn0(curve, per_target, min_errors)
    x_ref = crossing_esn0(reference, per_target, min_errors)
    if x is None or x_ref is None:
        return None
    return x - x_ref


PER_CSV_COLUMNS = ("esn0_db", "mode", "trials", "errors", "per", "ci95",
                   "mean_df_rmse", "mean_residual_power")


def write_per_csv(curves: list[PerCurve], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PER_CSV_COLUMNS)
        for curve in curves:
            for p in curve.points:
                w.writerow([f"{p.esn0_db:.4f}", curve.mode, p.trials,
                            p.errors, f"{p.per:.6e}", f"{p.ci95:.6e}",
                            f"{p.mean_df_rmse:.6e}",
                            f"{p.mean_residual_power:.6e}"])


def write_gaps_csv(rows: list[tuple[str, float, float | None]], path) -> None:
    """Rows are (mode, per_target, gap_db); unreached gaps print as inf."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("mode", "per_target", "gap_db"))
        for mode, target, gap in rows:
            w.writerow([mode, f"{target:.1e}",
                        "inf" if gap is None else f"{gap:.4f}"])
