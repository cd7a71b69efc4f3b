"""Command line front end.

``sicsim simulate --config sweep.cfg --out per.csv`` runs a PER sweep and
writes one CSV row per (Es/N0, mode) point; when the run includes the
perfect-CSI baseline plus at least one estimation mode, a second report
``gaps.csv`` with the Es/N0 penalty at PER = 1e-3 is written next to the
main output.

The config file is flat ``key = value`` text ('#' starts a comment); every
key mirrors a SimConfig field and any key can be overridden from the
command line.
"""

from __future__ import annotations

import pathlib

import click

from .harness import (ALL_MODES, MODE_PERFECT_CSI, SimConfig, SimConfigError,
                      measure_gap, run_sweep, write_gaps_csv, write_per_csv)
from .waveform import WaveformConfig

_INT_KEYS = {"trials", "min_errors", "seed", "guard_len", "info_len",
             "em_iterations", "batch_size", "workers", "oversampling",
             "rrc_span"}
_FLOAT_KEYS = {"esn0_start", "esn0_step", "esn0_stop", "dfmax", "beta",
               "amplitude_sigma", "rrc_rolloff", "symbol_rate"}
_STR_KEYS = {"layout", "modes"}


def parse_config_file(path) -> dict:
    values: dict = {}
    for lineno, raw in enumerate(pathlib.Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SimConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        elif key in _STR_KEYS:
            values[key] = value
        else:
            raise SimConfigError(f"{path}:{lineno}: unknown key {key!r}")
    return values


def build_sim_config(values: dict) -> SimConfig:
    modes = tuple(m.strip() for m in values.get("modes", MODE_PERFECT_CSI)
                  .split(",") if m.strip())
    wf = WaveformConfig(
        symbol_rate=values.get("symbol_rate", 1.0),
        oversampling=values.get("oversampling", 4),
        rrc_rolloff=values.get("rrc_rolloff", 0.35),
        rrc_span=values.get("rrc_span", 10))
    return SimConfig(
        layout_name=values.get("layout", "classic"),
        modes=modes,
        esn0_start=values.get("esn0_start", 0.0),
        esn0_step=values.get("esn0_step", 0.2),
        esn0_stop=values.get("esn0_stop", 4.0),
        dfmax=values.get("dfmax", 0.01),
        trials=values.get("trials", 10_000),
        min_errors=values.get("min_errors", 100),
        master_seed=values.get("seed", 1),
        guard_len=values.get("guard_len", 4),
        info_len=values.get("info_len", 460),
        beta=values.get("beta", 0.8),
        em_iterations=values.get("em_iterations", 3),
        amplitude_sigma=values.get("amplitude_sigma", 0.0),
        waveform=wf,
        batch_size=values.get("batch_size", 2000),
        workers=values.get("workers", 1))


@click.group()
def main():
    """Slot-level interference-cancellation simulator."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="Flat key=value config file.")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Output CSV for the PER curves.")
@click.option("--mode", "modes", multiple=True,
              type=click.Choice(ALL_MODES),
              help="Estimation mode(s); overrides the config file.")
@click.option("--esn0", "esn0_range", default=None,
              help="Sweep as start:step:stop in dB.")
@click.option("--trials", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--layout", type=click.Choice(["classic", "psam"]), default=None)
@click.option("--dfmax", type=float, default=None)
@click.option("--workers", type=int, default=None)
@click.option("--gaps-out", type=click.Path(), default=None,
              help="Path for the gap report (default: gaps.csv next to --out).")
def simulate(config_path, out_path, modes, esn0_range, trials, seed, layout,
             dfmax, workers, gaps_out):
    """Run a Monte Carlo PER sweep and write CSV reports."""
    values = parse_config_file(config_path) if config_path else {}
    if modes:
        values["modes"] = ",".join(modes)
    if esn0_range is not None:
        try:
            start, step, stop = (float(x) for x in esn0_range.split(":"))
        except ValueError:
            raise click.BadParameter("--esn0 must be start:step:stop")
        values.update(esn0_start=start, esn0_step=step, esn0_stop=stop)
    if trials is not None:
        values["trials"] = trials
    if seed is not None:
        values["seed"] = seed
    if layout is not None:
        values["layout"] = layout
    if dfmax is not None:
        values["dfmax"] = dfmax
    if workers is not None:
        values["workers"] = workers
    try:
        cfg = build_sim_config(values)
    except (SimConfigError, ValueError) as exc:
        raise click.ClickException(str(exc))

    curves = run_sweep(cfg)
    write_per_csv(curves, out_path)
    click.echo(f"wrote {out_path}")

    reference = next((c for c in curves if c.mode == MODE_PERFECT_CSI), None)
    others = [c for c in curves if c.mode != MODE_PERFECT_CSI]
    if reference is not None and others:
        target = 1e-3
        rows = [(c.mode, target, measure_gap(c, reference, target,
                                             cfg.min_errors))
                for c in others]
        gaps_path = gaps_out or str(
            pathlib.Path(out_path).parent / "gaps.csv")
        write_gaps_csv(rows, gaps_path)
        click.echo(f"wrote {gaps_path}")


if __name__ == "__main__":
    main()
