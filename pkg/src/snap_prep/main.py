#!/usr/bin/env python3

import argparse
import logging
import os
import pathlib
import sys
from collections.abc import Callable, Sequence
from dataclasses import replace

import numpy as np
from pydantic import ValidationError

from snap_prep.utils import (
    config,
    dynamics,
    fock_core,
    gate_synth,
    models,
    pulse_synth,
    support_utils,
    targets,
    wigner_tomo,
)
from snap_prep.utils.device_config import CoherenceParams
from snap_prep.utils.errors import ConfigError, SnapPrepError, SynthesisFailureError

logger = logging.getLogger(__name__)

EPILOG = """\
Frequencies in config files are cyclic and carry an explicit _hz suffix
(chi_hz, kerr_hz, rabi_max_hz, lowpass_cutoff_hz, ...); they are converted
to rad/s internally. Times are in seconds. LOG_LEVEL sets the log level.

Exit codes: 0 success, 2 configuration error, 3 synthesis failure,
4 numerical failure.
"""


def configure_logging() -> None:
    log_level = os.getenv("LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stdout,
    )


def write_gate_parameters(
    sup_util: support_utils.SupportUtils, label: str, seq: fock_core.GateSequence, achieved: float | None
) -> None:
    sup_util.write_report(
        "gate_params",
        models.GateParameters(
            target=label,
            alphas=list(seq.displacements),
            thetas=[t.tolist() for t in seq.snaps],
            achieved_fidelity=achieved,
        ),
    )


def obtain_sequence(
    sup_util: support_utils.SupportUtils, target: fock_core.StateVector
) -> tuple[fock_core.GateSequence, float]:
    """Configured gate parameters, or a fresh gate-level synthesis; returns the ideal fidelity too."""
    cfg = sup_util.config_obj
    label = cfg.target.label
    if cfg.sequence is not None:
        seq = cfg.sequence.to_sequence()
        logger.info("Using configured gate parameters with %d SNAP(s)", seq.n_snaps)
    else:
        try:
            seq = gate_synth.synthesize(target, cfg.synth).sequence
        except SynthesisFailureError as err:
            write_gate_parameters(sup_util, label, err.result.sequence, err.result.achieved_fidelity)
            raise
    vacuum = targets.fock_state(0, target.dim)
    ideal = fock_core.fidelity(target, fock_core.apply_gate_sequence(seq, vacuum, check_truncation=False))
    write_gate_parameters(sup_util, label, seq, ideal)
    return seq, ideal


def compile_and_export(
    sup_util: support_utils.SupportUtils, seq: fock_core.GateSequence
) -> list[pulse_synth.GrapeResult]:
    cfg = sup_util.config_obj
    compiled = pulse_synth.compile_snap_pulses(
        seq.snaps, cfg.system, cfg.constraints, seed=cfg.seed, grape_config=cfg.grape
    )
    for index, (thetas, result) in enumerate(zip(seq.snaps, compiled, strict=True), start=1):
        path = sup_util.output_path(f"snap_{index}.csv")
        result.pulse.to_csv(
            path,
            models.PulseMetadata(
                kind="snap",
                sample_rate=result.pulse.sample_rate,
                carrier=result.pulse.carrier,
                duration=result.pulse.duration,
                rabi_max_hz=cfg.constraints.rabi_max_hz,
                lowpass_cutoff_hz=cfg.constraints.lowpass_cutoff_hz,
                infidelity=result.infidelity,
                thetas=thetas.tolist(),
            ),
        )
    for index, alpha in enumerate(seq.displacements, start=1):
        pulse = pulse_synth.displacement_pulse(alpha, sample_rate=cfg.constraints.sample_rate)
        pulse.to_csv(sup_util.output_path(f"displacement_{index}.csv"))
    return compiled


def cmd_prepare(sup_util: support_utils.SupportUtils) -> None:
    cfg = sup_util.config_obj
    target = cfg.target.build(cfg.system.cavity_dim)
    seq, ideal = obtain_sequence(sup_util, target)
    compiled = compile_and_export(sup_util, seq) if cfg.pulse_level else []
    evaluation = dynamics.evaluate_sequence(
        target,
        seq,
        cfg.system,
        cfg.coherence,
        pulse_level=cfg.pulse_level,
        snap_pulses=[c.pulse for c in compiled] if cfg.pulse_level else None,
        constraints=cfg.constraints,
    )
    sup_util.write_report(
        "fidelity",
        models.FidelityReport(
            target=cfg.target.label,
            n_snaps=seq.n_snaps,
            ideal_fidelity=ideal,
            with_loss_fidelity=None if cfg.coherence.is_lossless else evaluation.fidelity,
            pulse_level=cfg.pulse_level,
            snap_infidelities=[c.infidelity for c in compiled],
            lowpass_cutoff_hz=cfg.constraints.lowpass_cutoff_hz,
            seed=cfg.seed,
        ),
    )
    tomo = cfg.tomography
    sup_util.write_wigner("wigner", wigner_tomo.wigner_grid(evaluation.final_state, tomo.extent, tomo.points_per_axis))
    logger.info("Prepared %s: ideal %.4f, executed %.4f", cfg.target.label, ideal, evaluation.fidelity)


def cmd_snapshots(sup_util: support_utils.SupportUtils) -> None:
    cfg = sup_util.config_obj
    target = cfg.target.build(cfg.system.cavity_dim)
    seq, _ = obtain_sequence(sup_util, target)
    compiled = compile_and_export(sup_util, seq)
    pulses = [c.pulse for c in compiled]
    coherent = dynamics.evaluate_sequence(
        target, seq, cfg.system, CoherenceParams.lossless(), snap_pulses=pulses, constraints=cfg.constraints
    )
    lossy = dynamics.evaluate_sequence(
        target, seq, cfg.system, cfg.coherence, snap_pulses=pulses, constraints=cfg.constraints
    )
    entries = []
    tomo = cfg.tomography
    for index, (kind, state) in enumerate(zip(lossy.gate_kinds, lossy.snapshots, strict=True)):
        entries.append(
            models.SnapshotEntry(
                index=index + 1,
                gate=kind,
                ideal_fidelity=coherent.snapshot_fidelities[index],
                with_loss_fidelity=lossy.snapshot_fidelities[index],
            )
        )
        grid = wigner_tomo.wigner_grid(state, tomo.extent, tomo.points_per_axis)
        sup_util.write_wigner(f"snapshot_{index + 1}", grid)
    sup_util.write_report("snapshots", models.SnapshotReport(target=cfg.target.label, snapshots=entries))


def cmd_sweep(sup_util: support_utils.SupportUtils) -> None:
    cfg = sup_util.config_obj
    target = cfg.target.build(cfg.system.cavity_dim)
    seq, _ = obtain_sequence(sup_util, target)
    sweep = cfg.sweep
    for parameter in sweep.parameters:
        curves = {
            mode: dynamics.sensitivity_sweep(
                parameter,
                sweep.offsets,
                sweep.observable,
                mode,
                target,
                seq,
                cfg.system,
                cfg.coherence,
                constraints=cfg.constraints,
                grape_config=cfg.grape,
                standard_duration=sweep.standard_duration,
                seed=cfg.seed,
                threads=cfg.threads,
            )
            for mode in sweep.modes
        }
        rows = [
            (f"{offset:.6g}", mode, f"{value:.10g}", curve.span_low, curve.span_high)
            for mode, curve in curves.items()
            for offset, value in zip(curve.offsets, curve.values, strict=True)
        ]
        sup_util.write_table(f"sweep_{parameter}", ("offset", "mode", sweep.observable, "span_low", "span_high"), rows)
        optimized, standard = curves.get("optimized"), curves.get("standard")
        ratio = None
        if optimized is not None and standard is not None and optimized.span and standard.span:
            ratio = standard.span / optimized.span
        sup_util.write_report(
            f"sweep_{parameter}",
            models.SweepReport(
                parameter=parameter,
                observable=sweep.observable,
                curves=[
                    models.SweepCurveModel(
                        mode=mode,
                        offsets=curve.offsets.tolist(),
                        values=curve.values.tolist(),
                        peak_offset=curve.peak_offset,
                        span_low=curve.span_low,
                        span_high=curve.span_high,
                        span=curve.span,
                    )
                    for mode, curve in curves.items()
                ],
                span_ratio=ratio,
            ),
        )


def cmd_scaling(sup_util: support_utils.SupportUtils) -> None:
    cfg = sup_util.config_obj
    dim = cfg.system.cavity_dim
    rows = []
    for fock in cfg.scaling.fock_states:
        target = targets.fock_state(fock, dim)
        for n_snaps in cfg.scaling.n_snaps:
            synth = cfg.synth.model_copy(update={"n_snaps": n_snaps})
            try:
                result = gate_synth.synthesize(target, synth)
            except SynthesisFailureError as err:
                logger.warning("Fock %d with %d SNAP(s): %s", fock, n_snaps, err)
                result = err.result
            step2 = with_loss = None
            if cfg.pulse_level:
                pulses = [
                    c.pulse
                    for c in pulse_synth.compile_snap_pulses(
                        result.sequence.snaps,
                        cfg.system,
                        cfg.constraints,
                        seed=cfg.seed,
                        grape_config=cfg.grape,
                        allow_failure=True,
                    )
                ]
                step2 = dynamics.sequence_theory_fidelity(
                    target,
                    result.sequence,
                    cfg.system,
                    CoherenceParams.lossless(),
                    snap_pulses=pulses,
                    constraints=cfg.constraints,
                )
                if cfg.scaling.with_loss:
                    with_loss = dynamics.sequence_theory_fidelity(
                        target, result.sequence, cfg.system, cfg.coherence, snap_pulses=pulses, constraints=cfg.constraints
                    )
            rows.append(
                models.ScalingRow(
                    fock=fock,
                    n_snaps=n_snaps,
                    step1_fidelity=result.achieved_fidelity,
                    step2_fidelity=step2,
                    with_loss_fidelity=with_loss,
                )
            )
            logger.info("Fock %d, %d SNAP(s): step 1 %.4f", fock, n_snaps, result.achieved_fidelity)
    sup_util.write_table(
        "scaling",
        ("fock", "n_snaps", "step1_fidelity", "step2_fidelity", "with_loss_fidelity"),
        [(r.fock, r.n_snaps, r.step1_fidelity, r.step2_fidelity, r.with_loss_fidelity) for r in rows],
    )
    sup_util.write_report("scaling", models.ScalingReport(rows=rows))


def cmd_tomography(sup_util: support_utils.SupportUtils) -> None:
    cfg = sup_util.config_obj
    tomo = cfg.tomography
    target = cfg.target.build(cfg.system.cavity_dim)
    if tomo.input_csv is not None:
        grid = wigner_tomo.WignerGrid.from_csv(tomo.input_csv)
    else:
        if tomo.source == "target":
            state: fock_core.StateVector | fock_core.DensityMatrix = target
        else:
            seq, _ = obtain_sequence(sup_util, target)
            state = dynamics.evaluate_sequence(
                target, seq, cfg.system, cfg.coherence, pulse_level=cfg.pulse_level, constraints=cfg.constraints,
                seed=cfg.seed, grape_config=cfg.grape,
            ).final_state
        grid = wigner_tomo.simulate_tomography(
            state,
            wigner_tomo.make_grid(tomo.extent, tomo.points_per_axis),
            cfg.system if tomo.simulate_decoherence else None,
            cfg.coherence,
            shots=tomo.shots,
            seed=cfg.seed,
        )
        grid = replace(grid, extent=tomo.extent, points_per_axis=tomo.points_per_axis)
        sup_util.write_wigner("measured_wigner", grid)

    reconstruction = wigner_tomo.mle_reconstruct(grid, tomo.reconstruction)
    cutoff = tomo.fock_cutoff or getattr(cfg.target, "fock_cutoff", None)
    fidelity = wigner_tomo.reconstruction_fidelity(reconstruction, target, cutoff)
    spread = (
        wigner_tomo.bootstrap_uncertainty(grid, target, cfg.seed, tomo.reconstruction, cutoff) if tomo.bootstrap else None
    )
    rho = reconstruction.rho.elements
    sup_util.write_report(
        "tomography",
        models.TomographyReport(
            target=cfg.target.label,
            fidelity=fidelity,
            fock_cutoff=cutoff,
            bootstrap_fidelity_std=spread,
            residual=reconstruction.residual,
            n_points=reconstruction.n_points,
            dim=reconstruction.rho.dim,
            rho_real=np.real(rho).tolist(),
            rho_imag=np.imag(rho).tolist(),
        ),
    )
    if grid.points_per_axis is not None and grid.extent is not None:
        sup_util.write_wigner(
            "reconstructed_wigner", wigner_tomo.wigner_grid(reconstruction.rho, grid.extent, grid.points_per_axis)
        )
    logger.info("Reconstruction fidelity %.4f (cutoff %s)", fidelity, cutoff)


def cmd_duration(sup_util: support_utils.SupportUtils) -> None:
    cfg = sup_util.config_obj
    study = cfg.duration
    points = pulse_synth.snap_duration_study(
        study.thetas,
        study.alpha,
        study.durations,
        cfg.system,
        envelopes=tuple(study.envelopes),
        optimized_durations=study.optimized_durations,
        constraints=cfg.constraints,
        grape_config=cfg.grape,
        seed=cfg.seed,
    )
    rows = [
        models.DurationRow(
            method=p.method, envelope=p.envelope, duration_ns=p.duration * 1e9, infidelity=p.infidelity
        )
        for p in points
    ]
    sup_util.write_table(
        "duration", ("method", "envelope", "duration_ns", "infidelity"), [tuple(r.model_dump().values()) for r in rows]
    )
    sup_util.write_report("duration", models.DurationReport(alpha=study.alpha, thetas=study.thetas, rows=rows))


COMMANDS: dict[str, Callable[[support_utils.SupportUtils], None]] = {
    "prepare": cmd_prepare,
    "snapshots": cmd_snapshots,
    "sweep": cmd_sweep,
    "scaling": cmd_scaling,
    "tomography": cmd_tomography,
    "duration": cmd_duration,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="snap-prep",
        description="Prepare bosonic cavity states with displacement and SNAP gates.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("command", nargs="?", choices=sorted(COMMANDS), help="defaults to the config's experiment")
    parser.add_argument("--config", type=pathlib.Path, required=True, help="YAML run configuration")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--threads", type=int, help="worker threads for restarts, sweeps and bootstrap")
    parser.add_argument("--out", type=pathlib.Path, help="output directory")
    parser.add_argument("--render", action="store_true", help="also write PNG heatmaps of Wigner grids")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = config.load_config(args.config).with_overrides(args.seed, args.threads, args.out)
        if args.render:
            cfg = cfg.model_copy(update={"render": True})
        command = args.command or cfg.experiment
        if command is None:
            raise ConfigError("No command given and the config has no 'experiment'")
        sup_util = support_utils.SupportUtils()
        sup_util.config_obj = cfg
        sup_util.output_dir = cfg.output_dir
        logger.info("Running %s with seed %d into %s", command, cfg.seed, cfg.output_dir)
        COMMANDS[command](sup_util)
        logger.info("Done; %d artifact(s) written", len(sup_util.written))
    except (FileNotFoundError, ValidationError) as err:
        logger.error("Configuration error: %s", err)
        return ConfigError.exit_code
    except SnapPrepError as err:
        logger.error("%s: %s", type(err).__name__, err)
        return err.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
