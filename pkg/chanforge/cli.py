#!/usr/bin/env python3
import argparse
import logging
import sys

from . import __version__ as version
from .abspath import AbsPath
from .analysis import (
    NORMALIZATION_FROBENIUS,
    NORMALIZATION_RAW,
    capacity_curve,
    capacity_to_csv,
    compare_channel_sets,
    distance_error_trend,
    distance_sweep,
    errors_to_csv,
    log_reports,
    snr_grid,
    sweep_capacity_curves,
    sweep_to_csv,
)
from .array_geom import parse_array_descriptor
from .canyon_tracer import default_scene, load_scene, scene_to_dict, trace_scene
from .channel_synth import channels_to_json, fullsim_scene, read_channels, synth_records
from .metadata import make_manifest, manifest_to_json
from .ray_model import drop_los, parse_rays, rays_to_csv, summary_path_for, summary_to_json

logger = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

DEFAULT_SNR_DB = "-10:30:5"
NORMALIZE_CHOICES = {"raw": NORMALIZATION_RAW, "frob": NORMALIZATION_FROBENIUS}


def parse_args(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    parser = argparse.ArgumentParser(prog="chanforge")

    parser.add_argument("-v", "--version", action="store_true", help="Show version")

    parent_all = argparse.ArgumentParser(add_help=False)
    group_log_level = parent_all.add_mutually_exclusive_group()
    group_log_level.add_argument(
        "-D", "--debug", action="store_true", help="Prints all logs >= DEBUG level"
    )
    parent_all.add_argument(
        "--no-lock", action="store_true", help="No file locking for writing outputs."
    )

    parent_out = argparse.ArgumentParser(add_help=False)
    parent_out.add_argument(
        "-o",
        "--out",
        required=True,
        help="Output file. A run manifest is written next to it "
        "(<out>{ext}).".format(ext=AbsPath.MANIFEST_EXT),
    )

    parent_scene = argparse.ArgumentParser(add_help=False)
    parent_scene.add_argument(
        "--scene",
        help="Scene JSON file. Built-in canyon scene with receivers RX1..RX10 "
        "if not defined.",
    )
    parent_scene.add_argument(
        "--max-order",
        type=int,
        help="Override the scene's maximum reflection order.",
    )

    parent_arrays = argparse.ArgumentParser(add_help=False)
    parent_arrays.add_argument(
        "--array-tx",
        required=True,
        help="TX array descriptor ula:<n>:<spacing_wl>:<axis> (e.g. ula:4:0.5:y).",
    )
    parent_arrays.add_argument(
        "--array-rx",
        required=True,
        help="RX array descriptor ula:<n>:<spacing_wl>:<axis> (e.g. ula:4:0.5:y).",
    )

    parent_top_l = argparse.ArgumentParser(add_help=False)
    parent_top_l.add_argument(
        "--top-l",
        type=int,
        help="Number of most prominent rays used by the geometric channel. "
        "All rays if not defined.",
    )

    parent_drop_los = argparse.ArgumentParser(add_help=False)
    parent_drop_los.add_argument(
        "--drop-los",
        action="store_true",
        help="Remove the direct (zero-bounce) path to emulate an NLOS receiver.",
    )

    parent_full = argparse.ArgumentParser(add_help=False)
    parent_full.add_argument(
        "--phase-only-full",
        action="store_true",
        help="Full-array channel applies per-element phase only "
        "(reference-element amplitude).",
    )

    parent_jobs = argparse.ArgumentParser(add_help=False)
    parent_jobs.add_argument(
        "--jobs",
        type=int,
        default=1,
        help="Number of worker processes (one receiver per task). "
        "Set CHANFORGE_NO_PARALLEL=1 to force serial mode.",
    )

    parent_capacity = argparse.ArgumentParser(add_help=False)
    parent_capacity.add_argument(
        "--snr-db",
        default=DEFAULT_SNR_DB,
        help="SNR grid lo:hi:step in dB (hi inclusive). "
        "Use --snr-db=<grid> when lo is negative.",
    )
    parent_capacity.add_argument(
        "--normalize",
        choices=sorted(NORMALIZE_CHOICES),
        default="frob",
        help="Channel normalization before capacity: raw or frob "
        "(||H||_F^2 = N_tx N_rx).",
    )

    subparser = parser.add_subparsers(dest="action")

    p_trace = subparser.add_parser(
        "trace",
        help="Trace all receivers of a scene and write the ray CSV "
        "and its summary sidecar.",
        parents=[parent_scene, parent_drop_los, parent_jobs, parent_out, parent_all],
    )
    p_trace.add_argument(
        "--summary", help="Summary JSON path (default: <stem>.summary.json)."
    )

    p_synth = subparser.add_parser(
        "synth",
        help="Build geometric channels from a ray CSV. No re-tracing.",
        parents=[parent_arrays, parent_top_l, parent_drop_los, parent_out, parent_all],
    )
    p_synth.add_argument("rays", help="Ray CSV file.")
    p_synth.add_argument(
        "--summary", help="Summary JSON path (default: <stem>.summary.json)."
    )
    p_synth.add_argument(
        "--frequency-hz",
        type=float,
        help="Carrier frequency. Overrides the summary's frequency_hz.",
    )

    subparser.add_parser(
        "fullsim",
        help="Build full-array (per-element path length) channels of a scene.",
        parents=[
            parent_scene,
            parent_arrays,
            parent_drop_los,
            parent_full,
            parent_jobs,
            parent_out,
            parent_all,
        ],
    )

    p_compare = subparser.add_parser(
        "compare",
        help="Relative Frobenius error of a channel set against a reference set.",
        parents=[parent_out, parent_all],
    )
    p_compare.add_argument("approx", help="Channel set JSON under test (geometric).")
    p_compare.add_argument("reference", help="Reference channel set JSON (full).")
    group_align = p_compare.add_mutually_exclusive_group()
    group_align.add_argument(
        "--align-phase",
        dest="align_phase",
        action="store_true",
        default=True,
        help="Rank receivers by the phase-aligned error (default).",
    )
    group_align.add_argument(
        "--no-align-phase",
        dest="align_phase",
        action="store_false",
        help="Rank receivers by the raw error.",
    )

    p_capacity = subparser.add_parser(
        "capacity",
        help="Capacity curves of one or more channel sets.",
        parents=[parent_capacity, parent_out, parent_all],
    )
    p_capacity.add_argument("channels", nargs="+", help="Channel set JSON files.")
    p_capacity.add_argument(
        "--pairs",
        help="Comma-separated receiver ids or tx:rx labels. All pairs if not defined.",
    )

    p_sweep = subparser.add_parser(
        "sweep",
        help="Compare both channel constructions on the canyon axis "
        "over a list of TX-RX ranges.",
        parents=[
            parent_scene,
            parent_arrays,
            parent_top_l,
            parent_drop_los,
            parent_full,
            parent_capacity,
            parent_jobs,
            parent_out,
            parent_all,
        ],
    )
    p_sweep.add_argument(
        "--distances",
        required=True,
        help="Comma-separated ascending TX-RX ranges in meters (e.g. 1,10,100).",
    )
    p_sweep.add_argument(
        "--capacity-out", help="Also write capacity curves of every range here."
    )

    if len(argv) == 0:
        parser.print_help()
        parser.exit()

    args = parser.parse_args(argv)
    if args.version:
        print(version)
        parser.exit()
    if args.action is None:
        parser.print_help()
        parser.exit(EXIT_VALIDATION)

    if args.debug:
        log_level = "DEBUG"
    else:
        log_level = "INFO"
    logging.basicConfig(
        level=log_level, format="%(asctime)s|%(name)s|%(levelname)s| %(message)s"
    )
    # suppress filelock logging
    logging.getLogger("filelock").setLevel("CRITICAL")

    return args


def get_scene(args):
    if args.scene:
        scene = load_scene(args.scene)
    else:
        scene = default_scene()
    if args.max_order is not None:
        scene = scene.with_max_order(args.max_order)
    return scene


def get_arrays(args):
    return parse_array_descriptor(args.array_tx), parse_array_descriptor(args.array_rx)


def parse_distances(s):
    try:
        return [float(d) for d in s.split(",") if d.strip()]
    except ValueError:
        raise ValueError("Invalid distance list. s={s}".format(s=s))


def write_output(path, text, argv, no_lock=False, scene=None, inputs=()):
    """Write text to path and the run manifest next to it."""
    u = AbsPath(path)
    u.write(text, no_lock=no_lock)
    manifest = make_manifest(
        version,
        ["chanforge"] + list(argv),
        scene_dict=None if scene is None else scene_to_dict(scene),
        inputs=inputs,
    )
    u.manifest_path.write(manifest_to_json(manifest), no_lock=no_lock)
    logger.info("Output has been written to {p}".format(p=u.uri))


def cmd_trace(args, argv):
    scene = get_scene(args)
    records = trace_scene(scene, jobs=args.jobs)
    if args.drop_los:
        records = [drop_los(r) for r in records]
    inputs = [args.scene] if args.scene else []

    summary = args.summary or summary_path_for(AbsPath(args.out).uri)
    AbsPath(summary).write(summary_to_json(records), no_lock=args.no_lock)
    write_output(
        args.out, rays_to_csv(records), argv, args.no_lock, scene=scene, inputs=inputs
    )


def cmd_synth(args, argv):
    tx_cfg, rx_cfg = get_arrays(args)
    records = parse_rays(args.rays, summary_path=args.summary)
    if args.frequency_hz is not None:
        records = [r._replace(frequency_hz=args.frequency_hz) for r in records]
    if args.drop_los:
        records = [drop_los(r) for r in records]
    channels = synth_records(records, tx_cfg, rx_cfg, l=args.top_l)

    inputs = [args.rays]
    summary = args.summary or summary_path_for(args.rays)
    if AbsPath(summary).exists:
        inputs.append(summary)
    write_output(args.out, channels_to_json(channels), argv, args.no_lock, inputs=inputs)


def cmd_fullsim(args, argv):
    scene = get_scene(args)
    tx_cfg, rx_cfg = get_arrays(args)
    channels = fullsim_scene(
        scene,
        tx_cfg,
        rx_cfg,
        phase_only=args.phase_only_full,
        drop_los=args.drop_los,
        jobs=args.jobs,
    )
    inputs = [args.scene] if args.scene else []
    write_output(
        args.out, channels_to_json(channels), argv, args.no_lock, scene=scene, inputs=inputs
    )


def cmd_compare(args, argv):
    reports = compare_channel_sets(
        read_channels(args.approx), read_channels(args.reference)
    )
    log_reports(reports, aligned=args.align_phase)
    write_output(
        args.out,
        errors_to_csv(reports),
        argv,
        args.no_lock,
        inputs=[args.approx, args.reference],
    )


def select_pairs(channels, pairs):
    if not pairs:
        return channels
    wanted = set(p.strip() for p in pairs.split(",") if p.strip())
    return [h for h in channels if h.pair[1] in wanted or h.pair_label in wanted]


def cmd_capacity(args, argv):
    grid = snr_grid(args.snr_db)
    normalization = NORMALIZE_CHOICES[args.normalize]
    curves = []
    for f in args.channels:
        for h in select_pairs(read_channels(f), args.pairs):
            curves.append(capacity_curve(h, grid, normalization))
    if not curves:
        raise ValueError("No channel selected. pairs={p}".format(p=args.pairs))
    write_output(
        args.out, capacity_to_csv(curves), argv, args.no_lock, inputs=args.channels
    )


def cmd_sweep(args, argv):
    scene = get_scene(args)
    tx_cfg, rx_cfg = get_arrays(args)
    points = distance_sweep(
        scene,
        parse_distances(args.distances),
        tx_cfg,
        rx_cfg,
        l=args.top_l,
        snr_db_grid=snr_grid(args.snr_db),
        normalization=NORMALIZE_CHOICES[args.normalize],
        phase_only=args.phase_only_full,
        drop_los=args.drop_los,
        jobs=args.jobs,
    )
    if len(points) >= 2:
        logger.info(
            "sweep: distance-error rank correlation. rho={r}".format(
                r=distance_error_trend([p.error for p in points])
            )
        )
    inputs = [args.scene] if args.scene else []
    write_output(
        args.out, sweep_to_csv(points), argv, args.no_lock, scene=scene, inputs=inputs
    )
    if args.capacity_out:
        write_output(
            args.capacity_out,
            capacity_to_csv(sweep_capacity_curves(points)),
            argv,
            args.no_lock,
            scene=scene,
            inputs=inputs,
        )


COMMANDS = {
    "trace": cmd_trace,
    "synth": cmd_synth,
    "fullsim": cmd_fullsim,
    "compare": cmd_compare,
    "capacity": cmd_capacity,
    "sweep": cmd_sweep,
}


def main(argv=None):
    """Runs a subcommand and returns its exit code.

    0 ok, 2 validation, 3 I/O, 4 numeric failure.
    """
    if argv is None:
        argv = sys.argv[1:]
    args = parse_args(argv)

    try:
        COMMANDS[args.action](args, argv)
    except ValueError as e:
        logger.error("{a}: validation failed. {e}".format(a=args.action, e=e))
        return EXIT_VALIDATION
    except OSError as e:
        logger.error("{a}: I/O failed. {e}".format(a=args.action, e=e))
        return EXIT_IO
    except RuntimeError as e:
        logger.error("{a}: numeric failure. {e}".format(a=args.action, e=e))
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
