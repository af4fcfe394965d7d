"""Command-line entry point.

Exit codes: 0 success, 1 usage, 2 connectivity, 3 protocol error, 4 data
error. Network subcommands take --relay <host:port> (default loopback).
"""
from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

from .broker import DEFAULT_PORT, DEFAULT_WS_PORT, FaultProfile, run_broker_forever
from .client import RelayClient, RelayConnectionLost
from .e2e import DEFAULT_SCRIPTS, StageError, run_end_to_end
from .model import DEFAULT_TIMESTEP_MS, InvalidClip
from .puppet import WAVEFORMS, WaveformSpec, clip_poses, generate_poses, play_poses
from .ratings import (
    MissingIntendedRating,
    NoData,
    UnknownClip,
    confusion,
    ingest,
    parse_intents_csv,
    report as ratings_report,
)
from .report import analyze_library, report_csv, write_report
from .robot import RobotService, ServoConfig
from .session import EmptyClip, SessionPlan, SessionProtocolError, SessionService, load_plan
from .store import ClipCorrupt, export_csv, load_clip, save_clip, scan
from .wire import FrameError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONNECT = 2
EXIT_PROTOCOL = 3
EXIT_DATA = 4


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; 2 means connectivity here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _split_relay(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"--relay must be host:port, got {addr!r}")
    return host, int(port)


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def build_parser() -> _Parser:
    parser = _Parser(prog="puppetmirror", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("relay", parents=[], help="run the pose relay")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--ws-port", type=int, default=DEFAULT_WS_PORT)
    p.add_argument("--no-ws", action="store_true", help="disable the websocket bridge")
    p.add_argument("--latency-ms", type=int, default=0)
    p.add_argument("--jitter-ms", type=int, default=0)
    p.add_argument("--drop-prob", type=float, default=0.0, help="per-delivery drop probability")
    p.add_argument("--seed", type=int, default=None, help="fault-injection RNG seed")

    p = sub.add_parser("simulate-robot", help="run the simulated robot")
    p.add_argument("--session", required=True)
    p.add_argument("--relay", default=f"127.0.0.1:{DEFAULT_PORT}")
    p.add_argument("--max-speed-dps", type=float, default=360.0)
    p.add_argument("--timestep-ms", type=int, default=DEFAULT_TIMESTEP_MS)

    p = sub.add_parser("puppet-play", help="publish scripted puppet poses")
    p.add_argument("--session", required=True)
    p.add_argument("--relay", default=f"127.0.0.1:{DEFAULT_PORT}")
    p.add_argument("--clip", help="clip file to replay as the pose source")
    p.add_argument("--waveform", choices=WAVEFORMS)
    p.add_argument("--axis", choices=("pan", "tilt"), default="pan")
    p.add_argument("--amplitude-deg", type=float, default=30.0)
    p.add_argument("--frequency-hz", type=float, default=1.0)
    p.add_argument("--duration-ms", type=int, default=5000)
    p.add_argument("--center-pan-deg", type=float, default=0.0)
    p.add_argument("--center-tilt-deg", type=float, default=0.0)
    p.add_argument("--timestep-ms", type=int, default=DEFAULT_TIMESTEP_MS)
    p.add_argument("--no-pace", action="store_true", help="publish as fast as possible")

    p = sub.add_parser("session", help="session engine commands")
    session_sub = p.add_subparsers(dest="session_command", required=True)
    p = session_sub.add_parser("run", help="serve one session to completion")
    p.add_argument("--plan", required=True, help="JSON session plan file")
    p.add_argument("--relay", default=f"127.0.0.1:{DEFAULT_PORT}")
    p.add_argument("--out", required=True, help="directory for recorded clips")
    p.add_argument("--no-pace", action="store_true", help="do not pace review replays")

    p = sub.add_parser("clips", help="clip store commands")
    clips_sub = p.add_subparsers(dest="clips_command", required=True)
    p = clips_sub.add_parser("scan", help="catalog a clip directory")
    p.add_argument("directory")
    p.add_argument("--json", action="store_true", dest="as_json")
    p = clips_sub.add_parser("export-csv", help="print a clip as CSV")
    p.add_argument("clip")
    p.add_argument("--out", help="write to file instead of stdout")

    p = sub.add_parser("analyze", help="motion analysis of a clip or directory")
    p.add_argument("target", help="clip file or directory of clips")
    fmt = p.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", dest="as_json")
    fmt.add_argument("--csv", action="store_true", dest="as_csv")
    p.add_argument("--out", help="write report.json/report.csv and figures to this directory")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("ratings", help="recognition survey aggregation")
    ratings_sub = p.add_subparsers(dest="ratings_command", required=True)
    p = ratings_sub.add_parser("report", help="aggregate ratings into recognizability reports")
    p.add_argument("--ratings", required=True, help="CSV: rater_id,clip_id,word,rating")
    p.add_argument("--intents", required=True, help="CSV: clip_id,emotion")
    p.add_argument("--confusion", action="store_true", help="include the 6x6 confusion matrix")
    p.add_argument("--csv", action="store_true", dest="as_csv", help="emit CSV instead of JSON")

    p = sub.add_parser("e2e", help="scripted full-pipeline run on loopback")
    p.add_argument("--out", required=True)
    p.add_argument("--session-id", default="e2e")
    p.add_argument("--designer-id", default="scripted")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-pace", action="store_true")
    p.add_argument("--latency-ms", type=int, default=0)
    p.add_argument("--jitter-ms", type=int, default=0)
    p.add_argument("--max-speed-dps", type=float, default=360.0)
    p.add_argument("--no-figures", action="store_true")

    return parser


def _cmd_relay(args) -> int:
    faults = FaultProfile(
        base_latency_ms=args.latency_ms, jitter_ms=args.jitter_ms, drop_probability=args.drop_prob
    )
    ws_port = None if args.no_ws else args.ws_port
    try:
        asyncio.run(run_broker_forever(args.host, args.port, ws_port, faults, seed=args.seed))
    except KeyboardInterrupt:
        pass
    return EXIT_OK


async def _robot_forever(args) -> None:
    host, port = _split_relay(args.relay)
    client = await RelayClient.connect(host, port)
    robot = RobotService(
        client, args.session, ServoConfig(max_speed_dps=args.max_speed_dps, timestep_ms=args.timestep_ms)
    )
    await robot.start()
    print(f"robot mirroring session {args.session!r} via {args.relay}", flush=True)
    try:
        await asyncio.Event().wait()
    finally:
        await robot.stop()
        await client.close()


def _cmd_simulate_robot(args) -> int:
    try:
        asyncio.run(_robot_forever(args))
    except KeyboardInterrupt:
        pass
    return EXIT_OK


async def _puppet_play(args) -> int:
    if args.clip:
        poses = clip_poses(load_clip(args.clip))
    else:
        if not args.waveform:
            print("puppet-play needs --clip or --waveform", file=sys.stderr)
            return EXIT_USAGE
        spec = WaveformSpec(
            waveform=args.waveform,
            axis=args.axis,
            amplitude_deg=args.amplitude_deg,
            frequency_hz=args.frequency_hz,
            duration_ms=args.duration_ms,
            center_pan_deg=args.center_pan_deg,
            center_tilt_deg=args.center_tilt_deg,
        )
        poses = generate_poses(spec, args.timestep_ms)
    host, port = _split_relay(args.relay)
    client = await RelayClient.connect(host, port)
    try:
        count = await play_poses(
            client, args.session, poses, args.timestep_ms, pace=not args.no_pace
        )
    finally:
        await client.close()
    print(f"published {count} frames")
    return EXIT_OK


async def _session_run(args) -> int:
    plan = load_plan(args.plan)
    host, port = _split_relay(args.relay)
    client = await RelayClient.connect(host, port)
    out = Path(args.out)

    def sink(clip):
        save_clip(clip, out, overwrite=True)

    service = SessionService(client, plan, clip_sink=sink, pace=not args.no_pace)
    try:
        await service.run()
    finally:
        await client.close()
    print(f"session {plan.session_id!r} complete; clips in {out}")
    return EXIT_OK


def _cmd_clips_scan(args) -> int:
    directory = Path(args.directory)
    if not directory.is_dir():
        print(f"not a directory: {directory}", file=sys.stderr)
        return EXIT_DATA
    result = scan(directory)
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    if args.as_json:
        _print_json(
            [
                {
                    "path": str(e.path),
                    "clip_id": e.clip_id,
                    "emotion": e.emotion.value,
                    "designer_id": e.designer_id,
                    "iteration": e.iteration,
                    "final": e.final,
                    "timestep_ms": e.timestep_ms,
                    "recorded_at": e.recorded_at,
                    "duration_ms": e.duration_ms,
                    "sample_count": e.sample_count,
                }
                for e in result.entries
            ]
        )
    else:
        for e in result.entries:
            marker = "final" if e.final else "take "
            print(
                f"{e.clip_id}  {marker}  {e.emotion.value:<9}  iter {e.iteration}  "
                f"{e.duration_ms} ms  {e.sample_count} samples  {e.path.name}"
            )
        print(f"{len(result.entries)} clips, {len(result.warnings)} warnings")
    return EXIT_OK


def _cmd_clips_export_csv(args) -> int:
    data = export_csv(load_clip(args.clip))
    if args.out:
        Path(args.out).write_bytes(data)
    else:
        sys.stdout.write(data.decode("ascii"))
    return EXIT_OK


def _load_clips_for_analysis(target: Path) -> list:
    if target.is_dir():
        result = scan(target)
        for warning in result.warnings:
            print(f"warning: {warning}", file=sys.stderr)
        return [load_clip(e.path) for e in result.entries]
    return [load_clip(target)]


def _cmd_analyze(args) -> int:
    target = Path(args.target)
    if not target.exists():
        print(f"no such clip or directory: {target}", file=sys.stderr)
        return EXIT_DATA
    clips = _load_clips_for_analysis(target)
    if not clips:
        print("no clips to analyze", file=sys.stderr)
        return EXIT_DATA
    if args.out:
        summary = write_report(clips, args.out, figures=not args.no_figures)
        print(f"wrote {summary['json_path']}, {summary['csv_path']}, {len(summary['figures'])} figures")
        return EXIT_OK
    rows = analyze_library(clips)
    if args.as_csv:
        sys.stdout.write(report_csv(rows).decode("ascii"))
    else:
        _print_json(rows)
    return EXIT_OK


def _cmd_ratings_report(args) -> int:
    records, rejects = ingest(Path(args.ratings).read_bytes())
    for reject in rejects:
        print(f"warning: line {reject.line}: {reject.reason}", file=sys.stderr)
    intents = parse_intents_csv(Path(args.intents).read_bytes())
    reports = ratings_report(records, intents)
    if args.as_csv:
        header = "clip_id,intended,mean_intended,discriminability,weight,n_raters"
        lines = [header]
        for r in reports:
            disc = "" if r.discriminability is None else f"{r.discriminability:.6f}"
            lines.append(
                f"{r.clip_id},{r.intended.value},{r.mean_intended:.6f},{disc},"
                f"{r.weight:.6f},{r.n_raters}"
            )
        print("\n".join(lines))
    else:
        out: dict = {"reports": [r.to_dict() for r in reports]}
        if args.confusion:
            out["confusion"] = confusion(records, intents)
        _print_json(out)
        return EXIT_OK
    if args.confusion:
        matrix = confusion(records, intents)
        print("confusion:")
        for row in matrix:
            print(",".join("" if cell is None else f"{cell:.6f}" for cell in row))
    return EXIT_OK


def _cmd_e2e(args) -> int:
    summary = asyncio.run(
        run_end_to_end(
            out_dir=args.out,
            session_id=args.session_id,
            designer_id=args.designer_id,
            seed=args.seed,
            pace=not args.no_pace,
            latency_ms=args.latency_ms,
            jitter_ms=args.jitter_ms,
            max_speed_dps=args.max_speed_dps,
            scripts=DEFAULT_SCRIPTS,
            figures=not args.no_figures,
        )
    )
    _print_json({k: v for k, v in summary.items() if k != "rows"})
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "relay":
            return _cmd_relay(args)
        if args.command == "simulate-robot":
            return _cmd_simulate_robot(args)
        if args.command == "puppet-play":
            return asyncio.run(_puppet_play(args))
        if args.command == "session":
            return asyncio.run(_session_run(args))
        if args.command == "clips":
            if args.clips_command == "scan":
                return _cmd_clips_scan(args)
            return _cmd_clips_export_csv(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        if args.command == "ratings":
            return _cmd_ratings_report(args)
        if args.command == "e2e":
            return _cmd_e2e(args)
        parser.error(f"unknown command {args.command!r}")
        return EXIT_USAGE
    except (RelayConnectionLost, ConnectionError) as exc:
        print(f"connection error: {exc}", file=sys.stderr)
        return EXIT_CONNECT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONNECT
    except (FrameError, SessionProtocolError) as exc:
        print(f"protocol error: {exc}", file=sys.stderr)
        return EXIT_PROTOCOL
    except StageError as exc:
        print(f"e2e failed: {exc}", file=sys.stderr)
        return EXIT_CONNECT if str(exc).startswith("[relay]") else EXIT_PROTOCOL
    except (ClipCorrupt, InvalidClip, EmptyClip, UnknownClip, NoData, MissingIntendedRating) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
