"""Command-line interface.

Exit status: 0 on success, 1 on pipeline or data errors, 2 on usage or
configuration errors. Diagnostics go to stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .errors import ConfigError, VralprError
from .evaluate import compute_cer, read_ground_truth, write_ground_truth
from .pipeline import PipelineConfig, default_workers, load_config, run_pipeline
from .protocol import probe
from .records import dumps_jsonl, read_records
from .rhythm import ChunkSpec, LineSpec, iter_vr_chunks
from .synth import SceneSpec, generate_scene, random_scene
from .video_io import encode_netpbm, open_frame_source

log = logging.getLogger("vralpr")

FRAME_ORDER_NOTE = (
    "Frame directories are read in byte-wise filename order, so number frames "
    "with zero padding (frame_000001.ppm, frame_000002.ppm, ...). Only binary "
    "P5/P6 files with maxval 255 are accepted.")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _add_overrides(p):
    p.add_argument("--config", required=True, help="pipeline config (JSON)")
    p.add_argument("--line-y", type=int, help="counting line row (default 800)")
    p.add_argument("--chunk", type=int, metavar="T", help="frames per VR chunk (default 600)")
    p.add_argument("--overlap", type=int, metavar="V", help="frames shared between chunks (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vralpr", description="Visual-rhythm license plate recognition.",
                     epilog=FRAME_ORDER_NOTE)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic scene with ground truth",
                       epilog=FRAME_ORDER_NOTE)
    p.add_argument("--output", "-o", required=True, help="output directory")
    p.add_argument("--scene", help="SceneSpec JSON; overrides the random-scene options")
    p.add_argument("--vehicles", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--line-y", type=int, default=120)
    p.add_argument("--chunk", type=int, metavar="T", default=60,
                   help="keep every mark inside one chunk of this length (written to config.json)")
    p.add_argument("--noise", type=float, default=0.0, help="pixel-flip probability")
    p.add_argument("--omit-plate", type=int, action="append", default=[], metavar="IDX",
                   help="do not draw vehicle IDX's plate (its text stays in the ground truth)")

    p = sub.add_parser("vr", help="write VR chunk images", epilog=FRAME_ORDER_NOTE)
    _add_overrides(p)
    p.add_argument("--output", "-o", default="vr", help="output directory (default ./vr)")
    p.add_argument("--figures", help="also render each chunk as PNG into this directory")

    p = sub.add_parser("run", help="run the full pipeline", epilog=FRAME_ORDER_NOTE)
    _add_overrides(p)
    p.add_argument("--output", "-o", help="records file (JSON lines); '-' for stdout")
    p.add_argument("--workers", type=int, help="worker threads (env VRALPR_WORKERS, default: CPU count)")
    p.add_argument("--dump-frames", metavar="DIR", help="write annotated extracted frames (P6)")
    p.add_argument("--figures", metavar="DIR", help="render VR chunks with marks as PNG")

    p = sub.add_parser("eval", help="character error rate against ground truth")
    p.add_argument("--records", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--tolerance", type=int, default=3, help="frame matching tolerance (default 3)")
    p.add_argument("--aggregation", choices=["micro", "macro"], default="micro",
                   help="headline CER: total edits over total characters (micro, default) "
                        "or mean per-plate rate (macro)")
    p.add_argument("--report", help="CER report JSON (default: <records>.cer.json)")
    p.add_argument("--figures", metavar="DIR", help="render the error breakdown as PNG")

    p = sub.add_parser("probe-detector", help="send a test image to an external backend")
    p.add_argument("--command", required=True, help="backend command line")
    p.add_argument("--task", default="marks", choices=["marks", "vehicles", "plates"])
    p.add_argument("--ocr", action="store_true", help="send an OCR request instead")
    return parser


def _load(args) -> PipelineConfig:
    cfg = load_config(args.config)
    line, chunks = cfg.line, cfg.chunks
    if args.line_y is not None:
        line = LineSpec(args.line_y, line.x_start, line.x_end)
    if args.chunk is not None or args.overlap is not None:
        chunks = ChunkSpec(args.chunk if args.chunk is not None else chunks.chunk_len_T,
                           args.overlap if args.overlap is not None else chunks.overlap_V)
    cfg.line, cfg.chunks = line, chunks
    if getattr(args, "output", None) is not None and args.subcommand == "run":
        cfg.output = args.output
    return cfg


def cmd_synth(args) -> int:
    out = Path(args.output)
    if args.scene:
        try:
            spec = SceneSpec.from_dict(json.loads(Path(args.scene).read_text()))
        except FileNotFoundError:
            raise ConfigError(f"scene file not found: {args.scene}") from None
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"bad scene file: {exc}") from None
    else:
        spec = random_scene(args.vehicles, seed=args.seed, width=args.width, height=args.height,
                            line_y=args.line_y, chunk_len=args.chunk, noise=args.noise)
    for i in args.omit_plate:
        if not 0 <= i < len(spec.vehicles):
            raise ConfigError(f"--omit-plate {i}: no such vehicle")
        spec.vehicles[i].render_plate = False
    source, truth = generate_scene(spec)
    frames = out / "frames"
    frames.mkdir(parents=True, exist_ok=True)
    for f in source:
        (frames / f"frame_{f.index:06d}.ppm").write_bytes(encode_netpbm(f))
    write_ground_truth(out / "ground_truth.jsonl", truth.entries())
    (out / "scene.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
    cfg = {
        "source": {"kind": "ppm_dir", "path": "frames"},
        "line": {"row_y": spec.line_y, "x_start": 0, "x_end": None},
        "chunks": {"chunk_len_T": args.chunk or 600, "overlap_V": 0},
        "output": "records.jsonl",
    }
    (out / "config.json").write_text(json.dumps(cfg, indent=2) + "\n")
    log.info("wrote %d frames, %d ground-truth plates to %s", len(source), len(truth.entries()), out)
    return 0


def cmd_vr(args) -> int:
    cfg = _load(args)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    with open_frame_source(cfg.source) as source:
        n = 0
        for vr in iter_vr_chunks(source, cfg.line, cfg.chunks):
            ext = "pgm" if vr.format == "gray8" else "ppm"
            (out / f"vr_chunk_{vr.chunk_index:04d}.{ext}").write_bytes(encode_netpbm(vr.pixels))
            if args.figures:
                from .report import plot_vr_chunk
                plot_vr_chunk(vr, [], [], Path(args.figures) / f"vr_chunk_{vr.chunk_index:04d}.png")
            n += 1
    log.info("wrote %d VR chunk images to %s", n, out)
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    workers = args.workers if args.workers is not None else default_workers()
    on_chunk = None
    if args.figures:
        from .report import plot_vr_chunk
        fig_dir = Path(args.figures)

        def on_chunk(vr, marks, owned):
            plot_vr_chunk(vr, marks, owned, fig_dir / f"vr_chunk_{vr.chunk_index:04d}.png")

    records = run_pipeline(cfg, workers=workers, dump_dir=args.dump_frames, on_chunk=on_chunk)
    text = dumps_jsonl(r.to_dict() for r in records)
    if cfg.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(cfg.output).write_text(text, encoding="utf-8")
        log.info("wrote %d records to %s", len(records), cfg.output)
    return 0


def cmd_eval(args) -> int:
    try:
        records = read_records(args.records)
        gts = read_ground_truth(args.gt)
    except FileNotFoundError as exc:
        raise ConfigError(f"input not found: {exc.filename}") from None
    report = compute_cer(records, gts, args.tolerance, args.aggregation)
    report_path = Path(args.report) if args.report else Path(args.records).with_suffix(".cer.json")
    report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    if args.figures:
        from .report import plot_cer_report
        plot_cer_report(report, Path(args.figures) / "cer_report.png")
    print(report.summary())
    return 0


def cmd_probe(args) -> int:
    request, response = probe(args.command, task=args.task, ocr=args.ocr)
    shown = dict(request, data=f"<{len(request['data'])} base64 chars>")
    print("request:")
    print(json.dumps(shown, indent=2))
    print("response:")
    print(json.dumps(response, indent=2))
    return 0


COMMANDS = {"synth": cmd_synth, "vr": cmd_vr, "run": cmd_run, "eval": cmd_eval,
            "probe-detector": cmd_probe}


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.subcommand](args)
    except ConfigError as exc:
        print(f"vralpr: config error: {exc}", file=sys.stderr)
        return 2
    except (VralprError, OSError, ValueError) as exc:
        print(f"vralpr: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
