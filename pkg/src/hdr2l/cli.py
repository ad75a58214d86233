"""Command-line interface: encode, decode, extract-ldr, tmqi, bench."""

from __future__ import annotations

import argparse
import json
import sys
import tempfile
from pathlib import Path

from . import bench, container
from .container import CodecParams, MODE_BY_NAME
from .errors import Hdr2lError, LosslessnessError
from .imagio import parse_ppm, write_pfm
from .tmo import TMO_BY_NAME, TmoParams
from .tmqi import tmqi as tmqi_score


def _add_codec_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tmo", choices=sorted(TMO_BY_NAME), default="default",
                        help="tone-mapping operator for the base layer")
    parser.add_argument("--q", type=int, default=80, metavar="1..100",
                        help="base layer JPEG quality")
    parser.add_argument("--mode", choices=sorted(MODE_BY_NAME), default="hp",
                        help="coder arm: histogram-packed (hp) or plain (xt)")
    parser.add_argument("--refine", type=int, choices=(0, 4), default=0,
                        help="refinement bits (xt mode only)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hdr2l", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode an HDR image to a two-layer stream")
    p.add_argument("input", type=Path, help=".hdr or .pfm source image")
    p.add_argument("--out", type=Path, required=True)
    _add_codec_flags(p)

    p = sub.add_parser("decode", help="restore the original HDR image (PFM output)")
    p.add_argument("input", type=Path)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("extract-ldr", help="extract the embedded JPEG base layer")
    p.add_argument("input", type=Path)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("tmqi", help="score a tone-mapped PPM against an HDR reference")
    p.add_argument("hdr", type=Path, help=".hdr or .pfm reference")
    p.add_argument("ldr", type=Path, help="8-bit PPM rendering")

    p = sub.add_parser("bench", help="run the evaluation grid over an HDR directory")
    p.add_argument("input", type=Path, nargs="?", help="directory of .hdr/.pfm images")
    p.add_argument("--synthetic", type=int, metavar="N",
                   help="generate N synthetic images instead of reading a directory "
                        "(seeded by HDR2L_SEED)")
    p.add_argument("--size", type=int, default=96, help="synthetic image side length")
    p.add_argument("--tmo", choices=sorted(TMO_BY_NAME) + ["all"], default="all")
    p.add_argument("--q", type=int, action="append", metavar="1..100",
                   help="quality value (repeatable; default 80 and 90)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-tmqi", action="store_true", help="skip quality scoring")
    p.add_argument("--csv", type=Path, help="write per-cell records here")
    p.add_argument("--svg", type=Path, help="write a bitrate boxplot here")
    return parser


def _cmd_encode(args) -> int:
    hdr = bench.load_hdr_file(args.input)
    params = CodecParams(
        mode=MODE_BY_NAME[args.mode],
        tmo=TmoParams(kind=TMO_BY_NAME[args.tmo]),
        q=args.q,
        refine_bits=args.refine,
    )
    stream = container.encode(hdr, params)
    args.out.write_bytes(stream)
    report = container.measure(stream)
    print(f"{args.out}: {report.total_bytes} bytes, {report.bits_per_pixel:.3f} bpp")
    return 0


def _cmd_decode(args) -> int:
    hdr = container.decode(args.input.read_bytes())
    args.out.write_bytes(write_pfm(hdr))
    print(f"{args.out}: {hdr.width}x{hdr.height}")
    return 0


def _cmd_extract(args) -> int:
    jpeg = container.extract_ldr(args.input.read_bytes())
    args.out.write_bytes(jpeg)
    print(f"{args.out}: {len(jpeg)} bytes")
    return 0


def _cmd_tmqi(args) -> int:
    hdr = bench.load_hdr_file(args.hdr)
    ldr = parse_ppm(args.ldr.read_bytes())
    score = tmqi_score(hdr, ldr)
    print(f"Q={score.q_overall:.6f} S={score.s_structural:.6f} N={score.n_naturalness:.6f}")
    return 0


def _cmd_bench(args) -> int:
    tmos = tuple(TMO_BY_NAME.values()) if args.tmo == "all" else (TMO_BY_NAME[args.tmo],)
    config = bench.BenchConfig(
        tmos=tmos,
        qs=tuple(args.q) if args.q else (80, 90),
        workers=args.workers,
        compute_tmqi=not args.no_tmqi,
    )
    if args.synthetic:
        workdir = args.input or Path(tempfile.mkdtemp(prefix="hdr2l_corpus_"))
        bench.write_corpus(workdir, args.synthetic, size=args.size)
        print(f"synthetic corpus: {args.synthetic} images in {workdir}")
        result = bench.run_grid(workdir, config)
    elif args.input:
        result = bench.run_grid(args.input, config)
    else:
        print("bench: either an input directory or --synthetic N is required", file=sys.stderr)
        return 1

    if args.csv:
        args.csv.write_text(bench.records_to_csv(result.records))
        print(f"records: {args.csv}")
    if args.svg:
        args.svg.write_text(bench.emit_boxplot_svg(result.summary["arm_stats"]))
        print(f"boxplot: {args.svg}")

    summary = result.summary
    print(f"{len(result.records)} records over {len({r.image_id for r in result.records})} images")
    print(summary["quartile_method"])
    for label, mean in summary["mean_bpp"].items():
        print(f"  mean bpp {label}: {mean:.4f}")
    for key, ok in summary["hp_beats_xt"].items():
        print(f"  hp < xt @ {key}: {'yes' if ok else 'NO'}")
    for key, entry in summary["cross_tmo_cov"].items():
        print(
            f"  cross-TMO cov @ {key}: hp={entry['hp']:.4f} xt_r0={entry['xt_r0']:.4f} "
            f"{'(hp smaller)' if entry['hp_smaller'] else '(hp NOT smaller)'}"
        )
    for name, reason in summary.get("skipped", []):
        print(f"  skipped {name}: {reason}", file=sys.stderr)

    bench.require_lossless(result)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "encode": _cmd_encode,
        "decode": _cmd_decode,
        "extract-ldr": _cmd_extract,
        "tmqi": _cmd_tmqi,
        "bench": _cmd_bench,
    }
    try:
        return handlers[args.command](args)
    except LosslessnessError as exc:
        print(f"hdr2l: {exc}", file=sys.stderr)
        return 2
    except Hdr2lError as exc:
        print(f"hdr2l: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
