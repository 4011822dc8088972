"""Command-line front door: encode, decode, eval, bench, inspect.

Exit codes: 0 success, 2 I/O, 3 malformed file/stream, 4 bad configuration,
5 model/weights mismatch.  Every failure prints a single line starting with
``pvcodec: error:`` on stderr.  ``PVC_WEIGHTS`` provides the default weights
path; an optional key=value config file may set flag defaults, flags win.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import codec, metrics, pcio, samples
from .errors import ConfigError, FormatError, ModelError, ParseError, PvcError
from .models import load_weights, make_model

EXIT_IO, EXIT_FORMAT, EXIT_CONFIG, EXIT_MODEL = 2, 3, 4, 5


def _load_config_defaults(path):
    defaults = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = body.split("=", 1)
            defaults[key.strip().replace("-", "_")] = value.strip()
    return defaults


def _make_parser():
    parser = argparse.ArgumentParser(
        prog="pvcodec",
        description="Octree point-cloud geometry codec with hybrid-context entropy models.",
    )
    parser.add_argument("--config", help="key=value file with flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model_flags(p):
        p.add_argument("--model", "-m", default="adaptive",
                       choices=["uniform", "adaptive", "neural"], help="entropy model")
        p.add_argument("--weights", default=None,
                       help="PVW weights for the neural model (default: $PVC_WEIGHTS)")
        p.add_argument("--ablation", default="hybrid",
                       choices=["hybrid", "voxel-only", "point-only"],
                       help="neural branch ablation")

    enc = sub.add_parser("encode", help="compress a PLY/XYZ cloud into a .pvc stream")
    enc.add_argument("input")
    enc.add_argument("output")
    enc.add_argument("--precision", "-N", type=int, default=10, help="grid bits (1..16)")
    enc.add_argument("--depth", "-D", type=int, default=None,
                     help="octree depth (default N: lossless)")
    add_model_flags(enc)
    enc.add_argument("--report", help="also write the encode report as key=value")

    dec = sub.add_parser("decode", help="decompress a .pvc stream to PLY/XYZ")
    dec.add_argument("input")
    dec.add_argument("output")
    dec.add_argument("--weights", default=None, help="PVW weights if the stream is neural")
    dec.add_argument("--ply-binary", action="store_true", help="write binary PLY")

    ev = sub.add_parser("eval", help="D1/D2 PSNR and Chamfer distance of a reconstruction")
    ev.add_argument("original")
    ev.add_argument("reconstructed")
    ev.add_argument("--precision", "-N", type=int, default=10, help="grid bits for comparison")
    ev.add_argument("--report", help="write metrics as key=value lines")

    ins = sub.add_parser("inspect", help="dump a .pvc header, or coding contexts of a cloud")
    ins.add_argument("input")
    ins.add_argument("--dump-contexts", metavar="OUT",
                     help="input is a cloud: write its (context, symbol) samples to OUT")
    ins.add_argument("--precision", "-N", type=int, default=10)
    ins.add_argument("--depth", "-D", type=int, default=None)
    ins.add_argument("--k", type=int, default=1024, help="point-context size for dumps")

    ben = sub.add_parser("bench", help="bpp table over a corpus directory")
    ben.add_argument("corpus")
    ben.add_argument("--models", default="uniform,adaptive",
                     help="comma list of models to run")
    ben.add_argument("--weights", default=None)
    ben.add_argument("--ablation", default="hybrid",
                     choices=["hybrid", "voxel-only", "point-only"])
    ben.add_argument("--precision", "-N", type=int, default=10)
    ben.add_argument("--depths", default=None,
                     help="comma list of depths (default: N)")
    ben.add_argument("--csv", help="also write the table as CSV")
    ben.add_argument("--jobs", type=int, default=1, help="files processed in parallel")
    ben.add_argument("--seed", type=int, default=0,
                     help="seed for anything randomized (kept for reproducible runs)")
    return parser


def _resolve_model(name, weights_path, ablation):
    weights = None
    if name == "neural":
        weights_path = weights_path or os.environ.get("PVC_WEIGHTS")
        if not weights_path:
            raise ConfigError("--model neural requires --weights (or $PVC_WEIGHTS)")
        weights = load_weights(weights_path)
    return make_model(name, weights, mode=ablation)


def _print_report(report, stream=None):
    stream = stream or sys.stdout
    print(f"points           {report.point_count}", file=stream)
    print(f"symbols          {report.symbol_count}", file=stream)
    print(f"file bytes       {report.file_bytes}", file=stream)
    print(f"bpp (file)       {report.bpp:.4f}", file=stream)
    print(f"bpp (payload)    {report.bpp_payload:.4f}", file=stream)
    print(f"cross-entropy    {report.cross_entropy_bits / report.point_count:.4f} bits/point", file=stream)
    for lv in report.levels:
        print(
            f"  level {lv.level:2d}: {lv.symbols:8d} symbols, {lv.ones:8d} occupied, "
            f"{lv.cross_entropy_bits / 8:.1f} coded bytes",
            file=stream,
        )


def cmd_encode(args):
    raw = pcio.read_point_cloud(args.input)
    pc = pcio.quantize(raw, args.precision)
    depth = args.depth if args.depth is not None else args.precision
    model = _resolve_model(args.model, args.weights, args.ablation)
    bs, report = codec.encode(pc, depth, model)
    bs.write(args.output)
    _print_report(report)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(f"bpp_file={report.bpp!r}\nbpp_payload={report.bpp_payload!r}\n")
            fh.write(f"points={report.point_count}\nsymbols={report.symbol_count}\n")
            fh.write(f"seconds={report.seconds!r}\n")
    return 0


def cmd_decode(args):
    bs = codec.Bitstream.read(args.input)
    h = bs.header
    if h.model_id == 0:
        model = make_model("uniform")
    elif h.model_id == 1:
        model = make_model("adaptive")
    else:
        mode = {2: "hybrid", 3: "voxel-only", 4: "point-only"}.get(h.model_id)
        if mode is None:
            raise FormatError(f"{args.input}: unknown model id {h.model_id}")
        weights_path = args.weights or os.environ.get("PVC_WEIGHTS")
        if not weights_path:
            raise ConfigError("stream is neural: pass --weights (or $PVC_WEIGHTS)")
        model = make_model("neural", load_weights(weights_path), mode=mode)
    pc = codec.decode(bs, model)
    raw = pcio.dequantize(pc)
    pcio.write_point_cloud(args.output, raw, binary=args.ply_binary)
    print(f"decoded {len(pc)} points at depth {h.depth}/{h.precision}")
    return 0


def _regrid(reference_pc, recon_raw):
    """Map reconstructed real coordinates back onto the reference grid."""
    q = np.floor((recon_raw.points - reference_pc.origin) / reference_pc.scale + 0.5)
    hi = (1 << reference_pc.precision) - 1
    outside = (q < 0) | (q > hi)
    if outside.any():
        print(
            f"pvcodec: warning: {int(outside.any(axis=1).sum())} reconstructed points "
            "fall outside the reference grid (precision mismatch?)",
            file=sys.stderr,
        )
    q = np.clip(q, 0, hi).astype(np.int64)
    return pcio.PointCloud(np.unique(q, axis=0), reference_pc.precision,
                           reference_pc.origin, reference_pc.scale)


def cmd_eval(args):
    original = pcio.quantize(pcio.read_point_cloud(args.original), args.precision)
    recon = _regrid(original, pcio.read_point_cloud(args.reconstructed))
    report = metrics.evaluate(original, recon)
    print(f"d1_psnr  {report.d1_psnr} dB")
    print(f"d2_psnr  {report.d2_psnr} dB" + ("  (fell back to D1)" if report.d2_fallback else ""))
    print(f"chamfer  {report.chamfer} sq units")
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(report.as_kv())
    return 0


def cmd_inspect(args):
    if args.dump_contexts:
        raw = pcio.read_point_cloud(args.input)
        pc = pcio.quantize(raw, args.precision)
        depth = args.depth if args.depth is not None else args.precision
        count = samples.dump_samples(args.dump_contexts, pc, depth, args.k)
        print(f"samples={count}")
        print(f"k={args.k}")
        print(f"precision={pc.precision}")
        print(f"depth={depth}")
        return 0
    bs = codec.Bitstream.read(args.input)
    h = bs.header
    from .models import MODEL_NAMES

    ox, oy, oz = (float(v) for v in h.origin)
    print(f"magic=PVC1\nversion={codec.PVC_VERSION}")
    print(f"precision={h.precision}\ndepth={h.depth}")
    print(f"origin={ox!r},{oy!r},{oz!r}")
    print(f"scale={h.scale!r}")
    print(f"model_id={h.model_id}\nmodel_name={MODEL_NAMES.get(h.model_id, '?')}")
    print(f"model_hash={h.model_hash:#018x}")
    print(f"k={h.k}")
    print(f"symbols={h.symbol_count}\npoints={h.point_count}")
    print(f"payload_bytes={len(bs.payload)}")
    return 0


def _bench_one(path, model_name, weights_path, ablation, precision, depth):
    raw = pcio.read_point_cloud(path)
    pc = pcio.quantize(raw, precision)
    model = _resolve_model(model_name, weights_path, ablation)
    _, report = codec.encode(pc, depth, model)
    return {
        "file": Path(path).name,
        "model": model_name if ablation == "hybrid" else f"{model_name}/{ablation}",
        "depth": depth,
        "points": report.point_count,
        "bpp": round(report.bpp, 6),
        "seconds": round(report.seconds, 3),
    }


def cmd_bench(args):
    corpus = sorted(
        p for p in Path(args.corpus).iterdir() if p.suffix.lower() in (".ply", ".xyz")
    ) if Path(args.corpus).is_dir() else []
    if not corpus:
        raise ConfigError(f"no .ply/.xyz files in {args.corpus!r}")
    depths = (
        [int(v) for v in args.depths.split(",")] if args.depths else [args.precision]
    )
    model_names = [m.strip() for m in args.models.split(",") if m.strip()]
    jobs = []
    for path in corpus:
        for name in model_names:
            for depth in depths:
                jobs.append((path, name, args.weights, args.ablation, args.precision, depth))
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(lambda j: _bench_one(*j), jobs))
    else:
        rows = [_bench_one(*j) for j in jobs]

    header = ["file", "model", "depth", "points", "bpp", "seconds"]
    widths = [max(len(str(r[h])) for r in rows + [dict(zip(header, header))]) for h in header]
    print("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    for r in rows:
        print("  ".join(str(r[h]).ljust(w) for h, w in zip(header, widths)))
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=header)
            writer.writeheader()
            writer.writerows(rows)
    return 0


_COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "eval": cmd_eval,
    "inspect": cmd_inspect,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = _make_parser()
    try:
        args, remaining = parser.parse_known_args(argv)
        if remaining:
            raise ConfigError(f"unrecognized arguments: {' '.join(remaining)}")
        if args.config:
            defaults = _load_config_defaults(args.config)
            explicit = set(a.lstrip("-").replace("-", "_").split("=")[0]
                           for a in (argv or sys.argv[1:]) if a.startswith("--"))
            for key, value in defaults.items():
                if hasattr(args, key) and key not in explicit:
                    current = getattr(args, key)
                    cast = type(current) if current is not None and not isinstance(current, bool) else str
                    setattr(args, key, cast(value) if cast is not bool else value == "true")
        if getattr(args, "precision", None) is not None and not 1 <= args.precision <= 16:
            raise ConfigError(f"precision must be in [1, 16], got {args.precision}")
        if getattr(args, "depth", None) is not None:
            if not 1 <= args.depth <= getattr(args, "precision", 16):
                raise ConfigError(f"depth must be in [1, precision], got {args.depth}")
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"pvcodec: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParseError, FormatError) as exc:
        print(f"pvcodec: error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ModelError as exc:
        print(f"pvcodec: error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except OSError as exc:
        print(f"pvcodec: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PvcError as exc:  # anything else from the library
        print(f"pvcodec: error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


def entry():  # console_scripts hook
    sys.exit(main())


if __name__ == "__main__":
    entry()
