"""Command-line interface.

Subcommands: generate, stream, make-atlas, segment, evaluate.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import socket
import sys
from pathlib import Path

from .bayes import build_atlas, em_segment
from .config import ConfigError, GenConfig, load_config
from .generator import generate_stream, with_seed
from .metrics import dice_report
from .nifti import NiftiError, read_atlas, read_volume, write_atlas, write_volume
from .stream import StreamError, encode_record
from .volume import LabelMap, Volume

USAGE_ERROR = 1
DATA_ERROR = 2


class CliError(Exception):
    """Data-level CLI failure (exit 2)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _load_maps(paths: list[str]) -> list[LabelMap]:
    files: list[Path] = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            found = sorted(
                q for q in path.iterdir() if q.name.endswith((".nii", ".nii.gz"))
            )
            if not found:
                raise CliError(f"no NIfTI files found in directory {path}")
            files.extend(found)
        else:
            files.append(path)
    maps = []
    for f in files:
        loaded = read_volume(f)
        if not isinstance(loaded, LabelMap):
            raise CliError(f"{f} is not a label map (integer data, trivial scaling)")
        maps.append(loaded)
    return maps


def _load_config(path: str | None) -> GenConfig:
    return load_config(path) if path else GenConfig()


def _cmd_generate(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    maps = _load_maps(args.maps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for pair in generate_stream(maps, cfg, count=args.count, workers=args.workers):
        n = pair.record.sample_index
        write_volume(pair.image, out / f"pair_{n:05d}_image.nii.gz")
        write_volume(pair.target, out / f"pair_{n:05d}_labels.nii.gz")
        with open(out / f"pair_{n:05d}_params.json", "w") as fp:
            json.dump(pair.record.to_json_dict(), fp)
    return 0


def _stream_to(fp, maps, cfg, count, workers) -> None:
    for pair in generate_stream(maps, cfg, count=count, workers=workers):
        fp.write(encode_record(pair))
        fp.flush()


def _cmd_stream(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg = with_seed(cfg, args.seed)
    maps = _load_maps(args.maps)
    if args.stdout:
        _stream_to(sys.stdout.buffer, maps, cfg, args.count, args.workers)
        return 0

    host, _, port = args.listen.rpartition(":")
    try:
        port = int(port)
    except ValueError:
        raise CliError(f"bad listen address {args.listen!r} (want host:port)")
    server = socket.create_server((host or "127.0.0.1", port))
    try:
        while True:
            conn, _ = server.accept()
            try:
                with conn, conn.makefile("wb") as fp:
                    _stream_to(fp, maps, cfg, args.count, args.workers)
                return 0
            except (BrokenPipeError, ConnectionResetError):
                if args.count is not None:
                    return 0
                continue  # unbounded: serve the next consumer
    finally:
        server.close()


def _cmd_make_atlas(args) -> int:
    maps = _load_maps(args.maps)
    atlas = build_atlas(maps, smoothing_sigma=args.sigma)
    write_atlas(atlas, args.out)
    return 0


def _cmd_segment(args) -> int:
    loaded = read_volume(args.image)
    image = loaded.as_volume() if isinstance(loaded, LabelMap) else loaded
    atlas = read_atlas(args.atlas)
    if image.dims != atlas.dims:
        raise CliError(
            f"dim mismatch: image {image.dims} vs atlas {atlas.dims}"
        )
    result = em_segment(
        image,
        atlas,
        max_iter=args.max_iter,
        tol=args.tol,
        bias=args.bias == "on",
    )
    write_volume(result.map_labels, args.out)
    return 0


def _cmd_evaluate(args) -> int:
    pred = read_volume(args.pred)
    truth = read_volume(args.truth)
    if not isinstance(pred, LabelMap) or not isinstance(truth, LabelMap):
        raise CliError("evaluate needs two label maps")
    labels = None
    if args.labels:
        labels = [int(tok) for tok in args.labels.split(",") if tok]
    report = dice_report(pred, truth, labels=labels)
    report.to_csv(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="synthmri", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write image/target NIfTI pairs")
    gen.add_argument("--maps", nargs="+", required=True, help="label-map files or directory")
    gen.add_argument("--config", help="JSON config file (defaults when omitted)")
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--workers", type=int, default=1)
    gen.set_defaults(func=_cmd_generate)

    st = sub.add_parser("stream", help="emit binary training-pair records")
    st.add_argument("--maps", nargs="+", required=True)
    st.add_argument("--config")
    st.add_argument("--count", type=int, default=None)
    st.add_argument("--seed", type=int)
    st.add_argument("--workers", type=int, default=1)
    dest = st.add_mutually_exclusive_group(required=True)
    dest.add_argument("--listen", help="host:port to serve one consumer at a time")
    dest.add_argument("--stdout", action="store_true")
    st.set_defaults(func=_cmd_stream)

    mk = sub.add_parser("make-atlas", help="build a probabilistic atlas from label maps")
    mk.add_argument("--maps", nargs="+", required=True)
    mk.add_argument("--sigma", type=float, required=True)
    mk.add_argument("--out", required=True)
    mk.set_defaults(func=_cmd_make_atlas)

    seg = sub.add_parser("segment", help="EM segmentation with an atlas prior")
    seg.add_argument("--image", required=True)
    seg.add_argument("--atlas", required=True)
    seg.add_argument("--bias", choices=["on", "off"], default="off")
    seg.add_argument("--max-iter", type=int, default=50)
    seg.add_argument("--tol", type=float, default=1e-6)
    seg.add_argument("--out", required=True)
    seg.set_defaults(func=_cmd_segment)

    ev = sub.add_parser("evaluate", help="Dice report between two label maps")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--labels", help="comma-separated label subset")
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=_cmd_evaluate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (CliError, ConfigError, NiftiError, StreamError, ValueError) as e:
        print(f"synthmri: error: {e}", file=sys.stderr)
        return DATA_ERROR
    except OSError as e:
        print(f"synthmri: error: {e}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
