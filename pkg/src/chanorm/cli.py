"""Command-line front end: extraction, fitting, gradient checks, rendering."""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

from . import __version__
from .dsp import FramingConfig, load_wav
from .errors import ChanormError, InvalidParameterError
from .fitting import FitConfig, fit, gradcheck, make_gain_mismatch_task, ProxyPair
from .pipeline import (
    FrontendParams,
    extract_features,
    feature_bytes,
    kernel_init,
    load_config,
    load_params,
    save_params,
    variant_by_name,
    write_features,
)
from .render import pgm_bytes, render_figure, render_loss_curve

GRADCHECK_THRESHOLDS = {
    "pcen.alpha": 1e-4,
    "pcen.delta": 1e-4,
    "pcen.r": 1e-4,
    "pcen.input": 1e-4,
    "pcmn.weights": 1e-6,
    "pcmn.bias": 1e-6,
    "pcmn.input": 1e-6,
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _sibling_tempfile(path: str) -> str:
    """Temp file in the target's directory, with umask-respecting permissions."""
    fd, tmp_path = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), prefix=".chanorm-")
    os.close(fd)
    umask = os.umask(0)
    os.umask(umask)
    os.chmod(tmp_path, 0o666 & ~umask)
    return tmp_path


def _atomic_write(path: str, blob: bytes) -> None:
    """Write via a sibling temp file and rename, so partial output never lands."""
    tmp_path = _sibling_tempfile(path)
    try:
        with open(tmp_path, "wb") as handle:
            handle.write(blob)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def _add_shared_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--frontend",
        required=True,
        choices=["log-cmn", "pcen", "log-pcmn", "pcen-pcmn", "apcen", "log-apcmn", "apcen-apcmn"],
        help="front-end variant",
    )
    parser.add_argument("--params", metavar="FILE", help="parameter file (JSON)")
    parser.add_argument("--config", metavar="FILE", help="framing config file (JSON)")
    parser.add_argument("--no-agc", action="store_true", help="disable the gain-control stage")
    parser.add_argument("--no-drc", action="store_true", help="disable the compression stage")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chanorm", description="Channel-normalization acoustic front-ends")
    parser.add_argument("--version", action="version", version=f"chanorm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_extract = sub.add_parser("extract", help="extract features from WAV files")
    _add_shared_flags(p_extract)
    p_extract.add_argument("--input", action="append", required=True, metavar="WAV")
    p_extract.add_argument("--output", action="append", metavar="FILE")
    p_extract.add_argument("--outdir", metavar="DIR", help="derive output names under DIR")
    p_extract.add_argument("--format", choices=["bin", "csv"], default="bin")
    p_extract.add_argument("--jobs", type=int, default=1, metavar="N")
    p_extract.set_defaults(func=cmd_extract)

    p_fit = sub.add_parser("fit", help="fit trainable parameters on clean/degraded pairs")
    _add_shared_flags(p_fit)
    p_fit.add_argument("--seed", type=int, default=0)
    p_fit.add_argument("--steps", type=int, default=500)
    p_fit.add_argument("--lr", type=float, default=0.05)
    p_fit.add_argument("--pairs", type=int, default=20, help="synthetic pair count")
    p_fit.add_argument("--clean", action="append", metavar="WAV", help="clean WAV (repeatable)")
    p_fit.add_argument("--degraded", action="append", metavar="WAV", help="degraded WAV (repeatable)")
    p_fit.add_argument("--out-params", metavar="FILE", help="write fitted parameters here")
    p_fit.add_argument("--report", metavar="FILE", help="JSON-lines fit report")
    p_fit.add_argument("--figure", metavar="FILE", help="loss-curve figure (png/pdf)")
    p_fit.set_defaults(func=cmd_fit)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient check")
    _add_shared_flags(p_grad)
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--frames", type=int, default=None, metavar="T")
    p_grad.add_argument("--channels", type=int, default=None, metavar="F")
    p_grad.set_defaults(func=cmd_gradcheck)

    p_render = sub.add_parser("render", help="render a feature spectrogram image")
    _add_shared_flags(p_render)
    p_render.add_argument("--input", required=True, metavar="WAV")
    p_render.add_argument("--output", required=True, metavar="PGM")
    p_render.add_argument("--figure", metavar="FILE", help="also write a matplotlib figure")
    p_render.set_defaults(func=cmd_render)

    p_init = sub.add_parser("init-params", help="write kernel-initialized parameters")
    _add_shared_flags(p_init)
    p_init.add_argument("--output", required=True, metavar="FILE")
    p_init.set_defaults(func=cmd_init_params)

    return parser


def _cli_variant(args):
    """Variant lookup where a bad flag combination counts as a usage error."""
    try:
        return variant_by_name(args.frontend, args.no_agc, args.no_drc)
    except InvalidParameterError as exc:
        raise _UsageError(str(exc)) from exc


def _resolve_config(args):
    if args.config:
        return load_config(args.config)
    return FramingConfig(), None


def _resolve_params(args, n_mels: int) -> FrontendParams:
    variant = _cli_variant(args)
    if args.params:
        params = load_params(args.params)
    else:
        params = kernel_init(variant, n_mels)
    params.require(variant)
    return params


def cmd_extract(args) -> int:
    variant = _cli_variant(args)
    framing, cmn = _resolve_config(args)
    params = _resolve_params(args, framing.n_mels)
    inputs = args.input
    if args.output and args.outdir:
        raise _UsageError("--output and --outdir are mutually exclusive")
    if args.output:
        if len(args.output) != len(inputs):
            raise _UsageError(
                f"got {len(inputs)} --input but {len(args.output)} --output flags"
            )
        outputs = args.output
    elif args.outdir:
        suffix = ".feat" if args.format == "bin" else ".csv"
        outputs = [
            os.path.join(args.outdir, os.path.splitext(os.path.basename(p))[0] + suffix)
            for p in inputs
        ]
        os.makedirs(args.outdir, exist_ok=True)
    else:
        raise _UsageError("either --output per input or --outdir is required")

    def one(src: str, dst: str) -> None:
        features = extract_features(load_wav(src), variant, params, framing, cmn)
        if args.format == "bin":
            _atomic_write(dst, feature_bytes(features.values))
        else:
            tmp = _sibling_tempfile(dst)
            write_features(features.values, tmp, fmt="csv")
            os.replace(tmp, dst)

    if args.jobs > 1 and len(inputs) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            for future in [pool.submit(one, s, d) for s, d in zip(inputs, outputs)]:
                future.result()
    else:
        for src, dst in zip(inputs, outputs):
            one(src, dst)
    return 0


def cmd_fit(args) -> int:
    variant = _cli_variant(args)
    if not variant.trainable:
        raise _UsageError(f"--frontend {args.frontend} has no trainable blocks; use an adaptive one")
    framing, _ = _resolve_config(args)
    params = _resolve_params(args, framing.n_mels)
    if bool(args.clean) != bool(args.degraded):
        raise _UsageError("--clean and --degraded must be given together")
    if args.clean:
        if len(args.clean) != len(args.degraded):
            raise _UsageError("--clean and --degraded counts differ")
        pairs = [ProxyPair(load_wav(c), load_wav(d)) for c, d in zip(args.clean, args.degraded)]
    else:
        pairs = make_gain_mismatch_task(
            seed=args.seed, n_pairs=args.pairs, sample_rate=framing.sample_rate
        )
    result = fit(
        pairs,
        variant,
        params,
        FitConfig(learning_rate=args.lr, steps=args.steps, seed=args.seed),
        framing,
    )
    print(
        f"fit {variant.tag}: loss {result.initial_loss:.6g} -> {result.final_loss:.6g} "
        f"over {args.steps} steps"
    )
    if args.report:
        _atomic_write(args.report, ("\n".join(result.report_lines()) + "\n").encode("utf-8"))
    if args.out_params:
        tmp = _sibling_tempfile(args.out_params)
        save_params(result.params, tmp)
        os.replace(tmp, args.out_params)
    if args.figure:
        render_loss_curve(result.steps, args.figure)
    return 0


def cmd_gradcheck(args) -> int:
    variant = _cli_variant(args)
    if not variant.trainable:
        raise _UsageError(f"--frontend {args.frontend} has no trainable blocks; use an adaptive one")
    report = gradcheck(variant, seed=args.seed, n_frames=args.frames, n_channels=args.channels)
    ok = True
    for key, entry in report.items():
        threshold = GRADCHECK_THRESHOLDS[key]
        passed = entry.max_rel_err < threshold
        ok = ok and passed
        print(
            f"{key}: max rel err {entry.max_rel_err:.3e} "
            f"(threshold {threshold:.0e}, |grad|max {entry.max_abs_analytic:.3e}) "
            f"{'ok' if passed else 'FAIL'}"
        )
    print(f"gradcheck {variant.tag}: {'ok' if ok else 'FAIL'}")
    return 0 if ok else 2


def cmd_render(args) -> int:
    variant = _cli_variant(args)
    framing, cmn = _resolve_config(args)
    params = _resolve_params(args, framing.n_mels)
    features = extract_features(load_wav(args.input), variant, params, framing, cmn)
    _atomic_write(args.output, pgm_bytes(features.values))
    if args.figure:
        render_figure(features.values, args.figure, title=variant.tag)
    return 0


def cmd_init_params(args) -> int:
    variant = _cli_variant(args)
    framing, _ = _resolve_config(args)
    params = kernel_init(variant, framing.n_mels)
    tmp = _sibling_tempfile(args.output)
    save_params(params, tmp)
    os.replace(tmp, args.output)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"chanorm: usage error: {exc}", file=sys.stderr)
        return 1
    except (ChanormError, OSError) as exc:
        print(f"chanorm: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
