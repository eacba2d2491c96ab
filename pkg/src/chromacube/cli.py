"""Command-line pipeline: simulate, reconstruct, evaluate, and inspect cubes.

Exit codes: 0 on success, 1 on usage errors (unknown flags, malformed
arguments), 2 on data errors (unreadable files, dimension mismatches).
Every output file is written atomically (temp file + rename), so two runs
of the same command sequence with the same seeds produce byte-identical
artifacts.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import cubeio
from .cube import DEFAULT_EPSILON, GuidanceCube, SpectralCube, decompose, recompose, spectral_correlation
from .errors import ChromacubeError, ConfigError
from .metrics import evaluate_cube
from .sensing import NoiseModel, add_noise, apply_forward, build_operator
from .solver import SolverConfig, run_hqs

SOLVERS = {"cid-tv": "tv", "cid-identity": "identity"}


class _UsageExit(Exception):
    def __init__(self, message: str):
        super().__init__(message)


class _Parser(argparse.ArgumentParser):
    """argparse variant that raises instead of exiting, so usage errors map to code 1."""

    def error(self, message):
        raise _UsageExit(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="chromacube", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a scene and its coded measurement")
    sim.add_argument("--scene", required=True, help="scene spec JSON file")
    sim.add_argument("--mask", required=True, help="coded mask (PGM or single-band cube)")
    sim.add_argument("--d", type=int, required=True, help="dispersion shift step in pixels")
    sim.add_argument("--axis", choices=("h", "v"), required=True)
    sim.add_argument("--sigma", type=float, default=0.0, help="measurement noise std dev")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--pan-noise", type=float, default=0.0, help="std dev of noise added to the PAN image")
    sim.add_argument("--out-meas", required=True)
    sim.add_argument("--out-pan", required=True)
    sim.add_argument("--out-truth", required=True)

    rec = sub.add_parser("reconstruct", help="recover a cube from a measurement")
    rec.add_argument("--meas", required=True)
    rec.add_argument("--pan", required=True, help="intensity guidance (single-band cube)")
    rec.add_argument("--mask", required=True)
    rec.add_argument("--d", type=int, required=True)
    rec.add_argument("--axis", choices=("h", "v"), required=True)
    rec.add_argument("--solver", choices=sorted(SOLVERS), default="cid-tv")
    rec.add_argument("--stages", type=int, default=30)
    rec.add_argument("--tau", type=float, default=1.0)
    rec.add_argument("--mu", type=float, default=1.0)
    rec.add_argument("--estimator", choices=("fixed", "residual"), default="residual")
    rec.add_argument("--sigma", type=float, default=0.0, help="noise std dev for the fixed estimator")
    rec.add_argument("--out", required=True)
    rec.add_argument("--trace", default=None, help="optional per-stage diagnostics CSV")

    ev = sub.add_parser("evaluate", help="score a reconstruction against a reference")
    ev.add_argument("--ref", required=True)
    ev.add_argument("--rec", required=True)
    ev.add_argument("--data-range", type=float, default=1.0)
    ev.add_argument("--out", required=True)

    dec = sub.add_parser("decompose", help="split a cube into intensity and chromaticity")
    dec.add_argument("--cube", required=True)
    dec.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    dec.add_argument("--out-intensity", required=True)
    dec.add_argument("--out-chroma", required=True)

    spc = sub.add_parser("spectra", help="mean spectrum over a rectangular region")
    spc.add_argument("--cube", required=True)
    spc.add_argument("--roi", required=True, help="x,y,w,h in pixels")
    spc.add_argument("--out", required=True)

    cor = sub.add_parser("corr", help="band-to-band correlation matrix")
    cor.add_argument("--cube", required=True)
    cor.add_argument("--out", required=True)
    return parser


def _parse_roi(text: str) -> tuple[int, int, int, int]:
    try:
        x, y, w, h = (int(part) for part in text.split(","))
    except ValueError:
        raise _UsageExit(f"--roi expects x,y,w,h integers, got {text!r}") from None
    if w <= 0 or h <= 0:
        raise _UsageExit(f"roi width and height must be positive, got {text!r}")
    return x, y, w, h


def _cmd_simulate(args) -> None:
    if args.sigma < 0 or args.pan_noise < 0:
        raise ConfigError("noise standard deviations must be >= 0")
    with open(args.scene, "r", encoding="utf-8") as handle:
        spec = cubeio.SceneSpec.from_json(handle.read())
    truth = cubeio.generate_scene(spec)
    mask = cubeio.read_mask(args.mask)
    intensity, chroma = decompose(truth, epsilon=0.0)
    op = build_operator(mask, GuidanceCube.from_intensity(intensity), args.d, args.axis, truth.bands)
    y = apply_forward(op, chroma)
    if args.sigma > 0:
        y = add_noise(y, NoiseModel(np.full(y.shape, args.sigma)), args.seed)
    pan = intensity
    if args.pan_noise > 0:
        pan = add_noise(pan, NoiseModel(np.full(pan.shape, args.pan_noise)), args.seed + 1)
        pan = np.maximum(pan, 0.0)
    cubeio.plane_write(y, args.out_meas)
    cubeio.plane_write(pan, args.out_pan)
    cubeio.cube_write(truth, args.out_truth)


def _cmd_reconstruct(args) -> None:
    if args.d <= 0:
        raise ConfigError("reconstruct requires d > 0 (band count is inferred from the dispersion extent)")
    y = cubeio.plane_read(args.meas)
    pan = cubeio.plane_read(args.pan)
    mask = cubeio.read_mask(args.mask)
    if args.axis == "h":
        bands_extent = y.shape[1] - mask.width
    else:
        bands_extent = y.shape[0] - mask.height
    if bands_extent < 0 or bands_extent % args.d:
        raise ConfigError(
            f"measurement extent {bands_extent} is not a multiple of shift step {args.d}"
        )
    bands = bands_extent // args.d + 1
    op = build_operator(mask, GuidanceCube.from_intensity(pan), args.d, args.axis, bands)
    config = SolverConfig(
        stages=args.stages,
        mu=args.mu,
        tau=args.tau,
        denoiser=SOLVERS[args.solver],
        noise_estimator=args.estimator,
        fixed_sigma=args.sigma,
    )
    chroma, trace = run_hqs(y, op, config)
    cubeio.cube_write(recompose(chroma, pan), args.out)
    if args.trace:
        lines = ["stage,residual_norm,data_norm,sigma_mean,omega"]
        rows = zip(trace.residual_norms, trace.data_norms, trace.sigma_means, trace.omegas)
        for stage, (res, data, sig, omega) in enumerate(rows, start=1):
            lines.append(f"{stage},{res!r},{data!r},{sig!r},{omega!r}")
        cubeio.atomic_write_text(args.trace, "\n".join(lines) + "\n")


def _cmd_evaluate(args) -> None:
    ref = cubeio.cube_read(args.ref)
    rec = cubeio.cube_read(args.rec)
    report = evaluate_cube(ref, rec, data_range=args.data_range)
    cubeio.atomic_write_text(args.out, report.to_csv())


def _cmd_decompose(args) -> None:
    cube = cubeio.cube_read(args.cube)
    intensity, chroma = decompose(cube, epsilon=args.epsilon)
    cubeio.plane_write(intensity, args.out_intensity)
    cubeio.cube_write(chroma, args.out_chroma)


def _cmd_spectra(args) -> None:
    cube = cubeio.cube_read(args.cube)
    x, y, w, h = _parse_roi(args.roi)
    if x < 0 or y < 0 or x + w > cube.width or y + h > cube.height:
        raise ConfigError(
            f"roi {args.roi} falls outside a {cube.height} x {cube.width} cube"
        )
    region = cube.data[:, y : y + h, x : x + w]
    lines = ["band,mean"]
    for lam in range(cube.bands):
        lines.append(f"{lam},{float(region[lam].mean())!r}")
    cubeio.atomic_write_text(args.out, "\n".join(lines) + "\n")


def _cmd_corr(args) -> None:
    cube = cubeio.cube_read(args.cube)
    corr = spectral_correlation(cube)
    header = "band," + ",".join(f"band_{j}" for j in range(cube.bands))
    lines = [header]
    for i in range(cube.bands):
        lines.append(f"{i}," + ",".join(repr(float(v)) for v in corr[i]))
    cubeio.atomic_write_text(args.out, "\n".join(lines) + "\n")


_COMMANDS = {
    "simulate": _cmd_simulate,
    "reconstruct": _cmd_reconstruct,
    "evaluate": _cmd_evaluate,
    "decompose": _cmd_decompose,
    "spectra": _cmd_spectra,
    "corr": _cmd_corr,
}


def cli_main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageExit as err:
        print(f"error: {err}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        _COMMANDS[args.command](args)
    except _UsageExit as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except (ChromacubeError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    raise SystemExit(cli_main())


if __name__ == "__main__":
    main()
