import argparse
import dataclasses
import logging
import os
import sys
from typing import List, Optional

import dotenv
import numpy as np

from convex_shape_seg.instruments import SegmentationInstruments
from convex_shape_seg.modules import file, phantom, solver
from convex_shape_seg.modules.solver import SolverConfig
from convex_shape_seg.types import RunReport

# ---------------- Environment ----------------

dotenv.load_dotenv()

CONFIG_ENV = "CONVEX_SEG_CONFIG"

logger = logging.getLogger(__name__)


# ---------------- Config ----------------


def load_config(path: Optional[str]) -> SolverConfig:
    """
    SolverConfig from a flat `key = value` file, or the defaults when no path is given.
    """
    if not path:
        return SolverConfig()
    if not os.path.isfile(path):
        raise ValueError(f"config file '{path}' not found")
    return SolverConfig.from_mapping(dotenv.dotenv_values(path))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segment",
        description="Segment one convex object from an image given object/background label masks.",
    )
    parser.add_argument("--image", required=True, help="8-bit PGM/PPM/PNG input image")
    parser.add_argument("--fg-mask", required=True, help="object labels, nonzero = labeled")
    parser.add_argument("--bg-mask", help="background labels, nonzero = labeled")
    parser.add_argument("--out-mask", required=True, help="output mask, object = 0 / background = 255")
    parser.add_argument("--config", help=f"key = value solver config (default: ${CONFIG_ENV})")
    parser.add_argument("--overlay", help="RGB overlay with the object boundary in red")
    parser.add_argument("--log-csv", help="per-iteration CSV log")
    parser.add_argument("--seed", type=int, help="RNG seed for the mixture fits, overrides the config")
    parser.add_argument("--report-json", help="run report, YAML when the name ends in .yml/.yaml")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def _print_report(report: RunReport, out_mask: str):
    if report.stop_reason == "tolerance":
        print(f"✅ Converged after {report.iterations} iterations ({report.seconds:.1f}s)")
    else:
        print(f"⚠️ Stopped at the iteration cap ({report.iterations}) without reaching the tolerance")
    print(f"   object pixels: {report.object_pixels}, convexity score: {report.convexity_score:.4f}")
    if report.rounded_pixels:
        print(f"   rounded to the raster hull: {report.rounded_pixels} pixels added")
    print(f"✅ Mask written to {out_mask}")


# ---------------- Entry points ----------------


def run_cli(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = load_config(args.config or os.environ.get(CONFIG_ENV))
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
        logger.info(f"solver config: {config.to_dict()}")

        image = file.load_image(args.image)
        height, width = image.shape[:2]
        R_ob, R_bg = file.load_labels(args.fg_mask, args.bg_mask, (width, height))
        print(f"✅ Loaded {width}x{height} image, {len(R_ob)} object / {len(R_bg)} background labels")

        with SegmentationInstruments(
            args.out_mask,
            overlay=args.overlay,
            log_csv=args.log_csv,
            report=args.report_json,
            radii=list(config.radii),
        ) as instruments:
            mask, report = solver.run(image, R_ob, R_bg, config, on_iteration=instruments.record)
            instruments.save(image, mask, report)

        _print_report(report, instruments.out_mask)
        return 0
    except (ValueError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return 1


def main():
    sys.exit(run_cli())


def build_phantom_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phantom",
        description="Write a synthetic image, its label masks and the ground truth to a directory.",
    )
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--shape", default="disc", choices=phantom.SHAPES)
    parser.add_argument("--width", type=int, default=64)
    parser.add_argument("--height", type=int, default=64)
    parser.add_argument("--radius", type=float, default=15.0)
    parser.add_argument("--fg", type=float, default=200.0, help="object intensity")
    parser.add_argument("--bg", type=float, default=50.0, help="background intensity")
    parser.add_argument("--noise", type=float, default=0.0, help="Gaussian noise std")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--ext", default="png", choices=("png", "pgm"))
    return parser


def run_phantom(argv: Optional[List[str]] = None) -> int:
    parser = build_phantom_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2

    try:
        spec = phantom.PhantomSpec(
            shape=args.shape,
            width=args.width,
            height=args.height,
            radius=args.radius,
            fg_intensity=args.fg,
            bg_intensity=args.bg,
            noise_std=args.noise,
            seed=args.seed,
        )
        image, fg, bg, truth = phantom.gen_phantom(spec)

        def path(name):
            return os.path.join(args.out_dir, f"{name}.{args.ext}")

        # label masks are "nonzero = labeled", so they are written inverted relative to u
        file.write_grayscale(path("image"), image)
        file.write_grayscale(path("fg"), fg.astype(np.uint8) * 255)
        file.write_grayscale(path("bg"), bg.astype(np.uint8) * 255)
        file.write_mask(path("truth"), truth)
    except (ValueError, OSError) as e:
        print(f"❌ {e}", file=sys.stderr)
        return 1

    print(f"✅ Wrote {args.shape} phantom to {args.out_dir}")
    return 0


def phantom_main():
    sys.exit(run_phantom())


if __name__ == "__main__":
    main()
