"""Command-line entry point: ``selfiegen <subcommand> [options]``.

Exit codes: 0 success, 1 usage/config error, 2 finished with skipped items.
"""

import argparse
import logging
import sys

from . import commands
from .config import ConfigError, PipelineConfig
from .errors import SelfieGenError

log = logging.getLogger("selfiegen")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="JSON config file; flags override its values")
    shared.add_argument("--seed", type=int, dest="rng_seed")
    shared.add_argument("--jobs", type=int, help="worker processes (default 1)")
    shared.add_argument("--out", help="output directory")
    shared.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="selfiegen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-pairs", parents=[shared],
                       help="distorted/undistorted face pairs from density volumes")
    p.add_argument("--volumes", dest="volumes_dir")
    p.add_argument("--iso-level", type=float)
    p.add_argument("--f0", type=float, dest="focal_f0")
    p.add_argument("--distances", type=_floats, dest="input_distances", help="comma-separated")
    p.add_argument("--gt-distance", type=float)
    p.add_argument("--resolution", type=int)

    p = sub.add_parser("simulate-selfies", parents=[shared],
                       help="face/upper/lower/shoes selfies from full-body images")
    p.add_argument("--images", dest="images_dir")
    p.add_argument("--typical", dest="typical_dir")
    p.add_argument("--size", type=int, dest="selfie_size")
    p.add_argument("--confidence", type=float, dest="confidence_threshold")

    p = sub.add_parser("rank-poses", parents=[shared], help="rank reference photos by clothing match")
    p.add_argument("--selfie-upper", dest="selfie_upper_map")
    p.add_argument("--selfie-lower", dest="selfie_lower_map")
    p.add_argument("--selfie-shoes", dest="selfie_shoes_map")
    p.add_argument("--collection", dest="collection_dir")
    p.add_argument("--taxonomy")
    p.add_argument("--selfie-min-pixels", type=int)
    p.add_argument("--reference-min-pixels", type=int)
    p.add_argument("--factor", type=float, dest="bbox_factor")

    p = sub.add_parser("canny-target", parents=[shared], help="edge target from a semantic map")
    p.add_argument("--map", dest="semantic_map")
    p.add_argument("--taxonomy")
    p.add_argument("--low", type=float, dest="canny_low")
    p.add_argument("--high", type=float, dest="canny_high")

    p = sub.add_parser("make-mask", parents=[shared], help="inpainting or dilated foreground mask")
    p.add_argument("--map", dest="semantic_map")
    p.add_argument("--taxonomy")
    p.add_argument("--kind", choices=("bbox", "foreground"), default="bbox")
    p.add_argument("--factor", type=float, dest="bbox_factor")
    p.add_argument("--radius", type=int, dest="dilate_radius")

    p = sub.add_parser("augment", parents=[shared], help="fine-tuning or DreamBooth augmentation sets")
    p.add_argument("--mode", choices=("finetune", "dreambooth"), default="finetune")
    p.add_argument("--background")
    p.add_argument("--pool", dest="pool_dir")
    p.add_argument("--taxonomy")
    p.add_argument("--face", dest="face_image")
    p.add_argument("--upper", dest="upper_image")
    p.add_argument("--lower", dest="lower_image")
    p.add_argument("--shoes", dest="shoes_image")
    p.add_argument("--pool-size", type=int)
    p.add_argument("--count", type=int, help="outputs (finetune) or outputs per source (dreambooth)")
    p.add_argument("--face-range", type=_ints, dest="face_res_range")
    p.add_argument("--shoes-range", type=_ints, dest="shoes_res_range")
    p.add_argument("--no-center-crop", action="store_false", dest="center_crop", default=None)
    return parser


_NOT_CONFIG = {"command", "config", "verbose", "kind", "mode", "count"}


def make_config(args):
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    values = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    if getattr(args, "count", None) is not None:
        key = "finetune_outputs" if args.mode == "finetune" else "dreambooth_outputs"
        values[key] = args.count
    config = config.override(**values)
    config.check_paths()
    return config


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = make_config(args)
        if args.command == "gen-pairs":
            manifest = commands.cmd_gen_pairs(config)
        elif args.command == "simulate-selfies":
            manifest = commands.cmd_simulate_selfies(config)
        elif args.command == "rank-poses":
            manifest = commands.cmd_rank_poses(config)
        elif args.command == "canny-target":
            manifest = commands.cmd_canny_target(config)
        elif args.command == "make-mask":
            manifest = commands.cmd_make_mask(config, args.kind)
        else:
            manifest = commands.cmd_augment(config, args.mode)
    except (ConfigError, SelfieGenError, OSError) as exc:
        print(f"selfiegen {args.command}: error: {exc}", file=sys.stderr)
        return 1
    n_files = len(manifest.files())
    print(f"{args.command}: wrote {n_files} file(s) to {config.out}"
          + (f", skipped {len(manifest.skipped)}" if manifest.skipped else ""))
    return 2 if manifest.skipped else 0


if __name__ == "__main__":
    sys.exit(main())
