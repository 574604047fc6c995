"""seguq-export command line.

Exit codes: 0 success, 2 usage error, 3 missing assets or data problems.
"""

from __future__ import annotations

import argparse
import sys

from .datasets import load_dataset
from .errors import ScenarioError, SetupError
from .export import DEFAULT_SCALES, SCENARIOS, ScenarioConfig, export
from .models import MODEL_IDS, load_model


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seguq-export",
        description="Run a segmentation checkpoint under a perturbation scenario "
        "and write seguq-format probability stacks.",
    )
    parser.add_argument("--model", required=True, choices=MODEL_IDS)
    parser.add_argument(
        "--dataset",
        required=True,
        help="folder:<images_dir>:<labels_dir> or cityscapes:<root>",
    )
    parser.add_argument("--scenario", default="base", choices=SCENARIOS)
    parser.add_argument("--passes", type=int, default=10, help="passes for noise/drop (default 10)")
    parser.add_argument("--noise-std", type=float, default=0.01, help="std on normalized inputs")
    parser.add_argument(
        "--scales",
        default=",".join(str(s) for s in DEFAULT_SCALES),
        help="comma-separated scale factors",
    )
    parser.add_argument(
        "--input-noise-std", type=float, default=25.0, help="std on raw 0..255 intensities"
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--limit", type=int, default=None, help="export only the first N images")
    parser.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        scales = tuple(float(s) for s in args.scales.split(",") if s)
    except ValueError:
        parser.exit(2, f"{parser.prog}: bad --scales value {args.scales!r}\n")
    try:
        config = ScenarioConfig(
            scenario=args.scenario,
            passes=args.passes,
            noise_std=args.noise_std,
            scale_factors=scales,
            input_noise_std=args.input_noise_std,
            seed=args.seed,
        )
        model = load_model(args.model)
        dataset = load_dataset(args.dataset, limit=args.limit)
        manifest = export(model, dataset, config, args.out)
    except ScenarioError as e:
        parser.exit(2, f"{parser.prog}: usage error: {e}\n")
    except SetupError as e:
        print(f"{parser.prog}: setup error: {e}", file=sys.stderr)
        return 3
    print(f"exported {len(dataset.samples)} images to {manifest.parent} (manifest: {manifest})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
