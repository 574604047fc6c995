"""Command-line interface.

Subcommands: ``synth`` (generate a synthetic dataset), ``uncertainty``
(per-image maps), ``eval`` (full report), ``viz`` (detection overlays) and
``hist`` (pooled cumulative histogram curves).

Exit codes: 0 success, 2 usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import pipeline, tensor_io, synth as synthmod
from .errors import CliUsageError, ConfigError, SegUQError
from .evaluation import DEFAULT_ECE_BINS
from .thresholding import ThresholdPolicy
from .types import DatasetManifest, ManifestEntry, Scenario


def _policy_arg(spec: str) -> ThresholdPolicy:
    try:
        return ThresholdPolicy.parse(spec)
    except ConfigError as e:
        raise argparse.ArgumentTypeError(
            f"{e} (allowed: largest-diff[:L=<levels>], max-frac:<budget>)"
        ) from e


def _add_common(parser: argparse.ArgumentParser, with_threshold: bool = True) -> None:
    parser.add_argument("--manifest", required=True, help="dataset manifest JSON")
    parser.add_argument(
        "--metric",
        default="entropy",
        choices=pipeline.METRICS,
        help="uncertainty metric to compute",
    )
    if with_threshold:
        parser.add_argument(
            "--threshold",
            type=_policy_arg,
            default=ThresholdPolicy("max-frac", budget=0.1),
            help="threshold policy: largest-diff[:L=100] or max-frac:<budget> (default max-frac:0.1)",
        )
    parser.add_argument(
        "--normalize",
        default="unit",
        choices=("unit", "none"),
        help="min-max normalize maps per image before thresholding (default unit)",
    )
    parser.add_argument("--jobs", type=int, default=1, help="worker threads (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seguq",
        description="Uncertainty maps and misclassification detection for segmentation outputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset with known structure")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--images", type=int, default=4)
    p_synth.add_argument("--height", type=int, default=64)
    p_synth.add_argument("--width", type=int, default=64)
    p_synth.add_argument("--classes", type=int, default=5)
    p_synth.add_argument("--passes", type=int, default=1, help="predictions per image")
    p_synth.add_argument(
        "--scenario",
        choices=[s.value for s in Scenario],
        default=None,
        help="scenario tag (default: base for 1 pass, noise otherwise)",
    )
    p_synth.add_argument("--mis-rate", type=float, default=0.25)
    p_synth.add_argument("--gamma", type=float, default=1.0, help="informativeness in [0, 1]")
    p_synth.add_argument("--regions", type=int, default=8)
    p_synth.add_argument("--ignore-rate", type=float, default=0.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument(
        "--no-images", action="store_true", help="skip writing RGB source images"
    )

    p_unc = sub.add_parser("uncertainty", help="compute and save per-image uncertainty maps")
    _add_common(p_unc, with_threshold=False)
    p_unc.add_argument("--out", required=True, help="output directory")
    p_unc.add_argument("--png", action="store_true", help="also write grayscale PNG previews")

    p_eval = sub.add_parser("eval", help="evaluate detection and quality metrics")
    _add_common(p_eval)
    p_eval.add_argument("--out", required=True, help="output directory for report.json/report.csv")
    p_eval.add_argument("--ece-bins", type=int, default=DEFAULT_ECE_BINS)
    p_eval.add_argument("--save-overlays", action="store_true")
    p_eval.add_argument("--overlay-background", choices=("black", "image"), default="black")
    p_eval.add_argument("--save-hist", action="store_true")
    p_eval.add_argument("--hist-bins", type=int, default=50)
    p_eval.add_argument(
        "--stamp", action="store_true", help="embed a timestamp (breaks byte-determinism)"
    )

    p_viz = sub.add_parser("viz", help="render detection overlays")
    _add_common(p_viz)
    p_viz.add_argument("--out", required=True, help="output directory")
    p_viz.add_argument("--background", choices=("black", "image"), default="black")

    p_hist = sub.add_parser("hist", help="pooled cumulative histogram curves as CSV")
    _add_common(p_hist, with_threshold=False)
    p_hist.add_argument("--out", required=True, help="output CSV path")
    p_hist.add_argument("--bins", type=int, default=50)

    return parser


def _options_from_args(args: argparse.Namespace) -> pipeline.EvalOptions:
    return pipeline.EvalOptions(
        metric=args.metric,
        policy=getattr(args, "threshold", ThresholdPolicy("max-frac", budget=0.1)),
        normalize=args.normalize,
        ece_bins=getattr(args, "ece_bins", DEFAULT_ECE_BINS),
        jobs=args.jobs,
        hist_bins=getattr(args, "hist_bins", getattr(args, "bins", 50)),
        save_overlays=getattr(args, "save_overlays", False),
        save_hist=getattr(args, "save_hist", False),
        overlay_background=getattr(args, "overlay_background", getattr(args, "background", "black")),
        stamp=getattr(args, "stamp", False),
    )


def _cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    (out / "probs").mkdir(parents=True, exist_ok=True)
    if not args.no_images:
        (out / "images").mkdir(parents=True, exist_ok=True)
    scenario = Scenario(args.scenario) if args.scenario else None
    if scenario is Scenario.BASE and args.passes != 1:
        raise CliUsageError("--scenario base requires --passes 1")
    if scenario is not None and scenario is not Scenario.BASE and args.passes < 2:
        raise CliUsageError(f"--scenario {scenario.value} requires --passes >= 2")

    entries = []
    for idx in range(args.images):
        config = synthmod.SynthConfig(
            height=args.height,
            width=args.width,
            num_classes=args.classes,
            num_predictions=args.passes,
            mis_rate=args.mis_rate,
            informativeness=args.gamma,
            region_count=args.regions,
            ignore_rate=args.ignore_rate,
            seed=args.seed + idx,
        )
        result = synthmod.generate(config, scenario)
        image_id = f"img{idx:03d}"
        tensor_io.save_label_map(result.labels, out / "labels" / f"{image_id}.png")
        pred_paths = []
        for i, pmap in enumerate(result.stack.predictions):
            rel = f"probs/{image_id}_p{i}.npy"
            tensor_io.save_probability_map(pmap, out / rel)
            pred_paths.append(rel)
        image_path = None
        if not args.no_images:
            image_path = f"images/{image_id}.png"
            _write_synth_image(result.region_labels, args.classes, args.seed + idx, out / image_path)
        entries.append(
            ManifestEntry(
                image_id=image_id,
                label_path=f"labels/{image_id}.png",
                prediction_paths=tuple(pred_paths),
                scenario=result.stack.scenario,
                image_path=image_path,
            )
        )
    manifest = DatasetManifest(
        entries=tuple(entries),
        class_names=tuple(f"class_{i:02d}" for i in range(args.classes)),
        ignore_index=synthmod.IGNORE_INDEX,
        root=str(out),
    )
    tensor_io.save_manifest(manifest, out / "manifest.json")
    print(f"wrote {args.images} images to {out} (manifest.json, labels/, probs/)")
    return 0


def _write_synth_image(region: np.ndarray, num_classes: int, seed: int, path: Path) -> None:
    # Class-dependent shading plus mild noise so edges track label boundaries.
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, 0xF00D))))
    base = (region.astype(np.float64) + 1.0) / (num_classes + 1.0)
    chans = np.stack([base * 0.95, base, np.minimum(base * 1.05, 1.0)], axis=-1)
    noisy = np.clip(chans + rng.normal(0.0, 0.02, chans.shape), 0.0, 1.0)
    from .viz import save_rgb

    save_rgb(np.round(noisy * 255.0).astype(np.uint8), path)


def _cmd_uncertainty(args: argparse.Namespace) -> int:
    written = pipeline.run_uncertainty(args.manifest, _options_from_args(args), args.out, args.png)
    print(f"wrote {len(written)} files to {args.out}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    report = pipeline.run_eval(args.manifest, _options_from_args(args), args.out)
    micro = {k: v for k, v in report.micro.items() if v is not None}
    summary = ", ".join(f"{k}={v:.4f}" for k, v in sorted(micro.items()))
    print(f"evaluated {report.totals['images']} images; micro: {summary}")
    print(f"report written to {Path(args.out) / 'report.json'}")
    return 0


def _cmd_viz(args: argparse.Namespace) -> int:
    written = pipeline.run_viz(args.manifest, _options_from_args(args), args.out)
    print(f"wrote {len(written)} overlays to {args.out}")
    return 0


def _cmd_hist(args: argparse.Namespace) -> int:
    pipeline.run_hist(args.manifest, _options_from_args(args), args.out)
    print(f"wrote curves to {args.out}")
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "uncertainty": _cmd_uncertainty,
    "eval": _cmd_eval,
    "viz": _cmd_viz,
    "hist": _cmd_hist,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (CliUsageError, ConfigError) as e:
        parser.exit(2, f"{parser.prog} {args.command}: usage error: {e}\n")
    except SegUQError as e:
        print(f"{parser.prog} {args.command}: data error: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
