"""``omniloc`` command line: localize, synth, eval, bench.

Exit codes: 0 success, 2 malformed input or invalid parameters, 3 the
localization ran but no candidate produced a finite loss.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import io
from .geometry import LocalPoseParam, Panorama, PointCloud, Pose
from .initializer import initialize
from .optimizer import refine
from .pipeline import LocalizationError, LocalizerConfig, evaluate_batch, localize
from .render import render
from .sampler import sampling_loss, sampling_loss_grad
from .synth import TEXTURE_MODES, augment_pose, generate_scene

EXIT_OK, EXIT_INPUT, EXIT_FAILED = 0, 2, 3


class UsageError(Exception):
    pass


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------- localize


def cmd_localize(args) -> int:
    cloud = io.read_ply(args.cloud)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        image = io.read_png(args.image)
    for w in caught:
        _log(f"warning: {w.message}")
    config = io.read_config(args.config) if args.config else LocalizerConfig()
    overrides = {}
    if args.gravity_known:
        overrides.update(gravity_known=True, n_r=8)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        try:
            config = LocalizerConfig(**{**config.to_dict(), **overrides})
        except ValueError as err:
            raise UsageError(str(err)) from None
    try:
        result = localize(cloud, image, config, workers=args.threads)
    except LocalizationError as err:
        raise io.FormatError(args.cloud, str(err)) from None
    except ValueError as err:
        raise UsageError(str(err)) from None

    _log("timings: " + ", ".join(f"{k} {v:.3f} s" for k, v in result.timings.items()))
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        io.dump_json(args.out, io.result_to_dict(result, config))
        io.dump_json(_timings_path(args.out), {k: float(v) for k, v in result.timings.items()})
    if args.dump_projection:
        out = render(cloud, result.best_pose, image.height, image.width)
        io.write_png(args.dump_projection, out.image)
    if result.failed:
        _log("localization failed: no candidate projected any point")
        return EXIT_FAILED
    t = result.best_pose.translation
    print(f"loss {result.best_loss:.6f} translation {t[0]:.4f} {t[1]:.4f} {t[2]:.4f}")
    return EXIT_OK


def _timings_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + ".timings.json")


# ---------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    try:
        scene = generate_scene(
            args.seed,
            room_extent=tuple(args.extent),
            points_per_m2=args.density,
            texture_mode=args.texture,
            gravity_aligned=args.gravity_aligned,
            height=args.height,
            width=2 * args.height,
        )
    except ValueError as err:
        raise UsageError(str(err)) from None
    cloud, pose = scene.cloud, scene.oracle_pose
    descriptor = dict(scene.descriptor)
    if args.augment:
        cloud, transform = augment_pose(cloud, args.seed)
        pose = transform.apply_to_pose(pose)
        descriptor["augment"] = {
            "rotation": [[float(v) for v in row] for row in transform.rotation],
            "translation": [float(v) for v in transform.translation],
        }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_ply(out / "cloud.ply", cloud)
    io.write_png(out / "pano.png", scene.panorama)
    lo, hi = cloud.bbox()
    io.dump_json(out / "oracle.json", {**io.pose_to_dict(pose), "cloud_bbox": [[float(v) for v in lo], [float(v) for v in hi]]})
    io.dump_json(out / "descriptor.json", descriptor)
    print(f"{cloud.count} points written to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- eval


def _truth_for(truth_dir: Path, stem: str) -> Path | None:
    for cand in (truth_dir / f"{stem}.json", truth_dir / stem / "oracle.json"):
        if cand.is_file():
            return cand
    return None


def cmd_eval(args) -> int:
    results_dir, truth_dir = Path(args.results), Path(args.truth)
    if not results_dir.is_dir() or not truth_dir.is_dir():
        raise UsageError("--results and --truth must be directories")
    result_files = sorted(p for p in results_dir.glob("*.json") if not p.name.endswith(".timings.json"))
    if not result_files:
        raise UsageError(f"no result files in {results_dir}")
    unmatched = [p.name for p in result_files if _truth_for(truth_dir, p.stem) is None]
    if unmatched:
        raise io.FormatError(truth_dir, f"no ground truth for {', '.join(unmatched)}")

    pairs, excluded = [], []
    for p in result_files:
        truth = io.load_json(_truth_for(truth_dir, p.stem))
        gt = io.pose_from_dict(truth)
        if "cloud_bbox" in truth:
            lo, hi = (np.array(v) for v in truth["cloud_bbox"])
            if not (np.all(gt.translation >= lo) and np.all(gt.translation <= hi)):
                excluded.append(p.stem)
                continue
        pairs.append((io.pose_from_dict(io.load_json(p)["pose"]), gt))
    if not pairs:
        raise UsageError("every ground truth lies outside its cloud's bounding box")
    report = {**evaluate_batch(pairs), "excluded": excluded}
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    if args.out:
        io.dump_json(args.out, report)
    return EXIT_OK


# ---------------------------------------------------------------- bench


def bench_cloud(n: int, seed: int = 0, extent: float = 4.0) -> tuple[PointCloud, Panorama]:
    """``n`` random colored points on the walls of a cube around the origin, and a noise panorama."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-extent / 2, extent / 2, size=(n, 3))
    axis = rng.integers(0, 3, size=n)
    pts[np.arange(n), axis] = np.where(rng.random(n) < 0.5, -extent / 2, extent / 2)
    return PointCloud(pts, rng.random((n, 3))), Panorama(rng.random((256, 512, 3)))


def _median_time(fn, repeat: int) -> float:
    fn()  # warm-up, also compiles the kernels on first use
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def run_bench(points, repeat: int, candidates: int = 64, workers: int = 1) -> list[dict]:
    """Median wall-clock of each stage at each cloud size."""
    n_t = max(1, int(round(np.sqrt(candidates))))
    n_r = max(1, candidates // n_t)
    rows = []
    for n in points:
        cloud, image = bench_cloud(int(n))
        pose = Pose(np.eye(3), np.zeros(3))
        param = LocalPoseParam.at(pose)
        stages = {
            "sampling_loss": lambda: sampling_loss(cloud, image, pose),
            "sampling_loss_grad": lambda: sampling_loss_grad(cloud, image, param),
            "initialization": lambda: initialize(cloud, image, n_t, n_r, min(8, n_t * n_r), 2, workers=workers),
            "refine_iteration": lambda: refine(cloud, image, pose, 1),
        }
        for stage, fn in stages.items():
            t = _median_time(fn, repeat)
            per_pose = n_t * n_r if stage == "initialization" else 1
            rows.append({"points": int(n), "stage": stage, "median_s": t, "points_per_s": n * per_pose / t})
    return rows


def scaling_ratios(rows, stage: str = "sampling_loss") -> list[tuple[int, int, float]]:
    sel = sorted((r["points"], r["median_s"]) for r in rows if r["stage"] == stage)
    return [(a[0], b[0], b[1] / a[1]) for a, b in zip(sel, sel[1:]) if b[0] == 2 * a[0]]


def cmd_bench(args) -> int:
    points = [int(float(p)) for p in args.points]
    if any(p < 1 for p in points) or args.repeat < 1:
        raise UsageError("--points and --repeat must be positive")
    rows = run_bench(points, args.repeat, args.candidates, args.threads)
    print(f"{'points':>10} {'stage':<20} {'median [s]':>12} {'points/s':>12}")
    for r in rows:
        print(f"{r['points']:>10} {r['stage']:<20} {r['median_s']:>12.6f} {r['points_per_s']:>12.3e}")
    for a, b, ratio in scaling_ratios(rows):
        verdict = "linear" if 1.6 <= ratio <= 2.6 else "NOT linear"
        print(f"sampling_loss {a} -> {b}: time ratio {ratio:.2f} ({verdict})")
    print("reference: 3e8 points/s reported for a GPU implementation")
    return EXIT_OK


# ---------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="omniloc", description="Locate a 360-degree panorama inside a colored point cloud.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("localize", help="estimate the camera pose of a panorama")
    p.add_argument("--cloud", required=True, help="PLY point cloud")
    p.add_argument("--image", required=True, help="equirectangular PNG")
    p.add_argument("--config", help="key=value file overriding the defaults")
    p.add_argument("--gravity-known", action="store_true", help="search yaw only (sets n_r = 8)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="result JSON; timings go to <out>.timings.json")
    p.add_argument("--dump-projection", help="PNG of the cloud rendered at the estimate")
    p.add_argument("--threads", type=int, default=1, help="worker cap; never changes the result")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("synth", help="generate a synthetic room, panorama and oracle pose")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--extent", type=float, nargs=3, default=(4.0, 3.0, 2.5), metavar=("X", "Y", "Z"))
    p.add_argument("--density", type=float, default=500.0, help="points per square meter")
    p.add_argument("--texture", choices=TEXTURE_MODES, default="noise")
    p.add_argument("--augment", action="store_true", help="randomly move the cloud and adjust the oracle")
    p.add_argument("--gravity-aligned", action="store_true", help="yaw-only oracle rotation")
    p.add_argument("--height", type=int, default=128, help="panorama height; width is twice this")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="error quartiles and accuracy of a batch of results")
    p.add_argument("--results", required=True, help="directory of result JSON files")
    p.add_argument("--truth", required=True, help="directory of <name>.json or <name>/oracle.json")
    p.add_argument("--out", help="also write the report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="runtime versus point count")
    p.add_argument("--points", nargs="+", default=["1e5", "2e5", "4e5", "8e5", "1.6e6"])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--candidates", type=int, default=64, help="candidate poses timed in the initialization stage")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        _log("error: --threads must be >= 1")
        return EXIT_INPUT
    try:
        return args.func(args)
    except (io.FormatError, UsageError, FileNotFoundError, IsADirectoryError) as err:
        _log(f"error: {err}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
