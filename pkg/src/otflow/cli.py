"""Command-line front end.

Subcommands: ``match`` (estimate flow between two images), ``eval``
(metrics of a prediction against ground truth), ``synth`` (generate a
synthetic scene with ground truth) and ``sinkhorn-bench`` (solver timing /
convergence sweep, optionally comparing kernel backends).

Exit codes: 0 ok, 1 usage error, 2 runtime error. Flags mirror the config
field names one-to-one so ablations stay scriptable. Machine-readable
output lines are stable ``key=value`` pairs.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

import otflow
from otflow import backend
from otflow.core import ImagePair
from otflow.evalio import (
    FormatError,
    MetricReport,
    SceneSpec,
    Translation,
    affine_about_center,
    compute_report,
    read_flo,
    read_image,
    read_kitti_png,
    synth_scene,
    visualize_flow,
    write_flo,
    write_png8,
)
from otflow.evalio.synth import Layered, MovingRect
from otflow.features import BASE_CHANNELS
from otflow.initflow import WindowSpec
from otflow.matching import SinkhornConfig
from otflow.core import CostVolume, OcclusionMap
from otflow.pipeline import estimate_flow
from otflow.refine import RefineConfig

__all__ = ["main", "entrypoint"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _default_threads() -> int:
    env = os.environ.get("OTFLOW_THREADS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=SinkhornConfig.epsilon,
                   help="entropic regularization of the matcher")
    p.add_argument("--max-iters", type=int, default=SinkhornConfig.max_iters,
                   help="Sinkhorn iteration cap")
    p.add_argument("--tol", type=float, default=SinkhornConfig.tol,
                   help="marginal-error tolerance for early stop")
    p.add_argument("--dustbin-score", type=float, default=SinkhornConfig.dustbin_score,
                   help="score of the unmatched option")
    p.add_argument("--window-radius", type=int, default=WindowSpec.radius,
                   help="peak window radius (quarter-res cells)")
    p.add_argument("--steps", type=int, default=RefineConfig.steps,
                   help="local refinement iterations")
    p.add_argument("--conf-threshold", type=float, default=RefineConfig.conf_threshold,
                   help="confidence gate of the global refinement")
    p.add_argument("--coupled-refinement", action="store_true",
                   help="joint 2-channel flow residuals instead of axis-wise")
    p.add_argument("--feature-dim", type=int, default=BASE_CHANNELS, help="descriptor channels")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for image codecs (default: OTFLOW_THREADS or all cores)")


def _apply_threads(args) -> int:
    threads = args.threads if args.threads is not None else _default_threads()
    try:
        import cv2

        cv2.setNumThreads(threads)
    except ImportError:
        pass
    return threads


def _configs(args):
    sinkhorn = SinkhornConfig(
        epsilon=args.epsilon,
        max_iters=args.max_iters,
        tol=args.tol,
        dustbin_score=args.dustbin_score,
    )
    window = WindowSpec(radius=args.window_radius)
    refine = RefineConfig(conf_threshold=args.conf_threshold, steps=args.steps)
    return sinkhorn, window, refine


def cmd_match(args) -> int:
    _apply_threads(args)
    i1 = read_image(args.image1)
    i2 = read_image(args.image2)
    pair = ImagePair(I1=i1, I2=i2)
    sinkhorn, window, refine = _configs(args)

    start = time.perf_counter()
    result = estimate_flow(
        pair,
        feature_dim=args.feature_dim,
        sinkhorn=sinkhorn,
        window=window,
        refine=refine,
        coupled=args.coupled_refinement,
    )
    elapsed = time.perf_counter() - start

    write_flo(result.flow, args.out)
    if args.viz:
        write_png8(visualize_flow(result.flow) / 255.0, args.viz)
    if args.conf_png:
        write_png8(result.confidence.data, args.conf_png)
    if args.occ_png:
        write_png8(result.occlusion.data, args.occ_png)

    d = result.diagnostics
    print(f"size={pair.width}x{pair.height}")
    print(f"backend={backend.BACKEND}")
    print(f"sinkhorn_iterations={d.iterations}")
    print(f"sinkhorn_marginal_error={d.marginal_error:.3e}")
    print(f"sinkhorn_converged={d.converged}")
    print(f"mean_confidence={float(result.confidence.data.mean()):.4f}")
    print(f"mean_occlusion={float(result.occlusion.data.mean()):.4f}")
    print(f"time_s={elapsed:.3f}")
    print(f"out={args.out}")
    return EXIT_OK


def _print_report(report: MetricReport) -> None:
    rows = [
        ("EPE (all)", f"{report.epe_all:.4f} px"),
        ("EPE (non-occ)", "-" if report.epe_nonocc is None else f"{report.epe_nonocc:.4f} px"),
        ("> 1 px", f"{report.outlier_1px:.2f} %"),
        ("> 3 px", f"{report.outlier_3px:.2f} %"),
        ("> 5 px", f"{report.outlier_5px:.2f} %"),
        ("Fl-all", f"{report.fl_all:.2f} %"),
    ]
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value}")
    print(f"epe_all={report.epe_all:.6f}")
    if report.epe_nonocc is not None:
        print(f"epe_nonocc={report.epe_nonocc:.6f}")
    print(f"outlier_1px={report.outlier_1px:.6f}")
    print(f"outlier_3px={report.outlier_3px:.6f}")
    print(f"outlier_5px={report.outlier_5px:.6f}")
    print(f"fl_all={report.fl_all:.6f}")


def cmd_eval(args) -> int:
    pred = read_flo(args.pred)
    valid = None
    if args.gt.endswith(".png"):
        gt, valid = read_kitti_png(args.gt)
    else:
        gt = read_flo(args.gt)
    occ = None
    if args.occ:
        occ_img = read_image(args.occ)
        if occ_img.ndim == 3:
            occ_img = occ_img[:, :, 0]
        occ = OcclusionMap(gt.width, gt.height, (occ_img > 0.5).astype(float), scale=1)
    report = compute_report(pred, gt, occ=occ, valid=valid)
    _print_report(report)
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.rect:
        rects = tuple(MovingRect(*map(int, r)) for r in args.rect)
        motion = Layered(rects=rects)
    elif args.rotate or args.zoom != 1.0:
        motion = affine_about_center(args.width, args.height, args.rotate, args.zoom)
    else:
        motion = Translation(du=args.du, dv=args.dv)
    spec = SceneSpec(width=args.width, height=args.height, motion=motion,
                     texture_seed=args.seed)
    pair, gt_flow, gt_occ = synth_scene(spec)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_png8(pair.I1, out / "I1.png")
    write_png8(pair.I2, out / "I2.png")
    write_flo(gt_flow, out / "gt.flo")
    write_png8(gt_occ.data, out / "occ.png")
    print(f"out_dir={out}")
    print(f"occluded_fraction={1.0 - float(gt_occ.data.mean()):.4f}")
    return EXIT_OK


def _bench_one(kernels, scores, log_mu, log_nu, tol, iters):
    start = time.perf_counter()
    u, v, used, err = kernels.sinkhorn_log_potentials(scores, log_mu, log_nu, tol, iters)
    return time.perf_counter() - start, used, err


def cmd_sinkhorn_bench(args) -> int:
    n = args.size * args.size
    rng = np.random.default_rng(args.seed)
    g = rng.standard_normal((n, n))
    C = CostVolume(h=args.size, w=args.size, data=g)

    aug = np.full((n + 1, n + 1), args.dustbin_score)
    aug[:n, :n] = C.data
    log_kernel = np.ascontiguousarray(aug / args.epsilon)
    log_mu = np.zeros(n + 1)
    log_mu[n] = np.log(n)
    log_nu = log_mu.copy()

    names = (
        list(backend.available_backends())
        if args.backend == "both"
        else [args.backend]
    )
    ladder = sorted({k for k in (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000) if k < args.iters} | {args.iters})
    timings: dict[str, float] = {}
    for name in names:
        kernels = backend.get_backend(name)
        label = kernels.BACKEND_NAME
        for iters in ladder:
            # tol=0 disables early stop so the sweep measures exactly `iters`
            elapsed, used, err = _bench_one(kernels, log_kernel, log_mu, log_nu, 0.0, iters)
            print(
                f"backend={label} iters={used} marginal_error={err:.6e} "
                f"time_ms={elapsed * 1e3:.3f} per_iter_ms={elapsed * 1e3 / used:.3f}"
            )
        timings[label] = elapsed
    if len(timings) == 2 and "compiled" in timings and "python" in timings:
        speedup = timings["python"] / timings["compiled"]
        print(f"speedup_compiled_vs_python={speedup:.2f}x")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="otflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=otflow.__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("match", help="estimate flow between two images")
    p.add_argument("image1")
    p.add_argument("image2")
    p.add_argument("--out", default="flow.flo", help="output .flo path")
    p.add_argument("--viz", default=None, help="optional color-wheel PNG")
    p.add_argument("--conf-png", default=None, help="optional confidence PNG")
    p.add_argument("--occ-png", default=None, help="optional occlusion PNG")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="metrics of a prediction vs ground truth")
    p.add_argument("pred", help="predicted .flo")
    p.add_argument("gt", help="ground-truth .flo or KITTI 16-bit PNG")
    p.add_argument("--occ", default=None, help="non-occlusion mask PNG (255 = visible)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic scene with ground truth")
    p.add_argument("--out", default="scene", help="output directory")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--du", type=float, default=8.0, help="translation du (px)")
    p.add_argument("--dv", type=float, default=4.0, help="translation dv (px)")
    p.add_argument("--rotate", type=float, default=0.0, help="affine rotation (deg)")
    p.add_argument("--zoom", type=float, default=1.0, help="affine zoom factor")
    p.add_argument("--rect", nargs=6, action="append", default=None,
                   metavar=("X0", "Y0", "X1", "Y1", "DU", "DV"),
                   help="layered moving rectangle (repeatable)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sinkhorn-bench", help="solver convergence/timing sweep")
    p.add_argument("--size", type=int, default=16, help="grid side (matrix is size^2 x size^2)")
    p.add_argument("--epsilon", type=float, default=SinkhornConfig.epsilon)
    p.add_argument("--iters", type=int, default=100, help="largest iteration count")
    p.add_argument("--dustbin-score", type=float, default=SinkhornConfig.dustbin_score)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--backend", choices=["auto", "compiled", "python", "both"],
                   default="auto")
    p.set_defaults(func=cmd_sinkhorn_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except BrokenPipeError:
        return EXIT_RUNTIME
    except (ValueError, OSError, FormatError, RuntimeError) as e:
        print(f"otflow: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
