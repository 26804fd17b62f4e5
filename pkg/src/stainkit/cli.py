"""Command line front end.

Subcommands: fit, augment, pair, normalize, loss, metrics, bench.
Exit codes: 0 success, 1 domain error, 2 I/O error, 64 usage error.

All image outputs are written to a temporary file in the destination
directory and renamed into place, so readers never observe half-written
files and reruns with the same seed are byte-identical.
"""

from __future__ import annotations

import argparse
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .augment import (
    JitterParams,
    fit_lab_profile,
    load_lab_profile,
    randstainna_augment,
    save_lab_profile,
    sca_augment,
    scl_pair_sample,
    stain_jitter,
)
from .config import (
    EQ5_CONVENTIONAL,
    EQ5_PRINTED,
    JITTER_FIXED,
    JITTER_PER_IMAGE,
    OD_BASE_E,
    OD_BASE_TEN,
    PipelineConfig,
    STATS_ALL,
    STATS_TISSUE,
)
from .errors import EmptyDatasetError, ImageFormatError, StainKitError
from .imaging import (
    atomic_replace,
    float_rgb_to_od,
    load_label_png,
    load_mask_png,
    load_pfm,
    load_png,
    quantize_rgb,
    save_png,
)
from .loss import stain_consistency_loss
from .metrics import aggregate_reports, f1_50, match_instances, pq_50
from .normalize import (
    NORMALIZE_METHODS,
    fda_transfer,
    histogram_match,
    macenko_normalize,
    make_reference,
    reinhard_normalize,
)
from .profile import (
    extract_image_stats,
    fit_profile,
    load_profile,
    save_profile,
)
from .synthetic import synth_corpus

__all__ = ["main"]

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2
EXIT_USAGE = 64

AUGMENT_METHODS = ("sca", "jitter", "randstainna")
BENCH_METHODS = ("reinhard", "macenko", "hm", "fda", "sca", "jitter", "randstainna")


class _Parser(argparse.ArgumentParser):
    """argparse parser whose usage failures exit with code 64."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def task_rng(root_seed: int, image_index: int, draw_index: int) -> np.random.Generator:
    """Generator for one (image, draw) task.

    Seeded from (root seed, image index, draw index) so results never
    depend on scheduling or worker count.
    """
    return np.random.default_rng(np.random.SeedSequence([root_seed, image_index, draw_index]))


def _list_pngs(directory: Path) -> list[Path]:
    return sorted(p for p in directory.glob("*.png") if p.is_file())


def _write_png_atomic(img: np.ndarray, dest: Path) -> None:
    tmp = dest.with_name(dest.name + ".part")
    try:
        save_png(img, tmp)
        atomic_replace(tmp, dest)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def _write_text_atomic(write_fn, dest: Path) -> None:
    tmp = dest.with_name(dest.name + ".part")
    try:
        write_fn(tmp)
        atomic_replace(tmp, dest)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def _pipeline_config(args) -> PipelineConfig:
    return PipelineConfig(
        od_base=getattr(args, "od_base", OD_BASE_TEN),
        stats_domain=getattr(args, "stats_on", STATS_TISSUE),
        tissue_threshold=getattr(args, "tissue_threshold", 0.15),
        angle_percentile=getattr(args, "angle_percentile", 1.0),
        transform_direction=getattr(args, "eq5_direction", EQ5_PRINTED),
        diag_cov=getattr(args, "diag_cov", False),
        jitter_matrix=getattr(args, "jitter_matrix", JITTER_PER_IMAGE),
    )


def _thread_count(args) -> int:
    value = getattr(args, "threads", "1")
    if value == "auto":
        import os

        return max(1, os.cpu_count() or 1)
    return max(1, int(value))


def _run_indexed(tasks, worker, threads: int) -> list:
    """Run worker over tasks, returning results in task order."""
    if threads <= 1:
        return [worker(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, tasks))


def _check_dirs_differ(in_dir: Path, out_dir: Path) -> None:
    if in_dir.resolve() == out_dir.resolve():
        raise _UsageError("output directory must differ from the input directory")


class _UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> int:
    in_dir = Path(args.input)
    out_path = Path(args.output)
    paths = _list_pngs(in_dir)
    cfg = _pipeline_config(args)
    threads = _thread_count(args)

    if args.lab:
        images = _run_indexed(paths, load_png, threads)
        profile = fit_lab_profile(images)
        _write_text_atomic(lambda p: save_lab_profile(profile, p), out_path)
        print(f"fitted colour-statistics profile on {profile.n_images} images")
        return EXIT_OK

    def worker(path: Path):
        img = load_png(path)
        try:
            return extract_image_stats(img, cfg)
        except StainKitError as exc:
            print(f"warning: skipped {path.name}: {exc}", file=sys.stderr)
            return None

    results = _run_indexed(paths, worker, threads)
    stats = [s for s in results if s is not None]
    skipped = len(results) - len(stats)
    if not stats:
        raise EmptyDatasetError(f"no usable images in {in_dir}")
    profile = fit_profile(stats, cfg)
    _write_text_atomic(lambda p: save_profile(profile, p), out_path)
    msg = f"fitted stain profile on {profile.n_images} images"
    if skipped:
        msg += f" ({skipped} skipped)"
    print(msg)
    return EXIT_OK


def cmd_augment(args) -> int:
    in_dir = Path(args.input)
    out_dir = Path(args.output)
    _check_dirs_differ(in_dir, out_dir)
    paths = _list_pngs(in_dir)
    if not paths:
        raise EmptyDatasetError(f"no PNG images in {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = _pipeline_config(args)
    threads = _thread_count(args)

    method = args.method
    profile = None
    params = None
    if method == "sca":
        if not args.profile:
            raise _UsageError("--method sca requires --profile")
        profile = load_profile(args.profile)
    elif method == "randstainna":
        if not args.profile:
            raise _UsageError("--method randstainna requires --profile")
        profile = load_lab_profile(args.profile)
    else:
        params = JitterParams(alpha=args.alpha, beta=args.beta)

    tasks = [
        (i, path, k) for i, path in enumerate(paths) for k in range(args.count)
    ]

    def worker(task):
        i, path, k = task
        img = load_png(path)
        rng = task_rng(args.seed, i, k)
        if method == "sca":
            out = sca_augment(img, profile, rng, cfg)
        elif method == "randstainna":
            out = randstainna_augment(img, profile, rng)
        else:
            out = stain_jitter(img, params, rng, cfg)
        _write_png_atomic(out, out_dir / f"{path.stem}_aug{k}.png")

    _run_indexed(tasks, worker, threads)
    print(f"wrote {len(tasks)} augmented images to {out_dir}")
    return EXIT_OK


def cmd_pair(args) -> int:
    in_dir = Path(args.input)
    out_dir = Path(args.output)
    _check_dirs_differ(in_dir, out_dir)
    paths = _list_pngs(in_dir)
    if not paths:
        raise EmptyDatasetError(f"no PNG images in {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = _pipeline_config(args)
    threads = _thread_count(args)
    profile = load_profile(args.profile)

    worst = [0.0]

    def worker(task):
        i, path = task
        img = load_png(path)
        rng = task_rng(args.seed, i, 0)
        sample = scl_pair_sample(img, profile, rng, cfg)
        dest_a = out_dir / f"{path.stem}_a.png"
        dest_b = out_dir / f"{path.stem}_b.png"
        tmp_a = dest_a.with_name(dest_a.name + ".part")
        tmp_b = dest_b.with_name(dest_b.name + ".part")
        try:
            save_png(quantize_rgb(sample.float_a), tmp_a)
            save_png(quantize_rgb(sample.float_b), tmp_b)
            atomic_replace(tmp_a, dest_a)
            try:
                atomic_replace(tmp_b, dest_b)
            except BaseException:
                dest_a.unlink(missing_ok=True)
                raise
        except BaseException:
            tmp_a.unlink(missing_ok=True)
            tmp_b.unlink(missing_ok=True)
            raise
        if args.verify:
            dev = _pair_deviation(sample, cfg)
            worst[0] = max(worst[0], dev)

    _run_indexed(list(enumerate(paths)), worker, threads)
    print(f"wrote {2 * len(paths)} paired images to {out_dir}")
    if args.verify:
        ok = worst[0] <= 1e-6
        print(f"verify: max concentration deviation {worst[0]:.3e} ({'pass' if ok else 'fail'})")
        if not ok:
            return EXIT_DOMAIN
    return EXIT_OK


def _pair_deviation(sample, cfg: PipelineConfig) -> float:
    """Worst elementwise gap between the concentrations recovered from the
    two pair members (pre-quantisation)."""
    dev = 0.0
    for float_img, colour in (
        (sample.float_a, sample.colour_a),
        (sample.float_b, sample.colour_b),
    ):
        od = float_rgb_to_od(float_img, base=cfg.od_base)
        recovered = np.linalg.solve(colour, od.reshape(-1, 3).T)
        np.maximum(recovered, 0.0, out=recovered)
        dev = max(dev, float(np.abs(recovered - sample.conc).max()))
    return dev


def cmd_normalize(args) -> int:
    in_dir = Path(args.input)
    out_dir = Path(args.output)
    _check_dirs_differ(in_dir, out_dir)
    paths = _list_pngs(in_dir)
    if not paths:
        raise EmptyDatasetError(f"no PNG images in {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = _pipeline_config(args)
    threads = _thread_count(args)

    ref_img = load_png(args.reference)
    ref = make_reference(ref_img, args.method, cfg, fda_beta=args.fda_beta)

    def worker(path: Path):
        img = load_png(path)
        if args.method == "reinhard":
            out = reinhard_normalize(img, ref)
        elif args.method == "macenko":
            out = macenko_normalize(img, ref, cfg)
        elif args.method == "hm":
            out = histogram_match(img, ref)
        else:
            out = fda_transfer(img, ref)
        _write_png_atomic(out, out_dir / f"{path.stem}.png")

    _run_indexed(paths, worker, threads)
    print(f"wrote {len(paths)} normalised images to {out_dir}")
    return EXIT_OK


def cmd_loss(args) -> int:
    a = load_pfm(args.pred_a)
    b = load_pfm(args.pred_b)
    mask = load_mask_png(args.mask)
    value = stain_consistency_loss(
        a, b, mask, inputs_are_probabilities=args.inputs_are_probabilities
    )
    print(f"{value:.6f}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    gt_dir = Path(args.gt)
    pred_dir = Path(args.pred)
    gt_paths = _list_pngs(gt_dir)
    if not gt_paths:
        raise EmptyDatasetError(f"no PNG label maps in {gt_dir}")
    reports = []
    names = []
    for gt_path in gt_paths:
        pred_path = pred_dir / gt_path.name
        if not pred_path.is_file():
            raise FileNotFoundError(f"missing prediction for {gt_path.name}")
        gt = load_label_png(gt_path)
        pred = load_label_png(pred_path)
        reports.append(match_instances(gt, pred))
        names.append(gt_path.stem)

    if args.per_image:
        print("image\tF1_50\tPQ_50")
        f1s, pqs = [], []
        for name, rep in zip(names, reports):
            f1, pq = f1_50(rep), pq_50(rep)
            f1s.append(f1)
            pqs.append(pq)
            print(f"{name}\t{f1:.6f}\t{pq:.6f}")
        print(f"mean\t{np.mean(f1s):.6f}\t{np.mean(pqs):.6f}")
    else:
        total = aggregate_reports(reports)
        print(f"images\t{len(reports)}")
        print(f"F1_50\t{f1_50(total):.6f}")
        print(f"PQ_50\t{pq_50(total):.6f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in BENCH_METHODS:
            raise _UsageError(
                f"unknown bench method {m!r}; choose from {', '.join(BENCH_METHODS)}"
            )
    if not methods:
        raise _UsageError("no bench methods given")

    cfg = PipelineConfig()
    print(
        f"generating {args.count + args.warmup} synthetic {args.size}x{args.size} images",
        flush=True,
    )
    corpus = synth_corpus(args.count + args.warmup, args.size, args.seed)
    warmup, timed = corpus[: args.warmup], corpus[args.warmup :]

    # setup work (profile fits, reference stats) is excluded from timings
    ref_img = timed[0]
    setups = {}
    if "sca" in methods:
        fit_imgs = timed[: min(10, len(timed))]
        setups["sca"] = fit_profile([extract_image_stats(im, cfg) for im in fit_imgs], cfg)
    if "randstainna" in methods:
        setups["randstainna"] = fit_lab_profile(timed[: min(10, len(timed))])
    for m in ("reinhard", "macenko", "hm", "fda"):
        if m in methods:
            setups[m] = make_reference(ref_img, m, cfg)
    jitter_params = JitterParams()

    def run(method: str, img: np.ndarray, rng: np.random.Generator) -> None:
        if method == "reinhard":
            reinhard_normalize(img, setups[method])
        elif method == "macenko":
            macenko_normalize(img, setups[method], cfg)
        elif method == "hm":
            histogram_match(img, setups[method])
        elif method == "fda":
            fda_transfer(img, setups[method])
        elif method == "sca":
            sca_augment(img, setups[method], rng, cfg)
        elif method == "jitter":
            stain_jitter(img, jitter_params, rng, cfg)
        else:
            randstainna_augment(img, setups[method], rng)

    rows = []
    for method in methods:
        for i, img in enumerate(warmup):
            run(method, img, task_rng(args.seed, i, 1))
        t0 = time.perf_counter()
        for i, img in enumerate(timed):
            run(method, img, task_rng(args.seed, i, 0))
        seconds = time.perf_counter() - t0
        rows.append((method, seconds, len(timed) / seconds))
        print(f"{method}: {seconds:.3f} s ({len(timed) / seconds:.1f} images/s)", flush=True)

    hardware = f"{platform.platform()} / {platform.machine()} / python {platform.python_version()} / numpy {np.__version__}"

    def write(path):
        with open(path, "w", encoding="ascii") as f:
            f.write(f"# hardware: {hardware}\n")
            f.write("method,seconds,images_per_second\n")
            for method, seconds, ips in rows:
                f.write(f"{method},{seconds:.6f},{ips:.3f}\n")

    _write_text_atomic(write, Path(args.report))

    ordering = " < ".join(m for m, _, _ in sorted(rows, key=lambda r: r[1]))
    print(f"ordering (fastest first): {ordering}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_convention_flags(p: argparse.ArgumentParser, eq5: bool = False) -> None:
    p.add_argument(
        "--od-base",
        choices=[OD_BASE_TEN, OD_BASE_E],
        default=OD_BASE_TEN,
        help="log base of the optical-density transform (default: ten)",
    )
    p.add_argument(
        "--stats-on",
        choices=[STATS_TISSUE, STATS_ALL],
        default=STATS_TISSUE,
        help="pixels feeding concentration statistics (default: tissue)",
    )
    p.add_argument("--tissue-threshold", type=float, default=0.15)
    p.add_argument("--angle-percentile", type=float, default=1.0)
    if eq5:
        p.add_argument(
            "--eq5-direction",
            choices=[EQ5_PRINTED, EQ5_CONVENTIONAL],
            default=EQ5_PRINTED,
            help="direction of the concentration statistics transfer",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stainkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"stainkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit a stain (or colour-statistics) profile over a directory")
    p.add_argument("--input", required=True, help="directory of PNG images")
    p.add_argument("--output", required=True, help="profile JSON to write")
    p.add_argument("--lab", action="store_true", help="fit the opponent-space statistics profile")
    p.add_argument("--diag-cov", action="store_true", help="fit diagonal covariances")
    p.add_argument("--threads", default="1", help="worker threads, a count or 'auto'")
    _add_convention_flags(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("augment", help="write augmented copies of a directory of images")
    p.add_argument("--method", required=True, choices=AUGMENT_METHODS)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--count", type=int, default=1, help="augmentations per image")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--profile", help="profile JSON (required for sca and randstainna)")
    p.add_argument("--alpha", type=float, default=0.25, help="jitter scale half-range")
    p.add_argument("--beta", type=float, default=0.05, help="jitter shift half-range")
    p.add_argument(
        "--jitter-matrix",
        choices=[JITTER_PER_IMAGE, JITTER_FIXED],
        default=JITTER_PER_IMAGE,
        help="colour matrix used by stain jitter",
    )
    p.add_argument("--threads", default="1")
    _add_convention_flags(p, eq5=True)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("pair", help="write consistency pairs sharing concentrations")
    p.add_argument("--profile", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--verify",
        action="store_true",
        help="check that both members decode to the same concentrations",
    )
    p.add_argument("--threads", default="1")
    _add_convention_flags(p, eq5=True)
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("normalize", help="normalise a directory against a reference image")
    p.add_argument("--method", required=True, choices=NORMALIZE_METHODS)
    p.add_argument("--reference", required=True, help="reference PNG")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--fda-beta", type=float, default=0.01, help="amplitude window fraction")
    p.add_argument("--threads", default="1")
    _add_convention_flags(p)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("loss", help="consistency loss between two prediction maps")
    p.add_argument("--pred-a", required=True, help="logit map (PFM)")
    p.add_argument("--pred-b", required=True, help="logit map (PFM)")
    p.add_argument("--mask", required=True, help="foreground mask PNG (nonzero = object)")
    p.add_argument(
        "--inputs-are-probabilities",
        action="store_true",
        help="inputs are already probabilities; skip the sigmoid",
    )
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("metrics", help="instance metrics between label map directories")
    p.add_argument("--gt", required=True, help="ground-truth label maps (16-bit PNG)")
    p.add_argument("--pred", required=True, help="predicted label maps (16-bit PNG)")
    p.add_argument(
        "--per-image",
        action="store_true",
        help="report per-image metrics and their mean instead of dataset totals",
    )
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("bench", help="time every method on a seeded synthetic corpus")
    p.add_argument("--report", required=True, help="CSV file to write")
    p.add_argument("--methods", default=",".join(BENCH_METHODS))
    p.add_argument("--count", type=int, default=1000, help="timed images per method")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--warmup", type=int, default=10, help="untimed warmup images")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help/--version, 64 via _Parser.error
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"stainkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ImageFormatError as exc:
        print(f"stainkit: error: {exc}", file=sys.stderr)
        return EXIT_IO
    except StainKitError as exc:
        print(f"stainkit: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        print(f"stainkit: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"stainkit: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
