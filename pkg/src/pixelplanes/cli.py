"""Command-line entry point: ``pixelplanes <command> ...``.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import depth_codec, media_io, metrics, seg_codec

log = logging.getLogger("pixelplanes")

TABLE_NAME = "color_table.txt"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--format", choices=("text", "json-lines"), default="text", help="report format (default: text)")
    p.add_argument("--threads", type=int, default=1, help="cap on worker threads; 1 is fully deterministic (default: 1)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return p


def _palette(args):
    return depth_codec.read_palette(args.palette) if args.palette else depth_codec.default_palette()


def _emit(args, record: dict, name: str | None = None) -> None:
    text = metrics.report_lines(record, args.format)
    print(text)
    out = getattr(args, "out", None)
    if out and name:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text + "\n", encoding="utf-8")


# -- codecs -----------------------------------------------------------------------


def cmd_encode_seg(args) -> int:
    masks = media_io.read_mask_video(args.masks)
    video, table = seg_codec.encode_segmentation(masks, seed=args.seed, min_separation=args.min_separation)
    media_io.write_video(video, args.out)
    seg_codec.write_color_table(table, Path(args.out) / TABLE_NAME)
    _emit(args, {"frames": video.frames, "entities": len(table), "seed": args.seed, "min_separation": args.min_separation})
    return 0


def cmd_decode_seg(args) -> int:
    video = media_io.read_video(args.video)
    table = seg_codec.read_color_table(args.table or Path(args.video) / TABLE_NAME)
    masks = seg_codec.decode_segmentation(video, table, reject_threshold=args.reject_threshold)
    media_io.write_mask_video(masks, args.out)
    _emit(args, {"frames": masks.frames, "entities": int(len(masks.present_ids()))})
    return 0


def cmd_encode_depth(args) -> int:
    video = depth_codec.encode_depth(media_io.read_depth_video(args.depth), _palette(args))
    media_io.write_video(video, args.out)
    _emit(args, {"frames": video.frames})
    return 0


def cmd_decode_depth(args) -> int:
    depth = depth_codec.invert_depth(media_io.read_video(args.video), _palette(args))
    media_io.write_depth_video(depth, args.out)
    _emit(args, {"frames": depth.frames})
    return 0


def cmd_clean_masks(args) -> int:
    masks = media_io.read_mask_video(args.masks)
    if args.min_area is None:
        cfg = ds.CleanupConfig.for_resolution(*masks.ids.shape[1:], max_passes=args.max_passes)
    else:
        cfg = ds.CleanupConfig(min_area=args.min_area, max_passes=args.max_passes)
    cleaned = ds.clean_masks(masks, cfg)
    media_io.write_mask_video(cleaned, args.out)
    changed = int(np.count_nonzero(cleaned.ids != masks.ids))
    _emit(args, {"frames": cleaned.frames, "min_area": cfg.min_area, "pixels_changed": changed})
    return 0


# -- dataset -----------------------------------------------------------------------


def cmd_dataset_validate(args) -> int:
    records = media_io.read_manifest(args.manifest)
    root = args.root or Path(args.manifest).parent
    report = ds.validate_dataset(records, root)
    lines = report.lines()
    if args.format == "json-lines":
        text = "\n".join(json.dumps(r, sort_keys=True) for r in lines)
    else:
        text = "\n".join(f"{i.id}\t{i.category}\t{i.detail}" for i in report.issues)
        summary = ", ".join(f"{k}={v}" for k, v in report.counts.items())
        text = (text + "\n" if text else "") + f"records={report.records}, {summary}"
    print(text)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "validation.txt").write_text(text + "\n", encoding="utf-8")
    return 0


def cmd_dataset_stats(args) -> int:
    records = [r for r in media_io.read_manifest(args.manifest) if r.seg_dir]
    root = args.root or Path(args.manifest).parent
    hist = metrics.entity_count_histogram(records, root, bucket=args.bucket)
    _emit(args, {"videos": len(records), "entity_histogram": {str(k): v for k, v in hist.items()}}, "stats.txt")
    return 0


# -- diffusion ---------------------------------------------------------------------


def _torch_threads(n: int):
    import torch

    torch.set_num_threads(n)
    return torch


def cmd_train_toy(args) -> int:
    _torch_threads(args.threads)
    from .diffusion import DenoiserConfig, TrainConfig, build_model, expand_io_channels, make_schedule, save_checkpoint, train
    from .diffusion.toydata import make_toy_corpus

    cfg = TrainConfig(p_seg=args.p_seg, p_depth=1.0 - args.p_seg, lr=args.lr, steps=args.steps, seed=args.seed, batch=args.batch)
    corpus = make_toy_corpus(args.videos, seed=args.seed)
    mcfg = DenoiserConfig(
        channels=corpus.video.shape[2], dim=args.dim, depth=args.depth, heads=args.heads, num_prompts=4
    )
    if args.random_init:
        model = build_model(replace(mcfg, channels=2 * mcfg.channels), seed=args.seed)
    else:
        model = expand_io_channels(build_model(mcfg, seed=args.seed))
    losses = train(model, corpus, cfg, make_schedule(args.schedule_steps), log_every=100 if args.verbose else 0)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out / "checkpoint.bin", meta={"seed": args.seed, "steps": args.steps, "schedule_steps": args.schedule_steps})
    cfg.write(out / "train_config.txt")
    (out / "losses.txt").write_text("".join(f"{x:.9g}\n" for x in losses), encoding="utf-8")
    head = float(np.mean(losses[:100])) if losses else float("nan")
    tail = float(np.mean(losses[-100:])) if losses else float("nan")
    _emit(args, {"steps": args.steps, "initial_loss_ma100": head, "final_loss_ma100": tail}, "train_report.txt")
    return 0


def cmd_sample(args) -> int:
    torch = _torch_threads(args.threads)
    from .diffusion import TaskId, load_checkpoint, make_schedule, sample

    model, meta = load_checkpoint(args.checkpoint)
    task = TaskId.SEGMENTATION if args.task == "seg" else TaskId.DEPTH
    gen = torch.Generator().manual_seed(args.seed)
    schedule = make_schedule(int(meta.get("schedule_steps", 1000)))
    zv, zc = sample(model, task, args.prompt, args.steps, schedule, gen)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    np.save(out / "video_latent.npy", zv.numpy())
    np.save(out / "dense_latent.npy", zc.numpy())
    if zv.shape[1] == 3:
        to_rgb = lambda z: media_io.VideoTensor(np.clip((z.numpy().transpose(0, 2, 3, 1) + 1.0) / 2.0, 0.0, 1.0))  # noqa: E731
        media_io.write_video(to_rgb(zv), out / "video")
        dense = to_rgb(zc)
        media_io.write_video(dense, out / "dense")
        if task == TaskId.DEPTH:
            media_io.write_depth_video(depth_codec.invert_depth(dense, _palette(args)), out / "depth")
    _emit(args, {"task": args.task, "prompt": args.prompt, "steps": args.steps, "seed": args.seed})
    return 0


# -- evaluation --------------------------------------------------------------------


def cmd_eval_video(args) -> int:
    report = metrics.MetricReport(motion_smoothness=metrics.motion_smoothness(media_io.read_video(args.frames)))
    if args.subject_features:
        report.subject_consistency = metrics.subject_consistency(metrics.read_features(args.subject_features))
    if args.background_features:
        report.background_consistency = metrics.background_consistency(metrics.read_features(args.background_features))
    _emit(args, report.as_dict(), "eval_video.txt")
    return 0


def _read_depth_like(path, kind, args):
    if kind == "rgb":
        return depth_codec.invert_depth(media_io.read_video(path), _palette(args))
    return media_io.read_depth_video(path)


def cmd_eval_depth(args) -> int:
    pred = _read_depth_like(args.pred, args.pred_format, args)
    gt = media_io.read_depth_video(args.gt)
    if args.align:
        pred = metrics.align_depth(pred, gt)
    report = metrics.MetricReport(delta1=metrics.delta_accuracy(pred, gt), rmse=metrics.rmse(pred, gt))
    _emit(args, report.as_dict(), "eval_depth.txt")
    return 0


def cmd_eval_frechet(args) -> int:
    a = [metrics.read_features(p) for p in args.a]
    b = [metrics.read_features(p) for p in args.b]
    _emit(args, {"frechet": metrics.frechet_distance(a, b)}, "eval_frechet.txt")
    return 0


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="pixelplanes", description="Colormap codecs, toy joint diffusion and evaluation metrics.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("encode-seg", parents=[common], help="entity masks -> random-color RGB video")
    p.add_argument("--masks", required=True, help="directory of 16-bit mask frames")
    p.add_argument("--seed", type=int, default=0, help="color sampling seed (default: 0)")
    p.add_argument("--min-separation", type=int, default=seg_codec.DEFAULT_MIN_SEPARATION, help="minimum Chebyshev distance between colors (default: 8)")
    p.add_argument("--out", required=True, help="output directory (frames + color_table.txt)")
    p.set_defaults(func=cmd_encode_seg)

    p = sub.add_parser("decode-seg", parents=[common], help="RGB colormap video -> entity masks")
    p.add_argument("--video", required=True, help="directory of RGB frames")
    p.add_argument("--table", default=None, help="color table file (default: <video>/color_table.txt)")
    p.add_argument("--reject-threshold", type=float, default=None, help="max distance to a table color before falling back to background (default: half the min pairwise table distance)")
    p.add_argument("--out", required=True, help="output directory for 16-bit mask frames")
    p.set_defaults(func=cmd_decode_seg)

    for name, helptext, arg, fn in (
        ("encode-depth", "depth frames -> spectral RGB video", "--depth", cmd_encode_depth),
        ("decode-depth", "spectral RGB video -> depth frames", "--video", cmd_decode_depth),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument(arg, required=True, help="input frame directory")
        p.add_argument("--palette", default=None, help="palette file (default: built-in spectral palette)")
        p.add_argument("--out", required=True, help="output frame directory")
        p.set_defaults(func=fn)

    p = sub.add_parser("clean-masks", parents=[common], help="remove small holes and specks from masks")
    p.add_argument("--masks", required=True, help="directory of 16-bit mask frames")
    p.add_argument("--min-area", type=int, default=None, help="components below this area are relabeled (default: 64 px scaled from 480x854)")
    p.add_argument("--max-passes", type=int, default=16, help="maximum relabeling passes per frame (default: 16)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_clean_masks)

    p = sub.add_parser("dataset", help="manifest validation and statistics")
    dsub = p.add_subparsers(dest="dataset_command", metavar="action", parser_class=_Parser)
    dsub.required = True
    for name, helptext, fn in (
        ("validate", "check frame counts, dimensions, temporal ids and depth files", cmd_dataset_validate),
        ("stats", "entity-count histogram over records with masks", cmd_dataset_stats),
    ):
        q = dsub.add_parser(name, parents=[common], help=helptext)
        q.add_argument("--manifest", required=True, help="JSON-lines manifest")
        q.add_argument("--root", default=None, help="base for relative paths (default: manifest directory)")
        q.add_argument("--out", default=None, help="directory for the report file")
        if name == "stats":
            q.add_argument("--bucket", type=int, default=1, help="histogram bucket width (default: 1)")
        q.set_defaults(func=fn)

    p = sub.add_parser("train-toy", parents=[common], help="train the toy joint denoiser on a synthetic corpus")
    p.add_argument("--steps", type=int, default=2000, help="optimizer steps (default: 2000)")
    p.add_argument("--seed", type=int, default=0, help="seed for data, init and noise (default: 0)")
    p.add_argument("--batch", type=int, default=8, help="batch size (default: 8)")
    p.add_argument("--lr", type=float, default=1e-4, help="Adam learning rate (default: 0.0001)")
    p.add_argument("--p-seg", type=float, default=0.5, help="probability of a segmentation sample; depth gets the rest (default: 0.5)")
    p.add_argument("--videos", type=int, default=64, help="synthetic corpus size (default: 64)")
    p.add_argument("--dim", type=int, default=64, help="token width (default: 64)")
    p.add_argument("--depth", type=int, default=2, help="transformer blocks (default: 2)")
    p.add_argument("--heads", type=int, default=4, help="attention heads (default: 4)")
    p.add_argument("--schedule-steps", type=int, default=1000, help="diffusion steps T_max (default: 1000)")
    p.add_argument("--random-init", action="store_true", help="initialize doubled I/O layers randomly instead of by duplication")
    p.add_argument("--out", required=True, help="output directory (checkpoint.bin, train_config.txt, losses.txt)")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("sample", parents=[common], help="generate latents with a trained toy model")
    p.add_argument("--checkpoint", required=True, help="checkpoint.bin from train-toy")
    p.add_argument("--task", choices=("seg", "depth"), default="seg", help="dense task (default: seg)")
    p.add_argument("--prompt", type=int, default=0, help="prompt class (default: 0)")
    p.add_argument("--steps", type=int, default=50, help="sampler steps (default: 50)")
    p.add_argument("--seed", type=int, default=0, help="noise seed (default: 0)")
    p.add_argument("--palette", default=None, help="palette for depth inversion (default: built-in)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("eval", help="evaluation metrics")
    esub = p.add_subparsers(dest="eval_command", metavar="kind", parser_class=_Parser)
    esub.required = True
    q = esub.add_parser("video", parents=[common], help="motion smoothness and feature consistency")
    q.add_argument("--frames", required=True, help="directory of RGB frames")
    q.add_argument("--subject-features", default=None, help="feature file for subject consistency")
    q.add_argument("--background-features", default=None, help="feature file for background consistency")
    q.add_argument("--out", default=None, help="directory for the report file")
    q.set_defaults(func=cmd_eval_video)

    q = esub.add_parser("depth", parents=[common], help="delta-1 accuracy and RMSE")
    q.add_argument("--pred", required=True, help="predicted depth frames")
    q.add_argument("--gt", required=True, help="reference 16-bit depth frames")
    q.add_argument("--pred-format", choices=("depth", "rgb"), default="depth", help="rgb inverts a spectral colormap first (default: depth)")
    q.add_argument("--palette", default=None, help="palette for rgb predictions (default: built-in)")
    q.add_argument("--align", action="store_true", help="least-squares affine alignment of pred to gt first")
    q.add_argument("--out", default=None, help="directory for the report file")
    q.set_defaults(func=cmd_eval_depth)

    q = esub.add_parser("frechet", parents=[common], help="Frechet distance between two feature sets")
    q.add_argument("--a", nargs="+", required=True, help="feature files of set A")
    q.add_argument("--b", nargs="+", required=True, help="feature files of set B")
    q.add_argument("--out", default=None, help="directory for the report file")
    q.set_defaults(func=cmd_eval_frechet)
    return parser


DOMAIN_ERRORS = (
    ValueError,
    OSError,
    RuntimeError,
)


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("pixelplanes: error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except DOMAIN_ERRORS as exc:
        print(f"pixelplanes: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
