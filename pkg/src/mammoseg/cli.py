"""Command-line entry point: ``mammoseg {detect,train,evaluate,phantoms,convert}``.

Exit codes: 0 success, 1 partial failure (see the run manifest), 2 invalid
invocation or unusable input.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import List, Optional

from . import classify
from .errors import MammosegError
from .evaluation import read_truth, write_truth
from .features import read_feature_table
from .imaging import load_image, save_image
from .phantoms import make_phantoms
from .pipeline import (PipelineConfig, detect, evaluate, label_detections, rescore,
                       results_from_run, train)

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("mammoseg")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mammoseg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("detect", help="detect candidate masses in images")
    d.add_argument("images", nargs="+")
    d.add_argument("--out", required=True, help="run directory")
    d.add_argument("--config", help="flat key=value config file")
    d.add_argument("--model", help="SVM model file; without it every candidate is kept")
    d.add_argument("--seed", type=_seed)

    t = sub.add_parser("train", help="grid-search and fit the ROI classifier")
    t.add_argument("table", help="labelled features.csv, or a detect run directory with --truth")
    t.add_argument("--out", required=True)
    t.add_argument("--truth", help="truth file used to label a detect run")
    t.add_argument("--flip-y", action="store_true", help="truth y is already a top-left row")
    t.add_argument("--seed", type=_seed, default=0)
    t.add_argument("--config", help="config file (its seed is used unless --seed is given)")

    e = sub.add_parser("evaluate", help="score a detect run against ground truth")
    e.add_argument("run", help="detect run directory")
    e.add_argument("--truth", required=True)
    e.add_argument("--flip-y", action="store_true")
    e.add_argument("--model", help="rescore candidates with this model")
    e.add_argument("--out", help="report directory (default: the run directory)")

    ph = sub.add_parser("phantoms", help="write synthetic phantoms and a truth file")
    ph.add_argument("--out", required=True)
    ph.add_argument("--count", type=int, default=40)
    ph.add_argument("--seed", type=_seed, default=0)
    ph.add_argument("--format", choices=("png", "pgm"), default="png")

    c = sub.add_parser("convert", help="convert between PGM and PNG")
    c.add_argument("src")
    c.add_argument("dst")
    c.add_argument("--plain", action="store_true", help="write ASCII (P2) PGM")
    return p


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if getattr(args, "config", None) else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _truth(path, heights, flip_y: bool):
    return read_truth(path, heights, origin="top-left" if flip_y else "bottom-left")


def cmd_detect(args) -> int:
    cfg = _load_config(args)
    model = classify.load_model(args.model) if args.model else None
    out = detect(args.images, args.out, cfg, model)
    print(f"{len(out['results'])} image(s) processed, {len(out['failures'])} failed -> {args.out}")
    return EXIT_PARTIAL if out["failures"] else EXIT_OK


def cmd_train(args) -> int:
    if os.path.isdir(args.table):
        if not args.truth:
            raise MammosegError("training from a run directory requires --truth")
        results = results_from_run(args.table)
        truths = _truth(args.truth, {r.image_id: r.shape[0] for r in results}, args.flip_y)
        rows = label_detections(results, truths)
    else:
        rows = read_feature_table(args.table)
    seed = args.seed if args.config is None else _load_config(args).seed
    model, gs = train(rows, args.out, seed=seed)
    print(f"selected C={gs.params.C:g} sigma={gs.params.sigma:g} "
          f"cv_hm={gs.metrics.harmonic_mean:.4f} support={len(model.alphas)} -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    results = results_from_run(args.run)
    if args.model:
        rescore(results, classify.load_model(args.model))
    truths = _truth(args.truth, {r.image_id: r.shape[0] for r in results}, args.flip_y)
    report = evaluate(results, truths, args.out or args.run)
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_phantoms(args) -> int:
    if args.count < 1:
        raise MammosegError("--count must be >= 1")
    os.makedirs(args.out, exist_ok=True)
    phantoms = make_phantoms(args.count, args.seed)
    for p in phantoms:
        save_image(p.image, os.path.join(args.out, f"{p.image_id}.{args.format}"))
    write_truth(os.path.join(args.out, "truth.txt"), [t for p in phantoms for t in p.truths],
                {p.image_id: p.image.height for p in phantoms})
    print(f"{len(phantoms)} phantom(s) -> {args.out}")
    return EXIT_OK


def cmd_convert(args) -> int:
    save_image(load_image(args.src), args.dst, plain=args.plain)
    return EXIT_OK


COMMANDS = {"detect": cmd_detect, "train": cmd_train, "evaluate": cmd_evaluate,
            "phantoms": cmd_phantoms, "convert": cmd_convert}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (MammosegError, OSError, ValueError) as exc:
        print(f"mammoseg {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
