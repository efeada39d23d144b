"""Command-line entry point.

Verbs: analyze, train, infer, profile, serve, score, augment.  Exit codes:
0 success, 1 usage error, 2 runtime failure (printed as one line naming
the error).  All numeric output uses '.' as the decimal separator and
fixed column order so golden-file comparisons are portable.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import analyzer, synthetic  # noqa: F401  (synthetic re-exported for -m use)
from . import graph as graphmod
from . import profiler, trainer, vision
from .emotions import EMOTIONS
from .session.service import ServeConfig, SessionService, parse_config
from .tensor import Tensor


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        raise UsageError(message)


def _parse_shape(text: str) -> tuple[int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise UsageError(f"--input-shape must be HxWxC, got {text!r}")
    return tuple(int(p) for p in parts)  # type: ignore[return-value]


def build_parser() -> _Parser:
    p = _Parser(prog="resmonet",
                description="Facial-emotion model tooling: analyze, train, "
                            "infer, profile, serve, score, augment.")
    sub = p.add_subparsers(dest="verb", required=True)

    a = sub.add_parser("analyze", help="static NP / multiply-add table for graph files")
    a.add_argument("graphs", nargs="+", help="graph files (one row each)")
    a.add_argument("--input-shape", default="224x224x3", type=_parse_shape)
    a.add_argument("--convention", choices=["per-weight", "per-activation"],
                   default="per-weight",
                   help="which multiply-add count the text table shows")
    a.add_argument("--csv", action="store_true", help="emit CSV instead of a table")

    t = sub.add_parser("train", help="train on a class-per-directory dataset")
    t.add_argument("dataset")
    t.add_argument("--epochs", type=int, default=150)
    t.add_argument("--batch", type=int, default=128)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--profile", choices=["auto", "default", "small"], default="auto",
                   help="channel profile; auto picks by image size")
    t.add_argument("--augment", action="store_true",
                   help="12-way augment the training subset (224x224 data)")
    t.add_argument("--out", default="model.rmnw", help="weight file to write")
    t.add_argument("--history", default="history.csv", help="history CSV to write")

    i = sub.add_parser("infer", help="class probabilities for one image")
    i.add_argument("weights")
    i.add_argument("image")
    i.add_argument("--graph", default=None,
                   help="graph file (default: <weights>.graph sidecar)")

    pr = sub.add_parser("profile", help="RTE / MMU protocol on a trained model")
    pr.add_argument("weights")
    pr.add_argument("--graph", default=None)
    pr.add_argument("--image", default=None, help="input image (default: seeded noise)")
    pr.add_argument("--runs", type=int, default=5)
    pr.add_argument("--duration", type=float, default=10.0)
    pr.add_argument("--sampling-period", type=float, default=0.01)

    s = sub.add_parser("serve", help="run the session service")
    s.add_argument("--config", default=None, help="key = value config file")

    sc = sub.add_parser("score", help="score an expert-responses CSV")
    sc.add_argument("responses")
    sc.add_argument("--csv", action="store_true")

    au = sub.add_parser("augment", help="write the 12 augmentation variants")
    au.add_argument("image")
    au.add_argument("outdir")
    return p


def _load_graph_sidecar(weights_path: str, graph_arg: str | None,
                        input_shape=None) -> graphmod.ModelGraph:
    path = Path(graph_arg) if graph_arg else Path(weights_path).with_suffix(".graph")
    if not path.exists():
        raise UsageError(f"no graph file at {path}; pass --graph")
    shape_file = path.read_text("utf-8")
    if input_shape is None:
        input_shape = _sidecar_shape(shape_file) or (224, 224, 3)
    return graphmod.parse_graph(shape_file, input_shape)


def _sidecar_shape(text: str):
    # the writer's first comment mentions "HxWxC input"
    for line in text.splitlines():
        if line.startswith("#") and "input" in line:
            for tok in line.split():
                if tok.count("x") == 2:
                    try:
                        return tuple(int(p) for p in tok.split("x"))
                    except ValueError:
                        continue
    return None


def cmd_analyze(args) -> int:
    models = []
    for path in args.graphs:
        g = graphmod.load_graph(path, input_shape=args.input_shape)
        models.append((Path(path).stem, g))
    rep = analyzer.report(models)
    if args.csv:
        sys.stdout.write(analyzer.render_csv(rep))
        return 0
    if args.convention == "per-activation":
        for row in rep.rows:
            row.total_multadds_per_weight = row.total_multadds_per_activation
    sys.stdout.write(analyzer.render_text(rep))
    return 0


def cmd_train(args) -> int:
    examples = vision.load_dataset(args.dataset)
    if not examples:
        raise vision.DataError(f"no images under {args.dataset}")
    classes = vision.list_classes(args.dataset)
    side = examples[0].image.height
    shape = (examples[0].image.height, examples[0].image.width, 3)
    prof = {"default": graphmod.DEFAULT_PROFILE, "small": graphmod.SMALL_PROFILE}.get(
        args.profile, graphmod.DEFAULT_PROFILE if side >= 128 else graphmod.SMALL_PROFILE)
    g = graphmod.assemble_resmonet(profile=prof, input_shape=shape,
                                   num_classes=len(classes))
    split = vision.split_dataset(examples, seed=args.seed,
                                 augment_train=args.augment)
    cfg = trainer.TrainConfig(epochs=args.epochs, batch_size=args.batch,
                              learning_rate=args.lr, momentum=args.momentum,
                              seed=args.seed)
    store, history = trainer.train(g, split, cfg)
    graphmod.save_weights(store, args.out)
    graphmod.save_graph(g, Path(args.out).with_suffix(".graph"))
    trainer.export_history(history, args.history)
    last = history.records[-1]
    print(f"trained {args.epochs} epochs on {len(split.train)} examples "
          f"({len(classes)} classes)")
    print(f"final train_acc {last.train_acc:.4f} test_acc {last.test_acc:.4f}")
    print(f"weights: {args.out}  graph: {Path(args.out).with_suffix('.graph')}  "
          f"history: {args.history}")
    return 0


def _prepare_input(image_path: str | None, g: graphmod.ModelGraph,
                   seed: int = 0) -> Tensor:
    side = g.input_shape[0]
    if image_path is None:
        rng = np.random.default_rng(seed)
        img = vision.Image(rng.integers(0, 256, size=g.input_shape, dtype=np.uint8))
    else:
        img = vision.read_ppm(image_path)
    if (img.height, img.width, 3) != g.input_shape:
        img = vision.preprocess(img, side=side)
    return Tensor(vision.to_unit_floats(img))


def cmd_infer(args) -> int:
    g = _load_graph_sidecar(args.weights, args.graph)
    store = graphmod.load_weights(args.weights, graph=g)
    x = _prepare_input(args.image, g)
    probs = graphmod.forward_model(g, store, x)
    print(" ".join(f"{p:.6f}" for p in probs.data))
    names = EMOTIONS if g.num_classes == len(EMOTIONS) else \
        tuple(f"class{i}" for i in range(g.num_classes))
    top = int(np.argmax(probs.data))
    print(f"# top: {names[top]} ({probs.data[top]:.4f})", file=sys.stderr)
    return 0


def cmd_profile(args) -> int:
    g = _load_graph_sidecar(args.weights, args.graph)
    store = graphmod.load_weights(args.weights, graph=g)
    x = _prepare_input(args.image, g)

    def runner():
        probs = graphmod.forward_model(g, store, x)
        return int(np.argmax(probs.data))

    report = profiler.profile_model(runner, runs=args.runs,
                                    run_duration=args.duration,
                                    sampling_period=args.sampling_period)
    print(report.summary())
    return 0


def cmd_serve(args) -> int:
    cfg = parse_config(args.config) if args.config else ServeConfig()
    service = SessionService(cfg)
    service.run_forever()
    return 0


def cmd_score(args) -> int:
    from . import experts
    report = experts.score_cohort(experts.load_responses_csv(args.responses))
    sys.stdout.write(experts.render_report_csv(report) if args.csv
                     else experts.render_report_text(report))
    return 0


def cmd_augment(args) -> int:
    img = vision.read_ppm(args.image)
    variants = vision.augment(img)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for i, var in enumerate(variants):
        vision.write_ppm(var, outdir / f"aug_{i:02d}.ppm")
    print(f"wrote {len(variants)} images to {outdir}")
    return 0


_COMMANDS = {
    "analyze": cmd_analyze,
    "train": cmd_train,
    "infer": cmd_infer,
    "profile": cmd_profile,
    "serve": cmd_serve,
    "score": cmd_score,
    "augment": cmd_augment,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.verb](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:  # pragma: no cover - interactive path
        return 2
    except Exception as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
