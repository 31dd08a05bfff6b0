"""Command-line front end: ``otfuse {generate,train-heads,run,verify,dump-plan}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 invariant failure.
Set ``OTFUSE_LOG`` (e.g. ``DEBUG``) for progress logging on stderr.
"""

import argparse
import csv
import io
import logging
import os
import sys
import time

import numpy as np

from .config import ExperimentConfig
from .exceptions import CapacityError, DataError, NumericError, OTFuseError, ParameterError, ShapeError
from .pipeline import TraversabilityPipeline, load_heads, save_heads
from .report import delta_svg, samples_csv
from .scene_anchor import ATTRIBUTES, classify_attribute, train_heads
from .synthetic import generate_dataset, load_manifest, load_scene, load_table, write_dataset
from .transport import format_plan
from .verify import run_checks, sweep_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("otfuse")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; our contract reserves 2 for data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p, dataset=False):
    p.add_argument("--config", metavar="PATH", help="experiment config (JSON)")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--out", metavar="DIR")
    if dataset:
        p.add_argument("--dataset", metavar="DIR", required=True, help="directory written by 'generate'")


def _fusion_flags(p):
    p.add_argument("--heads", metavar="PATH", help="trained heads (default: the table's initial heads)")
    p.add_argument("--epsilon", type=float, metavar="F")
    p.add_argument("--lambda", dest="fusion_lambda", type=float, metavar="F")


def build_parser():
    parser = _Parser(prog="otfuse", description="Scene-anchored optimal-transport fusion on synthetic scenes.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    _common(p)

    p = sub.add_parser("train-heads", help="fit attribute heads on the known combinations")
    _common(p, dataset=True)
    p.add_argument("--steps", type=int, metavar="N")

    p = sub.add_parser("run", help="run the pipeline and write split reports")
    _common(p, dataset=True)
    _fusion_flags(p)
    p.add_argument("--parallel", type=int, metavar="N")
    p.add_argument("--format", dest="output_format", choices=("csv", "svg", "both"))
    p.add_argument("--dump-plans", action="store_true", help="also write every transport plan")

    p = sub.add_parser("verify", help="run the invariant suite")
    _common(p)
    p.add_argument("--inject-corruption", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("dump-plan", help="print the transport plans of one sample")
    _common(p, dataset=True)
    _fusion_flags(p)
    p.add_argument("--sample", metavar="ID", required=True)
    return parser


def resolve_config(args, manifest=None):
    """Config file, else the dataset's stored config, else defaults; flags override."""
    if args.config:
        if not os.path.isfile(args.config):
            raise DataError(f"config file not found: {args.config}")
        config = ExperimentConfig.load(args.config)
    elif manifest is not None:
        config = ExperimentConfig.from_dict(manifest["config"])
    else:
        config = ExperimentConfig()
    overrides = {k: getattr(args, k, None) for k in ("seed", "out", "epsilon", "fusion_lambda", "parallel", "output_format")}
    return config.updated(**overrides)


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _out_dir(config):
    try:
        os.makedirs(config.out, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {config.out}: {exc.strerror}") from exc
    return config.out


def _load_scenes(dataset, manifest):
    return [load_scene(dataset, entry) for entry in manifest["samples"]]


def _pipeline(args, config, dataset):
    table = load_table(dataset)
    heads = load_heads(args.heads) if args.heads else [table.heads[a] for a in ATTRIBUTES]
    return TraversabilityPipeline(
        table, tuple(heads), config.sinkhorn_config(), config.fusion_lambda, config.projection, config.pooling
    )


def cmd_generate(args):
    config = resolve_config(args)
    out = _out_dir(config)
    table, scenes = generate_dataset(config)
    write_dataset(config, table, scenes, out)
    log.info("wrote %d samples to %s", len(scenes), out)
    print(f"generated {len(scenes)} samples in {out}")
    return EXIT_OK


def cmd_train_heads(args):
    manifest = load_manifest(args.dataset)
    config = resolve_config(args, manifest)
    steps = config.head_steps if args.steps is None else args.steps
    if steps < 0:
        raise UsageError("--steps must be nonnegative")
    space = config.attribute_space
    train = config.train_set()
    table = load_table(args.dataset)
    scenes = [s for s in _load_scenes(args.dataset, manifest) if s.combination in train]
    rows = [(s.cls_embedding, *space.label_indices(s.combination)) for s in scenes]
    heads, trace = train_heads(rows, [table.heads[a] for a in ATTRIBUTES], steps, config.learning_rate)

    out = _out_dir(config)
    save_heads(heads, os.path.join(out, "heads.json"))
    _write(os.path.join(out, "loss_trace.csv"), "step,loss\n" + "".join(f"{i},{v:.10f}\n" for i, v in enumerate(trace)))
    X = np.array([r[0] for r in rows])
    acc = {}
    for a, h in enumerate(heads):
        pred = classify_attribute(X, h).argmax(axis=1)
        acc[ATTRIBUTES[a]] = 100.0 * float(np.mean(pred == np.array([r[1 + a] for r in rows])))
    _write(os.path.join(out, "head_accuracy.csv"), "attribute,accuracy\n" + "".join(f"{k},{v:.4f}\n" for k, v in acc.items()))
    print(f"trained heads on {len(rows)} samples; final loss {trace[-1]:.6f}")
    for k, v in acc.items():
        print(f"  {k}: {v:.2f}%")
    return EXIT_OK


def cmd_run(args):
    manifest = load_manifest(args.dataset)
    config = resolve_config(args, manifest)
    pipe = _pipeline(args, config, args.dataset)
    scenes = _load_scenes(args.dataset, manifest)
    start = time.perf_counter()
    results = pipe.run_many(scenes, parallel=config.parallel, keep_plans=args.dump_plans)
    log.info("pipeline over %d samples took %.2fs", len(scenes), time.perf_counter() - start)
    unconverged = sum(not p.converged for r in results for p in r.plans)
    if unconverged:
        log.warning("%d transport plans did not reach tolerance", unconverged)
    report = pipe.report(results, scenes, config.train_set())

    out = _out_dir(config)
    if config.output_format in ("csv", "both"):
        _write(os.path.join(out, "report.csv"), report.to_csv())
        _write(os.path.join(out, "samples.csv"), samples_csv(results))
    if config.output_format in ("svg", "both"):
        _write(os.path.join(out, "report.svg"), delta_svg(report))
    if args.dump_plans:
        blocks = []
        for r in sorted(results, key=lambda r: r.sample_id):
            for branch, plan in zip(("img", "normal"), r.plans):
                blocks.append(f"# {r.sample_id} {branch}\n" + format_plan(plan))
        _write(os.path.join(out, "plans.txt"), "\n".join(blocks))
    o = report.overall
    print(f"{len(results)} samples: overall mIoU {o['mIoU']:.2f}, delta mIoU {report.delta['mIoU']:+.2f}")
    return EXIT_OK


def cmd_verify(args):
    config = resolve_config(args)
    results, sweep = run_checks(config, inject_corruption=args.inject_corruption)
    if args.out:
        _write(os.path.join(_out_dir(config), "eps_sweep.csv"), sweep_csv(sweep))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_INVARIANT if failed else EXIT_OK


def cmd_dump_plan(args):
    manifest = load_manifest(args.dataset)
    config = resolve_config(args, manifest)
    entry = next((e for e in manifest["samples"] if e["id"] == args.sample), None)
    if entry is None:
        raise DataError(f"sample {args.sample!r} not in dataset")
    result = _pipeline(args, config, args.dataset).run(load_scene(args.dataset, entry), keep_plans=True)
    text = "".join(f"# {args.sample} {b}\n" + format_plan(p) + "\n" for b, p in zip(("img", "normal"), result.plans))
    if args.out:
        _write(os.path.join(_out_dir(config), f"{args.sample}_plans.txt"), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "train-heads": cmd_train_heads,
    "run": cmd_run,
    "verify": cmd_verify,
    "dump-plan": cmd_dump_plan,
}


def main(argv=None):
    level = os.environ.get("OTFUSE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ParameterError) as exc:
        print(f"otfuse: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, CapacityError) as exc:
        print(f"otfuse: invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (DataError, ShapeError, OTFuseError, OSError, KeyError) as exc:
        print(f"otfuse: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
