"""Command-line entry point: ``poolroutes {train,sptp,tree,routes,gradcheck}``.

Every command writes ``report.json`` (and ``curve.csv`` where there is a
curve) into ``--out``.  Exit codes: 0 success, 1 experiment failure
(divergence, failed gradient check), 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import secrets
import sys
import tempfile
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("poolroutes")


class UsageError(Exception):
    pass


def atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def write_report(out: Path, command: str, config: dict, result: dict):
    doc = {"schema_version": SCHEMA_VERSION, "command": command, "config": config,
           "result": result}
    atomic_write(out / "report.json", json.dumps(doc, indent=2, default=_json_default) + "\n")


def write_curve(out: Path, header, rows):
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    w = csv.writer(buf)
    w.writerow(header)
    w.writerows(rows)
    atomic_write(out / "curve.csv", buf.getvalue())


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def load_config_file(path: str, parser: argparse.ArgumentParser, command: str) -> dict:
    """Read a JSON config whose keys mirror the command's long flags."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}")
    if not isinstance(cfg, dict):
        raise UsageError(f"{path}: top level must be an object")
    sub = _subparser(parser, command)
    known = {a.dest for a in sub._actions}
    for key in cfg:
        if key.replace("-", "_") not in known:
            raise UsageError(f"{path}: unknown field {key!r} for command {command!r}")
    return {k.replace("-", "_"): v for k, v in cfg.items()}


def _subparser(parser, command):
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices[command]
    raise KeyError(command)


# commands ----------------------------------------------------------------

def cmd_train(args) -> int:
    from .arch import build_spec, canonical_arch
    from .data import DatasetError, load_cifar10
    from .experiments.training import DivergenceError, default_config, train
    from .network import ArchSpec
    from .optim import GroupHyper, HyperSet

    if args.spec:
        try:
            spec = ArchSpec.from_json(Path(args.spec).read_text())
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise UsageError(f"bad --spec {args.spec}: {e}")
        name = args.arch or "A-LeNet5-a"
    else:
        if not args.arch:
            raise UsageError("train needs --arch or --spec")
        try:
            spec = build_spec(args.arch)
            name = canonical_arch(args.arch)
        except KeyError as e:
            raise UsageError(str(e.args[0]))
    try:
        cfg = default_config(name, seed=args.seed, dtype=args.dtype,
                             deterministic=args.deterministic, augment=not args.no_augment,
                             nesterov=args.nesterov)
    except KeyError as e:
        raise UsageError(str(e.args[0]))
    if not args.paper_scale:
        cfg.epochs = 20
    if args.epochs is not None:
        cfg.epochs = args.epochs
    if args.batch_size is not None:
        cfg.batch_size = args.batch_size
    if args.lr is not None or args.momentum is not None or args.l2 is not None:
        groups = {}
        for g, h in cfg.hypers.groups.items():
            if cfg.hypers.single_group and groups:
                groups[g] = next(iter(groups.values()))
                continue
            lr = args.lr if args.lr is not None else h.lr
            sched = type(h.schedule)(lr, h.schedule.pieces, h.schedule.phase)
            groups[g] = GroupHyper(lr, args.momentum if args.momentum is not None else h.momentum,
                                   args.l2 if args.l2 is not None else h.l2, sched)
        cfg.hypers = HyperSet(cfg.hypers.name, groups, cfg.hypers.epochs, cfg.hypers.batch_size)
    if args.exclude_l2:
        cfg.l2_exclude = tuple(args.exclude_l2)

    config = {"arch": spec.name, "spec": spec.to_dict(), **cfg.to_dict(),
              "data": args.data or os.environ.get("POOLROUTES_CIFAR10"),
              "max_train": args.max_train, "max_test": args.max_test,
              "scale": "paper" if args.paper_scale else "desk"}
    out = Path(args.out)
    if args.dry_run:
        write_report(out, "train", config, {"dry_run": True})
        print(json.dumps(config, indent=2, default=_json_default))
        return EXIT_OK
    try:
        train_set, test_set = load_cifar10(args.data, dtype=np.dtype(cfg.dtype))
    except DatasetError as e:
        raise UsageError(str(e))
    if args.max_train:
        train_set = train_set.subset(slice(0, args.max_train))
    if args.max_test:
        test_set = test_set.subset(slice(0, args.max_test))

    def progress(epoch, rep):
        _write_train_outputs(out, config, rep)

    try:
        report, net = train(spec, cfg, train_set, test_set, on_epoch=progress)
    except DivergenceError as e:
        _write_train_outputs(out, config, e.report, error=str(e))
        log.error("%s", e)
        return EXIT_FAIL
    _write_train_outputs(out, config, report)
    np.savez(out / "checkpoint.npz", **net.state_dict())
    print(f"final test accuracy {report.final_test_acc:.4f}")
    return EXIT_OK


def _write_train_outputs(out, config, report, error=None):
    result = report.to_dict()
    if error:
        result["error"] = error
    write_report(out, "train", config, result)
    rows = [(e, report.train_loss[e], report.train_acc[e],
             report.test_acc[e] if e < len(report.test_acc) else "")
            for e in range(len(report.train_loss))]
    write_curve(out, ["epoch", "loss", "train_acc", "test_acc"], rows)


def cmd_sptp(args) -> int:
    from .experiments.sptp import SpTpConfig, sp_tp_probability, sp_tp_vgg8

    out = Path(args.out)
    if args.mode == "vgg8":
        from .data import DatasetError, load_cifar10
        try:
            train_set, _ = load_cifar10(args.data)
        except DatasetError as e:
            raise UsageError(str(e))
        rng = np.random.default_rng(args.seed)
        idx = np.sort(rng.choice(len(train_set), size=args.inputs, replace=False))
        seeds = [int(s) for s in np.random.SeedSequence(args.seed).generate_state(args.filter_sets)]
        est = sp_tp_vgg8(train_set.images[idx], seeds, identity=args.identity_filters)
        config = {"mode": "vgg8", "inputs": args.inputs, "filter_sets": args.filter_sets,
                  "filter_seeds": seeds, "seed": args.seed,
                  "identity_filters": args.identity_filters,
                  "data": args.data or os.environ.get("POOLROUTES_CIFAR10")}
        write_report(out, "sptp", config, est.to_dict())
        write_curve(out, ["x", "p", "stderr"], [("vgg8", est.p, est.stderr)])
        print(f"vgg8 p={est.p:.3g} stderr={est.stderr:.2g}")
        return EXIT_OK

    if args.paper_scale:
        extent, ns, samples = 1024, [2, 4, 6, 8, 10], 20_000
    else:
        extent, ns, samples = 256, [2, 4, 6], 2000
    extent = args.extent or extent
    ns = args.ns or ns
    samples = args.samples or samples
    depths = tuple([args.depth] * args.layers)
    rows, results = [], []
    for n in ns:
        cfg = SpTpConfig(extent=extent, depths=depths, n=n, samples=samples, seed=args.seed,
                         identity_filters=args.identity_filters)
        try:
            cfg.validate()
        except ValueError as e:
            raise UsageError(str(e))
        est = sp_tp_probability(cfg)
        rows.append((n, est.p, est.stderr))
        results.append(est.to_dict())
        print(f"n={n} p={est.p:.4g} stderr={est.stderr:.2g}", flush=True)
    config = {"mode": "chain", "extent": extent, "ns": ns, "samples": samples,
              "layers": args.layers, "depth": args.depth, "seed": args.seed,
              "identity_filters": args.identity_filters,
              "scale": "paper" if args.paper_scale else "desk"}
    write_report(out, "sptp", config, {"curve": results})
    write_curve(out, ["x", "p", "stderr"], rows)
    return EXIT_OK


def cmd_tree(args) -> int:
    from .experiments.tree import tree_disagreement_prob

    est = tree_disagreement_prob(args.depth, tuple(args.values), args.trials, args.seed)
    config = {"depth": args.depth, "values": args.values, "trials": args.trials,
              "seed": args.seed}
    write_report(Path(args.out), "tree", config, est.to_dict())
    print(f"P(greedy misses best product) = {est.p:.4g} ± {est.stderr:.2g}")
    return EXIT_OK


def cmd_routes(args) -> int:
    from .pooling import (expected_route_count, parse_stack, reduction, route_mask,
                          route_report, stack_cell)

    try:
        stack = parse_stack(args.stack)
    except ValueError as e:
        raise UsageError(str(e))
    window = args.window or reduction(stack)
    if window != reduction(stack):
        raise UsageError(f"--window {window} does not match the stack's reduction "
                         f"{reduction(stack)}")
    rng = np.random.default_rng(args.seed)
    counts, classes, example = {}, {}, None
    for t in range(args.trials):
        x = rng.standard_normal((1, 1, window, window))
        (rep,) = route_report(route_mask(stack, x), window, stack_cell(stack))
        counts[rep.count] = counts.get(rep.count, 0) + 1
        classes[rep.classification] = classes.get(rep.classification, 0) + 1
        if example is None:
            example = rep.to_dict()
    config = {"stack": args.stack, "window": window, "trials": args.trials, "seed": args.seed}
    result = {"expected_count": expected_route_count(stack), "count_histogram": counts,
              "classification_histogram": classes, "example": example}
    write_report(Path(args.out), "routes", config, result)
    only = next(iter(counts)) if len(counts) == 1 else None
    cls = next(iter(classes)) if len(classes) == 1 else "mixed"
    print(f"stack {args.stack}: count {only if only is not None else counts}, {cls}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from . import gradcheck

    if args.all or not args.only:
        results = gradcheck.run_all(args.trials)
    else:
        fns = {"conv": gradcheck.check_conv, "fc": gradcheck.check_fc,
               "batchnorm": gradcheck.check_batchnorm,
               "softmax": gradcheck.check_softmax_ce, "network": gradcheck.check_network}
        results = []
        for name in args.only:
            if name in fns:
                results.append(fns[name](args.trials))
            elif name in gradcheck.ACCEPTANCE_STACKS:
                results.append(gradcheck.check_stack(gradcheck.ACCEPTANCE_STACKS[name],
                                                     args.trials))
            else:
                raise UsageError(f"unknown check {name!r}")
    for r in results:
        print(r.row())
    rows = [{"name": r.name, "max_rel_error": r.max_rel_error, "tol": r.tol,
             "trials": r.trials, "passed": r.passed} for r in results]
    write_report(Path(args.out), "gradcheck", {"trials": args.trials}, {"checks": rows})
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


# parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poolroutes", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file whose keys mirror the long flags")
        sp.add_argument("--seed", type=int, default=None,
                        help="random seed (drawn and echoed when omitted)")
        sp.add_argument("--out", default="runs/latest", help="output directory")
        return sp

    t = common(sub.add_parser("train", help="train an architecture on CIFAR-10"))
    t.add_argument("--arch")
    t.add_argument("--spec", help="ArchSpec JSON file (overrides --arch for the layout)")
    t.add_argument("--data", help="CIFAR-10 binary directory (default $POOLROUTES_CIFAR10)")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float, help="override base learning rate of every group")
    t.add_argument("--momentum", type=float)
    t.add_argument("--l2", type=float)
    t.add_argument("--exclude-l2", nargs="*", default=[],
                   help="parameter-name suffixes exempt from L2, e.g. bias gamma beta")
    t.add_argument("--dtype", default="float32", choices=["float32", "float64"])
    t.add_argument("--nesterov", default="lookahead", choices=["lookahead", "buffer"])
    t.add_argument("--no-augment", action="store_true")
    t.add_argument("--max-train", type=int)
    t.add_argument("--max-test", type=int)
    t.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True)
    scale = t.add_mutually_exclusive_group()
    scale.add_argument("--paper-scale", action="store_true", help="published epochs")
    scale.add_argument("--desk-scale", action="store_true", help="20 epochs (default)")
    t.add_argument("--dry-run", action="store_true", help="resolve and echo config only")
    t.set_defaults(func=cmd_train)

    s = common(sub.add_parser("sptp", help="sequence vs top pooling probability"))
    s.add_argument("--mode", choices=["chain", "vgg8"], default="chain")
    s.add_argument("--extent", type=int)
    s.add_argument("--ns", type=int, nargs="+")
    s.add_argument("--samples", type=int)
    s.add_argument("--layers", type=int, default=10)
    s.add_argument("--depth", type=int, default=1)
    s.add_argument("--identity-filters", action="store_true")
    s.add_argument("--data")
    s.add_argument("--inputs", type=int, default=100)
    s.add_argument("--filter-sets", type=int, default=5)
    sc = s.add_mutually_exclusive_group()
    sc.add_argument("--paper-scale", action="store_true")
    sc.add_argument("--desk-scale", action="store_true")
    s.set_defaults(func=cmd_sptp)

    tr = common(sub.add_parser("tree", help="greedy vs global binary-tree decisions"))
    tr.add_argument("--depth", type=int, default=3)
    tr.add_argument("--values", type=float, nargs="+", default=[1.0, 10.0, 1000.0])
    tr.add_argument("--trials", type=int, default=100_000)
    tr.set_defaults(func=cmd_tree)

    r = common(sub.add_parser("routes", help="count backprop routes through a pooling stack"))
    r.add_argument("--stack", required=False, help='e.g. "AP3,MP2" (leftmost applied first)')
    r.add_argument("--window", type=int)
    r.add_argument("--trials", type=int, default=1000)
    r.set_defaults(func=cmd_routes)

    g = common(sub.add_parser("gradcheck", help="finite-difference checks of every backward"))
    g.add_argument("--all", action="store_true")
    g.add_argument("--only", nargs="+")
    g.add_argument("--trials", type=int, default=20)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = load_config_file(args.config, parser, args.command)
            explicit = parser.parse_args(argv)
            defaults = _subparser(parser, args.command).parse_args([])
            for key, value in cfg.items():
                # command-line flags win over the config file
                if getattr(explicit, key, None) == getattr(defaults, key, None):
                    setattr(args, key, value)
        if args.seed is None:
            args.seed = secrets.randbelow(2 ** 31)
        if args.command == "routes" and not args.stack:
            raise UsageError("routes needs --stack")
        return args.func(args)
    except UsageError as e:
        print(f"poolroutes {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
