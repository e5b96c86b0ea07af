"""``retroplan`` command line: gen, train, solve, bench."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .bench import (
    BenchConfig,
    BundleFormatError,
    UniverseParams,
    canonical_method,
    find_bundles,
    generate_target,
    generate_universe,
    load_bundle,
    mean_branching,
    read_train_bin,
    replay_trace,
    run_benchmark,
    run_method,
    training_corpus,
    write_bundle,
    write_train_bin,
)
from .molgraph import GraphParseError
from .policy import (
    PolicyConfigError,
    TrainConfig,
    TrainingError,
    init_weights,
    load_weights,
    loss_and_grads,
    save_weights,
    train,
)
from .rewrite import RuleError, dump_rules
from .routes import SOLVED, TIMED_OUT, format_route

EXIT_SOLVED, EXIT_FAILURE, EXIT_UNSOLVED, EXIT_TIMED_OUT, EXIT_USAGE = 0, 1, 2, 3, 64

METHOD_CHOICES = ("mcts", "mcts-policy", "bfs-policy", "bfs-heuristic")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # Exit code 2 means "unsolved" for solve, so usage errors get their own code.
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _search_flags(p: argparse.ArgumentParser, budget: int) -> None:
    p.add_argument("--weights", type=Path, help="policy weight file; uniform policy if omitted")
    p.add_argument("--budget", type=int, default=budget, help="simulations (mcts) or expansions (bfs)")
    p.add_argument("--walltime-secs", type=float, default=60.0, help="per-instance wall clock cap")
    p.add_argument("--c", type=float, default=3.0, help="exploration constant")
    p.add_argument("--topk", type=int, default=50, help="rules expanded per molecule")
    p.add_argument("--rollout-depth", type=int, default=20, help="rollout and search depth cap")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="retroplan", description=__doc__)
    parser.add_argument("--version", action="version", version=f"retroplan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a rule universe and target bundles")
    g.add_argument("--seed", type=int, default=0, help="universe seed")
    g.add_argument("--rules", type=int, default=300, help="rule universe size")
    g.add_argument("--building-blocks", type=int, default=40)
    g.add_argument("--depth", type=int, default=6, help="reference route length")
    g.add_argument("--count", type=int, default=1, help="number of targets")
    g.add_argument("--train-pairs", type=int, default=0,
                   help="also write this many training pairs from separate targets")
    g.add_argument("--out", type=Path, required=True)

    t = sub.add_parser("train", help="train a policy on train.bin files")
    t.add_argument("--data", type=Path, nargs="+", required=True,
                   help="train.bin files or directories searched for them")
    t.add_argument("--rules", type=int, help="rule universe size (default: from a sibling rules.txt)")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--learning-rate", type=float, default=0.01)
    t.add_argument("--batch-size", type=int, default=32)
    t.add_argument("--hidden-blocks", type=int, default=2)
    t.add_argument("--weight-decay", type=float, default=0.0)
    t.add_argument("--out", type=Path, required=True)

    s = sub.add_parser("solve", help="plan a route for one bundle's target")
    s.add_argument("--instance", type=Path, required=True, help="bundle directory")
    s.add_argument("--method", default="mcts", choices=METHOD_CHOICES)
    _search_flags(s, 9000)
    s.add_argument("--out", type=Path, help="route file (stdout if omitted)")

    b = sub.add_parser("bench", help="run methods over a directory of bundles")
    b.add_argument("--instances", type=Path, required=True)
    b.add_argument("--method", "--methods", dest="method", action="append",
                   help="method or comma list; repeatable (default: all three)")
    _search_flags(b, 2000)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--total-walltime-secs", type=float, default=float("inf"))
    b.add_argument("--out", type=Path, required=True)

    for p in (g, t, s, b):
        p.add_argument("--manifest", type=Path, help="JSON file whose keys set flag defaults")
    return parser


def _manifest_path(argv: Sequence[str]) -> str | None:
    for k, a in enumerate(argv):
        if a == "--manifest" and k + 1 < len(argv):
            return argv[k + 1]
        if a.startswith("--manifest="):
            return a.split("=", 1)[1]
    return None


def _apply_manifest(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    """Parse ``argv``; a ``--manifest`` file supplies defaults that explicit flags override."""
    path = _manifest_path(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if path is None or command is None:
        return parser.parse_args(argv)
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read manifest {path}: {exc}")
    if data.get("command", command) != command:
        parser.error(f"manifest is for {data['command']!r}, not {command!r}")
    sub = parser._subparsers._group_actions[0].choices[command]  # type: ignore[union-attr]
    known = {a.dest for a in sub._actions}
    unknown = sorted(set(data) - known - {"command", "version"})
    if unknown:
        parser.error(f"manifest has unknown keys: {', '.join(unknown)}")
    for a in sub._actions:
        if a.dest in data and a.dest != "manifest":
            a.required = False
            value = data[a.dest]
            if a.type is Path and isinstance(value, list):
                value = [Path(v) for v in value]
            sub.set_defaults(**{a.dest: value})
    return parser.parse_args(argv)


def _manifest(args: argparse.Namespace) -> dict:
    out = {"version": __version__}
    for k, v in sorted(vars(args).items()):
        if k == "func":
            continue
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, list):
            v = [str(x) if isinstance(x, Path) else x for x in v]
        elif isinstance(v, float) and not np.isfinite(v):
            v = str(v)
        out[k] = v
    return out


def _echo(manifest: dict, out_dir: Path | None = None) -> None:
    text = json.dumps(manifest, sort_keys=True)
    print(f"manifest: {text}")
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def cmd_gen(args: argparse.Namespace) -> int:
    for flag in ("rules", "building_blocks", "count"):
        if getattr(args, flag) < 1:
            raise UsageError(f"--{flag.replace('_', '-')} must be positive")
    if args.depth < 0 or args.train_pairs < 0:
        raise UsageError("--depth and --train-pairs must be non-negative")
    _echo(_manifest(args), args.out)
    params = UniverseParams(num_rules=args.rules, num_building_blocks=args.building_blocks)
    rules, bbs = generate_universe(args.seed, params)
    single = args.count == 1 and not args.train_pairs
    for k in range(args.count):
        inst = generate_target(rules, bbs, args.depth, k)
        dest = args.out if single else args.out / "targets" / f"t{k:03d}"
        write_bundle(inst, dest)
        print(f"{dest}: {len(rules)} rules, target size {len(inst.target)}, trace length {len(inst.trace)}")
    if args.train_pairs:
        x, y, used = training_corpus(rules, bbs, args.train_pairs, args.depth)
        dest = args.out / "train"
        dest.mkdir(parents=True, exist_ok=True)
        write_train_bin(dest / "train.bin", x, y)
        (dest / "rules.txt").write_text(dump_rules(rules))
        print(f"{dest / 'train.bin'}: {args.train_pairs} pairs from {used} targets")
    return 0


def _train_files(paths: Sequence[Path]) -> list[Path]:
    files: list[Path] = []
    for p in paths:
        if p.is_dir():
            found = sorted(p.rglob("train.bin"))
            if not found:
                raise UsageError(f"no train.bin under {p}")
            files.extend(found)
        elif p.is_file():
            files.append(p)
        else:
            raise UsageError(f"{p} does not exist")
    return files


def _rule_count(files: Sequence[Path]) -> int | None:
    for f in files:
        rules = f.parent / "rules.txt"
        if rules.exists():
            return sum(1 for line in rules.read_text().splitlines() if line.strip() and not line.startswith("#"))
    return None


def cmd_train(args: argparse.Namespace) -> int:
    files = _train_files(args.data)
    _echo(_manifest(args))
    parts = [read_train_bin(f) for f in files]
    parts = [(x, y) for x, y in parts if len(y)]
    if not parts:
        raise UsageError("training data is empty")
    widths = {x.shape[1] for x, _ in parts}
    if len(widths) != 1:
        raise BundleFormatError(f"train.bin files disagree on fingerprint size: {sorted(widths)}")
    x = np.concatenate([p[0] for p in parts])
    y = np.concatenate([p[1] for p in parts])
    num_rules = args.rules or _rule_count(files)
    if num_rules is None:
        raise UsageError("--rules is required when no rules.txt sits next to the data")
    cfg = TrainConfig(learning_rate=args.learning_rate, batch_size=args.batch_size, epochs=args.epochs,
                      depth=args.hidden_blocks, seed=args.seed, weight_decay=args.weight_decay)
    start, _ = loss_and_grads(init_weights(x.shape[1], cfg.depth, num_rules, 0), x, y)
    w = train(x, y, num_rules, cfg)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_weights(w, args.out)
    print(f"{len(y)} pairs, {num_rules} rules: loss {start:.4f} at init, {w.final_loss:.4f} final")
    print(f"wrote {args.out}")
    return 0


def _bench_config(args: argparse.Namespace) -> BenchConfig:
    if args.budget < 0 or args.topk < 1 or args.rollout_depth < 0:
        raise UsageError("--budget and --rollout-depth must be non-negative, --topk positive")
    return BenchConfig(budget=args.budget, walltime=args.walltime_secs, c=args.c, top_k=args.topk,
                       rollout_depth=args.rollout_depth, seed=args.seed,
                       workers=getattr(args, "workers", 1),
                       total_walltime=getattr(args, "total_walltime_secs", float("inf")))


def cmd_solve(args: argparse.Namespace) -> int:
    cfg = _bench_config(args)
    if not (args.instance / "target.txt").exists():
        raise UsageError(f"{args.instance} is not an instance bundle")
    _echo(_manifest(args))
    inst = load_bundle(args.instance)
    weights = load_weights(args.weights) if args.weights else None
    result = run_method(args.method, inst, weights, cfg)
    text = format_route(inst.target, result, inst.rules)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    it = result.stats.get("iterations", 0)
    print(f"{result.status}: {len(result.route)} steps, {it} iterations, {result.elapsed:.2f}s", file=sys.stderr)
    return {SOLVED: EXIT_SOLVED, TIMED_OUT: EXIT_TIMED_OUT}.get(result.status, EXIT_UNSOLVED)


def cmd_bench(args: argparse.Namespace) -> int:
    from .plots import plot_report

    cfg = _bench_config(args)
    methods = [m for item in (args.method or ["bfs-heuristic,bfs-policy,mcts-policy"]) for m in item.split(",") if m]
    try:
        methods = list(dict.fromkeys(canonical_method(m) for m in methods))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    bundles = find_bundles(args.instances) if args.instances.is_dir() else []
    if not bundles:
        raise UsageError(f"no instance bundles under {args.instances}")
    _echo(_manifest(args), args.out)
    instances = [load_bundle(b) for b in bundles]
    for inst in instances:
        if inst.trace and not replay_trace(inst):
            raise BundleFormatError(f"{inst.name}: reference trace does not replay")
    weights = load_weights(args.weights) if args.weights else None
    report = run_benchmark(instances, methods, cfg, weights)
    traced = [i for i in instances if i.trace]
    report.mean_branching = float(np.mean([mean_branching(i) for i in traced])) if traced else None
    (args.out / "report.tsv").write_text(report.to_tsv())
    (args.out / "report.txt").write_text(report.to_text())
    plot_report(report, args.out / "report.png")
    sys.stdout.write(report.to_text())
    print(f"wrote {args.out / 'report.tsv'}, report.txt, report.png")
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "solve": cmd_solve, "bench": cmd_bench}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = _apply_manifest(parser, list(sys.argv[1:] if argv is None else argv))
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except (BundleFormatError, PolicyConfigError, TrainingError, RuleError, GraphParseError, OSError) as exc:
        print(f"retroplan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
