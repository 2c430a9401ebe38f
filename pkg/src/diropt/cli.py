"""Command-line entry point: ``diropt run|sweep|verify|gen-graph``.

Exit codes: 0 success, 2 configuration error, 3 when every run diverged.
"""

import argparse
import logging
import sys
from pathlib import Path

from . import experiments, fileio, verify
from .config import load_config
from .errors import ConfigError, DiroptError
from .graph import build_mixing_matrix, random_network

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3


def _grid(text):
    try:
        vals = [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"not a comma-separated list of numbers: {text!r}", "grid") from None
    if not vals or any(v <= 0 for v in vals):
        raise ConfigError("grid needs positive step sizes", "grid")
    return vals


def cmd_run(args):
    cfg = load_config(args.config)
    report = experiments.run_experiment(cfg)
    for r in report.results:
        it = "-" if r.iterations is None else r.iterations
        print(f"{r.label:8s} {r.algorithm:17s} alpha={r.alpha:<10.6g} {r.status:9s} iters={it}")
    print(f"outputs in {cfg.resolved_output_dir()}")
    return EXIT_DIVERGED if report.all_diverged else EXIT_OK


def cmd_sweep(args):
    cfg = load_config(args.config)
    grid = _grid(args.grid)
    tables = experiments.sweep_alpha(cfg, grid)
    text = experiments.format_sweep(tables)
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(text)
    sys.stdout.write(text)
    every = [r for t in tables for r in t.rows]
    return EXIT_DIVERGED if all(r["status"] == experiments.DIVERGED for r in every) else EXIT_OK


def cmd_verify(args):
    ok_all = True
    for name, ok, detail in verify.run_all():
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        ok_all = ok_all and ok
    return EXIT_OK if ok_all else EXIT_FAIL


def cmd_gen_graph(args):
    if args.n < 1:
        raise ConfigError("must be >= 1", "n")
    net, tries = random_network(args.n, args.prob, args.seed)
    text = fileio.graph_to_text(net)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.matrix:
        fileio.write_matrix(build_mixing_matrix(net).A, args.matrix)
    print(f"# strongly connected after {tries} draw(s)", file=sys.stderr)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="diropt", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run every (algorithm, step size) cell of a config")
    r.add_argument("config")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="step-size sweep with critical-value estimate")
    s.add_argument("config")
    s.add_argument("--grid", required=True, help="comma-separated step sizes")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="push-sum, reduction and prox self-checks")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("gen-graph", help="random strongly connected digraph")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--prob", type=float, default=0.5)
    g.add_argument("--out", default="")
    g.add_argument("--matrix", default="", help="also write the mixing matrix CSV here")
    g.set_defaults(func=cmd_gen_graph)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DiroptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
