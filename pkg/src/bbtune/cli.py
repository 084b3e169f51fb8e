"""Command-line front end: ``bbtune {tune,sample,check,stats,tiling}``.

Exit codes: 0 success, 2 specification error, 3 tuning failure, 4 sampling
exhausted. Failures print one JSON object ``{"error": ..., "message": ...}``
on stderr; every run echoes its configuration (including the seed) there too.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import secrets
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .compile import lower
from .grammar import (
    classify,
    dependency_graph,
    parse,
    strongly_connected_components,
    well_founded,
)
from .grammar.spec import SpecError
from .sampler import (
    DegenerateBranch,
    Exhausted,
    FinalStateUnreachable,
    build_tables,
    default_window,
    interruptible_sample,
    sample_many,
    stats,
)
from .tiling import TileSet, build_tiling_spec
from .tuner import OPTIMAL, SolverConfig, TuningError, tune

EXIT_OK, EXIT_SPEC, EXIT_TUNING, EXIT_SAMPLING = 0, 2, 3, 4


def _freq_pair(text: str):
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=F, got {text!r}")
    return name, float(value)


def _window(text: str):
    lo, sep, hi = text.partition(",")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return int(lo), int(hi)


def _tuning_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("spec", type=Path, help="specification file")
    p.add_argument("--size", type=float, help="target expected size")
    p.add_argument("--freq", type=_freq_pair, nargs="+", action="extend", default=[],
                   metavar="NAME=F", help="frequency overrides")
    p.add_argument("--singular", action="store_true", help="tune at the singularity")
    p.add_argument("--trunc", type=int, help="truncation depth for MSet/Cycle")
    p.add_argument("--eps", type=float, default=1e-9, help="duality-gap tolerance")
    p.add_argument("--bound", type=float, help="norm bound on the log variables")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bbtune", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tune", help="tune a specification and print the result as JSON")
    _tuning_flags(p)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("sample", help="stream sampled structures as ND-JSON")
    _tuning_flags(p)
    p.add_argument("--window", type=_window, help="accepted size range LO,HI")
    p.add_argument("--approx", type=float, metavar="EPS",
                   help="accept sizes within (1 +- EPS) * size")
    p.add_argument("--interruptible", action="store_true",
                   help="rational specs: walk past --size to the next final state")
    p.add_argument("--seed", type=int)
    p.add_argument("-n", "--count", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1, help="worker threads (one seed shard each)")
    p.add_argument("--max-attempts", type=int, default=10**6)
    p.add_argument("--format", choices=("json", "text"), default="json")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("check", help="report well-foundedness, components and the program")
    p.add_argument("spec", type=Path)
    p.add_argument("--trunc", type=int, default=1)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("stats", help="frequency table of a sample file")
    p.add_argument("samples", type=Path)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("tiling", help="emit the specification of strip tilings")
    p.add_argument("--width", type=int, required=True, help="strip width W")
    p.add_argument("--tile-width", type=int, default=2, help="largest tile base")
    p.add_argument("--top-cells", type=int, help="largest number of top cells per tile")
    p.add_argument("--uniform", action="store_true",
                   help="tune every colour but one to an equal area share")
    p.add_argument("--out", type=Path)
    return ap


@contextlib.contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8") as fh:
            yield fh


def _echo(args) -> None:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    print(json.dumps({"config": cfg}), file=sys.stderr)


def _tune(args):
    ast = parse(args.spec.read_text(encoding="utf-8"))
    config = SolverConfig(tolerance=args.eps, bound=args.bound)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        result = tune(ast, size=args.size, freqs=dict(args.freq), singular=args.singular,
                      J=args.trunc, config=config)
    if result.status != OPTIMAL:
        raise TuningError(result)
    return result


def cmd_tune(args) -> int:
    result = _tune(args)
    with _output(args.out) as fh:
        fh.write(result.dumps() + "\n")
    return EXIT_OK


def _sample_window(args):
    if args.window is not None:
        return args.window
    if args.approx is not None or (args.singular and args.size is not None):
        if args.size is None:
            raise ValueError("--approx needs --size")
        return default_window(args.size, args.approx if args.approx is not None else 0.1)
    if args.singular:
        raise ValueError("singular sampling needs --window, --size or --interruptible")
    return None


def _shard(table, args, window, shard, count):
    gen = np.random.default_rng([args.seed, shard])
    if args.interruptible:
        return [interruptible_sample(table, int(args.size), gen) for _ in range(count)]
    return sample_many(table, count, gen, window, max_attempts=args.max_attempts)


def cmd_sample(args) -> int:
    if args.interruptible and args.size is None:
        raise ValueError("--interruptible needs --size")
    window = None if args.interruptible else _sample_window(args)
    table = build_tables(_tune(args))
    jobs = max(1, min(args.jobs, args.count))
    sizes = [args.count // jobs + (i < args.count % jobs) for i in range(jobs)]
    with ThreadPoolExecutor(jobs) as pool:
        shards = list(pool.map(lambda i: _shard(table, args, window, i, sizes[i]), range(jobs)))
    structures = [s for shard in shards for s in shard]
    with _output(args.out) as fh:
        for s in structures:
            if args.format == "json":
                fh.write(s.dumps() + "\n")
            else:
                fh.write(s.text() + "\n")
        if args.format == "json":
            fh.write(json.dumps({"stats": stats(structures), "seed": args.seed}) + "\n")
    return EXIT_OK


def cmd_check(args) -> int:
    ast = parse(args.spec.read_text(encoding="utf-8"))
    report = well_founded(ast)
    scc = strongly_connected_components(dependency_graph(ast))
    out = {
        "well_founded": True,
        "probe_depth": report.depth,
        "components": [list(c) for c in scc],
        "strongly_connected": scc.strongly_connected,
        "class": classify(ast),
        "program": lower(ast, args.trunc).to_json(),
    }
    with _output(args.out) as fh:
        fh.write(json.dumps(out, indent=1) + "\n")
    return EXIT_OK


def cmd_stats(args) -> int:
    rows, names = [], None
    for line in args.samples.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        rec = json.loads(line)
        if "counts" not in rec:
            continue
        names = names or list(rec["counts"])
        rows.append([rec["counts"][k] for k in names])
    with _output(args.out) as fh:
        fh.write(json.dumps(stats(rows, names), indent=1) + "\n")
    return EXIT_OK


def cmd_tiling(args) -> int:
    tiles = TileSet.family(args.tile_width, args.top_cells)
    freqs = None
    if args.uniform:
        freqs = {t.name: round(1.0 / len(tiles), 12) for t in tiles[:-1]}
    with _output(args.out) as fh:
        fh.write(build_tiling_spec(tiles, args.width, freqs))
    return EXIT_OK


COMMANDS = {"tune": cmd_tune, "sample": cmd_sample, "check": cmd_check, "stats": cmd_stats,
            "tiling": cmd_tiling}


def _fail(code: int, kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", 0) is None:
        args.seed = secrets.randbits(63)
    _echo(args)
    try:
        return COMMANDS[args.command](args)
    except SpecError as exc:
        return _fail(EXIT_SPEC, type(exc).__name__, str(exc))
    except TuningError as exc:
        return _fail(EXIT_TUNING, exc.result.status, str(exc))
    except DegenerateBranch as exc:
        return _fail(EXIT_TUNING, "DegenerateBranch", str(exc))
    except (Exhausted, FinalStateUnreachable) as exc:
        return _fail(EXIT_SAMPLING, type(exc).__name__, str(exc))
    except (KeyError, ValueError, OSError) as exc:
        return _fail(EXIT_SPEC, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
