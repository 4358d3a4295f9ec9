"""Command line entry point: ``oneway-locc <subcommand> [options]``.

Exit codes: 0 on completion, 2 on invalid input, 3 when the embedded
C^3 (x) C^5 example data fails its checksum.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .channel import Direction, KrausChannel, channel_rank, estimate_n
from .core import DimensionError, Subspace
from .objective import (CERTIFY_RESTARTS, FORWARD_RESTARTS, SearchConfig, minimize_h,
                        minimize_h_partial)
from .protocol import UnreliableProtocolError, protocol_from_search, verify_protocol

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CHECKSUM = 3


def _common(p, side_default="first", restarts=FORWARD_RESTARTS):
    p.add_argument("--da", type=int, default=3, help="first-factor dimension")
    p.add_argument("--db", type=int, default=None, help="second-factor dimension")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--threshold", type=float, default=1e-6,
                   help="success threshold on the objective (default 1e-6)")
    p.add_argument("--restarts", type=int, default=restarts)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--side", choices=("first", "second"), default=side_default,
                   help="factor measured first")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="oneway-locc",
        description="Search for bases of bipartite subspaces distinguishable by one-way LOCC.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("table1", help="Haar sweep over C^3 (x) C^n, measuring C^3 first")
    _common(p)
    p.add_argument("--dims", type=int, nargs="+", default=None,
                   help="values of n (default 3..9; --db selects a single n)")

    p = sub.add_parser("appendix-b", help="embedded C^3 (x) C^5 example, both directions")
    _common(p)
    p.add_argument("--certify-restarts", type=int, default=CERTIFY_RESTARTS)

    p = sub.add_parser("reverse-scan", help="Haar scan measuring the second factor first")
    _common(p, side_default="second")
    p.add_argument("--certify-restarts", type=int, default=CERTIFY_RESTARTS)
    p.add_argument("--artifacts", default=None,
                   help="directory for failing-subspace JSON artifacts")

    p = sub.add_parser("minimize", help="search a subspace given as JSON")
    _common(p)
    p.add_argument("subspace", help="subspace JSON file")
    p.add_argument("--m", type=int, default=None,
                   help="only distinguish the first m basis vectors")
    p.add_argument("--emit-protocol", default=None,
                   help="write the two-stage protocol JSON here when converged")

    p = sub.add_parser("channel", help="estimate N for a Kraus channel given as JSON")
    _common(p)
    p.add_argument("channel", help="channel JSON file")
    p.add_argument("--direction", choices=("env->sys", "sys->env", "both"), default="both")
    p.add_argument("--env-padding", type=int, default=0)

    p = sub.add_parser("gram-check", help="commuting-diagonal-blocks criterion checks")
    _common(p)
    p.add_argument("--planted", type=int, default=None)
    return parser


def _config(args, **overrides):
    fields = dict(restarts=args.restarts, max_iterations=args.max_iters,
                  success_threshold=args.threshold, seed=args.seed, side=args.side)
    fields.update(overrides)
    return SearchConfig(**fields)


def _load_json(path):
    return json.loads(Path(path).read_text())


def _run(args):
    cmd = args.command
    if cmd == "table1":
        dims = args.dims or ([args.db] if args.db else list(range(3, 10)))
        spec = harness.ExperimentSpec("table1", dims=dims, samples=args.samples,
                                      config=_config(args, side="first"),
                                      out=args.out, fmt=args.format)
        return harness.rows_to_json(harness.run_table1(spec))
    if cmd == "appendix-b":
        return harness.run_appendix_b(_config(args), certify_restarts=args.certify_restarts)
    if cmd == "reverse-scan":
        return harness.run_reverse_scan(args.da, args.db or 5, args.samples, _config(args),
                                        artifact_dir=args.artifacts,
                                        certify_restarts=args.certify_restarts)
    if cmd == "minimize":
        V = Subspace.from_json(_load_json(args.subspace))
        cfg = _config(args)
        res = minimize_h(V, cfg) if args.m in (None, V.k) else minimize_h_partial(V, args.m, cfg)
        report = res.to_json()
        if args.emit_protocol and res.converged and res.m == V.k:
            proto, used = protocol_from_search(V, res)
            check = verify_protocol(V, used.basis_selector, proto)
            Path(args.emit_protocol).write_text(json.dumps(proto.to_json(), indent=1))
            report["protocol"] = {"path": args.emit_protocol, **check}
        return report
    if cmd == "channel":
        c = KrausChannel.from_json(_load_json(args.channel))
        dirs = list(Direction) if args.direction == "both" else [Direction.parse(args.direction)]
        report = {"rank": channel_rank(c), "d_in": c.d_in, "d_out": c.d_out}
        for d in dirs:
            est = estimate_n(c, d, _config(args), env_padding=args.env_padding)
            report[d.value] = est.to_json()
        return report
    if cmd == "gram-check":
        return harness.run_gram_check(args.samples, _config(args, side="first"),
                                      n=args.db or 3, planted=args.planted)
    raise ValueError(f"unknown command {cmd}")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        report = _run(args)
    except harness.EmbeddedDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKSUM
    except (ValueError, DimensionError, KeyError, OSError, UnreliableProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    harness.write_report(report, args.out, args.format)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
