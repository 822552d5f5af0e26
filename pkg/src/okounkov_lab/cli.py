"""``okounkov-lab`` command line.

Exit codes: 0 all asserted tolerances met, 2 tolerance violation,
1 configuration or runtime error.
"""
from __future__ import annotations

import argparse
import sys

from . import __version__
from .config import ConfigError, load_config
from .runner import run, run_acceptance, verify

class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not tolerance failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--out", help="output directory, or a .json report path")
    common.add_argument("--threads", type=int, help="worker threads (results do not depend on it)")
    common.add_argument("--seed", type=int, help="seed for random flags and random test pairs")
    common.add_argument("--svg", action="store_true", default=None, help="also write SVG figures")

    parser = _Parser(prog="okounkov-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("body", parents=[common], help="Okounkov bodies from flag valuations")
    p.add_argument("--variety", help="p1:d, p2:d, p1xp1:a,b or hirzebruch:a,b,c")
    p.add_argument("--flag", help="coord, point:a[,b] or random[:seed]")
    p.add_argument("--kmax", type=int)

    p = sub.add_parser("chebyshev", parents=[common], help="Chebyshev transform along a k-ladder")
    p.add_argument("--variety")
    p.add_argument("--flag")
    p.add_argument("--weight", help="fs, fs+c, quadratic, support or perturbed:eps")
    p.add_argument("--kladder", type=_int_list, help="e.g. 16,32,64,128")
    p.add_argument("--resolution", type=int)
    p.add_argument("--translation", type=float, help="also check equivariance under this shift")

    for name, text in (("geodesic", "distance linearity and Finsler length"), ("busemann", "Busemann and CAT(0) probes")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--body", help="variety spec whose moment polytope is the model body")
        p.add_argument("--resolution", type=int)
        p.add_argument("--ps", type=_float_list, help="exponents p, e.g. 1,2,3")

    p = sub.add_parser("flatness", parents=[common], help="certify flatness on symbol pairs")
    p.add_argument("--variety")
    p.add_argument("--flag")
    p.add_argument("--kladder", type=_int_list)
    p.add_argument("--resolution", type=int)

    p = sub.add_parser("d1demo", parents=[common], help="hinge geodesics and bicombings for d_1")
    p.add_argument("--resolution", type=int)

    p = sub.add_parser("verify", help="re-check reports against the shipped tolerance table")
    p.add_argument("reports", nargs="*", help="report files or directories")

    p = sub.add_parser("acceptance", help="run every shipped acceptance config, then verify")
    p.add_argument("--out", default="acceptance-runs")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--svg", action="store_true")
    return parser


_OVERRIDES = ("variety", "flag", "kmax", "weight", "kladder", "resolution", "translation", "body", "ps",
              "out", "threads", "seed", "svg")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        return verify(args.reports)
    if args.command == "acceptance":
        return run_acceptance(args.out, threads=args.threads, svg=args.svg)
    overrides = {k: getattr(args, k, None) for k in _OVERRIDES}
    try:
        cfg = load_config(args.config, overrides, experiment=args.command)
        if cfg.kind != args.command:
            raise ConfigError(f"config describes a {cfg.kind!r} experiment, not {args.command!r}", "/experiment")
        code, _ = run(cfg)
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, LookupError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
