"""Command-line interface.

``hybridheat run <config> [--preset P] [--override k=v ...] [--out DIR] [--coarsen F]``
``hybridheat compare <dirA> <dirB> [--epsilon E]``
``hybridheat bench <config> --fractions 0.025,0.1,...``

Exit codes: 0 when every check passes, 2 when a check fails, 1 on error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, resolve
from .runner import EXIT_ERROR, EXIT_FAIL, EXIT_OK, bench, compare, run

log = logging.getLogger("hybridheat")


def _add_config_args(p):
    p.add_argument("config", nargs="?", default=None, help="TOML or JSON run configuration")
    p.add_argument("--preset", choices=["paper-accuracy", "paper-efficiency"], default=None)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted key override, repeatable (e.g. numerics.dt=1e-4)")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--coarsen", type=float, default=None, help="multiply the fine mesh size by this factor")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybridheat", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one configuration")
    _add_config_args(p)

    p = sub.add_parser("compare", help="error tables of run A against reference run B")
    p.add_argument("dir_a")
    p.add_argument("dir_b")
    p.add_argument("--epsilon", type=float, default=None, help="error bound (default: pack epsilon)")
    p.add_argument("--out", default=None)

    p = sub.add_parser("bench", help="speedup sweep over fine-subdomain fractions")
    _add_config_args(p)
    p.add_argument("--fractions", default=None, help="comma-separated fine fractions")
    p.add_argument("--schemes", default=None, help="comma-separated schemes (taylor,series)")
    return ap


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "compare":
            rep = compare(args.dir_a, args.dir_b, epsilon=args.epsilon, out=args.out)
            for t, r in rep["times"].items():
                print(f"t={t}: max|dTp|={r['max_err_Tp']:.4g} max|dTc|={r['max_err_Tc']:.4g} "
                      f"{'PASS' if r['pass'] else 'FAIL'} (eps={rep['epsilon']:.4g})")
            return EXIT_OK if rep["pass"] else EXIT_FAIL
        if args.config is None and args.preset is None:
            raise ConfigError("give a configuration file or --preset")
        cfg = resolve(args.config, preset=args.preset, overrides=args.override, out=args.out, coarsen=args.coarsen)
        if args.command == "bench":
            res = bench(cfg,
                        fractions=_floats(args.fractions) if args.fractions else None,
                        schemes=args.schemes.split(",") if args.schemes else None)
        else:
            res = run(cfg)
        print(json.dumps({"out": str(res.out), "passed": res.passed, "checks": res.summary.get("checks", {})},
                         indent=2))
        return EXIT_OK if res.passed else EXIT_FAIL
    except Exception as exc:  # report, do not trace back, unless verbose
        if args.verbose:
            log.exception("run failed")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
