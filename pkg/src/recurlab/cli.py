"""Command line interface.

    recur-lab run <config.json>
    recur-lab validate-table <table.json>
    recur-lab plot <run_dir>
    recur-lab oracle sep|binom|sr <args...>

Exit codes: 0 ok, 2 config error, 3 table error, 4 io error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import borel_cantelli as bc
from . import experiments
from .billiard import BilliardTable
from .errors import ConfigError, MissingInputError, TableError

EXIT_CONFIG = 2
EXIT_TABLE = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="recur-lab",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="run an experiment from a JSON config")
    runp.add_argument("config", help="path to config.json")

    vt = sub.add_parser("validate-table", help="check a billiard table JSON")
    vt.add_argument("table", help="path to table.json")

    pl = sub.add_parser("plot", help="emit plot-ready CSV from a run dir")
    pl.add_argument("run_dir")

    orc = sub.add_parser("oracle", help="deterministic oracles for CI")
    osub = orc.add_subparsers(dest="oracle", required=True)

    sep = osub.add_parser("sep", help="separation index of a time tuple")
    sep.add_argument("tuple", help="comma separated times k1,k2,...")
    sep.add_argument("--n", type=int, required=True)
    sep.add_argument("--s", type=float, required=True,
                     help="separation threshold s(n)")

    bn = osub.add_parser("binom", help="P(Binomial(n,p) >= r)")
    bn.add_argument("n", type=int)
    bn.add_argument("p", type=float)
    bn.add_argument("r", type=int)

    sr = osub.add_parser("sr", help="partial sum and classification of S_r")
    sr.add_argument("beta", type=float)
    sr.add_argument("delta", type=float)
    sr.add_argument("sigma_exponent", type=float)
    sr.add_argument("r", type=int)
    sr.add_argument("J", type=int)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = experiments.ExperimentConfig.from_json(args.config)
            manifest = experiments.run(cfg)
            print(json.dumps({"output_dir": cfg.output_dir,
                              "wall_time_s": round(manifest.wall_time_s, 3),
                              "files": sorted(manifest.checksums)}))
            return 0
        if args.command == "validate-table":
            try:
                BilliardTable.from_json(args.table)
            except FileNotFoundError:
                raise MissingInputError(args.table)
            print(f"table ok: {args.table}")
            return 0
        if args.command == "plot":
            out = experiments.emit_plot_data(args.run_dir)
            print(out)
            return 0
        if args.command == "oracle":
            if args.oracle == "sep":
                ks = [int(k) for k in args.tuple.split(",")]
                print(bc.sep_index(ks, args.n, args.s))
            elif args.oracle == "binom":
                print(f"{bc.binomial_oracle(args.n, args.p, args.r):.17g}")
            elif args.oracle == "sr":
                sched = bc.RhoSchedule(beta=args.beta, delta=args.delta,
                                       sigma_exponent=args.sigma_exponent)
                res = bc.s_r_partial(sched, args.r, args.J)
                print(f"{res.partial_sum:.17g} {res.classification}")
            return 0
        raise ConfigError(f"unknown command {args.command!r}")
    except TableError as e:
        print(f"table error: {e}", file=sys.stderr)
        return EXIT_TABLE
    except (MissingInputError, OSError) as e:
        print(f"io error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
