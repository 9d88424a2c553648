"""Desk-scale solver comparison: mean w1-weighted cost of SKOFFAR2 against the
iteration counts of ADAGRAD-Norm and ADAM-Norm (one gradient per iteration)."""

import argparse
import sys
from pathlib import Path

from skoffar.harness import load_config, run_experiment

ROOT = Path(__file__).resolve().parent.parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=ROOT / "configs" / "table2_desk.cfg")
    ap.add_argument("--seeds", type=int)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="table2_desk.csv")
    args = ap.parse_args(argv)

    cfg = load_config(args.config)
    if args.seeds:
        cfg.seeds = list(range(args.seeds))
    cfg.workers = args.workers
    res = run_experiment(cfg)
    res.write(args.out)

    cols = [("skoffar2", t) for t in sorted(cfg.taus, reverse=True)]
    cols += [(b, 1.0) for b in ("adagrad_norm", "adam_norm") if b in cfg.solvers]
    table = {(r.problem, r.solver, r.tau): r for r in res.rows}
    head = [f"{s}@{t:g}" if s == "skoffar2" else s for s, t in cols]
    print(f"{'problem':<10} " + " ".join(f"{h:>14}" for h in head))
    for p in cfg.problems:
        vals = []
        for s, t in cols:
            r = table.get((p.name, s, t))
            vals.append(f"{r.mean_w1:>14.1f}" if r and r.mean_w1 is not None else f"{'>max_iter':>14}")
        print(f"{p.name:<10} " + " ".join(vals))
    return 0


if __name__ == "__main__":
    sys.exit(main())
