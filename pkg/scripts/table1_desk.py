"""Desk-scale tau sweep: mean w2-weighted cost, printed as a problem x tau table."""

import argparse
import sys
from pathlib import Path

from skoffar.harness import load_config, run_experiment

ROOT = Path(__file__).resolve().parent.parent


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=ROOT / "configs" / "table1_desk.cfg")
    ap.add_argument("--seeds", type=int, help="override the number of seeds")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="table1_desk.csv")
    args = ap.parse_args(argv)

    cfg = load_config(args.config)
    if args.seeds:
        cfg.seeds = list(range(args.seeds))
    cfg.workers = args.workers
    res = run_experiment(cfg)
    res.write(args.out)

    taus = sorted(cfg.taus, reverse=True)
    table = {(r.problem, r.tau): r for r in res.rows}
    print(f"{'problem':<10} {'n':>6} " + " ".join(f"tau={t:<8g}" for t in taus))
    for p in cfg.problems:
        cells = []
        for t in taus:
            r = table[(p.name, t)]
            cells.append(f"{r.mean_w2:<12.4f}" if r.mean_w2 is not None else f"{'>max_iter':<12}")
        print(f"{p.name:<10} {p.n:>6} " + " ".join(cells))
    return 0


if __name__ == "__main__":
    sys.exit(main())
