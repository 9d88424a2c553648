"""Plot data for objective decrease against w1-weighted cost on desk rosenbr.

Writes one two-column CSV (cum_w1, f) per tau and for ADAGRAD-Norm; the
objective is evaluated for the record only, never by the solvers.
"""

import argparse
import sys
from pathlib import Path

from skoffar.baselines import BaselineConfig, run_baseline
from skoffar.harness import emit_trace_plot_data
from skoffar.problems import make_embedded
from skoffar.solver import SolverConfig, run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--taus", type=float, nargs="+", default=[0.1, 0.01])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--outdir", default="figure1_desk")
    args = ap.parse_args(argv)

    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    problem = make_embedded("rosenbr", 2, args.n)
    for tau in args.taus:
        tr = run(problem, SolverConfig(tau=tau, seed=args.seed), diagnostics=True)
        emit_trace_plot_data(tr, tau, args.n, path=out / f"skoffar2_tau{tau:g}.csv")
        print(f"tau={tau:g}: {tr.iterations} iterations, w1 cost {tr.final.cum_w1:.1f}")
    tr = run_baseline(problem, BaselineConfig(), diagnostics=True)
    emit_trace_plot_data(tr, path=out / "adagrad_norm.csv")
    print(f"adagrad_norm: {tr.iterations} iterations")
    return 0


if __name__ == "__main__":
    sys.exit(main())
