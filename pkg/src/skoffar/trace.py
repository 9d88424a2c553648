"""Per-run iteration records and their CSV serialization."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

CSV_COLUMNS = ("k", "gnorm", "snorm", "sigma", "nu", "mu", "mdec", "gs_lhs", "gs_rhs",
               "f_diag", "cum_w1", "cum_w2")


@dataclass
class IterationRecord:
    k: int
    gnorm: float
    snorm: float | None = None
    sigma: float | None = None
    nu: float | None = None
    mu: float | None = None
    model_decrease: float | None = None
    taylor_decrease: float | None = None
    gs_lhs: float | None = None
    gs_rhs: float | None = None
    cond_descent: bool | None = None
    cond_gradstep: bool | None = None
    f_diag: float | None = None
    ell: int | None = None
    resamples: int = 0
    # ADAGRAD-Norm b_{k+1}; not serialized
    accumulator: float | None = None
    cum_w1: float = 0.0
    cum_w2: float = 0.0


@dataclass
class RunTrace:
    """Records for iterations 0..N-1 plus the point where the run stopped.

    ``records[k]`` describes iteration k (the step from x_k); ``final``
    describes the last iterate, at which no step was taken. Cumulative costs
    in a record count the iterations completed before it, so the final
    record carries N times the per-iteration weight.
    """

    solver: str
    problem: str
    n: int
    ell: int
    tau: float
    eps: float
    p: int
    w1_per_iter: float
    w2_per_iter: float
    records: list[IterationRecord] = field(default_factory=list)
    final: IterationRecord | None = None
    termination_reason: str = ""
    message: str = ""
    x_final: np.ndarray | None = field(default=None, repr=False)
    seed: int | None = None
    variant: str = ""
    params: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def hitting_time(self) -> int | None:
        """First k with ||g_k|| <= eps, or None if the run never got there."""
        return self.hitting_time_for(self.eps)

    def hitting_time_for(self, eps: float) -> int | None:
        for r in self.all_records():
            if r.gnorm <= eps:
                return r.k
        return None

    @property
    def converged(self) -> bool:
        return self.hitting_time is not None

    def all_records(self) -> list[IterationRecord]:
        return self.records + ([self.final] if self.final is not None else [])

    def gnorms(self) -> np.ndarray:
        return np.array([r.gnorm for r in self.all_records()])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    def weighted_cost(self, which: str = "w2") -> float | None:
        N = self.hitting_time
        if N is None:
            return None
        return N * (self.w1_per_iter if which == "w1" else self.w2_per_iter)

    def to_csv(self, fh=None) -> str:
        buf = io.StringIO() if fh is None else fh
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.all_records():
            w.writerow([
                r.k, _fmt(r.gnorm), _fmt(r.snorm), _fmt(r.sigma), _fmt(r.nu), _fmt(r.mu),
                _fmt(r.model_decrease), _fmt(r.gs_lhs), _fmt(r.gs_rhs), _fmt(r.f_diag),
                _fmt(r.cum_w1), _fmt(r.cum_w2),
            ])
        return buf.getvalue() if fh is None else ""

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            self.to_csv(fh)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def read_trace_csv(path) -> list[dict]:
    """Rows of a trace CSV as dicts of floats (None for empty cells)."""
    with open(path, newline="") as fh:
        return [
            {k: (float(v) if v != "" else None) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]
