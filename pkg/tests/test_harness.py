import numpy as np
import pytest

from skoffar import solver as solver_mod
from skoffar.costs import default_max_iter, iteration_weights, w1, w2
from skoffar.harness import acceptance
from skoffar.harness.cli import main
from skoffar.harness.config import ConfigError, parse_config
from skoffar.harness.experiment import (
    Cell,
    cells_for,
    emit_trace_plot_data,
    execute_cell,
    results_csv,
    run_experiment,
)
from skoffar.problems import ProblemInstance, make_embedded
from skoffar.solver import SolverConfig, check_invariants, run
from skoffar.trace import CSV_COLUMNS, read_trace_csv

SMALL = """\
# two problems, two ratios
problem  = rosenbr, arwhead
n_hat    = 2, 4
n        = 20, 40
tau      = 0.5, 0.25
solver   = skoffar2, adagrad_norm
seeds    = 0..2
"""


# --- cost weights --------------------------------------------------------------


def test_cost_weights():
    assert w2(1.0, 37) == 1.0
    assert w2(0.1, 10_000) == pytest.approx(100.1 / 10_001)
    assert w1(1.0, 9) == 10.0
    for tau, n in ((0.3, 11), (0.05, 1000)):
        assert w1(tau, n) == pytest.approx((1 + n) * w2(tau, n))
    assert 0.1191 * 10_001 == pytest.approx(1191, abs=0.5)
    assert iteration_weights(0.2, 50, second_order=False) == (0.2, 0.2)
    assert default_max_iter(1.0, 100) == 100_000
    assert default_max_iter(0.001, 10**6, second_order=False) == 10_000_000
    with pytest.raises(ValueError):
        w2(0.0, 3)


# --- config ---------------------------------------------------------------------


def test_parse_config_list_expansion():
    cfg = parse_config(SMALL)
    assert [(p.name, p.n_hat, p.n) for p in cfg.problems] == [("rosenbr", 2, 20),
                                                              ("arwhead", 4, 40)]
    assert cfg.taus == [0.5, 0.25] and cfg.seeds == [0, 1, 2]
    cells = cells_for(cfg)
    assert cells == sorted(cells)
    # baselines get one cell per problem
    assert len(cells) == 2 * (2 * 3 + 1)


def test_parse_config_defaults_and_options():
    cfg = parse_config("problem = tridia\ntau = 0.1\nsolver = skoffar1\nnu0 = 5\n"
                       "kappa_mode = exact\ndiagnostics = yes\n")
    assert cfg.problems[0].n == 1000 and cfg.seeds == list(range(10))
    assert cfg.solver_options == {"nu0": 5.0, "kappa_mode": "exact"}
    assert cfg.diagnostics


@pytest.mark.parametrize("text", [
    "problem = rosenbr\ntau = 0.1\n",
    "problem = rosenbr\ntau = 0\nsolver = skoffar2\n",
    "problem = nope\ntau = 0.1\nsolver = skoffar2\n",
    "problem = rosenbr\ntau = 0.1\nsolver = newton\n",
    "problem = rosenbr\ntau = 0.1\nsolver = skoffar2\ncolour = red\n",
    "problem = rosenbr\nproblem = arwhead\ntau = 0.1\nsolver = skoffar2\n",
    "problem = rosenbr, arwhead\nn = 1, 2, 3\ntau = 0.1\nsolver = skoffar2\n",
    "just some words\n",
])
def test_bad_configs_rejected(text):
    with pytest.raises(ConfigError):
        parse_config(text)


# --- experiments ---------------------------------------------------------------------


def test_experiment_rows_recomputed_from_traces():
    cfg = parse_config(SMALL)
    res = run_experiment(cfg, keep_traces=True)
    assert len(res.traces) == len(res.cells)
    for row in res.rows:
        group = [c for c in res.cells if (c.cell.problem, c.cell.solver, c.cell.tau)
                 == (row.problem, row.solver, row.tau)]
        traces = [res.traces[c.cell] for c in group]
        ns = [t.hitting_time for t in traces if t.converged]
        assert row.success == len(ns) / len(group)
        assert row.mean_w1 == pytest.approx(np.mean([n * traces[0].w1_per_iter for n in ns]))
        assert row.mean_w2 == pytest.approx(np.mean([n * traces[0].w2_per_iter for n in ns]))
        assert row.mean_n1 == pytest.approx(np.mean(ns))
    assert all(c.f_calls == 0 for c in res.cells)


def test_results_csv_byte_identical_and_worker_independent():
    cfg = parse_config(SMALL)
    a = run_experiment(cfg).to_csv()
    b = run_experiment(cfg).to_csv()
    cfg.workers = 2
    c = run_experiment(cfg).to_csv()
    assert a == b == c
    assert "runtime" not in a.splitlines()[0]


def test_identity_cell_matches_direct_run():
    cell = Cell("rosenbr", 2, 20, "skoffar2", 1.0, 0)
    res, trace = execute_cell(cell, 1e-3, None)
    direct = run(make_embedded("rosenbr", 2, 20), SolverConfig(tau=1.0, seed=0))
    assert trace.to_csv() == direct.to_csv()
    assert res.hitting_time == direct.hitting_time


def test_failed_cells_recorded_not_raised():
    # rosenbr has no residual structure, so 2b with Gauss-Newton cannot run
    cfg = parse_config("problem = rosenbr\nn = 10\ntau = 0.5\nsolver = skoffar2b, skoffar2\n"
                       "seeds = 0..1\n")
    res = run_experiment(cfg)
    bad = [c for c in res.cells if c.cell.solver == "skoffar2b"]
    assert bad and all(c.reason == "error" and not c.converged for c in bad)
    rows = {r.solver: r for r in res.rows}
    assert rows["skoffar2b"].success == 0.0
    row_2b = [ln for ln in results_csv(res.rows).splitlines() if ",skoffar2b," in ln]
    assert row_2b and ">max_iter" in row_2b[0]
    assert rows["skoffar2"].success == 1.0


def test_desk_w2_cost_decreases_in_tau():
    cfg = parse_config("problem = rosenbr\nn = 200\ntau = 1, 0.1, 0.01\nsolver = skoffar2\n"
                       "seeds = 0..2\n")
    rows = {r.tau: r.mean_w2 for r in run_experiment(cfg).rows}
    assert rows[1.0] > rows[0.1] > rows[0.01]


def test_plot_data_series():
    prob = make_embedded("rosenbr", 2, 40)
    tr = run(prob, SolverConfig(tau=0.25), diagnostics=True)
    lines = emit_trace_plot_data(tr, 0.25, 40).splitlines()
    assert lines[0] == "cum_w1,f"
    per_iter = w1(0.25, 40)
    for k, (line, rec) in enumerate(zip(lines[1:], tr.all_records())):
        cost, f = map(float, line.split(","))
        assert cost == pytest.approx(k * per_iter)
        assert f == rec.f_diag
    assert float(lines[-1].split(",")[1]) < float(lines[1].split(",")[1])
    with pytest.raises(ValueError):
        emit_trace_plot_data(run(prob, SolverConfig(tau=0.25)))


def test_smaller_tau_reaches_f_levels_at_lower_w1_cost():
    prob = make_embedded("rosenbr", 2, 200)
    curves = {}
    for tau in (0.1, 0.01):
        tr = run(prob, SolverConfig(tau=tau, seed=0), diagnostics=True)
        curves[tau] = (np.array([r.cum_w1 for r in tr.all_records()]),
                       np.array([r.f_diag for r in tr.all_records()]))

    def cost_to_reach(level, tau):
        cost, f = curves[tau]
        return cost[np.argmax(f <= level)]

    for level in (1e-2, 1e-4):
        assert cost_to_reach(level, 0.01) < cost_to_reach(level, 0.1)


def test_trace_csv_roundtrip(tmp_path):
    tr = run(make_embedded("rosenbr", 2, 20), SolverConfig(tau=0.5), diagnostics=True)
    path = tmp_path / "t.csv"
    tr.write_csv(path)
    rows = read_trace_csv(path)
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == tr.iterations + 1
    assert rows[-1]["snorm"] is None and rows[0]["gnorm"] == tr.records[0].gnorm


# --- fault injection ------------------------------------------------------------------


def test_injected_nu_bug_is_caught(monkeypatch):
    monkeypatch.setattr(solver_mod, "update_nu", lambda nu, s, p: nu)
    tr = run(make_embedded("rosenbr", 2, 20), SolverConfig(tau=0.5, max_iter=20))
    assert check_invariants(tr).nu_violations > 0
    suite = acceptance.Suite(seeds=1)
    suite.all_traces.append(tr)
    suite._desk = {(n, t, 0): acceptance.RunRecord(tr, 0)
                   for n in acceptance.DESK_PROBLEMS for t in acceptance.DESK_TAUS}
    passed, _ = acceptance.recurrence_invariants(suite)
    assert not passed


def test_injected_f_call_is_caught(monkeypatch):
    original = ProblemInstance.derivatives

    def leaky(self):
        view = original(self)

        def grad(x):
            self.diagnostic_f(x)
            return view.grad(x)

        return type(view)(view.name, view.n, view.x0, grad, view.hvp, view.gn)

    monkeypatch.setattr(ProblemInstance, "derivatives", leaky)
    passed, detail = acceptance.offo_property(acceptance.Suite(seeds=1))
    assert not passed and "calls = 0" not in detail


# --- CLI ---------------------------------------------------------------------------


def test_cli_run_writes_trace(tmp_path, capsys):
    out = tmp_path / "trace.csv"
    rc = main(["run", "--problem", "rosenbr", "--n", "20", "--tau", "0.5", "--seed", "1",
               "--out", str(out), "--diagnostics"])
    assert rc == 0
    rows = read_trace_csv(out)
    assert rows[-1]["gnorm"] <= 1e-3 and rows[0]["f_diag"] is not None


def test_cli_run_budget_failure_exit_code(tmp_path):
    rc = main(["run", "--problem", "rosenbr", "--n", "20", "--tau", "0.5", "--max-iter", "2",
               "--out", str(tmp_path / "t.csv")])
    assert rc == 1


def test_cli_run_baseline_to_stdout(capsys):
    assert main(["run", "--problem", "arwhead", "--nhat", "4", "--n", "8",
                 "--variant", "adagrad_norm"]) == 0
    assert capsys.readouterr().out.startswith(",".join(CSV_COLUMNS))


def test_cli_sweep_deterministic(tmp_path):
    cfg = tmp_path / "s.cfg"
    cfg.write_text(SMALL)
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}.csv"
        assert main(["sweep", str(cfg), "--out", str(out), "--traces",
                     str(tmp_path / f"tr{i}")]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    assert len(list((tmp_path / "tr0").glob("*.csv"))) == len(cells_for(parse_config(SMALL)))


def test_cli_sweep_bad_config(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("problem = rosenbr\n")
    assert main(["sweep", str(cfg)]) == 1


def test_cli_compare(capsys):
    rc = main(["compare", "--problem", "rosenbr", "--n", "20", "--tau", "0.5",
               "--solvers", "skoffar2", "adam_norm", "--seeds", "2"])
    assert rc == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("problem,n,solver,tau") and len(out) == 3


def test_cli_probe_embedding(capsys):
    assert main(["probe-embedding", "--trials", "100", "--norm-samples", "20"]) == 0
    assert "embedding probability" in capsys.readouterr().out


def test_cli_check_exit_codes(monkeypatch, capsys):
    assert main(["check", "--only", "6,11"]) == 0
    forced = [(num, title, (lambda suite: (False, "forced")) if num == 6 else fn)
              for num, title, fn in acceptance.CRITERIA]
    monkeypatch.setattr(acceptance, "CRITERIA", forced)
    assert main(["check", "--only", "6"]) == 2
    assert "[FAIL]  6" in capsys.readouterr().out
