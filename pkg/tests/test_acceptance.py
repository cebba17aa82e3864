"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines appear
under "acceptance criteria" at the end of the report.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

from delay_consensus import io
from delay_consensus.cli import COMMON, DEFAULTS, _column_setup, _setup, main
from delay_consensus.fixed_delay import (
    DelayAssignment,
    augment_column,
    augment_row,
    closed_form_stationary,
)
from delay_consensus.graph_core import (
    DirectedGraph,
    additive_reversibilization,
    lazy,
    power_stationary,
    random_connected_graph,
    random_doubly_stochastic,
    random_row_stochastic,
    second_eigenvalue,
    stationary_distribution,
    tv_bound,
    tv_distance,
)
from delay_consensus.poincare import delayed_bound, delayed_inverse_gap, shortest_canonical_paths
from delay_consensus.push_sum import (
    FixedPushSumRun,
    PushSumRun,
    audit_ergodicity,
    diameter_bound_check,
    run_push_sum,
)
from delay_consensus.random_delay import (
    LEMMA_TOL,
    RandomDelayRun,
    contraction_audit,
    run_to_consensus,
)

from conftest import ACCEPTANCE_LINES, WORKED, WORKED_AUG, as_array


@contextmanager
def criterion(number: int, title: str, budget: float | None):
    """Record PASS/FAIL with runtime; a blown time budget fails the criterion."""
    info = {}
    start = time.perf_counter()
    status = "FAIL"
    try:
        yield info
        elapsed = time.perf_counter() - start
        if budget is not None and elapsed >= budget:
            info["over_budget"] = f"{elapsed:.1f}s >= {budget}s"
            raise AssertionError(f"criterion {number} took {elapsed:.1f}s, budget {budget}s")
        status = "PASS"
    finally:
        elapsed = time.perf_counter() - start
        detail = ", ".join(f"{k}={v}" for k, v in info.items())
        line = f"criterion {number}: {status} [{elapsed:.2f}s] {title}" + (f" ({detail})" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)


# -- runs shared with the fig3 command setup ---------------------------------------------------

SEEDS = range(10)
FIG3_X0 = np.arange(1.0, 6.0)


def _fig3_cfg(seed):
    cfg = dict(COMMON)
    cfg.update(DEFAULTS["fig3"])
    cfg["seed"] = seed
    return cfg


@pytest.fixture(scope="module")
def fig3_runs():
    """Row-stochastic and Push-Sum runs exactly as ``delay-consensus fig3 --seed s`` sets them up."""
    runs = []
    for seed in SEEDS:
        cfg = _fig3_cfg(seed)
        graph, P = _setup(cfg)
        row = RandomDelayRun(P, graph, cfg["B"], FIG3_X0, seed)
        row_result = run_to_consensus(row, 1e-8)
        cgraph, Pc = _column_setup(cfg, graph, P)
        push = PushSumRun(Pc, cgraph, cfg["B"], FIG3_X0, seed, keep_transitions=True)
        push_result = run_push_sum(push)
        runs.append((graph, P, cgraph, Pc, row, row_result, push, push_result))
    return runs


# -- criteria ------------------------------------------------------------------------------------


def test_criterion_01_worked_augmentation(tmp_path):
    with criterion(1, "augment reproduces the worked 5x5 matrix", 1.0) as info:
        matrix = tmp_path / "P.csv"
        matrix.write_text("".join(",".join(str(v) for v in row) + "\n" for row in WORKED))
        delays = tmp_path / "d.txt"
        delays.write_text("0 1 2\n")
        code = main(["augment", "--matrix", str(matrix), "--delays", str(delays), "--out", str(tmp_path)])
        A = io.read_matrix_csv(tmp_path / "augmented.csv")
        err = float(np.abs(A - as_array(WORKED_AUG)).max())
        info["max_abs_error"] = err
        assert code == 0 and A.shape == (5, 5) and err <= 1e-15


def test_criterion_02_closed_form_stationary():
    with criterion(2, "closed-form stationary vs power iteration", 10.0) as info:
        worst = 0.0
        for k in range(50):
            rng = np.random.default_rng([2, k])
            n = int(rng.integers(2, 9))
            g = random_connected_graph(n, 0.5, rng)
            P = random_doubly_stochastic(g, rng)
            d = DelayAssignment.uniform_random(g, int(rng.integers(0, 6)), rng)
            system = augment_row(P, d, g)
            cf = closed_form_stationary(P, d, g)
            worst = max(worst, float(np.abs(cf.vector(system) - power_stationary(system.matrix)).max()))
        info["max_entry_error"] = f"{worst:.1e}"
        assert worst <= 1e-10


def test_criterion_03_delayed_spectral_bound():
    # run verbatim; this is expected to report violations (see project notes)
    with criterion(3, "inverse gap <= Z*K on random delayed systems", 60.0) as info:
        violations, instances, worst = 0, 150, 0.0
        for k in range(instances):
            rng = np.random.default_rng([3, k])
            n = int(rng.integers(2, 11))
            g = random_connected_graph(n, 0.4, rng)
            P = random_doubly_stochastic(g, rng)
            d = DelayAssignment.uniform_random(g, int(rng.integers(0, 7)), rng)
            paths = shortest_canonical_paths(DirectedGraph.transition_graph(P))
            bound = delayed_bound(P, np.full(n, 1 / n), paths, d, g)
            gap = delayed_inverse_gap(P, d, g)
            if gap > bound:
                violations += 1
                worst = max(worst, gap / bound)
        info["violations"] = f"{violations}/{instances}"
        info["worst_ratio"] = f"{worst:.2f}"
        assert violations == 0


def test_criterion_04_inverse_gap_growth(tmp_path):
    with criterion(4, "max inverse gap nondecreasing and ~a*B^2 (15 nodes, B 1..10, 50 trials)", 300.0) as info:
        code = main(["fig2", "--out", str(tmp_path)])
        fit = json.loads((tmp_path / "fig2_fit.json").read_text())
        info["relative_residual"] = f"{fit['fit_relative_residual']:.3f}"
        info["nondecreasing"] = fit["nondecreasing"]
        assert code == 0 and fit["nondecreasing"] and fit["fit_relative_residual"] < 0.5


def _lemma_runs():
    for k in range(20):
        rng = np.random.default_rng([5, k])
        n = int(rng.integers(2, 7))
        B = int(rng.integers(0, 5))
        g = random_connected_graph(n, 0.5, rng)
        P = random_row_stochastic(g, rng)
        run = RandomDelayRun(P, g, B, rng.normal(size=n), seed=k)
        for _ in range(500):
            run.step()
        yield run


@pytest.fixture(scope="module")
def lemma_runs():
    start = time.perf_counter()
    runs = list(_lemma_runs())
    return runs, time.perf_counter() - start


def test_criterion_05_product_lemmas(lemma_runs):
    runs, build_time = lemma_runs
    with criterion(5, "support equality and M1/M2 row sums every step (20 runs x 500 steps)", 60.0 - build_time) as info:
        steps = sum(len(r.audits) for r in runs)
        support = all(a.lemma1 for r in runs for a in r.audits)
        m2 = max(a.lemma2 for r in runs for a in r.audits)
        m1 = max(a.lemma3_rows for r in runs for a in r.audits)
        info.update(steps=steps, runs_built=f"{build_time:.1f}s", m2_row_error=f"{m2:.1e}", m1_row_error=f"{m1:.1e}")
        assert steps == 20 * 500
        assert support and m2 <= LEMMA_TOL and m1 <= LEMMA_TOL
        assert all(a.lemma3_nonneg and a.lemma3_diag for r in runs for a in r.audits)


def test_criterion_06_contraction_and_limit(lemma_runs):
    runs, _ = lemma_runs
    with criterion(6, "masked max/min monotone, consensus inside the hull and equal to M1 x0", None) as info:
        monotone = all(contraction_audit(r.values, r.masks, r.layout.B)["per_step_ok"] for r in runs)
        spread = max(r.spread() for r in runs)
        limit_err, hull = 0.0, True
        for r in runs:
            value = float(r.x[: r.n].mean())
            hull &= bool(r.x0.min() <= value <= r.x0.max())
            limit_err = max(limit_err, float(np.abs(r.M1 @ r.x0 - value).max()))
        info.update(max_spread=f"{spread:.1e}", m1_limit_error=f"{limit_err:.1e}")
        assert monotone and spread < 1e-10 and hull and limit_err <= 1e-8


def test_criterion_07_fig3_runs(fig3_runs):
    with criterion(7, "Push-Sum -> 3.0 and row runs converge in (1,5), 10 seeds", 30.0) as info:
        start = time.perf_counter()
        # the module fixture may already be built; time a fresh pass on top of it
        for seed in SEEDS:
            cfg = _fig3_cfg(seed)
            graph, P = _setup(cfg)
            run_to_consensus(RandomDelayRun(P, graph, 5, FIG3_X0, seed), 1e-8)
            cgraph, Pc = _column_setup(cfg, graph, P)
            run_push_sum(PushSumRun(Pc, cgraph, 5, FIG3_X0, seed))
        info["fresh_pass"] = f"{time.perf_counter() - start:.1f}s"
        push_err = max(float(np.abs(res.estimates - 3.0).max()) for *_, res in fig3_runs)
        limits = [rr.value for *_, rr, _, _ in fig3_runs]
        spreads = [r.spread() for *_, r, _, _, _ in fig3_runs]
        distinct = len({round(v, 8) for v in limits})
        info.update(push_sum_error=f"{push_err:.1e}", distinct_row_limits=distinct)
        assert push_err < 1e-6
        assert max(spreads) < 1e-8 and all(1 < v < 5 for v in limits) and distinct >= 2


def test_criterion_08_mass_conservation(fig3_runs):
    with criterion(8, "Push-Sum mass and weight conserved in every regime", None) as info:
        mass = weight = 0.0
        for graph, P, cgraph, Pc, _, _, push, _ in fig3_runs:
            no_delay = PushSumRun(Pc, cgraph, 0, FIG3_X0, seed=1)
            rng = np.random.default_rng(8)
            fixed = FixedPushSumRun(
                augment_column(Pc, DelayAssignment.uniform_random(cgraph, 5, rng), cgraph), FIG3_X0
            )
            for extra in (no_delay, fixed):
                run_push_sum(extra)
            for run in (push, no_delay, fixed):
                mass = max(mass, run.mass_error)
                weight = max(weight, run.weight_error)
        info.update(mass_error=f"{mass:.1e}", weight_error=f"{weight:.1e}")
        assert mass < 1e-10 and weight < 1e-10


def test_criterion_09_delay_diameter():
    with criterion(9, "augmented diameter within (B+1)D + B + 1 (25 graphs, B 0..4)", 30.0) as info:
        checked = 0
        for k in range(25):
            rng = np.random.default_rng([9, k])
            g = random_connected_graph(int(rng.integers(2, 11)), 0.3, rng, directed=True)
            for B in range(5):
                chk = diameter_bound_check(g, B)
                assert chk.ok, (k, B, chk)
                checked += 1
        info["checks"] = checked


def test_criterion_10_tv_bound(worked_system):
    with criterion(10, "squared TV of each row of P^t within the spectral bound, t = 1..200", None) as info:
        systems = [worked_system]
        for k in range(5):
            rng = np.random.default_rng([10, k])
            n = int(rng.integers(3, 8))
            g = random_connected_graph(n, 0.5, rng)
            P = random_doubly_stochastic(g, rng)
            systems.append(augment_row(P, DelayAssignment.uniform_random(g, 3, rng), g))
        violations = checks = 0
        for system in systems:
            M = system.matrix
            pi = stationary_distribution(M)
            lam = second_eigenvalue(additive_reversibilization(lazy(M), pi))
            Mt = np.eye(M.shape[0])
            for t in range(1, 201):
                Mt = Mt @ M
                for i in range(M.shape[0]):
                    checks += 1
                    violations += tv_distance(Mt[i], pi) ** 2 > tv_bound(lam, pi[i], t)
        info["violations"] = f"{violations}/{checks}"
        assert violations == 0


def test_criterion_11_weak_ergodicity(fig3_runs):
    with criterion(11, "every block product contracts and error stays in the c_max^k envelope", None) as info:
        c_max, blocks, env_bad = 0.0, 0, 0
        for graph, P, cgraph, Pc, _, _, push, _ in fig3_runs:
            check, report, env = audit_ergodicity(push, cgraph, 5)
            assert report.all_contracting
            c_max = max(c_max, report.geometric_rate_estimate)
            blocks += len(report.c_values)
            env_bad += env["violations"]
        info.update(blocks=blocks, c_max=f"{c_max:.4f}", envelope_violations=env_bad)
        assert c_max < 1 and env_bad == 0
