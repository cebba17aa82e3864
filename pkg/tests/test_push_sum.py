import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delay_consensus.fixed_delay import DelayAssignment, augment_column
from delay_consensus.graph_core import (
    DirectedGraph,
    StochasticityError,
    build_max_weight,
    cycle_graph,
    random_connected_graph,
    random_row_stochastic,
)
from delay_consensus.push_sum import (
    FixedPushSumRun,
    PushSumRun,
    PushSumState,
    audit_ergodicity,
    build_transition_random,
    diameter_bound_check,
    ergodicity_audit,
    estimate,
    init,
    run_push_sum,
    step_fixed,
    write_audit_json,
)
from delay_consensus.random_delay import DelayChainLayout, routing_from_delays, sample_step

from oracles import fw_diameter


def _fig3_like(seed=0, n=5):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, 0.5, rng)
    P = random_row_stochastic(g, rng)
    return g.reversed(), P.T.copy()


# -- state --------------------------------------------------------------------------


def test_init():
    st0 = init([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(st0.s, [1, 2, 3])
    np.testing.assert_array_equal(st0.w, [1, 1, 1])
    big = init(np.arange(1.0, 6.0), 60)
    assert big.mass() == (15.0, 5.0)
    assert big.s.size == 65
    with pytest.raises(ValueError):
        init([])


def test_estimate_masks_empty_nodes():
    est = estimate(PushSumState(np.array([2.0, 4.0, 0.0]), np.array([1.0, 2.0, 0.0])))
    assert list(est[:2]) == [2.0, 2.0]
    assert est.mask.tolist() == [False, False, True]


# -- fixed delays ---------------------------------------------------------------------


def test_identity_step_keeps_state():
    st0 = init([1.0, 5.0])
    st1 = step_fixed(st0, np.eye(2))
    np.testing.assert_array_equal(st1.s, st0.s)
    assert st1.t == 1


def test_step_fixed_rejects_row_stochastic_matrix():
    with pytest.raises(StochasticityError):
        step_fixed(init([1.0, 2.0]), np.array([[1.0, 0.0], [0.5, 0.5]]))


def test_first_delay_node_gets_a_sixth(worked, worked_graph, worked_delays):
    system = augment_column(worked, worked_delays, worked_graph)
    x0 = np.array([6.0, 1.0, 1.0])
    st1 = step_fixed(init(x0, system.b), system)
    assert st1.s[3] == pytest.approx(x0[0] / 6)


def test_fixed_delay_push_sum_reaches_average(worked, worked_graph, worked_delays):
    system = augment_column(worked, worked_delays, worked_graph)
    x0 = np.array([1.0, 4.0, 10.0])
    run = FixedPushSumRun(system, x0)
    for _ in range(1000):
        run.step()
    assert run.compute_estimates() == pytest.approx([5.0] * 3, abs=1e-9)
    assert run.mass_error < 1e-10 and run.weight_error < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 7), st.integers(0, 4), st.integers(0, 10_000))
def test_fixed_delay_limit_is_average_property(n, B, seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, 0.5, rng)
    P = build_max_weight(g)
    d = DelayAssignment.uniform_random(g, B, rng)
    x0 = rng.normal(size=n)
    res = run_push_sum(FixedPushSumRun(augment_column(P, d, g), x0), tol=1e-11)
    assert np.abs(res.estimates - x0.mean()).max() < 1e-8
    assert res.audit["mass_error_max"] < 1e-10


# -- random transitions -----------------------------------------------------------------


def test_random_transition_without_delays_is_protocol():
    g, P = _fig3_like()
    lay = DelayChainLayout(g, 0)
    T = build_transition_random(P, lay, routing_from_delays(lay, np.zeros(g.m, dtype=int)))
    np.testing.assert_allclose(T, P, atol=1e-15)


def test_random_transition_two_nodes_hand_check():
    g = DirectedGraph(2, [(0, 1), (1, 0)])
    P = np.array([[0.75, 0.5], [0.25, 0.5]])
    lay = DelayChainLayout(g, 2)
    # edge (0, 1) takes chain 2, edge (1, 0) goes direct
    T = build_transition_random(P, lay, routing_from_delays(lay, [2, 0]))
    head = lay.heads[0, 1]
    assert T[0, 0] == 0.75 and T[head, 0] == 0.25 and T[1, 0] == 0.0
    assert T[0, 1] == 0.5 and T[1, 1] == 0.5
    np.testing.assert_array_equal(T.sum(axis=0), np.ones(lay.dim))


def test_random_transition_requires_column_stochastic():
    g = DirectedGraph(2, [(0, 1), (1, 0)])
    lay = DelayChainLayout(g, 1)
    with pytest.raises(StochasticityError):
        build_transition_random(np.array([[1.0, 0.0], [0.5, 0.5]]), lay, routing_from_delays(lay, [0, 0]))


def test_random_transitions_have_exact_column_sums():
    # dyadic weights make every column sum exactly representable
    g = cycle_graph(4)
    P = np.array(
        [[0.5, 0.25, 0, 0.25], [0.25, 0.5, 0.25, 0], [0, 0.25, 0.5, 0.25], [0.25, 0, 0.25, 0.5]]
    )
    lay = DelayChainLayout(g, 3)
    rng = np.random.default_rng(0)
    for _ in range(10_000):
        T = build_transition_random(P, lay, sample_step(lay, rng))
        assert (T.sum(axis=0) == 1.0).all()


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.integers(1, 4), st.integers(0, 10_000))
def test_each_share_goes_to_exactly_one_place(n, B, seed):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(n, 0.5, rng)
    P = random_row_stochastic(g, rng).T.copy()
    g = g.reversed()
    lay = DelayChainLayout(g, B)
    routing = sample_step(lay, rng)
    T = build_transition_random(P, lay, routing)
    for r, (j, i) in enumerate(g.edges):
        k = routing.delays[r]
        if k == 0:
            assert T[i, j] == P[i, j]
        else:
            assert T[i, j] == 0 and T[lay.heads[r, k - 1], j] == P[i, j]
    np.testing.assert_allclose(np.diag(T)[:n], np.diag(P))


# -- random runs --------------------------------------------------------------------------------


def test_constant_values_stay_constant():
    g, P = _fig3_like(1)
    run = PushSumRun(P, g, 3, np.full(5, 4.0), seed=2)
    for _ in range(100):
        run.step()
        est = estimate(run.state)
        assert np.allclose(est.compressed(), 4.0, atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1])
def test_random_delay_push_sum_reaches_average(seed):
    g, P = _fig3_like(3)
    run = PushSumRun(P, g, 5, np.arange(1.0, 6.0), seed=seed)
    res = run_push_sum(run)
    assert np.abs(res.estimates - 3.0).max() < 1e-6
    assert res.audit["mass_error_max"] < 1e-10
    assert res.audit["weight_error_max"] < 1e-10


def test_run_validates_inputs():
    g, P = _fig3_like()
    with pytest.raises(StochasticityError):
        PushSumRun(P.T.copy(), g, 1, np.arange(5.0), seed=0)
    with pytest.raises(ValueError):
        PushSumRun(P, g, 1, np.arange(4.0), seed=0)


def test_trajectory_and_audit_files(tmp_path):
    g, P = _fig3_like()
    run = PushSumRun(P, g, 2, np.arange(1.0, 6.0), seed=0, keep_transitions=True)
    res = run_push_sum(run)
    run.write_trajectory_csv(tmp_path / "traj.csv")
    lines = (tmp_path / "traj.csv").read_text().splitlines()
    assert lines[0] == "t,node,s,w,estimate"
    # delay nodes start empty, so their estimate field is blank
    assert lines[1 + 5].endswith(",0.0,0.0,")
    _, report, _ = audit_ergodicity(run, g, 2)
    write_audit_json(res, tmp_path / "audit.json", report)
    data = json.loads((tmp_path / "audit.json").read_text())
    assert set(data["ergodicity"]) == {"window", "c_max"}
    assert len(data["final_estimates"]) == 5


# -- diameter bound ----------------------------------------------------------------------------


def test_diameter_bound_trivial_and_two_cycle():
    g = cycle_graph(5, directed=True)
    chk = diameter_bound_check(g, 0)
    assert chk.D == chk.D_hat == 4 and chk.bound == 5 and chk.ok
    two = DirectedGraph(2, [(0, 1), (1, 0)])
    chk = diameter_bound_check(two, 2)
    assert (chk.D, chk.bound) == (1, 6)
    union = DelayChainLayout(two, 2).union_graph()
    assert union.n == 8
    assert chk.D_hat == fw_diameter(8, union.edges) <= 6


def test_diameter_bound_random_graphs():
    rng = np.random.default_rng(21)
    for _ in range(10):
        g = random_connected_graph(int(rng.integers(2, 8)), 0.4, rng, directed=True)
        for B in range(5):
            assert diameter_bound_check(g, B).ok


# -- ergodicity -----------------------------------------------------------------------------------


def test_ergodicity_primitive_power():
    g = cycle_graph(4)
    P = build_max_weight(g)
    rep = ergodicity_audit([P] * 6, window=3)
    assert rep.all_contracting
    assert all(c < 1 for c in rep.c_values)
    assert rep.window == 3 and len(rep.c_values) == 2


def test_ergodicity_flags_identity_blocks():
    rep = ergodicity_audit([np.eye(3)] * 4, window=2)
    assert rep.c_values == [1.0, 1.0]
    assert not rep.all_contracting


def test_ergodicity_needs_a_full_block():
    with pytest.raises(ValueError):
        ergodicity_audit([np.eye(2)], window=2)


def test_ergodicity_coefficient_against_direct_formula():
    rng = np.random.default_rng(3)
    Ts = [rng.random((4, 4)) for _ in range(3)]
    Ts = [T / T.sum(axis=0) for T in Ts]
    rep = ergodicity_audit(Ts, window=3, n=2)
    F = Ts[0].T @ Ts[1].T @ Ts[2].T
    expected = 1 - max(F[:, s].min() for s in range(2))
    assert rep.c_values[0] == pytest.approx(expected)


def test_ergodicity_and_envelope_on_random_run():
    g, P = _fig3_like(4)
    run = PushSumRun(P, g, 4, np.arange(1.0, 6.0), seed=7, keep_transitions=True)
    run_push_sum(run)
    check, report, env = audit_ergodicity(run, g, 4)
    assert check.ok and report.window == check.bound
    assert report.all_contracting and report.geometric_rate_estimate < 1
    assert env["violations"] == 0
