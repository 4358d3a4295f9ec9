import json
import logging

import numpy as np
import pytest

from oneway_locc.core import Side, Unitary, apply_basis_change, haar_random_subspace, haar_unitary
from oneway_locc.harness import appendix_b_subspace
from oneway_locc.objective import SearchConfig, minimize_h, objective_h
from oneway_locc.protocol import (REJECT, TwoStageProtocol, UnreliableProtocolError,
                                  extract_protocol, outcome_probabilities, protocol_from_search,
                                  verify_protocol)

log = logging.getLogger(__name__)


def test_product_frame_protocol(product_subspace, v_basis):
    p = extract_protocol(product_subspace, np.eye(3), v_basis)
    assert p.partition() == {0: [(0, 0)], 1: [(1, 0)], 2: [(2, 0)]}
    for a, stage in enumerate(p.second_stage):
        # residual direction first, then the standard-basis completion
        assert np.abs(np.abs(stage.entries[:, 0]) - np.eye(3)[a]).max() < 1e-12
        assert np.abs(stage.entries.conj().T @ stage.entries - np.eye(3)).max() < 1e-10
        assert np.sum(np.abs(stage.entries) > 1e-12) == 3
    assert list(p.assignment[:, 1:].ravel()) == [REJECT] * 6
    rep = verify_protocol(product_subspace, np.eye(3), p)
    assert rep["max_misidentification_probability"] < 1e-12


def test_swapped_partition_misroutes(product_subspace, v_basis):
    p = extract_protocol(product_subspace, np.eye(3), v_basis)
    asg = p.assignment.copy()
    asg[p.assignment == 0], asg[p.assignment == 1] = 1, 0
    swapped = TwoStageProtocol(p.side, p.first_stage, p.second_stage, asg)
    rep = verify_protocol(product_subspace, np.eye(3), swapped)
    assert abs(rep["max_misidentification_probability"] - 1) < 1e-12
    assert rep["misidentification"][2] < 1e-12


def test_exact_zero_chain(entangled_pair_subspace):
    V = entangled_pair_subspace
    assert objective_h(V, np.eye(3), np.eye(3)) == 0.0
    p = extract_protocol(V, np.eye(3), np.eye(3))
    assert verify_protocol(V, np.eye(3), p)["max_misidentification_probability"] == 0.0
    assert p.partition()[0] == [(0, 0), (1, 0)]


def test_rejects_unreliable_input():
    V = haar_random_subspace(3, 3, 3, seed=0)
    rng = np.random.default_rng(1)
    w, u = haar_unitary(3, rng), haar_unitary(3, rng)
    # a random pair sits far above the extraction tolerance
    h = objective_h(V, w, u)
    assert h > 0.05
    with pytest.raises(UnreliableProtocolError):
        extract_protocol(V, w, u)


def test_protocol_from_search_rejects_unconverged():
    V = haar_random_subspace(3, 3, 3, seed=1)
    res = minimize_h(V, SearchConfig(restarts=1, max_iterations=1))
    with pytest.raises(UnreliableProtocolError):
        protocol_from_search(V, res)


@pytest.mark.parametrize("n,side", [(3, "first"), (4, "first"), (7, "first"), (4, "second")])
def test_converged_chain_and_bookkeeping(n, side):
    ratios = []
    for s in range(10):
        V = haar_random_subspace(3, n, 3, seed=50 * n + s)
        res = minimize_h(V, SearchConfig(seed=s, side=side))
        assert res.converged
        p, used = protocol_from_search(V, res)
        assert used.h_min <= res.h_min
        rep = verify_protocol(V, used.basis_selector, p)
        miss = rep["max_misidentification_probability"]
        assert miss < 1e-5
        assert np.abs(np.array(rep["total_probability"]) - 1).max() < 1e-10
        # assigned plus excluded mass per state
        probs = outcome_probabilities(V, used.basis_selector, p)
        for i in range(3):
            own = probs[i][p.assignment == i].sum()
            assert abs(own + rep["misidentification"][i] - 1) < 1e-10
        if used.h_min > 0:
            ratios.append(miss / np.sqrt(used.h_min))
    log.info("max misidentification / sqrt(H) = %.3e", max(ratios))
    assert max(ratios) < 10


def test_embedded_example_forward_protocol():
    V, _, _ = appendix_b_subspace()
    res = minimize_h(V, SearchConfig(seed=0, side="first"))
    assert res.converged
    p, used = protocol_from_search(V, res)
    assert verify_protocol(V, used.basis_selector, p)["max_misidentification_probability"] < 1e-5
    assert p.first_stage.d == 3 and p.second_stage[0].d == 5


def test_monte_carlo_agrees_with_exact(entangled_pair_subspace):
    V = entangled_pair_subspace
    p = extract_protocol(V, np.eye(3), np.eye(3))
    rep = verify_protocol(V, np.eye(3), p, trials=2000, seed=3)
    assert rep["monte_carlo"] == [0.0, 0.0, 0.0]
    asg = p.assignment.copy()
    asg[0, 0] = REJECT  # state 0 now fails with probability 1/2
    rep = verify_protocol(V, np.eye(3), TwoStageProtocol(p.side, p.first_stage,
                                                          p.second_stage, asg), trials=4000)
    assert abs(rep["misidentification"][0] - 0.5) < 1e-12
    assert abs(rep["monte_carlo"][0] - 0.5) < 0.05


def test_protocol_json_round_trip(product_subspace, v_basis):
    p = extract_protocol(product_subspace, np.eye(3), v_basis, Side.FIRST)
    back = TwoStageProtocol.from_json(json.loads(json.dumps(p.to_json())))
    assert back.side is Side.FIRST
    assert np.array_equal(back.assignment, p.assignment)
    assert np.array_equal(back.first_stage.entries, p.first_stage.entries)
    assert verify_protocol(product_subspace, np.eye(3), back) == \
        verify_protocol(product_subspace, np.eye(3), p)


def test_assignment_shape_checked(v_basis):
    with pytest.raises(ValueError):
        TwoStageProtocol("first", Unitary(v_basis), (Unitary(np.eye(3)),) * 3, np.zeros((3, 2)))


def test_second_side_protocol_shapes():
    V = haar_random_subspace(3, 5, 3, seed=8)
    res = minimize_h(V, SearchConfig(seed=0, side="second"))
    p, used = protocol_from_search(V, res)
    assert p.first_stage.d == 5 and len(p.second_stage) == 5 and p.second_stage[0].d == 3
    moved = apply_basis_change(V, used.basis_selector)
    assert moved.k == 3
