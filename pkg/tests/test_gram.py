import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oneway_locc.core import (Subspace, apply_basis_change, gram_deviation, haar_random_subspace,
                              haar_unitary)
from oneway_locc.gram import (BlockGram, build_gram, conjugate_gram,
                              diagonal_block_commutator_norm, diagonalizing_basis_change,
                              gram_to_subspace, objective_from_gram, partial_trace,
                              planted_commuting_gram, reduce_environment,
                              simultaneous_diagonalizer)
from oneway_locc.harness import appendix_b_subspace
from oneway_locc.objective import SearchConfig, minimize_h, objective_h

seeds = st.integers(min_value=0, max_value=2**63 - 1)


def _commutator_oracle(blocks):
    # explicit triple loops, no matrix products
    total = 0.0
    for a in range(3):
        for b in range(a + 1, 3):
            A, B = blocks[a], blocks[b]
            for i in range(3):
                for j in range(3):
                    ab = sum(A[i, s] * B[s, j] for s in range(3))
                    ba = sum(B[i, s] * A[s, j] for s in range(3))
                    total += abs(ab - ba) ** 2
    return total


def test_product_frame_gram(product_subspace, v_basis):
    G = build_gram(product_subspace, v_basis)
    for a in range(3):
        expected = np.zeros((3, 3))
        expected[a, a] = 1.0
        assert np.abs(G.block(a, a) - expected).max() < 1e-14
        for b in range(3):
            if a != b:
                assert np.abs(G.block(a, b)).max() < 1e-14
    assert np.abs(partial_trace(G.entries) - np.eye(3)).max() < 1e-14
    assert diagonal_block_commutator_norm(G) < 1e-28


@settings(max_examples=30, deadline=None)
@given(seeds, seeds, st.integers(3, 8))
def test_build_gram_invariants(s0, s1, n):
    V = haar_random_subspace(3, n, 3, seed=s0)
    M = haar_unitary(3, np.random.default_rng(s1))
    G = build_gram(V, M).entries
    assert np.linalg.eigvalsh(G).min() >= -1e-12
    assert np.abs(partial_trace(G) - np.eye(3)).max() < 1e-12


def test_objective_equals_offdiagonal_mass():
    rng = np.random.default_rng(3)
    V = haar_random_subspace(3, 4, 3, seed=3)
    w, u = haar_unitary(3, rng), haar_unitary(3, rng)
    G = build_gram(apply_basis_change(V, w), u)
    assert abs(objective_from_gram(G) - objective_h(V, w, u)) < 1e-13


def test_embedded_example_gives_valid_gram():
    V, _, _ = appendix_b_subspace()
    G = build_gram(V, haar_unitary(3, np.random.default_rng(0)))
    assert isinstance(G, BlockGram)


def test_blockgram_rejects_invalid():
    with pytest.raises(ValueError):
        BlockGram(np.eye(9))  # partial trace is 3 I
    bad = np.eye(9) / 3
    bad[0, 1] = 0.5
    with pytest.raises(ValueError):
        BlockGram(bad)  # not Hermitian
    neg = np.diag([2.0, 1, 1, -1, 0, 0, 0, 0, 0])
    with pytest.raises(ValueError):
        BlockGram(neg)  # trace condition holds, not PSD


def test_conjugate_identity_is_noop():
    G = build_gram(haar_random_subspace(3, 4, 3, seed=9), np.eye(3))
    assert np.abs(conjugate_gram(G, np.eye(3), np.eye(3)).entries - G.entries).max() < 1e-15


@settings(max_examples=30, deadline=None)
@given(seeds, seeds)
def test_conjugate_gram_matches_rebuilt_gram(s0, s1):
    rng = np.random.default_rng(s1)
    V = haar_random_subspace(3, 5, 3, seed=s0)
    M, W, U = (haar_unitary(3, rng) for _ in range(3))
    G = build_gram(V, M)
    C = conjugate_gram(G, W, U)
    direct = build_gram(apply_basis_change(V, W), M @ U)
    assert np.abs(C.entries - direct.entries).max() < 1e-12
    assert np.abs(np.linalg.eigvalsh(C.entries) - np.linalg.eigvalsh(G.entries)).max() < 1e-10
    assert np.abs(partial_trace(C.entries) - np.eye(3)).max() < 1e-10


def test_commutator_of_diagonal_blocks_is_zero():
    blocks = [np.diag([0.2, 0.5, 0.1]), np.diag([0.3, 0.3, 0.3]), np.diag([0.5, 0.2, 0.6])]
    assert diagonal_block_commutator_norm(blocks) == 0.0


def test_commutator_norm_pauli_like_example():
    b1 = np.array([[0.25, 0.25, 0], [0.25, 0.25, 0], [0, 0, 0]])
    b2 = np.diag([0.5, 0, 0])
    b3 = np.eye(3) - b1 - b2
    g = np.zeros((9, 9))
    for a, b in enumerate((b1, b2, b3)):
        g[3 * a:3 * a + 3, 3 * a:3 * a + 3] = b
    G = BlockGram(g)
    oracle = _commutator_oracle([b1, b2, b3])
    assert abs(oracle - 0.09375) < 1e-15
    assert abs(diagonal_block_commutator_norm(G) - oracle) < 1e-15


def test_simultaneous_diagonalizer_diagonal_input():
    blocks = [np.diag([0.2, 0.5, 0.1]), np.diag([0.3, 0.3, 0.3]), np.diag([0.5, 0.2, 0.6])]
    W = simultaneous_diagonalizer(blocks).entries
    for b in blocks:
        d = W.conj().T @ b @ W
        assert np.abs(d - np.diag(np.diag(d))).max() < 1e-15
    # W is a phased permutation
    assert np.allclose(np.abs(W) ** 2 @ np.ones(3), 1)
    assert np.sum(np.abs(W) > 1e-12) == 3


def test_simultaneous_diagonalizer_recovers_shared_basis():
    rng = np.random.default_rng(5)
    Q = haar_unitary(3, rng)
    # degenerate spectra in two of the blocks
    blocks = [Q @ np.diag(d) @ Q.conj().T for d in ([1, 1, 0], [0, 2, 2], [3, 1, 2])]
    W = simultaneous_diagonalizer(blocks).entries
    for b in blocks:
        d = W.conj().T @ b @ W
        assert np.abs(d - np.diag(np.diag(d))).max() < 1e-10


def test_simultaneous_diagonalizer_identity_blocks():
    W = simultaneous_diagonalizer([np.eye(3)] * 3).entries
    assert np.abs(W @ W.conj().T - np.eye(3)).max() < 1e-12


def test_simultaneous_diagonalizer_rejects_noncommuting():
    b1 = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]], dtype=complex)
    b2 = np.diag([1.0, 0, 0])
    with pytest.raises(ValueError):
        simultaneous_diagonalizer([b1, b2, np.eye(3)])


def test_gram_to_subspace_product_frame(product_subspace, v_basis):
    G = build_gram(product_subspace, v_basis)
    V = gram_to_subspace(G)
    assert (V.dA, V.dB, V.k) == (3, 9, 3)
    assert np.abs(build_gram(V, np.eye(3)).entries - G.entries).max() < 1e-12
    # each theta_i lives on one first-factor index; the square root of the
    # round-off eigenvalues leaves ~1e-8 elsewhere
    mats = V.tensor()
    for i in range(3):
        support = [a for a in range(3) if np.linalg.norm(mats[i, a]) > 1e-6]
        assert support == [i]


@settings(max_examples=30, deadline=None)
@given(seeds, seeds, st.integers(3, 9))
def test_gram_to_subspace_round_trip(s0, s1, n):
    V = haar_random_subspace(3, n, 3, seed=s0)
    G = build_gram(V, haar_unitary(3, np.random.default_rng(s1)))
    back = build_gram(gram_to_subspace(G), np.eye(3))
    assert np.abs(back.entries - G.entries).max() < 1e-10


def test_gram_to_subspace_scaled_identity():
    V = gram_to_subspace(BlockGram(np.eye(9) / 3))
    assert gram_deviation(V.frame) < 1e-12
    w = np.sum(np.abs(V.tensor()) ** 2, axis=2)
    assert np.abs(w - 1 / 3).max() < 1e-12


def test_blockgram_json_round_trip():
    G = build_gram(haar_random_subspace(3, 3, 3, seed=1), np.eye(3))
    back = BlockGram.from_json(json.loads(json.dumps(G.to_json())))
    assert np.array_equal(back.entries, G.entries)
    bad = (np.eye(9)).tolist()
    with pytest.raises(ValueError):
        BlockGram.from_json([[[x, 0.0] for x in row] for row in bad])


def test_forward_equivalence_at_exact_zero(product_subspace, v_basis):
    w = haar_unitary(3, np.random.default_rng(1))
    V = apply_basis_change(product_subspace, w.conj().T)
    assert objective_h(V, w, v_basis) < 1e-10
    G = build_gram(apply_basis_change(V, w), v_basis)
    for b in G.diagonal_blocks():
        assert np.abs(b - np.diag(np.diag(b))).max() < 1e-5
    assert diagonal_block_commutator_norm(G) < 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_backward_equivalence_planted(seed):
    G, _ = planted_commuting_gram(3, seed)
    assert diagonal_block_commutator_norm(G) < 1e-10
    assert objective_from_gram(G) > 1e-3  # blocks are not diagonal to begin with
    W = diagonalizing_basis_change(G)
    assert objective_h(gram_to_subspace(G), W, np.eye(3)) < 1e-8


@settings(max_examples=20, deadline=None)
@given(seeds, seeds)
def test_phase_changes_keep_commutation_status(s0, s1):
    G, _ = planted_commuting_gram(4, s0)
    rng = np.random.default_rng(s1)
    dw = np.diag(np.exp(1j * rng.uniform(0, 6.3, 3)))
    du = np.diag(np.exp(1j * rng.uniform(0, 6.3, 3)))
    C = conjugate_gram(G, dw, du)
    assert (diagonal_block_commutator_norm(C) < 1e-10) == (diagonal_block_commutator_norm(G) < 1e-10)


def test_reduce_environment_n9_is_isometric():
    V = haar_random_subspace(3, 9, 3, seed=2)
    R = reduce_environment(V)
    assert R.dB == 9
    for M in (np.eye(3), haar_unitary(3, np.random.default_rng(0))):
        assert np.abs(build_gram(R, M).entries - build_gram(V, M).entries).max() < 1e-12


def test_reduce_environment_preserves_objective():
    V = haar_random_subspace(3, 20, 3, seed=4)
    R = reduce_environment(V)
    assert (R.dA, R.dB, R.k) == (3, 9, 3)
    rng = np.random.default_rng(4)
    for _ in range(100):
        w, u = haar_unitary(3, rng), haar_unitary(3, rng)
        assert abs(objective_h(R, w, u) - objective_h(V, w, u)) < 1e-10


def test_reduce_environment_low_rank_span():
    # residuals confined to a 4-dimensional subspace of C^15
    rng = np.random.default_rng(6)
    basis = np.linalg.qr(rng.standard_normal((15, 4)) + 1j * rng.standard_normal((15, 4)))[0]
    small = haar_random_subspace(3, 4, 3, seed=6).tensor()
    frame = np.einsum("eb,iab->iae", basis, small).reshape(3, -1)
    V = Subspace(3, 15, frame)
    R = reduce_environment(V)
    assert R.dB == 9
    active = np.abs(R.tensor()).max(axis=(0, 1)) > 1e-12
    assert active.sum() == 4
    assert np.abs(build_gram(R, np.eye(3)).entries - build_gram(V, np.eye(3)).entries).max() < 1e-12


def test_reduce_environment_search_agrees():
    V = haar_random_subspace(3, 20, 3, seed=10)
    cfg = SearchConfig(seed=3)
    a = minimize_h(V, cfg)
    b = minimize_h(reduce_environment(V), cfg)
    assert a.converged and b.converged
    assert abs(a.h_min - b.h_min) < 1e-5
