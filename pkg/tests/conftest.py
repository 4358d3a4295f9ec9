import numpy as np
import pytest

from oneway_locc.core import Subspace, Unitary, haar_unitary


def product_frame(v, n=3):
    """theta_i = |v_i> (x) |e_i>, with v_i the columns of ``v``."""
    d = v.shape[0]
    frame = np.zeros((3, d * n), dtype=np.complex128)
    for i in range(3):
        frame[i] = np.kron(v[:, i], np.eye(n)[i])
    return Subspace(d, n, frame)


def brute_force_h(frame, dA, dB, w, u, side="first"):
    """Direct double sum, one inner product at a time, without einsum."""
    k = frame.shape[0]
    psi = [sum(w[i, j] * frame[j] for j in range(k)) for i in range(k)]
    mats = [p.reshape(dA, dB) for p in psi]
    d1 = dA if side == "first" else dB
    total = 0.0
    for a in range(d1):
        if side == "first":
            res = [np.conj(u[:, a]) @ mat for mat in mats]
        else:
            res = [mat @ np.conj(u[:, a]) for mat in mats]
        for i in range(k):
            for j in range(k):
                if i != j:
                    total += abs(np.vdot(res[i], res[j])) ** 2
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def v_basis():
    return haar_unitary(3, np.random.default_rng(7))


@pytest.fixture
def product_subspace(v_basis):
    return product_frame(v_basis)


@pytest.fixture
def entangled_pair_subspace():
    """theta_1 = (v1 e1 + v2 e2)/sqrt2, theta_2 = (v1 e2 + v2 e1)/sqrt2,
    theta_3 = v3 e3, with the standard basis for v and e."""
    e = np.eye(3)
    s = 1 / np.sqrt(2)
    frame = np.array([
        s * (np.kron(e[0], e[0]) + np.kron(e[1], e[1])),
        s * (np.kron(e[0], e[1]) + np.kron(e[1], e[0])),
        np.kron(e[2], e[2]),
    ])
    return Subspace(3, 3, frame)


@pytest.fixture
def identity3():
    return Unitary.identity(3)
