"""Explicit two-stage measurements and exact verification of reliability."""

from dataclasses import dataclass

import numpy as np

from .core import Side, Unitary, apply_basis_change, complex_from_json, decompose
from .objective import FORWARD_RESTARTS, objective_h, refine

REJECT = -1
ZERO_RESIDUAL = 1e-8
EXTRACT_TOL = 1e-8


class UnreliableProtocolError(ValueError):
    """The basis/measurement pair does not make the objective vanish."""


@dataclass(frozen=True)
class TwoStageProtocol:
    """First-stage basis on one factor, then a per-outcome basis on the other.

    ``assignment[a, b]`` is the index of the state announced for the
    combined outcome (a, b), or ``REJECT`` for completion vectors.
    """

    side: Side
    first_stage: Unitary
    second_stage: tuple
    assignment: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "side", Side.parse(self.side))
        asg = np.array(self.assignment, dtype=np.int64)
        if asg.shape != (self.first_stage.d, self.second_stage[0].d):
            raise ValueError("assignment shape does not match the stage dimensions")
        asg.flags.writeable = False
        object.__setattr__(self, "assignment", asg)

    def partition(self):
        """Disjoint outcome sets S_i as {state index: [(a, b), ...]}."""
        cells = {}
        for (a, b), i in np.ndenumerate(self.assignment):
            if i != REJECT:
                cells.setdefault(int(i), []).append((int(a), int(b)))
        return cells

    def to_json(self):
        return {
            "side": self.side.value,
            "first_stage": self.first_stage.to_json(),
            "second_stage": [u.to_json() for u in self.second_stage],
            "assignment": self.assignment.tolist(),
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            side=obj["side"],
            first_stage=Unitary(complex_from_json(obj["first_stage"])),
            second_stage=tuple(Unitary(complex_from_json(u)) for u in obj["second_stage"]),
            assignment=np.asarray(obj["assignment"]),
        )


def _complete_basis(vectors, dim):
    # Gram-Schmidt on the given vectors, then standard-basis candidates.
    basis = []
    for v in list(vectors) + list(np.eye(dim, dtype=np.complex128)):
        w = np.array(v, dtype=np.complex128)
        for b in basis:
            w = w - np.vdot(b, w) * b
        norm = np.linalg.norm(w)
        if norm > 1e-6:
            basis.append(w / norm)
        if len(basis) == dim:
            break
    return np.array(basis).T


def extract_protocol(V, W, M, side=Side.FIRST, tol=EXTRACT_TOL):
    side = Side.parse(side)
    h = objective_h(V, W, M, side)
    if h >= tol:
        raise UnreliableProtocolError(f"objective {h:.3e} is above {tol:.1e}")
    res = decompose(apply_basis_change(V, W), M, side).residuals
    k, d1, d2 = res.shape
    stages = []
    assignment = np.full((d1, d2), REJECT, dtype=np.int64)
    for a in range(d1):
        states, vecs = [], []
        for i in range(k):
            norm = np.linalg.norm(res[i, a])
            if norm >= ZERO_RESIDUAL:
                states.append(i)
                vecs.append(res[i, a] / norm)
        if len(vecs) > d2:
            raise UnreliableProtocolError(f"outcome {a} has more residuals than dimensions")
        basis = _complete_basis(vecs, d2)
        stages.append(Unitary(basis))
        for slot, i in enumerate(states):
            assignment[a, slot] = i
    M = M if isinstance(M, Unitary) else Unitary(M)
    return TwoStageProtocol(side, M, tuple(stages), assignment)


def outcome_probabilities(V, W, protocol):
    """Exact probabilities, shape (k, d1, d2), of each combined outcome."""
    res = decompose(apply_basis_change(V, W), protocol.first_stage, protocol.side).residuals
    second = np.stack([u.entries for u in protocol.second_stage])
    amps = np.einsum("abs,kab->kas", second.conj(), res)
    return np.abs(amps) ** 2


def verify_protocol(V, W, protocol, trials=0, seed=0):
    """Probability, per basis state, of an outcome outside its own cell.

    The computation is exact.  With ``trials > 0`` a Monte Carlo estimate of
    the same quantity is added for cross-checking.
    """
    probs = outcome_probabilities(V, W, protocol)
    k = probs.shape[0]
    own = protocol.assignment[None, :, :] == np.arange(k)[:, None, None]
    miss = np.array([probs[i][~own[i]].sum() for i in range(k)])
    report = {
        "max_misidentification_probability": float(miss.max()),
        "misidentification": miss.tolist(),
        "total_probability": probs.reshape(k, -1).sum(axis=1).tolist(),
    }
    if trials > 0:
        rng = np.random.default_rng(seed)
        mc = []
        for i in range(k):
            p = probs[i].ravel()
            draws = rng.choice(p.size, size=trials, p=p / p.sum())
            mc.append(float(np.mean(~own[i].ravel()[draws])))
        report["monte_carlo"] = mc
    return report


def protocol_from_search(V, result, tol=EXTRACT_TOL, extra_restarts=FORWARD_RESTARTS):
    """Protocol for a converged search.

    When the optimum is above ``tol`` it is refined, continuing the restart
    stream if needed.  Should nothing get below ``tol`` the best optimum is
    extracted at the search's own success threshold and left to
    :func:`verify_protocol` to quantify.
    """
    if not result.converged:
        raise UnreliableProtocolError("search did not converge")
    if result.h_min >= tol:
        result = refine(V, result, threshold=tol * 1e-4, extra_restarts=extra_restarts)
    if result.h_min >= tol:
        tol = max(tol, result.config.success_threshold)
    return extract_protocol(V, result.basis_selector, result.measurement,
                            result.config.side, tol), result
