"""Kraus channels, Choi rank, Stinespring subspaces and N estimates."""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import DimensionError, Side, Subspace, complex_from_json, complex_to_json
from .objective import SearchConfig, minimize_h, minimize_h_partial

TP_TOL = 1e-10
JSON_TP_TOL = 1e-8
RANK_TOL = 1e-10


class Direction(str, Enum):
    """Order of the two local measurements.

    ``ENV_TO_SYS`` (environment-assisted) measures the environment first;
    ``SYS_TO_ENV`` (environment-assisting) measures the system output first.
    """

    ENV_TO_SYS = "env->sys"
    SYS_TO_ENV = "sys->env"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "-").replace("2", "->")
        for member in cls:
            if key in (member.value, member.name.lower().replace("_", "-")):
                return member
        raise ValueError(f"unknown direction {value!r}")

    @property
    def side(self):
        # Stinespring frames are laid out as (system output) (x) (environment).
        return Side.SECOND if self is Direction.ENV_TO_SYS else Side.FIRST


@dataclass(frozen=True)
class KrausChannel:
    d_in: int
    d_out: int
    kraus: np.ndarray
    tol: float = TP_TOL

    def __post_init__(self):
        ks = np.array(self.kraus, dtype=np.complex128)
        if ks.ndim == 2:
            ks = ks[None]
        if ks.ndim != 3 or ks.shape[0] < 1 or ks.shape[1:] != (self.d_out, self.d_in):
            raise DimensionError(
                f"Kraus operators must have shape (r, {self.d_out}, {self.d_in}), got {ks.shape}")
        dev = tp_deviation(ks)
        if self.tol is not None and dev > self.tol:
            raise ValueError(f"channel is not trace preserving (deviation {dev:.3e})")
        ks.flags.writeable = False
        object.__setattr__(self, "kraus", ks)

    @property
    def r(self):
        return self.kraus.shape[0]

    def to_json(self):
        return {"d_in": self.d_in, "d_out": self.d_out,
                "kraus": [complex_to_json(k) for k in self.kraus]}

    @classmethod
    def from_json(cls, obj):
        ks = np.array([complex_from_json(k) for k in obj["kraus"]])
        return cls(int(obj["d_in"]), int(obj["d_out"]), ks, tol=JSON_TP_TOL)


def tp_deviation(kraus):
    ks = np.asarray(kraus)
    s = np.einsum("kji,kjl->il", ks.conj(), ks)
    return float(np.linalg.norm(s - np.eye(ks.shape[2])))


def choi_matrix(c):
    """(I (x) Phi)(|ME><ME|) with |ME> = d^{-1/2} sum_i |i>|i>."""
    vecs = c.kraus.transpose(0, 2, 1).reshape(c.r, -1) / np.sqrt(c.d_in)
    return vecs.T @ vecs.conj()


def _choi_spectrum(c):
    lam, vec = np.linalg.eigh(choi_matrix(c))
    keep = lam > RANK_TOL * max(lam.max(), 0.0)
    return lam[keep], vec[:, keep]


def channel_rank(c):
    """Numerical rank of the Choi matrix: the minimal environment dimension."""
    return int(_choi_spectrum(c)[0].size)


def rank_reduce(c):
    """Equivalent channel with exactly ``channel_rank(c)`` Kraus operators."""
    lam, vec = _choi_spectrum(c)
    order = np.argsort(lam)[::-1]
    lam, vec = lam[order], vec[:, order]
    ks = (vec * np.sqrt(c.d_in * lam)).T.reshape(-1, c.d_in, c.d_out).transpose(0, 2, 1)
    return KrausChannel(c.d_in, c.d_out, ks, tol=c.tol)


def stinespring_subspace(c, env_padding=0):
    """Frame sum_k K_k|i> (x) |k> over the standard input basis.

    Bipartite split is (system output : environment); ``env_padding``
    appends unused environment dimensions.
    """
    if tp_deviation(c.kraus) > TP_TOL:
        raise ValueError("channel is not trace preserving")
    r = c.r + int(env_padding)
    frame = np.zeros((c.d_in, c.d_out, r), dtype=np.complex128)
    frame[:, :, :c.r] = c.kraus.transpose(2, 1, 0)
    return Subspace(c.d_out, r, frame.reshape(c.d_in, -1))


@dataclass(frozen=True)
class NEstimate:
    n: int
    direction: Direction
    evidence: tuple

    def to_json(self):
        return {"n": self.n, "direction": self.direction.value,
                "evidence": [r.to_json() for r in self.evidence]}


def estimate_n(c, direction, cfg=None, env_padding=0, reduce=True):
    """Largest number m of orthonormal inputs found to be reliably
    distinguishable in the given direction.

    Searches m = d_in, d_in - 1, ..., 2 and stops at the first success.
    The value is a certified lower bound (the witness is in ``evidence``).
    """
    direction = Direction.parse(direction)
    cfg = (cfg or SearchConfig()).replace(side=direction.side)
    if reduce:
        c = rank_reduce(c)
    V = stinespring_subspace(c, env_padding=env_padding)
    evidence = []
    for m in range(c.d_in, 1, -1):
        res = minimize_h(V, cfg) if m == V.k else minimize_h_partial(V, m, cfg)
        evidence.append(res)
        if res.converged:
            return NEstimate(m, direction, tuple(evidence))
    return NEstimate(1, direction, tuple(evidence))


def channel_from_subspace(V):
    """Kraus channel whose Stinespring frame (system : environment) is V."""
    ks = V.frame.reshape(V.k, V.dA, V.dB).transpose(2, 1, 0)
    return KrausChannel(V.k, V.dA, ks)


def random_channel(d_in, d_out, r, seed):
    """Kraus operators from a Haar-random isometry C^d_in -> C^d_out (x) C^r."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((d_out * r, d_in)) + 1j * rng.standard_normal((d_out * r, d_in))
    q, _ = np.linalg.qr(z)
    ks = q.reshape(d_out, r, d_in).transpose(1, 0, 2)
    return KrausChannel(d_in, d_out, ks)
