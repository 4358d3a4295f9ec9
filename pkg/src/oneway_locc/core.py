"""Bipartite vectors, subspaces, unitaries and partial-measurement residuals.

Index layout: a vector in C^dA (x) C^dB stores amplitude (a, b) at
position ``a * dB + b``.  All serialization uses this layout.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.linalg import schur

from . import kernels

FRAME_TOL = 1e-10
UNITARY_TOL = 1e-10
JSON_FRAME_TOL = 1e-8


class DimensionError(ValueError):
    """Raised when array shapes or dimensions do not fit together."""


class Side(str, Enum):
    """Which tensor factor is measured first."""

    FIRST = "first"
    SECOND = "second"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("_", "-")
        aliases = {"first": cls.FIRST, "first-factor": cls.FIRST,
                   "second": cls.SECOND, "second-factor": cls.SECOND}
        if key not in aliases:
            raise ValueError(f"unknown side {value!r}")
        return aliases[key]


# ---------------------------------------------------------------------------
# JSON helpers for complex arrays
# ---------------------------------------------------------------------------


def complex_to_json(arr):
    """Nested lists with every complex entry written as ``[re, im]``."""
    arr = np.asarray(arr, dtype=np.complex128)
    return np.stack([arr.real, arr.imag], axis=-1).tolist()


def complex_from_json(obj):
    arr = np.asarray(obj, dtype=np.float64)
    if arr.shape[-1:] != (2,):
        raise ValueError("complex entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BipartiteVector:
    dA: int
    dB: int
    amplitudes: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128).ravel()
        if self.dA < 1 or self.dB < 1:
            raise DimensionError("dimensions must be positive")
        if amps.size != self.dA * self.dB:
            raise DimensionError(
                f"expected {self.dA * self.dB} amplitudes, got {amps.size}")
        if self.normalized and abs(np.vdot(amps, amps).real - 1.0) > 1e-12:
            raise ValueError("vector tagged normalized is not a unit vector")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    def matrix(self):
        """Amplitudes as a (dA, dB) array."""
        return self.amplitudes.reshape(self.dA, self.dB)


@dataclass(frozen=True)
class Subspace:
    """Ordered orthonormal frame of ``k`` vectors in C^dA (x) C^dB.

    ``frame`` has shape (k, dA*dB); row i is the i-th basis vector.
    """

    dA: int
    dB: int
    frame: np.ndarray
    tol: float = field(default=FRAME_TOL, repr=False, compare=False)

    def __post_init__(self):
        frame = np.array(self.frame, dtype=np.complex128)
        if frame.ndim == 1:
            frame = frame[None, :]
        if self.dA < 1 or self.dB < 1:
            raise DimensionError("dimensions must be positive")
        if frame.ndim != 2 or frame.shape[1] != self.dA * self.dB:
            raise DimensionError(
                f"frame must have shape (k, {self.dA * self.dB}), got {frame.shape}")
        if frame.shape[0] > self.dA * self.dB:
            raise DimensionError("more frame vectors than the ambient dimension")
        if self.tol is not None:
            dev = gram_deviation(frame)
            if dev > self.tol:
                raise ValueError(f"frame is not orthonormal (deviation {dev:.3e})")
        frame.flags.writeable = False
        object.__setattr__(self, "frame", frame)

    @property
    def k(self):
        return self.frame.shape[0]

    @property
    def vectors(self):
        return [BipartiteVector(self.dA, self.dB, v, normalized=False)
                for v in self.frame]

    def tensor(self, side=Side.FIRST):
        """Frame as (k, d_measured_first, d_other)."""
        t = self.frame.reshape(self.k, self.dA, self.dB)
        if Side.parse(side) is Side.SECOND:
            t = t.transpose(0, 2, 1)
        return np.ascontiguousarray(t)

    def measured_dim(self, side):
        return self.dA if Side.parse(side) is Side.FIRST else self.dB

    def to_json(self, raw=False):
        out = {"dA": self.dA, "dB": self.dB, "frame": complex_to_json(self.frame)}
        if raw:
            out["raw"] = True
        return out

    @classmethod
    def from_json(cls, obj):
        """Parse a subspace; orthonormality is enforced to 1e-8 unless
        ``"raw": true`` is present."""
        frame = complex_from_json(obj["frame"])
        raw = bool(obj.get("raw", False))
        return cls(int(obj["dA"]), int(obj["dB"]), frame,
                   tol=None if raw else JSON_FRAME_TOL)


@dataclass(frozen=True)
class Unitary:
    entries: np.ndarray

    def __post_init__(self):
        u = np.array(self.entries, dtype=np.complex128)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise DimensionError(f"unitary must be square, got {u.shape}")
        dev = np.linalg.norm(u @ u.conj().T - np.eye(u.shape[0]))
        if dev > UNITARY_TOL:
            raise ValueError(f"matrix is not unitary (deviation {dev:.3e})")
        u.flags.writeable = False
        object.__setattr__(self, "entries", u)

    @property
    def d(self):
        return self.entries.shape[0]

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d))

    def to_json(self):
        return complex_to_json(self.entries)

    @classmethod
    def from_json(cls, obj):
        return cls(complex_from_json(obj))


@dataclass(frozen=True)
class UnitaryParams:
    """Real coordinates of a Hermitian generator; the unitary is exp(i Hm)."""

    d: int
    params: np.ndarray

    def __post_init__(self):
        p = np.array(self.params, dtype=np.float64).ravel()
        if p.size != self.d * self.d:
            raise DimensionError(f"expected {self.d * self.d} parameters, got {p.size}")
        p.flags.writeable = False
        object.__setattr__(self, "params", p)

    @classmethod
    def zeros(cls, d):
        return cls(d, np.zeros(d * d))


@dataclass(frozen=True)
class ResidualTable:
    """Residual states phi(i, a) on the factor measured second.

    ``residuals`` has shape (k, m, d_res) with ``m`` first-stage outcomes.
    """

    residuals: np.ndarray

    @property
    def k(self):
        return self.residuals.shape[0]

    @property
    def m(self):
        return self.residuals.shape[1]

    @property
    def dB(self):
        return self.residuals.shape[2]

    def weights(self):
        """Outcome probabilities <phi(i,a)|phi(i,a)>, shape (k, m)."""
        return np.sum(np.abs(self.residuals) ** 2, axis=2)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def gram_deviation(frame):
    frame = np.asarray(frame)
    return float(np.abs(frame.conj() @ frame.T - np.eye(frame.shape[0])).max())


def orthonormalize_columns(z):
    """QR with the R diagonal made real positive (unique, deterministic)."""
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    phases = np.where(np.abs(diag) > 0, diag / np.abs(diag), 1.0)
    return q * phases


def haar_unitary(d, rng):
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    return orthonormalize_columns(z)


def haar_random_subspace(dA, dB, k, seed):
    """Span of ``k`` i.i.d. complex Gaussian vectors, orthonormalized."""
    if k < 1 or k > dA * dB:
        raise DimensionError(f"cannot fit {k} orthonormal vectors in dimension {dA * dB}")
    rng = np.random.default_rng(seed)
    D = dA * dB
    z = (rng.standard_normal((D, k)) + 1j * rng.standard_normal((D, k))) / np.sqrt(2)
    return Subspace(dA, dB, orthonormalize_columns(z).T)


def unitary_from_params(p):
    return Unitary(kernels.expm_params(p.params, p.d))


def params_from_unitary(u):
    """A logarithm of ``u`` in the exp(i Hm) parametrization.

    Uses the complex Schur form, which is diagonal for normal matrices.
    """
    m = u.entries if isinstance(u, Unitary) else np.asarray(u, dtype=np.complex128)
    t, z = schur(m, output="complex")
    angles = np.angle(np.diagonal(t))
    hm = (z * angles) @ z.conj().T
    hm = 0.5 * (hm + hm.conj().T)
    return UnitaryParams(m.shape[0], kernels.params_from_hermitian(hm))


def apply_basis_change(V, W):
    """New frame psi_i = sum_j W[i, j] theta_j."""
    w = W.entries if isinstance(W, Unitary) else np.asarray(W)
    if w.shape != (V.k, V.k):
        raise DimensionError(f"basis change must be {V.k}x{V.k}, got {w.shape}")
    return Subspace(V.dA, V.dB, w @ V.frame)


def decompose(V, M, side=Side.FIRST):
    """Residuals of each frame vector under a partial measurement.

    The columns of ``M`` are the measurement vectors |v_a> on the factor
    selected by ``side``.
    """
    side = Side.parse(side)
    m = M.entries if isinstance(M, Unitary) else np.asarray(M)
    d1 = V.measured_dim(side)
    if m.shape != (d1, d1):
        raise DimensionError(f"measurement must be {d1}x{d1} for side {side.value}")
    t = V.tensor(side)
    return ResidualTable(np.einsum("xa,kxb->kab", m.conj(), t))


def reconstruct(table, M, side=Side.FIRST):
    """Inverse of :func:`decompose`: frame rows sum_a |v_a> (x) |phi(i,a)>."""
    side = Side.parse(side)
    m = M.entries if isinstance(M, Unitary) else np.asarray(M)
    t = np.einsum("xa,kab->kxb", m, table.residuals)
    if side is Side.SECOND:
        t = t.transpose(0, 2, 1)
    return t.reshape(table.k, -1)
