"""Block Gram formulation for 3-frames in C^3 (x) C^n.

For a frame theta_1..theta_3 and a first-factor measurement with columns
v_1..v_3, the 9x9 matrix G has blocks ``G[a, b][i, j] = <phi(i,a)|phi(j,b)>``
stored at row ``3*a + i`` and column ``3*b + j``.  Orthonormality of the
frame is equivalent to ``G[0,0] + G[1,1] + G[2,2] = I``, and the objective
equals the squared off-diagonal mass of the diagonal blocks.
"""

from dataclasses import dataclass

import numpy as np

from .core import (DimensionError, Side, Subspace, Unitary, apply_basis_change,
                   complex_from_json, complex_to_json, decompose)

PSD_TOL = 1e-10
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
COMMUTE_TOL = 1e-8


@dataclass(frozen=True)
class BlockGram:
    entries: np.ndarray
    check: bool = True

    def __post_init__(self):
        g = np.array(self.entries, dtype=np.complex128)
        if g.shape != (9, 9):
            raise DimensionError(f"block Gram matrix must be 9x9, got {g.shape}")
        if self.check:
            herm = np.linalg.norm(g - g.conj().T)
            if herm > HERMITIAN_TOL:
                raise ValueError(f"not Hermitian (deviation {herm:.3e})")
            lo = np.linalg.eigvalsh(g).min()
            if lo < -PSD_TOL:
                raise ValueError(f"not positive semidefinite (min eigenvalue {lo:.3e})")
            tr = np.linalg.norm(partial_trace(g) - np.eye(3))
            if tr > TRACE_TOL:
                raise ValueError(f"diagonal blocks do not sum to I (deviation {tr:.3e})")
        g.flags.writeable = False
        object.__setattr__(self, "entries", g)

    def block(self, a, b):
        return self.entries[3 * a:3 * a + 3, 3 * b:3 * b + 3]

    def diagonal_blocks(self):
        return [self.block(a, a) for a in range(3)]

    def to_json(self):
        return complex_to_json(self.entries)

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, dict):
            obj = obj["entries"]
        return cls(complex_from_json(obj))


def partial_trace(g):
    g = np.asarray(g)
    return sum(g[3 * a:3 * a + 3, 3 * a:3 * a + 3] for a in range(3))


def _require_three_frame(V):
    if V.dA != 3 or V.k != 3:
        raise DimensionError("block Gram analysis needs a 3-frame with dA = 3")


def build_gram(V, M):
    """Gram matrix of the nine residuals phi(i, a) under measurement M."""
    _require_three_frame(V)
    r = decompose(V, M, Side.FIRST).residuals
    cols = r.transpose(1, 0, 2).reshape(9, -1)
    g = cols.conj() @ cols.T
    return BlockGram(0.5 * (g + g.conj().T))


def conjugate_gram(G, W, U):
    """Gram matrix after a basis change W and a measurement rotation U.

    ``conjugate_gram(build_gram(V, M), W, U)`` equals
    ``build_gram(apply_basis_change(V, W), M @ U)``.  In block form this is
    the similarity ``(U^T (x) conj(W)) G (U^T (x) conj(W))^H``.
    """
    w = W.entries if isinstance(W, Unitary) else np.asarray(W)
    u = U.entries if isinstance(U, Unitary) else np.asarray(U)
    x = np.kron(u.T, w.conj())
    g = x @ G.entries @ x.conj().T
    return BlockGram(0.5 * (g + g.conj().T))


def diagonal_block_commutator_norm(G):
    """Sum over a < b of ||G_aa G_bb - G_bb G_aa||_F^2."""
    blocks = G.diagonal_blocks() if isinstance(G, BlockGram) else list(G)
    total = 0.0
    for a in range(len(blocks)):
        for b in range(a + 1, len(blocks)):
            c = blocks[a] @ blocks[b] - blocks[b] @ blocks[a]
            total += float(np.sum(np.abs(c) ** 2))
    return total


def _offdiag_mass(blocks, vec):
    total = 0.0
    for b in blocks:
        d = vec.conj().T @ b @ vec
        total += float(np.sum(np.abs(d) ** 2) - np.sum(np.abs(np.diag(d)) ** 2))
    return total


def simultaneous_diagonalizer(blocks, tol=COMMUTE_TOL, seed=0, draws=16):
    """Unitary W with W^H B W diagonal for every commuting Hermitian B.

    Degeneracies are resolved by diagonalising random real combinations of
    the blocks (fixed ``seed``).  Blocks that only nearly commute make a
    single combination fragile when its spectrum is nearly degenerate, so
    the best of ``draws`` eigenbases is kept.  Columns follow the ascending
    spectrum of the chosen combination.
    """
    blocks = [np.asarray(b, dtype=np.complex128) for b in blocks]
    if diagonal_block_commutator_norm(blocks) > tol:
        raise ValueError("blocks do not commute")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(draws):
        # Gaussian weights: the blocks may sum to the identity, and
        # near-equal weights would then give a near-degenerate combination
        coeffs = rng.standard_normal(len(blocks))
        combo = sum(c * b for c, b in zip(coeffs, blocks))
        _, vec = np.linalg.eigh(0.5 * (combo + combo.conj().T))
        mass = _offdiag_mass(blocks, vec)
        if best is None or mass < best[0]:
            best = (mass, vec)
        if mass == 0.0:
            break
    return Unitary(best[1])


def diagonalizing_basis_change(G, tol=COMMUTE_TOL, seed=0):
    """Basis selector making every diagonal block of G diagonal.

    A basis change W maps G_aa to conj(W) G_aa W^T, so the transpose of
    the simultaneous diagonaliser does the job.
    """
    q = simultaneous_diagonalizer(G.diagonal_blocks(), tol=tol, seed=seed)
    return Unitary(q.entries.T)


def psd_sqrt(g, tol=PSD_TOL):
    """Principal square root of a Hermitian PSD matrix (clamping round-off)."""
    lam, vec = np.linalg.eigh(0.5 * (g + g.conj().T))
    if lam.min() < -tol:
        raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {lam.min():.3e})")
    lam = np.clip(lam, 0.0, None)
    return (vec * np.sqrt(lam)) @ vec.conj().T


def gram_to_subspace(G):
    """3-frame in C^3 (x) C^9 whose standard-measurement Gram matrix is G.

    Residual phi(i, a) is column ``3*a + i`` of the principal square root.
    """
    root = psd_sqrt(G.entries)
    frame = np.zeros((3, 27), dtype=np.complex128)
    for i in range(3):
        for a in range(3):
            frame[i, 9 * a:9 * a + 9] = root[:, 3 * a + i]
    return Subspace(3, 9, frame)


def reduce_environment(V, rank_tol=1e-12):
    """Re-express V in C^3 (x) C^min(n, 9) without changing any residual
    inner product under first-factor measurements."""
    _require_three_frame(V)
    n = V.dB
    target = min(n, 9)
    t = V.tensor(Side.FIRST)
    cols = t.reshape(9, n).T
    u, s, _ = np.linalg.svd(cols, full_matrices=False)
    r = int(np.sum(s > rank_tol * max(s.max(), 1.0)))
    coords = u[:, :r].conj().T @ cols
    out = np.zeros((3, 3, target), dtype=np.complex128)
    out[:, :, :r] = coords.T.reshape(3, 3, r)
    return Subspace(3, target, out.reshape(3, -1))


def objective_from_gram(G):
    """Squared off-diagonal mass of the diagonal blocks."""
    return float(sum(np.sum(np.abs(b - np.diag(np.diag(b))) ** 2)
                     for b in G.diagonal_blocks()))


def planted_commuting_gram(n, seed):
    """Random valid BlockGram whose diagonal blocks commute but are not
    diagonal: a perfectly distinguishable frame hidden by a basis change.

    Returns (G, hidden basis change applied).
    """
    if n < 3:
        raise DimensionError("need n >= 3 to plant three orthogonal residuals")
    rng = np.random.default_rng(seed)
    weights = rng.dirichlet(np.ones(3), size=3)
    frame = np.zeros((3, 3, n), dtype=np.complex128)
    for a in range(3):
        z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        q, _ = np.linalg.qr(z)
        for i in range(3):
            frame[i, a] = np.sqrt(weights[i, a]) * q[:, i]
    V0 = Subspace(3, n, frame.reshape(3, -1))
    z = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    hidden = Unitary(np.linalg.qr(z)[0])
    V = apply_basis_change(V0, hidden)
    return build_gram(V, np.eye(3)), hidden
