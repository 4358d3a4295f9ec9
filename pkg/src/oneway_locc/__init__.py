"""One-way LOCC distinguishability of bases in bipartite subspaces."""

from .channel import (Direction, KrausChannel, channel_rank, estimate_n, rank_reduce,
                      stinespring_subspace)
from .core import (BipartiteVector, DimensionError, ResidualTable, Side, Subspace, Unitary,
                   UnitaryParams, apply_basis_change, decompose, haar_random_subspace,
                   params_from_unitary, reconstruct, unitary_from_params)
from .gram import (BlockGram, build_gram, conjugate_gram, diagonal_block_commutator_norm,
                   gram_to_subspace, reduce_environment, simultaneous_diagonalizer)
from .kernels import HAVE_NUMBA
from .objective import (SearchConfig, SearchResult, minimize_h, minimize_h_partial,
                        objective_gradient, objective_h, refine)
from .protocol import TwoStageProtocol, extract_protocol, protocol_from_search, verify_protocol

__version__ = "0.1.0"

__all__ = [
    "Direction",
    "KrausChannel",
    "channel_rank",
    "estimate_n",
    "rank_reduce",
    "stinespring_subspace",
    "BipartiteVector",
    "DimensionError",
    "ResidualTable",
    "Side",
    "Subspace",
    "Unitary",
    "UnitaryParams",
    "apply_basis_change",
    "decompose",
    "haar_random_subspace",
    "params_from_unitary",
    "reconstruct",
    "unitary_from_params",
    "BlockGram",
    "build_gram",
    "conjugate_gram",
    "diagonal_block_commutator_norm",
    "gram_to_subspace",
    "reduce_environment",
    "simultaneous_diagonalizer",
    "HAVE_NUMBA",
    "SearchConfig",
    "SearchResult",
    "minimize_h",
    "minimize_h_partial",
    "objective_gradient",
    "objective_h",
    "refine",
    "TwoStageProtocol",
    "extract_protocol",
    "protocol_from_search",
    "verify_protocol",
]

