"""Distinguishability objective and its multistart minimisation."""

from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .core import (DimensionError, Side, Unitary, apply_basis_change,
                   decompose, haar_unitary, params_from_unitary)

DEFAULT_THRESHOLD = 1e-6
FORWARD_RESTARTS = 20
CERTIFY_RESTARTS = 200


@dataclass(frozen=True)
class SearchConfig:
    restarts: int = FORWARD_RESTARTS
    max_iterations: int = 2000
    success_threshold: float = DEFAULT_THRESHOLD
    gradient_tolerance: float = 1e-9
    seed: int = 0
    side: Side = Side.FIRST
    keep_trace: bool = False

    def __post_init__(self):
        object.__setattr__(self, "side", Side.parse(self.side))
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.success_threshold > 0:
            raise ValueError("success_threshold must be positive")
        if self.gradient_tolerance < 0:
            raise ValueError("gradient_tolerance must be nonnegative")

    def replace(self, **changes):
        data = asdict(self)
        data.update(changes)
        return SearchConfig(**data)

    def to_json(self):
        data = asdict(self)
        data["side"] = self.side.value
        return data

    @classmethod
    def from_json(cls, obj):
        return cls(**obj)


@dataclass(frozen=True)
class SearchResult:
    h_min: float
    basis_selector: Unitary
    measurement: Unitary
    converged: bool
    restarts_used: int
    total_iterations: int
    config: SearchConfig
    best_restart: int = 0
    m: int = 0
    trace: tuple = None

    def to_json(self):
        out = {
            "h_min": self.h_min,
            "converged": self.converged,
            "basis_selector": self.basis_selector.to_json(),
            "measurement": self.measurement.to_json(),
            "restarts_used": self.restarts_used,
            "total_iterations": self.total_iterations,
            "best_restart": self.best_restart,
            "m": self.m,
            "config": self.config.to_json(),
        }
        if self.trace is not None:
            out["trace"] = list(self.trace)
        return out

    @classmethod
    def from_json(cls, obj):
        trace = obj.get("trace")
        return cls(
            h_min=float(obj["h_min"]),
            basis_selector=Unitary.from_json(obj["basis_selector"]),
            measurement=Unitary.from_json(obj["measurement"]),
            converged=bool(obj["converged"]),
            restarts_used=int(obj["restarts_used"]),
            total_iterations=int(obj["total_iterations"]),
            config=SearchConfig.from_json(obj["config"]),
            best_restart=int(obj.get("best_restart", 0)),
            m=int(obj.get("m", 0)),
            trace=tuple(trace) if trace is not None else None,
        )


def _entries(u):
    return u.entries if isinstance(u, Unitary) else np.asarray(u, dtype=np.complex128)


def objective_h(V, W, M, side=Side.FIRST, m=None):
    """Sum over outcomes a and pairs i != j of |<phi(i,a)|phi(j,a)>|^2.

    With ``m`` given, only the first ``m`` vectors of the new basis enter.
    """
    side = Side.parse(side)
    w = _entries(W)
    if w.shape != (V.k, V.k):
        raise DimensionError(f"basis selector must be {V.k}x{V.k}")
    m = V.k if m is None else m
    r = decompose(apply_basis_change(V, w), M, side).residuals[:m]
    gram = np.einsum("iab,jab->aij", r.conj(), r)
    gram[:, np.arange(m), np.arange(m)] = 0.0
    return float(np.sum(np.abs(gram) ** 2))


def _pack(V, pW, pM, side):
    d1 = V.measured_dim(side)
    if pW.d != V.k or pM.d != d1:
        raise DimensionError(
            f"parameter dimensions ({pW.d}, {pM.d}) do not match ({V.k}, {d1})")
    return np.concatenate([pW.params, pM.params])


def objective_from_params(V, pW, pM, side=Side.FIRST, m=None):
    side = Side.parse(side)
    p = _pack(V, pW, pM, side)
    return kernels.h_value(V.tensor(side), p, V.k if m is None else m)


def objective_gradient(V, pW, pM, side=Side.FIRST, m=None):
    """Gradient of the objective w.r.t. the concatenated (pW, pM) vector."""
    side = Side.parse(side)
    p = _pack(V, pW, pM, side)
    return kernels.h_and_grad(V.tensor(side), p, V.k if m is None else m)[1]


def restart_rng(seed, restart):
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(restart)])


def initial_point(k, d1, seed, restart):
    """Haar-random (W, M) for one restart, as a packed parameter vector."""
    rng = restart_rng(seed, restart)
    pw = params_from_unitary(haar_unitary(k, rng)).params
    pm = params_from_unitary(haar_unitary(d1, rng)).params
    return np.concatenate([pw, pm])


def _search(V, m, cfg):
    side = cfg.side
    t = V.tensor(side)
    k, d1 = V.k, t.shape[1]
    best = None
    total = 0
    used = 0
    for restart in range(cfg.restarts):
        p0 = initial_point(k, d1, cfg.seed, restart)
        p, h, iters, trace, status = kernels.descend(
            t, p0, m, max_iter=cfg.max_iterations,
            threshold=cfg.success_threshold, gtol=cfg.gradient_tolerance)
        total += iters
        used += 1
        if best is None or h < best[0]:
            best = (h, p, restart, trace)
        if h < cfg.success_threshold:
            break
    h, p, restart, trace = best
    return SearchResult(
        h_min=h,
        basis_selector=Unitary(kernels.expm_params(p, k, 0)),
        measurement=Unitary(kernels.expm_params(p, d1, k * k)),
        converged=h < cfg.success_threshold,
        restarts_used=used,
        total_iterations=total,
        config=cfg,
        best_restart=restart,
        m=m,
        trace=tuple(float(x) for x in trace) if cfg.keep_trace else None,
    )


def minimize_h(V, cfg=None):
    """Multistart search for a basis of V and a first-stage measurement
    that make the objective vanish.

    Restarts run in order from seeded Haar-random starting points and the
    search stops at the first restart that reaches the success threshold.
    Not reaching it is reported as ``converged=False``, never raised.
    """
    return _search(V, V.k, cfg or SearchConfig())


def minimize_h_partial(V, m, cfg=None):
    """As :func:`minimize_h` but only the first ``m`` new basis vectors
    (rows of the basis selector) have to be distinguished."""
    if not 1 <= m < V.k:
        raise DimensionError(f"need 1 <= m < {V.k}, got {m}")
    return _search(V, m, cfg or SearchConfig())


def refine(V, result, threshold=1e-12, max_iterations=2000, extra_restarts=0):
    """Continue the descent from ``result``'s optimum down to ``threshold``.

    Searches stop as soon as they cross the success threshold, which can
    leave too little margin for downstream tolerances.  Some optima are
    small positive local minima; with ``extra_restarts`` the seeded restart
    stream is then continued past ``restarts_used`` with the tighter
    threshold.  The returned result is never worse than the input.
    """
    cfg = result.config
    t = V.tensor(cfg.side)
    k, d1 = V.k, t.shape[1]
    m = result.m or k
    p0 = np.concatenate([params_from_unitary(result.basis_selector).params,
                         params_from_unitary(result.measurement).params])
    p, h, iters, _, _ = kernels.descend(t, p0, m, max_iter=max_iterations,
                                        threshold=threshold, gtol=0.0)
    best = (h, p, result.best_restart)
    total = result.total_iterations + iters
    used = result.restarts_used
    for restart in range(used, used + extra_restarts):
        if best[0] < threshold:
            break
        p0 = initial_point(k, d1, cfg.seed, restart)
        p, h, iters, _, _ = kernels.descend(t, p0, m, max_iter=max_iterations,
                                            threshold=threshold, gtol=cfg.gradient_tolerance)
        total += iters
        used += 1
        if h < best[0]:
            best = (h, p, restart)
    h, p, restart = best
    if not h < result.h_min:
        return result
    return SearchResult(
        h_min=h,
        basis_selector=Unitary(kernels.expm_params(p, k, 0)),
        measurement=Unitary(kernels.expm_params(p, d1, k * k)),
        converged=h < cfg.success_threshold,
        restarts_used=used,
        total_iterations=total,
        config=cfg,
        best_restart=restart,
        m=result.m,
        trace=result.trace,
    )
