"""Hot numeric kernels: unitary exponential map, objective, gradient, descent.

Every kernel has two implementations with the same signature:

* ``_nb_*``  explicit loops, compiled with numba when available;
* ``_np_*``  vectorised numpy, used when numba is disabled.

The public names at the bottom of the module are bound to one family at
import time (see :mod:`oneway_locc._accel`).  Both families agree to
round-off; tests run them side by side.

Layout conventions
------------------
A frame is passed as a complex tensor ``T`` of shape ``(k, d1, d2)`` where
``d1`` is the factor measured first and ``d2`` the factor measured second.
A parameter vector ``p`` packs the basis selector (``k*k`` reals) followed
by the measurement (``d1*d1`` reals).  Inside a ``d*d`` block the first
``d`` entries are the diagonal of the Hermitian generator and the rest are
``(re, im)`` pairs for the strictly upper triangle in row-major order; the
unitary is ``exp(1j * Hm)``.
"""

import types

import numpy as np

from ._accel import HAVE_NUMBA, njit

__all__ = [
    "HAVE_NUMBA",
    "hermitian_from_params",
    "params_from_hermitian",
    "expm_params",
    "h_value",
    "h_and_grad",
    "descend",
]


# ---------------------------------------------------------------------------
# numba family
# ---------------------------------------------------------------------------


@njit(cache=True)
def _nb_hermitian(p, off, d):
    hm = np.zeros((d, d), dtype=np.complex128)
    for j in range(d):
        hm[j, j] = p[off + j]
    idx = off + d
    for j in range(d):
        for l in range(j + 1, d):
            re = p[idx]
            im = p[idx + 1]
            idx += 2
            hm[j, l] = im - 1j * re
            hm[l, j] = im + 1j * re
    return hm


@njit(cache=True)
def _nb_expm(p, off, d):
    lam, vec = np.linalg.eigh(_nb_hermitian(p, off, d))
    u = np.zeros((d, d), dtype=np.complex128)
    for j in range(d):
        for l in range(d):
            acc = 0j
            for s in range(d):
                acc += vec[j, s] * np.exp(1j * lam[s]) * np.conj(vec[l, s])
            u[j, l] = acc
    return u, lam, vec


@njit(cache=True)
def _nb_pullback(gamma, lam, vec, out, off):
    # Daleckii-Krein: d exp(A)[E] = V (Phi o V^H E V) V^H, so the gradient
    # w.r.t. E is V ((V^H Gamma V) o conj(Phi)) V^H.
    d = lam.shape[0]
    tmp = np.zeros((d, d), dtype=np.complex128)
    for j in range(d):
        for l in range(d):
            acc = 0j
            for s in range(d):
                acc += np.conj(vec[s, j]) * gamma[s, l]
            tmp[j, l] = acc
    gt = np.zeros((d, d), dtype=np.complex128)
    for j in range(d):
        for l in range(d):
            acc = 0j
            for s in range(d):
                acc += tmp[j, s] * vec[s, l]
            half = 0.5 * (lam[j] - lam[l])
            sinc = 1.0 if abs(half) < 1e-8 else np.sin(half) / half
            phi = np.exp(0.5j * (lam[j] + lam[l])) * sinc
            gt[j, l] = acc * np.conj(phi)
    for j in range(d):
        for l in range(d):
            acc = 0j
            for s in range(d):
                acc += vec[j, s] * gt[s, l]
            tmp[j, l] = acc
    ge = np.zeros((d, d), dtype=np.complex128)
    for j in range(d):
        for l in range(d):
            acc = 0j
            for s in range(d):
                acc += tmp[j, s] * np.conj(vec[l, s])
            ge[j, l] = acc
    for j in range(d):
        out[off + j] = ge[j, j].imag
    idx = off + d
    for j in range(d):
        for l in range(j + 1, d):
            out[idx] = ge[j, l].real - ge[l, j].real
            out[idx + 1] = ge[j, l].imag + ge[l, j].imag
            idx += 2


@njit(cache=True)
def _nb_residuals(t, w, u, m):
    k, d1, d2 = t.shape
    s = np.zeros((k, d1, d2), dtype=np.complex128)
    for j in range(k):
        for a in range(d1):
            for x in range(d1):
                c = np.conj(u[x, a])
                for b in range(d2):
                    s[j, a, b] += c * t[j, x, b]
    r = np.zeros((m, d1, d2), dtype=np.complex128)
    for i in range(m):
        for j in range(k):
            c = w[i, j]
            for a in range(d1):
                for b in range(d2):
                    r[i, a, b] += c * s[j, a, b]
    return s, r


@njit(cache=True)
def _nb_h_value(t, p, m):
    k, d1, _ = t.shape
    w = _nb_expm(p, 0, k)[0]
    u = _nb_expm(p, k * k, d1)[0]
    return _nb_h_from_residuals(_nb_residuals(t, w, u, m)[1])


@njit(cache=True)
def _nb_h_from_residuals(r):
    m, d1, d2 = r.shape
    h = 0.0
    for a in range(d1):
        for i in range(m):
            for j in range(m):
                if i == j:
                    continue
                g = 0j
                for b in range(d2):
                    g += np.conj(r[i, a, b]) * r[j, a, b]
                h += g.real * g.real + g.imag * g.imag
    return h


@njit(cache=True)
def _nb_h_and_grad(t, p, m):
    k, d1, d2 = t.shape
    w, lw, vw = _nb_expm(p, 0, k)
    u, lu, vu = _nb_expm(p, k * k, d1)
    s, r = _nb_residuals(t, w, u, m)

    h = 0.0
    gr = np.zeros((m, d1, d2), dtype=np.complex128)
    gram = np.zeros((m, m), dtype=np.complex128)
    for a in range(d1):
        for i in range(m):
            for j in range(m):
                g = 0j
                for b in range(d2):
                    g += np.conj(r[i, a, b]) * r[j, a, b]
                gram[i, j] = g
                if i != j:
                    h += g.real * g.real + g.imag * g.imag
        for q in range(m):
            for j in range(m):
                if j == q:
                    continue
                c = 4.0 * gram[j, q]
                for b in range(d2):
                    gr[q, a, b] += c * r[j, a, b]

    gw = np.zeros((k, k), dtype=np.complex128)
    for i in range(m):
        for j in range(k):
            acc = 0j
            for a in range(d1):
                for b in range(d2):
                    acc += gr[i, a, b] * np.conj(s[j, a, b])
            gw[i, j] = acc

    gu = np.zeros((d1, d1), dtype=np.complex128)
    for i in range(m):
        pm = np.zeros((d1, d2), dtype=np.complex128)
        for j in range(k):
            c = w[i, j]
            for x in range(d1):
                for b in range(d2):
                    pm[x, b] += c * t[j, x, b]
        for x in range(d1):
            for a in range(d1):
                acc = 0j
                for b in range(d2):
                    acc += np.conj(gr[i, a, b]) * pm[x, b]
                gu[x, a] += acc

    grad = np.zeros(p.shape[0])
    _nb_pullback(gw, lw, vw, grad, 0)
    _nb_pullback(gu, lu, vu, grad, k * k)
    return h, grad


# ---------------------------------------------------------------------------
# numpy family
# ---------------------------------------------------------------------------


def _np_hermitian(p, off, d):
    hm = np.zeros((d, d), dtype=np.complex128)
    hm[np.diag_indices(d)] = p[off:off + d]
    iu, ju = np.triu_indices(d, 1)
    pairs = p[off + d:off + d * d].reshape(-1, 2)
    hm[iu, ju] = pairs[:, 1] - 1j * pairs[:, 0]
    hm[ju, iu] = pairs[:, 1] + 1j * pairs[:, 0]
    return hm


def _np_expm(p, off, d):
    lam, vec = np.linalg.eigh(_np_hermitian(p, off, d))
    return (vec * np.exp(1j * lam)) @ vec.conj().T, lam, vec


def _np_pullback(gamma, lam, vec, out, off):
    d = lam.shape[0]
    half = 0.5 * (lam[:, None] - lam[None, :])
    phi = np.exp(0.5j * (lam[:, None] + lam[None, :])) * np.sinc(half / np.pi)
    ge = vec @ ((vec.conj().T @ gamma @ vec) * phi.conj()) @ vec.conj().T
    out[off:off + d] = ge.diagonal().imag
    iu, ju = np.triu_indices(d, 1)
    pairs = np.empty((iu.size, 2))
    pairs[:, 0] = ge[iu, ju].real - ge[ju, iu].real
    pairs[:, 1] = ge[iu, ju].imag + ge[ju, iu].imag
    out[off + d:off + d * d] = pairs.ravel()


def _np_residuals(t, w, u, m):
    s = np.einsum("xa,jxb->jab", u.conj(), t)
    r = np.einsum("ij,jab->iab", w[:m], s)
    return s, r


def _np_h_from_residuals(r):
    gram = np.einsum("iab,jab->aij", r.conj(), r)
    off = ~np.eye(r.shape[0], dtype=bool)
    return float(np.sum(np.abs(gram[:, off]) ** 2))


def _np_h_value(t, p, m):
    k, d1, _ = t.shape
    w = _np_expm(p, 0, k)[0]
    u = _np_expm(p, k * k, d1)[0]
    return _np_h_from_residuals(_np_residuals(t, w, u, m)[1])


def _np_h_and_grad(t, p, m):
    k, d1, _ = t.shape
    w, lw, vw = _np_expm(p, 0, k)
    u, lu, vu = _np_expm(p, k * k, d1)
    s, r = _np_residuals(t, w, u, m)
    gram = np.einsum("iab,jab->aij", r.conj(), r)
    gram[:, np.arange(m), np.arange(m)] = 0.0
    h = float(np.sum(np.abs(gram) ** 2))
    gr = 4.0 * np.einsum("ajq,jab->qab", gram, r)
    gw = np.zeros((k, k), dtype=np.complex128)
    gw[:m] = np.einsum("iab,jab->ij", gr, s.conj())
    pm = np.einsum("ij,jxb->ixb", w[:m], t)
    gu = np.einsum("iab,ixb->xa", gr.conj(), pm)
    grad = np.zeros(p.shape[0])
    _np_pullback(gw, lw, vw, grad, 0)
    _np_pullback(gu, lu, vu, grad, k * k)
    return h, grad


# ---------------------------------------------------------------------------
# descent (shared body; compiled once per family)
# ---------------------------------------------------------------------------


def _descend_body(t, p0, m, max_iter, threshold, gtol, window, mem):
    """L-BFGS with Armijo backtracking. Stops as soon as H < threshold.

    Returns (p, h, iterations, trace, status) where status is 0 when the
    threshold was reached, 1 for a stationary point (small gradient, or
    relative progress below 1e-6 over ``window`` iterations), 2 for the
    iteration cap and 3 for a failed line search.

    ``_hgrad`` and ``_hval`` are free names bound per family by
    :func:`_bind_family`.
    """
    n = p0.shape[0]
    p = p0.copy()
    f, g = _hgrad(t, p, m)  # noqa: F821 (bound per family)
    trace = np.empty(max_iter + 1)
    trace[0] = f
    s_hist = np.zeros((mem, n))
    y_hist = np.zeros((mem, n))
    rho = np.zeros(mem)
    alpha = np.zeros(mem)
    stored = 0
    head = 0
    it = 0
    status = 2
    while True:
        if f < threshold:
            status = 0
            break
        gnorm = np.sqrt(np.dot(g, g))
        if gnorm <= gtol:
            status = 1
            break
        if it >= max_iter:
            status = 2
            break
        if it >= window and trace[it - window] - f < 1e-6 * trace[it - window]:
            status = 1
            break

        q = g.copy()
        for c in range(stored):
            idx = (head - 1 - c) % mem
            alpha[idx] = rho[idx] * np.dot(s_hist[idx], q)
            q -= alpha[idx] * y_hist[idx]
        if stored > 0:
            last = (head - 1) % mem
            q *= np.dot(s_hist[last], y_hist[last]) / np.dot(y_hist[last], y_hist[last])
        else:
            q /= max(1.0, gnorm)
        for c in range(stored - 1, -1, -1):
            idx = (head - 1 - c) % mem
            beta = rho[idx] * np.dot(y_hist[idx], q)
            q += (alpha[idx] - beta) * s_hist[idx]
        direction = -q
        slope = np.dot(g, direction)
        if slope >= 0.0:
            direction = -g / max(1.0, gnorm)
            slope = np.dot(g, direction)
            stored = 0

        step = 1.0
        accepted = False
        while step > 1e-14:
            trial = p + step * direction
            ft = _hval(t, trial, m)  # noqa: F821
            if ft <= f + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if stored > 0:
                stored = 0
                continue
            status = 3
            break

        fn, gn = _hgrad(t, trial, m)  # noqa: F821
        sv = trial - p
        yv = gn - g
        sy = np.dot(sv, yv)
        if sy > 1e-12 * np.sqrt(np.dot(sv, sv) * np.dot(yv, yv)):
            s_hist[head] = sv
            y_hist[head] = yv
            rho[head] = 1.0 / sy
            head = (head + 1) % mem
            if stored < mem:
                stored += 1
        p = trial
        f = fn
        g = gn
        it += 1
        trace[it] = f
    return p, f, it, trace[: it + 1], status


def _bind_family(hgrad, hval):
    # same code object, globals pointing at one kernel family; numba sees
    # ordinary global dispatchers and can cache the result
    scope = dict(globals(), _hgrad=hgrad, _hval=hval)
    return types.FunctionType(_descend_body.__code__, scope, "_descend_body")


_descend_np = _bind_family(_np_h_and_grad, _np_h_value)

if HAVE_NUMBA:
    _descend = njit(cache=True)(_bind_family(_nb_h_and_grad, _nb_h_value))
    _hermitian = _nb_hermitian
    _expm = _nb_expm
    _h_value = _nb_h_value
    _h_and_grad = _nb_h_and_grad
else:
    _descend = _descend_np

    _hermitian = _np_hermitian
    _expm = _np_expm
    _h_value = _np_h_value
    _h_and_grad = _np_h_and_grad


# ---------------------------------------------------------------------------
# public entry points
# ---------------------------------------------------------------------------


def _as_params(p):
    return np.ascontiguousarray(p, dtype=np.float64)


def _as_frame(t):
    return np.ascontiguousarray(t, dtype=np.complex128)


def hermitian_from_params(p, d, offset=0):
    """Hermitian generator ``Hm`` encoded by ``p[offset:offset + d*d]``."""
    return _hermitian(_as_params(p), offset, d)


def params_from_hermitian(hm):
    """Inverse of :func:`hermitian_from_params` (reads the upper triangle)."""
    hm = np.asarray(hm)
    d = hm.shape[0]
    iu, ju = np.triu_indices(d, 1)
    up = hm[iu, ju]
    pairs = np.stack([-up.imag, up.real], axis=1)
    return np.concatenate([hm.diagonal().real, pairs.ravel()])


def expm_params(p, d, offset=0):
    """Unitary ``exp(1j * Hm)`` for the generator packed at ``offset``."""
    return _expm(_as_params(p), offset, d)[0]


def h_value(t, p, m):
    """Objective for a frame tensor ``t`` (k, d1, d2), parameters ``p``, and
    the first ``m`` basis vectors."""
    return float(_h_value(_as_frame(t), _as_params(p), m))


def h_and_grad(t, p, m):
    h, g = _h_and_grad(_as_frame(t), _as_params(p), m)
    return float(h), g


def descend(t, p0, m, max_iter=2000, threshold=1e-6, gtol=1e-9, window=200,
            mem=12):
    """Run one local minimisation; see ``_descend_body`` for the return."""
    p, f, it, trace, status = _descend(_as_frame(t), _as_params(p0), int(m),
                                       int(max_iter), float(threshold),
                                       float(gtol), int(window), int(mem))
    return p, float(f), int(it), np.asarray(trace), int(status)
