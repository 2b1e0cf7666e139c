"""Hot inner loops: online SOM training and bitset support counting.

Each kernel has a numba implementation and a numpy implementation with the
same contract. ``train_som`` and ``count_support`` dispatch on
:data:`carmine._accel.USE_NUMBA`.
"""

import numpy as np

from . import _accel
from ._accel import njit, prange

# ---------------------------------------------------------------------------
# SOM
# ---------------------------------------------------------------------------


@njit(cache=True)
def _bmu_numba(codebooks, x):
    m, d = codebooks.shape
    best = 0
    best_d2 = np.inf
    for j in range(m):
        acc = 0.0
        for k in range(d):
            diff = x[k] - codebooks[j, k]
            acc += diff * diff
        if acc < best_d2:
            best_d2 = acc
            best = j
    return best, best_d2


@njit(cache=True)
def _som_train_serial(codebooks, grid_d2, data, orders, etas, sigmas, qe):
    m, d = codebooks.shape
    epochs, n = orders.shape
    t = 0
    for e in range(epochs):
        for i in range(n):
            x = data[orders[e, i]]
            b, _ = _bmu_numba(codebooks, x)
            eta = etas[t]
            two_s2 = 2.0 * sigmas[t] * sigmas[t]
            for j in range(m):
                step = eta * np.exp(-grid_d2[b, j] / two_s2)
                keep = 1.0 - step
                for k in range(d):
                    codebooks[j, k] = keep * codebooks[j, k] + step * x[k]
            t += 1
        total = 0.0
        for i in range(n):
            _, d2 = _bmu_numba(codebooks, data[i])
            total += np.sqrt(d2)
        qe[e] = total / n


@njit(cache=True, parallel=True)
def _som_train_parallel(codebooks, grid_d2, data, orders, etas, sigmas, qe):
    # Nodes are split across threads; the argmin and the QE sum run serially
    # in a fixed order so the result does not depend on the thread count.
    m, d = codebooks.shape
    epochs, n = orders.shape
    dist2 = np.empty(m)
    t = 0
    for e in range(epochs):
        for i in range(n):
            x = data[orders[e, i]]
            for j in prange(m):
                acc = 0.0
                for k in range(d):
                    diff = x[k] - codebooks[j, k]
                    acc += diff * diff
                dist2[j] = acc
            b = 0
            best = dist2[0]
            for j in range(1, m):
                if dist2[j] < best:
                    best = dist2[j]
                    b = j
            eta = etas[t]
            two_s2 = 2.0 * sigmas[t] * sigmas[t]
            for j in prange(m):
                step = eta * np.exp(-grid_d2[b, j] / two_s2)
                keep = 1.0 - step
                for k in range(d):
                    codebooks[j, k] = keep * codebooks[j, k] + step * x[k]
            t += 1
        per_sample = np.empty(n)
        for i in prange(n):
            _, d2 = _bmu_numba(codebooks, data[i])
            per_sample[i] = np.sqrt(d2)
        total = 0.0
        for i in range(n):
            total += per_sample[i]
        qe[e] = total / n


def _som_train_numpy(codebooks, grid_d2, data, orders, etas, sigmas, qe):
    epochs, n = orders.shape
    t = 0
    for e in range(epochs):
        for i in range(n):
            x = data[orders[e, i]]
            diff = x - codebooks
            b = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
            step = etas[t] * np.exp(-grid_d2[b] / (2.0 * sigmas[t] * sigmas[t]))
            codebooks[:] = (1.0 - step)[:, None] * codebooks + step[:, None] * x
            t += 1
        qe[e] = quantization_distances(codebooks, data).mean()


def train_som(codebooks, grid_d2, data, orders, etas, sigmas, workers=1, backend=None):
    """Run online SOM training in place on ``codebooks``.

    Args:
        codebooks: (nodes, dim) float64 array, updated in place.
        grid_d2: (nodes, nodes) squared lattice distances.
        data: (samples, dim) float64 array.
        orders: (epochs, samples) presentation order per epoch.
        etas, sigmas: per-presentation learning rate and radius.
        workers: thread count for the numba backend; ignored by numpy.
        backend: ``"numba"``, ``"numpy"`` or None for the configured default.

    Returns:
        Per-epoch quantization error.
    """
    backend = backend or _accel.backend_name()
    qe = np.zeros(orders.shape[0])
    args = (
        codebooks,
        np.ascontiguousarray(grid_d2, dtype=np.float64),
        np.ascontiguousarray(data, dtype=np.float64),
        np.ascontiguousarray(orders, dtype=np.int64),
        np.ascontiguousarray(etas, dtype=np.float64),
        np.ascontiguousarray(sigmas, dtype=np.float64),
        qe,
    )
    if backend == "numba" and _accel.HAVE_NUMBA:
        if workers > 1:
            with _accel.thread_limit(workers):
                _som_train_parallel(*args)
        else:
            _som_train_serial(*args)
    else:
        _som_train_numpy(*args)
    return qe


def quantization_distances(codebooks, data):
    """Distance from each row of ``data`` to its best matching codebook."""
    diff = data[:, None, :] - codebooks[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    return np.sqrt(d2.min(axis=1))


# ---------------------------------------------------------------------------
# Support counting over vertical bitsets
# ---------------------------------------------------------------------------

_M1 = np.uint64(0x5555555555555555)
_M2 = np.uint64(0x3333333333333333)
_M4 = np.uint64(0x0F0F0F0F0F0F0F0F)
_H01 = np.uint64(0x0101010101010101)


@njit(cache=True)
def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & _M1)
    x = (x & _M2) + ((x >> np.uint64(2)) & _M2)
    x = (x + (x >> np.uint64(4))) & _M4
    return (x * _H01) >> np.uint64(56)


@njit(cache=True)
def _count_support_numba(bits, candidates):
    m, k = candidates.shape
    words = bits.shape[1]
    out = np.zeros(m, dtype=np.int64)
    for c in range(m):
        total = 0
        for w in range(words):
            acc = bits[candidates[c, 0], w]
            for j in range(1, k):
                acc &= bits[candidates[c, j], w]
            total += np.int64(_popcount64(acc))
        out[c] = total
    return out


def _count_support_numpy(bits, candidates):
    if candidates.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    joined = np.bitwise_and.reduce(bits[candidates], axis=1)
    return np.bitwise_count(joined).sum(axis=1, dtype=np.int64)


def count_support(bits, candidates, backend=None):
    """Support counts for each row of ``candidates`` (item ids, all same size).

    ``bits`` is the (items, words) uint64 transaction-id bitset per item.
    """
    backend = backend or _accel.backend_name()
    candidates = np.ascontiguousarray(candidates, dtype=np.int64)
    if candidates.ndim != 2 or candidates.shape[1] == 0:
        raise ValueError("candidates must be a non-empty (m, k) array")
    if backend == "numba" and _accel.HAVE_NUMBA:
        return _count_support_numba(bits, candidates)
    return _count_support_numpy(bits, candidates)
