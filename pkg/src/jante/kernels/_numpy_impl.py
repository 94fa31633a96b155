"""Pure-numpy twins of the numba kernels.

A single chain cannot be vectorised over time, so these vectorise over the
batch of runs instead: every step is a handful of array operations on the
(R, N) state. Draw consumption and arithmetic order match ``_numba_impl``.
"""

import math

import numpy as np

LN2 = math.log(2.0)
LOW = 2.0**-8
HIGH = 2.0**8


def _padded(indptr, indices, n):
    deg = np.diff(indptr)
    table = np.full((n, int(deg.max())), n, dtype=np.int64)
    for v in range(n):
        table[v, : deg[v]] = indices[indptr[v] : indptr[v + 1]]
    return table


def _neighbor_sums(xa, table):
    pad = np.concatenate([xa, np.zeros((xa.shape[0], 1), dtype=xa.dtype)], axis=1)
    s = pad[:, table[:, 0]]
    for col in range(1, table.shape[1]):
        s = s + pad[:, table[:, col]]
    return s


def _pick_tied(dvals, dmax, u):
    tied = dvals == dmax[:, None]
    ntie = tied.sum(axis=1)
    k = np.minimum((u * ntie).astype(np.int64), ntie - 1)
    node = np.argmax(np.cumsum(tied, axis=1) > k[:, None], axis=1)
    return node, ntie


def _advance(x, dfun, draws, limits, stop_on_zero, d_stop, new_value,
             out_node, out_old, out_new, out_d, out_ntie, steps, status):
    R = x.shape[0]
    C = draws.shape[1]
    steps[:] = 0
    status[:] = 0
    rows = np.arange(R)
    for k in range(C + 1):
        if rows.size == 0:
            break
        dvals = dfun(x[rows])
        dmax = dvals.max(axis=1)
        stop = dmax < d_stop
        if stop_on_zero:
            stop |= dmax == 0
        status[rows[stop]] = 1
        go = ~stop & (k < limits[rows])
        rows, dvals, dmax = rows[go], dvals[go], dmax[go]
        if rows.size == 0:
            break
        node, ntie = _pick_tied(dvals, dmax, draws[rows, k, 0])
        new = new_value(draws[rows, k, 1])
        out_node[rows, k] = node
        out_old[rows, k] = x[rows, node]
        out_new[rows, k] = new
        out_d[rows, k] = dmax
        out_ntie[rows, k] = ntie
        x[rows, node] = new
        steps[rows] += 1


def discrete_advance(x, indptr, indices, deg, weight, values, cdf, draws,
                     limits, stop_on_zero, d_stop,
                     out_node, out_old, out_new, out_d, out_ntie, steps, status):
    table = _padded(indptr, indices, x.shape[1])
    last = values.shape[0] - 1

    def dfun(xa):
        return np.abs(deg * xa - _neighbor_sums(xa, table)) * weight

    def new_value(u):
        return values[np.minimum(np.searchsorted(cdf, u, side="right"), last)]

    _advance(x, dfun, draws, limits, stop_on_zero, d_stop, new_value,
             out_node, out_old, out_new, out_d, out_ntie, steps, status)


def continuous_advance(x, indptr, indices, degf, draws, limits, stop_on_zero, d_stop,
                       out_node, out_old, out_new, out_d, out_ntie, steps, status):
    table = _padded(indptr, indices, x.shape[1])

    def dfun(xa):
        return np.abs(xa - _neighbor_sums(xa, table) / degf)

    _advance(x, dfun, draws, limits, stop_on_zero, d_stop, lambda u: u,
             out_node, out_old, out_new, out_d, out_ntie, steps, status)


def _cycle_d(z):
    return np.abs(z - (np.roll(z, 1, axis=1) + np.roll(z, -1, axis=1)) / 2.0)


def _renormalize(z, c, e, dvals):
    dmax = dvals.max(axis=1)
    m = np.zeros(z.shape[0], dtype=np.int64)
    t = dmax.copy()
    pos = t > 0.0
    while True:
        up = pos & (t < LOW)
        if not up.any():
            break
        t[up] *= HIGH
        m[up] += 1
    while True:
        down = pos & (t >= HIGH)
        if not down.any():
            break
        t[down] *= LOW
        m[down] -= 1
    rows = np.nonzero(m)[0]
    if rows.size:
        ref = z[rows, 0].copy()
        p = 2.0 ** (8 * m[rows]).astype(np.float64)
        z[rows] = (z[rows] - ref[:, None]) * p[:, None]
        c[rows] += ref * 2.0 ** e[rows].astype(np.float64)
        e[rows] -= 8 * m[rows]
        dvals[rows] = _cycle_d(z[rows])
    return dvals


def embedded_advance(z, c, e, draws, out_lnxi, out_lnd, out_ratio, out_node):
    R, N = z.shape
    C = draws.shape[1]
    rr = np.arange(R)
    offs = np.arange(-2, 3)
    for k in range(C):
        dvals = _renormalize(z, c, e, _cycle_d(z))
        dmax = dvals.max(axis=1)
        j, _ = _pick_tied(dvals, dmax, draws[:, k, 0])
        w = z[rr[:, None], (j[:, None] + offs) % N]
        w1, w2, w3, w4, w5 = w.T
        mu = (w2 + w4) / 2.0
        up = w3 >= mu
        sg = np.where(up, 1.0, -1.0)
        co = np.where(up, c, 1.0 - c)
        o1, o2, o3, o4, o5 = sg * w1, sg * w2, sg * w3, sg * w4, sg * w5
        q = np.stack([
            o2 + o4 - o3,
            o1 - o2 + o4,
            (-o1 + 3.0 * o2 + o4) / 3.0,
            o2 - o4 + o5,
            (o2 + 3.0 * o4 - o5) / 3.0,
        ])
        mq = q.min(axis=0)
        with np.errstate(over="ignore", invalid="ignore"):
            lo = np.where(co > 0.0, -(co * 2.0 ** (-e).astype(np.float64)), 0.0)
        a = np.maximum(lo, mq)
        u = a + (o3 - a) * draws[:, k, 1]
        new = sg * u
        out_ratio[:, k] = np.abs(new - w3) / dmax
        out_node[:, k] = j
        out_lnd[:, k] = np.log(dmax) + e * LN2
        z[rr, j] = new
        a1 = z - np.roll(z, -1, axis=1)
        a2 = z - np.roll(z, -2, axis=1)
        h = np.sum(2.0 * a1 * a1 + a2 * a2, axis=1)
        out_lnxi[:, k] = np.log(h) + 2.0 * e * LN2
