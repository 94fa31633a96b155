"""Loop kernels compiled with numba.

Every kernel advances a batch of R independent chains in place, consuming
exactly two uniforms per step from ``draws[r, k]``: ``draws[r, k, 0]`` breaks
ties, ``draws[r, k, 1]`` is the replacement draw. The numpy twin in
``_numpy_impl`` consumes the same entries, so both backends walk the same
paths for the same draws.
"""

import math

import numpy as np
from numba import njit

LN2 = math.log(2.0)
LOW = 2.0**-8
HIGH = 2.0**8


@njit(cache=True, nogil=True)
def _pick_tied(dvals, dmax, ntie, u):
    k = int(u * ntie)
    if k >= ntie:
        k = ntie - 1
    seen = 0
    for v in range(dvals.shape[0]):
        if dvals[v] == dmax:
            if seen == k:
                return v
            seen += 1
    return -1


@njit(cache=True, nogil=True)
def discrete_advance(x, indptr, indices, deg, weight, values, cdf, draws,
                     limits, stop_on_zero, d_stop,
                     out_node, out_old, out_new, out_d, out_ntie, steps, status):
    # d is tracked as L * d_v = |deg_v x_v - sum_nbrs| * (L / deg_v), an exact integer.
    R, N = x.shape
    K = values.shape[0]
    dv = np.empty(N, dtype=np.int64)
    for r in range(R):
        k = 0
        status[r] = 0
        while True:
            dmax = -1
            ntie = 0
            for v in range(N):
                s = 0
                for p in range(indptr[v], indptr[v + 1]):
                    s += x[r, indices[p]]
                dd = abs(deg[v] * x[r, v] - s) * weight[v]
                dv[v] = dd
                if dd > dmax:
                    dmax = dd
                    ntie = 1
                elif dd == dmax:
                    ntie += 1
            if (stop_on_zero and dmax == 0) or dmax < d_stop:
                status[r] = 1
                break
            if k >= limits[r]:
                break
            node = _pick_tied(dv, dmax, ntie, draws[r, k, 0])
            idx = np.searchsorted(cdf, draws[r, k, 1], side="right")
            if idx >= K:
                idx = K - 1
            out_node[r, k] = node
            out_old[r, k] = x[r, node]
            out_new[r, k] = values[idx]
            out_d[r, k] = dmax
            out_ntie[r, k] = ntie
            x[r, node] = values[idx]
            k += 1
        steps[r] = k


@njit(cache=True, nogil=True)
def continuous_advance(x, indptr, indices, degf, draws, limits, stop_on_zero, d_stop,
                       out_node, out_old, out_new, out_d, out_ntie, steps, status):
    R, N = x.shape
    dv = np.empty(N, dtype=np.float64)
    for r in range(R):
        k = 0
        status[r] = 0
        while True:
            dmax = -1.0
            ntie = 0
            for v in range(N):
                p0 = indptr[v]
                s = x[r, indices[p0]]
                for p in range(p0 + 1, indptr[v + 1]):
                    s += x[r, indices[p]]
                dd = abs(x[r, v] - s / degf[v])
                dv[v] = dd
                if dd > dmax:
                    dmax = dd
                    ntie = 1
                elif dd == dmax:
                    ntie += 1
            if (stop_on_zero and dmax == 0.0) or dmax < d_stop:
                status[r] = 1
                break
            if k >= limits[r]:
                break
            node = _pick_tied(dv, dmax, ntie, draws[r, k, 0])
            u = draws[r, k, 1]
            out_node[r, k] = node
            out_old[r, k] = x[r, node]
            out_new[r, k] = u
            out_d[r, k] = dmax
            out_ntie[r, k] = ntie
            x[r, node] = u
            k += 1
        steps[r] = k


@njit(cache=True, nogil=True)
def _cycle_d(z, dv):
    N = z.shape[0]
    dmax = -1.0
    ntie = 0
    for i in range(N):
        zl = z[i - 1] if i > 0 else z[N - 1]
        zr = z[i + 1] if i < N - 1 else z[0]
        dd = abs(z[i] - (zl + zr) / 2.0)
        dv[i] = dd
        if dd > dmax:
            dmax = dd
            ntie = 1
        elif dd == dmax:
            ntie += 1
    return dmax, ntie


@njit(cache=True, nogil=True)
def embedded_advance(z, c, e, draws, out_lnxi, out_lnd, out_ratio, out_node):
    # Real configuration is c[r] + 2**e[r] * z[r]; z is rescaled by powers of two
    # so its spread stays O(1) while the real spread decays geometrically.
    R, N = z.shape
    C = draws.shape[1]
    dv = np.empty(N, dtype=np.float64)
    for r in range(R):
        zr_ = z[r]
        for k in range(C):
            dmax, ntie = _cycle_d(zr_, dv)
            m = 0
            t = dmax
            if t > 0.0:
                while t < LOW:
                    t *= HIGH
                    m += 1
                while t >= HIGH:
                    t *= LOW
                    m -= 1
            if m != 0:
                ref = zr_[0]
                p = 2.0 ** (8 * m)
                for i in range(N):
                    zr_[i] = (zr_[i] - ref) * p
                c[r] += ref * 2.0 ** e[r]
                e[r] -= 8 * m
                dmax, ntie = _cycle_d(zr_, dv)
            j = _pick_tied(dv, dmax, ntie, draws[r, k, 0])
            w1 = zr_[(j - 2) % N]
            w2 = zr_[(j - 1) % N]
            w3 = zr_[j]
            w4 = zr_[(j + 1) % N]
            w5 = zr_[(j + 2) % N]
            mu = (w2 + w4) / 2.0
            if w3 >= mu:
                sg = 1.0
                co = c[r]
            else:
                sg = -1.0
                co = 1.0 - c[r]
            o1 = sg * w1
            o2 = sg * w2
            o3 = sg * w3
            o4 = sg * w4
            o5 = sg * w5
            q0 = o2 + o4 - o3
            q1 = o1 - o2 + o4
            q2 = (-o1 + 3.0 * o2 + o4) / 3.0
            q3 = o2 - o4 + o5
            q4 = (o2 + 3.0 * o4 - o5) / 3.0
            mq = min(q0, q1, q2, q3, q4)
            if co > 0.0:
                lo = -(co * 2.0 ** (-e[r]))
            else:
                lo = 0.0
            a = max(lo, mq)
            u = a + (o3 - a) * draws[r, k, 1]
            new = sg * u
            out_ratio[r, k] = abs(new - w3) / dmax
            out_node[r, k] = j
            out_lnd[r, k] = math.log(dmax) + e[r] * LN2
            zr_[j] = new
            h = 0.0
            for i in range(N):
                a1 = zr_[i] - zr_[(i + 1) % N]
                a2 = zr_[i] - zr_[(i + 2) % N]
                h += 2.0 * a1 * a1 + a2 * a2
            out_lnxi[r, k] = math.log(h) + 2.0 * e[r] * LN2
