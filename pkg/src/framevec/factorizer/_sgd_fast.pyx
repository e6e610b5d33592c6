# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled negative-sampling SGD kernel.

Mirrors ``_sgd_numpy.run_epoch`` visit for visit: same splitmix64 tape
arithmetic, same draw consumption, same visit and update order.  Behavioral
changes must be made to both files together.

The hot loop runs without the GIL, so several Python threads can call this
kernel on disjoint slices of the visit order for lock-free parallel updates
(lost updates tolerated, statistical quality only).
"""

import numpy as np

from libc.math cimport exp, log1p, isfinite

cdef double SCORE_CLIP = 30.0


cdef inline double tape_u01(unsigned long long seed, unsigned long long t) nogil:
    # splitmix64 of (seed + t * golden gamma); top 53 bits scaled to [0, 1).
    # Must match rng.uniforms_at exactly.
    cdef unsigned long long z = seed + t * 0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    z = z ^ (z >> 31)
    return <double>(z >> 11) * (1.0 / 9007199254740992.0)


cdef inline long bsearch_right(const double[::1] cum, double u) nogil:
    # first index with cum[index] > u, as np.searchsorted(cum, u, "right")
    cdef long lo = 0
    cdef long hi = cum.shape[0]
    cdef long mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cum[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    return lo


def tape_u01_py(seed, t):
    """Test hook: scalar tape value, for parity checks against rng.uniforms_at."""
    return tape_u01(<unsigned long long> (seed & 0xFFFFFFFFFFFFFFFF),
                    <unsigned long long> (t & 0xFFFFFFFFFFFFFFFF))


def bsearch_right_py(double[::1] cum, double u):
    """Test hook: binary search, for parity checks against np.searchsorted."""
    return bsearch_right(cum, u)


def run_epoch(double[::1] data,
              long[::1] offsets,
              long[::1] sizes,
              long d,
              long[:, ::1] idx,
              double[::1] cnt,
              long[::1] order,
              long tmode,
              long cmode,
              long[::1] fmodes,
              double[::1] cum,
              long k_neg,
              double lr0,
              double lr_end,
              long t0,
              long t_total,
              seed,
              counter):
    """Same contract as _sgd_numpy.run_epoch."""
    cdef unsigned long long useed = <unsigned long long> (seed & 0xFFFFFFFFFFFFFFFF)
    cdef unsigned long long uctr = <unsigned long long> (counter & 0xFFFFFFFFFFFFFFFF)
    cdef long n_visits = order.shape[0]
    cdef long n_feat = fmodes.shape[0]
    cdef long n_ctx = sizes[cmode]
    cdef double denom = <double> max(t_total - 1, 1)
    cdef double dlr = lr_end - lr0
    cdef double loss_sum = 0.0
    cdef long err = -1

    buf_fprod = np.empty(d, dtype=np.float64)
    buf_hw = np.empty(d, dtype=np.float64)
    buf_cacc = np.empty(d, dtype=np.float64)
    buf_wgrad = np.empty(d, dtype=np.float64)
    buf_others = np.empty(d, dtype=np.float64)
    buf_fgrad = np.empty((max(n_feat, 1), d), dtype=np.float64)
    buf_negs = np.empty(max(k_neg, 1), dtype=np.int64)
    buf_gneg = np.empty(max(k_neg, 1), dtype=np.float64)
    buf_foff = np.empty(max(n_feat, 1), dtype=np.int64)

    cdef double[::1] fprod = buf_fprod
    cdef double[::1] hw = buf_hw
    cdef double[::1] cacc = buf_cacc
    cdef double[::1] wgrad = buf_wgrad
    cdef double[::1] others = buf_others
    cdef double[:, ::1] fgrad = buf_fgrad
    cdef long[::1] negs = buf_negs
    cdef double[::1] gneg = buf_gneg
    cdef long[::1] foff = buf_foff

    cdef long v, cell, ti, ci, woff, coff, noff, k, k2, m
    cdef double lr, lrc, f, s, e, g_pos, loss, g

    with nogil:
        for v in range(n_visits):
            cell = order[v]
            lr = lr0 + dlr * (<double> (t0 + v) / denom)
            lrc = lr * cnt[cell]
            ti = idx[cell, tmode]
            ci = idx[cell, cmode]
            woff = offsets[tmode] + ti * d
            coff = offsets[cmode] + ci * d
            for k in range(n_feat):
                foff[k] = offsets[fmodes[k]] + idx[cell, fmodes[k]] * d

            for m in range(d):
                f = 1.0
                for k in range(n_feat):
                    f = f * data[foff[k] + m]
                fprod[m] = f
                hw[m] = data[woff + m] * f

            s = 0.0
            for m in range(d):
                s += data[coff + m] * hw[m]
            if s > SCORE_CLIP:
                s = SCORE_CLIP
            elif s < -SCORE_CLIP:
                s = -SCORE_CLIP
            e = exp(-s)
            g_pos = 1.0 / (1.0 + e) - 1.0
            loss = log1p(e)

            # K bulk draws, then one extra draw per collision with the true context
            for k in range(k_neg):
                negs[k] = bsearch_right(cum, tape_u01(useed, uctr + <unsigned long long> k))
                if negs[k] > n_ctx - 1:
                    negs[k] = n_ctx - 1
            uctr += <unsigned long long> k_neg
            for k in range(k_neg):
                while negs[k] == ci:
                    negs[k] = bsearch_right(cum, tape_u01(useed, uctr))
                    uctr += 1
                    if negs[k] > n_ctx - 1:
                        negs[k] = n_ctx - 1

            for m in range(d):
                cacc[m] = g_pos * data[coff + m]
            for k in range(k_neg):
                noff = offsets[cmode] + negs[k] * d
                s = 0.0
                for m in range(d):
                    s += data[noff + m] * hw[m]
                if s > SCORE_CLIP:
                    s = SCORE_CLIP
                elif s < -SCORE_CLIP:
                    s = -SCORE_CLIP
                e = exp(-s)
                g = 1.0 / (1.0 + e)
                gneg[k] = g
                loss += log1p(e) + s
                for m in range(d):
                    cacc[m] += g * data[noff + m]

            if not isfinite(loss):
                err = v
                break

            for m in range(d):
                wgrad[m] = cacc[m] * fprod[m]
            for k in range(n_feat):
                for m in range(d):
                    others[m] = 1.0
                for k2 in range(n_feat):
                    if k2 != k:
                        for m in range(d):
                            others[m] = others[m] * data[foff[k2] + m]
                for m in range(d):
                    fgrad[k, m] = cacc[m] * data[woff + m] * others[m]

            # all gradients above use pre-update values; apply in fixed order
            for m in range(d):
                data[woff + m] -= lrc * wgrad[m]
            for m in range(d):
                data[coff + m] -= lrc * (g_pos * hw[m])
            for k in range(k_neg):
                noff = offsets[cmode] + negs[k] * d
                for m in range(d):
                    data[noff + m] -= lrc * (gneg[k] * hw[m])
            for k in range(n_feat):
                for m in range(d):
                    data[foff[k] + m] -= lrc * fgrad[k, m]

            loss_sum += loss

    if err >= 0:
        return loss_sum, err, int(uctr), err
    return loss_sum, n_visits, int(uctr), -1
