"""Pure-Python negative-sampling SGD kernel.

Fallback for environments without the compiled extension.  The compiled
kernel in ``_sgd_fast.pyx`` mirrors this one visit for visit: identical
random-tape consumption, identical visit order, identical update order.
Behavioral changes must be made to both files together.

All mode matrices live in one packed 1-d buffer; ``offsets[m]`` is the
element offset of mode ``m``'s (sizes[m] x d) row-major block.  Scores are
clamped to [-30, 30] before the logistic for numerical safety.
"""

from __future__ import annotations

import math

import numpy as np

from ..rng import uniform_at, uniforms_at

SCORE_CLIP = 30.0


def run_epoch(
    data: np.ndarray,
    offsets: np.ndarray,
    sizes: np.ndarray,
    d: int,
    idx: np.ndarray,
    cnt: np.ndarray,
    order: np.ndarray,
    tmode: int,
    cmode: int,
    fmodes: np.ndarray,
    cum: np.ndarray,
    k_neg: int,
    lr0: float,
    lr_end: float,
    t0: int,
    t_total: int,
    seed: int,
    counter: int,
):
    """Visit ``order``'s cells once each, applying count-weighted NS updates.

    Returns (loss_sum, visits_done, counter, err_visit); err_visit is -1 on
    success, else the visit index whose loss went non-finite (that visit's
    update is not applied).
    """
    n_modes = len(sizes)
    views = [
        data[offsets[m] : offsets[m] + sizes[m] * d].reshape(sizes[m], d)
        for m in range(n_modes)
    ]
    denom = float(max(t_total - 1, 1))
    dlr = lr_end - lr0
    loss_sum = 0.0

    # diverging runs overflow on purpose shortly before the isfinite check
    # catches them; don't let numpy warn about it
    with np.errstate(over="ignore", invalid="ignore"):
        return _visit_loop(
            views[tmode], views[cmode], [views[m] for m in fmodes],
            d, idx, cnt, order, tmode, cmode, fmodes, cum, k_neg,
            lr0, dlr, denom, t0, seed, counter, loss_sum,
        )


def _visit_loop(
    tview, cview, fviews, d, idx, cnt, order, tmode, cmode, fmodes, cum,
    k_neg, lr0, dlr, denom, t0, seed, counter, loss_sum,
):
    n_feat = len(fmodes)
    n_ctx = cview.shape[0]
    for v in range(len(order)):
        cell = order[v]
        lr = lr0 + dlr * ((t0 + v) / denom)
        lrc = lr * cnt[cell]
        row = idx[cell]
        ti = row[tmode]
        ci = row[cmode]

        w = tview[ti]
        frows = [fviews[k][row[fmodes[k]]] for k in range(n_feat)]
        fprod = np.ones(d)
        for fr in frows:
            fprod = fprod * fr
        hw = w * fprod

        c_pos = cview[ci]
        s = float(c_pos @ hw)
        if s > SCORE_CLIP:
            s = SCORE_CLIP
        elif s < -SCORE_CLIP:
            s = -SCORE_CLIP
        e = math.exp(-s)
        g_pos = 1.0 / (1.0 + e) - 1.0
        loss = math.log1p(e)

        # K bulk draws, then one extra draw per collision with the true context
        u = uniforms_at(seed, counter, k_neg)
        counter += k_neg
        negs = np.minimum(np.searchsorted(cum, u, side="right"), n_ctx - 1)
        for k in range(k_neg):
            while negs[k] == ci:
                nid = np.searchsorted(cum, uniform_at(seed, counter), side="right")
                counter += 1
                negs[k] = min(int(nid), n_ctx - 1)

        c_negs = cview[negs]
        s_negs = np.clip(c_negs @ hw, -SCORE_CLIP, SCORE_CLIP)
        e_negs = np.exp(-s_negs)
        g_negs = 1.0 / (1.0 + e_negs)
        loss += float(np.sum(np.log1p(e_negs) + s_negs))

        if not math.isfinite(loss):
            return loss_sum, v, counter, v

        cacc = g_pos * c_pos + c_negs.T @ g_negs
        w_grad = cacc * fprod
        f_grads = []
        for k in range(n_feat):
            others = np.ones(d)
            for k2 in range(n_feat):
                if k2 != k:
                    others = others * frows[k2]
            f_grads.append(cacc * w * others)

        # all gradients above use pre-update values; apply in fixed order
        tview[ti] = w - lrc * w_grad
        cview[ci] = c_pos - lrc * (g_pos * hw)
        np.add.at(cview, negs, (-lrc) * (g_negs[:, None] * hw[None, :]))
        for k in range(n_feat):
            fviews[k][row[fmodes[k]]] -= lrc * f_grads[k]

        loss_sum += loss

    return loss_sum, len(order), counter, -1
