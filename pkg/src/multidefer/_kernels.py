"""Per-sample inner loops shared by losses, inference and baselines.

Every kernel exists twice: a loop version compiled with numba and a
vectorised numpy twin.  ``NUMBA_KERNELS`` / ``NUMPY_KERNELS`` expose both so
tests and the benchmark can compare them; the module-level names are bound to
whichever backend ``_accel.USE_NUMBA`` selects.

Array conventions (n samples, m experts with the identity expert last,
C classes):

* ``weights``   float (n, m)  deferrer output
* ``preds``     int   (n, m-1) human expert class indices (ignored where inactive)
* ``active``    bool  (n, m-1) observed and not dropped out
* ``identity``  float (n, C)  identity-expert column (soft F(x) or a one-hot)
"""

import numpy as np

from . import _accel


# ---------------------------------------------------------------- numba loops


def _class_scores_loop(weights, preds, active, identity):
    n, c = identity.shape
    h = preds.shape[1]
    out = np.zeros((n, c))
    for s in range(n):
        wm = weights[s, h]
        for j in range(c):
            out[s, j] = wm * identity[s, j]
        for i in range(h):
            if active[s, i]:
                out[s, preds[s, i]] += weights[s, i]
    return out


def _score_backward_loop(grad_scores, weights, preds, active, identity):
    n, c = identity.shape
    h = preds.shape[1]
    g_weights = np.zeros((n, h + 1))
    g_identity = np.empty((n, c))
    for s in range(n):
        acc = 0.0
        wm = weights[s, h]
        for j in range(c):
            acc += grad_scores[s, j] * identity[s, j]
            g_identity[s, j] = grad_scores[s, j] * wm
        g_weights[s, h] = acc
        for i in range(h):
            if active[s, i]:
                g_weights[s, i] = grad_scores[s, preds[s, i]]
    return g_weights, g_identity


def _draw_members_loop(weights, uniforms):
    n, m = weights.shape
    trials, k = uniforms.shape[1], uniforms.shape[2]
    out = np.empty((n, trials, k), dtype=np.int64)
    cum = np.empty(m)
    for s in range(n):
        total = 0.0
        last = -1
        for i in range(m):
            total += weights[s, i]
            cum[i] = total
            if weights[s, i] > 0.0:
                last = i
        for t in range(trials):
            for r in range(k):
                target = uniforms[s, t, r] * total
                lo = 0
                hi = m
                # first index with cum > target
                while lo < hi:
                    mid = (lo + hi) // 2
                    if cum[mid] <= target:
                        lo = mid + 1
                    else:
                        hi = mid
                if lo > last:
                    lo = last
                out[s, t, r] = lo
    return out


def _vote_counts_loop(labels, num_classes):
    n, k = labels.shape
    out = np.zeros((n, num_classes), dtype=np.int64)
    for s in range(n):
        for r in range(k):
            out[s, labels[s, r]] += 1
    return out


# ---------------------------------------------------------------- numpy twins


def _class_scores_np(weights, preds, active, identity):
    n, c = identity.shape
    out = weights[:, -1:] * identity
    contrib = np.where(active, weights[:, :-1], 0.0)
    safe = np.where(active, preds, 0)
    rows = np.broadcast_to(np.arange(n)[:, None], safe.shape)
    np.add.at(out, (rows, safe), contrib)
    return out


def _score_backward_np(grad_scores, weights, preds, active, identity):
    n = identity.shape[0]
    safe = np.where(active, preds, 0)
    picked = grad_scores[np.arange(n)[:, None], safe]
    g_weights = np.empty(weights.shape)
    g_weights[:, :-1] = np.where(active, picked, 0.0)
    g_weights[:, -1] = np.einsum("nc,nc->n", grad_scores, identity)
    g_identity = grad_scores * weights[:, -1:]
    return g_weights, g_identity


def _draw_members_np(weights, uniforms):
    n, m = weights.shape
    cum = np.cumsum(weights, axis=1)
    total = cum[:, -1]
    positive = weights > 0
    last = m - 1 - np.argmax(positive[:, ::-1], axis=1)
    target = uniforms * total[:, None, None]
    out = np.empty(uniforms.shape, dtype=np.int64)
    for s in range(n):
        out[s] = np.searchsorted(cum[s], target[s], side="right")
    return np.minimum(out, last[:, None, None])


def _vote_counts_np(labels, num_classes):
    n, k = labels.shape
    out = np.zeros((n, num_classes), dtype=np.int64)
    rows = np.broadcast_to(np.arange(n)[:, None], labels.shape)
    np.add.at(out, (rows, labels), 1)
    return out


NUMPY_KERNELS = {
    "class_scores": _class_scores_np,
    "score_backward": _score_backward_np,
    "draw_members": _draw_members_np,
    "vote_counts": _vote_counts_np,
}

NUMBA_KERNELS = {
    "class_scores": _accel.njit(_class_scores_loop),
    "score_backward": _accel.njit(_score_backward_loop),
    "draw_members": _accel.njit(_draw_members_loop),
    "vote_counts": _accel.njit(_vote_counts_loop),
}

_ACTIVE = NUMBA_KERNELS if _accel.USE_NUMBA else NUMPY_KERNELS


def _prep(weights, preds, active, identity):
    return (
        np.ascontiguousarray(weights, dtype=np.float64),
        np.ascontiguousarray(preds, dtype=np.int64),
        np.ascontiguousarray(active, dtype=np.bool_),
        np.ascontiguousarray(identity, dtype=np.float64),
    )


def class_scores(weights, preds, active, identity):
    """Per-class aggregate ``s_j = sum_i D_i [E_i = j]`` over active experts."""
    return _ACTIVE["class_scores"](*_prep(weights, preds, active, identity))


def score_backward(grad_scores, weights, preds, active, identity):
    """Pull ``dL/ds`` back to ``dL/dweights`` (n, m) and ``dL/didentity`` (n, C)."""
    grad_scores = np.ascontiguousarray(grad_scores, dtype=np.float64)
    return _ACTIVE["score_backward"](grad_scores, *_prep(weights, preds, active, identity))


def draw_members(weights, uniforms):
    """Categorical draws proportional to ``weights`` driven by ``uniforms`` in [0, 1).

    ``uniforms`` has shape (n, trials, k); the result holds expert indices of
    the same shape.  Experts with zero weight are never returned.
    """
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    if np.any(weights.sum(axis=1) <= 0):
        raise ValueError("every row of weights needs positive mass")
    return _ACTIVE["draw_members"](weights, uniforms)


def vote_counts(labels, num_classes):
    """Count class votes per row of an (n, k) label table."""
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    return _ACTIVE["vote_counts"](labels, int(num_classes))
