"""Pure-numpy implementations of the hot numeric kernels.

Always importable; used when the compiled extension is unavailable or when
CAPVAL_PURE_PYTHON is set. Must stay numerically identical to
``_native.pyx`` (same formulas, same exponent clamp).
"""

import numpy as np

BACKEND = "numpy"

# exp(700) is the largest power that stays finite in float64
EXP_CLAMP = 700.0


def sigmoid_eval(losses, alpha, beta, gamma):
    """Bounded decreasing sigmoid gamma + (1-gamma)/(1+exp(alpha*(L-beta))).

    Exponents are clamped to +-700 so the result is finite and stays in
    [gamma, 1] for any finite input.
    """
    losses = np.asarray(losses, dtype=np.float64)
    z = np.clip(alpha * (losses - beta), -EXP_CLAMP, EXP_CLAMP)
    return gamma + (1.0 - gamma) / (1.0 + np.exp(z))


def sigmoid_mse_grad(losses, caps, alpha, beta, gamma):
    """Mean squared error of the sigmoid law and its analytic gradient.

    Returns (mse, d_mse/d_alpha, d_mse/d_beta) for
    mse = mean((c_i - f(L_i))^2). With z = alpha*(L-beta) and
    s = 1/(1+exp(z)): df/dz = -(1-gamma)*s*(1-s), so
    d_mse/d_theta = (2(1-gamma)/n) * sum(r*s*(1-s) * dz/dtheta).
    """
    losses = np.asarray(losses, dtype=np.float64)
    caps = np.asarray(caps, dtype=np.float64)
    z = np.clip(alpha * (losses - beta), -EXP_CLAMP, EXP_CLAMP)
    s = 1.0 / (1.0 + np.exp(z))
    r = caps - (gamma + (1.0 - gamma) * s)
    n = losses.shape[0]
    mse = float(np.mean(r * r))
    w = r * s * (1.0 - s)
    g = 2.0 * (1.0 - gamma) / n
    d_alpha = g * float(np.sum(w * (losses - beta)))
    d_beta = g * float(np.sum(w)) * -alpha
    return mse, d_alpha, d_beta


def sigmoid_mse_grid(losses, caps, alpha_grid, beta_grid, gamma):
    """MSE of the sigmoid law over an (alpha, beta) parameter grid.

    Returns a (len(alpha_grid), len(beta_grid)) matrix; used to seed the
    fit optimizer with the best grid cell. Row-chunked so memory stays at
    O(len(beta_grid) * n) regardless of grid size.
    """
    L = np.asarray(losses, dtype=np.float64)
    c = np.asarray(caps, dtype=np.float64)
    alpha_grid = np.asarray(alpha_grid, dtype=np.float64)
    beta_grid = np.asarray(beta_grid, dtype=np.float64)
    out = np.empty((alpha_grid.size, beta_grid.size), dtype=np.float64)
    diff = L[None, :] - beta_grid[:, None]  # (B, n)
    for i in range(alpha_grid.size):
        z = np.clip(alpha_grid[i] * diff, -EXP_CLAMP, EXP_CLAMP)
        f = gamma + (1.0 - gamma) / (1.0 + np.exp(z))
        out[i] = np.mean((c[None, :] - f) ** 2, axis=1)
    return out


def bm25_scores(doc_ids, tfs, offsets, idfs, doc_lens, avgdl, k1, b, n_docs):
    """Accumulate BM25 scores over the posting lists of one query.

    Posting lists for the query's terms are concatenated in ``doc_ids``
    (passage indices) and ``tfs`` (term frequencies); ``offsets`` has one
    slice boundary per term (length n_terms+1) and ``idfs`` one weight per
    term. Returns a dense float64 score array of length n_docs.
    """
    doc_ids = np.asarray(doc_ids, dtype=np.int32)
    tfs = np.asarray(tfs, dtype=np.float64)
    offsets = np.asarray(offsets, dtype=np.int64)
    idfs = np.asarray(idfs, dtype=np.float64)
    doc_lens = np.asarray(doc_lens, dtype=np.float64)
    scores = np.zeros(n_docs, dtype=np.float64)
    for t in range(len(idfs)):
        lo, hi = offsets[t], offsets[t + 1]
        ids = doc_ids[lo:hi]
        f = tfs[lo:hi]
        denom = f + k1 * (1.0 - b + b * doc_lens[ids] / avgdl)
        scores[ids] += idfs[t] * f * (k1 + 1.0) / denom
    return scores
