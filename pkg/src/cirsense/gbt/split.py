"""Split finding for second-order boosted trees.

A split sends ``x < threshold`` to the left child.  Missing values (NaN)
follow a learned default direction.  The gain of a split is

    0.5 * (G_L^2 / (H_L + lambda) + G_R^2 / (H_R + lambda) - G^2 / (H + lambda)) - gamma

where G and H are sums of gradients and hessians over the node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Split:
    threshold: float
    gain: float
    default_left: bool = True
    feature: int = -1


def split_gain(gl, hl, gr, hr, reg_lambda: float, gamma: float):
    """Vectorised regularised split gain."""
    g, h = gl + gr, hl + hr
    return 0.5 * (gl * gl / (hl + reg_lambda) + gr * gr / (hr + reg_lambda) - g * g / (h + reg_lambda)) - gamma


def _children_score(gl, hl, gr, hr, reg_lambda: float, valid):
    """``G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda)``, ``-inf`` where a child is empty or invalid.

    The gain is this score shifted by terms that are constant within a node,
    so it ranks candidates identically.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        a = hl + reg_lambda
        np.divide(gl * gl, a, out=a)
        b = hr + reg_lambda
        np.divide(gr * gr, b, out=b)
        a += b
    a[~(valid & (hl > 0) & (hr > 0))] = -np.inf
    return a


def propose_candidates(column, hessians=None, n_candidates: int = 32) -> np.ndarray:
    """Hessian-weighted percentile thresholds of ``column``.

    Thresholds are midpoints between consecutive distinct values.  When the
    column has at most ``n_candidates + 1`` distinct values every midpoint is
    returned, which makes the search exhaustive.
    """
    column = np.asarray(column, dtype=float)
    weights = np.ones_like(column) if hessians is None else np.asarray(hessians, dtype=float)
    present = ~np.isnan(column)
    values, inverse = np.unique(column[present], return_inverse=True)
    if len(values) < 2:
        return np.empty(0)
    mids = values[:-1] + (values[1:] - values[:-1]) / 2
    if len(values) - 1 <= n_candidates:
        return mids
    w = np.bincount(inverse, weights=weights[present], minlength=len(values))
    rank = np.cumsum(w) / w.sum()
    levels = np.arange(1, n_candidates + 1) / (n_candidates + 1)
    picks = np.searchsorted(rank, levels, side="left")
    picks = np.unique(np.clip(picks, 0, len(values) - 2))
    return mids[picks]


def find_best_split(
    gradients,
    hessians,
    column,
    candidates,
    reg_lambda: float = 1.0,
    gamma: float = 0.0,
) -> Split | None:
    """Best candidate threshold for one feature, or ``None`` if no split has positive gain.

    Both children must receive positive hessian mass.  Ties resolve to the
    lowest threshold, and to sending missing values left.
    """
    g = np.asarray(gradients, dtype=float)
    h = np.asarray(hessians, dtype=float)
    x = np.asarray(column, dtype=float)
    candidates = np.asarray(candidates, dtype=float)
    if len(candidates) == 0 or len(x) < 2:
        return None
    missing = np.isnan(x)
    gm, hm = g[missing].sum(), h[missing].sum()
    xs, gs, hs = x[~missing], g[~missing], h[~missing]
    order = np.argsort(xs, kind="stable")
    xs, gs, hs = xs[order], gs[order], hs[order]
    cg = np.concatenate([[0.0], np.cumsum(gs)])
    ch = np.concatenate([[0.0], np.cumsum(hs)])
    n_left = np.searchsorted(xs, candidates, side="left")
    gl, hl = cg[n_left], ch[n_left]
    gr, hr = cg[-1] - gl, ch[-1] - hl

    best = None
    for default_left in (True, False):
        a_gl, a_hl = (gl + gm, hl + hm) if default_left else (gl, hl)
        a_gr, a_hr = (gr, hr) if default_left else (gr + gm, hr + hm)
        score = _children_score(a_gl, a_hl, a_gr, a_hr, reg_lambda, True)
        k = int(np.argmax(score))
        if score[k] == -np.inf:
            continue
        gain = float(split_gain(a_gl[k], a_hl[k], a_gr[k], a_hr[k], reg_lambda, gamma))
        if gain > 0 and (best is None or gain > best.gain):
            best = Split(float(candidates[k]), gain, default_left)
    return best


class BinnedMatrix:
    """Feature matrix discretised against per-feature candidate thresholds.

    ``codes[i, f]`` counts the candidates of feature ``f`` that are ``<= x[i, f]``;
    NaN maps to the dedicated missing code ``n_codes - 1``.  So ``x < cand[f][k]``
    holds exactly when ``codes <= k``.
    """

    def __init__(self, x: np.ndarray, candidates: list[np.ndarray]):
        x = np.asarray(x, dtype=float)
        n, n_features = x.shape
        self.n_features = n_features
        self.width = max((len(c) for c in candidates), default=0)
        self.n_codes = self.width + 2
        self.thresholds = np.full((n_features, max(self.width, 1)), np.nan)
        self.n_candidates = np.array([len(c) for c in candidates], dtype=int)
        codes = np.empty((n, n_features), dtype=np.int64)
        for f, cand in enumerate(candidates):
            self.thresholds[f, : len(cand)] = cand
            col = x[:, f]
            codes[:, f] = np.searchsorted(cand, col, side="right")
            codes[np.isnan(col), f] = self.n_codes - 1
        self.has_missing = bool(np.isnan(x).any())
        # Flat histogram slot of every (sample, feature) cell.
        self.slots = codes + (np.arange(n_features) * self.n_codes)[None, :]

    @classmethod
    def from_data(cls, x: np.ndarray, hessians=None, n_candidates: int = 32) -> BinnedMatrix:
        x = np.asarray(x, dtype=float)
        return cls(x, [propose_candidates(x[:, f], hessians, n_candidates) for f in range(x.shape[1])])

    def best_split(self, rows, gradients, hessians, reg_lambda: float, gamma: float) -> Split | None:
        """Best split over all features for the samples ``rows``.

        Equivalent to calling :func:`find_best_split` on every feature with
        this matrix's candidates and keeping the first feature of maximal gain.
        """
        if self.width == 0 or len(rows) < 2:
            return None
        slots = self.slots[rows]
        g = np.broadcast_to(gradients[rows][:, None], slots.shape)
        h = np.broadcast_to(hessians[rows][:, None], slots.shape)
        size = self.n_features * self.n_codes
        hist_g = np.bincount(slots.ravel(), weights=g.ravel(), minlength=size).reshape(self.n_features, self.n_codes)
        hist_h = np.bincount(slots.ravel(), weights=h.ravel(), minlength=size).reshape(self.n_features, self.n_codes)
        gm, hm = hist_g[:, -1:], hist_h[:, -1:]
        gl = np.cumsum(hist_g[:, : self.width], axis=1)
        hl = np.cumsum(hist_h[:, : self.width], axis=1)
        g_total = hist_g[:, :-1].sum(axis=1, keepdims=True)
        h_total = hist_h[:, :-1].sum(axis=1, keepdims=True)
        gr, hr = g_total - gl, h_total - hl
        valid = np.arange(self.width)[None, :] < self.n_candidates[:, None]

        best = None
        directions = (True, False) if self.has_missing else (True,)
        for default_left in directions:
            a_gl, a_hl = (gl + gm, hl + hm) if default_left else (gl, hl)
            a_gr, a_hr = (gr, hr) if default_left else (gr + gm, hr + hm)
            score = _children_score(a_gl, a_hl, a_gr, a_hr, reg_lambda, valid)
            # Row-major argmax: first maximal feature, then its first maximal threshold.
            f, k = divmod(int(np.argmax(score)), self.width)
            if score[f, k] == -np.inf:
                continue
            gain = float(split_gain(a_gl[f, k], a_hl[f, k], a_gr[f, k], a_hr[f, k], reg_lambda, gamma))
            if gain > 0 and (best is None or gain > best.gain):
                best = Split(float(self.thresholds[f, k]), gain, default_left, f)
        return best

    def goes_left(self, rows, split: Split) -> np.ndarray:
        # Recover the candidate index from the threshold to stay on codes.
        k = int(np.searchsorted(self.thresholds[split.feature, : self.n_candidates[split.feature]], split.threshold))
        codes = self.slots[rows, split.feature] - split.feature * self.n_codes
        missing = codes == self.n_codes - 1
        return np.where(missing, split.default_left, codes <= k)
