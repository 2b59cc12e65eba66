"""Small gradient-boosted decision trees for binary logistic loss.

Histogram split finding over quantile bins, Newton leaf values, level-wise
growth. Everything is deterministic: there is no row or column sampling, and
ties between equal-gain splits go to the lower feature index, then the lower bin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class GBDTParams:
    n_trees: int = 50
    max_depth: int = 4
    learning_rate: float = 0.1
    n_bins: int = 255
    min_samples_leaf: int = 5
    l2: float = 1.0
    min_gain: float = 1e-9

    def __post_init__(self):
        if self.n_trees < 0 or self.max_depth < 1:
            raise ValueError("n_trees must be >= 0 and max_depth >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 2 <= self.n_bins <= 256:
            raise ValueError("n_bins must be in [2, 256]")


@dataclass
class Tree:
    feature: np.ndarray  # int32, -1 marks a leaf
    threshold: np.ndarray  # float64, go left iff x <= threshold
    left: np.ndarray  # int32
    right: np.ndarray  # int32
    value: np.ndarray  # float64, leaf output (learning rate applied)

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return self.value[node]
            r = rows[inner]
            nd = node[inner]
            go_left = x[r, f[inner]] <= self.threshold[nd]
            node[r] = np.where(go_left, self.left[nd], self.right[nd])


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _bin_edges(col: np.ndarray, n_bins: int) -> np.ndarray:
    """Midpoints between distinct values when they fit in ``n_bins``, quantiles otherwise."""
    vals = np.unique(col)
    if vals.size <= n_bins:
        return 0.5 * (vals[:-1] + vals[1:])
    qs = np.quantile(col, np.linspace(0, 1, n_bins + 1)[1:-1])
    return np.unique(qs)


@dataclass
class GBDT:
    params: GBDTParams = field(default_factory=GBDTParams)
    seed: int = 0
    base_score: float = 0.0
    trees: list = field(default_factory=list)
    n_features: int = 0
    constant: float | None = None  # set when trained on a single class

    def fit(self, features, labels, sample_weight=None) -> "GBDT":
        x = np.asarray(features, dtype=np.float64)
        y = np.asarray(labels, dtype=np.float64).ravel()
        if x.ndim != 2 or x.shape[0] != y.size:
            raise ValueError("features must be 2-D with one row per label")
        w = np.ones(y.size) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64).ravel()
        if w.shape != y.shape or np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("sample_weight must be positive, finite and one per label")
        if not np.all(np.isfinite(x)):
            raise ValueError("features must be finite")
        self.n_features = x.shape[1]
        self.trees = []
        if y.size == 0:
            raise ValueError("no training rows")
        if y.min() == y.max():
            self.constant = float(y[0])
            return self
        rate = float((w * y).sum() / w.sum())
        self.constant = None
        self.base_score = float(np.log(rate / (1 - rate)))
        edges = [_bin_edges(x[:, j], self.params.n_bins) for j in range(x.shape[1])]
        bins = np.empty(x.shape, dtype=np.int64)
        for j, e in enumerate(edges):
            bins[:, j] = np.searchsorted(e, x[:, j], side="left")
        nb = self.params.n_bins
        score = np.full(y.size, self.base_score)
        for _ in range(self.params.n_trees):
            p = _sigmoid(score)
            g = w * (p - y)
            h = w * np.maximum(p * (1 - p), 1e-12)
            tree = self._grow(bins, edges, g, h, nb)
            score += tree.predict(x)
            self.trees.append(tree)
        return self

    def _grow(self, bins, edges, g, h, nb) -> Tree:
        prm = self.params
        nf = bins.shape[1]
        feat, thr, left, right, val = [], [], [], [], []

        def new_node():
            feat.append(-1)
            thr.append(0.0)
            left.append(-1)
            right.append(-1)
            val.append(0.0)
            return len(feat) - 1

        def leaf_value(idx):
            return -prm.learning_rate * g[idx].sum() / (h[idx].sum() + prm.l2)

        root = new_node()
        frontier = [(root, np.arange(g.size))]
        offs = (np.arange(nf) * nb)[None, :]
        for _depth in range(prm.max_depth):
            nxt = []
            for node, idx in frontier:
                val[node] = leaf_value(idx)
                if idx.size < 2 * prm.min_samples_leaf:
                    continue
                flat = (bins[idx] + offs).ravel()
                gh = np.bincount(flat, np.repeat(g[idx], nf), minlength=nf * nb).reshape(nf, nb)
                hh = np.bincount(flat, np.repeat(h[idx], nf), minlength=nf * nb).reshape(nf, nb)
                ch = np.bincount(flat, minlength=nf * nb).reshape(nf, nb)
                gl, hl, cl = np.cumsum(gh, 1), np.cumsum(hh, 1), np.cumsum(ch, 1)
                gt, ht, ct = gl[:, -1:], hl[:, -1:], cl[:, -1:]
                gr, hr, cr = gt - gl, ht - hl, ct - cl
                gain = gl**2 / (hl + prm.l2) + gr**2 / (hr + prm.l2) - gt**2 / (ht + prm.l2)
                ok = (cl >= prm.min_samples_leaf) & (cr >= prm.min_samples_leaf)
                gain = np.where(ok, gain, -np.inf)
                best = int(np.argmax(gain))
                f, b = divmod(best, nb)
                if not np.isfinite(gain[f, b]) or gain[f, b] <= prm.min_gain or b >= len(edges[f]):
                    continue
                mask = bins[idx, f] <= b
                feat[node] = f
                thr[node] = float(edges[f][b])
                ln, rn = new_node(), new_node()
                left[node], right[node] = ln, rn
                nxt.append((ln, idx[mask]))
                nxt.append((rn, idx[~mask]))
            frontier = nxt
        for node, idx in frontier:
            val[node] = leaf_value(idx)
        return Tree(
            np.array(feat, dtype=np.int32),
            np.array(thr, dtype=np.float64),
            np.array(left, dtype=np.int32),
            np.array(right, dtype=np.int32),
            np.array(val, dtype=np.float64),
        )

    def decision_function(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[1]}")
        out = np.full(x.shape[0], self.base_score)
        for t in self.trees:
            out += t.predict(x)
        return out

    def predict_proba(self, features) -> np.ndarray:
        """Probability of the positive class, in [0, 1]."""
        if self.constant is not None:
            x = np.atleast_2d(np.asarray(features, dtype=np.float64))
            if x.shape[1] != self.n_features:
                raise ValueError(f"expected {self.n_features} features, got {x.shape[1]}")
            return np.full(x.shape[0], self.constant)
        return np.clip(_sigmoid(self.decision_function(features)), 0.0, 1.0)

    # flat array form used by the index file
    def to_arrays(self) -> dict:
        sizes = np.array([t.feature.size for t in self.trees], dtype=np.int64)
        cat = lambda name, dt: np.concatenate([getattr(t, name) for t in self.trees]).astype(dt) if self.trees else np.zeros(0, dt)  # noqa: E731
        p = self.params
        meta = np.array(
            [p.n_trees, p.max_depth, p.learning_rate, p.n_bins, p.min_samples_leaf, p.l2, p.min_gain,
             self.seed, self.base_score, self.n_features,
             np.nan if self.constant is None else self.constant],
            dtype=np.float64,
        )
        return {
            "meta": meta,
            "sizes": sizes,
            "feature": cat("feature", np.int32),
            "threshold": cat("threshold", np.float64),
            "left": cat("left", np.int32),
            "right": cat("right", np.int32),
            "value": cat("value", np.float64),
        }

    @classmethod
    def from_arrays(cls, arrs: dict) -> "GBDT":
        m = arrs["meta"]
        params = GBDTParams(int(m[0]), int(m[1]), float(m[2]), int(m[3]), int(m[4]), float(m[5]), float(m[6]))
        model = cls(params, int(m[7]), float(m[8]), [], int(m[9]), None if np.isnan(m[10]) else float(m[10]))
        start = 0
        for s in arrs["sizes"].tolist():
            sl = slice(start, start + s)
            model.trees.append(Tree(*(np.asarray(arrs[k][sl]) for k in ("feature", "threshold", "left", "right", "value"))))
            start += s
        return model


def logloss(y, p) -> float:
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(np.asarray(p, dtype=np.float64), 1e-15, 1 - 1e-15)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def roc_auc(y, s) -> float:
    """Rank-based AUC with midranks for ties."""
    from scipy.stats import rankdata

    y = np.asarray(y).astype(bool)
    npos, nneg = int(y.sum()), int((~y).sum())
    if npos == 0 or nneg == 0:
        return float("nan")
    r = rankdata(s)
    return float((r[y].sum() - npos * (npos + 1) / 2) / (npos * nneg))
