"""k-means++ clustering, centroid tagging and a 2-D PCA projection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ClusterModel:
    centroids: np.ndarray
    inertia: float
    seed: int
    labels: np.ndarray = field(repr=False, default=None)
    inertia_trace: list = field(default_factory=list, repr=False)
    n_iter: int = 0

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def _sq_dists(X: np.ndarray, C: np.ndarray, chunk: int = 2048) -> np.ndarray:
    out = np.empty((X.shape[0], C.shape[0]))
    for s in range(0, X.shape[0], chunk):
        diff = X[s:s + chunk, None, :] - C[None, :, :]
        out[s:s + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def _assign(X, C):
    d = _sq_dists(X, C)
    lab = d.argmin(axis=1)  # first index wins ties
    return lab, float(d[np.arange(len(X)), lab].sum())


def kmeanspp_fit(points, k: int, seed: int = 0, max_iter: int = 300) -> ClusterModel:
    """k-means++ seeding followed by Lloyd iterations until assignments stop changing."""
    X = np.asarray(points, dtype=float)
    if X.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n = X.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"need at least k={k} points, got {n}")
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(X, X[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(rng.integers(n))
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dists(X, X[nxt:nxt + 1])[:, 0])
    C = X[chosen].copy()

    labels, inertia = _assign(X, C)
    trace = [inertia]
    it = 0
    for it in range(1, max_iter + 1):
        for j in range(k):
            members = labels == j
            if members.any():
                C[j] = X[members].mean(axis=0)
        new_labels, inertia = _assign(X, C)
        trace.append(inertia)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return ClusterModel(C, inertia, seed, labels, trace, it)


def assign_centroid(m: ClusterModel, point) -> int:
    p = np.asarray(point, dtype=float)
    if p.shape != m.centroids.shape[1:]:
        raise ValueError(f"point has shape {p.shape}, centroids live in {m.centroids.shape[1:]}")
    return int(_assign(p[None], m.centroids)[0][0])


def assign_many(m: ClusterModel, points) -> np.ndarray:
    return _assign(np.asarray(points, dtype=float), m.centroids)[0]


def centroid_tags(m: ClusterModel, terms, top: int = 3) -> list[list[str]]:
    """Highest-coordinate vocabulary terms per centroid; ``terms`` is a TfIdfModel or term list."""
    if top < 1:
        raise ValueError("top must be >= 1")
    vocab = list(getattr(terms, "terms", terms))
    tags = []
    for c in m.centroids:
        nz = np.flatnonzero(c > 0)
        ranked = sorted(nz, key=lambda j: (-c[j], vocab[j]))[:top]
        tags.append([vocab[j] for j in ranked])
    return tags


def _top_eigvec(matvec, dim, rng, against=(), max_iter=20000, tol=1e-12):
    """Power iteration kept orthogonal to ``against``; stops once the vector settles."""
    def project(x):
        for a in against:
            x = x - a * (a @ x)
        return x

    v = project(rng.normal(size=dim))
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        w = project(matvec(v))
        norm = np.linalg.norm(w)
        if norm == 0:
            return v, 0.0
        w /= norm
        if w @ v < 0:
            w = -w
        done = np.linalg.norm(w - v) < tol
        v = w
        if done:
            break
    return v, float(v @ matvec(v))


def pca_2d(points, seed: int = 0) -> np.ndarray:
    """Project onto the top two principal axes (power iteration with deflation).

    Each axis is signed so its largest-magnitude coordinate is positive.
    Rank-deficient directions project to zero.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least 2 points")
    Xc = X - X.mean(axis=0)
    n, dim = Xc.shape
    scale = float(np.abs(Xc).max()) if Xc.size else 0.0
    out = np.zeros((n, 2))
    if scale == 0:
        return out
    rng = np.random.default_rng(seed)
    axes, lams = [], []

    def cov(v):
        r = Xc.T @ (Xc @ v) / (n - 1)
        for a, lam in zip(axes, lams):
            r -= lam * a * (a @ v)
        return r

    for comp in range(min(2, dim)):
        v, lam = _top_eigvec(cov, dim, rng, axes)
        if lam <= 1e-12 * max(lams[0] if lams else lam, 1e-300) or lam <= 0:
            break
        j = int(np.argmax(np.abs(v)))
        if v[j] < 0:
            v = -v
        axes.append(v)
        lams.append(lam)
        out[:, comp] = Xc @ v
    return out
