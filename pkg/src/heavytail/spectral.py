"""Empirical spectral distributions, root spectral measures of finite trees
and CDF metrics between spectral measures."""

from __future__ import annotations

import hashlib
import json
import os
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import eigh
from scipy.sparse import csr_matrix, issparse

from .graph_core import MarkedGraph, RootedNeighborhood, theta_truncate_network, to_operator
from .models import task_rng

MAX_MOMENT = 12


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    masses: np.ndarray

    def to_dict(self) -> dict:
        return {"edges": [float(x) for x in self.edges], "masses": [float(x) for x in self.masses]}


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Atomic probability measure on R, atoms sorted by value."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if v.shape != w.shape:
            raise ValueError("values and weights differ in length")
        if np.any(w < -1e-15):
            raise ValueError("negative weight")
        order = np.argsort(v, kind="stable")
        object.__setattr__(self, "values", v[order])
        object.__setattr__(self, "weights", np.clip(w[order], 0, None))

    @classmethod
    def uniform(cls, values) -> "SpectralMeasure":
        values = np.asarray(values, dtype=float)
        return cls(values, np.full(len(values), 1.0 / len(values)))

    @classmethod
    def dirac(cls, t: float = 0.0) -> "SpectralMeasure":
        return cls(np.array([t]), np.array([1.0]))

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def cdf(self, x) -> np.ndarray:
        cw = np.concatenate([[0.0], np.cumsum(self.weights)])
        return cw[np.searchsorted(self.values, np.asarray(x, dtype=float), side="right")]

    def clip(self, lo: float, hi: float) -> tuple["SpectralMeasure", float]:
        """Move mass outside [lo, hi] to the endpoints; returns the moved mass."""
        out = float(self.weights[(self.values < lo) | (self.values > hi)].sum())
        return SpectralMeasure(np.clip(self.values, lo, hi), self.weights), out

    def histogram(self, bins=50, range_=None) -> Histogram:
        masses, edges = np.histogram(self.values, bins=bins, range=range_, weights=self.weights)
        return Histogram(edges, masses)

    def to_csv(self, header: str | None = None) -> str:
        lines = [] if header is None else [f"# {header}"]
        lines.append("value,weight")
        lines += [f"{v:.17g},{w:.17g}" for v, w in zip(self.values, self.weights)]
        return "\n".join(lines) + "\n"


def mixture(measures, coef=None) -> SpectralMeasure:
    measures = list(measures)
    coef = np.full(len(measures), 1.0 / len(measures)) if coef is None else np.asarray(coef, float)
    return SpectralMeasure(np.concatenate([m.values for m in measures]),
                           np.concatenate([c * m.weights for c, m in zip(coef, measures)]))


# -------------------------------------------------------------------- ESD


def _dense(Y) -> np.ndarray:
    return Y.toarray() if issparse(Y) else np.asarray(Y)


def _cache_path(A: np.ndarray) -> Path | None:
    root = os.environ.get("HEAVYTAIL_CACHE")
    if not root:
        return None
    h = hashlib.sha256(np.ascontiguousarray(A).tobytes() + str(A.shape).encode()).hexdigest()
    return Path(root) / f"eig-{h}.npy"


def eigenvalues(Y, check: bool = True) -> np.ndarray:
    """All eigenvalues of a Hermitian matrix (dense solver), memoized under
    $HEAVYTAIL_CACHE when set."""
    A = _dense(Y)
    if A.shape[0] == 0:
        return np.zeros(0)
    if np.abs(A - A.conj().T).max() > 1e-10 * max(np.abs(A).max(), 1.0):
        raise ValueError("matrix is not Hermitian")
    path = _cache_path(A)
    if path is not None and path.exists():
        return np.load(path)
    if check:
        lam, V = eigh(A)
        scale = max(np.linalg.norm(A, 2) if A.shape[0] <= 64 else np.abs(lam).max(), 1e-300)
        resid = np.abs(A @ V - V * lam).max() * np.sqrt(A.shape[0])
        if resid > 1e-8 * scale * np.sqrt(A.shape[0]) and resid > 1e-12:
            raise np.linalg.LinAlgError("eigensolver residual check failed")
    else:
        lam = eigh(A, eigvals_only=True)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.save(path, lam)
    return lam


def esd(Y, check: bool = True) -> SpectralMeasure:
    """L_Y = (1/n) sum_k delta_{lambda_k(Y)}."""
    return SpectralMeasure.uniform(eigenvalues(Y, check))


# -------------------------------------------------------- root measure


def _component(graph: MarkedGraph, root: int) -> tuple[MarkedGraph, int]:
    dist = graph.bfs_distances([root])
    if len(dist) == graph.n:
        return graph, root
    verts = list(dist)
    return graph.induced(verts), 0


def _compressed_tree(graph: MarkedGraph, root: int) -> np.ndarray:
    """Weighted adjacency of the tree quotient by identical sibling subtrees.

    On a tree the root measure only depends on |xi| (diagonal unitary gauge),
    and m identical sibling subtrees hanging on edges of weight w can be
    replaced by one copy on an edge of weight w sqrt(m): the Krylov space of
    e_root lies in the symmetric subspace.  Exact.
    """
    w = np.linalg.norm(graph.fwd, axis=1) if graph.m else np.zeros(0)
    if graph.involution.is_conjugation:
        x = graph.fwd[:, 0::2] + 1j * graph.fwd[:, 1::2]
        w = np.abs(x[:, 0])
    elif graph.k > 1:
        w = np.abs(graph.fwd[:, 0])
    else:
        w = np.abs(graph.fwd[:, 0]) if graph.m else w
    adj = graph.adjacency
    parent = {root: -1}
    pw = {root: 0.0}
    order = [root]
    i = 0
    while i < len(order):
        v = order[i]
        i += 1
        for u, e, _ in adj[v]:
            if u not in parent:
                parent[u] = v
                pw[u] = float(w[e])
                order.append(u)
    codes: dict[int, int] = {}
    table: dict[tuple, int] = {}
    kids: dict[int, list] = {v: [] for v in order}
    for v in order[1:]:
        kids[parent[v]].append(v)
    for v in reversed(order):
        sig = tuple(sorted((pw[c], codes[c]) for c in kids[v]))
        codes[v] = table.setdefault(sig, len(table))
    # rebuild the quotient tree top-down
    rows, cols, vals = [], [], []
    nodes = [(root, 0)]
    count = 1
    while nodes:
        v, idx = nodes.pop()
        groups: dict[tuple, list] = {}
        for c in kids[v]:
            groups.setdefault((pw[c], codes[c]), []).append(c)
        for (wc, _), members in sorted(groups.items()):
            j = count
            count += 1
            val = wc * np.sqrt(len(members))
            rows += [idx, j]
            cols += [j, idx]
            vals += [val, val]
            nodes.append((members[0], j))
    A = np.zeros((count, count))
    if rows:
        A[rows, cols] = vals
    return A


def root_spectral_measure(g, root: int | None = None, label: int = 0) -> SpectralMeasure:
    """sum_i |<e_o, v_i>|^2 delta_{lambda_i} for the finite operator of g."""
    if isinstance(g, RootedNeighborhood):
        graph, root = g.graph, g.root
    else:
        graph, root = g, (0 if root is None else root)
    graph, root = _component(graph, root)
    if graph.m == 0:
        return SpectralMeasure.dirac(0.0)
    if graph.m == graph.n - 1 and (graph.k == 1 or graph.involution.is_conjugation):
        A = _compressed_tree(graph, root)
        root = 0
    else:
        A = to_operator(graph, label)
    lam, V = eigh(A)
    wts = np.abs(V[root, :]) ** 2
    return SpectralMeasure(lam, wts / wts.sum())


def _limit_sample(args):
    sampler, params, h, theta, seed, i = args
    from .limits import sample_pwit, sample_ugw

    rng = task_rng(seed, i)
    if sampler == "ugw":
        g = sample_ugw(params["gamma"], params["pi"], h, rng=rng,
                       max_vertices=params.get("max_vertices", 2_000_000))
    elif sampler == "pwit":
        g = sample_pwit(params["intensity"], h, params["eps"], rng=rng,
                        max_vertices=params.get("max_vertices"),
                        expand_min_norm=theta)
    else:
        raise ValueError(f"unknown sampler {sampler!r}")
    graph = g.graph
    if theta is not None:
        graph = theta_truncate_network(graph, theta)
    return root_spectral_measure(graph, g.root)


def limit_esd_estimate(sampler: str, params: dict, h: int, theta: float | None = None,
                       n_samples: int = 100, seed: int = 0, jobs: int = 1) -> SpectralMeasure:
    """Average of root spectral measures over n_samples depth-h limit-tree
    samples (theta-truncated first when theta is given).  Sample i uses the
    stream (seed, i), so the result does not depend on `jobs`."""
    if h < 1:
        raise ValueError("h must be >= 1")
    tasks = [(sampler, params, h, theta, seed, i) for i in range(n_samples)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            parts = list(ex.map(_limit_sample, tasks))
    else:
        parts = [_limit_sample(t) for t in tasks]
    return mixture(parts)


# ---------------------------------------------------------------- moments


def moments(L: SpectralMeasure, k: int) -> float:
    if k > MAX_MOMENT:
        raise ValueError(f"moment order above {MAX_MOMENT}")
    return float(np.sum(L.weights * L.values ** k))


def trace_moment(Y, k: int) -> float:
    """(1/n) tr(Y^k) by sparse matrix powers."""
    if k > MAX_MOMENT:
        raise ValueError(f"moment order above {MAX_MOMENT}")
    A = csr_matrix(Y)
    n = A.shape[0]
    if k == 0:
        return 1.0
    half = k // 2
    M = csr_matrix(np.eye(n)) if half == 0 else A
    for _ in range(half - 1):
        M = M @ A
    N = M @ A if k % 2 else M
    tr = M.multiply(N.T).sum()
    return float(np.real(tr)) / n


# ---------------------------------------------------------------- metrics


def _merged(L1: SpectralMeasure, L2: SpectralMeasure):
    x = np.union1d(L1.values, L2.values)
    return x, L1.cdf(x), L2.cdf(x)


def w1_distance(L1: SpectralMeasure, L2: SpectralMeasure) -> float:
    """int |F1 - F2| dx."""
    x, f1, f2 = _merged(L1, L2)
    if len(x) < 2:
        return 0.0
    return float(np.sum(np.abs(f1 - f2)[:-1] * np.diff(x)))


def kolmogorov_distance(L1: SpectralMeasure, L2: SpectralMeasure) -> float:
    """sup |F1 - F2|."""
    x, f1, f2 = _merged(L1, L2)
    return float(np.max(np.abs(f1 - f2), initial=0.0))


def surrogate_bl(L1: SpectralMeasure, L2: SpectralMeasure) -> float:
    """min(W1, KS); an upper bound on the bounded-Lipschitz/total-variation
    distance sup{|int f dL1 - int f dL2| : |f|_L <= 1, |f|_TV <= 1}."""
    return min(w1_distance(L1, L2), kolmogorov_distance(L1, L2))


def numerical_rank(M, rtol: float = 1e-8) -> int:
    s = np.linalg.svd(_dense(M), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def rank_inequality_check(A, B) -> tuple[float, float, bool]:
    """KS(L_A, L_B) <= rank(A - B) / n."""
    A, B = _dense(A), _dense(B)
    if A.shape != B.shape:
        raise ValueError("dimension mismatch")
    n = A.shape[0]
    ks = kolmogorov_distance(esd(A), esd(B))
    bound = numerical_rank(A - B) / n
    return ks, bound, bool(ks <= bound + 1e-12)


def measure_to_json(L: SpectralMeasure, bins=50, range_=None, extra: dict | None = None) -> str:
    d = L.histogram(bins, range_).to_dict()
    if extra:
        d.update(extra)
    return json.dumps(d, sort_keys=True)
