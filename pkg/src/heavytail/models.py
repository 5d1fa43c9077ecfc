"""Seeded samplers for the finite-n matrix and graph ensembles."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import networkx as nx
import numpy as np
from scipy import stats
from scipy.sparse import csr_matrix, issparse

from .graph_core import MarkedGraph


def task_rng(seed: int, index: int | None = None) -> np.random.Generator:
    """Generator for a (seed, stream index) pair; independent of worker count."""
    if index is None:
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


# ----------------------------------------------------------------- mark laws


@dataclass(frozen=True)
class PointMasses:
    values: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("invalid point_masses spec")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1) > 1e-9:
            raise ValueError("point mass probabilities must be nonnegative and sum to 1")
        if any(not math.isfinite(v) for v in self.values):
            raise ValueError("point mass values must be finite")

    def sample(self, rng, size):
        idx = rng.choice(len(self.values), size=size, p=np.asarray(self.probs) / sum(self.probs))
        return np.asarray(self.values, dtype=float)[idx]

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        v, p = np.asarray(self.values), np.asarray(self.probs)
        return (p[None, :] * (v[None, :] <= x.reshape(-1, 1))).sum(1).reshape(x.shape)

    def spec(self):
        return {"point_masses": [[v, p] for v, p in zip(self.values, self.probs)]}


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("gaussian sigma must be positive")

    def sample(self, rng, size):
        return rng.normal(self.mean, self.sigma, size=size)

    def dist(self):
        return stats.norm(self.mean, self.sigma)

    def spec(self):
        return {"gaussian": [self.mean, self.sigma]}


@dataclass(frozen=True)
class Uniform:
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("uniform needs a < b")

    def sample(self, rng, size):
        return rng.uniform(self.a, self.b, size=size)

    def dist(self):
        return stats.uniform(self.a, self.b - self.a)

    def spec(self):
        return {"uniform": [self.a, self.b]}


@dataclass(frozen=True)
class Pareto:
    """Symmetric-sign Pareto: |X| = t0 U^{-1/alpha}, sign + with probability p."""

    alpha: float
    t0: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if not (self.alpha > 0 and self.t0 > 0 and 0 <= self.p <= 1):
            raise ValueError("invalid pareto spec")

    def sample(self, rng, size):
        r = self.t0 * rng.random(size=size) ** (-1.0 / self.alpha)
        s = np.where(rng.random(size=size) < self.p, 1.0, -1.0)
        return s * r

    def spec(self):
        return {"pareto": [self.alpha, self.t0, self.p]}


MarkLaw = PointMasses | Gaussian | Uniform | Pareto


def mark_law(spec: Any) -> MarkLaw:
    """Parse a mark-law spec: {"point_masses": [[v, p], ...]}, {"gaussian": [m, s]},
    {"uniform": [a, b]} or {"pareto": [alpha, t0, p]}; a bare number means a
    point mass."""
    if isinstance(spec, (PointMasses, Gaussian, Uniform, Pareto)):
        return spec
    if isinstance(spec, (int, float)):
        return PointMasses((float(spec),), (1.0,))
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ValueError(f"invalid mark law spec: {spec!r}")
    (kind, args), = spec.items()
    try:
        if kind == "point_masses":
            return PointMasses(tuple(float(v) for v, _ in args), tuple(float(p) for _, p in args))
        if kind == "gaussian":
            return Gaussian(*map(float, args))
        if kind == "uniform":
            return Uniform(*map(float, args))
        if kind == "pareto":
            return Pareto(*map(float, args))
    except TypeError as exc:
        raise ValueError(f"invalid mark law spec: {spec!r}") from exc
    raise ValueError(f"unknown mark law kind: {kind}")


# -------------------------------------------------------------------- config

KINDS = ("sparse_wigner", "config_model", "levy", "general_gamma_n", "er_marked", "given_edge_counts")


@dataclass
class EnsembleConfig:
    kind: str
    n: int
    d: float | None = None
    degrees: list[int] | None = None
    alpha: float | None = None
    c: float = 1.0
    p: float = 0.5
    gamma: Any = 1.0
    edge_counts: dict[int, int] | None = None
    seed: int = 0
    rejection_budget: int = 10000

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")
        if not isinstance(self.n, int) or self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.kind in ("sparse_wigner", "er_marked") and (self.d is None or self.d < 0):
            raise ValueError("d must be given and nonnegative")
        if self.kind in ("levy",) or (self.kind == "general_gamma_n" and self.alpha is not None):
            if self.alpha is None or not 0 < self.alpha < 2:
                raise ValueError("alpha must lie in (0, 2)")
            if not self.c > 0 or not 0 <= self.p <= 1:
                raise ValueError("need c > 0 and p in [0, 1]")
        if self.kind == "config_model":
            if self.degrees is None or len(self.degrees) != self.n:
                raise ValueError("config_model needs a degree sequence of length n")
            if sum(self.degrees) % 2:
                raise ValueError("degree sum must be even")
        if self.kind == "given_edge_counts" and not self.edge_counts:
            raise ValueError("given_edge_counts needs edge_counts")
        mark_law(self.gamma)

    def mark_law(self):
        return mark_law(self.gamma)

    def to_dict(self) -> dict:
        d = asdict(self)
        g = self.gamma
        d["gamma"] = g.spec() if hasattr(g, "spec") else g
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleConfig":
        d = dict(d)
        if "edge_counts" in d and d["edge_counts"] is not None:
            d["edge_counts"] = {int(k): int(v) for k, v in d["edge_counts"].items()}
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown config fields: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, s: str) -> "EnsembleConfig":
        return cls.from_dict(json.loads(s))


# ----------------------------------------------------------------- samplers


def _pair_from_index(t: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major enumeration of the pairs i < j of range(n)."""
    t = np.asarray(t, dtype=np.int64)
    N = n * (n - 1) // 2
    r = N - 1 - t  # index counted from the end
    k = np.floor((np.sqrt(8 * r.astype(float) + 1) - 1) / 2).astype(np.int64)
    # k is the largest integer with k(k+1)/2 <= r; repair rounding
    k = np.where((k + 1) * (k + 2) // 2 <= r, k + 1, k)
    k = np.where(k * (k + 1) // 2 > r, k - 1, k)
    i = n - 2 - k
    j = n - 1 - (r - k * (k + 1) // 2)
    return i, j


def _er_pairs(n: int, p: float, rng) -> tuple[np.ndarray, np.ndarray]:
    N = n * (n - 1) // 2
    if N == 0 or p <= 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    if p >= 1:
        idx = np.arange(N)
    else:
        m = rng.binomial(N, p)
        idx = np.sort(rng.choice(N, size=m, replace=False))
    return _pair_from_index(idx, n)


def _symmetric(n, i, j, x) -> csr_matrix:
    rows = np.concatenate([i, j])
    cols = np.concatenate([j, i])
    data = np.concatenate([x, np.conj(x)])
    return csr_matrix((data, (rows, cols)), shape=(n, n))


def sample_sparse_wigner(cfg: EnsembleConfig) -> csr_matrix:
    """Y_ij = A_ij X_ij with A ~ ER(min(d/n, 1)) and X_ij i.i.d. gamma."""
    rng = task_rng(cfg.seed)
    gamma = cfg.mark_law()
    i, j = _er_pairs(cfg.n, min(cfg.d / cfg.n, 1.0), rng)
    x = gamma.sample(rng, len(i))
    return _symmetric(cfg.n, i, j, x)


def erdos_gallai(degrees) -> bool:
    return nx.is_graphical(list(degrees), method="eg")


def sample_configuration_model(cfg: EnsembleConfig) -> csr_matrix:
    """Uniform simple graph with the given degrees (pairing with restarts),
    marks i.i.d. gamma.  Falls back to edge-switching MCMC (not exactly
    uniform) once the rejection budget is spent."""
    rng = task_rng(cfg.seed)
    deg = np.asarray(cfg.degrees, dtype=np.int64)
    if np.any(deg < 0) or not erdos_gallai(deg):
        raise ValueError("degree sequence is not realizable (Erdos-Gallai)")
    n = cfg.n
    stubs = np.repeat(np.arange(n), deg)
    found = None
    for _ in range(cfg.rejection_budget):
        perm = rng.permutation(stubs)
        a, b = perm[0::2], perm[1::2]
        if np.any(a == b):
            continue
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        key = lo * n + hi
        if len(np.unique(key)) != len(key):
            continue
        found = (lo, hi)
        break
    if found is None:
        found = _switching_fallback(deg, rng)
    i, j = found
    x = cfg.mark_law().sample(rng, len(i))
    return _symmetric(n, i, j, x)


def _switching_fallback(deg, rng, sweeps: int = 20):
    g = nx.havel_hakimi_graph(deg.tolist())
    m = g.number_of_edges()
    if m >= 2:
        nx.double_edge_swap(g, nswap=sweeps * m, max_tries=100 * sweeps * m + 100,
                            seed=int(rng.integers(2 ** 31)))
    e = np.array(sorted((min(u, v), max(u, v)) for u, v in g.edges()), dtype=np.int64).reshape(-1, 2)
    return e[:, 0], e[:, 1]


def levy_entries(alpha: float, c: float, p: float, size, rng) -> np.ndarray:
    """Exact Pareto-tailed entries: P(X >= t) = p c t^-alpha and
    P(X <= -t) = (1-p) c t^-alpha for t >= max(1, c^(1/alpha)); uniform core."""
    u = rng.random(size=size)
    sign = np.where(rng.random(size=size) < p, 1.0, -1.0)
    if c <= 1:
        tail = u < c
        r = np.where(tail, (np.where(tail, u, 1.0) / c) ** (-1.0 / alpha), rng.random(size=size))
    else:
        r = c ** (1.0 / alpha) * (1.0 - u) ** (-1.0 / alpha)
    return sign * r


def sample_levy(cfg: EnsembleConfig) -> np.ndarray:
    """Y_ij = X_ij / (c n)^(1/alpha) with the exact Pareto-tailed X."""
    rng = task_rng(cfg.seed)
    n = cfg.n
    i, j = np.triu_indices(n, 1)
    x = levy_entries(cfg.alpha, cfg.c, cfg.p, len(i), rng) / (cfg.c * n) ** (1.0 / cfg.alpha)
    Y = np.zeros((n, n))
    Y[i, j] = x
    Y[j, i] = x
    return Y


def sample_general_gamma_n(cfg: EnsembleConfig):
    """Entries i.i.d. gamma_n = (1 - d/n) delta_0 + (d/n) gamma, plus an
    independent Levy part when alpha is set; the intensity measure is then
    d gamma + Lambda_alpha."""
    rng = task_rng(cfg.seed)
    n = cfg.n
    out = np.zeros((n, n))
    if cfg.d:
        i, j = _er_pairs(n, min(cfg.d / n, 1.0), rng)
        x = cfg.mark_law().sample(rng, len(i))
        out[i, j] += x
        out[j, i] += x
    if cfg.alpha is not None:
        i, j = np.triu_indices(n, 1)
        x = levy_entries(cfg.alpha, cfg.c, cfg.p, len(i), rng) / (cfg.c * n) ** (1.0 / cfg.alpha)
        out[i, j] += x
        out[j, i] += x
    return out


def sample_er_marked(cfg: EnsembleConfig) -> MarkedGraph:
    rng = task_rng(cfg.seed)
    i, j = _er_pairs(cfg.n, min(cfg.d / cfg.n, 1.0), rng)
    x = cfg.mark_law().sample(rng, len(i))
    return MarkedGraph.from_edges(cfg.n, np.stack([i, j], 1), x.reshape(-1, 1))


def sample_given_edge_counts(cfg: EnsembleConfig, color_laws: dict | None = None) -> MarkedGraph:
    """Uniform simple colored graph with m(b)/2 edges of each (self-conjugate)
    color b, then i.i.d. marks per color (cfg.gamma unless color_laws given)."""
    rng = task_rng(cfg.seed)
    n = cfg.n
    counts = {int(b): int(mb) for b, mb in sorted(cfg.edge_counts.items())}
    if any(mb < 0 or mb % 2 for mb in counts.values()):
        raise ValueError("edge counts of self-conjugate colors must be even and nonnegative")
    per = {b: mb // 2 for b, mb in counts.items()}
    total = sum(per.values())
    N = n * (n - 1) // 2
    if total > N:
        raise ValueError("infeasible edge counts: more edges than pairs")
    idx = rng.choice(N, size=total, replace=False) if total else np.zeros(0, np.int64)
    i, j = _pair_from_index(idx, n)
    colors = rng.permutation(np.repeat(list(per), list(per.values())).astype(np.int64))
    vals = np.empty(total)
    for b in per:
        law = mark_law((color_laws or {}).get(b, cfg.gamma))
        sel = colors == b
        vals[sel] = law.sample(rng, int(sel.sum()))
    return MarkedGraph.from_edges(n, np.stack([i, j], 1), vals.reshape(-1, 1), colors)


def bn_theta_membership(Y, theta: float) -> bool:
    """Every row has at most theta nonzero entries and all |entries| <= theta."""
    if issparse(Y):
        A = csr_matrix(Y)
        A.eliminate_zeros()
        if A.nnz == 0:
            return True
        rows = np.diff(A.indptr)
        cols = np.diff(A.tocsc().indptr)
        return bool(rows.max() <= theta and cols.max() <= theta and np.abs(A.data).max() <= theta)
    A = np.asarray(Y)
    nz = A != 0
    return bool(nz.sum(1).max(initial=0) <= theta and nz.sum(0).max(initial=0) <= theta
                and np.abs(A).max(initial=0) <= theta)


SAMPLERS = {
    "sparse_wigner": sample_sparse_wigner,
    "config_model": sample_configuration_model,
    "levy": sample_levy,
    "general_gamma_n": sample_general_gamma_n,
    "er_marked": sample_er_marked,
    "given_edge_counts": sample_given_edge_counts,
}


def sample(cfg: EnsembleConfig):
    return SAMPLERS[cfg.kind](cfg)
