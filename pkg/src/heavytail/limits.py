"""Limit random trees: unimodular Galton-Watson trees and the Poisson
weighted infinite tree, both truncated at a finite depth."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np
from scipy import stats

from .graph_core import MarkedGraph, Quantizer, RootedNeighborhood
from .models import MarkLaw, PointMasses, mark_law, task_rng

POISSON_TAIL = 1e-12


def poisson_multivariate_pmf(d, k) -> float:
    """prod_b exp(-d_b) d_b^k_b / k_b!."""
    d = np.atleast_1d(np.asarray(d, dtype=float))
    k = np.atleast_1d(np.asarray(k))
    out = 0.0
    for db, kb in zip(d, k):
        if db == 0:
            if kb != 0:
                return 0.0
            continue
        out += -db + kb * math.log(db) - math.lgamma(kb + 1)
    return math.exp(out)


def poisson_cap(lam: float, tail: float = POISSON_TAIL) -> int:
    """Smallest k with P(Poi(lam) > k) < tail."""
    if lam == 0:
        return 0
    return int(stats.poisson.isf(tail, lam)) + 1


@dataclass(frozen=True)
class DegreeLaw:
    """Finite-support pmf on Z_+^B, keyed by tuples of length |B|."""

    pmf: tuple[tuple[tuple[int, ...], Any], ...]
    color_star: tuple[int, ...] | None = None
    cap: int | None = None

    def __post_init__(self):
        if not self.pmf:
            raise ValueError("empty degree law")
        nb = len(self.pmf[0][0])
        if any(len(k) != nb or min(k) < 0 for k, _ in self.pmf):
            raise ValueError("degree vectors must be nonnegative with a common length")
        if any(p < 0 for _, p in self.pmf):
            raise ValueError("negative probability")
        if abs(float(sum(p for _, p in self.pmf)) - 1) > 1e-9:
            raise ValueError("degree law must sum to 1")

    @classmethod
    def from_dict(cls, pmf: dict, color_star=None, cap=None) -> "DegreeLaw":
        items = []
        for k, p in sorted(pmf.items(), key=lambda kv: (kv[0],) if isinstance(kv[0], int) else kv[0]):
            key = (k,) if isinstance(k, (int, np.integer)) else tuple(k)
            if p:
                items.append((tuple(int(x) for x in key), p))
        return cls(tuple(items), color_star, cap)

    @classmethod
    def point(cls, k: int) -> "DegreeLaw":
        return cls((((int(k),), Fraction(1)),))

    @classmethod
    def poisson(cls, d, tail: float = POISSON_TAIL) -> "DegreeLaw":
        """Product Poisson law truncated where the tail mass drops below `tail`
        and renormalized; the cap is recorded."""
        d = np.atleast_1d(np.asarray(d, dtype=float))
        caps = [poisson_cap(x, tail) for x in d]
        grids = np.meshgrid(*[np.arange(c + 1) for c in caps], indexing="ij")
        keys = np.stack([g.ravel() for g in grids], axis=1)
        probs = np.array([poisson_multivariate_pmf(d, k) for k in keys])
        probs /= probs.sum()
        return cls(tuple((tuple(int(x) for x in k), float(p)) for k, p in zip(keys, probs) if p > 0),
                   None, max(caps))

    @property
    def n_colors(self) -> int:
        return len(self.pmf[0][0])

    def star(self, b: int) -> int:
        return b if self.color_star is None else self.color_star[b]

    @property
    def means(self) -> list:
        return [sum((k[b] * p for k, p in self.pmf), 0) for b in range(self.n_colors)]

    @property
    def mean_total(self):
        return sum(self.means)

    def as_dict(self) -> dict:
        return dict(self.pmf)

    def sample(self, rng, size) -> np.ndarray:
        keys = np.array([k for k, _ in self.pmf], dtype=np.int64)
        p = np.array([float(x) for _, x in self.pmf])
        idx = rng.choice(len(keys), size=size, p=p / p.sum())
        return keys[idx]


def size_biased(pi: DegreeLaw, b: int = 0) -> DegreeLaw:
    """hat pi_b(k) = (k_{b*} + 1) pi(k + 1_{b*}) / d(b)."""
    db = pi.means[b]
    if db == 0:
        raise ValueError("d(b) = 0: size-biased law undefined")
    bs = pi.star(b)
    out = {}
    for k, p in pi.pmf:
        if k[bs] == 0:
            continue
        kk = list(k)
        kk[bs] -= 1
        out[tuple(kk)] = out.get(tuple(kk), 0) + k[bs] * p / db
    return DegreeLaw.from_dict(out, pi.color_star, pi.cap)


def _color_laws(gamma, n_colors) -> list:
    if isinstance(gamma, dict) and all(isinstance(k, int) for k in gamma):
        return [mark_law(gamma[b]) for b in range(n_colors)]
    if isinstance(gamma, (list, tuple)) and len(gamma) == n_colors and n_colors > 1:
        return [mark_law(g) for g in gamma]
    return [mark_law(gamma)] * n_colors


def expected_ugw_size(pi: DegreeLaw, h: int) -> float:
    if h == 0:
        return 1.0
    dbar = float(pi.mean_total)
    if dbar == 0:
        return 1.0
    m = max(float(size_biased(pi, b).mean_total) for b in range(pi.n_colors) if pi.means[b] > 0)
    return 1.0 + dbar * sum(m ** l for l in range(h))


def sample_ugw(gamma, pi: DegreeLaw, h: int, seed=0, max_vertices: int = 2_000_000,
               rng=None) -> RootedNeighborhood:
    """UGW(gamma, pi) truncated at depth h: root offspring ~ pi, a child whose
    parent edge has color b has offspring ~ hat pi_b, marks i.i.d. per color."""
    if expected_ugw_size(pi, h) > max_vertices:
        raise ValueError("expected population exceeds the vertex cap")
    rng = rng if rng is not None else task_rng(seed)
    nb = pi.n_colors
    laws = _color_laws(gamma, nb)
    hats = [size_biased(pi, b) if pi.means[b] > 0 else None for b in range(nb)]
    edges_u, edges_v, vals, cols = [], [], [], []
    n = 1
    frontier = np.array([0])
    frontier_law = np.array([-1])  # -1: root law pi, else parent edge color
    for _ in range(h):
        new_v, new_c = [], []
        for key in np.unique(frontier_law):
            verts = frontier[frontier_law == key]
            law = pi if key < 0 else hats[key]
            counts = law.sample(rng, len(verts))  # (len, nb)
            for b in range(nb):
                kb = counts[:, b]
                tot = int(kb.sum())
                if tot == 0:
                    continue
                parents = np.repeat(verts, kb)
                children = np.arange(n, n + tot)
                n += tot
                edges_u.append(parents)
                edges_v.append(children)
                vals.append(laws[b].sample(rng, tot))
                cols.append(np.full(tot, b))
                new_v.append(children)
                new_c.append(np.full(tot, b))
            if n > max_vertices:
                raise ValueError("population exceeds the vertex cap")
        if not new_v:
            break
        frontier = np.concatenate(new_v)
        frontier_law = np.concatenate(new_c)
    if edges_u:
        e = np.stack([np.concatenate(edges_u), np.concatenate(edges_v)], 1)
        g = MarkedGraph.from_edges(n, e, np.concatenate(vals).reshape(-1, 1), np.concatenate(cols),
                                   color_star=pi.color_star)
    else:
        g = MarkedGraph.empty(1)
    return RootedNeighborhood(g, 0, h, Quantizer(), None)


# ---------------------------------------------------------------------- PWIT


@dataclass(frozen=True)
class IntensityMeasure:
    """Either finite (total mass lam times a probability mark law) or stable:
    Lambda(dt) = scale (p 1_{t>0} + (1-p) 1_{t<0}) alpha |t|^{-alpha-1} dt,
    so that Lambda(|t| >= s) = scale s^{-alpha}."""

    kind: str
    lam: float = 0.0
    law: Any = None
    alpha: float = 1.0
    scale: float = 1.0
    p: float = 0.5

    def __post_init__(self):
        if self.kind == "finite":
            if not 0 < self.lam < math.inf:
                raise ValueError("finite intensity needs 0 < lam < inf")
            object.__setattr__(self, "law", mark_law(self.law))
        elif self.kind == "stable":
            if not (0 < self.alpha < 2 and self.scale > 0 and 0 <= self.p <= 1):
                raise ValueError("stable intensity needs alpha in (0,2), scale > 0, p in [0,1]")
        else:
            raise ValueError(f"unknown intensity kind {self.kind!r}")

    @classmethod
    def finite(cls, lam: float, law) -> "IntensityMeasure":
        return cls("finite", lam=lam, law=law)

    @classmethod
    def stable(cls, alpha: float, scale: float = 1.0, p: float = 0.5) -> "IntensityMeasure":
        return cls("stable", alpha=alpha, scale=scale, p=p)

    def mass_above(self, eps: float) -> float:
        """d_eps = Lambda(|t| >= eps)."""
        if self.kind == "stable":
            if eps <= 0:
                return math.inf
            return self.scale * eps ** (-self.alpha)
        if eps <= 0:
            return self.lam
        law = self.law
        if isinstance(law, PointMasses):
            return self.lam * sum(p for v, p in zip(law.values, law.probs) if abs(v) >= eps)
        dist = law.dist()
        return self.lam * float(dist.cdf(-eps) + dist.sf(eps) + (0 if eps > 0 else 0))

    def restricted_law(self, eps: float) -> MarkLaw:
        """Lambda_eps normalized: the law of a mark conditioned on |t| >= eps
        (point-mass intensities only; used for thinning comparisons)."""
        if self.kind != "finite" or not isinstance(self.law, PointMasses):
            raise ValueError("restricted law is only tabulated for atomic finite intensities")
        pairs = [(v, p) for v, p in zip(self.law.values, self.law.probs) if abs(v) >= eps]
        tot = sum(p for _, p in pairs)
        return PointMasses(tuple(v for v, _ in pairs), tuple(p / tot for _, p in pairs))

    def children(self, rng, eps: float) -> np.ndarray:
        """One Poisson process realization restricted to |t| >= eps, sorted by
        decreasing norm (ties in atomic intensities keep generation order)."""
        if self.kind == "stable":
            if eps <= 0:
                raise ValueError("stable intensity needs eps > 0")
            limit = self.scale * eps ** (-self.alpha)
            k = rng.poisson(limit)
            # conditional on the count, the Gamma_k are sorted uniforms on [0, limit]
            gam = np.sort(rng.random(k)) * limit
            r = (gam / self.scale) ** (-1.0 / self.alpha)
            s = np.where(rng.random(k) < self.p, 1.0, -1.0)
            return s * r
        k = rng.poisson(self.lam)
        x = self.law.sample(rng, k)
        x = x[np.abs(x) >= eps] if eps > 0 else x
        return x[np.argsort(-np.abs(x), kind="stable")]


def sample_pwit(lam: IntensityMeasure, h: int, eps: float, seed=0, max_vertices: int | None = None,
                expand_min_norm: float | None = None, rng=None) -> RootedNeighborhood:
    """PWIT(Lambda) truncated at depth h with marks |xi| >= eps.

    With max_vertices set, vertices are expanded best-first by the product of
    mark norms along their root path until the budget is spent; each expanded
    vertex receives its full child process, unexpanded vertices stay leaves.
    Children with norm below expand_min_norm are never expanded.
    """
    rng = rng if rng is not None else task_rng(seed)
    us, vs, xs = [], [], []
    n = 1
    heap = [(0.0, 0, 0)]  # (-log path weight, vertex, depth)
    budget = math.inf if max_vertices is None else max_vertices
    while heap and n < budget:
        negw, v, dv = heapq.heappop(heap)
        if dv >= h:
            continue
        x = lam.children(rng, eps)
        k = len(x)
        if k == 0:
            continue
        kids = np.arange(n, n + k)
        n += k
        us.append(np.full(k, v))
        vs.append(kids)
        xs.append(x)
        if dv + 1 < h:
            thr = eps if expand_min_norm is None else max(eps, expand_min_norm)
            for c, xv in zip(kids.tolist(), np.abs(x).tolist()):
                if xv >= thr and xv > 0:
                    heapq.heappush(heap, (negw - math.log(xv), c, dv + 1))
    if us:
        e = np.stack([np.concatenate(us), np.concatenate(vs)], 1)
        g = MarkedGraph.from_edges(n, e, np.concatenate(xs).reshape(-1, 1))
    else:
        g = MarkedGraph.empty(1)
    return RootedNeighborhood(g, 0, h, Quantizer(), None)


# ------------------------------------------------------- exact truncated law


def _multisets(items, k, tol):
    """Multisets of size k from items [(key, q)], as (counts, k! prod q^m / m!).

    Branches whose total completion mass is below tol are dropped; the
    dropped mass is returned with them (key None)."""
    n = len(items)
    suffix = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] + items[i][1]
    counts = [0] * n
    out = []

    def rec(i, r, acc):
        # acc = k! prod_{j<i} q_j^m_j / m_j!; completions carry acc * S_i^r / r!
        if r == 0:
            out.append((tuple(counts), acc))
            return
        if i == n:
            return
        total = acc * suffix[i] ** r / math.factorial(r)
        if tol and total < tol:
            out.append((None, total))
            return
        q = items[i][1]
        term = acc
        for m in range(r + 1):
            counts[i] = m
            rec(i + 1, r - m, term)
            term = term * q / (m + 1)
        counts[i] = 0

    exact = all(isinstance(q, (int, Fraction)) for _, q in items)
    rec(0, k, Fraction(math.factorial(k)) if exact else float(math.factorial(k)))
    return out


def ugw_exact_law(pi: DegreeLaw, h: int, gamma=None, mass_tol: float = 0.0):
    """Exact law of UGW(gamma, pi)_h for a single-color finite-support pi and
    a finite mark law gamma ({value: prob}; None means the point mass at 1).

    Returns (NeighborhoodLaw, dropped mass).  With mass_tol = 0 nothing is
    dropped and Fraction inputs stay exact."""
    from .graph_core import canonical_form
    from .local_law import NeighborhoodLaw

    if pi.n_colors != 1:
        raise ValueError("exact enumeration supports a single color")
    if h < 0:
        raise ValueError("depth must be nonnegative")
    marks = sorted(({1.0: Fraction(1)} if gamma is None else dict(gamma)).items(), key=lambda kv: -float(kv[1]))

    def children_law(level):
        return sorted((((x, t), qx * qt) for x, qx in marks for t, qt in level.items()),
                      key=lambda kv: -float(kv[1]))

    def offspring(law, items):
        out: dict = {}
        for (k,), pk in law.pmf:
            for counts, w in _multisets(items, k, mass_tol / float(pk) if mass_tol else 0.0):
                if counts is not None:
                    key = tuple(sorted((items[i][0] for i, c in enumerate(counts) for _ in range(c)),
                                       key=repr))
                    out[key] = out.get(key, 0) + pk * w
        return out

    law = NeighborhoodLaw(h)
    q = Quantizer()
    if h == 0:
        law.add(canonical_form(MarkedGraph.empty(1), 0, 0, q, None), Fraction(1))
        return law, 0
    # subtree types of depth r below a non-root vertex, r = 0 .. h-1
    level: dict = {(): Fraction(1)}
    if h > 1:
        hat = size_biased(pi)
        for _ in range(h - 1):
            level = offspring(hat, children_law(level))
    for kids, w in offspring(pi, children_law(level)).items():
        law.add(canonical_form(_tree_graph(kids), 0, h, q, None), w)
    return law, 1 - law.total()


def _tree_graph(kids) -> MarkedGraph:
    """Rooted tree from nested (mark, subtree) tuples."""
    us, vs, vals = [], [], []
    stack = [(0, kids)]
    n = 1
    while stack:
        v, children = stack.pop()
        for x, sub in children:
            us.append(v)
            vs.append(n)
            vals.append(float(x))
            stack.append((n, sub))
            n += 1
    if not us:
        return MarkedGraph.empty(1)
    return MarkedGraph.from_edges(n, np.stack([us, vs], 1), np.array(vals).reshape(-1, 1))
