"""Neighborhood distributions, their edge-rooted versions and the transforms
between them (edge rooting, size biasing, hat/dot)."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

import numpy as np

from .graph_core import (
    DEFAULT_CAP,
    EdgeRootedNeighborhood,
    MarkedGraph,
    Quantizer,
    RootedNeighborhood,
    canonical_form,
    edge_canonical_form,
)

Weight = Fraction | float


@dataclass
class _Law:
    depth: int
    atoms: dict = field(default_factory=dict)  # encoding -> (atom, weight)

    def add(self, atom, w: Weight):
        key = atom.encoding
        if key in self.atoms:
            a, old = self.atoms[key]
            self.atoms[key] = (a, old + w)
        else:
            self.atoms[key] = (atom, w)

    def __iter__(self):
        return iter(self.atoms.values())

    def __len__(self):
        return len(self.atoms)

    def total(self) -> Weight:
        return sum((w for _, w in self), Fraction(0))

    def weight(self, encoding: bytes) -> Weight:
        return self.atoms[encoding][1] if encoding in self.atoms else 0

    def expect(self, f: Callable) -> Weight:
        return sum((w * f(a) for a, w in self), Fraction(0))

    def pushforward(self, f: Callable) -> Counter:
        """Law of a hashable statistic of the atom."""
        out: Counter = Counter()
        for a, w in self:
            out[f(a)] += w
        return out

    def max_weight_gap(self, other: "_Law") -> float:
        keys = set(self.atoms) | set(other.atoms)
        return max((abs(float(self.weight(k)) - float(other.weight(k))) for k in keys), default=0.0)

    def to_dict(self) -> dict:
        atoms = []
        for key in sorted(self.atoms):
            a, w = self.atoms[key]
            atoms.append({"encoding": key.hex(), "weight": str(w) if isinstance(w, Fraction) else float(w),
                          "representative": a.to_dict()})
        return {"h": self.depth, "atoms": atoms}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


class NeighborhoodLaw(_Law):
    """Finite-support law on depth-h rooted neighborhoods."""

    @classmethod
    def from_dict(cls, d: dict, q: Quantizer | None = None) -> "NeighborhoodLaw":
        law = cls(int(d["h"]))
        for item in d["atoms"]:
            rep = item["representative"]
            g = MarkedGraph.from_dict(rep["graph"])
            atom = canonical_form(g, int(rep.get("root", 0)), law.depth, q)
            w = item["weight"]
            law.add(atom, Fraction(w) if isinstance(w, str) else float(w))
        return law

    @classmethod
    def from_atoms(cls, h: int, pairs: Iterable[tuple[RootedNeighborhood, Weight]]) -> "NeighborhoodLaw":
        law = cls(h)
        for a, w in pairs:
            law.add(a, w)
        return law


class EdgeRootedLaw(_Law):
    """Finite-support law on depth-h edge-rooted neighborhoods."""


def neighborhood_distribution(graph: MarkedGraph, h: int, q: Quantizer | None = None,
                              cap: int | None = DEFAULT_CAP) -> NeighborhoodLaw:
    """U(G)_h: the depth-h neighborhood of a uniform root, weights k/n."""
    if graph.n == 0:
        raise ValueError("empty graph")
    q = q or Quantizer()
    law = NeighborhoodLaw(h)
    for v in range(graph.n):
        law.add(canonical_form(graph, v, h, q, cap), Fraction(1, graph.n))
    return law


def edge_neighborhood_distribution(graph: MarkedGraph, h: int, q: Quantizer | None = None,
                                   cap: int | None = DEFAULT_CAP) -> EdgeRootedLaw:
    """vec U(G)_h: uniform over the 2|E| oriented edges."""
    if graph.m == 0:
        raise ValueError("graph has no edges")
    q = q or Quantizer()
    law = EdgeRootedLaw(h)
    w = Fraction(1, 2 * graph.m)
    for u, v in graph.edges.tolist():
        law.add(edge_canonical_form(graph, u, v, h, q, cap), w)
        law.add(edge_canonical_form(graph, v, u, h, q, cap), w)
    return law


def mean_degree(mu: NeighborhoodLaw) -> Weight:
    return mu.expect(lambda a: a.root_degree)


def root_degree_law(law: _Law) -> Counter:
    if isinstance(law, EdgeRootedLaw):
        return law.pushforward(lambda a: int(a.graph.degrees[a.o]))
    return law.pushforward(lambda a: a.root_degree)


def root_marked_degree(a: RootedNeighborhood) -> tuple:
    """Deg(o) as a sorted tuple of (mark key, multiplicity)."""
    c = Counter(a.graph.mark_key(e, out) for _, e, out in a.graph.adjacency[a.root])
    return tuple(sorted(c.items()))


def root_mark_law(nu: EdgeRootedLaw) -> Counter:
    """Law of the root-edge mark xi(o, o') under nu."""
    def key(a: EdgeRootedNeighborhood):
        for u, e, out in a.graph.adjacency[a.o]:
            if u == a.o2:
                return a.graph.mark_key(e, out)
    return nu.pushforward(key)


def edge_root(mu: NeighborhoodLaw) -> EdgeRootedLaw:
    """vec mu(A) = E_mu[sum_{v ~ o} 1((G, o, v) in A)] / E_mu deg(o)."""
    dbar = mean_degree(mu)
    if dbar == 0:
        raise ValueError("zero expected degree")
    out = EdgeRootedLaw(mu.depth)
    if mu.depth < 1:
        raise ValueError("edge rooting needs depth >= 1")
    for a, w in mu:
        for v, _, _ in a.graph.adjacency[a.root]:
            out.add(edge_canonical_form(a.graph, a.root, v, mu.depth, a.quantizer, a.cap), w / dbar)
    return out


def size_bias(mu: NeighborhoodLaw) -> NeighborhoodLaw:
    """check mu(A) = E[deg(o) 1_A] / E deg(o)."""
    dbar = mean_degree(mu)
    if dbar == 0:
        raise ValueError("zero expected degree")
    out = NeighborhoodLaw(mu.depth)
    for a, w in mu:
        if a.root_degree:
            out.add(a, w * a.root_degree / dbar)
    return out


def restrict_law(mu: NeighborhoodLaw, h: int) -> NeighborhoodLaw:
    """mu_h, recomputing canonical forms."""
    if h > mu.depth:
        raise ValueError("cannot extend a law beyond its depth")
    out = NeighborhoodLaw(h)
    for a, w in mu:
        out.add(canonical_form(a.graph, a.root, h, a.quantizer, a.cap), w)
    return out


def _isolated(template: MarkedGraph, q, cap) -> RootedNeighborhood:
    g = MarkedGraph.empty(1, template.involution)
    return canonical_form(g, 0, 0, q, cap)


def hat(nu: EdgeRootedLaw) -> tuple[NeighborhoodLaw, Weight]:
    """(hat nu, d_nu): reweight by d_nu / deg(o), restrict to depth h-1 around o."""
    inv_mean: Weight = Fraction(0)
    for a, w in nu:
        deg = int(a.graph.degrees[a.o])
        inv_mean += w * (Fraction(1, deg) if isinstance(w, Fraction) else 1.0 / deg)
    d_nu = 1 / inv_mean
    out = NeighborhoodLaw(nu.depth - 1)
    for a, w in nu:
        deg = int(a.graph.degrees[a.o])
        out.add(canonical_form(a.graph, a.o, nu.depth - 1, a.quantizer, a.cap), w * d_nu / deg)
    return out, d_nu


def hat_and_dot(nu: EdgeRootedLaw, dbar: Weight) -> NeighborhoodLaw:
    """dot nu = (1 - p) delta_0 + p hat nu with p = dbar / d_nu."""
    h_nu, d_nu = hat(nu)
    p = dbar / d_nu
    if p > 1 + 1e-12:
        raise ValueError("d_nu < dbar: dot nu is not a probability measure")
    out = NeighborhoodLaw(nu.depth - 1)
    if not isinstance(p, Fraction) and abs(1 - p) <= 1e-12:
        p = 1.0
    if p != 1:
        some = next(iter(nu))[0]
        out.add(_isolated(some.graph, some.quantizer, some.cap), 1 - p)
    for a, w in h_nu:
        out.add(a, p * w)
    return out


def unimodularity_defect(mu: NeighborhoodLaw) -> float:
    """max |vec mu(A) - vec mu(A reversed)| over edge-rooted atoms A.

    For a finite-support law this is the involution-invariance test on the
    indicator family of atoms, which spans all functions of the edge-rooted
    depth-h neighborhood.
    """
    if mean_degree(mu) == 0:
        return 0.0
    vec = edge_root(mu)
    gap = 0.0
    for a, w in vec:
        r = a.reversed()
        gap = max(gap, abs(float(w) - float(vec.weight(r.encoding))))
    return gap


class EmpiricalCounts:
    """Mergeable accumulation of sampled neighborhoods (counts, then a law)."""

    def __init__(self, depth: int):
        self.depth = depth
        self.counts: dict[bytes, list] = {}

    def add(self, atom: RootedNeighborhood, count: int = 1):
        if atom.encoding in self.counts:
            self.counts[atom.encoding][1] += count
        else:
            self.counts[atom.encoding] = [atom, count]

    def merge(self, other: "EmpiricalCounts") -> "EmpiricalCounts":
        out = EmpiricalCounts(self.depth)
        for src in (self, other):
            for a, c in src.counts.values():
                out.add(a, c)
        return out

    def law(self) -> NeighborhoodLaw:
        total = sum(c for _, c in self.counts.values())
        return NeighborhoodLaw.from_atoms(self.depth, ((a, c / total) for a, c in self.counts.values()))


def restrict_edge_law(nu: EdgeRootedLaw, h: int) -> EdgeRootedLaw:
    """nu_h for an edge-rooted law, recomputing canonical forms."""
    if not 1 <= h <= nu.depth:
        raise ValueError("edge-rooted restriction needs 1 <= h <= depth")
    out = EdgeRootedLaw(h)
    for a, w in nu:
        out.add(edge_canonical_form(a.graph, a.o, a.o2, h, a.quantizer, a.cap), w)
    return out


def _strip(g: MarkedGraph) -> MarkedGraph:
    if g.m == 0:
        return g
    zeros = np.zeros((g.m, g.k))
    return MarkedGraph.from_edges(g.n, g.edges, zeros, g.cfwd, g.involution, g.color_star,
                                  reverse_values=zeros, reverse_colors=g.cbwd)


def strip_marks(law: _Law) -> _Law:
    """Push-forward keeping only the colors of the marks (the shape law mu^0)."""
    if isinstance(law, EdgeRootedLaw):
        out = EdgeRootedLaw(law.depth)
        for a, w in law:
            out.add(edge_canonical_form(_strip(a.graph), a.o, a.o2, law.depth, a.quantizer, a.cap), w)
        return out
    out = NeighborhoodLaw(law.depth)
    for a, w in law:
        out.add(canonical_form(_strip(a.graph), a.root, law.depth, a.quantizer, a.cap), w)
    return out
