"""Shannon and relative entropies, the combinatorial and mark entropies of
finite-support neighborhood laws, the Erdos-Renyi entropy and the
discretized-KL oracle.

Entropies of neighborhood laws are taken on uniformly labeled graphs, where
every vertex orders its children uniformly.  For a tree g the number of
distinct labelings is L(g) = prod_v c_v! / |Aut(g)|, so
H(labeled) = H(unlabeled) + E ln L(g).  Unlabeled values are reported on the
side.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Hashable, Iterable, Sequence

import numpy as np
from scipy import stats

from .graph_core import Quantizer, _Local
from .local_law import (
    EdgeRootedLaw,
    NeighborhoodLaw,
    _Law,
    edge_root,
    hat_and_dot,
    mean_degree,
    restrict_edge_law,
    restrict_law,
    root_mark_law,
    size_bias,
    strip_marks,
    unimodularity_defect,
)
from .models import Pareto, PointMasses, mark_law

INVARIANCE_TOL = 1e-9


# ----------------------------------------------------------- finite laws


@dataclass
class FiniteLaw:
    """Finitely supported law: atom -> weight."""

    atoms: dict = field(default_factory=dict)

    def __post_init__(self):
        if any(w < 0 for w in self.atoms.values()):
            raise ValueError("negative weight")
        if self.atoms and abs(float(sum(self.atoms.values())) - 1) > 1e-9:
            raise ValueError("weights must sum to 1")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Hashable, Any]]) -> "FiniteLaw":
        c: dict = {}
        for a, w in pairs:
            c[a] = c.get(a, 0) + w
        return cls(c)

    @classmethod
    def from_samples(cls, xs: Iterable[Hashable]) -> "FiniteLaw":
        c = Counter(xs)
        n = sum(c.values())
        return cls({a: k / n for a, k in c.items()})

    def pushforward(self, f: Callable) -> "FiniteLaw":
        return FiniteLaw.from_pairs((f(a), w) for a, w in self.atoms.items())

    def mean(self, f: Callable = lambda a: a) -> Any:
        return sum(float(w) * np.asarray(f(a), dtype=float) for a, w in self.atoms.items())


def _weights(p) -> list[float]:
    if isinstance(p, FiniteLaw):
        return [float(w) for w in p.atoms.values()]
    if isinstance(p, _Law):
        return [float(w) for _, w in p]
    if isinstance(p, dict):
        return [float(w) for w in p.values()]
    return [float(w) for w in p]


def shannon(p) -> float:
    """-sum p ln p (natural log)."""
    return float(-sum(w * math.log(w) for w in _weights(p) if w > 0))


def conditional_shannon(joint: FiniteLaw, projection: Callable) -> float:
    """H(X | f(X)) = H(X) - H(f(X)) for a deterministic projection f."""
    return shannon(joint) - shannon(joint.pushforward(projection))


def kl(p: FiniteLaw, q: FiniteLaw) -> float:
    """D_KL(p | q); inf iff p charges an atom of q-mass 0."""
    out = 0.0
    for a, w in p.atoms.items():
        w = float(w)
        if w == 0:
            continue
        qa = float(q.atoms.get(a, 0))
        if qa == 0:
            return math.inf
        out += w * math.log(w / qa)
    return out


# ------------------------------------------------- degree versus Poisson


def _log_poisson(d: Sequence[float], k: Sequence[int]) -> float:
    out = 0.0
    for db, kb in zip(d, k):
        if db == 0:
            if kb:
                return -math.inf
            continue
        out += -db + kb * math.log(db) - math.lgamma(kb + 1)
    return out


@dataclass(frozen=True)
class DegreeKL:
    value: float
    closed_form: float
    direct: float
    mean_match: bool


def kl_deg_poisson(D: FiniteLaw, d: Sequence[float] | float, tol: float = 1e-9) -> DegreeKL:
    """D_KL(D | N_d) for D on Z_+^B and N_d a product of Poisson(d(b)).

    Closed form -H(D) + dbar - sum_b d(b) ln d(b) + sum_b E ln D(b)!, valid
    when E D = d; the direct sum is always computed and used otherwise."""
    d = np.atleast_1d(np.asarray(d, dtype=float))
    law = D.pushforward(lambda k: (int(k),) if np.isscalar(k) else tuple(int(x) for x in k))
    mean = law.mean()
    match = bool(np.all(np.abs(np.atleast_1d(mean) - d) <= tol * max(1.0, float(d.sum()))))
    direct = 0.0
    for k, w in law.atoms.items():
        w = float(w)
        if w == 0:
            continue
        lp = _log_poisson(d, k)
        if lp == -math.inf:
            direct = math.inf
            break
        direct += w * (math.log(w) - lp)
    closed = (-shannon(law) + float(d.sum()) - sum(x * math.log(x) for x in d if x > 0)
              + sum(float(w) * sum(math.lgamma(x + 1) for x in k) for k, w in law.atoms.items()))
    return DegreeKL(closed if match else direct, closed, direct, match)


# --------------------------------------------------- labeled entropies


def _log_labelings(local: _Local, root: int, parent: int = -1) -> float:
    """ln of the number of child orderings modulo automorphisms,
    sum_v ln(c_v! / prod of multiplicities of identical child subtrees)."""
    code = local.tree_codes(root, parent)
    total = 0.0
    stack = [(root, parent)]
    while stack:
        v, p = stack.pop()
        keys = []
        for u, a, b in local.adj[v]:
            if u != p:
                keys.append(f"[{a}|{b}]{code[u]}")
                stack.append((u, v))
        total += math.lgamma(len(keys) + 1) - sum(math.lgamma(m + 1) for m in Counter(keys).values())
    return total


def log_labelings(atom) -> float:
    """ln L(g) for a rooted or edge-rooted tree atom."""
    local = _Local(atom.graph, atom.quantizer)
    if hasattr(atom, "o2"):
        return _log_labelings(local, atom.o, atom.o2) + _log_labelings(local, atom.o2, atom.o)
    return _log_labelings(local, atom.root)


def labeled_entropy(law: _Law) -> tuple[float, float]:
    """(H of the uniformly labeled graph, H of the unlabeled graph)."""
    h_unl = shannon(law)
    return h_unl + sum(float(w) * log_labelings(a) for a, w in law), h_unl


def _conditional(law: _Law, law1: _Law) -> tuple[float, float]:
    h, hu = labeled_entropy(law)
    h1, hu1 = labeled_entropy(law1)
    return h - h1, hu - hu1


# -------------------------------------------------------------- reports


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return _jsonable(x.item())
    return x


@dataclass
class EntropyReport:
    """value = sum(terms) when finite; flags record admissibility checks and
    extra holds side information that is not part of the value."""

    value: float
    terms: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @classmethod
    def infinite(cls, reason: str, flags: dict, **extra) -> "EntropyReport":
        return cls(math.inf, {}, dict(flags, reason=reason), extra)

    def to_dict(self) -> dict:
        return _jsonable({"value": self.value, "terms": self.terms, "flags": self.flags,
                          "extra": self.extra})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _sum_terms(terms: dict) -> float:
    return float(sum(terms.values()))


def _degree_vectors(law: NeighborhoodLaw, alphabet=None):
    """Law of the marked root degree as vectors over the mark alphabet."""
    per = []
    keys = set()
    for a, w in law:
        c = Counter(a.graph.mark_key(e, out) for _, e, out in a.graph.adjacency[a.root])
        keys |= set(c)
        per.append((c, w))
    alphabet = sorted(keys, key=repr) if alphabet is None else list(alphabet)
    D = FiniteLaw.from_pairs((tuple(c.get(b, 0) for b in alphabet), w) for c, w in per)
    return D, alphabet


def _resolve_d(d, alphabet, means):
    if d is None:
        return np.asarray(means, dtype=float)
    if isinstance(d, dict):
        extra = set(d) - set(alphabet)
        if any(d[b] for b in extra):
            raise ValueError("d charges marks absent from the law")
        return np.array([float(d.get(b, 0.0)) for b in alphabet])
    d = np.atleast_1d(np.asarray(d, dtype=float))
    if len(alphabet) <= 1 and d.size == 1:
        return d if alphabet else np.zeros(0)
    if d.size != len(alphabet):
        raise ValueError("d does not match the mark alphabet")
    return d


def sigma0(mu: NeighborhoodLaw, d=None, h: int | None = None, tol: float = INVARIANCE_TOL) -> EntropyReport:
    """Sigma^0_d(mu, h) = -H(G|G_1) + dbar/2 H(vecG|vecG_1) + D_KL(Deg(o)|N_d)."""
    h = mu.depth if h is None else h
    if h < 1:
        raise ValueError("sigma0 needs h >= 1")
    if h < mu.depth:
        mu = restrict_law(mu, h)
    elif h > mu.depth:
        raise ValueError("law is shallower than h")
    flags: dict = {}
    flags["C2_trees"] = all(a.is_tree for a, _ in mu)
    if not flags["C2_trees"]:
        return EntropyReport.infinite("C2: not supported on trees", flags)
    D, alphabet = _degree_vectors(mu)
    means = np.atleast_1d(D.mean()) if alphabet else np.zeros(0)
    dv = _resolve_d(d, alphabet, means)
    flags["C4_mean_degree"] = bool(np.all(np.abs(means - dv) <= tol * max(1.0, float(dv.sum()))))
    defect = unimodularity_defect(mu)
    flags["C1_invariance_defect"] = defect
    flags["C1_invariant"] = defect <= tol
    if not flags["C1_invariant"]:
        return EntropyReport.infinite("C1: not invariant", flags)
    if not flags["C4_mean_degree"]:
        return EntropyReport.infinite("C4: mean marked degree differs from d", flags)
    dbar = float(dv.sum())
    hg, hg_unl = _conditional(mu, restrict_law(mu, 1))
    if dbar > 0:
        vec = edge_root(mu)
        hv, hv_unl = _conditional(vec, restrict_edge_law(vec, 1))
    else:
        hv = hv_unl = 0.0
    kld = kl_deg_poisson(D, dv).value if alphabet else 0.0
    terms = {"-H(G|G_1)": -hg, "dbar/2*H(vecG|vecG_1)": dbar / 2 * hv, "D_KL(Deg|N_d)": kld}
    extra = {"dbar": dbar, "alphabet": [repr(b) for b in alphabet],
             "unlabeled_value": -hg_unl + dbar / 2 * hv_unl + kld}
    return EntropyReport(_sum_terms(terms), terms, flags, extra)


def _edge_defect(nu: EdgeRootedLaw) -> float:
    gap = 0.0
    for a, w in nu:
        gap = max(gap, abs(float(w) - float(nu.weight(a.reversed().encoding))))
    return gap


def vec_sigma0(nu: EdgeRootedLaw, d=None, h: int | None = None, tol: float = INVARIANCE_TOL) -> EntropyReport:
    """Edge entropy vec Sigma^0_d(nu, h) = inf {Sigma^0_d(mu, h) : vec mu = nu}.

    With G ~ dot nu, checkG ~ its size bias (depth h-1) and labeled entropies,
    the infimum is attained when the children subtrees are conditionally
    independent given the depth h-1 ball, which gives

        -dbar/2 H(vecG|vecG_1) + dbar H(checkG|checkG_1)
        + dbar [H(checkG_1) - H(vecG_1)] - H(G|G_1) + D_KL(Deg_G(o)|N_d).

    The bracket is the depth-one correction to the displayed formula; the
    displayed value (without it) is reported in extra.  At h = 1 the
    infimum is 0 for every admissible nu (the literal expression would give
    dbar)."""
    h = nu.depth if h is None else h
    if h < nu.depth:
        nu = restrict_edge_law(nu, h)
    elif h > nu.depth:
        raise ValueError("law is shallower than h")
    flags: dict = {}
    flags["C2_trees"] = all(a.is_tree for a, _ in nu)
    if not flags["C2_trees"]:
        return EntropyReport.infinite("C2: not supported on trees", flags)
    defect = _edge_defect(nu)
    flags["C1_invariance_defect"] = defect
    flags["C1_invariant"] = defect <= tol
    if not flags["C1_invariant"]:
        return EntropyReport.infinite("C1: not invariant", flags)
    marks = root_mark_law(nu)
    alphabet = sorted(marks, key=repr)
    d_nu = 1.0 / sum(float(w) / int(a.graph.degrees[a.o]) for a, w in nu)
    if d is None:
        dv = np.array([d_nu * float(marks[b]) for b in alphabet])
    else:
        dv = _resolve_d(d, alphabet, None)
    dbar = float(dv.sum())
    rm = np.array([float(marks[b]) for b in alphabet])
    flags["C4_root_mark_law"] = bool(dbar > 0 and np.all(np.abs(rm - dv / dbar) <= tol))
    flags["C4_d_nu_ge_dbar"] = bool(h < 2 or d_nu >= dbar * (1 - tol))
    if not (flags["C4_root_mark_law"] and flags["C4_d_nu_ge_dbar"]):
        return EntropyReport.infinite("C4': root mark law or d_nu condition fails", flags, d_nu=d_nu)
    if h == 1:
        return EntropyReport(0.0, {"infimum_at_depth_1": 0.0}, flags,
                             {"dbar": dbar, "d_nu": d_nu, "literal_depth_1_value": dbar})
    nu1 = restrict_edge_law(nu, 1)
    hv, _ = _conditional(nu, nu1)
    dot = hat_and_dot(nu, dbar)
    chk = size_bias(dot)
    chk1 = restrict_law(chk, 1)
    hc, _ = _conditional(chk, chk1)
    hg, _ = _conditional(dot, restrict_law(dot, 1))
    correction = labeled_entropy(chk1)[0] - labeled_entropy(nu1)[0]
    D, _ = _degree_vectors(dot, alphabet)
    kld = kl_deg_poisson(D, dv).value
    terms = {"-dbar/2*H(vecG|vecG_1)": -dbar / 2 * hv, "dbar*H(checkG|checkG_1)": dbar * hc,
             "dbar*[H(checkG_1)-H(vecG_1)]": dbar * correction, "-H(G|G_1)": -hg,
             "D_KL(Deg|N_d)": kld}
    extra = {"dbar": dbar, "d_nu": d_nu,
             "displayed_formula_value": _sum_terms(terms) - dbar * correction}
    return EntropyReport(_sum_terms(terms), terms, flags, extra)


# ------------------------------------------------------------ mark part


def _gamma_table(gamma, q: Quantizer) -> dict:
    table: dict = {}
    for x, p in dict(gamma).items():
        lat, om = q.lattice(np.atleast_1d(np.asarray(x, dtype=float)))
        key = "omega" if om[0] else tuple(lat[0].tolist())
        table[key] = table.get(key, 0.0) + float(p)
    return table


def _log_gamma_sum(law: _Law, table: dict) -> float:
    """E sum_e ln gamma(x_e); -inf if some mark is outside supp gamma."""
    out = 0.0
    for a, w in law:
        g = a.graph
        if g.m == 0:
            continue
        q = a.quantizer or Quantizer()
        lat, om = q.lattice(g.fwd)
        for e in range(g.m):
            key = "omega" if (om[e] or g.omega[e]) else tuple(lat[e].tolist())
            p = table.get(key, 0.0)
            if p == 0:
                return -math.inf
            out += float(w) * math.log(p)
    return out


def _kl_marks(law: _Law, table: dict) -> float:
    """D_KL(G | G_gamma) = -E sum_e ln gamma(x_e) - [H(G) - H(G^0)], labeled."""
    lg = _log_gamma_sum(law, table)
    if lg == -math.inf:
        return math.inf
    return -lg - (labeled_entropy(law)[0] - labeled_entropy(strip_marks(law))[0])


def sigma1_discrete(mu: NeighborhoodLaw, gamma, h: int | None = None) -> float:
    """Sigma^1 = D_KL(G|G_gamma) - dbar/2 D_KL(vecG|vecG_gamma) for a finite
    mark law gamma ({value: prob}); inf if a mark is outside supp gamma."""
    h = mu.depth if h is None else h
    if h < mu.depth:
        mu = restrict_law(mu, h)
    some = next(iter(mu))[0]
    table = _gamma_table(gamma, some.quantizer or Quantizer())
    kg = _kl_marks(mu, table)
    if kg == math.inf:
        return math.inf
    dbar = float(mean_degree(mu))
    if dbar == 0:
        return kg
    kv = _kl_marks(edge_root(mu), table)
    if kv == math.inf:
        return math.inf
    return kg - dbar / 2 * kv


# ---------------------------------------------------- mean degree terms


def j_d(delta: float, d: float) -> float:
    """1/2 (d ln(d/delta) + d - delta), as displayed for the mean degree."""
    if delta == 0:
        return math.inf
    return 0.5 * (d * math.log(d / delta) + d - delta)


def edge_count_rate(delta: float, d: float) -> float:
    """Rate of the average degree 2|E|/n of G(n, d/n): 1/2 (delta ln(delta/d) - delta + d)."""
    if delta == 0:
        return 0.5 * d
    return 0.5 * (delta * math.log(delta / d) - delta + d)


def binomial_log_tail(n: int, d: float, delta: float) -> float:
    """-(1/n) ln P(2|E|/n >= delta) with |E| ~ Bin(n(n-1)/2, d/n), exact."""
    N = n * (n - 1) // 2
    k = math.ceil(delta * n / 2)
    return -float(stats.binom.logsf(k - 1, N, d / n)) / n


def I_delta_d(dd: dict, d: dict, gamma_delta: dict, star: Callable | None = None,
              tol: float = 1e-12) -> float:
    """I^delta_d(dd) = 1/2 sum_z dd(z) ln(dd(z) / (d(b) gamma^delta_b(l))) for
    z = (b, l), provided dd is *-symmetric with color marginals d; else inf."""
    star = star or (lambda z: z)
    for z, v in dd.items():
        if abs(v - dd.get(star(z), 0.0)) > tol:
            return math.inf
    for b, db in d.items():
        tot = sum(v for (bb, _), v in dd.items() if bb == b)
        if abs(tot - db) > tol * max(1.0, db):
            return math.inf
    out = 0.0
    for (b, l), v in dd.items():
        if v == 0:
            continue
        ref = d.get(b, 0.0) * gamma_delta.get(b, {}).get(l, 0.0)
        if ref == 0:
            return math.inf
        out += v * math.log(v / ref)
    return 0.5 * out


def sigma_er(mu: NeighborhoodLaw, gamma, d: float, h: int | None = None,
             tol: float = INVARIANCE_TOL) -> EntropyReport:
    """Sigma^ER_{gamma,d}(mu, h) = Sigma^0_delta(mu^0) + Sigma^1_{gamma,delta}(mu)
    + rate(delta), delta = E deg(o).  The rate is the edge-count tail rate;
    the displayed j_d(delta) is reported in extra."""
    h = mu.depth if h is None else h
    if h < mu.depth:
        mu = restrict_law(mu, h)
    delta = float(mean_degree(mu))
    s0 = sigma0(strip_marks(mu), None, h, tol)
    extra = {"delta": delta, "j_d_displayed": j_d(delta, d), "sigma0": s0.to_dict()}
    if s0.value == math.inf:
        return EntropyReport.infinite(s0.flags.get("reason", "sigma0 infinite"), s0.flags, **extra)
    s1 = sigma1_discrete(mu, gamma, h)
    flags = dict(s0.flags, C5_marks_in_support=s1 != math.inf)
    if s1 == math.inf:
        return EntropyReport.infinite("C5: mark outside the support of gamma", flags, **extra)
    terms = {"Sigma0_delta": s0.value, "Sigma1_gamma_delta": s1,
             "edge_count_rate": edge_count_rate(delta, d)}
    return EntropyReport(_sum_terms(terms), terms, flags, extra)


# ------------------------------------------------------ discretized KL


def _interval_mass(law, lo: float, lo_closed: bool, hi: float, hi_closed: bool) -> float:
    """P(X in interval) with the given end conventions."""
    if isinstance(law, PointMasses):
        tot = 0.0
        for v, p in zip(law.values, law.probs):
            if (v > lo or (lo_closed and v == lo)) and (v < hi or (hi_closed and v == hi)):
                tot += p
        return tot
    if isinstance(law, Pareto):
        def sf(x):  # P(X > x), continuous
            if x >= 0:
                return law.p * min(1.0, (law.t0 / x) ** law.alpha) if x > 0 else law.p
            return 1.0 - (1 - law.p) * min(1.0, (law.t0 / -x) ** law.alpha)
        return max(sf(lo) - sf(hi), 0.0)
    dist = law.dist()
    if hi <= 0:
        return max(float(dist.cdf(hi) - dist.cdf(lo)), 0.0)
    return max(float(dist.sf(lo) - dist.sf(hi)), 0.0)


def quantized_masses(law, delta: float, kappa: float) -> dict:
    """Masses of the quantization cells of a one-dimensional law: l = 0 is
    (-delta, delta), l > 0 is [l delta, (l+1) delta), l < 0 is
    ((l-1) delta, l delta], and omega is |x| >= kappa'."""
    law = mark_law(law)
    kp = Quantizer(delta, kappa).kappa_prime
    N = int(round(kp / delta))
    if hasattr(law, "dist"):
        # continuous: cell ends do not matter; use cdf below 0 and sf above
        dist = law.dist()
        j = np.arange(1, N) * delta
        top = np.minimum(j + delta, kp)
        pos = dist.sf(j) - dist.sf(top)
        neg = dist.cdf(-j) - dist.cdf(-top)
        out = {0: float(dist.cdf(delta) - dist.cdf(-delta))}
        for l in range(1, N):
            out[l] = max(float(pos[l - 1]), 0.0)
            out[-l] = max(float(neg[l - 1]), 0.0)
        out["omega"] = float(dist.cdf(-kp) + dist.sf(kp))
        return out
    out = {0: _interval_mass(law, -delta, False, delta, False)}
    for l in range(1, N):
        hi = min((l + 1) * delta, kp)
        out[l] = _interval_mass(law, l * delta, True, hi, False)
        out[-l] = _interval_mass(law, -hi, False, -l * delta, True)
    out["omega"] = _interval_mass(law, -math.inf, False, -kp, True) + _interval_mass(law, kp, True, math.inf, False)
    return out


def discretized_kl_sweep(p, q, kappa: float, deltas: Sequence[float]) -> list[tuple[float, float]]:
    """[(delta, D_KL({X}_delta | {Y}_delta))] over the given meshes."""
    out = []
    for delta in deltas:
        pm = quantized_masses(p, delta, kappa)
        qm = quantized_masses(q, delta, kappa)
        out.append((float(delta), kl(_raw(pm), _raw(qm))))
    return out


def _raw(masses: dict) -> FiniteLaw:
    # bin masses sum to 1 only up to rounding, so skip validation
    law = FiniteLaw.__new__(FiniteLaw)
    law.atoms = masses
    return law


def gaussian_kl(m1: float, s1: float, m2: float, s2: float) -> float:
    """Closed-form D_KL(N(m1, s1^2) | N(m2, s2^2))."""
    return math.log(s2 / s1) + (s1 ** 2 + (m1 - m2) ** 2) / (2 * s2 ** 2) - 0.5


def sweep_to_csv(rows) -> str:
    return "delta,kl\n" + "".join(f"{d!r},{v!r}\n" for d, v in rows)
