"""Acceptance experiments.  Each criterion returns a CriterionResult with the
measured metric, its tolerance and the wall-clock time; a criterion passes
when the metric is within tolerance and the run stays inside its time
budget."""

from __future__ import annotations

import math
import time
from functools import lru_cache
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable

import networkx as nx
import numpy as np
from networkx.generators.atlas import graph_atlas_g
from scipy import stats
from scipy.stats import chi2_contingency

from .entropy import (
    _degree_vectors,
    binomial_log_tail,
    discretized_kl_sweep,
    edge_count_rate,
    gaussian_kl,
    sigma0,
    sigma_er,
    vec_sigma0,
)
from .graph_core import Involution, MarkedGraph, RootedNeighborhood, epsilon_truncate, from_matrix
from .limits import DegreeLaw, IntensityMeasure, sample_pwit, sample_ugw, ugw_exact_law
from .local_law import (
    edge_root,
    hat_and_dot,
    mean_degree,
    neighborhood_distribution,
    restrict_law,
    root_degree_law,
    root_mark_law,
    root_marked_degree,
)
from .models import EnsembleConfig, sample_configuration_model, sample_levy, sample_sparse_wigner, task_rng
from .spectral import (
    esd,
    kolmogorov_distance,
    limit_esd_estimate,
    mixture,
    moments,
    rank_inequality_check,
    root_spectral_measure,
    surrogate_bl,
    trace_moment,
    w1_distance,
)
from .traffics import (
    TestGraph,
    brute_force_rooted,
    mobius_forward,
    mobius_inverse,
    quotient,
    rooted_traffic_eval,
    set_partitions,
    traffic_eval,
    traffic_freeness_check,
    free_product_sample,
)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    metric: float
    tolerance: str
    runtime: float
    budget: float
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.number:2d} {self.name}: metric={self.metric:.6g} "
                f"({self.tolerance}), runtime={self.runtime:.1f}s (budget {self.budget:.0f}s)")

    def to_dict(self) -> dict:
        return asdict(self)


def _result(number, name, ok, metric, tolerance, t0, budget, **detail) -> CriterionResult:
    runtime = time.perf_counter() - t0
    return CriterionResult(number, name, bool(ok and runtime < budget), float(metric), tolerance,
                           runtime, budget, detail)


@lru_cache(maxsize=None)
def _atlas(max_vertices: int, max_edges: int | None = None) -> tuple[nx.Graph, ...]:
    out = []
    for g in graph_atlas_g():
        if 0 < g.number_of_nodes() <= max_vertices and nx.is_connected(g):
            if max_edges is None or g.number_of_edges() <= max_edges:
                out.append(g)
    return tuple(out)


# ----------------------------------------------------------------------- 1


def _random_hermitian_graph(rng, n: int) -> MarkedGraph:
    mask = np.triu(rng.random((n, n)) < 0.6, 1)
    vals = rng.random((n, n)) * np.exp(2j * np.pi * rng.random((n, n)))
    A = np.where(mask, vals, 0)
    A = A + A.conj().T
    if not mask.any():
        A[0, 1] = A[1, 0] = 0.5
    return from_matrix(A)


def mobius_test_graphs(rng) -> list[TestGraph]:
    """Connected simple graphs with <= 4 vertices at every root, plus a
    variant with a self-loop and one with a doubled edge; orientations and
    stars are drawn at random."""
    out = []
    for g in _atlas(4):
        n = g.number_of_nodes()
        base = list(g.edges())
        for root in range(n):
            variants = [base]
            variants.append(base + [(int(rng.integers(n)),) * 2])
            if base:
                variants.append(base + [base[int(rng.integers(len(base)))]])
            for es in variants:
                edges = []
                for v, w in es:
                    if rng.random() < 0.5:
                        v, w = w, v
                    edges.append((v, w, 0, bool(rng.random() < 0.5)))
                out.append(TestGraph(n, tuple(edges), root))
    return out


def criterion_1(seed: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    rng = task_rng(seed)
    worst_forward = worst_round = worst_inj = 0.0
    checked = 0
    for _ in range(50):
        g = _random_hermitian_graph(rng, int(rng.integers(2, 9)))
        root = int(rng.integers(g.n))
        for H in mobius_test_graphs(rng):
            tau0, tau = {}, {}
            for pi in set_partitions(H.n_vertices):
                Hq = quotient(H, pi)
                tau0[pi] = brute_force_rooted(g, root, Hq, injective=True)
                tau[pi] = rooted_traffic_eval(g, Hq, root=root)
            fwd = mobius_forward(tau0)
            back = mobius_inverse(fwd)
            worst_forward = max(worst_forward, max(abs(fwd[p] - tau[p]) for p in tau))
            worst_round = max(worst_round, max(abs(back[p] - tau0[p]) for p in tau0))
            bt = rooted_traffic_eval(g, H, injective=True, root=root)
            worst_inj = max(worst_inj, abs(bt - tau0[tuple(range(H.n_vertices))]))
            checked += 1
    metric = max(worst_forward, worst_round, worst_inj)
    return _result(1, "Moebius exactness", metric <= 1e-12, metric, "abs err <= 1e-12", t0, 30,
                   test_graph_checks=checked, forward_err=worst_forward, roundtrip_err=worst_round,
                   backtracking_err=worst_inj)


# ----------------------------------------------------------------------- 2


def criterion_2(seed: int = 2) -> CriterionResult:
    """Relative errors are scaled by the absolute moment int |x|^k d(esd),
    which keeps the vanishing odd moments well defined."""
    t0 = time.perf_counter()
    Y = sample_sparse_wigner(EnsembleConfig("sparse_wigner", 200, d=3.0, seed=seed))
    L = esd(Y)
    dense = Y.toarray()
    worst = 0.0
    rows = []
    for k in range(1, 7):
        tau = traffic_eval(dense, TestGraph.cycle(k)).real
        tr = trace_moment(Y, k)
        mo = moments(L, k)
        scale = float(np.sum(L.weights * np.abs(L.values) ** k))
        err = max(abs(tau - tr), abs(tau - mo), abs(tr - mo)) / scale
        worst = max(worst, err)
        rows.append((k, tau, tr, mo))
    return _result(2, "traffic/trace consistency", worst <= 1e-8, worst, "rel err <= 1e-8", t0, 10,
                   moments=rows)


# ----------------------------------------------------------------------- 3


def criterion_3(seed: int = 0) -> CriterionResult:
    t0 = time.perf_counter()
    n = 2000
    Y = sample_configuration_model(EnsembleConfig("config_model", n, degrees=[3] * n, seed=seed))
    E = esd(Y, check=False)
    tree = sample_ugw(1.0, DegreeLaw.point(3), 12, seed=seed)
    T = root_spectral_measure(tree)
    mom = {k: (moments(E, k), moments(T, k)) for k in (2, 4, 6, 8)}
    mom_err = max(abs(a - b) for a, b in mom.values())
    bl = surrogate_bl(E, T)
    ok = mom_err <= 0.05 and bl <= 0.05
    return _result(3, "regular-tree limit", ok, bl, "moments abs err <= 0.05 and surrogate_bl <= 0.05",
                   t0, 300, moment_err=mom_err, moments=mom, ks=kolmogorov_distance(E, T), w1=w1_distance(E, T))


# ----------------------------------------------------------------------- 4


def criterion_4(seed: int = 11, jobs: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    E = mixture([esd(sample_sparse_wigner(EnsembleConfig("sparse_wigner", 2000, d=2.0, seed=s)), check=False)
                 for s in range(5)])
    L = limit_esd_estimate("ugw", {"gamma": 1.0, "pi": DegreeLaw.poisson(2.0)}, 9, None, 200,
                           seed=seed, jobs=jobs)
    bl = surrogate_bl(E, L)
    return _result(4, "ER/UGW cross-validation", bl <= 0.1, bl, "surrogate_bl <= 0.1", t0, 600,
                   ks=kolmogorov_distance(E, L), w1=w1_distance(E, L))


# ----------------------------------------------------------------------- 5

PWIT_BUDGET = 2000


def criterion_5(seed: int = 5, jobs: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    E = mixture([esd(sample_levy(EnsembleConfig("levy", 1000, alpha=1.25, seed=s)), check=False)
                 for s in range(5)])
    Ec, clipped_esd = E.clip(-10, 10)
    params = {"intensity": IntensityMeasure.stable(1.25), "eps": 0.05, "max_vertices": PWIT_BUDGET}
    L = limit_esd_estimate("pwit", params, 6, 0.1, 300, seed=seed, jobs=jobs)
    Lc, clipped_limit = L.clip(-10, 10)
    ks = kolmogorov_distance(Ec, Lc)
    return _result(5, "Levy/PWIT cross-validation", ks <= 0.15, ks, "KS <= 0.15", t0, 900,
                   clipped_mass_esd=clipped_esd, clipped_mass_limit=clipped_limit, w1=w1_distance(Ec, Lc))


# ----------------------------------------------------------------------- 6


def _random_marked_graph(rng) -> MarkedGraph:
    n = int(rng.integers(2, 13))
    g = nx.gnp_random_graph(n, float(rng.uniform(0.15, 0.6)), seed=int(rng.integers(2 ** 31)))
    if g.number_of_edges() == 0:
        g.add_edge(0, 1)
    e = np.array(list(g.edges()))
    return MarkedGraph.from_edges(n, e, rng.integers(1, 3, size=len(e)).astype(float).reshape(-1, 1))


def edge_rooting_discrepancy(mu) -> float:
    """Largest weight gap over the degree identity, the root-mark law and
    the dot(vec mu) = mu_{h-1} roundtrip."""
    dbar = mean_degree(mu)
    vec = edge_root(mu)
    gap = 0.0
    deg_mu, deg_vec = root_degree_law(mu), root_degree_law(vec)
    for k in set(deg_mu) | set(deg_vec):
        gap = max(gap, abs(float(deg_vec.get(k, 0) - k * deg_mu.get(k, 0) / dbar)))
    d = {}
    for a, w in mu:
        for key, m in root_marked_degree(a):
            d[key] = d.get(key, 0) + m * w
    marks = root_mark_law(vec)
    for key in set(d) | set(marks):
        gap = max(gap, abs(float(marks.get(key, 0) - d.get(key, 0) / dbar)))
    dot = hat_and_dot(vec, dbar)
    target = restrict_law(mu, mu.depth - 1)
    for enc in set(dot.atoms) | set(target.atoms):
        gap = max(gap, abs(float(dot.weight(enc) - target.weight(enc))))
    return gap


def criterion_6(seed: int = 6) -> CriterionResult:
    t0 = time.perf_counter()
    rng = task_rng(seed)
    worst = 0.0
    for i in range(200):
        g = _random_marked_graph(rng)
        mu = neighborhood_distribution(g, 2 + i % 2)
        worst = max(worst, edge_rooting_discrepancy(mu))
    return _result(6, "edge-rooting identities", worst <= 1e-12, worst, "weight gap <= 1e-12", t0, 20)


# ----------------------------------------------------------------------- 7


def truncated_poisson(d: float, cap: int) -> DegreeLaw:
    p = {k: stats.poisson.pmf(k, d) for k in range(cap + 1)}
    z = sum(p.values())
    return DegreeLaw.from_dict({k: v / z for k, v in p.items()})


def criterion_7() -> CriterionResult:
    t0 = time.perf_counter()
    law, _ = ugw_exact_law(truncated_poisson(1.0, 6), 2)
    at_min = sigma_er(law, {1.0: 1}, 1.0).value
    perturbed_law, _ = ugw_exact_law(DegreeLaw.from_dict({0: Fraction(1, 2), 2: Fraction(1, 2)}), 2)
    perturbed = sigma_er(perturbed_law, {1.0: 1}, 1.0).value
    ok = 0 <= at_min <= 0.02 and perturbed >= 0.05
    return _result(7, "entropy at the minimizer", ok, at_min, "minimizer in [0, 0.02], perturbed >= 0.05",
                   t0, 30, perturbed=perturbed)


# ----------------------------------------------------------------------- 8


def random_tree_laws(rng, count: int = 100):
    for _ in range(count):
        n = int(rng.integers(2, 14))
        T = nx.random_labeled_tree(n, seed=int(rng.integers(2 ** 31)))
        e = np.array(list(T.edges())).reshape(-1, 2)
        g = MarkedGraph.from_edges(n, e, rng.integers(1, 4, size=len(e)).astype(float).reshape(-1, 1))
        yield neighborhood_distribution(g, int(rng.integers(1, 4)))


def entropy_slack(mu) -> float:
    D, alphabet = _degree_vectors(mu)
    d = dict(zip(alphabet, np.atleast_1d(D.mean())))
    return sigma0(mu).value - vec_sigma0(edge_root(mu), d=d).value


def criterion_8(seed: int = 8) -> CriterionResult:
    t0 = time.perf_counter()
    slack = min(entropy_slack(mu) for mu in random_tree_laws(task_rng(seed)))
    return _result(8, "entropy inequality", slack >= -1e-9, slack, "min slack >= -1e-9", t0, 60)


# ----------------------------------------------------------------------- 9


def criterion_9() -> CriterionResult:
    t0 = time.perf_counter()
    deltas = [2.0 ** -j for j in range(1, 7)]
    rows = discretized_kl_sweep({"gaussian": [0, 1]}, {"gaussian": [1, 1]}, 8.0, deltas)
    vals = [v for _, v in rows]
    monotone = all(b >= a for a, b in zip(vals, vals[1:]))
    gap = abs(vals[-1] - gaussian_kl(0, 1, 1, 1))
    return _result(9, "discretized KL convergence", monotone and gap <= 0.02, gap,
                   "monotone and |final - 0.5| <= 0.02", t0, 5, sweep=rows, monotone=monotone)


# ---------------------------------------------------------------------- 10


def criterion_10() -> CriterionResult:
    t0 = time.perf_counter()
    exact = binomial_log_tail(2000, 2.0, 3.0)
    oracle = edge_count_rate(3.0, 2.0)
    rel = abs(exact - oracle) / oracle
    return _result(10, "edge-count tail rate", rel <= 0.05, rel, "rel err <= 5%", t0, 10,
                   exact=exact, oracle=oracle)


# ---------------------------------------------------------------------- 11


def single_edge_law(value: complex, h: int) -> RootedNeighborhood:
    g = MarkedGraph.from_edges(2, [(0, 1)], [[value.real, value.imag]], involution=Involution.conjugation(1))
    return RootedNeighborhood(g, 0, h, None, None)


def bicolored_test_graphs(rng, max_vertices: int = 6, max_edges: int = 6):
    """Every connected simple graph with <= max_vertices vertices and
    <= max_edges edges, every 2-coloring of its edges and every root, with a
    random orientation and star pattern."""
    for g in _atlas(max_vertices, max_edges):
        n = g.number_of_nodes()
        base = list(g.edges())
        for colors in range(2 ** len(base)):
            for root in range(n):
                edges = []
                for i, (v, w) in enumerate(base):
                    if rng.random() < 0.5:
                        v, w = w, v
                    edges.append((v, w, (colors >> i) & 1, bool(rng.random() < 0.5)))
                yield TestGraph(n, tuple(edges), root)


def criterion_11(seed: int = 11) -> CriterionResult:
    t0 = time.perf_counter()
    h = 6
    mu1, mu2 = single_edge_law(2 + 1j, h), single_edge_law(3 - 0.5j, h)
    g = free_product_sample(lambda r: mu1, lambda r: mu2, h, seed)
    rng = task_rng(seed)
    checked = failures = zero_cases = 0
    worst = 0.0
    for H in bicolored_test_graphs(rng):
        lhs, rhs, equal = traffic_freeness_check(g, H, mu1, mu2, 1)
        checked += 1
        failures += not equal
        worst = max(worst, abs(lhs - rhs))
        zero_cases += rhs == 0 and lhs == 0
    return _result(11, "traffic freeness", failures == 0, worst, "exact equality (rtol 1e-12)", t0, 60,
                   checked=checked, failures=failures, zero_cases=zero_cases)


# ---------------------------------------------------------------------- 12

THINNING_EPS = 1.5


def _root_statistic(graph: MarkedGraph) -> tuple[int, int]:
    """(root degree capped at 4, sign of the largest root mark)."""
    adj = graph.adjacency[0] if graph.n else []
    if not adj:
        return (0, 0)
    lead = max(graph.mark_value(e, out)[0] for _, e, out in adj)
    return (min(len(adj), 4), int(np.sign(lead)))


def criterion_12(seed: int = 12, n_samples: int = 10_000) -> CriterionResult:
    t0 = time.perf_counter()
    lam = IntensityMeasure.finite(2.0, {"point_masses": [[-2, .25], [-1, .25], [1, .25], [2, .25]]})
    rng = task_rng(seed, 0)
    thinned = [_root_statistic(epsilon_truncate(sample_pwit(lam, 1, 0.0, rng=rng).graph, THINNING_EPS))
               for _ in range(n_samples)]
    rng = task_rng(seed, 1)
    pi = DegreeLaw.poisson(lam.mass_above(THINNING_EPS))
    gamma = lam.restricted_law(THINNING_EPS)
    direct = [_root_statistic(sample_ugw(gamma, pi, 1, rng=rng).graph) for _ in range(n_samples)]
    keys = sorted(set(thinned) | set(direct))
    table = np.array([[thinned.count(k) for k in keys], [direct.count(k) for k in keys]])
    p = float(chi2_contingency(table).pvalue)
    return _result(12, "PWIT thinning", p > 0.01, p, "chi2 p > 0.01", t0, 60, cells=[list(k) for k in keys],
                   table=table.tolist())


# ---------------------------------------------------------------------- 13


def criterion_13(seed: int = 13) -> CriterionResult:
    t0 = time.perf_counter()
    rng = task_rng(seed)
    n = 300
    violations = 0
    worst = -math.inf
    for _ in range(100):
        X = rng.normal(size=(n, n))
        A = (X + X.T) / math.sqrt(2 * n)
        P = np.zeros((n, n))
        for _ in range(int(rng.integers(0, 3))):
            v = rng.normal(size=n)
            P += rng.normal() * np.outer(v, v) / n
        ks, bound, ok = rank_inequality_check(A, A + P)
        violations += not ok
        worst = max(worst, ks - bound)
    return _result(13, "rank inequality", violations == 0, violations, "zero violations", t0, 30,
                   max_ks_minus_bound=worst)


# ------------------------------------------------------------------ suites

CRITERIA: dict[int, Callable[[], CriterionResult]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
    6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10,
    11: criterion_11, 12: criterion_12, 13: criterion_13,
}

SUITES = {
    "mobius": [1],
    "traffic": [1, 2, 11],
    "local": [6],
    "entropy": [7, 8, 9, 10],
    "limits": [3, 4, 5, 12],
    "spectral": [2, 13],
    "fast": [1, 2, 6, 7, 8, 9, 10, 11, 12, 13],
    "all": list(CRITERIA),
}


def run_suite(name: str = "all", report: Callable[[CriterionResult], None] | None = None) -> list[CriterionResult]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    out = []
    for i in SUITES[name]:
        r = CRITERIA[i]()
        if report:
            report(r)
        out.append(r)
    return out
