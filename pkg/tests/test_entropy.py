import json
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from conftest import small_trees
from heavytail.acceptance import truncated_poisson
from heavytail.entropy import (
    EntropyReport,
    FiniteLaw,
    I_delta_d,
    binomial_log_tail,
    conditional_shannon,
    discretized_kl_sweep,
    edge_count_rate,
    gaussian_kl,
    j_d,
    kl,
    kl_deg_poisson,
    labeled_entropy,
    log_labelings,
    quantized_masses,
    shannon,
    sigma0,
    sigma1_discrete,
    sigma_er,
    sweep_to_csv,
    _degree_vectors,
    vec_sigma0,
)
from heavytail.graph_core import MarkedGraph, canonical_form
from heavytail.limits import DegreeLaw, ugw_exact_law
from heavytail.local_law import NeighborhoodLaw, edge_root, mean_degree, neighborhood_distribution


def tree_law(edges, marks=None, h=2):
    n = max(max(e) for e in edges) + 1
    vals = np.ones((len(edges), 1)) if marks is None else np.asarray(marks, float).reshape(-1, 1)
    return neighborhood_distribution(MarkedGraph.from_edges(n, edges, vals), h)


# ------------------------------------------------------ Shannon and KL


def test_shannon_and_kl_examples():
    assert shannon(FiniteLaw({"a": 0.5, "b": 0.5})) == pytest.approx(math.log(2))
    p = FiniteLaw({"a": 0.3, "b": 0.7})
    assert kl(p, p) == 0
    assert kl(FiniteLaw({"a": 1.0}), FiniteLaw({"a": 0.5, "b": 0.5})) == pytest.approx(math.log(2))
    assert kl(FiniteLaw({"c": 1.0}), FiniteLaw({"a": 1.0})) == math.inf


def test_finite_law_validation():
    with pytest.raises(ValueError):
        FiniteLaw({"a": 0.5})
    with pytest.raises(ValueError):
        FiniteLaw({"a": 1.5, "b": -0.5})


def test_conditional_shannon():
    joint = FiniteLaw({(0, 0): 0.25, (0, 1): 0.25, (1, 0): 0.5})
    # H(X, Y) - H(X) with X the first coordinate
    assert conditional_shannon(joint, lambda a: a[0]) == pytest.approx(0.5 * math.log(2))


@given(st.lists(st.floats(0.01, 1), min_size=1, max_size=6), st.lists(st.floats(0.01, 1), min_size=6, max_size=6))
def test_kl_nonnegative_and_scipy(pw, qw):
    p = np.array(pw) / sum(pw)
    q = np.array(qw[:len(pw)]) / sum(qw[:len(pw)])
    P = FiniteLaw(dict(enumerate(p)))
    Q = FiniteLaw(dict(enumerate(q)))
    assert kl(P, Q) == pytest.approx(float(stats.entropy(p, q)), abs=1e-12)
    assert kl(P, Q) >= -1e-15


# ------------------------------------------------------ degree vs Poisson


def test_kl_deg_examples():
    pois = {k: stats.poisson.pmf(k, 2.0) for k in range(60)}
    z = sum(pois.values())
    r = kl_deg_poisson(FiniteLaw({k: v / z for k, v in pois.items()}), 2.0)
    assert r.mean_match and abs(r.value) < 1e-9
    r = kl_deg_poisson(FiniteLaw({2: 1.0}), 2.0)
    assert r.value == pytest.approx(2 - math.log(2), abs=1e-12)
    assert r.value == pytest.approx(1.30685, abs=1e-5)
    r = kl_deg_poisson(FiniteLaw({0: 1.0}), 2.0)
    assert not r.mean_match and r.value == pytest.approx(2.0)


def test_kl_deg_closed_form_matches_direct():
    rng = np.random.default_rng(0)
    for _ in range(50):
        nb = int(rng.integers(1, 3))
        size = int(rng.integers(1, 7))
        support = {tuple(int(x) for x in rng.integers(0, 6, size=nb)) for _ in range(size)}
        w = rng.random(len(support))
        D = FiniteLaw(dict(zip(support, w / w.sum())))
        d = np.atleast_1d(D.mean())
        if np.any(d == 0):
            continue
        r = kl_deg_poisson(D, d)
        # direct oracle from scipy
        direct = sum(p * (math.log(p) - sum(stats.poisson.logpmf(k, db) for k, db in zip(key, d)))
                     for key, p in D.atoms.items())
        assert r.mean_match
        assert r.closed_form == pytest.approx(direct, abs=1e-8)


# -------------------------------------------------------------- labelings


def test_log_labelings_examples():
    star = MarkedGraph.from_edges(4, [(0, 1), (0, 2), (0, 3)])
    assert log_labelings(canonical_form(star, 0, 1)) == pytest.approx(0.0)
    mixed = MarkedGraph.from_edges(4, [(0, 1), (0, 2), (0, 3)], [[1.0], [2.0], [3.0]])
    assert log_labelings(canonical_form(mixed, 0, 1)) == pytest.approx(math.log(6))


@given(small_trees(max_n=6, marks=(1.0, 2.0)))
def test_labeled_entropy_dominates_unlabeled(g):
    h_lab, h_unl = labeled_entropy(neighborhood_distribution(g, 2))
    assert h_lab >= h_unl - 1e-12


# ----------------------------------------------------------------- sigma0


@given(small_trees(max_n=9))
def test_sigma0_depth_one_is_degree_kl(g):
    mu = neighborhood_distribution(g, 1)
    rep = sigma0(mu)
    if rep.value == math.inf:
        return
    D, _ = _degree_vectors(mu)
    assert rep.value == pytest.approx(kl_deg_poisson(D, np.atleast_1d(D.mean())).value, abs=1e-12)


def test_sigma0_triangle_is_infinite():
    mu = neighborhood_distribution(MarkedGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)]), 2)
    rep = sigma0(mu)
    assert rep.value == math.inf and rep.flags["reason"].startswith("C2")


def test_sigma0_not_invariant_is_infinite():
    path = MarkedGraph.from_edges(3, [(0, 1), (1, 2)])
    mu = NeighborhoodLaw.from_atoms(2, [(canonical_form(path, 0, 2), Fraction(1))])
    rep = sigma0(mu)
    assert rep.value == math.inf and not rep.flags["C1_invariant"]


def test_sigma0_wrong_mean_is_infinite():
    rep = sigma0(tree_law([(0, 1), (1, 2)]), d=5.0)
    assert rep.value == math.inf and rep.flags["reason"].startswith("C4")


def test_sigma0_small_at_truncated_ugw():
    law, _ = ugw_exact_law(truncated_poisson(1.0, 6), 2)
    rep = sigma0(law)
    assert 0 <= rep.value <= 0.02
    assert rep.value == pytest.approx(sum(rep.terms.values()), abs=1e-10)


@pytest.mark.slow
def test_sigma0_decreases_with_the_cap():
    values = []
    for cap, tol in ((6, 0.0), (10, 1e-12), (14, 1e-12)):
        law, _ = ugw_exact_law(truncated_poisson(1.0, cap), 2, mass_tol=tol)
        tot = float(law.total())
        law = NeighborhoodLaw.from_atoms(2, ((a, float(w) / tot) for a, w in law))
        values.append(sigma0(law).value)
    slack = 1e-7  # mass pruned from the two largest enumerations
    assert values[0] >= values[1] - slack >= values[2] - 2 * slack
    assert abs(values[2]) <= 1e-6


def test_report_json():
    rep = sigma0(tree_law([(0, 1), (1, 2)]))
    d = json.loads(rep.to_json())
    assert set(d) == {"value", "terms", "flags", "extra"}
    assert json.loads(EntropyReport.infinite("x", {}).to_json())["value"] == "inf"


# ------------------------------------------------------------ vec sigma0


@given(small_trees(max_n=9), st.integers(2, 3))
def test_sigma0_dominates_vec_sigma0(g, h):
    if g.m == 0:
        return
    mu = neighborhood_distribution(g, h)
    D, alphabet = _degree_vectors(mu)
    d = dict(zip(alphabet, np.atleast_1d(D.mean())))
    s = sigma0(mu).value
    v = vec_sigma0(edge_root(mu), d=d).value
    assert s >= v - 1e-9


def test_vec_sigma0_vanishes_at_ugw():
    pi = DegreeLaw.from_dict({k: Fraction(1, 4) for k in range(4)})
    for h in (2, 3):
        law, _ = ugw_exact_law(pi, h)
        # d must be passed: nu alone only determines d_nu = dbar / P(deg > 0)
        assert vec_sigma0(edge_root(law), d=1.5).value == pytest.approx(sigma0(law).value, abs=1e-9)


def test_vec_sigma0_depth_one():
    rep = vec_sigma0(edge_root(tree_law([(0, 1), (1, 2), (1, 3)], h=1)), d=1.5)
    assert rep.value == 0.0 and rep.extra["literal_depth_1_value"] == pytest.approx(1.5)


def test_vec_sigma0_root_mark_violation():
    mu = tree_law([(0, 1), (1, 2)], marks=[1.0, 2.0])
    nu = edge_root(mu)
    rep = vec_sigma0(nu, d={k: 0.5 for k in _mark_keys(nu)}, h=2)
    rep_bad = vec_sigma0(nu, d=_skewed(nu), h=2)
    assert rep.value < math.inf
    assert rep_bad.value == math.inf and "C4'" in rep_bad.flags["reason"]


def _mark_keys(nu):
    from heavytail.local_law import root_mark_law

    return sorted(root_mark_law(nu), key=repr)


def _skewed(nu):
    keys = _mark_keys(nu)
    return {k: (1.0 if i == 0 else 0.25) for i, k in enumerate(keys)}


# ---------------------------------------------------------------- sigma1


def test_sigma1_iid_marks_is_zero():
    # marks are i.i.d. uniform given the shape: all 4 marked paths equally likely
    atoms = []
    for a in (1.0, 2.0):
        for b in (1.0, 2.0):
            g = MarkedGraph.from_edges(3, [(0, 1), (1, 2)], [[a], [b]])
            for r in range(3):
                atoms.append((canonical_form(g, r, 2), Fraction(1, 12)))
    mu = NeighborhoodLaw.from_atoms(2, atoms)
    assert sigma1_discrete(mu, {1.0: 0.5, 2.0: 0.5}) == pytest.approx(0.0, abs=1e-12)


def test_sigma1_single_edge():
    mu = tree_law([(0, 1)], marks=[1.0], h=1)
    assert sigma1_discrete(mu, {1.0: 0.5, 2.0: 0.5}) == pytest.approx(math.log(2) / 2)


def test_sigma1_mark_outside_support():
    mu = tree_law([(0, 1)], marks=[3.0], h=1)
    assert sigma1_discrete(mu, {1.0: 0.5, 2.0: 0.5}) == math.inf


# ---------------------------------------------------- mean degree terms


def test_j_d_examples():
    assert j_d(2.0, 2.0) == 0
    assert j_d(1.0, 2.0) == pytest.approx(math.log(2) + 0.5)
    assert edge_count_rate(2.0, 2.0) == 0


def test_edge_count_rate_is_binomial_tail_rate():
    assert binomial_log_tail(4000, 2.0, 3.0) == pytest.approx(edge_count_rate(3.0, 2.0), rel=0.05)


def test_I_delta_d_examples():
    gamma = {0: {1: 0.25, 2: 0.75}}
    d = {0: 2.0}
    assert I_delta_d({(0, 1): 0.5, (0, 2): 1.5}, d, gamma) == pytest.approx(0.0, abs=1e-15)
    assert I_delta_d({(0, 1): 1.0, (0, 2): 0.5}, d, gamma) == math.inf  # wrong marginal
    v = I_delta_d({(0, 1): 1.0, (0, 2): 1.0}, d, gamma)
    assert v == pytest.approx(0.5 * (math.log(2) + math.log(2 / 3)))
    swap = lambda z: (z[0], -z[1])  # noqa: E731
    assert I_delta_d({(0, 1): 1.0, (0, -1): 1.0}, d, {0: {1: 0.5, -1: 0.5}}, swap) == pytest.approx(0.0)
    assert I_delta_d({(0, 1): 1.5, (0, -1): 0.5}, d, {0: {1: 0.5, -1: 0.5}}, swap) == math.inf


def test_sigma_er_examples():
    law, _ = ugw_exact_law(truncated_poisson(1.0, 6), 2)
    rep = sigma_er(law, {1.0: 1}, 1.0)
    assert 0 <= rep.value <= 0.02 and "j_d_displayed" in rep.extra
    # mean degree 1 but degrees not Poisson
    bad, _ = ugw_exact_law(DegreeLaw.from_dict({0: Fraction(1, 2), 2: Fraction(1, 2)}), 2)
    assert mean_degree(bad) == 1
    assert sigma_er(bad, {1.0: 1}, 1.0).value > 0.05


# --------------------------------------------------------- discretization


def mp_normal_mass(m, lo, hi):
    with mpmath.workdps(40):
        return float(mpmath.ncdf(hi, mu=m) - mpmath.ncdf(lo, mu=m))


def test_quantized_masses_match_high_precision():
    delta, kappa = 0.25, 2.0
    masses = quantized_masses({"gaussian": [1.0, 1.0]}, delta, kappa)
    assert masses[0] == pytest.approx(mp_normal_mass(1.0, -delta, delta), abs=1e-14)
    for l in range(1, 8):
        assert masses[l] == pytest.approx(mp_normal_mass(1.0, l * delta, (l + 1) * delta), abs=1e-14)
        assert masses[-l] == pytest.approx(mp_normal_mass(1.0, -(l + 1) * delta, -l * delta), abs=1e-14)
    omega = 1 - mp_normal_mass(1.0, -kappa, kappa)
    assert masses["omega"] == pytest.approx(omega, abs=1e-14)
    assert sum(masses.values()) == pytest.approx(1, abs=1e-12)


def test_point_mass_quantization_conventions():
    m = quantized_masses({"point_masses": [[0.5, 0.5], [-0.5, 0.5]]}, 0.5, 2.0)
    assert m[1] == 0.5 and m[-1] == 0.5 and m[0] == 0


def test_sweep_equal_laws_is_zero():
    rows = discretized_kl_sweep({"gaussian": [0, 1]}, {"gaussian": [0, 1]}, 8.0, [2.0 ** -k for k in range(1, 5)])
    assert all(v == 0 for _, v in rows)


def test_sweep_converges_to_gaussian_kl():
    deltas = [2.0 ** -k for k in range(1, 7)]
    rows = discretized_kl_sweep({"gaussian": [0, 1]}, {"gaussian": [1, 1]}, 8.0, deltas)
    vals = [v for _, v in rows]
    target = gaussian_kl(0, 1, 1, 1)
    assert target == 0.5
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    assert all(v <= target + 1e-12 for v in vals)
    assert abs(vals[-1] - target) <= 0.02
    assert sweep_to_csv(rows).startswith("delta,kl\n")


@given(st.floats(-2, 2), st.floats(0.3, 3), st.floats(-2, 2), st.floats(0.3, 3))
def test_sweep_monotone_and_bounded(m1, s1, m2, s2):
    rows = discretized_kl_sweep({"gaussian": [m1, s1]}, {"gaussian": [m2, s2]}, 4.0,
                                [2.0 ** -k for k in range(0, 5)])
    vals = [v for _, v in rows]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))
    assert vals[-1] <= gaussian_kl(m1, s1, m2, s2) + 1e-9


def test_sweep_infinite_when_q_bin_empty():
    rows = discretized_kl_sweep({"uniform": [0, 1]}, {"uniform": [2, 3]}, 4.0, [0.5])
    assert rows[0][1] == math.inf
