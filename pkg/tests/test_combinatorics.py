import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import hermite_e

from volterra_lrd.combinatorics import (
    MomentVector,
    Partition,
    TermIndex,
    a_pi_table,
    appell_family,
    c_coeff,
    d_coeff,
    enumerate_partitions,
    enumerate_terms,
    offdiag_sum_mobius,
    power_expansion,
    s_prime_sum,
)
from volterra_lrd.errors import ArgumentError, MomentUnavailable
from volterra_lrd.mc import noise_moments


def _bell_triangle(n):
    row, out = [1], [1]
    for _ in range(n - 1):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
        out.append(row[0])
    return out


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


@pytest.mark.parametrize("k", range(1, 11))
def test_partition_count_is_bell(k):
    assert len(enumerate_partitions(k)) == _bell_triangle(11)[k]


@pytest.mark.parametrize("k", range(1, 7))
def test_partitions_match_recursive_enumeration(k):
    ours = {p.blocks for p in enumerate_partitions(k)}
    ref = {tuple(sorted(tuple(sorted(b)) for b in part)) for part in _set_partitions(list(range(1, k + 1)))}
    assert ours == ref


def test_small_partitions():
    assert [str(p) for p in enumerate_partitions(2)] == ["{{1},{2}}", "{{1,2}}"]
    assert len(enumerate_partitions(3)) == 5
    with pytest.raises(ArgumentError):
        enumerate_partitions(0)
    with pytest.raises(ArgumentError):
        enumerate_partitions(11)


def test_partition_lift_example():
    pi = Partition.parse("{{1,5},{2},{3,4}}")
    assert pi in enumerate_partitions(5)
    assert pi.lift((7, 8, 9)) == (7, 8, 9, 9, 7)
    assert Partition.from_blocks([[4, 3], [5, 1], [2]]) == pi


def test_appell_general_mean():
    mu1, mu2 = Fraction(1, 3), Fraction(5, 2)
    fam = appell_family([1, mu1, mu2], 2)
    # A_2 = x^2 - 2 mu1 x + 2 mu1^2 - mu2
    assert fam.poly(2) == (2 * mu1 ** 2 - mu2, -2 * mu1, 1)


def test_appell_centered():
    fam = appell_family([1, 0, Fraction(7, 3)], 2)
    assert fam.poly(1) == (0, 1)
    assert fam.poly(2) == (Fraction(-7, 3), 0, 1)


def test_gaussian_appell_is_hermite():
    fam = appell_family(noise_moments("gaussian", 10), 10)
    for p in range(11):
        want = hermite_e.herme2poly([0] * p + [1])
        assert [float(c) for c in fam.poly(p)] == pytest.approx(list(want), abs=0)


def _random_moments(seed, K):
    # moments of a random discrete law with rational atoms, so they are exact and valid
    rng = np.random.default_rng(seed)
    atoms = [Fraction(int(v), 4) for v in rng.integers(-8, 9, 4)]
    weights = [Fraction(int(v)) for v in rng.integers(1, 5, 4)]
    tot = sum(weights)
    return [sum(w * a ** p for a, w in zip(atoms, weights)) / tot for p in range(K + 1)]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), K=st.integers(1, 8))
def test_appell_identities(seed, K):
    mu = _random_moments(seed, K)
    fam = appell_family(mu, K)
    for p in range(1, K + 1):
        A, prev = fam.poly(p), fam.poly(p - 1)
        # derivative identity
        assert [j * A[j] for j in range(1, len(A))] == [p * c for c in prev]
        # centering
        assert sum(A[j] * mu[j] for j in range(len(A))) == 0
    for p in range(K + 1):
        # reconstruction of x^p
        w = power_expansion(p, fam)
        coeffs = [Fraction(0)] * (p + 1)
        for j, wj in enumerate(w):
            for q, c in enumerate(fam.poly(j)):
                coeffs[q] += wj * c
        assert coeffs == [0] * p + [1]


def test_power_expansion_examples():
    fam = appell_family(noise_moments("gaussian", 4), 4)
    assert power_expansion(0, fam) == [1]
    assert power_expansion(2, fam) == [1, 0, 1]
    # x^4 = He4 + 6 He2 + 3
    assert power_expansion(4, fam) == [3, 0, 6, 0, 1]
    with pytest.raises(ArgumentError):
        power_expansion(5, fam)


def test_missing_moments_fail_loudly():
    mv = MomentVector([1, 0, 1])
    with pytest.raises(MomentUnavailable):
        mv[3]
    with pytest.raises(MomentUnavailable):
        appell_family(mv, 3)


def test_c_coeff_examples():
    mv = noise_moments("gaussian", 6)
    assert c_coeff((2, 2, 1, 1), (0, 0, 1, 1), mv) == 1
    assert c_coeff((3,), (2,), mv) == 0
    assert c_coeff((3,), (1,), mv) == 3


def _pairings(k, r):
    count = 0
    for pairs in itertools.combinations(itertools.combinations(range(k), 2), r):
        if len({x for p in pairs for x in p}) == 2 * r:
            count += 1
    return count


def test_d_coeff_examples():
    assert [d_coeff(5, r) for r in range(3)] == [1, 10, 15]
    assert d_coeff(4, 2) == 3
    for k in range(11):
        assert d_coeff(k, 0) == 1
    with pytest.raises(ArgumentError):
        d_coeff(5, 3)


@pytest.mark.parametrize("k", range(1, 9))
def test_d_coeff_counts_pairings(k):
    for r in range(k // 2 + 1):
        assert d_coeff(k, r) == _pairings(k, r)


def test_terms_for_k2():
    terms = enumerate_terms(2, noise_moments("gaussian", 6))
    got = {(str(t.partition), t.j, t.regime) for t in terms}
    assert got == {("{{1},{2}}", (1, 1), "LRD"), ("{{1,2}}", (2,), "SRD")}


@pytest.mark.parametrize("law", ["gaussian", "rademacher", "uniform", "exponential"])
@pytest.mark.parametrize("k", [2, 3, 4, 5])
def test_term_invariants(law, k):
    mv = noise_moments(law, 2 * k + 2)
    for t in enumerate_terms(k, mv):
        assert any(t.j)
        assert t.c != 0
        assert t.c == c_coeff(t.partition.sizes, t.j, mv)
        # pruning: a block with order 0 must have size >= 2
        assert all(p >= 2 for p, j in zip(t.partition.sizes, t.j) if j == 0)
        r = sum(1 for p, j in zip(t.partition.sizes, t.j) if j == 0)
        assert t.r == r
        assert (t.regime == "LRD") == (t.m + r == k)
        assert (t.m + r == k) != (t.m + r < k)


def test_long_memory_terms_for_k5():
    terms = [t for t in enumerate_terms(5, noise_moments("gaussian", 12)) if t.long_memory]
    by_r = {}
    for t in terms:
        # pairings with singletons elsewhere: blocks of size <= 2, order 0 exactly on doubletons
        assert all(p <= 2 for p in t.partition.sizes)
        assert all((j == 0) == (p == 2) for p, j in zip(t.partition.sizes, t.j))
        by_r[t.r] = by_r.get(t.r, 0) + 1
    assert by_r == {0: 1, 1: 10, 2: 15}


def test_term_index_rejects_bad_orders():
    with pytest.raises(ArgumentError):
        TermIndex(Partition.parse("{{1,2}}"), (3,))


def _naive_sprime(values, pi, T, free):
    M = values.shape[0]
    rest = [t for t in range(pi.m) if t not in T]
    total = 0.0
    for cand in itertools.product(range(1, M + 1), repeat=len(T)):
        if len(set(cand)) < len(cand) or set(cand) & set(free):
            continue
        full = [0] * pi.m
        for t, v in zip(T, cand):
            full[t] = v
        for t, v in zip(rest, free):
            full[t] = v
        total += values[tuple(full[b] - 1 for b in pi.labels)]
    return total


def test_s_prime_example_from_lift():
    rng = np.random.default_rng(5)
    M = 5
    a = rng.normal(size=(M,) * 5)
    pi = Partition.parse("{{1,5},{2},{3,4}}")
    i = 3
    want = sum(
        a[i1 - 1, i - 1, i3 - 1, i3 - 1, i1 - 1]
        for i1 in range(1, M + 1)
        for i3 in range(1, M + 1)
        if i1 != i and i3 != i and i1 != i3
    )
    assert s_prime_sum(a, pi, T=[0, 2], free=[i]) == pytest.approx(want, rel=1e-13)


def test_s_prime_identity_and_small_example():
    a = np.arange(1.0, 28.0).reshape(3, 3, 3)
    pi = Partition.parse("{{1},{2,3}}")
    assert s_prime_sum(a, pi, T=[], free=[2, 3]) == a[1, 2, 2]
    assert s_prime_sum(np.ones((3, 3)), Partition.parse("{{1,2}}"), T=[0]) == 3


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), k=st.integers(2, 4), M=st.integers(2, 6))
def test_s_prime_full_matches_naive_and_mobius(seed, k, M):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(M,) * k)
    a = sum(np.transpose(a, p) for p in itertools.permutations(range(k))) / math.factorial(k)
    parts = enumerate_partitions(k)
    pi = parts[rng.integers(len(parts))]
    T = list(range(pi.m))
    got = s_prime_sum(a, pi, T)
    assert got == pytest.approx(_naive_sprime(a, pi, T, []), rel=1e-10, abs=1e-10)
    assert got == pytest.approx(offdiag_sum_mobius(a_pi_table(a, pi)), rel=1e-9, abs=1e-9)


def test_s_prime_partial_against_naive():
    rng = np.random.default_rng(11)
    a = rng.normal(size=(6,) * 4)
    pi = Partition.parse("{{1,2},{3},{4}}")
    assert s_prime_sum(a, pi, [0, 2], [4]) == pytest.approx(_naive_sprime(a, pi, [0, 2], [4]), rel=1e-12)
