import math
from fractions import Fraction
from itertools import permutations

import numpy as np
import pytest
from scipy import stats

from caprecap.errors import (
    Exhausted,
    MissingCovariate,
    SampleTooLarge,
    SizeMismatch,
    UnknownStratum,
)
from caprecap.estimators import adjusted_ht, naive_lp
from caprecap.population import Network, Population, PowerLawSpec, assign_strata, power_law_population
from caprecap.sampling import (
    SampleMembership,
    SamplingScheme,
    SchemeKind,
    bootstrap_subsample,
    cross_tabulate,
    sample_degree_biased,
    sample_uniform,
    scheme_sample,
    simulate_rds,
    stratum_capture,
    successive_sample,
    weights_for,
)


def exact_inclusion(weights, n):
    """Inclusion probabilities of successive sampling by enumerating ordered draws."""
    weights = [Fraction(w) for w in weights]
    total = sum(weights)
    inc = [Fraction(0)] * len(weights)
    for seq in permutations(range(len(weights)), n):
        p, left = Fraction(1), total
        for i in seq:
            p *= weights[i] / left
            left -= weights[i]
        for i in seq:
            inc[i] += p
    return inc


def binomial_ok(count, reps, p, sigmas=3.0):
    return abs(count / reps - p) <= sigmas * math.sqrt(p * (1 - p) / reps) + 1e-15


def test_uniform_exhaustive():
    pop = Population(np.ones(7, dtype=int))
    assert sample_uniform(pop, 7, 0).flags.all()


def test_uniform_sizes_and_errors():
    pop = Population(np.ones(2402, dtype=int))
    assert sample_uniform(pop, 250, 1).size == 250
    with pytest.raises(SampleTooLarge):
        sample_uniform(pop, 2403, 1)


def test_uniform_two_individuals():
    pop = Population([1, 1])
    rng = np.random.default_rng(3)
    hits = sum(sample_uniform(pop, 1, rng).flags[0] for _ in range(10 ** 4))
    assert binomial_ok(hits, 10 ** 4, 0.5)


def test_degree_biased_single_draw():
    pop = Population([1, 1, 2])
    rng = np.random.default_rng(5)
    reps = 20000
    counts = np.zeros(3)
    for _ in range(reps):
        counts += sample_degree_biased(pop, 1, rng).flags
    for c, p in zip(counts, (0.25, 0.25, 0.5)):
        assert binomial_ok(c, reps, p)


def test_exact_inclusion_oracle_small():
    inc = exact_inclusion([1, 2, 3, 4, 5], 2)
    assert sum(inc) == 2
    assert inc == [Fraction(1297, 8580), Fraction(673, 2310), Fraction(2091, 5005),
                   Fraction(719, 1365), Fraction(7363, 12012)]


def test_degree_biased_matches_enumeration():
    pop = Population([1, 2, 3, 4, 5])
    inc = [float(x) for x in exact_inclusion(pop.degrees.tolist(), 2)]
    rng = np.random.default_rng(8)
    reps = 20000
    counts = np.zeros(5)
    for _ in range(reps):
        counts += sample_degree_biased(pop, 2, rng).flags
    for c, p in zip(counts, inc):
        assert binomial_ok(c, reps, p)


def test_degree_biased_draw_order_law():
    # first draw is exactly proportional to weight
    w = np.array([1.0, 2.0, 3.0, 4.0])
    rng = np.random.default_rng(9)
    firsts = np.bincount([successive_sample(w, 2, rng)[0] for _ in range(20000)], minlength=4)
    for c, p in zip(firsts, w / w.sum()):
        assert binomial_ok(c, 20000, p)


def test_degree_biased_constant_degrees_is_uniform():
    pop = Population(np.full(6, 4))
    rng = np.random.default_rng(12)
    reps = 10 ** 4
    subsets = {}
    for _ in range(reps):
        key = tuple(sample_degree_biased(pop, 2, rng).members)
        subsets[key] = subsets.get(key, 0) + 1
    assert len(subsets) == 15
    _, pvalue = stats.chisquare(list(subsets.values()))
    assert pvalue > 0.001


def test_no_duplicates_within_stage():
    pop = power_law_population(300, PowerLawSpec(2.2, 1, 299), 4, with_network=False)
    idx = successive_sample(pop.degrees, 150, 1)
    assert len(set(idx.tolist())) == 150


# --- RDS ---------------------------------------------------------------------


def complete_graph(n):
    return Network([[j for j in range(n) if j != i] for i in range(n)])


def path_graph(n):
    return Network.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def test_rds_complete_graph():
    membership, forest = simulate_rds(complete_graph(4), 4, 3, 1)
    assert membership.flags.all()
    assert forest.n_trees == 1
    assert sum(r.recruiter_id is None for r in forest.recruits) == 1


def test_rds_path_waves():
    membership, forest = simulate_rds(path_graph(4), 4, 3, 2, seed_node=0)
    assert [r.recruit_id for r in forest.recruits] == [0, 1, 2, 3]
    assert [r.wave for r in forest.recruits] == [0, 1, 2, 3]
    assert [r.recruiter_id for r in forest.recruits] == [None, 0, 1, 2]


def test_rds_recruit_cap_and_consistency():
    pop = power_law_population(2500, PowerLawSpec(2.0, 3, 2499), 21)
    for seed in range(20):
        membership, forest = simulate_rds(pop.network, 100, 3, seed)
        assert membership.size == 100
        ids = [r.recruit_id for r in forest.recruits]
        assert len(ids) == len(set(ids)) == 100
        assert max(forest.recruit_counts().values()) <= 3
        wave = {r.recruit_id: r.wave for r in forest.recruits}
        seen = set()
        for r in forest.recruits:
            if r.recruiter_id is not None:
                assert r.recruiter_id in seen
                assert r.recruit_id in pop.network.adjacency[r.recruiter_id]
                assert wave[r.recruit_id] == wave[r.recruiter_id] + 1
            seen.add(r.recruit_id)


def test_rds_restart_on_disconnected():
    net = Network.from_edges(6, [(0, 1), (2, 3), (4, 5)])
    membership, forest = simulate_rds(net, 6, 3, 0)
    assert membership.flags.all()
    assert forest.n_trees == 3


def test_rds_exhausted():
    net = Network.from_edges(12, [])
    with pytest.raises(Exhausted):
        simulate_rds(net, 12, 3, 0, max_restarts=10)
    # star with cap 1: the hub recruits once, leaves need restarts
    star = Network.from_edges(20, [(0, i) for i in range(1, 20)])
    with pytest.raises(Exhausted):
        simulate_rds(star, 20, 1, 0, seed_node=0, max_restarts=3)


def test_rds_determinism():
    pop = power_law_population(500, PowerLawSpec(2.5, 3, 499), 2)
    a = simulate_rds(pop.network, 80, 3, 77)
    b = simulate_rds(pop.network, 80, 3, 77)
    assert np.array_equal(a[0].flags, b[0].flags)
    assert a[1].recruits == b[1].recruits


def test_rds_degree_bias():
    # per-degree sampling frequency increases with degree on a heavy-tailed network
    pop = power_law_population(2500, PowerLawSpec(2.5, 3, 2499), 5)
    counts = np.zeros(pop.size)
    reps = 1000
    for seed in range(reps):
        m, _ = simulate_rds(pop.network, 100, 3, seed)
        counts += m.flags
    deg = pop.network.degrees()
    levels = np.unique(deg)
    freq = np.array([counts[deg == d].mean() / reps for d in levels])
    rho, pvalue = stats.spearmanr(levels, freq)
    assert rho > 0 and pvalue < 0.0027


# --- stratum, bootstrap, cross-tabulation, weights ------------------------------


@pytest.fixture
def stratified():
    pop = Population(np.arange(1, 2403) % 20 + 1)
    return assign_strata(pop, [47, 484, 660, 496, 715], 0,
                         ["0-19", "20-29", "30-39", "40-49", "50+"])


def test_stratum_capture(stratified):
    assert stratum_capture(stratified, "20-29").size == 484
    with pytest.raises(UnknownStratum):
        stratum_capture(stratified, "60+")
    with pytest.raises(UnknownStratum):
        stratum_capture(Population([1, 2]), "x")
    whole = assign_strata(Population([1, 2, 3]), [3], 0, ["all"])
    assert stratum_capture(whole, "all").flags.all()


def test_bootstrap_subsample():
    base = SampleMembership.from_indices(2402, np.arange(0, 2402, 2)[:927])
    sub = bootstrap_subsample(base, 200, 4)
    assert sub.size == 200 and not (sub.flags & ~base.flags).any()
    assert np.array_equal(bootstrap_subsample(base, 927, 4).flags, base.flags)
    with pytest.raises(SampleTooLarge):
        bootstrap_subsample(base, 928, 4)


def test_bootstrap_uniformity():
    base = SampleMembership.from_indices(10, [1, 3, 5, 7])
    rng = np.random.default_rng(6)
    counts = np.zeros(10)
    for _ in range(10 ** 4):
        counts += bootstrap_subsample(base, 1, rng).flags
    for i in (1, 3, 5, 7):
        assert binomial_ok(counts[i], 10 ** 4, 0.25)
    assert counts[[0, 2, 4, 6, 8, 9]].sum() == 0


def test_cross_tabulate():
    a = SampleMembership.from_indices(10, [0, 1, 2])
    assert cross_tabulate(a, a).a10 == cross_tabulate(a, a).a01 == 0
    b = SampleMembership.from_indices(10, [5, 6])
    assert cross_tabulate(a, b).a11 == 0
    with pytest.raises(SizeMismatch):
        cross_tabulate(a, SampleMembership.from_indices(11, [0]))


def test_cross_tabulate_constructed_overlap():
    rng = np.random.default_rng(1)
    for _ in range(50):
        N = int(rng.integers(20, 200))
        perm = rng.permutation(N)
        a11, a10, a01 = (int(x) for x in rng.integers(0, N // 3, size=3))
        cap = SampleMembership.from_indices(N, perm[:a11 + a10])
        rec = SampleMembership.from_indices(N, np.concatenate([perm[:a11], perm[a11 + a10:a11 + a10 + a01]]))
        c = cross_tabulate(cap, rec)
        assert (c.a11, c.a10, c.a01) == (a11, a10, a01)
        assert c.s1 == cap.size and c.s2 == rec.size


def test_weights_for_degree_passthrough():
    pop = Population([3, 5, 7, 9])
    cap = SampleMembership.from_indices(4, [0, 1])
    rec = SampleMembership.from_indices(4, [1, 2, 3])
    obs = weights_for(cap, rec, pop)
    assert obs.weights.tolist() == [5.0, 7.0, 9.0]
    assert obs.in_first.tolist() == [True, False, False]
    assert obs.first_sample_size == 2


def test_weights_for_constant_covariate_reduces_to_naive():
    pop = Population([3, 5, 7, 9, 2])
    cap = SampleMembership.from_indices(5, [0, 1, 2])
    rec = SampleMembership.from_indices(5, [1, 3, 4])
    obs = weights_for(cap, rec, pop, np.full(5, 2.5))
    assert adjusted_ht(obs).estimate == pytest.approx(naive_lp(cross_tabulate(cap, rec)).estimate)


def test_weights_for_missing():
    pop = Population([3, 5, 7])
    cap = SampleMembership.from_indices(3, [0])
    rec = SampleMembership.from_indices(3, [0, 2])
    with pytest.raises(MissingCovariate):
        weights_for(cap, rec, pop, np.array([1.0, 2.0, np.nan]))
    with pytest.raises(MissingCovariate):
        weights_for(cap, rec, pop, np.array([1.0, 2.0]))


def test_scheme_dispatch(stratified):
    assert scheme_sample(SamplingScheme(SchemeKind.UNIFORM, 10), stratified, 0).size == 10
    assert scheme_sample(SamplingScheme(SchemeKind.DEGREE_PROPORTIONAL, 10), stratified, 0).size == 10
    assert scheme_sample(SamplingScheme(SchemeKind.STRATUM_LIST, stratum="0-19"), stratified).size == 47
    with pytest.raises(ValueError):
        SamplingScheme(SchemeKind.RDS_WALK)
    net_pop = power_law_population(200, PowerLawSpec(2.5, 3, 199), 0)
    assert scheme_sample(SamplingScheme(SchemeKind.RDS_WALK, 30), net_pop, 0).size == 30
