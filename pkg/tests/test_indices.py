"""Multiindex algebra, gradings, predicates and enumeration."""

import random

import pytest

from tfrenorm.errors import ConfigError, ResourceError
from tfrenorm.indices import (
    HomogeneitySet,
    ModelParams,
    Multiindex,
    ZERO,
    aniso_degree,
    bracket,
    choose_kappa,
    e,
    enumerate_populated,
    expectation_parity_filter,
    f,
    format_multiindex,
    g,
    homogeneity,
    is_c_populated,
    is_populated,
    is_purely_polynomial,
    iter_decorations,
    keeps_counterterm,
    order_length,
    parse_multiindex,
    poly_weight,
    renormalisation_candidates,
)

from oracles import brute_force_populated, homogeneity as oracle_homogeneity

P055 = ModelParams(alpha=0.55, d=1)
P075 = ModelParams(alpha=0.75, d=1, allow_rational_alpha=True)
P095 = ModelParams(alpha=0.95, d=1)


# ---------------------------------------------------------------------------
# grammar
# ---------------------------------------------------------------------------


def test_parse_format_round_trip_hand_cases():
    cases = [
        "0",
        "f0",
        "e1+2f0",
        "2e1+2f0+g(0,1)",
        "e2+2f0+g(0,1)",
        "f0+f2+g(0,1)",
        "3e1+f0+2g(0,2)",
        "g(1,0)",
    ]
    for s in cases:
        assert format_multiindex(parse_multiindex(s)) == s


def test_parse_is_permissive_about_whitespace_and_order():
    m = parse_multiindex("  g(0,1) + 2 f0 +e1 + f0 ")
    assert m == parse_multiindex("e1+3f0+g(0,1)")
    assert format_multiindex(m) == "e1+3f0+g(0,1)"


def test_parse_accumulates_repeated_terms():
    assert parse_multiindex("f1+f1+2f1") == parse_multiindex("4f1")


def test_parse_star_multiplicity():
    assert parse_multiindex("2*e1+3*g(0,2)") == 2 * e(1) + 3 * g((0, 2))


def test_parse_rejects_junk():
    for bad in ["e", "x3", "g()", "g(0,)", "e-1", "2.5f0", "f0-f1", "g(0,1"]:
        with pytest.raises(ConfigError):
            parse_multiindex(bad)


def test_parse_enforces_arity():
    with pytest.raises(ConfigError):
        parse_multiindex("g(0,1,2)", expected_arity=2)
    assert parse_multiindex("g(0,1,2)", expected_arity=3) == g((0, 1, 2))


def test_round_trip_random():
    rng = random.Random(20240817)
    for _ in range(200):
        parts = []
        for _ in range(rng.randint(0, 5)):
            kind = rng.choice("efg")
            mult = rng.randint(1, 3)
            if kind == "e":
                parts.append((mult, e(rng.randint(0, 4))))
            elif kind == "f":
                parts.append((mult, f(rng.randint(0, 4))))
            else:
                n = (rng.randint(0, 2), rng.randint(0, 3))
                if not any(n):
                    n = (0, 1)
                parts.append((mult, g(n)))
        m = ZERO
        for mult, unit in parts:
            m = m + mult * unit
        assert parse_multiindex(format_multiindex(m)) == m


# ---------------------------------------------------------------------------
# the dataclass itself
# ---------------------------------------------------------------------------


def test_zero_decoration_rejected():
    with pytest.raises(ConfigError):
        g((0, 0))


def test_mixed_arity_rejected():
    with pytest.raises(ConfigError):
        g((0, 1)) + g((0, 1, 0))


def test_minus_partial_order():
    m = 2 * e(1) + 2 * f(0) + g((0, 1))
    assert m.minus(e(1) + f(0)) == e(1) + f(0) + g((0, 1))
    assert m.minus(3 * e(1)) is None
    assert m.minus(g((0, 2))) is None
    assert m.minus(ZERO) == m


def test_scalar_multiple_validation():
    with pytest.raises(ConfigError):
        (-1) * e(1)
    assert 0 * e(1) == ZERO


# ---------------------------------------------------------------------------
# gradings
# ---------------------------------------------------------------------------


def test_aniso_degree_weights_time_by_four():
    assert aniso_degree((1, 0)) == 4
    assert aniso_degree((0, 1)) == 1
    assert aniso_degree((1, 2)) == 6
    assert aniso_degree((2, 0, 3)) == 11


def test_bracket_and_homogeneity_hand_values():
    m = parse_multiindex("2e1+2f0+g(0,1)")
    assert bracket(m) == 2 * 1 + 0 - 1 == 1
    assert poly_weight(m) == 1
    assert homogeneity(m, P055) == pytest.approx(0.55 * 2 + 1)

    m = parse_multiindex("f0")
    assert bracket(m) == 0
    assert homogeneity(m, P055) == pytest.approx(0.55)

    m = parse_multiindex("g(0,2)")
    assert bracket(m) == -1
    assert homogeneity(m, P055) == pytest.approx(2.0)

    m = parse_multiindex("e2+2f0+g(0,1)")
    assert bracket(m) == 1
    assert homogeneity(m, P055) == pytest.approx(0.55 * 2 + 1)


def test_homogeneity_matches_oracle_on_random_indices():
    rng = random.Random(99)
    for _ in range(300):
        a = [(rng.randint(0, 3), rng.randint(1, 2)) for _ in range(rng.randint(0, 2))]
        b = [(rng.randint(0, 3), rng.randint(1, 2)) for _ in range(rng.randint(0, 2))]
        p = []
        for _ in range(rng.randint(0, 2)):
            n = (rng.randint(0, 1), rng.randint(0, 2))
            if any(n):
                p.append((n, rng.randint(1, 2)))
        m = Multiindex(tuple(a), tuple(b), tuple(p))
        want = oracle_homogeneity(0.55, m.a, m.b, m.p)
        assert homogeneity(m, P055) == pytest.approx(want)


def test_homogeneity_is_additive_after_alpha_shift():
    rng = random.Random(5)
    pop = enumerate_populated(P055, 2.5)
    for _ in range(100):
        x, y = rng.choice(pop), rng.choice(pop)
        lhs = homogeneity(x + y, P055) - P055.alpha
        rhs = (homogeneity(x, P055) - P055.alpha) + (homogeneity(y, P055) - P055.alpha)
        assert lhs == pytest.approx(rhs, abs=1e-12)


def test_order_length_uses_lam_on_decorations():
    m = parse_multiindex("e1+f0+g(1,1)")
    assert order_length(m, P055) == pytest.approx(2 + 0.4 * 5)


# ---------------------------------------------------------------------------
# model parameters
# ---------------------------------------------------------------------------


def test_params_window_validation():
    with pytest.raises(ConfigError):
        ModelParams(alpha=0.2, d=1)  # below 3/2 - 5/4 = 1/4
    with pytest.raises(ConfigError):
        ModelParams(alpha=1.0, d=1, allow_rational_alpha=True)
    with pytest.raises(ConfigError):
        ModelParams(alpha=0.55, d=0)
    with pytest.raises(ConfigError):
        ModelParams(alpha=0.55, d=1, lam=0.5)
    # d=2 widens the window downward: 3/2 - 6/4 = 0
    ModelParams(alpha=0.2, d=2, allow_rational_alpha=True)


def test_params_rational_guard():
    with pytest.raises(ConfigError):
        ModelParams(alpha=0.75, d=1)  # 3/4
    with pytest.raises(ConfigError):
        ModelParams(alpha=2 / 3, d=1)
    ModelParams(alpha=0.75, d=1, allow_rational_alpha=True)
    # 0.55 = 11/20 has denominator > 12, passes without the override
    ModelParams(alpha=0.55, d=1)


def test_params_derived_quantities():
    p = ModelParams(alpha=0.55, d=2)
    assert p.eff_dim == 6
    assert p.scaling == (4, 1, 1)
    assert p.arity == 3


# ---------------------------------------------------------------------------
# population predicates
# ---------------------------------------------------------------------------


def test_is_populated_hand_cases():
    yes = ["f0", "g(0,1)", "g(1,0)", "f0+f1", "e1+2f0", "e0+f0",
           "2e1+2f0+g(0,1)", "e1+f0+f1+g(0,1)", "f1+g(0,1)"]
    no = ["0", "e1", "2g(0,1)", "f1", "e1+f0", "g(0,1)+g(0,2)", "f0+g(0,1)"]
    for s in yes:
        assert is_populated(parse_multiindex(s)), s
    for s in no:
        assert not is_populated(parse_multiindex(s)), s


def test_purely_polynomial_is_single_decoration():
    assert is_purely_polynomial(g((0, 1)))
    assert not is_purely_polynomial(2 * g((0, 1)))
    assert not is_purely_polynomial(f(0))
    assert not is_purely_polynomial(f(1) + g((0, 1)))


def test_is_c_populated_cases():
    # the three counterterm indices of the second-order expansion
    for s in ["e1+f0+f1", "2f1", "2e1+2f0"]:
        assert is_c_populated(parse_multiindex(s), P055), s
    # identity holds but odd bracket
    assert bracket(parse_multiindex("f1+2f0")) == 1
    assert not is_c_populated(parse_multiindex("f1+2f0"), P055)
    # identity fails
    assert not is_c_populated(parse_multiindex("2f0"), P055)
    # noise-free
    assert not is_c_populated(parse_multiindex("e0"), P055)
    with pytest.raises(ConfigError):
        is_c_populated(parse_multiindex("f1+g(0,1)"), P055)


def test_is_c_populated_window_cuts_large_indices():
    # satisfies the identity with even bracket but |beta| = 5 alpha >= 2 + alpha
    big = parse_multiindex("2f0+2f2")
    assert big.a_weight() + big.b_weight() == big.b_count() == 4
    assert bracket(big) % 2 == 0
    assert homogeneity(big, P055) >= 2 + P055.alpha
    assert not is_c_populated(big, P055)


def test_keeps_counterterm_modes():
    p = P055
    # e1+f0 has odd bracket: kept raw, dropped reduced
    m = parse_multiindex("e1+f0")
    assert keeps_counterterm(m, p, "raw")
    assert not keeps_counterterm(m, p, "reduced")
    # the size window prunes in both modes
    big = parse_multiindex("2f0+2f2")
    assert not keeps_counterterm(big, p, "raw")
    # decorated columns never survive
    assert not keeps_counterterm(parse_multiindex("f1+g(0,1)"), p, "raw")
    with pytest.raises(ConfigError):
        keeps_counterterm(m, p, "other")


def test_parity_filter_preconditions_and_values():
    assert expectation_parity_filter(parse_multiindex("2e1+2f0+g(0,1)"))
    assert expectation_parity_filter(parse_multiindex("2f1+g(0,1)"))
    # even bracket
    assert not expectation_parity_filter(parse_multiindex("f1+g(0,1)"))
    # odd bracket, even decoration degree
    assert not expectation_parity_filter(parse_multiindex("2f1+g(0,2)"))
    # odd bracket, zero (even) decoration degree
    assert not expectation_parity_filter(parse_multiindex("f0+f1"))
    with pytest.raises(ConfigError):
        expectation_parity_filter(parse_multiindex("g(0,1)"))
    with pytest.raises(ConfigError):
        expectation_parity_filter(parse_multiindex("e1"))


# ---------------------------------------------------------------------------
# enumeration
# ---------------------------------------------------------------------------


def _as_counts(m):
    return (m.a, m.b, m.p)


# frozen from the independent brute-force sweep (tests/oracles.py)
FROZEN_COUNTS = {
    (1, 0.55): {2.0: 11, 3.0: 63, 4.0: 277},
    (1, 0.75): {2.0: 6, 3.0: 23, 4.0: 91},
    (1, 0.95): {2.0: 6, 3.0: 23, 4.0: 71},
    (2, 0.55): {2.0: 14, 3.0: 95, 4.0: 501},
    (2, 0.75): {2.0: 9, 3.0: 45, 4.0: 201},
    (2, 0.95): {2.0: 9, 3.0: 45, 4.0: 181},
}


@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("alpha", [0.55, 0.75, 0.95])
def test_enumeration_matches_brute_force(d, alpha):
    params = ModelParams(alpha=alpha, d=d, allow_rational_alpha=True)
    for cutoff in (2.0, 3.0, 4.0):
        got = enumerate_populated(params, cutoff)
        assert len(got) == FROZEN_COUNTS[(d, alpha)][cutoff]
        want = brute_force_populated(alpha, d, cutoff)
        assert {_as_counts(m) for m in got} == set(want)


def test_enumeration_is_sorted_and_e0_free():
    pop = enumerate_populated(P055, 3.5)
    homs = [homogeneity(m, P055) for m in pop]
    assert homs == sorted(homs)
    assert len(set(pop)) == len(pop)
    for m in pop:
        assert dict(m.a).get(0, 0) == 0
        assert is_populated(m)
        assert homogeneity(m, P055) < 3.5


def test_enumeration_contains_the_display_indices():
    pop = set(enumerate_populated(P055, 3.0))
    for s in [
        "f0", "f0+f1", "f1+g(0,1)", "e1+2f0", "e1+f0+g(0,1)",
        "2f1+g(0,1)", "f0+f2+g(0,1)", "e2+2f0+g(0,1)",
        "2e1+2f0+g(0,1)", "e1+f0+f1+g(0,1)",
    ]:
        assert parse_multiindex(s) in pop, s


def test_enumeration_resource_guard():
    with pytest.raises(ResourceError):
        enumerate_populated(P055, 4.0, max_count=50)


def test_iter_decorations_ordering():
    decs = iter_decorations(1, 4)
    assert decs[0] == (0, 1)
    assert (1, 0) in decs and (0, 4) in decs and (1, 1) not in decs[: decs.index((1, 0))]
    degs = [aniso_degree(n) for n in decs]
    assert degs == sorted(degs)


# ---------------------------------------------------------------------------
# homogeneity window and kappa
# ---------------------------------------------------------------------------


def test_homogeneity_set_minimum_is_alpha():
    hs = HomogeneitySet.build(P055, 2.5)
    assert hs.values[0] == pytest.approx(0.55)
    assert hs.min_above(3.0) is None


def test_choose_kappa_worked_example():
    params = ModelParams(alpha=0.6, d=1, allow_rational_alpha=True)
    # smallest homogeneity above 3 at alpha = 0.6 is 3.2, window
    # (3 - 1.2, min(2.5, 3.2 - 1.2)) = (1.8, 2.0), midpoint 1.9
    assert choose_kappa(params, cutoff=3.7) == pytest.approx(1.9)


def test_choose_kappa_needs_a_wide_enough_cutoff():
    params = ModelParams(alpha=0.6, d=1, allow_rational_alpha=True)
    homs = HomogeneitySet.build(params, 3.1)
    with pytest.raises(ConfigError):
        choose_kappa(params, homs=homs)


# ---------------------------------------------------------------------------
# renormalisation candidates
# ---------------------------------------------------------------------------


CANDIDATES = {
    "2e1+2f0+g(0,1)",
    "2f1+g(0,1)",
    "e1+f0+f1+g(0,1)",
    "e2+2f0+g(0,1)",
    "f0+f2+g(0,1)",
}


@pytest.mark.parametrize("params", [P055, P075, P095])
def test_candidates_are_the_five_known_modes(params):
    got = {format_multiindex(m) for m in renormalisation_candidates(params)}
    assert got == CANDIDATES
