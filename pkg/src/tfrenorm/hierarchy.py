"""Right-hand-side expansion of the model hierarchy, index by index.

Every populated, non-polynomial multiindex beta without a velocity-zero
slot (that slot is absorbed into the linear operator) labels a centered
model component obeying

    L Pi_beta = Div( sum of terms ),

and ``expand`` produces that sum.  Three families of terms occur:

* quasi   -- for each velocity slot e_k inside beta, k plain factors
             multiplying one third-derivative block GradLap(Pi_..),
* noise   -- for each noise slot f_l inside beta, l plain factors
             multiplying the mollified noise,
* counter -- minus one gradient factor Grad(Pi_..) times a column of the
             renormalisation-constant vector; splitting off m plain
             factors substitutes the m-fold slot-raising row (D0)^m into
             the column.

The underlying sums run over ordered splittings, so a grouped quasi or
noise term carries the number of orderings of its plain-factor multiset,
while a grouped counter term carries -1/prod(multiplicities!) -- the 1/m!
of the iterated substitution cancels against the ordered count.

All coefficients are exact ``Fraction`` values and all derived column
weights are integers; nothing in this module is floating point.
"""

from dataclasses import dataclass
from fractions import Fraction
from math import factorial, prod

from .errors import ConfigError, ConsistencyError
from .group import d0_power_row
from .indices import (
    ZERO,
    e,
    f,
    format_multiindex,
    g,
    homogeneity,
    is_populated,
    is_purely_polynomial,
    keeps_counterterm,
    order_length,
    parse_multiindex,
)

KIND_RANK = {"quasi": 0, "noise": 1, "counter": 2}


@dataclass(frozen=True)
class HierarchyTerm:
    """One grouped term of an expanded right-hand side.

    factors   -- sorted tuple of plain factor indices (a multiset)
    decorated -- argument of the differentiated factor: gradLaplacian for
                 quasi, grad for counter (polynomialGradient when that
                 factor is purely polynomial), absent for noise terms
    noise     -- whether the mollified noise multiplies the term
    c         -- counter terms only: tuple of (gamma, weight) pairs, the
                 slot-raising row substituted into the constant vector
    """

    kind: str
    coeff: Fraction
    factors: tuple
    decorated: object = None
    noise: bool = False
    c: tuple = None

    def derivative(self):
        if self.kind == "quasi":
            return "gradLaplacian"
        if self.kind == "counter":
            if is_purely_polynomial(self.decorated):
                return "polynomialGradient"
            return "grad"
        return None

    def sort_key(self):
        dec = self.decorated.sort_key() if self.decorated is not None else ()
        cpart = tuple((m.sort_key(), w) for m, w in self.c) if self.c else ()
        return (
            KIND_RANK[self.kind],
            len(self.factors),
            tuple(m.sort_key() for m in self.factors),
            dec,
            cpart,
        )

    def canon(self):
        """Hashable normal form used for multiset comparison of term lists."""
        return (
            self.kind,
            self.coeff,
            tuple(sorted(self.factors, key=lambda m: m.sort_key())),
            self.decorated,
            self.noise,
            tuple(sorted(self.c, key=lambda t: t[0].sort_key())) if self.c else None,
        )


def _make_term(kind, coeff, factors, decorated=None, noise=False, c=None):
    factors = tuple(sorted(factors, key=lambda m: m.sort_key()))
    if c is not None:
        c = tuple(sorted(c, key=lambda t: t[0].sort_key()))
    return HierarchyTerm(kind, coeff, factors, decorated, noise, c)


# ---------------------------------------------------------------------------
# splitting machinery
# ---------------------------------------------------------------------------


def _sub_indices(beta):
    """All multiindices componentwise <= beta."""
    units = (
        [(e(k), c) for k, c in beta.a]
        + [(f(l), c) for l, c in beta.b]
        + [(g(n), c) for n, c in beta.p]
    )
    out = [ZERO]
    for unit, count in units:
        out = [base + i * unit for base in out for i in range(count + 1)]
    return out


def _factor_pool(beta):
    """Populated sub-indices of beta, the admissible plain/derived factors."""
    pool = [m for m in _sub_indices(beta) if m and is_populated(m)]
    pool.sort(key=lambda m: m.sort_key())
    return pool


def _splits(rest, parts, pool, start=0):
    """Multisets (nondecreasing tuples) of `parts` pool entries summing to rest."""
    if parts == 0:
        if not rest:
            yield ()
        return
    for i in range(start, len(pool)):
        r = rest.minus(pool[i])
        if r is None:
            continue
        for tail in _splits(r, parts - 1, pool, i):
            yield (pool[i],) + tail


def _multiplicities(factors):
    counts = {}
    for m in factors:
        counts[m] = counts.get(m, 0) + 1
    return list(counts.values())


def _ordered_count(factors):
    mults = _multiplicities(factors)
    return factorial(len(factors)) // prod(factorial(c) for c in mults)


# ---------------------------------------------------------------------------
# the expansion
# ---------------------------------------------------------------------------


def expand(beta, params, mode="raw"):
    """Grouped right-hand-side terms of the beta component, sorted.

    ``mode`` selects the constant columns kept in counter terms: "raw"
    keeps every admissible column, "reduced" additionally drops the
    odd-bracket columns (whose constants vanish by expectation parity).
    """
    if mode not in ("raw", "reduced"):
        raise ConfigError(f"unknown counterterm mode {mode!r}")
    if isinstance(beta, str):
        beta = parse_multiindex(beta, expected_arity=params.arity)
    if not is_populated(beta):
        raise ConfigError(f"{format_multiindex(beta)} is not a populated index")
    if is_purely_polynomial(beta):
        raise ConfigError(
            "purely polynomial components are explicit; nothing to expand"
        )
    if dict(beta.a).get(0):
        raise ConfigError(
            "the velocity-zero slot is absorbed into the linear operator"
        )
    for n, _ in beta.p:
        if len(n) != params.arity:
            raise ConfigError(
                f"decoration {n} has arity {len(n)}, expected {params.arity}"
            )

    pool = _factor_pool(beta)
    terms = []

    # quasi family: e_k + (k plain) + (1 GradLap factor) = beta
    for k, _count in beta.a:
        rest0 = beta.minus(e(k))
        for dec in pool:
            r = rest0.minus(dec)
            if r is None:
                continue
            for plain in _splits(r, k, pool):
                coeff = Fraction(_ordered_count(plain))
                terms.append(_make_term("quasi", coeff, plain, decorated=dec))

    # noise family: f_l + (l plain) = beta, times the mollified noise
    for l, _count in beta.b:
        rest0 = beta.minus(f(l))
        for plain in _splits(rest0, l, pool):
            coeff = Fraction(_ordered_count(plain))
            terms.append(_make_term("noise", coeff, plain, noise=True))

    # counter family: (m plain) + (1 Grad factor) + sigma = beta, with the
    # (D0)^m row of sigma substituted into the constant vector
    for sigma in _sub_indices(beta):
        if not sigma or sigma.p:
            continue
        rest0 = beta.minus(sigma)
        max_m = rest0.a_count() + rest0.b_count() + rest0.p_count() - 1
        for m in range(max_m + 1):
            row = d0_power_row(sigma, m)
            kept = [
                (gamma, w)
                for gamma, w in row.items()
                if keeps_counterterm(gamma, params, mode)
            ]
            if not kept:
                continue
            for dec in pool:
                r = rest0.minus(dec)
                if r is None:
                    continue
                for plain in _splits(r, m, pool):
                    mults = _multiplicities(plain)
                    coeff = Fraction(-1, prod(factorial(c) for c in mults))
                    terms.append(
                        _make_term("counter", coeff, plain, decorated=dec, c=kept)
                    )

    terms.sort(key=lambda t: t.sort_key())
    _check_triangular(beta, terms, params)
    return terms


def _check_triangular(beta, terms, params):
    hom_b = homogeneity(beta, params)
    len_b = order_length(beta, params)
    for t in terms:
        deps = list(t.factors)
        if t.decorated is not None:
            deps.append(t.decorated)
        for m in deps:
            if not (
                homogeneity(m, params) < hom_b and order_length(m, params) < len_b
            ):
                raise ConsistencyError(
                    f"factor {format_multiindex(m)} of {format_multiindex(beta)} "
                    "violates triangularity"
                )
        for gamma, _w in t.c or ():
            if not order_length(gamma, params) < len_b:
                raise ConsistencyError(
                    f"constant column {format_multiindex(gamma)} of "
                    f"{format_multiindex(beta)} violates triangularity"
                )


# ---------------------------------------------------------------------------
# dependency structure
# ---------------------------------------------------------------------------


def dependencies(beta, params, mode="raw"):
    """Model components appearing on the right-hand side of beta, sorted."""
    deps = set()
    for t in expand(beta, params, mode):
        deps.update(t.factors)
        if t.decorated is not None:
            deps.add(t.decorated)
    return sorted(deps, key=lambda m: (homogeneity(m, params), m.sort_key()))


def c_dependencies(beta, params, mode="raw"):
    """Constant columns appearing on the right-hand side of beta, sorted.

    Asserts the recentering bound on every column gamma: adding one unit
    decoration to gamma still stays strictly below beta in the ordering
    length, except in the pure-substitution case where the term is a bare
    polynomial gradient and gamma plus that decoration equals beta exactly.
    """
    if isinstance(beta, str):
        beta = parse_multiindex(beta, expected_arity=params.arity)
    deps = set()
    len_b = order_length(beta, params)
    for t in expand(beta, params, mode):
        for gamma, _w in t.c or ():
            exact = (
                not t.factors
                and is_purely_polynomial(t.decorated)
                and gamma + t.decorated == beta
            )
            if not exact and not order_length(gamma, params) + params.lam < len_b:
                raise ConsistencyError(
                    f"constant column {format_multiindex(gamma)} of "
                    f"{format_multiindex(beta)} violates the recentering bound"
                )
            deps.add(gamma)
    return sorted(deps, key=lambda m: (homogeneity(m, params), m.sort_key()))


@dataclass(frozen=True)
class HierarchyDag:
    """Dependency graph of the populated indices below a cutoff.

    nodes      -- every populated index below the cutoff, sorted by
                  homogeneity; purely polynomial indices are leaves
    expansions -- beta -> grouped term list, for the non-polynomial nodes
    edges      -- beta -> sorted right-hand-side components (empty for
                  leaves), always pointing to strictly shorter indices
    topo_order -- nodes sorted by ordering length (leaves first), a
                  topological order of the edge relation
    """

    nodes: tuple
    expansions: dict
    edges: dict
    topo_order: tuple

    def __iter__(self):
        return iter(self.expansions)

    def __getitem__(self, beta):
        return self.expansions[beta]

    def items(self):
        return self.expansions.items()


def build_dag(params, cutoff, mode="raw", max_count=200_000):
    """Expand every populated non-polynomial index below the cutoff.

    Expansions may reference purely polynomial components (explicit
    centered monomials) and indices of homogeneity above the cutoff; both
    appear as edge targets only when they are themselves below the cutoff,
    keeping the graph closed.  Every edge is checked to strictly decrease
    the ordering length, which makes the graph acyclic by construction.
    """
    from .indices import enumerate_populated

    nodes = enumerate_populated(params, cutoff, max_count=max_count)
    node_set = set(nodes)
    expansions = {}
    edges = {}
    for beta in nodes:
        if is_purely_polynomial(beta):
            edges[beta] = []
            continue
        expansions[beta] = expand(beta, params, mode)
        deps = [m for m in dependencies(beta, params, mode) if m in node_set]
        len_b = order_length(beta, params)
        for m in deps:
            if not order_length(m, params) < len_b:
                raise ConsistencyError(
                    f"edge {format_multiindex(beta)} -> {format_multiindex(m)} "
                    "does not decrease the ordering length; the graph would "
                    "admit a cycle"
                )
        edges[beta] = deps
    topo = sorted(
        nodes,
        key=lambda m: (order_length(m, params), homogeneity(m, params), m.sort_key()),
    )
    return HierarchyDag(tuple(nodes), expansions, edges, tuple(topo))


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def render_term(term):
    bits = [f"Pi[{format_multiindex(m)}]" for m in term.factors]
    if term.kind == "quasi":
        bits.append(f"GradLap(Pi[{format_multiindex(term.decorated)}])")
    elif term.kind == "counter":
        bits.append(f"Grad(Pi[{format_multiindex(term.decorated)}])")
    if term.noise:
        bits.append("xi")
    if term.c:
        inner = " + ".join(
            (f"{w}*" if w != 1 else "") + f"c[{format_multiindex(gamma)}]"
            for gamma, w in term.c
        )
        bits.append(f"({inner})" if len(term.c) > 1 else inner)
    body = "*".join(bits) if bits else "1"
    if term.coeff == 1:
        return body
    if term.coeff == -1:
        return f"-{body}"
    return f"{term.coeff}*{body}"


def render_expansion(beta, terms):
    if not terms:
        return f"L*Pi[{format_multiindex(beta)}] = 0"
    parts = [render_term(t) for t in terms]
    rhs = parts[0]
    for p in parts[1:]:
        rhs += f" - {p[1:]}" if p.startswith("-") else f" + {p}"
    return f"L*Pi[{format_multiindex(beta)}] = Div({rhs})"


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------


def term_to_json(term):
    doc = {
        "kind": term.kind,
        "coeff": str(term.coeff),
        "factors": [format_multiindex(m) for m in term.factors],
        "decorated": None,
        "noise": term.noise,
        "c": None,
    }
    if term.decorated is not None:
        doc["decorated"] = {
            "beta": format_multiindex(term.decorated),
            "dec": term.derivative(),
        }
    if term.c is not None:
        doc["c"] = [
            {"gamma": format_multiindex(gamma), "weight": w} for gamma, w in term.c
        ]
    return doc


def term_from_json(doc, arity=None):
    kind = doc["kind"]
    if kind not in KIND_RANK:
        raise ConfigError(f"unknown term kind {kind!r}")
    decorated = None
    if doc.get("decorated") is not None:
        decorated = parse_multiindex(doc["decorated"]["beta"], expected_arity=arity)
    elif kind in ("quasi", "counter"):
        raise ConfigError(f"{kind} terms need a decorated factor")
    c = None
    if doc.get("c") is not None:
        c = [
            (parse_multiindex(ent["gamma"], expected_arity=arity), int(ent["weight"]))
            for ent in doc["c"]
        ]
    term = _make_term(
        kind,
        Fraction(doc["coeff"]),
        [parse_multiindex(s, expected_arity=arity) for s in doc["factors"]],
        decorated=decorated,
        noise=bool(doc.get("noise", False)),
        c=c,
    )
    if doc.get("decorated") is not None:
        tag = doc["decorated"].get("dec")
        if tag != term.derivative():
            raise ConfigError(
                f"derivative tag {tag!r} does not match kind {kind!r} "
                f"(expected {term.derivative()!r})"
            )
    return term


def expansion_to_json(params, entries, mode="raw"):
    """Serialise a mapping beta -> term list (document order = input order)."""
    return {
        "alpha": params.alpha,
        "d": params.d,
        "lam": params.lam,
        "mode": mode,
        "entries": [
            {
                "beta": format_multiindex(beta),
                "terms": [term_to_json(t) for t in terms],
            }
            for beta, terms in entries.items()
        ],
    }


def expansion_from_json(doc):
    """Parse a serialised expansion; returns (meta, {beta: [terms]})."""
    meta = {
        "alpha": doc["alpha"],
        "d": doc["d"],
        "lam": doc.get("lam", 0.4),
        "mode": doc.get("mode", "raw"),
    }
    arity = 1 + meta["d"]
    entries = {}
    for ent in doc["entries"]:
        beta = parse_multiindex(ent["beta"], expected_arity=arity)
        entries[beta] = [term_from_json(t, arity=arity) for t in ent["terms"]]
    return meta, entries


def same_terms(got, want):
    """Multiset equality of two term lists (exact coefficients)."""
    from collections import Counter

    return Counter(t.canon() for t in got) == Counter(t.canon() for t in want)
