"""Structure group: derivations on the index algebra and the recentering map.

The two derivation families act on the polynomial algebra in the slot
variables by

    D0      : shifts one velocity or noise slot up by one,
              (D0)_beta^gamma = sum_k (k+1) gamma(k) [beta = gamma - e_k + e_{k+1}]
                              + sum_l (l+1) gamma(l) [beta = gamma - f_l + f_{l+1}]
    D^(n)   : removes one decoration n (n != 0),
              (D^(n))_beta^gamma = gamma(n) [beta = gamma - g_n]

and the recentering map is the exponential

    Gamma* = sum_{j>=0} (1/j!) sum_{n_1..n_j} pi^(n_1)..pi^(n_j) D^(n_1)..D^(n_j)

with scalar families pi^(n) supported on populated indices of homogeneity
strictly above |n| (the admissibility contract).  The n = 0 letter pairs
pi^(0) with D0.  All the D's commute, so the word sum collapses onto
multisets of letters with coefficient 1/prod(multiplicities!); that is how
gamma_entry and gamma_apply iterate.

Scalars are generic: float for numerics, Fraction/PolyScalar for exact runs.
"""

from fractions import Fraction

from .errors import ConfigError
from .indices import (
    ZERO,
    aniso_degree,
    bracket,
    e,
    f,
    g,
    format_multiindex,
    homogeneity,
    is_populated,
    parse_multiindex,
)


def scale_value(value, fraction):
    """Multiply a generic scalar by an exact Fraction."""
    if isinstance(value, float):
        return value * float(fraction)
    return value * fraction


# ---------------------------------------------------------------------------
# series vectors
# ---------------------------------------------------------------------------


class SeriesVector:
    """Finitely supported map Multiindex -> scalar."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=None):
        self.coeffs = {}
        for m, v in (coeffs or {}).items():
            self.add_term(m, v)

    def add_term(self, m, v):
        cur = self.coeffs.get(m)
        new = v if cur is None else cur + v
        if _is_zero(new):
            self.coeffs.pop(m, None)
        else:
            self.coeffs[m] = new

    def items(self):
        return self.coeffs.items()

    def get(self, m, default=0):
        return self.coeffs.get(m, default)

    def __add__(self, other):
        out = SeriesVector(dict(self.coeffs))
        for m, v in other.items():
            out.add_term(m, v)
        return out

    def __len__(self):
        return len(self.coeffs)

    def truncate(self, params, cutoff):
        return SeriesVector(
            {m: v for m, v in self.coeffs.items() if homogeneity(m, params) < cutoff}
        )

    def __repr__(self):
        bits = [
            f"{format_multiindex(m)}: {v}"
            for m, v in sorted(self.coeffs.items(), key=lambda t: t[0].sort_key())
        ]
        return "SeriesVector({" + ", ".join(bits) + "})"


def _is_zero(v):
    if hasattr(v, "is_zero"):
        return v.is_zero()
    return v == 0


def series_mul(x, y):
    """Cauchy product: (x*y)_beta = sum over splittings of beta."""
    out = SeriesVector()
    for m1, v1 in x.items():
        for m2, v2 in y.items():
            out.add_term(m1 + m2, v1 * v2)
    return out


def basis(m):
    return SeriesVector({m: 1})


# ---------------------------------------------------------------------------
# derivations, forward (column) form: operator applied to a series
# ---------------------------------------------------------------------------


def d0_apply(series):
    """D0 applied to a series (shift one slot up, weighted)."""
    out = SeriesVector()
    for gamma, v in series.items():
        for k, c in gamma.a:
            shifted = gamma.minus(e(k)) + e(k + 1)
            out.add_term(shifted, scale_value(v, Fraction((k + 1) * c)))
        for l, c in gamma.b:
            shifted = gamma.minus(f(l)) + f(l + 1)
            out.add_term(shifted, scale_value(v, Fraction((l + 1) * c)))
    return out


def dn_apply(series, n):
    """D^(n) applied to a series (remove one decoration n)."""
    if not any(n):
        return d0_apply(series)
    out = SeriesVector()
    gn = g(n)
    for gamma, v in series.items():
        c = dict(gamma.p).get(tuple(n), 0)
        if c:
            out.add_term(gamma.minus(gn), scale_value(v, Fraction(c)))
    return out


def d0_entry(beta, gamma):
    """Matrix entry (D0)_beta^gamma."""
    return d0_apply(basis(gamma)).get(beta, 0)


def dn_entry(beta, gamma, n):
    """Matrix entry (D^(n))_beta^gamma, n != 0."""
    if not any(n):
        raise ConfigError("dn_entry needs a nonzero decoration; use d0_entry")
    return dn_apply(basis(gamma), n).get(beta, 0)


def d0_power_row(beta, m, c_support=None):
    """Row of (D0)^m at row index beta: dict gamma -> ((D0)^m)_beta^gamma.

    Computed by walking the m down-moves from beta: (D0)_beta^sigma is
    nonzero only for sigma = beta - e_{k+1} + e_k or sigma = beta - f_{l+1}
    + f_l, with entry (k+1) (beta(k)+1) resp. (l+1) (beta(l)+1).  When
    ``c_support`` is given the row is restricted to those columns, ready to
    expand an iterated substitution into a finitely supported vector.
    """
    row = {beta: 1}
    for _ in range(m):
        nxt = {}
        for idx, val in row.items():
            for k1, _c in idx.a:
                if k1 == 0:
                    continue
                k = k1 - 1
                sigma = idx.minus(e(k1)) + e(k)
                weight = (k + 1) * (dict(sigma.a)[k])
                nxt[sigma] = nxt.get(sigma, 0) + val * weight
            for l1, _c in idx.b:
                if l1 == 0:
                    continue
                l = l1 - 1
                sigma = idx.minus(f(l1)) + f(l)
                weight = (l + 1) * (dict(sigma.b)[l])
                nxt[sigma] = nxt.get(sigma, 0) + val * weight
        row = nxt
    if c_support is not None:
        keep = set(c_support)
        row = {idx: val for idx, val in row.items() if idx in keep}
    return row


# ---------------------------------------------------------------------------
# the structure map
# ---------------------------------------------------------------------------


class StructureMap:
    """Scalar families pi^(n) defining a recentering map.

    ``pi`` maps decoration vectors n (tuples, zero allowed) to dicts
    Multiindex -> scalar.  Admissibility: every support index is populated
    with homogeneity strictly above the anisotropic degree of its n.
    """

    def __init__(self, params, pi):
        self.params = params
        clean = {}
        for n, entries in pi.items():
            n = tuple(n)
            if len(n) != params.arity:
                raise ConfigError(f"letter {n} has arity {len(n)}, expected {params.arity}")
            kept = {}
            for m, v in entries.items():
                if _is_zero(v):
                    continue
                if not is_populated(m):
                    raise ConfigError(
                        f"pi^{n} supported on unpopulated index {format_multiindex(m)}"
                    )
                if homogeneity(m, params) <= aniso_degree(n):
                    raise ConfigError(
                        f"pi^{n} entry {format_multiindex(m)} violates the "
                        f"homogeneity admissibility |beta| > |n|"
                    )
                kept[m] = v
            if kept:
                clean[n] = kept
        self.pi = clean

    def letters(self):
        """Flat list of (n, support index, value), deterministic order."""
        out = []
        for n in sorted(self.pi):
            for m in sorted(self.pi[n], key=lambda t: t.sort_key()):
                out.append((n, m, self.pi[n][m]))
        return out

    def min_gap(self):
        """Smallest homogeneity increase |beta| - |n| over all letters."""
        gaps = [
            homogeneity(m, self.params) - aniso_degree(n)
            for n, m, _v in self.letters()
        ]
        return min(gaps) if gaps else None


def gamma_entry(beta, gamma, smap):
    """Matrix entry (Gamma*)_beta^gamma of the recentering map.

    Sums over multisets of letters {(n_i, beta_i)} with sum beta_i
    componentwise inside beta, coefficient prod(pi-values)/prod(mult!),
    times the commuting word (prod_i D^(n_i))_{beta - sum beta_i}^gamma.
    The letter count j is capped by the bracket bookkeeping
    j <= (velocity+noise weight of beta) - [gamma].
    """
    letters = smap.letters()
    jmax = beta.a_weight() + beta.b_weight() - bracket(gamma)
    total = 1 if beta == gamma else 0

    def word_value(rest, word):
        series = basis(gamma)
        for n, count, _idx in word:
            for _ in range(count):
                series = dn_apply(series, n)
                if not len(series):
                    return 0
        return series.get(rest, 0)

    def rec(i, remaining, j, value, fact, word):
        nonlocal total
        if j > 0:
            wv = word_value(remaining, word)
            if not _is_zero(wv):
                contrib = scale_value(value * wv, Fraction(1, fact))
                total = total + contrib
        if j == jmax:
            return
        for idx in range(i, len(letters)):
            n, m, v = letters[idx]
            rest = remaining.minus(m)
            if rest is None:
                continue
            # multiplicity of this letter so far (last word entry if same idx)
            if word and word[-1][2] == idx:
                n0, c0, _ = word[-1]
                nword = word[:-1] + ((n0, c0 + 1, idx),)
                nfact = fact * (c0 + 1)
            else:
                nword = word + ((n, 1, idx),)
                nfact = fact
            rec(idx, rest, j + 1, value * v, nfact, nword)

    rec(0, beta, 0, 1, 1, ())
    return total


def gamma_apply(series, smap, cutoff):
    """Apply the recentering map to a finitely supported series.

    Pruning uses the exact identity hom(output) = hom(input index) + sum of
    letter gaps (gap = |support| - |n|): every D^(n) shifts homogeneity by
    alpha - |n| and every pi-multiplication by |support| - alpha, so only
    the gaps accumulate.  Gaps are strictly positive by admissibility, so
    the recursion terminates.  The result is exact below the cutoff for
    series supported on indices of homogeneity >= alpha (populated or
    purely polynomial supports qualify).
    """
    params = smap.params
    letters = smap.letters()
    out = SeriesVector()
    if not len(series):
        return out
    min_hom0 = min(homogeneity(m, params) for m, _ in series.items())

    def contribute(dser, shift, value, fact):
        inv = Fraction(1, fact)
        for m, v in dser.items():
            target = m + shift
            if homogeneity(target, params) < cutoff:
                out.add_term(target, scale_value(value * v, inv))

    def rec(i, dser, shift, value, fact, gap_sum, word):
        contribute(dser, shift, value, fact)
        for idx in range(i, len(letters)):
            n, m, v = letters[idx]
            gap = homogeneity(m, params) - aniso_degree(n)
            if min_hom0 + gap_sum + gap >= cutoff:
                continue
            nser = dn_apply(dser, n)
            if not len(nser):
                continue
            mult = word.get(idx, 0) + 1
            nword = dict(word)
            nword[idx] = mult
            rec(idx, nser, shift + m, value * v, fact * mult, gap_sum + gap, nword)

    rec(0, series, ZERO, 1, 1, 0.0, {})
    return out


# ---------------------------------------------------------------------------
# JSON round trip (numeric scalars only)
# ---------------------------------------------------------------------------


def structure_map_to_json(smap):
    families = []
    for n in sorted(smap.pi):
        entries = [
            {"beta": format_multiindex(m), "value": _value_to_json(v)}
            for m, v in sorted(smap.pi[n].items(), key=lambda t: t[0].sort_key())
        ]
        families.append({"n": list(n), "entries": entries})
    return {
        "alpha": smap.params.alpha,
        "d": smap.params.d,
        "lam": smap.params.lam,
        "families": families,
    }


def _value_to_json(v):
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, (int, float)):
        return v
    raise ConfigError(f"cannot serialise scalar of type {type(v).__name__}")


def _value_from_json(v):
    if isinstance(v, str):
        num, _, den = v.partition("/")
        return Fraction(int(num), int(den or "1"))
    return v


def structure_map_from_json(doc, params=None):
    from .indices import ModelParams

    if params is None:
        params = ModelParams(
            alpha=doc["alpha"], d=doc["d"], lam=doc.get("lam", 0.4),
            allow_rational_alpha=True,
        )
    pi = {}
    for fam in doc["families"]:
        entries = {
            parse_multiindex(ent["beta"], expected_arity=params.arity): _value_from_json(
                ent["value"]
            )
            for ent in fam["entries"]
        }
        pi[tuple(fam["n"])] = entries
    return StructureMap(params, pi)
