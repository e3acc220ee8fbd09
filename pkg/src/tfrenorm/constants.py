"""Renormalisation constants: quadrature, limits, scaling laws, counterterm.

Three constants are nonzero below the criticality window: the columns at
e1+f0+f1, 2f1 and 2e1+2f0 of the constant vector.  Each is a frequency
integral of kernel factors against FF = FC * |Fphi_tau|^2, where FC is the
noise covariance and phi_tau the mollifier.  This module evaluates

* the three integrals at finite (m0, tau) for both mollifier families,
* their universal m0- and tau-free limit constants C1, C2, C3,
* the scaling exponents in tau and m0,
* the pointwise counterterm functional h and its leading thin-film form.

The full integrals use the parabolic substitution 2*pi*k0 = r^4
sqrt(1-u^8), 2*pi*k1 = r*u, which maps the positive-frequency quadrant to
(0, inf) x (0, 1), turns the kernel denominator into r^8 * q(u) with
q(u) = 1 - (1 - m0^2) u^8, and removes the scaling singularity at the
origin for every alpha in (1/2, 1).  The integrand is even in both
frequencies, so the quadrant result is multiplied by 4.  The r-integral
is truncated where the mollifier envelope drops below 1e-18, with an
incomplete-gamma tail bound added to the error estimate.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import gammaincc

from .errors import ConfigError, ConsistencyError, NumericError
from .indices import e, f, homogeneity, is_c_populated

TWO_PI = 2.0 * math.pi
_TAIL_CUT = 1e-18
_LOG_TAIL = -math.log(_TAIL_CUT)

# constant vector columns carrying the three nonzero entries
C1_INDEX = e(1) + f(0) + f(1)
C2_INDEX = 2 * f(1)
C3_INDEX = 2 * e(1) + 2 * f(0)


def _quad(func, lo, hi, epsabs, epsrel, limit):
    """quad with the convergence warning silenced; the returned abserr is
    propagated into this module's own error estimates instead."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        return quad(func, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=limit)


# ---------------------------------------------------------------------------
# input specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovarianceSpec:
    """Spectral density FC of the driving noise.

    evaluator maps (k0, k1) to FC(k) >= 0, even in both arguments;
    d_evaluator is its analytic k1-derivative, needed by eval_c2.
    """

    kind: str
    alpha: float
    m0: float
    evaluator: object
    d_evaluator: object = None


def covariance_spec(alpha, m0=1.0, kind="paper_default", evaluator=None,
                    d_evaluator=None):
    """Build a CovarianceSpec; the default family is Q(k)^{-(2 alpha - 1)/8}
    with Q = (2 pi k0)^2 + m0^2 (2 pi k1)^8."""
    alpha = float(alpha)
    m0 = float(m0)
    if not 0.5 < alpha < 1.0:
        raise ConfigError(f"covariance exponent needs alpha in (1/2, 1), got {alpha}")
    if m0 <= 0:
        raise ConfigError(f"m0 must be positive, got {m0}")
    if kind == "paper_default":
        eps = 2.0 * alpha - 1.0
        msq = m0 * m0

        def evaluator(k0, k1):
            q_val = (TWO_PI * k0) ** 2 + msq * (TWO_PI * k1) ** 8
            return q_val ** (-eps / 8.0)

        def d_evaluator(k0, k1):
            q_val = (TWO_PI * k0) ** 2 + msq * (TWO_PI * k1) ** 8
            grad = 16.0 * math.pi * msq * (TWO_PI * k1) ** 7
            return q_val ** (-eps / 8.0) * (-(eps / 8.0) * grad / q_val)

        return CovarianceSpec(kind, alpha, m0, evaluator, d_evaluator)
    if kind == "custom":
        if evaluator is None:
            raise ConfigError("custom covariance needs an evaluator")
        return CovarianceSpec(kind, alpha, m0, evaluator, d_evaluator)
    raise ConfigError(f"unknown covariance kind {kind!r}")


@dataclass(frozen=True)
class MollifierSpec:
    """Squared Fourier symbol |Fphi_tau|^2 of the mollifier.

    semigroup:   exp(-tau * ((2 pi k0)^2 + m0^2 (2 pi k1)^8)), the kernel
                 semigroup at time tau/2 applied twice;
    anisotropic: exp(-tau (2 pi k1)^8 - tau^eta (2 pi k0)^2) with eta > 1,
                 mollifying space on scale tau^{1/8} but time much less.

    dlog_dk1 is the analytic k1-derivative of log squared_symbol.
    """

    kind: str
    tau: float
    eta: object
    m0: float
    squared_symbol: object
    dlog_dk1: object


def mollifier_spec(kind, tau, eta=2.0, m0=1.0):
    tau = float(tau)
    m0 = float(m0)
    if tau <= 0:
        raise ConfigError(f"mollifier scale tau must be positive, got {tau}")
    if m0 <= 0:
        raise ConfigError(f"m0 must be positive, got {m0}")
    if kind == "semigroup":
        msq = m0 * m0

        def squared_symbol(k0, k1):
            # np.exp keeps the symbol usable on whole frequency meshes
            return np.exp(
                -tau * ((TWO_PI * k0) ** 2 + msq * (TWO_PI * k1) ** 8)
            )

        def dlog_dk1(k0, k1):
            return -16.0 * math.pi * tau * msq * (TWO_PI * k1) ** 7

        return MollifierSpec(kind, tau, None, m0, squared_symbol, dlog_dk1)
    if kind == "anisotropic":
        eta = float(eta)
        if eta <= 1:
            raise ConfigError(f"anisotropic mollifier needs eta > 1, got {eta}")
        tau_eta = tau**eta

        def squared_symbol(k0, k1):
            return np.exp(
                -tau * (TWO_PI * k1) ** 8 - tau_eta * (TWO_PI * k0) ** 2
            )

        def dlog_dk1(k0, k1):
            return -16.0 * math.pi * tau * (TWO_PI * k1) ** 7

        return MollifierSpec(kind, tau, eta, m0, squared_symbol, dlog_dk1)
    raise ConfigError(f"unknown mollifier kind {kind!r}")


# ---------------------------------------------------------------------------
# full integrals at finite (m0, tau)
# ---------------------------------------------------------------------------


def _check_pair(cov, moll, need_derivative=False):
    if not 0.5 < cov.alpha < 1.0:
        raise ConfigError(f"alpha must lie in (1/2, 1), got {cov.alpha}")
    if cov.m0 <= 0 or moll.tau <= 0:
        raise ConfigError("m0 and tau must be positive")
    if moll.kind == "semigroup" and abs(moll.m0 - cov.m0) > 1e-12 * cov.m0:
        raise ConfigError(
            f"semigroup mollifier was built for m0={moll.m0}, "
            f"covariance has m0={cov.m0}"
        )
    if need_derivative and cov.d_evaluator is None:
        raise ConfigError(
            "eval_c2 needs the analytic k1-derivative of the covariance; "
            "custom covariances must supply d_evaluator"
        )


def _envelope_rate(moll, u, q_val):
    """Decay rate c in the bound |Fphi_tau|^2 <= exp(-c r^8) along u."""
    if moll.kind == "semigroup":
        return moll.tau * q_val
    return moll.tau * u**8 + moll.tau**moll.eta * (1.0 - u**8)


def _tail_bound(a_power, rate, r_max):
    """Upper bound for integral_{r_max}^inf r^a exp(-rate r^8) dr."""
    s = (a_power + 1.0) / 8.0
    x = rate * r_max**8
    return 0.125 * rate**-s * math.gamma(s) * float(gammaincc(s, x))


def _quadrant_integral(which, cov, moll, epsrel=1e-9):
    """(value, error estimate) of the `which`-th constant's integral."""
    _check_pair(cov, moll, need_derivative=(which == 2))
    m0 = cov.m0
    msq = m0 * m0
    inner_errs = [0.0]
    tail = [0.0]

    if which == 1:
        prefactor = 16.0 / TWO_PI**2

        def bracket(r, u, q_val, k0, k1):
            return (
                u**4
                * (4.0 * msq * u**8 / q_val - 2.0)
                / q_val
                * cov.evaluator(k0, k1)
                * moll.squared_symbol(k0, k1)
            )

    elif which == 2:
        prefactor = 16.0 * m0 / TWO_PI**3

        def bracket(r, u, q_val, k0, k1):
            deriv = cov.d_evaluator(k0, k1) + cov.evaluator(
                k0, k1
            ) * moll.dlog_dk1(k0, k1)
            return r * u**5 / q_val * moll.squared_symbol(k0, k1) * deriv

    elif which == 3:
        prefactor = -48.0 * m0 / TWO_PI**2

        def bracket(r, u, q_val, k0, k1):
            return (
                u**12
                / q_val**2
                * cov.evaluator(k0, k1)
                * moll.squared_symbol(k0, k1)
            )

    else:
        raise ConfigError(f"constant index must be 1, 2 or 3, got {which}")

    def inner(u):
        q_val = 1.0 - (1.0 - msq) * u**8
        root = math.sqrt(max(1.0 - u**8, 0.0))
        rate = _envelope_rate(moll, u, q_val)
        r_max = (_LOG_TAIL / rate) ** 0.125

        def integrand(r):
            k0 = r**4 * root / TWO_PI
            k1 = r * u / TWO_PI
            return bracket(r, u, q_val, k0, k1)

        val, err = _quad(integrand, 0.0, r_max, epsabs=1e-14,
                         epsrel=epsrel, limit=200)
        inner_errs[0] = max(inner_errs[0], abs(err))
        # beyond r_max the integrand is bounded by its r_max magnitude times
        # the envelope, with r^8 growth from the mollifier gradient in c2
        a_power = 8.0 if which == 2 else 0.0
        tail[0] = max(
            tail[0],
            abs(integrand(r_max))
            * math.exp(rate * r_max**8)
            * r_max**-a_power
            * _tail_bound(a_power, rate, r_max),
        )
        return val

    def outer(u):
        return inner(u) * (1.0 - u**8) ** -0.5

    value, outer_err = _quad(outer, 0.0, 1.0, epsabs=1e-13, epsrel=epsrel,
                             limit=300)
    value *= prefactor
    error = abs(prefactor) * (outer_err + 2.0 * inner_errs[0] + tail[0])
    if not math.isfinite(value):
        raise NumericError(
            f"quadrature for constant {which} diverged "
            f"(alpha={cov.alpha}, m0={m0}, tau={moll.tau}, {moll.kind})"
        )
    if error > max(1e-3 * abs(value), 1e-9):
        raise NumericError(
            f"quadrature for constant {which} did not converge: value "
            f"{value:.6e}, error estimate {error:.2e}"
        )
    return value, error


def _c2_imaginary_residue(cov, moll, points=12):
    """Midpoint-rule value of the odd (imaginary) part of the c2 integrand.

    The term -2*pi*i*k0 * (k1/Q) * d_k1 FF is odd in k0, so its integral
    over a symmetric grid cancels pairwise; a nonzero residue signals a
    parity defect in the covariance or mollifier implementation.
    """
    msq = cov.m0 * cov.m0
    k1_max = (_LOG_TAIL / moll.tau) ** 0.125 / TWO_PI
    t0 = moll.tau if moll.kind == "semigroup" else moll.tau**moll.eta
    k0_max = math.sqrt(_LOG_TAIL / t0) / TWO_PI
    vals = []
    for i in range(points):
        k0 = (i + 0.5) / points * k0_max
        for j in range(points):
            k1 = (j + 0.5) / points * k1_max
            for s0 in (1.0, -1.0):
                for s1 in (1.0, -1.0):
                    a0, a1 = s0 * k0, s1 * k1
                    q_val = (TWO_PI * a0) ** 2 + msq * (TWO_PI * a1) ** 8
                    deriv = moll.squared_symbol(a0, a1) * (
                        (cov.d_evaluator(a0, a1) if cov.d_evaluator else 0.0)
                        + cov.evaluator(a0, a1) * moll.dlog_dk1(a0, a1)
                    )
                    vals.append(-TWO_PI * a0 * a1 / q_val * deriv)
    cell = (2.0 * k0_max / points) * (2.0 * k1_max / points) / 4.0
    return math.fsum(vals) * cell


def eval_c1(cov, moll, epsrel=1e-9):
    """First renormalisation constant c_{e1+f0+f1} at finite (m0, tau)."""
    return _quadrant_integral(1, cov, moll, epsrel)[0]


def eval_c2(cov, moll, epsrel=1e-9):
    """Second constant c_{2f1}; asserts the imaginary part cancels."""
    value, _err = _quadrant_integral(2, cov, moll, epsrel)
    residue = _c2_imaginary_residue(cov, moll)
    if abs(residue) > 1e-8 * abs(value):
        raise ConsistencyError(
            f"imaginary part of the c2 integrand failed to cancel: "
            f"residue {residue:.3e} against value {value:.6e}"
        )
    return value


def eval_c3(cov, moll, epsrel=1e-9):
    """Third constant c_{2e1+2f0}; strictly negative for positive FF."""
    return _quadrant_integral(3, cov, moll, epsrel)[0]


# ---------------------------------------------------------------------------
# the result table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CountertermTable:
    """The three nonzero constants with their evaluation metadata."""

    c1: float
    c2: float
    c3: float
    err1: float
    err2: float
    err3: float
    alpha: float
    m0: float
    tau: float
    mollifier: str
    eta: object = None


def counterterm_table(cov, moll, epsrel=1e-9):
    """Evaluate all three constants into a CountertermTable."""
    c1, e1 = _quadrant_integral(1, cov, moll, epsrel)
    c2, e2 = _quadrant_integral(2, cov, moll, epsrel)
    residue = _c2_imaginary_residue(cov, moll)
    if abs(residue) > 1e-8 * abs(c2):
        raise ConsistencyError(
            f"imaginary part of the c2 integrand failed to cancel: "
            f"residue {residue:.3e} against value {c2:.6e}"
        )
    c3, e3 = _quadrant_integral(3, cov, moll, epsrel)
    return CountertermTable(
        c1, c2, c3, e1, e2, e3, cov.alpha, cov.m0, moll.tau, moll.kind,
        moll.eta,
    )


def table_to_json(table):
    """CLI-facing JSON document for one table."""
    return {
        "alpha": table.alpha,
        "m0": table.m0,
        "tau": table.tau,
        "mollifier": table.mollifier,
        "c1": table.c1,
        "c2": table.c2,
        "c3": table.c3,
        "err1": table.err1,
        "err2": table.err2,
        "err3": table.err3,
    }


def sweep_csv(tables):
    """CSV text with one row per (alpha, tau, m0) table."""
    lines = ["alpha,tau,m0,mollifier,c1,err1,c2,err2,c3,err3"]
    for t in tables:
        lines.append(
            f"{t.alpha},{t.tau},{t.m0},{t.mollifier},"
            f"{t.c1:.12e},{t.err1:.3e},{t.c2:.12e},{t.err2:.3e},"
            f"{t.c3:.12e},{t.err3:.3e}"
        )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# universal limit constants
# ---------------------------------------------------------------------------


def _bracket_factor(which, u, eps_shift):
    if which == 1:
        return 4.0 * (4.0 * u**8 - 2.0) * u ** (4.0 + eps_shift)
    if which == 2:
        return 4.0 * (8.0 * u**8 - 5.0) * u ** (4.0 + eps_shift)
    return -12.0 * u ** (12.0 + eps_shift)


def C_constants_with_errors(alpha, mollifier_kind, epsrel=1e-11):
    """Universal constants with error estimates, by rescaled quadrature.

    Stripping the exact powers m0^(-5/4), m0^(-1/4), m0^(-9/4) and
    tau^{(2 alpha - 2)/8} (semigroup), or the anisotropic leading powers,
    leaves integrals over the rescaled quadrant with weight exp(-r^8)
    (semigroup) or exp(-(r u)^8) (anisotropic).  In the anisotropic case
    the substitution s = r u decouples the axes exactly, so each constant
    is a product of two 1-D integrals:

        C_i = (4 / (2 pi)^2) * J(eps) * U_i,
        J(eps) = integral_0^inf s^(-eps) exp(-s^8) ds,

    with U_i a bracket-polynomial integral over u in (0, 1) carrying the
    substitution weight (1 - u^8)^(-1/2), and u^(eps - 1) extra for the
    anisotropic family.  eps = 2 alpha - 1.
    """
    alpha = float(alpha)
    if not 0.5 <= alpha < 1.0:
        raise ConfigError(
            f"universal constants need alpha in [1/2, 1), got {alpha}"
        )
    if mollifier_kind not in ("semigroup", "anisotropic"):
        raise ConfigError(f"unknown mollifier kind {mollifier_kind!r}")
    eps = 2.0 * alpha - 1.0
    r_max = _LOG_TAIL**0.125
    j_val, j_err = _quad(
        lambda s: s**-eps * math.exp(-(s**8)),
        0.0, r_max, epsabs=1e-15, epsrel=epsrel, limit=200,
    )
    j_tail = _tail_bound(-eps, 1.0, r_max)
    eps_shift = (eps - 1.0) if mollifier_kind == "anisotropic" else 0.0
    out = []
    for which in (1, 2, 3):
        u_val, u_err = _quad(
            lambda u: _bracket_factor(which, u, eps_shift)
            * (1.0 - u**8) ** -0.5,
            0.0, 1.0, epsabs=1e-15, epsrel=epsrel, limit=300,
        )
        scale = 4.0 / TWO_PI**2
        value = scale * (j_val + 0.0) * u_val
        error = scale * (
            abs(j_val) * u_err + abs(u_val) * j_err + abs(u_val) * j_tail
        )
        if not math.isfinite(value) or error > max(1e-4 * abs(value), 1e-10):
            raise NumericError(
                f"universal constant {which} quadrature did not converge "
                f"(alpha={alpha}, {mollifier_kind}): value {value:.6e}, "
                f"error {error:.2e}"
            )
        out.append((value, error))
    return tuple(out)


def eval_C_constants(alpha, mollifier_kind):
    """The three universal constants (C1, C2, C3), m0- and tau-free."""
    pairs = C_constants_with_errors(alpha, mollifier_kind)
    return tuple(value for value, _err in pairs)


# ---------------------------------------------------------------------------
# scaling laws
# ---------------------------------------------------------------------------

_M0_EXPONENTS = {
    "semigroup": {
        C1_INDEX: lambda alpha: -1.25,
        C2_INDEX: lambda alpha: -0.25,
        C3_INDEX: lambda alpha: -2.25,
    },
    "anisotropic": {
        C1_INDEX: lambda alpha: -(2.0 * alpha + 3.0) / 4.0,
        C2_INDEX: lambda alpha: -(2.0 * alpha - 1.0) / 4.0,
        C3_INDEX: lambda alpha: -(2.0 * alpha + 7.0) / 4.0,
    },
}


def scaling_exponents(beta_c, params, mollifier_kind="semigroup"):
    """(tau exponent, m0 exponent or None) of the constant at beta_c.

    The tau exponent (|beta| - alpha - 2)/8 comes from the homogeneity
    bound and equals (2 alpha - 2)/8 for the three nonzero constants; the
    m0 exponent is known only for those three (other constants vanish).
    """
    if mollifier_kind not in _M0_EXPONENTS:
        raise ConfigError(f"unknown mollifier kind {mollifier_kind!r}")
    if not is_c_populated(beta_c, params):
        raise ConfigError("scaling exponents need a constant-carrying index")
    tau_exp = (homogeneity(beta_c, params) - params.alpha - 2.0) / 8.0
    entry = _M0_EXPONENTS[mollifier_kind].get(beta_c)
    m0_exp = entry(params.alpha) if entry is not None else None
    return tau_exp, m0_exp


def fit_log_slope(xs, ys):
    """Least-squares slope of log|y| against log x."""
    if len(xs) != len(ys) or len(xs) < 2:
        raise ConfigError("slope fit needs at least two points")
    if any(x <= 0 for x in xs) or any(y == 0 for y in ys):
        raise ConfigError("slope fit needs positive x and nonzero y")
    lx = [math.log(x) for x in xs]
    ly = [math.log(abs(y)) for y in ys]
    mx = sum(lx) / len(lx)
    my = sum(ly) / len(ly)
    num = sum((a - mx) * (b - my) for a, b in zip(lx, ly))
    den = sum((a - mx) ** 2 for a in lx)
    return num / den


# ---------------------------------------------------------------------------
# the counterterm functional
# ---------------------------------------------------------------------------


def counterterm_h(a, a_prime, b, b_prime, table):
    """Pointwise counterterm c1 a' b b' + c2 (b')^2 + c3 (a')^2 b^2."""
    return (
        table.c1 * a_prime * b * b_prime
        + table.c2 * b_prime**2
        + table.c3 * a_prime**2 * b**2
    )


@dataclass(frozen=True)
class LeadingCounterterm:
    """Leading thin-film counterterm: coefficient * M^p (M')^2 shape.

    coefficient      -- universal combination C2/4 + C3 - C1/2
    tau_exponent     -- power of tau^{1/8} stripped off, (2 alpha - 2)
    density_exponent -- power p of the mobility M, -(2 alpha + 3)/4
    u_exponent       -- power of u for M(u) = u^m, namely m - 2 at
                        alpha = 1/2 where the density exponent is -1
    power_prefactor  -- coefficient * m^2, multiplying u^{m-2}
    form             -- rendered operator shape
    """

    coefficient: float
    tau_exponent: float
    density_exponent: float
    u_exponent: float
    power_prefactor: float
    form: str


def tfe_leading_form(m, alpha, table=None):
    """Leading counterterm of the thin-film equation with mobility u^m.

    Substituting a = 1 - M, b = M^(1/2) into h and inserting the
    anisotropic scaling laws with local coefficient m0 = M(u) aligns all
    three contributions on M^{-(2 alpha + 3)/4} (M')^2, with the universal
    coefficient C2/4 + C3 - C1/2.  When a finite-tau anisotropic table is
    given the coefficient is estimated from it by stripping the tau power;
    otherwise the universal constants are evaluated directly.
    """
    alpha = float(alpha)
    if table is not None:
        if table.mollifier != "anisotropic":
            raise ConfigError(
                "the leading form applies to the anisotropic mollifier family"
            )
        if abs(table.alpha - alpha) > 1e-12:
            raise ConfigError(
                f"table was computed at alpha={table.alpha}, asked for {alpha}"
            )
        if abs(table.m0 - 1.0) > 1e-12:
            raise ConfigError(
                "stripping the tau power needs a unit-m0 table; rescale first"
            )
        combo = table.c2 / 4.0 + table.c3 - table.c1 / 2.0
        coefficient = combo * table.tau ** (-(2.0 * alpha - 2.0) / 8.0)
    else:
        c1_val, c2_val, c3_val = eval_C_constants(alpha, "anisotropic")
        coefficient = c2_val / 4.0 + c3_val - c1_val / 2.0
    m = float(m)
    return LeadingCounterterm(
        coefficient=coefficient,
        tau_exponent=(2.0 * alpha - 2.0) / 8.0,
        density_exponent=-(2.0 * alpha + 3.0) / 4.0,
        u_exponent=m - 2.0,
        power_prefactor=coefficient * m * m,
        form="d_x( M'(u)^2 / M(u)^{(2 alpha + 3)/4} d_x u )",
    )
