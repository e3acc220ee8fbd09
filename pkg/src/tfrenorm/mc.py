"""Monte Carlo layer: mollified noise, the two lowest model components,
and statistical checks against deterministic same-grid pairing oracles.

The ensemble is the Gaussian member of the admissible class, so every
second moment reported here has an exact oracle given by a Fourier pairing
sum over the very same lattice the samples live on -- grid distortion then
cancels in the comparison and the z-scores measure only sampling noise.

Randomness is counter-based: sample i of a sampler with seed s draws from
Philox keyed by hash(s, i), so estimates are bit-identical however the
sample loop is scheduled or parallelised, and the only reduction over
samples is a fixed-order pairwise sum.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .errors import ConfigError, NumericError
from .kernel import (
    SpectralField,
    TWO_PI,
    convolve,
    derivative,
    dump_field,
    psi_hat,
    solve_L_div,
    symbol_L,
)

_MASK64 = (1 << 64) - 1


def _splitmix64(z):
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _sample_key(seed, index):
    return _splitmix64(_splitmix64(seed & _MASK64) ^ (index & _MASK64))


def _pairwise_sum(parts):
    """Deterministic pairwise reduction; order fixed by the input order."""
    items = list(parts)
    if not items:
        raise ConfigError("pairwise sum needs at least one term")
    while len(items) > 1:
        merged = [items[i] + items[i + 1] for i in range(0, len(items) - 1, 2)]
        if len(items) % 2:
            merged.append(items[-1])
        items = merged
    return items[0]


# ---------------------------------------------------------------------------
# the sampler
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSampler:
    """Gaussian noise on a space-time torus with spectral density FC |Fphi|^2."""

    grid: object
    spec: object
    moll: object
    seed: int

    def __post_init__(self):
        if self.moll.tau <= 0:
            raise ConfigError("mollifier scale must be positive")
        if self.moll.kind == "semigroup" and abs(
            self.moll.m0 - self.spec.m0
        ) > 1e-12 * self.spec.m0:
            raise ConfigError(
                "semigroup mollifier and covariance disagree about m0"
            )

    def density(self):
        """Target density FF = FC |Fphi_tau|^2 on the grid; zero mode dropped.

        Computed once and cached; the returned array is read-only.
        """
        cached = getattr(self, "_density_cache", None)
        if cached is not None:
            return cached
        mesh = self.grid.frequency_mesh()
        k0 = mesh[0]
        k_rad = np.sqrt(sum(np.square(m) for m in mesh[1:]))
        with np.errstate(divide="ignore", invalid="ignore"):
            ff = self.spec.evaluator(k0, k_rad) * self.moll.squared_symbol(
                k0, k_rad
            )
        ff = np.asarray(np.broadcast_to(ff, self.grid.sizes), dtype=float).copy()
        ff[(0,) * (self.grid.d + 1)] = 0.0
        if not np.all(np.isfinite(ff)) or np.any(ff < 0):
            raise NumericError("spectral density is not finite and nonnegative")
        ff.setflags(write=False)
        object.__setattr__(self, "_density_cache", ff)
        return ff


def _hermitian_unit_noise(shape, rng):
    """Complex array H with H(-k) = conj H(k) and E|H(k)|^2 = 1."""
    draws = rng.standard_normal((2,) + tuple(shape))
    w = (draws[0] + 1j * draws[1]) / math.sqrt(2.0)
    flipped = w
    for axis in range(len(shape)):
        flipped = np.flip(np.roll(flipped, -1, axis=axis), axis=axis)
    return (w + np.conj(flipped)) / math.sqrt(2.0)


def sample_noise(sampler, index=0):
    """One noise sample: a list of d real mollified components.

    Component c of sample i draws from a Philox stream keyed by
    (seed, i, c), so any subset of samples can be generated in any order.
    """
    scale = np.sqrt(sampler.grid.volume * sampler.density())
    comps = []
    for comp in range(sampler.grid.d):
        key = _sample_key(sampler.seed, (index << 8) | comp)
        rng = np.random.Generator(np.random.Philox(key=key))
        hat = _hermitian_unit_noise(sampler.grid.sizes, rng) * scale
        phys = SpectralField(sampler.grid, hat, "fourier").to_physical()
        comps.append(SpectralField(sampler.grid, phys.values.real, "physical"))
    return comps


# ---------------------------------------------------------------------------
# model components
# ---------------------------------------------------------------------------


def _base_index(grid, x):
    if x is None:
        x = (0,) * (grid.d + 1)
    x = tuple(int(i) for i in x)
    if len(x) != grid.d + 1:
        raise ConfigError(f"base point needs {grid.d + 1} lattice indices")
    return tuple(i % n for i, n in zip(x, grid.sizes))


def pi_f0(noise, x, m0=1.0):
    """Linear component v - v(x) with v = L^{-1} div(noise)."""
    grid = noise[0].grid
    x = _base_index(grid, x)
    v = solve_L_div(noise, m0)
    vals = v.values.real - v.values.real[x]
    return SpectralField(grid, vals, "physical")


def pi_f0f1(noise, x, c_f1=0.0, m0=1.0):
    """Quadratic component: L^{-1} div(pi_f0 . noise - c_f1 grad pi_f0), centered.

    The zero mode of the forcing is dropped by the inversion, which is the
    torus substitute for the whole-space decay normalisation.
    """
    grid = noise[0].grid
    x = _base_index(grid, x)
    base = pi_f0(noise, x, m0)
    forcing = []
    for comp in range(grid.d):
        vals = base.values * noise[comp].values
        if c_f1:
            orders = [0] * (grid.d + 1)
            orders[1 + comp] = 1
            vals = vals - c_f1 * derivative(base, orders).values.real
        forcing.append(SpectralField(grid, vals, "physical"))
    u = solve_L_div(forcing, m0)
    vals = u.values.real - u.values.real[x]
    return SpectralField(grid, vals, "physical")


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class McReport:
    """Estimates against oracles; standard errors from batch means."""

    estimator: str
    samples: int
    points: tuple
    estimates: tuple
    standard_errors: tuple
    oracles: tuple
    z_scores: tuple

    def worst_z(self):
        return max(abs(z) for z in self.z_scores)

    def to_json(self):
        return json.dumps(
            {
                "estimator": self.estimator,
                "samples": self.samples,
                "points": [
                    list(p) if hasattr(p, "__len__") else p for p in self.points
                ],
                "estimates": list(self.estimates),
                "standard_errors": list(self.standard_errors),
                "oracles": list(self.oracles),
                "z_scores": list(self.z_scores),
            },
            indent=1,
        )

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["point", "estimate", "standard_error", "oracle", "z"])
        for row in zip(
            self.points,
            self.estimates,
            self.standard_errors,
            self.oracles,
            self.z_scores,
        ):
            writer.writerow(row)
        return buf.getvalue()


def _batch_report(estimator, points, per_sample, oracles, batches=16):
    """Assemble a report from per-sample estimates (samples x points)."""
    per_sample = np.asarray(per_sample, dtype=float)
    n = per_sample.shape[0]
    if n < 4:
        raise ConfigError("batch-means errors need at least 4 samples")
    if n < 2 * batches:
        batches = max(2, n // 2)
    estimates = _pairwise_sum(list(per_sample)) / n
    cut = (n // batches) * batches
    means = per_sample[:cut].reshape(batches, -1, per_sample.shape[1]).mean(axis=1)
    se = means.std(axis=0, ddof=1) / math.sqrt(batches)
    se = np.where(se > 0, se, np.inf)
    z = (estimates - np.asarray(oracles, dtype=float)) / se
    return McReport(
        estimator=estimator,
        samples=n,
        points=tuple(points),
        estimates=tuple(float(v) for v in estimates),
        standard_errors=tuple(float(v) for v in se),
        oracles=tuple(float(v) for v in oracles),
        z_scores=tuple(float(v) for v in z),
    )


# ---------------------------------------------------------------------------
# checks with same-grid oracles
# ---------------------------------------------------------------------------


def _density_transform(grid, density):
    """(1/vol) sum_k density(k) e^{2 pi i k r} on the lattice, real part."""
    return np.fft.ifftn(density).real * (grid.point_count / grid.volume)


def _default_lags(grid):
    n_sp = grid.sizes[-1]
    n_t = grid.sizes[0]
    spatial = [
        (0,) * grid.d + (j,)
        for j in sorted({int(v) for v in np.geomspace(1, max(2, n_sp // 4), 14)})
    ]
    temporal = [
        (j,) + (0,) * grid.d
        for j in sorted({int(v) for v in np.geomspace(1, max(2, n_t // 4), 6)})
    ]
    return spatial + temporal


def covariance_check(sampler, lags=None, n_samples=256):
    """E[xi(x) xi(x+r)] against the pairing sum, averaged over base points."""
    grid = sampler.grid
    lags = [tuple(int(i) for i in lag) for lag in (lags or _default_lags(grid))]
    oracle_field = _density_transform(grid, sampler.density())
    oracles = [oracle_field[lag] for lag in lags]
    axes = tuple(range(grid.d + 1))
    rows = []
    for i in range(n_samples):
        xi = sample_noise(sampler, i)[0].values.real
        rows.append(
            [
                float(np.mean(xi * np.roll(xi, [-s for s in lag], axis=axes)))
                for lag in lags
            ]
        )
    return _batch_report("covariance", lags, rows, oracles)


def pi_f0_second_moment_check(sampler, x=None, separations=None,
                              n_samples=256, dump_path=None):
    """E|pi_f0(y)|^2 against the exact Gaussian pairing sum.

    The oracle is 2(G(0) - G(y-x)) with G the inverse transform of the
    lattice density of v = L^{-1} div xi.  With dump_path set, the full
    second-moment field is written in the binary field format.
    """
    grid = sampler.grid
    x = _base_index(grid, x)
    if separations is None:
        n_sp = grid.sizes[-1]
        separations = [
            (0,) * grid.d + (j,)
            for j in sorted({int(v) for v in np.geomspace(1, n_sp // 3, 14)})
        ]
        separations += [
            (j,) + (0,) * grid.d
            for j in sorted({int(v) for v in np.geomspace(1, max(2, grid.sizes[0] // 3), 4)})
        ]
    separations = [tuple(int(i) for i in sep) for sep in separations]
    mesh = grid.frequency_mesh()
    sym = symbol_L(mesh, sampler.spec.m0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mult = sum(
            (TWO_PI * mesh[1 + i]) ** 2 for i in range(grid.d)
        ) / np.abs(sym) ** 2
    mult = np.asarray(np.broadcast_to(mult, grid.sizes)).copy()
    mult[(0,) * (grid.d + 1)] = 0.0
    g_field = _density_transform(grid, sampler.density() * mult)
    zero = (0,) * (grid.d + 1)
    oracles = [2.0 * (g_field[zero] - g_field[sep]) for sep in separations]
    rows = []
    mean_sq = None
    for i in range(n_samples):
        noise = sample_noise(sampler, i)
        comp = pi_f0(noise, x, sampler.spec.m0).values.real
        sq = comp**2
        mean_sq = sq if mean_sq is None else mean_sq + sq
        rows.append(
            [
                float(sq[tuple((xi + si) % n for xi, si, n in
                               zip(x, sep, grid.sizes))])
                for sep in separations
            ]
        )
    if dump_path is not None:
        dump_field(SpectralField(grid, mean_sq / n_samples, "physical"),
                   dump_path)
    return _batch_report("pi_f0_second_moment", separations, rows, oracles)


def bphz_triviality_check(sampler, t_list, component="f0", x=None,
                          n_samples=128):
    """MC estimate of the smoothed expectation E[(psi_t * Pi^-)(x)] per t.

    For f0 the integrand is the noise itself and the oracle vanishes; for
    f0+f1 (with c_f1 = 0) the oracle is the pairing sum
    (1/vol) sum_k (1 - psi_t(k)) 2 pi i k1 FF(k) / symbol_L(k), which
    vanishes whenever the density is even in the spatial frequency.
    """
    if component not in ("f0", "f0f1"):
        raise ConfigError(f"component must be f0 or f0f1, got {component!r}")
    grid = sampler.grid
    x = _base_index(grid, x)
    t_list = [float(t) for t in t_list]
    if component == "f0":
        oracles = [0.0 for _ in t_list]
    else:
        mesh = grid.frequency_mesh()
        sym = symbol_L(mesh, sampler.spec.m0)
        with np.errstate(divide="ignore", invalid="ignore"):
            mult = TWO_PI * 1j * mesh[1] / sym
        mult = np.asarray(np.broadcast_to(mult, grid.sizes)).copy()
        mult[(0,) * (grid.d + 1)] = 0.0
        ff = sampler.density()
        oracles = []
        for t in t_list:
            damp = 1.0 - psi_hat(t, mesh, sampler.spec.m0)
            oracles.append(float(np.sum(damp * mult * ff).real / grid.volume))
    rows = []
    for i in range(n_samples):
        noise = sample_noise(sampler, i)
        if component == "f0":
            base = noise[0]
        else:
            piece = pi_f0(noise, x, sampler.spec.m0).values.real
            base = SpectralField(grid, piece * noise[0].values.real,
                                 "physical")
        rows.append(
            [float(convolve(base, t, sampler.spec.m0).values[x].real)
             for t in t_list]
        )
    return _batch_report(f"bphz_{component}", t_list, rows, oracles)


# ---------------------------------------------------------------------------
# scaling fits
# ---------------------------------------------------------------------------


def _quad_with_breaks(func, breaks, epsrel):
    """Integral of func over (0, inf), honest about quadrature error.

    The integrand mixes scales that can sit ten decades apart (the
    dispersion ridge and the mollifier rolloff), which defeats a single
    adaptive call; integrating decade panels between the scales keeps
    every call well-conditioned.  Raises if the accumulated error estimate
    is not small relative to the result.
    """
    breaks = sorted(b for b in breaks if np.isfinite(b) and b > 0)
    if not breaks:
        breaks = [1.0]
    edges = [0.0, breaks[0]]
    while edges[-1] < 30.0 * breaks[-1]:
        edges.append(edges[-1] * 10.0)
    total = 0.0
    err = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for a, b in zip(edges, edges[1:]):
            val, est = quad(func, a, b, epsabs=1e-300, epsrel=epsrel,
                            limit=200)
            total += val
            err += est
        val, est = quad(func, edges[-1], np.inf, epsabs=1e-300,
                        epsrel=epsrel, limit=200)
        total += val
        err += est
    if err > max(1e-6 * abs(total), 1e-280):
        raise NumericError(
            f"frequency-line integral error {err:g} too large for {total:g}"
        )
    return total


def equal_time_density(sampler, k_values=None, rel_tol=1e-10):
    """Marginal spatial density P(k1) of v at a fixed time, d = 1.

    P(k1) = integral over the real time-frequency line of
    (2 pi k1)^2 FF(k0, k1) / |symbol_L|^2 dk0.  A lattice k0 sum is the
    wrong object here: resolving the frequency ridge k0 ~ k1^4 across a
    decade of k1 would take ~1e6 time modes, while the line integral is
    cheap and is what the whole-space statements are about.
    """
    if sampler.grid.d != 1:
        raise ConfigError("the equal-time marginal is wired for d = 1")
    if k_values is None:
        k_values = sampler.grid.frequencies(1)
    k_values = np.asarray(k_values, dtype=float)
    m0 = sampler.spec.m0
    if sampler.moll.kind == "semigroup":
        k0_moll = 1.0 / (TWO_PI * math.sqrt(sampler.moll.tau))
    else:
        k0_moll = sampler.moll.tau ** (-sampler.moll.eta / 2.0) / TWO_PI
    cache = {}
    out = np.zeros_like(k_values)
    for i, k1 in enumerate(k_values):
        mag = abs(k1)
        if mag == 0.0:
            continue
        if mag in cache:
            out[i] = cache[mag]
            continue
        ridge = m0 * (TWO_PI * mag) ** 4 / TWO_PI

        def integrand(k0, k1=mag):
            ff = sampler.spec.evaluator(k0, k1) * sampler.moll.squared_symbol(
                k0, k1
            )
            q = (TWO_PI * k0) ** 2 + (m0 * (TWO_PI * k1) ** 4) ** 2
            return (TWO_PI * k1) ** 2 * ff / q

        val = 2.0 * _quad_with_breaks(integrand, [ridge, k0_moll], rel_tol)
        cache[mag] = val
        out[i] = val
    return out


def default_window(sampler):
    """The infrared-safe fit window [4 tau^(1/8), box/8]."""
    return 4.0 * sampler.moll.tau**0.125, sampler.grid.boxes[-1] / 8.0


def _separation_indices(grid, window):
    lo, hi = window
    if not 0 < lo < hi:
        raise ConfigError(f"window must satisfy 0 < lo < hi, got {window}")
    if math.log10(hi / lo) < 0.5:
        raise ConfigError(
            f"separation window {window} spans less than half a decade"
        )
    delta = grid.boxes[-1] / grid.sizes[-1]
    j_lo = max(1, math.ceil(lo / delta))
    j_hi = math.floor(hi / delta)
    if j_hi >= grid.sizes[-1] // 2:
        raise ConfigError("window reaches beyond half the spatial box")
    if j_hi <= j_lo:
        raise ConfigError("window contains no lattice separations")
    js = sorted({int(v) for v in np.geomspace(j_lo, j_hi, 12)})
    if len(js) < 4:
        raise ConfigError("window is too narrow for a slope fit")
    return js


def _slope(xs, ys):
    lx, ly = np.log(xs), np.log(ys)
    lx = lx - lx.mean()
    return float(np.sum(lx * (ly - ly.mean())) / np.sum(lx**2))


def deterministic_scaling_slope(sampler, window=None):
    """Slope of the exact equal-time pairing sum for pi_f0, no sampling."""
    window = window or default_window(sampler)
    js = _separation_indices(sampler.grid, window)
    p_density = equal_time_density(sampler)
    length = sampler.grid.boxes[-1]
    n = sampler.grid.sizes[-1]
    g_line = np.fft.ifft(p_density).real * (n / length)
    moments = np.array([2.0 * (g_line[0] - g_line[j]) for j in js])
    seps = np.array(js) * (length / n)
    return _slope(seps, moments)


def scaling_fit(component, sampler, window=None, n_samples=1024,
                bootstrap=200):
    """(exponent, ci): log-log slope of E|Pi(y)|^2 against |y - x|_s.

    'f0' samples the equal-time spatial marginal directly (the space-time
    torus cannot resolve the parabolic frequency ridge, see
    equal_time_density); 'f0f1' runs on the sampler's own space-time grid
    and is therefore comparable only with same-grid oracles.  The ci is
    the half-width of a 95% bootstrap interval over samples.
    """
    window = window or default_window(sampler)
    js = _separation_indices(sampler.grid, window)
    grid = sampler.grid
    length = grid.boxes[-1]
    n = grid.sizes[-1]
    seps = np.array(js) * (length / n)
    rows = np.empty((n_samples, len(js)))
    if component == "f0":
        p_density = equal_time_density(sampler)
        scale = np.sqrt(length * p_density)
        cell = length / n
        for i in range(n_samples):
            key = _sample_key(sampler.seed, (i << 8) | 0x5C)
            rng = np.random.Generator(np.random.Philox(key=key))
            w_hat = _hermitian_unit_noise((n,), rng) * scale
            w = np.fft.ifft(w_hat).real / cell
            rows[i] = [np.mean((np.roll(w, -j) - w) ** 2) for j in js]
    elif component == "f0f1":
        x = (0,) * (grid.d + 1)
        for i in range(n_samples):
            noise = sample_noise(sampler, i)
            u = pi_f0f1(noise, x, m0=sampler.spec.m0).values.real
            rows[i] = [u[x[:-1] + ((x[-1] + j) % n,)] ** 2 for j in js]
    else:
        raise ConfigError(f"component must be f0 or f0f1, got {component!r}")
    mean = _pairwise_sum(list(rows)) / n_samples
    exponent = _slope(seps, mean)
    rng = np.random.Generator(
        np.random.Philox(key=_sample_key(sampler.seed, 0xB00))
    )
    slopes = np.empty(bootstrap)
    for b in range(bootstrap):
        pick = rng.integers(0, n_samples, n_samples)
        slopes[b] = _slope(seps, rows[pick].mean(axis=0))
    lo, hi = np.quantile(slopes, [0.025, 0.975])
    return exponent, float((hi - lo) / 2.0)
