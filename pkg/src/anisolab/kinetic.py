"""Kinetic state-space tools and the nondegeneracy condition checker.

The solution is unfolded along a state variable xi through the indicator

    chi(xi; u) = +1 for 0 < xi < u, -1 for u < xi < 0, 0 otherwise,

which turns entropies S into integrals of S'(xi) chi(xi; u). Decay of
periodic solutions to their mean hinges on a frequency-space functional:
for a temporal frequency tau and spatial wave vector kappa, the state
average

    omega(tau, kappa; lam) = integral over |xi| <= M of
        lam / (lam + |tau + a(xi).kappa|^2 + (kappa^T A(xi) kappa)^2)

must vanish as lam -> 0, uniformly over |tau| + |kappa| >= delta. The
checker samples frequency shells, reports the largest value found per lam
(a lower bound for the supremum), and grades the trend.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import speed_vector, _as_matrix
from .quadrature import adaptive_quadrature

__all__ = [
    "chi",
    "entropy_from_kinetic",
    "entropy_flux_from_kinetic",
    "FrequencyPoint",
    "SamplingPlan",
    "symbol_denominator",
    "omega_at",
    "omega_delta",
    "degeneracy_set_measure",
    "ConditionReport",
    "check_condition",
]

KINETIC_QUAD_TOL = 1e-9
KINETIC_QUAD_LEVELS = 50
PASS_FRACTION = 0.05
TREND_NOISE = 0.10


def chi(xi, u):
    """Kinetic indicator of the interval between 0 and u, evaluated at xi."""
    if 0.0 < xi < u:
        return 1
    if u < xi < 0.0:
        return -1
    return 0


def entropy_from_kinetic(s_prime, u, state_bound, *, abs_tol=KINETIC_QUAD_TOL,
                         breakpoints=()):
    """Reconstruct S(u) - S(0) as the state integral of S'(xi) chi(xi; u).

    chi restricts the integral over [-state_bound, state_bound] to the
    signed interval between 0 and u, which is what is integrated here.
    """
    del state_bound  # part of the signature contract; chi fixes the support
    return adaptive_quadrature(
        lambda xi: np.asarray(s_prime(xi), dtype=float),
        0.0, float(u), abs_tol=abs_tol, max_levels=KINETIC_QUAD_LEVELS,
        breakpoints=breakpoints)


def entropy_flux_from_kinetic(s_prime, u, model, *, abs_tol=KINETIC_QUAD_TOL,
                              breakpoints=()):
    """Entropy flux q(u) with components integral of S'(xi) a_c(xi) chi."""
    u = float(u)
    out = np.empty(model.dimension)
    for c in range(model.dimension):
        out[c] = adaptive_quadrature(
            lambda xi, c=c: np.asarray(s_prime(xi), dtype=float)
            * speed_vector(model, xi)[..., c],
            0.0, u, abs_tol=abs_tol, max_levels=KINETIC_QUAD_LEVELS,
            breakpoints=breakpoints)
    return out


@dataclass(frozen=True)
class FrequencyPoint:
    """One (tau, kappa) sample; kappa is a length-d wave vector."""

    tau: float
    kappa: tuple

    def __post_init__(self):
        if abs(self.tau) + math.hypot(*self.kappa) <= 0.0:
            raise ValueError("frequency point must have |tau| + |kappa| > 0")

    @property
    def kappa_array(self):
        return np.asarray(self.kappa, dtype=float)


def _denominator_parts(model, tau, kappa, xi):
    """Advection and diffusion parts of the symbol at a batch of xi."""
    xi = np.asarray(xi, dtype=float)
    a = speed_vector(model, xi)
    adv = tau + a @ kappa
    mats = _as_matrix(model.diffusion(xi), xi.shape, model.dimension, "diffusion")
    quad = np.einsum("i,...ij,j->...", kappa, mats, kappa)
    return adv, quad


def symbol_denominator(model, fp, xi, lam):
    """lam + |tau + a(xi).kappa|^2 + (kappa^T A(xi) kappa)^2 at one xi."""
    adv, quad = _denominator_parts(model, fp.tau, fp.kappa_array, float(xi))
    return float(lam + adv ** 2 + quad ** 2)


def _resonance_breakpoints(model, tau, kappa, state_bound, n_scan=257):
    """xi values where the symbol is smallest; seeds for the quadrature."""
    xs = np.linspace(-state_bound, state_bound, n_scan)
    adv, quad = _denominator_parts(model, tau, kappa, xs)
    pts = []
    sign = np.sign(adv)
    flips = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    for idx in flips:
        x0, x1 = xs[idx], xs[idx + 1]
        y0, y1 = adv[idx], adv[idx + 1]
        pts.append(x0 - y0 * (x1 - x0) / (y1 - y0))
    den = adv ** 2 + quad ** 2
    interior = np.nonzero((den[1:-1] <= den[:-2]) & (den[1:-1] <= den[2:]))[0] + 1
    order = np.argsort(den[interior], kind="stable")
    pts.extend(xs[interior[order[:16]]])
    return pts[:24]


def omega_at(model, fp, lam, *, abs_tol=KINETIC_QUAD_TOL):
    """State average of lam over the symbol denominator at one frequency."""
    if lam <= 0.0:
        raise ValueError(f"lam must be positive, got {lam}")
    big = model.state_bound
    tau = float(fp.tau)
    kappa = fp.kappa_array
    cuts = _resonance_breakpoints(model, tau, kappa, big)

    def integrand(xi):
        adv, quad = _denominator_parts(model, tau, kappa, xi)
        return lam / (lam + adv ** 2 + quad ** 2)

    return adaptive_quadrature(integrand, -big, big, abs_tol=abs_tol,
                               max_levels=KINETIC_QUAD_LEVELS, breakpoints=cuts)


def _fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    phi = i * (math.pi * (3.0 - math.sqrt(5.0)))
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.column_stack([z, r * np.cos(phi), r * np.sin(phi)])


def _round_key(vals):
    return tuple(float(f"{v:.12g}") for v in vals)


@dataclass(frozen=True)
class SamplingPlan:
    """How the frequency half-space |tau| + |kappa| >= delta is sampled.

    Shells |tau| + |kappa| = r are walked on a geometric ladder from delta
    up to r_max. Each shell carries n_dir directions plus resonant rays
    (tau, kappa) proportional to (-a(xi*).e, e) for sampled states xi* and
    coordinate vectors e, which hit the advective null set head on. With
    ``lattice`` set, kappa components snap to multiples of 2 pi / period.
    """

    n_dir: Optional[int] = None
    r_max: float = 1e3
    r_factor: float = 2.0
    n_resonant: int = 33
    lattice: bool = False
    periods: Optional[tuple] = None

    def shell_radii(self, delta):
        if delta <= 0:
            raise ValueError(f"delta must be positive, got {delta}")
        radii = []
        r = float(delta)
        while r <= self.r_max * (1 + 1e-12):
            radii.append(r)
            r *= self.r_factor
        if radii[-1] < self.r_max:
            radii.append(float(self.r_max))
        return radii

    def _directions(self, dimension):
        n = self.n_dir or (64 if dimension == 1 else 256)
        if dimension == 1:
            theta = 2.0 * math.pi * np.arange(n) / n
            vecs = np.column_stack([np.cos(theta), np.sin(theta)])
        else:
            vecs = _fibonacci_sphere(n)
            axes = np.array([
                [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0],
                [0.0, 1.0, 0.0], [0.0, -1.0, 0.0],
                [0.0, 0.0, 1.0], [0.0, 0.0, -1.0],
            ])
            vecs = np.vstack([axes, vecs])
        norm = np.abs(vecs[:, 0]) + np.linalg.norm(vecs[:, 1:], axis=1)
        return vecs / norm[:, None]

    def _snap(self, kappa):
        out = []
        for c, period in zip(kappa, self.periods):
            unit = 2.0 * math.pi / period
            out.append(unit * round(c / unit))
        return np.asarray(out)

    def frequency_points(self, model, delta):
        """Deterministic candidate list; first entries win value ties."""
        if self.lattice and self.periods is None:
            raise ValueError("lattice sampling needs the grid periods")
        d = model.dimension
        big = model.state_bound
        radii = self.shell_radii(delta)
        dirs = self._directions(d)
        xi_stars = np.linspace(-big, big, self.n_resonant)
        speeds = speed_vector(model, xi_stars)

        points = []
        seen = set()

        def push(tau, kappa):
            kappa = np.asarray(kappa, dtype=float)
            if self.lattice:
                kappa = self._snap(kappa)
            if abs(tau) + np.linalg.norm(kappa) < delta * (1.0 - 1e-12):
                return
            key = _round_key((tau, *kappa))
            if key in seen:
                return
            seen.add(key)
            points.append(FrequencyPoint(tau=float(tau), kappa=tuple(float(c) for c in kappa)))

        for r in radii:
            for vec in dirs:
                push(r * vec[0], r * vec[1:])
            for axis in range(d):
                for a_val in speeds[:, axis]:
                    scale = r / (abs(a_val) + 1.0)
                    kappa = np.zeros(d)
                    kappa[axis] = scale
                    if self.lattice:
                        kappa = self._snap(kappa)
                        if np.linalg.norm(kappa) == 0.0:
                            continue
                        push(-a_val * kappa[axis], kappa)
                    else:
                        push(-a_val * scale, kappa)
        return points


def omega_delta(model, delta, lam, sampling=None):
    """Largest sampled omega value on |tau| + |kappa| >= delta, and where.

    Returns (value, witness FrequencyPoint). The value is a lower bound
    for the true supremum; the plan is built to include the resonant rays
    that dominate it.
    """
    sampling = sampling or SamplingPlan()
    points = sampling.frequency_points(model, delta)
    if not points:
        raise ValueError("sampling plan produced no frequency points")
    best_val = -math.inf
    best_fp = None
    for fp in points:
        val = omega_at(model, fp, lam)
        if val > best_val:
            best_val = val
            best_fp = fp
    return best_val, best_fp


def degeneracy_set_measure(model, fp, tol=1e-3, n_samples=20001):
    """Estimated measure of states where the symbol parts both vanish.

    The frequency is normalized to the Euclidean unit sphere first. A
    positive result flags a resonant ray along which no decay can occur.
    """
    kappa = fp.kappa_array
    norm = math.hypot(fp.tau, *kappa)
    tau = fp.tau / norm
    kappa = kappa / norm
    big = model.state_bound
    xs = np.linspace(-big, big, int(n_samples))
    adv, quad = _denominator_parts(model, tau, kappa, xs)
    frac = float(np.mean((np.abs(adv) <= tol) & (np.abs(quad) <= tol)))
    return frac * 2.0 * big


@dataclass
class ConditionReport:
    """Sampled omega ladder with verdict for one model."""

    model_name: str
    state_bound: float
    delta: float
    lambdas: list
    omegas: list
    witnesses: list
    pass_threshold: float
    verdict: str
    trend_ratio: float

    def lines(self):
        out = [f"condition check for {self.model_name} (delta={self.delta:g})"]
        for lam, om, fp in zip(self.lambdas, self.omegas, self.witnesses):
            kap = ",".join(f"{c:.6g}" for c in fp.kappa)
            out.append(f"  lambda={lam:<10g} omega={om:.6e}  witness tau={fp.tau:.6g} kappa=({kap})")
        out.append(f"  threshold {self.pass_threshold:.6g}, trend ratio {self.trend_ratio:.3e}")
        out.append(f"  verdict: {self.verdict}")
        return out


def _verdict(omegas, threshold):
    """pass/fail on the final value, inconclusive on a non-monotone trend."""
    monotone = all(
        omegas[k + 1] <= omegas[k] * (1.0 + TREND_NOISE) + 1e-15
        for k in range(len(omegas) - 1))
    if not monotone:
        return "inconclusive"
    return "pass" if omegas[-1] < threshold else "fail"


def check_condition(model, delta=1.0, lambdas=None, sampling=None):
    """Grade the nondegeneracy condition on a decreasing lambda ladder.

    The sampled sup must shrink with lambda and end below
    PASS_FRACTION * (state interval length) to pass.
    """
    if lambdas is None:
        lambdas = [10.0 ** -k for k in range(1, 7)]
    lambdas = [float(l) for l in lambdas]
    if not lambdas or any(l <= 0 for l in lambdas):
        raise ValueError("lambda ladder must be positive")
    if any(l2 >= l1 for l1, l2 in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda ladder must be strictly decreasing")
    sampling = sampling or SamplingPlan()
    points = sampling.frequency_points(model, delta)
    if not points:
        raise ValueError("sampling plan produced no frequency points")

    omegas = []
    witnesses = []
    for lam in lambdas:
        best_val = -math.inf
        best_fp = None
        for fp in points:
            val = omega_at(model, fp, lam)
            if val > best_val:
                best_val = val
                best_fp = fp
        omegas.append(best_val)
        witnesses.append(best_fp)

    threshold = PASS_FRACTION * 2.0 * model.state_bound
    verdict = _verdict(omegas, threshold)
    trend_ratio = omegas[-1] / omegas[0] if omegas[0] > 0 else 0.0
    return ConditionReport(
        model_name=model.name,
        state_bound=model.state_bound,
        delta=float(delta),
        lambdas=lambdas,
        omegas=omegas,
        witnesses=witnesses,
        pass_threshold=threshold,
        verdict=verdict,
        trend_ratio=trend_ratio,
    )
