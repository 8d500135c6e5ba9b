"""
src/domain/microcanonical.py

The uniform (microcanonical) measure on the energy–momentum sphere

    X_n^{E,P} = { V ∈ (R³)ⁿ : Σ|v_j|² = 2nE, Σ v_j = nP },

its single-velocity marginal g_n, and the equivalence-of-ensembles
machinery comparing g_n with the Maxwellian M_{P,T}, 3T = 2E − |P|².

All sphere-area arithmetic is done in log space through ``gammaln``:
|S^n| overflows a double for n above a few hundred.
"""
from __future__ import annotations

import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, optimize, special, stats

#: Velocities of one constrained block, shape ``(n, 3)``.
VelocityBlock = NDArray[np.float64]


class DegenerateEnsembleError(Exception):
    """Raised when 2E − |P|² ≤ 0 (no positive temperature exists)."""


class EnsembleSizeError(Exception):
    """Raised when the particle count is too small for the requested quantity."""


def temperature_of(E: float, P: ArrayLike) -> float:
    """Return T = (2E − |P|²)/3.

    Raises:
        DegenerateEnsembleError: If 2E − |P|² ≤ 0.
    """
    p = np.asarray(P, dtype=np.float64)
    excess = 2.0 * float(E) - float(np.dot(p, p))
    if excess <= 0.0:
        raise DegenerateEnsembleError(
            f"2E − |P|² = {excess:g} ≤ 0: no microcanonical temperature"
        )
    return excess / 3.0


@dataclass(frozen=True)
class EnsembleParams:
    """Parameters (n, E, P) of the microcanonical measure; T is derived."""

    n: int
    E: float
    P: tuple[float, float, float] = (0.0, 0.0, 0.0)
    T: float = field(init=False)

    def __post_init__(self) -> None:
        if self.n < 2:
            raise EnsembleSizeError(f"microcanonical ensemble needs n ≥ 2, got {self.n}")
        object.__setattr__(self, "P", tuple(float(c) for c in self.P))
        object.__setattr__(self, "T", temperature_of(self.E, self.P))

    @classmethod
    def from_temperature(
        cls, n: int, T: float, P: ArrayLike = (0.0, 0.0, 0.0)
    ) -> EnsembleParams:
        """Build the parameters whose derived temperature is *T*."""
        p = np.asarray(P, dtype=np.float64)
        E = 0.5 * (3.0 * T + float(np.dot(p, p)))
        return cls(n=n, E=E, P=(float(p[0]), float(p[1]), float(p[2])))

    @classmethod
    def of_block(cls, velocities: ArrayLike) -> EnsembleParams:
        """Empirical (E, P) of a velocity block: E = Σ|v|²/(2n), P = Σv/n."""
        v = np.asarray(velocities, dtype=np.float64)
        n = v.shape[0]
        P = v.mean(axis=0)
        E = float(np.sum(v * v)) / (2.0 * n)
        return cls(n=n, E=E, P=(float(P[0]), float(P[1]), float(P[2])))

    @property
    def momentum(self) -> NDArray[np.float64]:
        """P as an array."""
        return np.asarray(self.P, dtype=np.float64)

    @property
    def support_radius(self) -> float:
        """Radius √(3T(n−1)) of the ball carrying the single-velocity marginal."""
        return math.sqrt(3.0 * self.T * (self.n - 1))


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _rescale_centered(
    gaussian: NDArray[np.float64], spread: float, center: NDArray[np.float64]
) -> VelocityBlock:
    w = gaussian - gaussian.mean(axis=0)
    w *= math.sqrt(spread / float(np.sum(w * w)))
    return w + center


def sample_microcanonical(params: EnsembleParams, rng: np.random.Generator) -> VelocityBlock:
    """Draw one block uniformly distributed on X_n^{E,P}.

    Centred Gaussians rescaled to Σ|w_j|² = 3nT are orthogonally invariant on
    the constraint sphere, hence uniform there; adding P restores Σv_j = nP.
    """
    g = rng.standard_normal((params.n, 3))
    return _rescale_centered(g, 3.0 * params.n * params.T, params.momentum)


def resample_like(velocities: ArrayLike, rng: np.random.Generator) -> VelocityBlock:
    """Fresh microcanonical draw at the empirical (E, P) of *velocities*.

    The spread Σ|v_j − P|² is taken from the block itself rather than from
    2nE − n|P|², which keeps both constraints at rounding level.
    """
    v = np.asarray(velocities, dtype=np.float64)
    n = v.shape[0]
    if n < 2:
        raise EnsembleSizeError(f"cannot resample a block of {n} velocities")
    center = v.mean(axis=0)
    spread = float(np.sum((v - center) ** 2))
    if spread == 0.0:
        return np.array(v, copy=True)
    return _rescale_centered(rng.standard_normal((n, 3)), spread, center)


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


def log_sphere_area(n: int) -> float:
    """log |S^n| = log(2π^{(n+1)/2} / Γ((n+1)/2)).

    Raises:
        ValueError: If *n* is negative.
    """
    if n < 0:
        raise ValueError(f"sphere dimension must be non-negative, got {n}")
    half = 0.5 * (n + 1)
    return math.log(2.0) + half * math.log(math.pi) - float(special.gammaln(half))


def _log_marginal_prefactor(params: EnsembleParams) -> float:
    n = params.n
    return (
        -1.5 * math.log(3.0 * params.T * (n - 1))
        + log_sphere_area(3 * n - 7)
        - log_sphere_area(3 * n - 4)
    )


def marginal_density(v: ArrayLike, params: EnsembleParams) -> NDArray[np.float64] | float:
    """Density g_n^{E,P}(v) of one velocity under the microcanonical measure.

    g = [3T(n−1)]^{−3/2} (|S^{3n−7}|/|S^{3n−4}|)
        · (1 − |v−P|²/(3T(n−1)))₊^{(3n−8)/2}

    Raises:
        EnsembleSizeError: If n < 3.
    """
    if params.n < 3:
        raise EnsembleSizeError(f"marginal density requires n ≥ 3, got {params.n}")
    vel = np.asarray(v, dtype=np.float64)
    r2 = np.sum((vel - params.momentum) ** 2, axis=-1)
    q = 1.0 - r2 / params.support_radius**2
    exponent = 0.5 * (3 * params.n - 8)
    with np.errstate(divide="ignore"):
        log_q = np.log(np.where(q > 0.0, q, 1.0))
    density = np.where(q > 0.0, np.exp(_log_marginal_prefactor(params) + exponent * log_q), 0.0)
    if np.ndim(density) == 0:
        return float(density)
    return density


def maxwellian_density(v: ArrayLike, u: ArrayLike, T: float) -> NDArray[np.float64] | float:
    """M_{u,T}(v) = (2πT)^{−3/2} exp(−|v−u|²/(2T)).

    Raises:
        ValueError: If T ≤ 0.
    """
    if T <= 0.0:
        raise ValueError(f"temperature must be positive, got {T}")
    r2 = np.sum((np.asarray(v, dtype=np.float64) - np.asarray(u, dtype=np.float64)) ** 2, axis=-1)
    density = (2.0 * math.pi * T) ** -1.5 * np.exp(-r2 / (2.0 * T))
    if np.ndim(density) == 0:
        return float(density)
    return density


def coordinate_marginal_cdf(
    s: ArrayLike, params: EnsembleParams, axis: int = 0
) -> NDArray[np.float64]:
    """CDF of one Cartesian coordinate of one velocity under μ_n^{E,P}.

    Integrating g_n over the two transverse coordinates leaves
    (1 − s²/R²)^{(3n−6)/2} on [−R, R], a Beta((3n−4)/2, (3n−4)/2) law
    mapped affinely onto [P_axis − R, P_axis + R].  Valid for every n ≥ 2.
    """
    a = 0.5 * (3 * params.n - 4)
    radius = params.support_radius
    x = (np.asarray(s, dtype=np.float64) - params.P[axis] + radius) / (2.0 * radius)
    return np.asarray(stats.beta.cdf(np.clip(x, 0.0, 1.0), a, a), dtype=np.float64)


def coordinate_marginal_density_quadrature(s: float, params: EnsembleParams) -> float:
    """Single-coordinate density of g_n at offset *s* from P, by quadrature.

    Integrates g_n over the transverse plane in polar form; used as an
    independent check of :func:`coordinate_marginal_cdf`.
    """
    radius = params.support_radius
    rho_max2 = radius**2 - s * s
    if rho_max2 <= 0.0:
        return 0.0
    p = params.momentum

    def integrand(rho: float) -> float:
        point = p + np.array([s, rho, 0.0])
        return 2.0 * math.pi * rho * float(marginal_density(point, params))

    value, _ = integrate.quad(integrand, 0.0, math.sqrt(rho_max2), limit=200)
    return float(value)


def radial_integral(density: Callable[[float], float], upper: float) -> float:
    """∫_{|w| < upper} density(|w|) dw for a radially symmetric integrand."""
    value, _ = integrate.quad(
        lambda r: 4.0 * math.pi * r * r * density(r), 0.0, upper, limit=400
    )
    return float(value)


def marginal_expectation(h: Callable[[float], float], params: EnsembleParams) -> float:
    """∫ h(|v−P|) g_n(v) dv for a radial observable *h*."""
    p = params.momentum

    def weighted(r: float) -> float:
        return h(r) * float(marginal_density(p + np.array([r, 0.0, 0.0]), params))

    return radial_integral(weighted, params.support_radius)


def maxwellian_expectation(h: Callable[[float], float], T: float) -> float:
    """∫ h(|v−u|) M_{u,T}(v) dv for a radial observable *h*."""
    zero = np.zeros(3)

    def weighted(r: float) -> float:
        return h(r) * float(maxwellian_density(np.array([r, 0.0, 0.0]), zero, T))

    return radial_integral(weighted, 12.0 * math.sqrt(T))


# ---------------------------------------------------------------------------
# Equivalence of ensembles
# ---------------------------------------------------------------------------


def stirling_log_gamma(x: float) -> float:
    """Leading Stirling approximation log Γ(x) ≈ ½log 2π + (x − ½) log x − x."""
    return 0.5 * math.log(2.0 * math.pi) + (x - 0.5) * math.log(x) - x


def sphere_ratio_asymptotic_check(n_particles: int) -> tuple[float, float]:
    """Return (|S^{3n−7}|/|S^{3n−4}|, (3n/(2π))^{3/2}).

    Raises:
        EnsembleSizeError: If n < 3.
    """
    n = n_particles
    if n < 3:
        raise EnsembleSizeError(f"sphere ratio requires n ≥ 3, got {n}")
    exact = math.exp(log_sphere_area(3 * n - 7) - log_sphere_area(3 * n - 4))
    asymptotic = (3.0 * n / (2.0 * math.pi)) ** 1.5
    return exact, asymptotic


def sup_distance_to_maxwellian(
    params: EnsembleParams, radius_in_sd: float = 5.0, points: int = 4001
) -> float:
    """sup over |v−P| ≤ radius_in_sd·√T of |g_n(v) − M_{P,T}(v)| on a radial grid."""
    r = np.linspace(0.0, radius_in_sd * math.sqrt(params.T), points)
    v = params.momentum + np.outer(r, [1.0, 0.0, 0.0])
    g = np.asarray(marginal_density(v, params))
    m = np.asarray(maxwellian_density(v, params.momentum, params.T))
    return float(np.max(np.abs(g - m)))


def domination_rate(T: float) -> float:
    """C₂ = 1/(4T) of the Gaussian bound g_n ≤ C₁ exp(−C₂|v−P|²)."""
    return 1.0 / (4.0 * T)


def domination_constant(T: float, n_values: Iterable[int]) -> float:
    """Smallest C₁ with g_n(v) ≤ C₁ exp(−|v−P|²/(4T)) for every n in *n_values*.

    For each n, log g_n + C₂ r² is maximised over the support [0, R) on a
    grid, then refined with a bounded scalar search around the grid optimum.
    """
    c2 = domination_rate(T)
    best = 0.0
    for n in n_values:
        params = EnsembleParams.from_temperature(n, T)
        radius = params.support_radius
        log_pref = _log_marginal_prefactor(params)
        exponent = 0.5 * (3 * n - 8)

        def neg_log_bound(r: float, lp: float = log_pref, e: float = exponent,
                          rad: float = radius) -> float:
            q = max(1.0 - (r / rad) ** 2, 1e-300)
            return -(lp + e * math.log(q) + c2 * r * r)

        grid = np.linspace(0.0, radius * (1.0 - 1e-9), 2001)
        values = np.array([-neg_log_bound(float(r)) for r in grid])
        k = int(np.argmax(values))
        lo = float(grid[max(k - 1, 0)])
        hi = float(grid[min(k + 1, grid.size - 1)])
        refined = optimize.minimize_scalar(neg_log_bound, bounds=(lo, hi), method="bounded")
        peak = max(float(values[k]), -float(refined.fun))
        best = max(best, math.exp(peak))
    return best
