"""Empirical measures, a weak* metric on a trigonometric test basis, and pressure."""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import logsumexp

from .entropy import greedy_separated_set


@dataclass(frozen=True)
class EmpiricalMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if np.any(self.weights <= 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")

    @classmethod
    def uniform(cls, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(p, np.full(p.shape[0], 1.0 / p.shape[0]))

    def integrate(self, func):
        return float(np.dot(self.weights, func(self.points)))


# -- test basis --------------------------------------------------------------

def _torus_frequencies(count):
    """Frequency vectors (p, q) with first nonzero entry positive, ordered by
    max(|p|, |q|), then |p| + |q|, then descending lexicographic order."""
    out = []
    d = 1
    while len(out) < count:
        shell = [(p, q) for p in range(0, d + 1) for q in range(-d, d + 1)
                 if max(abs(p), abs(q)) == d and (p > 0 or (p == 0 and q > 0))]
        shell.sort(key=lambda v: (abs(v[0]) + abs(v[1]), -v[0], -v[1]))
        out.extend(shell)
        d += 1
    return out


@dataclass(frozen=True)
class TestBasis:
    """psi_1 = 1, then cos/sin pairs of 2 pi (p x + q y) on the torus, or
    Chebyshev products on a planar box."""
    domain: str = "torus"
    bounds: tuple = ((0.0, 1.0), (0.0, 1.0))
    _norm_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def describe(self, i):
        """Human-readable label of psi_i (1-based)."""
        if i == 1:
            return "1"
        if self.domain == "torus":
            (p, q), kind = self._torus_term(i)
            return f"{kind}(2pi({p}x{q:+d}y))"
        a, b = self._cheb_term(i)
        return f"T{a}(x)T{b}(y)"

    def _torus_term(self, i):
        k = i - 2
        freqs = _torus_frequencies(k // 2 + 1)
        return freqs[k // 2], ("cos" if k % 2 == 0 else "sin")

    def _cheb_term(self, i):
        # pairs (a, b) by total degree, then descending a
        k, deg = i - 1, 0
        while True:
            if k <= deg:
                return deg - k, k
            k -= deg + 1
            deg += 1

    def evaluate(self, i, pts):
        p = np.atleast_2d(pts)
        if i == 1:
            return np.ones(p.shape[0])
        if self.domain == "torus":
            (a, b), kind = self._torus_term(i)
            arg = 2 * math.pi * (a * p[:, 0] + b * p[:, 1])
            return np.cos(arg) if kind == "cos" else np.sin(arg)
        a, b = self._cheb_term(i)
        (x0, x1), (y0, y1) = self.bounds
        u = np.clip((2 * p[:, 0] - x0 - x1) / (x1 - x0), -1, 1)
        v = np.clip((2 * p[:, 1] - y0 - y1) / (y1 - y0), -1, 1)
        return np.cos(a * np.arccos(u)) * np.cos(b * np.arccos(v))

    def function(self, i):
        return lambda pts: self.evaluate(i, pts)

    def sup_norm(self, i):
        if self.domain == "torus" or i == 1:
            return 1.0
        if i not in self._norm_cache:
            (x0, x1), (y0, y1) = self.bounds
            g = np.stack(np.meshgrid(np.linspace(x0, x1, 256), np.linspace(y0, y1, 256)), -1)
            self._norm_cache[i] = float(np.abs(self.evaluate(i, g.reshape(-1, 2))).max()) * (1 + 1e-3)
        return self._norm_cache[i]


def basis_for(system):
    return TestBasis(system.domain, system.bounds)


@dataclass(frozen=True)
class WeakStarDistance:
    value: float
    tail: float
    terms: tuple        # per-term contributions

    def __float__(self):
        return self.value


def weak_star_distance(mu, nu, basis, terms):
    """sum_{i<=terms} 2^-i |int psi_i dmu - int psi_i dnu| / (2 |psi_i|_inf)."""
    if terms < 1:
        raise ValueError("terms must be >= 1")
    parts = []
    for i in range(1, terms + 1):
        f = basis.function(i)
        diff = abs(mu.integrate(f) - nu.integrate(f))
        parts.append(2.0 ** -i * diff / (2 * basis.sup_norm(i)))
    return WeakStarDistance(math.fsum(parts), 2.0 ** -terms, tuple(parts))


def choose_K_r0(r, basis, family=None, sample_points=None, max_K=512):
    """K: smallest integer with 2^(-K+1) < r/2, enlarged until psi_1..psi_K is
    r-dense in `family` (sup distance on `sample_points`).  r0 then solves
    r0 (1 - 2^-K) / (2 min_i |psi_i|) < r/2 and is capped below r."""
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    K = 1
    while 2.0 ** (-K + 1) >= r / 2:
        K += 1
    if family:
        if sample_points is None:
            raise ValueError("r-density check needs sample points")
        for phi in family:
            vals = phi(sample_points)
            while min(np.abs(basis.evaluate(i, sample_points) - vals).max()
                      for i in range(1, K + 1)) >= r:
                K += 1
                if K > max_K:
                    raise ValueError("test family not r-dense within max_K basis functions")
    inv = max(1.0 / basis.sup_norm(i) for i in range(1, K + 1))
    bound = (r / 2) / ((1 - 2.0 ** -K) * 0.5 * inv)
    r0 = min(bound, r) * (1 - 1e-9)
    return K, r0


def modulus_of_continuity(phi, eps0, x, y, system=None):
    """Empirical sup |phi(x) - phi(y)| over pairs at distance <= eps0."""
    x, y = np.atleast_2d(x), np.atleast_2d(y)
    if system is not None and np.any(system.distance(x, y) > eps0 * (1 + 1e-12)):
        raise ValueError("pairs must lie within eps0")
    return float(np.abs(phi(x) - phi(y)).max()) if len(x) else 0.0


def sample_pairs(system, eps0, count, rng):
    """Random pairs (x, y) with d(x, y) <= eps0 inside the domain."""
    (x0, x1), (y0, y1) = system.bounds
    x = np.column_stack([rng.uniform(x0, x1, count), rng.uniform(y0, y1, count)])
    ang = rng.uniform(0, 2 * math.pi, count)
    rad = eps0 * np.sqrt(rng.uniform(0, 1, count))
    y = x + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    if system.is_torus:
        y = system.canonical(y)
    else:
        y[:, 0] = np.clip(y[:, 0], x0, x1)
        y[:, 1] = np.clip(y[:, 1], y0, y1)
    return x, y


# -- pressure ----------------------------------------------------------------

@dataclass(frozen=True)
class PressureEstimate:
    value: float
    method: str
    params: dict

    def as_dict(self):
        return {"value": self.value, "method": self.method, **self.params}


def pressure_from_cylinder_values(values, m):
    """(1/m) log sum_a e^{values[a]}: pressure of a full shift with
    potential constant on 1-cylinders, per original iterate."""
    v = np.asarray(values, dtype=float)
    return float(logsumexp(v)) / m


def pressure_variational(model, phi):
    """Pressure of phi on a shift model exposing `symbol_orbits` (N, m, 2) and `m`."""
    orbits = model.symbol_orbits
    N, m = orbits.shape[0], orbits.shape[1]
    vals = np.array([math.fsum(phi(orbits[a])) for a in range(N)])
    return PressureEstimate(pressure_from_cylinder_values(vals, m), "variational",
                            {"N": int(N), "m": int(m)})


def pressure_partition_function(system, pool, phi, n, eps):
    """(1/n) log sum over a greedy (n, eps)-separated subset of e^{S_n phi}."""
    pool = np.atleast_2d(np.asarray(pool, dtype=float))
    E = greedy_separated_set(system, n, eps, points=pool)
    traj = E.points
    sums = np.zeros(len(E))
    for _ in range(n):
        sums += phi(traj)
        traj = system.forward(traj)
    return PressureEstimate(float(logsumexp(sums)) / n, "partition-function",
                            {"n": int(n), "eps": float(eps), "card": len(E)})


@dataclass(frozen=True)
class ItemV:
    passed: bool
    strict: bool
    lower: float
    upper: float
    value: float
    margin: float

    def as_dict(self):
        return {"pass": self.passed, "strict_pass": self.strict, "lower": self.lower,
                "upper": self.upper, "pressure": self.value, "margin": self.margin}


def verify_item_v(pressure, integral, e, r):
    """Window e + int phi - r(7 + e) <= P < e + int phi + 4r, plus the stronger
    |P - (e + int phi)| < r."""
    P = pressure.value if isinstance(pressure, PressureEstimate) else float(pressure)
    lo = e + integral - r * (7 + e)
    hi = e + integral + 4 * r
    ok = lo <= P < hi
    return ItemV(bool(ok), bool(abs(P - (e + integral)) < r), lo, hi, P, min(P - lo, hi - P))
