"""Built-in two dimensional maps, orbit sampling and distances.

Each system is a small frozen record.  The heavy lifting (orbit iteration,
inverse solves) lives in compiled kernels that dispatch on an integer kind,
so a single cached compilation serves every built-in.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from numba import njit

from .errors import InversionUnavailable, OrbitEscape

IDENTITY, ROTATION, CAT, PERTURBED_CAT, HENON, BAKER, LINEAR_HORSESHOE = range(7)
TWO_PI = 2.0 * math.pi


@njit(cache=True)
def _wrap01(v):
    v = v % 1.0
    if v >= 1.0:
        v = 0.0
    return v


@njit(cache=True)
def _forward(kind, p, x, y):
    if kind == IDENTITY:
        return x, y
    if kind == ROTATION:
        return _wrap01(x + p[0]), _wrap01(y + p[1])
    if kind == CAT:
        return _wrap01(2.0 * x + y), _wrap01(x + y)
    if kind == PERTURBED_CAT:
        k = p[0] / TWO_PI
        return (_wrap01(2.0 * x + y + k * math.sin(TWO_PI * y)),
                _wrap01(x + y + k * math.sin(TWO_PI * x)))
    if kind == HENON:
        return 1.0 + y - p[0] * x * x, p[1] * x
    if kind == BAKER:
        if x < 0.5:
            return 2.0 * x, 0.5 * y
        return 2.0 * x - 1.0, 0.5 * y + 0.5
    # linear horseshoe
    if x < 0.5:
        return 3.0 * x, y / 3.0
    return 3.0 * x - 2.0, y / 3.0 + 2.0 / 3.0


@njit(cache=True)
def _centered(v):
    return v - math.floor(v + 0.5)


@njit(cache=True)
def _inverse(kind, p, x, y):
    if kind == IDENTITY:
        return x, y
    if kind == ROTATION:
        return _wrap01(x - p[0]), _wrap01(y - p[1])
    if kind == CAT:
        return _wrap01(x - y), _wrap01(2.0 * y - x)
    if kind == PERTURBED_CAT:
        k = p[0] / TWO_PI
        # fixed point start, then Newton on the torus-wrapped residual
        u, v = x - y, 2.0 * y - x
        for _ in range(3):
            gx = k * math.sin(TWO_PI * v)
            gy = k * math.sin(TWO_PI * u)
            u, v = (x - gx) - (y - gy), 2.0 * (y - gy) - (x - gx)
        for _ in range(8):
            rx = _centered(2.0 * u + v + k * math.sin(TWO_PI * v) - x)
            ry = _centered(u + v + k * math.sin(TWO_PI * u) - y)
            a = 2.0
            b = 1.0 + p[0] * math.cos(TWO_PI * v)
            c = 1.0 + p[0] * math.cos(TWO_PI * u)
            d = 1.0
            det = a * d - b * c
            du = (d * rx - b * ry) / det
            dv = (-c * rx + a * ry) / det
            u -= du
            v -= dv
            if abs(du) + abs(dv) < 1e-17:
                break
        return _wrap01(u), _wrap01(v)
    if kind == HENON:
        xp = y / p[1]
        return xp, x - 1.0 + p[0] * xp * xp
    if kind == BAKER:
        if y < 0.5:
            return 0.5 * x, 2.0 * y
        return 0.5 * x + 0.5, 2.0 * y - 1.0
    if y < 0.5:
        return x / 3.0, 3.0 * y
    return (x + 2.0) / 3.0, 3.0 * y - 2.0


@njit(cache=True)
def _map_many(kind, p, pts, backward):
    out = np.empty_like(pts)
    for i in range(pts.shape[0]):
        if backward:
            a, b = _inverse(kind, p, pts[i, 0], pts[i, 1])
        else:
            a, b = _forward(kind, p, pts[i, 0], pts[i, 1])
        out[i, 0] = a
        out[i, 1] = b
    return out


@njit(cache=True)
def _iterate(kind, p, x, y, burn_in, length, lo0, hi0, lo1, hi1):
    for _ in range(burn_in):
        x, y = _forward(kind, p, x, y)
    out = np.empty((length, 2))
    for i in range(length):
        if not (lo0 <= x <= hi0 and lo1 <= y <= hi1):
            return out, i
        out[i, 0] = x
        out[i, 1] = y
        x, y = _forward(kind, p, x, y)
    return out, length


@njit(cache=True)
def _jacobian_many(kind, p, pts):
    n = pts.shape[0]
    out = np.zeros((n, 2, 2))
    for i in range(n):
        x, y = pts[i, 0], pts[i, 1]
        if kind == IDENTITY or kind == ROTATION:
            out[i, 0, 0] = 1.0
            out[i, 1, 1] = 1.0
        elif kind == CAT:
            out[i, 0, 0] = 2.0
            out[i, 0, 1] = 1.0
            out[i, 1, 0] = 1.0
            out[i, 1, 1] = 1.0
        elif kind == PERTURBED_CAT:
            out[i, 0, 0] = 2.0
            out[i, 0, 1] = 1.0 + p[0] * math.cos(TWO_PI * y)
            out[i, 1, 0] = 1.0 + p[0] * math.cos(TWO_PI * x)
            out[i, 1, 1] = 1.0
        elif kind == HENON:
            out[i, 0, 0] = -2.0 * p[0] * x
            out[i, 0, 1] = 1.0
            out[i, 1, 0] = p[1]
        elif kind == BAKER:
            out[i, 0, 0] = 2.0
            out[i, 1, 1] = 0.5
        else:
            out[i, 0, 0] = 3.0
            out[i, 1, 1] = 1.0 / 3.0
    return out


@dataclass(frozen=True)
class System:
    """A built-in invertible map of a two dimensional domain."""

    name: str
    kind: int
    params: tuple = ()
    domain: str = "torus"
    bounds: tuple = ((0.0, 1.0), (0.0, 1.0))
    known_spectrum: tuple | None = None
    area_preserving: bool = False
    invertible: bool = True
    init_box: tuple | None = None
    dimension: int = field(default=2, init=False)

    @property
    def is_torus(self):
        return self.domain == "torus"

    def _p(self):
        return np.asarray(self.params if self.params else (0.0,), dtype=np.float64)

    def forward(self, pts):
        pts = _as_points(pts)
        return _map_many(self.kind, self._p(), pts, False)

    def inverse(self, pts):
        if not self.invertible:
            raise InversionUnavailable(f"{self.name} has no inverse")
        pts = _as_points(pts)
        return _map_many(self.kind, self._p(), pts, True)

    def jacobian(self, pts):
        """Derivative matrices, shape (N, 2, 2)."""
        return _jacobian_many(self.kind, self._p(), _as_points(pts))

    def canonical(self, pts):
        pts = np.array(pts, dtype=np.float64)
        if self.is_torus:
            pts = pts % 1.0
            pts[pts >= 1.0] = 0.0
        return pts

    def displacement(self, a, b):
        """Shortest vector from a to b (torus-unwrapped on the torus)."""
        d = np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)
        if self.is_torus:
            d = d - np.floor(d + 0.5)
        return d

    def distance(self, a, b):
        return np.linalg.norm(self.displacement(a, b), axis=-1)

    def sample_initial(self, rng):
        if self.init_box is not None:
            (x0, x1), (y0, y1) = self.init_box
        else:
            (x0, x1), (y0, y1) = self.bounds
        return np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])


def _as_points(pts):
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts.reshape(1, 2)
    return np.ascontiguousarray(pts)


def torus_distance(a, b):
    d = np.abs(np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)) % 1.0
    d = np.minimum(d, 1.0 - d)
    return np.sqrt((d * d).sum(axis=-1))


# -- built-ins ---------------------------------------------------------------

CAT_EXPONENT = math.log((3.0 + math.sqrt(5.0)) / 2.0)


def identity_map():
    return System("identity", IDENTITY, (), known_spectrum=(0.0, 0.0), area_preserving=True)


def rotation(alpha=math.sqrt(2.0) - 1.0, beta=(math.sqrt(5.0) - 1.0) / 2.0):
    return System("rotation", ROTATION, (float(alpha), float(beta)),
                  known_spectrum=(0.0, 0.0), area_preserving=True)


def cat_map():
    return System("cat", CAT, (), known_spectrum=(-CAT_EXPONENT, CAT_EXPONENT),
                  area_preserving=True)


def perturbed_cat_map(kappa=0.02):
    if not 0.0 <= kappa <= 0.05:
        raise ValueError("perturbation strength must lie in [0, 0.05]")
    return System("perturbed_cat", PERTURBED_CAT, (float(kappa),))


def henon(a=1.4, b=0.3):
    if b == 0:
        raise ValueError("b must be nonzero for an invertible map")
    if a >= 5.0:
        # invariant set sits inside this square
        R = (1.0 + abs(b) + math.sqrt((1.0 + abs(b)) ** 2 + 4.0 * a)) / (2.0 * a)
        bounds = ((-R, R), (-R, R))
        init = bounds
    else:
        bounds = ((-2.0, 2.0), (-1.0, 1.0))
        init = ((-0.1, 0.1), (-0.1, 0.1))
    return System("henon", HENON, (float(a), float(b)), domain="planar",
                  bounds=bounds, init_box=init)


def henon_horseshoe():
    return henon(6.0, 0.3)


def baker_map():
    """Piecewise linear map of the unit square with derivative diag(2, 1/2)."""
    return System("baker", BAKER, (), domain="planar",
                  known_spectrum=(-math.log(2.0), math.log(2.0)), area_preserving=True)


def linear_horseshoe():
    """Two-branch affine horseshoe with derivative diag(3, 1/3)."""
    return System("linear_horseshoe", LINEAR_HORSESHOE, (), domain="planar",
                  known_spectrum=(-math.log(3.0), math.log(3.0)))


BUILTINS = {
    "identity": identity_map,
    "rotation": rotation,
    "cat": cat_map,
    "perturbed_cat": perturbed_cat_map,
    "henon": henon,
    "henon_horseshoe": henon_horseshoe,
    "baker": baker_map,
    "linear_horseshoe": linear_horseshoe,
}


def make_system(name, **params):
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(BUILTINS)}") from None
    return factory(**params)


# -- orbits ------------------------------------------------------------------

@dataclass(frozen=True)
class OrbitSegment:
    system: System
    points: np.ndarray
    seed: int | None = None
    burn_in: int = 0

    def __len__(self):
        return self.points.shape[0]

    @property
    def base_point(self):
        return self.points[0]


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def orbit_from(system, x0, length, burn_in=0):
    """Iterate forward from x0; raises OrbitEscape if the orbit leaves the domain."""
    if length < 1:
        raise ValueError("length must be positive")
    x0 = system.canonical(np.asarray(x0, dtype=np.float64).reshape(2))
    (lo0, hi0), (lo1, hi1) = system.bounds
    if system.is_torus:
        lo0 = lo1 = -np.inf
        hi0 = hi1 = np.inf
    pts, filled = _iterate(system.kind, system._p(), x0[0], x0[1], int(burn_in), int(length),
                           lo0, hi0, lo1, hi1)
    if filled < length:
        raise OrbitEscape(f"{system.name} orbit left its domain after {filled} steps")
    return pts


def _baker_orbit(rng, burn_in, length):
    # Doubling in floating point drains the mantissa, so baker orbits are
    # realized from a random bi-infinite digit sequence instead.
    nbits = 53
    bits = rng.integers(0, 2, size=burn_in + length + 2 * nbits, dtype=np.int64)
    w = 0.5 ** np.arange(1, nbits + 1)
    view = np.lib.stride_tricks.sliding_window_view(bits, nbits)
    start = nbits + burn_in
    x = view[start:start + length] @ w
    past = view[start - nbits:start - nbits + length][:, ::-1] @ w
    return np.column_stack([x, past])


def sample_orbit(system, seed, length, burn_in=1000):
    """Orbit segment of the given length from a seeded random start."""
    if length < 1:
        raise ValueError("length must be positive")
    rng = np.random.default_rng(seed)
    if system.kind == BAKER:
        pts = _baker_orbit(rng, burn_in, length)
    else:
        x0 = system.sample_initial(rng)
        pts = orbit_from(system, x0, length, burn_in=burn_in)
    return OrbitSegment(system, _freeze(pts), seed=seed, burn_in=burn_in)


def step(system, pts, k):
    """Apply f^k (k may be negative)."""
    pts = _as_points(pts)
    if k < 0 and not system.invertible:
        raise InversionUnavailable(system.name)
    for _ in range(abs(k)):
        pts = system.forward(pts) if k > 0 else system.inverse(pts)
    return pts


def derivative(system, x, k=1):
    """Matrix of df^k at x (k may be negative)."""
    x = _as_points(x)[0:1]
    m = np.eye(2)
    if k >= 0:
        for _ in range(k):
            m = system.jacobian(x)[0] @ m
            x = system.forward(x)
    else:
        for _ in range(-k):
            x = system.inverse(x)
            m = m @ system.jacobian(x)[0]
        m = np.linalg.inv(m)
    return m
