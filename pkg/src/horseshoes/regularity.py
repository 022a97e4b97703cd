"""Tempered constants, Pesin blocks, Lyapunov charts and rectangle covers."""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.spatial import cKDTree

from .errors import (ChartTooSmall, CoverFailure, NotAGraph, NotHyperbolic,
                     OutOfRange, SeriesDivergence)

C1_CEILING = 1e6


# -- tempered constants ------------------------------------------------------

@dataclass(frozen=True)
class TemperedEstimate:
    indices: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    gamma: float
    horizon: int


def estimate_c1_c2(cocycle, gamma, chi, horizon=100, indices=None):
    """Smallest C1 with |df^n e^s| <= C1 e^{-n(chi-gamma)} and
    |df^-n e^u| <= C1 e^{-n(chi-gamma)} for 1 <= n <= horizon, and
    C2 = angle(E^s, E^u).

    C1 is clamped below at 1.  Points whose C1 exceeds 1e6 get C1 = inf and
    fall outside every block; NotHyperbolic is raised if that is all of them.
    """
    if not 0 < gamma < chi:
        raise ValueError("need 0 < gamma < chi")
    v = cocycle.valid
    if indices is None:
        indices = np.arange(v.start + horizon, v.stop - horizon)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise OutOfRange("no indices with a full horizon")
    if indices.min() - horizon < v.start or indices.max() + horizon > v.stop:
        raise OutOfRange("indices lack a full horizon inside the trustworthy range")
    cs = np.concatenate([[0.0], np.cumsum(cocycle.log_s)])
    cu = np.concatenate([[0.0], np.cumsum(cocycle.log_u)])
    rate = chi - gamma
    worst = np.zeros(indices.size)
    for n in range(1, horizon + 1):
        fwd = cs[indices + n] - cs[indices] + n * rate
        bwd = -(cu[indices] - cu[indices - n]) + n * rate
        np.maximum(worst, fwd, out=worst)
        np.maximum(worst, bwd, out=worst)
    c1 = np.exp(worst)
    bad = c1 > C1_CEILING
    if bad.all():
        raise NotHyperbolic("required C1 exceeds 1e6 everywhere: no contraction seen")
    c1[bad] = np.inf
    c2 = cocycle.angle(indices)
    return TemperedEstimate(indices, c1, c2, float(gamma), int(horizon))


def temperedness_check(values, gamma, max_offset=5):
    """Check values[i+n] <= e^{gamma |n|} values[i] for 1 <= |n| <= max_offset.

    Returns (holds, worst ratio) where the ratio is values[i+n]/(e^{gamma|n|} values[i]).
    """
    v = np.asarray(values, dtype=float)
    worst = 0.0
    for n in range(1, max_offset + 1):
        if n >= v.size:
            break
        f = v[n:] / (v[:-n] * math.exp(gamma * n))
        b = v[:-n] / (v[n:] * math.exp(gamma * n))
        worst = max(worst, float(f.max()), float(b.max()))
    return worst <= 1.0, worst


@dataclass(frozen=True)
class PesinBlock:
    level: float
    members: np.ndarray
    fraction: float


def pesin_block(estimate, level):
    """Orbit indices with C1 <= level and angle >= 1/level."""
    if level < 1:
        raise ValueError("level must be >= 1")
    ok = (estimate.c1 <= level) & (estimate.c2 >= 1.0 / level)
    members = estimate.indices[ok]
    return PesinBlock(float(level), members, float(ok.mean()))


def block_level_for_mass(estimate, mass, max_level=1e6):
    """Smallest level among 1, 2, 4, ... whose block carries at least `mass`."""
    level = 1.0
    while level <= max_level:
        blk = pesin_block(estimate, level)
        if blk.fraction >= mass:
            return blk
        level *= 2.0
    raise NotHyperbolic(f"no Pesin block up to level {max_level:g} reaches mass {mass}")


# -- Lyapunov inner product and charts --------------------------------------

def lyapunov_gram(cocycle, index, gamma, chi_s, chi_u, truncation=200):
    """Gram matrix of the Lyapunov inner product in the (e^s, e^u) basis.

    Both vectors are orthogonal for this inner product, so the matrix is
    diagonal; the series are truncated after `truncation` terms.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if index - truncation < 0 or index + truncation > len(cocycle.orbit):
        raise OutOfRange("truncation window leaves the orbit")
    n = np.arange(truncation)
    fwd = np.concatenate([[0.0], np.cumsum(cocycle.log_s[index:index + truncation - 1])])
    bwd = np.concatenate([[0.0], np.cumsum(cocycle.log_u[index - truncation + 1:index][::-1])])
    ts = np.exp(2.0 * fwd - 2.0 * n * chi_s - 2.0 * n * gamma)
    tu = np.exp(-2.0 * bwd + 2.0 * n * chi_u - 2.0 * n * gamma)
    h = truncation // 2
    for t in (ts, tu):
        if not np.all(np.isfinite(t)) or t[h:].sum() > t[:h].sum():
            raise SeriesDivergence(f"Lyapunov series does not settle at index {index}")
    return np.diag([math.fsum(ts), math.fsum(tu)])


def geometric_tail_bound(gamma, truncation):
    return math.exp(-2 * gamma * truncation) / (1 - math.exp(-2 * gamma))


@dataclass(frozen=True)
class LyapunovChart:
    system: object
    index: int
    center: np.ndarray
    C: np.ndarray
    C_inv: np.ndarray
    q: float
    gamma: float
    next_center: np.ndarray
    C_next: np.ndarray
    gram: np.ndarray

    def to_chart(self, pts, C_inv=None):
        d = self.system.displacement(self.center, pts)
        return d @ (self.C_inv if C_inv is None else C_inv).T

    def from_chart(self, w):
        return self.system.canonical(self.center + np.asarray(w) @ self.C.T)

    def lifted_map(self, w):
        """F_x(w) = C(fx)^-1 (f(x + C w) - f(x)) with unwrapped torus difference."""
        w = np.atleast_2d(np.asarray(w, dtype=float))
        img = self.system.forward(self.center + w @ self.C.T)
        d = self.system.displacement(self.next_center, img)
        return d @ np.linalg.inv(self.C_next).T

    def linear_part(self):
        jac = self.system.jacobian(self.center)[0]
        return np.linalg.inv(self.C_next) @ jac @ self.C


def _chart_matrix(cocycle, index, gamma, chi_s, chi_u, truncation):
    g = lyapunov_gram(cocycle, index, gamma, chi_s, chi_u, truncation)
    return np.column_stack([cocycle.es[index] / math.sqrt(g[0, 0]),
                            cocycle.eu[index] / math.sqrt(g[1, 1])]), g


def lyapunov_chart(cocycle, index, gamma, spectrum, rho0=0.25, truncation=200):
    """Chart at orbit[index]: w -> x + C w with C normalising the Lyapunov norm.

    The chart radius is q = rho0 * min(1, 1/|C^-1|).
    """
    chi_s, chi_u = spectrum.values[0], spectrum.values[-1]
    C, g = _chart_matrix(cocycle, index, gamma, chi_s, chi_u, truncation)
    Cn, _ = _chart_matrix(cocycle, index + 1, gamma, chi_s, chi_u, truncation)
    C_inv = np.linalg.inv(C)
    q = rho0 * min(1.0, 1.0 / np.linalg.norm(C_inv, 2))
    if q < 1e-8:
        raise ChartTooSmall(f"chart radius {q:.3g} at index {index}")
    pts = cocycle.points
    return LyapunovChart(cocycle.system, int(index), pts[index].copy(), C, C_inv, float(q),
                         float(gamma), pts[index + 1].copy(), Cn, g)


# -- rectangles --------------------------------------------------------------

@dataclass(frozen=True)
class Rectangle:
    """R(x, h) = x + C [-a, a]^2 with a = h q / sqrt(2)."""
    chart: LyapunovChart
    h: float

    def __post_init__(self):
        if not 0 < self.h <= 1:
            raise ValueError("h must lie in (0, 1]")

    @property
    def half_width(self):
        return self.h * self.chart.q / math.sqrt(2.0)

    @property
    def center(self):
        return self.chart.center

    def to_unit(self, pts):
        """Chart coordinates scaled so the rectangle is [-1, 1]^2."""
        return self.chart.to_chart(pts) / self.half_width

    def contains(self, pts, slack=0.0):
        u = self.to_unit(np.atleast_2d(pts))
        return np.all(np.abs(u) <= 1.0 + slack, axis=-1)

    @property
    def corners(self):
        a = self.half_width
        w = np.array([[-a, -a], [a, -a], [a, a], [-a, a]])
        return self.chart.center + w @ self.chart.C.T

    @property
    def diameter(self):
        c1, c2 = self.chart.C[:, 0], self.chart.C[:, 1]
        return 2 * self.half_width * max(np.linalg.norm(c1 + c2), np.linalg.norm(c1 - c2))

    @property
    def inradius(self):
        C = self.chart.C
        return self.half_width * abs(np.linalg.det(C)) / max(np.linalg.norm(C[:, 0]),
                                                             np.linalg.norm(C[:, 1]))


def graph_lipschitz(base, height):
    order = np.argsort(base, kind="stable")
    b, h = np.asarray(base)[order], np.asarray(height)[order]
    db, dh = np.diff(b), np.diff(h)
    if np.any((db <= 1e-14) & (np.abs(dh) > 1e-9)):
        raise NotAGraph("two samples share a base coordinate with different heights")
    keep = db > 1e-14
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(dh[keep]) / db[keep]))


def admissibility_check(rect, samples, kind, L):
    """Is the sampled curve an L-Lipschitz graph across the rectangle?

    `samples` are chart coordinates (s, u).  A stable graph is u = xi(s)
    over the full s-extent, an unstable graph s = eta(u).  The check is done
    in coordinates where the rectangle is [-1, 1]^2, which leaves slopes
    unchanged.
    """
    if not 0 < L < 0.5:
        raise ValueError("L must lie in (0, 1/2)")
    w = np.asarray(samples, dtype=float) / rect.half_width
    base, height = (w[:, 0], w[:, 1]) if kind == "stable" else (w[:, 1], w[:, 0])
    if base.min() > -1 + 1e-9 or base.max() < 1 - 1e-9:
        raise ValueError("samples must span the full base extent")
    if np.any(np.abs(height) > 1 + 1e-12):
        return False
    return graph_lipschitz(base, height) <= L


# -- cover -------------------------------------------------------------------

def farthest_point_net(system, pts, radius, max_centers=10_000):
    """Greedy net: every point ends within `radius` of a center, centers are
    pairwise more than `radius` apart.  Returns positions into pts."""
    centers = [0]
    dist = system.distance(pts[0], pts)
    while True:
        j = int(np.argmax(dist))
        if dist[j] <= radius:
            return np.array(centers, dtype=np.int64)
        if len(centers) >= max_centers:
            raise CoverFailure(f"more than {max_centers} rectangles needed at radius {radius}")
        centers.append(j)
        np.minimum(dist, system.distance(pts[j], pts), out=dist)


@dataclass
class RectangleCover:
    system: object
    center_indices: np.ndarray
    rectangles: list
    h: float
    rho: float
    eps1: float
    gamma: float
    chi: float
    L: float
    _tree: object = field(default=None, repr=False)

    @property
    def lam(self):
        return math.exp(-self.chi + self.gamma)

    @property
    def size(self):
        return len(self.rectangles)

    @property
    def centers(self):
        return np.array([r.center for r in self.rectangles])

    def locate(self, pts):
        """(nearest center, distance) for each point."""
        if self._tree is None:
            box = 1.0 if self.system.is_torus else None
            self._tree = cKDTree(self.system.canonical(self.centers), boxsize=box)
        d, i = self._tree.query(self.system.canonical(np.atleast_2d(pts)))
        return i, d


def rectangle_cover(cocycle, block_indices, gamma, spectrum, eps1, rho=None,
                    rho0=0.25, L=0.25, truncation=200, max_centers=10_000, net_radius=None):
    """Cover the block by balls B(x_i, rho), each inside a rectangle R(x_i, h)
    of diameter below eps1.

    Centers form a farthest-point net of radius `net_radius` (default rho);
    a finer net gives more rectangles with the same ball radius.
    """
    if rho is None:
        rho = eps1 / 5.0
    net_radius = rho if net_radius is None else net_radius
    if not 0 < net_radius <= rho:
        raise ValueError("net_radius must lie in (0, rho]")
    block_indices = np.asarray(block_indices, dtype=np.int64)
    if block_indices.size == 0:
        raise CoverFailure("empty block")
    system = cocycle.system
    pts = cocycle.points[block_indices]
    pos = farthest_point_net(system, pts, net_radius, max_centers)
    centers = block_indices[pos]
    charts = [lyapunov_chart(cocycle, int(i), gamma, spectrum, rho0, truncation) for i in centers]
    diam1 = max(Rectangle(c, 1.0).diameter for c in charts)
    h = min(1.0, (1 - 1e-9) * eps1 / diam1)
    rects = [Rectangle(c, h) for c in charts]
    worst = min(r.inradius for r in rects)
    if worst <= rho:
        raise CoverFailure(f"ball radius {rho:.4g} does not fit inside the smallest rectangle "
                           f"(inradius {worst:.4g}); lower rho or raise eps1")
    chi = spectrum.chi
    return RectangleCover(system, centers, rects, float(h), float(rho), float(eps1),
                          float(gamma), float(chi), float(L))


# -- items 3-5 for a single return -------------------------------------------

@dataclass
class ReturnRecord:
    index: int
    m: int
    i: int
    j: int
    escaped: bool = False
    stable_admissible: bool = False
    unstable_admissible: bool = False
    stable_lipschitz: float = float("nan")
    unstable_lipschitz: float = float("nan")
    trace_depth: int = 0
    diameter_ratio: float | None = None
    jacobian_deviation: float = float("nan")
    jacobian_ok: bool = False
    leaf_grid: np.ndarray | None = field(default=None, repr=False)
    leaf_heights: np.ndarray | None = field(default=None, repr=False)
    u_band: tuple | None = None
    leaf_points: np.ndarray | None = field(default=None, repr=False)

    @property
    def item3(self):
        return self.stable_admissible and self.unstable_admissible

    @property
    def item4(self):
        return self.diameter_ratio is not None and self.diameter_ratio <= 1.0

    def as_dict(self):
        return {
            "index": self.index, "m": self.m, "i": self.i, "j": self.j,
            "escaped": self.escaped,
            "item3": {"stable": self.stable_admissible, "unstable": self.unstable_admissible,
                      "stable_lipschitz": self.stable_lipschitz,
                      "unstable_lipschitz": self.unstable_lipschitz,
                      "trace_depth": self.trace_depth},
            "item4": {"max_ratio": self.diameter_ratio, "pass": self.item4},
            "item5": {"deviation": self.jacobian_deviation, "pass": self.jacobian_ok},
        }


def _trace_depth(mean_log_rate, length, m, floor=1e-9):
    """Largest depth <= m keeping the traced seed segment above `floor`."""
    rate = abs(mean_log_rate)
    if rate == 0:
        return m
    return int(max(1, min(m, math.floor(math.log(length / floor) / rate))))


def _graph_on_grid(rect, pts, kind, grid):
    """Interpolate a traced curve as a graph over the unit grid, or None if
    it is not monotone in its base coordinate or does not span the rectangle."""
    w = rect.to_unit(pts)
    base, height = (w[:, 0], w[:, 1]) if kind == "stable" else (w[:, 1], w[:, 0])
    db = np.diff(base)
    if not (np.all(db > 0) or np.all(db < 0)):
        return None
    order = np.argsort(base)
    base, height = base[order], height[order]
    if base[0] > -1 or base[-1] < 1:
        return None
    return np.interp(grid, base, height)


def _line_interval(w0, d, a):
    lo, hi = -np.inf, np.inf
    for k in range(2):
        if abs(d[k]) < 1e-300:
            if abs(w0[k]) > a:
                return None
            continue
        t1, t2 = (-a - w0[k]) / d[k], (a - w0[k]) / d[k]
        lo, hi = max(lo, min(t1, t2)), min(hi, max(t1, t2))
    return (lo, hi) if lo <= hi else None


def return_rectangle_check(cover, cocycle, index, m, r, i=None, j=None, samples=33,
                           overshoot=1.25):
    """Items 3-5 for the return orbit[index] -> orbit[index + m].

    Item 3 traces the stable leaf through x (a short E^s segment at f^d x
    pulled back d steps) and the unstable leaf through f^m x (a short E^u
    segment pushed forward d steps), and tests each for being an
    L-Lipschitz graph across the rectangle.  d is capped so the seed segment
    stays above double precision resolution.

    Item 4 follows the four corners of the return component, taken in the
    Oseledets frame of x, along the orbit of x.  This is exact for linear
    maps and first order otherwise.

    Item 5 compares unstable Jacobian averages over m steps at x and at the
    rectangle center.
    """
    system = cocycle.system
    pts = cocycle.points
    cocycle.check(index, index + m)
    if i is None or j is None:
        (ci, cj), _ = cover.locate(np.array([pts[index], pts[index + m]]))
        i = int(ci) if i is None else i
        j = int(cj) if j is None else j
    Ri, Rj = cover.rectangles[i], cover.rectangles[j]
    rec = ReturnRecord(int(index), int(m), int(i), int(j))
    grid = np.linspace(-1.0, 1.0, samples)
    t = np.linspace(-1.0, 1.0, 4 * samples + 1)

    # chords of the E^s line through x and the E^u line through f^m x
    alpha = _line_interval(Ri.chart.to_chart(pts[index]), Ri.chart.C_inv @ cocycle.es[index],
                           Ri.half_width)
    beta = _line_interval(Rj.chart.to_chart(pts[index + m]),
                          Rj.chart.C_inv @ cocycle.eu[index + m], Rj.half_width)
    if alpha is None or beta is None:
        rec.escaped = True
        return _item5(rec, cover, cocycle, index, m, r, i)

    # item 3: stable leaf through x
    ext = overshoot * max(abs(alpha[0]), abs(alpha[1]))
    ls = cocycle.log_s[index:index + m]
    d = _trace_depth(ls.mean(), ext, m)
    seed_len = ext * math.exp(math.fsum(ls[:d]))
    seg = pts[index + d] + np.outer(t * seed_len, cocycle.es[index + d])
    for _ in range(d):
        seg = system.inverse(seg)
    leaf = _graph_on_grid(Ri, seg, "stable", grid)
    # item 3: unstable leaf through f^m x
    lu = cocycle.log_u[index:index + m]
    ext_u = overshoot * max(abs(beta[0]), abs(beta[1]))
    du = _trace_depth(lu.mean(), ext_u, m)
    seed_u = ext_u * math.exp(-math.fsum(lu[m - du:]))
    useg = pts[index + m - du] + np.outer(t * seed_u, cocycle.eu[index + m - du])
    for _ in range(du):
        useg = system.forward(useg)
    uleaf = _graph_on_grid(Rj, useg, "unstable", grid)
    rec.trace_depth = min(d, du)
    if leaf is None or uleaf is None:
        rec.escaped = True
    else:
        rec.leaf_grid, rec.leaf_heights = grid, leaf
        rec.stable_lipschitz = graph_lipschitz(grid, leaf)
        rec.unstable_lipschitz = graph_lipschitz(grid, uleaf)
        a_i, a_j = Ri.half_width, Rj.half_width
        rec.stable_admissible = admissibility_check(
            Ri, np.column_stack([grid, leaf]) * a_i, "stable", cover.L)
        rec.unstable_admissible = admissibility_check(
            Rj, np.column_stack([uleaf, grid]) * a_j, "unstable", cover.L)
        inside = np.abs(leaf) <= 1
        rec.leaf_points = Ri.chart.from_chart(np.column_stack([grid, leaf])[inside] * a_i)

    # item 4: component corners along the orbit of x (only for i == j)
    a = Ri.half_width
    S = np.exp(np.concatenate([[0.0], np.cumsum(ls)]))
    U = np.exp(np.concatenate([[0.0], np.cumsum(lu)]))
    b0, b1 = beta[0] / U[m], beta[1] / U[m]
    # u-band of the component at time 0, in unit coordinates of R_i
    du_unit = (Ri.chart.C_inv @ cocycle.eu[index])[1] / a
    rec.u_band = tuple(sorted((b0 * du_unit, b1 * du_unit)))
    if i == j:
        lam = cover.lam
        diamR = Ri.diameter
        worst = 0.0
        for k in range(m + 1):
            es_k, eu_k = cocycle.es[index + k], cocycle.eu[index + k]
            corners = np.array([al * S[k] * es_k + be * U[k] * eu_k
                                for al in alpha for be in (b0, b1)])
            diff = corners[:, None, :] - corners[None, :, :]
            diam = float(np.sqrt((diff ** 2).sum(-1)).max())
            worst = max(worst, diam / (3 * diamR * max(lam ** k, lam ** (m - k))))
        rec.diameter_ratio = worst

    return _item5(rec, cover, cocycle, index, m, r, i)


def _item5(rec, cover, cocycle, index, m, r, i):
    ci = int(cover.center_indices[i])
    rec.jacobian_deviation = abs(cocycle.log_unstable_sum(index, m)
                                 - cocycle.log_unstable_sum(ci, m)) / m
    rec.jacobian_ok = rec.jacobian_deviation < r
    return rec


# -- dominated splitting and N-hyperbolicity ---------------------------------

def domination_check(system, points, es, eu, N=1):
    """Is |df^N v| <= |df^N w| / 2 for unit v in E^s, w in E^u at every sample?

    Returns (verdict, worst ratio |df^N v| / |df^N w|); the margin is 1/2 - ratio.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    v = np.atleast_2d(es) / np.linalg.norm(np.atleast_2d(es), axis=1)[:, None]
    w = np.atleast_2d(eu) / np.linalg.norm(np.atleast_2d(eu), axis=1)[:, None]
    for _ in range(N):
        jac = system.jacobian(p)
        v = np.einsum("nij,nj->ni", jac, v)
        w = np.einsum("nij,nj->ni", jac, w)
        p = system.forward(p)
    ratio = np.linalg.norm(v, axis=1) / np.linalg.norm(w, axis=1)
    worst = float(ratio.max())
    return worst <= 0.5, worst


def n_hyperbolicity_averages(cocycle, index, N, gamma, chi, blocks=None):
    """Running averages (1/lN) sum_k log|df^N on E^s(f^{kN} x)| and the
    backward analogue on E^u; verdict is both <= -chi + gamma."""
    v = cocycle.valid
    if blocks is None:
        blocks = max(1, min(index - v.start, v.stop - index) // N)
    span = blocks * N
    cocycle.check(index - span, index + span)
    fwd = math.fsum(cocycle.log_s[index:index + span]) / span
    bwd = -math.fsum(cocycle.log_u[index - span:index]) / span
    return fwd, bwd, (fwd <= -chi + gamma) and (bwd <= -chi + gamma)
