"""Bowen balls, greedy separated sets and Brin-Katok local entropy."""
from dataclasses import dataclass, field
import math

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .statistics import egorov_select, _check_grid


def bowen_ball_contains(system, x, y, n, eps):
    """d(f^k x, f^k y) <= eps for all 0 <= k < n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a = np.asarray(x, dtype=float).reshape(1, 2)
    b = np.asarray(y, dtype=float).reshape(1, 2)
    for k in range(n):
        if system.distance(a, b)[0] > eps:
            return False
        if k < n - 1:
            a, b = system.forward(a), system.forward(b)
    return True


# -- trajectories ------------------------------------------------------------

class Trajectories:
    """Length-n forward trajectories of a candidate pool.

    Backed either by a master orbit (candidates are orbit indices, so
    f^k x is a lookup) or by explicit iteration of arbitrary points.
    """

    def __init__(self, system, n, points=None, orbit=None, indices=None):
        self.system, self.n = system, int(n)
        if orbit is not None:
            self.indices = np.asarray(indices, dtype=np.int64)
            if self.indices.size and self.indices.max() + n > len(orbit):
                raise ValueError("candidate indices need n orbit points of lookahead")
            self._orbit = orbit.points
            self._traj = None
        else:
            p = np.atleast_2d(np.asarray(points, dtype=float))
            traj = np.empty((p.shape[0], n, 2))
            traj[:, 0] = p
            for k in range(1, n):
                traj[:, k] = system.forward(traj[:, k - 1])
            self._traj = traj
            self.indices = None

    def __len__(self):
        return self._traj.shape[0] if self._traj is not None else self.indices.size

    def at(self, k, rows=None):
        if self._traj is not None:
            return self._traj[:, k] if rows is None else self._traj[rows, k]
        idx = self.indices if rows is None else self.indices[rows]
        return self._orbit[idx + k]

    def bowen_close(self, a, b, eps):
        """Boolean array: pairs (a[i], b[i]) within eps at every time < n."""
        ok = np.ones(len(a), dtype=bool)
        for k in range(self.n):
            live = np.nonzero(ok)[0]
            if live.size == 0:
                break
            d = self.system.distance(self.at(k, a[live]), self.at(k, b[live]))
            ok[live[d > eps]] = False
        return ok

    def key_points(self):
        """Time-0 and time-(n-1) positions stacked as 4-vectors for neighbour search."""
        if self.n == 1:
            return self.at(0)
        return np.hstack([self.at(0), self.at(self.n - 1)])


def close_pairs(traj, eps):
    """All unordered pairs (i < j) of candidates within Bowen distance eps."""
    keys = traj.key_points()
    box = 1.0 if traj.system.is_torus else None
    radius = eps * (math.sqrt(2.0) if keys.shape[1] == 4 else 1.0) * (1 + 1e-12)
    if traj.system.is_torus:
        keys = keys % 1.0
        keys[keys >= 1.0] = 0.0
    tree = cKDTree(keys, boxsize=box)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    if pairs.size == 0:
        return pairs.reshape(0, 2)
    keep = traj.bowen_close(pairs[:, 0], pairs[:, 1], eps)
    return pairs[keep]


@njit(cache=True)
def _greedy(n, indptr, nbrs):
    removed = np.zeros(n, dtype=np.bool_)
    chosen = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        if removed[i]:
            continue
        chosen[i] = True
        for p in range(indptr[i], indptr[i + 1]):
            removed[nbrs[p]] = True
    return chosen


def _adjacency(n, pairs):
    a = np.concatenate([pairs[:, 0], pairs[:, 1]])
    b = np.concatenate([pairs[:, 1], pairs[:, 0]])
    order = np.argsort(a, kind="stable")
    counts = np.bincount(a, minlength=n)
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return indptr, b[order].astype(np.int64)


@dataclass(frozen=True)
class SeparatedSet:
    positions: np.ndarray        # positions in the candidate list, in generation order
    points: np.ndarray
    indices: np.ndarray | None   # master-orbit indices when orbit-backed
    n: int
    eps: float
    pool_size: int

    def __len__(self):
        return self.positions.size

    def as_dict(self):
        return {"n": self.n, "eps": self.eps, "card": len(self), "pool": self.pool_size,
                "indices": None if self.indices is None else self.indices.tolist()}


def greedy_separated_set(system, n, eps, points=None, orbit=None, indices=None):
    """Take the first remaining candidate, delete every candidate in its Bowen
    ball B_n(x, eps), repeat.

    Candidates are either explicit `points` or master-orbit `indices` (with
    `orbit`), processed in the given order.
    """
    traj = Trajectories(system, n, points=points, orbit=orbit, indices=indices)
    size = len(traj)
    if size == 0:
        raise ValueError("empty candidate pool")
    pairs = close_pairs(traj, eps)
    indptr, nbrs = _adjacency(size, pairs)
    chosen = np.nonzero(_greedy(size, indptr, nbrs))[0]
    pts = traj.at(0, chosen)
    idx = None if traj.indices is None else traj.indices[chosen]
    return SeparatedSet(chosen, pts, idx, int(n), float(eps), size)


def separated_count_bounds(card, n, e, r, delta):
    """((1 - 5 delta) e^{n(e - r)} <= card, card <= e^{n(e + r)}), in log form."""
    if card < 1:
        raise ValueError("card must be >= 1")
    lc = math.log(card)
    lower = (1 - 5 * delta) <= 0 or math.log(1 - 5 * delta) + n * (e - r) <= lc
    return bool(lower), bool(lc <= n * (e + r))


# -- Brin-Katok --------------------------------------------------------------

@dataclass
class BrinKatokTable:
    n_list: tuple
    eps_list: tuple
    probes: np.ndarray
    masses: np.ndarray            # (len(eps), len(n), probes)
    reference_size: int
    estimates: np.ndarray         # -(1/n) log geometric mean, (len(eps), len(n))
    slopes: np.ndarray            # per-eps growth rate of -log mass in n
    headline: float
    zero_mass: np.ndarray = field(default=None)   # count of empty balls per (eps, n)

    def rows(self):
        for a, e in enumerate(self.eps_list):
            for b, n in enumerate(self.n_list):
                for p, m in zip(self.probes, self.masses[a, b]):
                    yield n, e, int(p), float(m)

    def as_dict(self):
        return {"n": list(self.n_list), "eps": list(self.eps_list),
                "estimates": self.estimates.tolist(), "slopes": self.slopes.tolist(),
                "headline": self.headline, "reference_size": self.reference_size,
                "zero_mass": self.zero_mass.tolist()}


def bowen_masses(orbit, probes, n_list, eps, stride=7):
    """Fraction of stride-subsampled orbit points inside B_n(x, eps) per probe.

    Returns an array of shape (len(n_list), len(probes)).
    """
    system = orbit.system
    n_list = tuple(int(n) for n in n_list)
    if list(n_list) != sorted(n_list):
        raise ValueError("n_list must be increasing")
    nmax = max(n_list)
    probes = np.asarray(probes, dtype=np.int64)
    if probes.max() + nmax > len(orbit):
        raise ValueError("probes need n_max orbit points of lookahead")
    ref = np.arange(0, len(orbit) - nmax, stride)
    pts = orbit.points
    box = 1.0 if system.is_torus else None
    tree = cKDTree(pts[ref], boxsize=box)
    lists = tree.query_ball_point(pts[probes], eps * (1 + 1e-12))
    out = np.zeros((len(n_list), probes.size))
    for j, cand in enumerate(lists):
        c = ref[np.asarray(cand, dtype=np.int64)]
        c = c[system.distance(pts[probes[j]], pts[c]) <= eps]
        alive = c
        k = 1
        for b, target in enumerate(n_list):
            while k < target and alive.size:
                d = system.distance(pts[probes[j] + k], pts[alive + k])
                alive = alive[d <= eps]
                k += 1
            out[b, j] = alive.size
    return out / ref.size, ref.size


def brin_katok_entropy(orbit, probes, n_list, eps_list, stride=7):
    """Local entropy from Bowen-ball masses.

    For each (n, eps) the estimate is -(1/n) log of the geometric mean of the
    ball masses over probes (empty balls flagged and excluded).  Because
    -log mu(B_n) ~ h n + c(eps), the headline divides out the eps-dependent
    offset: it is the least-squares slope of -log(geometric mean) in n at the
    smallest eps that resolves at least two n values.
    """
    probes = np.asarray(probes, dtype=np.int64)
    if probes.size < 30:
        raise ValueError("need at least 30 probes")
    n_list = tuple(sorted(int(n) for n in n_list))
    eps_list = tuple(sorted((float(e) for e in eps_list), reverse=True))
    masses = np.empty((len(eps_list), len(n_list), probes.size))
    ref_size = 0
    for a, e in enumerate(eps_list):
        masses[a], ref_size = bowen_masses(orbit, probes, n_list, e, stride)
    zero = (masses == 0).sum(axis=2)
    with np.errstate(divide="ignore"):
        logm = np.log(masses)
    est = np.full((len(eps_list), len(n_list)), np.nan)
    slopes = np.full(len(eps_list), np.nan)
    for a in range(len(eps_list)):
        for b, n in enumerate(n_list):
            good = masses[a, b] > 0
            # a column dominated by empty balls is unresolved
            if good.mean() >= 0.5:
                est[a, b] = -logm[a, b][good].mean() / n
        ok = np.isfinite(est[a])
        if ok.sum() >= 2:
            ns = np.array(n_list, dtype=float)[ok]
            slopes[a] = np.polyfit(ns, est[a][ok] * ns, 1)[0]
    fin = np.nonzero(np.isfinite(slopes))[0]
    headline = float(slopes[fin[-1]]) if fin.size else float("nan")
    return BrinKatokTable(n_list, eps_list, probes, masses, ref_size, est, slopes, headline, zero)


def select_gamma_e(orbit, probes, delta, h, r, eps, n_grid, stride=7, strict=True):
    """e^{-n(h+r)} <= mass(B_n(x, eps)) <= e^{-n(h-r)} uniformly in n >= n_E."""
    g = _check_grid(n_grid)
    probes = np.asarray(probes, dtype=np.int64)
    m, _ = bowen_masses(orbit, probes, g, eps, stride)
    ns = np.array(g, dtype=float)[:, None]
    with np.errstate(divide="ignore"):
        lm = np.log(m)
    ok = (lm >= -ns * (h + r)) & (lm <= -ns * (h - r))
    return egorov_select("gamma_E", probes, ok, g, delta, r, strict)
