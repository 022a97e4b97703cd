"""Birkhoff sums, uniform-convergence selections and the grid partition.

All selections work on index sets into a single master orbit.  Each one
evaluates a per-index inequality on an n-grid and keeps the indices that pass
at every grid value from some threshold on (an Egorov-style selection).
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .errors import OutOfRange, SelectionFailure, TooFine

DEFAULT_GRID = (50, 100, 200, 500, 1000, 2000)


@dataclass(frozen=True)
class Observable:
    name: str
    func: object
    sup_norm: float

    def __call__(self, pts):
        return self.func(np.atleast_2d(pts))


def constant_observable(c):
    return Observable(f"const({c})", lambda p: np.full(len(p), float(c)), abs(float(c)))


def coordinate_observable(k):
    return Observable(f"coord{k}", lambda p: p[:, k], 1.0)


def birkhoff_sum(orbit, phi, index, n):
    """S_n phi(x) = sum of phi over orbit[index : index + n]."""
    if n < 0 or index < 0 or index + n > len(orbit):
        raise OutOfRange(f"need index + n <= {len(orbit)}")
    return math.fsum(phi(orbit.points[index:index + n])) if n else 0.0


@dataclass(frozen=True)
class SelectionResult:
    name: str
    members: np.ndarray
    threshold: int | None
    fraction: float
    r: float
    delta: float
    success: bool
    n_grid: tuple
    fractions: tuple = field(default=())    # fraction passing at each single grid value

    def as_dict(self):
        return {"name": self.name, "threshold": self.threshold, "fraction": self.fraction,
                "r": self.r, "delta": self.delta, "success": self.success,
                "members": int(self.members.size), "n_grid": list(self.n_grid),
                "per_n_fraction": list(self.fractions)}


def egorov_select(name, indices, ok, n_grid, delta, r, strict=True):
    """Pick the smallest grid threshold at which >= 1 - delta of the indices
    pass for every grid value from the threshold on.

    `ok` is a boolean array of shape (len(n_grid), len(indices)).  Without
    `strict`, failure returns the best-achieving threshold and success=False.
    """
    indices = np.asarray(indices)
    ok = np.asarray(ok, dtype=bool)
    # tail[j] = passes at every grid value with position >= j
    tail = np.flip(np.logical_and.accumulate(np.flip(ok, 0), axis=0), 0)
    fr = tail.mean(axis=1) if indices.size else np.zeros(len(n_grid))
    per_n = tuple(float(x) for x in ok.mean(axis=1)) if indices.size else ()
    hit = np.nonzero(fr >= 1.0 - delta)[0]
    if hit.size:
        j = int(hit[0])
        success = True
    else:
        if strict:
            raise SelectionFailure(
                f"{name}: best fraction {fr.max():.3f} < {1 - delta:.3f} on grid {list(n_grid)}")
        j = int(np.argmax(fr))
        success = False
    return SelectionResult(name, indices[tail[j]], int(n_grid[j]), float(fr[j]), float(r),
                           float(delta), success, tuple(int(n) for n in n_grid), per_n)


def _check_grid(n_grid):
    g = tuple(int(n) for n in n_grid)
    if not g or list(g) != sorted(set(g)) or g[0] < 1:
        raise ValueError("n_grid must be increasing positive integers")
    return g


def _default_indices(length, lookahead, start=0, stop=None):
    stop = length if stop is None else stop
    return np.arange(start, max(start, min(stop, length - lookahead)))


def _average_deviation(values, target, indices, n_grid):
    # centering before the cumulative sum keeps rounding tiny
    c = np.concatenate([[0.0], np.cumsum(np.asarray(values, dtype=float) - target)])
    return np.array([np.abs(c[indices + n] - c[indices]) / n for n in n_grid])


def select_gamma_j(cocycle, chi_plus_sum, delta, r, n_grid=DEFAULT_GRID, indices=None,
                   strict=True):
    """|(1/n) log |Jac df^n on E^u| - sum chi^+| <= r uniformly in n >= n_J."""
    g = _check_grid(n_grid)
    v = cocycle.valid
    if indices is None:
        indices = _default_indices(v.stop, g[-1], v.start)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and indices.max() + g[-1] > v.stop:
        raise OutOfRange("indices lack lookahead for the largest grid value")
    dev = _average_deviation(cocycle.log_u, chi_plus_sum, indices, g)
    return egorov_select("gamma_J", indices, dev <= r, g, delta, r, strict)


def select_gamma_b(orbit, phi, delta, r, n_grid=DEFAULT_GRID, indices=None, mean=None,
                   strict=True, values=None):
    """|S_n phi / n - mean| <= r uniformly in n >= n_B.

    `mean` defaults to the full-orbit average; `values` may supply phi along
    the orbit directly (used for the geometric potential).
    """
    g = _check_grid(n_grid)
    vals = phi(orbit.points) if values is None else np.asarray(values, dtype=float)
    if mean is None:
        mean = math.fsum(vals) / vals.size
    if indices is None:
        indices = _default_indices(len(orbit), g[-1])
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and indices.max() + g[-1] > len(orbit):
        raise OutOfRange("indices lack lookahead for the largest grid value")
    dev = _average_deviation(vals, mean, indices, g)
    name = f"gamma_B[{getattr(phi, 'name', 'values')}]"
    return egorov_select(name, indices, dev <= r, g, delta, r, strict)


# -- partition ---------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    lo: tuple
    nx: int
    ny: int
    side_x: float
    side_y: float

    @property
    def count(self):
        return self.nx * self.ny

    @property
    def diameter(self):
        return math.hypot(self.side_x, self.side_y)

    def locate(self, pts):
        p = np.atleast_2d(pts)
        ix = np.clip(np.floor((p[:, 0] - self.lo[0]) / self.side_x).astype(np.int64), 0, self.nx - 1)
        iy = np.clip(np.floor((p[:, 1] - self.lo[1]) / self.side_y).astype(np.int64), 0, self.ny - 1)
        return ix * self.ny + iy

    def masses(self, pts):
        counts = np.bincount(self.locate(pts), minlength=self.count)
        return counts / counts.sum()


def grid_partition(system, rho):
    """Axis-aligned grid whose cells have diameter < rho / 2."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    side = rho / (2.0 * math.sqrt(2.0))
    (x0, x1), (y0, y1) = system.bounds
    nx = math.ceil((x1 - x0) / side)
    ny = math.ceil((y1 - y0) / side)
    if nx * ny > 1e8:
        raise TooFine(f"{nx * ny} cells")
    sx, sy = (x1 - x0) / nx, (y1 - y0) / ny
    if math.hypot(sx, sy) >= rho / 2:
        # exact tiling with side == rho/(2 sqrt 2) would sit on the bound
        nx += 1
        ny += 1
        sx, sy = (x1 - x0) / nx, (y1 - y0) / ny
    return Partition((x0, y0), nx, ny, sx, sy)


def recurrence_constant(masses, r):
    m = np.asarray(masses, dtype=float)
    if abs(m.sum() - 1.0) > 1e-9:
        raise ValueError("masses must sum to 1")
    pos = m[m > 0]
    return float(min(r, pos.min() / 4.0))


def return_window(n, r):
    """Times k in {n, ..., floor(n + r n)}."""
    return n, int(math.floor(n + r * n + 1e-12))


def select_gamma_r(orbit, cells, target, delta, r, n_grid=DEFAULT_GRID, indices=None,
                   strict=True):
    """Some k in {n, ..., floor(n + rn)} has f^k x in the cell of x and in F,
    uniformly in n >= n_R.

    `cells` gives the partition cell of every orbit point, `target` is a
    boolean mask (or index array) for F.
    """
    g = _check_grid(n_grid)
    length = len(orbit)
    cells = np.asarray(cells, dtype=np.int64)
    mask = np.zeros(length, dtype=bool)
    target = np.asarray(target)
    if target.dtype == bool:
        mask[:target.size] = target
    else:
        mask[target] = True
    if not mask.any():
        raise ValueError("target set is empty")
    top = return_window(g[-1], r)[1]
    if indices is None:
        indices = _default_indices(length, top + 1)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and indices.max() + top >= length:
        raise OutOfRange("indices lack lookahead for the largest return window")
    # sorted keys (cell, time) of target points; a window query is a searchsorted
    tpos = np.nonzero(mask)[0]
    keys = cells[tpos] * length + tpos
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    base = cells[indices] * length + indices
    ok = np.empty((len(g), indices.size), dtype=bool)
    for a, n in enumerate(g):
        lo, hi = return_window(n, r)
        pos = np.searchsorted(keys, base + lo, side="left")
        nxt = keys[np.minimum(pos, keys.size - 1)]
        ok[a] = (pos < keys.size) & (nxt <= base + hi)
    return egorov_select("gamma_R", indices, ok, g, delta, r, strict)


def count_returns(cells, target_mask, index, n, r):
    """Number of k in {n, ..., floor(n + rn)} with f^k x in P(x) and in F (by scanning)."""
    lo, hi = return_window(n, r)
    c = cells[index]
    return sum(1 for k in range(lo, hi + 1) if cells[index + k] == c and target_mask[index + k])
