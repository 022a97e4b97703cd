"""Derivative cocycle along an orbit: Lyapunov spectrum and Oseledets splitting.

The one-pass `orbit_cocycle` pushes an unstable direction forward and pulls a
stable direction backward along the whole orbit, keeping the one-step log
stretches.  Everything downstream (tempered constants, Lyapunov charts,
Birkhoff sums of the geometric potential) is built from those arrays.
"""
from dataclasses import dataclass
import csv
import math

import numpy as np
from numba import njit

from .errors import DegenerateCocycle, NotHyperbolic, OutOfRange, ZeroExponent

HYPERBOLICITY_FLOOR = 1e-3
_START = np.array([math.cos(1.0), math.sin(1.0)])


@njit(cache=True)
def _qr_sums(jac, period, transient):
    q00, q01, q10, q11 = 1.0, 0.0, 0.0, 1.0
    s0 = 0.0
    s1 = 0.0
    used = 0
    n = jac.shape[0]
    k = 0
    while k + period <= n:
        a00, a01, a10, a11 = q00, q01, q10, q11
        for j in range(period):
            m = jac[k + j]
            b00 = m[0, 0] * a00 + m[0, 1] * a10
            b01 = m[0, 0] * a01 + m[0, 1] * a11
            b10 = m[1, 0] * a00 + m[1, 1] * a10
            b11 = m[1, 0] * a01 + m[1, 1] * a11
            a00, a01, a10, a11 = b00, b01, b10, b11
        r11 = math.hypot(a00, a10)
        if r11 == 0.0 or not math.isfinite(r11):
            return s0, s1, -1
        q00, q10 = a00 / r11, a10 / r11
        r12 = q00 * a01 + q10 * a11
        v0, v1 = a01 - r12 * q00, a11 - r12 * q10
        r22 = math.hypot(v0, v1)
        if r22 == 0.0:
            return s0, s1, -1
        q01, q11 = v0 / r22, v1 / r22
        if k >= transient:
            s0 += math.log(r11)
            s1 += math.log(r22)
            used += period
        k += period
    return s0, s1, used


@dataclass(frozen=True)
class LyapunovSpectrum:
    values: tuple          # per direction, ascending, with multiplicity
    exponents: tuple       # distinct, strictly increasing
    multiplicities: tuple
    steps: int

    @property
    def s(self):
        return len(self.exponents)

    @property
    def chi_plus_sum(self):
        return float(sum(max(v, 0.0) for v in self.values))

    @property
    def chi(self):
        return min_exponent_chi(self)


def _merge(values, tol):
    exps, mult = [], []
    for v in values:
        if exps and abs(v - exps[-1]) <= tol:
            k = mult[-1]
            exps[-1] = (exps[-1] * k + v) / (k + 1)
            mult[-1] = k + 1
        else:
            exps.append(v)
            mult.append(1)
    return tuple(exps), tuple(mult)


def lyapunov_spectrum_qr(orbit, reorth_period=1, transient=None, merge_tol=HYPERBOLICITY_FLOOR):
    """Lyapunov exponents from QR re-orthonormalisation of the derivative cocycle.

    An initial transient (default min(1000, length/10) steps) is discarded so
    the frame has aligned with the Oseledets flag before averaging.
    """
    n = len(orbit)
    if reorth_period < 1 or n < 10 * reorth_period:
        raise ValueError("orbit must be at least 10 re-orthonormalisation periods long")
    if transient is None:
        transient = min(1000, n // 10)
    jac = orbit.system.jacobian(orbit.points)
    s0, s1, used = _qr_sums(jac, int(reorth_period), int(transient))
    if used <= 0:
        raise DegenerateCocycle("derivative product lost rank")
    values = tuple(sorted((s0 / used, s1 / used)))
    exps, mult = _merge(values, merge_tol)
    return LyapunovSpectrum(values, exps, mult, used)


def min_exponent_chi(spectrum):
    chi = min(abs(v) for v in spectrum.values)
    if chi < HYPERBOLICITY_FLOOR:
        raise ZeroExponent(f"smallest |exponent| is {chi:.3g}")
    return chi


# -- one-pass splitting along an orbit ---------------------------------------

@njit(cache=True)
def _push_unstable(jac, v0):
    n = jac.shape[0]
    eu = np.empty((n, 2))
    logu = np.empty(n)
    v = v0.copy()
    for k in range(n):
        eu[k, 0] = v[0]
        eu[k, 1] = v[1]
        w0 = jac[k, 0, 0] * v[0] + jac[k, 0, 1] * v[1]
        w1 = jac[k, 1, 0] * v[0] + jac[k, 1, 1] * v[1]
        nw = math.hypot(w0, w1)
        logu[k] = math.log(nw)
        v[0] = w0 / nw
        v[1] = w1 / nw
    return eu, logu


@njit(cache=True)
def _pull_stable(jac, v0):
    n = jac.shape[0]
    es = np.empty((n, 2))
    logs = np.empty(n)
    es[n - 1, 0] = v0[0]
    es[n - 1, 1] = v0[1]
    m = jac[n - 1]
    logs[n - 1] = math.log(math.hypot(m[0, 0] * v0[0] + m[0, 1] * v0[1],
                                      m[1, 0] * v0[0] + m[1, 1] * v0[1]))
    for k in range(n - 2, -1, -1):
        m = jac[k]
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        a, b = es[k + 1, 0], es[k + 1, 1]
        w0 = (m[1, 1] * a - m[0, 1] * b) / det
        w1 = (-m[1, 0] * a + m[0, 0] * b) / det
        nw = math.hypot(w0, w1)
        es[k, 0] = w0 / nw
        es[k, 1] = w1 / nw
        logs[k] = -math.log(nw)
    return es, logs


@dataclass(frozen=True)
class OrbitCocycle:
    """Splitting and one-step log stretches along a whole orbit.

    log_u[k] = log |df e^u| at x_k (so phi^u = -log_u), log_s[k] = log |df e^s|.
    Entries are trustworthy on the index range [window, len - window).
    """
    orbit: object
    jac: np.ndarray
    eu: np.ndarray
    es: np.ndarray
    log_u: np.ndarray
    log_s: np.ndarray
    window: int

    @property
    def system(self):
        return self.orbit.system

    @property
    def points(self):
        return self.orbit.points

    @property
    def valid(self):
        return range(self.window, len(self.orbit) - self.window)

    def check(self, lo, hi=None):
        """Raise OutOfRange unless indices lo..hi sit in the valid range."""
        hi = lo if hi is None else hi
        v = self.valid
        if lo < v.start or hi > v.stop:
            raise OutOfRange(f"indices [{lo}, {hi}] outside trustworthy range [{v.start}, {v.stop}]")

    def angle(self, idx):
        u, v = self.eu[idx], self.es[idx]
        cross = np.abs(u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])
        return np.arctan2(cross, np.abs((u * v).sum(axis=-1)))

    def splitting(self, index):
        self.check(index)
        return SplittingEstimate(index, self.es[index].copy(), self.eu[index].copy(),
                                 float(self.angle(index)), self.window)

    def log_unstable_sum(self, index, n):
        self.check(index, index + n)
        return math.fsum(self.log_u[index:index + n])

    def log_stable_sum(self, index, n):
        self.check(index, index + n)
        return math.fsum(self.log_s[index:index + n])


def orbit_cocycle(orbit, window=200):
    n = len(orbit)
    if n <= 2 * window + 1:
        raise ValueError("orbit too short for the alignment window")
    jac = orbit.system.jacobian(orbit.points)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    if np.any(det == 0):
        raise DegenerateCocycle("singular derivative along orbit")
    eu, log_u = _push_unstable(jac, _START)
    es, log_s = _pull_stable(jac, _START[::-1].copy())
    for a in (jac, eu, es, log_u, log_s):
        a.setflags(write=False)
    return OrbitCocycle(orbit, jac, eu, es, log_u, log_s, int(window))


# -- per-index estimates -----------------------------------------------------

@dataclass(frozen=True)
class SplittingEstimate:
    index: int
    es: np.ndarray
    eu: np.ndarray
    angle: float
    window: int
    rate_s: float = float("nan")
    rate_u: float = float("nan")


def line_angle(a, b):
    """Angle in [0, pi/2] between the lines spanned by a and b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(math.atan2(abs(a[0] * b[1] - a[1] * b[0]), abs(a @ b)))


def oseledets_splitting(orbit, index, window=200):
    """E^s and E^u at orbit[index] from windowed power iteration.

    E^u comes from pushing a fixed vector through the `window` derivatives
    preceding the index, E^s from pulling one back through the inverse
    derivatives following it.
    """
    n = len(orbit)
    if index < window or index + window > n - 1:
        raise OutOfRange(f"index {index} needs {window} orbit points on each side")
    jac = orbit.system.jacobian(orbit.points[index - window:index + window])
    past, future = jac[:window], jac[window:]
    eu, lu = _push_unstable(past, _START)
    v = past[-1] @ eu[-1]
    eu_x = v / np.linalg.norm(v)
    es, ls = _pull_stable(future, _START[::-1].copy())
    es_x = es[0]
    rate_u = float(lu.sum() / window)
    rate_s = float(ls.sum() / window)
    if rate_u < HYPERBOLICITY_FLOOR or rate_s > -HYPERBOLICITY_FLOOR:
        raise NotHyperbolic(f"finite-time rates {rate_s:.3g}, {rate_u:.3g} show no sign gap")
    return SplittingEstimate(index, es_x, eu_x, line_angle(es_x, eu_x), window, rate_s, rate_u)


def _log_push(jacs, v):
    v = np.asarray(v, dtype=float) / np.linalg.norm(v)
    total = 0.0
    for m in jacs:
        v = m @ v
        nv = math.hypot(v[0], v[1])
        total += math.log(nv)
        v = v / nv
    return total


def unstable_jacobian(orbit, index, n, splitting):
    """|det df^n restricted to E^u| at orbit[index] and psi_n = (1/n) log of it."""
    if n < 1:
        raise ValueError("n must be positive")
    if index + n > len(orbit):
        raise OutOfRange("orbit too short")
    log_jac = _log_push(orbit.system.jacobian(orbit.points[index:index + n]), splitting.eu)
    try:
        value = math.exp(log_jac)
    except OverflowError:
        value = math.inf
    return value, log_jac / n


def geometric_potential(orbit, index, splitting):
    """phi^u(x) = -log |df_x restricted to E^u|."""
    m = orbit.system.jacobian(orbit.points[index])[0]
    return -_log_push([m], splitting.eu)


def finite_time_exponents(cocycle, indices, window):
    """Forward-window averages of the stable and unstable log stretches."""
    cs = np.concatenate([[0.0], np.cumsum(cocycle.log_s)])
    cu = np.concatenate([[0.0], np.cumsum(cocycle.log_u)])
    idx = np.asarray(indices)
    return (cs[idx + window] - cs[idx]) / window, (cu[idx + window] - cu[idx]) / window


def write_point_table(path, cocycle, indices, window=100):
    idx = np.asarray(indices, dtype=np.int64)
    lam_s, lam_u = finite_time_exponents(cocycle, idx, window)
    ang = cocycle.angle(idx)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "x", "y", "exp_s", "exp_u", "angle", "phi_u"])
        for k, i in enumerate(idx):
            p = cocycle.points[i]
            w.writerow([int(i), f"{p[0]:.12g}", f"{p[1]:.12g}", f"{lam_s[k]:.12g}",
                        f"{lam_u[k]:.12g}", f"{ang[k]:.12g}", f"{-cocycle.log_u[i]:.12g}"])
