"""Horseshoe assembly from recurrent separated points, its verification
ledger, and the nested sequence of horseshoes with decreasing entropy."""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.spatial import cKDTree

from .errors import (AllDropped, ComponentOverlap, EmptyBuckets, EmptySelection,
                     InsufficientSymbols, StageFailure)
from .measures import (EmpiricalMeasure, pressure_variational, verify_item_v,
                       weak_star_distance)
from .regularity import return_rectangle_check


# -- buckets -----------------------------------------------------------------

def bucket_window(n, r):
    """Return times n <= k < n + r n, as (first, last)."""
    return n, max(n, math.ceil(n + r * n - 1e-12) - 1)


@dataclass(frozen=True)
class ReturnBuckets:
    n: int
    r: float
    first: int
    last: int
    buckets: dict           # k -> array of orbit indices, in E order
    dropped: np.ndarray     # orbit indices with no return in the window
    target: str = "gamma_J&gamma_H&gamma_B"

    def card(self, k):
        return int(self.buckets.get(k, np.empty(0)).size)

    @property
    def total(self):
        return sum(v.size for v in self.buckets.values())

    def as_dict(self):
        return {"n": self.n, "r": self.r, "window": [self.first, self.last],
                "cards": {int(k): int(v.size) for k, v in sorted(self.buckets.items())},
                "dropped": int(self.dropped.size), "target": self.target}


def bucket_by_return(e_indices, cells, target_mask, n, r, target="gamma_J&gamma_H&gamma_B"):
    """Assign each point of E to the smallest k in the window with f^k x in
    P(x) and in the target set; the rest are dropped."""
    idx = np.asarray(e_indices, dtype=np.int64)
    first, last = bucket_window(n, r)
    if idx.size and idx.max() + last >= len(cells):
        raise ValueError("E indices lack lookahead for the return window")
    assigned = np.zeros(idx.size, dtype=np.int64)
    c0 = cells[idx]
    for k in range(first, last + 1):
        hit = (assigned == 0) & (cells[idx + k] == c0) & target_mask[idx + k]
        assigned[hit] = k
    if idx.size and not assigned.any():
        raise AllDropped(f"no point of E returns within [{first}, {last}]; "
                         "raise n or check the recurrence selection")
    buckets = {int(k): idx[assigned == k] for k in np.unique(assigned[assigned > 0])}
    return ReturnBuckets(int(n), float(r), first, last, buckets, idx[assigned == 0], target)


def select_return_time(buckets):
    """m = argmax_k card F_k, smallest k on ties."""
    if not buckets.buckets or buckets.total == 0:
        raise EmptyBuckets("all buckets are empty")
    best = max(v.size for v in buckets.buckets.values())
    return min(k for k, v in buckets.buckets.items() if v.size == best)


def select_base_rectangle(fm_indices, cover, partition, points):
    """Cover index i maximising card(F_m in P(x_i)), smallest i on ties.

    Returns (i, members of F_m inside P(x_i))."""
    fm = np.asarray(fm_indices, dtype=np.int64)
    fcell = partition.locate(points[fm])
    ccell = partition.locate(cover.centers)
    counts = np.array([(fcell == c).sum() for c in ccell])
    if counts.size == 0 or counts.max() == 0:
        raise EmptySelection("no point of F_m shares a partition cell with a rectangle center")
    i = int(np.argmax(counts))
    return i, fm[fcell == ccell[i]]


# -- assembly ----------------------------------------------------------------

@dataclass
class HorseshoeDescription:
    base: int
    center_index: int
    m: int
    symbol_indices: np.ndarray
    symbol_orbits: np.ndarray        # (N, m, 2): orbit segment of each symbol point
    records: list
    rectangle: object
    merged: list = field(default_factory=list)
    escaped: list = field(default_factory=list)
    ledger: dict = field(default_factory=dict)

    @property
    def N(self):
        return int(self.symbol_indices.size)

    @property
    def period(self):
        return self.m

    @property
    def entropy(self):
        return math.log(self.N) / self.m

    @property
    def symbol_points(self):
        return self.symbol_orbits[:, 0]

    @property
    def transition_matrix(self):
        return np.ones((self.N, self.N), dtype=np.int64)

    def as_dict(self):
        return {"base": self.base, "center_index": self.center_index, "m": self.m,
                "N": self.N, "entropy": self.entropy, "shift": "two-sided full shift",
                "symbol_indices": self.symbol_indices.tolist(),
                "symbol_points": self.symbol_points.tolist(),
                "merged_duplicates": self.merged, "escaped": self.escaped,
                "records": [r.as_dict() for r in self.records], "ledger": self.ledger}


def _bands_overlap(ra, rb):
    la = ra.leaf_heights[:, None] + np.array(ra.u_band)[None, :]
    lb = rb.leaf_heights[:, None] + np.array(rb.u_band)[None, :]
    return bool(np.any((la[:, 0] <= lb[:, 1]) & (lb[:, 0] <= la[:, 1])))


def assemble_horseshoe(symbol_indices, m, base, cocycle, cover, r, merge_duplicates=True,
                       samples=33):
    """Full shift model on the symbol points with step m.

    Every symbol point gets the items 3-5 record.  Returns whose traced
    component leaves the chart are discarded; two symbol points whose traced
    components overlap lie in the same component and are merged (first in
    index order kept) unless merge_duplicates is False.
    """
    idx = [int(i) for i in symbol_indices]
    records, escaped = [], []
    for i in idx:
        rec = return_rectangle_check(cover, cocycle, i, m, r, i=base, j=base, samples=samples)
        (escaped if rec.escaped else records).append(rec if not rec.escaped else i)
    kept, merged = [], []
    for rec in records:
        twin = next((k for k in kept if _bands_overlap(k, rec)), None)
        if twin is None:
            kept.append(rec)
        elif merge_duplicates:
            merged.append([twin.index, rec.index])
        else:
            raise ComponentOverlap(f"returns at {twin.index} and {rec.index} share a component; "
                                   "use a larger separation scale")
    if len(kept) < 2:
        raise InsufficientSymbols(
            f"{len(kept)} disjoint return components (from {len(idx)} candidates); "
            "raise n, lower eps, or coarsen delta")
    sidx = np.array([k.index for k in kept], dtype=np.int64)
    pts = cocycle.points
    orbits = np.stack([pts[i:i + m] for i in sidx])
    return HorseshoeDescription(int(base), int(cover.center_indices[base]), int(m), sidx,
                                orbits, kept, cover.rectangles[base], merged, escaped)


def shift_description(symbol_orbits, rectangle=None):
    """Minimal shift model (used for synthetic models and tests)."""
    so = np.asarray(symbol_orbits, dtype=float)
    return HorseshoeDescription(0, -1, so.shape[1], np.arange(so.shape[0]), so, [], rectangle)


# -- verification ledger -----------------------------------------------------

def verify_theorem1(desc, cocycle, spectrum, basis, mu, e, r, delta, ell, K,
                    observables=(), master_tree=None):
    """Pass/fail ledger for items i-vi of the extraction theorem."""
    L = {}
    L["i"] = {"pass": bool(np.all(desc.transition_matrix == 1)) and desc.N >= 2,
              "transition": "all-ones", "N": desc.N, "mixing": True}

    # ii: one-sided Hausdorff distance to the master orbit cloud
    system = cocycle.system
    if master_tree is None:
        master_tree = cKDTree(system.canonical(cocycle.points),
                              boxsize=1.0 if system.is_torus else None)
    cloud = [desc.symbol_orbits.reshape(-1, 2)]
    cloud += [rec.leaf_points for rec in desc.records if rec.leaf_points is not None]
    dist, _ = master_tree.query(system.canonical(np.vstack(cloud)))
    L["ii"] = {"pass": bool(dist.max() < r), "max_distance": float(dist.max()), "r": r}

    # iii: weak* distance of the uniform measure on the symbol orbits
    nu = EmpiricalMeasure.uniform(desc.symbol_orbits.reshape(-1, 2))
    wd = weak_star_distance(mu, nu, basis, K)
    integrals = [{"psi": basis.describe(i), "mu": mu.integrate(basis.function(i)),
                  "nu": nu.integrate(basis.function(i))} for i in range(1, K + 1)]
    L["iii"] = {"pass": bool(wd.value + wd.tail < r), "distance": wd.value, "tail": wd.tail,
                "K": K, "terms": list(wd.terms), "integrals": integrals}

    # iv: entropy window
    h, m = desc.entropy, desc.m
    lo = e - r * (4 + e) - (math.log(ell) + abs(math.log(1 - 5 * delta))) / m
    hi = e + r
    L["iv"] = {"pass": bool(lo <= h <= hi), "entropy": h, "lower": lo, "upper": hi,
               "strict_pass": bool(abs(h - e) < r)}

    # v: pressure window per observable
    vs = {}
    for name, phi in observables:
        P = pressure_variational(desc, phi)
        res = verify_item_v(P, mu.integrate(phi), e, r)
        vs[name] = res.as_dict()
    L["v"] = {"pass": all(v["pass"] for v in vs.values()), "observables": vs}

    # vi: unstable Jacobian average at every symbol point
    target = spectrum.chi_plus_sum
    devs = [abs(cocycle.log_unstable_sum(int(i), m) / m - target) for i in desc.symbol_indices]
    L["vi"] = {"pass": bool(max(devs) < r), "max_deviation": float(max(devs)),
               "deviations": [float(d) for d in devs]}

    # per-symbol Birkhoff closeness for the basis
    bc = []
    for i in range(1, K + 1):
        f = basis.function(i)
        integ = mu.integrate(f)
        bc.append(float(max(abs(math.fsum(f(o)) / m - integ) for o in desc.symbol_orbits)))
    L["birkhoff_closeness"] = {"max_per_basis": bc, "r": r}
    desc.ledger = L
    return L


# -- nesting -----------------------------------------------------------------

@dataclass
class NestStage:
    stage: int
    N: int
    period: int
    entropy: float
    target: float | None
    zeta: float
    r: float | None
    word_length: int
    symbol_orbits: np.ndarray = field(repr=False)
    contained: bool = True
    window: tuple | None = None

    def as_dict(self):
        return {"stage": self.stage, "N": self.N, "period": self.period,
                "entropy": self.entropy, "target": self.target, "zeta": self.zeta,
                "r": self.r, "word_length": self.word_length, "contained": self.contained,
                "window": None if self.window is None else list(self.window)}


@dataclass
class NestedSequence:
    e: float
    stages: list

    @property
    def entropies(self):
        return [s.entropy for s in self.stages]

    def decreasing(self):
        h = self.entropies
        return all(a > b for a, b in zip(h, h[1:])) and all(x > self.e for x in h)

    def as_dict(self):
        return {"e": self.e, "entropies": self.entropies, "decreasing": self.decreasing(),
                "stages": [s.as_dict() for s in self.stages]}


def _distinct_words(seq, w):
    """Distinct length-w words of seq in order of first occurrence."""
    view = np.lib.stride_tricks.sliding_window_view(seq, w)
    _, first = np.unique(view, axis=0, return_index=True)
    return view[np.sort(first)]


def _next_stage(prev, i, e, rng, sequence_length, max_word, rect, theta):
    zeta = prev.entropy - e
    e_i = e + 2.0 ** -(i + 2) * zeta
    r_i = theta * 2.0 ** -(i + 1) * zeta
    cap = min(e_i + r_i, e + 2.0 ** -(i + 1) * zeta)
    p = prev.period
    seq = rng.integers(0, prev.N, size=sequence_length)
    for w in range(1, max_word + 1):
        W_max = math.floor(math.exp(p * w * cap) * (1 + 1e-12))
        if W_max < 2 or math.log(W_max) / (p * w) <= e:
            continue
        words = _distinct_words(seq, w)
        W = min(len(words), W_max)
        if W < 2 or math.log(W) / (p * w) <= e:
            continue
        words = words[:W]
        orbits = prev.symbol_orbits[words].reshape(W, p * w, 2)
        starts = orbits[:, ::p].reshape(-1, 2)
        contained = bool(rect is None or np.all(rect.contains(starts, slack=1e-9)))
        return NestStage(i + 1, W, p * w, math.log(W) / (p * w), e_i, zeta, r_i, w, orbits,
                         contained, (e, e + 2.0 ** -(i + 1) * zeta))
    raise StageFailure(f"stage {i + 1}: no word length up to {max_word} gives an entropy in "
                       f"({e:.4f}, {cap:.4f}]")


def nest_entropy_sequence(first, e, depth, seed=0, sequence_length=200_000, max_word=12,
                          tol_nest=0.05, theta=0.5):
    """Nested horseshoes with entropies decreasing towards e.

    Stage 1 is an extracted horseshoe.  Each later stage samples a uniform
    Bernoulli sequence on the previous stage's symbols, takes length-w words
    (one per separated class), and keeps as many as the target window allows.
    Symbols of the new stage are concatenations of previous symbol orbits, so
    the new set sits inside the previous one.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    h1 = first.entropy
    if not 0 <= e < h1:
        raise StageFailure(f"stage 1: entropy {h1:.4f} does not exceed the target {e}")
    stages = [NestStage(1, first.N, first.period, h1, None, h1 - e, None, 1,
                        np.asarray(first.symbol_orbits), True, None)]
    rect = getattr(first, "rectangle", None)
    rng = np.random.default_rng(seed)
    for i in range(1, depth):
        st = _next_stage(stages[-1], i, e, rng, sequence_length, max_word, rect, theta)
        lo, hi = st.window
        if not (lo < st.entropy <= hi + tol_nest):
            raise StageFailure(f"stage {i + 1}: entropy {st.entropy:.4f} outside ({lo}, {hi}]")
        if not st.contained:
            raise StageFailure(f"stage {i + 1}: symbol points leave the previous rectangle")
        stages.append(st)
    return NestedSequence(float(e), stages)
