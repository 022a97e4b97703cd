"""Configuration, orchestration of the extraction and nesting runs, and report emission."""
from dataclasses import MISSING, asdict, dataclass, field, fields, is_dataclass, replace
import csv
import json
import math
import os
import time

import numpy as np
import yaml

from . import dynamics, cocycle as cc, regularity as reg, statistics as st, entropy as ent
from . import measures as ms, horseshoe as hs
from .errors import ConfigError, EmptySelection, HorseshoeError


# -- configuration -----------------------------------------------------------

@dataclass
class SystemConfig:
    name: str = "cat"
    params: dict = field(default_factory=dict)


@dataclass
class OrbitConfig:
    length: int = 1_000_000
    burn_in: int = 1000


@dataclass
class HyperbolicityConfig:
    gamma: float = 0.3
    rho0: float = 0.25
    truncation: int = 200
    horizon: int = 100          # n_H: horizon of the tempered-constant estimate
    L: float = 0.25
    window: int = 200
    reorth_period: int = 1


@dataclass
class ScalesConfig:
    eps0: float = 0.5
    eps1: float = 0.3
    eps: float = 0.02
    rho: float | None = None    # defaults to eps1 / 5


@dataclass
class TargetConfig:
    e: float = 0.5
    r: float = 0.1
    delta: float = 0.15


@dataclass
class NConfig:
    initial: int = 16
    cap: int = 1024


@dataclass
class SelectionConfig:
    n_grid: tuple = st.DEFAULT_GRID
    recurrence_grid: tuple = st.DEFAULT_GRID
    entropy_grid: tuple = (2, 3, 4, 5, 6)
    stride: int = 1
    strict: bool = False


@dataclass
class EntropyConfig:
    n_list: tuple = (2, 3, 4, 5, 6)
    eps_list: tuple = (0.2, 0.1)
    probes: int = 200
    stride: int = 7


@dataclass
class CoverConfig:
    pool: int = 100_000
    net_factor: float = 1.0     # net radius as a fraction of rho
    max_centers: int = 10_000


@dataclass
class SeparatedConfig:
    pool_stride: int = 1
    truncate: bool = True


@dataclass
class HorseshoeConfig:
    merge_overlaps: bool = True
    samples: int = 33


@dataclass
class PressureConfig:
    observables: tuple = ("psi2",)


@dataclass
class NestConfig:
    e: float = 0.3
    depth: int = 3
    sequence_length: int = 200_000
    max_word: int = 12
    tol_nest: float = 0.05
    theta: float = 0.5


@dataclass
class OutputConfig:
    point_rows: int = 2000


@dataclass
class PipelineConfig:
    seed: int = 0
    system: SystemConfig = field(default_factory=SystemConfig)
    orbit: OrbitConfig = field(default_factory=OrbitConfig)
    hyperbolicity: HyperbolicityConfig = field(default_factory=HyperbolicityConfig)
    scales: ScalesConfig = field(default_factory=ScalesConfig)
    target: TargetConfig = field(default_factory=TargetConfig)
    n: NConfig = field(default_factory=NConfig)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    entropy: EntropyConfig = field(default_factory=EntropyConfig)
    cover: CoverConfig = field(default_factory=CoverConfig)
    separated: SeparatedConfig = field(default_factory=SeparatedConfig)
    horseshoe: HorseshoeConfig = field(default_factory=HorseshoeConfig)
    pressure: PressureConfig = field(default_factory=PressureConfig)
    nest: NestConfig = field(default_factory=NestConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self):
        validate_config(self)
        return self

    def as_dict(self):
        return _plain(asdict(self))


def _build(cls, data, path):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(path + k for k in unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = known[name]
        default = f.default_factory() if f.default_factory is not MISSING else f.default
        if is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{path}{name}.")
        elif isinstance(default, tuple) and isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def config_from_dict(data):
    return _build(PipelineConfig, data or {}, "").validate()


def load_config(path):
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return config_from_dict(data)


def _need(cond, name, rng):
    if not cond:
        raise ConfigError(f"{name} must satisfy {rng}")


def _grid_ok(g):
    g = list(g)
    return bool(g) and all(isinstance(v, int) and v >= 1 for v in g) and g == sorted(set(g))


def validate_config(c):
    """Static range checks.  Constraints that need the spectrum (r < chi/3,
    gamma < chi/3, e <= h) are checked once it is known."""
    t, s, hy = c.target, c.scales, c.hyperbolicity
    _need(0 < t.delta < 0.2, "target.delta", "delta in (0, 1/5)")
    _need(t.r > 0, "target.r", "r in (0, min{h, chi/3})")
    _need(t.e >= 0, "target.e", "e >= 0")
    _need(hy.gamma > 0, "hyperbolicity.gamma", "gamma in (0, chi/3)")
    _need(0 < s.eps < s.eps1 < s.eps0, "scales.eps, scales.eps1, scales.eps0",
          "0 < eps < eps1 < eps0")
    _need(s.rho is None or s.rho > 0, "scales.rho", "rho > 0")
    _need(0 < hy.rho0 <= 1, "hyperbolicity.rho0", "rho0 in (0, 1]")
    _need(0 < hy.L < 0.5, "hyperbolicity.L", "L in (0, 1/2)")
    _need(hy.truncation >= 1, "hyperbolicity.truncation", "truncation >= 1")
    _need(hy.horizon >= 1, "hyperbolicity.horizon", "horizon >= 1")
    _need(hy.window >= hy.truncation, "hyperbolicity.window", "window >= truncation")
    _need(hy.reorth_period >= 1, "hyperbolicity.reorth_period", "reorth_period >= 1")
    _need(c.orbit.length >= 10_000, "orbit.length", "length >= 10000")
    _need(c.orbit.burn_in >= 0, "orbit.burn_in", "burn_in >= 0")
    _need(1 <= c.n.initial <= c.n.cap, "n.initial, n.cap", "1 <= initial <= cap")
    for name in ("n_grid", "recurrence_grid", "entropy_grid"):
        _need(_grid_ok(getattr(c.selection, name)), f"selection.{name}",
              "a nonempty increasing list of positive integers")
    _need(c.selection.stride >= 1, "selection.stride", "stride >= 1")
    _need(_grid_ok(c.entropy.n_list), "entropy.n_list", "increasing positive integers")
    _need(all(e > 0 for e in c.entropy.eps_list) and c.entropy.eps_list,
          "entropy.eps_list", "nonempty list of positive radii")
    _need(c.entropy.probes >= 30, "entropy.probes", "probes >= 30")
    _need(c.entropy.stride >= 1, "entropy.stride", "stride >= 1")
    _need(c.cover.pool >= 1, "cover.pool", "pool >= 1")
    _need(0 < c.cover.net_factor <= 1, "cover.net_factor", "net_factor in (0, 1]")
    _need(c.separated.pool_stride >= 1, "separated.pool_stride", "pool_stride >= 1")
    _need(c.horseshoe.samples >= 5, "horseshoe.samples", "samples >= 5")
    _need(c.nest.depth >= 1, "nest.depth", "depth >= 1")
    _need(c.nest.e >= 0, "nest.e", "e in [0, h)")
    _need(c.nest.tol_nest >= 0, "nest.tol_nest", "tol_nest >= 0")
    _need(0 < c.nest.theta <= 1, "nest.theta", "theta in (0, 1]")
    _need(c.nest.max_word >= 1, "nest.max_word", "max_word >= 1")
    if c.system.name not in dynamics.BUILTINS:
        raise ConfigError(f"system.name must be one of {sorted(dynamics.BUILTINS)}")
    for obs in c.pressure.observables:
        parse_observable(obs, ms.TestBasis())


def parse_observable(spec, basis):
    """'psiK' (K-th basis function), 'const:c' or 'coord:k'."""
    spec = str(spec)
    try:
        if spec.startswith("psi"):
            k = int(spec[3:])
            if k < 1:
                raise ValueError
            return st.Observable(spec, basis.function(k), basis.sup_norm(k))
        if spec.startswith("const:"):
            return st.constant_observable(float(spec[6:]))
        if spec.startswith("coord:"):
            k = int(spec[6:])
            if k not in (0, 1):
                raise ValueError
            return st.coordinate_observable(k)
    except ValueError:
        pass
    raise ConfigError(f"pressure.observables: cannot parse {spec!r} "
                      "(use psiK, const:c or coord:k)")


# -- report plumbing ---------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    return obj


@dataclass
class RunReport:
    kind: str
    data: dict
    tables: dict = field(default_factory=dict)      # name -> (header, rows)
    timing: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.data[key]

    def to_json(self):
        return json.dumps(_plain(self.data), indent=2, sort_keys=True)


class _Timer:
    def __init__(self):
        self.marks = {}

    def __call__(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t = time.perf_counter()

            def __exit__(self, *exc):
                timer.marks[name] = timer.marks.get(name, 0.0) + time.perf_counter() - self.t
        return _Ctx()


def _stage(name, func, *args, **kwargs):
    try:
        return func(*args, **kwargs)
    except HorseshoeError as exc:
        raise type(exc)(f"[{name}] {exc}") from exc


# -- extraction --------------------------------------------------------------

@dataclass
class Extraction:
    """Everything the extraction run produces, kept for nesting and tests."""
    config: PipelineConfig
    system: object
    orbit: object
    spectrum: object
    cocycle: object
    cover: object
    partition: object
    basis: object
    K: int
    r0: float
    selections: dict
    separated: object
    buckets: object
    n: int
    description: object
    ledger: dict
    brin_katok: object
    mu: object
    pool: np.ndarray = None      # candidate indices fed to the greedy separated set


def _evaluation_indices(cocycle, cfg, lookahead):
    v = cocycle.valid
    start = v.start + cfg.hyperbolicity.horizon
    stop = v.stop - lookahead
    if stop <= start + 100:
        raise ConfigError("orbit.length too short for the configured grids and n cap")
    return np.arange(start, stop, cfg.selection.stride, dtype=np.int64)


def _mask(length, members):
    m = np.zeros(length, dtype=bool)
    m[members] = True
    return m


def _threshold_rule(n, thresholds):
    need = max(thresholds.values())
    return n >= need, need


def _spread(indices, count):
    if indices.size <= count:
        return indices
    return indices[np.linspace(0, indices.size - 1, count).astype(np.int64)]


def extract(cfg, e=None, timer=None):
    """Run the extraction in proof order and return an Extraction."""
    timer = timer or _Timer()
    e = cfg.target.e if e is None else e
    r, delta = cfg.target.r, cfg.target.delta
    hy, sc, sel = cfg.hyperbolicity, cfg.scales, cfg.selection

    with timer("orbit"):
        system = dynamics.make_system(cfg.system.name, **cfg.system.params)
        orbit = _stage("orbit", dynamics.sample_orbit, system, cfg.seed, cfg.orbit.length,
                       cfg.orbit.burn_in)
    with timer("spectrum"):
        spectrum = _stage("spectrum", cc.lyapunov_spectrum_qr, orbit, hy.reorth_period)
        chi = _stage("spectrum", cc.min_exponent_chi, spectrum)
        cocycle = _stage("splitting", cc.orbit_cocycle, orbit, hy.window)
    h_est = spectrum.chi_plus_sum
    _need(r < min(h_est, chi / 3), "target.r", f"r in (0, min{{h, chi/3}}) = (0, {min(h_est, chi / 3):.4f})")
    _need(hy.gamma < chi / 3, "hyperbolicity.gamma", f"gamma in (0, chi/3) = (0, {chi / 3:.4f})")
    _need(0 <= e <= h_est, "target.e", f"e in (0, h] = (0, {h_est:.4f}]")

    lookahead = max(max(sel.n_grid), st.return_window(max(sel.recurrence_grid), r)[1] + 1,
                    max(sel.entropy_grid), math.ceil(cfg.n.cap * (1 + r)) + 1)
    idx = _evaluation_indices(cocycle, cfg, lookahead)
    L = len(orbit)
    selections = {}

    with timer("gamma_J"):
        gj = _stage("gamma_J", st.select_gamma_j, cocycle, h_est, delta, r, sel.n_grid, idx,
                    sel.strict)
        selections["gamma_J"] = gj
    with timer("gamma_H"):
        est = _stage("gamma_H", reg.estimate_c1_c2, cocycle, hy.gamma, chi, hy.horizon, idx)
        block = _stage("gamma_H", reg.block_level_for_mass, est, 1 - delta)
        selections["gamma_H"] = st.SelectionResult(
            "gamma_H", block.members, hy.horizon, block.fraction, r, delta,
            block.fraction >= 1 - delta, (hy.horizon,))
    with timer("cover"):
        pool = _spread(block.members, cfg.cover.pool)
        cover = _stage("cover", reg.rectangle_cover, cocycle, pool, hy.gamma, spectrum, sc.eps1,
                       sc.rho, hy.rho0, hy.L, hy.truncation, cfg.cover.max_centers,
                       cfg.cover.net_factor * (sc.rho if sc.rho else sc.eps1 / 5))

    basis = ms.basis_for(system)
    K, r0 = ms.choose_K_r0(r, basis)
    with timer("gamma_B"):
        for i in range(1, K + 1):
            phi = st.Observable(f"psi{i}", basis.function(i), basis.sup_norm(i))
            res = _stage("gamma_B", st.select_gamma_b, orbit, phi, delta, r, sel.n_grid, idx,
                         None, sel.strict)
            selections[res.name] = res
        res = _stage("gamma_B", st.select_gamma_b, orbit, None, delta, r, sel.n_grid, idx,
                     -h_est, sel.strict, -cocycle.log_u)
        selections["gamma_B[-phi_u]"] = replace(res, name="gamma_B[-phi_u]")

    def members(name):
        s = selections[name]
        return s.members if s.success else idx

    target = _mask(L, idx)
    for name in selections:
        target &= _mask(L, members(name))

    with timer("gamma_R"):
        rho = cover.rho
        partition = _stage("partition", st.grid_partition, system, rho)
        cells = partition.locate(orbit.points)
        gr = _stage("gamma_R", st.select_gamma_r, orbit, cells, target, delta, r,
                    sel.recurrence_grid, idx, sel.strict)
        selections["gamma_R"] = gr
    gamma_prime = target & _mask(L, members("gamma_R"))
    cand = np.nonzero(gamma_prime)[0]
    if cand.size == 0:
        raise EmptySelection("[gamma_prime] no index survives the selections")

    with timer("gamma_E"):
        probes = _spread(cand, cfg.entropy.probes)
        bk = _stage("brin_katok", ent.brin_katok_entropy, orbit, probes, cfg.entropy.n_list,
                    cfg.entropy.eps_list, cfg.entropy.stride)
        h_bk = bk.headline if math.isfinite(bk.headline) else h_est
        ge = _stage("gamma_E", ent.select_gamma_e, orbit, probes, delta, h_bk, r, sc.eps,
                    sel.entropy_grid, cfg.entropy.stride, sel.strict)
        selections["gamma_E"] = ge

    # threshold rule with n escalation
    thresholds = {name: s.threshold for name, s in selections.items()
                  if s.success and s.threshold is not None}
    thresholds["n_H"] = hy.horizon
    thresholds["log_l/r"] = math.log(cover.size) / r
    thresholds["|log(1-5delta)|/r"] = abs(math.log(1 - 5 * delta)) / r
    n = cfg.n.initial
    while n < max(thresholds.values()) and 2 * n <= cfg.n.cap:
        n *= 2
    rule_ok, need = _threshold_rule(n, thresholds)

    with timer("separated"):
        pool_idx = cand[::cfg.separated.pool_stride]
        E = _stage("separated", ent.greedy_separated_set, system, n, sc.eps, orbit=orbit,
                   indices=pool_idx)
        e_idx = E.indices
        cap = math.exp(min(700.0, n * (e + r)))
        truncated = cfg.separated.truncate and e_idx.size > cap
        if truncated:
            e_idx = e_idx[:max(1, math.floor(cap))]
        lower_ok, upper_ok = ent.separated_count_bounds(e_idx.size, n, e, r, delta)

    with timer("assembly"):
        buckets = _stage("buckets", hs.bucket_by_return, e_idx, cells, target, n, r)
        m = _stage("return_time", hs.select_return_time, buckets)
        base, sym = _stage("base_rectangle", hs.select_base_rectangle, buckets.buckets[m],
                           cover, partition, orbit.points)
        desc = _stage("assemble", hs.assemble_horseshoe, sym, m, base, cocycle, cover, r,
                      cfg.horseshoe.merge_overlaps, cfg.horseshoe.samples)

    with timer("verify"):
        mu = ms.EmpiricalMeasure.uniform(orbit.points)
        observables = [(o, parse_observable(o, basis)) for o in cfg.pressure.observables]
        ledger = hs.verify_theorem1(desc, cocycle, spectrum, basis, mu, e, r, delta,
                                    cover.size, K, observables)
        fm_count = int(sym.size)
        ledger["counts"] = {
            "card_E": int(e_idx.size), "card_E_untruncated": len(E), "truncated": bool(truncated),
            "bound_lower": lower_ok, "bound_upper": upper_ok,
            "card_F_m": buckets.card(m), "card_F_m_cell": fm_count,
            "card_union_F": buckets.total, "dropped": int(buckets.dropped.size),
            "pigeonhole_m": bool(r * n * buckets.card(m) >= buckets.total or
                                 math.ceil(r * n) * buckets.card(m) >= buckets.total),
            "pigeonhole_cell": bool(fm_count * cover.size >= buckets.card(m)),
        }
        ledger["threshold_rule"] = {"n": n, "required": need, "satisfied": bool(rule_ok),
                                    "unmet": sorted(k for k, v in thresholds.items() if v > n),
                                    "thresholds": thresholds}
        ledger["separation"] = _separation_certificate(system, desc.symbol_orbits, n, sc.eps)
        ledger["symbols_in_ball"] = bool(np.all(
            system.distance(cover.centers[base], desc.symbol_points) < cover.rho))
        ledger["modulus_of_continuity"] = _modulus_check(system, basis, K, sc.eps0, r0, cfg.seed)

    return Extraction(cfg, system, orbit, spectrum, cocycle, cover, partition, basis, K, r0,
                      selections, E, buckets, n, desc, ledger, bk, mu, pool_idx)


def _separation_certificate(system, orbits, n, eps):
    """Every pair of symbol orbits is more than eps apart at some time < n."""
    N = orbits.shape[0]
    k = min(n, orbits.shape[1])
    ok = True
    for a in range(N):
        for b in range(a + 1, N):
            if not np.any(system.distance(orbits[a, :k], orbits[b, :k]) > eps):
                ok = False
    return {"pass": ok, "pairs": N * (N - 1) // 2}


def _modulus_check(system, basis, K, eps0, r0, seed):
    rng = np.random.default_rng(seed)
    x, y = ms.sample_pairs(system, eps0, 4000, rng)
    mods = [ms.modulus_of_continuity(basis.function(i), eps0, x, y) for i in range(1, K + 1)]
    return {"eps0": eps0, "r0": r0, "moduli": mods, "below_r0": [m < r0 for m in mods]}


# -- runs --------------------------------------------------------------------

def _extraction_report(x, timer, kind="extract"):
    cfg, desc = x.config, x.description
    cover = x.cover
    data = {
        "kind": kind,
        "config": cfg.as_dict(),
        "system": {"name": x.system.name, "params": dict(x.system.params)},
        "spectrum": {"values": list(x.spectrum.values), "chi": x.spectrum.chi,
                     "chi_plus_sum": x.spectrum.chi_plus_sum},
        "selections": {k: v.as_dict() for k, v in x.selections.items()},
        "cover": {"size": cover.size, "h": cover.h, "rho": cover.rho, "eps1": cover.eps1,
                  "lambda": cover.lam, "L": cover.L, "gamma": cover.gamma,
                  "lambda_window": [math.exp(-cover.chi - cover.gamma),
                                    math.exp(-cover.chi + cover.gamma)]},
        "partition": {"cells": x.partition.count, "diameter": x.partition.diameter},
        "basis": {"K": x.K, "r0": x.r0},
        "separated_set": {"card": int(x.ledger["counts"]["card_E"]), "n": x.n,
                          "eps": x.separated.eps, "pool": x.separated.pool_size},
        "buckets": x.buckets.as_dict(),
        "brin_katok": x.brin_katok.as_dict(),
        "horseshoe": desc.as_dict(),
        "ledger": x.ledger,
    }
    rep = RunReport(kind, _plain(data), timing=dict(timer.marks))
    rep.tables.update(_extraction_tables(x))
    return rep


def _extraction_tables(x):
    desc, pts = x.description, x.orbit.points
    e_idx = x.separated.indices[:x.ledger["counts"]["card_E"]]
    tables = {
        "separated_set": (["index", "x", "y"],
                          [[int(i), *pts[i]] for i in e_idx]),
        "symbol_points": (["symbol", "index", "x", "y"],
                          [[a, int(i), *pts[i]] for a, i in enumerate(desc.symbol_indices)]),
        "dropped": (["index", "x", "y"], [[int(i), *pts[i]] for i in x.buckets.dropped]),
        "cover": (["center_index", "x", "y", "q", "rho", "lambda", "L"],
                  [[int(i), *rect.center, rect.chart.q, x.cover.rho, x.cover.lam, x.cover.L]
                   for i, rect in zip(x.cover.center_indices, x.cover.rectangles)]),
        "brin_katok": (["n", "eps", "probe", "mass"], [list(r) for r in x.brin_katok.rows()]),
    }
    comp = []
    for a, rec in enumerate(desc.records):
        if rec.leaf_points is not None:
            comp.extend([a, int(rec.index), *p] for p in rec.leaf_points)
    tables["components"] = (["symbol", "index", "x", "y"], comp)
    idx = _spread(np.arange(x.cocycle.valid.start + 100, x.cocycle.valid.stop - 100),
                  x.config.output.point_rows)
    fte = cc.finite_time_exponents(x.cocycle, idx, 100)
    tables["points"] = _point_rows(x.cocycle, idx, fte)
    return tables


def _point_rows(cocycle, idx, fte):
    exp_s, exp_u = fte
    ang = cocycle.angle(idx)
    pts = cocycle.points
    rows = [[int(i), *pts[i], float(a), float(b), float(g), float(-cocycle.log_u[i])]
            for i, a, b, g in zip(idx, exp_s, exp_u, ang)]
    return ["index", "x", "y", "exp_s", "exp_u", "angle", "phi_u"], rows


def run_extract(cfg):
    timer = _Timer()
    with timer("total"):
        x = extract(cfg, timer=timer)
        rep = _extraction_report(x, timer)
    rep.timing = dict(timer.marks)
    rep.extraction = x
    return rep


def run_pressure(cfg):
    """Extraction followed by a pressure table: variational value per
    observable with the item v window, plus a separated-set partition-function
    cross-check on the horseshoe's orbit points."""
    timer = _Timer()
    with timer("total"):
        x = extract(cfg, timer=timer)
        rep = _extraction_report(x, timer, "pressure")
        desc, e, r = x.description, cfg.target.e, cfg.target.r
        table = []
        for name in cfg.pressure.observables:
            phi = parse_observable(name, x.basis)
            pv = ms.pressure_variational(desc, phi)
            pf = ms.pressure_partition_function(x.system, desc.symbol_points, phi, desc.m,
                                                cfg.scales.eps)
            iv = ms.verify_item_v(pv, x.mu.integrate(phi), e, r)
            table.append({"observable": name, "variational": pv.as_dict(),
                          "partition_function": pf.as_dict(), "item_v": iv.as_dict()})
        rep.data["pressure"] = _plain(table)
        rep.tables["pressure"] = (["observable", "method", "value"],
                                  [[t["observable"], m, t[k]["value"]] for t in table
                                   for m, k in (("variational", "variational"),
                                                ("partition-function", "partition_function"))])
    rep.timing = dict(timer.marks)
    rep.extraction = x
    return rep


def run_nest(cfg):
    """Nested horseshoes: stage 1 is an extraction at the target entropy
    `target.e`, later stages descend towards `nest.e`."""
    timer = _Timer()
    with timer("total"):
        x = extract(cfg, timer=timer)
        rep = _extraction_report(x, timer, "nest")
        h1 = x.description.entropy
        _need(cfg.nest.e < h1, "nest.e", f"e in [0, h_1) = [0, {h1:.4f})")
        with timer("nest"):
            seq = _stage("nest", hs.nest_entropy_sequence, x.description, cfg.nest.e,
                         cfg.nest.depth, cfg.seed, cfg.nest.sequence_length, cfg.nest.max_word,
                         cfg.nest.tol_nest, cfg.nest.theta)
        rep.data["nest"] = _plain(seq.as_dict())
        rows = []
        for s in seq.stages:
            for a, o in enumerate(s.symbol_orbits):
                rows.append([s.stage, a, *o[0]])
        rep.tables["nest_symbols"] = (["stage", "symbol", "x", "y"], rows)
    rep.timing = dict(timer.marks)
    rep.extraction = x
    rep.nested = seq
    return rep


def run_analyze(cfg):
    """Spectrum, splitting and regularity summaries only."""
    timer = _Timer()
    hy = cfg.hyperbolicity
    with timer("total"):
        system = dynamics.make_system(cfg.system.name, **cfg.system.params)
        orbit = _stage("orbit", dynamics.sample_orbit, system, cfg.seed, cfg.orbit.length,
                       cfg.orbit.burn_in)
        spectrum = _stage("spectrum", cc.lyapunov_spectrum_qr, orbit, hy.reorth_period)
        data = {"kind": "analyze", "config": cfg.as_dict(),
                "system": {"name": system.name, "params": dict(system.params)},
                "spectrum": {"values": list(spectrum.values),
                             "multiplicities": list(spectrum.multiplicities),
                             "chi_plus_sum": spectrum.chi_plus_sum,
                             "known": system.known_spectrum}}
        tables = {}
        try:
            chi = cc.min_exponent_chi(spectrum)
            data["spectrum"]["chi"] = chi
            cocycle = _stage("splitting", cc.orbit_cocycle, orbit, hy.window)
            v = cocycle.valid
            idx = np.arange(v.start + hy.horizon, v.stop - hy.horizon)
            gamma = min(hy.gamma, chi / 3 * (1 - 1e-9))
            est = reg.estimate_c1_c2(cocycle, gamma, chi, hy.horizon, idx)
            finite = np.isfinite(est.c1)
            data["regularity"] = {
                "gamma": gamma, "horizon": hy.horizon,
                "c1_quantiles": np.quantile(est.c1[finite], [0.5, 0.9, 0.99]).tolist(),
                "c2_min": float(est.c2.min()), "unbounded_fraction": float(1 - finite.mean()),
                "blocks": {str(lv): reg.pesin_block(est, lv).fraction
                           for lv in (1, 2, 4, 8, 16, 32)}}
            pidx = _spread(np.arange(v.start + 100, v.stop - 100), cfg.output.point_rows)
            tables["points"] = _point_rows(cocycle, pidx, cc.finite_time_exponents(cocycle, pidx, 100))
        except HorseshoeError as exc:
            data["regularity"] = {"error": f"{type(exc).__name__}: {exc}"}
        probes = _spread(np.arange(0, len(orbit) - max(cfg.entropy.n_list)), cfg.entropy.probes)
        bk = ent.brin_katok_entropy(orbit, probes, cfg.entropy.n_list, cfg.entropy.eps_list,
                                    cfg.entropy.stride)
        data["brin_katok"] = bk.as_dict()
        tables["brin_katok"] = (["n", "eps", "probe", "mass"], [list(r) for r in bk.rows()])
    return RunReport("analyze", _plain(data), tables, dict(timer.marks))


RUNNERS = {"analyze": run_analyze, "extract": run_extract, "nest": run_nest,
           "pressure": run_pressure}


# -- emission ----------------------------------------------------------------

def emit(report, out_dir, write_json=True, write_csv=True):
    """Write report.json (deterministic), timing.json and one CSV per table.
    Returns the list of written paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if write_json:
        p = os.path.join(out_dir, "report.json")
        with open(p, "w") as fh:
            fh.write(report.to_json())
        written.append(p)
        p = os.path.join(out_dir, "timing.json")
        with open(p, "w") as fh:
            json.dump(report.timing, fh, indent=2, sort_keys=True)
        written.append(p)
    if write_csv:
        for name, (header, rows) in sorted(report.tables.items()):
            p = os.path.join(out_dir, f"{name}.csv")
            with open(p, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(_plain(rows))
            written.append(p)
    return written
