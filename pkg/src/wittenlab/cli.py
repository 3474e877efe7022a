"""Command-line driver: scenario configs, checks, convergence studies and reports.

Configs are TOML documents.  Reports are a JSON document plus a CSV of the
entropy curve; both are written atomically.  Exit codes: 0 when every
requested check passes, 1 when a check fails, 2 for usage or config errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _backend
from .entropy import (
    EntropyCoefficients,
    h_entropy_curve,
    hmk_wmk_curve,
    km_second_order_lhs,
    near_delta,
)
from .geometry import (
    M_INFINITY,
    FlowScenario,
    GeometryError,
    GridSpec,
    MetricFamily,
    PotentialFamily,
    bakry_emery_ricci,
)
from .inequalities import (
    TestFamily,
    contrapositive_check,
    harnack_check,
    interpolation_identity_check,
    psi_monotonicity_check,
    inequality_suite,
)
from .operators import HeatPropagator, assemble_witten, bochner_residual, gamma2_direct
from .oracle import OUParams, ou_entropy_expansion
from .scenarios import INITIAL_DATA, METRICS, POTENTIALS, SCENARIOS, make_initial, make_potential, min_residual

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

__all__ = ["ConfigError", "ScenarioConfig", "parse_config", "parse_config_text", "build_scenario", "run", "convergence_study", "main"]

CHECKS = {
    "operator-identities": "self-adjointness and integration by parts on random fields",
    "bochner": "gap between the semigroup and direct forms of Gamma_2",
    "soliton": "sup-norm of Ric(L) - K on the grid",
    "super-flow": "minimum super-flow residual (declared K)",
    "inequality-suite": "LSI, reversal LSI, Poincare, reversal Poincare and gradient estimate",
    "contrapositive": "near-eigen gradient-estimate violation on a flow with negative residual",
    "harnack": "sharp and 1/t + 2K Harnack bounds plus their dominance",
    "entropy-monotonicity": "dH/dt <= 0 and dW/dt below the Hessian dissipation",
    "w-dissipation": "dW/dt against its dissipation formula",
    "second-order": "second-order entropy relation against its curvature identity",
    "km": "dimensional second-order entropy inequality (finite m)",
    "hmk": "dimensional entropy identity against the exact kernel entropy",
    "seam": "agreement of both coefficient branches at small K",
    "interpolation": "derivative of the interpolating entropy along the proof path",
    "psi": "monotonicity of the interpolating gradient functional",
}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# --------------------------------------------------------------------------
# config schema


def _num(key, value, lo=None, hi=None, integer=False, strict_lo=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}")
    if integer and (not float(value).is_integer()):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    v = int(value) if integer else float(value)
    if not math.isfinite(v):
        raise ConfigError(key, "must be finite")
    if lo is not None and (v <= lo if strict_lo else v < lo):
        raise ConfigError(key, f"must be {'>' if strict_lo else '>='} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(key, f"must be <= {hi}, got {v}")
    return v


def _choice(key, value, options):
    if value not in options:
        raise ConfigError(key, f"expected one of {sorted(options)}, got {value!r}")
    return value


def _section(doc, name, allowed, required=()):
    sec = doc.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(name, "expected a table")
    for key in sec:
        if key not in allowed:
            raise ConfigError(f"{name}.{key}", "unknown key")
    for key in required:
        if key not in sec:
            raise ConfigError(f"{name}.{key}", "missing required key")
    return sec


@dataclass
class ScenarioConfig:
    """Validated configuration; ``raw`` keeps the parsed document for hashing."""

    name: str
    grid: dict
    metric: dict
    potential: dict
    flow: dict
    time: dict
    initial: dict
    checks: list
    tests: dict
    study: dict
    raw_bytes: bytes = b""
    source: str = ""

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.raw_bytes).hexdigest()


TOP_KEYS = {"name", "grid", "metric", "potential", "flow", "time", "initial", "checks", "tests", "study"}


def parse_config(path) -> ScenarioConfig:
    """Parse and validate a TOML config file."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    return parse_config_text(raw, str(path))


def parse_config_text(text, origin: str = "<string>") -> ScenarioConfig:
    raw = text.encode() if isinstance(text, str) else bytes(text)
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError("<file>", f"invalid TOML: {exc}") from None
    return _validate(doc, raw, origin)


def _validate(doc, raw, origin) -> ScenarioConfig:
    for key in doc:
        if key not in TOP_KEYS:
            raise ConfigError(key, "unknown key")
    name = doc.get("name", "scenario")
    if not isinstance(name, str):
        raise ConfigError("name", "expected a string")

    g = _section(doc, "grid", {"domain", "dim", "points_per_axis", "half_width"}, ("domain", "points_per_axis"))
    grid = {
        "domain": _choice("grid.domain", g["domain"], {"box", "torus"}),
        "dim": _num("grid.dim", g.get("dim", 1), 1, 2, integer=True),
        "points_per_axis": _num("grid.points_per_axis", g["points_per_axis"], 8, 4096, integer=True),
        "half_width": _num("grid.half_width", g.get("half_width", math.pi), 0, strict_lo=True),
    }
    if grid["domain"] == "torus" and "half_width" in g:
        raise ConfigError("grid.half_width", "the torus has fixed period 2 pi")

    mt = _section(doc, "metric", {"variant", "rate", "amplitude", "wavenumbers", "growth"})
    variant = _choice("metric.variant", mt.get("variant", "static-euclidean"), set(METRICS))
    metric = {"variant": variant}
    if variant == "isotropic-scaling":
        metric["rate"] = _num("metric.rate", mt.get("rate", 0.4))
    if variant == "conformal-2d":
        if grid["dim"] != 2:
            raise ConfigError("metric.variant", "conformal-2d requires grid.dim = 2")
        if grid["domain"] != "torus":
            raise ConfigError("metric.variant", "conformal-2d is defined on the torus")
        metric["amplitude"] = _num("metric.amplitude", mt.get("amplitude", 0.05))
        ks = mt.get("wavenumbers", [1, 1])
        if not isinstance(ks, list) or len(ks) != 2:
            raise ConfigError("metric.wavenumbers", "expected two integers")
        metric["wavenumbers"] = [_num("metric.wavenumbers", k, integer=True) for k in ks]
        metric["growth"] = _num("metric.growth", mt.get("growth", 0.0))

    pt = _section(doc, "potential", {"kind", "kappa", "center", "terms", "mode"})
    kind = _choice("potential.kind", pt.get("kind", "zero"), set(POTENTIALS))
    potential = {"kind": kind, "mode": _choice("potential.mode", pt.get("mode", "free"), {"free", "fixed-measure"})}
    if kind == "quadratic":
        potential["kappa"] = _num("potential.kappa", pt.get("kappa", 1.0))
        if "center" in pt:
            c = pt["center"]
            if not isinstance(c, list) or len(c) != grid["dim"]:
                raise ConfigError("potential.center", f"expected {grid['dim']} coordinates")
            potential["center"] = [_num("potential.center", v) for v in c]
    if kind == "trig-sum":
        terms = pt.get("terms", [])
        if not isinstance(terms, list):
            raise ConfigError("potential.terms", "expected a list of [amp, [k...], phase]")
        parsed = []
        for i, term in enumerate(terms):
            key = f"potential.terms[{i}]"
            if not isinstance(term, list) or len(term) != 3 or not isinstance(term[1], list) or len(term[1]) != grid["dim"]:
                raise ConfigError(key, "expected [amp, [k...], phase] with one wavenumber per axis")
            parsed.append([_num(key, term[0]), [_num(key, k) for k in term[1]], _num(key, term[2])])
        potential["terms"] = parsed

    fl = _section(doc, "flow", {"K", "m", "allowance", "dt_max", "safety"})
    K = fl.get("K", 0.0)
    if K != "auto":
        K = _num("flow.K", K)
    m = fl.get("m", "inf")
    if m == "inf":
        m = M_INFINITY
    else:
        m = _num("flow.m", m)
        if m < grid["dim"]:
            raise ConfigError("flow.m", f"must be >= grid.dim = {grid['dim']}")
    flow = {
        "K": K,
        "m": m,
        "allowance": _num("flow.allowance", fl.get("allowance", 1.0), 0),
        "dt_max": None if "dt_max" not in fl else _num("flow.dt_max", fl["dt_max"], 0, strict_lo=True),
        "safety": _num("flow.safety", fl.get("safety", 1e-3), 0),
    }

    tm = _section(doc, "time", {"start", "end", "count"}, ("end",))
    tdoc = {
        "start": _num("time.start", tm.get("start", 0.0), 0),
        "end": _num("time.end", tm["end"], 0, strict_lo=True),
        "count": _num("time.count", tm.get("count", 21), 5, integer=True),
    }
    if tdoc["end"] <= tdoc["start"]:
        raise ConfigError("time.end", "must exceed time.start")

    it = _section(doc, "initial", {"kind", "value", "amplitude", "wavenumber", "phase", "sigma", "center", "floor"})
    ikind = _choice("initial.kind", it.get("kind", "constant"), set(INITIAL_DATA))
    initial = {"kind": ikind}
    for key in ("value", "amplitude", "wavenumber", "phase", "sigma", "floor"):
        if key in it:
            initial[key] = _num(f"initial.{key}", it[key])
    if "center" in it:
        c = it["center"]
        if not isinstance(c, list) or len(c) != grid["dim"]:
            raise ConfigError("initial.center", f"expected {grid['dim']} coordinates")
        initial["center"] = [_num("initial.center", v) for v in c]
    if ikind == "gaussian" and initial.get("sigma", 1.0) <= 0:
        raise ConfigError("initial.sigma", "must be > 0")

    checks = doc.get("checks", [])
    if isinstance(checks, dict):
        checks = checks.get("run", [])
    if not isinstance(checks, list):
        raise ConfigError("checks", "expected a list of check names")
    for i, c in enumerate(checks):
        _choice(f"checks[{i}]", c, set(CHECKS))

    ts = _section(doc, "tests", {"count", "kind", "floor", "seed", "eps", "pairs", "taus", "harnack_count", "harnack_K", "probe_samples"})
    tests = {
        "count": _num("tests.count", ts.get("count", 50), 1, integer=True),
        "kind": _choice("tests.kind", ts.get("kind", "random-trig"), {"random-trig", "gaussian-bumps", "near-eigen", "mixed"}),
        "floor": _num("tests.floor", ts.get("floor", 0.05), 0, 1, strict_lo=True),
        "seed": _num("tests.seed", ts.get("seed", 0), 0, integer=True),
        "eps": _num("tests.eps", ts.get("eps", 1e-2), 0, strict_lo=True),
        "harnack_count": _num("tests.harnack_count", ts.get("harnack_count", 20), 1, integer=True),
        "harnack_K": None if "harnack_K" not in ts else _num("tests.harnack_K", ts["harnack_K"], 0),
        "probe_samples": _num("tests.probe_samples", ts.get("probe_samples", 9), 3, integer=True),
    }
    T = tdoc["end"]
    pairs = ts.get("pairs", [[0.0, 0.5 * T], [0.25 * T, T]])
    if not isinstance(pairs, list) or not pairs:
        raise ConfigError("tests.pairs", "expected a list of [s, t] pairs")
    tests["pairs"] = []
    for i, p in enumerate(pairs):
        key = f"tests.pairs[{i}]"
        if not isinstance(p, list) or len(p) != 2:
            raise ConfigError(key, "expected [s, t]")
        s, t = _num(key, p[0], 0), _num(key, p[1], 0)
        if not s < t <= T + 1e-12:
            raise ConfigError(key, f"need 0 <= s < t <= time.end = {T}")
        tests["pairs"].append((s, t))
    taus = ts.get("taus", [1e-3, 1e-2])
    if not isinstance(taus, list):
        raise ConfigError("tests.taus", "expected a list")
    tests["taus"] = [_num("tests.taus", v, 0, strict_lo=True) for v in taus]

    st = _section(doc, "study", {"checks", "min_order", "max_order", "refine_time"})
    schecks = st.get("checks", ["bochner"])
    if not isinstance(schecks, list):
        raise ConfigError("study.checks", "expected a list")
    for i, c in enumerate(schecks):
        _choice(f"study.checks[{i}]", c, set(STUDY_RESIDUALS))
    study = {
        "checks": schecks,
        "min_order": _num("study.min_order", st.get("min_order", 1.7)),
        "max_order": _num("study.max_order", st.get("max_order", math.inf)) if "max_order" in st else math.inf,
        "refine_time": bool(st.get("refine_time", True)),
    }
    return ScenarioConfig(name, grid, metric, potential, flow, tdoc, initial, list(checks), tests, study, raw, origin)


# --------------------------------------------------------------------------
# scenario assembly


def build_scenario(cfg: ScenarioConfig, points: int | None = None, time_count: int | None = None) -> FlowScenario:
    g = cfg.grid
    grid = GridSpec(g["domain"], g["dim"], points or g["points_per_axis"], g["half_width"])
    mt = cfg.metric
    if mt["variant"] == "static-euclidean":
        metric = MetricFamily.static()
    elif mt["variant"] == "isotropic-scaling":
        metric = MetricFamily.exponential_scaling(mt["rate"])
    else:
        metric = MetricFamily.conformal_wave(mt["amplitude"], mt["wavenumbers"], mt["growth"])
    base = make_potential(cfg.potential["kind"], cfg.potential)
    pot = PotentialFamily.compensated(base, metric, grid.dim) if cfg.potential["mode"] == "fixed-measure" else base
    times = np.linspace(cfg.time["start"], cfg.time["end"], time_count or cfg.time["count"])
    init_fn = make_initial(cfg.initial["kind"], cfg.initial)
    fl = cfg.flow
    placeholder = np.ones(grid.shape)
    sc = FlowScenario(grid, metric, pot, 0.0, times, placeholder, m=fl["m"], allowance=fl["allowance"],
                      name=cfg.name, dt_max=fl["dt_max"], meta={"initial_fn": init_fn})
    values = near_delta(sc, center=cfg.initial.get("center")) if init_fn is None else init_fn(grid.coords)
    K = fl["K"]
    if K == "auto":
        K = min_residual(sc.replace(initial=values), fl["m"]) - fl["safety"]
    return sc.replace(initial=values, K=float(K))


# --------------------------------------------------------------------------
# checks


def _finite(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_finite(v) for v in x.tolist()]
    return x


def _family(cfg, scenario, count=None, kind=None, seed=None):
    t = cfg.tests
    kind = kind or t["kind"]
    count = count or t["count"]
    seed = t["seed"] if seed is None else seed
    if kind == "mixed":
        parts = [TestFamily(max(1, count // 3 + (i < count % 3)), k, t["floor"], seed + i, t["eps"])
                 for i, k in enumerate(("random-trig", "gaussian-bumps", "near-eigen"))]
        return parts
    return [TestFamily(count, kind, t["floor"], seed, t["eps"])]


def _operator_identities(scenario, cfg, ctx):
    rng = np.random.default_rng(cfg.tests["seed"])
    worst = 0.0
    for _ in range(20):
        t = float(rng.uniform(0, scenario.T))
        op = assemble_witten(scenario, t)
        u = rng.normal(size=scenario.grid.shape)
        v = rng.normal(size=scenario.grid.shape)
        mu = op.measure
        a, b = mu.inner(op.apply(u), v), mu.inner(u, op.apply(v))
        scale = mu.norm(op.apply(u)) * mu.norm(v) + mu.norm(u) * mu.norm(op.apply(v))
        ibp = -mu.inner(op.apply(u), v) - op.dirichlet(u, v)
        worst = max(worst, abs(a - b) / scale, abs(ibp) / scale)
    return {"passed": worst <= 1e-12, "relative_error": worst}


def _bochner_value(scenario):
    t = 0.5 * scenario.T
    u = scenario.initial
    res = bochner_residual(u, scenario, t)
    scale = float(np.max(np.abs(gamma2_direct(u, scenario, t))))
    return res, scale


def _bochner(scenario, cfg, ctx):
    res, scale = _bochner_value(scenario)
    tol = scenario.tolerance(scale * 10)
    return {"passed": res <= tol, "residual": res, "scale": scale, "tolerance": tol}


def _soliton_value(scenario):
    ric = bakry_emery_ricci(scenario, 0.0)
    worst = 0.0
    for i in range(scenario.n):
        for j in range(i, scenario.n):
            target = scenario.K if i == j else 0.0
            worst = max(worst, float(np.max(np.abs(ric[i, j] - target))))
    return worst


def _soliton(scenario, cfg, ctx):
    err = _soliton_value(scenario)
    return {"passed": err <= 1e-10, "sup_error": err}


def _super_flow(scenario, cfg, ctx):
    r = min_residual(scenario, scenario.m) - scenario.K
    return {"passed": r >= -1e-8, "min_residual": r}


def _suite(scenario, cfg, ctx):
    reports = []
    for fam in _family(cfg, scenario):
        reports += inequality_suite(scenario, cfg.tests["pairs"], fam, ctx["prop"])
    return {"passed": all(r.passed for r in reports), "reports": [r.summary() for r in reports],
            "min_margin": min(r.min_margin for r in reports)}


def _contrapositive(scenario, cfg, ctx):
    fam = TestFamily(min(cfg.tests["count"], 10), "near-eigen", cfg.tests["floor"], cfg.tests["seed"], cfg.tests["eps"])
    reports = [contrapositive_check(scenario, 0.0, tau, fam, prop=ctx["prop"]) for tau in cfg.tests["taus"]]
    return {"passed": all(r.passed for r in reports), "reports": [r.summary() for r in reports],
            "residual_min": min_residual(scenario, scenario.m)}


def _harnack(scenario, cfg, ctx):
    fam = TestFamily(cfg.tests["harnack_count"], "gaussian-bumps", cfg.tests["floor"], cfg.tests["seed"])
    hh, ham, dom = harnack_check(scenario, fam.generate(scenario), cfg.tests["harnack_K"], ctx["prop"])
    return {"passed": hh.passed and ham.passed and dom, "hh": hh.summary(), "ham": ham.summary(), "dominance": dom}


def _curve(ctx):
    if "curve" not in ctx:
        ctx["curve"] = h_entropy_curve(ctx["scenario"], prop=ctx["prop"])
    return ctx["curve"]


def _curve_scale(c):
    return float(np.max(np.abs(c.coefficients.one_plus_e2kt(c.t) * c.hessian_integral))) + 1e-300


def _monotonicity(scenario, cfg, ctx):
    c = _curve(ctx)
    m = c.interior
    bound = -c.coefficients.one_plus_e2kt(c.t) * c.hessian_integral
    tol = scenario.tolerance(_curve_scale(c))
    max_dH = float(np.max(c.dH_identity[m]))
    excess = float(np.max((c.dW - bound)[m]))
    return {"passed": max_dH <= 1e-8 and excess <= tol, "max_dH": max_dH, "max_dW_excess": excess, "tolerance": tol}


def _w_dissipation(scenario, cfg, ctx):
    c = _curve(ctx)
    m = c.interior
    gap = float(np.max(np.abs(c.dW - c.rhs)[m]))
    tol = scenario.tolerance(_curve_scale(c))
    return {"passed": gap <= tol, "max_gap": gap, "tolerance": tol}


def _second_order(scenario, cfg, ctx):
    c = _curve(ctx)
    m = c.interior
    lhs, ident = c.second_order_lhs[m], c.second_order_identity[m]
    scale = float(np.max(np.abs(2 * c.coefficients.D(c.t[m]) * c.hessian_integral[m]))) + 1e-300
    tol = scenario.tolerance(scale)
    gap = float(np.max(np.abs(lhs - ident)))
    return {"passed": gap <= tol and float(np.max(lhs)) <= tol, "max_gap": gap, "max_lhs": float(np.max(lhs)),
            "relative_gap": gap / scale, "tolerance": tol}


def _km(scenario, cfg, ctx):
    m = scenario.m
    if math.isinf(m):
        raise GeometryError("km check needs a finite flow.m")
    c = _curve(ctx)
    vals = np.array([km_second_order_lhs(scenario, t, m, c) for t in c.t[c.interior]])
    scale = float(np.max(np.abs(2 * c.coefficients.D(c.t[c.interior]) * c.hessian_integral[c.interior])))
    tol = scenario.tolerance(scale)
    return {"passed": float(np.max(vals)) <= tol, "max_lhs": float(np.max(vals)), "tolerance": tol}


def _hmk(scenario, cfg, ctx):
    m = scenario.m if not math.isinf(scenario.m) else float(scenario.n)
    sc = scenario
    if sc.t_grid[0] <= 0:
        if len(sc.t_grid) < 6:
            raise GeometryError("hmk needs at least 5 positive time samples")
        sc = sc.replace(t_grid=sc.t_grid[1:])
    curve = hmk_wmk_curve(sc, m)
    params = OUParams(int(round(m)), curve.K)
    pairs = [ou_entropy_expansion(params, t) for t in curve.t]
    rem = np.array([r for _, r in pairs])
    exact = np.array([v + r for v, r in pairs])
    resid = curve.H - (exact - curve.entropy) + rem
    scale = float(np.max(np.abs(curve.H))) + float(np.max(np.abs(curve.entropy))) + 1.0
    out = {"identity_residual": float(np.max(np.abs(resid))), "monotone_diagnostic": curve.monotone,
           "K": curve.K, "m": m, "remainder_max": float(np.max(np.abs(rem)))}
    passed = out["identity_residual"] <= 1e-13 * scale
    if np.all(rem != 0):
        out["remainder_order"] = fit_order(curve.t, np.abs(rem))
        passed = passed and out["remainder_order"] >= 3
    return {"passed": passed, **out}


def seam_report(K_small: float = 1e-6, ts=None, curve=None) -> dict:
    """Largest relative gap between the series and closed branches at ``K_small``."""
    ts = np.geomspace(1e-3, 10.0, 41) if ts is None else np.asarray(ts)
    s, c = EntropyCoefficients(K_small, "series"), EntropyCoefficients(K_small, "closed")
    gaps = {}
    for name in ("C", "D", "D_prime", "beta", "two_k_coth"):
        a, b = getattr(s, name)(ts), getattr(c, name)(ts)
        gaps[name] = float(np.max(np.abs(a - b) / np.abs(b)))
    ham_s = 1.0 / ts + 2 * K_small
    gaps["harnack"] = float(np.max(np.abs(s.D(ts) - c.D(ts)) / c.D(ts)))
    gaps["harnack_ham"] = float(np.max(np.abs(ham_s - (1.0 / ts + 2 * K_small)) / ham_s))
    if curve is not None:
        ws, wc = curve.w_with(s), curve.w_with(c)
        gaps["W"] = float(np.max(np.abs(ws - wc) / np.maximum(np.abs(wc), 1e-300)))
        w0 = curve.w_with(EntropyCoefficients(0.0))
        gaps["W_vs_K0_diagnostic"] = float(np.max(np.abs(ws - w0) / np.maximum(np.abs(w0), 1e-300)))
    core = {k: v for k, v in gaps.items() if not k.endswith("diagnostic")}
    return {"passed": max(core.values()) <= 1e-8, "gaps": gaps, "K": K_small}


def _seam(scenario, cfg, ctx):
    curve = h_entropy_curve(scenario, K=1e-6, prop=ctx["prop"])
    return seam_report(1e-6, curve=curve)


def _interpolation(scenario, cfg, ctx):
    r = interpolation_identity_check(scenario, 0.0, scenario.T, scenario.initial, cfg.tests["probe_samples"], prop=ctx["prop"])
    tol = scenario.tolerance(float(np.max(np.abs(r["integrand"]))) * 10)
    return {"passed": r["integrated_residual"] <= tol, "residual": r["residual"], "integrated_residual": r["integrated_residual"],
            "tolerance": tol}


def _psi(scenario, cfg, ctx):
    rep = psi_monotonicity_check(scenario, 0.0, scenario.T, scenario.initial, cfg.tests["probe_samples"], prop=ctx["prop"])
    return {"passed": rep.passed, **rep.summary()}


RUNNERS = {
    "operator-identities": _operator_identities,
    "bochner": _bochner,
    "soliton": _soliton,
    "super-flow": _super_flow,
    "inequality-suite": _suite,
    "contrapositive": _contrapositive,
    "harnack": _harnack,
    "entropy-monotonicity": _monotonicity,
    "w-dissipation": _w_dissipation,
    "second-order": _second_order,
    "km": _km,
    "hmk": _hmk,
    "seam": _seam,
    "interpolation": _interpolation,
    "psi": _psi,
}


# --------------------------------------------------------------------------
# run and study


@dataclass
class RunReport:
    name: str
    config_hash: str
    seed: int
    checks: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)
    table: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks) and all(r.get("passed", True) for r in self.table)

    def document(self) -> dict:
        return _finite({
            "name": self.name,
            "passed": self.passed,
            "provenance": {"config_sha256": self.config_hash, "version": __version__, "seed": self.seed},
            "checks": self.checks,
            "curves": {k: v["file"] for k, v in self.curves.items()},
            "convergence": self.table,
        })


def _with_seed(cfg: ScenarioConfig, seed):
    if seed is not None:
        cfg.tests["seed"] = int(seed)
    return cfg


def run(cfg: ScenarioConfig, seed: int | None = None) -> RunReport:
    """Execute every requested check in declared order; errors are captured per check."""
    cfg = _with_seed(cfg, seed)
    t0 = time.perf_counter()
    report = RunReport(cfg.name, cfg.config_hash, cfg.tests["seed"])
    scenario = build_scenario(cfg)
    ctx = {"scenario": scenario, "prop": HeatPropagator(scenario)}
    for name in cfg.checks:
        try:
            out = RUNNERS[name](scenario, cfg, ctx)
        except Exception as exc:  # captured into the report
            out = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
        report.checks.append({"check": name, **out})
    try:
        curve = _curve(ctx)
        report.curves["entropy"] = {"file": "entropy.csv", "rows": curve.rows()}
    except (GeometryError, ValueError) as exc:
        report.curves["entropy"] = {"file": None, "error": str(exc), "rows": []}
    report.wall_time = time.perf_counter() - t0
    return report


def _study_residual(name, cfg, points, tcount, times=None):
    """Residual of one check at a resolution; curve checks compare at common ``times``."""
    sc = build_scenario(cfg, points=points, time_count=tcount)
    if name == "bochner":
        return bochner_residual(sc.initial, sc, 0.5 * sc.T), None
    if name == "soliton":
        return _soliton_value(sc), None
    c = h_entropy_curve(sc)
    if times is None:
        times = c.t[c.interior]
    idx = [c.index(t) for t in times]
    if name == "second-order":
        gap = np.abs(c.second_order_lhs - c.second_order_identity)
    elif name == "w-dissipation":
        gap = np.abs(c.dW - c.rhs)
    else:
        raise KeyError(name)
    return float(np.max(gap[idx])), times


STUDY_RESIDUALS = ("bochner", "soliton", "second-order", "w-dissipation")


def fit_order(hs, residuals):
    """Least-squares slope of ``log residual`` against ``log h``."""
    return float(np.polyfit(np.log(hs), np.log(residuals), 1)[0])


def convergence_study(cfg: ScenarioConfig, levels: int, seed: int | None = None) -> RunReport:
    """Rerun residual checks at ``h, h/2, h/4, ...`` and fit the observed order."""
    if levels < 3:
        raise ConfigError("--levels", "a convergence study needs at least 3 levels")
    cfg = _with_seed(cfg, seed)
    t0 = time.perf_counter()
    report = RunReport(cfg.name, cfg.config_hash, cfg.tests["seed"])
    base_n, base_t = cfg.grid["points_per_axis"], cfg.time["count"]
    for name in cfg.study["checks"]:
        hs, res, times = [], [], None
        for lvl in range(levels):
            n = base_n * 2**lvl
            tc = (base_t - 1) * 2**lvl + 1 if cfg.study["refine_time"] else base_t
            g = GridSpec(cfg.grid["domain"], cfg.grid["dim"], n, cfg.grid["half_width"])
            hs.append(g.h)
            r, times = _study_residual(name, cfg, n, tc, times)
            res.append(r)
        hs, res = np.array(hs), np.array(res)
        rows = [{"level": i, "h": float(h), "residual": float(r)} for i, (h, r) in enumerate(zip(hs, res))]
        if np.all(res <= 1e-13):
            status, order, passed = "exact", None, True
        elif np.any(np.diff(res) >= 0):
            status, order, passed = "no convergence", None, False
        else:
            order = fit_order(hs, res)
            status = "converged"
            passed = cfg.study["min_order"] <= order <= cfg.study["max_order"]
        report.table.append({"check": name, "status": status, "order": order, "passed": passed, "rows": rows})
    report.wall_time = time.perf_counter() - t0
    return report


# --------------------------------------------------------------------------
# output


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_bytes(rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("t", "H_K", "dH", "d2H", "W_K", "dW", "rhs", "fisher", "hessian_integral"))
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue().encode()


def write_report(report: RunReport, out_dir: Path) -> Path:
    """Write ``report.json``, curve CSVs and a ``report.meta.json`` holding the wall time."""
    out_dir = Path(out_dir)
    for curve in report.curves.values():
        if curve.get("file"):
            _atomic_write(out_dir / curve["file"], _csv_bytes(curve["rows"]))
    doc = json.dumps(report.document(), indent=2, sort_keys=True, allow_nan=False).encode() + b"\n"
    _atomic_write(out_dir / "report.json", doc)
    meta = {"wall_time_s": report.wall_time, "backend": _backend.name()}
    _atomic_write(out_dir / "report.meta.json", json.dumps(meta, indent=2).encode() + b"\n")
    return out_dir / "report.json"


def _print_summary(report: RunReport, stream) -> None:
    for c in report.checks:
        status = "PASS" if c["passed"] else "FAIL"
        extra = f"  ({c['error']})" if "error" in c else ""
        print(f"{status}  {c['check']}{extra}", file=stream)
    for row in report.table:
        order = "-" if row["order"] is None else f"{row['order']:.3f}"
        print(f"{'PASS' if row['passed'] else 'FAIL'}  study {row['check']}: {row['status']}, order {order}", file=stream)
    print(f"overall: {'PASS' if report.passed else 'FAIL'}", file=stream)


def _list_catalog(stream) -> None:
    for title, table in (("metrics", METRICS), ("potentials", POTENTIALS), ("initial data", INITIAL_DATA), ("checks", CHECKS)):
        print(f"{title}:", file=stream)
        for k, v in table.items():
            print(f"  {k:22s} {v}", file=stream)
    print("reference scenarios:", file=stream)
    for k, fn in SCENARIOS.items():
        doc = (fn.__doc__ or "").strip().splitlines()[0]
        print(f"  {k:22s} {doc}", file=stream)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wittenlab", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("wittenlab-out"), help="report directory")
    common.add_argument("--seed", type=int, default=None, help="override tests.seed (unsigned 64-bit)")
    common.add_argument("--quiet", action="store_true", help="suppress the summary")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run the checks of a config")
    r.add_argument("config", type=Path)
    s = sub.add_parser("study", parents=[common], help="grid-refinement study")
    s.add_argument("config", type=Path)
    s.add_argument("--levels", type=int, default=3)
    sub.add_parser("list-catalog", help="list catalog entries and checks")
    return p


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "list-catalog":
        _list_catalog(sys.stdout)
        return 0
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    try:
        cfg = parse_config(args.config)
        if args.command == "run":
            report = run(cfg, args.seed)
        else:
            report = convergence_study(cfg, args.levels, args.seed)
    except (ConfigError, GeometryError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    write_report(report, args.out)
    if not args.quiet:
        _print_summary(report, sys.stdout)
    return 0 if report.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
