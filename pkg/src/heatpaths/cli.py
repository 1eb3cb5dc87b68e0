"""Experiment harness.

Usage::

    heatpaths list
    heatpaths run --experiment kernel-converge [--config cfg.yaml] [--out DIR] [--seed N]

Each experiment writes ``<out>/<experiment>.csv`` (results) and
``<out>/<experiment>-checks.csv`` (one row per pass/fail check).  Both start
with a versioned header comment and a timestamp comment; everything after the
timestamp line is deterministic for a given config.  Exit status is 0 iff
every check passes, 1 if a check fails and 2 on usage or config errors.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import math
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from .bundle import MagneticWeight, weight_from_preset
from .detzeta import (
    ASYMPTOTICS_COLUMNS,
    HessianSpec,
    Method,
    degenerate_asymptotics_sphere,
    fredholm_det,
    hessian_spec,
    leading_asymptotics,
    predicted_limits,
    spectral_zeta_det,
    zeta_det,
)
from .geom import Euclidean, FlatTorus, Interval, Sphere, manifold_from_config, manifold_label
from .kernelconv import (
    REPORT_COLUMNS,
    KernelFamily,
    build_grid,
    chernoff_product,
    convergence_report,
    sup_error,
    window_grid,
)
from .pathspace import make_partition
from .reference import fk_reference, fk_reference_line, interval_kernel_series, reference_matrix
from .stochastic import (
    ESTIMATE_COLUMNS,
    MCEstimate,
    SamplerConfig,
    cylinder_expectation,
    estimate_row,
    feynman_kac_mc,
    quadratic_variation_stats,
    truncation_bias_bound,
)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config

_MANIFOLD_KEYS = {"kind", "dim", "sides", "circumference", "radius", "length", "bc"}
_WEIGHT_KEYS = {"preset", "c", "amplitude", "omega", "a", "gauge"}
_TOLERANCE_KEYS = {
    "sup_error",
    "stderr_k",
    "rel_floor",
    "min_rate",
    "max_final_rel",
    "l2_match",
    "l2_gap",
    "alpha_low",
    "alpha_high",
    "residual_ratio",
    "asym_rel",
    "flat_rel",
    "det_abs",
    "zeta_abs",
    "identity_abs",
}


def _positive(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and x > 0


def _nonneg_int(x):
    return isinstance(x, int) and not isinstance(x, bool) and x >= 0


def _pos_int(x):
    return _nonneg_int(x) and x > 0


def _int_list(x):
    return isinstance(x, list) and len(x) > 0 and all(_pos_int(v) for v in x)


def _num_list(x):
    return isinstance(x, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x)


_TOP = {
    "experiment": (lambda v: isinstance(v, str), "a string"),
    "manifold": (lambda v: isinstance(v, dict), "a mapping with key 'kind'"),
    "t": (_positive, "a positive number"),
    "N": (lambda v: _pos_int(v) or _int_list(v), "a positive integer or a list of them"),
    "resolution": (_pos_int, "a positive integer"),
    "seed": (_nonneg_int, "a non-negative integer"),
    "n_samples": (_pos_int, "a positive integer"),
    "weight": (lambda v: isinstance(v, (str, dict)), "a preset name or a mapping"),
    "family": (lambda v: isinstance(v, (str, list)), "a family name or a list of names"),
    "tolerances": (lambda v: isinstance(v, dict), "a mapping"),
    "output": (lambda v: isinstance(v, str), "a directory path"),
    "x": (_num_list, "a list of coordinates"),
    "truncation": (lambda v: _positive(v) and v <= 1, "a number in (0, 1]"),
    "t_list": (lambda v: _num_list(v) and all(x > 0 for x in v), "a list of positive times"),
    "t_list_degenerate": (lambda v: _num_list(v) and all(x > 0 for x in v), "a list of positive times"),
    "pairs": (_pos_int, "a positive integer"),
}


@dataclass
class ExperimentConfig:
    experiment: str
    values: dict = field(default_factory=dict)
    source: str = "<defaults>"

    def get(self, key, default=None):
        return self.values.get(key, default)

    def tol(self, key, default):
        return float(self.values.get("tolerances", {}).get(key, default))

    def N_list(self, default):
        N = self.values.get("N", default)
        return [N] if isinstance(N, int) else list(N)

    def manifold(self, default: dict):
        spec = dict(self.values.get("manifold", default))
        return manifold_from_config(spec.pop("kind"), **spec)


def _key_lines(text: str) -> dict:
    """Map top-level and nested keys (dotted) to 1-based line numbers."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark else "unknown line"
        raise ConfigError(f"YAML syntax error at {where}: {getattr(exc, 'problem', exc)}") from None
    lines = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                name = f"{prefix}{k.value}"
                lines[name] = k.start_mark.line + 1
                walk(v, name + ".")

    if root is not None:
        walk(root, "")
    return lines


def parse_config(text: str, source: str = "<string>") -> dict:
    """Parse and validate a YAML config; errors name the file, line and field."""
    lines = _key_lines(text)
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")

    def fail(key, msg):
        line = lines.get(key)
        loc = f"{source}:{line}" if line else source
        raise ConfigError(f"{loc}: field '{key}': {msg}")

    for key, val in data.items():
        if key not in _TOP:
            fail(key, f"unknown key (allowed: {', '.join(sorted(_TOP))})")
        ok, what = _TOP[key]
        if not ok(val):
            fail(key, f"must be {what}, got {val!r}")
    for sub, allowed in (("manifold", _MANIFOLD_KEYS), ("weight", _WEIGHT_KEYS), ("tolerances", _TOLERANCE_KEYS)):
        block = data.get(sub)
        if isinstance(block, dict):
            for k, v in block.items():
                if k not in allowed:
                    fail(f"{sub}.{k}", f"unknown key (allowed: {', '.join(sorted(allowed))})")
                if sub == "tolerances" and not _positive(v):
                    fail(f"{sub}.{k}", f"must be a positive number, got {v!r}")
    if "manifold" in data:
        if "kind" not in data["manifold"]:
            fail("manifold", "missing 'kind'")
        try:
            spec = dict(data["manifold"])
            manifold_from_config(spec.pop("kind"), **spec)
        except (ValueError, TypeError) as exc:
            fail("manifold", str(exc))
    if "experiment" in data and data["experiment"] not in EXPERIMENTS:
        fail("experiment", f"unknown experiment {data['experiment']!r}")
    if isinstance(data.get("weight"), dict) and "preset" not in data["weight"]:
        fail("weight", "missing 'preset'")
    fams = data.get("family")
    if fams is not None:
        for f in [fams] if isinstance(fams, str) else fams:
            try:
                KernelFamily.parse(f)
            except ValueError:
                fail("family", f"unknown kernel family {f!r}")
    return data


def load_config(path: str | None) -> tuple[dict, str]:
    if path is None:
        return {}, "<defaults>"
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(p)), str(p)


# ---------------------------------------------------------------- output


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (complex, np.complexfloating)) and not isinstance(v, (float, np.floating)):
        return f"{v.real:.16e}{v.imag:+.16e}j"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.16e}"
    return str(v)


def write_csv(path: Path, experiment: str, columns: list, rows: list):
    path.parent.mkdir(parents=True, exist_ok=True)
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(f"# heatpaths {__version__} experiment={experiment} schema={SCHEMA_VERSION} columns={'|'.join(columns)}\n")
        fh.write(f"# generated {stamp}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(v) for v in r])


@dataclass
class Check:
    name: str
    passed: bool
    value: Any
    threshold: Any


@dataclass
class Outcome:
    columns: list
    rows: list
    checks: list


CHECK_COLUMNS = ["check", "passed", "value", "threshold"]


# ---------------------------------------------------------------- experiments


def _sampler(cfg: ExperimentConfig, n_default: int) -> SamplerConfig:
    return SamplerConfig(int(cfg.get("seed", 0)), int(cfg.get("n_samples", n_default)), float(cfg.get("truncation", 0.9)))


def _weight(cfg: ExperimentConfig, m, default="cosine"):
    w = cfg.get("weight", default)
    if isinstance(w, str):
        return w, weight_from_preset(w, m), {}
    params = {k: v for k, v in w.items() if k != "preset"}
    return w["preset"], weight_from_preset(w["preset"], m, **params), params


def run_exactness(cfg: ExperimentConfig) -> Outcome:
    t = float(cfg.get("t", 0.5))
    res = int(cfg.get("resolution", 64))
    Ns = cfg.N_list([1, 2, 4, 8, 16])
    tol = cfg.tol("sup_error", 1e-6)
    specs = [cfg.get("manifold")] if cfg.get("manifold") else [{"kind": "euclidean", "dim": 1}, {"kind": "torus", "sides": [1.0]}]
    rows, checks = [], []
    for spec in specs:
        spec = dict(spec)
        m = manifold_from_config(spec.pop("kind"), **spec)
        mask = None
        if isinstance(m, Euclidean):
            grid = window_grid(m, res)
            # compare away from the window edge, where mass leaks out
            inner = np.all(np.abs(grid.points) <= 2.0, axis=-1)
            mask = inner[:, None] & inner[None, :]
        else:
            grid = build_grid(m, res)
        ref = reference_matrix(m, grid, t)
        for N in Ns:
            err = sup_error(chernoff_product(KernelFamily.PLAIN_H1, m, grid, make_partition(t, N)), ref, mask)
            rows.append([manifold_label(m), t, N, res, err])
            checks.append(Check(f"{manifold_label(m)} N={N} sup error", err < tol, err, tol))
    return Outcome(["manifold", "t", "N", "resolution", "sup_error"], rows, checks)


def run_wiener(cfg: ExperimentConfig) -> Outcome:
    m = cfg.manifold({"kind": "euclidean", "dim": 1})
    if not isinstance(m, Euclidean) or m.n != 1:
        raise ConfigError("wiener runs on euclidean dim 1 (closed-form Gaussian oracle)")
    t = float(cfg.get("t", 1.0))
    x = float(cfg.get("x", [0.3])[0])
    Ns = cfg.N_list([2, 8, 32])
    if any(N % 2 for N in Ns):
        raise ConfigError("field 'N': wiener needs even N so that t/2 is a partition time")
    sc = _sampler(cfg, 100_000)
    k = cfg.tol("stderr_k", 3.0)
    oracle = x * x + t / 2
    rows, checks, ests = [], [], []
    for N in Ns:
        tau = make_partition(t, N)
        est = cylinder_expectation(m, [x], tau, lambda nd, h=N // 2 - 1: nd[:, h, 0] * nd[:, -1, 0], sc)
        ests.append(est)
        rows.append(estimate_row(m, tau, "uniform", sc, est) + [oracle])
        checks.append(Check(f"N={N} E[g(t/2)g(t)] vs oracle", abs(est.mean - oracle) <= k * est.stderr, abs(est.mean - oracle), k * est.stderr))
    last = ests[-1]
    for N, e in zip(Ns[:-1], ests[:-1]):
        comb = math.hypot(e.stderr, last.stderr)
        checks.append(Check(f"Cauchy N={N} vs N={Ns[-1]}", abs(e.mean - last.mean) <= k * comb, abs(e.mean - last.mean), k * comb))
    # quadratic variation on the unit sphere: sum ric(D gamma, D gamma) -> int scal = 2t
    S = Sphere(1.0)
    tq = 1.0
    tau = make_partition(tq, 64)
    qv = quadratic_variation_stats(S, [0.0, 0.0, 1.0], tq, tau, sc)
    est = MCEstimate(qv.ric_mean, qv.ric_stderr, sc.n_samples, truncation_bias_bound(S, tau, sc.truncation))
    rows.append(estimate_row(S, tau, "uniform", sc, est) + [2.0 * tq])
    bound = max(k * qv.ric_stderr, 0.1)
    checks.append(Check("sphere N=64 E[sum ric] vs int scal", abs(qv.ric_mean - 2.0 * tq) < bound, abs(qv.ric_mean - 2.0 * tq), bound))
    return Outcome(ESTIMATE_COLUMNS + ["oracle"], rows, checks)


def _ones(p):
    return np.ones(np.shape(p)[:-1])


def run_feynman_kac(cfg: ExperimentConfig) -> Outcome:
    m = cfg.manifold({"kind": "circle"})
    t = float(cfg.get("t", 0.5))
    x = np.asarray(cfg.get("x", [0.0] * m.ambient_dim), dtype=float)
    Ns = cfg.N_list([64])
    sc = _sampler(cfg, 1_000_000)
    k = cfg.tol("stderr_k", 3.0)
    floor = cfg.tol("rel_floor", 0.02)
    name, w, params = _weight(cfg, m)
    rows, checks = [], []
    for N in Ns:
        tau = make_partition(t, N)
        est = feynman_kac_mc(m, x, t, tau, w, _ones, sc)
        if isinstance(w, MagneticWeight):
            a = float(params.get("a", 0.3))
            ref = fk_reference(m, None, t, x, _ones, a=a)
            g = float(params.get("gauge", 0.7)) or 0.7
            wg = weight_from_preset("magnetic-a", m, a=a, gauge=g)
            # the gauge-transformed datum e^{-i f} u0 with f = g sin(theta)
            u0g = lambda p: np.exp(-1j * g * np.sin(p[..., 0]))
            est_g = feynman_kac_mc(m, x, t, tau, wg, u0g, SamplerConfig(sc.seed + 1, sc.n_samples, sc.truncation))
            comb = math.hypot(est.stderr, est_g.stderr)
            dmod = abs(abs(est.mean) - abs(est_g.mean))
            rows.append(estimate_row(m, tau, "uniform", sc, est_g) + [ref])
            checks.append(Check(f"N={N} gauge invariance of |u|", dmod <= k * comb, dmod, k * comb))
        elif isinstance(m, Euclidean):
            ref = fk_reference_line(w.V, t, float(x[0]), _ones)
        else:
            ref = fk_reference(m, w.V, t, x, _ones)
        rows.append(estimate_row(m, tau, "uniform", sc, est) + [ref])
        bound = max(k * est.stderr, floor * abs(ref))
        checks.append(Check(f"N={N} {name} estimate vs Galerkin", abs(est.mean - ref) <= bound, abs(est.mean - ref), bound))
    return Outcome(ESTIMATE_COLUMNS + ["reference"], rows, checks)


def _families(cfg, default):
    f = cfg.get("family", default)
    return [KernelFamily.parse(v) for v in ([f] if isinstance(f, str) else f)]


def run_kernel_converge(cfg: ExperimentConfig) -> Outcome:
    m = cfg.manifold({"kind": "sphere", "radius": 1.0})
    t = float(cfg.get("t", 0.5))
    res = int(cfg.get("resolution", 32))
    Ns = cfg.N_list([4, 8, 16, 32, 64])
    grid = build_grid(m, res)
    ref = reference_matrix(m, grid, t)
    rows, checks = [], []
    reports = {}
    for fam in _families(cfg, ["plain-h1", "ell-corrected"]):
        rep = convergence_report(fam, m, t, Ns, ref)
        reports[fam] = rep
        rows.extend(rep.rows())
        if rep.exact:
            checks.append(Check(f"{fam.value} exact", True, max(rep.relative_errors), 1e-8))
            continue
        checks.append(Check(f"{fam.value} monotone refinement", rep.monotone(), max(rep.relative_errors), "decreasing"))
        lim = cfg.tol("max_final_rel", 0.01)
        checks.append(Check(f"{fam.value} N={Ns[-1]} relative sup error", rep.relative_errors[-1] < lim, rep.relative_errors[-1], lim))
        lo = cfg.tol("min_rate", 0.4)
        checks.append(Check(f"{fam.value} fitted rate", rep.rate >= lo, rep.rate, lo))
    p, e = reports.get(KernelFamily.PLAIN_H1), reports.get(KernelFamily.ELL_CORRECTED)
    if p and e and not p.exact:
        for N, ep, ee in zip(Ns, p.sup_errors, e.sup_errors):
            checks.append(Check(f"N={N} ell-corrected beats plain-h1", ee < ep, ee, ep))
    return Outcome(REPORT_COLUMNS, rows, checks)


def run_metric_compare(cfg: ExperimentConfig) -> Outcome:
    m = cfg.manifold({"kind": "sphere", "radius": 1.0})
    t = float(cfg.get("t", 0.5))
    res = int(cfg.get("resolution", 32))
    N = cfg.N_list([64])[-1]
    grid = build_grid(m, res)
    tau = make_partition(t, N)
    plain = np.diag(chernoff_product(KernelFamily.PLAIN_H1, m, grid, tau).values)
    variants = {"l2+scal/6": 1.0 / 6.0, "l2-no-scal": 0.0, "l2-scal/6-negated": -1.0 / 6.0}
    rows, checks, rel = [], [], {}
    for name, c in variants.items():
        d = np.diag(chernoff_product(KernelFamily.L2_CORRECTED, m, grid, tau, l2_scal_coefficient=c).values)
        rel[name] = float(np.max(np.abs(d / plain - 1.0)))
        rows.append([manifold_label(m), name, c, t, N, res, rel[name]])
    match, gap = cfg.tol("l2_match", 0.01), cfg.tol("l2_gap", 0.05)
    checks.append(Check("L2 with scal/6 agrees with plain-h1 on the diagonal", rel["l2+scal/6"] < match, rel["l2+scal/6"], match))
    checks.append(Check("L2 without the scal term misses on the diagonal", rel["l2-no-scal"] >= gap, rel["l2-no-scal"], gap))
    return Outcome(["manifold", "variant", "scal_coefficient", "t", "N", "resolution", "max_rel_diag_diff"], rows, checks)


def run_boundary(cfg: ExperimentConfig) -> Outcome:
    base = cfg.manifold({"kind": "interval", "length": math.pi})
    if not isinstance(base, Interval):
        raise ConfigError("field 'manifold': boundary runs on an interval")
    t = float(cfg.get("t", 0.3))
    res = int(cfg.get("resolution", 128))
    Ns = cfg.N_list([4, 16, 64])
    lim = cfg.tol("max_final_rel", 0.01)
    rows, checks = [], []
    for bc in ("dirichlet", "neumann"):
        other = "neumann" if bc == "dirichlet" else "dirichlet"
        m = Interval(base.length, bc)
        grid = build_grid(m, res)
        x = grid.points[:, 0]
        series = {b: interval_kernel_series(Interval(base.length, b), t, x[:, None], x[None, :]) for b in (bc, other)}
        scale = np.abs(series[bc]).max()
        for signs in (bc, other):
            prod_m = Interval(base.length, signs)
            for N in Ns:
                P = chernoff_product(KernelFamily.PLAIN_H1, prod_m, grid, make_partition(t, N)).values
                e_own = float(np.abs(P - series[bc]).max() / scale)
                e_other = float(np.abs(P - series[other]).max() / np.abs(series[other]).max())
                rows.append([bc, signs, t, N, res, e_own, e_other])
            if signs == bc:
                checks.append(Check(f"{bc} signs N={Ns[-1]} vs {bc} series", e_own < lim, e_own, lim))
            else:
                checks.append(Check(f"{signs} signs N={Ns[-1]} miss {bc} series", e_own > 10 * lim, e_own, 10 * lim))
                checks.append(Check(f"{signs} signs N={Ns[-1]} match {signs} series", e_other < lim, e_other, lim))
    return Outcome(["target_bc", "sign_rule", "t", "N", "resolution", "rel_error_vs_target", "rel_error_vs_other"], rows, checks)


def run_asymptotics(cfg: ExperimentConfig) -> Outcome:
    rows, checks = [], []
    s = Sphere(1.0)
    x, y = np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0])
    rep = leading_asymptotics(s, x, y, tuple(cfg.get("t_list", [0.1, 0.05, 0.025])))
    rows.extend(rep.rows())
    rows.append([rep.manifold, rep.d, 0.0, rep.extrapolated, rep.prediction, rep.relative_error])
    lim = cfg.tol("asym_rel", 0.01)
    checks.append(Check("sphere d=pi/2 extrapolated vs det^{-1/2}", rep.relative_error < lim, rep.relative_error, lim))
    checks.append(Check("Fredholm and zeta forms identical", rep.notes["forms_differ"] <= 1e-12, rep.notes["forms_differ"], 1e-12))

    T = FlatTorus(1, (2 * math.pi,))
    rt = leading_asymptotics(T, np.array([0.0]), np.array([1.0]))
    rows.extend(rt.rows())
    rows.append([rt.manifold, rt.d, 0.0, rt.extrapolated, rt.prediction, rt.relative_error])
    fl = cfg.tol("flat_rel", 1e-4)
    checks.append(Check("flat torus extrapolated vs 1", rt.relative_error < fl, rt.relative_error, fl))

    dg = degenerate_asymptotics_sphere(tuple(cfg.get("t_list_degenerate", [0.05, 0.025, 0.0125])))
    rows.extend(dg.rows())
    rows.append([dg.manifold, dg.d, 0.0, dg.extrapolated, dg.prediction, dg.relative_error])
    lo, hi = cfg.tol("alpha_low", 1.35), cfg.tol("alpha_high", 1.65)
    checks.append(Check("antipodal fitted exponent", lo <= dg.alpha <= hi, dg.alpha, f"[{lo}, {hi}]"))
    rr = cfg.tol("residual_ratio", 10.0)
    checks.append(Check("alpha=1 residual / alpha=1.5 residual", dg.residual_ratio >= rr, dg.residual_ratio, rr))
    return Outcome(ASYMPTOTICS_COLUMNS, rows, checks)


def run_determinants(cfg: ExperimentConfig) -> Outcome:
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    pairs = int(cfg.get("pairs", 50))
    tol = cfg.tol("det_abs", 1e-6)
    rows, checks = [], []
    worst = 0.0
    S, T = Sphere(1.0), FlatTorus(2, (1.0, 1.5))
    for i in range(pairs):
        if i % 2 == 0:
            x = rng.standard_normal(3)
            x /= np.linalg.norm(x)
            v = rng.standard_normal(3)
            v -= v.dot(x) * x
            v *= rng.uniform(0.01, 0.95 * math.pi) / np.linalg.norm(v)
            m, y = S, S.exp_map(x, v)
        else:
            m = T
            x = rng.uniform(0, 1, 2) * np.array(T.sides)
            y = T.exp_map(x, rng.uniform(-0.45, 0.45, 2) * np.array(T.sides))
        fd = fredholm_det(hessian_spec(m, x, y)).value
        J = float(m.exp_jacobian(x, y))
        worst = max(worst, abs(fd - J))
        rows.append([f"det vs J {manifold_label(m)} pair {i}", fd, J, abs(fd - J)])
    checks.append(Check(f"max |det - J| over {pairs} pairs", worst < tol, worst, tol))
    fd = fredholm_det(hessian_spec(S, np.array([0, 0, 1.0]), np.array([1.0, 0, 0]))).value
    rows.append(["sphere d=pi/2", fd, 2 / math.pi, abs(fd - 2 / math.pi)])
    checks.append(Check("sphere d=pi/2 det = 2/pi", abs(fd - 2 / math.pi) < tol, abs(fd - 2 / math.pi), tol))

    zt = cfg.tol("zeta_abs", 1e-10)
    for n in (1, 2, 3):
        z = zeta_det(HessianSpec(np.zeros((n, n)))).value
        rows.append([f"det_zeta(-d^2) n={n}", z, 2.0**n, abs(z - 2.0**n)])
        checks.append(Check(f"det_zeta(-d^2) = 2^{n}", abs(z - 2.0**n) < zt, abs(z - 2.0**n), zt))
    spec1 = HessianSpec.from_matrix([[1.0]])
    z1 = zeta_det(spec1).value
    ep = 2.0 * fredholm_det(spec1, Method.EIGEN_PRODUCT, n_modes=10**6).value
    sz = spectral_zeta_det(1.0)
    rows.append(["det_zeta(-d^2+1) vs eigen-product", z1, ep, abs(z1 - ep)])
    rows.append(["det_zeta(-d^2+1) vs spectral zeta", z1, sz, abs(z1 - sz)])
    checks.append(Check("det_zeta(-d^2+1) vs eigen-product oracle", abs(z1 - ep) < 1e-8, abs(z1 - ep), 1e-8))
    checks.append(Check("det_zeta(-d^2+1) vs spectral zeta oracle", abs(z1 - sz) < 1e-8, abs(z1 - sz), 1e-8))
    zp = zeta_det(HessianSpec.from_matrix([[-math.pi**2]]), prime=True)
    szp = spectral_zeta_det(-math.pi**2, prime=True)
    rows.append(["det'_zeta(-d^2-pi^2)", zp.value, szp, abs(zp.value - szp)])
    checks.append(Check("det'_zeta(-d^2-pi^2) vs spectral zeta", abs(zp.value - szp) < 1e-8, abs(zp.value - szp), 1e-8))

    it = cfg.tol("identity_abs", 1e-12)
    gap = 0.0
    for _ in range(20):
        # eigenvalues above -pi^2: no conjugate point before s = 1
        Q = np.linalg.qr(rng.standard_normal((2, 2)))[0]
        R = Q @ np.diag(rng.uniform(-0.9 * math.pi**2, 10.0, 2)) @ Q.T
        R = 0.5 * (R + R.T)
        a, b = predicted_limits(HessianSpec(R))
        gap = max(gap, abs(a - b) / abs(a))
    rows.append(["Fredholm vs zeta forms (max relative gap)", gap, 0.0, gap])
    checks.append(Check("Fredholm and zeta predicted limits identical", gap <= it, gap, it))
    return Outcome(["case", "value", "oracle", "abs_error"], rows, checks)


@dataclass(frozen=True)
class Experiment:
    name: str
    runner: Callable
    verifies: str
    modules: str


EXPERIMENTS = {
    e.name: e
    for e in [
        Experiment("exactness", run_exactness, "exact polygon path integral on flat spaces", "kernelconv, reference"),
        Experiment("wiener", run_wiener, "approximation of Wiener measure by polygon measures", "stochastic, pathspace"),
        Experiment("feynman-kac", run_feynman_kac, "Feynman-Kac / vector-valued heat equation", "stochastic, bundle, reference"),
        Experiment("kernel-converge", run_kernel_converge, "heat kernel and convolution approximation rates", "kernelconv, reference"),
        Experiment("metric-compare", run_metric_compare, "scalar-curvature term of the L2 path metric", "kernelconv"),
        Experiment("boundary", run_boundary, "Dirichlet/Neumann via reflected geodesics", "kernelconv, pathspace, reference"),
        Experiment("asymptotics", run_asymptotics, "short-time heat kernel asymptotics (both branches)", "detzeta, reference"),
        Experiment("determinants", run_determinants, "Hessian determinant = Jacobian; zeta normalization", "detzeta, geom"),
    ]
}


def list_experiments() -> str:
    return "\n".join(f"{e.name:16s} {e.verifies}  [modules: {e.modules}]" for e in EXPERIMENTS.values())


def run(cfg: ExperimentConfig, out_dir: Path, stream=None) -> int:
    stream = stream or sys.stdout
    exp = EXPERIMENTS[cfg.experiment]
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        outcome = exp.runner(cfg)
    write_csv(out_dir / f"{exp.name}.csv", exp.name, outcome.columns, outcome.rows)
    write_csv(
        out_dir / f"{exp.name}-checks.csv",
        exp.name,
        CHECK_COLUMNS,
        [[c.name, c.passed, c.value, c.threshold] for c in outcome.checks],
    )
    for c in outcome.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {fmt(c.value)} (threshold {fmt(c.threshold)})", file=stream)
    ok = all(c.passed for c in outcome.checks)
    print(f"{exp.name}: {'all checks passed' if ok else 'FAILED'} in {time.perf_counter() - t0:.1f} s", file=stream)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="heatpaths", description="Path-integral heat kernel experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list the experiments")
    r = sub.add_parser("run", help="run one experiment")
    r.add_argument("--experiment", choices=list(EXPERIMENTS), help="experiment name (overrides the config)")
    r.add_argument("--config", help="YAML config file")
    r.add_argument("--out", help="output directory (default: config 'output' or ./results)")
    r.add_argument("--seed", type=int, help="RNG seed (overrides the config)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "list":
        print(list_experiments())
        return 0
    try:
        values, source = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    name = args.experiment or values.get("experiment")
    if name is None:
        parser.print_usage(sys.stderr)
        print("error: no experiment given (use --experiment or the config key 'experiment')", file=sys.stderr)
        return 2
    if args.seed is not None:
        if args.seed < 0:
            print("error: --seed must be non-negative", file=sys.stderr)
            return 2
        values["seed"] = args.seed
    out = Path(args.out or values.get("output", "results"))
    try:
        return run(ExperimentConfig(name, values, source), out)
    except ConfigError as exc:
        print(f"config error: {source}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
