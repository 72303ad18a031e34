"""Monte-Carlo driver for rate, deviation, Le Cam and semidiscrete experiments.

Each replication is a pure function of ``(seed, scenario name, n, replication)``
so tables do not depend on the number of worker processes.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigError, ScenarioError
from .gw import GwOptions, estimate_gw
from .measures import (
    DiscreteMeasure,
    SamplerSpec,
    SeedPath,
    chi2_divergence,
    moments,
    population,
    sample,
    two_point,
    tv_distance,
)
from .transport import CostMatrix, solve_ot

SCENARIO_KINDS = ("rate", "deviation", "lecam", "semidiscrete")
TRUE_D_KINDS = ("exact", "self-zero", "reference-run", "population")
RAW_COLUMNS = ("scenario", "n", "m", "replication", "d_hat", "true_d", "delta",
               "s1", "s2", "iterations", "method", "seconds")
SUMMARY_COLUMNS = ("scenario", "n", "mean_delta", "stderr", "q50", "q90", "q99")
FIT_COLUMNS = ("slope", "stderr", "r2", "target_exponent", "intercept", "log_factor", "median_slope")
QUANTILE_LEVELS = (0.5, 0.9, 0.99)


# --------------------------------------------------------------------------
# configuration types


@dataclass(frozen=True)
class MRule:
    kind: str = "equal"
    value: float | None = None

    def __post_init__(self):
        if self.kind not in ("equal", "fixed", "ratio"):
            raise ConfigError(f"unknown m-rule {self.kind!r}; expected equal, fixed or ratio", "m_rule.kind")
        if self.kind == "equal" and self.value is not None:
            raise ConfigError("equal m-rule takes no value", "m_rule.value")
        if self.kind != "equal" and (self.value is None or not self.value > 0):
            raise ConfigError(f"{self.kind} m-rule needs a positive value", "m_rule.value")
        if self.kind == "fixed" and float(self.value) != int(self.value):
            raise ConfigError("fixed m must be an integer", "m_rule.value")

    def m(self, n: int) -> int:
        if self.kind == "equal":
            return n
        if self.kind == "fixed":
            return int(self.value)
        return max(1, int(round(self.value * n)))


@dataclass(frozen=True)
class TrueD:
    """How the population value D(mu, nu) is obtained.

    ``exact``: given ``value``. ``self-zero``: mu and nu have the same law.
    ``reference-run``: mean of ``repetitions`` estimates at sample size
    ``n_ref``. ``population``: closed forms or a radial reduction, see
    :func:`population_d`.
    """

    kind: str = "self-zero"
    value: float | None = None
    n_ref: int | None = None
    repetitions: int = 3

    def __post_init__(self):
        if self.kind not in TRUE_D_KINDS:
            raise ConfigError(f"unknown true-d kind {self.kind!r}; expected one of {', '.join(TRUE_D_KINDS)}",
                              "true_d.kind")
        if self.kind == "exact" and (self.value is None or not math.isfinite(self.value) or self.value < 0):
            raise ConfigError("exact true-d needs a finite nonnegative value", "true_d.value")
        if self.kind != "exact" and self.value is not None:
            raise ConfigError(f"{self.kind} true-d takes no value", "true_d.value")
        if self.n_ref is not None and (self.kind != "reference-run" or self.n_ref < 1):
            raise ConfigError("n_ref is a positive size for reference-run only", "true_d.n_ref")
        if self.repetitions < 1:
            raise ConfigError("must be >= 1", "true_d.repetitions")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    mu: SamplerSpec
    nu: SamplerSpec
    n_grid: tuple[int, ...]
    kind: str = "rate"
    m_rule: MRule = field(default_factory=MRule)
    replications: int = 50
    true_d: TrueD = field(default_factory=TrueD)
    solver: GwOptions = field(default_factory=GwOptions)
    seed: int = 0
    lecam_c: float = 0.1
    target_exponent: float | None = None
    merge_atoms: bool = True

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        self.validate()

    def validate(self) -> None:
        if not self.name or any(c in self.name for c in "/\\@\n"):
            raise ConfigError("must be non-empty without '/', '\\' or '@'", "name")
        if self.kind not in SCENARIO_KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {', '.join(SCENARIO_KINDS)}", "kind")
        grid = self.n_grid
        if len(grid) < 4:
            raise ConfigError(f"n-grid length ≥ 4 required for slope fits, got {len(grid)}", "n_grid")
        if any(n < 1 for n in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("n-grid must be strictly increasing positive integers", "n_grid")
        if self.replications < 8:
            raise ConfigError(f"replications must be >= 8, got {self.replications}", "replications")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", "seed")
        if self.target_exponent is not None and not self.target_exponent < 0:
            raise ConfigError("target exponent must be negative", "target_exponent")
        if self.true_d.kind == "self-zero" and self.mu != self.nu:
            raise ConfigError("self-zero needs identical mu and nu specs", "true_d.kind")
        if self.kind == "lecam":
            if self.mu.family != "two-point" or self.nu.family != "two-point":
                raise ConfigError("Le Cam experiment uses the two-point family for mu and nu", "kind")
            if not 0 <= self.lecam_c <= 0.5 * math.sqrt(self.n_grid[0]) or not math.isfinite(self.lecam_c):
                raise ConfigError("c must satisfy 0 <= c n^(-1/2) < 1/2 on the grid", "lecam_c")
        if self.kind == "semidiscrete":
            if self.nu.family != "finite-support":
                raise ConfigError("semidiscrete scenarios need a finite-support nu", "nu.family")
            w = np.asarray(self.nu.params["weights"], dtype=float)
            if w.min() <= 0:
                raise ConfigError("finite-support weights must be positive (min weight > 0)", "nu.params.weights")
            atoms = np.asarray(self.nu.params["atoms"], dtype=float).reshape(w.size, -1)
            if np.linalg.norm(atoms, axis=1).max() > 1.0 + 1e-12:
                raise ConfigError("atoms must lie in the unit ball", "nu.params.atoms")

    def __eq__(self, other):
        if not isinstance(other, ScenarioConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "kind": self.kind,
            "mu": self.mu.to_dict(),
            "nu": self.nu.to_dict(),
            "n_grid": list(self.n_grid),
            "m_rule": {"kind": self.m_rule.kind, "value": self.m_rule.value},
            "replications": self.replications,
            "true_d": {"kind": self.true_d.kind, "value": self.true_d.value,
                       "n_ref": self.true_d.n_ref, "repetitions": self.true_d.repetitions},
            "solver": dict(self.solver.__dict__),
            "seed": self.seed,
            "lecam_c": self.lecam_c,
            "target_exponent": self.target_exponent,
            "merge_atoms": self.merge_atoms,
        }
        return out


# --------------------------------------------------------------------------
# rates and fits


@dataclass(frozen=True)
class RateTarget:
    exponent: float
    log_factor: bool = False

    def __post_init__(self):
        if not self.exponent < 0:
            raise ValueError("rate exponent must be negative")


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    stderr: float
    r2: float
    ns: tuple[int, ...]
    means: tuple[float, ...]
    mean_stderrs: tuple[float, ...]
    target_exponent: float
    log_factor: bool = False
    median_slope: float = float("nan")


def theoretical_rate(dx: int, dy: int) -> RateTarget:
    """Exponent -2 / max(min(dx, dy), 4), with the log flag exactly at min dimension 4."""
    if dx < 1 or dy < 1:
        raise ValueError("dimensions must be >= 1")
    k = min(dx, dy)
    return RateTarget(-2.0 / max(k, 4), k == 4)


def fit_slope(ns, values, log_factor: bool = False) -> tuple[float, float, float, float]:
    """OLS of log(value) on log(n); returns (slope, intercept, stderr, r2).

    With ``log_factor`` the response is log(value / log n), which removes a
    single log(n) factor before fitting the power.
    """
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(values, dtype=float))
    if log_factor:
        y = y - np.log(x)
    if x.size < 3:
        raise ValueError("need at least three points")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (y - y.mean()) / sxx)
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (intercept + slope * x)
    ssr = float(resid @ resid)
    sst = float(((y - y.mean()) ** 2).sum())
    stderr = math.sqrt(ssr / (x.size - 2) / sxx)
    r2 = 1.0 - ssr / sst if sst > 0 else 1.0
    return slope, intercept, stderr, r2


def scenario_target(cfg: ScenarioConfig) -> RateTarget:
    if cfg.target_exponent is not None:
        return RateTarget(cfg.target_exponent, False)
    if cfg.kind in ("lecam", "semidiscrete"):
        return RateTarget(-0.5)
    for spec in (cfg.mu, cfg.nu):
        if spec.family == "pareto-fourth":
            a = float(spec.params["alpha"])
            return RateTarget(-(a - 1.0) / a)
    return theoretical_rate(cfg.mu.dim, cfg.nu.dim)


# --------------------------------------------------------------------------
# population values


def two_point_d(eps: float) -> float:
    """D between (1/2+eps, 1/2-eps) on {-1, 1} and the symmetric two-point law."""
    return 32.0 * eps * (1.0 - eps)


def pareto_two_point_d(alpha: float) -> float:
    """D between the symmetric pareto-fourth law and uniform{-1, 1}.

    Both laws are centred; with m_k = E|X|^k = 4 alpha / (4 alpha - k),
    D = 2 m4 + 6 m2^2 - 8 m2 + 8 - 8 m1^2 (the optimal coupling matches signs).
    """
    m = {k: 4.0 * alpha / (4.0 * alpha - k) for k in (1, 2, 4)}
    return 2.0 * m[4] + 6.0 * m[2] ** 2 - 8.0 * m[2] + 8.0 - 8.0 * m[1] ** 2


def gaussian_point_mass_d(dim: int, sigma: float = 1.0) -> float:
    """D between N(0, sigma^2 I_d) and a point mass: only the moment term survives."""
    s2 = sigma**2
    m2, m4, fro = dim * s2, (dim**2 + 2 * dim) * s2**2, dim * s2**2
    return 2.0 * m4 + 2.0 * m2**2 + 4.0 * fro


def uniform_ball_d(dx: int, dy: int, rx: float = 1.0, ry: float = 1.0,
                   radial_atoms: int = 1000, grid: int = 60) -> float:
    """D between uniform laws on balls of dimensions dx <= dy by radial reduction.

    Assumes an optimal alignment A = s [I 0] (equal singular values). Rotation
    invariance then couples |x| with (|y_{1:dx}|, |y_{dx+1:}|) and aligns the
    directions, so S2 = inf_s { 8 s^2 / dx + inf_pi E[-4 r^2 rho^2 - 16 s r a / dx] }
    with rho^2 = a^2 + b^2. Both radial laws are discretised (midpoint
    quantiles for r, a sub-sampled grid on the quarter disc for (a, b)).
    """
    if dx > dy:
        dx, dy, rx, ry = dy, dx, ry, rx
    u = (np.arange(radial_atoms) + 0.5) / radial_atoms
    r = rx * u ** (1.0 / dx)
    wr = np.full(radial_atoms, 1.0 / radial_atoms)
    if dy > dx:
        h = 1.0 / grid
        c = (np.arange(grid) + 0.5) * h
        A, B = np.meshgrid(c, c, indexing="ij")
        sub = 8
        off = (np.arange(sub) + 0.5) / sub * h - h / 2
        w = np.zeros((grid, grid))
        ca = np.zeros((grid, grid))
        cb = np.zeros((grid, grid))
        for oa in off:
            for ob in off:
                aa, bb = A + oa, B + ob
                ww = aa ** (dx - 1) * bb ** (dy - dx - 1) * (aa**2 + bb**2 <= 1.0)
                w += ww
                ca += ww * aa
                cb += ww * bb
        mask = w > 0
        a = ry * ca[mask] / w[mask]
        b = ry * cb[mask] / w[mask]
        wab = w[mask] / w[mask].sum()
    else:
        a, b, wab = ry * u ** (1.0 / dy), np.zeros(radial_atoms), wr.copy()
    rho2 = a**2 + b**2
    m2x, m4x = float(wr @ r**2), float(wr @ r**4)
    m2y, m4y = float(wab @ rho2), float(wab @ rho2**2)
    s1 = (2 * (m4x + m4y) + 2 * (m2x**2 + m2y**2)
          + 4 * (m2x**2 / dx + m2y**2 / dy) - 4 * m2x * m2y)
    mu_r = DiscreteMeasure(r[:, None], wr)
    nu_r = DiscreteMeasure(np.column_stack([a, b]), wab)
    base = -4.0 * np.outer(r**2, rho2)
    ra = np.outer(r, a)
    s, prev, value = 0.5 * math.sqrt(m2x * m2y / dx), math.inf, math.inf
    for _ in range(200):
        C = base - (16.0 / dx) * s * ra
        sol = solve_ot(mu_r, nu_r, CostMatrix(C), method="exact")
        value = (8.0 / dx) * s**2 + sol.value
        s = float(np.sum(ra * sol.plan))
        if prev - value < 1e-13:
            break
        prev = value
    return s1 + value


def population_d(mu: SamplerSpec, nu: SamplerSpec) -> float:
    """Population D for the pairs that have a closed form or a radial reduction."""
    fams = (mu.family, nu.family)
    if fams == ("two-point", "two-point"):
        e1, e2 = float(mu.params.get("eps", 0.0)), float(nu.params.get("eps", 0.0))
        if e2 == 0.0 or e1 == 0.0:
            return two_point_d(max(e1, e2))
        return estimate_gw(two_point(e1), two_point(e2)).d_hat
    if set(fams) == {"pareto-fourth", "two-point"}:
        pareto, tp = (mu, nu) if mu.family == "pareto-fourth" else (nu, mu)
        if float(tp.params.get("eps", 0.0)) == 0.0:
            return pareto_two_point_d(float(pareto.params["alpha"]))
    if fams == ("uniform-ball", "uniform-ball"):
        return uniform_ball_d(mu.dim, nu.dim, float(mu.params.get("radius", 1.0)),
                              float(nu.params.get("radius", 1.0)))
    for g, f in ((mu, nu), (nu, mu)):
        if g.family == "gaussian" and "cov" not in g.params and f.family in ("finite-support", "two-point"):
            pop = population(f)
            if pop.merged().size == 1:
                return gaussian_point_mass_d(g.dim, float(g.params.get("sigma", 1.0)))
    if mu.family in ("finite-support", "two-point") and nu.family in ("finite-support", "two-point"):
        return estimate_gw(population(mu), population(nu)).d_hat
    raise ConfigError(f"no population value available for {mu.family} vs {nu.family}", "true_d.kind")


# --------------------------------------------------------------------------
# replications


Estimator = Callable[[DiscreteMeasure, DiscreteMeasure, GwOptions, SeedPath], tuple]


def gw_estimator(mu_hat, nu_hat, options, seed_path):
    r = estimate_gw(mu_hat, nu_hat, options, seed_path)
    return r.d_hat, r.s1, r.s2, r.iterations, r.method


@dataclass(frozen=True)
class ScenarioResult:
    config: ScenarioConfig
    rows: list[dict]
    summary: list[dict]
    fit: RateFit
    reference: list[dict] = field(default_factory=list)
    extra: dict[str, list[dict]] = field(default_factory=dict)


def _specs_for(cfg: ScenarioConfig, n: int) -> tuple[SamplerSpec, SamplerSpec]:
    if cfg.kind == "lecam":
        eps = cfg.lecam_c / math.sqrt(n)
        return SamplerSpec("two-point", 1, {"eps": eps}), SamplerSpec("two-point", 1, {"eps": 0.0})
    return cfg.mu, cfg.nu


def _draw(cfg: ScenarioConfig, n: int, m: int, seed_path: SeedPath):
    mu_spec, nu_spec = _specs_for(cfg, n)
    mu_hat = sample(mu_spec, n, seed_path, 0)
    nu_hat = sample(nu_spec, m, seed_path, 1)
    if cfg.merge_atoms:
        mu_hat, nu_hat = mu_hat.merged(), nu_hat.merged()
    return mu_hat, nu_hat


def _replicate(task) -> dict:
    cfg, n, rep, true_d, estimator, record_timings = task
    m = cfg.m_rule.m(n)
    seed_path = SeedPath(cfg.seed, f"{cfg.name}@{n}", rep)
    try:
        t0 = time.perf_counter()
        mu_hat, nu_hat = _draw(cfg, n, m, seed_path)
        solver_path = SeedPath(cfg.seed, f"{cfg.name}@{n}/solver", rep)
        d_hat, s1, s2, iterations, method = (estimator or gw_estimator)(mu_hat, nu_hat, cfg.solver, solver_path)
        seconds = time.perf_counter() - t0
    except Exception as exc:  # noqa: BLE001 - re-raised with the seed path attached
        raise ScenarioError(f"replication failed: {exc!r}", seed_path) from exc
    return {
        "scenario": cfg.name, "n": n, "m": m, "replication": rep,
        "d_hat": float(d_hat), "true_d": float(true_d), "delta": abs(float(d_hat) - float(true_d)),
        "s1": float(s1), "s2": float(s2), "iterations": int(iterations), "method": method,
        "seconds": seconds if record_timings else "",
    }


def _run_tasks(tasks: list, jobs: int) -> list[dict]:
    if jobs <= 1 or len(tasks) <= 1:
        rows = [_replicate(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_replicate, tasks, chunksize=1))
    return sorted(rows, key=lambda r: (r["n"], r["replication"]))


def reference_run(cfg: ScenarioConfig, jobs: int = 1) -> list[dict]:
    """Large-sample estimates of D used as the population surrogate."""
    n_ref = cfg.true_d.n_ref or max(10 * cfg.n_grid[-1], 100_000)
    ref_cfg = replace(cfg, name=f"{cfg.name}.reference", kind="rate",
                      n_grid=(n_ref, n_ref + 1, n_ref + 2, n_ref + 3), true_d=TrueD("exact", 0.0))
    tasks = [(ref_cfg, n_ref, k, 0.0, None, False) for k in range(cfg.true_d.repetitions)]
    rows = _run_tasks(tasks, jobs)
    return [{"repetition": r["replication"], "n_ref": n_ref, "d_hat": r["d_hat"]} for r in rows]


def resolve_true_d(cfg: ScenarioConfig, jobs: int = 1) -> tuple[dict[int, float], list[dict]]:
    """Population value per n (n-dependent only for the Le Cam experiment)."""
    kind = cfg.true_d.kind
    if cfg.kind == "lecam":
        return {n: two_point_d(cfg.lecam_c / math.sqrt(n)) for n in cfg.n_grid}, []
    reference: list[dict] = []
    if kind == "exact":
        value = float(cfg.true_d.value)
    elif kind == "self-zero":
        value = 0.0
    elif kind == "population":
        value = population_d(cfg.mu, cfg.nu)
    else:
        reference = reference_run(cfg, jobs)
        value = float(np.mean([r["d_hat"] for r in reference]))
    return {n: value for n in cfg.n_grid}, reference


def summarize(rows: list[dict]) -> list[dict]:
    out = []
    for n in sorted({r["n"] for r in rows}):
        d = np.array([r["delta"] for r in rows if r["n"] == n])
        q = np.quantile(d, QUANTILE_LEVELS)
        out.append({
            "scenario": rows[0]["scenario"], "n": n, "mean_delta": float(d.mean()),
            "stderr": float(d.std(ddof=1) / math.sqrt(d.size)) if d.size > 1 else 0.0,
            "q50": float(q[0]), "q90": float(q[1]), "q99": float(q[2]),
        })
    return out


def fit_rows(rows: list[dict], target: RateTarget) -> RateFit:
    summary = summarize(rows)
    ns = [s["n"] for s in summary]
    means = [s["mean_delta"] for s in summary]
    slope, intercept, stderr, r2 = fit_slope(ns, means, target.log_factor)
    medians = [s["q50"] for s in summary]
    median_slope = fit_slope(ns, medians, target.log_factor)[0] if min(medians) > 0 else float("nan")
    return RateFit(slope, intercept, stderr, r2, tuple(ns), tuple(means),
                   tuple(s["stderr"] for s in summary), target.exponent, target.log_factor, median_slope)


def _degenerate_fit(rows: list[dict], target: RateTarget) -> RateFit:
    summary = summarize(rows)
    nan = float("nan")
    return RateFit(nan, nan, nan, nan, tuple(s["n"] for s in summary),
                   tuple(s["mean_delta"] for s in summary), tuple(s["stderr"] for s in summary),
                   target.exponent, target.log_factor)


def run_scenario(cfg: ScenarioConfig, jobs: int = 1, record_timings: bool = False,
                 estimator: Estimator | None = None) -> ScenarioResult:
    """Run every (n, replication) pair of ``cfg`` and fit the rate."""
    true_d, reference = resolve_true_d(cfg, jobs)
    tasks = [(cfg, n, rep, true_d[n], estimator, record_timings)
             for n in cfg.n_grid for rep in range(cfg.replications)]
    rows = _run_tasks(tasks, jobs)
    target = scenario_target(cfg)
    if min(r["mean_delta"] for r in summarize(rows)) > 0:
        fit = fit_rows(rows, target)
    else:
        fit = _degenerate_fit(rows, target)
    extra = {}
    if cfg.kind == "deviation":
        extra["deviation"] = [_deviation_row(s) for s in summarize(rows)]
    if cfg.kind == "lecam":
        extra["lecam"] = lecam_table(cfg, rows)
    return ScenarioResult(cfg, rows, summarize(rows), fit, reference, extra)


def run_rate_scenario(cfg: ScenarioConfig, jobs: int = 1, **kw) -> ScenarioResult:
    return run_scenario(replace(cfg, kind="rate") if cfg.kind != "rate" else cfg, jobs, **kw)


# --------------------------------------------------------------------------
# deviation


@dataclass(frozen=True)
class DeviationSummary:
    ns: tuple[int, ...]
    quantiles: tuple[tuple[float, float, float], ...]
    spread_90: tuple[float, ...]
    spread_99: tuple[float, ...]

    @property
    def spread_ratio(self) -> float:
        """max / min over the grid of sqrt(n) (q0.9 - q0.5)."""
        s = np.asarray(self.spread_90)
        return float(s.max() / s.min()) if s.min() > 0 else (1.0 if s.max() == 0 else math.inf)


def _deviation_row(s: dict) -> dict:
    rn = math.sqrt(s["n"])
    return {"scenario": s["scenario"], "n": s["n"], "q50": s["q50"], "q90": s["q90"], "q99": s["q99"],
            "spread_90": rn * (s["q90"] - s["q50"]), "spread_99": rn * (s["q99"] - s["q50"])}


def deviation_summary(result: ScenarioResult) -> DeviationSummary:
    rows = [_deviation_row(s) for s in result.summary]
    return DeviationSummary(tuple(r["n"] for r in rows),
                            tuple((r["q50"], r["q90"], r["q99"]) for r in rows),
                            tuple(r["spread_90"] for r in rows), tuple(r["spread_99"] for r in rows))


def run_deviation_scenario(cfg: ScenarioConfig, jobs: int = 1, **kw) -> tuple[DeviationSummary, ScenarioResult]:
    result = run_scenario(replace(cfg, kind="deviation"), jobs, **kw)
    return deviation_summary(result), result


# --------------------------------------------------------------------------
# Le Cam two-point


def lecam_eps(c: float, n: int) -> float:
    return c / math.sqrt(n)


def lecam_table(cfg: ScenarioConfig, rows: list[dict]) -> list[dict]:
    out = []
    for s in summarize(rows):
        n = s["n"]
        eps = lecam_eps(cfg.lecam_c, n)
        mu0, mu1 = two_point(0.0), two_point(eps)
        out.append({
            "n": n, "eps": eps, "true_d": two_point_d(eps), "risk": s["mean_delta"],
            "risk_sqrt_n": s["mean_delta"] * math.sqrt(n),
            "chi2": chi2_divergence(mu1, mu0), "tv": tv_distance(mu0, mu1),
        })
    return out


def run_lecam_two_point(cfg: ScenarioConfig, jobs: int = 1, **kw) -> tuple[list[dict], ScenarioResult]:
    result = run_scenario(replace(cfg, kind="lecam"), jobs, **kw)
    return result.extra["lecam"], result


def run_semidiscrete_scenario(cfg: ScenarioConfig, jobs: int = 1, **kw) -> ScenarioResult:
    return run_scenario(replace(cfg, kind="semidiscrete"), jobs, **kw)


# --------------------------------------------------------------------------
# output


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return "" if v is None else str(v)


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([format_value(r.get(c)) for c in columns])


def write_result(result: ScenarioResult, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    name = result.config.name
    paths = []
    p = out_dir / f"{name}_raw.csv"
    write_csv(p, RAW_COLUMNS, result.rows)
    paths.append(p)
    p = out_dir / f"{name}_summary.csv"
    write_csv(p, SUMMARY_COLUMNS, result.summary)
    paths.append(p)
    f = result.fit
    p = out_dir / f"{name}_fit.csv"
    write_csv(p, FIT_COLUMNS, [{"slope": f.slope, "stderr": f.stderr, "r2": f.r2,
                                "target_exponent": f.target_exponent, "intercept": f.intercept,
                                "log_factor": f.log_factor, "median_slope": f.median_slope}])
    paths.append(p)
    if result.reference:
        p = out_dir / f"{name}_reference.csv"
        write_csv(p, ("repetition", "n_ref", "d_hat"), result.reference)
        paths.append(p)
    for key, rows in result.extra.items():
        if rows:
            p = out_dir / f"{name}_{key}.csv"
            write_csv(p, tuple(rows[0]), rows)
            paths.append(p)
    return paths


def moments_row(m: DiscreteMeasure) -> dict:
    s = moments(m)
    return {"m2": s.m2, "m4": s.m4, "lambda_min": s.lambda_min}
